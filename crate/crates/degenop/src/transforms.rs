//! The three changes of variables: the power substitution `T_beta`, the
//! phase `S`, the shear, plus linear changes of `x`. Each acts on fields and
//! is recorded symbolically in a [`TransformChain`].

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bessel1d::{assemble, FormSpec, Potential, Transport, TransportKind};
use crate::error::{invalid, Error, Result};
use crate::grid::{sobolev_report, Field, Grid, SobolevNormReport};
use crate::jet::Profile;
use crate::multiplier::ModeOperators;
use crate::params::{inverse_beta, OperatorSpec, SpaceSpec};

type C = Complex64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransformStep {
    /// `u(x - (b/c) y, y)`.
    Shear { b: Vec<f64>, c: f64 },
    /// `u(S^T x)`, with `matrix` the row-major `S^T`.
    LinearX { matrix: Vec<f64> },
    /// `|beta + 1|^{1/p} u(x, y^{beta+1})`.
    Power { beta: f64, p: f64 },
    /// `e^{-i a.xi y^{2/(2-alpha)}} u`.
    Phase { a_dot_xi: f64, alpha: f64 },
}

impl TransformStep {
    pub fn inverse(&self) -> Result<Self> {
        Ok(match self {
            TransformStep::Shear { b, c } => TransformStep::Shear { b: b.iter().map(|v| -v).collect(), c: *c },
            TransformStep::LinearX { matrix } => {
                let n = (matrix.len() as f64).sqrt().round() as usize;
                let m = nalgebra::DMatrix::from_row_slice(n, n, matrix);
                let inv = m.try_inverse().ok_or_else(|| invalid("matrix", "singular linear change"))?;
                TransformStep::LinearX { matrix: inv.transpose().iter().copied().collect() }
            }
            TransformStep::Power { beta, p } => {
                if *beta == -1.0 {
                    return Err(Error::BetaMinusOne);
                }
                TransformStep::Power { beta: inverse_beta(*beta), p: *p }
            }
            TransformStep::Phase { a_dot_xi, alpha } => TransformStep::Phase { a_dot_xi: -a_dot_xi, alpha: *alpha },
        })
    }
}

/// `L = operator_scale * Phi L_model Phi^{-1}` with `Phi` the composition of
/// `steps`, first step applied last to the model-side field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformChain {
    pub steps: Vec<TransformStep>,
    pub operator_scale: f64,
    pub source: SpaceSpec,
    pub target: SpaceSpec,
}

impl TransformChain {
    pub fn inverse(&self) -> Result<Self> {
        Ok(Self {
            steps: self.steps.iter().rev().map(|s| s.inverse()).collect::<Result<_>>()?,
            operator_scale: 1.0 / self.operator_scale,
            source: self.target,
            target: self.source,
        })
    }

    /// Apply every step in order.
    pub fn apply(&self, u: &Field) -> Result<Field> {
        let mut v = u.clone();
        for s in &self.steps {
            v = apply_step(s, &v)?;
        }
        Ok(v)
    }
}

pub fn apply_step(step: &TransformStep, u: &Field) -> Result<Field> {
    match step {
        TransformStep::Shear { b, c } => apply_shear(u, b, *c),
        TransformStep::LinearX { matrix } => apply_linear_x(u, matrix),
        TransformStep::Power { beta, p } => apply_power(u, *beta, *p),
        TransformStep::Phase { a_dot_xi, alpha } => apply_phase(u, *a_dot_xi, *alpha),
    }
}

/// The source grid of `T_beta` onto `target`: nodes and edges `y^{beta+1}`.
pub fn power_source_grid(target: &Grid, beta: f64) -> Result<Grid> {
    if beta == -1.0 {
        return Err(Error::BetaMinusOne);
    }
    target.power_image(beta + 1.0)
}

/// `T_beta u` on the regenerated target grid whose nodes are `s^{1/(beta+1)}`
/// for the source nodes `s`. Substitution is exact at the nodes.
pub fn apply_power(u: &Field, beta: f64, p: f64) -> Result<Field> {
    if beta == -1.0 {
        return Err(Error::BetaMinusOne);
    }
    let k = beta + 1.0;
    let target = Arc::new(u.grid.power_image(1.0 / k)?);
    let s = k.abs().powf(1.0 / p);
    Field::new(target, u.values.iter().map(|v| v * s).collect())
}

/// `T_beta u` onto a given target, which must be the matched partner of `u`'s grid.
pub fn apply_power_onto(u: &Field, beta: f64, p: f64, target: Arc<Grid>) -> Result<Field> {
    let expect = power_source_grid(&target, beta)?;
    let close = |a: &[f64], b: &[f64]| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-12 * y.abs().max(1e-300));
    if !close(&expect.y_nodes, &u.grid.y_nodes) || u.grid.x_box != target.x_box {
        return Err(Error::Grid("unmatched grid pair for the power map".into()));
    }
    let s = (beta + 1.0).abs().powf(1.0 / p);
    Field::new(target, u.values.iter().map(|v| v * s).collect())
}

/// Multiply by `e^{-i a.xi y^{2/(2-alpha)}}` on every x slice.
pub fn apply_phase(u: &Field, a_dot_xi: f64, alpha: f64) -> Result<Field> {
    if !(alpha < 2.0) {
        return Err(invalid("alpha", "phase needs alpha < 2"));
    }
    let e = 2.0 / (2.0 - alpha);
    let j = u.j();
    let ph: Vec<C> = u.grid.y_nodes.iter().map(|y| C::from_polar(1.0, -a_dot_xi * y.powf(e))).collect();
    let values = u.values.iter().enumerate().map(|(i, v)| v * ph[i % j]).collect();
    Field::new(u.grid.clone(), values)
}

/// `u(x - (b/c) y, y)` by an exact phase shift of every Fourier mode.
pub fn apply_shear(u: &Field, b: &[f64], c: f64) -> Result<Field> {
    if c == 0.0 {
        return Err(Error::ShearNeedsC);
    }
    if b.iter().all(|v| *v == 0.0) {
        return Ok(u.clone());
    }
    if u.grid.x_box.is_none() || b.len() != u.grid.dim() {
        return Err(invalid("b", "shear needs a periodic x box of matching dimension"));
    }
    let j = u.j();
    let y = u.grid.y_nodes.clone();
    let g = u.grid.clone();
    let mut m = u.to_modes();
    for (mi, chunk) in m.values.chunks_mut(j).enumerate() {
        let xi = g.mode(mi);
        let bx: f64 = b.iter().zip(&xi).map(|(b, x)| b * x).sum();
        for (i, v) in chunk.iter_mut().enumerate() {
            *v *= C::from_polar(1.0, -bx * y[i] / c);
        }
    }
    Ok(m.from_modes())
}

/// `u(S^T x)` for `S^T = s I`: the same samples on a box of length `L / s`.
/// General matrices do not map the periodic box to itself and are rejected.
pub fn apply_linear_x(u: &Field, matrix: &[f64]) -> Result<Field> {
    let Some(b) = u.grid.x_box else {
        return Err(invalid("matrix", "linear change needs an x box"));
    };
    let n = b.dim;
    if matrix.len() != n * n {
        return Err(invalid("matrix", format!("expected {n}x{n}")));
    }
    let s = matrix[0];
    let iso = (0..n).all(|i| (0..n).all(|k| matrix[i * n + k] == if i == k { s } else { 0.0 }));
    if !iso || !(s > 0.0) {
        return Err(invalid("matrix", "only positive multiples of the identity act on the periodic box"));
    }
    let mut nb = b;
    nb.length = b.length / s;
    let grid = Arc::new(u.grid.with_x_box(Some(nb)));
    Field::new(grid, u.values.clone())
}

/// The form of `y^alpha L_{2a.xi} - |xi|^2 y^alpha` after `T`, before `S`:
/// `int u' v' y^c~ - i b (beta+1) int y^beta u' v y^c~ + |xi|^2 (beta+1)^2 int y^{2beta} u v y^c~`.
pub fn stretched_model_form(c_t: f64, beta: f64, a_dot_xi: f64, xi_sq: f64) -> FormSpec {
    let k = beta + 1.0;
    let mut f = FormSpec::auxiliary_for(c_t, beta, a_dot_xi, xi_sq);
    f.transport = (a_dot_xi != 0.0).then_some(Transport {
        coeff: C::new(0.0, -2.0 * a_dot_xi * k),
        exponent: c_t + beta,
        kind: TransportKind::Directional,
    });
    f.potentials = if xi_sq != 0.0 {
        vec![Potential { coeff: C::new(xi_sq * k * k, 0.0), exponent: c_t + 2.0 * beta }]
    } else {
        vec![]
    };
    f
}

/// Max over pairs of `|a~(u, v) - a~_b~(S^{-1}u, S^{-1}v)| / (|a~(u,u)| |a~(v,v)|)^{1/2}`.
pub fn phase_form_check(c_t: f64, beta: f64, a_dot_xi: f64, xi_sq: f64, grid: Arc<Grid>, panel: &[Profile]) -> Result<f64> {
    let lhs = assemble(&stretched_model_form(c_t, beta, a_dot_xi, xi_sq), grid.clone())?;
    let rhs = assemble(&FormSpec::auxiliary_for(c_t, beta, a_dot_xi, xi_sq), grid.clone())?;
    let alpha = 2.0 * beta / (beta + 1.0);
    let fields: Vec<Field> = panel
        .iter()
        .map(|p| Field::from_fn(grid.clone(), |_, y| C::new(p.value(y), 0.0)))
        .collect();
    let inv: Vec<Field> = fields.iter().map(|f| apply_phase(f, -a_dot_xi, alpha)).collect::<Result<_>>()?;
    let mut worst: f64 = 0.0;
    for i in 0..fields.len() {
        for k in 0..fields.len() {
            let a = lhs.form_value(&fields[i].values, &fields[k].values);
            let b = rhs.form_value(&inv[i].values, &inv[k].values);
            let s = (lhs.form_value(&fields[i].values, &fields[i].values).norm()
                * lhs.form_value(&fields[k].values, &fields[k].values).norm())
            .sqrt();
            worst = worst.max((a - b).norm() / s.max(f64::MIN_POSITIVE));
        }
    }
    Ok(worst)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub j: usize,
    pub beta: f64,
    /// Max over the panel of `||lhs - rhs|| / ||rhs||` in `L^2` of the image operator.
    pub discrepancy: f64,
    /// Least-squares ratio of the Bessel parts; should approach `(beta + 1)^2`.
    pub bessel_coefficient: f64,
    pub expected_coefficient: f64,
}

/// Test fields on the source grid: `prod_i exp(s cos(2 pi x_i / L)) P(y)`.
pub fn tensor_panel(grid: Arc<Grid>, profiles: &[Profile]) -> Vec<Field> {
    let l = grid.x_box.map_or(1.0, |b| b.length);
    profiles
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let s = 0.5 + 0.25 * (k % 3) as f64;
            Field::from_fn(grid.clone(), |x, y| {
                let phi: f64 = x.iter().map(|x| (s * (2.0 * std::f64::consts::PI * x / l + k as f64).cos()).exp()).product();
                C::new(phi * p.value(y), 0.0)
            })
        })
        .collect()
}

/// Apply `T_beta^{-1} L T_beta` and the image operator to the same panel on
/// the matched pair (`grid` is the target, its power image the source).
pub fn similarity_check_power(spec: &OperatorSpec, beta: f64, grid: Arc<Grid>, profiles: &[Profile]) -> Result<SimilarityReport> {
    let k = beta + 1.0;
    let image = spec.power_image(beta)?;
    let src = Arc::new(power_source_grid(&grid, beta)?);
    let lhs_ops = ModeOperators::general(spec, grid.clone())?;
    let rhs_ops = ModeOperators::general(&image, src.clone())?;
    let mu = rhs_ops.ops[0].form.measure;
    let mut worst: f64 = 0.0;
    for u in tensor_panel(src.clone(), profiles) {
        // T u lives on the target grid with the same node values (the
        // |k|^{1/p} factor cancels against T^{-1}).
        let tu = Field::new(grid.clone(), u.values.clone())?;
        let lhs = lhs_ops.apply(&tu)?;
        let rhs = rhs_ops.apply(&u)?;
        let diff = Field::new(src.clone(), lhs.values.iter().zip(&rhs.values).map(|(a, b)| a - b).collect())?;
        worst = worst.max(diff.mass_norm(mu) / rhs.mass_norm(mu).max(f64::MIN_POSITIVE));
    }
    // Bessel parts alone, 1-d: y^{a2} B against y^{a2~} B~.
    let zero = vec![0.0; spec.dimension];
    let y_grid = Arc::new(grid.with_x_box(None));
    let y_src = Arc::new(src.with_x_box(None));
    let lb = assemble(&FormSpec::general_mode(spec, &zero), y_grid)?;
    let rb = assemble(&FormSpec::general_mode(&image, &zero), y_src)?;
    let (mut num, mut den) = (0.0, 0.0);
    for p in profiles {
        let u: Vec<C> = y_src_values(&rb.grid.y_nodes, p);
        let l: Vec<C> = lb.apply(&u).iter().map(|v| v / spec.gamma).collect();
        let r: Vec<C> = rb.apply(&u).iter().map(|v| v / image.gamma).collect();
        num += rb.inner(&l, &r).re;
        den += rb.inner(&r, &r).re;
    }
    Ok(SimilarityReport {
        j: grid.j(),
        beta,
        discrepancy: worst,
        bessel_coefficient: num / den,
        expected_coefficient: k * k,
    })
}

fn y_src_values(y: &[f64], p: &Profile) -> Vec<C> {
    y.iter().map(|&s| C::new(p.value(s), 0.0)).collect()
}

/// `T^{-1} L T u` against `L~ u`, where `T` is the shear and `L~` the
/// sheared coefficients, on a panel of Neumann-class fields.
pub fn shear_conjugation_check(spec: &OperatorSpec, grid: Arc<Grid>, profiles: &[Profile]) -> Result<f64> {
    let sheared = crate::params::shear_map(spec)?;
    let lhs_ops = ModeOperators::general(spec, grid.clone())?;
    let rhs_ops = ModeOperators::general(&sheared, grid.clone())?;
    let mu = rhs_ops.ops[0].form.measure;
    let (b, c) = (&spec.drift_b, spec.drift_c);
    let neg: Vec<f64> = b.iter().map(|v| -v).collect();
    let mut worst: f64 = 0.0;
    for u in tensor_panel(grid.clone(), profiles) {
        let lhs = apply_shear(&lhs_ops.apply(&apply_shear(&u, b, c)?)?, &neg, c)?;
        let rhs = rhs_ops.apply(&u)?;
        worst = worst.max(lhs.sub(&rhs).mass_norm(mu) / rhs.mass_norm(mu).max(f64::MIN_POSITIVE));
    }
    Ok(worst)
}

/// Sobolev reports of `T_beta u` in `(alpha1, alpha2, m)` and of `u` in the
/// image parameters, for `u` on the source grid.
pub fn power_sobolev_pair(
    u: &Field,
    spec: &OperatorSpec,
    space: &SpaceSpec,
    beta: f64,
) -> Result<(SobolevNormReport, SobolevNormReport)> {
    let tu = apply_power(u, beta, space.p)?;
    let img = crate::params::beta_map(beta, spec.alpha1, spec.alpha2, spec.c_bessel(), space.m)?;
    let src_spec = OperatorSpec { alpha1: img.alpha1, alpha2: img.alpha2, ..spec.clone() };
    let src_space = SpaceSpec { p: space.p, m: img.m };
    Ok((sobolev_report(&tu, spec, space)?, sobolev_report(u, &src_spec, &src_space)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{lp_norm, make_grid, XBox};

    #[test]
    fn power_and_inverse_are_exact_on_nodes() {
        let g = Arc::new(make_grid(32, 2.0, 1.5, None).unwrap());
        let u = Field::from_fn(g.clone(), |_, y| C::new((-y * y).exp(), y));
        let v = apply_power(&u, 0.7, 3.0).unwrap();
        let w = apply_power(&v, inverse_beta(0.7), 3.0).unwrap();
        assert!(w.sub(&u).max_abs() < 1e-15);
        let back = Field::new(g, w.values.clone()).unwrap();
        assert_eq!(back.grid.y_nodes.len(), 32);
    }

    #[test]
    fn unmatched_pairs_are_rejected() {
        let g = Arc::new(make_grid(32, 2.0, 1.0, None).unwrap());
        let u = Field::zeros(g.clone());
        assert!(apply_power_onto(&u, 0.5, 2.0, g).is_err());
    }

    #[test]
    fn shear_round_trip_and_norm() {
        let b = XBox { length: 5.0, nx: 16, dim: 1 };
        let g = Arc::new(make_grid(16, 1.0, 1.0, Some(b)).unwrap());
        let u = Field::from_fn(g, |x, y| C::new((0.8 * (2.0 * std::f64::consts::PI * x[0] / 5.0).sin()).exp() * (1.0 - y), 0.0));
        let s = apply_shear(&u, &[0.7], 2.0).unwrap();
        let back = apply_shear(&s, &[-0.7], 2.0).unwrap();
        assert!(back.sub(&u).max_abs() < 1e-13);
        assert!((lp_norm(&s, 2.0, 0.5) - lp_norm(&u, 2.0, 0.5)).abs() < 1e-6);
    }

    #[test]
    fn chain_inverse_undoes_the_chain() {
        let b = XBox { length: 4.0, nx: 8, dim: 1 };
        let g = Arc::new(make_grid(16, 1.0, 1.0, Some(b)).unwrap());
        let u = Field::from_fn(g, |x, y| C::new(x[0].cos() + y, 0.0));
        let chain = TransformChain {
            steps: vec![
                TransformStep::Shear { b: vec![0.5], c: 1.5 },
                TransformStep::Power { beta: 0.5, p: 2.0 },
                TransformStep::LinearX { matrix: vec![1.5] },
                TransformStep::Phase { a_dot_xi: 0.3, alpha: 0.5 },
            ],
            operator_scale: 2.0,
            source: SpaceSpec { p: 2.0, m: 0.0 },
            target: SpaceSpec { p: 2.0, m: 0.0 },
        };
        let v = chain.inverse().unwrap().apply(&chain.apply(&u).unwrap()).unwrap();
        assert!(v.sub(&u).max_abs() < 1e-12);
        assert_eq!(v.grid.x_box, u.grid.x_box);
    }
}
