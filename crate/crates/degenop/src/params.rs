//! Operator and space parameters, the admissibility window, and the exact
//! parameter calculus of the power, shear and linear reductions.
//!
//! The operator is
//! `L = y^a1 Tr(Q D_x^2) + 2 y^((a1+a2)/2) q.grad_x D_y + gamma y^a2 D_yy + y^(a2-1) (b.grad_x + c D_y)`
//! on the half-space `y > 0`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::transforms::{TransformChain, TransformStep};

/// Full coefficient set of the operator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpec {
    pub dimension: usize,
    /// Row-major `N x N`, symmetric.
    pub q_matrix: Vec<f64>,
    pub q_vector: Vec<f64>,
    pub gamma: f64,
    pub drift_b: Vec<f64>,
    pub drift_c: f64,
    pub alpha1: f64,
    pub alpha2: f64,
}

/// Exponent and weight of `L^p_m = L^p(y^m dx dy)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceSpec {
    pub p: f64,
    pub m: f64,
}

/// Parameters of the model operator `y^alpha (Lap_x + 2 a.grad_x D_y + D_yy + (c/y) D_y)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub a: Vec<f64>,
    pub alpha: f64,
    pub c_bessel: f64,
    pub m: f64,
    pub p: f64,
}

/// Outcome of the strict chain `alpha1^- < (m+1)/p < c/gamma + 1 - alpha2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowReport {
    pub pass: bool,
    pub lower: f64,
    pub value: f64,
    pub upper: f64,
    /// `value - lower`; positive inside.
    pub margin_lower: f64,
    /// `upper - value`; positive inside.
    pub margin_upper: f64,
}

/// Parameters after conjugation by the power map.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaImage {
    pub alpha1: f64,
    pub alpha2: f64,
    pub c: f64,
    pub m: f64,
}

impl SpaceSpec {
    pub fn new(p: f64, m: f64) -> Result<Self> {
        if !(p > 1.0 && p.is_finite()) {
            return Err(invalid("p", format!("must lie in (1, inf), got {p}")));
        }
        if !m.is_finite() {
            return Err(invalid("m", "must be finite"));
        }
        Ok(Self { p, m })
    }
}

impl OperatorSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        dimension: usize,
        q_matrix: Vec<f64>,
        q_vector: Vec<f64>,
        gamma: f64,
        drift_b: Vec<f64>,
        drift_c: f64,
        alpha1: f64,
        alpha2: f64,
    ) -> Result<Self> {
        let spec = Self {
            dimension,
            q_matrix,
            q_vector,
            gamma,
            drift_b,
            drift_c,
            alpha1,
            alpha2,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// The model operator: `Q = I`, `q = a`, `gamma = 1`, `b = 0`, `alpha1 = alpha2 = alpha`.
    pub fn model(a: &[f64], alpha: f64, c: f64) -> Result<Self> {
        let n = a.len();
        let mut q = vec![0.0; n * n];
        for i in 0..n {
            q[i * n + i] = 1.0;
        }
        Self::new(n, q, a.to_vec(), 1.0, vec![0.0; n], c, alpha, alpha)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dimension;
        if self.q_matrix.len() != n * n {
            return Err(invalid("q_matrix", format!("expected {} entries", n * n)));
        }
        if self.q_vector.len() != n {
            return Err(invalid("q_vector", format!("expected {n} entries")));
        }
        if self.drift_b.len() != n {
            return Err(invalid("drift_b", format!("expected {n} entries")));
        }
        let all = self
            .q_matrix
            .iter()
            .chain(&self.q_vector)
            .chain(&self.drift_b)
            .chain([&self.gamma, &self.drift_c, &self.alpha1, &self.alpha2]);
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(invalid("coefficients", "all entries must be finite"));
        }
        let scale = self.q_matrix.iter().fold(1.0f64, |s, v| s.max(v.abs()));
        for i in 0..n {
            for j in 0..i {
                let (u, l) = (self.q_matrix[i * n + j], self.q_matrix[j * n + i]);
                if (u - l).abs() > 1e-12 * scale {
                    return Err(invalid("q_matrix", "must be symmetric"));
                }
            }
        }
        if !(self.gamma > 0.0) {
            return Err(invalid("gamma", "must be positive"));
        }
        if !(self.alpha2 < 2.0) {
            return Err(invalid("alpha2", "must be < 2"));
        }
        if !(self.alpha2 - self.alpha1 < 2.0) {
            return Err(invalid("alpha1", "need alpha2 - alpha1 < 2"));
        }
        if self.drift_c == 0.0 && self.drift_b.iter().any(|&b| b != 0.0) {
            return Err(invalid("drift_b", "must vanish when drift_c = 0"));
        }
        let min_eig = self.min_block_eigenvalue();
        if !(min_eig > 0.0) {
            return Err(Error::NotElliptic { min_eig });
        }
        Ok(())
    }

    pub fn q(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dimension, self.dimension, &self.q_matrix)
    }

    /// `[[Q, q^T], [q, gamma]]`.
    pub fn block_matrix(&self) -> DMatrix<f64> {
        block_matrix(&self.q(), &self.q_vector, self.gamma)
    }

    pub fn min_block_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.block_matrix())
    }

    /// The effective Bessel constant `c / gamma`.
    pub fn c_bessel(&self) -> f64 {
        self.drift_c / self.gamma
    }

    pub fn has_oblique_drift(&self) -> bool {
        self.drift_b.iter().any(|&b| b != 0.0)
    }

    /// Coefficients of `T_beta^{-1} L T_beta`. Only defined without
    /// tangential drift, since `y^(a2-1) b.grad_x` does not transform into
    /// the same family.
    pub fn power_image(&self, beta: f64) -> Result<Self> {
        if beta == -1.0 {
            return Err(Error::BetaMinusOne);
        }
        if self.has_oblique_drift() {
            return Err(invalid("drift_b", "power map needs b = 0; shear first"));
        }
        let k = beta + 1.0;
        let img = beta_map(beta, self.alpha1, self.alpha2, self.c_bessel(), 0.0)?;
        let gamma = k * k * self.gamma;
        Ok(Self {
            dimension: self.dimension,
            q_matrix: self.q_matrix.clone(),
            q_vector: self.q_vector.iter().map(|v| k * v).collect(),
            gamma,
            drift_b: self.drift_b.clone(),
            drift_c: gamma * img.c,
            alpha1: img.alpha1,
            alpha2: img.alpha2,
        })
    }
}

impl ModelParams {
    pub fn new(a: Vec<f64>, alpha: f64, c_bessel: f64, m: f64, p: f64) -> Result<Self> {
        let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm < 1.0) {
            return Err(invalid("a", format!("need |a| < 1, got {norm}")));
        }
        if !(alpha < 2.0) {
            return Err(invalid("alpha", "must be < 2"));
        }
        if !(p > 1.0) {
            return Err(invalid("p", "must exceed 1"));
        }
        Ok(Self {
            a,
            alpha,
            c_bessel,
            m,
            p,
        })
    }

    pub fn a_norm(&self) -> f64 {
        self.a.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dimension(&self) -> usize {
        self.a.len()
    }

    pub fn window(&self) -> WindowReport {
        window(self.alpha, self.alpha, self.c_bessel, self.p, self.m)
    }

    /// Half-angle of the sector containing the numerical range, `arcsin |a|`.
    pub fn sector_defect(&self) -> f64 {
        self.a_norm().asin()
    }

    /// Angle of the analytic semigroup, `pi/2 - arctan(|a| / sqrt(1 - |a|^2))`.
    pub fn semigroup_angle(&self) -> f64 {
        std::f64::consts::FRAC_PI_2 - self.sector_defect()
    }

    pub fn space(&self) -> SpaceSpec {
        SpaceSpec {
            p: self.p,
            m: self.m,
        }
    }
}

/// The window chain from raw numbers; `c_over_gamma` is the Bessel constant.
pub fn window(alpha1: f64, alpha2: f64, c_over_gamma: f64, p: f64, m: f64) -> WindowReport {
    let lower = (-alpha1).max(0.0);
    let value = (m + 1.0) / p;
    let upper = c_over_gamma + 1.0 - alpha2;
    WindowReport {
        pass: lower < value && value < upper,
        lower,
        value,
        upper,
        margin_lower: value - lower,
        margin_upper: upper - value,
    }
}

pub fn validate_window(spec: &OperatorSpec, space: &SpaceSpec) -> WindowReport {
    window(spec.alpha1, spec.alpha2, spec.c_bessel(), space.p, space.m)
}

/// Parameters after `u -> |beta+1|^(1/p) u(x, y^(beta+1))`.
pub fn beta_map(beta: f64, alpha1: f64, alpha2: f64, c: f64, m: f64) -> Result<BetaImage> {
    if beta == -1.0 {
        return Err(Error::BetaMinusOne);
    }
    let k = beta + 1.0;
    Ok(BetaImage {
        alpha1: alpha1 / k,
        alpha2: (alpha2 + 2.0 * beta) / k,
        c: (c + beta) / k,
        m: (m - beta) / k,
    })
}

/// Exponent of `T_b1 T_b2`.
pub fn compose_beta(b1: f64, b2: f64) -> f64 {
    (b1 + 1.0) * (b2 + 1.0) - 1.0
}

/// Exponent of `T_beta^{-1}`.
pub fn inverse_beta(beta: f64) -> f64 {
    -beta / (beta + 1.0)
}

/// Coefficients after the shear `u(x - (b/c) y, y)`, which removes the
/// tangential drift.
pub fn shear_map(spec: &OperatorSpec) -> Result<OperatorSpec> {
    if !spec.has_oblique_drift() {
        return Ok(spec.clone());
    }
    if spec.drift_c == 0.0 {
        return Err(Error::ShearNeedsC);
    }
    if spec.alpha1 != spec.alpha2 {
        return Err(Error::ShearPowerMismatch(spec.alpha1, spec.alpha2));
    }
    let n = spec.dimension;
    let (b, q, c, g) = (&spec.drift_b, &spec.q_vector, spec.drift_c, spec.gamma);
    let mut qm = spec.q_matrix.clone();
    for i in 0..n {
        for j in 0..n {
            qm[i * n + j] += -(b[i] * q[j] + q[i] * b[j]) / c + g * b[i] * b[j] / (c * c);
        }
    }
    let out = OperatorSpec {
        dimension: n,
        q_matrix: qm,
        q_vector: (0..n).map(|i| q[i] - g * b[i] / c).collect(),
        gamma: g,
        drift_b: vec![0.0; n],
        drift_c: c,
        alpha1: spec.alpha1,
        alpha2: spec.alpha2,
    };
    let min_eig = out.min_block_eigenvalue();
    if !(min_eig > 0.0) {
        return Err(Error::Internal(format!(
            "shear lost ellipticity (min eigenvalue {min_eig:e})"
        )));
    }
    Ok(out)
}

/// Symmetric eigendecomposition with ascending eigenvalues and each
/// eigenvector's first nonzero component made positive.
pub fn sorted_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let mut vecs = DMatrix::zeros(n, n);
    let mut vals = Vec::with_capacity(n);
    for (col, &i) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(i).into_owned();
        if let Some(first) = v.iter().find(|x| x.abs() > 1e-14) {
            if *first < 0.0 {
                v = -v;
            }
        }
        vecs.set_column(col, &v);
        vals.push(eig.eigenvalues[i]);
    }
    (vals, vecs)
}

/// Reduce a general operator to the model form. Returns the model
/// parameters and the chain `Phi` with `L = scale * Phi L_model Phi^{-1}`.
pub fn reduce_to_model(spec: &OperatorSpec, space: &SpaceSpec) -> Result<(ModelParams, TransformChain)> {
    spec.validate()?;
    let w = validate_window(spec, space);
    if !w.pass {
        return Err(Error::Window(format!(
            "need {} < (m+1)/p = {} < {}",
            w.lower, w.value, w.upper
        )));
    }
    reduce_unchecked(spec, space)
}

/// [`reduce_to_model`] without the window check. The algebra does not need
/// the window; outside it the model is only useful as a negative control.
pub fn reduce_unchecked(spec: &OperatorSpec, space: &SpaceSpec) -> Result<(ModelParams, TransformChain)> {
    spec.validate()?;
    let n = spec.dimension;
    let mut steps = Vec::new();

    let sheared = shear_map(spec)?;
    if spec.has_oblique_drift() {
        steps.push(TransformStep::Shear {
            b: spec.drift_b.clone(),
            c: spec.drift_c,
        });
    }

    // Linear x-change sending Q~ to gamma I.
    let g = sheared.gamma;
    let qt = sheared.q();
    let s = if n == 0 {
        DMatrix::zeros(0, 0)
    } else if is_diagonal(&qt) {
        DMatrix::from_fn(n, n, |i, j| if i == j { (g / qt[(i, i)]).sqrt() } else { 0.0 })
    } else {
        let (vals, vecs) = sorted_eigen(&qt);
        let scale = DMatrix::from_fn(n, n, |i, j| if i == j { (g / vals[i]).sqrt() } else { 0.0 });
        scale * vecs.transpose()
    };
    if n > 0 && s != DMatrix::identity(n, n) {
        steps.push(TransformStep::LinearX {
            matrix: s.transpose().iter().copied().collect(),
        });
    }
    let qv = if n == 0 {
        DVector::zeros(0)
    } else {
        &s * DVector::from_column_slice(&sheared.q_vector)
    };
    let a: Vec<f64> = qv.iter().map(|v| v / g).collect();

    let beta = (spec.alpha1 - spec.alpha2) / 2.0;
    let k = beta + 1.0;
    let img = beta_map(beta, spec.alpha1, spec.alpha2, sheared.c_bessel(), space.m)?;
    if beta != 0.0 {
        steps.push(TransformStep::Power { beta, p: space.p });
        if n > 0 {
            let mut diag = vec![0.0; n * n];
            for i in 0..n {
                diag[i * n + i] = k;
            }
            steps.push(TransformStep::LinearX { matrix: diag });
        }
    }

    let model = ModelParams::new(a, img.alpha1, img.c, img.m, space.p).map_err(|e| {
        Error::Internal(format!("reduction produced an invalid model: {e}"))
    })?;
    let chain = TransformChain {
        steps,
        operator_scale: g * k * k,
        source: *space,
        target: model.space(),
    };
    Ok((model, chain))
}

fn is_diagonal(m: &DMatrix<f64>) -> bool {
    (0..m.nrows()).all(|i| (0..m.ncols()).all(|j| i == j || m[(i, j)] == 0.0))
}

pub(crate) fn block_matrix(q: &DMatrix<f64>, qv: &[f64], gamma: f64) -> DMatrix<f64> {
    let n = q.nrows();
    DMatrix::from_fn(n + 1, n + 1, |i, j| match (i < n, j < n) {
        (true, true) => q[(i, j)],
        (true, false) => qv[i],
        (false, true) => qv[j],
        (false, false) => gamma,
    })
}

pub(crate) fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec1(q: f64, qv: f64, g: f64, b: f64, c: f64, a1: f64, a2: f64) -> OperatorSpec {
        OperatorSpec::new(1, vec![q], vec![qv], g, vec![b], c, a1, a2).unwrap()
    }

    #[test]
    fn window_examples() {
        assert!(window(0.0, 0.0, 0.0, 2.0, 0.0).pass);
        let w = window(0.0, 0.0, 0.0, 2.0, 1.0);
        assert!(!w.pass);
        assert_eq!(w.margin_upper, 0.0);
        let w = window(-1.0, 1.0, 2.0, 2.0, 0.0);
        assert!(!w.pass);
        assert_eq!(w.lower, 1.0);
    }

    #[test]
    fn beta_map_examples() {
        let id = beta_map(0.0, 0.3, -0.2, 1.5, 0.7).unwrap();
        assert_eq!(id, BetaImage { alpha1: 0.3, alpha2: -0.2, c: 1.5, m: 0.7 });
        let m = 0.25;
        let c = 0.8;
        let img = beta_map(-0.5, 0.0, 1.0, c, m).unwrap();
        assert_eq!(img.alpha1, 0.0);
        assert_eq!(img.alpha2, 0.0);
        assert_eq!(img.m, 2.0 * m + 1.0);
        assert_eq!(img.c, 2.0 * c - 1.0);
        let img = beta_map(1.0, 0.0, 0.0, 1.0, 1.0).unwrap();
        assert_eq!((img.c, img.m), (1.0, 0.0));
        assert!(matches!(beta_map(-1.0, 0.0, 0.0, 0.0, 0.0), Err(Error::BetaMinusOne)));
    }

    #[test]
    fn shear_identity_without_drift() {
        let s = spec1(2.0, 0.3, 1.0, 0.0, 0.5, 0.2, 0.2);
        assert_eq!(shear_map(&s).unwrap(), s);
    }

    #[test]
    fn shear_scalar_example() {
        // The b (x) b coefficient enters with a plus sign; see the ledger.
        let s = spec1(1.0, 0.0, 1.0, 1.0, 2.0, 0.0, 0.0);
        let t = shear_map(&s).unwrap();
        assert!((t.q_matrix[0] - 1.25).abs() < 1e-15);
        assert!((t.q_vector[0] + 0.5).abs() < 1e-15);
        // Congruence by a unimodular matrix keeps the determinant.
        let d0 = s.block_matrix().determinant();
        let d1 = t.block_matrix().determinant();
        assert!((d0 - d1).abs() < 1e-14);
    }

    #[test]
    fn shear_rejects_bad_inputs() {
        let s = spec1(1.0, 0.0, 1.0, 1.0, 2.0, 0.5, 0.0);
        assert!(matches!(shear_map(&s), Err(Error::ShearPowerMismatch(..))));
        assert!(OperatorSpec::new(1, vec![1.0], vec![0.0], 1.0, vec![1.0], 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn model_input_gives_empty_chain() {
        let spec = OperatorSpec::model(&[0.3, -0.2], 0.5, 1.0).unwrap();
        let space = SpaceSpec::new(2.0, 0.5).unwrap();
        let (model, chain) = reduce_to_model(&spec, &space).unwrap();
        assert!(chain.steps.is_empty());
        assert_eq!(chain.operator_scale, 1.0);
        assert_eq!(model.a, vec![0.3, -0.2]);
        assert_eq!((model.alpha, model.c_bessel, model.m), (0.5, 1.0, 0.5));
    }

    #[test]
    fn anisotropic_power_reduction() {
        let spec = spec1(1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0);
        let space = SpaceSpec::new(2.0, 0.2).unwrap();
        let (model, chain) = reduce_to_model(&spec, &space).unwrap();
        assert_eq!(model.alpha, 0.0);
        assert!((model.c_bessel - 1.0).abs() < 1e-15);
        assert!((chain.operator_scale - 0.25).abs() < 1e-15);
    }

    #[test]
    fn window_outside_rejected() {
        let spec = spec1(1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0);
        let space = SpaceSpec::new(2.0, 1.0).unwrap();
        assert!(matches!(reduce_to_model(&spec, &space), Err(Error::Window(_))));
    }
}
