//! Time evolution `u' = L u + f` by backward Euler or Crank-Nicolson on the
//! frequency decomposition, with contraction, domination and maximal
//! regularity checks.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bessel1d::{assemble, expm, FormSpec, Potential};
use crate::error::{invalid, Error, Result};
use crate::grid::{lp_norm, Field, Grid};
use crate::multiplier::ModeOperators;
use crate::par;
use crate::params::ModelParams;
use crate::probe;

type C = Complex64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    BackwardEuler,
    CrankNicolson,
}

/// Right-hand side of the evolution.
#[derive(Clone, Debug)]
pub enum Forcing {
    None,
    /// `g(t_k) f(x, y)`, with `g` sampled at every time node.
    Separable { time: Vec<f64>, field: Field },
    /// One field per time node.
    Nodes(Vec<Field>),
}

impl Forcing {
    fn mode_values(&self, times: usize) -> Result<Option<ForcingModes>> {
        Ok(match self {
            Forcing::None => None,
            Forcing::Separable { time, field } => {
                if time.len() != times {
                    return Err(invalid("forcing", "one time sample per node"));
                }
                Some(ForcingModes::Separable(time.clone(), field.to_modes()))
            }
            Forcing::Nodes(fs) => {
                if fs.len() != times {
                    return Err(invalid("forcing", "one field per time node"));
                }
                Some(ForcingModes::Nodes(fs.iter().map(|f| f.to_modes()).collect()))
            }
        })
    }
}

enum ForcingModes {
    Separable(Vec<f64>, Field),
    Nodes(Vec<Field>),
}

impl ForcingModes {
    fn at(&self, k: usize, range: std::ops::Range<usize>) -> Vec<C> {
        match self {
            ForcingModes::Separable(g, f) => f.values[range].iter().map(|v| v * g[k]).collect(),
            ForcingModes::Nodes(fs) => fs[k].values[range].to_vec(),
        }
    }
}

/// Result of an evolution: the time grid and the states at the requested steps.
#[derive(Clone, Debug)]
pub struct EvolutionRun {
    pub times: Vec<f64>,
    pub scheme: Scheme,
    /// `(step index, state)`; always contains step 0 and the last step.
    pub snapshots: Vec<(usize, Field)>,
}

impl EvolutionRun {
    pub fn last(&self) -> &Field {
        &self.snapshots.last().expect("nonempty").1
    }

    pub fn write_csvs(&self, dir: &std::path::Path, stem: &str) -> Result<Vec<std::path::PathBuf>> {
        let mut out = Vec::new();
        for (k, f) in &self.snapshots {
            let p = dir.join(format!("{stem}_step{k:05}.csv"));
            f.write_csv(&p)?;
            out.push(p);
        }
        Ok(out)
    }
}

/// Uniform time grid `k T / n`.
pub fn uniform_times(t_end: f64, steps: usize) -> Vec<f64> {
    (0..=steps).map(|k| t_end * k as f64 / steps as f64).collect()
}

/// Evolve `u0` on the mode operators. Factorisations are reused while the
/// step size is unchanged; each frequency is integrated independently.
/// `snapshot` selects the steps to keep (0 and the last are always kept).
pub fn evolve(
    u0: &Field,
    forcing: &Forcing,
    ops: &ModeOperators,
    scheme: Scheme,
    times: &[f64],
    snapshot: impl Fn(usize) -> bool,
) -> Result<EvolutionRun> {
    if times.len() < 2 || times.windows(2).any(|w| !(w[1] > w[0])) || times[0] != 0.0 {
        return Err(invalid("times", "need 0 = t_0 < t_1 < ... < t_K"));
    }
    if *u0.grid != *ops.grid {
        return Err(Error::Grid("initial datum lives on a different grid".into()));
    }
    let j = ops.grid.j();
    let nm = ops.ops.len();
    let fm = forcing.mode_values(times.len())?;
    let u0m = u0.to_modes();
    let steps = times.len() - 1;
    let keep: Vec<usize> = (0..=steps).filter(|&k| k == 0 || k == steps || snapshot(k)).collect();

    // Per mode: the kept states.
    let per_mode = par::try_map_range(nm, |m| {
        let op = &ops.ops[m];
        let range = m * j..(m + 1) * j;
        let mut u = u0m.values[range.clone()].to_vec();
        let mut kept = vec![u.clone()];
        let mut cached: Option<(f64, crate::bessel1d::Resolvent<'_>)> = None;
        for k in 0..steps {
            let dt = times[k + 1] - times[k];
            let lam = match scheme {
                Scheme::BackwardEuler => 1.0 / dt,
                Scheme::CrankNicolson => 2.0 / dt,
            };
            if cached.as_ref().is_none_or(|(l, _)| *l != lam) {
                let r = op.resolvent(C::new(lam, 0.0)).map_err(|e| Error::Singular {
                    lambda: C::new(lam, 0.0),
                    detail: format!("xi = {:?}: {e}", ops.modes[m]),
                })?;
                cached = Some((lam, r));
            }
            let r = &cached.as_ref().expect("set above").1;
            let mut rhs: Vec<C> = u.iter().map(|v| v * lam).collect();
            if scheme == Scheme::CrankNicolson {
                let lu = op.apply(&u);
                rhs.iter_mut().zip(lu).for_each(|(a, b)| *a += b);
            }
            if let Some(f) = &fm {
                let f1 = f.at(k + 1, range.clone());
                rhs.iter_mut().zip(f1).for_each(|(a, b)| *a += b);
                if scheme == Scheme::CrankNicolson {
                    let f0 = f.at(k, range.clone());
                    rhs.iter_mut().zip(f0).for_each(|(a, b)| *a += b);
                }
            }
            u = r.solve_fast(&rhs);
            if keep.binary_search(&(k + 1)).is_ok() {
                kept.push(u.clone());
            }
        }
        Ok::<_, Error>(kept)
    })?;

    let snapshots = keep
        .iter()
        .enumerate()
        .map(|(s, &k)| {
            let mut v = Vec::with_capacity(nm * j);
            for pm in &per_mode {
                v.extend_from_slice(&pm[s]);
            }
            Ok((k, Field::new(ops.grid.clone(), v)?.from_modes()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvolutionRun { times: times.to_vec(), scheme, snapshots })
}

/// [`evolve`] for the model operator, rejecting parameters outside the window.
pub fn evolve_model(
    u0: &Field,
    forcing: &Forcing,
    model: &ModelParams,
    scheme: Scheme,
    times: &[f64],
    snapshot: impl Fn(usize) -> bool,
) -> Result<EvolutionRun> {
    let ops = ModeOperators::model(model, u0.grid.clone())?;
    evolve(u0, forcing, &ops, scheme, times, snapshot)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractionRow {
    pub t: f64,
    /// Power-iteration estimate of `||e^{tL}||` on `L^2_{c-alpha}`, max over modes.
    pub l2: f64,
    /// Max of `||e^{tL} u||_inf / ||u||_inf` over random smooth data.
    pub linf: f64,
    /// Max of the `L^p_{c-alpha}` ratios over random data and the sampled `p`.
    pub lp: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub rows: Vec<ContractionRow>,
}

impl ContractionReport {
    pub fn max(&self) -> f64 {
        self.rows.iter().map(|r| r.l2.max(r.linf).max(r.lp)).fold(0.0, f64::max)
    }
}

/// Estimate `||e^{tL}||` for each `t` with `steps` backward Euler steps.
pub fn contraction_check(model: &ModelParams, grid: Arc<Grid>, t_set: &[f64], steps: usize, seed: u64) -> Result<ContractionReport> {
    if !(model.c_bessel + 1.0 - model.alpha > 0.0) {
        return Err(invalid("c", "contraction needs c + 1 - alpha > 0"));
    }
    let ops = ModeOperators::model_unchecked(model, grid.clone())?;
    let mu = model.c_bessel - model.alpha;
    let mut rows = Vec::new();
    for &t in t_set {
        if t == 0.0 {
            rows.push(ContractionRow { t, l2: 1.0, linf: 1.0, lp: 1.0 });
            continue;
        }
        let lam = steps as f64 / t;
        let l2 = par::try_map_range(ops.ops.len(), |m| {
            let op = &ops.ops[m];
            let r = op.resolvent(C::new(lam, 0.0))?;
            let fwd = |x: &[C]| {
                let mut v = x.to_vec();
                for _ in 0..steps {
                    v = r.solve_fast(&v).into_iter().map(|a| a * lam).collect();
                }
                v
            };
            let adj = |x: &[C]| {
                let mut v = x.to_vec();
                for _ in 0..steps {
                    v = r.solve_adjoint(&v).into_iter().map(|a| a * lam).collect();
                }
                v
            };
            let mut rng = probe::stream(seed, &format!("contraction/{t}/{m}"));
            Ok::<_, Error>(probe::operator_norm(fwd, adj, &op.w, &mut rng, 4, 3))
        })?
        .into_iter()
        .fold(0.0, f64::max);
        let mut rng = probe::stream(seed, &format!("contraction/fields/{t}"));
        let mut linf: f64 = 0.0;
        let mut lp: f64 = 0.0;
        for _ in 0..4 {
            let u0 = random_field(&mut rng, grid.clone());
            let run = evolve(&u0, &Forcing::None, &ops, Scheme::BackwardEuler, &uniform_times(t, steps), |_| false)?;
            let u = run.last();
            linf = linf.max(u.max_abs() / u0.max_abs());
            for p in [1.5, 4.0] {
                lp = lp.max(lp_norm(u, p, mu) / lp_norm(&u0, p, mu));
            }
        }
        rows.push(ContractionRow { t, l2, linf, lp });
    }
    Ok(ContractionReport { rows })
}

/// A random smooth field: a few random profiles times smooth periodic factors.
pub fn random_field(rng: &mut impl rand::Rng, grid: Arc<Grid>) -> Field {
    let support = 0.5 * grid.y_max;
    let l = grid.x_box.map_or(1.0, |b| b.length);
    let mut out = Field::zeros(grid.clone());
    for _ in 0..3 {
        let p = probe::random_profile(rng, support);
        let shift: f64 = rng.random_range(0.0..l);
        let s: f64 = rng.random_range(0.2..1.0);
        let coeff = C::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let f = Field::from_fn(grid.clone(), |x, y| {
            let phi: f64 = x.iter().map(|x| (s * (2.0 * std::f64::consts::PI * (x - shift) / l).cos()).exp()).product();
            coeff * phi * p.value(y)
        });
        out.values.iter_mut().zip(f.values).for_each(|(a, b)| *a += b);
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaxRegReport {
    pub dt_norm: f64,
    pub lu_norm: f64,
    pub f_norm: f64,
    /// `(||D_t u|| + ||L u||) / ||f||` in `L^q(0, T; L^p_m)`.
    pub ratio: f64,
    /// `max_k ||D_t u - L u - f||` relative to `||f||`; zero for backward Euler.
    pub identity_defect: f64,
}

/// Backward Euler from `u(0) = 0`; norms of the difference quotient and of
/// `L u_{k+1}` over the time grid. `forcing` must be one field per node.
pub fn maximal_regularity_check(
    ops: &ModeOperators,
    forcing: &Forcing,
    times: &[f64],
    p: f64,
    m: f64,
    q: f64,
) -> Result<MaxRegReport> {
    let zero = Field::zeros(ops.grid.clone());
    let run = evolve(&zero, forcing, ops, Scheme::BackwardEuler, times, |_| true)?;
    let f_at = |k: usize| -> Field {
        match forcing {
            Forcing::None => Field::zeros(ops.grid.clone()),
            Forcing::Separable { time, field } => field.map(|v| v * time[k]),
            Forcing::Nodes(fs) => fs[k].clone(),
        }
    };
    let (mut sd, mut sl, mut sf) = (0.0, 0.0, 0.0);
    let mut defect: f64 = 0.0;
    for k in 0..times.len() - 1 {
        let dt = times[k + 1] - times[k];
        let (u0, u1) = (&run.snapshots[k].1, &run.snapshots[k + 1].1);
        let du = u1.sub(u0).map(|v| v / dt);
        let lu = ops.apply(u1)?;
        let f = f_at(k + 1);
        let (a, b, c) = (lp_norm(&du, p, m), lp_norm(&lu, p, m), lp_norm(&f, p, m));
        sd += dt * a.powf(q);
        sl += dt * b.powf(q);
        sf += dt * c.powf(q);
        defect = defect.max(lp_norm(&du.sub(&lu).sub(&f), p, m) / c.max(f64::MIN_POSITIVE));
    }
    let (dt_norm, lu_norm, f_norm) = (sd.powf(1.0 / q), sl.powf(1.0 / q), sf.powf(1.0 / q));
    Ok(MaxRegReport { dt_norm, lu_norm, f_norm, ratio: (dt_norm + lu_norm) / f_norm, identity_defect: defect })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DominationReport {
    pub t: f64,
    /// `max (|e^{tM} f| - e^{tM_0} |f|)_+ / max |f|`.
    pub excess: f64,
}

/// Per-mode domination `|e^{tM} f| <= e^{t M_0} |f|` where `M_0` is the
/// symbol with `a = 0` and potential `Q_a(xi) = |xi|^2 - (a.xi)^2`, the real
/// part of the conjugated form.
pub fn domination_check(model: &ModelParams, xi: &[f64], grid: Arc<Grid>, f: &[C], t_set: &[f64]) -> Result<Vec<DominationReport>> {
    let op = assemble(&FormSpec::model_mode(model, xi), grid.clone())?;
    let adx = op.form.params.a_dot_xi;
    let qa = op.form.params.xi_sq - adx * adx;
    let mut dom = FormSpec::model_mode(&ModelParams { a: vec![0.0; model.dimension()], ..model.clone() }, &vec![0.0; xi.len()]);
    if qa != 0.0 {
        dom.potentials = vec![Potential { coeff: C::new(qa, 0.0), exponent: model.c_bessel }];
    }
    let dop = assemble(&dom, grid)?;
    let absf: Vec<C> = f.iter().map(|v| C::new(v.norm(), 0.0)).collect();
    let fmax = f.iter().map(|v| v.norm()).fold(0.0, f64::max);
    t_set
        .iter()
        .map(|&t| {
            let z = C::new(t, 0.0);
            let e = expm(&op, z)?;
            let e0 = expm(&dop, z)?;
            let n = f.len();
            let mut excess: f64 = f64::NEG_INFINITY;
            for i in 0..n {
                let a: C = (0..n).map(|k| e[(i, k)] * f[k]).sum();
                let b: C = (0..n).map(|k| e0[(i, k)] * absf[k]).sum();
                excess = excess.max(a.norm() - b.re);
            }
            Ok(DominationReport { t, excess: excess.max(0.0) / fmax })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, XBox};

    #[test]
    fn zero_stays_zero() {
        let m = ModelParams::new(vec![0.3], 0.5, 1.0, 0.5, 2.0).unwrap();
        let g = Arc::new(make_grid(16, 2.0, 1.0, Some(XBox { length: 4.0, nx: 8, dim: 1 })).unwrap());
        let run = evolve_model(&Field::zeros(g), &Forcing::None, &m, Scheme::CrankNicolson, &uniform_times(1.0, 4), |_| true).unwrap();
        assert_eq!(run.snapshots.len(), 5);
        assert_eq!(run.last().max_abs(), 0.0);
    }

    #[test]
    fn one_backward_euler_step_is_the_resolvent() {
        let m = ModelParams::new(vec![0.3], 0.5, 1.0, 0.5, 2.0).unwrap();
        let g = Arc::new(make_grid(16, 2.0, 1.0, Some(XBox { length: 4.0, nx: 8, dim: 1 })).unwrap());
        let u0 = random_field(&mut probe::stream(3, "t"), g);
        let dt = 0.1;
        let run = evolve_model(&u0, &Forcing::None, &m, Scheme::BackwardEuler, &[0.0, dt], |_| false).unwrap();
        let r = crate::multiplier::resolvent_nd(C::new(1.0 / dt, 0.0), &u0.map(|v| v / dt), &m).unwrap();
        assert!(run.last().sub(&r).max_abs() < 1e-12 * u0.max_abs());
    }
}
