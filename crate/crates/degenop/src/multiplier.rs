//! The N-d resolvent as a family of 1-d problems: DFT in `x`, one banded
//! solve per frequency, inverse DFT. Also the derived multipliers, the
//! closed-form `xi`-derivatives of `R_lambda(xi)` and the Mikhlin scans.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bessel1d::{assemble, directional_matrix, DiscreteOperator, FormSpec, Resolvent};
use crate::error::{invalid, Error, Result};
use crate::grid::{Field, Grid};
use crate::linalg::Tridiag;
use crate::par;
use crate::params::{ModelParams, OperatorSpec};
use crate::probe;

type C = Complex64;

/// One assembled 1-d operator per retained frequency, in `fft` order.
#[derive(Clone, Debug)]
pub struct ModeOperators {
    pub grid: Arc<Grid>,
    pub modes: Vec<Vec<f64>>,
    pub ops: Vec<DiscreteOperator>,
}

impl ModeOperators {
    pub fn from_forms(grid: Arc<Grid>, form: impl Fn(&[f64]) -> FormSpec + Sync) -> Result<Self> {
        let modes: Vec<Vec<f64>> = (0..grid.nx_total()).map(|m| grid.mode(m)).collect();
        let ops = par::try_map_range(modes.len(), |m| assemble(&form(&modes[m]), grid.clone()))?;
        Ok(Self { grid, modes, ops })
    }

    /// Model symbols; rejects parameters outside the window.
    pub fn model(m: &ModelParams, grid: Arc<Grid>) -> Result<Self> {
        let w = m.window();
        if !w.pass {
            return Err(Error::Window(format!("need {} < (m+1)/p = {} < {}", w.lower, w.value, w.upper)));
        }
        Self::model_unchecked(m, grid)
    }

    /// Model symbols without the window check, for negative controls.
    pub fn model_unchecked(m: &ModelParams, grid: Arc<Grid>) -> Result<Self> {
        check_dim(m.dimension(), &grid)?;
        Self::from_forms(grid, |xi| FormSpec::model_mode(m, xi))
    }

    /// Symbols of a general operator.
    pub fn general(spec: &OperatorSpec, grid: Arc<Grid>) -> Result<Self> {
        spec.validate()?;
        check_dim(spec.dimension, &grid)?;
        Self::from_forms(grid, |xi| FormSpec::general_mode(spec, xi))
    }

    /// The discrete `L u`, mode by mode.
    pub fn apply(&self, u: &Field) -> Result<Field> {
        self.check_field(u)?;
        let j = self.grid.j();
        let mut modes = u.to_modes();
        par::for_each_chunk_mut(&mut modes.values, j, |m, slice| {
            let v = self.ops[m].apply(slice);
            slice.copy_from_slice(&v);
        });
        Ok(modes.from_modes())
    }

    /// `(lambda - L)^{-1} f`, mode by mode. A failing mode aborts with its frequency.
    pub fn solve(&self, lambda: C, f: &Field) -> Result<Field> {
        self.check_field(f)?;
        let j = self.grid.j();
        let modes = f.to_modes();
        let cols = par::try_map_range(self.ops.len(), |m| {
            let r = self.ops[m].resolvent(lambda).map_err(|e| with_mode(e, &self.modes[m]))?;
            r.solve(&modes.values[m * j..(m + 1) * j]).map_err(|e| with_mode(e, &self.modes[m]))
        })?;
        let out = Field::new(self.grid.clone(), cols.concat())?;
        Ok(out.from_modes())
    }

    fn check_field(&self, u: &Field) -> Result<()> {
        if *u.grid != *self.grid {
            return Err(Error::Grid("field lives on a different grid".into()));
        }
        Ok(())
    }
}

fn check_dim(n: usize, grid: &Grid) -> Result<()> {
    if grid.x_box.is_some() && grid.dim() != n {
        return Err(invalid("dimension", format!("operator has N = {n}, grid has {}", grid.dim())));
    }
    Ok(())
}

/// Frequency of mode `m`; the zero vector of length `n` without an x box.
pub fn mode_or_zero(grid: &Grid, m: usize, n: usize) -> Vec<f64> {
    if grid.x_box.is_some() { grid.mode(m) } else { vec![0.0; n] }
}

fn with_mode(e: Error, xi: &[f64]) -> Error {
    match e {
        Error::Singular { lambda, detail } => Error::Singular { lambda, detail: format!("xi = {xi:?}: {detail}") },
        other => other,
    }
}

/// A resolvent solve at fixed `lambda` over every retained frequency.
#[derive(Clone, Debug)]
pub struct FrequencySolvePlan {
    pub lambda: C,
    pub ops: ModeOperators,
}

impl FrequencySolvePlan {
    pub fn new(lambda: C, ops: ModeOperators) -> Self {
        Self { lambda, ops }
    }

    pub fn solve(&self, f: &Field) -> Result<Field> {
        self.ops.solve(self.lambda, f)
    }

    /// `||(lambda - L) u - f|| / ||f||` in `L^2_mu`, `mu` the operators' measure.
    pub fn residual(&self, u: &Field, f: &Field) -> Result<f64> {
        let lu = self.ops.apply(u)?;
        let r = Field::new(
            u.grid.clone(),
            u.values.iter().zip(&lu.values).zip(&f.values).map(|((u, l), f)| self.lambda * u - l - f).collect(),
        )?;
        let mu = self.ops.ops[0].form.measure;
        Ok(r.mass_norm(mu) / f.mass_norm(mu).max(f64::MIN_POSITIVE))
    }
}

/// `(lambda - L)^{-1} f` for the model operator.
pub fn resolvent_nd(lambda: C, f: &Field, model: &ModelParams) -> Result<Field> {
    if !(lambda.re > 0.0) {
        return Err(invalid("lambda", "need Re lambda > 0"));
    }
    ModeOperators::model(model, f.grid.clone())?.solve(lambda, f)
}

/// The model operator split into its pieces, shared by every frequency:
/// `K(xi) = K_B - 2i a.xi T + |xi|^2 P`, with `T / W ~ y^alpha D_y` and
/// `P / W = y^alpha`.
#[derive(Clone, Debug)]
pub struct ModelPieces {
    pub model: ModelParams,
    pub grid: Arc<Grid>,
    pub kb: Tridiag,
    pub t: Tridiag,
    pub p: Vec<f64>,
    pub w: Vec<f64>,
    y_alpha: Vec<f64>,
}

impl ModelPieces {
    pub fn new(model: &ModelParams, grid: Arc<Grid>) -> Result<Self> {
        let zero = vec![0.0; model.dimension()];
        let base = assemble(&FormSpec::model_mode(model, &zero), grid.clone())?;
        let c = model.c_bessel;
        Ok(Self {
            model: model.clone(),
            kb: base.k,
            t: directional_matrix(&grid, c),
            p: grid.mass(c),
            w: base.w,
            y_alpha: grid.y_nodes.iter().map(|y| y.powf(model.alpha)).collect(),
            grid,
        })
    }

    pub fn a_dot(&self, xi: &[f64]) -> f64 {
        self.model.a.iter().zip(xi).map(|(a, x)| a * x).sum()
    }

    /// The 1-d operator at an arbitrary (not necessarily lattice) `xi`.
    pub fn operator(&self, xi: &[f64]) -> DiscreteOperator {
        let adx = self.a_dot(xi);
        let xi2: f64 = xi.iter().map(|x| x * x).sum();
        let mut k = self.kb.clone();
        let ct = C::new(0.0, -2.0 * adx);
        let n = self.w.len();
        for i in 0..n {
            k.d[i] += ct * self.t.d[i] + self.p[i] * xi2;
            if i + 1 < n {
                k.du[i] += ct * self.t.du[i];
                k.dl[i] += ct * self.t.dl[i];
            }
        }
        DiscreteOperator { k, w: self.w.clone(), grid: self.grid.clone(), form: FormSpec::model_mode(&self.model, xi) }
    }

    /// `y^alpha D_y u`, consistent with the transport term.
    pub fn y_alpha_dy(&self, u: &[C]) -> Vec<C> {
        self.t.matvec(u).into_iter().zip(&self.w).map(|(v, w)| v / *w).collect()
    }

    fn y_alpha_dy_adjoint(&self, u: &[C], d: &[f64]) -> Vec<C> {
        let x: Vec<C> = u.iter().zip(d).zip(&self.w).map(|((u, d), w)| u * *d / *w).collect();
        self.t.matvec_h(&x).into_iter().zip(d).map(|(v, d)| v / *d).collect()
    }

    /// `y^alpha B u` from the stiffness alone.
    pub fn y_alpha_bessel(&self, u: &[C]) -> Vec<C> {
        self.kb.matvec(u).into_iter().zip(&self.w).map(|(v, w)| -v / *w).collect()
    }

    pub fn y_alpha(&self) -> &[f64] {
        &self.y_alpha
    }
}

/// The derived multipliers of a resolvent solution.
#[derive(Clone, Debug)]
pub struct DerivedMultipliers {
    pub u: Field,
    /// `y^alpha Delta_x u`.
    pub laplace_x: Field,
    /// `y^alpha D_{x_i} D_y u`, one per axis.
    pub mixed: Vec<Field>,
    /// `y^alpha B_y u`.
    pub bessel: Field,
    /// `y^(alpha-1) D_y u`.
    pub neumann: Field,
    /// `y^alpha D_{x_i} D_{x_k} u`, row-major over `(i, k)`.
    pub hessian_x: Vec<Field>,
}

impl DerivedMultipliers {
    /// `||y^a Delta_x u + 2 y^a a.grad_x D_y u + y^a B u - (lambda u - f)|| / ||f||` in `L^2_{c-alpha}`.
    pub fn sum_identity_residual(&self, lambda: C, f: &Field, model: &ModelParams) -> f64 {
        let n = self.u.values.len();
        let mut r = self.laplace_x.clone();
        for i in 0..n {
            let mut v = self.laplace_x.values[i] + self.bessel.values[i] - (lambda * self.u.values[i] - f.values[i]);
            for (k, a) in model.a.iter().enumerate() {
                v += 2.0 * a * self.mixed[k].values[i];
            }
            r.values[i] = v;
        }
        let mu = model.c_bessel - model.alpha;
        r.mass_norm(mu) / f.mass_norm(mu).max(f64::MIN_POSITIVE)
    }
}

/// Solve `(lambda - L) u = f` and apply the derived multipliers
/// `-|xi|^2 y^alpha R`, `i xi y^alpha D_y R`, `y^alpha B R` per mode.
pub fn derived_multipliers(lambda: C, f: &Field, model: &ModelParams) -> Result<DerivedMultipliers> {
    let w = model.window();
    if !w.pass {
        return Err(Error::Window(format!("need {} < (m+1)/p = {} < {}", w.lower, w.value, w.upper)));
    }
    derived_multipliers_unchecked(lambda, f, model)
}

/// As [`derived_multipliers`] without the window check.
pub fn derived_multipliers_unchecked(lambda: C, f: &Field, model: &ModelParams) -> Result<DerivedMultipliers> {
    let grid = f.grid.clone();
    check_dim(model.dimension(), &grid)?;
    let pieces = ModelPieces::new(model, grid.clone())?;
    let j = grid.j();
    let n = model.dimension();
    let fm = f.to_modes();
    let nm = grid.nx_total();
    // Per mode: u, -|xi|^2 y^a u, y^a D_y u, y^a B u.
    let per = par::try_map_range(nm, |m| {
        let xi = mode_or_zero(&grid, m, n);
        let op = pieces.operator(&xi);
        let u = op.resolve(lambda, &fm.values[m * j..(m + 1) * j]).map_err(|e| with_mode(e, &xi))?;
        let dy = pieces.y_alpha_dy(&u);
        let b = pieces.y_alpha_bessel(&u);
        Ok::<_, Error>((xi, u, dy, b))
    })?;
    let ya = pieces.y_alpha();
    let y = &grid.y_nodes;
    let build = |f: &dyn Fn(usize, usize) -> C| -> Result<Field> {
        let mut v = Vec::with_capacity(nm * j);
        for m in 0..nm {
            for i in 0..j {
                v.push(f(m, i));
            }
        }
        Ok(Field::new(grid.clone(), v)?.from_modes())
    };
    let u = build(&|m, i| per[m].1[i])?;
    let laplace_x = build(&|m, i| {
        let xi2: f64 = per[m].0.iter().map(|x| x * x).sum();
        -xi2 * ya[i] * per[m].1[i]
    })?;
    let mixed = (0..n)
        .map(|k| build(&|m, i| C::new(0.0, per[m].0[k]) * per[m].2[i]))
        .collect::<Result<Vec<_>>>()?;
    let bessel = build(&|m, i| per[m].3[i])?;
    let neumann = build(&|m, i| per[m].2[i] / y[i])?;
    let mut hessian_x = Vec::with_capacity(n * n);
    for a in 0..n {
        for b in 0..n {
            hessian_x.push(build(&|m, i| -per[m].0[a] * per[m].0[b] * ya[i] * per[m].1[i])?);
        }
    }
    Ok(DerivedMultipliers { u, laplace_x, mixed, bessel, neumann, hessian_x })
}

/// Building blocks of the `xi`-derivative formulas of `R(xi) = (lambda - M(xi))^{-1}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Factor {
    /// `R(xi)`.
    R,
    /// `G_j = 2i a_j y^alpha D_y - 2 xi_j y^alpha`, so that `D_j R = R G_j R`.
    G(usize),
    /// `y^alpha D_y`.
    Dy,
    /// `y^alpha`.
    Ya,
}

/// `coeff * F_1 F_2 ... F_k` with the rightmost factor applied first.
#[derive(Clone, Debug, PartialEq)]
pub struct Term {
    pub coeff: C,
    pub factors: Vec<Factor>,
}

/// `D^S R` for a set of distinct indices `|S| <= 2`.
pub fn derivative_terms(set: &[usize]) -> Vec<Term> {
    use Factor::*;
    let one = C::new(1.0, 0.0);
    match set {
        [] => vec![Term { coeff: one, factors: vec![R] }],
        [i] => vec![Term { coeff: one, factors: vec![R, G(*i), R] }],
        [i, k] => vec![
            Term { coeff: one, factors: vec![R, G(*i), R, G(*k), R] },
            Term { coeff: one, factors: vec![R, G(*k), R, G(*i), R] },
        ],
        _ => panic!("derivative_terms: at most two distinct indices"),
    }
}

/// A linear combination of factor products at one `(lambda, xi)`.
pub struct TermOperator<'a> {
    pub pieces: &'a ModelPieces,
    pub resolvent: Resolvent<'a>,
    pub xi: Vec<f64>,
    pub terms: Vec<Term>,
}

impl TermOperator<'_> {
    fn factor(&self, f: Factor, x: &[C]) -> Vec<C> {
        let ya = self.pieces.y_alpha();
        match f {
            Factor::R => self.resolvent.solve_fast(x),
            Factor::Dy => self.pieces.y_alpha_dy(x),
            Factor::Ya => x.iter().zip(ya).map(|(v, a)| v * *a).collect(),
            Factor::G(j) => {
                let aj = self.pieces.model.a[j];
                let d = self.pieces.y_alpha_dy(x);
                d.iter()
                    .zip(x)
                    .zip(ya)
                    .map(|((d, x), a)| C::new(0.0, 2.0 * aj) * d - 2.0 * self.xi[j] * a * x)
                    .collect()
            }
        }
    }

    fn factor_adjoint(&self, f: Factor, x: &[C], w: &[f64]) -> Vec<C> {
        let ya = self.pieces.y_alpha();
        match f {
            Factor::R => self.resolvent.solve_adjoint_in(x, w),
            Factor::Dy => self.pieces.y_alpha_dy_adjoint(x, w),
            Factor::Ya => x.iter().zip(ya).map(|(v, a)| v * *a).collect(),
            Factor::G(j) => {
                let aj = self.pieces.model.a[j];
                let d = self.pieces.y_alpha_dy_adjoint(x, w);
                d.iter()
                    .zip(x)
                    .zip(ya)
                    .map(|((d, x), a)| C::new(0.0, -2.0 * aj) * d - 2.0 * self.xi[j] * a * x)
                    .collect()
            }
        }
    }

    pub fn apply(&self, x: &[C]) -> Vec<C> {
        let mut out = vec![C::new(0.0, 0.0); x.len()];
        for t in &self.terms {
            let mut v = x.to_vec();
            for f in t.factors.iter().rev() {
                v = self.factor(*f, &v);
            }
            out.iter_mut().zip(v).for_each(|(o, v)| *o += t.coeff * v);
        }
        out
    }

    /// Adjoint in the product with nodal weights `w`.
    pub fn apply_adjoint(&self, x: &[C], w: &[f64]) -> Vec<C> {
        let mut out = vec![C::new(0.0, 0.0); x.len()];
        for t in &self.terms {
            let mut v = x.to_vec();
            for f in &t.factors {
                v = self.factor_adjoint(*f, &v, w);
            }
            out.iter_mut().zip(v).for_each(|(o, v)| *o += t.coeff.conj() * v);
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct XiDerivativeReport {
    pub order: usize,
    pub indices: Vec<usize>,
    pub steps: Vec<f64>,
    /// `||analytic - difference||_w / ||analytic||_w` per step.
    pub errors: Vec<f64>,
    /// `log2` of successive error ratios.
    pub observed_orders: Vec<f64>,
    /// Mixed derivatives taken in both orders, for `order == 2`.
    pub symmetry_defect: f64,
}

/// Compare `D_{xi_j} R f` (and `D_{xi_1} D_{xi_2} R f`) from the closed
/// forms with centred differences in `xi` at the given steps.
pub fn xi_derivative_check(
    lambda: C,
    model: &ModelParams,
    grid: Arc<Grid>,
    xi0: &[f64],
    order: usize,
    f: &[C],
    steps: &[f64],
) -> Result<XiDerivativeReport> {
    if xi0.iter().all(|x| *x == 0.0) {
        return Err(invalid("xi", "base point must be nonzero"));
    }
    let n = model.dimension();
    if xi0.len() != n || !(1..=2).contains(&order) || (order == 2 && n < 2) {
        return Err(invalid("order", "need order 1, or order 2 with N >= 2, and xi of length N"));
    }
    let pieces = ModelPieces::new(model, grid)?;
    let indices: Vec<usize> = (0..order).collect();
    let solve_at = |xi: &[f64]| -> Result<Vec<C>> { pieces.operator(xi).resolve(lambda, f) };
    let op0 = pieces.operator(xi0);
    let analytic = TermOperator {
        pieces: &pieces,
        resolvent: op0.resolvent(lambda)?,
        xi: xi0.to_vec(),
        terms: derivative_terms(&indices),
    }
    .apply(f);
    let w = &op0.w;
    let an = probe::weighted_norm(&analytic, w);
    let shifted = |d: &[(usize, f64)]| {
        let mut xi = xi0.to_vec();
        for (i, h) in d {
            xi[*i] += h;
        }
        xi
    };
    let mut errors = Vec::new();
    for &h in steps {
        let fd: Vec<C> = if order == 1 {
            let p = solve_at(&shifted(&[(0, h)]))?;
            let m = solve_at(&shifted(&[(0, -h)]))?;
            p.iter().zip(&m).map(|(p, m)| (p - m) / (2.0 * h)).collect()
        } else {
            let pp = solve_at(&shifted(&[(0, h), (1, h)]))?;
            let pm = solve_at(&shifted(&[(0, h), (1, -h)]))?;
            let mp = solve_at(&shifted(&[(0, -h), (1, h)]))?;
            let mm = solve_at(&shifted(&[(0, -h), (1, -h)]))?;
            (0..f.len()).map(|i| (pp[i] - pm[i] - mp[i] + mm[i]) / (4.0 * h * h)).collect()
        };
        let diff: Vec<C> = fd.iter().zip(&analytic).map(|(a, b)| a - b).collect();
        errors.push(probe::weighted_norm(&diff, w) / an);
    }
    let observed_orders = errors.windows(2).zip(steps.windows(2)).map(|(e, s)| (e[0] / e[1]).ln() / (s[0] / s[1]).ln()).collect();
    let symmetry_defect = if order == 2 {
        let swapped = TermOperator {
            pieces: &pieces,
            resolvent: op0.resolvent(lambda)?,
            xi: xi0.to_vec(),
            terms: derivative_terms(&[1, 0]),
        }
        .apply(f);
        let d: Vec<C> = swapped.iter().zip(&analytic).map(|(a, b)| a - b).collect();
        probe::weighted_norm(&d, w) / an
    } else {
        0.0
    };
    Ok(XiDerivativeReport { order, indices, steps: steps.to_vec(), errors, observed_orders, symmetry_defect })
}

/// The three multiplier families of the scan.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// `lambda R_lambda(xi)`.
    Resolvent,
    /// `|xi|^2 y^alpha R_lambda(xi)`.
    Potential,
    /// `xi_j y^alpha D_y R_lambda(xi)`.
    Mixed(usize),
}

impl Family {
    /// `D^S` of the scalar prefactor at `xi`.
    fn scalar(&self, lambda: C, xi: &[f64], s: &[usize]) -> C {
        let v = match (self, s) {
            (Family::Resolvent, []) => return lambda,
            (Family::Resolvent, _) => 0.0,
            (Family::Potential, []) => xi.iter().map(|x| x * x).sum(),
            (Family::Potential, [i]) => 2.0 * xi[*i],
            (Family::Potential, _) => 0.0,
            (Family::Mixed(j), []) => xi[*j],
            (Family::Mixed(j), [i]) => (i == j) as u8 as f64,
            (Family::Mixed(_), _) => 0.0,
        };
        C::new(v, 0.0)
    }

    fn middle(&self) -> Option<Factor> {
        match self {
            Family::Resolvent => None,
            Family::Potential => Some(Factor::Ya),
            Family::Mixed(_) => Some(Factor::Dy),
        }
    }

    /// `xi^beta D^beta (s(xi) X R)` by the product rule over subsets of `beta`.
    pub fn terms(&self, lambda: C, xi: &[f64], beta: &[usize]) -> Vec<Term> {
        let xb: f64 = beta.iter().map(|i| xi[*i]).product();
        let mut out = Vec::new();
        for mask in 0..(1usize << beta.len()) {
            let s: Vec<usize> = (0..beta.len()).filter(|b| mask >> b & 1 == 1).map(|b| beta[b]).collect();
            let rest: Vec<usize> = (0..beta.len()).filter(|b| mask >> b & 1 == 0).map(|b| beta[b]).collect();
            let sc = self.scalar(lambda, xi, &s);
            if sc == C::new(0.0, 0.0) {
                continue;
            }
            for t in derivative_terms(&rest) {
                let mut factors = Vec::new();
                factors.extend(self.middle());
                factors.extend(t.factors);
                out.push(Term { coeff: sc * xb * t.coeff, factors });
            }
        }
        out
    }

    pub fn label(&self) -> String {
        match self {
            Family::Resolvent => "lambda_r".into(),
            Family::Potential => "xi2_ya_r".into(),
            Family::Mixed(j) => format!("xi{j}_ya_dy_r"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MikhlinRow {
    pub family: String,
    pub beta: Vec<usize>,
    pub lambda_re: f64,
    pub lambda_im: f64,
    pub xi: Vec<f64>,
    pub estimate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MikhlinReport {
    /// Weight exponent of the `L^2` norm used by the probes.
    pub weight: f64,
    pub rows: Vec<MikhlinRow>,
    /// `(family, sup)` in a fixed order.
    pub suprema: Vec<(String, f64)>,
}

impl MikhlinReport {
    pub fn overall(&self) -> f64 {
        self.suprema.iter().map(|s| s.1).fold(0.0, f64::max)
    }

    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["family", "beta", "lambda_re", "lambda_im", "xi", "estimate"])?;
        for r in &self.rows {
            let join = |v: Vec<String>| v.join(";");
            w.write_record(&[
                r.family.clone(),
                join(r.beta.iter().map(|b| b.to_string()).collect()),
                format!("{:.17e}", r.lambda_re),
                format!("{:.17e}", r.lambda_im),
                join(r.xi.iter().map(|x| format!("{x:.17e}")).collect()),
                format!("{:.17e}", r.estimate),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// The `L^2` weight exponent with the same window position as `(p, m)`:
/// `(m2 + 1) / 2 = (m + 1) / p`.
pub fn l2_equivalent_weight(p: f64, m: f64) -> f64 {
    2.0 * (m + 1.0) / p - 1.0
}

/// Probe `||xi^beta D^beta_xi F(lambda, xi)||` in `L^2_{m2}` for every
/// family, every `beta` in `{0,1}^N` (`N <= 2`) and every sample.
pub fn mikhlin_bound_scan(
    lambdas: &[C],
    xis: &[Vec<f64>],
    model: &ModelParams,
    grid: Arc<Grid>,
    seed: u64,
) -> Result<MikhlinReport> {
    let n = model.dimension();
    if n > 2 {
        return Err(invalid("dimension", "scans are limited to N <= 2"));
    }
    let weight = l2_equivalent_weight(model.p, model.m);
    let pieces = ModelPieces::new(model, grid.clone())?;
    let d = grid.mass(weight);
    let mut families = vec![Family::Resolvent, Family::Potential];
    families.extend((0..n).map(Family::Mixed));
    let betas: Vec<Vec<usize>> = (0..(1usize << n)).map(|mask| (0..n).filter(|i| mask >> i & 1 == 1).collect()).collect();
    let jobs: Vec<(usize, usize)> = (0..lambdas.len()).flat_map(|l| (0..xis.len()).map(move |x| (l, x))).collect();
    let rows: Vec<Vec<MikhlinRow>> = par::try_map_range(jobs.len(), |k| {
        let (li, xj) = jobs[k];
        let (lambda, xi) = (lambdas[li], &xis[xj]);
        let op = pieces.operator(xi);
        let mut out = Vec::new();
        for fam in &families {
            for beta in &betas {
                let top = TermOperator {
                    pieces: &pieces,
                    resolvent: op.resolvent(lambda).map_err(|e| with_mode(e, xi))?,
                    xi: xi.clone(),
                    terms: fam.terms(lambda, xi, beta),
                };
                let mut rng = probe::stream(seed, &format!("mikhlin/{}/{beta:?}/{li}/{xj}", fam.label()));
                let est = if top.terms.is_empty() {
                    0.0
                } else {
                    probe::operator_norm(|x| top.apply(x), |x| top.apply_adjoint(x, &d), &d, &mut rng, 16, 3)
                };
                out.push(MikhlinRow {
                    family: fam.label(),
                    beta: beta.clone(),
                    lambda_re: lambda.re,
                    lambda_im: lambda.im,
                    xi: xi.clone(),
                    estimate: est,
                });
            }
        }
        Ok::<_, Error>(out)
    })?;
    let rows: Vec<MikhlinRow> = rows.concat();
    let suprema = families
        .iter()
        .map(|f| {
            let l = f.label();
            let s = rows.iter().filter(|r| r.family == l).map(|r| r.estimate).fold(0.0, f64::max);
            (l, s)
        })
        .collect();
    Ok(MikhlinReport { weight, rows, suprema })
}

/// Log-spaced moduli in `[1e-2, 1e2]` times evenly spread arguments in
/// `(-theta, theta)`.
pub fn sector_samples(theta: f64, moduli: usize, args: usize) -> Vec<C> {
    let mut out = Vec::with_capacity(moduli * args);
    for i in 0..moduli {
        let r = 10f64.powf(-2.0 + 4.0 * i as f64 / (moduli.max(2) - 1) as f64);
        for k in 0..args {
            let phi = theta * (2.0 * (k as f64 + 0.5) / args as f64 - 1.0);
            out.push(C::from_polar(r, phi));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, XBox};

    #[test]
    fn pieces_rebuild_the_assembled_symbol() {
        let m = ModelParams::new(vec![0.4, -0.2], 0.5, 1.0, 0.5, 2.0).unwrap();
        let g = Arc::new(make_grid(32, 3.0, 1.5, None).unwrap());
        let pieces = ModelPieces::new(&m, g.clone()).unwrap();
        let xi = [1.3, -0.7];
        let a = pieces.operator(&xi);
        let b = assemble(&FormSpec::model_mode(&m, &xi), g).unwrap();
        let d = a.k.to_dense() - b.k.to_dense();
        assert!(d.iter().map(|v| v.norm()).fold(0.0, f64::max) < 1e-12);
    }

    #[test]
    fn zero_data_gives_zero() {
        let m = ModelParams::new(vec![0.3], 0.5, 1.0, 0.5, 2.0).unwrap();
        let g = Arc::new(make_grid(16, 2.0, 1.0, Some(XBox { length: 6.0, nx: 8, dim: 1 })).unwrap());
        let u = resolvent_nd(C::new(1.0, 0.0), &Field::zeros(g), &m).unwrap();
        assert_eq!(u.max_abs(), 0.0);
    }

    #[test]
    fn family_terms_expand_the_product_rule() {
        let xi = [2.0, 3.0];
        let l = C::new(1.0, 0.0);
        assert_eq!(Family::Resolvent.terms(l, &xi, &[0, 1]).len(), 2);
        // 2 xi_0 Y D_1 R + 2 xi_1 Y D_0 R + |xi|^2 Y D_01 R.
        assert_eq!(Family::Potential.terms(l, &xi, &[0, 1]).len(), 4);
        assert_eq!(Family::Mixed(0).terms(l, &xi, &[1]).len(), 1);
    }
}
