//! One-dimensional operators defined through their forms
//!
//! `a(u, v) = k int u' v' y^s + transport + sum_k c_k int u v y^(e_k)`
//!
//! in `L^2(y^mu dy)`, discretised with lumped nodal masses on the dual cells
//! of a cell-centred mesh. The operator is `M = -W^{-1} K`, where `K` is the
//! tridiagonal form matrix and `W` the diagonal mass. The Neumann condition
//! at `y = 0` is natural: no flux crosses the left end of the first dual cell.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::Grid;
use crate::jet::Profile;
use crate::linalg::{sturm_count, tridiag_eigenvalue, Tridiag, TridiagLu};
use crate::par;
use crate::params::{ModelParams, OperatorSpec};

type C = Complex64;

const I: C = C::new(0.0, 1.0);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportKind {
    /// `coeff * int u' conj(v) y^t`.
    Directional,
    /// `coeff * int (u conj(v))' y^t`; diagonal after summation by parts.
    Symmetric,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transport {
    pub coeff: C,
    pub exponent: f64,
    pub kind: TransportKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Potential {
    pub coeff: C,
    pub exponent: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    Bessel,
    Model,
    General,
    Auxiliary,
    ShiftedInverse,
    Custom,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryTag {
    NeumannForm,
    Oblique,
}

/// The continuous parameters an operator realises; unused entries are zero.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OpParams {
    pub c: f64,
    pub alpha: f64,
    pub a_dot_xi: f64,
    pub xi_sq: f64,
    pub beta: f64,
    pub b: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FormSpec {
    pub stiffness: f64,
    pub stiffness_exponent: f64,
    pub transport: Option<Transport>,
    pub potentials: Vec<Potential>,
    pub measure: f64,
    pub kind: OpKind,
    pub bc: BoundaryTag,
    pub params: OpParams,
}

impl FormSpec {
    /// `B = D_yy + (c/y) D_y` in `L^2_c`.
    pub fn bessel(c: f64) -> Self {
        Self {
            stiffness: 1.0,
            stiffness_exponent: c,
            transport: None,
            potentials: vec![],
            measure: c,
            kind: OpKind::Bessel,
            bc: BoundaryTag::NeumannForm,
            params: OpParams { c, ..Default::default() },
        }
    }

    /// Fourier symbol of the model operator at `xi`:
    /// `y^alpha (B + 2i a.xi D_y - |xi|^2)` in `L^2_{c-alpha}`.
    pub fn model_mode(m: &ModelParams, xi: &[f64]) -> Self {
        let adx: f64 = m.a.iter().zip(xi).map(|(a, x)| a * x).sum();
        let xi2: f64 = xi.iter().map(|x| x * x).sum();
        let c = m.c_bessel;
        let mut potentials = vec![];
        if xi2 != 0.0 {
            potentials.push(Potential { coeff: C::new(xi2, 0.0), exponent: c });
        }
        Self {
            stiffness: 1.0,
            stiffness_exponent: c,
            transport: (adx != 0.0).then_some(Transport {
                coeff: C::new(0.0, -2.0 * adx),
                exponent: c,
                kind: TransportKind::Directional,
            }),
            potentials,
            measure: c - m.alpha,
            kind: OpKind::Model,
            bc: BoundaryTag::NeumannForm,
            params: OpParams { c, alpha: m.alpha, a_dot_xi: adx, xi_sq: xi2, ..Default::default() },
        }
    }

    /// Fourier symbol of the full operator at `xi`, in `L^2(y^(c/gamma - alpha2))`.
    pub fn general_mode(spec: &OperatorSpec, xi: &[f64]) -> Self {
        let n = spec.dimension;
        let cp = spec.c_bessel();
        let beta = (spec.alpha1 - spec.alpha2) / 2.0;
        let qdx: f64 = spec.q_vector.iter().zip(xi).map(|(a, x)| a * x).sum();
        let bdx: f64 = spec.drift_b.iter().zip(xi).map(|(a, x)| a * x).sum();
        let mut xqx = 0.0;
        for i in 0..n {
            for j in 0..n {
                xqx += xi[i] * spec.q_matrix[i * n + j] * xi[j];
            }
        }
        let mut potentials = vec![];
        if xqx != 0.0 {
            potentials.push(Potential { coeff: C::new(xqx, 0.0), exponent: cp + 2.0 * beta });
        }
        if bdx != 0.0 {
            potentials.push(Potential { coeff: C::new(0.0, -bdx), exponent: cp - 1.0 });
        }
        Self {
            stiffness: spec.gamma,
            stiffness_exponent: cp,
            transport: (qdx != 0.0).then_some(Transport {
                coeff: C::new(0.0, -2.0 * qdx),
                exponent: cp + beta,
                kind: TransportKind::Directional,
            }),
            potentials,
            measure: cp - spec.alpha2,
            kind: OpKind::General,
            bc: if spec.has_oblique_drift() { BoundaryTag::Oblique } else { BoundaryTag::NeumannForm },
            params: OpParams {
                c: cp,
                alpha: spec.alpha2,
                a_dot_xi: qdx,
                xi_sq: xqx,
                beta,
                b: bdx,
            },
        }
    }

    /// `A_{b,beta} = B - i b (c+beta)/2 y^(beta-1) - (beta+1)^2 Q y^(2 beta)` in `L^2_c`.
    pub fn auxiliary(c: f64, beta: f64, b: f64, qa: f64) -> Self {
        let mut potentials = vec![];
        if qa != 0.0 {
            potentials.push(Potential {
                coeff: C::new((beta + 1.0).powi(2) * qa, 0.0),
                exponent: c + 2.0 * beta,
            });
        }
        Self {
            stiffness: 1.0,
            stiffness_exponent: c,
            transport: (b != 0.0).then_some(Transport {
                coeff: C::new(0.0, -b / 2.0),
                exponent: c + beta,
                kind: TransportKind::Symmetric,
            }),
            potentials,
            measure: c,
            kind: OpKind::Auxiliary,
            bc: BoundaryTag::NeumannForm,
            params: OpParams { c, beta, b, xi_sq: qa, ..Default::default() },
        }
    }

    /// `A_{b,beta}` for the model data `(a, xi)`: `b = 2 a.xi (beta+1)`, `Q = |xi|^2 - (a.xi)^2`.
    pub fn auxiliary_for(c: f64, beta: f64, a_dot_xi: f64, xi_sq: f64) -> Self {
        let mut f = Self::auxiliary(c, beta, 2.0 * a_dot_xi * (beta + 1.0), xi_sq - a_dot_xi * a_dot_xi);
        f.params.a_dot_xi = a_dot_xi;
        f
    }

    /// `L_{2a.xi} - |xi|^2 - lambda y^(-alpha)` in `L^2_c`, so that
    /// resolving it at 0 with data `f / y^alpha` is the second route to the
    /// model resolvent.
    pub fn shifted_inverse(m: &ModelParams, xi: &[f64], lambda: C) -> Self {
        let mut f = Self::model_mode(m, xi);
        f.measure = m.c_bessel;
        f.potentials.push(Potential { coeff: lambda, exponent: m.c_bessel - m.alpha });
        f.kind = OpKind::ShiftedInverse;
        f
    }

    /// The same form with every potential dropped.
    pub fn without_potentials(&self) -> Self {
        Self { potentials: vec![], ..self.clone() }
    }
}

/// Banded realisation of a form on a grid.
#[derive(Clone, Debug)]
pub struct DiscreteOperator {
    /// Form matrix: `a(u, e_i) = (K u)_i`.
    pub k: Tridiag,
    /// Nodal masses of the inner product.
    pub w: Vec<f64>,
    pub grid: Arc<Grid>,
    pub form: FormSpec,
}

/// Form matrix of `int u' conj(v) y^t`: element `e` contributes
/// `(u1 - u0) (y0^t v0 + y1^t v1) / 2`. Divided by the masses it is the
/// nodal approximation of `y^(t - mu) D_y`.
pub fn directional_matrix(grid: &Grid, t: f64) -> Tridiag {
    let y = &grid.y_nodes;
    let j = y.len();
    let mut k = Tridiag::zeros(j);
    for e in 0..j - 1 {
        let w0 = C::new(0.5 * y[e].powf(t), 0.0);
        let w1 = C::new(0.5 * y[e + 1].powf(t), 0.0);
        k.du[e] += w0;
        k.d[e] -= w0;
        k.d[e + 1] += w1;
        k.dl[e] -= w1;
    }
    k
}

/// Assemble the form on `grid`. Rejects `s <= -1`, where the form is not
/// closable with the Neumann condition.
pub fn assemble(form: &FormSpec, grid: Arc<Grid>) -> Result<DiscreteOperator> {
    let s = form.stiffness_exponent;
    if !(s > -1.0) {
        return Err(invalid("c", format!("need c > -1 for the Neumann form, got {s}")));
    }
    if !(form.stiffness > 0.0) {
        return Err(invalid("stiffness", "must be positive"));
    }
    let y = &grid.y_nodes;
    let j = y.len();
    let omega = grid.dual_weights();
    let mut k = Tridiag::zeros(j);

    for e in 0..j - 1 {
        let h = y[e + 1] - y[e];
        let kap = form.stiffness * 0.5 * (y[e].powf(s) + y[e + 1].powf(s)) / h;
        k.d[e] += kap;
        k.d[e + 1] += kap;
        k.du[e] -= kap;
        k.dl[e] -= kap;
    }

    if let Some(t) = form.transport {
        match t.kind {
            TransportKind::Directional => {
                let u = directional_matrix(&grid, t.exponent);
                for i in 0..j {
                    k.d[i] += t.coeff * u.d[i];
                    if i + 1 < j {
                        k.du[i] += t.coeff * u.du[i];
                        k.dl[i] += t.coeff * u.dl[i];
                    }
                }
            }
            TransportKind::Symmetric => {
                // int (u v)' y^t = sum_j u_j v_j (tau_{j-1/2} - tau_{j+1/2}),
                // with tau the weight at the dual-cell edges and no flux at 0.
                let tau = |edge: usize| -> f64 {
                    if edge == 0 {
                        0.0
                    } else if edge == j {
                        grid.y_max.powf(t.exponent)
                    } else {
                        (0.5 * (y[edge - 1] + y[edge])).powf(t.exponent)
                    }
                };
                for i in 0..j {
                    k.d[i] += t.coeff * (tau(i) - tau(i + 1));
                }
            }
        }
    }

    for p in &form.potentials {
        for i in 0..j {
            k.d[i] += p.coeff * y[i].powf(p.exponent) * omega[i];
        }
    }

    let w = grid.mass(form.measure);
    Ok(DiscreteOperator { k, w, grid, form: form.clone() })
}

/// Assemble the model symbol at `xi`, rejecting parameters outside the window.
pub fn assemble_model(m: &ModelParams, xi: &[f64], grid: Arc<Grid>) -> Result<DiscreteOperator> {
    let w = m.window();
    if !w.pass {
        return Err(Error::Window(format!("need {} < (m+1)/p = {} < {}", w.lower, w.value, w.upper)));
    }
    assemble(&FormSpec::model_mode(m, xi), grid)
}

impl DiscreteOperator {
    pub fn j(&self) -> usize {
        self.w.len()
    }

    /// `M = -W^{-1} K` as a tridiagonal matrix.
    pub fn matrix(&self) -> Tridiag {
        let mut m = self.k.clone();
        let n = self.j();
        for i in 0..n {
            let s = -1.0 / self.w[i];
            m.d[i] *= s;
            if i + 1 < n {
                m.du[i] *= s;
                m.dl[i] *= -1.0 / self.w[i + 1];
            }
        }
        m
    }

    /// `M u`.
    pub fn apply(&self, u: &[C]) -> Vec<C> {
        self.k.matvec(u).into_iter().zip(&self.w).map(|(v, w)| -v / *w).collect()
    }

    /// Adjoint of `M` in the weighted product: `-W^{-1} K^H`.
    pub fn apply_adjoint(&self, u: &[C]) -> Vec<C> {
        self.k.matvec_h(u).into_iter().zip(&self.w).map(|(v, w)| -v / *w).collect()
    }

    /// `<u, v>_w`.
    pub fn inner(&self, u: &[C], v: &[C]) -> C {
        u.iter().zip(v).zip(&self.w).map(|((a, b), w)| a * b.conj() * *w).sum()
    }

    pub fn norm(&self, u: &[C]) -> f64 {
        u.iter().zip(&self.w).map(|(a, w)| a.norm_sqr() * w).sum::<f64>().sqrt()
    }

    /// The discrete form `a(u, v) = <K u, v>`.
    pub fn form_value(&self, u: &[C], v: &[C]) -> C {
        self.k.matvec(u).iter().zip(v).map(|(a, b)| a * b.conj()).sum()
    }

    /// `||K - K^H|| / ||K||` in the Frobenius norm; zero iff `M` is
    /// self-adjoint in the weighted product.
    pub fn self_adjoint_defect(&self) -> f64 {
        let k = &self.k;
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..self.j() {
            num += (k.d[i] - k.d[i].conj()).norm_sqr();
            den += k.d[i].norm_sqr();
            if i + 1 < self.j() {
                num += 2.0 * (k.du[i] - k.dl[i].conj()).norm_sqr();
                den += k.du[i].norm_sqr() + k.dl[i].norm_sqr();
            }
        }
        (num / den.max(f64::MIN_POSITIVE)).sqrt()
    }

    fn symmetric_scaled(&self, part: impl Fn(C, C) -> C) -> (Vec<C>, Vec<C>) {
        // Entries of W^{-1/2} P W^{-1/2} for P = part(K, K^H).
        let n = self.j();
        let k = &self.k;
        let d = (0..n).map(|i| part(k.d[i], k.d[i].conj()) / self.w[i]).collect();
        let e = (0..n.saturating_sub(1))
            .map(|i| part(k.du[i], k.dl[i].conj()) / (self.w[i] * self.w[i + 1]).sqrt())
            .collect();
        (d, e)
    }

    /// Largest eigenvalue of `M` when it is self-adjoint, via bisection on
    /// the symmetric scaling. `None` if `K` is not Hermitian.
    pub fn spectral_top(&self) -> Option<f64> {
        if self.self_adjoint_defect() > 1e-12 {
            return None;
        }
        let (d, e) = self.symmetric_scaled(|a, _| a);
        let d: Vec<f64> = d.iter().map(|v| v.re).collect();
        let e: Vec<f64> = e.iter().map(|v| v.norm()).collect();
        Some(-tridiag_eigenvalue(&d, &e, 0))
    }

    /// True when no eigenvalue of `M` exceeds `tol`; an inertia count.
    pub fn spectrum_below(&self, tol: f64) -> Option<bool> {
        if self.self_adjoint_defect() > 1e-12 {
            return None;
        }
        let (d, e) = self.symmetric_scaled(|a, _| a);
        let d: Vec<f64> = d.iter().map(|v| v.re).collect();
        let e: Vec<f64> = e.iter().map(|v| v.norm()).collect();
        Some(sturm_count(&d, &e, -tol) == 0)
    }

    /// Half-angle of the smallest sector around the positive axis that
    /// contains the numerical range of `-M`, i.e. `arctan max |Im a| / Re a`.
    /// Returns `pi/2` when the form is not accretive.
    pub fn numerical_sector(&self) -> f64 {
        let (re_d, re_e) = self.symmetric_scaled(|a, b| (a + b) * 0.5);
        let (im_d, im_e) = self.symmetric_scaled(|a, b| (a - b) / (2.0 * I));
        let n = self.j();
        let scale = re_d.iter().map(|v| v.re.abs()).fold(0.0, f64::max).max(1e-300);
        let reg = 1e-13 * scale;
        // Inertia of H - mu (S + reg): Hermitian tridiagonal, so the
        // LDL^H pivots are real and only |off-diagonal|^2 enters.
        let count_neg = |mu: f64| -> usize {
            let d: Vec<f64> = (0..n).map(|i| im_d[i].re - mu * (re_d[i].re + reg)).collect();
            let e: Vec<f64> = (0..n.saturating_sub(1)).map(|i| (im_e[i] - mu * re_e[i]).norm()).collect();
            sturm_count(&d, &e, 0.0)
        };
        // S must be positive semidefinite for a sector to exist.
        let s_d: Vec<f64> = re_d.iter().map(|v| v.re + reg).collect();
        let s_e: Vec<f64> = re_e.iter().map(|v| v.norm()).collect();
        if sturm_count(&s_d, &s_e, 0.0) > 0 {
            return PI / 2.0;
        }
        // Largest |mu| with H v = mu S v; bracket then bisect on both ends.
        let extreme = |sign: f64| -> f64 {
            // sign > 0: largest mu, i.e. smallest mu with count_neg(mu) == n.
            let mut lo = 0.0;
            let mut hi = 1.0;
            let done = |mu: f64| if sign > 0.0 { count_neg(mu) == n } else { count_neg(-mu) == 0 };
            let mut iters = 0;
            while !done(hi) && iters < 200 {
                lo = hi;
                hi *= 2.0;
                iters += 1;
            }
            if iters == 200 {
                return f64::INFINITY;
            }
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if done(mid) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            hi
        };
        extreme(1.0).max(extreme(-1.0)).atan()
    }

    /// Factor `lambda W + K` for repeated solves of `(lambda - M) u = f`.
    pub fn resolvent(&self, lambda: C) -> Result<Resolvent<'_>> {
        let a = self.k.shifted(lambda, &self.w);
        let singular = |detail: String| Error::Singular { lambda, detail };
        let lu = a.factor().ok_or_else(|| singular(format!("zero pivot ({:?})", self.form.params)))?;
        let cond = a.norm1() * lu.inverse_norm1_estimate();
        if !(cond <= 1e14) {
            return Err(singular(format!("condition estimate {cond:e} ({:?})", self.form.params)));
        }
        Ok(Resolvent { op: self, a, lu, lambda, cond })
    }

    /// Solve `(lambda - M) u = f`.
    pub fn resolve(&self, lambda: C, f: &[C]) -> Result<Vec<C>> {
        self.resolvent(lambda)?.solve(f)
    }
}

/// A factored `(lambda - M)`.
pub struct Resolvent<'a> {
    op: &'a DiscreteOperator,
    a: Tridiag,
    lu: TridiagLu,
    pub lambda: C,
    pub cond: f64,
}

impl Resolvent<'_> {
    /// `u = (lambda - M)^{-1} f`, with one step of refinement when the
    /// weighted residual exceeds `1e-12`. Errors if it stays above `1e-8`.
    pub fn solve(&self, f: &[C]) -> Result<Vec<C>> {
        let w = &self.op.w;
        let rhs: Vec<C> = f.iter().zip(w).map(|(v, w)| v * *w).collect();
        let mut u = self.lu.solve(&rhs);
        let fnorm = self.op.norm(f);
        if fnorm == 0.0 {
            return Ok(u);
        }
        for pass in 0..2 {
            let r: Vec<C> = self.a.matvec(&u).iter().zip(&rhs).map(|(a, b)| b - a).collect();
            let rw: Vec<C> = r.iter().zip(w).map(|(v, w)| v / *w).collect();
            let rel = self.op.norm(&rw) / fnorm;
            if rel <= 1e-12 {
                break;
            }
            if pass == 1 && rel > 1e-8 {
                return Err(Error::Singular {
                    lambda: self.lambda,
                    detail: format!("residual {rel:e} after refinement"),
                });
            }
            let du = self.lu.solve(&r);
            u.iter_mut().zip(du).for_each(|(a, b)| *a += b);
        }
        Ok(u)
    }

    /// Without the residual check; for inner loops where it was verified once.
    pub fn solve_fast(&self, f: &[C]) -> Vec<C> {
        let rhs: Vec<C> = f.iter().zip(&self.op.w).map(|(v, w)| v * *w).collect();
        self.lu.solve(&rhs)
    }

    /// Adjoint of the resolvent in the operator's own product:
    /// `(conj(lambda) W + K^H)^{-1} W`.
    pub fn solve_adjoint(&self, f: &[C]) -> Vec<C> {
        let rhs: Vec<C> = f.iter().zip(&self.op.w).map(|(v, w)| v * *w).collect();
        self.lu.solve_h(&rhs)
    }

    /// Adjoint of the resolvent in the product with nodal weights `d`:
    /// `D^{-1} W (conj(lambda) W + K^H)^{-1} D`.
    pub fn solve_adjoint_in(&self, f: &[C], d: &[f64]) -> Vec<C> {
        let rhs: Vec<C> = f.iter().zip(d).map(|(v, d)| v * *d).collect();
        let mut x = self.lu.solve_h(&rhs);
        x.iter_mut().zip(&self.op.w).zip(d).for_each(|((x, w), d)| *x *= *w / *d);
        x
    }
}

/// Kernel of `e^{zM}` against the measure `rho^mu d rho` on the grid nodes.
#[derive(Clone, Debug)]
pub struct Kernel1D {
    pub z: C,
    pub values: DMatrix<C>,
    pub measure_exponent: f64,
    pub grid: Arc<Grid>,
}

impl Kernel1D {
    pub fn write_csv(&self, path: &Path, stride: usize) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["t_re", "t_im", "y", "rho", "re", "im"])?;
        let y = &self.grid.y_nodes;
        let s = stride.max(1);
        for i in (0..y.len()).step_by(s) {
            for j in (0..y.len()).step_by(s) {
                let v = self.values[(i, j)];
                w.write_record(&[
                    format!("{:.17e}", self.z.re),
                    format!("{:.17e}", self.z.im),
                    format!("{:.17e}", y[i]),
                    format!("{:.17e}", y[j]),
                    format!("{:.17e}", v.re),
                    format!("{:.17e}", v.im),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Nodes and weights of the hyperbolic contour for `e^{tM}` when the
/// spectrum of `M` lies in `{|arg(-lambda)| <= delta}`.
#[derive(Clone, Debug)]
pub struct Contour {
    pub nodes: Vec<C>,
    pub weights: Vec<C>,
}

impl Contour {
    /// Hyperbola `mu (1 + sin(i theta - a))` with step and length chosen so
    /// that both the discretisation and the truncation error are below
    /// `e^{-ln_tol}`, minimising the number of nodes.
    pub fn new(t: f64, delta: f64, ln_tol: f64) -> Result<Self> {
        let room = PI / 2.0 - delta;
        if !(room > 1e-3) || !(t > 0.0) {
            return Err(Error::OutsideSector(C::new(t, 0.0)));
        }
        let delta_c = delta + (0.2f64).min(room / 3.0);
        let a = (PI / 2.0 - delta_c) / 2.0;
        let d = 0.95 * a;
        let plan = |x: f64| {
            let h = 2.0 * PI * d / (x * (1.0 - (a - d).sin()) + ln_tol);
            let arg = (1.0 + ln_tol / x) / a.sin();
            let n = (arg.acosh() / h).ceil() as usize;
            (n, h)
        };
        let mut best = (usize::MAX, 0.0, 0.0);
        for k in 0..=120 {
            let x = 10f64.powf(-1.0 + 4.0 * k as f64 / 120.0);
            let (n, h) = plan(x);
            if n < best.0 {
                best = (n, h, x);
            }
        }
        let (n, h, x) = best;
        let mu = x / t;
        let mut nodes = Vec::with_capacity(2 * n + 1);
        let mut weights = Vec::with_capacity(2 * n + 1);
        for k in -(n as i64)..=(n as i64) {
            let th = k as f64 * h;
            let arg = C::new(-a, th);
            let z = mu * (C::new(1.0, 0.0) + arg.sin());
            let dz = I * mu * arg.cos();
            nodes.push(z);
            weights.push((t * z).exp() * dz * h / (2.0 * PI * I));
        }
        Ok(Self { nodes, weights })
    }
}

/// `e^{zM}` as a dense matrix by contour quadrature of the resolvent.
/// Each column costs one tridiagonal solve per contour node.
pub fn expm(op: &DiscreteOperator, z: C) -> Result<DMatrix<C>> {
    let n = op.j();
    if z == C::new(0.0, 0.0) {
        return Ok(DMatrix::identity(n, n));
    }
    if !(z.re > 0.0) {
        return Err(Error::OutsideSector(z));
    }
    let phi = z.arg();
    let delta = op.numerical_sector();
    if delta + phi.abs() >= PI / 2.0 - 1e-3 {
        return Err(Error::OutsideSector(z));
    }
    let contour = Contour::new(z.norm(), delta + phi.abs(), (1e12f64).ln())?;
    // e^{|z| e^{i phi} M}: rotate the contour node instead of the operator.
    let rot = C::from_polar(1.0, -phi);
    let factors: Vec<(TridiagLu, C)> = contour
        .nodes
        .iter()
        .zip(&contour.weights)
        .map(|(zk, wk)| {
            let lam = zk * rot;
            let lu = op
                .k
                .shifted(lam, &op.w)
                .factor()
                .ok_or(Error::Singular { lambda: lam, detail: "contour node".into() })?;
            Ok((lu, wk * rot))
        })
        .collect::<Result<_>>()?;
    let cols = par::map_range(n, |j| {
        let mut col = vec![C::new(0.0, 0.0); n];
        let mut e = vec![C::new(0.0, 0.0); n];
        for (lu, wk) in &factors {
            e.iter_mut().for_each(|v| *v = C::new(0.0, 0.0));
            e[j] = C::new(op.w[j], 0.0);
            lu.solve_in_place(&mut e);
            col.iter_mut().zip(&e).for_each(|(c, v)| *c += wk * v);
        }
        col
    });
    Ok(DMatrix::from_fn(n, n, |i, j| cols[j][i]))
}

/// Dense scaling-and-squaring exponential of `zM`; the oracle for [`expm`].
pub fn expm_dense(op: &DiscreteOperator, z: C) -> Result<DMatrix<C>> {
    if op.j() > 512 {
        return Err(Error::Grid(format!("dense exponential capped at J = 512, got {}", op.j())));
    }
    Ok((op.matrix().to_dense() * z).exp())
}

/// Kernel of `e^{zM}` against the operator's measure.
pub fn expm_kernel(op: &DiscreteOperator, z: C) -> Result<Kernel1D> {
    let e = expm(op, z)?;
    let n = op.j();
    let values = DMatrix::from_fn(n, n, |i, j| e[(i, j)] / op.w[j]);
    Ok(Kernel1D { z, values, measure_exponent: op.form.measure, grid: op.grid.clone() })
}

/// Shape of a kernel upper bound `C P(t, y, rho) exp(-X(t, y, rho) / kappa)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case")]
pub enum BoundProfile {
    /// `t^{-1/2} rho^{-c} (rho/sqrt(t) ^ 1)^c`, `X = |y - rho|^2 / t`.
    Gaussian { c: f64 },
    /// `t^{-1/2} rho^{-alpha/2} (rho / t^{1/(2-alpha)} ^ 1)^e`,
    /// `X = |y^{1-alpha/2} - rho^{1-alpha/2}|^2 / t`.
    Degenerate { alpha: f64, exponent: f64 },
}

impl BoundProfile {
    fn eval(&self, t: f64, y: f64, rho: f64) -> (f64, f64) {
        match *self {
            BoundProfile::Gaussian { c } => {
                let p = t.powf(-0.5) * rho.powf(-c) * (rho / t.sqrt()).min(1.0).powf(c);
                (p, (y - rho).powi(2) / t)
            }
            BoundProfile::Degenerate { alpha, exponent } => {
                let s = 1.0 - alpha / 2.0;
                let p = t.powf(-0.5)
                    * rho.powf(-alpha / 2.0)
                    * (rho / t.powf(1.0 / (2.0 - alpha))).min(1.0).powf(exponent);
                (p, (y.powf(s) - rho.powf(s)).powi(2) / t)
            }
        }
    }
}

/// Fitted `(C, kappa)` of a kernel bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelFit {
    pub constant: f64,
    pub kappa: f64,
    pub samples: usize,
}

impl KernelFit {
    pub fn is_finite(&self) -> bool {
        self.constant.is_finite() && self.kappa.is_finite() && self.constant > 0.0 && self.kappa > 0.0
    }
}

/// Node indices with `y <= y_cut`, thinned to at most `count`.
pub fn sample_nodes(grid: &Grid, y_cut: f64, count: usize) -> Vec<usize> {
    let inside: Vec<usize> = (0..grid.j()).filter(|&i| grid.y_nodes[i] <= y_cut).collect();
    let stride = inside.len().div_ceil(count.max(1)).max(1);
    inside.into_iter().step_by(stride).collect()
}

/// Fit `ln(|p| / P) <= ln C - X / kappa` over the samples of several kernels.
/// The line is the support line of the upper convex hull of the points
/// `(X, ln(|p|/P))` at the mean `X`. Samples below `1e-8` of each kernel's
/// peak are ignored.
pub fn fit_kernel_bound(kernels: &[(f64, &Kernel1D)], idx: &[usize], profile: BoundProfile) -> KernelFit {
    let mut pts = Vec::new();
    for (t, k) in kernels {
        let y = &k.grid.y_nodes;
        let peak = idx
            .iter()
            .flat_map(|&i| idx.iter().map(move |&j| (i, j)))
            .map(|(i, j)| k.values[(i, j)].norm())
            .fold(0.0, f64::max);
        for &i in idx {
            for &j in idx {
                let v = k.values[(i, j)].norm();
                if v < 1e-8 * peak || v == 0.0 {
                    continue;
                }
                let (p, x) = profile.eval(*t, y[i], y[j]);
                pts.push((x, (v / p).ln()));
            }
        }
    }
    let samples = pts.len();
    if samples < 2 {
        return KernelFit { constant: f64::NAN, kappa: f64::NAN, samples };
    }
    let xbar = pts.iter().map(|p| p.0).sum::<f64>() / samples as f64;
    let (slope, intercept) = support_line(&mut pts, xbar);
    let kappa = if slope < 0.0 { -1.0 / slope } else { f64::INFINITY };
    KernelFit { constant: intercept.exp(), kappa, samples }
}

/// Support line at `x0` of the upper convex hull of `pts`.
fn support_line(pts: &mut [(f64, f64)], x0: f64) -> (f64, f64) {
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut hull: Vec<(f64, f64)> = Vec::new();
    for &p in pts.iter() {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    // Keep the highest point per abscissa.
    hull.dedup_by(|b, a| {
        if a.0 == b.0 {
            a.1 = a.1.max(b.1);
            true
        } else {
            false
        }
    });
    if hull.len() == 1 {
        return (0.0, hull[0].1);
    }
    let seg = hull
        .windows(2)
        .position(|w| w[0].0 <= x0 && x0 <= w[1].0)
        .unwrap_or(if x0 < hull[0].0 { 0 } else { hull.len() - 2 });
    let (a, b) = (hull[seg], hull[seg + 1]);
    let slope = (b.1 - a.1) / (b.0 - a.0);
    (slope, a.1 - slope * a.0)
}

/// Largest `(|p| - q) / max q` over the sample, where `q` is the dominating kernel.
pub fn domination_excess(p: &Kernel1D, q: &Kernel1D, idx: &[usize]) -> f64 {
    let mut peak: f64 = 0.0;
    let mut worst = f64::NEG_INFINITY;
    for &i in idx {
        for &j in idx {
            peak = peak.max(q.values[(i, j)].re);
            worst = worst.max(p.values[(i, j)].norm() - q.values[(i, j)].re);
        }
    }
    worst / peak
}

/// Discrepancy report for the similarity between the model symbol and the
/// conjugated auxiliary operator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub j: usize,
    pub beta: f64,
    pub c_tilde: f64,
    pub b_tilde: f64,
    /// Max over panel pairs of `|<(lhs - rhs) u, w>| / (|<lhs u, u>| |<lhs w, w>|)^{1/2}`.
    pub discrepancy: f64,
    /// Max over the panel of `||(lhs - rhs) u|| / ||lhs u||` in `L^2_{c-alpha}`.
    /// Only expected to vanish when `c + alpha > 1`: the conjugated side
    /// carries `y^{beta-1}` terms that cancel in the limit alone.
    pub strong_discrepancy: f64,
}

/// Exponent `beta = alpha / (2 - alpha)` and `c~ = (2c - alpha)/(2 - alpha)`.
pub fn equivalence_parameters(alpha: f64, c: f64) -> (f64, f64) {
    (alpha / (2.0 - alpha), (2.0 * c - alpha) / (2.0 - alpha))
}

/// Apply `y^alpha L_{2a.xi} - |xi|^2 y^alpha` on `grid` and
/// `(T S) [(beta+1)^{-2} A~] (T S)^{-1}` on the matched grid with nodes
/// `y^{1 - alpha/2}`, to every profile of `panel`, and compare both tested
/// against the panel and in norm.
pub fn equivalence_transform_check(
    m: &ModelParams,
    xi: &[f64],
    grid: Arc<Grid>,
    panel: &[Profile],
) -> Result<EquivalenceReport> {
    let (alpha, c) = (m.alpha, m.c_bessel);
    if !(c + 1.0 - alpha > 0.0) {
        return Err(invalid("c", "equivalence needs c + 1 - alpha > 0"));
    }
    let (beta, c_t) = equivalence_parameters(alpha, c);
    let k = beta + 1.0;
    let lhs_op = assemble(&FormSpec::model_mode(m, xi), grid.clone())?;
    let adx = lhs_op.form.params.a_dot_xi;
    let xi2 = lhs_op.form.params.xi_sq;
    let src = Arc::new(grid.power_image(1.0 / k)?);
    let aux = assemble(&FormSpec::auxiliary_for(c_t, beta, adx, xi2), src)?;
    let y = &grid.y_nodes;

    let us: Vec<Vec<C>> = panel.iter().map(|p| y.iter().map(|&t| C::new(p.value(t), 0.0)).collect()).collect();
    // (T S)^{-1} u at s_j = y_j^{1/k} is e^{i a.xi y_j} u(y_j), up to the
    // normalisation of T, which contributes the factor k below.
    let vs: Vec<Vec<C>> = us
        .iter()
        .map(|u| u.iter().zip(y).map(|(u, &t)| u * C::from_polar(1.0, adx * t)).collect())
        .collect();
    let lhs: Vec<Vec<C>> = us.iter().map(|u| lhs_op.k.matvec(u)).collect();
    let rhs: Vec<Vec<C>> = vs.iter().map(|v| aux.k.matvec(v)).collect();
    let pair = |a: &[C], b: &[C]| -> C { a.iter().zip(b).map(|(a, b)| a * b.conj()).sum() };
    let mut weak: f64 = 0.0;
    for i in 0..us.len() {
        for j in 0..us.len() {
            let l = pair(&lhs[i], &us[j]);
            let r = pair(&rhs[i], &vs[j]) / k;
            let s = (pair(&lhs[i], &us[i]).norm() * pair(&lhs[j], &us[j]).norm()).sqrt();
            weak = weak.max((l - r).norm() / s.max(f64::MIN_POSITIVE));
        }
    }
    let mut strong: f64 = 0.0;
    for (u, v) in us.iter().zip(&vs) {
        let l = lhs_op.apply(u);
        let r: Vec<C> = aux
            .apply(v)
            .iter()
            .zip(y)
            .map(|(w, &t)| w * C::from_polar(1.0, -adx * t) / (k * k))
            .collect();
        let d: Vec<C> = l.iter().zip(&r).map(|(a, b)| a - b).collect();
        strong = strong.max(lhs_op.norm(&d) / lhs_op.norm(&l).max(f64::MIN_POSITIVE));
    }
    Ok(EquivalenceReport {
        j: grid.j(),
        beta,
        c_tilde: c_t,
        b_tilde: 2.0 * adx * k,
        discrepancy: weak,
        strong_discrepancy: strong,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;

    fn grid(j: usize, y: f64, g: f64) -> Arc<Grid> {
        Arc::new(make_grid(j, y, g, None).unwrap())
    }

    #[test]
    fn neumann_laplacian_stencil() {
        let op = assemble(&FormSpec::bessel(0.0), grid(16, 1.0, 1.0)).unwrap();
        let m = op.matrix();
        for i in 1..15 {
            let s = m.dl[i - 1] + m.d[i] + m.du[i];
            assert!(s.norm() < 1e-10);
            assert!((m.d[i].re + 2.0 * 256.0).abs() < 1e-9);
        }
    }

    #[test]
    fn constants_only_see_the_potential() {
        let g = grid(32, 2.0, 1.5);
        let f = FormSpec::auxiliary_for(0.5, 0.3, 0.0, 2.0);
        let op = assemble(&f, g.clone()).unwrap();
        let u = vec![C::new(1.0, 0.0); 32];
        let mu = op.apply(&u);
        for (i, &y) in g.y_nodes.iter().enumerate() {
            let expect = -(1.3f64).powi(2) * 2.0 * y.powf(0.6) * y.powf(0.5) / y.powf(0.5);
            assert!((mu[i].re - expect).abs() < 1e-10 * expect.abs().max(1.0));
        }
    }

    #[test]
    fn rejects_dirichlet_regime() {
        assert!(assemble(&FormSpec::bessel(-1.0), grid(16, 1.0, 1.0)).is_err());
    }

    #[test]
    fn contour_matches_dense_exponential() {
        let g = grid(48, 3.0, 1.0);
        let m = ModelParams::new(vec![0.5], 0.4, 1.0, 0.5, 2.0).unwrap();
        let op = assemble(&FormSpec::model_mode(&m, &[1.5]), g).unwrap();
        for z in [C::new(0.05, 0.0), C::new(0.3, 0.1), C::new(1.0, 0.0)] {
            let a = expm(&op, z).unwrap();
            let b = expm_dense(&op, z).unwrap();
            let err = (&a - &b).iter().map(|v| v.norm()).fold(0.0, f64::max);
            assert!(err < 1e-8, "z={z} err={err}");
        }
    }

    #[test]
    fn numerical_sector_of_auxiliary_approaches_paper_bound() {
        for a in [0.3f64, 0.7] {
            let bound = (a / (1.0 - a * a).sqrt()).atan();
            let excess: Vec<f64> = [64, 256]
                .iter()
                .map(|&j| {
                    let op = assemble(&FormSpec::auxiliary_for(1.0, 0.5, a * 2.0, 4.0), grid(j, 4.0, 1.0)).unwrap();
                    op.numerical_sector() - bound
                })
                .collect();
            eprintln!("a={a} excess {excess:?}");
            assert!(excess[1] < 1e-3 && excess[1] <= excess[0].max(1e-6), "a={a} excess {excess:?}");
        }
    }

    #[test]
    fn support_line_on_a_parabola() {
        let mut pts: Vec<(f64, f64)> = (0..11).map(|i| (i as f64, -(i as f64) * 0.5)).collect();
        pts.push((3.0, -10.0));
        let (s, b) = support_line(&mut pts, 4.0);
        assert!((s + 0.5).abs() < 1e-14 && b.abs() < 1e-14);
    }
}
