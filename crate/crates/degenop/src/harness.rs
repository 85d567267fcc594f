//! The estimate-verification suite.
//!
//! Every check in [`registry`] turns one estimate into numbers. Checks whose
//! constant exists but has no explicit value are run at several refinement
//! levels and pass when the fitted constant is finite, drifts by at most
//! [`STABILITY_BAND`] between the last two levels, and a companion run just
//! outside the admissibility window does not pass (its values or probe
//! norms diverge under refinement). Checks with explicit tolerances pass or
//! fail on those alone.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bessel1d::{
    assemble, domination_excess, equivalence_transform_check, expm_kernel, fit_kernel_bound, sample_nodes, BoundProfile,
    FormSpec,
};
use crate::error::{invalid, Error, Result};
use crate::grid::{default_grading, lp_norm, make_grid, Field, Grid, XBox};
use crate::jet::profile_panel;
use crate::multiplier::{
    derived_multipliers_unchecked, l2_equivalent_weight, mikhlin_bound_scan, sector_samples, xi_derivative_check, Family,
    ModeOperators, ModelPieces, TermOperator,
};
use crate::par;
use crate::params::{beta_map, compose_beta, inverse_beta, reduce_to_model, shear_map, window, ModelParams, OperatorSpec, SpaceSpec};
use crate::probe::{boundary_scales, bump, operator_norm, stream};
use crate::semigroup::{
    contraction_check, domination_check, evolve, maximal_regularity_check, uniform_times, Forcing, Scheme,
};
use crate::transforms::{apply_phase, apply_power_onto, apply_shear, power_source_grid, shear_conjugation_check, similarity_check_power, tensor_panel};

type C = Complex64;

/// Largest relative change of a fitted constant between the last two levels.
pub const STABILITY_BAND: f64 = 0.2;
/// A sequence diverges when every refinement multiplies it by at least this...
pub const GROWTH_STEP: f64 = 1.1;
/// ...or when it grows by more than this overall.
pub const GROWTH_TOTAL: f64 = 3.0;
/// Spectral parameter of the a priori probes. Small enough that `lambda u`
/// does not mask the second-order terms.
pub const APRIORI_LAMBDA: f64 = 1e-2;
/// Distance from the window edge of the negative-control runs.
pub const CONTROL_OFFSET: f64 = 0.2;
/// Coarsest level accepted for window-dependent checks.
pub const MIN_SCALED_LEVEL: usize = 128;

/// `|v_last - v_prev| / |v_prev|`; infinite if anything is not finite.
pub fn drift(values: &[f64]) -> f64 {
    if values.iter().any(|v| !v.is_finite()) {
        return f64::INFINITY;
    }
    match values {
        [.., a, b] => (b - a).abs() / a.abs().max(f64::MIN_POSITIVE),
        _ => 0.0,
    }
}

/// True when a refinement sequence blows up: a non-finite entry, growth by
/// [`GROWTH_STEP`] at every level, or by [`GROWTH_TOTAL`] overall.
pub fn diverges(values: &[f64]) -> bool {
    if values.iter().any(|v| !v.is_finite()) {
        return true;
    }
    if values.len() < 2 {
        return false;
    }
    let steady = values.windows(2).all(|w| w[1] >= GROWTH_STEP * w[0]);
    steady || values[values.len() - 1] > GROWTH_TOTAL * values[0]
}

/// Fixed-width scientific notation, so reruns produce identical bytes.
pub fn num(x: f64) -> String {
    format!("{x:.9e}")
}

/// A CSV payload: header plus already formatted rows.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: vec![] }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// The out-of-window companion of a window-dependent check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlRun {
    pub m: f64,
    pub window_value: f64,
    pub levels: Vec<usize>,
    pub values: Vec<f64>,
    pub probe_norms: Vec<f64>,
    /// The control did not pass: it diverged or a level failed outright.
    pub failed: bool,
    pub note: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub estimate_id: String,
    pub anchor: String,
    pub parameters: BTreeMap<String, f64>,
    pub levels: Vec<usize>,
    pub values: Vec<f64>,
    /// The fitted constant: the largest value over the levels, or the
    /// headline error of a check with an explicit tolerance.
    pub constant: f64,
    pub drift: f64,
    pub control: Option<ControlRun>,
    pub pass: bool,
    pub detail: String,
    pub csv: Option<PathBuf>,
    #[serde(skip)]
    pub table: Table,
}

fn default_model() -> ModelParams {
    ModelParams { a: vec![0.0], alpha: 0.0, c_bessel: 0.0, m: 0.0, p: 2.0 }
}
fn default_checks() -> Vec<String> {
    registry().iter().map(|c| c.id.to_string()).collect()
}
fn default_levels() -> Vec<usize> {
    vec![128, 256]
}
fn default_y_max() -> f64 {
    4.0
}
fn default_nx() -> usize {
    8
}
fn default_box() -> f64 {
    8.0
}
fn default_seed() -> u64 {
    20240601
}

/// What to run and on which model. Checks with fixed panels ignore `model`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    #[serde(default = "default_model")]
    pub model: ModelParams,
    #[serde(default = "default_checks")]
    pub checks: Vec<String>,
    /// Refinement levels `J` of the window-dependent checks, increasing.
    #[serde(default = "default_levels")]
    pub levels: Vec<usize>,
    #[serde(default = "default_y_max")]
    pub y_max: f64,
    #[serde(default = "default_nx")]
    pub nx: usize,
    #[serde(default = "default_box")]
    pub box_length: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            model: default_model(),
            checks: default_checks(),
            levels: default_levels(),
            y_max: default_y_max(),
            nx: default_nx(),
            box_length: default_box(),
            seed: default_seed(),
        }
    }
}

impl SuiteConfig {
    pub fn validate(&self) -> Result<()> {
        ModelParams::new(self.model.a.clone(), self.model.alpha, self.model.c_bessel, self.model.m, self.model.p)?;
        if self.model.a.is_empty() || self.model.a.len() > 2 {
            return Err(invalid("model.a", "the suite runs in dimension 1 or 2"));
        }
        if self.levels.len() < 2 || self.levels.windows(2).any(|w| w[1] <= w[0]) || self.levels[0] < 16 {
            return Err(invalid("levels", "need at least two increasing levels, all >= 16"));
        }
        if !(self.y_max > 0.0) || !(self.box_length > 0.0) || self.nx < 4 {
            return Err(invalid("y_max", "need y_max > 0, box_length > 0 and nx >= 4"));
        }
        let known = registry();
        for id in &self.checks {
            match known.iter().find(|c| c.id == id) {
                None => return Err(invalid("checks", format!("unknown check `{id}`"))),
                // Below this the out-of-window controls grow too slowly per
                // doubling to separate from the in-window runs.
                Some(c) if c.window_dependent() && self.levels[0] < MIN_SCALED_LEVEL => {
                    return Err(invalid(
                        "levels",
                        format!("`{id}` needs levels >= {MIN_SCALED_LEVEL}, got {}", self.levels[0]),
                    ))
                }
                Some(_) => {}
            }
        }
        Ok(())
    }

    /// Graded mesh with the periodic box, sized for `model`.
    pub fn grid(&self, j: usize, model: &ModelParams) -> Result<Arc<Grid>> {
        let b = XBox { length: self.box_length, nx: self.nx, dim: model.dimension() };
        Ok(Arc::new(make_grid(j, self.y_max, default_grading(model.alpha), Some(b))?))
    }

    /// The same mesh without x directions.
    pub fn y_grid(&self, j: usize, model: &ModelParams) -> Result<Arc<Grid>> {
        Ok(Arc::new(make_grid(j, self.y_max, default_grading(model.alpha), None)?))
    }
}

/// Which window edge the negative control crosses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Upper,
    Lower,
}

/// One refinement level of a window-dependent check.
#[derive(Clone, Debug)]
pub struct Level {
    pub value: f64,
    /// Norm of the probe data; must stay finite for the level to count.
    pub probe: f64,
    /// Side conditions with explicit tolerances.
    pub ok: bool,
    pub note: String,
    pub rows: Vec<Vec<String>>,
}

pub type LevelFn = fn(&SuiteConfig, &ModelParams, usize) -> Result<Level>;

/// Outcome of a check with explicit tolerances.
#[derive(Clone, Debug)]
pub struct Direct {
    pub levels: Vec<usize>,
    pub values: Vec<f64>,
    pub constant: f64,
    pub pass: bool,
    pub detail: String,
    pub table: Table,
}

pub type DirectFn = fn(&SuiteConfig) -> Result<Direct>;

#[derive(Clone, Copy)]
pub enum Runner {
    Scaled { level: LevelFn, side: Side, columns: &'static [&'static str] },
    Direct(DirectFn),
}

#[derive(Clone, Copy)]
pub struct Check {
    pub id: &'static str,
    pub anchor: &'static str,
    pub runner: Runner,
}

impl Check {
    pub fn window_dependent(&self) -> bool {
        matches!(self.runner, Runner::Scaled { .. })
    }
}

pub fn registry() -> Vec<Check> {
    use Runner::{Direct as D, Scaled as S};
    vec![
        Check { id: "parameter_maps", anchor: "parameter calculus of the power substitution and the shear", runner: D(parameter_maps) },
        Check { id: "isometries", anchor: "isometries of the power, phase and shear maps", runner: D(isometries) },
        Check { id: "similarity", anchor: "similarity of operators under the power and phase maps", runner: D(similarity) },
        Check { id: "spectral_structure", anchor: "self-adjointness, spectrum and sectoriality of the one-dimensional symbol", runner: D(spectral_structure) },
        Check { id: "kernel_bounds", anchor: "Gaussian bounds and domination for the Bessel and auxiliary heat kernels", runner: D(kernel_bounds) },
        Check { id: "resolvent_identity", anchor: "resolvent identity between the weighted and the shifted problem", runner: D(resolvent_identity) },
        Check { id: "nd_solver", anchor: "frequency-decoupled solver on the half-space", runner: D(nd_solver) },
        Check {
            id: "apriori_second_order",
            anchor: "second-order a priori estimate",
            runner: S { level: apriori_level, side: Side::Upper, columns: &["k", "eps", "ratio"] },
        },
        Check {
            id: "interpolation",
            anchor: "interpolation inequality for the first derivative",
            runner: S { level: interpolation_level, side: Side::Lower, columns: &["profile", "ratio", "probe"] },
        },
        Check {
            id: "uniform_in_frequency",
            anchor: "frequency-uniform bound for the potential term",
            runner: S { level: uniform_level, side: Side::Upper, columns: &["lambda_re", "lambda_im", "xi", "norm"] },
        },
        Check { id: "xi_derivatives", anchor: "closed forms for frequency derivatives of the resolvent", runner: D(xi_derivatives) },
        Check {
            id: "mikhlin",
            anchor: "Mikhlin-type bounds for the derived multipliers",
            runner: S { level: mikhlin_level, side: Side::Upper, columns: &["family", "supremum"] },
        },
        Check {
            id: "square_function",
            anchor: "square-function estimate for resolvent families",
            runner: S { level: square_level, side: Side::Upper, columns: &["n", "resolvent_ratio", "identity_ratio"] },
        },
        Check { id: "heat_equation", anchor: "time stepping against the heat equation", runner: D(heat_equation) },
        Check { id: "contraction", anchor: "positivity and contractivity of the semigroup", runner: D(contraction) },
        Check { id: "domination", anchor: "pointwise domination by the symmetric semigroup", runner: D(domination) },
        Check {
            id: "maximal_regularity",
            anchor: "maximal regularity of the evolution",
            runner: S { level: maxreg_level, side: Side::Upper, columns: &["field", "ratio", "identity_defect"] },
        },
    ]
}

/// The model moved `CONTROL_OFFSET` past one window edge by changing `m`.
/// The lower control sits below `-alpha`, which is never above the window's
/// lower edge: estimates that only see the weight `y^(m + alpha p)` stay
/// true down to `(m+1)/p = -alpha`.
pub fn control_model(model: &ModelParams, side: Side) -> ModelParams {
    let w = model.window();
    let target = match side {
        Side::Upper => w.upper + CONTROL_OFFSET,
        Side::Lower => -model.alpha - CONTROL_OFFSET,
    };
    ModelParams { m: model.p * target - 1.0, ..model.clone() }
}

/// Run the selected checks in parallel and merge them by id. With `out`,
/// write `<id>.csv` per check and `summary.csv`.
pub fn run_suite(cfg: &SuiteConfig, out: Option<&Path>) -> Result<Vec<EstimateResult>> {
    cfg.validate()?;
    let reg = registry();
    let mut ids = cfg.checks.clone();
    ids.sort();
    ids.dedup();
    let chosen: Vec<Check> = ids.iter().filter_map(|id| reg.iter().find(|c| c.id == id).copied()).collect();
    let mut results = par::map_slice(&chosen, |c| run_check(c, cfg));
    results.sort_by(|a, b| a.estimate_id.cmp(&b.estimate_id));
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        for r in &mut results {
            let path = dir.join(format!("{}.csv", r.estimate_id));
            r.table.write_csv(&path)?;
            r.csv = Some(path);
        }
        write_summary(&results, &dir.join("summary.csv"))?;
    }
    Ok(results)
}

pub fn write_summary(results: &[EstimateResult], path: &Path) -> Result<()> {
    let mut t = Table::new(&["estimate_id", "pass", "constant", "drift"]);
    for r in results {
        t.push(vec![r.estimate_id.clone(), r.pass.to_string(), num(r.constant), num(r.drift)]);
    }
    t.write_csv(path)
}

/// Run one check; errors become a failed result.
pub fn run_check(check: &Check, cfg: &SuiteConfig) -> EstimateResult {
    let m = &cfg.model;
    let w = m.window();
    let mut parameters = BTreeMap::new();
    parameters.insert("alpha".into(), m.alpha);
    parameters.insert("c".into(), m.c_bessel);
    parameters.insert("m".into(), m.m);
    parameters.insert("p".into(), m.p);
    parameters.insert("a_norm".into(), m.a_norm());
    parameters.insert("window_value".into(), w.value);
    parameters.insert("window_lower".into(), w.lower);
    parameters.insert("window_upper".into(), w.upper);
    let mut res = EstimateResult {
        estimate_id: check.id.into(),
        anchor: check.anchor.into(),
        parameters,
        levels: vec![],
        values: vec![],
        constant: f64::NAN,
        drift: f64::NAN,
        control: None,
        pass: false,
        detail: String::new(),
        csv: None,
        table: Table::default(),
    };
    match check.runner {
        Runner::Direct(f) => match f(cfg) {
            Ok(d) => {
                res.drift = drift(&d.values);
                res.levels = d.levels;
                res.values = d.values;
                res.constant = d.constant;
                res.pass = d.pass && d.constant.is_finite();
                res.detail = d.detail;
                res.table = d.table;
            }
            Err(e) => res.detail = format!("error: {e}"),
        },
        Runner::Scaled { level, side, columns } => run_scaled(&mut res, cfg, level, side, columns),
    }
    res
}

fn run_scaled(res: &mut EstimateResult, cfg: &SuiteConfig, level: LevelFn, side: Side, columns: &[&str]) {
    let mut header = vec!["run", "j", "m"];
    header.extend_from_slice(columns);
    let mut table = Table::new(&header);
    let model = &cfg.model;
    let w = model.window();
    let mut notes = Vec::new();
    let mut ok = true;
    let mut finite = true;
    for &j in &cfg.levels {
        match level(cfg, model, j) {
            Ok(l) => {
                finite &= l.value.is_finite() && l.probe.is_finite();
                ok &= l.ok;
                if !l.note.is_empty() {
                    notes.push(format!("J={j}: {}", l.note));
                }
                for r in l.rows {
                    let mut row = vec!["main".to_string(), j.to_string(), num(model.m)];
                    row.extend(r);
                    table.push(row);
                }
                res.levels.push(j);
                res.values.push(l.value);
            }
            Err(e) => {
                res.detail = format!("error at J={j}: {e}");
                res.table = table;
                return;
            }
        }
    }
    res.drift = drift(&res.values);
    res.constant = res.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let cm = control_model(model, side);
    let mut levels = cfg.levels.clone();
    levels.push(2 * levels[levels.len() - 1]);
    let mut control = ControlRun {
        m: cm.m,
        window_value: cm.window().value,
        levels: vec![],
        values: vec![],
        probe_norms: vec![],
        failed: false,
        note: String::new(),
    };
    for &j in &levels {
        match level(cfg, &cm, j) {
            Ok(l) => {
                for r in l.rows {
                    let mut row = vec!["control".to_string(), j.to_string(), num(cm.m)];
                    row.extend(r);
                    table.push(row);
                }
                control.levels.push(j);
                control.values.push(l.value);
                control.probe_norms.push(l.probe);
            }
            Err(e) => {
                control.failed = true;
                control.note = format!("failed at J={j}: {e}");
                break;
            }
        }
    }
    if !control.failed {
        let (dv, dp) = (diverges(&control.values), diverges(&control.probe_norms));
        control.failed = dv || dp;
        control.note = match (dv, dp) {
            (true, _) => "values diverge".into(),
            (false, true) => "probe norms diverge".into(),
            _ => "stays bounded".into(),
        };
    }
    res.pass = w.pass && finite && ok && res.drift <= STABILITY_BAND && control.failed;
    let mut detail = vec![
        format!("window {} (value {:.4} in ({:.4}, {:.4}))", if w.pass { "ok" } else { "violated" }, w.value, w.lower, w.upper),
        format!("drift {:.4}", res.drift),
        format!("control m={:.4}: {}", control.m, control.note),
    ];
    detail.extend(notes);
    res.detail = detail.join("; ");
    res.control = Some(control);
    res.table = table;
}

fn max_of(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(f64::NEG_INFINITY, |a, b| if b.is_nan() || a.is_nan() { f64::NAN } else { a.max(b) })
}

/// `|a - b| / max(|b|, 1)`.
fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

// ---------------------------------------------------------------------------
// Checks with explicit tolerances.

fn parameter_maps(cfg: &SuiteConfig) -> Result<Direct> {
    let mut rng = stream(cfg.seed, "parameter_maps");
    let mut table = Table::new(&["quantity", "max_error", "tolerance"]);
    let (mut e_beta, mut e_group, mut e_window, mut e_shear, mut e_det, mut e_reduce) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..1000 {
        let beta: f64 = rng.random_range(-0.8..2.5);
        let b2: f64 = rng.random_range(-0.8..2.5);
        let (a1, a2, c, m) = (rng.random_range(-1.0..1.9), rng.random_range(-1.0..1.9), rng.random_range(-0.5..3.0), rng.random_range(-1.0..4.0));
        let k = beta + 1.0;
        let img = beta_map(beta, a1, a2, c, m)?;
        for (got, want) in [(img.alpha1, a1 / k), (img.alpha2, (a2 + 2.0 * beta) / k), (img.c, (c + beta) / k), (img.m, (m - beta) / k)] {
            e_beta = e_beta.max(rel(got, want));
        }
        // Group law and inverse.
        let two = beta_map(b2, img.alpha1, img.alpha2, img.c, img.m)?;
        let one = beta_map(compose_beta(beta, b2), a1, a2, c, m)?;
        let back = beta_map(inverse_beta(beta), img.alpha1, img.alpha2, img.c, img.m)?;
        for (x, y) in [(two.alpha1, one.alpha1), (two.alpha2, one.alpha2), (two.c, one.c), (two.m, one.m)] {
            e_group = e_group.max(rel(x, y));
        }
        for (x, y) in [(back.alpha1, a1), (back.alpha2, a2), (back.c, c), (back.m, m)] {
            e_group = e_group.max(rel(x, y));
        }
        // Every window quantity scales by 1/(beta+1).
        let p: f64 = rng.random_range(1.2..4.0);
        let w0 = window(a1, a2, c, p, m);
        let w1 = window(img.alpha1, img.alpha2, img.c, p, img.m);
        e_window = e_window.max(rel(w1.value * k, w0.value)).max(rel(w1.upper * k, w0.upper));
        e_window = e_window.max(rel(w1.lower * k, w0.lower));
        let clear = w0.margin_lower.abs().min(w0.margin_upper.abs()) > 1e-9;
        if clear && w0.pass != w1.pass {
            e_window = f64::INFINITY;
        }

        // Shear on a random elliptic 2-d operator with alpha1 = alpha2.
        let spec = random_spec(&mut rng, true)?;
        let t = shear_map(&spec)?;
        let (b, q, cc, g) = (&spec.drift_b, &spec.q_vector, spec.drift_c, spec.gamma);
        for i in 0..2 {
            e_shear = e_shear.max(rel(t.q_vector[i], q[i] - g * b[i] / cc));
            for j in 0..2 {
                let want = spec.q_matrix[i * 2 + j] - (b[i] * q[j] + q[i] * b[j]) / cc + g * b[i] * b[j] / (cc * cc);
                e_shear = e_shear.max(rel(t.q_matrix[i * 2 + j], want));
            }
        }
        let d0 = spec.block_matrix().determinant();
        e_det = e_det.max((t.block_matrix().determinant() - d0).abs() / d0.abs());

        // Reduction: alpha, c~, m~ from the power map and |a|^2 = q~' Q~^{-1} q~ / gamma.
        let (spec, w) = loop {
            let s = random_spec(&mut rng, false)?;
            let w = window(s.alpha1, s.alpha2, s.drift_c / s.gamma, 2.0, 0.0);
            if w.upper > w.lower + 0.05 {
                break (s, w);
            }
        };
        let sh = shear_map(&spec)?;
        let beta = (spec.alpha1 - spec.alpha2) / 2.0;
        let k = beta + 1.0;
        let cg = spec.drift_c / spec.gamma;
        let v = w.lower + rng.random_range(0.1..0.9) * (w.upper - w.lower);
        let space = SpaceSpec { p: 2.0, m: 2.0 * v - 1.0 };
        let (model, _) = reduce_to_model(&spec, &space)?;
        let qi = sh.q().try_inverse().ok_or_else(|| Error::Internal("singular Q".into()))?;
        let qv = nalgebra::DVector::from_column_slice(&sh.q_vector);
        let a2_want = (qv.transpose() * qi * &qv)[(0, 0)] / spec.gamma;
        let a2_got: f64 = model.a.iter().map(|x| x * x).sum();
        for (x, y) in [(model.alpha, spec.alpha1 / k), (model.c_bessel, (cg + beta) / k), (model.m, (space.m - beta) / k), (a2_got, a2_want)] {
            e_reduce = e_reduce.max(rel(x, y));
        }
    }
    let rows = [
        ("power_map_formulas", e_beta, 1e-12),
        ("group_law_and_inverse", e_group, 1e-12),
        ("window_scaling", e_window, 1e-12),
        ("shear_formulas", e_shear, 1e-12),
        ("shear_block_determinant", e_det, 1e-10),
        ("reduction", e_reduce, 1e-12),
    ];
    let mut pass = true;
    for (name, e, tol) in rows {
        pass &= e <= tol;
        table.push(vec![name.into(), num(e), num(tol)]);
    }
    let worst = max_of(rows.iter().map(|r| r.1));
    Ok(Direct { levels: vec![], values: vec![], constant: worst, pass, detail: format!("1000 samples, worst error {worst:.3e}"), table })
}

/// Random elliptic 2-d coefficients. With `shear`, `alpha1 = alpha2` and
/// `b != 0`; otherwise `b = 0` and the powers differ.
fn random_spec(rng: &mut ChaCha8Rng, shear: bool) -> Result<OperatorSpec> {
    loop {
        let (x, y, z): (f64, f64, f64) = (rng.random_range(0.3..2.0), rng.random_range(0.3..2.0), rng.random_range(-0.5..0.5));
        let q = vec![x * x + z * z, z * y, z * y, y * y];
        let qv = vec![rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6)];
        let gamma = rng.random_range(0.5..2.0);
        let c = rng.random_range(0.3..3.0) * gamma;
        let (a1, a2) = if shear {
            let a = rng.random_range(-0.8..1.5);
            (a, a)
        } else {
            (rng.random_range(-0.5..1.5), rng.random_range(-0.5..1.5))
        };
        let b = if shear { vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)] } else { vec![0.0, 0.0] };
        if let Ok(s) = OperatorSpec::new(2, q, qv, gamma, b, c, a1, a2) {
            if shear_map(&s).is_ok() {
                return Ok(s);
            }
        }
    }
}

fn isometries(cfg: &SuiteConfig) -> Result<Direct> {
    let mut table = Table::new(&["map", "parameter", "max_relative_error", "tolerance"]);
    let mut pass = true;
    let mut worst: f64 = 0.0;
    // Power map at J = 256 on matched grids.
    let target = make_grid(256, cfg.y_max, 1.5, None)?;
    for (beta, p, m) in [(0.5, 2.0, 0.5), (-0.4, 3.0, 1.0), (1.5, 1.5, 0.0)] {
        let src = Arc::new(power_source_grid(&target, beta)?);
        let img = beta_map(beta, 0.0, 0.0, 0.0, m)?;
        let panel = profile_panel(10, 0.9 * src.y_max);
        let mut e: f64 = 0.0;
        for pr in &panel {
            let u = Field::from_fn(src.clone(), |_, s| C::new(pr.value(s), 0.0));
            let tu = apply_power_onto(&u, beta, p, Arc::new(target.clone()))?;
            e = e.max((lp_norm(&tu, p, m) - lp_norm(&u, p, img.m)).abs() / lp_norm(&u, p, img.m));
        }
        pass &= e <= 1e-3;
        worst = worst.max(e);
        table.push(vec!["power".into(), format!("beta={beta}"), num(e), num(1e-3)]);
    }
    // Phase: modulus one on every node.
    let g = Arc::new(make_grid(256, cfg.y_max, 1.0, Some(XBox { length: 2.0 * PI, nx: 32, dim: 1 }))?);
    let panel = profile_panel(10, 0.9 * cfg.y_max);
    let fields = tensor_panel(g.clone(), &panel);
    let mut e: f64 = 0.0;
    for u in &fields {
        let s = apply_phase(u, 0.7, 0.5)?;
        for (a, b) in s.values.iter().zip(&u.values) {
            e = e.max((a.norm() - b.norm()).abs() / b.norm().max(f64::MIN_POSITIVE));
        }
    }
    pass &= e <= 1e-15;
    worst = worst.max(e);
    table.push(vec!["phase".into(), "a.xi=0.7".into(), num(e), num(1e-15)]);
    // Shear: translation of band-limited samples, in p = 2 and p = 3.
    let mut e: f64 = 0.0;
    for u in &fields {
        let s = apply_shear(u, &[0.6], 1.5)?;
        for (p, m) in [(2.0, 0.0), (3.0, 0.5)] {
            e = e.max((lp_norm(&s, p, m) - lp_norm(u, p, m)).abs() / lp_norm(u, p, m));
        }
    }
    pass &= e <= 1e-9;
    worst = worst.max(e);
    table.push(vec!["shear".into(), "b/c=0.4".into(), num(e), num(1e-9)]);
    Ok(Direct { levels: vec![256], values: vec![], constant: worst, pass, detail: format!("10-function panel, worst {worst:.3e}"), table })
}

fn order(errors: &[f64]) -> f64 {
    errors.windows(2).map(|e| (e[0] / e[1]).log2()).fold(f64::INFINITY, f64::min)
}

fn similarity(cfg: &SuiteConfig) -> Result<Direct> {
    let levels = vec![128, 256, 512];
    let mut table = Table::new(&["case", "j", "discrepancy", "coefficient"]);
    let mut pass = true;
    let mut orders = Vec::new();
    let x = XBox { length: cfg.box_length, nx: 8, dim: 1 };
    for (a1, a2) in [(0.0, 1.0), (1.0, 0.0), (0.5, -0.5)] {
        let spec = OperatorSpec::new(1, vec![1.0], vec![0.3], 1.0, vec![0.0], 1.5, a1, a2)?;
        let beta = (a1 - a2) / 2.0;
        let mut errs = Vec::new();
        for &j in &levels {
            let g = Arc::new(make_grid(j, cfg.y_max, 1.5, Some(x))?);
            let src_max = cfg.y_max.powf(beta + 1.0);
            let r = similarity_check_power(&spec, beta, g, &profile_panel(10, 0.8 * src_max))?;
            table.push(vec![format!("power a1={a1} a2={a2}"), j.to_string(), num(r.discrepancy), num(r.bessel_coefficient / r.expected_coefficient)]);
            errs.push(r.discrepancy);
        }
        orders.push(order(&errs));
    }
    for (alpha, c) in [(1.0, 1.0), (0.5, 0.5), (-0.5, 0.0)] {
        let m = ModelParams::new(vec![0.4], alpha, c, 0.0, 2.0)?;
        let mut errs = Vec::new();
        for &j in &levels {
            let g = Arc::new(make_grid(j, cfg.y_max, 1.5, None)?);
            let r = equivalence_transform_check(&m, &[1.2], g, &profile_panel(10, 0.8 * cfg.y_max))?;
            table.push(vec![format!("equivalence alpha={alpha} c={c}"), j.to_string(), num(r.discrepancy), num(r.strong_discrepancy)]);
            errs.push(r.discrepancy);
        }
        orders.push(order(&errs));
    }
    let shear = OperatorSpec::new(1, vec![1.0], vec![0.3], 1.0, vec![0.7], 1.5, 1.0, 1.0)?;
    let mut errs = Vec::new();
    for &j in &levels {
        let g = Arc::new(make_grid(j, cfg.y_max, 1.5, Some(XBox { length: cfg.box_length, nx: 16, dim: 1 }))?);
        let e = shear_conjugation_check(&shear, g, &profile_panel(10, 0.8 * cfg.y_max))?;
        table.push(vec!["shear b=0.7 c=1.5".into(), j.to_string(), num(e), String::new()]);
        errs.push(e);
    }
    orders.push(order(&errs));
    let min_order = orders.iter().copied().fold(f64::INFINITY, f64::min);
    pass &= min_order >= 1.0;
    Ok(Direct {
        levels,
        values: orders.clone(),
        constant: min_order,
        pass,
        detail: format!("smallest observed order {min_order:.3} (need >= 1)"),
        table,
    })
}

fn spectral_structure(cfg: &SuiteConfig) -> Result<Direct> {
    let mut table = Table::new(&["quantity", "case", "j", "value"]);
    let mut pass = true;
    let mut sa: f64 = 0.0;
    for alpha in [-0.5, 0.0, 0.5, 1.0] {
        for c in [0.0, 1.0, 2.5] {
            for xi in [0.0, 1.3] {
                let m = ModelParams::new(vec![0.0], alpha, c, 0.0, 2.0)?;
                let g = Arc::new(make_grid(256, cfg.y_max, default_grading(alpha), None)?);
                let op = assemble(&FormSpec::model_mode(&m, &[xi]), g)?;
                let d = op.self_adjoint_defect();
                let below = op.spectrum_below(1e-8) == Some(true);
                sa = sa.max(d);
                pass &= d <= 1e-10 && below;
                table.push(vec!["self_adjoint_defect".into(), format!("alpha={alpha} c={c} xi={xi}"), "256".into(), num(d)]);
                table.push(vec!["spectrum_below_1e-8".into(), format!("alpha={alpha} c={c} xi={xi}"), "256".into(), (below as u8).to_string()]);
            }
        }
    }
    let levels = vec![128, 256];
    let mut sups = Vec::new();
    for an in [0.0, 0.3, 0.7] {
        let m = ModelParams::new(vec![an], 0.5, 1.0, 0.0, 2.0)?;
        let theta = PI / 2.0 - m.sector_defect() - 0.1;
        let lambdas = sector_samples(theta, 8, 8);
        let mut per = Vec::new();
        for &j in &levels {
            let g = Arc::new(make_grid(j, cfg.y_max, default_grading(0.5), None)?);
            let op = assemble(&FormSpec::model_mode(&m, &[1.3]), g)?;
            let est = par::try_map_range(lambdas.len(), |i| {
                let l = lambdas[i];
                let r = op.resolvent(l)?;
                let mut rng = stream(cfg.seed, &format!("sector/{an}/{j}/{i}"));
                Ok::<_, Error>(operator_norm(
                    |x| r.solve_fast(x).into_iter().map(|v| v * l).collect(),
                    |x| r.solve_adjoint(x).into_iter().map(|v| v * l.conj()).collect(),
                    &op.w,
                    &mut rng,
                    4,
                    4,
                ))
            })?;
            let s = max_of(est);
            table.push(vec!["sector_sup".into(), format!("|a|={an}"), j.to_string(), num(s)]);
            per.push(s);
        }
        pass &= per.iter().all(|s| *s <= 4.0) && drift(&per) <= STABILITY_BAND;
        sups.push(per);
    }
    let worst = max_of(sups.iter().flatten().copied());
    let worst_drift = max_of(sups.iter().map(|s| drift(s)));
    Ok(Direct {
        levels,
        values: sups.iter().map(|s| max_of(s.iter().copied())).collect(),
        constant: worst,
        pass,
        detail: format!("self-adjoint defect {sa:.2e}; sector sup {worst:.4} (<= 4), drift {worst_drift:.4}"),
        table,
    })
}

fn kernel_bounds(cfg: &SuiteConfig) -> Result<Direct> {
    let _ = cfg;
    let cases = [(0.0, 0.0, 0.0, 0.0), (1.0, 0.0, 0.5, 0.2), (0.5, 0.5, 1.0, 0.5), (1.0, 1.0, 0.5, 0.25), (2.0, 0.5, 1.5, 1.0), (0.5, -0.3, 0.8, 0.3)];
    let levels = [256usize, 512];
    let times = [0.02, 0.1, 0.5];
    let mut table = Table::new(&["case", "j", "kernel", "constant", "kappa", "domination_excess"]);
    let rows = par::try_map_range(cases.len() * levels.len(), |k| {
        let (c, beta, b, qa) = cases[k / levels.len()];
        let j = levels[k % levels.len()];
        let g = Arc::new(make_grid(j, 8.0, 1.0, None)?);
        let aux = assemble(&FormSpec::auxiliary(c, beta, b, qa), g.clone())?;
        let bes = assemble(&FormSpec::bessel(c), g.clone())?;
        let idx = sample_nodes(&g, 3.0, 48);
        let mut ka = Vec::new();
        let mut kb = Vec::new();
        let mut dom: f64 = f64::NEG_INFINITY;
        for &t in &times {
            let pa = expm_kernel(&aux, C::new(t, 0.0))?;
            let pb = expm_kernel(&bes, C::new(t, 0.0))?;
            dom = dom.max(domination_excess(&pa, &pb, &idx));
            ka.push((t, pa));
            kb.push((t, pb));
        }
        let ra: Vec<_> = ka.iter().map(|(t, k)| (*t, k)).collect();
        let rb: Vec<_> = kb.iter().map(|(t, k)| (*t, k)).collect();
        let fa = fit_kernel_bound(&ra, &idx, BoundProfile::Gaussian { c });
        let fb = fit_kernel_bound(&rb, &idx, BoundProfile::Gaussian { c });
        Ok::<_, Error>((fa, fb, dom))
    })?;
    let mut pass = true;
    let mut worst_drift: f64 = 0.0;
    let mut worst_dom: f64 = f64::NEG_INFINITY;
    for (ci, case) in cases.iter().enumerate() {
        let label = format!("c={} beta={} b={} q={}", case.0, case.1, case.2, case.3);
        for (li, &j) in levels.iter().enumerate() {
            let (fa, fb, dom) = rows[ci * levels.len() + li];
            table.push(vec![label.clone(), j.to_string(), "auxiliary".into(), num(fa.constant), num(fa.kappa), num(dom)]);
            table.push(vec![label.clone(), j.to_string(), "bessel".into(), num(fb.constant), num(fb.kappa), String::new()]);
            pass &= fa.is_finite() && fb.is_finite();
            worst_dom = worst_dom.max(dom);
        }
        let (a0, b0, _) = rows[ci * levels.len()];
        let (a1, b1, _) = rows[ci * levels.len() + 1];
        for (x, y) in [(a0.constant, a1.constant), (a0.kappa, a1.kappa), (b0.constant, b1.constant), (b0.kappa, b1.kappa)] {
            worst_drift = worst_drift.max(drift(&[x, y]));
        }
    }
    pass &= worst_drift < STABILITY_BAND && worst_dom <= 1e-6;
    Ok(Direct {
        levels: levels.to_vec(),
        values: vec![worst_drift, worst_dom],
        constant: worst_drift,
        pass,
        detail: format!("largest fit drift {worst_drift:.4} (< 0.2); domination excess {worst_dom:.2e} (<= 1e-6)"),
        table,
    })
}

fn resolvent_identity(cfg: &SuiteConfig) -> Result<Direct> {
    let mut table = Table::new(&["alpha", "lambda_re", "lambda_im", "relative_difference"]);
    let mut worst: f64 = 0.0;
    for alpha in [-0.5, 0.0, 0.5, 1.0] {
        let m = ModelParams::new(vec![0.3], alpha, 1.0, 0.0, 2.0)?;
        let g = Arc::new(make_grid(256, cfg.y_max, default_grading(alpha), None)?);
        let xi = [1.3];
        let op = assemble(&FormSpec::model_mode(&m, &xi), g.clone())?;
        let f: Vec<C> = g.y_nodes.iter().map(|&y| C::new((-y * y).exp(), 0.5 * y * (-y).exp())).collect();
        for r in [0.1, 1.0, 10.0] {
            let lam = C::new(r, 0.5 * r);
            let u1 = op.resolve(lam, &f)?;
            let shifted = assemble(&FormSpec::shifted_inverse(&m, &xi, lam), g.clone())?;
            let data: Vec<C> = f.iter().zip(&g.y_nodes).map(|(v, y)| v / y.powf(alpha)).collect();
            let u2 = shifted.resolve(C::new(0.0, 0.0), &data)?;
            let d: Vec<C> = u1.iter().zip(&u2).map(|(a, b)| a - b).collect();
            let e = op.norm(&d) / op.norm(&u1);
            worst = worst.max(e);
            table.push(vec![num(alpha), num(lam.re), num(lam.im), num(e)]);
        }
    }
    Ok(Direct { levels: vec![256], values: vec![], constant: worst, pass: worst <= 1e-8, detail: format!("worst {worst:.2e} (<= 1e-8)"), table })
}

/// `cos(kx) e^{-y^2}` and its image under the model operator.
fn manufactured(m: &ModelParams, k: f64) -> (impl Fn(&[f64], f64) -> C + '_, impl Fn(&[f64], f64) -> C + '_) {
    let u = move |x: &[f64], y: f64| C::new((k * x[0]).cos() * (-y * y).exp(), 0.0);
    let lu = move |x: &[f64], y: f64| {
        let e = (-y * y).exp();
        let (cs, sn) = ((k * x[0]).cos(), (k * x[0]).sin());
        let uyy = (4.0 * y * y - 2.0) * e;
        let uy_over_y = -2.0 * e;
        let ya = y.powf(m.alpha);
        // y^a (u_yy + (c/y) u_y - k^2 u) + 2 y^a a_1 u_xy.
        let v = ya * ((uyy + m.c_bessel * uy_over_y - k * k * e) * cs + 2.0 * m.a[0] * (-k * sn) * (-2.0 * y * e));
        C::new(v, 0.0)
    };
    (u, lu)
}

fn nd_solver(cfg: &SuiteConfig) -> Result<Direct> {
    let levels = vec![64, 128, 256];
    let lambda = C::new(1.0, 0.0);
    let mut table = Table::new(&["case", "j", "relative_error"]);
    let mut orders = Vec::new();
    for (a, alpha, c) in [(0.0, 0.0, 0.0), (0.4, 0.5, 1.0)] {
        let m = ModelParams::new(vec![a], alpha, c, 0.0, 2.0)?;
        let l = cfg.box_length;
        let (u, lu) = manufactured(&m, 2.0 * PI / l);
        let mut errs = Vec::new();
        for &j in &levels {
            let g = Arc::new(make_grid(j, 6.0, default_grading(alpha), Some(XBox { length: l, nx: 8, dim: 1 }))?);
            let exact = Field::from_fn(g.clone(), &u);
            let f = Field::from_fn(g.clone(), |x, y| lambda * u(x, y) - lu(x, y));
            let ops = ModeOperators::model_unchecked(&m, g)?;
            let sol = ops.solve(lambda, &f)?;
            let mu = c - alpha;
            let e = lp_norm(&sol.sub(&exact), 2.0, mu) / lp_norm(&exact, 2.0, mu);
            table.push(vec![format!("a={a} alpha={alpha} c={c}"), j.to_string(), num(e)]);
            errs.push(e);
        }
        orders.push(order(&errs));
    }
    let min = orders.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(Direct { levels, values: orders, constant: min, pass: min >= 1.0, detail: format!("smallest observed order {min:.3} (>= 1)"), table })
}

fn xi_derivatives(cfg: &SuiteConfig) -> Result<Direct> {
    let m = ModelParams::new(vec![0.3, 0.2], 0.5, 1.0, 0.0, 2.0)?;
    let g = Arc::new(make_grid(256, cfg.y_max, default_grading(0.5), None)?);
    let f: Vec<C> = g.y_nodes.iter().map(|&y| C::new((-y * y).exp(), 0.3 * y * (-y).exp())).collect();
    let xi0 = [1.0, 0.7];
    let steps = [0.2, 0.1, 0.05];
    let lambda = C::new(1.0, 0.5);
    let mut table = Table::new(&["order", "step", "error", "observed_order"]);
    let mut mins = Vec::new();
    let mut sym = 0.0;
    for n in [1, 2] {
        let r = xi_derivative_check(lambda, &m, g.clone(), &xi0, n, &f, &steps)?;
        for (i, h) in r.steps.iter().enumerate() {
            let o = if i == 0 { String::new() } else { num(r.observed_orders[i - 1]) };
            table.push(vec![n.to_string(), num(*h), num(r.errors[i]), o]);
        }
        mins.push(r.observed_orders.iter().copied().fold(f64::INFINITY, f64::min));
        sym = r.symmetry_defect.max(sym);
    }
    let min = mins.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(Direct {
        levels: vec![256],
        values: mins,
        constant: min,
        pass: min >= 1.95 && sym <= 1e-10,
        detail: format!("smallest observed order {min:.3} (>= 1.95); symmetry defect {sym:.2e}"),
        table,
    })
}

fn heat_equation(_cfg: &SuiteConfig) -> Result<Direct> {
    let m = ModelParams::new(vec![0.0], 0.0, 0.0, 0.0, 2.0)?;
    let levels = vec![32, 64, 128];
    let t_end = 0.1;
    let rate = 4.0 + PI * PI;
    let mut table = Table::new(&["scheme", "j", "steps", "relative_error"]);
    let mut orders = Vec::new();
    let mut fine = Vec::new();
    for scheme in [Scheme::BackwardEuler, Scheme::CrankNicolson] {
        let mut errs = Vec::new();
        for &j in &levels {
            let g = Arc::new(make_grid(j, 1.0, 1.0, Some(XBox { length: 2.0 * PI, nx: 8, dim: 1 }))?);
            let u0 = Field::from_fn(g.clone(), |x, y| C::from_polar(1.0, 2.0 * x[0]) * (PI * y).cos());
            let ops = ModeOperators::model(&m, g)?;
            let steps = j / 2;
            let run = evolve(&u0, &Forcing::None, &ops, scheme, &uniform_times(t_end, steps), |_| false)?;
            let exact = u0.map(|v| v * (-rate * t_end).exp());
            let e = lp_norm(&run.last().sub(&exact), 2.0, 0.0) / lp_norm(&exact, 2.0, 0.0);
            table.push(vec![format!("{scheme:?}"), j.to_string(), steps.to_string(), num(e)]);
            errs.push(e);
        }
        orders.push(order(&errs));
        fine.push(errs[errs.len() - 1]);
    }
    let pass = orders[0] >= 0.9 && orders[1] >= 1.8 && fine[0] <= 2e-2 && fine[1] <= 1e-3;
    Ok(Direct {
        levels,
        values: orders.clone(),
        constant: fine[1],
        pass,
        detail: format!("orders: backward Euler {:.3} (>= 0.9), Crank-Nicolson {:.3} (>= 1.8)", orders[0], orders[1]),
        table,
    })
}

fn contraction(cfg: &SuiteConfig) -> Result<Direct> {
    let mut table = Table::new(&["case", "j", "t", "l2", "linf", "lp"]);
    let mut worst: f64 = 0.0;
    for (a, alpha, c) in [(0.0, 0.0, 0.0), (0.5, 0.0, 0.0), (0.5, 0.5, 1.0), (0.3, -0.5, 0.5)] {
        let m = ModelParams::new(vec![a], alpha, c, 0.0, 2.0)?;
        for j in [64, 128] {
            let g = Arc::new(make_grid(j, cfg.y_max, default_grading(alpha), Some(XBox { length: cfg.box_length, nx: 8, dim: 1 }))?);
            let r = contraction_check(&m, g, &[0.01, 0.1, 1.0], 16, cfg.seed)?;
            for row in &r.rows {
                table.push(vec![format!("a={a} alpha={alpha} c={c}"), j.to_string(), num(row.t), num(row.l2), num(row.linf), num(row.lp)]);
            }
            worst = worst.max(r.max());
        }
    }
    Ok(Direct { levels: vec![64, 128], values: vec![], constant: worst, pass: worst <= 1.05, detail: format!("largest norm {worst:.5} (<= 1.05)"), table })
}

fn domination(cfg: &SuiteConfig) -> Result<Direct> {
    let mut table = Table::new(&["case", "t", "excess"]);
    let mut worst: f64 = 0.0;
    for (a, alpha, c) in [(0.5, 0.0, 0.0), (0.3, 0.5, 1.0), (0.7, -0.5, 0.5)] {
        let m = ModelParams::new(vec![a], alpha, c, 0.0, 2.0)?;
        let g = Arc::new(make_grid(128, cfg.y_max, default_grading(alpha), None)?);
        let f: Vec<C> = g.y_nodes.iter().map(|&y| C::from_polar((-y * y).exp(), 3.0 * y)).collect();
        for r in domination_check(&m, &[1.0], g, &f, &[0.01, 0.1, 1.0])? {
            table.push(vec![format!("a={a} alpha={alpha} c={c}"), num(r.t), num(r.excess)]);
            worst = worst.max(r.excess);
        }
    }
    Ok(Direct { levels: vec![128], values: vec![], constant: worst, pass: worst <= 1e-8, detail: format!("largest excess {worst:.2e} (<= 1e-8)"), table })
}

// ---------------------------------------------------------------------------
// Window-dependent checks, one refinement level each.

/// `(sum |v|^p y^m dy)^(1/p)` on the y-mesh.
fn y_norm(v: &[f64], g: &Grid, p: f64, m: f64) -> f64 {
    v.iter().zip(g.y_nodes.iter().zip(&g.y_weights)).map(|(v, (y, h))| v.abs().powf(p) * y.powf(m) * h).sum::<f64>().powf(1.0 / p)
}

/// Boundary bumps of every width in [`boundary_scales`] on the modes
/// `cos(2 pi k x_1 / L)`, `k = 0, 1, 2`.
fn boundary_panel(cfg: &SuiteConfig, g: &Arc<Grid>, modes: &[usize]) -> Vec<(usize, f64, Field)> {
    let mut out = Vec::new();
    for &k in modes {
        for eps in boundary_scales(&g.y_nodes, g.y_max) {
            let w = 2.0 * PI * k as f64 / cfg.box_length;
            out.push((k, eps, Field::from_fn(g.clone(), |x, y| C::new((w * x[0]).cos() * bump(y, eps), 0.0))));
        }
    }
    out
}

fn apriori_level(cfg: &SuiteConfig, model: &ModelParams, j: usize) -> Result<Level> {
    let g = cfg.grid(j, model)?;
    let (p, m, c) = (model.p, model.m, model.c_bessel);
    let lambda = C::new(APRIORI_LAMBDA, 0.0);
    let panel = boundary_panel(cfg, &g, &[0, 1, 2]);
    let ratios = par::try_map_range(panel.len(), |i| {
        let f = &panel[i].2;
        let d = derived_multipliers_unchecked(lambda, f, model)?;
        let yyy = d.bessel.sub(&d.neumann.map(|v| v * c));
        let mut lhs = lp_norm(&yyy, p, m) + lp_norm(&d.neumann, p, m);
        lhs += d.hessian_x.iter().map(|h| lp_norm(h, p, m)).sum::<f64>();
        lhs += d.mixed.iter().map(|h| lp_norm(h, p, m)).sum::<f64>();
        let lu = d.u.map(|v| v * lambda).sub(f);
        Ok::<_, Error>(lhs / lp_norm(&lu, p, m))
    })?;
    let rows = panel.iter().zip(&ratios).map(|((k, eps, _), r)| vec![k.to_string(), num(*eps), num(*r)]).collect();
    let v = max_of(ratios);
    Ok(Level { value: v, probe: v, ok: true, note: String::new(), rows })
}

fn interpolation_level(cfg: &SuiteConfig, model: &ModelParams, j: usize) -> Result<Level> {
    let g = cfg.y_grid(j, model)?;
    let (p, m, alpha, c) = (model.p, model.m, model.alpha, model.c_bessel);
    let mut rows = Vec::new();
    let (mut best, mut probe): (f64, f64) = (0.0, 0.0);
    for (i, pr) in profile_panel(20, 0.5 * cfg.y_max).iter().enumerate() {
        let jets: Vec<_> = g.y_nodes.iter().map(|&y| (y.powf(alpha), pr.jet(y), y)).collect();
        let du: Vec<f64> = jets.iter().map(|(ya, u, _)| ya * u.d).collect();
        let bu: Vec<f64> = jets.iter().map(|(ya, u, y)| ya * (u.dd + c / y * u.d)).collect();
        let u: Vec<f64> = jets.iter().map(|(ya, u, _)| ya * u.v).collect();
        let nu = y_norm(&u, &g, p, m);
        let r = y_norm(&du, &g, p, m) / (y_norm(&bu, &g, p, m) * nu).sqrt();
        rows.push(vec![i.to_string(), num(r), num(nu)]);
        best = best.max(r);
        probe = probe.max(nu);
    }
    Ok(Level { value: best, probe, ok: true, note: String::new(), rows })
}

fn uniform_level(cfg: &SuiteConfig, model: &ModelParams, j: usize) -> Result<Level> {
    let g = cfg.y_grid(j, model)?;
    let pieces = ModelPieces::new(model, g.clone())?;
    let d = g.mass(l2_equivalent_weight(model.p, model.m));
    let n = model.dimension();
    let lambdas = [C::new(0.1, 0.0), C::new(1.0, 0.0), C::new(1.0, 1.0)];
    let jobs: Vec<(C, f64)> = lambdas.iter().flat_map(|&l| (-3..=6).map(move |k| (l, 2f64.powi(k)))).collect();
    let est = par::try_map_range(jobs.len(), |i| {
        let (lambda, s) = jobs[i];
        let mut xi = vec![0.0; n];
        xi[0] = s;
        let op = pieces.operator(&xi);
        let top = TermOperator { pieces: &pieces, resolvent: op.resolvent(lambda)?, terms: Family::Potential.terms(lambda, &xi, &[]), xi };
        let mut rng = stream(cfg.seed, &format!("uniform/{j}/{i}"));
        Ok::<_, Error>(operator_norm(|x| top.apply(x), |x| top.apply_adjoint(x, &d), &d, &mut rng, 8, 4))
    })?;
    let rows = jobs.iter().zip(&est).map(|((l, s), e)| vec![num(l.re), num(l.im), num(*s), num(*e)]).collect();
    let v = max_of(est);
    Ok(Level { value: v, probe: v, ok: true, note: String::new(), rows })
}

fn mikhlin_level(cfg: &SuiteConfig, model: &ModelParams, j: usize) -> Result<Level> {
    let g = cfg.y_grid(j, model)?;
    let n = model.dimension();
    let lambdas = [C::new(0.1, 0.0), C::new(1.0, 1.0), C::new(0.1, 10.0)];
    let xis: Vec<Vec<f64>> = (-2..=4).map(|k| (0..n).map(|i| 2f64.powi(k) * (1.0 - 0.3 * i as f64)).collect()).collect();
    let r = mikhlin_bound_scan(&lambdas, &xis, model, g, cfg.seed)?;
    let rows = r.suprema.iter().map(|(f, s)| vec![f.clone(), num(*s)]).collect();
    let v = r.overall();
    Ok(Level { value: v, probe: v, ok: true, note: String::new(), rows })
}

/// Largest ratio `||(sum |S_i f_i|^2)^{1/2}|| / ||(sum |f_i|^2)^{1/2}||` in
/// `L^p_m` over `trials` independent draws of `n` pairs `(f_i, S_i f_i)`.
/// A lower bound for the R-bound of the family.
pub fn square_function_ratio(
    sample: &(dyn Fn(&mut ChaCha8Rng) -> Result<(Field, Field)> + Sync),
    n: usize,
    trials: usize,
    p: f64,
    m: f64,
    seed: u64,
    name: &str,
) -> Result<f64> {
    if n == 0 || n > 32 || trials == 0 || trials > 200 {
        return Err(invalid("n", "need 1 <= n <= 32 and 1 <= trials <= 200"));
    }
    let ratios = par::try_map_range(trials, |t| {
        let mut rng = stream(seed, &format!("{name}/{n}/{t}"));
        let mut num_sq: Option<Vec<f64>> = None;
        let mut den_sq: Option<Vec<f64>> = None;
        let mut grid = None;
        for _ in 0..n {
            let (f, sf) = sample(&mut rng)?;
            let acc = |s: &mut Option<Vec<f64>>, u: &Field| {
                let v = s.get_or_insert_with(|| vec![0.0; u.values.len()]);
                v.iter_mut().zip(&u.values).for_each(|(a, b)| *a += b.norm_sqr());
            };
            acc(&mut num_sq, &sf);
            acc(&mut den_sq, &f);
            grid = Some(f.grid.clone());
        }
        let g = grid.expect("n >= 1");
        let root = |s: Vec<f64>| Field::new(g.clone(), s.into_iter().map(|v| C::new(v.sqrt(), 0.0)).collect());
        let (a, b) = (root(num_sq.expect("n >= 1"))?, root(den_sq.expect("n >= 1"))?);
        Ok::<_, Error>(lp_norm(&a, p, m) / lp_norm(&b, p, m))
    })?;
    Ok(max_of(ratios))
}

fn square_level(cfg: &SuiteConfig, model: &ModelParams, j: usize) -> Result<Level> {
    let g = cfg.grid(j, model)?;
    let ops = ModeOperators::model_unchecked(model, g.clone())?;
    let scales = boundary_scales(&g.y_nodes, g.y_max);
    let theta = PI / 2.0 + 0.5 * (PI / 2.0 - model.sector_defect());
    let l = cfg.box_length;
    let draw_field = |rng: &mut ChaCha8Rng| {
        let eps = scales[rng.random_range(0..scales.len())];
        let k = rng.random_range(0..3) as f64;
        let shift: f64 = rng.random_range(0.0..l);
        let coeff = C::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let f = Field::from_fn(g.clone(), |x, y| coeff * (2.0 * PI * k * (x[0] - shift) / l).cos() * bump(y, eps));
        let n = lp_norm(&f, model.p, model.m);
        f.map(|v| v / n)
    };
    let resolvent = |rng: &mut ChaCha8Rng| -> Result<(Field, Field)> {
        let r = 10f64.powf(rng.random_range(-2.0..2.0));
        let lambda = C::from_polar(r, rng.random_range(-theta..theta));
        let f = draw_field(rng);
        let s = ops.solve(lambda, &f)?.map(|v| v * lambda);
        Ok((f, s))
    };
    let identity = |rng: &mut ChaCha8Rng| -> Result<(Field, Field)> {
        let f = draw_field(rng);
        Ok((f.clone(), f))
    };
    let (p, m) = (model.p, model.m);
    let mut rows = Vec::new();
    let mut res = Vec::new();
    let mut id_defect: f64 = 0.0;
    for n in [4, 8, 16] {
        let r = square_function_ratio(&resolvent, n, 20, p, m, cfg.seed, "square")?;
        let i = square_function_ratio(&identity, n, 4, p, m, cfg.seed, "square_id")?;
        id_defect = id_defect.max((i - 1.0).abs());
        rows.push(vec![n.to_string(), num(r), num(i)]);
        res.push(r);
    }
    let in_n = max_of(res.windows(2).map(drift));
    let ok = in_n <= STABILITY_BAND && id_defect <= 1e-12;
    Ok(Level {
        value: res[res.len() - 1],
        probe: res[res.len() - 1],
        ok,
        note: format!("drift in n {in_n:.4}, identity defect {id_defect:.1e}"),
        rows,
    })
}

fn maxreg_level(cfg: &SuiteConfig, model: &ModelParams, j: usize) -> Result<Level> {
    let g = cfg.grid(j, model)?;
    let ops = ModeOperators::model_unchecked(model, g.clone())?;
    let steps = (j / 4).max(8);
    let times = uniform_times(1.0, steps);
    let panel = boundary_panel(cfg, &g, &[0, 1]);
    let reports = par::try_map_range(panel.len(), |i| {
        let forcing = Forcing::Separable { time: vec![1.0; times.len()], field: panel[i].2.clone() };
        maximal_regularity_check(&ops, &forcing, &times, model.p, model.m, 2.0)
    })?;
    let rows = panel.iter().zip(&reports).map(|((k, eps, _), r)| vec![format!("k={k} eps={}", num(*eps)), num(r.ratio), num(r.identity_defect)]).collect();
    let v = max_of(reports.iter().map(|r| r.ratio));
    let defect = max_of(reports.iter().map(|r| r.identity_defect));
    let hilbert = model.p == 2.0 && model.a_norm() == 0.0;
    let ok = defect <= 1e-8 && (!hilbert || v <= 10.0);
    Ok(Level { value: v, probe: v, ok, note: format!("identity defect {defect:.1e}{}", if hilbert { ", Hilbert bound 10" } else { "" }), rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_registered_check_is_executable_and_anchored() {
        let reg = registry();
        let mut ids: Vec<&str> = reg.iter().map(|c| c.id).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), reg.len());
        for c in &reg {
            assert!(!c.anchor.trim().is_empty(), "{}", c.id);
            assert!(!c.anchor.chars().any(|ch| ch.is_ascii_digit()), "anchor of {} should be descriptive", c.id);
            match c.runner {
                Runner::Direct(f) => assert!(f as usize != 0),
                Runner::Scaled { level, columns, .. } => {
                    assert!(level as usize != 0);
                    assert!(!columns.is_empty());
                }
            }
        }
    }

    #[test]
    fn empty_check_list_gives_empty_results() {
        let cfg = SuiteConfig { checks: vec![], ..Default::default() };
        assert!(run_suite(&cfg, None).unwrap().is_empty());
    }

    #[test]
    fn unknown_check_is_a_config_error() {
        let cfg = SuiteConfig { checks: vec!["nope".into()], ..Default::default() };
        assert!(matches!(run_suite(&cfg, None), Err(Error::InvalidParam { name: "checks", .. })));
    }

    #[test]
    fn divergence_rule() {
        assert!(diverges(&[1.0, 1.2, 1.45]));
        assert!(diverges(&[1.0, 1.0, 3.5]));
        assert!(!diverges(&[1.0, 1.05, 1.3]));
        assert!(diverges(&[1.0, f64::INFINITY]));
        assert!(!diverges(&[2.0, 1.0, 0.5]));
        assert_eq!(drift(&[1.0, 1.1]), 0.10000000000000009);
    }

    #[test]
    fn control_sits_past_the_edge() {
        let m = ModelParams::new(vec![0.0], 0.5, 1.0, 0.5, 2.0).unwrap();
        let up = control_model(&m, Side::Upper).window();
        let lo = control_model(&m, Side::Lower).window();
        assert!((up.value - up.upper - CONTROL_OFFSET).abs() < 1e-12);
        assert!((lo.value + 0.5 + CONTROL_OFFSET).abs() < 1e-12);
        assert!(lo.lower - lo.value >= CONTROL_OFFSET);
    }
}
