use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::Result;
use degenop::grid::lp_norm;
use degenop::harness::{registry, run_suite, Table};
use degenop::multiplier::{FrequencySolvePlan, ModeOperators};
use degenop::params::validate_window;
use degenop::semigroup::{evolve, uniform_times, Forcing};
use degenop::{make_grid, Complex64 as C, Field, Grid, OperatorSpec, WindowReport, XBox};
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::ConfigError;

pub struct Context {
    pub cfg: RunConfig,
    pub out: PathBuf,
    pub threads: Option<usize>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    threads: Option<usize>,
    config: &'a RunConfig,
    window: WindowReport,
    reduction: serde_json::Value,
    details: serde_json::Value,
    outputs: Vec<String>,
}

fn write_manifest(ctx: &Context, command: &str, window: WindowReport, details: serde_json::Value, outputs: &[PathBuf]) -> Result<()> {
    let reduction = match ctx.cfg.reduction() {
        Ok((model, chain)) => json!({ "model": model, "chain": chain }),
        Err(e) => json!({ "error": e.to_string() }),
    };
    let m = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        seed: ctx.cfg.seed,
        threads: ctx.threads,
        config: &ctx.cfg,
        window,
        reduction,
        details,
        outputs: outputs
            .iter()
            .map(|p| p.strip_prefix(&ctx.out).unwrap_or(p).display().to_string())
            .collect(),
    };
    let text = serde_json::to_string_pretty(&m)?;
    std::fs::write(ctx.out.join("manifest.json"), text + "\n")?;
    Ok(())
}

/// `u = cos(k (x_1 + ... + x_N)) e^{-y^2}` and `L u` in closed form.
struct Manufactured {
    kappa: f64,
    kqk: f64,
    qk: f64,
    bk: f64,
    spec: OperatorSpec,
}

impl Manufactured {
    fn new(spec: &OperatorSpec, box_length: f64) -> Self {
        let kappa = 2.0 * std::f64::consts::PI / box_length;
        Self {
            kappa,
            kqk: kappa * kappa * spec.q_matrix.iter().sum::<f64>(),
            qk: kappa * spec.q_vector.iter().sum::<f64>(),
            bk: kappa * spec.drift_b.iter().sum::<f64>(),
            spec: spec.clone(),
        }
    }

    fn u(&self, x: &[f64], y: f64) -> f64 {
        (self.kappa * x.iter().sum::<f64>()).cos() * (-y * y).exp()
    }

    fn lu(&self, x: &[f64], y: f64) -> f64 {
        let s = &self.spec;
        let phi = self.kappa * x.iter().sum::<f64>();
        let (cs, sn) = (phi.cos(), phi.sin());
        let g = (-y * y).exp();
        let (g1, g2) = (-2.0 * y * g, (4.0 * y * y - 2.0) * g);
        let mixed = y.powf((s.alpha1 + s.alpha2) / 2.0);
        y.powf(s.alpha1) * (-self.kqk * cs * g)
            + 2.0 * mixed * self.qk * (-sn) * g1
            + s.gamma * y.powf(s.alpha2) * cs * g2
            + y.powf(s.alpha2 - 1.0) * (self.bk * (-sn) * g + s.drift_c * cs * g1)
    }
}

fn grid(cfg: &RunConfig, j: usize) -> Result<Arc<Grid>> {
    let g = &cfg.grid;
    let b = XBox { length: g.box_length, nx: g.nx, dim: cfg.operator.dimension };
    Ok(Arc::new(make_grid(j, g.y_max, cfg.grading(), Some(b))?))
}

fn warn_window(w: &WindowReport) {
    if !w.pass {
        eprintln!(
            "warning: (m+1)/p = {:.4} lies outside the window ({:.4}, {:.4}); estimates are not expected to hold",
            w.value, w.lower, w.upper
        );
    }
}

fn order(prev: Option<(usize, f64)>, j: usize, err: f64) -> Option<f64> {
    prev.map(|(pj, pe)| (pe / err).ln() / (j as f64 / pj as f64).ln())
}

fn fmt_order(o: Option<f64>) -> String {
    o.map_or(String::new(), |v| format!("{v:.9e}"))
}

pub fn solve_elliptic(ctx: &Context) -> Result<bool> {
    let cfg = &ctx.cfg;
    let spec = cfg.spec()?;
    let window = validate_window(&spec, &cfg.space()?);
    warn_window(&window);
    let lambda = C::new(cfg.elliptic.lambda_re, cfg.elliptic.lambda_im);
    let man = Manufactured::new(&spec, cfg.grid.box_length);
    let mut table = Table::new(&["j", "residual", "relative_error", "observed_order"]);
    let mut prev = None;
    let mut ok = true;
    let mut last = None;
    for &j in &cfg.grid.levels {
        let g = grid(cfg, j)?;
        let ops = ModeOperators::general(&spec, g.clone())?;
        let mu = ops.ops[0].form.measure;
        let exact = Field::from_fn(g.clone(), |x, y| C::new(man.u(x, y), 0.0));
        let f = Field::from_fn(g.clone(), |x, y| lambda * man.u(x, y) - man.lu(x, y));
        let plan = FrequencySolvePlan::new(lambda, ops);
        let sol = plan.solve(&f)?;
        let residual = plan.residual(&sol, &f)?;
        let err = lp_norm(&sol.sub(&exact), 2.0, mu) / lp_norm(&exact, 2.0, mu);
        let o = order(prev, j, err);
        println!("J={j} residual={residual:.3e} error={err:.3e}{}", o.map_or(String::new(), |v| format!(" order={v:.3}")));
        table.push(vec![j.to_string(), format!("{residual:.9e}"), format!("{err:.9e}"), fmt_order(o)]);
        ok &= residual <= 1e-8 && err.is_finite();
        prev = Some((j, err));
        last = Some(sol);
    }
    let conv = ctx.out.join("convergence.csv");
    table.write_csv(&conv)?;
    let sol_path = ctx.out.join("solution.csv");
    last.expect("at least one level").write_csv(&sol_path)?;
    let details = json!({ "lambda": [lambda.re, lambda.im], "manufactured": "cos(k (x_1 + ... + x_N)) exp(-y^2), k = 2 pi / box_length" });
    write_manifest(ctx, "solve_elliptic", window, details, &[conv, sol_path])?;
    Ok(ok)
}

pub fn solve_parabolic(ctx: &Context) -> Result<bool> {
    let cfg = &ctx.cfg;
    let pc = &cfg.parabolic;
    let spec = cfg.spec()?;
    let window = validate_window(&spec, &cfg.space()?);
    warn_window(&window);
    let man = Manufactured::new(&spec, cfg.grid.box_length);
    let mut table = Table::new(&["j", "steps", "relative_error", "observed_order"]);
    let mut prev = None;
    let mut ok = true;
    let mut outputs = Vec::new();
    let j0 = cfg.grid.levels[0];
    let finest = *cfg.grid.levels.last().expect("validated");
    for &j in &cfg.grid.levels {
        let steps = pc.steps * j / j0;
        let g = grid(cfg, j)?;
        let ops = ModeOperators::general(&spec, g.clone())?;
        let mu = ops.ops[0].form.measure;
        // u(t) = e^{-t} u_m, so f = -e^{-t} (u_m + L u_m).
        let u0 = Field::from_fn(g.clone(), |x, y| C::new(man.u(x, y), 0.0));
        let forcing_field = Field::from_fn(g.clone(), |x, y| C::new(-(man.u(x, y) + man.lu(x, y)), 0.0));
        let times = uniform_times(pc.t_end, steps);
        let forcing = Forcing::Separable { time: times.iter().map(|t| (-t).exp()).collect(), field: forcing_field };
        let every = (steps / pc.snapshots.max(1)).max(1);
        let run = evolve(&u0, &forcing, &ops, pc.scheme, &times, |k| j == finest && k % every == 0)?;
        let exact = u0.map(|v| v * (-pc.t_end).exp());
        let err = lp_norm(&run.last().sub(&exact), 2.0, mu) / lp_norm(&exact, 2.0, mu);
        let o = order(prev, j, err);
        println!("J={j} steps={steps} error={err:.3e}{}", o.map_or(String::new(), |v| format!(" order={v:.3}")));
        table.push(vec![j.to_string(), steps.to_string(), format!("{err:.9e}"), fmt_order(o)]);
        ok &= err.is_finite();
        prev = Some((j, err));
        if j == finest {
            outputs.extend(run.write_csvs(&ctx.out, "state")?);
        }
    }
    let conv = ctx.out.join("convergence.csv");
    table.write_csv(&conv)?;
    outputs.insert(0, conv);
    let details = json!({
        "scheme": pc.scheme,
        "t_end": pc.t_end,
        "steps": cfg.grid.levels.iter().map(|j| pc.steps * j / j0).collect::<Vec<_>>(),
        "manufactured": "exp(-t) cos(k (x_1 + ... + x_N)) exp(-y^2), k = 2 pi / box_length",
    });
    write_manifest(ctx, "solve_parabolic", window, details, &outputs)?;
    Ok(ok)
}

fn resolve_checks(suite: &str) -> Vec<String> {
    let reg = registry();
    match suite {
        "all" => reg.iter().map(|c| c.id.to_string()).collect(),
        "window" => reg.iter().filter(|c| c.window_dependent()).map(|c| c.id.to_string()).collect(),
        other => other.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect(),
    }
}

fn csv_paths(dir: &Path, results: &[degenop::harness::EstimateResult]) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = results.iter().filter_map(|r| r.csv.clone()).collect();
    v.push(dir.join("summary.csv"));
    v
}

pub fn verify(ctx: &Context, suite: &str) -> Result<bool> {
    let checks = resolve_checks(suite);
    if checks.is_empty() {
        return Err(ConfigError(format!("verify: no checks named in `{suite}`")).into());
    }
    let (model, _) = ctx.cfg.reduction()?;
    let scfg = ctx.cfg.suite(model, checks)?;
    let window = scfg.model.window();
    let results = run_suite(&scfg, Some(&ctx.out))?;
    for r in &results {
        println!("{} {} ({}): {}", if r.pass { "PASS" } else { "FAIL" }, r.estimate_id, r.anchor, r.detail);
    }
    let failed = results.iter().filter(|r| !r.pass).count();
    println!("{} of {} checks passed", results.len() - failed, results.len());
    // Paths relative to --out keep the manifest identical across output locations.
    let recorded: Vec<_> = results
        .iter()
        .cloned()
        .map(|mut r| {
            r.csv = r.csv.map(|p| p.strip_prefix(&ctx.out).map(Path::to_path_buf).unwrap_or(p));
            r
        })
        .collect();
    let details = json!({ "suite": suite, "suite_config": scfg, "results": recorded });
    write_manifest(ctx, "verify", window, details, &csv_paths(&ctx.out, &results))?;
    Ok(failed == 0)
}

fn set_parameter(cfg: &mut RunConfig, name: &str, v: f64) -> Result<()> {
    let o = &mut cfg.operator;
    match name {
        "m" => o.m = v,
        "p" => o.p = v,
        "alpha" => {
            o.alpha1 = v;
            o.alpha2 = v;
        }
        "alpha1" => o.alpha1 = v,
        "alpha2" => o.alpha2 = v,
        "drift_c" => o.drift_c = v,
        other => {
            return Err(ConfigError(format!("sweep: unknown parameter `{other}` (expected m, p, alpha, alpha1, alpha2 or drift_c)")).into())
        }
    }
    Ok(())
}

pub fn sweep(ctx: &Context, parameter: &str, start: f64, stop: f64, count: usize) -> Result<bool> {
    if count == 0 || !start.is_finite() || !stop.is_finite() || (count == 1 && start != stop) {
        return Err(ConfigError("sweep: need finite bounds and count >= 2 (or count = 1 with start = stop)".into()).into());
    }
    let checks = resolve_checks("window");
    let mut table = Table::new(&[
        "point", parameter, "window_value", "margin_lower", "margin_upper", "estimate_id", "pass", "constant", "drift", "agrees_with_window",
    ]);
    let mut outputs = Vec::new();
    let mut agree = true;
    let base_window = validate_window(&ctx.cfg.spec()?, &ctx.cfg.space()?);
    for i in 0..count {
        let v = if count == 1 { start } else { start + (stop - start) * i as f64 / (count - 1) as f64 };
        let mut cfg = ctx.cfg.clone();
        set_parameter(&mut cfg, parameter, v)?;
        cfg.validate()?;
        let w = validate_window(&cfg.spec()?, &cfg.space()?);
        let (model, _) = cfg.reduction()?;
        let scfg = cfg.suite(model, checks.clone())?;
        let dir = ctx.out.join(format!("point_{i:03}"));
        let results = run_suite(&scfg, Some(&dir))?;
        let passed = results.iter().filter(|r| r.pass).count();
        println!(
            "{parameter}={v:.4} window {} (margins {:+.3}, {:+.3}): {passed}/{} pass",
            if w.pass { "inside " } else { "outside" },
            w.margin_lower,
            w.margin_upper,
            results.len()
        );
        for r in &results {
            let fits = r.pass == w.pass;
            agree &= fits;
            table.push(vec![
                i.to_string(),
                format!("{v:.9e}"),
                format!("{:.9e}", w.value),
                format!("{:.9e}", w.margin_lower),
                format!("{:.9e}", w.margin_upper),
                r.estimate_id.clone(),
                r.pass.to_string(),
                format!("{:.9e}", r.constant),
                format!("{:.9e}", r.drift),
                fits.to_string(),
            ]);
        }
        outputs.extend(csv_paths(&dir, &results));
    }
    let path = ctx.out.join("sweep.csv");
    table.write_csv(&path)?;
    outputs.insert(0, path);
    let details = json!({ "parameter": parameter, "start": start, "stop": stop, "count": count, "checks": checks });
    write_manifest(ctx, "sweep", base_window, details, &outputs)?;
    if !agree {
        println!("some checks disagree with the window; see sweep.csv");
    }
    Ok(agree)
}
