//! TOML run configuration. Every table rejects unknown keys so that a typo
//! fails loudly instead of silently falling back to a default.

use std::f64::consts::PI;
use std::path::Path;

use anyhow::Context;
use degenop::grid::default_grading;
use degenop::harness::SuiteConfig;
use degenop::params::reduce_unchecked;
use degenop::semigroup::Scheme;
use degenop::{ModelParams, OperatorSpec, SpaceSpec, TransformChain};
use serde::{Deserialize, Serialize};

use crate::ConfigError;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub operator: OperatorSection,
    pub grid: GridSection,
    pub elliptic: EllipticSection,
    pub parabolic: ParabolicSection,
    pub suite: SuiteSection,
}

/// Flat operator and space keys; defaults give the Laplacian on `L^2`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OperatorSection {
    pub dimension: usize,
    pub q_matrix: Vec<f64>,
    pub q_vector: Vec<f64>,
    pub gamma: f64,
    pub drift_b: Vec<f64>,
    pub drift_c: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub p: f64,
    pub m: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub levels: Vec<usize>,
    pub y_max: f64,
    pub nx: usize,
    pub box_length: f64,
    /// Defaults to the grading suited to `alpha2`.
    pub grading: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EllipticSection {
    pub lambda_re: f64,
    pub lambda_im: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParabolicSection {
    pub scheme: Scheme,
    pub t_end: f64,
    /// Steps on the coarsest level; finer levels scale them with `J`.
    pub steps: usize,
    /// Snapshot files written on the finest level, besides the initial state.
    pub snapshots: usize,
}

/// Overrides of the suite defaults. The model comes from `[operator]`.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SuiteSection {
    pub levels: Option<Vec<usize>>,
    pub y_max: Option<f64>,
    pub nx: Option<usize>,
    pub box_length: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: SuiteConfig::default().seed,
            operator: OperatorSection::default(),
            grid: GridSection::default(),
            elliptic: EllipticSection::default(),
            parabolic: ParabolicSection::default(),
            suite: SuiteSection::default(),
        }
    }
}

impl Default for OperatorSection {
    fn default() -> Self {
        Self {
            dimension: 1,
            q_matrix: vec![1.0],
            q_vector: vec![0.0],
            gamma: 1.0,
            drift_b: vec![0.0],
            drift_c: 0.0,
            alpha1: 0.0,
            alpha2: 0.0,
            p: 2.0,
            m: 0.0,
        }
    }
}

impl Default for GridSection {
    fn default() -> Self {
        Self { levels: vec![64, 128, 256], y_max: 6.0, nx: 16, box_length: 2.0 * PI, grading: None }
    }
}

impl Default for EllipticSection {
    fn default() -> Self {
        Self { lambda_re: 1.0, lambda_im: 0.0 }
    }
}

impl Default for ParabolicSection {
    fn default() -> Self {
        Self { scheme: Scheme::CrankNicolson, t_end: 0.5, steps: 16, snapshots: 4 }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())).into())
    }

    pub fn spec(&self) -> anyhow::Result<OperatorSpec> {
        let o = &self.operator;
        OperatorSpec::new(o.dimension, o.q_matrix.clone(), o.q_vector.clone(), o.gamma, o.drift_b.clone(), o.drift_c, o.alpha1, o.alpha2)
            .map_err(|e| ConfigError(format!("[operator] {e}")).into())
    }

    pub fn space(&self) -> anyhow::Result<SpaceSpec> {
        SpaceSpec::new(self.operator.p, self.operator.m).map_err(|e| ConfigError(format!("[operator] {e}")).into())
    }

    /// The model operator and the chain that produced it, window or not.
    pub fn reduction(&self) -> anyhow::Result<(ModelParams, TransformChain)> {
        reduce_unchecked(&self.spec()?, &self.space()?).map_err(|e| ConfigError(format!("[operator] {e}")).into())
    }

    pub fn grading(&self) -> f64 {
        self.grid.grading.unwrap_or_else(|| default_grading(self.operator.alpha2))
    }

    /// Checks the parts every command relies on.
    pub fn validate(&self) -> anyhow::Result<()> {
        self.spec()?;
        self.space()?;
        let g = &self.grid;
        if g.levels.is_empty() || g.levels.windows(2).any(|w| w[1] <= w[0]) || g.levels[0] < 8 {
            return Err(ConfigError("[grid] levels: need increasing levels, all >= 8".into()).into());
        }
        if !(g.y_max > 0.0) {
            return Err(ConfigError("[grid] y_max: must be positive".into()).into());
        }
        if !(g.box_length > 0.0) || g.nx < 2 {
            return Err(ConfigError("[grid] nx, box_length: need nx >= 2 and box_length > 0".into()).into());
        }
        if let Some(k) = g.grading {
            if !(k >= 1.0) {
                return Err(ConfigError("[grid] grading: must be >= 1".into()).into());
            }
        }
        if !(self.elliptic.lambda_re > 0.0) || !self.elliptic.lambda_im.is_finite() {
            return Err(ConfigError("[elliptic] lambda_re: need Re lambda > 0".into()).into());
        }
        let p = &self.parabolic;
        if !(p.t_end > 0.0) || p.steps == 0 {
            return Err(ConfigError("[parabolic] t_end, steps: need t_end > 0 and steps >= 1".into()).into());
        }
        Ok(())
    }

    /// Suite settings for `model`, with the suite defaults where not overridden.
    pub fn suite(&self, model: ModelParams, checks: Vec<String>) -> anyhow::Result<SuiteConfig> {
        let d = SuiteConfig::default();
        let s = &self.suite;
        let cfg = SuiteConfig {
            model,
            checks,
            levels: s.levels.clone().unwrap_or(d.levels),
            y_max: s.y_max.unwrap_or(d.y_max),
            nx: s.nx.unwrap_or(d.nx),
            box_length: s.box_length.unwrap_or(d.box_length),
            seed: self.seed,
        };
        cfg.validate().with_context(|| "[suite]").map_err(|e| ConfigError(format!("{e:#}")))?;
        Ok(cfg)
    }
}
