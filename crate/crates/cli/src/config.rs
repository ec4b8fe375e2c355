//! Experiment configuration, read from TOML with a strict schema.

use std::path::{Path, PathBuf};

use critbranch::models::{
    BranchingDiffusion1D, CountLaw, FiniteOffspring, LevyKernel, Model, MultiTypeCSBP, MultiTypeGW, SlackOffspring,
    StableCSBP,
};
use critbranch::regvar::TailIndex;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub task: Option<Task>,
    #[serde(default)]
    pub numeric: NumericConfig,
    #[serde(default)]
    pub rng: RngConfig,
    #[serde(default)]
    pub io: IoConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Spectral,
    Solve,
    Simulate,
    VerifyKolmogorov,
    VerifyYaglom,
    Audit,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Spectral => "spectral",
            Task::Solve => "solve",
            Task::Simulate => "simulate",
            Task::VerifyKolmogorov => "verify_kolmogorov",
            Task::VerifyYaglom => "verify_yaglom",
            Task::Audit => "audit",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum OffspringConfig {
    Slack {
        alpha: f64,
        c: f64,
        #[serde(default = "one")]
        mean: f64,
    },
    Finite {
        pmf: Vec<f64>,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    /// Single-type GW with generalized Slack offspring.
    SlackGw {
        beta: f64,
        alpha: f64,
        c: f64,
        #[serde(default = "one")]
        mean: f64,
    },
    BinaryGw {
        beta: f64,
    },
    MultitypeGw {
        beta: Vec<f64>,
        offspring: Vec<OffspringConfig>,
        displacement: Vec<Vec<f64>>,
    },
    Diffusion {
        d: f64,
        beta: f64,
        alpha: f64,
        c: f64,
        #[serde(default = "default_grid_points")]
        grid_points: usize,
    },
    StableCsbp {
        kappa: f64,
        alpha: f64,
    },
    MultitypeCsbp {
        b: Vec<f64>,
        c: Vec<f64>,
        nu: Vec<LevyKernel>,
        beta: Vec<f64>,
        gamma_tilde: Vec<f64>,
        jump: Vec<LevyKernel>,
        pi: Vec<Vec<f64>>,
    },
}

fn default_grid_points() -> usize {
    63
}

/// Estimator for `simulate` and Monte Carlo verdicts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum McMethod {
    #[default]
    Direct,
    Spine,
    SpineFull,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    #[default]
    Deterministic,
    MonteCarlo,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NumericConfig {
    /// Final time `T`.
    pub horizon: f64,
    pub dt: f64,
    pub t_grid: Option<Vec<f64>>,
    pub theta_grid: Option<Vec<f64>>,
    pub n_reps: usize,
    pub cap: u64,
    pub method: McMethod,
    pub source: Source,
    /// Starting type (GW) for single-particle runs.
    pub start_type: usize,
    /// Starting position (diffusion); defaults to the midpoint.
    pub start_position: Option<f64>,
    /// Initial measure as weights per type, overriding `start_type` for
    /// deterministic runs.
    pub start_weights: Option<Vec<f64>>,
    /// Test function direction for Yaglom checks; defaults to all ones.
    pub f_dir: Option<Vec<f64>>,
    pub relative_tol: f64,
    pub sigmas: f64,
    /// Largest Brownian increment for direct diffusion runs.
    pub mc_dt: f64,
    /// Step for spine Laplace tables.
    pub table_dt: f64,
}

impl Default for NumericConfig {
    fn default() -> Self {
        NumericConfig {
            horizon: 100.0,
            dt: 0.01,
            t_grid: None,
            theta_grid: None,
            n_reps: 10_000,
            cap: 100_000,
            method: McMethod::Direct,
            source: Source::Deterministic,
            start_type: 0,
            start_position: None,
            start_weights: None,
            f_dir: None,
            relative_tol: critbranch::verify::DETERMINISTIC_TOL,
            sigmas: critbranch::verify::MC_SIGMAS,
            mc_dt: 0.02,
            table_dt: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RngConfig {
    pub seed: u64,
    pub threads: usize,
}

impl Default for RngConfig {
    fn default() -> Self {
        RngConfig { seed: 0, threads: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IoConfig {
    pub out_dir: PathBuf,
    /// Any of `jsonl`, `csv`.
    pub formats: Vec<String>,
}

impl Default for IoConfig {
    fn default() -> Self {
        IoConfig { out_dir: PathBuf::from("out"), formats: vec!["jsonl".into(), "csv".into()] }
    }
}

/// Command-line and environment overrides, applied after parsing.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub cap: Option<u64>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.rng.seed = s;
        }
        if let Some(t) = o.threads {
            self.rng.threads = t;
        }
        if let Some(d) = &o.out_dir {
            self.io.out_dir = d.clone();
        }
        if let Some(c) = o.cap {
            self.numeric.cap = c;
        }
    }

    /// Schema checks beyond what the parser enforces; model parameters are
    /// checked by building the model.
    pub fn validate(&self) -> Result<(), CliError> {
        let n = &self.numeric;
        let bad = |field: &str, why: &str| Err(CliError::Config(format!("numeric.{field}: {why}")));
        if !(n.horizon > 0.0 && n.horizon.is_finite()) {
            return bad("horizon", "must be positive");
        }
        if !(n.dt > 0.0 && n.dt <= n.horizon) {
            return bad("dt", "must be positive and at most the horizon");
        }
        if let Some(g) = &n.t_grid {
            if g.is_empty() || g.iter().any(|t| !(*t >= 0.0)) || g.windows(2).any(|w| w[1] <= w[0]) {
                return bad("t_grid", "must be increasing and non-negative");
            }
        }
        if let Some(g) = &n.theta_grid {
            if g.is_empty() || g.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
                return bad("theta_grid", "must be finite and non-negative");
            }
        }
        if n.n_reps == 0 {
            return bad("n_reps", "must be positive");
        }
        if n.cap == 0 {
            return bad("cap", "must be positive");
        }
        if !(n.relative_tol > 0.0) || !(n.sigmas > 0.0) {
            return bad("relative_tol", "tolerances must be positive");
        }
        if !(n.mc_dt > 0.0) || !(n.table_dt > 0.0) {
            return bad("mc_dt", "steps must be positive");
        }
        if self.rng.threads == 0 {
            return Err(CliError::Config("rng.threads: must be positive".into()));
        }
        for f in &self.io.formats {
            if f != "jsonl" && f != "csv" {
                return Err(CliError::Config(format!("io.formats: unknown format {f:?}")));
            }
        }
        self.build_model()?;
        Ok(())
    }

    pub fn build_model(&self) -> Result<Model, CliError> {
        let err = |e: critbranch::Error| CliError::Config(format!("model: {e}"));
        let tail = |a: f64| TailIndex::new(a).map_err(err);
        Ok(match &self.model {
            ModelConfig::SlackGw { beta, alpha, c, mean } => {
                let law = SlackOffspring::with_mean(tail(*alpha)?, *c, *mean).map_err(err)?;
                Model::gw(MultiTypeGW::slack_single(*beta, law).map_err(err)?)
            }
            ModelConfig::BinaryGw { beta } => Model::gw(
                MultiTypeGW::single_type(*beta, CountLaw::Finite(FiniteOffspring::binary())).map_err(err)?,
            ),
            ModelConfig::MultitypeGw { beta, offspring, displacement } => {
                let laws = offspring
                    .iter()
                    .map(|o| match o {
                        OffspringConfig::Slack { alpha, c, mean } => {
                            Ok(CountLaw::Slack(SlackOffspring::with_mean(tail(*alpha)?, *c, *mean).map_err(err)?))
                        }
                        OffspringConfig::Finite { pmf } => {
                            Ok(CountLaw::Finite(FiniteOffspring::new(pmf.clone()).map_err(err)?))
                        }
                    })
                    .collect::<Result<Vec<_>, CliError>>()?;
                Model::gw(MultiTypeGW::new(beta.clone(), laws, displacement.clone()).map_err(err)?)
            }
            ModelConfig::Diffusion { d, beta, alpha, c, grid_points } => {
                Model::Diffusion(BranchingDiffusion1D::critical(*d, *beta, tail(*alpha)?, *c, *grid_points).map_err(err)?)
            }
            ModelConfig::StableCsbp { kappa, alpha } => {
                Model::StableCsbp(StableCSBP::new(*kappa, tail(*alpha)?).map_err(err)?)
            }
            ModelConfig::MultitypeCsbp { b, c, nu, beta, gamma_tilde, jump, pi } => {
                let m = MultiTypeCSBP {
                    b: b.clone(),
                    c: c.clone(),
                    nu: nu.clone(),
                    beta: beta.clone(),
                    gamma_tilde: gamma_tilde.clone(),
                    jump: jump.clone(),
                    pi: pi.clone(),
                };
                m.validate().map_err(err)?;
                Model::MultiTypeCsbp(m)
            }
        })
    }

    /// Canonical JSON used for hashing and records.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::config_hash;

    const SLACK: &str = "[model]\ntype = \"slack_gw\"\nbeta = 1.0\nalpha = 0.5\nc = 0.5\n";

    #[test]
    fn defaults_fill_missing_sections() {
        let cfg = ExperimentConfig::from_toml(SLACK).unwrap();
        assert_eq!(cfg.rng.threads, 1);
        assert_eq!(cfg.numeric.method, McMethod::Direct);
        assert!(cfg.task.is_none());
    }

    #[test]
    fn unknown_and_invalid_fields_are_rejected() {
        assert!(ExperimentConfig::from_toml(&format!("{SLACK}typo = 1\n")).is_err());
        assert!(ExperimentConfig::from_toml(&format!("{SLACK}[numeric]\nhorizon = -1.0\n")).is_err());
        assert!(ExperimentConfig::from_toml(&SLACK.replace("c = 0.5", "c = 0.9")).is_err());
        assert!(ExperimentConfig::from_toml(&format!("{SLACK}[io]\nformats = [\"xml\"]\n")).is_err());
    }

    #[test]
    fn hash_ignores_threads_and_output() {
        let base = ExperimentConfig::from_toml(SLACK).unwrap();
        let mut other = base.clone();
        other.apply(&Overrides { threads: Some(8), out_dir: Some("elsewhere".into()), ..Default::default() });
        assert_eq!(config_hash(&base), config_hash(&other));
        other.apply(&Overrides { seed: Some(3), ..Default::default() });
        assert_ne!(config_hash(&base), config_hash(&other));
    }
}
