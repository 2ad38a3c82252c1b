//! Run specification, read from TOML.

use std::path::{Path, PathBuf};

use corefed::federation::BatchSize;
use corefed::{Aggregator, ModelSpec, RoundConfig, SolverConfig, UtilityConfig, ViolationPolicy};
use serde::{Deserialize, Serialize};

use crate::Failure;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    pub model: ModelSection,
    pub data: DataSection,
    #[serde(default)]
    pub partition: PartitionSection,
    #[serde(default)]
    pub utility: UtilitySection,
    #[serde(default)]
    pub federation: FederationSection,
    #[serde(default)]
    pub solver: SolverSection,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelChoice {
    Linreg,
    Logreg,
    Mlp,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelChoice,
    /// Logistic data-term weight.
    #[serde(default = "one")]
    pub alpha: f64,
    /// Hidden layer widths of the MLP.
    #[serde(default)]
    pub hidden: Vec<usize>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    SyntheticClassification,
    SyntheticRegression,
    Csv,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub source: DataSource,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_classes")]
    pub n_classes: usize,
    #[serde(default = "default_separation")]
    pub separation: f64,
    /// Label noise of the synthetic regression.
    #[serde(default = "default_label_noise")]
    pub label_noise: f64,
    /// Ground truth of the synthetic regression; defaults to all ones.
    pub true_theta: Option<Vec<f64>>,
    pub path: Option<PathBuf>,
    pub target: Option<String>,
    #[serde(default = "yes")]
    pub normalize: bool,
}

fn default_n() -> usize {
    300
}
fn default_dim() -> usize {
    5
}
fn default_classes() -> usize {
    2
}
fn default_separation() -> f64 {
    2.0
}
fn default_label_noise() -> f64 {
    0.1
}
fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionSection {
    #[serde(default = "default_agents")]
    pub n_agents: usize,
    /// Omit for an even IID split.
    pub dirichlet_alpha: Option<f64>,
    #[serde(default = "yes")]
    pub strict: bool,
    /// Per-agent feature noise; empty means none.
    #[serde(default)]
    pub noise_sigmas: Vec<f64>,
}

fn default_agents() -> usize {
    3
}

impl Default for PartitionSection {
    fn default() -> Self {
        PartitionSection { n_agents: 3, dirichlet_alpha: None, strict: true, noise_sigmas: Vec::new() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtilitySection {
    /// Explicit caps. With `calibrate`, they act as lower bounds.
    pub caps: Option<Vec<f64>>,
    #[serde(default = "yes")]
    pub calibrate: bool,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_safety")]
    pub safety_factor: f64,
    #[serde(default = "one")]
    pub cap_floor: f64,
    #[serde(default)]
    pub on_violation: ViolationPolicy,
    pub weights: Option<Vec<f64>>,
}

fn default_epsilon() -> f64 {
    1e-6
}
fn default_safety() -> f64 {
    1.5
}

impl Default for UtilitySection {
    fn default() -> Self {
        UtilitySection {
            caps: None,
            calibrate: true,
            epsilon: default_epsilon(),
            safety_factor: default_safety(),
            cap_floor: 1.0,
            on_violation: ViolationPolicy::Error,
            weights: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FederationSection {
    #[serde(default = "default_aggregator")]
    pub aggregator: String,
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    #[serde(default = "default_epochs")]
    pub local_epochs: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    /// Defaults to every agent.
    pub clients_per_round: Option<usize>,
    /// Omit for full-batch local steps.
    pub batch_size: Option<usize>,
    #[serde(default)]
    pub trace_params: bool,
}

fn default_aggregator() -> String {
    "corefed".into()
}
fn default_rounds() -> usize {
    100
}
fn default_epochs() -> usize {
    1
}
fn default_lr() -> f64 {
    0.05
}

impl Default for FederationSection {
    fn default() -> Self {
        FederationSection {
            aggregator: default_aggregator(),
            rounds: default_rounds(),
            local_epochs: default_epochs(),
            learning_rate: default_lr(),
            clients_per_round: None,
            batch_size: None,
            trace_params: false,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    /// Also solve the centralized problem after training.
    #[serde(default)]
    pub oracle: bool,
    #[serde(default = "default_iters")]
    pub max_iters: usize,
    pub grad_tol: Option<f64>,
    #[serde(default = "default_radius")]
    pub domain_radius: f64,
}

fn default_iters() -> usize {
    20_000
}
fn default_radius() -> f64 {
    1e3
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection { oracle: false, max_iters: default_iters(), grad_tol: None, domain_radius: default_radius() }
    }
}

fn invalid(field: &str, msg: impl std::fmt::Display) -> Failure {
    Failure::Config(format!("{field}: {msg}"))
}

impl RunSpec {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Config(format!("cannot read config {}: {e}", path.display())))?;
        let spec: RunSpec = toml::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), Failure> {
        let d = &self.data;
        if d.n == 0 {
            return Err(invalid("data.n", "must be >= 1"));
        }
        if d.dim == 0 {
            return Err(invalid("data.dim", "must be >= 1"));
        }
        if d.n_classes < 2 {
            return Err(invalid("data.n_classes", format!("must be >= 2, got {}", d.n_classes)));
        }
        if !(d.separation >= 0.0 && d.separation.is_finite()) {
            return Err(invalid("data.separation", format!("must be >= 0, got {}", d.separation)));
        }
        if !(d.label_noise >= 0.0 && d.label_noise.is_finite()) {
            return Err(invalid("data.label_noise", format!("must be >= 0, got {}", d.label_noise)));
        }
        if let Some(t) = &d.true_theta {
            if t.len() != d.dim {
                return Err(invalid("data.true_theta", format!("has {} entries but data.dim = {}", t.len(), d.dim)));
            }
        }
        match d.source {
            DataSource::Csv if d.path.is_none() => return Err(invalid("data.path", "required when source = \"csv\"")),
            DataSource::Csv if d.target.is_none() => {
                return Err(invalid("data.target", "required when source = \"csv\""))
            }
            DataSource::SyntheticRegression if self.model.kind != ModelChoice::Linreg => {
                return Err(invalid("data.source", "synthetic_regression needs model.kind = \"linreg\""))
            }
            DataSource::SyntheticClassification if self.model.kind == ModelChoice::Linreg => {
                return Err(invalid("data.source", "synthetic_classification needs a classification model"))
            }
            DataSource::SyntheticClassification if self.model.kind == ModelChoice::Logreg && d.n_classes != 2 => {
                return Err(invalid("data.n_classes", "logistic regression is binary; use 2"))
            }
            _ => {}
        }

        let m = &self.model;
        if !(m.alpha >= 0.0 && m.alpha.is_finite()) {
            return Err(invalid("model.alpha", format!("must be >= 0, got {}", m.alpha)));
        }
        if m.kind == ModelChoice::Mlp && (m.hidden.is_empty() || m.hidden.contains(&0)) {
            return Err(invalid("model.hidden", "the MLP needs at least one hidden layer of positive width"));
        }

        let p = &self.partition;
        if p.n_agents == 0 {
            return Err(invalid("partition.n_agents", "must be >= 1"));
        }
        if let Some(a) = p.dirichlet_alpha {
            if !(a > 0.0 && a.is_finite()) {
                return Err(invalid("partition.dirichlet_alpha", format!("must be > 0, got {a}")));
            }
            if self.model.kind == ModelChoice::Linreg {
                return Err(invalid("partition.dirichlet_alpha", "label partitioning needs a classification task"));
            }
        }
        if !p.noise_sigmas.is_empty() && p.noise_sigmas.len() != p.n_agents {
            return Err(invalid(
                "partition.noise_sigmas",
                format!("has {} entries for {} agents", p.noise_sigmas.len(), p.n_agents),
            ));
        }
        if p.noise_sigmas.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(invalid("partition.noise_sigmas", "entries must be finite and >= 0"));
        }

        let u = &self.utility;
        if let Some(caps) = &u.caps {
            if caps.len() != p.n_agents {
                return Err(invalid("utility.caps", format!("has {} entries for {} agents", caps.len(), p.n_agents)));
            }
            if caps.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
                return Err(invalid("utility.caps", "entries must be > 0"));
            }
        } else if !u.calibrate {
            return Err(invalid("utility.caps", "required when utility.calibrate = false"));
        }
        if let Some(w) = &u.weights {
            if w.len() != p.n_agents {
                return Err(invalid("utility.weights", format!("has {} entries for {} agents", w.len(), p.n_agents)));
            }
            if w.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
                return Err(invalid("utility.weights", "entries must be > 0"));
            }
        }
        self.utility_config().validate().map_err(|e| invalid("utility", e))?;

        let f = &self.federation;
        self.aggregator()?;
        if f.local_epochs == 0 {
            return Err(invalid("federation.local_epochs", "must be >= 1"));
        }
        if !(f.learning_rate > 0.0 && f.learning_rate.is_finite()) {
            return Err(invalid("federation.learning_rate", format!("must be > 0, got {}", f.learning_rate)));
        }
        if let Some(k) = f.clients_per_round {
            if k == 0 || k > p.n_agents {
                return Err(invalid(
                    "federation.clients_per_round",
                    format!("must lie in 1..={}, got {k}", p.n_agents),
                ));
            }
        }
        if f.batch_size == Some(0) {
            return Err(invalid("federation.batch_size", "must be >= 1"));
        }

        let s = &self.solver;
        if let Some(t) = s.grad_tol {
            if !(t > 0.0) {
                return Err(invalid("solver.grad_tol", format!("must be > 0, got {t}")));
            }
        }
        if !(s.domain_radius > 0.0) {
            return Err(invalid("solver.domain_radius", format!("must be > 0, got {}", s.domain_radius)));
        }
        Ok(())
    }

    pub fn aggregator(&self) -> Result<Aggregator, Failure> {
        self.federation.aggregator.parse().map_err(|e| invalid("federation.aggregator", e))
    }

    pub fn utility_config(&self) -> UtilityConfig {
        let u = &self.utility;
        UtilityConfig {
            epsilon: u.epsilon,
            on_violation: u.on_violation,
            safety_factor: u.safety_factor,
            cap_floor: u.cap_floor,
        }
    }

    pub fn model_spec(&self, input_dim: usize, n_classes: usize) -> ModelSpec {
        match self.model.kind {
            ModelChoice::Linreg => ModelSpec::linreg(input_dim),
            ModelChoice::Logreg => ModelSpec::logreg(input_dim, self.model.alpha),
            ModelChoice::Mlp => {
                let mut dims = self.model.hidden.clone();
                dims.push(n_classes);
                ModelSpec::smooth_mlp(input_dim, dims)
            }
        }
    }

    pub fn round_config(&self, aggregator: Aggregator) -> RoundConfig {
        let f = &self.federation;
        RoundConfig {
            total_rounds: f.rounds,
            local_epochs: f.local_epochs,
            learning_rate: f.learning_rate,
            clients_per_round: f.clients_per_round.unwrap_or(self.partition.n_agents),
            batch_size: f.batch_size.map_or(BatchSize::FullBatch, BatchSize::MiniBatch),
            aggregator,
            seed: self.seed,
            utility: self.utility_config(),
            trace_params: f.trace_params,
        }
    }

    pub fn solver_config(&self, spec: &ModelSpec) -> SolverConfig {
        let base = SolverConfig::for_model(spec);
        SolverConfig {
            max_iters: self.solver.max_iters,
            grad_tol: self.solver.grad_tol.unwrap_or(base.grad_tol),
            domain_radius: self.solver.domain_radius,
            seed: self.seed,
            utility: self.utility_config(),
            ..base
        }
    }
}
