//! Centralized Nash-welfare maximization over a convex domain.
//!
//! Projected gradient ascent with a Barzilai–Borwein trial step and Armijo
//! backtracking. The domain is an L2 ball (possibly unbounded) for the
//! regression and classification models and the probability simplex for the
//! simplex toy. Every accepted step keeps all utilities above `M·ε`.

use ndarray::Array1;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{self, ModelKind, ModelSpec, Predictor};
use crate::utility::{AgentProfile, NashObjective, UtilityConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmijoParams {
    pub shrink: f64,
    pub sufficient_increase: f64,
}

impl Default for ArmijoParams {
    fn default() -> Self {
        ArmijoParams { shrink: 0.5, sufficient_increase: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iters: usize,
    pub grad_tol: f64,
    /// Radius of the feasible L2 ball; `f64::INFINITY` means unconstrained.
    /// Ignored for the simplex toy.
    pub domain_radius: f64,
    pub armijo: ArmijoParams,
    pub seed: u64,
    /// Standard deviation of a seeded Gaussian start; 0 starts at the origin.
    pub init_scale: f64,
    pub utility: UtilityConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iters: 20_000,
            grad_tol: 1e-8,
            domain_radius: 1e3,
            armijo: ArmijoParams::default(),
            seed: 0,
            init_scale: 0.0,
            utility: UtilityConfig::default(),
        }
    }
}

impl SolverConfig {
    /// Defaults with the tolerance appropriate to the model: tight for convex
    /// losses, first-order approximate for the MLP.
    pub fn for_model(spec: &ModelSpec) -> Self {
        let grad_tol = if spec.kind.is_convex() { 1e-8 } else { 1e-4 };
        SolverConfig { grad_tol, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.grad_tol > 0.0) {
            return Err(Error::InvalidParams(format!("grad_tol must be > 0, got {}", self.grad_tol)));
        }
        if !(self.domain_radius > 0.0) {
            return Err(Error::InvalidParams(format!("domain radius must be > 0, got {}", self.domain_radius)));
        }
        let a = self.armijo;
        if !(a.shrink > 0.0 && a.shrink < 1.0 && a.sufficient_increase > 0.0 && a.sufficient_increase < 1.0) {
            return Err(Error::InvalidParams("armijo parameters must lie in (0, 1)".into()));
        }
        self.utility.validate()
    }

    pub fn domain(&self, spec: &ModelSpec) -> Domain {
        match spec.kind {
            ModelKind::SimplexToy { .. } => Domain::Simplex,
            _ if self.domain_radius.is_finite() => Domain::Ball(self.domain_radius),
            _ => Domain::Unconstrained,
        }
    }
}

/// Feasible set for the flat parameter vector (intercept included).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Domain {
    Unconstrained,
    Ball(f64),
    Simplex,
}

impl Domain {
    pub fn project_flat(&self, x: &Array1<f64>) -> Array1<f64> {
        match *self {
            Domain::Unconstrained => x.clone(),
            Domain::Ball(r) => {
                let norm = x.dot(x).sqrt();
                if norm > r {
                    x * (r / norm)
                } else {
                    x.clone()
                }
            }
            Domain::Simplex => Array1::from(project_simplex(x.as_slice().expect("contiguous"))),
        }
    }

    pub fn is_constrained(&self) -> bool {
        !matches!(self, Domain::Unconstrained)
    }
}

/// Euclidean projection onto `{x ≥ 0, Σx = 1}` by the sorted-threshold rule.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    if v.is_empty() {
        return Vec::new();
    }
    let mut sorted = v.to_vec();
    // stable sort keeps index order among equal coordinates
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if u - t > 0.0 {
            tau = t;
        }
    }
    v.iter().map(|&x| (x - tau).max(0.0)).collect()
}

pub fn project(theta: &Predictor, spec: &ModelSpec, domain: &Domain) -> Result<Predictor> {
    Predictor::from_flat(spec, &domain.project_flat(&theta.to_flat()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub theta_star: Predictor,
    pub objective: f64,
    /// Gradient-mapping norm `||P(θ + ∇f) − θ||` (the plain gradient norm when
    /// unconstrained).
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Maximizes `Σ wᵢ log uᵢ(θ)` over the configured domain.
pub fn maximize_nash(
    agents: &[AgentProfile],
    spec: &ModelSpec,
    cfg: &SolverConfig,
    weights_on: bool,
) -> Result<SolveResult> {
    maximize_objective(&NashObjective::new(spec, agents, &cfg.utility, weights_on), cfg)
}

/// As [`maximize_nash`] with agent `i`'s utility multiplied by `scales[i]`.
pub fn maximize_nash_scaled(
    agents: &[AgentProfile],
    spec: &ModelSpec,
    cfg: &SolverConfig,
    weights_on: bool,
    scales: &[f64],
) -> Result<SolveResult> {
    if scales.len() != agents.len() {
        return Err(Error::LengthMismatch { left: agents.len(), right: scales.len() });
    }
    if scales.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
        return Err(Error::InvalidParams("utility scales must be positive".into()));
    }
    let objective = NashObjective::new(spec, agents, &cfg.utility, weights_on).with_scales(scales.to_vec());
    maximize_objective(&objective, cfg)
}

fn maximize_objective(objective: &NashObjective<'_>, cfg: &SolverConfig) -> Result<SolveResult> {
    cfg.validate()?;
    let spec = objective.spec;
    spec.validate()?;
    crate::utility::validate_agents(objective.agents)?;
    if objective.agents.is_empty() {
        return Err(Error::InvalidParams("no agents".into()));
    }
    let domain = cfg.domain(spec);
    let x0 = initial_point(spec, cfg, &domain);
    let eval = |x: &Array1<f64>| -> Result<Option<(f64, Array1<f64>)>> {
        let theta = Predictor::from_flat(spec, x)?;
        match objective.value_and_gradient(&theta) {
            Ok(vg) => Ok(Some(vg)),
            Err(Error::NonPositiveUtility { .. }) | Err(Error::NumericOverflow(_)) => Ok(None),
            Err(e) => Err(e),
        }
    };
    if eval(&x0)?.is_none() {
        // Surface the offending agent.
        objective.utilities(&Predictor::from_flat(spec, &x0)?)?;
        return Err(Error::InvalidParams("initial point is infeasible".into()));
    }
    projected_ascent(spec, eval, x0, &domain, cfg)
}

/// Maximizes one agent's utility (minimizes its loss) over the domain.
pub fn maximize_agent_utility(agent: &AgentProfile, spec: &ModelSpec, cfg: &SolverConfig) -> Result<SolveResult> {
    cfg.validate()?;
    spec.validate()?;
    agent.validate()?;
    let domain = cfg.domain(spec);
    let x0 = initial_point(spec, cfg, &domain);
    let eval = |x: &Array1<f64>| -> Result<Option<(f64, Array1<f64>)>> {
        let theta = Predictor::from_flat(spec, x)?;
        let l = match models::loss(spec, &theta, &agent.dataset) {
            Ok(l) => l,
            Err(Error::NumericOverflow(_)) => return Ok(None),
            Err(e) => return Err(e),
        };
        let g = models::loss_gradient(spec, &theta, &agent.dataset)?;
        Ok(Some((agent.cap - l, -g)))
    };
    projected_ascent(spec, eval, x0, &domain, cfg)
}

/// `||∇L(θ)||`, projected when the domain is constrained. Small values mark
/// an approximate fixed point of the core correspondence.
pub fn fixed_point_residual(
    spec: &ModelSpec,
    theta: &Predictor,
    agents: &[AgentProfile],
    cfg: &SolverConfig,
) -> Result<f64> {
    let g = NashObjective::new(spec, agents, &cfg.utility, false).gradient(theta)?;
    Ok(gradient_mapping_norm(&theta.to_flat(), &g, &cfg.domain(spec)))
}

fn gradient_mapping_norm(x: &Array1<f64>, g: &Array1<f64>, domain: &Domain) -> f64 {
    if domain.is_constrained() {
        let step = domain.project_flat(&(x + g)) - x;
        step.dot(&step).sqrt()
    } else {
        g.dot(g).sqrt()
    }
}

fn initial_point(spec: &ModelSpec, cfg: &SolverConfig, domain: &Domain) -> Array1<f64> {
    let mut x = Array1::zeros(spec.flat_len());
    if cfg.init_scale > 0.0 {
        let mut rng = crate::rng::stream_rng(cfg.seed, crate::rng::stream::SHUFFLE, &[0x501e]);
        x.mapv_inplace(|_| cfg.init_scale * rng.sample::<f64, _>(StandardNormal));
    }
    let x = domain.project_flat(&x);
    if *domain == Domain::Simplex && cfg.init_scale > 0.0 {
        // Projection can land on a face where some utility is zero; pull the
        // start halfway to the barycentre.
        let n = x.len() as f64;
        return x.mapv(|v| 0.5 * v + 0.5 / n);
    }
    x
}

const MAX_BACKTRACKS: usize = 80;

fn projected_ascent<F>(
    spec: &ModelSpec,
    eval: F,
    x0: Array1<f64>,
    domain: &Domain,
    cfg: &SolverConfig,
) -> Result<SolveResult>
where
    F: Fn(&Array1<f64>) -> Result<Option<(f64, Array1<f64>)>>,
{
    let concave = spec.kind.is_convex();
    let mut x = x0;
    let (mut f, mut g) = eval(&x)?.ok_or_else(|| Error::InvalidParams("initial point is infeasible".into()))?;
    let mut trial = 1.0_f64;
    let mut iterations = 0;
    let mut grad_norm = gradient_mapping_norm(&x, &g, domain);

    let finish = |x: &Array1<f64>, f: f64, grad_norm: f64, iterations: usize, converged: bool| -> Result<SolveResult> {
        let result =
            SolveResult { theta_star: Predictor::from_flat(spec, x)?, objective: f, grad_norm, iterations, converged };
        if converged {
            Ok(result)
        } else {
            Err(Error::NotConverged(Box::new(result)))
        }
    };

    while iterations < cfg.max_iters {
        if grad_norm <= cfg.grad_tol {
            return finish(&x, f, grad_norm, iterations, true);
        }
        iterations += 1;

        let mut t = trial;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let mut stepped = x.clone();
            stepped.scaled_add(t, &g);
            let x_new = domain.project_flat(&stepped);
            let d = &x_new - &x;
            let gain = g.dot(&d);
            if let Some((f_new, g_new)) = eval(&x_new)? {
                let armijo = f_new >= f + cfg.armijo.sufficient_increase * gain;
                // Once the predicted gain is below the resolution of f, Armijo
                // is decided by rounding noise. There, require a strict drop
                // in the stationarity measure plus evidence of no decrease:
                // for a concave objective f(x_new) − f(x) ≥ g(x_new)ᵀd, so a
                // non-negative slope at the new point certifies it exactly.
                let tiny = gain <= 1e-13 * f.abs().max(1.0);
                let no_decrease = f_new >= f || (concave && g_new.dot(&d) >= 0.0);
                let stationarity = tiny && no_decrease && gradient_mapping_norm(&x_new, &g_new, domain) < grad_norm;
                if (armijo && !tiny) || stationarity {
                    accepted = Some((x_new, f_new, g_new));
                    break;
                }
            }
            t *= cfg.armijo.shrink;
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            return finish(&x, f, grad_norm, iterations, false);
        };

        // Barzilai–Borwein trial step for the next iteration (ascent form).
        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = -s.dot(&y);
        let ss = s.dot(&s);
        trial = if sy > 0.0 && ss > 0.0 { (ss / sy).clamp(1e-10, 1e10) } else { (t * 2.0).min(1e10) };

        x = x_new;
        f = f_new;
        g = g_new;
        grad_norm = gradient_mapping_norm(&x, &g, domain);
    }
    finish(&x, f, grad_norm, iterations, grad_norm <= cfg.grad_tol)
}
