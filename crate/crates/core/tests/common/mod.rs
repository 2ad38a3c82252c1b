//! Instance builders shared by the integration suites.
#![allow(dead_code)]

use corefed::data::{dirichlet_partition, gen_synthetic_classification, gen_synthetic_regression};
use corefed::solver::{maximize_agent_utility, SolverConfig};
use corefed::utility::calibrate_caps;
use corefed::{AgentProfile, LabeledDataset, ModelSpec, Predictor, UtilityConfig};
use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Dirichlet split that retries with a shifted seed until every agent has
/// data. Returns the per-agent datasets.
pub fn split_nonempty(data: &LabeledDataset, n_agents: usize, alpha: f64, seed: u64) -> Vec<LabeledDataset> {
    (0..100)
        .find_map(|attempt| dirichlet_partition(data, n_agents, alpha, seed + 7919 * attempt, true).ok())
        .expect("no non-empty split in 100 attempts")
        .1
}

/// Caps at 1.5× the worst loss over two probes: the origin and the minimizer
/// of the pooled data.
pub fn calibrated_agents(spec: &ModelSpec, parts: Vec<LabeledDataset>) -> Vec<AgentProfile> {
    let cfg = UtilityConfig::default();
    let solver = SolverConfig { grad_tol: 1e-6, ..SolverConfig::for_model(spec) };
    let pooled = LabeledDataset::concat(&parts).unwrap();
    // the cap does not move the minimizer; any feasible value works
    let r = maximize_agent_utility(&AgentProfile::new(0, pooled, 1e6), spec, &solver).unwrap_or_else(|e| match e {
        corefed::Error::NotConverged(r) => *r,
        e => panic!("{e}"),
    });
    let probes = vec![spec.zero_predictor(), r.theta_star];
    let refs: Vec<&LabeledDataset> = parts.iter().collect();
    let caps = calibrate_caps(spec, &refs, &probes, &vec![None; parts.len()], &cfg).unwrap();
    parts.into_iter().zip(caps).enumerate().map(|(i, (d, m))| AgentProfile::new(i, d, m)).collect()
}

/// Binary logistic federation: 3 agents over a Dirichlet(α) label split.
pub fn logistic_instance(seed: u64, dim: usize, alpha: f64, reg: f64) -> (ModelSpec, Vec<AgentProfile>) {
    let data = gen_synthetic_classification(240, dim, 2, 1.5, seed).unwrap().to_signed_binary();
    let spec = ModelSpec::logreg(dim, reg);
    let parts = split_nonempty(&data, 3, alpha, seed);
    (spec.clone(), calibrated_agents(&spec, parts))
}

/// Linear-regression federation with a different ground truth per agent.
pub fn linreg_instance(seed: u64, n_agents: usize, dim: usize) -> (ModelSpec, Vec<AgentProfile>) {
    let mut r = rng(seed);
    let spec = ModelSpec::linreg(dim);
    let parts = (0..n_agents)
        .map(|i| {
            let truth: Array1<f64> = (0..dim).map(|_| r.random_range(-2.0..2.0)).collect();
            gen_synthetic_regression(30, dim, &truth, 0.3, seed * 31 + i as u64).unwrap()
        })
        .collect();
    (spec.clone(), calibrated_agents(&spec, parts))
}

/// Raises caps so every agent keeps utility at least 1 at `theta`.
pub fn cover(spec: &ModelSpec, agents: Vec<AgentProfile>, theta: &Predictor) -> Vec<AgentProfile> {
    agents
        .into_iter()
        .map(|mut a| {
            let l = corefed::models::loss(spec, theta, &a.dataset).unwrap();
            a.cap = a.cap.max(2.0 * l + 1.0);
            a
        })
        .collect()
}

pub fn random_predictor(spec: &ModelSpec, scale: f64, r: &mut ChaCha8Rng) -> Predictor {
    let flat: Array1<f64> = (0..spec.flat_len()).map(|_| r.random_range(-scale..scale)).collect();
    Predictor::from_flat(spec, &flat).unwrap()
}

pub fn norm(v: &Array1<f64>) -> f64 {
    v.dot(v).sqrt()
}

pub fn relative_error(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    norm(&(a - b)) / norm(a).max(norm(b)).max(1e-12)
}

/// Central differences of a scalar function of the flat parameters.
pub fn central_difference(f: impl Fn(&Array1<f64>) -> f64, x: &Array1<f64>, h: f64) -> Array1<f64> {
    (0..x.len())
        .map(|j| {
            let mut plus = x.clone();
            let mut minus = x.clone();
            plus[j] += h;
            minus[j] -= h;
            (f(&plus) - f(&minus)) / (2.0 * h)
        })
        .collect()
}
