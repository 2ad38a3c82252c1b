//! Loss-to-utility mapping and the Nash-welfare objective.
//!
//! An agent's utility is `u = M − loss` for a per-agent cap `M`. The
//! federation maximizes `Σ wᵢ log uᵢ(θ)`, whose gradient is the conical
//! combination `Σ wᵢ (−∇lossᵢ) / uᵢ`.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{self, LabeledDataset, ModelSpec, Predictor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationPolicy {
    #[default]
    Error,
    /// Raise the cap to `(1+ε)·loss/(1−ε)` and log a warning. This changes the
    /// optimization target.
    AutoRescale,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityConfig {
    pub epsilon: f64,
    pub on_violation: ViolationPolicy,
    /// Multiplier applied to the worst observed probe loss by [`calibrate_caps`].
    pub safety_factor: f64,
    /// Cap used when every probe loss is zero.
    pub cap_floor: f64,
}

impl Default for UtilityConfig {
    fn default() -> Self {
        UtilityConfig { epsilon: 1e-6, on_violation: ViolationPolicy::Error, safety_factor: 1.5, cap_floor: 1.0 }
    }
}

impl UtilityConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1e-5) {
            return Err(Error::InvalidParams(format!("epsilon must lie in (0, 1e-5), got {}", self.epsilon)));
        }
        if !(self.safety_factor >= 1.0 && self.safety_factor.is_finite()) {
            return Err(Error::InvalidParams(format!("safety factor must be >= 1, got {}", self.safety_factor)));
        }
        if !(self.cap_floor > 0.0 && self.cap_floor.is_finite()) {
            return Err(Error::InvalidParams(format!("cap floor must be > 0, got {}", self.cap_floor)));
        }
        Ok(())
    }

    /// Largest loss an agent with cap `cap` may have before its utility is
    /// considered non-positive.
    pub fn max_loss(&self, cap: f64) -> f64 {
        cap * (1.0 - self.epsilon)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentProfile {
    pub id: usize,
    pub dataset: LabeledDataset,
    pub cap: f64,
    pub weight: f64,
}

impl AgentProfile {
    pub fn new(id: usize, dataset: LabeledDataset, cap: f64) -> Self {
        AgentProfile { id, dataset, cap, weight: 1.0 }
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cap > 0.0 && self.cap.is_finite()) {
            return Err(Error::InvalidParams(format!("agent {} cap must be > 0, got {}", self.id, self.cap)));
        }
        if !(self.weight > 0.0 && self.weight.is_finite()) {
            return Err(Error::InvalidParams(format!("agent {} weight must be > 0, got {}", self.id, self.weight)));
        }
        Ok(())
    }
}

pub fn validate_agents(agents: &[AgentProfile]) -> Result<()> {
    let mut ids: Vec<usize> = agents.iter().map(|a| a.id).collect();
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::InvalidParams(format!("duplicate agent id {}", w[0])));
    }
    agents.iter().try_for_each(AgentProfile::validate)
}

/// `M − loss`, subject to the configured violation policy.
pub fn utility_of_loss(loss: f64, cap: f64, cfg: &UtilityConfig) -> Result<f64> {
    utility_for_agent(usize::MAX, loss, cap, cfg)
}

pub(crate) fn utility_for_agent(agent: usize, loss: f64, cap: f64, cfg: &UtilityConfig) -> Result<f64> {
    if !(cap > 0.0) {
        return Err(Error::InvalidParams(format!("cap must be > 0, got {cap}")));
    }
    if loss < cfg.max_loss(cap) {
        return Ok(cap - loss);
    }
    match cfg.on_violation {
        ViolationPolicy::Error => Err(Error::NonPositiveUtility { agent, loss, cap }),
        ViolationPolicy::AutoRescale => {
            let rescaled = rescaled_cap(loss, cfg);
            log::warn!("agent {agent}: loss {loss} exceeds cap {cap}; rescaling cap to {rescaled}");
            Ok(rescaled - loss)
        }
    }
}

/// The cap AutoRescale moves to for a given loss.
pub fn rescaled_cap(loss: f64, cfg: &UtilityConfig) -> f64 {
    (1.0 + cfg.epsilon) * loss / (1.0 - cfg.epsilon)
}

/// Per-agent caps `M_i = safety × max probe loss`, floored at `cfg.cap_floor`
/// when every probe loss is zero and never below a user-supplied cap.
pub fn calibrate_caps(
    spec: &ModelSpec,
    datasets: &[&LabeledDataset],
    probes: &[Predictor],
    user_caps: &[Option<f64>],
    cfg: &UtilityConfig,
) -> Result<Vec<f64>> {
    if probes.is_empty() {
        return Err(Error::EmptyProbeSet);
    }
    if user_caps.len() != datasets.len() {
        return Err(Error::LengthMismatch { left: datasets.len(), right: user_caps.len() });
    }
    datasets
        .iter()
        .zip(user_caps)
        .map(|(data, user)| {
            let worst = probes
                .iter()
                .map(|theta| models::loss(spec, theta, data))
                .try_fold(0.0_f64, |acc, l| l.map(|l| acc.max(l)))?;
            let computed = if worst > 0.0 { cfg.safety_factor * worst } else { cfg.cap_floor };
            Ok(user.map_or(computed, |u| u.max(computed)))
        })
        .collect()
}

/// Evaluates every agent's utility at `theta` under the strict policy: any
/// utility at or below `M·ε` is an error.
pub fn utilities(
    spec: &ModelSpec,
    theta: &Predictor,
    agents: &[AgentProfile],
    cfg: &UtilityConfig,
) -> Result<Vec<f64>> {
    let strict = UtilityConfig { on_violation: ViolationPolicy::Error, ..cfg.clone() };
    agents.iter().map(|a| utility_for_agent(a.id, models::loss(spec, theta, &a.dataset)?, a.cap, &strict)).collect()
}

/// `Σ wᵢ log uᵢ(θ)`, with unit weights when `weights_on` is false.
pub fn nash_welfare(
    spec: &ModelSpec,
    theta: &Predictor,
    agents: &[AgentProfile],
    cfg: &UtilityConfig,
    weights_on: bool,
) -> Result<f64> {
    NashObjective::new(spec, agents, cfg, weights_on).value(theta)
}

/// `Σ wᵢ (−∇lossᵢ(θ)) / uᵢ(θ)` in the flat parameter layout.
pub fn nash_gradient(
    spec: &ModelSpec,
    theta: &Predictor,
    agents: &[AgentProfile],
    cfg: &UtilityConfig,
    weights_on: bool,
) -> Result<Array1<f64>> {
    NashObjective::new(spec, agents, cfg, weights_on).gradient(theta)
}

/// The Nash-welfare objective bound to a fixed agent set.
///
/// `scales` multiplies individual utilities, adding `wᵢ log sᵢ` to agent `i`'s
/// term. The maximizer does not depend on them.
#[derive(Debug, Clone)]
pub struct NashObjective<'a> {
    pub spec: &'a ModelSpec,
    pub agents: &'a [AgentProfile],
    pub cfg: UtilityConfig,
    pub weights_on: bool,
    pub scales: Option<Vec<f64>>,
}

impl<'a> NashObjective<'a> {
    pub fn new(spec: &'a ModelSpec, agents: &'a [AgentProfile], cfg: &UtilityConfig, weights_on: bool) -> Self {
        NashObjective { spec, agents, cfg: cfg.clone(), weights_on, scales: None }
    }

    pub fn with_scales(mut self, scales: Vec<f64>) -> Self {
        self.scales = Some(scales);
        self
    }

    fn weight(&self, i: usize) -> f64 {
        if self.weights_on {
            self.agents[i].weight
        } else {
            1.0
        }
    }

    fn scale(&self, i: usize) -> f64 {
        self.scales.as_ref().map_or(1.0, |s| s[i])
    }

    pub fn utilities(&self, theta: &Predictor) -> Result<Vec<f64>> {
        utilities(self.spec, theta, self.agents, &self.cfg)
    }

    pub fn value(&self, theta: &Predictor) -> Result<f64> {
        let u = self.utilities(theta)?;
        Ok(self.value_from_utilities(&u))
    }

    pub fn value_from_utilities(&self, u: &[f64]) -> f64 {
        u.iter()
            .enumerate()
            .map(|(i, &ui)| {
                let s = self.scale(i);
                let term = if s == 1.0 { ui.ln() } else { (s * ui).ln() };
                self.weight(i) * term
            })
            .sum()
    }

    pub fn gradient(&self, theta: &Predictor) -> Result<Array1<f64>> {
        Ok(self.value_and_gradient(theta)?.1)
    }

    pub fn value_and_gradient(&self, theta: &Predictor) -> Result<(f64, Array1<f64>)> {
        let u = self.utilities(theta)?;
        let mut grad = Array1::zeros(self.spec.flat_len());
        for (i, agent) in self.agents.iter().enumerate() {
            let g = models::loss_gradient(self.spec, theta, &agent.dataset)?;
            let s = self.scale(i);
            let coef = if s == 1.0 { -self.weight(i) / u[i] } else { -self.weight(i) * s / (s * u[i]) };
            grad.scaled_add(coef, &g);
        }
        Ok((self.value_from_utilities(&u), grad))
    }

    /// Value at a flat parameter vector, or `None` when any utility leaves
    /// the feasible region.
    pub fn value_flat(&self, flat: &Array1<f64>) -> Result<Option<f64>> {
        let theta = Predictor::from_flat(self.spec, flat)?;
        match self.value(&theta) {
            Ok(v) => Ok(Some(v)),
            Err(Error::NonPositiveUtility { .. }) | Err(Error::NumericOverflow(_)) => Ok(None),
            Err(e) => Err(e),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn quad_agent(id: usize, y: f64, cap: f64) -> AgentProfile {
        AgentProfile::new(id, LabeledDataset::from_rows(&[vec![1.0]], &[y]).unwrap(), cap)
    }

    #[test]
    fn utility_examples() {
        let cfg = UtilityConfig::default();
        assert_abs_diff_eq!(utility_of_loss(0.41, 3.0, &cfg).unwrap(), 2.59, epsilon = 1e-12);
        assert_eq!(utility_of_loss(0.0, 5.0, &cfg).unwrap(), 5.0);
        assert!(matches!(utility_of_loss(1.0, 1.0, &cfg), Err(Error::NonPositiveUtility { .. })));
    }

    #[test]
    fn auto_rescale_keeps_utility_positive() {
        let cfg = UtilityConfig { on_violation: ViolationPolicy::AutoRescale, ..Default::default() };
        let u = utility_of_loss(2.0, 1.0, &cfg).unwrap();
        let cap = rescaled_cap(2.0, &cfg);
        assert_abs_diff_eq!(u, cap - 2.0, epsilon = 1e-15);
        assert!(u >= cap * cfg.epsilon);
    }

    #[test]
    fn config_validation() {
        assert!(UtilityConfig::default().validate().is_ok());
        assert!(UtilityConfig { epsilon: 1e-4, ..Default::default() }.validate().is_err());
        assert!(UtilityConfig { epsilon: 0.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn calibrate_examples() {
        let cfg = UtilityConfig::default();
        let spec = ModelSpec::linreg(1);
        // loss at θ=0 is y² = 2 when y = √2
        let data = LabeledDataset::from_rows(&[vec![1.0]], &[2f64.sqrt()]).unwrap();
        let probes = [Predictor::from_vec(vec![0.0])];
        let caps = calibrate_caps(&spec, &[&data], &probes, &[None], &cfg).unwrap();
        assert_abs_diff_eq!(caps[0], 3.0, epsilon = 1e-12);

        let zero = LabeledDataset::from_rows(&[vec![1.0]], &[0.0]).unwrap();
        assert_eq!(calibrate_caps(&spec, &[&zero], &probes, &[None], &cfg).unwrap(), vec![1.0]);

        // computed 1.5 × 2 = 3 would lower a user cap of 3.5: keep 3.5
        assert_eq!(calibrate_caps(&spec, &[&data], &probes, &[Some(3.5)], &cfg).unwrap(), vec![3.5]);
        // computed 2.5 < user 3.0
        let data25 = LabeledDataset::from_rows(&[vec![1.0]], &[(2.5f64 / 1.5).sqrt()]).unwrap();
        let caps = calibrate_caps(&spec, &[&data25], &probes, &[Some(3.0)], &cfg).unwrap();
        assert_eq!(caps, vec![3.0]);

        assert!(matches!(calibrate_caps(&spec, &[&data], &[], &[None], &cfg), Err(Error::EmptyProbeSet)));
    }

    #[test]
    fn welfare_examples() {
        // Utilities are set by choosing caps against a zero loss.
        let cfg = UtilityConfig::default();
        let spec = ModelSpec::linreg(1);
        let theta = Predictor::from_vec(vec![0.0]);
        let ones: Vec<_> = (0..3).map(|i| quad_agent(i, 0.0, 1.0)).collect();
        assert_eq!(nash_welfare(&spec, &theta, &ones, &cfg, false).unwrap(), 0.0);

        let e = std::f64::consts::E;
        let two = vec![quad_agent(0, 0.0, e), quad_agent(1, 0.0, e * e)];
        assert_abs_diff_eq!(nash_welfare(&spec, &theta, &two, &cfg, false).unwrap(), 3.0, epsilon = 1e-12);

        let weighted = vec![quad_agent(0, 0.0, e).with_weight(2.0), quad_agent(1, 0.0, e)];
        assert_abs_diff_eq!(nash_welfare(&spec, &theta, &weighted, &cfg, true).unwrap(), 3.0, epsilon = 1e-12);
    }

    #[test]
    fn gradient_examples() {
        let cfg = UtilityConfig::default();
        let spec = ModelSpec::linreg(1);
        let agents = vec![quad_agent(0, 0.0, 3.0)];
        let g = nash_gradient(&spec, &Predictor::from_vec(vec![1.0]), &agents, &cfg, false).unwrap();
        assert_eq!(g, array![-1.0]);

        // Symmetric instance: both agents sit at their own minimum at θ = 0.
        let sym = vec![quad_agent(0, 0.0, 3.0), quad_agent(1, 0.0, 3.0)];
        let g = nash_gradient(&spec, &Predictor::from_vec(vec![0.0]), &sym, &cfg, false).unwrap();
        assert_eq!(g, array![0.0]);

        let theta = Predictor::from_vec(vec![0.5]);
        let base = [quad_agent(0, 0.0, 9.0), quad_agent(1, 2.0, 9.0)];
        let doubled = vec![quad_agent(0, 0.0, 9.0).with_weight(2.0), quad_agent(1, 2.0, 9.0)];
        let g1 = nash_gradient(&spec, &theta, &base[..1], &cfg, false).unwrap();
        let g2 = nash_gradient(&spec, &theta, &base[1..], &cfg, false).unwrap();
        let gw = nash_gradient(&spec, &theta, &doubled, &cfg, true).unwrap();
        assert_abs_diff_eq!(gw[0], 2.0 * g1[0] + g2[0], epsilon = 1e-15);
    }

    #[test]
    fn welfare_rejects_non_positive_utility() {
        let cfg = UtilityConfig::default();
        let spec = ModelSpec::linreg(1);
        let agents = vec![quad_agent(7, 2.0, 3.0)];
        let err = nash_welfare(&spec, &Predictor::from_vec(vec![0.0]), &agents, &cfg, false).unwrap_err();
        assert!(matches!(err, Error::NonPositiveUtility { agent: 7, .. }));
    }

    #[test]
    fn duplicate_agent_ids_are_rejected() {
        let agents = vec![quad_agent(1, 0.0, 1.0), quad_agent(1, 0.0, 1.0)];
        assert!(validate_agents(&agents).is_err());
    }
}
