//! Fairness verification.
//!
//! The central tool is the ratio certificate `Σ wᵢ u_altᵢ / u_refᵢ ≤ Σ wᵢ`:
//! if it holds for every alternative, no coalition can block the reference.
//! For finite candidate sets the blocking condition is also checked directly
//! by exhaustive subset enumeration.

use std::path::Path;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{self, ModelSpec, Predictor};
use crate::rng::{stream, stream_rng};
use crate::utility::{self, AgentProfile, UtilityConfig};

/// Absolute slack on certificate comparisons.
pub const CERTIFICATE_TOL: f64 = 1e-9;
/// Default slack for proportionality checks.
pub const PROPORTIONALITY_TOL: f64 = 1e-6;
/// Largest agent count the exhaustive coalition search accepts.
pub const MAX_SEARCH_AGENTS: usize = 20;

/// Utilities of every agent (rows) under every candidate predictor (columns).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityMatrix {
    pub values: Array2<f64>,
    pub weights: Vec<f64>,
    pub candidates: Vec<String>,
}

impl UtilityMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        let weights = vec![1.0; values.nrows()];
        Self::with_weights(values, weights)
    }

    pub fn with_weights(values: Array2<f64>, weights: Vec<f64>) -> Result<Self> {
        let candidates = (0..values.ncols()).map(|c| format!("c{c}")).collect();
        Self::named(values, weights, candidates)
    }

    pub fn named(values: Array2<f64>, weights: Vec<f64>, candidates: Vec<String>) -> Result<Self> {
        if weights.len() != values.nrows() {
            return Err(Error::LengthMismatch { left: values.nrows(), right: weights.len() });
        }
        if candidates.len() != values.ncols() {
            return Err(Error::LengthMismatch { left: values.ncols(), right: candidates.len() });
        }
        if let Some(((i, _), &v)) = values.indexed_iter().find(|(_, v)| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::NonPositiveUtility { agent: i, loss: f64::NAN, cap: v });
        }
        if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidParams("weights must be positive".into()));
        }
        Ok(UtilityMatrix { values, weights, candidates })
    }

    pub fn n_agents(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_candidates(&self) -> usize {
        self.values.ncols()
    }

    pub fn column(&self, c: usize) -> Array1<f64> {
        self.values.column(c).to_owned()
    }

    pub fn candidate_index(&self, name: &str) -> Option<usize> {
        self.candidates.iter().position(|c| c == name)
    }

    /// Reads a CSV with one row per agent and one column per candidate. An
    /// optional `weight` column carries agent weights and an optional `agent`
    /// column is treated as a row label.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
        let headers: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
        let weight_col = headers.iter().position(|h| h == "weight");
        let label_col = headers.iter().position(|h| h == "agent");
        let cand_cols: Vec<usize> =
            (0..headers.len()).filter(|c| Some(*c) != weight_col && Some(*c) != label_col).collect();
        if cand_cols.is_empty() {
            return Err(Error::InvalidShape("utility matrix has no candidate columns".into()));
        }
        let mut rows = Vec::new();
        let mut weights = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| Error::MalformedRow { row: i + 1, reason: e.to_string() })?;
            let parse = |c: usize| -> Result<f64> {
                rec[c].parse::<f64>().map_err(|_| Error::MalformedRow {
                    row: i + 1,
                    reason: format!("`{}` in column `{}` is not a number", &rec[c], headers[c]),
                })
            };
            rows.push(cand_cols.iter().map(|&c| parse(c)).collect::<Result<Vec<f64>>>()?);
            weights.push(weight_col.map(parse).transpose()?.unwrap_or(1.0));
        }
        if rows.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let values = Array2::from_shape_vec((rows.len(), cand_cols.len()), rows.concat())
            .map_err(|e| Error::InvalidShape(e.to_string()))?;
        Self::named(values, weights, cand_cols.iter().map(|&c| headers[c].clone()).collect())
    }
}

/// Builds the utility matrix of `candidates` over `agents`.
pub fn utility_matrix(
    spec: &ModelSpec,
    candidates: &[Predictor],
    names: Vec<String>,
    agents: &[AgentProfile],
    cfg: &UtilityConfig,
) -> Result<UtilityMatrix> {
    let mut values = Array2::zeros((agents.len(), candidates.len()));
    for (c, theta) in candidates.iter().enumerate() {
        let u = utility::utilities(spec, theta, agents, cfg)?;
        values.column_mut(c).assign(&Array1::from(u));
    }
    UtilityMatrix::named(values, agents.iter().map(|a| a.weight).collect(), names)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    pub coalition: Vec<usize>,
    pub candidate: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub ratio_sum: f64,
    /// `n` unweighted, `Σw` weighted.
    pub threshold: f64,
    pub holds: bool,
    pub witness: Option<Witness>,
}

impl Certificate {
    /// Two-decimal rendering in the style `2.80 (<3)`. The bracket shows
    /// `<` when the certificate holds strictly, `=` at the boundary and `>`
    /// when it fails.
    pub fn render(&self) -> String {
        let relation = if !self.holds {
            ">"
        } else if (self.ratio_sum - self.threshold).abs() <= CERTIFICATE_TOL {
            "="
        } else {
            "<"
        };
        format!("{:.2} ({relation}{})", self.ratio_sum, format_threshold(self.threshold))
    }
}

fn format_threshold(t: f64) -> String {
    if t.fract() == 0.0 {
        format!("{}", t as i64)
    } else {
        format!("{t:.2}")
    }
}

fn check_positive(v: &[f64]) -> Result<()> {
    match v.iter().position(|x| !(*x > 0.0 && x.is_finite())) {
        Some(i) => Err(Error::NonPositiveUtility { agent: i, loss: f64::NAN, cap: v[i] }),
        None => Ok(()),
    }
}

fn check_len(a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::LengthMismatch { left: a, right: b })
    }
}

/// `Σ wᵢ u_altᵢ / u_refᵢ` against `Σ wᵢ`.
pub fn core_ratio(u_ref: &[f64], u_alt: &[f64], weights: &[f64]) -> Result<Certificate> {
    check_len(u_ref.len(), u_alt.len())?;
    check_len(u_ref.len(), weights.len())?;
    check_positive(u_ref)?;
    check_positive(u_alt)?;
    if weights.iter().any(|w| !(*w > 0.0)) {
        return Err(Error::InvalidParams("weights must be positive".into()));
    }
    let ratio_sum: f64 = u_ref.iter().zip(u_alt).zip(weights).map(|((r, a), w)| w * (a / r)).sum();
    let threshold: f64 = weights.iter().sum();
    Ok(Certificate { ratio_sum, threshold, holds: ratio_sum <= threshold + CERTIFICATE_TOL, witness: None })
}

/// Verifies one blocking claim: every member `i` of `coalition` has
/// `(share/k)·u[i][candidate] ≥ u[i][ref_col]` with at least one strict
/// inequality, where `share` is the coalition's weight fraction.
pub fn is_blocking(m: &UtilityMatrix, ref_col: usize, coalition: &[usize], candidate: usize, k: f64) -> bool {
    if coalition.is_empty() {
        return false;
    }
    let total: f64 = m.weights.iter().sum();
    let share: f64 = coalition.iter().map(|&i| m.weights[i]).sum::<f64>() / total;
    let mut strict = false;
    for &i in coalition {
        let scaled = share / k * m.values[[i, candidate]];
        let reference = m.values[[i, ref_col]];
        if scaled < reference {
            return false;
        }
        strict |= scaled > reference;
    }
    strict
}

/// Exhaustive search for a coalition that blocks column `ref_col`.
///
/// Coalitions are visited largest first, lexicographically within a size,
/// and candidates in column order, so the witness is deterministic.
pub fn find_blocking_coalition(m: &UtilityMatrix, ref_col: usize) -> Result<Option<Witness>> {
    find_blocking_coalition_relaxed(m, ref_col, 1.0)
}

/// As [`find_blocking_coalition`] with the coalition share divided by `k`
/// (the pseudo-core relaxation; `k = 1` is the plain core).
pub fn find_blocking_coalition_relaxed(m: &UtilityMatrix, ref_col: usize, k: f64) -> Result<Option<Witness>> {
    let n = m.n_agents();
    if n > MAX_SEARCH_AGENTS {
        return Err(Error::TooManyAgents { max: MAX_SEARCH_AGENTS, got: n });
    }
    if ref_col >= m.n_candidates() {
        return Err(Error::InvalidParams(format!("reference column {ref_col} out of range")));
    }
    if !(k >= 1.0) {
        return Err(Error::InvalidParams(format!("relaxation factor must be >= 1, got {k}")));
    }
    for size in (1..=n).rev() {
        let mut combo: Vec<usize> = (0..size).collect();
        loop {
            for c in 0..m.n_candidates() {
                if is_blocking(m, ref_col, &combo, c, k) {
                    return Ok(Some(Witness { coalition: combo, candidate: c }));
                }
            }
            if !next_combination(&mut combo, n) {
                break;
            }
        }
    }
    Ok(None)
}

/// Advances to the next size-`k` subset of `0..n` in lexicographic order.
fn next_combination(combo: &mut [usize], n: usize) -> bool {
    let k = combo.len();
    let Some(i) = (0..k).rev().find(|&i| combo[i] < n - k + i) else {
        return false;
    };
    combo[i] += 1;
    for j in i + 1..k {
        combo[j] = combo[j - 1] + 1;
    }
    true
}

/// Worst-case ratio certificate of `ref_col` over all columns, paired with
/// the exhaustive search result.
pub fn audit_matrix(m: &UtilityMatrix, ref_col: usize) -> Result<Certificate> {
    let reference = m.column(ref_col);
    let mut worst: Option<Certificate> = None;
    for c in 0..m.n_candidates() {
        let cert = core_ratio(reference.as_slice().unwrap(), m.column(c).as_slice().unwrap(), &m.weights)?;
        if worst.as_ref().is_none_or(|w| cert.ratio_sum > w.ratio_sum) {
            worst = Some(cert);
        }
    }
    let mut cert = worst.ok_or_else(|| Error::InvalidShape("utility matrix has no candidates".into()))?;
    cert.witness = find_blocking_coalition(m, ref_col)?;
    Ok(cert)
}

/// Agent `i` passes when `u_at_thetaᵢ ≥ (wᵢ/Σw)·u_bestᵢ − tol`.
pub fn check_proportionality(u_at_theta: &[f64], u_best: &[f64], weights: &[f64], tol: f64) -> Result<Vec<bool>> {
    check_len(u_at_theta.len(), u_best.len())?;
    check_len(u_at_theta.len(), weights.len())?;
    check_positive(u_at_theta)?;
    check_positive(u_best)?;
    let total: f64 = weights.iter().sum();
    Ok(u_at_theta.iter().zip(u_best).zip(weights).map(|((u, best), w)| *u >= w / total * best - tol).collect())
}

/// True iff `u_alt` is at least `u_ref` everywhere and strictly larger
/// somewhere.
pub fn check_pareto_dominated(u_ref: &[f64], u_alt: &[f64]) -> Result<bool> {
    check_len(u_ref.len(), u_alt.len())?;
    let weakly = u_ref.iter().zip(u_alt).all(|(r, a)| a >= r);
    let strictly = u_ref.iter().zip(u_alt).any(|(r, a)| a > r);
    Ok(weakly && strictly)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoCoreParams {
    pub beta: f64,
    pub grad_norm_eps: f64,
    pub k: f64,
    pub n: usize,
    pub utilities: Vec<f64>,
}

/// Radius `d` within which no coalition can prefer another predictor by more
/// than the factor `k`, for `β`-smooth utilities and `||∇L|| ≤ ε`:
///
/// `d = (−ε + √(ε² + 2β(k−1)n Σ uᵢ⁻¹)) / (β Σ uᵢ⁻¹)`
///
/// Evaluated in the algebraically equal form `2(k−1)n / (ε + √(…))`, which
/// does not cancel when `ε` dominates.
pub fn pseudo_core_radius(p: &PseudoCoreParams) -> Result<f64> {
    if !(p.beta > 0.0 && p.beta.is_finite()) {
        return Err(Error::InvalidParams(format!("beta must be > 0, got {}", p.beta)));
    }
    if !(p.grad_norm_eps >= 0.0 && p.grad_norm_eps.is_finite()) {
        return Err(Error::InvalidParams(format!("gradient bound must be >= 0, got {}", p.grad_norm_eps)));
    }
    if !(p.k > 1.0 && p.k.is_finite()) {
        return Err(Error::InvalidParams(format!("k must be > 1, got {}", p.k)));
    }
    if p.n == 0 || p.n != p.utilities.len() {
        return Err(Error::InvalidParams(format!("n = {} but {} utilities given", p.n, p.utilities.len())));
    }
    if p.utilities.iter().any(|u| !(*u > 0.0 && u.is_finite())) {
        return Err(Error::InvalidParams("utilities must be positive".into()));
    }
    let inv_sum: f64 = p.utilities.iter().map(|u| 1.0 / u).sum();
    let eps = p.grad_norm_eps;
    let budget = 2.0 * p.beta * (p.k - 1.0) * p.n as f64 * inv_sum;
    let root = (eps * eps + budget).sqrt();
    Ok(2.0 * (p.k - 1.0) * p.n as f64 / (eps + root))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaEstimate {
    /// Largest observed gradient-difference ratio: a lower bound on the true
    /// smoothness constant.
    pub beta: f64,
    pub n_probes: usize,
    pub radius: f64,
}

/// Samples pairs of points in the ball of `radius` around `theta` and returns
/// the largest `||∇uᵢ(θ₁) − ∇uᵢ(θ₂)|| / ||θ₁ − θ₂||` over agents and pairs.
///
/// Probe `j` depends only on `(seed, j)`, so the estimate never decreases as
/// `n_probes` grows.
pub fn estimate_beta(
    spec: &ModelSpec,
    theta: &Predictor,
    agents: &[AgentProfile],
    radius: f64,
    n_probes: usize,
    seed: u64,
) -> Result<BetaEstimate> {
    if n_probes == 0 {
        return Err(Error::InvalidParams("n_probes must be >= 1".into()));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidParams(format!("probe radius must be > 0, got {radius}")));
    }
    let center = theta.to_flat();
    let dim = center.len();
    let mut beta = 0.0_f64;
    for j in 0..n_probes {
        let mut rng = stream_rng(seed, stream::BETA_PROBE, &[j as u64]);
        let p1 = &center + &ball_point(&mut rng, dim, radius);
        let p2 = &center + &ball_point(&mut rng, dim, radius);
        let dist = (&p1 - &p2).mapv(|v| v * v).sum().sqrt();
        if !(dist > 0.0) {
            continue;
        }
        let t1 = Predictor::from_flat(spec, &p1)?;
        let t2 = Predictor::from_flat(spec, &p2)?;
        for agent in agents {
            // ∇u = −∇loss; the sign cancels in the difference norm
            let g1 = models::loss_gradient(spec, &t1, &agent.dataset)?;
            let g2 = models::loss_gradient(spec, &t2, &agent.dataset)?;
            let diff = (&g1 - &g2).mapv(|v| v * v).sum().sqrt();
            beta = beta.max(diff / dist);
        }
    }
    Ok(BetaEstimate { beta, n_probes, radius })
}

/// Uniform point in the L2 ball of the given radius.
pub fn ball_point<R: Rng + ?Sized>(rng: &mut R, dim: usize, radius: f64) -> Array1<f64> {
    if dim == 0 {
        return Array1::zeros(0);
    }
    let dir: Array1<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let norm = dir.dot(&dir).sqrt();
    let u: f64 = rng.random();
    let r = radius * u.powf(1.0 / dim as f64);
    if norm > 0.0 {
        dir * (r / norm)
    } else {
        dir
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoCoreReport {
    pub grad_norm: f64,
    pub beta: BetaEstimate,
    pub k: f64,
    pub radius: f64,
    /// False when `radius` exceeds the ball on which β was estimated, in which
    /// case the smoothness premise is unverified at that scale.
    pub within_probe_ball: bool,
}

/// Estimates β on a ball of `probe_radius` around `theta` and evaluates the
/// pseudo-core radius there.
#[allow(clippy::too_many_arguments)]
pub fn pseudo_core_report(
    spec: &ModelSpec,
    theta: &Predictor,
    agents: &[AgentProfile],
    cfg: &UtilityConfig,
    probe_radius: f64,
    k: f64,
    n_probes: usize,
    seed: u64,
) -> Result<PseudoCoreReport> {
    let u = utility::utilities(spec, theta, agents, cfg)?;
    let g = utility::nash_gradient(spec, theta, agents, cfg, false)?;
    let grad_norm = g.dot(&g).sqrt();
    let beta = estimate_beta(spec, theta, agents, probe_radius, n_probes, seed)?;
    // A flat estimate would make the radius infinite; floor it.
    let beta_used = beta.beta.max(f64::EPSILON);
    let radius = pseudo_core_radius(&PseudoCoreParams {
        beta: beta_used,
        grad_norm_eps: grad_norm,
        k,
        n: agents.len(),
        utilities: u,
    })?;
    Ok(PseudoCoreReport { grad_norm, beta, k, radius, within_probe_ball: radius <= probe_radius })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::LabeledDataset;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn derived_matrix() -> UtilityMatrix {
        // columns: θ₁ = (10, 10, 1), θ₂ = (1, 1, 1.11)
        UtilityMatrix::new(array![[10.0, 1.0], [10.0, 1.0], [1.0, 1.11]]).unwrap()
    }

    #[test]
    fn core_ratio_examples() {
        let c = core_ratio(&[1.0, 1.0], &[1.0, 1.0], &[1.0, 1.0]).unwrap();
        assert_eq!(c.ratio_sum, 2.0);
        assert!(c.holds);
        assert_eq!(c.render(), "2.00 (=2)");

        let c = core_ratio(&[2.62, 0.90, 1.53], &[2.59, 0.77, 1.46], &[1.0; 3]).unwrap();
        assert!(c.holds);
        assert_eq!(c.render(), "2.80 (<3)");

        let delta = 1e-9;
        let c = core_ratio(&[1.0 / 3.0; 3], &[1.0, delta, delta], &[1.0; 3]).unwrap();
        assert_abs_diff_eq!(c.ratio_sum, 3.0 + 6e-9, epsilon = 1e-15);
    }

    #[test]
    fn core_ratio_errors() {
        assert!(matches!(core_ratio(&[1.0], &[1.0, 2.0], &[1.0]), Err(Error::LengthMismatch { .. })));
        assert!(matches!(core_ratio(&[0.0], &[1.0], &[1.0]), Err(Error::NonPositiveUtility { .. })));
        let fail = core_ratio(&[1.0, 1.0], &[3.0, 0.5], &[1.0, 1.0]).unwrap();
        assert!(!fail.holds);
        assert_eq!(fail.render(), "3.50 (>2)");
    }

    #[test]
    fn blocking_examples() {
        let m = derived_matrix();
        let w = find_blocking_coalition(&m, 1).unwrap().unwrap();
        assert_eq!(w, Witness { coalition: vec![0, 1], candidate: 0 });
        assert!(is_blocking(&m, 1, &w.coalition, w.candidate, 1.0));
        assert_eq!(find_blocking_coalition(&m, 0).unwrap(), None);

        let single = UtilityMatrix::new(array![[1.0], [2.0]]).unwrap();
        assert_eq!(find_blocking_coalition(&single, 0).unwrap(), None);
    }

    /// Brute force straight from the definition, visiting subsets by bitmask.
    fn brute_force_blocked(m: &UtilityMatrix, ref_col: usize) -> bool {
        let n = m.n_agents();
        let total: f64 = m.weights.iter().sum();
        (1u32..(1 << n)).any(|mask| {
            let members: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
            let share = members.iter().map(|&i| m.weights[i]).sum::<f64>() / total;
            (0..m.n_candidates()).any(|c| {
                members.iter().all(|&i| share * m.values[[i, c]] >= m.values[[i, ref_col]])
                    && members.iter().any(|&i| share * m.values[[i, c]] > m.values[[i, ref_col]])
            })
        })
    }

    #[test]
    fn search_agrees_with_brute_force() {
        let m = derived_matrix();
        for r in 0..2 {
            assert_eq!(find_blocking_coalition(&m, r).unwrap().is_some(), brute_force_blocked(&m, r));
        }
        let weighted =
            UtilityMatrix::with_weights(array![[1.0, 2.5], [1.0, 0.2], [1.0, 0.9]], vec![3.0, 1.0, 1.0]).unwrap();
        assert_eq!(find_blocking_coalition(&weighted, 0).unwrap().is_some(), brute_force_blocked(&weighted, 0));
    }

    #[test]
    fn weighted_share_changes_the_verdict() {
        // Agent 0 alone would need 3× improvement unweighted but only 5/3×
        // once it carries weight 3 of 5.
        let values = array![[1.0, 2.0], [1.0, 0.5], [1.0, 0.5]];
        let plain = UtilityMatrix::new(values.clone()).unwrap();
        assert_eq!(find_blocking_coalition(&plain, 0).unwrap(), None);
        let weighted = UtilityMatrix::with_weights(values, vec![3.0, 1.0, 1.0]).unwrap();
        assert_eq!(find_blocking_coalition(&weighted, 0).unwrap(), Some(Witness { coalition: vec![0], candidate: 1 }));
    }

    #[test]
    fn too_many_agents() {
        let m = UtilityMatrix::new(Array2::ones((21, 1))).unwrap();
        assert!(matches!(find_blocking_coalition(&m, 0), Err(Error::TooManyAgents { .. })));
    }

    #[test]
    fn combinations_are_lexicographic() {
        let mut c = vec![0, 1];
        let mut seen = vec![c.clone()];
        while next_combination(&mut c, 4) {
            seen.push(c.clone());
        }
        assert_eq!(seen, vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]);
    }

    #[test]
    fn proportionality_examples() {
        assert_eq!(check_proportionality(&[0.5, 0.5], &[1.0, 1.0], &[1.0, 1.0], 0.0).unwrap(), vec![true, true]);
        assert_eq!(
            check_proportionality(&[0.30; 3], &[1.0; 3], &[1.0; 3], PROPORTIONALITY_TOL).unwrap(),
            vec![false; 3]
        );
        let third = 1.0 / 3.0;
        assert_eq!(
            check_proportionality(&[third; 3], &[1.0; 3], &[1.0; 3], PROPORTIONALITY_TOL).unwrap(),
            vec![true; 3]
        );
        assert!(matches!(check_proportionality(&[1.0], &[1.0, 1.0], &[1.0], 0.0), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn pareto_examples() {
        assert!(check_pareto_dominated(&[1.0, 2.0], &[2.0, 2.0]).unwrap());
        assert!(!check_pareto_dominated(&[1.0, 2.0], &[2.0, 1.0]).unwrap());
        assert!(!check_pareto_dominated(&[1.0, 2.0], &[1.0, 2.0]).unwrap());
        assert!(check_pareto_dominated(&[1.0], &[1.0, 2.0]).is_err());
    }

    fn params(eps: f64, beta: f64, k: f64, u: Vec<f64>) -> PseudoCoreParams {
        PseudoCoreParams { beta, grad_norm_eps: eps, k, n: u.len(), utilities: u }
    }

    #[test]
    fn pseudo_core_radius_examples() {
        assert_abs_diff_eq!(pseudo_core_radius(&params(0.0, 2.0, 2.0, vec![1.0])).unwrap(), 1.0, epsilon = 1e-15);
        let d = pseudo_core_radius(&params(100.0, 2.0, 2.0, vec![1.0])).unwrap();
        assert_abs_diff_eq!(d, (-100.0 + 10004f64.sqrt()) / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d, 0.0100, epsilon = 1e-5);

        let small = pseudo_core_radius(&params(0.3, 1.5, 1.5, vec![1.0, 2.0, 0.5])).unwrap();
        let doubled = pseudo_core_radius(&params(0.3, 1.5, 1.5, vec![2.0, 4.0, 1.0])).unwrap();
        assert!(doubled > small);

        assert!(pseudo_core_radius(&params(0.0, 2.0, 1.0, vec![1.0])).is_err());
        assert!(pseudo_core_radius(&params(0.0, 0.0, 2.0, vec![1.0])).is_err());
        let mut bad = params(0.0, 1.0, 2.0, vec![1.0]);
        bad.n = 2;
        assert!(pseudo_core_radius(&bad).is_err());
    }

    #[test]
    fn beta_examples() {
        let spec = ModelSpec::linreg(1);
        let agent = AgentProfile::new(0, LabeledDataset::from_rows(&[vec![1.0]], &[0.0]).unwrap(), 5.0);
        let theta = Predictor::from_vec(vec![0.2]);
        let est = estimate_beta(&spec, &theta, std::slice::from_ref(&agent), 0.5, 20, 3).unwrap();
        assert!((est.beta - 2.0).abs() <= 0.1, "beta {}", est.beta);

        let toy = ModelSpec::simplex_toy(3);
        let agents: Vec<_> = (0..3).map(|i| AgentProfile::new(i, LabeledDataset::simplex_agent(i), 1.0)).collect();
        let est = estimate_beta(&toy, &Predictor::from_vec(vec![1.0 / 3.0; 3]), &agents, 0.1, 10, 3).unwrap();
        assert!(est.beta.abs() <= 1e-9);
    }

    #[test]
    fn beta_is_monotone_in_probe_count() {
        let spec = ModelSpec::logreg(2, 1.0);
        let data =
            LabeledDataset::from_rows(&[vec![1.0, 0.5], vec![-1.0, 2.0], vec![0.3, -0.7]], &[1.0, -1.0, 1.0]).unwrap();
        let agents = vec![AgentProfile::new(0, data, 5.0)];
        let theta = Predictor::new(array![0.1, -0.2], Some(0.0));
        let mut last = 0.0;
        for n in [1, 2, 5, 10, 40] {
            let b = estimate_beta(&spec, &theta, &agents, 1.0, n, 11).unwrap().beta;
            assert!(b >= last);
            last = b;
        }
    }

    #[test]
    fn matrix_csv() {
        use std::io::Write as _;
        let mut f = tempfile::NamedTempFile::new().unwrap();
        write!(f, "agent,theta1,theta2,weight\na,10,1,1\nb,10,1,1\nc,1,1.11,1\n").unwrap();
        let m = UtilityMatrix::from_csv(f.path()).unwrap();
        assert_eq!(m.candidates, vec!["theta1", "theta2"]);
        assert_eq!(m, UtilityMatrix::named(derived_matrix().values, vec![1.0; 3], m.candidates.clone()).unwrap());

        let mut bad = tempfile::NamedTempFile::new().unwrap();
        write!(bad, "a,b\n1,0\n").unwrap();
        assert!(matches!(UtilityMatrix::from_csv(bad.path()), Err(Error::NonPositiveUtility { .. })));
    }

    #[test]
    fn audit_matrix_reports_worst_column_and_witness() {
        let m = derived_matrix();
        let cert = audit_matrix(&m, 1).unwrap();
        assert!(!cert.holds);
        assert_eq!(cert.witness, Some(Witness { coalition: vec![0, 1], candidate: 0 }));
        let cert = audit_matrix(&m, 0).unwrap();
        assert!(cert.holds);
        assert!(cert.witness.is_none());
    }
}
