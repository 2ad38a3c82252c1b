//! Synthetic datasets, non-IID partitioning, feature noise and CSV I/O.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::LabeledDataset;
use crate::rng::{stream, stream_rng};

/// Standard-normal features with `y = true_θᵀx + N(0, σ²)`.
pub fn gen_synthetic_regression(
    n: usize,
    dim: usize,
    true_theta: &Array1<f64>,
    noise_sigma: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if n == 0 || dim == 0 {
        return Err(Error::InvalidShape(format!("need n >= 1 and dim >= 1, got n={n} dim={dim}")));
    }
    if true_theta.len() != dim {
        return Err(Error::InvalidShape(format!("true_theta has {} entries, dim is {dim}", true_theta.len())));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::InvalidParams(format!("noise sigma must be >= 0, got {noise_sigma}")));
    }
    let mut rng = stream_rng(seed, stream::REGRESSION, &[]);
    let features = Array2::from_shape_simple_fn((n, dim), || StandardNormal.sample(&mut rng));
    let mut targets = features.dot(true_theta);
    if noise_sigma > 0.0 {
        for y in targets.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *y += noise_sigma * z;
        }
    }
    LabeledDataset::new(features, targets)
}

/// Gaussian class clusters with unit variance.
///
/// Sample `i` belongs to class `i mod n_classes`, so classes are balanced up
/// to rounding. Two classes sit at `±(separation/2)·e₀`; with more classes,
/// class `k` is centred at `(separation/√2)·e_k`, which needs
/// `n_classes <= dim`. Either way every pair of means is `separation` apart.
/// Labels are class indices `0..n_classes`.
pub fn gen_synthetic_classification(
    n: usize,
    dim: usize,
    n_classes: usize,
    separation: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if n == 0 || dim == 0 || n_classes < 2 {
        return Err(Error::InvalidShape(format!(
            "need n >= 1, dim >= 1, n_classes >= 2; got n={n} dim={dim} n_classes={n_classes}"
        )));
    }
    if n_classes > 2 && n_classes > dim {
        return Err(Error::InvalidShape(format!("{n_classes} classes need dim >= {n_classes}, got {dim}")));
    }
    if !(separation >= 0.0 && separation.is_finite()) {
        return Err(Error::InvalidParams(format!("separation must be >= 0, got {separation}")));
    }
    let mut means = Array2::zeros((n_classes, dim));
    if n_classes == 2 {
        means[[0, 0]] = separation / 2.0;
        means[[1, 0]] = -separation / 2.0;
    } else {
        for k in 0..n_classes {
            means[[k, k]] = separation / std::f64::consts::SQRT_2;
        }
    }
    let mut rng = stream_rng(seed, stream::CLASSIFICATION, &[]);
    let mut features = Array2::zeros((n, dim));
    let mut targets = Array1::zeros(n);
    for i in 0..n {
        let k = i % n_classes;
        targets[i] = k as f64;
        for j in 0..dim {
            let z: f64 = StandardNormal.sample(&mut rng);
            features[[i, j]] = means[[k, j]] + z;
        }
    }
    LabeledDataset::new(features, targets)
}

/// How a dataset was split across agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionPlan {
    pub seed: u64,
    pub alpha: f64,
    /// Distinct label values in ascending order.
    pub labels: Vec<f64>,
    /// Agent index of every input sample.
    pub assignments: Vec<usize>,
    /// Dirichlet draw per label, laid out agents × labels. Each label column
    /// sums to 1.
    pub proportions: Array2<f64>,
    pub sizes: Vec<usize>,
}

impl PartitionPlan {
    /// Realized label mix of each agent (agents × labels). Rows of agents
    /// holding data sum to 1; an agent with no data has an all-zero row.
    pub fn label_mix(&self, data: &LabeledDataset) -> Array2<f64> {
        let mut mix = Array2::zeros((self.sizes.len(), self.labels.len()));
        for (i, &agent) in self.assignments.iter().enumerate() {
            let l = self.labels.iter().position(|&v| v == data.targets[i]).expect("label from plan");
            mix[[agent, l]] += 1.0;
        }
        for (mut row, &size) in mix.outer_iter_mut().zip(&self.sizes) {
            if size > 0 {
                row /= size as f64;
            }
        }
        mix
    }
}

/// Distinct target values, which must all be integral.
pub fn distinct_labels(data: &LabeledDataset) -> Result<Vec<f64>> {
    if data.targets.iter().any(|y| y.fract() != 0.0) {
        return Err(Error::NotLabeled("targets must be integral class labels".into()));
    }
    let mut labels: Vec<f64> = data.targets.to_vec();
    labels.sort_by(f64::total_cmp);
    labels.dedup();
    Ok(labels)
}

/// Rounds proportions of `total` to integer counts that sum to `total`.
/// Leftover units go to the largest fractional parts, lower index first on
/// ties.
pub fn largest_remainder(proportions: &[f64], total: usize) -> Vec<usize> {
    let exact: Vec<f64> = proportions.iter().map(|p| p * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..proportions.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// One Dirichlet(α, …, α) draw of dimension `k` from normalized Gamma draws.
/// Falls back to the uniform vector if every Gamma draw underflows to zero.
pub fn dirichlet_draw<R: Rng + ?Sized>(rng: &mut R, alpha: f64, k: usize) -> Result<Vec<f64>> {
    let gamma = Gamma::new(alpha, 1.0).map_err(|e| Error::InvalidParams(format!("dirichlet alpha: {e}")))?;
    let draws: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
    let sum: f64 = draws.iter().sum();
    if sum > 0.0 {
        Ok(draws.into_iter().map(|g| g / sum).collect())
    } else {
        Ok(vec![1.0 / k as f64; k])
    }
}

/// Splits a labeled dataset across agents with per-label Dirichlet shares.
///
/// For each label (ascending), draw agent shares from Dirichlet(α), convert
/// them to counts by largest-remainder rounding, shuffle that label's samples
/// and hand out consecutive chunks in agent order. Per-agent datasets keep the
/// original sample order. With `strict`, an agent left without data is an
/// error.
pub fn dirichlet_partition(
    data: &LabeledDataset,
    n_agents: usize,
    alpha: f64,
    seed: u64,
    strict: bool,
) -> Result<(PartitionPlan, Vec<LabeledDataset>)> {
    if n_agents == 0 {
        return Err(Error::InvalidParams("n_agents must be >= 1".into()));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidParams(format!("dirichlet alpha must be > 0, got {alpha}")));
    }
    let labels = distinct_labels(data)?;
    let mut proportions = Array2::zeros((n_agents, labels.len()));
    let mut assignments = vec![0usize; data.len()];
    for (li, &label) in labels.iter().enumerate() {
        let mut members: Vec<usize> = (0..data.len()).filter(|&i| data.targets[i] == label).collect();
        let mut rng = stream_rng(seed, stream::DIRICHLET, &[li as u64]);
        let shares = dirichlet_draw(&mut rng, alpha, n_agents)?;
        proportions.column_mut(li).assign(&Array1::from(shares.clone()));
        let counts = largest_remainder(&shares, members.len());
        members.shuffle(&mut stream_rng(seed, stream::SHUFFLE, &[li as u64]));
        let mut cursor = 0;
        for (agent, &count) in counts.iter().enumerate() {
            for &i in &members[cursor..cursor + count] {
                assignments[i] = agent;
            }
            cursor += count;
        }
    }
    let plan = build_plan(seed, alpha, labels, assignments, proportions, n_agents);
    let parts = split_by_assignment(data, &plan.assignments, n_agents);
    if strict {
        if let Some(agent) = plan.sizes.iter().position(|&s| s == 0) {
            return Err(Error::AgentWithNoData { agent });
        }
    }
    Ok((plan, parts))
}

/// IID split into near-equal shards after a seeded shuffle. Works for
/// unlabeled (regression) data; `alpha` in the plan is recorded as infinity.
pub fn even_partition(
    data: &LabeledDataset,
    n_agents: usize,
    seed: u64,
) -> Result<(PartitionPlan, Vec<LabeledDataset>)> {
    if n_agents == 0 {
        return Err(Error::InvalidParams("n_agents must be >= 1".into()));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut stream_rng(seed, stream::SHUFFLE, &[u64::MAX]));
    let counts = largest_remainder(&vec![1.0 / n_agents as f64; n_agents], data.len());
    let mut assignments = vec![0usize; data.len()];
    let mut cursor = 0;
    for (agent, &count) in counts.iter().enumerate() {
        for &i in &order[cursor..cursor + count] {
            assignments[i] = agent;
        }
        cursor += count;
    }
    let proportions = Array2::from_elem((n_agents, 1), 1.0 / n_agents as f64);
    let plan = build_plan(seed, f64::INFINITY, Vec::new(), assignments, proportions, n_agents);
    let parts = split_by_assignment(data, &plan.assignments, n_agents);
    Ok((plan, parts))
}

fn build_plan(
    seed: u64,
    alpha: f64,
    labels: Vec<f64>,
    assignments: Vec<usize>,
    proportions: Array2<f64>,
    n_agents: usize,
) -> PartitionPlan {
    let mut sizes = vec![0usize; n_agents];
    for &a in &assignments {
        sizes[a] += 1;
    }
    PartitionPlan { seed, alpha, labels, assignments, proportions, sizes }
}

fn split_by_assignment(data: &LabeledDataset, assignments: &[usize], n_agents: usize) -> Vec<LabeledDataset> {
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n_agents];
    for (i, &a) in assignments.iter().enumerate() {
        rows[a].push(i);
    }
    rows.iter().map(|r| data.select(r)).collect()
}

/// Adds i.i.d. `N(0, σ²)` noise to every feature; targets are untouched.
pub fn add_gaussian_noise(data: &LabeledDataset, sigma: f64, seed: u64) -> Result<LabeledDataset> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParams(format!("noise sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(data.clone());
    }
    let mut rng = stream_rng(seed, stream::NOISE, &[]);
    let mut out = data.clone();
    for v in out.features.iter_mut() {
        let z: f64 = StandardNormal.sample(&mut rng);
        *v += sigma * z;
    }
    Ok(out)
}

/// How the target column of a CSV file is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    /// Parse as real numbers.
    Numeric,
    /// Exactly two distinct values, mapped to −1 and +1 in sorted order.
    Binary,
    /// Distinct values mapped to `0..K` in sorted order.
    Classes,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub dataset: LabeledDataset,
    pub feature_names: Vec<String>,
    /// Original target values in encoded order (empty for numeric targets).
    pub target_classes: Vec<String>,
}

pub fn load_csv(path: &Path, target_column: &str, normalize: bool, mode: TargetMode) -> Result<LabeledDataset> {
    Ok(load_csv_table(path, target_column, normalize, mode)?.dataset)
}

/// Reads a headered, comma-separated file.
///
/// Columns whose every value parses as a finite number are numeric; the rest
/// are one-hot encoded with categories in sorted order, named
/// `column=category`. With `normalize`, numeric feature columns are z-scored
/// (population standard deviation; constant columns are only centred).
pub fn load_csv_table(path: &Path, target_column: &str, normalize: bool, mode: TargetMode) -> Result<CsvTable> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    let target_idx = headers
        .iter()
        .position(|h| h == target_column)
        .ok_or_else(|| Error::MissingColumn(target_column.to_owned()))?;

    let mut cells: Vec<Vec<String>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| match e.kind() {
            csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
                Error::MalformedRow { row, reason: format!("expected {expected_len} fields, found {len}") }
            }
            _ => Error::Csv(e),
        })?;
        if let Some(col) = record.iter().position(str::is_empty) {
            return Err(Error::MalformedRow { row, reason: format!("missing value in column `{}`", headers[col]) });
        }
        cells.push(record.iter().map(str::to_owned).collect());
    }
    if cells.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let (targets, target_classes) = encode_target(&cells, target_idx, mode)?;

    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut feature_names = Vec::new();
    let mut numeric_cols = Vec::new();
    for (c, name) in headers.iter().enumerate() {
        if c == target_idx {
            continue;
        }
        let parsed: Option<Vec<f64>> =
            cells.iter().map(|r| r[c].parse::<f64>().ok().filter(|v| v.is_finite())).collect();
        match parsed {
            Some(values) => {
                numeric_cols.push(columns.len());
                columns.push(values);
                feature_names.push(name.clone());
            }
            None => {
                let categories: BTreeSet<&str> = cells.iter().map(|r| r[c].as_str()).collect();
                for cat in categories {
                    columns.push(cells.iter().map(|r| f64::from(u8::from(r[c] == cat))).collect());
                    feature_names.push(format!("{name}={cat}"));
                }
            }
        }
    }

    let n = cells.len();
    let mut features = Array2::zeros((n, columns.len()));
    for (j, col) in columns.iter().enumerate() {
        features.column_mut(j).assign(&Array1::from(col.clone()));
    }
    if normalize {
        for &j in &numeric_cols {
            let mut col = features.column_mut(j);
            let mean = col.mean().unwrap_or(0.0);
            col -= mean;
            let sd = (col.dot(&col) / n as f64).sqrt();
            if sd > 0.0 {
                col /= sd;
            }
        }
    }
    Ok(CsvTable { dataset: LabeledDataset::new(features, targets)?, feature_names, target_classes })
}

fn encode_target(cells: &[Vec<String>], idx: usize, mode: TargetMode) -> Result<(Array1<f64>, Vec<String>)> {
    match mode {
        TargetMode::Numeric => {
            let values = cells
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    r[idx].parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::MalformedRow {
                        row: i + 1,
                        reason: format!("target `{}` is not numeric", r[idx]),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok((Array1::from(values), Vec::new()))
        }
        TargetMode::Binary | TargetMode::Classes => {
            let all_numeric = cells.iter().all(|r| r[idx].parse::<f64>().is_ok());
            let mut classes: Vec<String> =
                cells.iter().map(|r| r[idx].clone()).collect::<BTreeSet<_>>().into_iter().collect();
            if all_numeric {
                classes.sort_by(|a, b| a.parse::<f64>().unwrap().total_cmp(&b.parse::<f64>().unwrap()));
            }
            if mode == TargetMode::Binary && classes.len() != 2 {
                return Err(Error::NonBinaryTarget { distinct: classes.len() });
            }
            let code: BTreeMap<&str, f64> = classes
                .iter()
                .enumerate()
                .map(|(k, c)| {
                    let v = match mode {
                        TargetMode::Binary => {
                            if k == 0 {
                                -1.0
                            } else {
                                1.0
                            }
                        }
                        _ => k as f64,
                    };
                    (c.as_str(), v)
                })
                .collect();
            let targets = cells.iter().map(|r| code[r[idx].as_str()]).collect::<Vec<f64>>();
            Ok((Array1::from(targets), classes))
        }
    }
}

/// Writes a dataset with header `x0,…,x{d-1},y`. Floats use the shortest
/// representation that round-trips, so output is byte-stable.
pub fn write_csv(data: &LabeledDataset, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let header: Vec<String> = (0..data.input_dim()).map(|j| format!("x{j}")).chain(["y".to_owned()]).collect();
    writeln!(out, "{}", header.join(","))?;
    for (row, y) in data.features.axis_iter(Axis(0)).zip(data.targets.iter()) {
        let fields: Vec<String> = row.iter().chain(std::iter::once(y)).map(|v| format!("{v:?}")).collect();
        writeln!(out, "{}", fields.join(","))?;
    }
    out.flush()?;
    Ok(())
}
