use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use corefed::audit::{self, PROPORTIONALITY_TOL};
use corefed::data::{self, TargetMode};
use corefed::rng::stream_rng;
use corefed::solver::{maximize_agent_utility, maximize_nash};
use corefed::utility::{calibrate_caps, utilities};
use corefed::{
    AgentProfile, Aggregator, Checkpoint, Error, LabeledDataset, ModelKind, ModelSpec, Predictor, SolverConfig,
    UtilityMatrix,
};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::config::{DataSource, ModelChoice, RunSpec};
use crate::{Failure, RunArgs};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

/// Stream tag for the MLP's random initial parameters.
const INIT_STREAM: u64 = 0x10;
/// Stream tag for per-agent feature noise.
const AGENT_NOISE_STREAM: u64 = 0x11;

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(format!("{}: {e}", path.display()))
}

fn missing(path: &Path, what: &str) -> Failure {
    Failure::Config(format!("{what} not found: {}", path.display()))
}

fn load_spec(args: &RunArgs) -> Result<RunSpec, Failure> {
    let mut spec = RunSpec::load(&args.config)?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Some(out) = &args.out {
        spec.out = out.clone();
    }
    if let Some(agg) = &args.aggregator {
        spec.federation.aggregator = agg.clone();
    }
    // Relative paths in the config resolve against the config's directory.
    if let Some(path) = spec.data.path.as_mut() {
        if path.is_relative() {
            if let Some(dir) = args.config.parent() {
                *path = dir.join(&*path);
            }
        }
    }
    spec.validate()?;
    Ok(spec)
}

// ---------------------------------------------------------------- generate

/// Record of how the per-agent files were produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub seed: u64,
    pub model: ModelChoice,
    pub input_dim: usize,
    pub n_classes: usize,
    pub n_agents: usize,
    pub total: usize,
    /// Absent for an even split.
    pub dirichlet_alpha: Option<f64>,
    pub labels: Vec<f64>,
    /// Dirichlet draw per label, agents × labels.
    pub proportions: Vec<Vec<f64>>,
    /// Realized label mix per agent; rows sum to 1.
    pub label_mix: Option<Vec<Vec<f64>>>,
    pub sizes: Vec<usize>,
    pub noise_sigmas: Vec<f64>,
    pub files: Vec<String>,
}

fn data_dir(spec: &RunSpec) -> PathBuf {
    spec.out.join("data")
}

fn source_dataset(spec: &RunSpec) -> Result<(LabeledDataset, usize), Failure> {
    let d = &spec.data;
    let model = spec.model.kind;
    let (data, n_classes) = match d.source {
        DataSource::SyntheticClassification => {
            let data = data::gen_synthetic_classification(d.n, d.dim, d.n_classes, d.separation, spec.seed)?;
            let data = if model == ModelChoice::Logreg { data.to_signed_binary() } else { data };
            (data, d.n_classes)
        }
        DataSource::SyntheticRegression => {
            let truth = d.true_theta.clone().unwrap_or_else(|| vec![1.0; d.dim]);
            let data = data::gen_synthetic_regression(d.n, d.dim, &truth.into(), d.label_noise, spec.seed)?;
            (data, 0)
        }
        DataSource::Csv => {
            let path = d.path.as_ref().expect("validated");
            if !path.exists() {
                return Err(Failure::Config(format!("data.path: file not found: {}", path.display())));
            }
            let mode = match model {
                ModelChoice::Linreg => TargetMode::Numeric,
                ModelChoice::Logreg => TargetMode::Binary,
                ModelChoice::Mlp => TargetMode::Classes,
            };
            let table = data::load_csv_table(path, d.target.as_deref().expect("validated"), d.normalize, mode)?;
            let k = table.target_classes.len();
            (table.dataset, k)
        }
    };
    Ok((data, n_classes))
}

fn partition(spec: &RunSpec) -> Result<(Manifest, Vec<LabeledDataset>), Failure> {
    let (data, n_classes) = source_dataset(spec)?;
    let p = &spec.partition;
    let (plan, parts) = match p.dirichlet_alpha {
        Some(alpha) => data::dirichlet_partition(&data, p.n_agents, alpha, spec.seed, p.strict)?,
        None => data::even_partition(&data, p.n_agents, spec.seed)?,
    };
    let sigmas = if p.noise_sigmas.is_empty() { vec![0.0; p.n_agents] } else { p.noise_sigmas.clone() };
    let parts = parts
        .iter()
        .zip(&sigmas)
        .enumerate()
        .map(|(i, (part, &sigma))| {
            let seed = corefed::rng::derive_seed(spec.seed, AGENT_NOISE_STREAM, &[i as u64]);
            data::add_gaussian_noise(part, sigma, seed)
        })
        .collect::<corefed::Result<Vec<_>>>()?;
    let label_mix = (!plan.labels.is_empty()).then(|| plan.label_mix(&data).outer_iter().map(|r| r.to_vec()).collect());
    let manifest = Manifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        seed: spec.seed,
        model: spec.model.kind,
        input_dim: data.input_dim(),
        n_classes,
        n_agents: p.n_agents,
        total: data.len(),
        dirichlet_alpha: p.dirichlet_alpha,
        labels: plan.labels.clone(),
        proportions: plan.proportions.outer_iter().map(|r| r.to_vec()).collect(),
        label_mix,
        sizes: plan.sizes.clone(),
        noise_sigmas: sigmas,
        files: (0..p.n_agents).map(|i| format!("agent_{i}.csv")).collect(),
    };
    Ok((manifest, parts))
}

fn write_generated(spec: &RunSpec) -> Result<Manifest, Failure> {
    let (manifest, parts) = partition(spec)?;
    let dir = data_dir(spec);
    fs::create_dir_all(&dir).map_err(|e| io_failure(&dir, e))?;
    for (file, part) in manifest.files.iter().zip(&parts) {
        data::write_csv(part, &dir.join(file))?;
    }
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| io_failure(&path, e))?;
    fs::write(&path, json + "\n").map_err(|e| io_failure(&path, e))?;
    Ok(manifest)
}

pub fn generate(args: &RunArgs) -> Result<(), Failure> {
    let spec = load_spec(args)?;
    let manifest = write_generated(&spec)?;
    println!("wrote {} agent files to {}", manifest.n_agents, data_dir(&spec).display());
    for (i, size) in manifest.sizes.iter().enumerate() {
        println!("  agent {i}: {size} samples");
    }
    Ok(())
}

// ------------------------------------------------------------------- train

fn read_manifest(dir: &Path) -> Result<Manifest, Failure> {
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(|_| missing(&path, "partition manifest"))?;
    serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

/// Agent datasets from `<out>/data`, generating them first when absent.
fn load_parts(spec: &RunSpec) -> Result<(Manifest, Vec<LabeledDataset>), Failure> {
    let dir = data_dir(spec);
    let manifest = if dir.join("manifest.json").exists() {
        read_manifest(&dir)?
    } else {
        info!("no data under {}; generating", dir.display());
        write_generated(spec)?
    };
    if manifest.seed != spec.seed || manifest.n_agents != spec.partition.n_agents || manifest.model != spec.model.kind {
        return Err(Failure::Config(format!(
            "{} was generated with seed {}, {} agents and model {:?}; the run spec asks for seed {}, {} agents and \
             model {:?} (rerun `generate` or pick another out directory)",
            dir.display(),
            manifest.seed,
            manifest.n_agents,
            manifest.model,
            spec.seed,
            spec.partition.n_agents,
            spec.model.kind,
        )));
    }
    let parts = manifest
        .files
        .iter()
        .map(|f| {
            let path = dir.join(f);
            if !path.exists() {
                return Err(missing(&path, "agent data file"));
            }
            Ok(data::load_csv(&path, "y", false, TargetMode::Numeric)?)
        })
        .collect::<Result<Vec<_>, Failure>>()?;
    Ok((manifest, parts))
}

/// Probes used to set caps: the origin, the training start and a minimizer of
/// the pooled loss.
fn cap_probes(
    spec: &ModelSpec,
    parts: &[LabeledDataset],
    run: &RunSpec,
    theta_0: &Predictor,
) -> Result<Vec<Predictor>, Failure> {
    let pooled = LabeledDataset::concat(parts)?;
    let cfg = SolverConfig { grad_tol: 1e-6, ..run.solver_config(spec) };
    // The cap does not move the minimizer; any feasible value works.
    let minimizer = match maximize_agent_utility(&AgentProfile::new(0, pooled, 1e6), spec, &cfg) {
        Ok(r) => r.theta_star,
        Err(Error::NotConverged(r)) => r.theta_star,
        Err(e) => return Err(e.into()),
    };
    Ok(vec![spec.zero_predictor(), theta_0.clone(), minimizer])
}

fn build_agents(
    spec: &ModelSpec,
    parts: Vec<LabeledDataset>,
    run: &RunSpec,
    theta_0: &Predictor,
) -> Result<Vec<AgentProfile>, Failure> {
    let u = &run.utility;
    let caps = if u.calibrate {
        let probes = cap_probes(spec, &parts, run, theta_0)?;
        let refs: Vec<&LabeledDataset> = parts.iter().collect();
        let user: Vec<Option<f64>> = match &u.caps {
            Some(c) => c.iter().copied().map(Some).collect(),
            None => vec![None; parts.len()],
        };
        calibrate_caps(spec, &refs, &probes, &user, &run.utility_config())?
    } else {
        u.caps.clone().expect("validated")
    };
    // Weights only enter the weighted objective; elsewhere agents count equally.
    let weights = match (&u.weights, run.aggregator()?.uses_weights()) {
        (Some(w), true) => w.clone(),
        (Some(_), false) => {
            warn!("utility.weights is ignored by the {} aggregator", run.aggregator()?);
            vec![1.0; parts.len()]
        }
        (None, _) => vec![1.0; parts.len()],
    };
    Ok(parts
        .into_iter()
        .zip(caps)
        .zip(weights)
        .enumerate()
        .map(|(i, ((d, m), w))| AgentProfile::new(i, d, m).with_weight(w))
        .collect())
}

fn initial_predictor(spec: &ModelSpec, seed: u64) -> Result<Predictor, Failure> {
    match spec.kind {
        // symmetric zero weights would leave every hidden unit identical
        ModelKind::SmoothMlp { .. } => {
            let flat = audit::ball_point(&mut stream_rng(seed, INIT_STREAM, &[]), spec.flat_len(), 1.0);
            Ok(Predictor::from_flat(spec, &flat)?)
        }
        _ => Ok(spec.zero_predictor()),
    }
}

/// One row of `summary.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub schema_version: u32,
    pub aggregator: String,
    pub rounds: usize,
    pub utilities: Vec<f64>,
}

impl Summary {
    pub fn average(&self) -> f64 {
        self.utilities.iter().sum::<f64>() / self.utilities.len() as f64
    }

    pub fn product(&self) -> f64 {
        self.utilities.iter().product()
    }

    fn header(n: usize) -> Vec<String> {
        ["schema_version", "aggregator", "rounds", "n_agents"]
            .iter()
            .map(|s| s.to_string())
            .chain((0..n).map(|i| format!("u_{i}")))
            .chain(["U(Average)".to_owned(), "U(Multi)".to_owned()])
            .collect()
    }

    pub fn write(&self, path: &Path) -> Result<(), Failure> {
        let mut w = csv::Writer::from_path(path).map_err(|e| io_failure(path, e))?;
        let n = self.utilities.len();
        // `{:?}` is the shortest representation that round-trips.
        let row: Vec<String> =
            [self.schema_version.to_string(), self.aggregator.clone(), self.rounds.to_string(), n.to_string()]
                .into_iter()
                .chain(self.utilities.iter().map(|u| format!("{u:?}")))
                .chain([format!("{:?}", self.average()), format!("{:?}", self.product())])
                .collect();
        w.write_record(Self::header(n)).and_then(|_| w.write_record(&row)).map_err(|e| io_failure(path, e))?;
        w.flush().map_err(|e| io_failure(path, e))
    }

    pub fn read(path: &Path) -> Result<Self, Failure> {
        let bad = |msg: String| Failure::Config(format!("{}: {msg}", path.display()));
        let mut r = csv::Reader::from_path(path).map_err(|_| missing(path, "summary"))?;
        let headers = r.headers().map_err(|e| bad(e.to_string()))?.clone();
        let rec = r.records().next().ok_or_else(|| bad("no data row".into()))?.map_err(|e| bad(e.to_string()))?;
        let field = |name: &str| -> Result<&str, Failure> {
            headers
                .iter()
                .position(|h| h == name)
                .map(|i| &rec[i])
                .ok_or_else(|| bad(format!("missing column `{name}`")))
        };
        let num = |name: &str| -> Result<f64, Failure> {
            field(name)?.parse::<f64>().map_err(|_| bad(format!("column `{name}` is not a number")))
        };
        let schema_version = num("schema_version")? as u32;
        if schema_version != SUMMARY_SCHEMA_VERSION {
            return Err(bad(format!("unsupported schema_version {schema_version}")));
        }
        let n = num("n_agents")? as usize;
        Ok(Summary {
            schema_version,
            aggregator: field("aggregator")?.to_owned(),
            rounds: num("rounds")? as usize,
            utilities: (0..n).map(|i| num(&format!("u_{i}"))).collect::<Result<_, _>>()?,
        })
    }
}

fn print_table(rows: &[(String, &Summary)], ratios: Option<&[String]>) {
    let n = rows.first().map_or(0, |(_, s)| s.utilities.len());
    let mut line = format!("{:<18}", "method");
    for i in 0..n {
        line += &format!("{:>10}", format!("u_{i}"));
    }
    line += &format!("{:>12}{:>12}", "U(Average)", "U(Multi)");
    if ratios.is_some() {
        line += &format!("{:>16}", "sum u/u_ref");
    }
    println!("{line}");
    for (k, (name, s)) in rows.iter().enumerate() {
        let mut line = format!("{name:<18}");
        for u in &s.utilities {
            line += &format!("{u:>10.2}");
        }
        line += &format!("{:>12.2}{:>12.2}", s.average(), s.product());
        if let Some(r) = ratios {
            line += &format!("{:>16}", r[k]);
        }
        println!("{line}");
    }
}

fn write_run(dir: &Path, ckpt: &Checkpoint, summary: &Summary) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
    ckpt.save(&dir.join("checkpoint.json"))?;
    summary.write(&dir.join("summary.csv"))
}

fn final_utilities(
    spec: &ModelSpec,
    theta: &Predictor,
    agents: &[AgentProfile],
    run: &RunSpec,
    at: &str,
) -> Result<Vec<f64>, Failure> {
    utilities(spec, theta, agents, &run.utility_config()).map_err(|e| match Failure::from(e) {
        Failure::Utility(m) => Failure::Utility(format!("{at}: {m}")),
        f => f,
    })
}

pub fn train(args: &RunArgs) -> Result<(), Failure> {
    let run = load_spec(args)?;
    let aggregator = run.aggregator()?;
    let (manifest, parts) = load_parts(&run)?;
    let spec = run.model_spec(manifest.input_dim, manifest.n_classes);
    let theta_0 = initial_predictor(&spec, run.seed)?;
    let agents = build_agents(&spec, parts, &run, &theta_0)?;
    info!("caps: {:?}", agents.iter().map(|a| a.cap).collect::<Vec<_>>());

    let cfg = run.round_config(aggregator);
    let (theta, trace) = corefed::federation::run_rounds(&agents, &spec, &cfg, &theta_0)?;
    let u = final_utilities(&spec, &theta, &agents, &run, &format!("after round {}", cfg.total_rounds))?;

    let dir = run.out.join(aggregator.name());
    let summary = Summary {
        schema_version: SUMMARY_SCHEMA_VERSION,
        aggregator: aggregator.name().to_owned(),
        rounds: cfg.total_rounds,
        utilities: u,
    };
    write_run(&dir, &Checkpoint::new(&spec, &theta, cfg.total_rounds, Some(aggregator), &agents), &summary)?;
    let trace_path = dir.join("trace.jsonl");
    let file = fs::File::create(&trace_path).map_err(|e| io_failure(&trace_path, e))?;
    trace.write_jsonl(std::io::BufWriter::new(file))?;

    let mut rows = vec![(aggregator.name().to_owned(), summary.clone())];
    if run.solver.oracle {
        let solver = run.solver_config(&spec);
        let result = maximize_nash(&agents, &spec, &solver, aggregator.uses_weights()).map_err(|e| match e {
            Error::NotConverged(r) => Failure::NotConverged(format!(
                "oracle solver did not converge after {} iterations (gradient norm {:e}, tolerance {:e})",
                r.iterations, r.grad_norm, solver.grad_tol
            )),
            e => e.into(),
        })?;
        let u = final_utilities(&spec, &result.theta_star, &agents, &run, "oracle optimum")?;
        let oracle = Summary {
            schema_version: SUMMARY_SCHEMA_VERSION,
            aggregator: "oracle".to_owned(),
            rounds: result.iterations,
            utilities: u,
        };
        write_run(&run.out.join("oracle"), &Checkpoint::new(&spec, &result.theta_star, 0, None, &agents), &oracle)?;
        rows.push(("oracle".to_owned(), oracle));
    }
    let refs: Vec<(String, &Summary)> = rows.iter().map(|(n, s)| (n.clone(), s)).collect();
    print_table(&refs, None);
    println!("wrote {}", dir.display());
    Ok(())
}

// ------------------------------------------------------------------- audit

#[derive(Debug, Args)]
pub struct AuditArgs {
    /// Run spec locating the agent data (checkpoint mode).
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Reference checkpoint, or a run directory holding `checkpoint.json`.
    #[arg(long = "ref", requires = "alt", requires = "config")]
    pub reference: Option<PathBuf>,
    /// Alternative checkpoint or run directory.
    #[arg(long)]
    pub alt: Option<PathBuf>,
    /// Utility matrix CSV: one row per agent, one column per candidate.
    #[arg(long, conflicts_with_all = ["reference", "alt"])]
    pub matrix: Option<PathBuf>,
    /// Reference column of the matrix, by name or index.
    #[arg(long, requires = "matrix")]
    pub ref_col: Option<String>,
    /// Check proportionality against each agent's own optimum.
    #[arg(long)]
    pub proportionality: bool,
    /// Report the pseudo-core radius for this relaxation factor k > 1.
    #[arg(long)]
    pub pseudo_core: Option<f64>,
    /// Radius of the ball on which β is estimated.
    #[arg(long, default_value_t = 1.0)]
    pub probe_radius: f64,
    /// Number of β probe pairs.
    #[arg(long, default_value_t = 200)]
    pub probes: usize,
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint, Failure> {
    let file = if path.is_dir() { path.join("checkpoint.json") } else { path.to_path_buf() };
    if !file.exists() {
        return Err(missing(&file, "checkpoint"));
    }
    Ok(Checkpoint::load(&file)?)
}

fn fmt_values(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>().join(", ")
}

fn fmt_set(v: &[usize]) -> String {
    format!("{{{}}}", v.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(","))
}

pub fn audit(args: &AuditArgs) -> Result<(), Failure> {
    match (&args.matrix, &args.reference) {
        (Some(m), _) => audit_matrix_file(m, args.ref_col.as_deref()),
        (None, Some(r)) => audit_checkpoints(args, r, args.alt.as_ref().expect("clap requires --alt")),
        (None, None) => Err(Failure::Config("audit needs --ref/--alt checkpoints or --matrix".into())),
    }
}

fn audit_matrix_file(path: &Path, ref_col: Option<&str>) -> Result<(), Failure> {
    if !path.exists() {
        return Err(missing(path, "utility matrix"));
    }
    let m = UtilityMatrix::from_csv(path)?;
    let ref_col = match ref_col {
        None => 0,
        Some(name) => m
            .candidate_index(name)
            .or_else(|| name.parse::<usize>().ok().filter(|&c| c < m.n_candidates()))
            .ok_or_else(|| Failure::Config(format!("--ref-col: no candidate `{name}` in {}", path.display())))?,
    };
    let reference = m.column(ref_col).to_vec();
    println!("reference: {}", m.candidates[ref_col]);
    for c in 0..m.n_candidates() {
        let cert = audit::core_ratio(&reference, m.column(c).as_slice().expect("contiguous"), &m.weights)?;
        println!("  vs {:<12} {}  [{:?}]", m.candidates[c], cert.render(), cert.ratio_sum);
    }
    let cert = audit::audit_matrix(&m, ref_col)?;
    println!("certificate: {}  [{:?}]", cert.render(), cert.ratio_sum);
    match &cert.witness {
        Some(w) => println!("blocking coalition: {} via {}", fmt_set(&w.coalition), m.candidates[w.candidate]),
        None => println!("blocking coalition: none"),
    }
    Ok(())
}

fn audit_checkpoints(args: &AuditArgs, ref_path: &Path, alt_path: &Path) -> Result<(), Failure> {
    let run_args = RunArgs {
        config: args.config.clone().expect("clap requires --config"),
        seed: args.seed,
        out: args.out.clone(),
        aggregator: None,
    };
    let run = load_spec(&run_args)?;
    let reference = load_checkpoint(ref_path)?;
    let alt = load_checkpoint(alt_path)?;
    if reference.agent_ids != alt.agent_ids || reference.caps != alt.caps {
        return Err(Failure::Config(format!(
            "checkpoints disagree on agents: ref has ids {:?} caps {:?}, alt has ids {:?} caps {:?}",
            reference.agent_ids, reference.caps, alt.agent_ids, alt.caps
        )));
    }
    if reference.model != alt.model {
        return Err(Failure::Config("checkpoints were trained with different model specifications".into()));
    }
    let (_, parts) = load_parts(&run)?;
    if parts.len() != reference.agent_ids.len() {
        return Err(Failure::Config(format!(
            "checkpoints cover {} agents but the run spec has {}",
            reference.agent_ids.len(),
            parts.len()
        )));
    }
    let spec = reference.model.clone();
    let agents: Vec<AgentProfile> = parts
        .into_iter()
        .zip(&reference.agent_ids)
        .zip(reference.caps.iter().zip(&reference.weights))
        .map(|((d, &id), (&m, &w))| AgentProfile::new(id, d, m).with_weight(w))
        .collect();
    let cfg = run.utility_config();
    let theta_ref = reference.predictor()?;
    let theta_alt = alt.predictor()?;
    let u_ref = utilities(&spec, &theta_ref, &agents, &cfg)?;
    let u_alt = utilities(&spec, &theta_alt, &agents, &cfg)?;
    // The reference's weights define the certificate.
    let weights = reference.weights.clone();
    let weighted = weights.iter().any(|&w| w != 1.0);

    let name = |c: &Checkpoint| c.aggregator.map_or("oracle".to_owned(), |a: Aggregator| a.name().to_owned());
    println!("reference: {}", name(&reference));
    println!("alternative: {}", name(&alt));
    println!("u(ref): [{}]", fmt_values(&u_ref));
    println!("u(alt): [{}]", fmt_values(&u_alt));
    let cert = audit::core_ratio(&u_ref, &u_alt, &weights)?;
    let label = if weighted { "sum w u(alt)/u(ref)" } else { "sum u(alt)/u(ref)" };
    println!("{label}: {}  [{:?}]", cert.render(), cert.ratio_sum);

    let m = UtilityMatrix::named(
        ndarray_columns(&u_ref, &u_alt),
        weights.clone(),
        vec!["ref".to_owned(), "alt".to_owned()],
    )?;
    match audit::find_blocking_coalition(&m, 0)? {
        Some(w) => println!("blocking coalition: {} via {}", fmt_set(&w.coalition), m.candidates[w.candidate]),
        None => println!("blocking coalition: none"),
    }
    let pareto = audit::check_pareto_dominated(&u_ref, &u_alt)?;
    println!("alt Pareto-dominates ref: {}", if pareto { "yes" } else { "no" });

    if args.proportionality {
        let solver = run.solver_config(&spec);
        let best = agents
            .iter()
            .map(|a| {
                let r = maximize_agent_utility(a, &spec, &solver)?;
                Ok(a.cap - corefed::models::loss(&spec, &r.theta_star, &a.dataset)?)
            })
            .collect::<corefed::Result<Vec<f64>>>()?;
        let verdicts = audit::check_proportionality(&u_ref, &best, &weights, PROPORTIONALITY_TOL)?;
        let total: f64 = weights.iter().sum();
        println!("proportionality (ref):");
        for (i, ok) in verdicts.iter().enumerate() {
            println!(
                "  agent {i}: u = {:.4}, share {:.4} of best {:.4} = {:.4}  {}",
                u_ref[i],
                weights[i] / total,
                best[i],
                weights[i] / total * best[i],
                if *ok { "pass" } else { "FAIL" }
            );
        }
    }

    if let Some(k) = args.pseudo_core {
        let report =
            audit::pseudo_core_report(&spec, &theta_ref, &agents, &cfg, args.probe_radius, k, args.probes, run.seed)
                .map_err(|e| match e {
                    Error::InvalidParams(m) => Failure::Config(format!("--pseudo-core/--probe-radius/--probes: {m}")),
                    e => e.into(),
                })?;
        println!("pseudo-core (ref): k = {}", report.k);
        println!("  gradient norm {:e}", report.grad_norm);
        println!(
            "  beta >= {:e} ({} probe pairs within radius {})",
            report.beta.beta, report.beta.n_probes, report.beta.radius
        );
        println!("  radius d = {:e}", report.radius);
        if !report.within_probe_ball {
            println!("  note: d exceeds the probe radius, so smoothness is unverified at that scale");
        }
    }
    Ok(())
}

fn ndarray_columns(a: &[f64], b: &[f64]) -> ndarray::Array2<f64> {
    ndarray::Array2::from_shape_fn((a.len(), 2), |(i, c)| if c == 0 { a[i] } else { b[i] })
}

// ------------------------------------------------------------------ report

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run directories, summary files, or output roots whose subdirectories
    /// hold runs.
    #[arg(required = true)]
    pub runs: Vec<PathBuf>,
    /// Run used as θ* in the ratio column; defaults to corefed when present.
    #[arg(long = "ref")]
    pub reference: Option<String>,
}

fn collect_summaries(paths: &[PathBuf]) -> Result<Vec<(String, Summary)>, Failure> {
    let mut found = Vec::new();
    for p in paths {
        if p.is_file() {
            found.push(p.clone());
        } else if p.join("summary.csv").is_file() {
            found.push(p.join("summary.csv"));
        } else if p.is_dir() {
            let mut subs: Vec<PathBuf> = fs::read_dir(p)
                .map_err(|e| io_failure(p, e))?
                .filter_map(|e| e.ok().map(|e| e.path().join("summary.csv")))
                .filter(|s| s.is_file())
                .collect();
            if subs.is_empty() {
                return Err(missing(p, "no summary.csv under"));
            }
            subs.sort();
            found.extend(subs);
        } else {
            return Err(missing(p, "run"));
        }
    }
    found
        .iter()
        .map(|f| {
            let s = Summary::read(f)?;
            Ok((s.aggregator.clone(), s))
        })
        .collect()
}

pub fn report(args: &ReportArgs) -> Result<(), Failure> {
    let runs = collect_summaries(&args.runs)?;
    let n = runs[0].1.utilities.len();
    if let Some((name, _)) = runs.iter().find(|(_, s)| s.utilities.len() != n) {
        return Err(Failure::Config(format!("run `{name}` has a different number of agents")));
    }
    let ref_idx = match &args.reference {
        Some(r) => runs
            .iter()
            .position(|(name, _)| name == r)
            .or_else(|| r.parse::<usize>().ok().filter(|&i| i < runs.len()))
            .ok_or_else(|| Failure::Config(format!("--ref: no run named `{r}`")))?,
        None => runs.iter().position(|(name, _)| name == "corefed").unwrap_or(0),
    };
    let u_ref = runs[ref_idx].1.utilities.clone();
    let ones = vec![1.0; n];
    let ratios = runs
        .iter()
        .map(|(_, s)| Ok(audit::core_ratio(&u_ref, &s.utilities, &ones)?.render()))
        .collect::<Result<Vec<_>, Failure>>()?;
    println!("reference: {}", runs[ref_idx].0);
    let rows: Vec<(String, &Summary)> = runs.iter().map(|(n, s)| (n.clone(), s)).collect();
    print_table(&rows, Some(&ratios));
    Ok(())
}
