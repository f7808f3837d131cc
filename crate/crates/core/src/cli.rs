//! Command-line front end: `simulate`, `fit-test`, `study`, `predict`, `diagnose`.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::baselines::baseline_report;
use crate::error::Error;
use crate::graph::stats::summary_stats;
use crate::graph::{load_dataset, load_networks, save_dataset, EdgeIndex, Group, InputFormat, NetworkDataset, SummaryVector};
use crate::inference::chain::{load_chains, save_chains};
use crate::inference::{run_chains, DiagnosticsReport, GibbsConfig, Hyperparameters, PgMethod, PosteriorChain};
use crate::simulation::{preset_scenarios, run_study, scenario_by_name, write_records_csv, Method, ScenarioSpec, StudyConfig, StudyResult, PRESETS, SCENARIO_NAMES};
use crate::testing::{predict_group, write_edge_matrix_csv, TestReport, DEFAULT_EPSILON, DEFAULT_GLOBAL_THRESHOLD, DEFAULT_LOCAL_THRESHOLD};

pub const SEED_ENV: &str = "NETDIFF_SEED";

#[derive(Debug, Parser)]
#[command(name = "netdiff", version, about = "Bayesian testing of group differences in samples of binary networks")]
pub struct Cli {
    /// Worker threads for chains and replicates; defaults to all cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a benchmark dataset with its ground truth.
    Simulate(SimulateArgs),
    /// Fit the mixture model and run the global and edgewise tests.
    FitTest(FitTestArgs),
    /// Run a replicated simulation study and score every method.
    Study(StudyArgs),
    /// Posterior predictive group-2 probability for new networks.
    Predict(PredictArgs),
    /// Recompute PSRF and ESS from stored chains.
    Diagnose(DiagnoseArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// One of scenario1-dependent, scenario1-independent, scenario2.
    #[arg(long, required_unless_present = "spec")]
    pub scenario: Option<String>,
    /// Scenario definition as JSON instead of a named scenario.
    #[arg(long, conflicts_with = "scenario")]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, env = SEED_ENV)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Overwrite a non-empty output directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Networks: CSV of edge vectors, or a directory of adjacency matrices.
    #[arg(long)]
    pub networks: PathBuf,
    /// Group labels (1 or 2), one per network.
    #[arg(long)]
    pub groups: PathBuf,
    /// Block id per node, used by the assortativity summary.
    #[arg(long)]
    pub blocks: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    pub format: InputFormat,
}

#[derive(Debug, Args, Default)]
pub struct HyperFlags {
    #[arg(long)]
    pub h_max: Option<usize>,
    #[arg(long)]
    pub r_max: Option<usize>,
    #[arg(long)]
    pub beta_a: Option<f64>,
    #[arg(long)]
    pub beta_b: Option<f64>,
    #[arg(long)]
    pub z_mean: Option<f64>,
    #[arg(long)]
    pub z_var: Option<f64>,
    #[arg(long)]
    pub mig_a1: Option<f64>,
    #[arg(long)]
    pub mig_a2: Option<f64>,
    #[arg(long)]
    pub prior_h1: Option<f64>,
    #[arg(long)]
    pub dirichlet_conc: Option<f64>,
}

#[derive(Debug, Args, Default)]
pub struct GibbsFlags {
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long, env = SEED_ENV)]
    pub seed: Option<u64>,
    /// exact or truncated.
    #[arg(long, value_parser = parse_pg_method)]
    pub pg_method: Option<PgMethod>,
}

#[derive(Debug, Args, Default)]
pub struct TestFlags {
    #[arg(long)]
    pub global_threshold: Option<f64>,
    #[arg(long)]
    pub local_threshold: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Also report the cutoff achieving this Bayesian FDR.
    #[arg(long)]
    pub fdr_target: Option<f64>,
    #[arg(long)]
    pub manova_alpha: Option<f64>,
    #[arg(long)]
    pub bh_q: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FitTestArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// JSON config with optional `hyper`, `gibbs` and `testing` sections.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub hyper: HyperFlags,
    #[command(flatten)]
    pub gibbs: GibbsFlags,
    #[command(flatten)]
    pub test: TestFlags,
    /// Keep every k-th stored draw for `predict`.
    #[arg(long)]
    pub snapshot_every: Option<usize>,
    #[arg(long)]
    pub no_snapshots: bool,
    #[arg(long)]
    pub no_predictive: bool,
    #[arg(long)]
    pub no_baselines: bool,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    /// table1-desk or samplesize-sweep.
    #[arg(long)]
    pub preset: String,
    /// Replicates per scenario; 25 unless `--full`.
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Use 100 replicates per scenario.
    #[arg(long, conflicts_with = "replicates")]
    pub full: bool,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub hyper: HyperFlags,
    #[command(flatten)]
    pub gibbs: GibbsFlags,
    #[command(flatten)]
    pub test: TestFlags,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Output directory of `fit-test` (or its `chains` subdirectory).
    #[arg(long)]
    pub chains: PathBuf,
    #[arg(long)]
    pub networks: PathBuf,
    #[arg(long, default_value = "csv")]
    pub format: InputFormat,
    /// Output CSV.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub chains: PathBuf,
    /// Consecutive sub-chains per chain.
    #[arg(long, default_value_t = 4)]
    pub pieces: usize,
    /// Output JSON.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

fn parse_pg_method(s: &str) -> std::result::Result<PgMethod, String> {
    match s {
        "exact" => Ok(PgMethod::Exact),
        "truncated" => Ok(PgMethod::Truncated),
        other => Err(format!("unknown method `{other}` (exact | truncated)")),
    }
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Runtime(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Contract(_) | Error::Load { .. } | Error::Format(_) => {
                CliError::Usage(e.to_string())
            }
            other => CliError::Runtime(other),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Record of one invocation, written next to its outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Value,
    pub seeds: Vec<u64>,
    /// SHA-256 of every input file, keyed by path.
    pub input_hashes: BTreeMap<String, String>,
    pub outputs: Vec<PathBuf>,
    pub wall_clock_seconds: f64,
    pub version: String,
}

impl RunManifest {
    fn write(&self, path: &Path) -> CliResult<()> {
        let body = serde_json::to_string_pretty(self).map_err(Error::from)?;
        fs::write(path, body).map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// Full configuration of a fit, after merging defaults, file and flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub hyper: Hyperparameters,
    pub gibbs: GibbsConfig,
    pub testing: TestingConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestingConfig {
    pub global_threshold: f64,
    pub local_threshold: f64,
    pub epsilon: f64,
    pub fdr_target: Option<f64>,
    pub manova_alpha: f64,
    pub bh_q: f64,
}

impl Default for TestingConfig {
    fn default() -> Self {
        Self {
            global_threshold: DEFAULT_GLOBAL_THRESHOLD,
            local_threshold: DEFAULT_LOCAL_THRESHOLD,
            epsilon: DEFAULT_EPSILON,
            fdr_target: None,
            manova_alpha: 0.1,
            bh_q: 0.1,
        }
    }
}

impl TestingConfig {
    fn validate(&self) -> CliResult<()> {
        for (name, x) in [
            ("global_threshold", self.global_threshold),
            ("local_threshold", self.local_threshold),
            ("epsilon", self.epsilon),
            ("manova_alpha", self.manova_alpha),
            ("bh_q", self.bh_q),
        ] {
            if !(0.0..=1.0).contains(&x) {
                return Err(CliError::Usage(format!("{name} must lie in [0, 1], got {x}")));
            }
        }
        Ok(())
    }
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Overlays a JSON config file on `defaults`.
fn overlay_file<T: Serialize + serde::de::DeserializeOwned>(defaults: &T, file: Option<&Path>) -> CliResult<T> {
    let Some(path) = file else { return Ok(serde_json::from_value(serde_json::to_value(defaults).map_err(Error::from)?).map_err(Error::from)?) };
    require_exists("--config", path)?;
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let over: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("--config {}: {e}", path.display())))?;
    let mut base = serde_json::to_value(defaults).map_err(Error::from)?;
    merge(&mut base, over);
    serde_json::from_value(base).map_err(|e| CliError::Usage(format!("--config {}: {e}", path.display())))
}

impl HyperFlags {
    fn apply(&self, h: &mut Hyperparameters) {
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(x) = self.$f { h.$f = x; })* };
        }
        set!(h_max, r_max, beta_a, beta_b, z_mean, z_var, mig_a1, mig_a2, prior_h1);
        if self.dirichlet_conc.is_some() {
            h.dirichlet_conc = self.dirichlet_conc;
        }
    }
}

impl GibbsFlags {
    fn apply(&self, g: &mut GibbsConfig) {
        if let Some(x) = self.iterations {
            g.n_iter = x;
        }
        if let Some(x) = self.burn_in {
            g.burn_in = x;
        }
        if let Some(x) = self.thin {
            g.thin = x;
        }
        if let Some(x) = self.chains {
            g.n_chains = x;
        }
        if let Some(x) = self.seed {
            g.seed = x;
        }
        if let Some(x) = self.pg_method {
            g.pg_method = x;
        }
    }
}

impl TestFlags {
    fn apply(&self, t: &mut TestingConfig) {
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(x) = self.$f { t.$f = x; })* };
        }
        set!(global_threshold, local_threshold, epsilon, manova_alpha, bh_q);
        if self.fdr_target.is_some() {
            t.fdr_target = self.fdr_target;
        }
    }
}

fn require_exists(flag: &str, path: &Path) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{flag}: {} does not exist", path.display())))
    }
}

fn prepare_out_dir(dir: &Path, force: bool) -> CliResult<()> {
    if dir.is_file() {
        return Err(CliError::Usage(format!("--out: {} is a file", dir.display())));
    }
    if dir.exists() {
        let nonempty = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?.next().is_some();
        if nonempty && !force {
            return Err(CliError::Usage(format!(
                "--out: {} is not empty; pass --force to overwrite",
                dir.display()
            )));
        }
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(())
}

fn prepare_out_file(path: &Path, force: bool) -> CliResult<()> {
    if path.exists() && !force {
        return Err(CliError::Usage(format!(
            "--out: {} exists; pass --force to overwrite",
            path.display()
        )));
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    Ok(())
}

fn hash_file(h: &mut Sha256, path: &Path) -> CliResult<()> {
    h.update(fs::read(path).map_err(|e| Error::io(path, e))?);
    Ok(())
}

/// SHA-256 of a file, or of a directory's files in name order.
fn hash_input(path: &Path) -> CliResult<String> {
    let mut h = Sha256::new();
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        entries.sort();
        for p in entries {
            h.update(p.file_name().unwrap_or_default().as_encoded_bytes());
            hash_file(&mut h, &p)?;
        }
    } else {
        hash_file(&mut h, path)?;
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

fn hashes(paths: &[&Path]) -> CliResult<BTreeMap<String, String>> {
    paths.iter().map(|p| Ok((p.display().to_string(), hash_input(p)?))).collect()
}

fn manifest_path_for(file: &Path) -> PathBuf {
    let stem = file.file_stem().unwrap_or_default().to_string_lossy();
    file.with_file_name(format!("{stem}.manifest.json"))
}

fn to_value<T: Serialize>(x: &T) -> CliResult<Value> {
    Ok(serde_json::to_value(x).map_err(Error::from)?)
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli) -> CliResult<()> {
    let Cli { threads, command } = cli;
    match threads {
        Some(0) => Err(CliError::Usage("--threads must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Runtime(Error::Config(e.to_string())))?;
            pool.install(|| dispatch(command))
        }
        None => dispatch(command),
    }
}

fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::FitTest(a) => cmd_fit_test(&a),
        Command::Study(a) => cmd_study(&a),
        Command::Predict(a) => cmd_predict(&a),
        Command::Diagnose(a) => cmd_diagnose(&a),
    }
}

pub fn cmd_simulate(a: &SimulateArgs) -> CliResult<()> {
    let start = Instant::now();
    let seed = a.seed.unwrap_or(0);
    let mut inputs = BTreeMap::new();
    let mut spec = match (&a.scenario, &a.spec) {
        (_, Some(path)) => {
            require_exists("--spec", path)?;
            inputs = hashes(&[path])?;
            let mut s = ScenarioSpec::read_json(path)?;
            if a.seed.is_some() {
                s.seed = seed;
            }
            s
        }
        (Some(name), None) => scenario_by_name(name, 50, seed).ok_or_else(|| {
            CliError::Usage(format!(
                "--scenario: unknown scenario `{name}` (expected one of {})",
                SCENARIO_NAMES.join(", ")
            ))
        })?,
        (None, None) => return Err(CliError::Usage("pass --scenario or --spec".into())),
    };
    if let Some(n) = a.n {
        spec.n = n;
    }
    spec.validate()?;
    prepare_out_dir(&a.out, a.force)?;

    let mut rng = Xoshiro256PlusPlus::seed_from_u64(spec.seed);
    let data = spec.generate(&mut rng)?;
    let delta = spec.local_truth()?;
    let mut outputs = save_dataset(&data, &a.out)?;

    let truth = a.out.join("truth.csv");
    let idx = EdgeIndex::new(spec.v);
    let mut body = String::from("edge,node_a,node_b,delta\n");
    for (l, &(p, q)) in idx.pairs().iter().enumerate() {
        body.push_str(&format!("{l},{},{},{}\n", p + 1, q + 1, delta[l] as u8));
    }
    fs::write(&truth, body).map_err(|e| Error::io(&truth, e))?;
    outputs.push(truth);
    let spec_path = a.out.join("scenario.json");
    spec.write_json(&spec_path)?;
    outputs.push(spec_path);

    let manifest_path = a.out.join("manifest.json");
    outputs.push(manifest_path.clone());
    RunManifest {
        command: "simulate".into(),
        config: to_value(&spec)?,
        seeds: vec![spec.seed],
        input_hashes: inputs,
        outputs,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        version: env!("CARGO_PKG_VERSION").into(),
    }
    .write(&manifest_path)?;
    println!(
        "{}: n = {}, v = {}, {} differing edges, written to {}",
        spec.name,
        data.n(),
        data.v(),
        delta.iter().filter(|&&d| d).count(),
        a.out.display()
    );
    Ok(())
}

fn fit_defaults() -> RunConfig {
    RunConfig {
        hyper: Hyperparameters::default(),
        gibbs: GibbsConfig { store_snapshots: true, snapshot_every: 10, ..GibbsConfig::default() },
        testing: TestingConfig::default(),
    }
}

fn resolve_fit_config(a: &FitTestArgs) -> CliResult<RunConfig> {
    let mut cfg = overlay_file(&fit_defaults(), a.config.as_deref())?;
    a.hyper.apply(&mut cfg.hyper);
    a.gibbs.apply(&mut cfg.gibbs);
    a.test.apply(&mut cfg.testing);
    if let Some(k) = a.snapshot_every {
        cfg.gibbs.snapshot_every = k;
    }
    if a.no_snapshots {
        cfg.gibbs.store_snapshots = false;
    }
    if a.no_predictive {
        cfg.gibbs.posterior_predictive = false;
    }
    cfg.hyper = cfg.hyper.resolved();
    cfg.hyper.validate()?;
    cfg.gibbs.validate()?;
    cfg.testing.validate()?;
    Ok(cfg)
}

fn load_data(d: &DataArgs) -> CliResult<NetworkDataset> {
    require_exists("--networks", &d.networks)?;
    require_exists("--groups", &d.groups)?;
    if let Some(b) = &d.blocks {
        require_exists("--blocks", b)?;
    }
    Ok(load_dataset(&d.networks, &d.groups, d.format, d.blocks.as_deref())?)
}

fn write_summary_rows(path: &Path, rows: impl Iterator<Item = (Option<u8>, [f64; 4])>) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(Error::from)?;
    let mut header = vec!["group"];
    header.extend(SummaryVector::NAMES);
    w.write_record(&header).map_err(Error::from)?;
    for (g, s) in rows {
        let mut rec = vec![g.map_or(String::new(), |g| g.to_string())];
        rec.extend(s.iter().map(|x| x.to_string()));
        w.write_record(&rec).map_err(Error::from)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn pooled_means(chains: &[PosteriorChain], get: impl Fn(&PosteriorChain) -> &crate::inference::DrawMatrix) -> Vec<f64> {
    let m = get(&chains[0]).cols();
    let mut sum = vec![0.0; m];
    let mut rows = 0usize;
    for c in chains {
        let d = get(c);
        for i in 0..d.rows() {
            for (s, x) in sum.iter_mut().zip(d.row(i)) {
                *s += x;
            }
        }
        rows += d.rows();
    }
    sum.iter().map(|s| s / rows.max(1) as f64).collect()
}

pub fn cmd_fit_test(a: &FitTestArgs) -> CliResult<()> {
    let start = Instant::now();
    let data = load_data(&a.data)?;
    let cfg = resolve_fit_config(a)?;
    prepare_out_dir(&a.out, a.force)?;
    let out = &a.out;

    let chains = run_chains(&data, &cfg.hyper, &cfg.gibbs)?;
    let mut outputs = save_chains(&chains, &out.join("chains"))?;

    let t = &cfg.testing;
    let mut report =
        TestReport::from_chains(&chains, t.global_threshold, t.epsilon, t.local_threshold, t.fdr_target)?;
    if !a.no_baselines {
        match baseline_report(&data, t.manova_alpha, t.bh_q) {
            Ok(b) => report.baselines = Some(b),
            Err(e) => eprintln!("warning: baselines skipped: {e}"),
        }
    }
    let p = out.join("report.json");
    report.write_json(&p)?;
    outputs.push(p);

    match DiagnosticsReport::from_chains(&chains, 4) {
        Ok(d) => {
            let p = out.join("diagnostics.json");
            d.write_json(&p)?;
            outputs.push(p);
            println!(
                "diagnostics: max PSRF {:.3}, median ESS {:.0} of {} stored draws",
                d.psrf_max, d.ess_median, d.n_stored
            );
        }
        Err(e) => eprintln!("warning: diagnostics skipped: {e}"),
    }

    let v = data.v();
    let pi1 = pooled_means(&chains, |c| &c.group_probs[0]);
    let pi2 = pooled_means(&chains, |c| &c.group_probs[1]);
    let freq = |g: Group| {
        let nets: Vec<_> = data.networks().iter().zip(data.groups()).filter(|(_, &y)| y == g).collect();
        let mut f = vec![0.0; pi1.len()];
        for (e, _) in &nets {
            for l in e.ones() {
                f[l] += 1.0;
            }
        }
        f.iter().map(|x| x / nets.len().max(1) as f64).collect::<Vec<f64>>()
    };
    let (f1, f2) = (freq(Group::One), freq(Group::Two));
    let mut matrices: Vec<(&str, Vec<f64>)> = vec![
        ("local_pr_matrix.csv", report.local_pr.clone()),
        ("local_reject_matrix.csv", report.decisions.iter().map(|&d| d as u8 as f64).collect()),
        ("posterior_diff_matrix.csv", pi2.iter().zip(&pi1).map(|(b, a)| b - a).collect()),
        ("empirical_diff_matrix.csv", f2.iter().zip(&f1).map(|(b, a)| b - a).collect()),
    ];
    if let Some(b) = &report.baselines {
        matrices.push(("fisher_calibrated_matrix.csv", b.fisher_calibrated.clone()));
        matrices.push(("fisher_bh_reject_matrix.csv", b.bh_reject.iter().map(|&d| d as u8 as f64).collect()));
    }
    for (name, values) in matrices {
        let p = out.join(name);
        write_edge_matrix_csv(&values, v, &p)?;
        outputs.push(p);
    }

    let observed = out.join("observed_summaries.csv");
    write_summary_rows(
        &observed,
        data.networks()
            .iter()
            .zip(data.groups())
            .map(|(e, g)| (Some(g.label()), summary_stats(e, data.blocks()).to_array())),
    )?;
    outputs.push(observed);
    if chains.iter().all(|c| c.predictive.is_some()) {
        let p = out.join("predictive_summaries.csv");
        let rows = Group::BOTH.into_iter().flat_map(|g| {
            chains.iter().flat_map(move |c| {
                let m = &c.predictive.as_ref().unwrap()[g.index()];
                (0..m.rows()).map(move |i| {
                    let r = m.row(i);
                    (Some(g.label()), [r[0], r[1], r[2], r[3]])
                })
            })
        });
        write_summary_rows(&p, rows)?;
        outputs.push(p);
    }

    let mut inputs: Vec<&Path> = vec![&a.data.networks, &a.data.groups];
    if let Some(b) = &a.data.blocks {
        inputs.push(b);
    }
    if let Some(c) = &a.config {
        inputs.push(c);
    }
    let manifest_path = out.join("manifest.json");
    outputs.push(manifest_path.clone());
    RunManifest {
        command: "fit-test".into(),
        config: to_value(&cfg)?,
        seeds: chains.iter().map(|c| c.meta.seed).collect(),
        input_hashes: hashes(&inputs)?,
        outputs,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        version: env!("CARGO_PKG_VERSION").into(),
    }
    .write(&manifest_path)?;

    println!(
        "pr(H1 | data) = {:.4} (threshold {}, {}); {} of {} edges flagged",
        report.global_pr_h1,
        t.global_threshold,
        if report.global_reject { "reject H0" } else { "do not reject H0" },
        report.decisions.iter().filter(|&&d| d).count(),
        report.decisions.len()
    );
    if let Some(b) = &report.baselines {
        println!(
            "MANOVA p = {:.4}; Fisher + BH flags {} edges",
            b.manova.p_value,
            b.bh_reject.iter().filter(|&&d| d).count()
        );
    }
    Ok(())
}

/// Configuration echoed into a study manifest.
#[derive(Debug, Clone, Serialize)]
struct StudyRun<'a> {
    preset: &'a str,
    replicates: usize,
    seed: u64,
    study: &'a StudyConfig,
}

pub fn cmd_study(a: &StudyArgs) -> CliResult<()> {
    let start = Instant::now();
    let seed = a.gibbs.seed.unwrap_or(0);
    let groups = preset_scenarios(&a.preset, seed).ok_or_else(|| {
        CliError::Usage(format!("--preset: unknown preset `{}` (expected one of {})", a.preset, PRESETS.join(", ")))
    })?;
    let replicates = a.replicates.unwrap_or(if a.full { 100 } else { 25 });
    if replicates == 0 {
        return Err(CliError::Usage("--replicates must be at least 1".into()));
    }
    let defaults = RunConfig {
        gibbs: GibbsConfig { posterior_predictive: false, ..GibbsConfig::default() },
        ..fit_defaults()
    };
    let mut cfg = overlay_file(&defaults, a.config.as_deref())?;
    a.hyper.apply(&mut cfg.hyper);
    a.gibbs.apply(&mut cfg.gibbs);
    a.test.apply(&mut cfg.testing);
    cfg.gibbs.store_snapshots = false;
    cfg.hyper = cfg.hyper.resolved();
    cfg.hyper.validate()?;
    cfg.gibbs.validate()?;
    cfg.testing.validate()?;
    let study = StudyConfig {
        hyper: cfg.hyper.clone(),
        gibbs: cfg.gibbs.clone(),
        global_threshold: cfg.testing.global_threshold,
        local_threshold: cfg.testing.local_threshold,
        epsilon: cfg.testing.epsilon,
        manova_alpha: cfg.testing.manova_alpha,
        bh_q: cfg.testing.bh_q,
    };
    prepare_out_dir(&a.out, a.force)?;

    let mut results: Vec<StudyResult> = Vec::new();
    let mut outputs = Vec::new();
    for (label, scenarios) in &groups {
        let r = run_study(label, scenarios, replicates, &Method::ALL, &study);
        let p = a.out.join(format!("records_{}.csv", label.replace('=', "")));
        write_records_csv(&r.records, &p)?;
        outputs.push(p);
        print_panels(&r);
        results.push(r);
    }
    let p = a.out.join("panels.json");
    fs::write(&p, serde_json::to_string_pretty(&results).map_err(Error::from)?).map_err(|e| Error::io(&p, e))?;
    outputs.push(p);

    let manifest_path = a.out.join("manifest.json");
    outputs.push(manifest_path.clone());
    let inputs: Vec<&Path> = a.config.iter().map(PathBuf::as_path).collect();
    let seeds = results.iter().flat_map(|r| r.records.iter().map(|x| x.seed)).collect::<std::collections::BTreeSet<_>>();
    RunManifest {
        command: "study".into(),
        config: to_value(&StudyRun { preset: &a.preset, replicates, seed, study: &study })?,
        seeds: seeds.into_iter().collect(),
        input_hashes: hashes(&inputs)?,
        outputs,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        version: env!("CARGO_PKG_VERSION").into(),
    }
    .write(&manifest_path)?;
    Ok(())
}

fn print_panels(r: &StudyResult) {
    let f = |x: Option<f64>| x.map_or("-".to_string(), |x| format!("{x:.3}"));
    println!("[{}]", r.label);
    println!("{:<14} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}", "method", "glob_I", "glob_II", "loc_I", "loc_II", "FWER", "FDR", "AUC");
    for p in &r.panels {
        let name = serde_json::to_value(p.method).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
        println!(
            "{:<14} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}",
            name,
            f(p.global_type_i),
            f(p.global_type_ii),
            f(p.local_type_i),
            f(p.local_type_ii),
            f(p.fwer),
            f(p.fdr),
            f(p.auc_mean)
        );
    }
}

fn chains_dir(path: &Path) -> PathBuf {
    let sub = path.join("chains");
    if sub.is_dir() { sub } else { path.to_path_buf() }
}

pub fn cmd_predict(a: &PredictArgs) -> CliResult<()> {
    let start = Instant::now();
    require_exists("--chains", &a.chains)?;
    require_exists("--networks", &a.networks)?;
    let chains = load_chains(&chains_dir(&a.chains))?;
    let snapshots: Vec<_> = chains.iter().filter_map(|c| c.snapshots.as_ref()).flatten().cloned().collect();
    if snapshots.is_empty() {
        return Err(CliError::Usage(format!(
            "--chains: {} has no stored snapshots; refit without --no-snapshots",
            a.chains.display()
        )));
    }
    let (v, nets) = load_networks(&a.networks, a.format)?;
    if v != chains[0].meta.v {
        return Err(CliError::Usage(format!("--networks: {v} nodes, model was fit on {}", chains[0].meta.v)));
    }
    prepare_out_file(&a.out, a.force)?;
    let mut body = String::from("subject,pr_group2\n");
    for (i, e) in nets.iter().enumerate() {
        body.push_str(&format!("{},{}\n", i + 1, predict_group(&snapshots, e)?));
    }
    fs::write(&a.out, body).map_err(|e| Error::io(&a.out, e))?;

    let manifest_path = manifest_path_for(&a.out);
    RunManifest {
        command: "predict".into(),
        config: serde_json::json!({
            "chains": a.chains,
            "networks": a.networks,
            "format": a.format,
            "n_snapshots": snapshots.len(),
        }),
        seeds: chains.iter().map(|c| c.meta.seed).collect(),
        input_hashes: hashes(&[&a.networks])?,
        outputs: vec![a.out.clone(), manifest_path.clone()],
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        version: env!("CARGO_PKG_VERSION").into(),
    }
    .write(&manifest_path)?;
    println!("{} predictions from {} posterior draws written to {}", nets.len(), snapshots.len(), a.out.display());
    Ok(())
}

pub fn cmd_diagnose(a: &DiagnoseArgs) -> CliResult<()> {
    let start = Instant::now();
    require_exists("--chains", &a.chains)?;
    if a.pieces == 0 {
        return Err(CliError::Usage("--pieces must be at least 1".into()));
    }
    let chains = load_chains(&chains_dir(&a.chains))?;
    let d = DiagnosticsReport::from_chains(&chains, a.pieces)?;
    prepare_out_file(&a.out, a.force)?;
    d.write_json(&a.out)?;
    let manifest_path = manifest_path_for(&a.out);
    RunManifest {
        command: "diagnose".into(),
        config: serde_json::json!({ "chains": a.chains, "pieces": a.pieces }),
        seeds: chains.iter().map(|c| c.meta.seed).collect(),
        input_hashes: BTreeMap::new(),
        outputs: vec![a.out.clone(), manifest_path.clone()],
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        version: env!("CARGO_PKG_VERSION").into(),
    }
    .write(&manifest_path)?;
    println!(
        "{} chains, {} stored draws: max PSRF {:.3} ({} >= 1.1), median ESS {:.0} ({:.0}% of draws)",
        d.n_chains,
        d.n_stored,
        d.psrf_max,
        d.n_psrf_above_1_1,
        d.ess_median,
        100.0 * d.ess_median_fraction
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_overrides_leaves_only() {
        let mut base = serde_json::json!({"hyper": {"h_max": 10, "r_max": 10}, "testing": {"epsilon": 0.1}});
        merge(&mut base, serde_json::json!({"hyper": {"h_max": 4}}));
        assert_eq!(base["hyper"]["h_max"], 4);
        assert_eq!(base["hyper"]["r_max"], 10);
        assert_eq!(base["testing"]["epsilon"], 0.1);
    }

    #[test]
    fn flags_beat_file_beat_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("c.json");
        fs::write(&file, r#"{"hyper": {"h_max": 4, "r_max": 3}, "gibbs": {"n_iter": 3000}}"#).unwrap();
        let cli = Cli::try_parse_from([
            "netdiff", "fit-test", "--networks", "n.csv", "--groups", "g.csv", "--out", "o",
            "--config", file.to_str().unwrap(), "--h-max", "6",
        ])
        .unwrap();
        let Command::FitTest(a) = cli.command else { panic!() };
        let cfg = resolve_fit_config(&a).unwrap();
        assert_eq!(cfg.hyper.h_max, 6);
        assert_eq!(cfg.hyper.r_max, 3);
        assert_eq!(cfg.gibbs.n_iter, 3000);
        assert_eq!(cfg.gibbs.burn_in, 1000);
        assert!(cfg.gibbs.store_snapshots);
        assert_eq!(cfg.testing, TestingConfig::default());
        assert_eq!(cfg.hyper.dirichlet_conc, Some(1.0 / 6.0));
    }

    #[test]
    fn unknown_config_keys_are_usage_errors() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("c.json");
        fs::write(&file, r#"{"hyper": {"hmax": 4}}"#).unwrap();
        let r = overlay_file(&fit_defaults(), Some(&file));
        assert!(matches!(r, Err(CliError::Usage(_))));
    }

    #[test]
    fn hashes_are_sha256() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x");
        fs::write(&p, "abc").unwrap();
        assert_eq!(
            hash_input(&p).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
