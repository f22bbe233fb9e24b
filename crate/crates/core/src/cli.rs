//! The `hilasso` command line.
//!
//! Exit codes: 0 on success, 1 on usage or input errors, 2 when a solver
//! stopped without converging. Every file written through `--out` gets a
//! `<out>.manifest.json` sidecar recording the command, its inputs and the
//! resolved parameters.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::analysis::{self, DEFAULT_ENUMERATION_CAP};
use crate::error::{Error, Result};
use crate::harness::{self, ExperimentConfig, ExperimentResult};
use crate::io::{self, SupportFile};
use crate::model::{Dictionary, GroupPartition, Mode, RegularizerSpec, SignalSet};
use crate::solver::{sparsa_solve, SolverConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_NONCONVERGENCE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "hilasso", version, about = "Hierarchical and collaborative sparse coding")]
pub struct Cli {
    /// Worker threads for parallel sections (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sparse-code signals against a dictionary.
    Solve(SolveArgs),
    /// Draw a synthetic dictionary, codes and signals.
    Generate(GenerateArgs),
    /// Coherence measures of a grouped dictionary.
    Coherence(CoherenceArgs),
    /// Sufficient conditions for exact noiseless recovery.
    Certify(CertifyArgs),
    /// Compare models on synthetic data.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Args, Clone)]
pub struct GroupArgs {
    /// Group file: one group per line, 1-based atom indices.
    #[arg(long)]
    pub groups: Option<PathBuf>,
    /// Consecutive equal-size groups, written QxG.
    #[arg(long, value_name = "QxG", conflicts_with = "groups")]
    pub uniform_groups: Option<String>,
}

impl GroupArgs {
    fn resolve(&self, num_atoms: usize) -> Result<Option<GroupPartition>> {
        if let Some(path) = &self.groups {
            return io::read_groups(path, num_atoms).map(Some);
        }
        if let Some(text) = &self.uniform_groups {
            let (q, g) = io::parse_uniform_groups(text)?;
            if q * g != num_atoms {
                return Err(Error::Dimension(format!("--uniform-groups {q}x{g} covers {} atoms, dictionary has {num_atoms}", q * g)));
            }
            return GroupPartition::uniform(q, g).map(Some);
        }
        Ok(None)
    }

    fn require(&self, num_atoms: usize, why: &str) -> Result<GroupPartition> {
        self.resolve(num_atoms)?
            .ok_or_else(|| Error::Parameter(format!("{why} requires --groups (or --uniform-groups)")))
    }

    fn describe(&self) -> Value {
        json!({ "groups": self.groups, "uniform_groups": self.uniform_groups })
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub dict: PathBuf,
    #[arg(long)]
    pub signals: PathBuf,
    #[command(flatten)]
    pub groups: GroupArgs,
    #[arg(long, value_enum)]
    pub mode: Mode,
    #[arg(long, default_value_t = 0.0)]
    pub lambda1: f64,
    #[arg(long, default_value_t = 0.0)]
    pub lambda2: f64,
    /// 0/1 CSV of observed entries.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Relative iterate-change tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Weight group terms by the square root of the group size.
    #[arg(long)]
    pub group_size_scaling: bool,
    /// Code matrix CSV (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Objective value per accepted iterate, one per line.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Desk,
    Full,
    Missing,
}

impl Preset {
    fn config(self) -> ExperimentConfig {
        match self {
            Preset::Desk => ExperimentConfig::desk(),
            Preset::Full => ExperimentConfig::full(),
            Preset::Missing => ExperimentConfig::missing_desk(),
        }
    }
}

#[derive(Debug, Args, Clone)]
pub struct ConfigArgs {
    /// Experiment config JSON.
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match (&self.config, self.preset) {
            (Some(path), _) => io::read_json(path)?,
            (None, Some(p)) => p.config(),
            (None, None) => return Err(Error::Parameter("either --config or --preset is required".into())),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Directory receiving dict.csv, signals.csv, codes.csv, groups.txt,
    /// supports.json and, with missing entries, mask.csv.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CoherenceArgs {
    #[arg(long)]
    pub dict: PathBuf,
    #[command(flatten)]
    pub groups: GroupArgs,
    /// In-group sparsity for the sparse block coherences.
    #[arg(long, default_value_t = 1)]
    pub s: usize,
    /// Also compute projected coherences for this many active groups.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_ENUMERATION_CAP)]
    pub cap: u128,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    #[arg(long)]
    pub dict: PathBuf,
    #[command(flatten)]
    pub groups: GroupArgs,
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub s: usize,
    /// Group weight in [0, 1]; the l1 term has weight 1 - lambda.
    #[arg(long)]
    pub lambda: f64,
    /// Support JSON (1-based). Selects the support-specific certificate.
    #[arg(long)]
    pub support: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_ENUMERATION_CAP)]
    pub cap: u128,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Run this many consecutive seeds starting at the config seed and
    /// report averages.
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    /// Masked-signal comparison of C-HiLasso and Lasso with activity maps.
    #[arg(long)]
    pub missing_demo: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: &'static str,
    pub inputs: Value,
    pub outputs: Vec<PathBuf>,
    pub parameters: Value,
    pub version: &'static str,
    pub wall_time_secs: f64,
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(OsString::from).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

struct Run {
    command: &'static str,
    start: Instant,
    inputs: Value,
    parameters: Value,
    outputs: Vec<PathBuf>,
}

impl Run {
    fn new(command: &'static str, inputs: Value) -> Self {
        Self { command, start: Instant::now(), inputs, parameters: Value::Null, outputs: Vec::new() }
    }

    fn finish(self, manifest_at: Option<&Path>) -> Result<()> {
        let Some(primary) = manifest_at else { return Ok(()) };
        let manifest = RunManifest {
            command: self.command,
            inputs: self.inputs,
            outputs: self.outputs,
            parameters: self.parameters,
            version: env!("CARGO_PKG_VERSION"),
            wall_time_secs: self.start.elapsed().as_secs_f64(),
        };
        io::write_json(&manifest_path(primary), &manifest)
    }
}

fn emit_json<T: Serialize>(run: &mut Run, out: Option<&Path>, value: &T) -> Result<()> {
    match out {
        Some(path) => {
            io::write_json(path, value)?;
            run.outputs.push(path.to_path_buf());
        }
        None => println!("{}", serde_json::to_string_pretty(value).expect("serializable report")),
    }
    Ok(())
}

fn load_dictionary(path: &Path, partition: Option<GroupPartition>) -> Result<Dictionary> {
    let m = io::read_matrix(path)?;
    let partition = match partition {
        Some(p) => p,
        None => GroupPartition::singletons(m.ncols())?,
    };
    Dictionary::new(m, partition)
}

fn num_columns(path: &Path) -> Result<usize> {
    Ok(io::read_matrix(path)?.ncols())
}

fn cmd_solve(a: &SolveArgs) -> Result<i32> {
    let mut run = Run::new(
        "solve",
        json!({ "dict": a.dict, "signals": a.signals, "mask": a.mask, "partition": a.groups.describe() }),
    );
    let dmat = io::read_matrix(&a.dict)?;
    let partition = if a.mode.uses_groups() {
        a.groups.require(dmat.ncols(), &format!("--mode {}", a.mode))?
    } else {
        a.groups.resolve(dmat.ncols())?.unwrap_or(GroupPartition::singletons(dmat.ncols())?)
    };
    let dict = Dictionary::new(dmat, partition)?;
    let x = io::read_matrix(&a.signals)?;
    let signals = match &a.mask {
        Some(p) => SignalSet::with_mask(x, io::read_mask(p)?)?,
        None => SignalSet::new(x),
    };
    let spec = RegularizerSpec::for_mode(a.mode, a.lambda1, a.lambda2)?.with_group_size_scaling(a.group_size_scaling);
    let mut config = SolverConfig::default();
    if let Some(n) = a.max_iters {
        config.max_outer_iters = n;
    }
    if let Some(t) = a.tol {
        config.rel_tol = t;
    }
    let res = sparsa_solve(&dict, &signals, &spec, &config, None)?;
    run.parameters = json!({
        "mode": a.mode,
        "regularizer": spec,
        "solver": config,
        "outer_iterations": res.outer_iterations,
        "converged": res.converged,
        "objective": res.objective(),
    });
    match &a.out {
        Some(path) => {
            io::write_matrix(path, &res.code)?;
            run.outputs.push(path.clone());
        }
        None => io::format_matrix(std::io::stdout().lock(), &res.code)
            .map_err(|source| Error::Io { path: "<stdout>".into(), source })?,
    }
    if let Some(path) = &a.trace {
        let mut text = String::new();
        for v in &res.objective_trace {
            let _ = writeln!(text, "{}", io::format_value(*v));
        }
        std::fs::write(path, text).map_err(|source| Error::Io { path: path.display().to_string(), source })?;
        run.outputs.push(path.clone());
    }
    run.finish(a.out.as_deref())?;
    if res.converged {
        Ok(EXIT_OK)
    } else {
        eprintln!("warning: stopped after {} iterations without meeting the tolerance", res.outer_iterations);
        Ok(EXIT_NONCONVERGENCE)
    }
}

fn cmd_generate(a: &GenerateArgs) -> Result<i32> {
    let cfg = a.config.resolve()?;
    let mut run = Run::new("generate", json!({ "config": a.config.config, "preset": a.config.preset.map(|p| format!("{p:?}").to_lowercase()) }));
    run.parameters = serde_json::to_value(&cfg).expect("serializable config");
    let data = harness::generate_synthetic(&cfg)?;
    std::fs::create_dir_all(&a.out).map_err(|source| Error::Io { path: a.out.display().to_string(), source })?;
    let file = |name: &str| a.out.join(name);
    io::write_matrix(&file("dict.csv"), data.dictionary.matrix())?;
    io::write_matrix(&file("signals.csv"), data.signals.matrix())?;
    io::write_matrix(&file("codes.csv"), &data.codes)?;
    io::write_groups(&file("groups.txt"), data.dictionary.partition())?;
    let supports: Vec<SupportFile> = data.supports.iter().map(SupportFile::from_spec).collect();
    io::write_json(&file("supports.json"), &supports)?;
    run.outputs.extend(["dict.csv", "signals.csv", "codes.csv", "groups.txt", "supports.json"].map(file));
    if let Some(mask) = data.signals.mask() {
        io::write_mask(&file("mask.csv"), mask)?;
        run.outputs.push(file("mask.csv"));
    }
    run.finish(Some(&file("run")))?;
    Ok(EXIT_OK)
}

fn cmd_coherence(a: &CoherenceArgs) -> Result<i32> {
    let mut run = Run::new("coherence", json!({ "dict": a.dict, "partition": a.groups.describe() }));
    let partition = a.groups.require(num_columns(&a.dict)?, "coherence")?;
    let dict = load_dictionary(&a.dict, Some(partition))?;
    let report = analysis::coherence_report(&dict, a.s, a.cap)?;
    let projected = a.k.map(|k| analysis::projected_coherences(&dict, k, a.s, a.cap)).transpose()?;
    run.parameters = json!({ "s": a.s, "k": a.k, "cap": a.cap.to_string() });
    emit_json(&mut run, a.out.as_deref(), &json!({ "report": report, "projected": projected }))?;
    run.finish(a.out.as_deref())?;
    Ok(EXIT_OK)
}

fn cmd_certify(a: &CertifyArgs) -> Result<i32> {
    let mut run = Run::new("certify", json!({ "dict": a.dict, "support": a.support, "partition": a.groups.describe() }));
    let partition = a.groups.require(num_columns(&a.dict)?, "certify")?;
    let dict = load_dictionary(&a.dict, Some(partition))?;
    run.parameters = json!({ "k": a.k, "s": a.s, "lambda": a.lambda, "cap": a.cap.to_string() });
    let body = match &a.support {
        Some(path) => {
            let support = io::read_json::<SupportFile>(path)?.to_spec(dict.partition())?;
            if support.k() != a.k || support.s() != a.s {
                return Err(Error::Parameter(format!(
                    "support has k={} s={}, flags say k={} s={}",
                    support.k(),
                    support.s(),
                    a.k,
                    a.s
                )));
            }
            let cert = analysis::certify_instance(&dict, &support, a.lambda)?;
            json!({ "holds": cert.holds(), "certificate": cert })
        }
        None => {
            let (report, projected, cert) = analysis::certify_uniform(&dict, a.k, a.s, a.lambda, a.cap)?;
            json!({ "holds": cert.holds(), "certificate": cert, "report": report, "projected": projected })
        }
    };
    emit_json(&mut run, a.out.as_deref(), &body)?;
    run.finish(a.out.as_deref())?;
    Ok(EXIT_OK)
}

/// Fixed-width metrics table.
pub fn format_table(rows: &[(Mode, f64, f64, harness::SupportMetrics)]) -> String {
    let mut s = format!("{:<10} {:>10} {:>10} {:>12} {:>10} {:>10}\n", "method", "lambda1", "lambda2", "mse_x1e4", "hamming", "group_ham");
    for (mode, l1, l2, m) in rows {
        let _ = writeln!(s, "{:<10} {:>10.4} {:>10.4} {:>12.3} {:>10.3} {:>10.3}", mode.name(), l1, l2, m.mse_e4, m.hamming, m.group_hamming);
    }
    s
}

fn table_of(result: &ExperimentResult) -> String {
    let rows: Vec<_> = result.methods.iter().map(|r| (r.method, r.lambda.lambda1, r.lambda.lambda2, r.metrics)).collect();
    format_table(&rows)
}

fn cmd_experiment(a: &ExperimentArgs) -> Result<i32> {
    let cfg = a.config.resolve()?;
    if a.seeds == 0 {
        return Err(Error::Parameter("--seeds must be at least 1".into()));
    }
    let mut run = Run::new("experiment", json!({ "config": a.config.config }));
    run.parameters = json!({ "config": cfg, "seeds": a.seeds, "missing_demo": a.missing_demo });
    let mut runtimes = BTreeMap::new();
    let mut failed = false;
    let body = if a.missing_demo {
        let mut demos = Vec::new();
        for seed in cfg.seed..cfg.seed + a.seeds {
            let demo = harness::run_missing_data_demo(&cfg.clone().with_seed(seed))?;
            eprint!("seed {seed}\n{}", table_of(&demo.experiment));
            for r in &demo.experiment.methods {
                *runtimes.entry(r.method.name()).or_insert(0.0) += r.runtime_secs;
            }
            failed |= !demo.experiment.failures.is_empty();
            demos.push(demo);
        }
        serde_json::to_value(&demos).expect("serializable")
    } else {
        let mut results = Vec::new();
        for seed in cfg.seed..cfg.seed + a.seeds {
            let res = harness::run_experiment(&cfg.clone().with_seed(seed))?;
            for r in &res.methods {
                *runtimes.entry(r.method.name()).or_insert(0.0) += r.runtime_secs;
            }
            failed |= !res.failures.is_empty();
            results.push(res);
        }
        let summary = harness::summarize(&results);
        let rows: Vec<_> = summary
            .iter()
            .map(|s| {
                let l = results[0].method(s.method).map(|r| r.lambda).unwrap_or(harness::LambdaPair::new(f64::NAN, f64::NAN));
                (s.method, l.lambda1, l.lambda2, s.mean)
            })
            .collect();
        if a.seeds == 1 {
            eprint!("{}", table_of(&results[0]));
        } else {
            eprintln!("mean over {} seeds (lambdas of the first seed)", a.seeds);
            eprint!("{}", format_table(&rows));
        }
        if let Some(best) = summary.iter().min_by(|x, y| x.mean.mse_e4.total_cmp(&y.mean.mse_e4)) {
            eprintln!("lowest mse: {}", best.method);
        }
        json!({ "runs": results, "summary": summary })
    };
    run.parameters["runtime_secs"] = json!(runtimes);
    emit_json(&mut run, a.out.as_deref(), &body)?;
    run.finish(a.out.as_deref())?;
    Ok(if failed { EXIT_NONCONVERGENCE } else { EXIT_OK })
}

fn dispatch(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Generate(a) => cmd_generate(a),
        Command::Coherence(a) => cmd_coherence(a),
        Command::Certify(a) => cmd_certify(a),
        Command::Experiment(a) => cmd_experiment(a),
    }
}

fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::NonConvergence(_) => EXIT_NONCONVERGENCE,
        _ => EXIT_INPUT,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: cannot start thread pool: {e}");
            return EXIT_INPUT;
        }
    };
    match pool.install(|| dispatch(&cli)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_sits_next_to_output() {
        assert_eq!(manifest_path(Path::new("/tmp/a/codes.csv")), PathBuf::from("/tmp/a/codes.csv.manifest.json"));
    }

    #[test]
    fn usage_errors_exit_with_one() {
        assert_eq!(run(["hilasso", "solve", "--dict", "d.csv"]), EXIT_INPUT);
        assert_eq!(run(["hilasso", "frobnicate"]), EXIT_INPUT);
        assert_eq!(run(["hilasso", "--help"]), EXIT_OK);
    }

    #[test]
    fn experiment_needs_a_config() {
        assert_eq!(run(["hilasso", "experiment"]), EXIT_INPUT);
    }

    #[test]
    fn table_has_one_row_per_method() {
        let m = harness::SupportMetrics { mse_e4: 1.0, hamming: 2.0, group_hamming: 0.0 };
        let t = format_table(&[(Mode::Lasso, 0.1, 0.0, m), (Mode::Chilasso, 0.1, 0.2, m)]);
        assert_eq!(t.lines().count(), 3);
        assert!(t.contains("chilasso"));
    }
}
