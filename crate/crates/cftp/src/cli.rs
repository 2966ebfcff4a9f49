//! Command-line entry point. [`run`] maps every outcome to an exit code:
//! 0 success, 1 usage or validation error, 2 too many budget failures (or
//! any, with `--strict-failures`), 3 internal error.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use cftp_core::diagnostics::{self, Functional, TailQuantity};
use cftp_core::locking::explore_with_locking;
use cftp_core::model::presets;
use cftp_core::oracle::{self, DEFAULT_TORUS_CAP};
use cftp_core::rng::derive;
use cftp_core::{Caps, EventField, Readout, Site, SpaceTime};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::batch::{self, BatchSpec, FAILURE_THRESHOLD};
use crate::manifest::{self, CapsDoc, ModelRef, OutputRef, RunManifest, SeedSchedule, Timing, Versions};
use crate::model_file::{self, sha256_hex, LoadedModel};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Failures(String),
    Internal(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Failures(_) => 2,
            CliError::Internal(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Failures(m) | CliError::Internal(m) => m,
        }
    }
}

impl From<model_file::ModelFileError> for CliError {
    fn from(e: model_file::ModelFileError) -> Self {
        CliError::Usage(e.to_string())
    }
}

fn core_err(e: cftp_core::Error) -> CliError {
    match e {
        cftp_core::Error::Validation { .. }
        | cftp_core::Error::InvalidQuery(_)
        | cftp_core::Error::PositiveRatesMissing
        | cftp_core::Error::ZeroTotalRate
        | cftp_core::Error::ModelShapeMismatch(_)
        | cftp_core::Error::CapExceeded { .. } => CliError::Usage(e.to_string()),
        cftp_core::Error::BudgetExceeded { .. } => CliError::Failures(e.to_string()),
        _ => CliError::Internal(e.to_string()),
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |e| CliError::Internal(format!("{}: {e}", path.display()))
}

#[derive(Parser, Debug)]
#[command(name = "cftp", version, about = "Perfect sampling of perturbed interacting particle systems")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a model file and print its smallness parameters.
    Validate { file: String },
    /// Draw exact samples of the stationary marginal at one site.
    Sample(SampleArgs),
    /// Monte Carlo estimates of g, the Lambda functionals, bound checks and tails.
    Diagnose(DiagnoseArgs),
    /// Reference marginals from a torus solve or forward simulation.
    Oracle {
        #[command(subcommand)]
        which: OracleCommand,
    },
    /// Quick end-to-end checks on the builtin models.
    Selftest {
        #[arg(long, default_value_t = 200)]
        n: u64,
    },
    /// Write a builtin model as a model file.
    Export {
        /// Builtin model name; omit to list them.
        #[arg(long)]
        builtin: Option<String>,
        #[arg(long, value_enum, default_value_t = FileFormat::Toml)]
        format: FileFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run the batch described by a manifest and compare output hashes.
    Replay {
        manifest: PathBuf,
        /// Where to write the re-run CSV (default: the recorded path).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FileFormat {
    Toml,
    Json,
}

#[derive(Args, Debug, Clone)]
struct ModelArg {
    /// Model file (.toml or .json), or `builtin:<name>`.
    #[arg(long)]
    model: String,
}

#[derive(Args, Debug)]
struct SampleArgs {
    #[command(flatten)]
    model: ModelArg,
    /// Site coordinates, comma separated.
    #[arg(long, default_value = "0", allow_hyphen_values = true)]
    site: String,
    #[arg(long, default_value_t = 1000)]
    n: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Work limits, e.g. `nodes=100000,depth=10000,points=10000,layers=1000`.
    #[arg(long)]
    caps: Option<String>,
    /// `consensus`, `consensus(k=K,seed=S)` or `exact`.
    #[arg(long, default_value = "consensus")]
    readout: String,
    /// CSV destination; stdout when absent (no manifest is written then).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Abort with exit code 2 at the first failed sample.
    #[arg(long)]
    strict_failures: bool,
    /// Print the root locking tree of the first sample to stderr.
    #[arg(long)]
    dump_tree: bool,
    /// Print the event column of this site, from T* of the first sample to 0, to stderr.
    #[arg(long, allow_hyphen_values = true)]
    dump_column: Option<String>,
}

#[derive(Args, Debug)]
struct DiagnoseArgs {
    #[command(flatten)]
    model: ModelArg,
    #[arg(long, default_value_t = 10_000)]
    n: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = -0.1, allow_hyphen_values = true)]
    lambda: f64,
    #[arg(long)]
    caps: Option<String>,
    #[arg(long, default_value = "consensus")]
    readout: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum OracleCommand {
    /// Exact stationary law on the periodic torus of side n.
    Torus {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, default_value_t = 4)]
        n: usize,
        /// Largest admissible number of torus configurations.
        #[arg(long, default_value_t = DEFAULT_TORUS_CAP)]
        cap: usize,
    },
    /// Site-0 marginal of forward runs on a box with frozen outside values.
    Forward {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, default_value_t = 20)]
        radius: i32,
        #[arg(long, default_value_t = 50.0)]
        burnin: f64,
        #[arg(long, default_value_t = 10_000)]
        n: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Parses `argv` (program name first), runs the command, prints errors to
/// stderr and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let result = match cli.threads {
        Some(t) => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
            Ok(pool) => pool.install(|| dispatch(cli.command)),
            Err(e) => Err(CliError::Internal(format!("thread pool: {e}"))),
        },
        None => dispatch(cli.command),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.code()
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Validate { file } => validate(&file),
        Command::Sample(a) => sample(a),
        Command::Diagnose(a) => diagnose(a),
        Command::Oracle { which } => oracle_cmd(which),
        Command::Selftest { n } => selftest(n),
        Command::Export { builtin, format, out } => export(builtin, format, out),
        Command::Replay { manifest, out } => replay(&manifest, out),
    }
}

/// Loads a model file or a builtin preset. Builtins hash their TOML export.
pub fn load_model(spec: &str) -> Result<LoadedModel, CliError> {
    if let Some(name) = spec.strip_prefix("builtin:") {
        let p = presets::by_name(name)
            .map_err(core_err)?
            .ok_or_else(|| CliError::Usage(format!("unknown builtin model {name:?}")))?;
        let text = model_file::to_toml(&model_file::export(&p.model, p.theta));
        return Ok(LoadedModel { model: p.model, theta: p.theta, sha256: sha256_hex(text.as_bytes()) });
    }
    Ok(model_file::load(Path::new(spec))?)
}

pub fn parse_caps(spec: Option<&str>) -> Result<Caps, CliError> {
    let mut caps = Caps::default();
    let Some(spec) = spec else { return Ok(caps) };
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (key, val) = part.split_once('=').ok_or_else(|| CliError::Usage(format!("caps: bad entry {part:?}")))?;
        let val: usize = val
            .trim()
            .parse()
            .ok()
            .filter(|&v| v > 0)
            .ok_or_else(|| CliError::Usage(format!("caps: {key} needs a positive integer, got {val:?}")))?;
        match key.trim() {
            "nodes" => caps.nodes = val,
            "depth" => caps.depth = val,
            "points" => caps.points = val,
            "layers" => caps.layers = val,
            other => return Err(CliError::Usage(format!("caps: unknown key {other:?}"))),
        }
    }
    Ok(caps)
}

fn parse_site(spec: &str, dim: usize) -> Result<Site, CliError> {
    let coords = spec
        .split(',')
        .map(|c| c.trim().parse::<i32>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| CliError::Usage(format!("site: bad coordinates {spec:?}")))?;
    let coords = if coords.len() == 1 && dim > 1 && coords[0] == 0 { vec![0; dim] } else { coords };
    if coords.len() != dim {
        return Err(CliError::Usage(format!("site: {} coordinates for a {dim}-dimensional model", coords.len())));
    }
    Ok(Site::new(&coords))
}

fn show_param(r: cftp_core::Result<f64>) -> String {
    match r {
        Ok(v) => format!("{v}"),
        Err(e) => format!("n/a ({e})"),
    }
}

fn validate(file: &str) -> Result<(), CliError> {
    let m = load_model(file)?;
    let model = &m.model;
    let perturbative = model.perturbative_indices().count();
    println!("model: {file}");
    println!("sha256: {}", m.sha256);
    println!("dim: {}", model.dim());
    println!("states: {}", model.states().labels().join(" "));
    println!("rules: {} ({} perturbative)", model.rules().len(), perturbative);
    println!("theta: {}", m.theta);
    println!("total rate: {}", model.total_rate());
    println!("range: {}", model.max_range());
    println!("epsilon: {}", show_param(model.epsilon()));
    println!("kappa: {}", show_param(model.kappa()));
    println!("positive-rates: {}", if model.positive_rates() { "yes" } else { "no" });
    Ok(())
}

fn now_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

struct SampleJob {
    model_source: String,
    site: Vec<i32>,
    n: u64,
    seed: u64,
    caps: Caps,
    readout: Readout,
    out: Option<PathBuf>,
    strict: bool,
}

fn sample(a: SampleArgs) -> Result<(), CliError> {
    let m = load_model(&a.model.model)?;
    let site = parse_site(&a.site, m.model.dim())?;
    let caps = parse_caps(a.caps.as_deref())?;
    let readout = manifest::parse_readout(&a.readout).map_err(CliError::Usage)?;
    if a.dump_tree || a.dump_column.is_some() {
        dump(&m, site, a.seed, caps, a.dump_tree, a.dump_column.as_deref())?;
    }
    let job = SampleJob {
        model_source: a.model.model.clone(),
        site: site.coords()[..m.model.dim()].to_vec(),
        n: a.n,
        seed: a.seed,
        caps,
        readout,
        out: a.out,
        strict: a.strict_failures,
    };
    run_job(&m, &job).map(|_| ())
}

/// Runs a batch, writes CSV and manifest, returns the manifest.
fn run_job(m: &LoadedModel, job: &SampleJob) -> Result<Option<RunManifest>, CliError> {
    let theta = m.theta.bind(&m.model).map_err(core_err)?;
    let spec = BatchSpec { site: Site::new(&job.site), n: job.n, base_seed: job.seed, caps: job.caps, readout: job.readout };
    let started = now_ms();
    let clock = Instant::now();
    let results = if job.strict {
        batch::run_strict(&m.model, &theta, &spec).map_err(|r| {
            let why = r.failure.map(|f| f.to_string()).unwrap_or_default();
            CliError::Failures(format!("sample with seed {} failed ({why}); aborting", r.seed))
        })?
    } else {
        batch::run(&m.model, &theta, &spec)
    };
    let elapsed = clock.elapsed().as_millis();
    let failures = results.iter().filter(|r| r.failed()).count() as u64;

    let manifest = match &job.out {
        None => {
            let stdout = io::stdout();
            batch::write_csv(stdout.lock(), &m.model, &results).map_err(|e| CliError::Internal(e.to_string()))?;
            None
        }
        Some(path) => {
            let f = File::create(path).map_err(io_err(path))?;
            batch::write_csv(BufWriter::new(f), &m.model, &results).map_err(|e| CliError::Internal(e.to_string()))?;
            let mf = RunManifest {
                command: "sample".into(),
                model: ModelRef { source: job.model_source.clone(), sha256: m.sha256.clone() },
                site: job.site.clone(),
                seeds: SeedSchedule { base: job.seed, n: job.n, rule: manifest::SEED_RULE.into() },
                caps: CapsDoc::from(job.caps),
                readout: manifest::readout_name(job.readout),
                versions: Versions::current(),
                outputs: vec![OutputRef {
                    path: path.display().to_string(),
                    sha256: manifest::file_sha256(path).map_err(io_err(path))?,
                    rows: job.n,
                    failures,
                }],
                timing: Timing { started_unix_ms: started, elapsed_ms: elapsed },
            };
            let mpath = manifest::path_for(path);
            let text = serde_json::to_string_pretty(&mf).map_err(|e| CliError::Internal(e.to_string()))?;
            std::fs::write(&mpath, text + "\n").map_err(io_err(&mpath))?;
            Some(mf)
        }
    };
    let rate = batch::failure_rate(&results);
    eprintln!("{} samples, {failures} failed ({:.4}%), {elapsed} ms", results.len(), 100.0 * rate);
    if rate > FAILURE_THRESHOLD {
        return Err(CliError::Failures(format!(
            "failure rate {rate} exceeds {FAILURE_THRESHOLD}; raise --caps or check the smallness diagnostics"
        )));
    }
    Ok(manifest)
}

fn dump(m: &LoadedModel, site: Site, seed: u64, caps: Caps, tree: bool, column: Option<&str>) -> Result<(), CliError> {
    let theta = m.theta.bind(&m.model).map_err(core_err)?;
    let first = derive(seed, 0);
    let mut field = EventField::new(&m.model, first);
    let mut err = io::stderr().lock();
    if tree {
        match explore_with_locking(&m.model, &theta, &mut field, SpaceTime::new(site, 0.0), caps.lock()) {
            Ok(out) => {
                let _ = writeln!(err, "# locking tree, seed {first}, T={} |H|={}", out.t, out.h.len());
                let _ = write!(err, "{}", out.tree.dump(&m.model));
            }
            Err(e) => {
                let _ = writeln!(err, "# locking tree, seed {first}: {e}");
            }
        }
    }
    if let Some(spec) = column {
        let at = parse_site(spec, m.model.dim())?;
        let r = cftp_core::sample_site(&m.model, &theta, site, first, caps, Readout::default());
        let t_lo = if r.failed() { -10.0 } else { r.t_star.min(-f64::MIN_POSITIVE) };
        let events = field.column_dump(at, t_lo).map_err(core_err)?;
        let label = at.coords()[..m.model.dim()].iter().map(i32::to_string).collect::<Vec<_>>().join(",");
        let _ = writeln!(err, "# column {label}, seed {first}, from t={t_lo}");
        for e in events {
            let _ = writeln!(err, "{label};{};{:?}", e.rule, e.time);
        }
    }
    Ok(())
}

fn replay(path: &Path, out: Option<PathBuf>) -> Result<(), CliError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let old: RunManifest =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    if old.command != "sample" || old.outputs.len() != 1 {
        return Err(CliError::Usage(format!("{}: not a sample manifest", path.display())));
    }
    let m = load_model(&old.model.source)?;
    if m.sha256 != old.model.sha256 {
        return Err(CliError::Usage(format!("model {} changed since the manifest was written", old.model.source)));
    }
    let readout = manifest::parse_readout(&old.readout).map_err(CliError::Usage)?;
    let target = out.unwrap_or_else(|| PathBuf::from(&old.outputs[0].path));
    let job = SampleJob {
        model_source: old.model.source.clone(),
        site: old.site.clone(),
        n: old.seeds.n,
        seed: old.seeds.base,
        caps: old.caps.into(),
        readout,
        out: Some(target.clone()),
        strict: false,
    };
    let new = run_job(&m, &job)?.expect("an output path was given");
    if new.outputs[0].sha256 == old.outputs[0].sha256 {
        println!("reproduced {} (sha256 {})", target.display(), new.outputs[0].sha256);
        Ok(())
    } else {
        Err(CliError::Internal(format!(
            "output hash {} differs from recorded {}",
            new.outputs[0].sha256, old.outputs[0].sha256
        )))
    }
}

fn report_json(r: &diagnostics::EstimateReport) -> Value {
    json!({
        "quantity": r.quantity,
        "estimate": r.estimate,
        "se": r.se,
        "n": r.n,
        "censored": r.censored,
        "censored_rate": r.censored_rate,
        "biased": r.biased,
        "lambda": r.lambda,
        "q": r.q,
    })
}

fn diagnose(a: DiagnoseArgs) -> Result<(), CliError> {
    let m = load_model(&a.model.model)?;
    let model = &m.model;
    let theta = m.theta.bind(model).map_err(core_err)?;
    let caps = parse_caps(a.caps.as_deref())?;
    let readout = manifest::parse_readout(&a.readout).map_err(CliError::Usage)?;
    if a.n == 0 {
        return Err(CliError::Usage("n must be at least 1".into()));
    }
    let started = now_ms();
    let clock = Instant::now();

    let outs = (0..a.n)
        .into_par_iter()
        .map(|k| diagnostics::outcome_replicate(model, &theta, a.seed, k, caps))
        .collect::<cftp_core::Result<Vec<_>>>()
        .map_err(core_err)?;
    let g = diagnostics::g_from(model, &outs);
    let mut functionals = vec![Functional::T, Functional::HTime, Functional::L];
    functionals.extend((0..model.dim()).map(Functional::HSpace));
    let lambdas: Vec<Value> = functionals
        .iter()
        .map(|&f| match diagnostics::lambda_from(model, &outs, f, a.lambda) {
            Ok(r) => report_json(&r),
            Err(e) => json!({ "quantity": f.name(), "lambda": a.lambda, "skipped": e.to_string() }),
        })
        .collect();

    let bounds = if a.lambda <= 0.0 {
        let samples = (0..a.n)
            .into_par_iter()
            .map(|k| diagnostics::sample_replicate(model, &theta, derive(a.seed, 1), k, caps, readout))
            .collect::<cftp_core::Result<Vec<_>>>()
            .map_err(core_err)?;
        let b = diagnostics::bounds_from(model, &samples, a.lambda).map_err(core_err)?;
        json!({
            "lambda": b.lambda,
            "n": b.n,
            "censored": b.censored,
            "censored_rate": b.censored_rate,
            "biased": b.biased,
            "checks": b.checks.iter().map(|c| json!({
                "name": c.name,
                "lhs": c.lhs,
                "lhs_se": c.lhs_se,
                "bound": if c.bound.is_finite() { json!(c.bound) } else { Value::Null },
                "bound_se": c.bound_se,
                "verdict": format!("{:?}", c.verdict),
            })).collect::<Vec<_>>(),
        })
    } else {
        json!({ "skipped": "bound checks need lambda <= 0" })
    };

    let tails = if a.n as usize >= diagnostics::TAIL_MIN_REPLICATES {
        let unperturbed = model.unperturbed().map_err(core_err)?;
        let th_u = m.theta.bind(&unperturbed).map_err(core_err)?;
        let mut curves = Vec::new();
        for q in [TailQuantity::ExplorationSize, TailQuantity::TreeNodes, TailQuantity::AmbPoints, TailQuantity::NegTStar] {
            let (mm, tt) = if q == TailQuantity::ExplorationSize { (&unperturbed, &th_u) } else { (model, &theta) };
            let vals = (0..a.n)
                .into_par_iter()
                .map(|k| diagnostics::tail_replicate(mm, tt, q, derive(a.seed, 2), k, caps))
                .collect::<cftp_core::Result<Vec<_>>>()
                .map_err(core_err)?;
            let c = diagnostics::tail_from(q, &vals).map_err(core_err)?;
            let (slope, intercept, r2, used) = diagnostics::log_linear_fit(&c.points, 1.0, 20.0);
            curves.push(json!({
                "quantity": c.quantity,
                "n": c.n,
                "censored": c.censored,
                "points": c.points,
                "log_linear_fit_1_20": { "slope": slope, "intercept": intercept, "r2": r2, "points_used": used },
            }));
        }
        Value::Array(curves)
    } else {
        json!({ "skipped": format!("tail curves need n >= {}", diagnostics::TAIL_MIN_REPLICATES) })
    };

    let param = |r: cftp_core::Result<f64>| match r {
        Ok(v) => json!(v),
        Err(e) => json!({ "unavailable": e.to_string() }),
    };
    let report = json!({
        "command": "diagnose",
        "model": { "source": a.model.model, "sha256": m.sha256 },
        "theta": m.theta.to_string(),
        "total_rate": model.total_rate(),
        "epsilon": param(model.epsilon()),
        "kappa": param(model.kappa()),
        "n": a.n,
        "seed": a.seed,
        "caps": CapsDoc::from(caps),
        "readout": manifest::readout_name(readout),
        "g": report_json(&g),
        "lambda": lambdas,
        "bounds": bounds,
        "tails": tails,
        "versions": Versions::current(),
        "timing": Timing { started_unix_ms: started, elapsed_ms: clock.elapsed().as_millis() },
    });
    let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Internal(e.to_string()))? + "\n";
    write_text(a.out.as_deref(), &text)?;
    eprintln!("g = {:.5} +- {:.5}, censored {:.4}%", g.estimate, g.se, 100.0 * g.censored_rate);
    if g.censored_rate > FAILURE_THRESHOLD {
        return Err(CliError::Failures(format!("censoring rate {} exceeds {FAILURE_THRESHOLD}", g.censored_rate)));
    }
    Ok(())
}

fn write_text(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(io_err(p)),
        None => io::stdout().write_all(text.as_bytes()).map_err(|e| CliError::Internal(e.to_string())),
    }
}

fn oracle_cmd(which: OracleCommand) -> Result<(), CliError> {
    match which {
        OracleCommand::Torus { model, n, cap } => {
            let m = load_model(&model.model)?;
            let (_, marginal) = oracle::torus_stationary(&m.model, n, cap).map_err(core_err)?;
            let out = json!({
                "oracle": "torus",
                "n": n,
                "states": m.model.states().labels(),
                "marginal": marginal,
            });
            println!("{}", serde_json::to_string_pretty(&out).expect("json"));
        }
        OracleCommand::Forward { model, radius, burnin, n, seed } => {
            let m = load_model(&model.model)?;
            if radius < m.model.max_range() {
                return Err(CliError::Usage(format!("radius must be at least the rule range {}", m.model.max_range())));
            }
            let vals = batch::forward_values(&m.model, radius, burnin, n, seed).map_err(core_err)?;
            let out = json!({
                "oracle": "forward",
                "radius": radius,
                "burnin": burnin,
                "n": n,
                "seed": seed,
                "states": m.model.states().labels(),
                "marginal": oracle::histogram(&vals, m.model.n_states()),
            });
            println!("{}", serde_json::to_string_pretty(&out).expect("json"));
        }
    }
    Ok(())
}

fn export(builtin: Option<String>, format: FileFormat, out: Option<PathBuf>) -> Result<(), CliError> {
    let Some(name) = builtin else {
        for p in presets::all().map_err(core_err)? {
            println!("{}\t{}", p.name, p.theta);
        }
        return Ok(());
    };
    let p = presets::by_name(&name)
        .map_err(core_err)?
        .ok_or_else(|| CliError::Usage(format!("unknown builtin model {name:?}")))?;
    let doc = model_file::export(&p.model, p.theta);
    let text = match format {
        FileFormat::Toml => model_file::to_toml(&doc),
        FileFormat::Json => model_file::to_json(&doc) + "\n",
    };
    write_text(out.as_deref(), &text)
}

/// Agreement with the global replay oracle and the exact independent-sites
/// marginal, on every builtin model.
fn selftest(n: u64) -> Result<(), CliError> {
    let mut ok = true;
    for p in presets::all().map_err(core_err)? {
        let th = p.theta.bind(&p.model).map_err(core_err)?;
        // None: budget failure.
        let checks: Vec<Option<bool>> = (0..n)
            .into_par_iter()
            .map(|k| {
                let seed = derive(0x5E1F, k);
                let mut field = EventField::new(&p.model, seed);
                let run = cftp_core::assembler::run_sample(
                    &p.model,
                    &th,
                    &mut field,
                    Site::ORIGIN,
                    Caps::default(),
                    Readout::default(),
                );
                match run {
                    Ok((c, v)) => {
                        let region = cftp_core::SiteBox::centered(Site::ORIGIN, c.l_star as i32, p.model.dim());
                        let g = oracle::global_consensus(&p.model, &mut field, &region, c.t_star, Site::ORIGIN, 8, seed);
                        Some(g.is_ok_and(|g| g == v))
                    }
                    Err(e) if e.is_budget() => None,
                    Err(_) => Some(false),
                }
            })
            .collect();
        let failed = checks.iter().filter(|c| c.is_none()).count();
        let agree = checks.iter().filter(|c| **c == Some(true)).count();
        let pass = agree == checks.len() - failed && (failed as f64) <= FAILURE_THRESHOLD * n as f64;
        ok &= pass;
        println!(
            "{} {:<24} replay agreement {agree}/{}, budget failures {failed}",
            if pass { "PASS" } else { "FAIL" },
            p.name,
            checks.len() - failed
        );
    }
    let m = presets::independent().map_err(core_err)?;
    let th = m.theta.bind(&m.model).map_err(core_err)?;
    let spec = BatchSpec { site: Site::ORIGIN, n: n * 20, base_seed: 0x5E1F, caps: Caps::default(), readout: Readout::default() };
    let h = batch::marginal(&m.model, &batch::run(&m.model, &th, &spec));
    let sigma = (2.0 / 9.0 / spec.n as f64).sqrt();
    let pass = (h[0] - 2.0 / 3.0).abs() < 4.0 * sigma;
    ok &= pass;
    println!("{} independent marginal {:.4} vs 0.6667 (4 sigma = {:.4})", if pass { "PASS" } else { "FAIL" }, h[0], 4.0 * sigma);
    if ok {
        Ok(())
    } else {
        Err(CliError::Internal("selftest failed".into()))
    }
}
