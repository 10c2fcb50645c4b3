//! Command-line front end: single runs, replicate sweeps, rate fits,
//! property checks, and event-probability estimates over the instance
//! catalog. Every command is seeded; `--deterministic` strips the one
//! timestamp line and zeroes measured runtimes, making stdout
//! byte-identical across invocations.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};
use std::{env, fs, process};

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use sco_lab_core::analytics::check_properties;
use sco_lab_core::experiments::{
    condition_dataset, estimate_event_probability, fit_rate, render, run_sweep, to_json_string,
    CellFilter, ConditioningMode, Event, EventStats, ExperimentError, IterateSel, OutputFormat,
    Results, SweepGrid, SweptVar,
};
use sco_lab_core::instances::{families, instance_from_str, parse_instance, BuildContext};
use sco_lab_core::optimizers::{run_gd, run_sgd_seeded, Algorithm, OptError, OptimizerConfig};

#[derive(Parser)]
#[command(
    name = "sco-lab",
    version,
    about = "Excess-risk experiments for averaged-iterate GD and SGD on smooth convex losses"
)]
struct Cli {
    /// Omit the timestamp line and zero measured runtimes so stdout is
    /// byte-identical across runs.
    #[arg(long, global = true)]
    deterministic: bool,

    /// Worker threads for replicate sweeps (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,

    /// Flat JSON object supplying fallback values for flags; explicit
    /// flags win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Write the payload to this file instead of stdout. Relative paths
    /// land under $SCO_LAB_OUT when that variable is set.
    #[arg(long, global = true, value_name = "PATH")]
    output: Option<PathBuf>,

    /// Payload format: json or csv (csv is defined for sweep output only).
    #[arg(long, global = true, value_name = "FMT")]
    format: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List the instance families and their parameters
    ListInstances,
    /// Run one optimizer once and print the full result record
    Run(RunArgs),
    /// Estimate mean excess risk over an (eta, T, n) grid of seeded replicates
    Sweep(SweepArgs),
    /// Run a sweep and fit a log-log rate along one axis
    Fit(FitArgs),
    /// Verify an instance's declared properties at random probe points
    Check(CheckArgs),
    /// Estimate a conditioning event's probability and score it against
    /// the closed form
    EventProb(EventArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Constructor string, e.g. coupled{n=16} or twodim{lambda=0.5}.
    #[arg(long, value_name = "SPEC")]
    instance: Option<String>,

    /// gd or sgd.
    #[arg(long, value_name = "ALG")]
    algorithm: Option<String>,

    /// Step size.
    #[arg(long, value_name = "ETA")]
    eta: Option<f64>,

    /// Iterate count; the run makes T - 1 updates.
    #[arg(long = "T", value_name = "T")]
    t_iters: Option<usize>,

    /// Dataset size.
    #[arg(long, value_name = "N")]
    n: Option<usize>,

    /// Base seed; stream 0 draws the dataset, stream 1 drives SGD.
    #[arg(long, value_name = "SEED")]
    seed: Option<u64>,

    /// Coupling constant for coupled/multicopy instances that do not fix it.
    #[arg(long = "C", value_name = "C")]
    c: Option<f64>,

    /// Condition the dataset on an event: anti_concentration or permutation.
    #[arg(long, value_name = "EVENT")]
    conditioning: Option<String>,

    /// forced or rejection.
    #[arg(long, value_name = "MODE")]
    conditioning_mode: Option<String>,

    /// Record (t, distance to minimizer, risk) for every visited iterate.
    #[arg(long)]
    record_trajectory: bool,

    /// Keep every full iterate; memory grows as T x dimension.
    #[arg(long)]
    record_iterates: bool,
}

#[derive(Args)]
struct SweepArgs {
    /// Constructor string; derived parameter defaults are rebuilt per cell.
    #[arg(long, value_name = "SPEC")]
    instance: Option<String>,

    /// gd or sgd.
    #[arg(long, value_name = "ALG")]
    algorithm: Option<String>,

    /// One or more step sizes.
    #[arg(long = "eta", value_name = "ETA", num_args = 1..)]
    etas: Vec<f64>,

    /// One or more iterate counts.
    #[arg(long = "T", value_name = "T", num_args = 1..)]
    t_values: Vec<usize>,

    /// One or more dataset sizes.
    #[arg(long = "n", value_name = "N", num_args = 1..)]
    n_values: Vec<usize>,

    /// Seeded runs per grid cell.
    #[arg(long, value_name = "R")]
    replicates: Option<usize>,

    /// Base seed; each replicate's seed is a pure function of
    /// (base seed, eta, T, n, replicate index).
    #[arg(long, value_name = "SEED")]
    seed: Option<u64>,

    /// Coupling constant for coupled/multicopy instances that do not fix it.
    #[arg(long = "C", value_name = "C")]
    c: Option<f64>,

    /// Condition every dataset on an event: anti_concentration or permutation.
    #[arg(long, value_name = "EVENT")]
    conditioning: Option<String>,

    /// forced or rejection.
    #[arg(long, value_name = "MODE")]
    conditioning_mode: Option<String>,

    /// Which excess risk each replicate records: averaged or final.
    #[arg(long, value_name = "SEL")]
    measure: Option<String>,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    sweep: SweepArgs,

    /// Grid axis the log-log rate is fit against: eta, T, or n.
    #[arg(long, value_name = "VAR")]
    swept: Option<String>,

    /// Restrict the fit to cells with this step size.
    #[arg(long = "fix-eta", value_name = "ETA")]
    fix_eta: Option<f64>,

    /// Restrict the fit to cells with this iterate count.
    #[arg(long = "fix-T", value_name = "T")]
    fix_t: Option<usize>,

    /// Restrict the fit to cells with this dataset size.
    #[arg(long = "fix-n", value_name = "N")]
    fix_n: Option<usize>,
}

#[derive(Args)]
struct CheckArgs {
    /// Constructor string to verify.
    #[arg(long, value_name = "SPEC")]
    instance: Option<String>,

    /// Random probe points per property suite.
    #[arg(long, value_name = "K")]
    trials: Option<usize>,

    /// Seed for the probe points.
    #[arg(long, value_name = "SEED")]
    seed: Option<u64>,

    /// Step size the derived parameter defaults are computed from.
    #[arg(long, value_name = "ETA")]
    eta: Option<f64>,

    /// Iterate count the derived parameter defaults are computed from.
    #[arg(long = "T", value_name = "T")]
    t_iters: Option<usize>,

    /// Dataset size the derived parameter defaults are computed from.
    #[arg(long, value_name = "N")]
    n: Option<usize>,

    /// Coupling constant for coupled/multicopy instances that do not fix it.
    #[arg(long = "C", value_name = "C")]
    c: Option<f64>,

    /// Fail instances that do not admit a shared minimizer.
    #[arg(long)]
    assert_realizable: bool,
}

#[derive(Args)]
struct EventArgs {
    /// anti_concentration or permutation (dashes accepted).
    #[arg(long, value_name = "EVENT")]
    event: Option<String>,

    /// Dataset size the event is evaluated over.
    #[arg(long, value_name = "N")]
    n: Option<usize>,

    /// Monte-Carlo dataset count.
    #[arg(long, value_name = "K")]
    trials: Option<usize>,

    /// Seed for the Monte-Carlo draws.
    #[arg(long, value_name = "SEED")]
    seed: Option<u64>,

    /// Instance whose sample space the datasets are drawn from
    /// (default chosen to match the event).
    #[arg(long, value_name = "SPEC")]
    instance: Option<String>,
}

/// Failures sorted by exit code: usage errors exit 2, failed computations
/// exit 1, and a property check that reports violations exits 3.
enum Failure {
    Usage(String),
    Computation(String),
    Violation,
}

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn experiment_failure(e: ExperimentError) -> Failure {
    match &e {
        ExperimentError::InvalidParameter(_)
        | ExperimentError::Instance(_)
        | ExperimentError::Analytics(_) => Failure::Usage(e.to_string()),
        ExperimentError::Optimizer(opt) => match opt {
            OptError::Divergence { .. } => Failure::Computation(e.to_string()),
            OptError::InvalidConfig(_) | OptError::Instance(_) => Failure::Usage(e.to_string()),
        },
        ExperimentError::ConditioningFailure { .. }
        | ExperimentError::AllDivergent { .. }
        | ExperimentError::Serialization(_)
        | ExperimentError::Csv(_)
        | ExperimentError::Io(_) => Failure::Computation(e.to_string()),
    }
}

fn opt_failure(e: OptError) -> Failure {
    match &e {
        OptError::Divergence { .. } => Failure::Computation(e.to_string()),
        OptError::InvalidConfig(_) | OptError::Instance(_) => Failure::Usage(e.to_string()),
    }
}

/// Fallback values loaded from `--config`.
struct Config(serde_json::Map<String, Value>);

fn bad_key(key: &str, want: &str, got: &Value) -> Failure {
    Failure::Usage(format!("config key {key:?} must be {want}, got {got}"))
}

impl Config {
    fn load(path: Option<&Path>) -> Result<Self, Failure> {
        let Some(path) = path else {
            return Ok(Config(serde_json::Map::new()));
        };
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| Failure::Usage(format!("config {} is not json: {e}", path.display())))?;
        match value {
            Value::Object(map) => Ok(Config(map)),
            other => Err(Failure::Usage(format!(
                "config {} must be a json object, got {other}",
                path.display()
            ))),
        }
    }

    fn f64(&self, key: &str) -> Result<Option<f64>, Failure> {
        match self.0.get(key) {
            None => Ok(None),
            Some(v) => v.as_f64().map(Some).ok_or_else(|| bad_key(key, "a number", v)),
        }
    }

    fn usize(&self, key: &str) -> Result<Option<usize>, Failure> {
        match self.0.get(key) {
            None => Ok(None),
            Some(v) => v
                .as_u64()
                .map(|x| Some(x as usize))
                .ok_or_else(|| bad_key(key, "a non-negative integer", v)),
        }
    }

    fn u64(&self, key: &str) -> Result<Option<u64>, Failure> {
        match self.0.get(key) {
            None => Ok(None),
            Some(v) => v
                .as_u64()
                .map(Some)
                .ok_or_else(|| bad_key(key, "a non-negative integer", v)),
        }
    }

    fn string(&self, key: &str) -> Result<Option<String>, Failure> {
        match self.0.get(key) {
            None => Ok(None),
            Some(v) => v
                .as_str()
                .map(|s| Some(s.to_string()))
                .ok_or_else(|| bad_key(key, "a string", v)),
        }
    }

    fn bool(&self, key: &str) -> Result<bool, Failure> {
        match self.0.get(key) {
            None => Ok(false),
            Some(v) => v.as_bool().ok_or_else(|| bad_key(key, "a boolean", v)),
        }
    }

    /// A number or an array of numbers.
    fn f64_list(&self, key: &str) -> Result<Option<Vec<f64>>, Failure> {
        match self.0.get(key) {
            None => Ok(None),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| v.as_f64().ok_or_else(|| bad_key(key, "an array of numbers", v)))
                .collect::<Result<Vec<_>, _>>()
                .map(Some),
            Some(v) => v.as_f64().map(|x| Some(vec![x])).ok_or_else(|| bad_key(key, "a number", v)),
        }
    }

    /// An integer or an array of integers.
    fn usize_list(&self, key: &str) -> Result<Option<Vec<usize>>, Failure> {
        match self.0.get(key) {
            None => Ok(None),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| {
                    v.as_u64()
                        .map(|x| x as usize)
                        .ok_or_else(|| bad_key(key, "an array of non-negative integers", v))
                })
                .collect::<Result<Vec<_>, _>>()
                .map(Some),
            Some(v) => v
                .as_u64()
                .map(|x| Some(vec![x as usize]))
                .ok_or_else(|| bad_key(key, "a non-negative integer", v)),
        }
    }
}

/// Global flags plus the loaded config, threaded through every command.
struct Global {
    deterministic: bool,
    output: Option<PathBuf>,
    format: Option<OutputFormat>,
    cfg: Config,
}

fn pick<T>(flag: Option<T>, cfg: Option<T>, default: T) -> T {
    flag.or(cfg).unwrap_or(default)
}

fn require_instance(flag: Option<String>, g: &Global) -> Result<String, Failure> {
    flag.or(g.cfg.string("instance")?).ok_or_else(|| {
        Failure::Usage("--instance is required; see list-instances for the families".to_string())
    })
}

fn parse_algorithm(flag: Option<String>, g: &Global) -> Result<Algorithm, Failure> {
    pick(flag, g.cfg.string("algorithm")?, "gd".to_string()).parse().map_err(Failure::Usage)
}

fn parse_event_str(s: &str) -> Result<Event, Failure> {
    s.replace('-', "_").parse::<Event>().map_err(experiment_failure)
}

fn parse_event_opt(flag: Option<String>, g: &Global) -> Result<Option<Event>, Failure> {
    match flag.or(g.cfg.string("conditioning")?) {
        None => Ok(None),
        Some(s) => parse_event_str(&s).map(Some),
    }
}

fn parse_mode(flag: Option<String>, g: &Global) -> Result<ConditioningMode, Failure> {
    pick(flag, g.cfg.string("conditioning_mode")?, "forced".to_string())
        .parse()
        .map_err(experiment_failure)
}

/// Splices `--C` into a coupled or multicopy constructor string that does
/// not already fix the constant.
fn inject_coupling_constant(spec: &str, c: Option<f64>) -> Result<String, Failure> {
    let Some(c) = c else {
        return Ok(spec.to_string());
    };
    let parsed = parse_instance(spec).map_err(usage)?;
    if !matches!(parsed.family.as_str(), "coupled" | "multicopy") {
        return Err(Failure::Usage(format!(
            "--C applies to the coupled and multicopy families, not {}",
            parsed.family
        )));
    }
    if parsed.params.contains_key("C") {
        return Err(Failure::Usage(format!("{spec} already fixes C; drop the --C flag")));
    }
    let mut params = parsed.params;
    params.insert("C".to_string(), format!("{c}"));
    let body = params.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(",");
    Ok(format!("{}{{{body}}}", parsed.family))
}

fn stdout_write(text: &str) -> Result<(), Failure> {
    std::io::stdout()
        .write_all(text.as_bytes())
        .map_err(|e| Failure::Computation(format!("stdout: {e}")))
}

fn resolve_output_path(path: &Path) -> PathBuf {
    if path.is_absolute() {
        return path.to_path_buf();
    }
    match env::var_os("SCO_LAB_OUT") {
        Some(dir) => Path::new(&dir).join(path),
        None => path.to_path_buf(),
    }
}

/// Prints the timestamp header (unless deterministic), then sends the
/// payload to stdout or to `--output`.
fn emit(g: &Global, payload: &str) -> Result<(), Failure> {
    if !g.deterministic {
        let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        stdout_write(&format!("# generated at unix:{secs}\n"))?;
    }
    match &g.output {
        Some(path) => {
            let resolved = resolve_output_path(path);
            if let Some(parent) = resolved.parent() {
                if !parent.as_os_str().is_empty() {
                    fs::create_dir_all(parent).map_err(|e| {
                        Failure::Computation(format!("cannot create {}: {e}", parent.display()))
                    })?;
                }
            }
            fs::write(&resolved, payload).map_err(|e| {
                Failure::Computation(format!("cannot write {}: {e}", resolved.display()))
            })?;
            stdout_write(&format!("wrote {}\n", resolved.display()))
        }
        None => stdout_write(payload),
    }
}

fn reject_csv(g: &Global) -> Result<(), Failure> {
    if g.format == Some(OutputFormat::Csv) {
        return Err(Failure::Usage(
            "csv output is defined for sweep results only; use json".to_string(),
        ));
    }
    Ok(())
}

fn families_help() -> String {
    let mut out = String::from(
        "Instance families (constructor strings `family` or `family{key=value,...}`):\n",
    );
    for info in families() {
        out.push_str(&format!("  {}\n      {}\n      parameters: {}\n", info.family, info.summary, info.parameters));
    }
    out.push_str(
        "\nExit codes:\n  \
         0  success\n  \
         1  computation failed (divergence, conditioning budget, io)\n  \
         2  usage error (bad flags, unknown instance, malformed config)\n  \
         3  property check reported violations\n",
    );
    out
}

fn cmd_list(g: &Global) -> Result<(), Failure> {
    let payload = match g.format {
        Some(OutputFormat::Csv) => return reject_csv(g),
        Some(OutputFormat::Json) => {
            let rows: Vec<Value> = families()
                .iter()
                .map(|f| {
                    serde_json::json!({
                        "family": f.family,
                        "parameters": f.parameters,
                        "summary": f.summary,
                    })
                })
                .collect();
            to_json_string(&rows).map_err(experiment_failure)?
        }
        None => {
            let mut out = String::new();
            for f in families() {
                out.push_str(&format!("{}\n  {}\n  parameters: {}\n", f.family, f.summary, f.parameters));
            }
            out
        }
    };
    emit(g, &payload)
}

fn cmd_run(g: &Global, a: RunArgs) -> Result<(), Failure> {
    reject_csv(g)?;
    let eta = pick(a.eta, g.cfg.f64("eta")?, 1.0);
    let t_iters = pick(a.t_iters, g.cfg.usize("T")?, 16);
    let n = pick(a.n, g.cfg.usize("n")?, 16);
    let seed = pick(a.seed, g.cfg.u64("seed")?, 0);
    let algorithm = parse_algorithm(a.algorithm, g)?;
    let spec = require_instance(a.instance, g)?;
    let spec = inject_coupling_constant(&spec, a.c.or(g.cfg.f64("C")?))?;
    let ctx = BuildContext::new(eta, t_iters, n);
    let instance = instance_from_str(&spec, &ctx).map_err(usage)?;

    let conditioning = parse_event_opt(a.conditioning, g)?;
    let mode = parse_mode(a.conditioning_mode, g)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    let mut data = match conditioning {
        Some(event) => condition_dataset(instance.as_ref(), n, event, mode, &mut rng)
            .map_err(experiment_failure)?,
        None => instance.draw_dataset(n, &mut rng).map_err(usage)?,
    };
    data.seed = Some(seed);

    let mut config = OptimizerConfig::new(algorithm, eta, t_iters);
    config.record_trajectory = a.record_trajectory || g.cfg.bool("record_trajectory")?;
    config.record_iterates = a.record_iterates || g.cfg.bool("record_iterates")?;
    let result = match algorithm {
        Algorithm::GD => run_gd(instance.as_ref(), &data, &config),
        Algorithm::SGD => run_sgd_seeded(instance.as_ref(), &data, &config, seed),
    }
    .map_err(opt_failure)?;

    emit(g, &to_json_string(&result).map_err(experiment_failure)?)
}

fn build_grid(g: &Global, a: SweepArgs) -> Result<SweepGrid, Failure> {
    let spec = require_instance(a.instance, g)?;
    let spec = inject_coupling_constant(&spec, a.c.or(g.cfg.f64("C")?))?;
    let algorithm = parse_algorithm(a.algorithm, g)?;
    let etas = if a.etas.is_empty() {
        g.cfg.f64_list("eta")?.unwrap_or_else(|| vec![1.0])
    } else {
        a.etas
    };
    let t_values = if a.t_values.is_empty() {
        g.cfg.usize_list("T")?.unwrap_or_else(|| vec![16])
    } else {
        a.t_values
    };
    let n_values = if a.n_values.is_empty() {
        g.cfg.usize_list("n")?.unwrap_or_else(|| vec![16])
    } else {
        a.n_values
    };
    let replicates = pick(a.replicates, g.cfg.usize("replicates")?, 10);
    let seed = pick(a.seed, g.cfg.u64("seed")?, 0);

    let mut grid = SweepGrid::new(spec, algorithm, etas, t_values, n_values, replicates, seed);
    grid.conditioning = parse_event_opt(a.conditioning, g)?;
    grid.conditioning_mode = parse_mode(a.conditioning_mode, g)?;
    grid.measure = match pick(a.measure, g.cfg.string("measure")?, "averaged".to_string()).as_str()
    {
        "averaged" => IterateSel::Averaged,
        "final" => IterateSel::Final,
        other => {
            return Err(Failure::Usage(format!(
                "unknown measure {other:?}; known measures: averaged, final"
            )))
        }
    };
    Ok(grid)
}

fn cmd_sweep(g: &Global, a: SweepArgs) -> Result<(), Failure> {
    let grid = build_grid(g, a)?;
    let mut sweep = run_sweep(&grid).map_err(experiment_failure)?;
    if g.deterministic {
        sweep.total_runtime_secs = 0.0;
    }
    let format = g.format.unwrap_or(OutputFormat::Json);
    let payload = render(Results::Sweep(&sweep), format).map_err(experiment_failure)?;
    emit(g, &payload)
}

fn cmd_fit(g: &Global, a: FitArgs) -> Result<(), Failure> {
    reject_csv(g)?;
    let swept: SweptVar = a
        .swept
        .or(g.cfg.string("swept")?)
        .ok_or_else(|| Failure::Usage("--swept is required: eta, T, or n".to_string()))?
        .parse()
        .map_err(experiment_failure)?;
    let grid = build_grid(g, a.sweep)?;
    let sweep = run_sweep(&grid).map_err(experiment_failure)?;
    let filter = CellFilter { eta: a.fix_eta, t_iters: a.fix_t, n: a.fix_n };
    let fit = fit_rate(&sweep, swept, &filter).map_err(experiment_failure)?;
    emit(g, &render(Results::Fit(&fit), OutputFormat::Json).map_err(experiment_failure)?)
}

fn cmd_check(g: &Global, a: CheckArgs) -> Result<(), Failure> {
    reject_csv(g)?;
    let eta = pick(a.eta, g.cfg.f64("eta")?, 1.0);
    let t_iters = pick(a.t_iters, g.cfg.usize("T")?, 16);
    let n = pick(a.n, g.cfg.usize("n")?, 16);
    let trials = pick(a.trials, g.cfg.usize("trials")?, 1000);
    let seed = pick(a.seed, g.cfg.u64("seed")?, 0);
    let assert_realizable = a.assert_realizable || g.cfg.bool("assert_realizable")?;
    let spec = require_instance(a.instance, g)?;
    let spec = inject_coupling_constant(&spec, a.c.or(g.cfg.f64("C")?))?;
    let ctx = BuildContext::new(eta, t_iters, n);
    let instance = instance_from_str(&spec, &ctx).map_err(usage)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let report = check_properties(instance.as_ref(), trials, &mut rng, assert_realizable);
    let payload =
        render(Results::Properties(&report), OutputFormat::Json).map_err(experiment_failure)?;
    emit(g, &payload)?;
    if report.all_passed {
        Ok(())
    } else {
        Err(Failure::Violation)
    }
}

fn event_text(stats: &EventStats, n: usize) -> String {
    let mut out = format!(
        "event {}  n={}  trials={}  hits={}\n",
        stats.event, n, stats.trials, stats.hits
    );
    out.push_str(&format!("estimate {}\n", stats.estimate));
    match stats.exact {
        Some(exact) => out.push_str(&format!("exact    {exact}\n")),
        None => out.push_str("exact    unavailable\n"),
    }
    if let Some(z) = stats.z_score {
        out.push_str(&format!("z        {z:+.4}\n"));
    }
    out
}

fn cmd_event(g: &Global, a: EventArgs) -> Result<(), Failure> {
    let event = parse_event_str(&a.event.or(g.cfg.string("event")?).ok_or_else(|| {
        Failure::Usage("--event is required: anti_concentration or permutation".to_string())
    })?)?;
    let n = pick(a.n, g.cfg.usize("n")?, 16);
    let trials = pick(a.trials, g.cfg.usize("trials")?, 100_000);
    let seed = pick(a.seed, g.cfg.u64("seed")?, 0);
    let spec = match a.instance.or(g.cfg.string("instance")?) {
        Some(s) => s,
        None => match event {
            Event::Permutation => format!("coupled{{n={n}}}"),
            Event::AntiConcentration => "nonrealizable{eta_T=4}".to_string(),
        },
    };
    let ctx = BuildContext::new(1.0, 16, n);
    let instance = instance_from_str(&spec, &ctx).map_err(usage)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stats = estimate_event_probability(instance.as_ref(), n, event, trials, &mut rng)
        .map_err(experiment_failure)?;
    let payload = match g.format {
        None => event_text(&stats, n),
        Some(f) => render(Results::Events(&stats), f).map_err(experiment_failure)?,
    };
    emit(g, &payload)
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    let format = match &cli.format {
        Some(s) => Some(s.parse::<OutputFormat>().map_err(experiment_failure)?),
        None => None,
    };
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(Failure::Usage("--jobs must be at least 1".to_string()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Failure::Computation(format!("thread pool: {e}")))?;
    }
    let g = Global {
        deterministic: cli.deterministic,
        output: cli.output,
        format,
        cfg: Config::load(cli.config.as_deref())?,
    };
    match cli.command {
        Command::ListInstances => cmd_list(&g),
        Command::Run(a) => cmd_run(&g, a),
        Command::Sweep(a) => cmd_sweep(&g, a),
        Command::Fit(a) => cmd_fit(&g, a),
        Command::Check(a) => cmd_check(&g, a),
        Command::EventProb(a) => cmd_event(&g, a),
    }
}

fn main() {
    let help = families_help();
    let mut cmd = Cli::command().after_help(help.clone());
    for name in ["run", "sweep", "fit", "check", "event-prob"] {
        cmd = cmd.mut_subcommand(name, |c| c.after_help(help.clone()));
    }
    let matches = cmd.get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    if let Err(failure) = dispatch(cli) {
        match failure {
            Failure::Usage(msg) => {
                eprintln!("error: {msg}");
                process::exit(2);
            }
            Failure::Computation(msg) => {
                eprintln!("error: {msg}");
                process::exit(1);
            }
            Failure::Violation => {
                eprintln!("error: property check reported violations");
                process::exit(3);
            }
        }
    }
}
