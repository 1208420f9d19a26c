use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hypfed::codes::{aggregate, scma_decode, BhDecomposer, BhSequence, PrimeField};
use hypfed::data::{load_dataset, save_dataset, synth_generate, Dataset, SynthSpec};
use hypfed::federation::{
    hull_scaling, metrics_jsonl, run_experiment, run_sweep, write_sweep_csv, ExperimentResult, RunConfig,
    SweepParam, Transcript,
};
use hypfed::quantize::GridMode;
use hypfed::{Curvature, Error};

/// Environment variable consulted for the seed when neither a flag nor the
/// config file sets one.
const SEED_ENV: &str = "HYPFED_SEED";

#[derive(Parser)]
#[command(name = "hypfed", version, about = "Federated hyperbolic SVM simulator in the Poincaré disc")]
struct Cli {
    /// Worker threads (defaults to the number of CPUs).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic two-class dataset as CSV plus a JSON sidecar.
    Synth(SynthArgs),
    /// Run trials of the selected baselines and report accuracy.
    Run(RunArgs),
    /// Repeat `run` over values of one parameter and write long-format CSV.
    Sweep(SweepArgs),
    /// Measure hull sizes of uniform samples and fit the log-log slope.
    HullStats(HullStatsArgs),
    /// Decode a recorded round and show each bin's label sum and its split.
    InspectShare(InspectArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Points drawn before the margin filter.
    #[arg(long, default_value_t = 20_000)]
    n: usize,
    #[arg(long, default_value_t = 0.95)]
    radius: f64,
    #[arg(long, default_value_t = 1.0)]
    curvature: f64,
    #[arg(long, default_value_t = 0.4)]
    mu: f64,
    #[arg(long, default_value_t = 0.2)]
    gamma: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output CSV; the sidecar goes next to it with a .json extension.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone, Default)]
struct RunArgs {
    /// JSON file with any subset of the run settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV dataset (x1,x2,label); synthetic data is drawn per trial otherwise.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Comma-separated baselines: CP, CE, CH-CP, CH-CE, FLP, FLE.
    #[arg(long, value_delimiter = ',')]
    baselines: Option<Vec<String>>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    clients: Option<usize>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Largest number of hulls sharing a bin; chosen per run when omitted.
    #[arg(long)]
    h: Option<usize>,
    /// distance_margin or equal_area.
    #[arg(long)]
    grid_mode: Option<String>,
    #[arg(long)]
    test_fraction: Option<f64>,
    /// Synthetic points per trial before the margin filter.
    #[arg(long)]
    points: Option<usize>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    reference_candidates: Option<usize>,
    /// JSON lines output; written to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// epsilon, mu or gamma.
    #[arg(long)]
    param: String,
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
}

#[derive(Args)]
struct HullStatsArgs {
    #[arg(long, value_delimiter = ',', default_value = "1000,10000,100000")]
    n: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long, default_value_t = 0.95)]
    radius: f64,
    #[arg(long, default_value_t = 1.0)]
    curvature: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Quantize with margin n^(-a) before taking the hull.
    #[arg(long)]
    quantize_exponent: Option<f64>,
    /// CSV of n,trial,hull_size rows.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct InspectArgs {
    /// Transcript JSON as recorded by a protocol run.
    transcript: PathBuf,
}

/// Failure of a subcommand, split by who is to blame.
enum CliError {
    User(String),
    Internal(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter(_)
            | Error::Parse { .. }
            | Error::Io(_)
            | Error::EmptyInput(_)
            | Error::OutsideDisc { .. }
            | Error::Degenerate(_) => CliError::User(e.to_string()),
            other => CliError::Internal(other.to_string()),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn user<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::User(msg.into()))
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::User(format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(j) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build_global() {
            eprintln!("error: cannot start {j} worker threads: {e}");
            return ExitCode::from(1);
        }
    }
    let outcome = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Run(a) => run(a),
        Command::Sweep(a) => sweep(a),
        Command::HullStats(a) => hull_stats(a),
        Command::InspectShare(a) => inspect_share(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::User(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Internal(m)) => {
            eprintln!("internal error: {m}");
            ExitCode::from(1)
        }
    }
}

fn synth(a: SynthArgs) -> CliResult<()> {
    let spec = SynthSpec {
        n: a.n,
        radius: a.radius,
        curvature: Curvature::new(a.curvature)?,
        mu: a.mu,
        gamma: a.gamma,
        seed: a.seed,
    };
    let s = synth_generate(&spec)?;
    save_dataset(&a.out, &s.data)?;
    let counts = s.data.class_counts();
    let parts: Vec<String> = counts.iter().map(|(l, c)| format!("{l}: {c}")).collect();
    println!("wrote {} of {} points to {} ({})", s.data.len(), s.drawn, a.out.display(), parts.join(", "));
    Ok(())
}

/// Effective run settings: flags over the config file over the seed
/// environment variable over the defaults.
fn build_config(a: &RunArgs) -> CliResult<(RunConfig, Option<Dataset>)> {
    let mut cfg = RunConfig::default();
    if let Ok(v) = std::env::var(SEED_ENV) {
        cfg.seed = v.trim().parse().map_err(|e| CliError::User(format!("{SEED_ENV}={v:?}: {e}")))?;
    }
    if let Some(path) = &a.config {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| io_err(path, e))?;
        let env_seed = cfg.seed;
        let has_seed = value.get("seed").is_some();
        cfg = serde_json::from_value(value).map_err(|e| io_err(path, e))?;
        if !has_seed {
            cfg.seed = env_seed;
        }
    }
    if let Some(list) = &a.baselines {
        cfg.baselines = list.iter().filter(|s| !s.trim().is_empty()).map(|s| s.parse()).collect::<Result<_, Error>>()?;
        if cfg.baselines.is_empty() {
            return user("no baselines selected");
        }
    }
    macro_rules! set {
        ($($flag:ident => $($field:ident).+),* $(,)?) => {
            $(if let Some(v) = a.$flag { cfg.$($field).+ = v; })*
        };
    }
    set!(trials => trials, seed => seed, clients => clients, classes => classes, epsilon => epsilon,
         lambda => lambda, test_fraction => test_fraction, mu => synth.mu, gamma => synth.gamma,
         reference_candidates => reference_candidates);
    if a.h.is_some() {
        cfg.h = a.h;
    }
    if a.points.is_some() {
        cfg.synth.n = a.points;
    }
    if let Some(m) = &a.grid_mode {
        cfg.grid_mode = match m.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "distance_margin" => GridMode::DistanceMargin,
            "equal_area" => GridMode::EqualArea,
            _ => return user(format!("unknown grid mode {m:?}; use distance_margin or equal_area")),
        };
    }
    let data = match &a.data {
        Some(path) => {
            if !path.exists() {
                return user(format!("data file {} does not exist", path.display()));
            }
            let d = load_dataset(path)?;
            if d.is_empty() {
                return Err(Error::EmptyInput("the data file holds no points").into());
            }
            cfg.classes = d.classes().len();
            cfg.radius = d.radius;
            cfg.curvature = d.curvature;
            Some(d)
        }
        None => None,
    };
    cfg.validate()?;
    Ok((cfg, data))
}

fn summary_table(res: &ExperimentResult) -> String {
    let s = &res.summary;
    let mut out = format!("{:<8} {:>8} {:>8} {:>9}\n", "baseline", "mean", "±CI95", "ok/trials");
    for b in &res.config.baselines {
        let (mean, ci, n) = s.accuracy.get(b).map(|m| (m.mean, m.half_width, m.n)).unwrap_or((f64::NAN, f64::NAN, 0));
        out.push_str(&format!("{:<8} {:>8.4} {:>8.4} {:>9}\n", b.name(), mean, ci, format!("{n}/{}", s.trials)));
    }
    out.push_str(&format!("avg hull {:.2}, max hull {}", s.avg_hull, s.max_hull));
    if let Some(bits) = s.bits {
        out.push_str(&format!(", bits per client {bits:.0}"));
    }
    out.push('\n');
    for t in &res.trials {
        for (b, e) in &t.errors {
            out.push_str(&format!("trial {} {b} failed: {e}\n", t.trial));
        }
    }
    out
}

fn run(a: RunArgs) -> CliResult<()> {
    let (cfg, data) = build_config(&a)?;
    let res = run_experiment(&cfg, data.as_ref())?;
    let jsonl = metrics_jsonl(&res)?;
    let table = summary_table(&res);
    match &a.out {
        Some(path) => {
            fs::write(path, jsonl).map_err(|e| io_err(path, e))?;
            print!("{table}");
        }
        None => {
            print!("{jsonl}");
            eprint!("{table}");
        }
    }
    Ok(())
}

fn sweep(a: SweepArgs) -> CliResult<()> {
    let param: SweepParam = a.param.parse()?;
    let (cfg, data) = build_config(&a.run)?;
    let cells = run_sweep(&cfg, param, &a.values, data.as_ref());
    for cell in &cells {
        if let Err(e) = &cell.result {
            eprintln!("{} = {} failed: {e}", a.param, cell.value);
        }
    }
    match &a.run.out {
        Some(path) => {
            let f = fs::File::create(path).map_err(|e| io_err(path, e))?;
            write_sweep_csv(f, &cells, &cfg.baselines)?;
        }
        None => write_sweep_csv(std::io::stdout().lock(), &cells, &cfg.baselines)?,
    }
    Ok(())
}

fn hull_stats(a: HullStatsArgs) -> CliResult<()> {
    if a.n.is_empty() || a.n.contains(&0) {
        return user("sample sizes must be positive");
    }
    if a.trials == 0 {
        return user("at least one trial is needed");
    }
    let r = hull_scaling(&a.n, a.trials, a.radius, Curvature::new(a.curvature)?, a.seed, a.quantize_exponent)?;
    if let Some(path) = &a.out {
        let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
        w.write_record(["n", "trial", "hull_size"]).map_err(|e| io_err(path, e))?;
        for (n, t, h) in &r.rows {
            w.write_record([n.to_string(), t.to_string(), h.to_string()]).map_err(|e| io_err(path, e))?;
        }
        w.flush().map_err(|e| io_err(path, e))?;
    }
    println!("{:>10} {:>10} {:>6} {:>6}", "n", "mean hull", "min", "max");
    for &n in &a.n {
        let sizes: Vec<usize> = r.rows.iter().filter(|row| row.0 == n).map(|row| row.2).collect();
        let mean = sizes.iter().sum::<usize>() as f64 / sizes.len() as f64;
        let (lo, hi) = (sizes.iter().min().unwrap_or(&0), sizes.iter().max().unwrap_or(&0));
        println!("{n:>10} {mean:>10.2} {lo:>6} {hi:>6}");
    }
    if let Some(fit) = &r.fit {
        println!("log-log slope {:.4} ± {:.4}", fit.slope, fit.slope_half_width);
    }
    Ok(())
}

fn inspect_share(a: InspectArgs) -> CliResult<()> {
    let path = &a.transcript;
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let t: Transcript = serde_json::from_str(&text).map_err(|e| io_err(path, e))?;
    let shares = t.decode_shares().map_err(|e| io_err(path, e))?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let w = |e: std::io::Error| CliError::Internal(e.to_string());
    writeln!(out, "q = {}, n_sums = {}, bins = {}, h = {}", t.q, t.n_sums, t.num_bins, t.h).map_err(w)?;
    if shares.is_empty() {
        writeln!(out, "no shares").map_err(w)?;
        return Ok(());
    }
    let field = PrimeField::new(t.q)?;
    let agg = aggregate(&shares, &field)?;
    let decoded = scma_decode(&agg, &field, t.num_bins, t.max_support)?;
    let seq = BhSequence { h: t.h, elements: t.sequence.clone() };
    let mut split = BhDecomposer::new(&seq, t.h);
    writeln!(out, "{} shares, {} occupied bins", shares.len(), decoded.len()).map_err(w)?;
    for (&bin, &sum) in &decoded {
        let parts = match split.values(sum) {
            Some(v) => format!("{v:?}"),
            None => "unresolvable".to_string(),
        };
        writeln!(out, "bin {bin:>6}  H = {sum:>8}  -> {parts}").map_err(w)?;
    }
    if !t.truth.is_empty() {
        let truth: Vec<(u64, u64)> = t.truth.iter().map(|b| (b.bin, b.sum)).collect();
        let got: Vec<(u64, u64)> = decoded.into_iter().collect();
        if truth == got {
            writeln!(out, "decode matches the recorded aggregate").map_err(w)?;
        } else {
            return Err(CliError::Internal("decode differs from the recorded aggregate".into()));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use hypfed::federation::Baseline;

    #[test]
    fn flags_are_well_formed() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn flag_overrides_default() {
        let a = RunArgs { epsilon: Some(0.2), points: Some(500), ..Default::default() };
        let (cfg, data) = build_config(&a).map_err(|_| ()).unwrap();
        assert_eq!(cfg.epsilon, 0.2);
        assert_eq!(cfg.synth.n, Some(500));
        assert!(data.is_none());
    }

    #[test]
    fn unknown_grid_mode_is_a_user_error() {
        let a = RunArgs { grid_mode: Some("hexagonal".into()), ..Default::default() };
        assert!(matches!(build_config(&a), Err(CliError::User(_))));
    }

    #[test]
    fn errors_map_to_exit_classes() {
        assert!(matches!(CliError::from(Error::InvalidParameter("x".into())), CliError::User(_)));
        assert!(matches!(CliError::from(Error::Internal("x".into())), CliError::Internal(_)));
    }

    #[test]
    fn baseline_names_parse() {
        let a = RunArgs { baselines: Some(vec!["cp".into(), "FLE".into()]), ..Default::default() };
        let (cfg, _) = build_config(&a).map_err(|_| ()).unwrap();
        assert_eq!(cfg.baselines, vec![Baseline::CentralPoincare, Baseline::FederatedEuclidean]);
    }
}
