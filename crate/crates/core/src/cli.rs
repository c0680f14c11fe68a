//! Command-line interface.
//!
//! Exit codes: 0 on success, 1 on domain or validation errors, 2 on usage
//! errors (unknown flags, unparsable values, unknown strategies).

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::strategy::{parse_strategy_list, StrategyConfig, DEFAULT_TOP_N};
use crate::synthetic::{
    dilution_check, run_sweep, write_sweep_csv, write_sweep_records, DilutionParams, SweepResult, SyntheticConfig,
    SyntheticTrace, DEFAULT_SEED,
};
use crate::theory::{alpha_for_expected_tau, TheoryParams};
use crate::trace_io::{read_trace_file, TraceReader, TraceWriter};
use crate::types::{Decision, DecodeStep, HiddenEncoding, ReplayMetrics};
use crate::verification::{loosening_report, render_report_table, replay_trace, BoundStrategy, Replayer};

const STRATEGY_HELP: &str = "\
Strategy spec: NAME[:KEY=VALUE,FLAG,...]
  strict
  random:p=0.5,seed=0          accept a mismatch with probability p
  fly-gate:entropy=0.1         accept a mismatch whose target entropy exceeds the threshold
  fly:entropy=0.1,window=4     as fly-gate, and the next `window` positions must match
  lvspec:lambda=0.7,n=10,pst   relax the round(lambda*K) least visually relevant positions
                               (mean of the top-n cosine similarities); pst also accepts a
                               target token found anywhere in the draft window
  oracle[:pst]                 relax the positions labelled irrelevant (synthetic traces)
Lists separate specs with ';'.";

#[derive(Debug, Parser)]
#[command(name = "loosespec", version, about = "Loose speculative-decoding verification and acceptance-length theory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Closed-form expected acceptance length, scaling ratio and speedup.
    Theory(TheoryArgs),
    /// Monte Carlo sweep of strategies over synthetic traces.
    Simulate(SimulateArgs),
    /// Write one synthetic trace file.
    GenSynthetic(GenArgs),
    /// Replay a trace under one strategy.
    Replay(ReplayArgs),
    /// Per-position listing of strictly verified and loosened tokens.
    Report(ReportArgs),
    /// Strict versus loose failure rates when irrelevant positions are relaxed.
    Dilution(DilutionArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TextOrJson {
    Text,
    Json,
}

#[derive(Debug, Args)]
struct TheoryArgs {
    /// Per-position match probability.
    #[arg(long)]
    alpha: f64,
    /// Visual density.
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    /// Draft length.
    #[arg(long)]
    k: usize,
    /// Target latency per token.
    #[arg(long, requires_all = ["td", "ttk"])]
    tt: Option<f64>,
    /// Draft latency per token.
    #[arg(long, requires_all = ["tt", "ttk"])]
    td: Option<f64>,
    /// Target latency verifying K tokens at once.
    #[arg(long, requires_all = ["tt", "td"])]
    ttk: Option<f64>,
    /// Also report the speedup at this expected acceptance length.
    #[arg(long, requires = "tt")]
    tau: Option<f64>,
    /// Output format.
    #[arg(long, value_enum, default_value_t = TextOrJson::Text)]
    format: TextOrJson,
}

/// Generator parameters shared by `simulate` and `gen-synthetic`.
#[derive(Debug, Args)]
struct GeneratorArgs {
    /// Match probability at relevant positions (overrides --alpha).
    #[arg(long)]
    alpha_relevant: Option<f64>,
    /// Match probability at irrelevant positions (overrides --alpha).
    #[arg(long)]
    alpha_irrelevant: Option<f64>,
    /// Hidden dimension.
    #[arg(long)]
    d: Option<usize>,
    /// Visual sequence length.
    #[arg(long)]
    l_v: Option<usize>,
    /// Visual rows concentrated on the salient direction.
    #[arg(long)]
    salient_count: Option<usize>,
    /// Concentration of relevant draft rows on the salient direction.
    #[arg(long)]
    kappa_relevant: Option<f64>,
    /// Concentration of irrelevant draft rows on the background direction.
    #[arg(long)]
    kappa_irrelevant: Option<f64>,
    /// Concentration of salient visual rows.
    #[arg(long)]
    kappa_visual: Option<f64>,
    /// Probability that a mismatch is a positional shift.
    #[arg(long)]
    shift_rate: Option<f64>,
    /// Mean target entropy at matching positions (nats).
    #[arg(long)]
    entropy_match: Option<f64>,
    /// Mean target entropy at mismatching positions (nats).
    #[arg(long)]
    entropy_mismatch: Option<f64>,
    /// Probability a position repeats the previous match outcome.
    #[arg(long)]
    match_correlation: Option<f64>,
    /// Decode steps per trace.
    #[arg(long)]
    steps: Option<u64>,
}

impl GeneratorArgs {
    fn apply(&self, c: &mut SyntheticConfig) {
        fn set<T: Copy>(slot: &mut T, v: Option<T>) {
            if let Some(v) = v {
                *slot = v;
            }
        }
        set(&mut c.alpha_relevant, self.alpha_relevant);
        set(&mut c.alpha_irrelevant, self.alpha_irrelevant);
        set(&mut c.d, self.d);
        set(&mut c.l_v, self.l_v);
        set(&mut c.salient_count, self.salient_count);
        set(&mut c.kappa_relevant, self.kappa_relevant);
        set(&mut c.kappa_irrelevant, self.kappa_irrelevant);
        set(&mut c.kappa_visual, self.kappa_visual);
        set(&mut c.shift_event_rate, self.shift_rate);
        set(&mut c.entropy_mean_match, self.entropy_match);
        set(&mut c.entropy_mean_mismatch, self.entropy_mismatch);
        set(&mut c.match_correlation, self.match_correlation);
        set(&mut c.steps, self.steps);
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SweepFormat {
    Csv,
    Records,
}

#[derive(Debug, Args)]
#[command(after_help = STRATEGY_HELP)]
struct SimulateArgs {
    /// JSON file holding one generator config or an array of them (the grid).
    #[arg(long, conflicts_with_all = ["alpha", "rho", "k"])]
    config_file: Option<PathBuf>,
    /// Comma-separated match probabilities (both position classes).
    #[arg(long, value_delimiter = ',')]
    alpha: Vec<f64>,
    /// Comma-separated visual densities.
    #[arg(long, value_delimiter = ',')]
    rho: Vec<f64>,
    /// Comma-separated draft lengths.
    #[arg(long, value_delimiter = ',')]
    k: Vec<usize>,
    #[command(flatten)]
    generator: GeneratorArgs,
    /// Strategy specs separated by ';'.
    #[arg(long, value_parser = parse_strategies)]
    strategies: StrategyList,
    /// Independent traces per grid point.
    #[arg(long, default_value_t = 1)]
    trials: u32,
    /// Base seed; each point and trial derives its own.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Write the sweep table here and print a summary with analytic checks;
    /// without it the table goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Sweep table format.
    #[arg(long, value_enum, default_value_t = SweepFormat::Csv)]
    format: SweepFormat,
}

#[derive(Debug, Clone)]
struct StrategyList(Vec<StrategyConfig>);

fn parse_strategies(s: &str) -> Result<StrategyList, String> {
    parse_strategy_list(s).map(StrategyList).map_err(|e| e.to_string())
}

fn parse_strategy(s: &str) -> Result<StrategyConfig, String> {
    s.parse().map_err(|e: crate::strategy::StrategyError| e.to_string())
}

#[derive(Debug, Args)]
struct GenArgs {
    /// JSON file holding a generator config; flags override its fields.
    #[arg(long)]
    config_file: Option<PathBuf>,
    /// Match probability for both position classes.
    #[arg(long)]
    alpha: Option<f64>,
    /// Fraction of visually relevant positions.
    #[arg(long)]
    rho: Option<f64>,
    /// Draft length per step.
    #[arg(long)]
    k: Option<usize>,
    #[command(flatten)]
    generator: GeneratorArgs,
    /// Generator seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output trace file.
    #[arg(long)]
    out: PathBuf,
    /// Hidden-state encoding.
    #[arg(long, default_value_t = HiddenEncoding::F32leBase64)]
    encoding: HiddenEncoding,
}

#[derive(Debug, Args)]
#[command(after_help = STRATEGY_HELP)]
struct ReplayArgs {
    /// Trace file to replay.
    #[arg(long)]
    trace: PathBuf,
    /// Verification strategy.
    #[arg(long, value_parser = parse_strategy)]
    strategy: StrategyConfig,
    /// Write the metrics as one JSON record.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ReportFormat {
    Text,
    Records,
}

#[derive(Debug, Args)]
#[command(after_help = STRATEGY_HELP)]
struct ReportArgs {
    /// Trace file to report on.
    #[arg(long)]
    trace: PathBuf,
    /// Verification strategy.
    #[arg(long, value_parser = parse_strategy, default_value = "lvspec")]
    strategy: StrategyConfig,
    /// Output format.
    #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
    format: ReportFormat,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DilutionArgs {
    /// Per-position match probability. Defaults to the value whose strict
    /// failure rate equals --strict-failure.
    #[arg(long)]
    alpha: Option<f64>,
    /// Strict failure rate 1 - E[τ]/K used to choose alpha.
    #[arg(long, default_value_t = 0.659, conflicts_with = "alpha")]
    strict_failure: f64,
    /// Relaxation ratio; the generator's visual density is 1 - lambda.
    #[arg(long, default_value_t = 0.7)]
    lambda: f64,
    /// Draft length.
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Independent traces.
    #[arg(long, default_value_t = 1)]
    trials: u32,
    /// Decode steps per trace.
    #[arg(long, default_value_t = 10_000)]
    steps: u64,
    /// Top-N of the relevance score.
    #[arg(long, default_value_t = DEFAULT_TOP_N)]
    n: usize,
    /// Base seed.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Output format.
    #[arg(long, value_enum, default_value_t = TextOrJson::Text)]
    format: TextOrJson,
}

/// A failed invocation: message and exit code.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

fn domain(e: impl std::fmt::Display) -> Failure {
    Failure {
        code: 1,
        message: e.to_string(),
    }
}

type CmdResult = Result<(), Failure>;

/// Runs the CLI on `args` (program name first). Returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let rendered = e.render().to_string();
            let _ = if code == 0 {
                out.write_all(rendered.as_bytes())
            } else {
                err.write_all(rendered.as_bytes())
            };
            return code;
        }
    };
    let result = match cli.command {
        Command::Theory(a) => cmd_theory(&a, out),
        Command::Simulate(a) => cmd_simulate(&a, out),
        Command::GenSynthetic(a) => cmd_gen_synthetic(&a, out),
        Command::Replay(a) => cmd_replay(&a, out),
        Command::Report(a) => cmd_report(&a, out),
        Command::Dilution(a) => cmd_dilution(&a, out),
    };
    match result {
        Ok(()) => 0,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| domain(format!("cannot create {}: {e}", path.display())))
}

fn io(e: std::io::Error) -> Failure {
    domain(format!("i/o error: {e}"))
}

fn cmd_theory(a: &TheoryArgs, out: &mut dyn Write) -> CmdResult {
    let mut params = TheoryParams::new(a.alpha, a.rho, a.k).map_err(domain)?;
    if let (Some(tt), Some(td), Some(ttk)) = (a.tt, a.td, a.ttk) {
        params = params.with_latencies(tt, td, ttk).map_err(domain)?;
    }
    let s = params.summary().map_err(domain)?;
    let at_tau = match a.tau {
        Some(tau) => params.speedup(tau).map_err(domain)?,
        None => None,
    };
    match a.format {
        TextOrJson::Json => {
            let record = serde_json::json!({
                "params": params,
                "summary": s,
                "tau": a.tau,
                "speedup_at_tau": at_tau,
            });
            writeln!(out, "{record}").map_err(io)?;
        }
        TextOrJson::Text => {
            let mut rows: Vec<(&str, String)> = vec![
                ("alpha", a.alpha.to_string()),
                ("rho", a.rho.to_string()),
                ("k", a.k.to_string()),
                ("failure_rate", s.failure_rate.to_string()),
                ("expected_tau_strict", s.tau_strict.to_string()),
                ("strict_bound", s.strict_bound.to_string()),
                ("effective_alignment", s.effective_alignment.to_string()),
                ("expected_tau_loose", s.tau_loose.to_string()),
                ("scaling_ratio_exact", s.ratio.exact.to_string()),
                ("scaling_ratio_asymptotic", s.ratio.asymptotic.to_string()),
            ];
            if let (Some(st), Some(lo)) = (s.speedup_strict, s.speedup_loose) {
                rows.push(("speedup_strict", st.to_string()));
                rows.push(("speedup_loose", lo.to_string()));
            }
            if let (Some(tau), Some(sp)) = (a.tau, at_tau) {
                rows.push(("tau", tau.to_string()));
                rows.push(("speedup_at_tau", sp.to_string()));
            }
            for (name, value) in rows {
                writeln!(out, "{name:<26}{value}").map_err(io)?;
            }
        }
    }
    Ok(())
}

fn load_configs(path: &Path) -> Result<Vec<SyntheticConfig>, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| domain(format!("cannot read {}: {e}", path.display())))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| domain(format!("{}: {e}", path.display())))?;
    let parsed = if value.is_array() {
        serde_json::from_value(value)
    } else {
        serde_json::from_value(value).map(|c| vec![c])
    };
    parsed.map_err(|e| domain(format!("{}: {e}", path.display())))
}

fn sweep_grid(a: &SimulateArgs) -> Result<Vec<SyntheticConfig>, Failure> {
    let bases = match &a.config_file {
        Some(path) => load_configs(path)?,
        None => {
            let base = SyntheticConfig::default();
            let alphas = if a.alpha.is_empty() { vec![base.alpha_relevant] } else { a.alpha.clone() };
            let rhos = if a.rho.is_empty() { vec![base.rho] } else { a.rho.clone() };
            let ks = if a.k.is_empty() { vec![base.k] } else { a.k.clone() };
            let mut grid = Vec::new();
            for &alpha in &alphas {
                for &rho in &rhos {
                    for &k in &ks {
                        grid.push(SyntheticConfig { rho, k, ..base.clone() }.with_alpha(alpha));
                    }
                }
            }
            grid
        }
    };
    Ok(bases
        .into_iter()
        .map(|mut c| {
            a.generator.apply(&mut c);
            c
        })
        .collect())
}

/// The closed form a strategy's empirical mean should match, if any.
fn analytic_for(strategy: &StrategyConfig, result: &SweepResult) -> Option<f64> {
    match strategy {
        StrategyConfig::Strict
        | StrategyConfig::LvSpec { lambda: 0.0, pst: false, .. }
        | StrategyConfig::Random { p: 0.0, .. } => Some(result.analytic_strict),
        StrategyConfig::Oracle { pst: false } => Some(result.analytic_loose),
        _ => None,
    }
}

fn cmd_simulate(a: &SimulateArgs, out: &mut dyn Write) -> CmdResult {
    let grid = sweep_grid(a)?;
    let results = run_sweep(&grid, &a.strategies.0, a.trials, a.seed).map_err(domain)?;

    let failed_points = results.iter().filter(|r| r.error.is_some()).count();
    let Some(path) = &a.out else {
        match a.format {
            SweepFormat::Csv => write_sweep_csv(&results, &mut *out).map_err(domain)?,
            SweepFormat::Records => write_sweep_records(&results, &mut *out).map_err(io)?,
        }
        return if failed_points > 0 {
            Err(domain(format!("{failed_points} grid point(s) failed")))
        } else {
            Ok(())
        };
    };
    let file = create(path)?;
    match a.format {
        SweepFormat::Csv => write_sweep_csv(&results, file).map_err(domain)?,
        SweepFormat::Records => write_sweep_records(&results, file).map_err(io)?,
    }

    writeln!(
        out,
        "{:>5} {:>8} {:>8} {:>6} {:>5}  {:<28} {:>10} {:>9} {:>10}  check (3 s.e.)",
        "point", "alpha_r", "alpha_i", "rho", "k", "strategy", "mean_tau", "std_err", "analytic"
    )
    .map_err(io)?;
    for r in &results {
        let c = &r.config;
        let lead = format!(
            "{:>5} {:>8} {:>8} {:>6} {:>5}",
            r.point, c.alpha_relevant, c.alpha_irrelevant, c.rho, c.k
        );
        if let Some(e) = &r.error {
            writeln!(out, "{lead}  error: {e}").map_err(io)?;
            continue;
        }
        for (strategy, stats) in a.strategies.0.iter().zip(&r.strategies) {
            let analytic = analytic_for(strategy, r);
            let (analytic_text, check) = match analytic {
                Some(x) => {
                    let ok = (stats.mean_tau - x).abs() <= 3.0 * stats.std_error;
                    (format!("{x:.4}"), if ok { "pass" } else { "FAIL" })
                }
                None => ("-".to_string(), "-"),
            };
            writeln!(
                out,
                "{lead}  {:<28} {:>10.4} {:>9.4} {:>10}  {check}",
                stats.strategy, stats.mean_tau, stats.std_error, analytic_text
            )
            .map_err(io)?;
        }
    }
    if failed_points > 0 {
        return Err(domain(format!("{failed_points} grid point(s) failed")));
    }
    Ok(())
}

fn cmd_gen_synthetic(a: &GenArgs, out: &mut dyn Write) -> CmdResult {
    let mut config = match &a.config_file {
        Some(path) => {
            let mut configs = load_configs(path)?;
            if configs.len() != 1 {
                return Err(domain(format!("{} must hold exactly one config", path.display())));
            }
            configs.remove(0)
        }
        None => SyntheticConfig::default(),
    };
    if let Some(alpha) = a.alpha {
        config = config.with_alpha(alpha);
    }
    if let Some(rho) = a.rho {
        config.rho = rho;
    }
    if let Some(k) = a.k {
        config.k = k;
    }
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    a.generator.apply(&mut config);

    let mut synthetic = SyntheticTrace::new(&config).map_err(domain)?;
    synthetic.header.encoding = a.encoding;
    let file = create(&a.out)?;
    let mut writer = TraceWriter::new(file, &synthetic.header, &synthetic.visual_hidden, 1).map_err(domain)?;
    for step in synthetic.steps.by_ref() {
        writer.write_step(&step).map_err(domain)?;
    }
    let bytes = writer.finish().map_err(domain)?;
    writeln!(
        out,
        "wrote {} steps (K={}, seed={}) to {} ({bytes} bytes)",
        config.steps,
        config.k,
        config.seed,
        a.out.display()
    )
    .map_err(io)
}

fn write_metrics_summary(out: &mut dyn Write, strategy: &StrategyConfig, m: &ReplayMetrics) -> std::io::Result<()> {
    writeln!(out, "strategy              {strategy}")?;
    writeln!(out, "steps                 {}", m.total_steps)?;
    writeln!(out, "mean_tau              {:.6}", m.mean_tau)?;
    writeln!(out, "total_accepted        {}", m.total_accepted)?;
    if let Some(s) = m.speedup_estimate {
        writeln!(out, "speedup_estimate      {s:.6}")?;
    }
    if let Some(s) = m.relevance_wall_share {
        writeln!(out, "relevance_wall_share  {:.4}%", 100.0 * s)?;
    }
    for d in Decision::ALL {
        writeln!(out, "  {:<20}{}", d.as_str(), m.per_position_counts.get(d))?;
    }
    Ok(())
}

fn cmd_replay(a: &ReplayArgs, out: &mut dyn Write) -> CmdResult {
    let file = File::open(&a.trace).map_err(|e| domain(format!("cannot open {}: {e}", a.trace.display())))?;
    let mut reader = TraceReader::new(BufReader::new(file)).map_err(domain)?;
    let strategy = BoundStrategy::new(a.strategy.clone()).map_err(domain)?;
    let latencies = reader.header().latencies;
    let branches = usize::from(reader.branches_per_step().max(1));
    let visual = reader.visual_hidden().clone();
    let mut replayer = Replayer::from_bound(strategy, &visual).map_err(domain)?;

    let mut group: Vec<DecodeStep> = Vec::with_capacity(branches);
    while let Some(step) = reader.next_step().map_err(domain)? {
        replayer.strategy().check_requirements(&step).map_err(|e| {
            domain(format!("trace cannot be replayed with `{}`: {e}", a.strategy))
        })?;
        group.push(step);
        if group.len() == branches {
            replayer.push(&group).map_err(domain)?;
            group.clear();
        }
    }
    let metrics = replayer.finish(latencies);

    if let Some(path) = &a.out {
        let mut file = create(path)?;
        let record = serde_json::json!({ "strategy": a.strategy.to_string(), "metrics": metrics });
        writeln!(file, "{record}").map_err(io)?;
        file.flush().map_err(io)?;
    }
    write_metrics_summary(out, &a.strategy, &metrics).map_err(io)
}

fn cmd_report(a: &ReportArgs, out: &mut dyn Write) -> CmdResult {
    let trace = read_trace_file(&a.trace).map_err(domain)?;
    let replay = replay_trace(&a.strategy, &trace).map_err(domain)?;
    let rows = loosening_report(&replay.verdicts, &trace).map_err(domain)?;
    let mut text = Vec::new();
    match a.format {
        ReportFormat::Text => text.extend_from_slice(render_report_table(&rows).as_bytes()),
        ReportFormat::Records => {
            for row in &rows {
                serde_json::to_writer(&mut text, row).map_err(domain)?;
                text.push(b'\n');
            }
        }
    }
    match &a.out {
        Some(path) => {
            let mut file = create(path)?;
            file.write_all(&text).map_err(io)?;
            file.flush().map_err(io)
        }
        None => out.write_all(&text).map_err(io),
    }
}

fn cmd_dilution(a: &DilutionArgs, out: &mut dyn Write) -> CmdResult {
    let alpha = match a.alpha {
        Some(alpha) => alpha,
        None => {
            let tau = (1.0 - a.strict_failure) * a.k as f64;
            alpha_for_expected_tau(tau, a.k).map_err(domain)?
        }
    };
    let params = DilutionParams {
        alpha,
        lambda: a.lambda,
        k: a.k,
        steps: a.steps,
        trials: a.trials,
        top_n: a.n,
        seed: a.seed,
    };
    let r = dilution_check(&params).map_err(domain)?;
    match a.format {
        TextOrJson::Json => writeln!(out, "{}", serde_json::to_string(&r).map_err(domain)?).map_err(io),
        TextOrJson::Text => {
            let rows = [
                ("alpha", format!("{:.6}", r.alpha)),
                ("lambda", r.lambda.to_string()),
                ("rho (1 - lambda)", format!("{:.4}", r.rho)),
                ("k", r.k.to_string()),
                ("steps x trials", format!("{} x {}", r.steps, r.trials)),
                ("strict mean_tau", format!("{:.4}", r.strict_mean_tau)),
                ("strict failure", format!("{:.4}", r.strict_failure_rate)),
                ("oracle loose failure", format!("{:.4}", r.oracle_failure_rate)),
                ("scored loose failure", format!("{:.4}", r.scored_failure_rate)),
                ("predicted rho x strict failure", format!("{:.4}", r.predicted_failure_rate)),
                ("analytic loose failure", format!("{:.4}", r.analytic_loose_failure_rate)),
                ("token failure eps", format!("{:.4}", r.token_failure_rate)),
                ("diluted token failure rho x eps", format!("{:.4}", r.diluted_token_failure_rate)),
            ];
            for (name, value) in rows {
                writeln!(out, "{name:<34}{value}").map_err(io)?;
            }
            Ok(())
        }
    }
}
