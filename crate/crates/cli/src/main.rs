//! `polarmm`: synthesis, construction, simulation and bound ledgers for polar
//! codes decoded with a mismatched metric.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use polar_mismatch::construct::{level_stats, select_matched, select_mismatched, Selector};
use polar_mismatch::montecarlo::TraceThresholds;
use polar_mismatch::polarize::signs_of;
use polar_mismatch::{
    lower_bound_family, pair, sample_paths, simulate_block_error, Bdmc, ChannelError,
    ChannelPair, ChannelSpec, CodecError, ConstructError, MismatchError, PolarCode,
    PolarizeError, SynthesisBudget, TiePolicy,
};
use thiserror::Error;

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Alphabet(#[from] MismatchError),
    #[error("{0}")]
    Usage(String),
    #[error("synthesis budget exceeded: {0}")]
    Budget(PolarizeError),
    #[error("construction failed: {0}")]
    Construct(ConstructError),
    #[error("simulation setup: {0}")]
    Simulate(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Channel(_) | CliError::Usage(_) => 2,
            CliError::Budget(_) => 3,
            CliError::Construct(_) => 4,
            CliError::Alphabet(_) | CliError::Simulate(_) => 5,
            CliError::Io { .. } => 1,
        }
    }
}

impl From<ConstructError> for CliError {
    fn from(e: ConstructError) -> Self {
        match e {
            ConstructError::Budget(b) => CliError::Budget(b),
            other => CliError::Construct(other),
        }
    }
}

impl From<CodecError> for CliError {
    fn from(e: CodecError) -> Self {
        CliError::Simulate(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "polarmm", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the parameters of W and, with --v, of the pair (W, V).
    Info {
        #[command(flatten)]
        ch: Channels,
    },
    /// CSV of every synthesized pair at level n.
    Synth {
        #[command(flatten)]
        ch: Channels,
        #[arg(short = 'n', long = "level")]
        n: usize,
        #[command(flatten)]
        budget: BudgetArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build an information set and write the code as JSON.
    Construct {
        #[command(flatten)]
        ch: Channels,
        #[arg(short = 'n', long = "level")]
        n: usize,
        /// Fraction of indices carrying information.
        #[arg(long, conflicts_with = "gamma", required_unless_present = "gamma")]
        rate: Option<f64>,
        /// Threshold on I (matched) or on P_e,ML (mismatched).
        #[arg(long)]
        gamma: Option<f64>,
        /// Defaults to matched without --v, mismatched with it.
        #[arg(long, value_enum)]
        rule: Option<RuleArg>,
        #[command(flatten)]
        budget: BudgetArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Block-error simulation of a code with metric V over W.
    Simulate {
        #[arg(long)]
        code: PathBuf,
        #[command(flatten)]
        ch: Channels,
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = TieArg::FairCoin)]
        tie: TieArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Lower-bound ledger L_n for n = 0..=max-n as CSV.
    Bounds {
        #[command(flatten)]
        ch: Channels,
        #[arg(long)]
        max_n: usize,
        #[command(flatten)]
        budget: BudgetArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample random sign paths of the polarization process.
    Trace {
        #[command(flatten)]
        ch: Channels,
        #[arg(long)]
        depth: usize,
        #[arg(long, default_value_t = 1024)]
        paths: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.1)]
        gamma: f64,
        #[arg(long, default_value_t = 0.4)]
        beta: f64,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[command(flatten)]
        budget: BudgetArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Channels {
    /// True channel: bsc:<p>, bec:<e> or file:<path>.
    #[arg(long)]
    w: String,
    /// Metric channel; defaults to --w.
    #[arg(long)]
    v: Option<String>,
}

struct Resolved {
    w_spec: ChannelSpec,
    v_spec: Option<ChannelSpec>,
    w: Bdmc,
    v: Bdmc,
}

impl Channels {
    fn resolve(&self) -> Result<Resolved, CliError> {
        let w_spec: ChannelSpec = self.w.parse()?;
        let w = w_spec.build()?;
        let v_spec = self.v.as_deref().map(str::parse::<ChannelSpec>).transpose()?;
        let v = match &v_spec {
            Some(s) => s.build()?,
            None => w.clone(),
        };
        Ok(Resolved {
            w_spec,
            v_spec,
            w,
            v,
        })
    }
}

impl Resolved {
    fn pair(&self) -> Result<ChannelPair, CliError> {
        Ok(pair(&self.w, &self.v)?)
    }
}

#[derive(Args)]
struct BudgetArgs {
    /// Largest alphabet any synthesized pair may reach.
    #[arg(long, default_value_t = 1 << 20)]
    max_symbols: usize,
    /// Merge letters whose Δ values agree within this tolerance; 0 disables.
    #[arg(long, default_value_t = 1e-12)]
    merge_tol: f64,
    /// Bin letters on an LLR grid of this step (approximate synthesis).
    #[arg(long)]
    llr_step: Option<f64>,
}

impl BudgetArgs {
    fn budget(&self) -> Result<SynthesisBudget, CliError> {
        if let Some(step) = self.llr_step {
            if !(step > 0.0 && step.is_finite()) {
                return Err(CliError::Usage(format!("--llr-step must be positive, got {step}")));
            }
        }
        Ok(SynthesisBudget {
            max_symbols: self.max_symbols,
            merge_tol: (self.merge_tol > 0.0).then_some(self.merge_tol),
            llr_step: self.llr_step,
        })
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum RuleArg {
    Matched,
    Mismatched,
}

#[derive(Clone, Copy, ValueEnum)]
enum TieArg {
    FairCoin,
    Zero,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Human summary: stdout when the artifact went to a file, stderr otherwise.
fn note(out: Option<&Path>, msg: &str) {
    if out.is_some() {
        println!("{msg}");
    } else {
        eprintln!("{msg}");
    }
}

fn info(ch: &Channels) -> Result<(), CliError> {
    let r = ch.resolve()?;
    let m = r.w.matched_params();
    println!("W = {}", r.w_spec);
    println!("I(W) = {}", m.capacity);
    println!("Z(W) = {}", m.bhattacharyya);
    println!("T(W) = {}", m.variational);
    println!("D(W) = {}", m.sqrt_distance);
    if let Some(vs) = &r.v_spec {
        let p = r.pair()?.params();
        println!("V = {vs}");
        println!("I(W,V) = {}", p.mmi);
        println!("D(W,V) = {}", p.d);
        println!("T(W,V) = {}", p.t);
        println!("Z(W,V) = {}", p.z);
        println!("Pe_ML(W,V) = {}", p.pe_ml);
    }
    Ok(())
}

fn synth(ch: &Channels, n: usize, budget: &BudgetArgs, out: Option<&Path>) -> Result<(), CliError> {
    let p = ch.resolve()?.pair()?;
    let stats = level_stats(&p, n, &budget.budget()?).map_err(CliError::Budget)?;
    let mut csv = String::from("i,signs,I_W,Z_W,I_WV,D_WV,Z_WV,T_WV,Pe_ML\n");
    for s in &stats {
        let signs = signs_of(s.index, n).expect("index in range");
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{}",
            s.index, signs, s.i_w, s.z_w, s.i_wv, s.d_wv, s.z_wv, s.t_wv, s.pe_ml
        )
        .unwrap();
    }
    emit(out, &csv)
}

#[allow(clippy::too_many_arguments)]
fn construct(
    ch: &Channels,
    n: usize,
    rate: Option<f64>,
    gamma: Option<f64>,
    rule: Option<RuleArg>,
    budget: &BudgetArgs,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let r = ch.resolve()?;
    let b = budget.budget()?;
    let selector = match (rate, gamma) {
        (Some(rate), None) => {
            if !(0.0..=1.0).contains(&rate) {
                return Err(CliError::Construct(ConstructError::KTooLarge {
                    k: (rate * (1u64 << n) as f64).floor().max(0.0) as usize,
                    n: 1 << n,
                }));
            }
            Selector::K((rate * (1u64 << n) as f64).floor() as usize)
        }
        (None, Some(g)) => Selector::Gamma(g),
        _ => return Err(CliError::Usage("exactly one of --rate and --gamma is required".into())),
    };
    let rule = rule.unwrap_or(if r.v_spec.is_some() {
        RuleArg::Mismatched
    } else {
        RuleArg::Matched
    });
    let mut code = match rule {
        RuleArg::Matched => {
            let stats = level_stats(&ChannelPair::matched(&r.w), n, &b).map_err(CliError::Budget)?;
            select_matched(&stats, n, selector, &b)?
        }
        RuleArg::Mismatched => {
            let stats = level_stats(&r.pair()?, n, &b).map_err(CliError::Budget)?;
            select_mismatched(&stats, n, selector, &b)?
        }
    };
    code.provenance.w = Some(r.w_spec.to_string());
    code.provenance.v = r.v_spec.as_ref().map(ToString::to_string);
    let mut json = code.to_json();
    json.push('\n');
    emit(out, &json)?;
    let mut summary = format!("N={} K={}", code.blocklength(), code.k());
    if let Some(g) = code.provenance.genie_bound {
        write!(summary, " genie_bound={g}").unwrap();
    }
    note(out, &summary);
    Ok(())
}

fn load_code(path: &Path) -> Result<PolarCode, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let code = PolarCode::from_json(&text)
        .map_err(|e| CliError::Simulate(format!("{}: {e}", path.display())))?;
    if !code.is_consistent() {
        return Err(CliError::Simulate(format!(
            "{}: information and frozen sets do not partition 1..={}",
            path.display(),
            code.blocklength()
        )));
    }
    Ok(code)
}

fn simulate(
    code: &Path,
    ch: &Channels,
    trials: u64,
    seed: u64,
    tie: TieArg,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let r = ch.resolve()?;
    let code = load_code(code)?;
    if r.w.len() != r.v.len() {
        return Err(CliError::Alphabet(MismatchError::AlphabetMismatch {
            w: r.w.len(),
            v: r.v.len(),
        }));
    }
    let policy = match tie {
        TieArg::FairCoin => TiePolicy::FairCoin,
        TieArg::Zero => TiePolicy::DeterministicZero,
    };
    let report = simulate_block_error(&code, &r.w, &r.v, trials, seed, policy)?;
    let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
    json.push('\n');
    emit(out, &json)?;
    note(
        out,
        &format!(
            "block errors {}/{} p_hat={} ci95=[{}, {}]",
            report.block_errors, report.trials, report.p_hat, report.ci95.0, report.ci95.1
        ),
    );
    Ok(())
}

fn bounds(ch: &Channels, max_n: usize, budget: &BudgetArgs, out: Option<&Path>) -> Result<(), CliError> {
    let p = ch.resolve()?.pair()?;
    let ledger = lower_bound_family(&p, max_n, &budget.budget()?);
    emit(out, &ledger.to_csv())?;
    match ledger.truncated {
        Some(e) => Err(CliError::Budget(e)),
        None => Ok(()),
    }
}

#[allow(clippy::too_many_arguments)]
fn trace(
    ch: &Channels,
    depth: usize,
    paths: u64,
    seed: u64,
    thresholds: TraceThresholds,
    format: Format,
    budget: &BudgetArgs,
    out: Option<&Path>,
) -> Result<(), CliError> {
    if depth == 0 {
        return Err(CliError::Usage("--depth must be at least 1".into()));
    }
    let p = ch.resolve()?.pair()?;
    let tr = sample_paths(&p, depth, paths, seed, &budget.budget()?, thresholds);
    let cut: u64 = tr.levels.iter().map(|l| l.truncated).sum();
    if cut > 0 {
        eprintln!("{cut} of {paths} paths stopped early on the synthesis budget");
    }
    let text = match format {
        Format::Csv => tr.to_csv(),
        Format::Json => tr.to_json() + "\n",
    };
    emit(out, &text)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Info { ch } => info(&ch),
        Command::Synth { ch, n, budget, out } => synth(&ch, n, &budget, out.as_deref()),
        Command::Construct {
            ch,
            n,
            rate,
            gamma,
            rule,
            budget,
            out,
        } => construct(&ch, n, rate, gamma, rule, &budget, out.as_deref()),
        Command::Simulate {
            code,
            ch,
            trials,
            seed,
            tie,
            out,
        } => simulate(&code, &ch, trials, seed, tie, out.as_deref()),
        Command::Bounds {
            ch,
            max_n,
            budget,
            out,
        } => bounds(&ch, max_n, &budget, out.as_deref()),
        Command::Trace {
            ch,
            depth,
            paths,
            seed,
            gamma,
            beta,
            format,
            budget,
            out,
        } => trace(
            &ch,
            depth,
            paths,
            seed,
            TraceThresholds { gamma, beta },
            format,
            &budget,
            out.as_deref(),
        ),
    }
}

fn main() -> ExitCode {
    if let Some(threads) = std::env::var("POLAR_THREADS")
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&t| t > 0)
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .expect("thread pool is configured once");
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_valid() {
        Cli::command().debug_assert();
    }

    #[test]
    fn rate_and_gamma_conflict() {
        let r = Cli::try_parse_from([
            "polarmm", "construct", "--w", "bsc:0.1", "-n", "3", "--rate", "0.5", "--gamma", "0.1",
        ]);
        assert!(r.is_err());
        let r = Cli::try_parse_from(["polarmm", "construct", "--w", "bsc:0.1", "-n", "3"]);
        assert!(r.is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Usage(String::new()).exit_code(), 2);
        assert_eq!(
            CliError::from(ConstructError::Budget(PolarizeError::BudgetExceeded {
                depth: 2,
                symbols: 10,
                max: 5
            }))
            .exit_code(),
            3
        );
        assert_eq!(
            CliError::from(ConstructError::KTooLarge { k: 9, n: 8 }).exit_code(),
            4
        );
        assert_eq!(CliError::Simulate(String::new()).exit_code(), 5);
    }
}
