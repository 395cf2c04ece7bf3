//! Command-line front end for the `dpl` binary.
//!
//! Exit status: 0 when every check passes, 1 when a check fails or on an I/O
//! error, 2 for usage and configuration errors, 3 when a budget guard trips.

use std::ffi::OsString;
use std::io::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::Error;
use crate::experiment::{self, exit_code, render_table, Command, ExperimentConfig, Format, Hooks, RunRecord};
use crate::polymer::DisorderModel;

#[derive(Debug, Parser)]
#[command(name = "dpl", version, about = "Directed polymers on hierarchical diamond lattices")]
pub struct Cli {
    /// Worker threads (falls back to DPL_THREADS, then all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Sub,
}

#[derive(Debug, Subcommand)]
pub enum Sub {
    /// Variance profile R, R', R3, R4 along the flow.
    Flow(Params),
    /// Exact correlation table on a small lattice, with its identities.
    CorrelationCheck(Params),
    /// Monte Carlo moments of the finite-lattice partition function.
    PolymerSim(Params),
    /// Pool approximation of the continuum partition function law.
    LimitSim(Params),
    /// Fraction of near-zero limit masses against r.
    DisorderScan(Params),
    /// Intersection-set size chains.
    IntersectionsSim(Params),
    /// Hausdorff sums of the intersection set.
    Hausdorff(Params),
    /// h-energy of the intersection-time measure.
    Energy(Params),
    /// Fast internal consistency checks.
    Selftest(SelftestArgs),
    /// Runs an experiment described by a JSON config file.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Debug, Clone, Args)]
pub struct Params {
    #[arg(long, help = "Branching number")]
    pub b: Option<u32>,
    #[arg(long, allow_hyphen_values = true, help = "Scale parameter")]
    pub r: Option<f64>,
    #[arg(long, visible_alias = "N", help = "Lattice generation")]
    pub n: Option<usize>,
    #[arg(long, value_delimiter = ',', help = "Comma-separated generations")]
    pub n_list: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, help = "Comma-separated r values")]
    pub r_list: Option<Vec<f64>>,
    #[arg(long, help = "Pool iteration levels")]
    pub levels: Option<usize>,
    #[arg(long, help = "Flow depth")]
    pub depth: Option<usize>,
    #[arg(long, help = "Disorder samples")]
    pub samples: Option<usize>,
    #[arg(long, help = "Independent chain runs")]
    pub runs: Option<usize>,
    #[arg(long, help = "Pool size")]
    pub pool_size: Option<usize>,
    #[arg(long, value_enum, help = "Disorder law")]
    pub model: Option<DisorderModel>,
    #[arg(long, help = "Gauge exponent")]
    pub h: Option<f64>,
    #[arg(long, help = "Correlation exponent")]
    pub lambda: Option<f64>,
    #[arg(long, allow_hyphen_values = true, help = "Exponential moment parameter")]
    pub a: Option<f64>,
    #[arg(long, help = "Near-zero threshold")]
    pub eps: Option<f64>,
    #[arg(long, help = "Master seed")]
    pub seed: Option<u64>,
    /// Output file; stdout when absent. A `.meta.json` sidecar is written next to it.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Clone, Args)]
pub struct SelftestArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[arg(long, hide = true, allow_hyphen_values = true)]
    pub inject_flow_perturbation: Option<f64>,
}

impl Params {
    fn into_config(self, command: Command) -> ExperimentConfig {
        ExperimentConfig {
            command,
            b: self.b,
            r: self.r,
            n: self.n,
            n_list: self.n_list,
            r_list: self.r_list,
            levels: self.levels,
            depth: self.depth,
            samples: self.samples,
            runs: self.runs,
            pool_size: self.pool_size,
            model: self.model,
            h: self.h,
            lambda: self.lambda,
            a: self.a,
            eps: self.eps,
            seed: self.seed,
            output: self.output,
            format: self.format,
        }
    }
}

fn resolve_threads(flag: Option<usize>) -> Result<Option<usize>, Error> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var("DPL_THREADS") {
            Ok(v) => Some(v.trim().parse().map_err(|_| Error::Config(format!("DPL_THREADS = {v:?}")))?),
            Err(_) => None,
        },
    };
    if n == Some(0) {
        return Err(Error::Config("thread count must be positive".into()));
    }
    Ok(n)
}

/// Parses `args`, runs the experiment and returns the exit status.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn main() -> i32 {
    run_from(std::env::args_os())
}

fn dispatch(cli: Cli) -> Result<i32, Error> {
    let threads = resolve_threads(cli.threads)?;
    let (config, hooks) = match cli.command {
        Sub::Flow(p) => (p.into_config(Command::Flow), Hooks::default()),
        Sub::CorrelationCheck(p) => (p.into_config(Command::CorrelationCheck), Hooks::default()),
        Sub::PolymerSim(p) => (p.into_config(Command::PolymerSim), Hooks::default()),
        Sub::LimitSim(p) => (p.into_config(Command::LimitSim), Hooks::default()),
        Sub::DisorderScan(p) => (p.into_config(Command::DisorderScan), Hooks::default()),
        Sub::IntersectionsSim(p) => (p.into_config(Command::IntersectionsSim), Hooks::default()),
        Sub::Hausdorff(p) => (p.into_config(Command::Hausdorff), Hooks::default()),
        Sub::Energy(p) => (p.into_config(Command::Energy), Hooks::default()),
        Sub::Selftest(s) => {
            let mut c = ExperimentConfig::new(Command::Selftest);
            c.seed = s.seed;
            c.output = s.output;
            c.format = s.format;
            (c, Hooks { flow_seed_perturbation: s.inject_flow_perturbation.unwrap_or(0.0) })
        }
        Sub::Run { config } => (ExperimentConfig::load(&config)?, Hooks::default()),
    };
    let go = move || experiment::run_with_hooks(&config, &hooks);
    let (record, outcome) = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(go)?,
        None => go()?,
    };
    if record.config.output.is_none() {
        let text = render_table(&outcome.table, record.config.format)?;
        std::io::stdout().lock().write_all(text.as_bytes())?;
    }
    report(&record);
    Ok(if record.passed { 0 } else { 1 })
}

fn report(record: &RunRecord) {
    let mut err = std::io::stderr().lock();
    for c in &record.checks {
        let _ = writeln!(err, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let failed = record.failed_checks();
    let _ = if failed.is_empty() {
        writeln!(err, "{}: {} checks passed", record.config.command.name(), record.checks.len())
    } else {
        writeln!(err, "{}: failed checks: {}", record.config.command.name(), failed.join(", "))
    };
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(args).unwrap()
    }

    #[test]
    fn negative_r_and_uppercase_alias() {
        let cli = parse(&["dpl", "flow", "--r", "-3.5", "--N", "7"]);
        match cli.command {
            Sub::Flow(p) => {
                assert_eq!(p.r, Some(-3.5));
                assert_eq!(p.n, Some(7));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn lists_split_on_commas() {
        let cli = parse(&["dpl", "disorder-scan", "--r-list", "-8,0,8", "--seed", "1"]);
        match cli.command {
            Sub::DisorderScan(p) => assert_eq!(p.r_list, Some(vec![-8.0, 0.0, 8.0])),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn global_threads_after_subcommand() {
        let cli = parse(&["dpl", "flow", "--threads", "2"]);
        assert_eq!(cli.threads, Some(2));
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run_from(["dpl", "flow", "--bogus"]), 2);
        assert_eq!(run_from(["dpl", "polymer-sim", "--n", "3"]), 2);
        assert_eq!(run_from(["dpl", "flow", "--seed", "3"]), 2);
    }

    #[test]
    fn budget_guard_exits_3() {
        assert_eq!(run_from(["dpl", "correlation-check", "--n", "5"]), 3);
    }

    #[test]
    fn perturbation_flag_is_hidden() {
        use clap::CommandFactory;
        let mut cmd = Cli::command();
        let help = cmd.find_subcommand_mut("selftest").unwrap().render_long_help().to_string();
        assert!(!help.contains("inject"));
    }
}
