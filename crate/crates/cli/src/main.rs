use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use quantlab_cli::{cmd_experiment, cmd_microbench, cmd_run_all, cmd_simulate, cmd_stats, CliError, RunConfig};

#[derive(Parser)]
#[command(name = "quantlab", version, about = "Quantization calibration and outlier analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Depth-wise outlier statistics for activation dumps (or the synthetic stack)
    Stats(Common),
    /// Error propagation through the residual stack
    Simulate(Common),
    /// Probe collapse under min-max, percentile and PEG calibration
    Experiment(Common),
    /// Latency of the quantization kernels
    Microbench(Common),
    /// Stats, sweeps, collapse experiment and microbenchmark
    RunAll(Common),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    bits: Option<u32>,
    /// Activation dump files
    #[arg(long, num_args = 1..)]
    dumps: Option<Vec<PathBuf>>,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        if let Some(bits) = self.bits {
            cfg.bits = bits;
        }
        if let Some(dumps) = &self.dumps {
            cfg.dumps = dumps.clone();
        }
        Ok(cfg)
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("QUANTLAB_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| CliError::Usage(format!("QUANTLAB_THREADS must be a positive integer, got {value:?}")))?;
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot size thread pool: {e}")))?;
    #[cfg(not(feature = "parallel"))]
    let _ = n;
    Ok(())
}

fn run(cli: Cli) -> Result<String, CliError> {
    configure_threads()?;
    type Handler = fn(&RunConfig) -> Result<String, CliError>;
    let (common, cmd): (&Common, Handler) = match &cli.command {
        Command::Stats(c) => (c, cmd_stats),
        Command::Simulate(c) => (c, cmd_simulate),
        Command::Experiment(c) => (c, cmd_experiment),
        Command::Microbench(c) => (c, cmd_microbench),
        Command::RunAll(c) => (c, cmd_run_all),
    };
    cmd(&common.resolve()?)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("quantlab: {e}");
            ExitCode::from(e.code() as u8)
        }
    }
}
