use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mcni::cli::config::ToyInputPlacement;
use mcni::cli::{self, BenchTimeConfig, BenchmarkConfig, GpCheckConfig, RiskCovArgs, SweepConfig, ToyConfig};
use mcni::metrics::RiskKind;
use mcni::Result;

#[derive(Parser)]
#[command(name = "mcni", version, about = "Monte Carlo noise injection experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML file merged over the command's defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct Overrides {
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Number of MC passes.
    #[arg(long)]
    passes: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Rmse,
    ErrorRate,
}

#[derive(Subcommand)]
enum Command {
    /// 1-D toy regression with interval metrics.
    Toy {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        over: Overrides,
        /// Draw the inputs uniformly at random instead of on a grid.
        #[arg(long)]
        random_x: bool,
    },
    /// Grid search and test metrics on a regression CSV.
    Benchmark {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        over: Overrides,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Risk-coverage curve from prediction and uncertainty CSVs.
    Riskcov {
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        uncertainty: Option<PathBuf>,
        #[arg(long, default_value = "uncertainty")]
        column: String,
        #[arg(long, value_enum, default_value = "rmse")]
        kind: Kind,
        /// Comma-separated coverage levels in (0, 1].
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
    },
    /// Predictive entropy under increasing input corruption.
    NoiseSweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        over: Overrides,
        /// Trained classifier to load instead of training one.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Wall-clock cost of MC prediction.
    BenchTime {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        passes: Option<Vec<usize>>,
    },
    /// Wide-network prior covariance against the limiting kernel.
    Gpcheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
}

fn run(cmd: Command) -> Result<()> {
    let manifest = match cmd {
        Command::Toy { common, over, random_x } => {
            let mut c: ToyConfig = cli::load_config(common.config.as_deref())?;
            if random_x {
                c.inputs = ToyInputPlacement::Random;
            }
            c.seeds = over.seeds.unwrap_or(c.seeds);
            c.passes = over.passes.unwrap_or(c.passes);
            cli::cmd_toy(&c, &common.out)?
        }
        Command::Benchmark { common, over, data } => {
            let mut c: BenchmarkConfig = cli::load_config(common.config.as_deref())?;
            c.seeds = over.seeds.unwrap_or(c.seeds);
            c.passes = over.passes.unwrap_or(c.passes);
            c.data.path = data.or(c.data.path);
            cli::cmd_benchmark(&c, &common.out)?
        }
        Command::Riskcov { out, predictions, uncertainty, column, kind, grid } => {
            let kind = match kind {
                Kind::Rmse => RiskKind::Rmse,
                Kind::ErrorRate => RiskKind::ErrorRate,
            };
            let args = RiskCovArgs { predictions, uncertainty, column, kind, grid };
            cli::cmd_riskcov(&args, &out)?
        }
        Command::NoiseSweep { common, over, model } => {
            let mut c: SweepConfig = cli::load_config(common.config.as_deref())?;
            c.seeds = over.seeds.unwrap_or(c.seeds);
            c.passes = over.passes.unwrap_or(c.passes);
            c.model_path = model.or(c.model_path);
            cli::cmd_noise_sweep(&c, &common.out)?
        }
        Command::BenchTime { common, passes } => {
            let mut c: BenchTimeConfig = cli::load_config(common.config.as_deref())?;
            c.passes = passes.unwrap_or(c.passes);
            cli::cmd_bench_time(&c, &common.out)?
        }
        Command::Gpcheck { common, seeds } => {
            let mut c: GpCheckConfig = cli::load_config(common.config.as_deref())?;
            c.seeds = seeds.unwrap_or(c.seeds);
            cli::cmd_gpcheck(&c, &common.out)?
        }
    };
    log::info!("{} done, input hash {}", manifest.command, manifest.input_hash);
    let mut stdout = std::io::stdout().lock();
    for a in &manifest.artifacts {
        // a closed pipe is not an error for the run itself
        let _ = writeln!(stdout, "{}", a.path);
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
