use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ddlink_cli::{
    emit_report, load_config, run_ber, run_optimizer, run_sumrate_cfo, run_sumrate_oma, CliError,
};

#[derive(Parser)]
#[command(
    name = "ddlink",
    version,
    about = "Multiuser OTFS/OFDM link simulations for LEO downlinks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Scenario TOML; defaults reproduce the reference LEO scenario.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory for CSV and provenance files.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Channel profile: ntn-tdl-b, ntn-tdl-d, or a profile file.
    #[arg(long, global = true)]
    profile: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Sum rate of the four OMA schemes versus SNR.
    SumrateOma,
    /// OTFS and OFDM sum rate versus CFO.
    SumrateCfo,
    /// BER of OTFS-LMMSE, genie OFDM and pilot-based OFDM.
    Ber,
    /// Penalty-CCP allocation against the OMA baselines.
    Optimize {
        /// Use the full frame and user count instead of the reduced grid.
        #[arg(long)]
        full_grid: bool,
    },
}

fn run(cli: Cli) -> Result<Vec<PathBuf>, CliError> {
    let mut cfg = load_config(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(profile) = cli.profile {
        cfg.profile = profile;
    }
    let reports = match cli.command {
        Command::SumrateOma => vec![run_sumrate_oma(&cfg)?],
        Command::SumrateCfo => vec![run_sumrate_cfo(&cfg)?],
        Command::Ber => vec![run_ber(&cfg)?],
        Command::Optimize { full_grid } => {
            cfg.optimizer.full_grid |= full_grid;
            let (report, trace) = run_optimizer(&cfg)?;
            vec![report, trace]
        }
    };
    reports.iter().map(|r| emit_report(r, &cli.out)).collect()
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("ddlink: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
