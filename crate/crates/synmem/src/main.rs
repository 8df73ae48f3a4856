use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use synmem::{run_to_dir, ExperimentKind, RunOptions};

#[derive(Parser)]
#[command(name = "synmem", version, about = "Energy experiments for synaptic memory encodings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Forward/backward energy of a fully connected layer per scheme and weight width.
    FcSweep(Common),
    /// Same for a convolution layer (PB-CSR, functional, crossbar).
    ConvSweep(Common),
    /// Cheapest scheme over a density x leakage-fraction grid.
    DensityLeakGrid(Common),
    /// Train the spiking network at several weight widths and price its memory traffic.
    TrainFrontier(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Use the 700-400-250 network for train-frontier.
    #[arg(long)]
    full_scale: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, c) = match cli.command {
        Command::FcSweep(c) => (ExperimentKind::FcSweep, c),
        Command::ConvSweep(c) => (ExperimentKind::ConvSweep, c),
        Command::DensityLeakGrid(c) => (ExperimentKind::DensityLeakGrid, c),
        Command::TrainFrontier(c) => (ExperimentKind::TrainFrontier, c),
    };
    if let Err(e) = std::fs::create_dir_all(&c.out) {
        eprintln!("error: {}: {e}", c.out.display());
        return ExitCode::from(1);
    }
    let opts = RunOptions { seed: c.seed, full_scale: c.full_scale };
    match run_to_dir(kind, &c.config, &c.out, &opts) {
        Ok(out) if out.all_diverged() => {
            eprintln!("error: every training cell diverged");
            ExitCode::from(4)
        }
        Ok(out) => {
            for (name, t) in &out.tables {
                eprintln!("wrote {} ({} rows)", c.out.join(name).display(), t.rows.len());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
