use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod logging;

/// Raw-product simulation, restoration, pansharpening, tiling and
/// detection evaluation for PAN/XS satellite granules.
#[derive(Debug, Parser)]
#[command(name = "rawsat", version, about)]
struct Cli {
    /// Global seed; overrides every seed in configs.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: available cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic granule container.
    Synth(commands::SynthArgs),
    /// Fit (alpha, beta) of the noise model from two SNR reference points.
    NoiseFit(commands::NoiseFitArgs),
    /// Degrade a granule into a raw-like product.
    Degrade(commands::DegradeArgs),
    /// Restore the PAN band of a degraded granule.
    Restore(commands::RestoreArgs),
    /// Brovey pansharpening.
    Pansharpen(commands::PansharpenArgs),
    /// Cut granules into patches and export a YOLO dataset.
    Tile(commands::TileArgs),
    /// Evaluate JSON-lines predictions against a dataset manifest.
    Evaluate(commands::EvaluateArgs),
    /// Render PNG previews of a granule's bands.
    Preview(commands::PreviewArgs),
    /// Run the full pipeline from a TOML config.
    Run(commands::RunArgs),
}

/// Exit codes: 0 ok, 2 config error, 3 data error, 4 internal.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<rawsat_core::Error>() {
        Some(e) if e.is_config() => 2,
        Some(_) => 3,
        None => 4,
    }
}

fn main() -> ExitCode {
    logging::init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(4);
        }
    }
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a, cli.seed),
        Command::NoiseFit(a) => commands::noise_fit(a),
        Command::Degrade(a) => commands::degrade(a, cli.seed),
        Command::Restore(a) => commands::restore(a),
        Command::Pansharpen(a) => commands::pansharpen(a),
        Command::Tile(a) => commands::tile(a, cli.seed),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Preview(a) => commands::preview(a),
        Command::Run(a) => commands::run(a, cli.seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
