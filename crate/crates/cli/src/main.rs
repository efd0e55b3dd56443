//! `stylesplat`: embed features into a splat scene, train a decoder,
//! stylize, render, measure and serve.
//!
//! Exit codes: 0 on success, 2 for usage or input-contract errors, 3 for
//! runtime failures such as I/O.

mod commands;
mod error;
mod util;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::error::usage;

#[derive(Parser)]
#[command(name = "stylesplat", version, about = "Zero-shot style transfer for Gaussian splat scenes")]
struct Cli {
    /// Worker threads for rendering and decoding (default: all cores).
    #[arg(long, global = true, env = "STYLESPLAT_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a procedural scene with views, feature maps and style images.
    Toy(commands::toy::ToyArgs),
    /// Distill feature maps into per-Gaussian features.
    Embed(commands::embed::EmbedArgs),
    /// Train a neighborhood decoder on style images.
    Train(commands::train::TrainArgs),
    /// Transfer one style, or a blend of several, onto a scene.
    Stylize(commands::stylize::StylizeArgs),
    /// Render frames of a scene channel.
    Render(commands::render::RenderArgs),
    /// Cross-view consistency and timing reports.
    Metrics(commands::metrics::MetricsArgs),
    /// Serve the HTTP and WebSocket API over a scene directory.
    Serve(commands::serve::ServeArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).format_timestamp(None).init();
    let cli = Cli::parse();
    let result = (|| {
        if let Some(n) = cli.threads {
            if n == 0 {
                return Err(usage("--threads must be at least 1"));
            }
            stylesplat::par::init_threads(n);
        }
        match cli.command {
            Command::Toy(a) => commands::toy::run(a),
            Command::Embed(a) => commands::embed::run(a),
            Command::Train(a) => commands::train::run(a),
            Command::Stylize(a) => commands::stylize::run(a),
            Command::Render(a) => commands::render::run(a),
            Command::Metrics(a) => commands::metrics::run(a),
            Command::Serve(a) => commands::serve::run(a),
        }
    })();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
