//! `tubekit` — build, predict and evaluate spatiotemporal action tubes.

mod args;
mod commands;

use anyhow::{Context, Result};
use clap::Parser;

use args::{Cli, Command};
use tubekit::config::RunConfig;

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let path = cli
        .config
        .clone()
        .or_else(|| std::env::var_os("TUBEKIT_CONFIG").map(Into::into));
    match path {
        Some(p) => RunConfig::load(&p).with_context(|| format!("loading {}", p.display())),
        None => Ok(RunConfig::default()),
    }
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    let cfg = load_config(&cli)?;

    // bench stays single-threaded by design; everything else fans out
    // per video with an order-preserving merge
    if !matches!(cli.command, Command::Bench(_)) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .context("initialising thread pool")?;
    }

    match &cli.command {
        Command::Simulate(a) => commands::simulate(&cfg, a),
        Command::Fuse(a) => commands::fuse(&cfg, a),
        Command::BuildOffline(a) => commands::build_offline(&cfg, a),
        Command::BuildOnline(a) => commands::build_online(&cfg, a),
        Command::LinkMicro(a) => commands::link_micro(&cfg, a),
        Command::EstimateTrans(a) => commands::estimate_trans(a),
        Command::ComposeTrans(a) => commands::compose_trans(a),
        Command::PredictFuture(a) => commands::predict_future(&cfg, a),
        Command::Eval(a) => commands::eval(&cfg, a),
        Command::Bench(a) => commands::bench(a),
    }
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
