//! Writes the synthetic cross-labeling corpus and a matching config file.

use std::path::PathBuf;

use clap::Parser;
use xdata::synth::{generate, write_corpus, SyntheticSpec};

#[derive(Parser)]
#[command(name = "xdata-synth", about = "Generate a synthetic cross-labeling corpus")]
struct Args {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2500)]
    instances: usize,
    #[arg(long, default_value_t = 500)]
    test_instances: usize,
    #[arg(long, default_value_t = 10)]
    features: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Extra lines appended to config.txt, e.g. "cdlc.k = 100".
    #[arg(long = "config-line")]
    config_lines: Vec<String>,
}

fn main() {
    let args = Args::parse();
    let spec = SyntheticSpec {
        cross_instances: args.instances,
        test_instances: args.test_instances,
        feature_dim: args.features,
        seed: args.seed,
        ..Default::default()
    };
    let extra: String = args.config_lines.iter().map(|l| format!("{l}\n")).collect();
    if let Err(e) = write_corpus(&args.out, &generate(&spec), &extra) {
        eprintln!("xdata-synth: {e}");
        std::process::exit(3);
    }
}
