use std::time::Instant;

use amfusion::experiment::{run_experiment, ExperimentConfig};

fn main() {
    let mut config = ExperimentConfig::default();
    if let Some(seed) = std::env::args().nth(1) {
        config.synth.seed = seed.parse().expect("seed is an integer");
    }
    let start = Instant::now();
    let report = run_experiment(&config).expect("experiment runs");
    print!("{}", report.summary());
    eprintln!("elapsed {:.1?}", start.elapsed());
}
