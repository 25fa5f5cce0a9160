//! Builds an experiment config in code, prints its hash and runs the delay
//! sweep experiment, which writes CSV, SVG and a markdown summary.

use synclab::harness_cli::{run_experiment, ExperimentConfig, Lab};

fn main() -> synclab::Result<()> {
    let mut cfg = ExperimentConfig {
        seed: 1,
        out_dir: std::env::temp_dir().join("synclab-experiment"),
        ..ExperimentConfig::default()
    };
    cfg.sweep_dataset.n_clips = 16;
    println!("config hash {}", cfg.hash()?);
    let mut lab = Lab::new(cfg)?;
    let outcome = run_experiment(&mut lab, "E1_delay_sweep")?;
    for c in &outcome.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    for a in &outcome.artifacts {
        println!("wrote {}", a.display());
    }
    Ok(())
}
