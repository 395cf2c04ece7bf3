//! Driving an experiment from a JSON config, as `dpl run --config` does.

use diamond_polymer::experiment::{run, ExperimentConfig};

fn main() -> diamond_polymer::Result<()> {
    let config = ExperimentConfig::from_json(r#"{ "command": "correlation-check", "b": 3, "n": 2, "r": -1.0 }"#)?;
    let (record, outcome) = run(&config)?;
    for c in &record.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    println!("{} table rows", outcome.table.rows().len());
    println!("{}", record.to_json()?);
    Ok(())
}
