//! Runs one experiment cell from TOML and prints where its artifacts went.

use narrascore::harness::{run_experiment, RunConfig};

const CONFIG: &str = r#"
name = "linear-oracle"
variant = "oracle"
scorer = "linear"
seed = 1
output_dir = "unused"

[synth]
train = 80
dev = 20
test = 20
"#;

fn main() -> narrascore::Result<()> {
    let mut config = RunConfig::from_toml(CONFIG, &[])?;
    config.output_dir = std::env::temp_dir().join("narrascore-examples/linear-oracle");
    let manifest = run_experiment(&config)?;
    for report in &manifest.reports {
        println!("{:?}: {:.3}", report.task, report.headline());
    }
    for artifact in &manifest.artifacts {
        println!("{} {}", artifact.sha256, config.output_dir.join(&artifact.path).display());
    }
    Ok(())
}
