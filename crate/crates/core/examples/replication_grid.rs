//! Runs the {linear, LLM mock} × {oracle, corrupted ASR} grid and prints both tables.

use narrascore::corpus::SynthSpec;
use narrascore::harness::{replication_grid, run_grid};
use narrascore::llm_scoring::BackendConfig;

fn main() -> narrascore::Result<()> {
    let configs = replication_grid(
        &SynthSpec::default(),
        1,
        0.28,
        &BackendConfig::default(),
        &std::env::temp_dir().join("narrascore-examples/grid"),
    );
    let outcome = run_grid(&configs, None)?;
    println!("{}", outcome.table.render_headline());
    println!("{}", outcome.table.render_errors());
    Ok(())
}
