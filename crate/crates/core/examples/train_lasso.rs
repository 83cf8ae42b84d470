//! Tunes and fits the NS lasso on a planted corpus, then lists the surviving weights.

use narrascore::corpus::{synthesize_corpus, SynthSpec, Task};
use narrascore::linear_models::{inspect_weights, train_for_task};

fn main() -> narrascore::Result<()> {
    let synth = synthesize_corpus(&SynthSpec::default(), 4)?;
    let artifact = train_for_task(&synth.corpus, Task::Ns, None)?;
    println!("selected α = {:.4} (α_max {:.4})", artifact.tuning.best_alpha, artifact.tuning.alpha_max);
    let report = inspect_weights(&artifact.model, 10);
    println!("{} nonzero, {} zeroed", report.nonzero, report.zeroed);
    for (name, w) in &report.top {
        println!("{name:>20} {w:+.4}");
    }
    println!("planted: {:?}", synth.planted_ns_features());
    Ok(())
}
