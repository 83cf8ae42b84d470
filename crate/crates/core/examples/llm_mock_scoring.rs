//! Scores test children with the offline nearest-neighbour mock and shows one prompt.

use narrascore::corpus::{synthesize_corpus, Split, SynthSpec};
use narrascore::llm_scoring::{BackendConfig, LlmScorer};

fn main() -> narrascore::Result<()> {
    let corpus = synthesize_corpus(
        &SynthSpec {
            train: 3,
            ..SynthSpec::default()
        },
        5,
    )?
    .corpus;
    let scorer = LlmScorer::new(&corpus, corpus.variant(), &BackendConfig::default())?;
    let test: Vec<_> = corpus.split(Split::Test).take(5).collect();
    let (prompt, _) = scorer.prompt_for(test[0])?;
    println!("{prompt}");
    for (record, score) in test.iter().zip(scorer.score_all(&test)?) {
        println!("{}: {:?} -> sc {} ri {}", record.child_id, score.raw_response, score.sc, score.ri);
    }
    println!("{:?}", scorer.stats());
    Ok(())
}
