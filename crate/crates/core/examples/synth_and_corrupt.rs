//! Generates a synthetic corpus and an ASR-like corrupted copy of it.

use narrascore::corpus::{corrupt_records, measure_cer, synthesize_corpus, SynthSpec};

fn main() -> narrascore::Result<()> {
    let synth = synthesize_corpus(&SynthSpec::default(), 42)?;
    let records = synth.corpus.records();
    println!("{} children, vocabulary {}", records.len(), synth.corpus.vocabulary().len());
    println!("planted NS terms: {:?}", synth.ns_terms);

    let noisy = corrupt_records(records, 0.28, 42)?;
    let oracle = records[0].transcript_oracle.as_deref().unwrap_or_default();
    let asr = noisy[0].transcript_asr.as_deref().unwrap_or_default();
    println!("oracle: {}", oracle.lines().next().unwrap_or_default());
    println!("asr:    {}", asr.lines().next().unwrap_or_default());
    println!("CER of first child: {:.3}", measure_cer(oracle, asr)?);
    Ok(())
}
