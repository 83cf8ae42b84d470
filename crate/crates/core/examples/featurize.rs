//! Builds the feature matrix of a corpus and prints the fixed features of one child.

use narrascore::corpus::{synthesize_corpus, Split, SynthSpec};
use narrascore::features::{FeatureMatrix, FeatureSchema, FixedFeature};

fn main() -> narrascore::Result<()> {
    let corpus = synthesize_corpus(&SynthSpec::default(), 3)?.corpus;
    let schema = FeatureSchema::from_corpus(&corpus);
    let train = FeatureMatrix::build(corpus.split(Split::Train), &schema, corpus.variant())?;
    println!("{} rows × {} features", train.nrows(), schema.len());
    let row = train.values.row(0);
    for (name, value) in schema.names().iter().zip(row).take(FixedFeature::ALL.len()) {
        println!("{name:>24} {value:.3}");
    }
    Ok(())
}
