//! Character error rate and a seeded ASR-style noise injector.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ChildRecord;
use crate::error::{Error, Result};
use crate::util::derive_seed;

/// Unit-cost edit distance over Unicode scalar values.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Edit distance divided by the reference length.
///
/// Normalizing by the reference only makes this asymmetric:
/// `measure_cer(a, b)` and `measure_cer(b, a)` differ when lengths differ.
pub fn measure_cer(reference: &str, hypothesis: &str) -> Result<f64> {
    let len = reference.chars().count();
    if len == 0 {
        return Err(Error::InvalidArgument("CER reference is empty".into()));
    }
    Ok(levenshtein(reference, hypothesis) as f64 / len as f64)
}

#[derive(Clone, Copy)]
enum Edit {
    Substitute,
    Insert,
    Delete,
}

/// Applies random character edits so the expected CER is about `target_cer`.
///
/// Each input character is edited with probability `target_cer`; the edit is
/// a substitution, insertion or deletion with equal probability. Replacement
/// and inserted characters come from the input's own character inventory.
pub fn corrupt_transcript(text: &str, target_cer: f64, seed: u64) -> Result<String> {
    if !(target_cer > 0.0 && target_cer < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "target CER {target_cer} is outside (0, 1)"
        )));
    }
    if text.is_empty() {
        return Err(Error::InvalidArgument("cannot corrupt empty text".into()));
    }
    let inventory: Vec<char> = text.chars().collect::<BTreeSet<_>>().into_iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::with_capacity(text.len() + text.len() / 4);
    for c in text.chars() {
        if !rng.random_bool(target_cer) {
            out.push(c);
            continue;
        }
        let edit = match rng.random_range(0..3) {
            0 => Edit::Substitute,
            1 => Edit::Insert,
            _ => Edit::Delete,
        };
        match edit {
            Edit::Substitute if inventory.len() > 1 => {
                // Draw from the inventory minus `c` so the edit is real.
                let pos = inventory.binary_search(&c).expect("c is in the inventory");
                let mut k = rng.random_range(0..inventory.len() - 1);
                if k >= pos {
                    k += 1;
                }
                out.push(inventory[k]);
            }
            Edit::Substitute | Edit::Delete => {}
            Edit::Insert => {
                out.push(inventory[rng.random_range(0..inventory.len())]);
                out.push(c);
            }
        }
    }
    Ok(out)
}

/// Replaces each record's ASR transcript with a corrupted copy of its oracle
/// transcript, line by line so utterance boundaries survive.
///
/// Each record gets a sub-seed derived from `seed` and its child id, so the
/// result does not depend on record order.
pub fn corrupt_records(records: &[ChildRecord], target_cer: f64, seed: u64) -> Result<Vec<ChildRecord>> {
    records
        .iter()
        .map(|r| {
            let oracle = r.transcript_oracle.as_deref().ok_or_else(|| {
                Error::Corpus(format!("child {} has no oracle transcript to corrupt", r.child_id))
            })?;
            let child_seed = derive_seed(seed, &r.child_id);
            let lines = oracle
                .split('\n')
                .enumerate()
                .map(|(i, line)| {
                    if line.is_empty() {
                        Ok(String::new())
                    } else {
                        corrupt_transcript(line, target_cer, derive_seed(child_seed, &i.to_string()))
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            let mut out = r.clone();
            out.transcript_asr = Some(lines.join("\n"));
            Ok(out)
        })
        .collect()
}
