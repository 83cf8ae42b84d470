use std::sync::OnceLock;

use regex::Regex;

use crate::error::{Error, Result};

pub const INSTRUCTION: &str = "Each of the above is a story followed with a score for NS, CQ and SC. \
NS and CQ are floating point numbers and SC is an ordinal category. \
Predict NS, CQ and SC for the following story. Only give the scores.";

pub const TRANSCRIPT_PREFIX: &str = "Transcript: ";

/// One in-context example: a (translated) transcript and its scores.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptExample {
    pub transcript: String,
    pub ns: f64,
    pub cq: f64,
    pub sc: u8,
}

/// `{NS: <ns>}, {CQ: <cq>}, {SC: <sc>}` with values exactly as stored.
pub fn format_scores(ns: f64, cq: f64, sc: u8) -> String {
    format!("{{NS: {ns}}}, {{CQ: {cq}}}, {{SC: {sc}}}")
}

/// Collapses a multi-line transcript onto one prompt line.
pub fn prompt_text(transcript: &str) -> String {
    transcript.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Builds the in-context prompt: every example as a transcript line and a
/// score line, then the instruction, then the query transcript.
///
/// Blocks are separated by blank lines; examples keep their given order.
pub fn build_prompt(examples: &[PromptExample], query: &str) -> Result<String> {
    if examples.is_empty() {
        return Err(Error::InvalidArgument("prompt needs at least one example".into()));
    }
    if query.trim().is_empty() {
        return Err(Error::InvalidArgument("prompt query is empty".into()));
    }
    let mut out = String::new();
    for ex in examples {
        out.push_str(TRANSCRIPT_PREFIX);
        out.push_str(&ex.transcript);
        out.push('\n');
        out.push_str(&format_scores(ex.ns, ex.cq, ex.sc));
        out.push_str("\n\n");
    }
    out.push_str(INSTRUCTION);
    out.push_str("\n\n");
    out.push_str(TRANSCRIPT_PREFIX);
    out.push_str(query);
    out.push('\n');
    Ok(out)
}

/// Whitespace-delimited token estimate used for the prompt budget.
pub fn estimate_tokens(prompt: &str) -> usize {
    prompt.split_whitespace().count()
}

/// Builds the prompt, dropping examples from the end until it fits `max_tokens`.
///
/// Returns the prompt and the number of dropped examples.
pub fn build_prompt_within_budget(
    examples: &[PromptExample],
    query: &str,
    max_tokens: Option<usize>,
) -> Result<(String, usize)> {
    let Some(budget) = max_tokens else {
        return Ok((build_prompt(examples, query)?, 0));
    };
    let mut keep = examples.len();
    loop {
        let prompt = build_prompt(&examples[..keep], query)?;
        if estimate_tokens(&prompt) <= budget {
            return Ok((prompt, examples.len() - keep));
        }
        if keep == 1 {
            return Err(Error::InvalidArgument(format!(
                "prompt with a single example exceeds the {budget}-token budget"
            )));
        }
        keep -= 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParsedScores {
    pub ns: f64,
    pub cq: f64,
    /// Raw SC value; rounding to a category happens downstream.
    pub sc: f64,
}

fn score_pattern() -> &'static Regex {
    static PATTERN: OnceLock<Regex> = OnceLock::new();
    PATTERN.get_or_init(|| {
        Regex::new(r"(?i)\b(NS|CQ|SC)\b\s*[:=]?\s*(-?\d+(?:\.\d+)?)").expect("valid score regex")
    })
}

/// Finds the first `NS`, `CQ` and `SC` labels followed by a number, in any
/// order and case, with or without braces.
pub fn parse_scores(response: &str) -> Result<ParsedScores> {
    let mut found: [Option<f64>; 3] = [None; 3];
    for caps in score_pattern().captures_iter(response) {
        let slot = match caps[1].to_ascii_uppercase().as_str() {
            "NS" => 0,
            "CQ" => 1,
            _ => 2,
        };
        if found[slot].is_none() {
            found[slot] = caps[2].parse().ok();
        }
    }
    match found {
        [Some(ns), Some(cq), Some(sc)] => Ok(ParsedScores { ns, cq, sc }),
        _ => {
            let missing: Vec<&str> = ["NS", "CQ", "SC"]
                .iter()
                .zip(found)
                .filter(|(_, v)| v.is_none())
                .map(|(l, _)| *l)
                .collect();
            Err(Error::Parse {
                reason: format!("missing numeric {}", missing.join(", ")),
                raw: response.to_owned(),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn examples() -> Vec<PromptExample> {
        vec![
            PromptExample {
                transcript: "grass is here. the cat...".into(),
                ns: 4.0,
                cq: 7.0,
                sc: 2,
            },
            PromptExample {
                transcript: "the dog runs to the ball".into(),
                ns: 10.5,
                cq: 8.0,
                sc: 5,
            },
        ]
    }

    #[test]
    fn instruction_ends_with_only_give_the_scores() {
        assert!(INSTRUCTION.ends_with("Only give the scores."));
    }

    #[test]
    fn prompt_layout() {
        let p = build_prompt(&examples()[..1], "the cat wants to kill the...").unwrap();
        assert_eq!(
            p,
            format!(
                "Transcript: grass is here. the cat...\n{{NS: 4}}, {{CQ: 7}}, {{SC: 2}}\n\n{INSTRUCTION}\n\nTranscript: the cat wants to kill the...\n"
            )
        );
        assert_eq!(p, build_prompt(&examples()[..1], "the cat wants to kill the...").unwrap());
    }

    #[test]
    fn prompt_preconditions() {
        assert!(build_prompt(&[], "q").is_err());
        assert!(build_prompt(&examples(), "  ").is_err());
    }

    #[test]
    fn budget_drops_examples_from_the_end() {
        let full = build_prompt(&examples(), "q").unwrap();
        let one = build_prompt(&examples()[..1], "q").unwrap();
        let (p, dropped) = build_prompt_within_budget(&examples(), "q", Some(estimate_tokens(&one))).unwrap();
        assert_eq!((p, dropped), (one, 1));
        let (p, dropped) = build_prompt_within_budget(&examples(), "q", None).unwrap();
        assert_eq!((p, dropped), (full, 0));
        assert!(build_prompt_within_budget(&examples(), "q", Some(3)).is_err());
    }

    #[test]
    fn parse_cases() {
        assert_eq!(
            parse_scores("{NS: 4}, {CQ: 7}, {SC: 2}").unwrap(),
            ParsedScores { ns: 4.0, cq: 7.0, sc: 2.0 }
        );
        assert_eq!(
            parse_scores("SC: 3\nCQ: 5.5\nNS: 10").unwrap(),
            ParsedScores { ns: 10.0, cq: 5.5, sc: 3.0 }
        );
        assert_eq!(
            parse_scores("ns=1 cq 2 sc: 3, NS: 9").unwrap(),
            ParsedScores { ns: 1.0, cq: 2.0, sc: 3.0 }
        );
        for bad in ["NS is about average", "{NS: 4}, {CQ: 7}", "", "NS: four, CQ: 7, SC: 2"] {
            match parse_scores(bad) {
                Err(Error::Parse { raw, .. }) => assert_eq!(raw, bad),
                other => panic!("{bad:?} gave {other:?}"),
            }
        }
    }

    #[test]
    fn prompt_text_flattens_lines() {
        assert_eq!(prompt_text("die kat\n spring  oor\n"), "die kat spring oor");
    }
}
