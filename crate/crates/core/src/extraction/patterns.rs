//! Claim-verb pattern matching.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerbMatch {
    /// Surface form as written.
    pub verb: String,
    pub lemma: String,
    /// Whitespace-token index within the sentence.
    pub token_index: usize,
}

const IRREGULAR: &[(&str, &str)] = &[
    ("said", "say"),
    ("says", "say"),
    ("found", "find"),
    ("shown", "show"),
    ("showed", "show"),
    ("denied", "deny"),
    ("denies", "deny"),
];

/// Tokens that cannot on their own make a subject.
const NON_NOMINAL: &[&str] = &[
    "a", "an", "the", "this", "that", "these", "those", "his", "her", "its", "their", "our", "my",
    "your", "to", "of", "in", "on", "at", "for", "with", "by", "from", "into", "about", "as",
    "and", "or", "but", "not", "no", "nor", "so", "if", "then", "than", "very", "also", "just",
    "only", "even", "still", "never", "always", "will", "would", "could", "should", "might", "may",
    "must", "can", "shall", "did", "does", "do", "has", "have", "had", "is", "was", "were", "are",
    "be", "been", "being", "what", "who", "whom", "which", "why", "how", "when", "where", "please",
];

fn core(token: &str) -> &str {
    token.trim_matches(|c: char| !c.is_alphanumeric())
}

/// Candidate base forms of an inflected verb, most specific first.
pub fn lemma_candidates(word: &str) -> Vec<String> {
    let w = word.to_lowercase();
    let mut out = Vec::new();
    if let Some((_, base)) = IRREGULAR.iter().find(|(form, _)| *form == w) {
        out.push(base.to_string());
    }
    out.push(w.clone());
    let mut strip = |suffix: &str, add: &str| {
        if let Some(stem) = w.strip_suffix(suffix) {
            if stem.len() >= 2 {
                out.push(format!("{stem}{add}"));
            }
        }
    };
    strip("ies", "y");
    strip("ied", "y");
    strip("ing", "");
    strip("ing", "e");
    strip("es", "");
    strip("ed", "");
    strip("s", "");
    strip("d", "");
    out
}

/// First token whose lemma is in `lexicon` and which has a subject span
/// containing a noun-like token before it and a nonempty span after it.
pub fn find_claim_verb(sentence: &str, lexicon: &[String]) -> Option<VerbMatch> {
    let tokens: Vec<&str> = sentence.split_whitespace().collect();
    for (i, raw) in tokens.iter().enumerate() {
        let word = core(raw);
        if word.is_empty() {
            continue;
        }
        // A capitalized word past the first is more likely a name ("United States").
        if i > 0 && word.chars().next().is_some_and(char::is_uppercase) {
            continue;
        }
        let Some(lemma) = lemma_candidates(word).into_iter().find(|c| lexicon.iter().any(|l| l == c)) else {
            continue;
        };
        let subject = tokens[..i].iter().map(|t| core(t).to_lowercase()).any(|t| {
            t.chars().any(char::is_alphabetic) && !NON_NOMINAL.contains(&t.as_str())
        });
        let object = tokens[i + 1..].iter().any(|t| !core(t).is_empty());
        if subject && object {
            return Some(VerbMatch { verb: word.to_string(), lemma, token_index: i });
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompts::claim_verb_lexicon;

    fn fire(s: &str) -> Option<String> {
        find_claim_verb(s, &claim_verb_lexicon()).map(|m| m.lemma)
    }

    #[test]
    fn examples() {
        assert_eq!(fire("The agency reported a surplus."), Some("report".into()));
        assert_eq!(fire("Run!"), None);
        assert_eq!(fire("Estimates say nothing new here."), Some("say".into()));
    }

    #[test]
    fn inflections() {
        assert_eq!(fire("Officials denied the report."), Some("deny".into()));
        assert_eq!(fire("A study found higher wages."), Some("find".into()));
        assert_eq!(fire("The ministry is estimating losses."), Some("estimate".into()));
        assert_eq!(fire("She stated her case."), Some("state".into()));
        assert_eq!(fire("The data shows growth."), Some("show".into()));
    }

    #[test]
    fn needs_subject_object_and_lowercase_verb() {
        assert_eq!(fire("The claims were false."), None);
        assert_eq!(fire("They said."), None);
        assert_eq!(fire("The United States imposed tariffs."), None);
        assert_eq!(fire("Reports suggest otherwise."), None);
    }
}
