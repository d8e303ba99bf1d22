//! Prompt templates. The texts live under `prompts/<version>/` and are
//! compiled in; `{{name}}` placeholders are filled in a single pass so values
//! containing braces are never re-expanded.

pub const PROMPT_VERSION: &str = "v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Template {
    Extractor,
    Verifier,
    Decomposer,
    Explainer,
    StrictLegalist,
    OpenWebPragmatist,
    CausalSkeptic,
    ConspiracyDetector,
}

impl Template {
    fn source(self) -> &'static str {
        match self {
            Template::Extractor => include_str!("../prompts/v1/extractor.txt"),
            Template::Verifier => include_str!("../prompts/v1/verifier.txt"),
            Template::Decomposer => include_str!("../prompts/v1/decomposer.txt"),
            Template::Explainer => include_str!("../prompts/v1/explainer.txt"),
            Template::StrictLegalist => include_str!("../prompts/v1/persona_strict_legalist.txt"),
            Template::OpenWebPragmatist => include_str!("../prompts/v1/persona_open_web_pragmatist.txt"),
            Template::CausalSkeptic => include_str!("../prompts/v1/persona_causal_skeptic.txt"),
            Template::ConspiracyDetector => include_str!("../prompts/v1/persona_conspiracy_detector.txt"),
        }
    }

    /// Returns `(system, user)` with placeholders substituted. Unknown
    /// placeholders are left verbatim.
    pub fn render(self, vars: &[(&str, &str)]) -> (String, String) {
        let (system, user) = split_sections(self.source());
        (fill(system, vars), fill(user, vars))
    }
}

fn split_sections(source: &str) -> (&str, &str) {
    let body = source.strip_prefix("[system]\n").unwrap_or(source);
    match body.split_once("\n[user]\n") {
        Some((system, user)) => (system.trim_end(), user.trim_end()),
        None => ("", body.trim_end()),
    }
}

fn fill(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find("{{") {
        out.push_str(&rest[..open]);
        let after = &rest[open + 2..];
        match after.find("}}") {
            Some(close) => {
                let name = &after[..close];
                match vars.iter().find(|(k, _)| *k == name) {
                    Some((_, value)) => out.push_str(value),
                    None => {
                        out.push_str("{{");
                        out.push_str(name);
                        out.push_str("}}");
                    }
                }
                rest = &after[close + 2..];
            }
            None => {
                out.push_str(&rest[open..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

/// The claim-verb lexicon shipped with this prompt version.
pub fn claim_verb_lexicon() -> Vec<String> {
    include_str!("../data/claim_verbs_v1.txt")
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_template_has_both_sections() {
        for t in [
            Template::Extractor,
            Template::Verifier,
            Template::Decomposer,
            Template::Explainer,
            Template::StrictLegalist,
            Template::OpenWebPragmatist,
            Template::CausalSkeptic,
            Template::ConspiracyDetector,
        ] {
            let (system, user) = t.render(&[]);
            assert!(!system.is_empty() && !user.is_empty(), "{t:?}");
            assert!(!system.contains("[user]"));
        }
    }

    #[test]
    fn substitution_is_single_pass() {
        let (_, user) = Template::Verifier.render(&[
            ("claim", "uses {{passage}} literally"),
            ("passage", "P"),
            ("passage_id", "d#0"),
        ]);
        assert!(user.contains("CLAIM: uses {{passage}} literally"));
        assert!(user.contains("PASSAGE [d#0]:\nP"));
    }

    #[test]
    fn lexicon_has_canonical_verbs() {
        let lex = claim_verb_lexicon();
        for v in ["say", "claim", "report", "show", "estimate", "predict"] {
            assert!(lex.iter().any(|l| l == v));
        }
        assert_eq!(lex.len(), 11);
    }
}
