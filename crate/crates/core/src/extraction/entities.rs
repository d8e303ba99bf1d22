//! Surface-pattern entity detection.
//!
//! Patterns run in a fixed priority order (money, percentages, dates,
//! number+unit, capitalized spans); a later match that overlaps an earlier
//! one is dropped.

use regex::Regex;
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    PersonOrgPlace,
    Date,
    Money,
    Quantity,
    Event,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub surface: String,
    pub kind: EntityKind,
}

const MONTHS: &str = r"(?:Jan(?:uary)?|Feb(?:ruary)?|Mar(?:ch)?|Apr(?:il)?|May|June?|July?|Aug(?:ust)?|Sept?(?:ember)?|Oct(?:ober)?|Nov(?:ember)?|Dec(?:ember)?)";

const UNITS: &str = "million|billion|trillion|thousand|hundred|people|persons|residents|citizens|jobs|workers|votes|voters|cases|deaths|students|children|members|troops|homes|households|immigrants|patients|km|kilometers|kilometres|miles|meters|metres|feet|kg|kilograms|pounds|tons|tonnes|barrels|gallons|acres|hectares|years|months|weeks|days|hours|minutes|degrees|points|times|seats|states|countries";

const EVENT_WORDS: &[&str] = &[
    "War", "Election", "Elections", "Olympics", "Games", "Summit", "Crisis", "Act", "Cup",
    "Conference", "Revolution", "Pandemic", "Hurricane", "Championship", "Festival", "Treaty",
    "Recession", "Depression", "Convention", "Referendum", "Debate", "Attack", "Attacks",
];

/// Words that may open a capitalized run without being part of a name.
const LEADING_STOPWORDS: &[&str] = &[
    "The", "A", "An", "This", "That", "These", "Those", "It", "He", "She", "They", "We", "I",
    "You", "In", "On", "At", "By", "For", "From", "With", "But", "And", "Or", "If", "When",
    "While", "After", "Before", "Since", "During", "Last", "Next", "Its", "His", "Her", "Their",
    "Our", "My", "Your", "Yesterday", "Today", "Tomorrow", "There", "Here", "According", "As",
    "So", "Then", "However", "Meanwhile", "Also", "Some", "Many", "Most", "All", "Every",
];

/// Lowercase words allowed inside a name ("Bank of England").
const CONNECTORS: &[&str] = &["of", "the", "and", "for", "de", "du", "la", "van", "von", "al", "bin"];

struct Patterns {
    ordered: Vec<(Regex, EntityKind)>,
}

fn patterns() -> &'static Patterns {
    static P: OnceLock<Patterns> = OnceLock::new();
    P.get_or_init(|| {
        let num = r"\d[\d,]*(?:\.\d+)?";
        let scale = r"(?:\s?(?:million|billion|trillion|thousand|bn|m|k)\b)?";
        let money = format!(
            r"(?:[$€£¥]\s?{num}{scale})|(?:\b{num}\s?(?:(?:million|billion|trillion)\s)?(?:dollars|euros|pounds sterling|yen|USD|EUR|GBP)\b)"
        );
        let percent = format!(r"\b{num}\s?(?:%|(?:percent|per cent|percentage points?)\b)");
        let date = format!(
            r"\b\d{{4}}-\d{{2}}-\d{{2}}\b|\b\d{{1,2}}/\d{{1,2}}/\d{{2,4}}\b|\b\d{{1,2}}\s+{MONTHS}\.?(?:,?\s+\d{{4}})?\b|\b{MONTHS}\.?\s+\d{{1,2}}(?:st|nd|rd|th)?(?:,?\s+\d{{4}})?\b|\b{MONTHS}\.?,?\s+\d{{4}}\b|\b(?:1[5-9]\d{{2}}|20\d{{2}})s?\b"
        );
        let quantity = format!(r"\b{num}\s?(?:{UNITS})\b");
        Patterns {
            ordered: vec![
                (Regex::new(&money).unwrap(), EntityKind::Money),
                (Regex::new(&percent).unwrap(), EntityKind::Quantity),
                (Regex::new(&date).unwrap(), EntityKind::Date),
                (Regex::new(&quantity).unwrap(), EntityKind::Quantity),
            ],
        }
    })
}

fn overlaps(taken: &[(usize, usize, Entity)], start: usize, end: usize) -> bool {
    taken.iter().any(|(s, e, _)| start < *e && *s < end)
}

fn trim_token(raw: &str) -> (usize, &str) {
    let is_edge = |c: char| !(c.is_alphanumeric() || c == '&');
    let trimmed_start = raw.trim_start_matches(is_edge);
    let lead = raw.len() - trimmed_start.len();
    let mut core = trimmed_start.trim_end_matches(is_edge);
    if let Some(stripped) = core.strip_suffix("'s").or_else(|| core.strip_suffix("\u{2019}s")) {
        core = stripped;
    }
    (lead, core)
}

fn is_capitalized(word: &str) -> bool {
    word.chars().next().is_some_and(|c| c.is_uppercase())
}

/// Capitalized runs of tokens, as byte spans of the sentence.
fn capitalized_spans(sentence: &str, taken: &[(usize, usize, Entity)]) -> Vec<(usize, usize, Entity)> {
    // (start, end, core text, index in sentence, ends run)
    let mut tokens = Vec::new();
    let mut offset = 0;
    for (i, raw) in sentence.split_whitespace().enumerate() {
        let at = offset + sentence[offset..].find(raw).unwrap_or(0);
        offset = at + raw.len();
        let (lead, core) = trim_token(raw);
        let start = at + lead;
        let breaks = raw.ends_with([',', ';', ':', '.', '!', '?', ')', '"']);
        tokens.push((start, start + core.len(), core, i, breaks));
    }

    let mut out = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let (s, e, core, _, _) = tokens[i];
        if core.is_empty() || !is_capitalized(core) || overlaps(taken, s, e) {
            i += 1;
            continue;
        }
        let mut run = vec![i];
        let mut j = i;
        while !tokens[j].4 && j + 1 < tokens.len() {
            let (ns, ne, next, _, _) = tokens[j + 1];
            if next.is_empty() || overlaps(taken, ns, ne) {
                break;
            }
            if is_capitalized(next) {
                run.push(j + 1);
                j += 1;
                continue;
            }
            // A connector joins only when another capital follows it.
            let joins = CONNECTORS.contains(&next)
                && !tokens[j + 1].4
                && tokens.get(j + 2).is_some_and(|t| is_capitalized(t.2) && !overlaps(taken, t.0, t.1));
            if joins {
                run.push(j + 1);
                run.push(j + 2);
                j += 2;
                continue;
            }
            break;
        }
        i = j + 1;

        while let Some(&first) = run.first() {
            if LEADING_STOPWORDS.contains(&tokens[first].2) || CONNECTORS.contains(&tokens[first].2) {
                run.remove(0);
            } else {
                break;
            }
        }
        let Some(&first) = run.first() else { continue };
        let last = *run.last().unwrap();
        let qualifies = run.len() >= 2 || tokens[first].3 > 0;
        if !qualifies {
            continue;
        }
        let (start, end) = (tokens[first].0, tokens[last].1);
        let surface = sentence[start..end].to_string();
        let kind = if run.iter().any(|&t| EVENT_WORDS.contains(&tokens[t].2)) {
            EntityKind::Event
        } else {
            EntityKind::PersonOrgPlace
        };
        out.push((start, end, Entity { surface, kind }));
    }
    out
}

/// Entities in order of position in `sentence`.
pub fn find_entities(sentence: &str) -> Vec<Entity> {
    let mut taken: Vec<(usize, usize, Entity)> = Vec::new();
    for (re, kind) in &patterns().ordered {
        for m in re.find_iter(sentence) {
            if !overlaps(&taken, m.start(), m.end()) {
                taken.push((m.start(), m.end(), Entity { surface: m.as_str().to_string(), kind: *kind }));
            }
        }
    }
    let names = capitalized_spans(sentence, &taken);
    taken.extend(names);
    taken.sort_by_key(|(s, _, _)| *s);
    taken.into_iter().map(|(_, _, e)| e).collect()
}
