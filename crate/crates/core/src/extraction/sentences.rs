//! Rule-based sentence splitting.

/// Tokens that end in a period without ending the sentence. Compared
/// case-insensitively, without the final period.
const ABBREVIATIONS: &[&str] = &[
    "dr", "mr", "mrs", "ms", "prof", "sr", "jr", "st", "mt", "vs", "etc", "e.g", "i.e", "u.s",
    "u.k", "u.n", "inc", "ltd", "co", "corp", "gov", "sen", "rep", "gen", "col", "lt", "capt",
    "no", "fig", "approx", "jan", "feb", "mar", "apr", "jun", "jul", "aug", "sep", "sept", "oct",
    "nov", "dec",
];

const CLOSERS: &[char] = &['"', '\'', ')', ']', '\u{201d}', '\u{2019}'];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub index: usize,
    pub text: String,
    /// Byte offsets of `text` in the input.
    pub start: usize,
    pub end: usize,
}

fn is_abbreviation(before_period: &str) -> bool {
    let word = before_period
        .rsplit(|c: char| c.is_whitespace() || c == '(' || c == '"')
        .next()
        .unwrap_or("");
    let lower = word.to_lowercase();
    ABBREVIATIONS.contains(&lower.as_str())
}

/// Splits on `.`, `?` or `!` (plus any closing quotes or brackets) followed
/// by whitespace or end of input, and on blank lines. A period after a
/// guarded abbreviation does not end a sentence.
pub fn split_sentences(text: &str) -> Vec<Sentence> {
    let mut out = Vec::new();
    let mut push = |start: usize, end: usize| {
        let raw = &text[start..end];
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            return;
        }
        let lead = raw.len() - raw.trim_start().len();
        let s = start + lead;
        out.push(Sentence { index: 0, text: trimmed.to_string(), start: s, end: s + trimmed.len() });
    };

    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut start = 0;
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if c == '\n' {
            let mut j = i + 1;
            while j < chars.len() && chars[j].1 != '\n' && chars[j].1.is_whitespace() {
                j += 1;
            }
            if j < chars.len() && chars[j].1 == '\n' {
                push(start, pos);
                start = chars[j].0 + 1;
                i = j + 1;
                continue;
            }
        }
        if matches!(c, '.' | '?' | '!') {
            let mut j = i + 1;
            while j < chars.len() && (matches!(chars[j].1, '.' | '?' | '!') || CLOSERS.contains(&chars[j].1)) {
                j += 1;
            }
            let at_break = j == chars.len() || chars[j].1.is_whitespace();
            let guarded = c == '.' && j == i + 1 && is_abbreviation(&text[start..pos]);
            if at_break && !guarded {
                let end = if j == chars.len() { text.len() } else { chars[j].0 };
                push(start, end);
                start = end;
            }
            i = j;
            continue;
        }
        i += 1;
    }
    push(start, text.len());
    for (n, s) in out.iter_mut().enumerate() {
        s.index = n;
    }
    out
}
