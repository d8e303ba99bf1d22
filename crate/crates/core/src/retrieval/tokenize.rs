/// Lowercased alphanumeric runs. Shared by the sparse index and the hashed
/// embedder so both see the same vocabulary.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}
