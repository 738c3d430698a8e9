/// Placeholder substituted for standalone digit runs.
pub const NUM_TOKEN: &str = "<num>";

/// Lowercase, split on whitespace, emit each punctuation character as its
/// own token, and replace all-digit tokens with [`NUM_TOKEN`].
///
/// A literal `<num>` in the input is kept as one token, so tokenizing the
/// space-joined output reproduces it.
pub fn tokenize(raw: &str) -> Vec<String> {
    let lower = raw.to_lowercase();
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut rest = lower.as_str();

    fn flush(current: &mut String, tokens: &mut Vec<String>) {
        if current.is_empty() {
            return;
        }
        if current.chars().all(|c| c.is_ascii_digit()) {
            tokens.push(NUM_TOKEN.to_string());
        } else {
            tokens.push(std::mem::take(current));
        }
        current.clear();
    }

    while let Some(c) = rest.chars().next() {
        if rest.starts_with(NUM_TOKEN) {
            flush(&mut current, &mut tokens);
            tokens.push(NUM_TOKEN.to_string());
            rest = &rest[NUM_TOKEN.len()..];
            continue;
        }
        if c.is_whitespace() {
            flush(&mut current, &mut tokens);
        } else if c.is_alphanumeric() {
            current.push(c);
        } else {
            flush(&mut current, &mut tokens);
            tokens.push(c.to_string());
        }
        rest = &rest[c.len_utf8()..];
    }
    flush(&mut current, &mut tokens);
    tokens
}
