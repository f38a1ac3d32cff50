//! Tokenization and whitespace helpers shared across modules.

/// Lowercases, splits on whitespace, strips leading and trailing
/// non-alphanumeric characters from every word and drops empty results.
///
/// Inner punctuation survives: `"don't"` stays one token.
pub fn word_tokens(text: &str) -> Vec<String> {
    text.split_whitespace()
        .filter_map(|w| {
            let t = w.trim_matches(|c: char| !c.is_alphanumeric());
            (!t.is_empty()).then(|| t.to_lowercase())
        })
        .collect()
}

/// Tokenizer of the reference language model: lowercased words, with every
/// punctuation character split off as its own token.
///
/// Letters, digits and apostrophes form words; any other non-whitespace
/// character is a single-character token.
pub fn lm_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut word = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() || c == '\'' {
            word.extend(c.to_lowercase());
            continue;
        }
        if !word.is_empty() {
            out.push(std::mem::take(&mut word));
        }
        if !c.is_whitespace() {
            out.push(c.to_string());
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
    out
}

/// Joins model tokens back into text. Closing punctuation attaches to the
/// preceding word; everything else is space separated.
pub fn join_lm_tokens<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut out = String::new();
    for tok in tokens {
        let tok = tok.as_ref();
        let attach = matches!(tok, "." | "," | "!" | "?" | ";" | ":" | ")");
        if !out.is_empty() && !attach {
            out.push(' ');
        }
        out.push_str(tok);
    }
    out
}

/// Collapses whitespace runs to single spaces and trims both ends.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}
