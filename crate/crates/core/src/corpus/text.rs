/// Strips speaker prefixes (`NAME:` at line start), bracketed or
/// parenthesised annotations, and collapses whitespace.
pub fn clean_transcript(raw: &str) -> String {
    let mut kept = String::with_capacity(raw.len());
    for line in raw.lines() {
        kept.push_str(strip_speaker_prefix(line));
        kept.push('\n');
    }
    let without_notes = remove_spans(&kept);
    without_notes.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn strip_speaker_prefix(line: &str) -> &str {
    let trimmed = line.trim_start();
    let mut chars = trimmed.char_indices();
    match chars.next() {
        Some((_, c)) if c.is_alphabetic() => {}
        _ => return line,
    }
    for (i, c) in chars {
        if c == ':' {
            return &trimmed[i + 1..];
        }
        if !(c.is_alphanumeric() || matches!(c, '_' | '-' | '.')) {
            return line;
        }
    }
    line
}

/// Removes `[...]` and `(...)` spans, honouring nesting of the same bracket
/// type. An opener without a matching closer is kept verbatim.
fn remove_spans(text: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    while i < chars.len() {
        let close = match chars[i] {
            '[' => Some(']'),
            '(' => Some(')'),
            _ => None,
        };
        if let Some(close) = close {
            if let Some(end) = matching(&chars, i, chars[i], close) {
                out.push(' ');
                i = end + 1;
                continue;
            }
        }
        out.push(chars[i]);
        i += 1;
    }
    out
}

fn matching(chars: &[char], start: usize, open: char, close: char) -> Option<usize> {
    let mut depth = 0usize;
    for (j, &c) in chars.iter().enumerate().skip(start) {
        if c == open {
            depth += 1;
        } else if c == close {
            depth -= 1;
            if depth == 0 {
                return Some(j);
            }
        }
    }
    None
}

/// Lowercases, splits on whitespace and detaches punctuation into separate
/// tokens. Apostrophes between two alphanumeric characters stay inside the
/// word (`don't`).
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for chunk in text.split_whitespace() {
        let chars: Vec<char> = chunk.chars().flat_map(char::to_lowercase).collect();
        let mut word = String::new();
        for (i, &c) in chars.iter().enumerate() {
            let internal_apostrophe = matches!(c, '\'' | '’')
                && i > 0
                && i + 1 < chars.len()
                && chars[i - 1].is_alphanumeric()
                && chars[i + 1].is_alphanumeric();
            if c.is_alphanumeric() || internal_apostrophe {
                word.push(c);
            } else {
                if !word.is_empty() {
                    tokens.push(std::mem::take(&mut word));
                }
                tokens.push(c.to_string());
            }
        }
        if !word.is_empty() {
            tokens.push(word);
        }
    }
    tokens
}
