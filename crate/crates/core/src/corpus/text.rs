//! Token and sentence segmentation shared by every other module.

use std::collections::HashSet;
use std::sync::OnceLock;

const ABBREVIATIONS_RESOURCE: &str = include_str!("../../resources/abbreviations.txt");
const STOPWORDS_RESOURCE: &str = include_str!("../../resources/stopwords.txt");

fn resource_lines(src: &'static str) -> impl Iterator<Item = &'static str> {
    src.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
}

fn abbreviations() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| resource_lines(ABBREVIATIONS_RESOURCE).collect())
}

/// The fixed English stopword list applied before tf-idf scoring.
pub fn stopwords() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| resource_lines(STOPWORDS_RESOURCE).collect())
}

pub fn is_stopword(token: &str) -> bool {
    stopwords().contains(token)
}

/// Lowercase and split on every maximal run of non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Number of tokens `tokenize` would produce, without allocating them.
pub fn token_count(text: &str) -> usize {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .count()
}

fn is_terminal(c: char) -> bool {
    matches!(c, '.' | '?' | '!')
}

fn is_closing(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '\u{201D}' | '\u{2019}')
}

/// Split text into sentences.
///
/// A boundary is a run of `.`, `?` or `!` (optionally followed by closing
/// quotes or brackets) that is followed by whitespace and an uppercase letter,
/// or by the end of the text. A single `.` closing a word from the
/// abbreviation list never splits. Returned sentences are trimmed; their
/// concatenation equals the input up to inter-sentence whitespace.
pub fn split_sentences(text: &str) -> Vec<String> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut start = 0usize;
    let mut i = 0usize;

    while i < chars.len() {
        let (pos, c) = chars[i];
        if !is_terminal(c) {
            i += 1;
            continue;
        }
        let mut j = i;
        while j + 1 < chars.len() && is_terminal(chars[j + 1].1) {
            j += 1;
        }
        while j + 1 < chars.len() && is_closing(chars[j + 1].1) {
            j += 1;
        }
        let end = chars.get(j + 1).map_or(text.len(), |&(p, _)| p);

        let mut k = j + 1;
        while k < chars.len() && chars[k].1.is_whitespace() {
            k += 1;
        }
        let boundary = if j + 1 == chars.len() || k == chars.len() {
            // end of text, possibly after trailing whitespace
            k == chars.len()
        } else if k > j + 1 {
            chars[k].1.is_uppercase() && !ends_with_abbreviation(text, start, pos, c, i, j)
        } else {
            false
        };

        if boundary {
            push_trimmed(&mut out, &text[start..end]);
            start = end;
        }
        i = j + 1;
    }
    if start < text.len() {
        push_trimmed(&mut out, &text[start..]);
    }
    out
}

fn ends_with_abbreviation(text: &str, start: usize, pos: usize, c: char, i: usize, j: usize) -> bool {
    // only a lone period can close an abbreviation
    if c != '.' || i != j {
        return false;
    }
    let head = &text[start..pos + 1];
    let word = head
        .rsplit(char::is_whitespace)
        .next()
        .unwrap_or(head)
        .trim_start_matches(['(', '[', '"', '\'', '\u{201C}', '\u{2018}']);
    abbreviations().contains(word)
}

fn push_trimmed(out: &mut Vec<String>, s: &str) {
    let t = s.trim();
    if !t.is_empty() {
        out.push(t.to_string());
    }
}

/// Collapse all whitespace runs to single spaces and trim.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Count whitespace-free words the way readability and dataset statistics do.
pub fn word_count(text: &str) -> usize {
    token_count(text)
}
