//! Flesch Reading Ease with a vowel-group syllable heuristic.

use super::EvalError;
use crate::corpus::text::{split_sentences, tokenize};

fn is_vowel(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'y')
}

/// Vowel groups (`aeiouy`), minus one for a silent trailing `e` after a
/// consonant, never below 1.
pub fn syllables(word: &str) -> usize {
    let w: Vec<char> = word.to_lowercase().chars().filter(|c| c.is_alphabetic()).collect();
    let mut groups = 0;
    let mut prev_vowel = false;
    for &c in &w {
        let v = is_vowel(c);
        if v && !prev_vowel {
            groups += 1;
        }
        prev_vowel = v;
    }
    let n = w.len();
    if groups > 1 && n >= 2 && w[n - 1] == 'e' && !is_vowel(w[n - 2]) {
        groups -= 1;
    }
    groups.max(1)
}

/// `206.835 − 1.015·(words/sentences) − 84.6·(syllables/words)`.
pub fn flesch_reading_ease(text: &str) -> Result<f64, EvalError> {
    let words = tokenize(text);
    if words.is_empty() {
        return Err(EvalError::EmptyText);
    }
    let sentences = split_sentences(text).len().max(1) as f64;
    let n = words.len() as f64;
    let syl: usize = words.iter().map(|w| syllables(w)).sum();
    Ok(206.835 - 1.015 * (n / sentences) - 84.6 * (syl as f64 / n))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn syllable_heuristic() {
        assert_eq!(syllables("cat"), 1);
        assert_eq!(syllables("make"), 1);
        assert_eq!(syllables("the"), 1);
        assert_eq!(syllables("rhythm"), 1);
        assert_eq!(syllables("extraordinary"), 5);
        assert_eq!(syllables("bureaucratic"), 4);
        assert_eq!(syllables("formalities"), 4);
        assert_eq!(syllables("42"), 1);
    }

    #[test]
    fn cat_on_mat() {
        let f = flesch_reading_ease("The cat sat on the mat.").unwrap();
        assert!((f - 116.145).abs() < 0.01, "{f}");
    }

    #[test]
    fn polysyllabic_example_follows_heuristic() {
        // 3 words, 1 sentence, 5 + 4 + 4 syllables under the vowel-group rule
        let f = flesch_reading_ease("Extraordinary bureaucratic formalities.").unwrap();
        let expected = 206.835 - 1.015 * 3.0 - 84.6 * 13.0 / 3.0;
        assert!((f - expected).abs() < 1e-9, "{f}");
    }

    #[test]
    fn doubling_is_invariant() {
        let t = "The cat sat on the mat. Dogs bark loudly at night.";
        let a = flesch_reading_ease(t).unwrap();
        let b = flesch_reading_ease(&format!("{t} {t}")).unwrap();
        assert!((a - b).abs() < 0.01);
    }

    #[test]
    fn empty_is_error() {
        assert_eq!(flesch_reading_ease("  ... "), Err(EvalError::EmptyText));
    }
}
