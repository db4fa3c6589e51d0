use serde::{Deserialize, Serialize};

use super::text::token_count;
use super::DocumentRecord;
use crate::eval::flesch_reading_ease;

/// Distributional statistics of a raw QA corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_documents: usize,
    pub n_fragments: usize,
    pub mean_sections_per_answer: f64,
    pub max_sections_per_answer: usize,
    pub mean_section_tokens: f64,
    pub max_section_tokens: usize,
    pub mean_question_tokens: f64,
    /// Mean over documents of question tokens / total answer tokens.
    pub question_to_answer_ratio: f64,
    /// Mean over documents of the answer's Flesch Reading Ease.
    pub mean_fre: f64,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

pub fn compute_corpus_stats(docs: &[DocumentRecord], n_fragments: usize) -> CorpusStats {
    let section_tokens: Vec<usize> = docs
        .iter()
        .flat_map(|d| d.sections.iter().map(|s| token_count(&s.content)))
        .collect();
    CorpusStats {
        n_documents: docs.len(),
        n_fragments,
        mean_sections_per_answer: mean(docs.iter().map(|d| d.sections.len() as f64)),
        max_sections_per_answer: docs.iter().map(|d| d.sections.len()).max().unwrap_or(0),
        mean_section_tokens: mean(section_tokens.iter().map(|&n| n as f64)),
        max_section_tokens: section_tokens.iter().copied().max().unwrap_or(0),
        mean_question_tokens: mean(docs.iter().map(|d| token_count(&d.question) as f64)),
        question_to_answer_ratio: mean(docs.iter().filter_map(|d| {
            let answer: usize = d.sections.iter().map(|s| token_count(&s.content)).sum();
            (answer > 0).then(|| token_count(&d.question) as f64 / answer as f64)
        })),
        mean_fre: mean(docs.iter().filter_map(|d| flesch_reading_ease(&d.answer_text()).ok())),
    }
}
