//! Per-response and per-dialogue metrics.

use std::collections::HashSet;

use super::EvalError;
use crate::corpus::text::{split_sentences, tokenize};
use crate::providers::{Embedder, EmbeddingVector};
use crate::retrieval::cosine_or_zero;

pub const DEFAULT_THETA: f64 = 0.5;
pub const DEFAULT_TAU_COV: f64 = 0.5;

/// Fraction of response sentences whose token set overlaps some fragment's
/// tokens by at least `theta` (relative to the sentence). Sentences without
/// tokens are skipped; a response with no scorable sentence scores 1.0.
pub fn groundedness<S: AsRef<str>>(response: &str, fragments: &[S], theta: f64) -> f64 {
    let frag_sets: Vec<HashSet<String>> = fragments
        .iter()
        .map(|f| tokenize(f.as_ref()).into_iter().collect())
        .collect();
    let mut total = 0usize;
    let mut grounded = 0usize;
    for sentence in split_sentences(response) {
        let toks: HashSet<String> = tokenize(&sentence).into_iter().collect();
        if toks.is_empty() {
            continue;
        }
        total += 1;
        let n = toks.len() as f64;
        if frag_sets
            .iter()
            .any(|f| toks.iter().filter(|t| f.contains(*t)).count() as f64 / n >= theta)
        {
            grounded += 1;
        }
    }
    if total == 0 {
        1.0
    } else {
        grounded as f64 / total as f64
    }
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Longest common token subsequence over the gold length.
pub fn rouge_l_recall(generated: &str, gold: &str) -> Result<f64, EvalError> {
    let gold = tokenize(gold);
    if gold.is_empty() {
        return Err(EvalError::EmptyGold);
    }
    Ok(lcs_len(&tokenize(generated), &gold) as f64 / gold.len() as f64)
}

fn embed_checked(embedder: &dyn Embedder, texts: &[String]) -> Result<Vec<EmbeddingVector>, EvalError> {
    if texts.iter().any(|t| t.trim().is_empty()) {
        return Err(EvalError::EmptyText);
    }
    Ok(embedder.embed_texts(texts)?)
}

/// Cosine between whole-text embeddings.
pub fn semantic_relevance(embedder: &dyn Embedder, generated: &str, gold: &str) -> Result<f64, EvalError> {
    let v = embed_checked(embedder, &[generated.to_string(), gold.to_string()])?;
    Ok(cosine_or_zero(&v[0], &v[1]))
}

/// Mean pairwise `1 − cos` between follow-up embeddings; 0 for fewer than two.
pub fn followup_diversity(embedder: &dyn Embedder, followups: &[String]) -> Result<f64, EvalError> {
    if followups.len() < 2 {
        return Ok(0.0);
    }
    let v = embed_checked(embedder, followups)?;
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..v.len() {
        for j in i + 1..v.len() {
            sum += 1.0 - cosine_or_zero(&v[i], &v[j]);
            pairs += 1;
        }
    }
    Ok(sum / pairs as f64)
}

/// One transcript turn as seen by the flow metric.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowTurn<'a> {
    pub user: &'a str,
    pub response: &'a str,
    pub followup: Option<&'a str>,
}

/// Mean cosine between turn `j`'s follow-up and turn `j+1`'s user utterance
/// plus response. Pairs without a follow-up are skipped; with no scorable
/// pair the value is 1.0.
pub fn temporal_consistency(embedder: &dyn Embedder, turns: &[FlowTurn<'_>]) -> Result<f64, EvalError> {
    let mut texts = Vec::new();
    for w in turns.windows(2) {
        if let Some(f) = w[0].followup.filter(|f| !f.trim().is_empty()) {
            texts.push(f.to_string());
            texts.push(format!("{} {}", w[1].user, w[1].response));
        }
    }
    if texts.is_empty() {
        return Ok(1.0);
    }
    let v = embed_checked(embedder, &texts)?;
    let sims: Vec<f64> = v.chunks(2).map(|p| cosine_or_zero(&p[0], &p[1])).collect();
    Ok(sims.iter().sum::<f64>() / sims.len() as f64)
}

/// A gold sub-topic: header plus content.
#[derive(Debug, Clone, PartialEq)]
pub struct GoldSection {
    pub header: String,
    pub content: String,
}

impl GoldSection {
    fn text(&self) -> String {
        format!("{} {}", self.header, self.content)
    }
}

fn covered_fraction(gold: &[EmbeddingVector], probes: &[EmbeddingVector], tau_cov: f64) -> f64 {
    if gold.is_empty() {
        return 0.0;
    }
    let hit = gold
        .iter()
        .filter(|g| probes.iter().any(|p| cosine_or_zero(g, p) >= tau_cov))
        .count();
    hit as f64 / gold.len() as f64
}

/// Fraction of gold sections reached by some probe text (cosine ≥ `tau_cov`).
/// Empty probe texts are ignored.
pub fn coverage(
    embedder: &dyn Embedder,
    gold: &[GoldSection],
    probes: &[String],
    tau_cov: f64,
) -> Result<f64, EvalError> {
    let gold_texts: Vec<String> = gold.iter().map(GoldSection::text).filter(|t| !t.trim().is_empty()).collect();
    let probes: Vec<String> = probes.iter().filter(|p| !p.trim().is_empty()).cloned().collect();
    if gold_texts.is_empty() {
        return Ok(0.0);
    }
    let g = embed_checked(embedder, &gold_texts)?;
    if probes.is_empty() {
        return Ok(0.0);
    }
    let p = embed_checked(embedder, &probes)?;
    Ok(covered_fraction(&g, &p, tau_cov))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TopicCoverage {
    /// Absent for sessions without a topic tree.
    pub word_based: Option<f64>,
    pub content_based: f64,
}

/// Word-based coverage probes with the joined topic words of each visited
/// node; content-based probes with the system responses. `node_words` is
/// `None` for sessions without a tree, which makes the word-based value
/// [`EvalError::NoTree`] when `require_word_based` is set.
pub fn topic_coverage(
    embedder: &dyn Embedder,
    gold: &[GoldSection],
    node_words: Option<&[Vec<String>]>,
    responses: &[String],
    tau_cov: f64,
    require_word_based: bool,
) -> Result<TopicCoverage, EvalError> {
    let word_based = match node_words {
        Some(nodes) => {
            let probes: Vec<String> = nodes.iter().map(|w| w.join(" ")).collect();
            Some(coverage(embedder, gold, &probes, tau_cov)?)
        }
        None if require_word_based => return Err(EvalError::NoTree),
        None => None,
    };
    Ok(TopicCoverage {
        word_based,
        content_based: coverage(embedder, gold, responses, tau_cov)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::StubEmbedder;

    #[test]
    fn groundedness_cases() {
        let frag = ["Fishing quotas are set every year by the council."];
        assert_eq!(groundedness(frag[0], &frag, 0.5), 1.0);
        let two = "Fishing quotas are set every year by the council. Zebras run fast.";
        assert_eq!(groundedness(two, &frag, 0.5), 0.5);
        // 3 of 8 tokens shared → 0.375
        let s = "Quotas are set zebra giraffe lion tiger hippo.";
        let f = ["quotas are set"];
        assert_eq!(groundedness(s, &f, 0.5), 0.0);
        assert_eq!(groundedness(s, &f, 0.375), 1.0);
        assert_eq!(groundedness("", &f, 0.5), 1.0);
        assert_eq!(groundedness("Something ungrounded.", &[] as &[&str], 0.5), 0.0);
    }

    #[test]
    fn rouge_cases() {
        assert_eq!(rouge_l_recall("the cat sat", "the cat sat on the mat").unwrap(), 0.5);
        assert_eq!(rouge_l_recall("a b c", "a b c").unwrap(), 1.0);
        assert_eq!(rouge_l_recall("x y", "a b").unwrap(), 0.0);
        assert_eq!(rouge_l_recall("x", " "), Err(EvalError::EmptyGold));
    }

    #[test]
    fn diversity_and_relevance() {
        let e = StubEmbedder::new(0);
        let same = vec!["tax rules?".to_string(); 3];
        assert_eq!(followup_diversity(&e, &same).unwrap(), 0.0);
        assert_eq!(followup_diversity(&e, &same[..1]).unwrap(), 0.0);
        assert!((semantic_relevance(&e, "tax law", "tax law").unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn temporal_single_turn_is_one() {
        let e = StubEmbedder::new(0);
        let t = [FlowTurn { user: "q", response: "r", followup: Some("f?") }];
        assert_eq!(temporal_consistency(&e, &t).unwrap(), 1.0);
    }

    #[test]
    fn coverage_verbatim_and_no_tree() {
        let e = StubEmbedder::new(0);
        let gold = vec![
            GoldSection { header: "".into(), content: "fishing quotas".into() },
            GoldSection { header: "".into(), content: "consumer rights online".into() },
        ];
        let responses = vec!["fishing quotas".to_string(), "consumer rights online".to_string()];
        let c = topic_coverage(&e, &gold, None, &responses, 0.5, false).unwrap();
        assert_eq!(c.content_based, 1.0);
        assert_eq!(c.word_based, None);
        assert_eq!(topic_coverage(&e, &gold, None, &responses, 0.5, true), Err(EvalError::NoTree));
    }
}
