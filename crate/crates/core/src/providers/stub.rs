//! Deterministic offline providers.
//!
//! The stub embedder maps every token to a pseudo-random unit vector keyed by
//! `(seed, token)` and embeds a text as the normalized sum of its token
//! vectors. Only integer operations and IEEE `sqrt` are involved, so vectors
//! are bit-identical on every platform.
//!
//! The stub chat model recognizes the answer, follow-up, question, summary and
//! section follow-up templates by their sentinel line and produces a fixed,
//! structural completion for each. Any other prompt is echoed (first 60 words
//! of the user prompt).

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_texts, ChatModel, ChatRequest, Embedder, EmbeddingVector, ProviderError};
use crate::corpus::text::{split_sentences, tokenize};
use crate::prompts::{self, TemplateKind};

pub const STUB_DIM: usize = 64;

const EMPTY_TOKEN: &str = "\u{0}empty";
const ECHO_WORDS: usize = 60;

fn fnv1a(bytes: &[u8], basis: u64) -> u64 {
    let mut h = basis;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

#[derive(Debug, Clone)]
pub struct StubEmbedder {
    seed: u64,
    dim: usize,
}

impl StubEmbedder {
    pub fn new(seed: u64) -> Self {
        Self::with_dim(seed, STUB_DIM)
    }

    pub fn with_dim(seed: u64, dim: usize) -> Self {
        assert!(dim > 0);
        Self { seed, dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The unit vector assigned to one token.
    pub fn token_vector(&self, token: &str) -> Vec<f64> {
        let bytes = token.as_bytes();
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&fnv1a(bytes, 0xcbf2_9ce4_8422_2325).to_le_bytes());
        key[16..24].copy_from_slice(&fnv1a(bytes, 0x8422_2325_cbf2_9ce4).to_le_bytes());
        key[24..32].copy_from_slice(&(bytes.len() as u64).to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        let mut v: Vec<f64> = (0..self.dim)
            .map(|_| {
                // 53 random bits mapped onto [-1, 1)
                let unit = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
                2.0 * unit - 1.0
            })
            .collect();
        normalize(&mut v);
        v
    }

    /// Embed one text without the non-empty precondition.
    pub fn embed_text(&self, text: &str) -> EmbeddingVector {
        let tokens = tokenize(text);
        let mut sum = vec![0.0; self.dim];
        if tokens.is_empty() {
            sum = self.token_vector(EMPTY_TOKEN);
        } else {
            // sorted so the floating-point sum is token-order independent
            let mut tokens = tokens;
            tokens.sort_unstable();
            for t in &tokens {
                for (s, x) in sum.iter_mut().zip(self.token_vector(t)) {
                    *s += x;
                }
            }
        }
        if !normalize(&mut sum) {
            sum = self.token_vector(EMPTY_TOKEN);
        }
        EmbeddingVector::from_finite(sum)
    }
}

fn normalize(v: &mut [f64]) -> bool {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n == 0.0 || !n.is_finite() {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= n);
    true
}

impl Embedder for StubEmbedder {
    fn embed_texts(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError> {
        check_texts(texts)?;
        Ok(texts.iter().map(|t| self.embed_text(t)).collect())
    }
}

#[derive(Debug, Clone, Default)]
pub struct StubChat {
    #[allow(dead_code)]
    seed: u64,
}

impl StubChat {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }
}

/// "a", "a and b", "a, b and c".
pub fn join_words(words: &[&str]) -> String {
    match words {
        [] => String::new(),
        [one] => (*one).to_string(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    }
}

fn leading_words(text: &str, n: usize) -> String {
    text.split_whitespace().take(n).collect::<Vec<_>>().join(" ")
}

fn complete(req: &ChatRequest) -> String {
    let user = req.user_prompt.as_str();
    match prompts::detect(&req.system_prompt) {
        Some(TemplateKind::Answer) => {
            let top = prompts::block(user, prompts::CONTEXT_LABEL)
                .into_iter()
                .find_map(|line| line.split_once("] ").map(|(_, text)| text));
            match top.and_then(|t| split_sentences(t).into_iter().next()) {
                Some(s) => s,
                None => "No relevant information found.".into(),
            }
        }
        Some(TemplateKind::Followup) => {
            let words: Vec<&str> = prompts::field(user, prompts::TOPIC_WORDS_LABEL)
                .unwrap_or("")
                .split(',')
                .map(str::trim)
                .filter(|w| !w.is_empty())
                .take(3)
                .collect();
            if words.is_empty() {
                "Would you like to learn more?".into()
            } else {
                format!("Would you like to learn more about {}?", join_words(&words))
            }
        }
        Some(TemplateKind::Question) => {
            let title = prompts::field(user, prompts::TITLE_LABEL)
                .unwrap_or("")
                .trim_matches('"')
                .trim();
            if title.is_empty() {
                "N/A".into()
            } else if title.ends_with('?') {
                title.to_string()
            } else {
                let title = title.trim_end_matches(['.', '!', ':', ';']);
                format!("What should citizens know about {title}?")
            }
        }
        Some(TemplateKind::Summary) => {
            let content = prompts::block(user, prompts::SECTION_CONTENT_LABEL).join(" ");
            let mut out: Vec<String> = Vec::new();
            let mut words = 0;
            for s in split_sentences(&content) {
                let n = s.split_whitespace().count();
                if !out.is_empty() && words + n > ECHO_WORDS {
                    break;
                }
                words += n;
                out.push(s);
            }
            if out.is_empty() {
                leading_words(user, ECHO_WORDS)
            } else {
                out.join(" ")
            }
        }
        Some(TemplateKind::SectionFollowup) => {
            let header = prompts::field(user, prompts::NEXT_SECTION_LABEL).unwrap_or("the next section");
            format!("Would you like to learn more about {header}?")
        }
        None => leading_words(user, ECHO_WORDS),
    }
}

impl ChatModel for StubChat {
    fn chat_complete(&self, req: &ChatRequest) -> Result<String, ProviderError> {
        req.validate()?;
        let out = complete(req);
        if out.trim().is_empty() {
            return Err(ProviderError::EmptyCompletion);
        }
        Ok(out)
    }
}
