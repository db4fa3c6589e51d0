//! Documents, sections and fragments.
//!
//! A corpus file is a QA-JSON array of [`DocumentRecord`]s. Each document's
//! section contents are packed into [`Fragment`]s: runs of whole sentences
//! bounded by a token budget, which are the units that later get embedded,
//! retrieved and cited.

mod stats;
pub mod text;

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use stats::{compute_corpus_stats, CorpusStats};
pub use text::{split_sentences, tokenize};

/// Default token budget for a fragment.
pub const DEFAULT_MAX_FRAGMENT_TOKENS: usize = 128;
/// Smallest accepted token budget.
pub const MIN_FRAGMENT_TOKENS: usize = 16;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("malformed input at record {index}{}: {message}", id.as_ref().map(|i| format!(" ({i})")).unwrap_or_default())]
    MalformedInput {
        index: usize,
        id: Option<String>,
        message: String,
    },
    #[error("malformed input at line {line}: {message}")]
    MalformedLine { line: usize, message: String },
    #[error("corpus contains no usable records")]
    EmptyCorpus,
    #[error("max_fragment_tokens must be at least {MIN_FRAGMENT_TOKENS}, got {0}")]
    FragmentBudget(usize),
    #[error("I/O failure on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CorpusError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Link {
    pub anchor: String,
    pub url: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub header: String,
    pub content: String,
    #[serde(default)]
    pub links: Vec<Link>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Metadata {
    #[serde(default)]
    pub date: Option<String>,
    #[serde(default)]
    pub tags: Vec<String>,
    #[serde(default)]
    pub links: Vec<Link>,
}

/// One QA document: a question answered by an ordered list of sections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentRecord {
    pub id: String,
    pub question: String,
    pub sections: Vec<Section>,
    #[serde(default)]
    pub metadata: Metadata,
}

impl DocumentRecord {
    /// All section contents joined with blank lines.
    pub fn answer_text(&self) -> String {
        self.sections
            .iter()
            .map(|s| s.content.as_str())
            .collect::<Vec<_>>()
            .join("\n\n")
    }
}

/// A retrieval unit. `id` is `doc_id:NNNN`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fragment {
    pub id: String,
    pub doc_id: String,
    pub position: usize,
    pub text: String,
    pub source_url: Option<String>,
}

pub fn fragment_id(doc_id: &str, position: usize) -> String {
    format!("{doc_id}:{position:04}")
}

/// Something ingest dropped without failing the whole file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IngestWarning {
    pub record_index: usize,
    pub doc_id: String,
    pub section: Option<String>,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct Ingested {
    pub documents: Vec<DocumentRecord>,
    pub warnings: Vec<IngestWarning>,
}

/// Parse a QA-JSON corpus from a string.
pub fn parse_documents(json: &str) -> Result<Ingested, CorpusError> {
    let raw: serde_json::Value = serde_json::from_str(json).map_err(|e| CorpusError::MalformedLine {
        line: e.line(),
        message: e.to_string(),
    })?;
    let items = raw.as_array().ok_or_else(|| CorpusError::MalformedLine {
        line: 1,
        message: "top-level value must be an array of documents".into(),
    })?;

    let mut out = Ingested::default();
    let mut seen = HashSet::new();
    for (index, item) in items.iter().enumerate() {
        let id = item.get("id").and_then(|v| v.as_str()).map(str::to_string);
        let malformed = |message: String| CorpusError::MalformedInput {
            index,
            id: id.clone(),
            message,
        };
        if item.get("sections").is_none() {
            return Err(malformed("missing \"sections\"".into()));
        }
        let mut doc: DocumentRecord =
            serde_json::from_value(item.clone()).map_err(|e| malformed(e.to_string()))?;
        if doc.id.trim().is_empty() {
            return Err(malformed("empty id".into()));
        }
        if !seen.insert(doc.id.clone()) {
            return Err(malformed(format!("duplicate id {}", doc.id)));
        }
        if doc.sections.is_empty() {
            return Err(malformed("\"sections\" is empty".into()));
        }
        if let Some(date) = &doc.metadata.date {
            if chrono::NaiveDate::parse_from_str(date, "%Y-%m-%d").is_err() {
                return Err(malformed(format!("metadata.date {date:?} is not an ISO-8601 date")));
            }
        }

        let mut kept = Vec::with_capacity(doc.sections.len());
        for section in doc.sections.drain(..) {
            let content = text::normalize_whitespace(&section.content);
            let reason = if content.is_empty() {
                Some("section content is empty after whitespace normalization")
            } else if !mostly_latin(&content) {
                Some("section content is not in Latin script")
            } else {
                None
            };
            match reason {
                Some(reason) => out.warnings.push(IngestWarning {
                    record_index: index,
                    doc_id: doc.id.clone(),
                    section: Some(section.header.clone()),
                    reason: reason.into(),
                }),
                None => kept.push(Section { content, ..section }),
            }
        }
        if kept.is_empty() {
            out.warnings.push(IngestWarning {
                record_index: index,
                doc_id: doc.id.clone(),
                section: None,
                reason: "record has no usable sections".into(),
            });
            continue;
        }
        doc.sections = kept;
        check_metadata_links(&doc).map_err(malformed)?;
        out.documents.push(doc);
    }
    if out.documents.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    Ok(out)
}

/// Every metadata link anchor must be listed by exactly one section.
fn check_metadata_links(doc: &DocumentRecord) -> Result<(), String> {
    for link in &doc.metadata.links {
        let owners = doc
            .sections
            .iter()
            .filter(|s| s.links.iter().any(|l| l.anchor == link.anchor))
            .count();
        if owners != 1 {
            return Err(format!(
                "metadata link anchor {:?} appears in {owners} sections, expected exactly 1",
                link.anchor
            ));
        }
    }
    Ok(())
}

fn mostly_latin(text: &str) -> bool {
    let (mut letters, mut latin) = (0usize, 0usize);
    for c in text.chars().filter(|c| c.is_alphabetic()) {
        letters += 1;
        let cp = c as u32;
        if c.is_ascii_alphabetic()
            || (0x00C0..=0x024F).contains(&cp)
            || (0x1E00..=0x1EFF).contains(&cp)
        {
            latin += 1;
        }
    }
    letters == 0 || latin * 2 >= letters
}

/// Read a QA-JSON corpus file.
pub fn ingest_documents(path: &Path) -> Result<Ingested, CorpusError> {
    let json = fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
    parse_documents(&json)
}

/// Write documents back as QA-JSON.
pub fn export_documents(docs: &[DocumentRecord], path: &Path) -> Result<(), CorpusError> {
    let json = serde_json::to_string_pretty(docs).expect("documents serialize");
    fs::write(path, json + "\n").map_err(|e| CorpusError::io(path, e))
}

/// Pack each section's sentences greedily into fragments of at most
/// `max_fragment_tokens` tokens. A sentence longer than the budget becomes a
/// fragment of its own. Fragments never span sections.
pub fn fragment_document(doc: &DocumentRecord, max_fragment_tokens: usize) -> Result<Vec<Fragment>, CorpusError> {
    if max_fragment_tokens < MIN_FRAGMENT_TOKENS {
        return Err(CorpusError::FragmentBudget(max_fragment_tokens));
    }
    let mut out = Vec::new();
    for section in &doc.sections {
        let source_url = section.links.first().map(|l| l.url.clone());
        let mut run: Vec<String> = Vec::new();
        let mut run_tokens = 0usize;
        let flush = |run: &mut Vec<String>, out: &mut Vec<Fragment>| {
            if run.is_empty() {
                return;
            }
            let position = out.len();
            out.push(Fragment {
                id: fragment_id(&doc.id, position),
                doc_id: doc.id.clone(),
                position,
                text: run.join(" "),
                source_url: source_url.clone(),
            });
            run.clear();
        };
        for sentence in split_sentences(&section.content) {
            let n = text::token_count(&sentence);
            if !run.is_empty() && run_tokens + n > max_fragment_tokens {
                flush(&mut run, &mut out);
                run_tokens = 0;
            }
            run.push(sentence);
            run_tokens += n;
        }
        flush(&mut run, &mut out);
    }
    Ok(out)
}

/// Fragment a whole corpus, in document order.
pub fn fragment_corpus(docs: &[DocumentRecord], max_fragment_tokens: usize) -> Result<Vec<Fragment>, CorpusError> {
    let mut out = Vec::new();
    for doc in docs {
        out.extend(fragment_document(doc, max_fragment_tokens)?);
    }
    Ok(out)
}

/// Write the fragment store: one JSON object per line.
pub fn write_fragments(fragments: &[Fragment], path: &Path) -> Result<(), CorpusError> {
    let file = fs::File::create(path).map_err(|e| CorpusError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for f in fragments {
        let line = serde_json::to_string(f).expect("fragment serializes");
        writeln!(w, "{line}").map_err(|e| CorpusError::io(path, e))?;
    }
    w.flush().map_err(|e| CorpusError::io(path, e))
}

pub fn read_fragments(path: &Path) -> Result<Vec<Fragment>, CorpusError> {
    let file = fs::File::open(path).map_err(|e| CorpusError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CorpusError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Fragment = serde_json::from_str(&line).map_err(|e| CorpusError::MalformedLine {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(f);
    }
    Ok(out)
}
