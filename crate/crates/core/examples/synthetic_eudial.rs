//! Regenerate the bundled synthetic EUDial fixture.
//!
//! 204 QA documents with a fixed distribution of section counts (880
//! sections in total) are turned into dialogues with the stub chat model.
//!
//! ```sh
//! cargo run -p lexguide-core --example synthetic_eudial -- crates/core/fixtures/eudial_synthetic.json
//! ```

use std::path::PathBuf;

use lexguide_core::corpus::{DocumentRecord, Metadata, Section};
use lexguide_core::dataset::{build_dataset, compute_dataset_stats, export_eudial, BuildOptions};
use lexguide_core::providers::stub::StubChat;
use lexguide_core::Execution;

/// (sections per document, number of documents)
const DISTRIBUTION: [(usize, usize); 9] = [(1, 4), (2, 20), (3, 48), (4, 50), (5, 36), (6, 24), (7, 12), (8, 6), (9, 4)];

const TOPICS: [&str; 12] = [
    "fishing quotas",
    "personal data",
    "mobile roaming",
    "air passenger rights",
    "consumer guarantees",
    "energy labels",
    "student exchanges",
    "medicine approval",
    "border checks",
    "farm subsidies",
    "cross-border healthcare",
    "food safety",
];

const ASPECTS: [&str; 9] = [
    "Background",
    "Current rules",
    "Who is covered",
    "Citizen rights",
    "Member state duties",
    "Enforcement",
    "Funding",
    "Recent reforms",
    "Next steps",
];

fn document(n: usize, k: usize) -> DocumentRecord {
    let topic = TOPICS[n % TOPICS.len()];
    let sections = ASPECTS[..k]
        .iter()
        .enumerate()
        .map(|(j, aspect)| Section {
            header: (*aspect).to_string(),
            content: format!(
                "The union sets common rules on {topic} for all member states. \
                 This part covers {} for case {n}, point {}. \
                 National authorities apply the rules and report back each year.",
                aspect.to_lowercase(),
                j + 1
            ),
            links: Vec::new(),
        })
        .collect();
    DocumentRecord {
        id: format!("syn-{n:03}"),
        question: format!("What does the EU do about {topic} in case {n}?"),
        sections,
        metadata: Metadata::default(),
    }
}

fn main() {
    let out: PathBuf = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "eudial_synthetic.json".into())
        .into();
    let mut docs = Vec::new();
    for (k, count) in DISTRIBUTION {
        for _ in 0..count {
            docs.push(document(docs.len(), k));
        }
    }
    let dialogues = build_dataset(&docs, &StubChat::new(0), BuildOptions::default(), Execution::Sequential)
        .expect("stub dataset builds");
    export_eudial(&dialogues, &out).expect("fixture written");
    let stats = compute_dataset_stats(&dialogues).expect("non-empty dataset");
    println!(
        "{}: {} dialogues, {} turn pairs, mean {:.4}",
        out.display(),
        stats.n_dialogues,
        stats.n_turn_pairs,
        stats.mean_turn_pairs
    );
}
