//! Sequential vs parallel execution of the hot loops.

use std::hint::black_box;
use std::path::Path;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lexguide_core::corpus::{fragment_corpus, ingest_documents, DEFAULT_MAX_FRAGMENT_TOKENS};
use lexguide_core::dataset::{build_dataset, BuildOptions, Role};
use lexguide_core::engine::FixedClock;
use lexguide_core::eval::{evaluate_runs, EvalConfig};
use lexguide_core::providers::stub::{StubChat, StubEmbedder};
use lexguide_core::providers::EmbeddingVector;
use lexguide_core::retrieval::VectorIndex;
use lexguide_core::topics::cluster::average_linkage;
use lexguide_core::{Engine, Execution, KnowledgeBase, Mode, SessionConfig};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EXECS: [Execution; 2] = [Execution::Sequential, Execution::Parallel];

fn vectors(n: usize, dim: usize, seed: u64) -> Vec<EmbeddingVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let v = (0..dim).map(|_| (rng.next_u64() % 2001) as f64 / 1000.0 - 1.0).collect();
            EmbeddingVector::new(v).unwrap()
        })
        .collect()
}

fn index(n: usize, dim: usize) -> VectorIndex {
    let ids = (0..n).map(|i| format!("f{i:06}")).collect();
    VectorIndex::build(ids, vectors(n, dim, 1)).unwrap()
}

fn retrieval(c: &mut Criterion) {
    let idx = index(20_000, 64);
    let q = vectors(1, 64, 2).pop().unwrap();
    let mut g = c.benchmark_group("top_k_20000x64");
    for exec in EXECS {
        g.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &e| {
            b.iter(|| black_box(idx.top_k(&q, 10, e).unwrap()))
        });
    }
    g.finish();

    let idx = index(2_000, 64);
    let mut g = c.benchmark_group("mmr_2000x64_k100");
    for exec in EXECS {
        g.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &e| {
            b.iter(|| black_box(idx.mmr_retrieve(&q, 100, 0.6, e).unwrap()))
        });
    }
    g.finish();
}

fn clustering(c: &mut Criterion) {
    let vs = vectors(400, 64, 3);
    let refs: Vec<&EmbeddingVector> = vs.iter().collect();
    let mut g = c.benchmark_group("average_linkage_400x64");
    g.sample_size(10);
    for exec in EXECS {
        g.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &e| {
            b.iter(|| black_box(average_linkage(&refs, e)))
        });
    }
    g.finish();
}

fn evaluation(c: &mut Criterion) {
    let corpus = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/corpus12.json");
    let docs = ingest_documents(&corpus).unwrap().documents;
    let fragments = fragment_corpus(&docs, DEFAULT_MAX_FRAGMENT_TOKENS).unwrap();
    let embedder = Arc::new(StubEmbedder::new(42));
    let kb = Arc::new(KnowledgeBase::embed(fragments, embedder.as_ref()).unwrap());
    let engine = Engine::new(kb.clone(), embedder.clone(), Arc::new(StubChat::new(42)))
        .with_clock(Arc::new(FixedClock::default()));
    let gold = build_dataset(&docs, &StubChat::new(42), BuildOptions::default(), Execution::Parallel).unwrap();
    let mut sessions = Vec::new();
    for _ in 0..25 {
        for g in &gold {
            let said: Vec<&str> = g.turns.iter().filter(|t| t.role == Role::Citizen).map(|t| t.utterance.as_str()).collect();
            for mode in Mode::ALL {
                let mut s = engine.start_session(said[0], SessionConfig::with_mode(mode)).unwrap();
                s.dialogue_id = Some(g.id.clone());
                for u in &said[1..] {
                    if s.is_active() {
                        engine.take_turn(&mut s, u).unwrap();
                    }
                }
                sessions.push(s);
            }
        }
    }
    let mut g = c.benchmark_group("evaluate_runs_400_sessions");
    g.sample_size(10);
    for exec in EXECS {
        g.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &e| {
            b.iter(|| black_box(evaluate_runs(&sessions, &gold, &kb, embedder.as_ref(), EvalConfig::default(), e).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, retrieval, clustering, evaluation);
criterion_main!(benches);
