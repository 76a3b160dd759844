use std::collections::HashMap;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use ijip_bench::fixture;
use ijip_core::backend::{MockOracle, OracleConfig};
use ijip_core::dataset::{mask_labels, IncompleteView};
use ijip_core::engine::Engine;
use ijip_core::prompting::{parse_judgments, JudgmentVector, Templates};

use ijip_core::retrieval::{kmeans, retrieve_topk, Selector, StrategyConfig, StrategyKind};

fn topk(c: &mut Criterion) {
    let mut group = c.benchmark_group("retrieve_topk");
    for rows_per_label in [100, 1000] {
        let (db, queries) = fixture(10, rows_per_label, 512);
        let view = IncompleteView::complete(&db);
        let q = &queries.queries[0].embedding;
        group.bench_with_input(BenchmarkId::from_parameter(rows_per_label * 10), &view, |b, view| {
            b.iter(|| retrieve_topk(view, black_box(q), 10, None).unwrap())
        });
    }
    group.finish();
}

fn strategies(c: &mut Criterion) {
    let (db, queries) = fixture(10, 200, 128);
    let view = mask_labels(&db, 0.4, 3).unwrap();
    let mut group = c.benchmark_group("select");
    for kind in StrategyKind::ALL {
        let selector = Selector::new(StrategyConfig::new(kind, 5), &view).unwrap();
        // Warm the clustering cache so only per-query work is measured.
        selector.select(&queries.queries[0]).unwrap();
        group.bench_function(kind.as_str(), |b| b.iter(|| selector.select(black_box(&queries.queries[1])).unwrap()));
    }
    group.finish();
}

fn clustering(c: &mut Criterion) {
    let (db, _) = fixture(10, 100, 128);
    let points: Vec<&[f32]> = db.instances().iter().map(|i| db.embedding(i)).collect();
    c.bench_function("kmeans/1000x128/k=5", |b| b.iter(|| kmeans(black_box(&points), 5, 50, 7).unwrap()));
}

fn parsing(c: &mut Criterion) {
    let bits: Vec<bool> = (0..100).map(|j| j % 7 == 0).collect();
    let reply = JudgmentVector::from_bools(&bits).render_reply();
    c.bench_function("parse_judgments/m=100", |b| b.iter(|| parse_judgments(black_box(&reply), 100).unwrap()));
}

fn end_to_end(c: &mut Criterion) {
    let (db, queries) = fixture(10, 100, 64);
    let truth: HashMap<String, String> = queries
        .queries
        .iter()
        .zip(&queries.gold)
        .map(|(q, g)| (q.id.clone(), g.clone()))
        .collect();
    let oracle = MockOracle::new(OracleConfig {
        binary_flip_prob: 0.05,
        multiclass_error_prob: 0.1,
        ..OracleConfig::noiseless(truth)
    })
    .unwrap();
    let templates = Templates::default();
    let engine = Engine::new(&oracle, &templates);
    let view = IncompleteView::complete(&db);
    let selector = Selector::new(StrategyConfig::new(StrategyKind::Kate, 5), &view).unwrap();
    c.bench_function("classify/mock/m=10", |b| {
        b.iter(|| engine.classify(&selector, db.labelset(), black_box(&queries.queries[2])).unwrap())
    });
}

criterion_group!(benches, topk, strategies, clustering, parsing, end_to_end);
criterion_main!(benches);
