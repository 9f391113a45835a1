//! Benchmarks for the paths that dominate real workloads: the bound
//! inversion itself, bulk table rendering, certifying a large transcript,
//! and a short coverage run.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion as Bencher};
use understanding_core::sim::{sample_transcript, validate_coverage, ScoreAtom, SyntheticAgent};
use understanding_core::tables::{compute_table, TableId, TableSpec};
use understanding_core::{bounds, certify_samples, BoundQuery, Criterion, Probability, Procedure};

fn query(p_hat: f64, n: u64) -> BoundQuery {
    BoundQuery::new(Probability::new(p_hat).unwrap(), n, 0.05).unwrap()
}

fn bound_inversion(c: &mut Bencher) {
    let mut group = c.benchmark_group("bound-inversion");
    for &n in &[100u64, 10_000, 1_000_000] {
        group.bench_with_input(BenchmarkId::new("bisection", n), &n, |b, &n| {
            let q = query(0.9, n);
            b.iter(|| bounds(black_box(&q)));
        });
    }
    group.bench_function("closed-form", |b| {
        let q = query(0.0, 10_000);
        b.iter(|| bounds(black_box(&q)));
    });
    group.finish();
}

fn table_render(c: &mut Bencher) {
    c.bench_function("compute-table/CompareTests", |b| {
        let spec = TableSpec::with_defaults(TableId::CompareTests);
        b.iter(|| compute_table(black_box(&spec)).unwrap());
    });
}

fn plain_certification(c: &mut Bencher) {
    let agent = SyntheticAgent {
        seed: 0,
        score_atoms: vec![
            ScoreAtom { score: 0.0, weight: 0.01 },
            ScoreAtom { score: 0.7, weight: 0.39 },
            ScoreAtom { score: 1.0, weight: 0.6 },
        ],
        explanations: Vec::new(),
    };
    let transcript = sample_transcript(&agent, 10_000, 17).unwrap();
    let criterion = Criterion::new(0.75, 0.05, 0.05).unwrap();
    c.bench_function("certify-samples/10k-records", |b| {
        b.iter(|| certify_samples(black_box(&transcript), black_box(&criterion)).unwrap());
    });
}

fn coverage_run(c: &mut Bencher) {
    let agent = SyntheticAgent {
        seed: 0,
        score_atoms: vec![
            ScoreAtom { score: 0.0, weight: 0.01 },
            ScoreAtom { score: 0.7, weight: 0.39 },
            ScoreAtom { score: 1.0, weight: 0.6 },
        ],
        explanations: Vec::new(),
    };
    let criterion = Criterion::new(0.75, 0.05, 0.05).unwrap();
    c.bench_function("coverage/100-trials-of-200", |b| {
        b.iter(|| {
            validate_coverage(
                black_box(&agent),
                &criterion,
                Procedure::Samples,
                200,
                100,
                17,
            )
            .unwrap()
        });
    });
}

criterion_group!(
    benches,
    bound_inversion,
    table_render,
    plain_certification,
    coverage_run
);
criterion_main!(benches);
