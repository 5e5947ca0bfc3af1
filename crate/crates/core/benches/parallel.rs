//! Sequential vs rayon paths for the batch workloads: ROUGE scoring, record
//! featurization and percentile sorting. Without the `parallel` feature only
//! the sequential variants run.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use inferbench_core::accuracy::score_pair;
use inferbench_core::dataset::{featurize, ingest, OpenMLPerfRecord};
use inferbench_core::par;

const WORDS: &[&str] = &[
    "the", "model", "token", "latency", "server", "batch", "cache", "request", "query", "result",
    "answer", "system", "memory", "speed", "cost", "input",
];

fn text(rng: &mut ChaCha8Rng, len: usize) -> String {
    (0..len)
        .map(|_| WORDS[rng.random_range(0..WORDS.len())])
        .collect::<Vec<_>>()
        .join(" ")
}

fn pairs(n: usize) -> Vec<(String, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    (0..n)
        .map(|_| {
            let a = rng.random_range(50..300);
            let b = rng.random_range(50..300);
            (text(&mut rng, a), text(&mut rng, b))
        })
        .collect()
}

fn records(n: usize) -> Vec<OpenMLPerfRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    (0..n)
        .map(|i| {
            ingest(&json!({
                "metrics.result": rng.random_range(10.0..5000.0),
                "metrics.units": "tokens/s",
                "model.number_of_parameters": format!("{}B", rng.random_range(1..200)),
                "model.weight_data_types": "bfloat16",
                "submission.scenario": if i % 2 == 0 { "Offline" } else { "Server" },
                "system.accelerator.name": format!("Accel {}", i % 17),
                "system.accelerator.vendor": "Vendor",
                "system.accelerator.total_count": rng.random_range(1..9),
            }))
            .unwrap()
        })
        .collect()
}

fn rouge(c: &mut Criterion) {
    let mut g = c.benchmark_group("rouge_score_pairs");
    for n in [64usize, 512] {
        let input = pairs(n);
        g.throughput(Throughput::Elements(n as u64));
        g.bench_with_input(BenchmarkId::new("sequential", n), &input, |b, p| {
            b.iter(|| par::map_sequential(p, |(c, r)| score_pair(c, r)))
        });
        #[cfg(feature = "parallel")]
        g.bench_with_input(BenchmarkId::new("parallel", n), &input, |b, p| {
            b.iter(|| par::map_parallel(p, |(c, r)| score_pair(c, r)))
        });
    }
    g.finish();
}

fn featurize_records(c: &mut Criterion) {
    let mut g = c.benchmark_group("featurize");
    for n in [1_000usize, 20_000] {
        let input = records(n);
        g.throughput(Throughput::Elements(n as u64));
        g.bench_with_input(BenchmarkId::new("sequential", n), &input, |b, r| {
            b.iter(|| par::map_sequential(r, featurize))
        });
        #[cfg(feature = "parallel")]
        g.bench_with_input(BenchmarkId::new("parallel", n), &input, |b, r| {
            b.iter(|| par::map_parallel(r, featurize))
        });
    }
    g.finish();
}

fn sort_latencies(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut g = c.benchmark_group("sort_latencies");
    for n in [10_000usize, 1_000_000] {
        let input: Vec<u64> = (0..n)
            .map(|_| rng.random_range(0..10_000_000_000))
            .collect();
        g.throughput(Throughput::Elements(n as u64));
        g.bench_with_input(BenchmarkId::new("sequential", n), &input, |b, v| {
            b.iter(|| {
                let mut v = v.clone();
                v.sort_unstable();
                v
            })
        });
        g.bench_with_input(BenchmarkId::new("dispatch", n), &input, |b, v| {
            b.iter(|| {
                let mut v = v.clone();
                par::sort_unstable(&mut v);
                v
            })
        });
    }
    g.finish();
}

criterion_group!(benches, rouge, featurize_records, sort_latencies);
criterion_main!(benches);
