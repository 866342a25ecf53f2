use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use padic_heat::markov::{IncrementSampler, SamplerConfig};
use padic_heat::verify::reference;
use padic_heat::{Execution, KernelEvaluator, PAdicVector};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

/// Fresh evaluators each iteration so the character-sum cache starts cold.
fn kernel_grid(c: &mut Criterion) {
    let mut group = c.benchmark_group("kernel_grid");
    group.sample_size(10);
    for case in reference::evaluators().unwrap().into_iter().filter(|c| c.symbol != "S2" && c.evaluator.beta() == 1.0) {
        let ev = &case.evaluator;
        let pts: Vec<(PAdicVector, f64)> = reference::TIMES
            .iter()
            .flat_map(|&t| reference::x_grid(ev.prime(), ev.dim()).into_iter().map(move |x| (x, t)))
            .collect();
        for (mode, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(mode, &case.label), &pts, |b, pts| {
                b.iter(|| {
                    let fresh = KernelEvaluator::new(ev.symbol().clone(), ev.certificate().clone(), ev.beta()).unwrap();
                    fresh.eval_grid(pts, 1e-9, exec)
                })
            });
        }
    }
    group.finish();
}

fn path_batches(c: &mut Criterion) {
    let mut group = c.benchmark_group("path_batch");
    group.sample_size(10);
    for case in reference::evaluators().unwrap().into_iter().filter(|c| c.symbol != "S2" && c.evaluator.beta() == 1.0) {
        let s = IncrementSampler::new(case.evaluator.clone(), SamplerConfig::default()).unwrap();
        let x0 = PAdicVector::zero(case.evaluator.prime(), case.evaluator.dim());
        s.simulate_paths(&x0, 4, 0, 2000, Execution::Parallel).unwrap();
        for (mode, exec) in MODES {
            group.bench_function(BenchmarkId::new(mode, &case.label), |b| {
                b.iter(|| s.simulate_paths(&x0, 4, 1, 2000, exec).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, kernel_grid, path_batches);
criterion_main!(benches);
