use std::f64::consts::PI;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use oamcorr::correlate::{run_ensemble_with, Execution};
use oamcorr::{make_grid, CoherenceSpec, EnsembleSpec, Envelope, ObjectMask};

fn spec(n_r: usize, n_phi: usize, realizations: u64) -> EnsembleSpec {
    EnsembleSpec {
        grid: make_grid(n_r, n_phi, 2.0).unwrap(),
        envelope: Envelope::Gaussian { waist: 1.0 },
        coherence: CoherenceSpec::DeltaCorrelated,
        mask: ObjectMask::angular_slits(4, PI / 6.0).unwrap(),
        l_max: 12,
        realizations,
        master_seed: 1,
    }
}

fn serial_vs_parallel(c: &mut Criterion) {
    let mut group = c.benchmark_group("ensemble");
    group.sample_size(10);
    for (n_r, n_phi) in [(16, 128), (64, 256)] {
        let s = spec(n_r, n_phi, 256);
        group.throughput(Throughput::Elements(s.realizations));
        let label = format!("{n_r}x{n_phi}");
        for (name, execution) in [
            ("serial", Execution::Serial),
            ("parallel", Execution::Parallel),
        ] {
            group.bench_with_input(BenchmarkId::new(name, &label), &s, |b, s| {
                b.iter(|| run_ensemble_with(s, execution).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, serial_vs_parallel);
criterion_main!(benches);
