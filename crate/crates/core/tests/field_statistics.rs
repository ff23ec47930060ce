//! Ensemble statistics of generated speckle fields.

use oamcorr::{generate_realization, make_grid, CoherenceSpec, Envelope, PolarGrid, SpeckleField};

const REALIZATIONS: u64 = 10_000;

fn grid() -> PolarGrid {
    make_grid(8, 32, 2.0).unwrap()
}

fn ensemble(seed: u64) -> Vec<SpeckleField> {
    let env = Envelope::Gaussian { waist: 1.0 };
    (0..REALIZATIONS)
        .map(|i| {
            generate_realization(&grid(), &env, &CoherenceSpec::DeltaCorrelated, seed, i).unwrap()
        })
        .collect()
}

/// Mean and standard error of the mean.
fn mean_se(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    let var = xs.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[test]
fn ring_intensity_follows_gaussian_envelope() {
    let g = grid();
    let fields = ensemble(21);
    for j in 0..g.n_r {
        // Average over the ring first; ring means are independent draws.
        let ring_means = fields
            .iter()
            .map(|f| f.ring(j).iter().map(|z| z.norm_sqr()).sum::<f64>() / g.n_phi as f64);
        let (mean, se) = mean_se(ring_means);
        let r = g.radius(j);
        let expected = (-2.0 * r * r).exp();
        assert!(
            (mean - expected).abs() <= 3.0 * se,
            "ring {j}: {mean} vs {expected} (se {se})"
        );
    }
}

#[test]
fn cells_are_circular() {
    let g = grid();
    let fields = ensemble(22);
    for (j, k) in [(0, 0), (3, 17), (7, 31)] {
        let idx = j * g.n_phi + k;
        let z = || fields.iter().map(move |f| f.samples[idx]);
        for (name, series) in [
            ("Re z", z().map(|c| c.re).collect::<Vec<_>>()),
            ("Im z", z().map(|c| c.im).collect()),
            ("Re z^2", z().map(|c| (c * c).re).collect()),
            ("Im z^2", z().map(|c| (c * c).im).collect()),
        ] {
            let (mean, se) = mean_se(series.iter().copied());
            assert!(
                mean.abs() <= 4.0 * se,
                "cell ({j},{k}) {name}: {mean} (se {se})"
            );
        }
    }
}

#[test]
fn distinct_cells_are_uncorrelated() {
    let g = grid();
    let fields = ensemble(23);
    let pairs = [
        ((0, 0), (0, 1)),
        ((2, 5), (3, 5)),
        ((1, 0), (6, 31)),
        ((4, 4), (4, 20)),
    ];
    for ((ja, ka), (jb, kb)) in pairs {
        let (a, b) = (ja * g.n_phi + ka, jb * g.n_phi + kb);
        // Complex covariance <z_a conj(z_b)>, both components.
        let products: Vec<_> = fields
            .iter()
            .map(|f| f.samples[a] * f.samples[b].conj())
            .collect();
        for part in [|c: &oamcorr::Complex64| c.re, |c: &oamcorr::Complex64| c.im] {
            let (mean, se) = mean_se(products.iter().map(part));
            assert!(
                mean.abs() <= 4.0 * se,
                "cells {a} and {b}: covariance {mean} (se {se})"
            );
        }
    }
}
