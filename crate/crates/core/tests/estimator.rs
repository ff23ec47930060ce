//! Monte Carlo correlation estimates against the quadrature oracle on the
//! 64 x 256 desk grid.

use std::f64::consts::PI;

use oamcorr::identify::delta_row;
use oamcorr::oracle::quadrature_signal;
use oamcorr::{
    delta_g2_from_matrix, make_grid, run_ensemble, CoherenceSpec, CorrelationMatrix, EnsembleSpec,
    Envelope, ObjectMask,
};

const L_MAX: usize = 12;

fn run(mask: &ObjectMask, realizations: u64, seed: u64) -> CorrelationMatrix {
    run_ensemble(&EnsembleSpec {
        grid: make_grid(64, 256, 2.0).unwrap(),
        envelope: Envelope::Gaussian { waist: 1.0 },
        coherence: CoherenceSpec::DeltaCorrelated,
        mask: mask.clone(),
        l_max: L_MAX,
        realizations,
        master_seed: seed,
    })
    .unwrap()
}

/// Max |MC - oracle| over the l_r = 0 row, both peak-normalized.
fn row_deviation(m: &CorrelationMatrix, mask: &ObjectMask) -> f64 {
    let oracle = quadrature_signal(
        mask,
        &Envelope::Gaussian { waist: 1.0 },
        &m.provenance.grid.unwrap(),
        L_MAX,
    )
    .unwrap()
    .peak_normalized();
    let row = delta_row(m, 0).unwrap();
    let peak = row.iter().map(|p| p.value).fold(f64::MIN, f64::max);
    row.iter()
        .map(|p| (p.value / peak - oracle.get(p.l).unwrap()).abs())
        .fold(0.0, f64::max)
}

#[test]
fn row_converges_to_oracle() {
    let masks = [
        ObjectMask::Uniform,
        ObjectMask::angular_slits(4, PI / 6.0).unwrap(),
        ObjectMask::fractional_vortex(-2.0 / 3.0).unwrap(),
    ];
    for (i, mask) in masks.iter().enumerate() {
        let seed = 40 + i as u64;
        let coarse = row_deviation(&run(mask, 1250, seed), mask);
        let fine = row_deviation(&run(mask, 20000, seed), mask);
        assert!(fine <= 0.05, "{mask:?}: deviation {fine} at G = 20000");
        assert!(
            fine < coarse,
            "{mask:?}: deviation did not shrink ({coarse} -> {fine})"
        );
    }
}

#[test]
fn four_fold_signal_structure() {
    let mask = ObjectMask::angular_slits(4, PI / 6.0).unwrap();
    let m = run(&mask, 5000, 77);
    let delta = delta_g2_from_matrix(&m);
    let se = m.delta_stderr();
    for lt in delta.modes() {
        for lr in delta.modes() {
            let (v, e) = (delta.at(lt, lr), se.at(lt, lr));
            assert!(m.g2.at(lt, lr) >= 0.0);
            // A squared modulus: non-negative up to estimator noise.
            assert!(v >= -4.0 * e, "({lt},{lr}): {v} < -4 * {e}");
            // Comb: only multiples of 4 carry signal.
            if (lt - lr).rem_euclid(4) != 0 {
                assert!(v.abs() <= 4.0 * e, "({lt},{lr}): {v} off the comb (se {e})");
            }
        }
    }
    // Real mask, symmetric envelope: the row is even in dl.
    let row = delta_row(&m, 0).unwrap();
    for p in &row {
        let q = row.iter().find(|q| q.l == -p.l).unwrap();
        let pooled = (p.stderr.powi(2) + q.stderr.powi(2)).sqrt();
        assert!(
            (p.value - q.value).abs() <= 4.0 * pooled,
            "dl = {}: {} vs {}",
            p.l,
            p.value,
            q.value
        );
    }
    // Row peaks at l_t = 0 and +-4.
    let value = |l: i64| row.iter().find(|p| p.l == l).unwrap().value;
    for l in [-4, 4] {
        assert!(value(l) > 0.5 * value(0));
        assert!(value(l) > 5.0 * value(l - 1).abs().max(value(l + 1).abs()));
    }
}

#[test]
fn uniform_mask_is_the_thermal_baseline() {
    let m = run(&ObjectMask::Uniform, 3000, 5);
    let delta = delta_g2_from_matrix(&m);
    let se = m.delta_stderr();
    for lt in delta.modes() {
        for lr in delta.modes() {
            if lt == lr {
                assert!(delta.at(lt, lr) > 0.0);
            } else {
                assert!(delta.at(lt, lr).abs() <= 4.0 * se.at(lt, lr));
            }
        }
    }
}
