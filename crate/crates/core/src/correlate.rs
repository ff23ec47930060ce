//! Ensemble estimator of the two-arm OAM intensity correlation
//! `g2(l_t, l_r) = <I_t(l_t) I_r(l_r)> / (<I_t(l_t)> <I_r(l_r)>)`.
//!
//! Both arms see the same speckle realization: the reference arm projects the
//! bare field, the test arm projects the field after the object mask.
//! Realizations are grouped into fixed blocks of [`BLOCK_LEN`] indices; each
//! block is accumulated sequentially and block accumulators are merged in
//! index order, so the result is bitwise identical for any worker count.

use std::ops::Range;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::field::{fill_samples, CoherenceSpec, Envelope, PolarGrid};
use crate::mask::ObjectMask;
use crate::oam::{spectrum_intensity, IntensitySpectrum, OamProjector};
use crate::parallel::{IntoParallelIterator, ParallelIterator};

/// Realizations per reduction block.
pub const BLOCK_LEN: u64 = 64;

/// Square matrix over the mode window, indexed by `(l_t, l_r)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeMatrix {
    pub l_max: usize,
    /// Row-major: `data[(l_t + l_max) * dim + (l_r + l_max)]`.
    pub data: Vec<f64>,
}

impl ModeMatrix {
    pub fn zeros(l_max: usize) -> Self {
        let dim = 2 * l_max + 1;
        Self {
            l_max,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn from_fn(l_max: usize, mut f: impl FnMut(i64, i64) -> f64) -> Self {
        let mut m = Self::zeros(l_max);
        let l = l_max as i64;
        for lt in -l..=l {
            for lr in -l..=l {
                let idx = m.index(lt, lr);
                m.data[idx] = f(lt, lr);
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        2 * self.l_max + 1
    }

    pub fn modes(&self) -> std::ops::RangeInclusive<i64> {
        -(self.l_max as i64)..=self.l_max as i64
    }

    pub fn contains(&self, l: i64) -> bool {
        l.unsigned_abs() as usize <= self.l_max
    }

    fn index(&self, l_t: i64, l_r: i64) -> usize {
        let off = self.l_max as i64;
        ((l_t + off) as usize) * self.dim() + (l_r + off) as usize
    }

    /// Entry at `(l_t, l_r)`; panics outside the window.
    pub fn at(&self, l_t: i64, l_r: i64) -> f64 {
        assert!(
            self.contains(l_t) && self.contains(l_r),
            "({l_t}, {l_r}) outside window"
        );
        self.data[self.index(l_t, l_r)]
    }

    pub fn get(&self, l_t: i64, l_r: i64) -> Option<f64> {
        (self.contains(l_t) && self.contains(l_r)).then(|| self.data[self.index(l_t, l_r)])
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            l_max: self.l_max,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationAccumulator {
    l_max: usize,
    count: u64,
    sum_t: Vec<f64>,
    sum_r: Vec<f64>,
    sum_prod: Vec<f64>,
    sum_prod_sq: Vec<f64>,
}

impl CorrelationAccumulator {
    pub fn new(l_max: usize) -> Self {
        let dim = 2 * l_max + 1;
        Self {
            l_max,
            count: 0,
            sum_t: vec![0.0; dim],
            sum_r: vec![0.0; dim],
            sum_prod: vec![0.0; dim * dim],
            sum_prod_sq: vec![0.0; dim * dim],
        }
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn sum_test(&self) -> &[f64] {
        &self.sum_t
    }

    pub fn sum_reference(&self) -> &[f64] {
        &self.sum_r
    }

    /// `sum I_t[l_t] I_r[l_r]`, row-major over `(l_t, l_r)`.
    pub fn sum_products(&self) -> &[f64] {
        &self.sum_prod
    }

    pub fn sum_squared_products(&self) -> &[f64] {
        &self.sum_prod_sq
    }

    /// Adds one realization's test- and reference-arm spectra.
    pub fn accumulate(
        &mut self,
        test: &IntensitySpectrum,
        reference: &IntensitySpectrum,
    ) -> Result<()> {
        for s in [test, reference] {
            if s.l_max != self.l_max {
                return Err(Error::WindowMismatch(self.l_max, s.l_max));
            }
        }
        self.add(&test.intensities, &reference.intensities);
        Ok(())
    }

    fn add(&mut self, it: &[f64], ir: &[f64]) {
        let dim = it.len();
        for (s, v) in self.sum_t.iter_mut().zip(it) {
            *s += v;
        }
        for (s, v) in self.sum_r.iter_mut().zip(ir) {
            *s += v;
        }
        for (a, &t) in it.iter().enumerate() {
            let row = a * dim..(a + 1) * dim;
            for ((p, q), &r) in self.sum_prod[row.clone()]
                .iter_mut()
                .zip(&mut self.sum_prod_sq[row])
                .zip(ir)
            {
                let x = t * r;
                *p += x;
                *q += x * x;
            }
        }
        self.count += 1;
    }

    /// Element-wise sum of two accumulators (`self` first).
    pub fn merge(&self, other: &Self) -> Result<Self> {
        let mut out = self.clone();
        out.merge_from(other)?;
        Ok(out)
    }

    pub fn merge_from(&mut self, other: &Self) -> Result<()> {
        if other.l_max != self.l_max {
            return Err(Error::WindowMismatch(self.l_max, other.l_max));
        }
        for (a, b) in [
            (&mut self.sum_t, &other.sum_t),
            (&mut self.sum_r, &other.sum_r),
            (&mut self.sum_prod, &other.sum_prod),
            (&mut self.sum_prod_sq, &other.sum_prod_sq),
        ] {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        self.count += other.count;
        Ok(())
    }

    pub fn finalize(&self) -> Result<CorrelationMatrix> {
        self.finalize_with(Provenance::default())
    }

    pub fn finalize_with(&self, provenance: Provenance) -> Result<CorrelationMatrix> {
        if self.count < 2 {
            return Err(Error::InsufficientRealizations(self.count));
        }
        let n = self.count as f64;
        let l_max = self.l_max;
        let mean_t: Vec<f64> = self.sum_t.iter().map(|s| s / n).collect();
        let mean_r: Vec<f64> = self.sum_r.iter().map(|s| s / n).collect();
        for (i, (&t, &r)) in mean_t.iter().zip(&mean_r).enumerate() {
            if !(t > 0.0 && r > 0.0) {
                return Err(Error::ZeroMeanIntensity(i as i64 - l_max as i64));
            }
        }
        let dim = 2 * l_max + 1;
        let mut raw = ModeMatrix::zeros(l_max);
        let mut g2 = ModeMatrix::zeros(l_max);
        let mut stderr = ModeMatrix::zeros(l_max);
        for a in 0..dim {
            for b in 0..dim {
                let i = a * dim + b;
                let mean = self.sum_prod[i] / n;
                let var = ((self.sum_prod_sq[i] - n * mean * mean) / (n - 1.0)).max(0.0);
                let norm = mean_t[a] * mean_r[b];
                raw.data[i] = mean;
                g2.data[i] = mean / norm;
                stderr.data[i] = (var / n).sqrt() / norm;
            }
        }
        Ok(CorrelationMatrix {
            l_max,
            g2,
            raw_mean_product: raw,
            mean_test: mean_t,
            mean_reference: mean_r,
            stderr_g2: stderr,
            realizations: self.count,
            provenance,
        })
    }
}

/// Where a matrix came from; embedded in every JSON sidecar.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub master_seed: Option<u64>,
    pub mask: Value,
    pub grid: Option<PolarGrid>,
    pub envelope: Option<Envelope>,
    pub coherence: Option<CoherenceSpec>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationMatrix {
    pub l_max: usize,
    pub g2: ModeMatrix,
    pub raw_mean_product: ModeMatrix,
    pub mean_test: Vec<f64>,
    pub mean_reference: Vec<f64>,
    pub stderr_g2: ModeMatrix,
    pub realizations: u64,
    pub provenance: Provenance,
}

impl CorrelationMatrix {
    pub fn mean_test_at(&self, l: i64) -> f64 {
        self.mean_test[(l + self.l_max as i64) as usize]
    }

    pub fn mean_reference_at(&self, l: i64) -> f64 {
        self.mean_reference[(l + self.l_max as i64) as usize]
    }

    /// Standard error of the background-subtracted signal, in raw units.
    pub fn delta_stderr(&self) -> ModeMatrix {
        ModeMatrix::from_fn(self.l_max, |lt, lr| {
            self.stderr_g2.at(lt, lr) * self.mean_test_at(lt) * self.mean_reference_at(lr)
        })
    }
}

/// Background-subtracted signal `<I_t I_r> - <I_t><I_r>`.
pub fn delta_g2_from_matrix(m: &CorrelationMatrix) -> ModeMatrix {
    ModeMatrix::from_fn(m.l_max, |lt, lr| {
        m.raw_mean_product.at(lt, lr) - m.mean_test_at(lt) * m.mean_reference_at(lr)
    })
}

/// Everything needed to run one ensemble.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleSpec {
    pub grid: PolarGrid,
    pub envelope: Envelope,
    pub coherence: CoherenceSpec,
    pub mask: ObjectMask,
    pub l_max: usize,
    pub realizations: u64,
    pub master_seed: u64,
}

impl EnsembleSpec {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.envelope.validate(&self.grid)?;
        self.coherence.validate(&self.grid)?;
        self.mask.validate()?;
        if self.l_max == 0 {
            return Err(Error::InvalidArgument("l_max must be positive".into()));
        }
        self.grid.check_window(self.l_max, "l_max")?;
        if self.realizations < 2 {
            return Err(Error::InsufficientRealizations(self.realizations));
        }
        Ok(())
    }

    pub fn provenance(&self) -> Provenance {
        Provenance {
            master_seed: Some(self.master_seed),
            mask: self.mask.describe(),
            grid: Some(self.grid),
            envelope: Some(self.envelope.clone()),
            coherence: Some(self.coherence),
        }
    }
}

/// How realizations are scheduled. Both produce identical results.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Execution {
    Serial,
    #[default]
    Parallel,
}

struct Prepared {
    sigma: Vec<f64>,
    transmission: Option<Vec<Complex64>>,
    projector: OamProjector,
}

impl Prepared {
    fn new(spec: &EnsembleSpec) -> Result<Self> {
        spec.validate()?;
        let sigma = spec
            .envelope
            .profile(&spec.grid)
            .into_iter()
            .map(f64::sqrt)
            .collect();
        let transmission = match spec.mask {
            ObjectMask::Uniform => None,
            ref m => Some(m.raster(&spec.grid)?),
        };
        Ok(Self {
            sigma,
            transmission,
            projector: OamProjector::new(&spec.grid, spec.l_max)?,
        })
    }

    fn accumulate_range(&self, spec: &EnsembleSpec, range: Range<u64>) -> CorrelationAccumulator {
        let mut acc = CorrelationAccumulator::new(spec.l_max);
        let mut samples = vec![Complex64::new(0.0, 0.0); spec.grid.len()];
        let mut buf = Vec::with_capacity(spec.grid.n_phi);
        for index in range {
            fill_samples(
                &spec.grid,
                &self.sigma,
                &spec.coherence,
                spec.master_seed,
                index,
                &mut samples,
            );
            let reference =
                spectrum_intensity(&self.projector.project_into(&samples, None, &mut buf));
            let test = match &self.transmission {
                None => reference.clone(),
                Some(t) => {
                    spectrum_intensity(&self.projector.project_into(&samples, Some(t), &mut buf))
                }
            };
            acc.add(&test.intensities, &reference.intensities);
        }
        acc
    }
}

fn block_ranges(range: Range<u64>) -> Vec<Range<u64>> {
    let mut out = Vec::new();
    let mut start = range.start;
    while start < range.end {
        let end = ((start / BLOCK_LEN + 1) * BLOCK_LEN).min(range.end);
        out.push(start..end);
        start = end;
    }
    out
}

/// Per-block accumulators for realization indices in `range`, in index
/// order. Blocks are aligned to multiples of [`BLOCK_LEN`], so splitting a
/// range at a block boundary and concatenating the outputs gives the same
/// blocks as processing it whole.
pub fn ensemble_blocks(
    spec: &EnsembleSpec,
    range: Range<u64>,
    execution: Execution,
) -> Result<Vec<CorrelationAccumulator>> {
    let prepared = Prepared::new(spec)?;
    let blocks = block_ranges(range);
    Ok(match execution {
        Execution::Serial => blocks
            .into_iter()
            .map(|r| prepared.accumulate_range(spec, r))
            .collect(),
        Execution::Parallel => blocks
            .into_par_iter()
            .map(|r| prepared.accumulate_range(spec, r))
            .collect(),
    })
}

/// Canonical reduction: left fold over blocks in index order.
pub fn reduce_blocks(
    l_max: usize,
    blocks: &[CorrelationAccumulator],
) -> Result<CorrelationAccumulator> {
    let mut acc = CorrelationAccumulator::new(l_max);
    for b in blocks {
        acc.merge_from(b)?;
    }
    Ok(acc)
}

fn run_range(
    spec: &EnsembleSpec,
    range: Range<u64>,
    execution: Execution,
) -> Result<CorrelationMatrix> {
    let blocks = ensemble_blocks(spec, range, execution)?;
    reduce_blocks(spec.l_max, &blocks)?.finalize_with(spec.provenance())
}

pub fn run_ensemble(spec: &EnsembleSpec) -> Result<CorrelationMatrix> {
    run_ensemble_with(spec, Execution::default())
}

pub fn run_ensemble_with(spec: &EnsembleSpec, execution: Execution) -> Result<CorrelationMatrix> {
    run_range(spec, 0..spec.realizations, execution)
}

/// Spread of `g2` over independent repeats of the same experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct RepeatSpread {
    pub repeats: Vec<CorrelationMatrix>,
    pub mean_g2: ModeMatrix,
    /// Sample standard deviation of `g2` across repeats.
    pub spread_g2: ModeMatrix,
}

/// Runs `repeats` independent ensembles; repeat `r` uses realization indices
/// `r * G .. (r + 1) * G` under the same master seed.
pub fn run_repeats(
    spec: &EnsembleSpec,
    repeats: u64,
    execution: Execution,
) -> Result<RepeatSpread> {
    if repeats < 2 {
        return Err(Error::InvalidArgument(format!(
            "spread needs at least 2 repeats, got {repeats}"
        )));
    }
    let g = spec.realizations;
    let runs = (0..repeats)
        .map(|r| run_range(spec, r * g..(r + 1) * g, execution))
        .collect::<Result<Vec<_>>>()?;
    let n = repeats as f64;
    let mean = ModeMatrix::from_fn(spec.l_max, |lt, lr| {
        runs.iter().map(|m| m.g2.at(lt, lr)).sum::<f64>() / n
    });
    let spread = ModeMatrix::from_fn(spec.l_max, |lt, lr| {
        let mu = mean.at(lt, lr);
        let ss: f64 = runs.iter().map(|m| (m.g2.at(lt, lr) - mu).powi(2)).sum();
        (ss / (n - 1.0)).sqrt()
    });
    Ok(RepeatSpread {
        repeats: runs,
        mean_g2: mean,
        spread_g2: spread,
    })
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use proptest::prelude::*;

    use super::*;
    use crate::field::make_grid;

    fn spectrum(l_max: usize, values: Vec<f64>) -> IntensitySpectrum {
        IntensitySpectrum {
            l_max,
            intensities: values,
        }
    }

    fn small_spec(mask: ObjectMask, g: u64) -> EnsembleSpec {
        EnsembleSpec {
            grid: make_grid(8, 64, 2.0).unwrap(),
            envelope: Envelope::Gaussian { waist: 1.0 },
            coherence: CoherenceSpec::DeltaCorrelated,
            mask,
            l_max: 6,
            realizations: g,
            master_seed: 2024,
        }
    }

    #[test]
    fn single_accumulation_of_ones() {
        let mut acc = CorrelationAccumulator::new(2);
        let ones = spectrum(2, vec![1.0; 5]);
        acc.accumulate(&ones, &ones).unwrap();
        assert_eq!(acc.count(), 1);
        assert!(acc.sum_products().iter().all(|&v| v == 1.0));
        assert!(acc.sum_test().iter().all(|&v| v == 1.0));
        assert!(matches!(
            acc.finalize(),
            Err(Error::InsufficientRealizations(1))
        ));
    }

    #[test]
    fn means_are_arithmetic_averages() {
        let mut acc = CorrelationAccumulator::new(1);
        acc.accumulate(
            &spectrum(1, vec![1.0, 2.0, 3.0]),
            &spectrum(1, vec![4.0, 5.0, 6.0]),
        )
        .unwrap();
        acc.accumulate(
            &spectrum(1, vec![3.0, 4.0, 5.0]),
            &spectrum(1, vec![6.0, 7.0, 8.0]),
        )
        .unwrap();
        let m = acc.finalize().unwrap();
        assert_eq!(m.mean_test, vec![2.0, 3.0, 4.0]);
        assert_eq!(m.mean_reference, vec![5.0, 6.0, 7.0]);
        assert_eq!(m.raw_mean_product.at(-1, 1), (6.0 + 24.0) / 2.0);
        assert_eq!(m.g2.at(-1, 1), 15.0 / (2.0 * 7.0));
    }

    #[test]
    fn constant_stream_has_unit_g2_and_no_error() {
        let mut acc = CorrelationAccumulator::new(3);
        let c = spectrum(3, vec![2.5; 7]);
        for _ in 0..10 {
            acc.accumulate(&c, &c).unwrap();
        }
        let m = acc.finalize().unwrap();
        assert!(m.g2.data.iter().all(|&v| v == 1.0));
        assert!(m.stderr_g2.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_mean_is_rejected() {
        let mut acc = CorrelationAccumulator::new(1);
        let t = spectrum(1, vec![1.0, 0.0, 1.0]);
        let r = spectrum(1, vec![1.0; 3]);
        acc.accumulate(&t, &r).unwrap();
        acc.accumulate(&t, &r).unwrap();
        assert!(matches!(acc.finalize(), Err(Error::ZeroMeanIntensity(0))));
    }

    #[test]
    fn window_mismatch_is_rejected() {
        let mut acc = CorrelationAccumulator::new(2);
        assert!(acc
            .accumulate(&spectrum(1, vec![1.0; 3]), &spectrum(2, vec![1.0; 5]))
            .is_err());
        assert!(acc.merge(&CorrelationAccumulator::new(3)).is_err());
    }

    #[test]
    fn merge_with_empty_is_identity() {
        let mut acc = CorrelationAccumulator::new(1);
        acc.accumulate(
            &spectrum(1, vec![1.5, 2.0, 0.25]),
            &spectrum(1, vec![3.0, 1.0, 2.0]),
        )
        .unwrap();
        let empty = CorrelationAccumulator::new(1);
        assert_eq!(acc.merge(&empty).unwrap(), acc);
        assert_eq!(empty.merge(&acc).unwrap(), acc);
    }

    proptest! {
        #[test]
        fn merge_equals_concatenated_stream(
            a in proptest::collection::vec(proptest::collection::vec(0.0f64..10.0, 6), 1..12),
            b in proptest::collection::vec(proptest::collection::vec(0.0f64..10.0, 6), 1..12),
        ) {
            let l_max = 1;
            let feed = |rows: &[Vec<f64>], acc: &mut CorrelationAccumulator| {
                for row in rows {
                    acc.accumulate(&spectrum(l_max, row[..3].to_vec()), &spectrum(l_max, row[3..].to_vec())).unwrap();
                }
            };
            let (mut left, mut right, mut whole) = (
                CorrelationAccumulator::new(l_max),
                CorrelationAccumulator::new(l_max),
                CorrelationAccumulator::new(l_max),
            );
            feed(&a, &mut left);
            feed(&b, &mut right);
            feed(&a, &mut whole);
            feed(&b, &mut whole);
            let merged = left.merge(&right).unwrap();
            prop_assert_eq!(merged.count(), left.count() + right.count());
            for (x, y) in merged.sum_products().iter().zip(whole.sum_products()) {
                prop_assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0));
            }
            for (x, y) in merged.sum_squared_products().iter().zip(whole.sum_squared_products()) {
                prop_assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0));
            }
            prop_assert!(merged.sum_products().iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn permuted_stream_agrees_to_rounding() {
        let spec = small_spec(ObjectMask::angular_slits(4, PI / 6.0).unwrap(), 256);
        let forward = ensemble_blocks(&spec, 0..256, Execution::Serial).unwrap();
        let mut reversed = forward.clone();
        reversed.reverse();
        let a = reduce_blocks(6, &forward).unwrap();
        let b = reduce_blocks(6, &reversed).unwrap();
        for (x, y) in a.sum_products().iter().zip(b.sum_products()) {
            assert!((x - y).abs() <= 1e-15 * y.abs() * 4.0, "{x} vs {y}");
        }
    }

    #[test]
    fn split_then_merge_is_bitwise_identical() {
        let spec = small_spec(ObjectMask::fractional_vortex(-0.5).unwrap(), 300);
        let whole = ensemble_blocks(&spec, 0..300, Execution::Serial).unwrap();
        let mut split = ensemble_blocks(&spec, 0..128, Execution::Parallel).unwrap();
        split.extend(ensemble_blocks(&spec, 128..300, Execution::Serial).unwrap());
        assert_eq!(whole, split);
        let a = reduce_blocks(6, &whole).unwrap().finalize().unwrap();
        let b = run_ensemble_with(&spec, Execution::Parallel).unwrap();
        assert_eq!(a.g2, b.g2);
        assert_eq!(a.stderr_g2, b.stderr_g2);
    }

    #[test]
    fn serial_and_parallel_agree_bitwise() {
        let spec = small_spec(ObjectMask::angular_slits(3, PI / 6.0).unwrap(), 200);
        let s = run_ensemble_with(&spec, Execution::Serial).unwrap();
        let p = run_ensemble_with(&spec, Execution::Parallel).unwrap();
        assert_eq!(s, p);
    }

    #[test]
    fn ensemble_matches_public_pipeline() {
        use crate::field::generate_realization;
        use crate::mask::apply_mask;
        use crate::oam::project_oam;
        let spec = small_spec(ObjectMask::angular_slits(4, PI / 6.0).unwrap(), 5);
        let mut acc = CorrelationAccumulator::new(spec.l_max);
        for i in 0..5 {
            let f = generate_realization(
                &spec.grid,
                &spec.envelope,
                &spec.coherence,
                spec.master_seed,
                i,
            )
            .unwrap();
            let masked = apply_mask(&f, &spec.mask).unwrap();
            acc.accumulate(
                &spectrum_intensity(&project_oam(&masked, spec.l_max).unwrap()),
                &spectrum_intensity(&project_oam(&f, spec.l_max).unwrap()),
            )
            .unwrap();
        }
        let blocks = reduce_blocks(
            spec.l_max,
            &ensemble_blocks(&spec, 0..5, Execution::Serial).unwrap(),
        )
        .unwrap();
        for (x, y) in acc.sum_products().iter().zip(blocks.sum_products()) {
            assert!((x - y).abs() <= 1e-12 * y.abs().max(1e-300));
        }
    }

    #[test]
    fn uniform_mask_gives_thermal_baseline() {
        let spec = small_spec(ObjectMask::Uniform, 3000);
        let m = run_ensemble(&spec).unwrap();
        for l in m.g2.modes() {
            assert!(
                (m.g2.at(l, l) - 2.0).abs() < 0.2,
                "diag {l}: {}",
                m.g2.at(l, l)
            );
        }
        let off: Vec<f64> =
            m.g2.modes()
                .flat_map(|a| m.g2.modes().filter(move |&b| b != a).map(move |b| (a, b)))
                .map(|(a, b)| m.g2.at(a, b))
                .collect();
        let mean = off.iter().sum::<f64>() / off.len() as f64;
        assert!((mean - 1.0).abs() < 0.03, "off-diagonal mean {mean}");
        assert!(m.g2.data.iter().all(|&v| v.is_finite() && v > 0.0));
    }

    #[test]
    fn delta_signal_is_background_subtracted() {
        let spec = small_spec(ObjectMask::Uniform, 100);
        let m = run_ensemble(&spec).unwrap();
        let d = delta_g2_from_matrix(&m);
        let (lt, lr) = (2, -3);
        let expect = m.raw_mean_product.at(lt, lr) - m.mean_test_at(lt) * m.mean_reference_at(lr);
        assert_eq!(d.at(lt, lr), expect);
        let se = m.delta_stderr();
        assert!(m.g2.modes().all(|l| d.at(l, l) > 0.0));
        assert!(d.data.iter().zip(&se.data).all(|(v, s)| *v >= -5.0 * s));
    }

    #[test]
    fn repeats_report_spread() {
        let spec = small_spec(ObjectMask::Uniform, 64);
        let r = run_repeats(&spec, 3, Execution::Serial).unwrap();
        assert_eq!(r.repeats.len(), 3);
        assert_ne!(r.repeats[0].g2, r.repeats[1].g2);
        assert!(r.spread_g2.data.iter().all(|&s| s.is_finite() && s >= 0.0));
        assert!(run_repeats(&spec, 1, Execution::Serial).is_err());
    }

    #[test]
    fn spec_validation() {
        let mut spec = small_spec(ObjectMask::Uniform, 1);
        assert!(matches!(
            run_ensemble(&spec),
            Err(Error::InsufficientRealizations(1))
        ));
        spec.realizations = 10;
        spec.l_max = 9;
        assert!(matches!(run_ensemble(&spec), Err(Error::Aliasing { .. })));
    }

    #[test]
    fn block_ranges_are_aligned() {
        assert_eq!(block_ranges(0..130), vec![0..64, 64..128, 128..130]);
        assert_eq!(block_ranges(100..130), vec![100..128, 128..130]);
        assert!(block_ranges(5..5).is_empty());
    }
}
