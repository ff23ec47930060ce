//! Projection of fields onto OAM modes `exp(i l phi)`.
//!
//! The amplitude of mode `l` is
//! `a_l = sum_jk w_jk E_jk exp(-i l phi_k) / sqrt(2 pi)`. Because the cell
//! weight depends on the ring only, the radial sum is taken first and a single
//! length-`n_phi` DFT produces every `a_l` at once.

use std::f64::consts::TAU;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::field::{PolarGrid, SpeckleField};

fn window_index(l: i64, l_max: usize) -> Option<usize> {
    let idx = l + l_max as i64;
    (0..=2 * l_max as i64)
        .contains(&idx)
        .then_some(idx as usize)
}

/// Complex amplitudes `a_l` for `l` in `[-l_max, l_max]`.
#[derive(Clone, Debug, PartialEq)]
pub struct OamSpectrum {
    pub l_max: usize,
    pub amplitudes: Vec<Complex64>,
}

impl OamSpectrum {
    pub fn zeros(l_max: usize) -> Self {
        Self {
            l_max,
            amplitudes: vec![Complex64::new(0.0, 0.0); 2 * l_max + 1],
        }
    }

    pub fn get(&self, l: i64) -> Option<Complex64> {
        window_index(l, self.l_max).map(|i| self.amplitudes[i])
    }

    pub fn modes(&self) -> impl Iterator<Item = i64> {
        let l_max = self.l_max as i64;
        -l_max..=l_max
    }
}

/// Mode intensities `I_l = |a_l|^2`.
#[derive(Clone, Debug, PartialEq)]
pub struct IntensitySpectrum {
    pub l_max: usize,
    pub intensities: Vec<f64>,
}

impl IntensitySpectrum {
    pub fn get(&self, l: i64) -> Option<f64> {
        window_index(l, self.l_max).map(|i| self.intensities[i])
    }
}

pub fn spectrum_intensity(spec: &OamSpectrum) -> IntensitySpectrum {
    IntensitySpectrum {
        l_max: spec.l_max,
        intensities: spec.amplitudes.iter().map(|a| a.norm_sqr()).collect(),
    }
}

/// Reusable projector for one grid and mode window.
#[derive(Clone)]
pub struct OamProjector {
    grid: PolarGrid,
    l_max: usize,
    weights: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for OamProjector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OamProjector")
            .field("grid", &self.grid)
            .field("l_max", &self.l_max)
            .finish_non_exhaustive()
    }
}

impl OamProjector {
    pub fn new(grid: &PolarGrid, l_max: usize) -> Result<Self> {
        grid.validate()?;
        if l_max == 0 {
            return Err(Error::InvalidArgument("l_max must be positive".into()));
        }
        grid.check_window(l_max, "l_max")?;
        let fft = FftPlanner::new().plan_fft_forward(grid.n_phi);
        Ok(Self {
            grid: *grid,
            l_max,
            weights: grid.weights(),
            fft,
        })
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    /// Projects ring-major `samples`, optionally multiplied cell-by-cell by
    /// `transmission`, onto the mode window. `buf` is scratch space.
    pub fn project_into(
        &self,
        samples: &[Complex64],
        transmission: Option<&[Complex64]>,
        buf: &mut Vec<Complex64>,
    ) -> OamSpectrum {
        let n_phi = self.grid.n_phi;
        buf.clear();
        buf.resize(n_phi, Complex64::new(0.0, 0.0));
        match transmission {
            None => {
                for (ring, &w) in samples.chunks_exact(n_phi).zip(&self.weights) {
                    for (acc, z) in buf.iter_mut().zip(ring) {
                        *acc += z * w;
                    }
                }
            }
            Some(mask) => {
                for ((ring, mring), &w) in samples
                    .chunks_exact(n_phi)
                    .zip(mask.chunks_exact(n_phi))
                    .zip(&self.weights)
                {
                    for ((acc, z), a) in buf.iter_mut().zip(ring).zip(mring) {
                        *acc += z * a * w;
                    }
                }
            }
        }
        self.fft.process(buf);
        let norm = 1.0 / TAU.sqrt();
        let amplitudes = (-(self.l_max as i64)..=self.l_max as i64)
            .map(|l| buf[l.rem_euclid(n_phi as i64) as usize] * norm)
            .collect();
        OamSpectrum {
            l_max: self.l_max,
            amplitudes,
        }
    }
}

pub fn project_oam(field: &SpeckleField, l_max: usize) -> Result<OamSpectrum> {
    let projector = OamProjector::new(&field.grid, l_max)?;
    let mut buf = Vec::new();
    Ok(projector.project_into(&field.samples, None, &mut buf))
}

/// Ring-resolved amplitudes over the full alias-free band
/// `l = -n_phi/2 .. n_phi/2 - 1`:
/// `a_l(r_j) = sum_k E_jk exp(-i l phi_k) dphi / sqrt(2 pi)`.
///
/// Returned as `[ring][l + n_phi/2]`. With these,
/// `sum_l sum_j r_j dr |a_l(r_j)|^2` equals [`crate::total_power`] exactly.
pub fn ring_spectra(field: &SpeckleField) -> Vec<Vec<Complex64>> {
    let grid = &field.grid;
    let n = grid.n_phi;
    let fft = FftPlanner::new().plan_fft_forward(n);
    let scale = grid.dphi() / TAU.sqrt();
    (0..grid.n_r)
        .map(|j| {
            let mut buf = field.ring(j).to_vec();
            fft.process(&mut buf);
            let half = (n / 2) as i64;
            (-half..half)
                .map(|l| buf[l.rem_euclid(n as i64) as usize] * scale)
                .collect()
        })
        .collect()
}
