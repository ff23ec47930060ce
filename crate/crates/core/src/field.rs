//! Polar grid and pseudothermal speckle fields.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{CellStream, MAX_CELL_AXIS};

/// Cell-centred polar grid over the disk `r < r_max`.
///
/// Radial nodes sit at `r_j = (j + 1/2) dr`, azimuthal nodes at
/// `phi_k = 2 pi k / n_phi`, and each cell carries the area weight
/// `r_j dr dphi`. Samples are stored ring-major: index `j * n_phi + k`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolarGrid {
    pub n_r: usize,
    pub n_phi: usize,
    pub r_max: f64,
}

pub fn make_grid(n_r: usize, n_phi: usize, r_max: f64) -> Result<PolarGrid> {
    let grid = PolarGrid { n_r, n_phi, r_max };
    grid.validate()?;
    Ok(grid)
}

impl PolarGrid {
    pub fn validate(&self) -> Result<()> {
        if self.n_r == 0 || self.n_phi == 0 {
            return Err(Error::InvalidGrid(format!(
                "dimensions must be positive (n_r = {}, n_phi = {})",
                self.n_r, self.n_phi
            )));
        }
        if self.n_r > MAX_CELL_AXIS || self.n_phi > MAX_CELL_AXIS {
            return Err(Error::InvalidGrid(format!(
                "n_r and n_phi are limited to {MAX_CELL_AXIS} (n_r = {}, n_phi = {})",
                self.n_r, self.n_phi
            )));
        }
        if self.n_phi % 2 != 0 {
            return Err(Error::InvalidGrid(format!(
                "n_phi must be even, got {}",
                self.n_phi
            )));
        }
        if !(self.r_max.is_finite() && self.r_max > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "r_max must be positive and finite, got {}",
                self.r_max
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.n_r * self.n_phi
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dr(&self) -> f64 {
        self.r_max / self.n_r as f64
    }

    pub fn dphi(&self) -> f64 {
        TAU / self.n_phi as f64
    }

    pub fn radius(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.dr()
    }

    pub fn angle(&self, k: usize) -> f64 {
        TAU * k as f64 / self.n_phi as f64
    }

    /// Quadrature weight of any cell on ring `j`.
    pub fn weight(&self, j: usize) -> f64 {
        self.radius(j) * self.dr() * self.dphi()
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.n_r).map(|j| self.weight(j)).collect()
    }

    /// Disk area, `pi r_max^2`.
    pub fn area(&self) -> f64 {
        PI * self.r_max * self.r_max
    }

    /// Rejects mode windows that would alias on this grid (`n_phi >= 8 l_max`).
    pub fn check_window(&self, l_max: usize, what: &'static str) -> Result<()> {
        let limit = 8 * l_max;
        if self.n_phi < limit {
            return Err(Error::Aliasing {
                n_phi: self.n_phi,
                what,
                limit,
            });
        }
        Ok(())
    }

    /// Nearest azimuthal cell for an angle already reduced to `[0, 2 pi)`.
    pub fn nearest_angle_cell(&self, phi: f64) -> usize {
        ((phi / self.dphi()).round() as usize) % self.n_phi
    }

    pub fn nearest_radius_cell(&self, r: f64) -> usize {
        let j = (r / self.dr() - 0.5).round();
        (j.max(0.0) as usize).min(self.n_r - 1)
    }
}

/// Mean-intensity profile `|E(r)|^2` of the speckle beam.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Envelope {
    Gaussian { waist: f64 },
    UniformDisk { radius: f64 },
    CustomRadial { samples: Vec<f64> },
}

impl Envelope {
    pub fn validate(&self, grid: &PolarGrid) -> Result<()> {
        match self {
            Envelope::Gaussian { waist } => {
                if !(waist.is_finite() && *waist > 0.0) {
                    return Err(Error::InvalidEnvelope(format!(
                        "gaussian waist must be positive, got {waist}"
                    )));
                }
            }
            Envelope::UniformDisk { radius } => {
                if !(radius.is_finite() && *radius > 0.0 && *radius <= grid.r_max) {
                    return Err(Error::InvalidEnvelope(format!(
                        "uniform disk radius must lie in (0, r_max = {}], got {radius}",
                        grid.r_max
                    )));
                }
            }
            Envelope::CustomRadial { samples } => {
                if samples.len() != grid.n_r {
                    return Err(Error::InvalidEnvelope(format!(
                        "custom radial profile has {} samples, grid has n_r = {}",
                        samples.len(),
                        grid.n_r
                    )));
                }
                if let Some(bad) = samples.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                    return Err(Error::InvalidEnvelope(format!(
                        "custom radial samples must be non-negative, found {bad}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Envelope value on ring `j`; this is the per-cell variance of the field.
    pub fn value(&self, grid: &PolarGrid, j: usize) -> f64 {
        let r = grid.radius(j);
        match self {
            Envelope::Gaussian { waist } => (-2.0 * r * r / (waist * waist)).exp(),
            Envelope::UniformDisk { radius } => {
                if r <= *radius {
                    1.0
                } else {
                    0.0
                }
            }
            Envelope::CustomRadial { samples } => samples[j],
        }
    }

    pub fn profile(&self, grid: &PolarGrid) -> Vec<f64> {
        (0..grid.n_r).map(|j| self.value(grid, j)).collect()
    }
}

/// Transverse coherence of the generated field.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoherenceSpec {
    /// One independent complex Gaussian per cell.
    #[default]
    DeltaCorrelated,
    /// Box-average of `correlation_cells` cells in r and phi, re-normalized to
    /// unit variance before the envelope is applied.
    Smoothed { correlation_cells: usize },
}

impl CoherenceSpec {
    pub fn validate(&self, grid: &PolarGrid) -> Result<()> {
        if let CoherenceSpec::Smoothed { correlation_cells } = *self {
            let bound = grid.n_r.min(grid.n_phi);
            if correlation_cells == 0 || 4 * correlation_cells >= bound {
                return Err(Error::InvalidCoherence(format!(
                    "correlation_cells must be positive and below min(n_r, n_phi)/4 = {}, got {correlation_cells}",
                    bound as f64 / 4.0
                )));
            }
        }
        Ok(())
    }
}

/// One realization of the random field `E(r, phi)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpeckleField {
    pub grid: PolarGrid,
    pub samples: Vec<Complex64>,
    pub master_seed: u64,
    pub realization_index: u64,
}

impl SpeckleField {
    pub fn zeros(grid: PolarGrid) -> Self {
        Self {
            grid,
            samples: vec![Complex64::new(0.0, 0.0); grid.len()],
            master_seed: 0,
            realization_index: 0,
        }
    }

    /// Builds a field by evaluating `f(r, phi)` at every cell centre.
    pub fn from_fn(grid: PolarGrid, mut f: impl FnMut(f64, f64) -> Complex64) -> Self {
        let mut samples = Vec::with_capacity(grid.len());
        for j in 0..grid.n_r {
            let r = grid.radius(j);
            for k in 0..grid.n_phi {
                samples.push(f(r, grid.angle(k)));
            }
        }
        Self {
            grid,
            samples,
            master_seed: 0,
            realization_index: 0,
        }
    }

    pub fn at(&self, j: usize, k: usize) -> Complex64 {
        self.samples[j * self.grid.n_phi + k]
    }

    pub fn ring(&self, j: usize) -> &[Complex64] {
        let n = self.grid.n_phi;
        &self.samples[j * n..(j + 1) * n]
    }
}

pub fn generate_realization(
    grid: &PolarGrid,
    env: &Envelope,
    coh: &CoherenceSpec,
    master_seed: u64,
    index: u64,
) -> Result<SpeckleField> {
    grid.validate()?;
    env.validate(grid)?;
    coh.validate(grid)?;
    let sigma: Vec<f64> = env.profile(grid).into_iter().map(f64::sqrt).collect();
    let mut samples = vec![Complex64::new(0.0, 0.0); grid.len()];
    fill_samples(grid, &sigma, coh, master_seed, index, &mut samples);
    Ok(SpeckleField {
        grid: *grid,
        samples,
        master_seed,
        realization_index: index,
    })
}

/// Writes one realization into `out` given per-ring standard deviations.
/// Inputs are assumed validated.
pub(crate) fn fill_samples(
    grid: &PolarGrid,
    sigma: &[f64],
    coh: &CoherenceSpec,
    master_seed: u64,
    index: u64,
    out: &mut [Complex64],
) {
    debug_assert_eq!(out.len(), grid.len());
    let stream = CellStream::new(master_seed, index);
    let mut normals = vec![(0.0, 0.0); grid.n_phi];
    match *coh {
        CoherenceSpec::DeltaCorrelated => {
            for (j, ring) in out.chunks_exact_mut(grid.n_phi).enumerate() {
                let scale = sigma[j] * std::f64::consts::FRAC_1_SQRT_2;
                stream.fill_normals(j as u32, &mut normals);
                for (cell, &(g1, g2)) in ring.iter_mut().zip(&normals) {
                    *cell = Complex64::new(scale * g1, scale * g2);
                }
            }
        }
        CoherenceSpec::Smoothed { correlation_cells } => {
            let (n_r, n_phi) = (grid.n_r, grid.n_phi);
            let mut white = vec![Complex64::new(0.0, 0.0); grid.len()];
            for (j, ring) in white.chunks_exact_mut(n_phi).enumerate() {
                stream.fill_normals(j as u32, &mut normals);
                for (cell, &(g1, g2)) in ring.iter_mut().zip(&normals) {
                    *cell = Complex64::new(g1, g2) * std::f64::consts::FRAC_1_SQRT_2;
                }
            }
            let width = correlation_cells as isize;
            let start = -(width / 2);
            for j in 0..n_r {
                for k in 0..n_phi {
                    let mut acc = Complex64::new(0.0, 0.0);
                    let mut count = 0usize;
                    for dj in start..start + width {
                        let jj = j as isize + dj;
                        if jj < 0 || jj >= n_r as isize {
                            continue;
                        }
                        for dk in start..start + width {
                            let kk = (k as isize + dk).rem_euclid(n_phi as isize) as usize;
                            acc += white[jj as usize * n_phi + kk];
                            count += 1;
                        }
                    }
                    out[j * n_phi + k] = acc * (sigma[j] / (count as f64).sqrt());
                }
            }
        }
    }
}

/// Discrete `sum_jk w_jk |E_jk|^2`.
pub fn total_power(field: &SpeckleField) -> f64 {
    let grid = &field.grid;
    field
        .samples
        .chunks_exact(grid.n_phi)
        .enumerate()
        .map(|(j, ring)| grid.weight(j) * ring.iter().map(|z| z.norm_sqr()).sum::<f64>())
        .sum()
}
