//! Object transmission functions `A(r, phi)` placed in the test arm.

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::field::{PolarGrid, SpeckleField};

#[derive(Clone, Debug, PartialEq)]
pub enum ObjectMask {
    Uniform,
    /// `n` angular openings of width `alpha`, starting at `k * 2 pi / n`.
    AngularSlits {
        n: u32,
        alpha: f64,
    },
    /// Phase-only vortex `exp(i m phi)` with non-integer winding number, the
    /// branch cut on `phi = 0`.
    FractionalVortex {
        m: f64,
    },
    /// Phase-only vortex `exp(i l0 phi)`.
    IntegerVortex {
        l0: i64,
    },
    /// Arbitrary passive transmission sampled on a grid, ring-major.
    CustomRaster {
        grid: PolarGrid,
        samples: Vec<Complex64>,
    },
}

impl ObjectMask {
    pub fn angular_slits(n: u32, alpha: f64) -> Result<Self> {
        let mask = ObjectMask::AngularSlits { n, alpha };
        mask.validate()?;
        Ok(mask)
    }

    pub fn fractional_vortex(m: f64) -> Result<Self> {
        let mask = ObjectMask::FractionalVortex { m };
        mask.validate()?;
        Ok(mask)
    }

    pub fn custom_raster(grid: PolarGrid, samples: Vec<Complex64>) -> Result<Self> {
        let mask = ObjectMask::CustomRaster { grid, samples };
        mask.validate()?;
        Ok(mask)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ObjectMask::Uniform | ObjectMask::IntegerVortex { .. } => Ok(()),
            ObjectMask::AngularSlits { n, alpha } => {
                if *n == 0 {
                    return Err(Error::InvalidMask("slit count must be positive".into()));
                }
                let beta = TAU / f64::from(*n);
                if !(alpha.is_finite() && *alpha > 0.0 && *alpha < beta) {
                    return Err(Error::InvalidMask(format!(
                        "slit width alpha = {alpha} must lie in (0, 2pi/N = {beta})"
                    )));
                }
                Ok(())
            }
            ObjectMask::FractionalVortex { m } => {
                if !m.is_finite() {
                    return Err(Error::InvalidMask(format!(
                        "winding number {m} is not finite"
                    )));
                }
                if m.fract() == 0.0 {
                    return Err(Error::InvalidMask(format!(
                        "fractional vortex needs a non-integer winding number, got {m}; use an integer vortex"
                    )));
                }
                Ok(())
            }
            ObjectMask::CustomRaster { grid, samples } => {
                if samples.len() != grid.len() {
                    return Err(Error::InvalidMask(format!(
                        "raster has {} samples, expected {} x {}",
                        samples.len(),
                        grid.n_r,
                        grid.n_phi
                    )));
                }
                if let Some(z) = samples
                    .iter()
                    .find(|z| !(z.re.is_finite() && z.im.is_finite()) || z.norm() > 1.0 + 1e-12)
                {
                    return Err(Error::InvalidMask(format!(
                        "raster transmission must satisfy |A| <= 1, found {z}"
                    )));
                }
                Ok(())
            }
        }
    }

    /// True when the transmission depends on `phi` only.
    pub fn is_azimuthal(&self) -> bool {
        !matches!(self, ObjectMask::CustomRaster { .. })
    }

    /// Fraction of `|A|^2` averaged over angle, for azimuthal masks.
    pub fn open_fraction(&self) -> Option<f64> {
        match self {
            ObjectMask::Uniform
            | ObjectMask::FractionalVortex { .. }
            | ObjectMask::IntegerVortex { .. } => Some(1.0),
            ObjectMask::AngularSlits { n, alpha } => Some(f64::from(*n) * alpha / TAU),
            ObjectMask::CustomRaster { .. } => None,
        }
    }

    /// The mask sampled at every cell centre of `grid`.
    pub fn raster(&self, grid: &PolarGrid) -> Result<Vec<Complex64>> {
        if let ObjectMask::CustomRaster { grid: own, samples } = self {
            if (own.n_r, own.n_phi) != (grid.n_r, grid.n_phi) {
                return Err(Error::InvalidMask(format!(
                    "raster is {} x {} but field grid is {} x {}",
                    own.n_r, own.n_phi, grid.n_r, grid.n_phi
                )));
            }
            return Ok(samples.clone());
        }
        let ring: Vec<Complex64> = (0..grid.n_phi)
            .map(|k| evaluate_mask(self, 0.0, grid.angle(k)))
            .collect();
        Ok(ring.repeat(grid.n_r))
    }

    pub fn describe(&self) -> Value {
        match self {
            ObjectMask::Uniform => json!({ "type": "uniform" }),
            ObjectMask::AngularSlits { n, alpha } => {
                json!({ "type": "angular_slits", "n": n, "alpha": alpha })
            }
            ObjectMask::FractionalVortex { m } => json!({ "type": "fractional_vortex", "m": m }),
            ObjectMask::IntegerVortex { l0 } => json!({ "type": "integer_vortex", "l0": l0 }),
            ObjectMask::CustomRaster { grid, .. } => {
                json!({ "type": "custom_raster", "n_r": grid.n_r, "n_phi": grid.n_phi })
            }
        }
    }
}

/// Offset of `phi` past the start of its slit period, robust to `phi` landing
/// a rounding error below a period boundary.
fn slit_offset(phi: f64, beta: f64) -> f64 {
    let period = (phi / beta + 1e-12).floor();
    (phi - period * beta).max(0.0)
}

/// Evaluates `A(r, phi)` for `phi` in `[0, 2 pi)`.
pub fn evaluate_mask(mask: &ObjectMask, r: f64, phi: f64) -> Complex64 {
    match mask {
        ObjectMask::Uniform => Complex64::new(1.0, 0.0),
        ObjectMask::AngularSlits { n, alpha } => {
            let beta = TAU / f64::from(*n);
            if slit_offset(phi, beta) < *alpha {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        }
        ObjectMask::FractionalVortex { m } => Complex64::from_polar(1.0, m * phi),
        ObjectMask::IntegerVortex { l0 } => Complex64::from_polar(1.0, *l0 as f64 * phi),
        ObjectMask::CustomRaster { grid, samples } => {
            let j = grid.nearest_radius_cell(r);
            let k = grid.nearest_angle_cell(phi);
            samples[j * grid.n_phi + k]
        }
    }
}

/// Pointwise product `E(r, phi) A(r, phi)`.
pub fn apply_mask(field: &SpeckleField, mask: &ObjectMask) -> Result<SpeckleField> {
    if matches!(mask, ObjectMask::Uniform) {
        return Ok(field.clone());
    }
    let raster = mask.raster(&field.grid)?;
    let samples = field
        .samples
        .iter()
        .zip(&raster)
        .map(|(e, a)| e * a)
        .collect();
    Ok(SpeckleField {
        samples,
        ..field.clone()
    })
}

/// `m = u + v` with `u = floor(m)` and `v` in `[0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FloorDecomposition {
    pub u: i64,
    pub v: f64,
}

impl FloorDecomposition {
    pub fn winding(&self) -> f64 {
        self.u as f64 + self.v
    }
}

pub fn floor_decompose(m: f64) -> FloorDecomposition {
    let u = m.floor();
    FloorDecomposition {
        u: u as i64,
        v: m - u,
    }
}

/// Parses a raster file: a header line `n_r n_phi` followed by one
/// `re im` pair per cell, ring-major.
pub fn parse_raster(text: &str, grid: &PolarGrid) -> std::result::Result<ObjectMask, String> {
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));
    let header = lines.next().ok_or("empty raster file")?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| {
            t.parse::<usize>()
                .map_err(|e| format!("bad header `{header}`: {e}"))
        })
        .collect::<std::result::Result<_, _>>()?;
    if dims.len() != 2 {
        return Err(format!("header must be `n_r n_phi`, got `{header}`"));
    }
    if (dims[0], dims[1]) != (grid.n_r, grid.n_phi) {
        return Err(format!(
            "raster is {} x {} but grid is {} x {}",
            dims[0], dims[1], grid.n_r, grid.n_phi
        ));
    }
    let mut samples = Vec::with_capacity(grid.len());
    for (i, line) in lines.enumerate() {
        let vals: Vec<f64> = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<f64>().map_err(|e| format!("cell {i}: {e}")))
            .collect::<std::result::Result<_, _>>()?;
        if vals.len() != 2 {
            return Err(format!("cell {i}: expected `re im`, got `{line}`"));
        }
        samples.push(Complex64::new(vals[0], vals[1]));
    }
    if samples.len() != grid.len() {
        return Err(format!(
            "raster has {} cells, header promises {}",
            samples.len(),
            grid.len()
        ));
    }
    ObjectMask::custom_raster(*grid, samples).map_err(|e| e.to_string())
}

pub fn load_raster(path: &Path, grid: &PolarGrid) -> Result<ObjectMask> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_raster(&text, grid).map_err(|message| Error::Parse {
        path: path.to_path_buf(),
        message,
    })
}

pub fn format_raster(grid: &PolarGrid, samples: &[Complex64]) -> String {
    let mut out = format!("{} {}\n", grid.n_r, grid.n_phi);
    for z in samples {
        let _ = writeln!(out, "{} {}", z.re, z.im);
    }
    out
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::field::{generate_realization, make_grid, total_power, CoherenceSpec, Envelope};

    #[test]
    fn slit_membership() {
        let m = ObjectMask::angular_slits(4, PI / 6.0).unwrap();
        assert_eq!(evaluate_mask(&m, 0.5, 0.0), Complex64::new(1.0, 0.0));
        assert_eq!(
            evaluate_mask(&m, 0.5, PI / 6.0 + 0.01),
            Complex64::new(0.0, 0.0)
        );
        assert_eq!(
            evaluate_mask(&m, 0.5, PI / 2.0 + 0.01),
            Complex64::new(1.0, 0.0)
        );
        assert_eq!(evaluate_mask(&m, 0.5, PI - 0.01), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn slit_validation() {
        assert!(ObjectMask::angular_slits(4, PI / 2.0).is_err());
        assert!(ObjectMask::angular_slits(4, 0.0).is_err());
        assert!(ObjectMask::angular_slits(0, 0.1).is_err());
        assert!(ObjectMask::angular_slits(6, PI / 8.0).is_ok());
    }

    #[test]
    fn vortices_are_phase_only() {
        let m = ObjectMask::fractional_vortex(-2.0 / 3.0).unwrap();
        for i in 0..100 {
            let phi = TAU * f64::from(i) / 100.0;
            assert!((evaluate_mask(&m, 1.0, phi).norm() - 1.0).abs() < 1e-15);
        }
        assert!(ObjectMask::fractional_vortex(2.0).is_err());
    }

    #[test]
    fn floor_decomposition_cases() {
        assert_eq!(floor_decompose(-0.5), FloorDecomposition { u: -1, v: 0.5 });
        let d = floor_decompose(-8.0 / 3.0);
        assert_eq!(d.u, -3);
        assert!((d.v - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(d.winding(), -8.0 / 3.0);
        assert_eq!(floor_decompose(2.0), FloorDecomposition { u: 2, v: 0.0 });
        assert_eq!(floor_decompose(-5.0 / 2.0).u, -3);
    }

    #[test]
    fn uniform_mask_is_identity() {
        let g = make_grid(8, 32, 1.0).unwrap();
        let f = generate_realization(
            &g,
            &Envelope::Gaussian { waist: 0.5 },
            &CoherenceSpec::DeltaCorrelated,
            1,
            2,
        )
        .unwrap();
        assert_eq!(apply_mask(&f, &ObjectMask::Uniform).unwrap(), f);
    }

    #[test]
    fn phase_masks_conserve_power() {
        let g = make_grid(16, 64, 1.0).unwrap();
        let f = generate_realization(
            &g,
            &Envelope::Gaussian { waist: 0.5 },
            &CoherenceSpec::DeltaCorrelated,
            1,
            2,
        )
        .unwrap();
        let masked = apply_mask(&f, &ObjectMask::fractional_vortex(-2.0 / 3.0).unwrap()).unwrap();
        for (a, b) in f.samples.iter().zip(&masked.samples) {
            assert!((a.norm() - b.norm()).abs() <= 1e-15 * a.norm().max(1e-300));
        }
        let (p0, p1) = (total_power(&f), total_power(&masked));
        assert!((p0 - p1).abs() <= 1e-12 * p0);
        assert_eq!(masked.master_seed, f.master_seed);
        assert_eq!(masked.realization_index, f.realization_index);
    }

    #[test]
    fn slit_open_fraction_on_grid() {
        let g = make_grid(4, 256, 1.0).unwrap();
        for (n, alpha) in [(4, PI / 6.0), (6, PI / 8.0), (3, PI / 6.0), (5, PI / 10.0)] {
            let m = ObjectMask::angular_slits(n, alpha).unwrap();
            let raster = m.raster(&g).unwrap();
            let frac = raster.iter().map(|a| a.norm_sqr()).sum::<f64>() / raster.len() as f64;
            let expected = f64::from(n) * alpha / TAU;
            assert!(
                (frac - expected).abs() <= f64::from(n) / g.n_phi as f64,
                "N={n}: {frac} vs {expected}"
            );
        }
    }

    #[test]
    fn slit_power_ratio_over_ensemble() {
        let g = make_grid(8, 256, 1.0).unwrap();
        let env = Envelope::UniformDisk { radius: 1.0 };
        let m = ObjectMask::angular_slits(4, PI / 6.0).unwrap();
        let (mut p_in, mut p_out) = (0.0, 0.0);
        for i in 0..1000 {
            let f = generate_realization(&g, &env, &CoherenceSpec::DeltaCorrelated, 77, i).unwrap();
            p_in += total_power(&f);
            p_out += total_power(&apply_mask(&f, &m).unwrap());
        }
        let ratio = p_out / p_in;
        // Cell-centre sampling opens 22 of every 64 cells, not 21.33.
        let open_cells = m
            .raster(&g)
            .unwrap()
            .iter()
            .filter(|a| a.norm() > 0.5)
            .count();
        let sampled = open_cells as f64 / g.len() as f64;
        assert!((sampled - 1.0 / 3.0).abs() <= 4.0 / 256.0);
        assert!((ratio - sampled).abs() < 0.01, "ratio {ratio} vs {sampled}");
    }

    #[test]
    fn raster_dimension_mismatch() {
        let g = make_grid(4, 16, 1.0).unwrap();
        let other = make_grid(4, 32, 1.0).unwrap();
        let m =
            ObjectMask::custom_raster(other, vec![Complex64::new(1.0, 0.0); other.len()]).unwrap();
        let f = SpeckleField::zeros(g);
        assert!(apply_mask(&f, &m).is_err());
        assert!(ObjectMask::custom_raster(g, vec![Complex64::new(1.5, 0.0); g.len()]).is_err());
    }

    #[test]
    fn raster_text_round_trip() {
        let g = make_grid(3, 8, 1.0).unwrap();
        let samples: Vec<Complex64> = (0..g.len())
            .map(|i| Complex64::from_polar(0.5, i as f64 * 0.1))
            .collect();
        let text = format_raster(&g, &samples);
        let mask = parse_raster(&text, &g).unwrap();
        assert_eq!(
            mask,
            ObjectMask::CustomRaster {
                grid: g,
                samples: samples.clone()
            }
        );
        assert_eq!(
            evaluate_mask(&mask, g.radius(1), g.angle(5)),
            samples[8 + 5]
        );
        assert!(parse_raster("3 9\n", &g).is_err());
        assert!(parse_raster("3 8\n0 0\n", &g).is_err());
    }
}
