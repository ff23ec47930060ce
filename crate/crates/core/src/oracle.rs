//! Noise-free references for the correlation signal term.
//!
//! For an object `A(r, phi)` in the test arm and mean intensity `|E(r)|^2`,
//! the background-subtracted correlation as a function of `dl = l_t - l_r` is
//!
//! `S(dl) = | int r dr dphi |E(r)|^2 A(r, phi) exp(-i dl phi) / 2 pi |^2`.
//!
//! [`quadrature_signal`] evaluates that integral numerically; the closed forms
//! [`analytic_slits`] and [`analytic_fractional`] give the same shapes for the
//! two object families.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::field::{Envelope, PolarGrid};
use crate::mask::{evaluate_mask, floor_decompose, ObjectMask};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    Raw,
    PeakNormalized,
}

/// Signal as a function of `dl` over `[-dl_max, dl_max]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalProfile {
    pub dl_max: usize,
    pub values: Vec<f64>,
    pub normalization: Normalization,
}

impl SignalProfile {
    pub fn from_fn(dl_max: usize, f: impl Fn(i64) -> f64) -> Self {
        let d = dl_max as i64;
        Self {
            dl_max,
            values: (-d..=d).map(f).collect(),
            normalization: Normalization::Raw,
        }
    }

    pub fn shifts(&self) -> std::ops::RangeInclusive<i64> {
        -(self.dl_max as i64)..=self.dl_max as i64
    }

    pub fn get(&self, dl: i64) -> Option<f64> {
        let idx = dl + self.dl_max as i64;
        (0..self.values.len() as i64)
            .contains(&idx)
            .then(|| self.values[idx as usize])
    }

    pub fn peak(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Scaled so the maximum is 1. A profile with no positive value is
    /// returned unchanged apart from the tag.
    pub fn peak_normalized(&self) -> Self {
        let peak = self.peak();
        let values = if peak > 0.0 {
            self.values.iter().map(|v| v / peak).collect()
        } else {
            self.values.clone()
        };
        Self {
            dl_max: self.dl_max,
            values,
            normalization: Normalization::PeakNormalized,
        }
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub(crate) fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Composite Gauss–Legendre quadrature of a complex function over `[a, b]`.
struct AngularQuadrature {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    max_panel: f64,
}

impl AngularQuadrature {
    fn new() -> Self {
        let (nodes, weights) = gauss_legendre(20);
        Self {
            nodes,
            weights,
            max_panel: PI / 16.0,
        }
    }

    fn integrate(&self, a: f64, b: f64, f: impl Fn(f64) -> Complex64) -> Complex64 {
        if b <= a {
            return Complex64::new(0.0, 0.0);
        }
        let panels = ((b - a) / self.max_panel).ceil().max(1.0) as usize;
        let h = (b - a) / panels as f64;
        let mut total = Complex64::new(0.0, 0.0);
        for p in 0..panels {
            let lo = a + p as f64 * h;
            let (mid, half) = (lo + 0.5 * h, 0.5 * h);
            for (x, w) in self.nodes.iter().zip(&self.weights) {
                total += f(mid + half * x) * (w * half);
            }
        }
        total
    }
}

/// Intervals of `[0, 2 pi)` on which an azimuthal mask is smooth and nonzero.
fn smooth_pieces(mask: &ObjectMask) -> Vec<(f64, f64)> {
    match mask {
        ObjectMask::AngularSlits { n, alpha } => {
            let beta = TAU / f64::from(*n);
            (0..*n)
                .map(|i| {
                    let start = f64::from(i) * beta;
                    (start, start + alpha)
                })
                .collect()
        }
        _ => vec![(0.0, TAU)],
    }
}

/// Signal term by direct numerical integration, unnormalized.
///
/// Azimuthal masks are integrated in angle with composite Gauss–Legendre
/// panels split at the mask's discontinuities, so the angular integral is
/// accurate to rounding; the radial integral uses the grid's ring weights.
/// Raster masks use the grid's cell quadrature in both coordinates.
pub fn quadrature_signal(
    mask: &ObjectMask,
    env: &Envelope,
    grid: &PolarGrid,
    dl_max: usize,
) -> Result<SignalProfile> {
    grid.validate()?;
    env.validate(grid)?;
    mask.validate()?;
    grid.check_window(dl_max, "dl_max")?;
    let radial: Vec<f64> = (0..grid.n_r)
        .map(|j| grid.radius(j) * grid.dr() * env.value(grid, j))
        .collect();

    let amplitude: Box<dyn Fn(i64) -> Complex64> = if mask.is_azimuthal() {
        let quad = AngularQuadrature::new();
        let pieces = smooth_pieces(mask);
        let radial_sum: f64 = radial.iter().sum();
        let mask = mask.clone();
        Box::new(move |dl| {
            let angular: Complex64 = pieces
                .iter()
                .map(|&(a, b)| {
                    quad.integrate(a, b, |phi| {
                        let value = match mask {
                            // Inside a piece the slit transmission is 1.
                            ObjectMask::AngularSlits { .. } => Complex64::new(1.0, 0.0),
                            ref m => evaluate_mask(m, 0.0, phi),
                        };
                        value * Complex64::from_polar(1.0, -(dl as f64) * phi)
                    })
                })
                .sum();
            angular * (radial_sum / TAU)
        })
    } else {
        let raster = mask.raster(grid)?;
        let grid = *grid;
        Box::new(move |dl| {
            let phase: Vec<Complex64> = (0..grid.n_phi)
                .map(|k| Complex64::from_polar(1.0, -(dl as f64) * grid.angle(k)))
                .collect();
            let mut total = Complex64::new(0.0, 0.0);
            for (j, ring) in raster.chunks_exact(grid.n_phi).enumerate() {
                let ring_sum: Complex64 = ring.iter().zip(&phase).map(|(a, p)| a * p).sum();
                total += ring_sum * radial[j];
            }
            total * (grid.dphi() / TAU)
        })
    };
    Ok(SignalProfile::from_fn(dl_max, |dl| {
        amplitude(dl).norm_sqr()
    }))
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        x.sin() / x
    }
}

/// Closed-form slit signature, normalized so `dl = 0` gives 1:
/// comb factor `|sum_n exp(i n dl beta)|^2 / N^2` times `sinc^2(dl alpha / 2)`.
pub fn analytic_slits(n: u32, alpha: f64, dl: i64) -> Result<f64> {
    ObjectMask::angular_slits(n, alpha)?;
    if dl.rem_euclid(i64::from(n)) != 0 {
        return Ok(0.0);
    }
    Ok(sinc(dl as f64 * alpha / 2.0).powi(2))
}

/// Closed-form fractional-vortex signature `(2 - 2 cos 2 pi v) / (dl - u - v)^2`
/// with `m = u + v`, unnormalized.
pub fn analytic_fractional(m: f64, dl: i64) -> Result<f64> {
    ObjectMask::fractional_vortex(m)?;
    let d = floor_decompose(m);
    let offset = dl as f64 - d.u as f64 - d.v;
    Ok((2.0 - 2.0 * (TAU * d.v).cos()) / (offset * offset))
}

pub fn slits_profile(n: u32, alpha: f64, dl_max: usize) -> Result<SignalProfile> {
    ObjectMask::angular_slits(n, alpha)?;
    let mut p = SignalProfile::from_fn(dl_max, |dl| analytic_slits(n, alpha, dl).unwrap_or(0.0));
    p.normalization = Normalization::PeakNormalized;
    Ok(p)
}

pub fn fractional_profile(m: f64, dl_max: usize) -> Result<SignalProfile> {
    ObjectMask::fractional_vortex(m)?;
    Ok(SignalProfile::from_fn(dl_max, |dl| {
        analytic_fractional(m, dl).unwrap_or(0.0)
    }))
}

/// Closed-form profile for masks that have one, peak-normalized.
pub fn analytic_profile(mask: &ObjectMask, dl_max: usize) -> Option<SignalProfile> {
    match *mask {
        ObjectMask::Uniform => Some(
            SignalProfile::from_fn(dl_max, |dl| if dl == 0 { 1.0 } else { 0.0 }).peak_normalized(),
        ),
        ObjectMask::IntegerVortex { l0 } => Some(
            SignalProfile::from_fn(dl_max, |dl| if dl == l0 { 1.0 } else { 0.0 }).peak_normalized(),
        ),
        ObjectMask::AngularSlits { n, alpha } => slits_profile(n, alpha, dl_max).ok(),
        ObjectMask::FractionalVortex { m } => fractional_profile(m, dl_max)
            .ok()
            .map(|p| p.peak_normalized()),
        ObjectMask::CustomRaster { .. } => None,
    }
}
