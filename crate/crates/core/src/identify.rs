//! Recovering object descriptors from a correlation matrix.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::correlate::{delta_g2_from_matrix, CorrelationMatrix, ModeMatrix};
use crate::error::{Error, Result};

/// One entry of a matrix row: mode (or mode difference), value, error bar.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowPoint {
    pub l: i64,
    pub value: f64,
    pub stderr: f64,
}

/// Mean of each diagonal `l_t - l_r = dl` of `values`, with the RMS of the
/// matching `errors` as its error bar, for `|dl| <= 2 l_max`.
///
/// For azimuthally symmetric envelopes the signal term depends on `l_t` and
/// `l_r` only through `dl`, so this is a lower-variance estimate of the same
/// profile a single row samples.
pub fn diagonal_means(values: &ModeMatrix, errors: &ModeMatrix) -> Result<Vec<RowPoint>> {
    if errors.l_max != values.l_max {
        return Err(Error::WindowMismatch(values.l_max, errors.l_max));
    }
    let span = 2 * values.l_max as i64;
    Ok((-span..=span)
        .map(|dl| {
            let (mut sum, mut var, mut n) = (0.0, 0.0, 0usize);
            for lr in values.modes() {
                if values.contains(lr + dl) {
                    sum += values.at(lr + dl, lr);
                    var += errors.at(lr + dl, lr).powi(2);
                    n += 1;
                }
            }
            RowPoint {
                l: dl,
                value: sum / n as f64,
                stderr: (var / n as f64).sqrt(),
            }
        })
        .collect())
}

/// Entries `(l_t, values[l_t][l_r], errors[l_t][l_r])` for fixed `l_r`.
pub fn matrix_row(values: &ModeMatrix, errors: &ModeMatrix, l_r: i64) -> Result<Vec<RowPoint>> {
    if !values.contains(l_r) {
        return Err(Error::OutOfWindow {
            l: l_r,
            l_max: values.l_max,
        });
    }
    if errors.l_max != values.l_max {
        return Err(Error::WindowMismatch(values.l_max, errors.l_max));
    }
    Ok(values
        .modes()
        .map(|l_t| RowPoint {
            l: l_t,
            value: values.at(l_t, l_r),
            stderr: errors.at(l_t, l_r),
        })
        .collect())
}

/// The `g2` section at fixed reference mode `l_r`, indexed by `l_t`.
pub fn extract_row(m: &CorrelationMatrix, l_r: i64) -> Result<Vec<RowPoint>> {
    matrix_row(&m.g2, &m.stderr_g2, l_r)
}

/// Background-subtracted signal at fixed `l_r`, indexed by `l_t`, with its
/// standard error in the same raw units.
pub fn delta_row(m: &CorrelationMatrix, l_r: i64) -> Result<Vec<RowPoint>> {
    matrix_row(&delta_g2_from_matrix(m), &m.delta_stderr(), l_r)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymmetryReport {
    pub best_n: Option<u32>,
    /// Contrast score per candidate order before harmonic attribution.
    pub scores: BTreeMap<u32, f64>,
    /// Scores after entries at multiples of an accepted fundamental have been
    /// attributed to it (set to zero).
    pub suppressed_scores: BTreeMap<u32, f64>,
    pub fundamentals: Vec<u32>,
    pub threshold: f64,
}

pub const DEFAULT_THRESHOLD: f64 = 3.0;

/// Mean of `g2 - 1` over all entries with `|l_t - l_r| = n`, in units of the
/// root-mean-square standard error of those entries.
pub fn contrast_score(g2: &ModeMatrix, stderr: &ModeMatrix, n: u32) -> f64 {
    let (mut sum, mut var, mut count) = (0.0, 0.0, 0usize);
    for lt in g2.modes() {
        for lr in g2.modes() {
            if (lt - lr).unsigned_abs() == u64::from(n) {
                sum += g2.at(lt, lr) - 1.0;
                var += stderr.at(lt, lr).powi(2);
                count += 1;
            }
        }
    }
    if count == 0 {
        return 0.0;
    }
    let mean = sum / count as f64;
    let pooled = (var / count as f64).sqrt();
    if mean == 0.0 {
        0.0
    } else if pooled > 0.0 {
        (mean / pooled).clamp(-f64::MAX, f64::MAX)
    } else {
        mean.signum() * f64::MAX
    }
}

/// Finds the rotational symmetry order in `[n_min, n_max]` whose `|dl| = N`
/// bands stand out above the thermal background.
pub fn detect_symmetry_in(
    g2: &ModeMatrix,
    stderr: &ModeMatrix,
    n_range: (u32, u32),
    threshold: f64,
) -> Result<SymmetryReport> {
    let (n_min, n_max) = n_range;
    if n_min == 0 || n_min > n_max {
        return Err(Error::InvalidArgument(format!(
            "symmetry range [{n_min}, {n_max}] must be non-empty and start at 1 or above"
        )));
    }
    if g2.l_max < n_max as usize + 2 {
        return Err(Error::InvalidArgument(format!(
            "mode window l_max = {} is too small for N_max = {n_max} (needs N_max + 2)",
            g2.l_max
        )));
    }
    if stderr.l_max != g2.l_max {
        return Err(Error::WindowMismatch(g2.l_max, stderr.l_max));
    }
    let scores: BTreeMap<u32, f64> = (n_min..=n_max)
        .map(|n| (n, contrast_score(g2, stderr, n)))
        .collect();
    let mut fundamentals: Vec<u32> = Vec::new();
    let mut suppressed = BTreeMap::new();
    for (&n, &score) in &scores {
        if fundamentals.iter().any(|f| n % f == 0) {
            suppressed.insert(n, 0.0);
            continue;
        }
        if score >= threshold {
            fundamentals.push(n);
        }
        suppressed.insert(n, score);
    }
    let best_n = fundamentals
        .iter()
        .copied()
        .fold(None, |best: Option<u32>, n| match best {
            Some(b) if suppressed[&b] >= suppressed[&n] => Some(b),
            _ => Some(n),
        });
    Ok(SymmetryReport {
        best_n,
        scores,
        suppressed_scores: suppressed,
        fundamentals,
        threshold,
    })
}

pub fn detect_symmetry(
    m: &CorrelationMatrix,
    n_range: (u32, u32),
    threshold: f64,
) -> Result<SymmetryReport> {
    detect_symmetry_in(&m.g2, &m.stderr_g2, n_range, threshold)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FractionalFit {
    pub u: i64,
    pub v: f64,
    pub m_hat: f64,
    pub amplitude: f64,
    /// Root-mean-square of `signal - model` over the fitted row.
    pub residual: f64,
}

const V_MIN: f64 = 0.001;
const V_MAX: f64 = 0.999;
const V_GRID: usize = 200;

struct RowFit<'a> {
    row: &'a [RowPoint],
    weights: Vec<f64>,
}

impl RowFit<'_> {
    fn shape(dl: i64, u: i64, v: f64) -> f64 {
        let d = dl as f64 - u as f64 - v;
        (2.0 - 2.0 * (TAU * v).cos()) / (d * d)
    }

    /// Best non-negative amplitude and the weighted residual sum of squares.
    fn solve(&self, u: i64, v: f64) -> (f64, f64) {
        let (mut sys, mut sss) = (0.0, 0.0);
        for (p, w) in self.row.iter().zip(&self.weights) {
            let s = Self::shape(p.l, u, v);
            sys += w * p.value * s;
            sss += w * s * s;
        }
        let amp = if sss > 0.0 { (sys / sss).max(0.0) } else { 0.0 };
        let wrss = self
            .row
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * (p.value - amp * Self::shape(p.l, u, v)).powi(2))
            .sum();
        (amp, wrss)
    }

    /// Grid scan over `v`, then golden-section refinement around the best node.
    fn best_v(&self, u: i64) -> (f64, f64) {
        let step = (V_MAX - V_MIN) / V_GRID as f64;
        let (mut best_v, mut best) = (V_MIN, f64::INFINITY);
        for i in 0..=V_GRID {
            let v = V_MIN + i as f64 * step;
            let (_, r) = self.solve(u, v);
            if r < best {
                best = r;
                best_v = v;
            }
        }
        let (mut a, mut b) = ((best_v - step).max(V_MIN), (best_v + step).min(V_MAX));
        let ratio = (5f64.sqrt() - 1.0) / 2.0;
        let mut c = b - ratio * (b - a);
        let mut d = a + ratio * (b - a);
        let (mut fc, mut fd) = (self.solve(u, c).1, self.solve(u, d).1);
        while b - a > 1e-13 {
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - ratio * (b - a);
                fc = self.solve(u, c).1;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + ratio * (b - a);
                fd = self.solve(u, d).1;
            }
        }
        let v = 0.5 * (a + b);
        let r = self.solve(u, v).1;
        if r <= best {
            (v, r)
        } else {
            (best_v, best)
        }
    }
}

/// Weighted least-squares fit of `A (2 - 2 cos 2 pi v) / (dl - u - v)^2` to
/// a background-subtracted row, scanning integer `u` over `u_range`
/// (inclusive) and `v` over `(0.001, 0.999)`.
///
/// Points are weighted by `1 / stderr^2` when every error bar is positive,
/// uniformly otherwise.
pub fn fit_fractional(row: &[RowPoint], u_range: (i64, i64)) -> Result<FractionalFit> {
    if row.len() < 7 {
        return Err(Error::Fit(format!(
            "need at least 7 points, got {}",
            row.len()
        )));
    }
    if row.iter().all(|p| p.value == 0.0) {
        return Err(Error::Fit("signal is identically zero".into()));
    }
    if row.iter().any(|p| !p.value.is_finite()) {
        return Err(Error::Fit("signal contains non-finite values".into()));
    }
    if u_range.0 > u_range.1 {
        return Err(Error::InvalidArgument(format!(
            "empty u range [{}, {}]",
            u_range.0, u_range.1
        )));
    }
    let weights = if row.iter().all(|p| p.stderr.is_finite() && p.stderr > 0.0) {
        row.iter().map(|p| 1.0 / (p.stderr * p.stderr)).collect()
    } else {
        vec![1.0; row.len()]
    };
    let fit = RowFit { row, weights };
    let mut best: Option<(i64, f64, f64)> = None;
    for u in u_range.0..=u_range.1 {
        let (v, wrss) = fit.best_v(u);
        if best.is_none_or(|(_, _, b)| wrss < b) {
            best = Some((u, v, wrss));
        }
    }
    let (u, v, _) = best.expect("non-empty u range");
    let (amplitude, _) = fit.solve(u, v);
    if amplitude <= 0.0 {
        return Err(Error::Fit("no positive peak in the signal".into()));
    }
    let residual = (row
        .iter()
        .map(|p| (p.value - amplitude * RowFit::shape(p.l, u, v)).powi(2))
        .sum::<f64>()
        / row.len() as f64)
        .sqrt();
    Ok(FractionalFit {
        u,
        v,
        m_hat: u as f64 + v,
        amplitude,
        residual,
    })
}

/// Fits the `l_r = 0` signal row of a simulated matrix, with `u` searched
/// over the whole window.
pub fn fit_fractional_matrix(m: &CorrelationMatrix) -> Result<FractionalFit> {
    let row = delta_row(m, 0)?;
    let l = m.l_max as i64;
    fit_fractional(&row, (-l, l - 1))
}
