//! Peak detection and lineshape fitting on sampled spectra.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::scattering::SpectrumTable;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("spectrum has no valid samples")]
    EmptySpectrum,
    #[error("samples are not sorted by frequency")]
    Unsorted,
    #[error("fit window needs at least {needed} points, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("no peak found in [{0}, {1}]")]
    NoFeature(f64, f64),
    #[error("fit did not converge (normalized residual {0:e})")]
    FitDiverged(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Peak {
    pub omega: f64,
    pub height: f64,
    pub prominence: f64,
}

/// Local maxima of `ys` over sorted `xs`. Non-finite samples are dropped.
///
/// Prominence is measured from the higher of the two bases, each base being
/// the lowest sample between the peak and the nearest higher sample (or the
/// edge) on that side. Flat tops report their midpoint; edges are never peaks.
pub fn find_peaks_xy(
    xs: &[f64],
    ys: &[f64],
    min_height: f64,
    min_prominence: f64,
) -> Result<Vec<Peak>, AnalysisError> {
    let (x, y): (Vec<f64>, Vec<f64>) = xs
        .iter()
        .zip(ys)
        .filter(|(a, b)| a.is_finite() && b.is_finite())
        .map(|(a, b)| (*a, *b))
        .unzip();
    if x.is_empty() {
        return Err(AnalysisError::EmptySpectrum);
    }
    if x.windows(2).any(|w| w[1] < w[0]) {
        return Err(AnalysisError::Unsorted);
    }

    let n = y.len();
    let mut peaks = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if y[i] > y[i - 1] {
            let mut j = i;
            while j + 1 < n && y[j + 1] == y[i] {
                j += 1;
            }
            if j + 1 < n && y[j + 1] < y[i] {
                let mid = (i + j) / 2;
                let left_base = y[..i]
                    .iter()
                    .rev()
                    .take_while(|&&v| v <= y[i])
                    .fold(y[i], |m, &v| m.min(v));
                let right_base = y[j + 1..]
                    .iter()
                    .take_while(|&&v| v <= y[i])
                    .fold(y[i], |m, &v| m.min(v));
                let prominence = y[i] - left_base.max(right_base);
                if y[i] >= min_height && prominence >= min_prominence {
                    peaks.push(Peak {
                        omega: x[mid],
                        height: y[i],
                        prominence,
                    });
                }
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    Ok(peaks)
}

/// Reflection peaks of a spectrum; flagged rows are skipped.
pub fn find_peaks(
    spectrum: &SpectrumTable,
    min_height: f64,
    min_prominence: f64,
) -> Result<Vec<Peak>, AnalysisError> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = spectrum
        .valid_rows()
        .map(|r| (r.omega, r.reflection))
        .unzip();
    find_peaks_xy(&xs, &ys, min_height, min_prominence)
}

/// Full width at half prominence of `peak`, by linear
/// interpolation of the half-level crossings on either side.
pub fn peak_fwhm(xs: &[f64], ys: &[f64], peak: &Peak) -> Option<f64> {
    let k = xs.iter().position(|&x| x == peak.omega)?;
    let level = peak.height - 0.5 * peak.prominence;
    let cross = |range: &mut dyn Iterator<Item = usize>, step: isize| -> Option<f64> {
        for i in range {
            let j = (i as isize - step) as usize;
            if ys[i] < level {
                let t = (ys[j] - level) / (ys[j] - ys[i]);
                return Some(xs[j] + t * (xs[i] - xs[j]));
            }
        }
        None
    };
    let right = cross(&mut (k + 1..xs.len()), 1)?;
    let left = cross(&mut (0..k).rev(), -1)?;
    Some(right - left)
}

/// Window of `half_widths` peak widths on either side of the peak nearest to
/// `target` among those inside `[lo, hi]` with at least `min_prominence`.
pub fn feature_window(
    xs: &[f64],
    ys: &[f64],
    (lo, hi): (f64, f64),
    target: f64,
    half_widths: f64,
    min_prominence: f64,
) -> Result<(f64, f64), AnalysisError> {
    let peaks = find_peaks_xy(xs, ys, f64::NEG_INFINITY, min_prominence)?;
    let best = peaks
        .iter()
        .filter(|p| p.omega >= lo && p.omega <= hi)
        .min_by(|a, b| (a.omega - target).abs().total_cmp(&(b.omega - target).abs()))
        .ok_or(AnalysisError::NoFeature(lo, hi))?;
    let width = peak_fwhm(xs, ys, best).ok_or(AnalysisError::NoFeature(lo, hi))?;
    Ok((best.omega - half_widths * width, best.omega + half_widths * width))
}

/// Samples with `lo <= x <= hi`.
pub fn select_window(xs: &[f64], ys: &[f64], lo: f64, hi: f64) -> (Vec<f64>, Vec<f64>) {
    xs.iter()
        .zip(ys)
        .filter(|(x, y)| **x >= lo && **x <= hi && y.is_finite())
        .map(|(x, y)| (*x, *y))
        .unzip()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LorentzianFit {
    pub center: f64,
    /// Full width at half maximum.
    pub width: f64,
    pub amplitude: f64,
    pub baseline: f64,
    /// Root-mean-square residual.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FanoFit {
    pub q: f64,
    pub omega0: f64,
    pub width: f64,
    pub amplitude: f64,
    pub baseline: f64,
    pub residual: f64,
}

pub const MIN_FIT_POINTS: usize = 8;

/// Fits whose RMS residual exceeds this fraction of the data range are rejected.
pub const DIVERGED_RESIDUAL: f64 = 0.05;

/// `A / (1 + eps^2) + B`, `eps = (x - x0) / (w / 2)`.
pub fn lorentzian(x: f64, center: f64, width: f64, amplitude: f64, baseline: f64) -> f64 {
    let e = 2.0 * (x - center) / width;
    amplitude / (1.0 + e * e) + baseline
}

/// `A (q + eps)^2 / (1 + eps^2) + B`, `eps = (x - x0) / (w / 2)`.
///
/// Fits report the representation with `A > 0`.
pub fn fano(x: f64, q: f64, omega0: f64, width: f64, amplitude: f64, baseline: f64) -> f64 {
    let e = 2.0 * (x - omega0) / width;
    amplitude * (q + e) * (q + e) / (1.0 + e * e) + baseline
}

// Both models are fitted in scaled coordinates u = (x - mid) / span with the
// width parameterized by its logarithm, so every parameter is O(1) and the
// width stays positive.

trait Model {
    const N: usize;
    fn eval(&self, p: &[f64], u: f64, grad: &mut [f64]) -> f64;
}

struct Lorentz;

impl Model for Lorentz {
    const N: usize = 4;
    // p = [A, c, ln w, B]
    fn eval(&self, p: &[f64], u: f64, grad: &mut [f64]) -> f64 {
        let w = p[2].exp();
        let e = 2.0 * (u - p[1]) / w;
        let d = 1.0 + e * e;
        let de = -2.0 * p[0] * e / (d * d);
        grad[0] = 1.0 / d;
        grad[1] = de * (-2.0 / w);
        grad[2] = de * (-e);
        grad[3] = 1.0;
        p[0] / d + p[3]
    }
}

struct FanoModel;

impl Model for FanoModel {
    const N: usize = 5;
    // p = [A, q, c, ln w, B]
    fn eval(&self, p: &[f64], u: f64, grad: &mut [f64]) -> f64 {
        let (a, q) = (p[0], p[1]);
        let w = p[3].exp();
        let e = 2.0 * (u - p[2]) / w;
        let d = 1.0 + e * e;
        let s = q + e;
        let de = 2.0 * a * s * (1.0 - q * e) / (d * d);
        grad[0] = s * s / d;
        grad[1] = 2.0 * a * s / d;
        grad[2] = de * (-2.0 / w);
        grad[3] = de * (-e);
        grad[4] = 1.0;
        a * s * s / d + p[4]
    }
}

fn sse<M: Model>(m: &M, p: &[f64], u: &[f64], y: &[f64]) -> f64 {
    let mut g = vec![0.0; M::N];
    u.iter()
        .zip(y)
        .map(|(&ui, &yi)| (yi - m.eval(p, ui, &mut g)).powi(2))
        .sum()
}

fn levenberg_marquardt<M: Model>(m: &M, mut p: Vec<f64>, u: &[f64], y: &[f64]) -> (Vec<f64>, f64) {
    let (n, k) = (u.len(), M::N);
    let mut cost = sse(m, &p, u, y);
    let mut damping = 1e-3;
    let mut g = vec![0.0; k];
    for _ in 0..2000 {
        let mut jac = DMatrix::<f64>::zeros(n, k);
        let mut r = DVector::<f64>::zeros(n);
        for i in 0..n {
            r[i] = y[i] - m.eval(&p, u[i], &mut g);
            for j in 0..k {
                jac[(i, j)] = g[j];
            }
        }
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &r;
        let mut improved = false;
        while damping < 1e16 {
            let mut a = jtj.clone();
            for j in 0..k {
                a[(j, j)] += damping * jtj[(j, j)].max(1e-12);
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&jtr)) else {
                damping *= 4.0;
                continue;
            };
            let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let trial_cost = sse(m, &trial, u, y);
            if trial_cost.is_finite() && trial_cost < cost {
                let rel = (cost - trial_cost) / cost.max(f64::MIN_POSITIVE);
                p = trial;
                cost = trial_cost;
                damping = (damping / 3.0).max(1e-12);
                improved = rel > 1e-14;
                break;
            }
            damping *= 4.0;
        }
        if !improved {
            break;
        }
    }
    (p, cost)
}

struct Window {
    u: Vec<f64>,
    y: Vec<f64>,
    mid: f64,
    span: f64,
    range: f64,
}

fn prepare(xs: &[f64], ys: &[f64]) -> Result<Window, AnalysisError> {
    let (x, y): (Vec<f64>, Vec<f64>) = xs
        .iter()
        .zip(ys)
        .filter(|(a, b)| a.is_finite() && b.is_finite())
        .map(|(a, b)| (*a, *b))
        .unzip();
    if x.len() < MIN_FIT_POINTS {
        return Err(AnalysisError::InsufficientData {
            needed: MIN_FIT_POINTS,
            got: x.len(),
        });
    }
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if !(span > 0.0) {
        return Err(AnalysisError::InsufficientData {
            needed: MIN_FIT_POINTS,
            got: 1,
        });
    }
    let ymin = y.iter().copied().fold(f64::INFINITY, f64::min);
    let ymax = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mid = 0.5 * (lo + hi);
    Ok(Window {
        u: x.iter().map(|v| (v - mid) / span).collect(),
        y,
        mid,
        span,
        range: (ymax - ymin).max(f64::MIN_POSITIVE),
    })
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s[s.len() / 2]
}

fn argmax_by(v: &[f64], key: impl Fn(f64) -> f64) -> usize {
    (0..v.len())
        .max_by(|&a, &b| key(v[a]).total_cmp(&key(v[b])))
        .unwrap_or(0)
}

const WIDTH_STARTS: [f64; 4] = [0.3, 0.05, 0.01, 0.002];

pub fn fit_lorentzian(xs: &[f64], ys: &[f64]) -> Result<LorentzianFit, AnalysisError> {
    let w = prepare(xs, ys)?;
    let base = median(&w.y);
    let extreme = argmax_by(&w.y, |v| (v - base).abs());
    let centers = [w.u[extreme], 0.0];
    let mut best: Option<(Vec<f64>, f64)> = None;
    for &c in &centers {
        let amp = w.y[extreme] - base;
        for &width in &WIDTH_STARTS {
            let start = vec![amp, c, f64::ln(width), base];
            let (p, cost) = levenberg_marquardt(&Lorentz, start, &w.u, &w.y);
            if best.as_ref().is_none_or(|b| cost < b.1) {
                best = Some((p, cost));
            }
        }
    }
    let (p, cost) = best.expect("at least one start");
    let rms = (cost / w.y.len() as f64).sqrt();
    if !rms.is_finite() || rms > DIVERGED_RESIDUAL * w.range {
        return Err(AnalysisError::FitDiverged(rms / w.range));
    }
    Ok(LorentzianFit {
        center: w.mid + p[1] * w.span,
        width: p[2].exp() * w.span,
        amplitude: p[0],
        baseline: p[3],
        residual: rms,
    })
}

pub fn fit_fano(xs: &[f64], ys: &[f64]) -> Result<FanoFit, AnalysisError> {
    let w = prepare(xs, ys)?;
    let hi = argmax_by(&w.y, |v| v);
    let lo = argmax_by(&w.y, |v| -v);
    let mut centers = vec![w.u[hi], w.u[lo], 0.5 * (w.u[hi] + w.u[lo]), 0.0];
    centers.dedup();
    let ymin = w.y[lo];
    let mut best: Option<(Vec<f64>, f64)> = None;
    for &c in &centers {
        for &q in &[-3.0, -1.0, -0.3, 0.3, 1.0, 3.0] {
            for sign in [1.0, -1.0] {
                let amp = sign * w.range / (1.0 + q * q);
                let baseline = if sign > 0.0 { ymin } else { ymin + w.range };
                for &width in &WIDTH_STARTS {
                    let start = vec![amp, q, c, f64::ln(width), baseline];
                    let (p, cost) = levenberg_marquardt(&FanoModel, start, &w.u, &w.y);
                    if best.as_ref().is_none_or(|b| cost < b.1) {
                        best = Some((p, cost));
                    }
                }
            }
        }
    }
    let (p, cost) = best.expect("at least one start");
    let rms = (cost / w.y.len() as f64).sqrt();
    if !rms.is_finite() || rms > DIVERGED_RESIDUAL * w.range {
        return Err(AnalysisError::FitDiverged(rms / w.range));
    }
    // (q, A, B) and (-1/q, -A q^2, B + A (1 + q^2)) describe the same curve;
    // report the branch with A > 0
    let (mut q, mut amplitude, mut baseline) = (p[1], p[0], p[4]);
    if amplitude < 0.0 && q != 0.0 {
        (q, amplitude, baseline) = (-1.0 / q, -amplitude * q * q, baseline + amplitude * (1.0 + q * q));
    }
    Ok(FanoFit {
        q,
        omega0: w.mid + p[2] * w.span,
        width: p[3].exp() * w.span,
        amplitude,
        baseline,
        residual: rms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::linspace;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn monotone_has_no_peaks() {
        let x = linspace(0.0, 1.0, 50);
        assert!(find_peaks_xy(&x, &x, 0.0, 0.0).unwrap().is_empty());
        assert_eq!(find_peaks_xy(&[], &[], 0.0, 0.0), Err(AnalysisError::EmptySpectrum));
        assert_eq!(
            find_peaks_xy(&[1.0, 0.0], &[0.0, 1.0], 0.0, 0.0),
            Err(AnalysisError::Unsorted)
        );
    }

    #[test]
    fn double_lorentzian() {
        let x = linspace(0.5, 2.5, 2001);
        let y: Vec<f64> = x
            .iter()
            .map(|&v| lorentzian(v, 1.0, 0.02, 1.0, 0.0) + lorentzian(v, 2.0, 0.05, 0.6, 0.0))
            .collect();
        let peaks = find_peaks_xy(&x, &y, 0.1, 0.05).unwrap();
        assert_eq!(peaks.len(), 2);
        assert!((peaks[0].omega - 1.0).abs() <= 1e-3);
        assert!((peaks[1].omega - 2.0).abs() <= 1e-3);
        assert!(peaks[0].prominence > 0.9);
        // the higher base applies: the second peak stands on the first one's tail
        assert!(peaks[1].prominence < peaks[1].height);
    }

    #[test]
    fn plateau_and_thresholds() {
        let x = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        let y = [0.0, 1.0, 1.0, 1.0, 0.0, 0.0];
        let p = find_peaks_xy(&x, &y, 0.5, 0.5).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].omega, 2.0);
        assert!(find_peaks_xy(&x, &y, 1.5, 0.0).unwrap().is_empty());
        let y = [0.0, 1.0, 0.9, 1.0, 0.0, 0.0];
        assert_eq!(find_peaks_xy(&x, &y, 0.0, 0.05).unwrap().len(), 2);
        assert_eq!(find_peaks_xy(&x, &y, 0.0, 0.5).unwrap().len(), 2);
        let y = [0.0, 1.0, 0.9, 0.95, 0.0, 0.0];
        let p = find_peaks_xy(&x, &y, 0.0, 0.5).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].omega, 1.0);
    }

    fn noisy(f: impl Fn(f64) -> f64, x: &[f64], sigma: f64) -> Vec<f64> {
        let mut rng = StdRng::seed_from_u64(7);
        x.iter()
            .map(|&v| f(v) + sigma * (rng.random::<f64>() * 2.0 - 1.0) * 3f64.sqrt())
            .collect()
    }

    #[test]
    fn fano_recovery() {
        let x = linspace(0.97, 1.03, 400);
        let y = noisy(|v| fano(v, 1.5, 1.0, 0.004, 0.3, 0.05), &x, 1e-4);
        let f = fit_fano(&x, &y).unwrap();
        assert!((f.q - 1.5).abs() / 1.5 < 0.05, "{f:?}");
        assert!((f.omega0 - 1.0).abs() < 1e-4, "{f:?}");
        assert!((f.width - 0.004).abs() / 0.004 < 0.05);
        assert!(f.residual < 2e-4);
    }

    #[test]
    fn lorentzian_recovery() {
        let x = linspace(0.9, 1.1, 300);
        let y = noisy(|v| lorentzian(v, 1.01, 0.01, 0.8, 0.1), &x, 1e-4);
        let f = fit_lorentzian(&x, &y).unwrap();
        assert!((f.center - 1.01).abs() < 1e-5);
        assert!((f.width - 0.01).abs() < 1e-4);
        assert!((f.amplitude - 0.8).abs() < 1e-3);
    }

    #[test]
    fn large_q_limit() {
        let x = linspace(0.98, 1.02, 300);
        let q: f64 = 200.0;
        let y: Vec<f64> = x.iter().map(|&v| fano(v, q, 1.0, 0.003, 1.0 / (q * q), 0.0)).collect();
        let f = fit_fano(&x, &y).unwrap();
        let l = fit_lorentzian(&x, &y).unwrap();
        assert!((f.omega0 - l.center).abs() < 1e-4, "{f:?} {l:?}");
    }

    #[test]
    fn fit_errors() {
        let x = linspace(0.0, 1.0, 5);
        assert!(matches!(
            fit_lorentzian(&x, &x),
            Err(AnalysisError::InsufficientData { .. })
        ));
        let x = linspace(0.0, 1.0, 200);
        let mut rng = StdRng::seed_from_u64(1);
        let y: Vec<f64> = x.iter().map(|_| rng.random::<f64>()).collect();
        assert!(matches!(fit_lorentzian(&x, &y), Err(AnalysisError::FitDiverged(_))));
    }
}
