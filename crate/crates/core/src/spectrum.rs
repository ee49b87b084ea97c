//! Energy levels of the Rabi Hamiltonian: diagonalization, cavity-frequency
//! sweeps with level tracking, anticrossing search and cutoff convergence.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::basis::BasisState;
use crate::hamiltonian::{build_rabi_matrix, hermiticity_defect, HermitianMatrix, HERMITIAN_TOL};
use crate::params::{ParamError, SystemParams};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectrumError {
    #[error("input matrix is not Hermitian (defect {0:e})")]
    NonHermitianInput(f64),
    #[error("labels {0} and {1} do not both occur in the level curves")]
    LabelsNotFound(String, String),
    #[error("levels labelled {0} and {1} never exchange character in the scanned range")]
    NoSwapDetected(String, String),
    #[error("eigenvalues not converged to {tol:e} at cutoff {n_max} (last change {change:e})")]
    NotConverged { n_max: usize, tol: f64, change: f64 },
    #[error("invalid sweep: {0}")]
    InvalidSweep(String),
    #[error(transparent)]
    Params(#[from] ParamError),
}

/// Ascending eigenvalues with eigenvectors stored column-wise in the same order.
#[derive(Debug, Clone)]
pub struct Eigensystem {
    pub values: Vec<f64>,
    pub vectors: DMatrix<Complex64>,
}

impl Eigensystem {
    pub fn vector(&self, k: usize) -> nalgebra::DVectorView<'_, Complex64> {
        self.vectors.column(k)
    }
}

pub fn eigendecompose(h: &HermitianMatrix) -> Result<Eigensystem, SpectrumError> {
    let defect = hermiticity_defect(h.matrix());
    if defect > HERMITIAN_TOL {
        return Err(SpectrumError::NonHermitianInput(defect));
    }
    let eig = SymmetricEigen::new(h.matrix().clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DMatrix::from_fn(h.dim(), h.dim(), |i, j| eig.eigenvectors[(i, order[j])]);
    Ok(Eigensystem { values, vectors })
}

/// Dominant bare component of an eigenvector and its weight.
pub fn dominant_state(h: &HermitianMatrix, v: nalgebra::DVectorView<'_, Complex64>) -> (BasisState, f64) {
    let (idx, w) = v
        .iter()
        .map(|c| c.norm_sqr())
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, w)| if w > best.1 { (i, w) } else { best });
    (h.basis().get(idx).expect("index in basis"), w)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevelSweep {
    pub delta_min: f64,
    pub delta_max: f64,
    pub n_points: usize,
    pub n_levels: usize,
    pub n_max: usize,
    pub counter_rotating: bool,
}

impl Default for LevelSweep {
    fn default() -> Self {
        LevelSweep {
            delta_min: 1.2,
            delta_max: 2.8,
            n_points: 401,
            n_levels: 8,
            n_max: 16,
            counter_rotating: true,
        }
    }
}

/// Level energies over a cavity-frequency grid.
///
/// `energies[k]` is sorted ascending. `tracks[k][c]` gives the sorted-level
/// index that continuous curve `c` occupies at grid point `k`.
#[derive(Debug, Clone, Serialize)]
pub struct LevelCurves {
    pub delta_grid: Vec<f64>,
    pub energies: Vec<Vec<f64>>,
    pub labels: Vec<Vec<BasisState>>,
    pub label_weights: Vec<Vec<f64>>,
    pub tracks: Vec<Vec<usize>>,
    pub params: SystemParams,
    pub n_max: usize,
    pub counter_rotating: bool,
}

impl LevelCurves {
    pub fn n_levels(&self) -> usize {
        self.energies.first().map_or(0, Vec::len)
    }

    /// Energy of tracked curve `c` along the grid.
    pub fn curve(&self, c: usize) -> Vec<f64> {
        self.tracks
            .iter()
            .zip(&self.energies)
            .map(|(t, e)| e[t[c]])
            .collect()
    }

    pub fn curve_labels(&self, c: usize) -> Vec<BasisState> {
        self.tracks
            .iter()
            .zip(&self.labels)
            .map(|(t, l)| l[t[c]])
            .collect()
    }
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n)
            .map(|i| {
                if i == n - 1 {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

struct GridPoint {
    energies: Vec<f64>,
    labels: Vec<BasisState>,
    weights: Vec<f64>,
    vectors: DMatrix<Complex64>,
}

pub fn sweep_levels(params: &SystemParams, sweep: &LevelSweep) -> Result<LevelCurves, SpectrumError> {
    if sweep.n_points < 2 {
        return Err(SpectrumError::InvalidSweep("n_points must be at least 2".into()));
    }
    if !(sweep.delta_min > 0.0 && sweep.delta_max > sweep.delta_min) {
        return Err(SpectrumError::InvalidSweep(format!(
            "delta range [{}, {}] must be positive and increasing",
            sweep.delta_min, sweep.delta_max
        )));
    }
    let dim = 4 * (sweep.n_max + 1);
    if sweep.n_levels == 0 || sweep.n_levels > dim {
        return Err(SpectrumError::InvalidSweep(format!(
            "n_levels = {} outside 1..={dim}",
            sweep.n_levels
        )));
    }

    let grid = linspace(sweep.delta_min, sweep.delta_max, sweep.n_points);
    let points: Vec<GridPoint> = grid
        .par_iter()
        .map(|&delta| {
            let p = params.with_delta(delta)?;
            let h = build_rabi_matrix(&p, sweep.n_max, sweep.counter_rotating);
            let eig = eigendecompose(&h)?;
            let n = sweep.n_levels;
            let mut labels = Vec::with_capacity(n);
            let mut weights = Vec::with_capacity(n);
            for k in 0..n {
                let (s, w) = dominant_state(&h, eig.vector(k));
                labels.push(s);
                weights.push(w);
            }
            Ok(GridPoint {
                energies: eig.values[..n].to_vec(),
                labels,
                weights,
                vectors: eig.vectors.columns(0, n).into_owned(),
            })
        })
        .collect::<Result<_, SpectrumError>>()?;

    let tracks = track_levels(&points);
    let (energies, labels, label_weights) = points
        .into_iter()
        .map(|gp| (gp.energies, gp.labels, gp.weights))
        .fold((vec![], vec![], vec![]), |mut acc, (e, l, w)| {
            acc.0.push(e);
            acc.1.push(l);
            acc.2.push(w);
            acc
        });

    Ok(LevelCurves {
        delta_grid: grid,
        energies,
        labels,
        label_weights,
        tracks,
        params: *params,
        n_max: sweep.n_max,
        counter_rotating: sweep.counter_rotating,
    })
}

/// Greedy continuation between neighbouring grid points.
///
/// Candidate pairs are ranked by eigenvector overlap; ties fall back to the
/// smaller energy jump.
fn track_levels(points: &[GridPoint]) -> Vec<Vec<usize>> {
    let n = points.first().map_or(0, |p| p.energies.len());
    let mut tracks = Vec::with_capacity(points.len());
    tracks.push((0..n).collect::<Vec<_>>());
    for w in points.windows(2) {
        let (prev, next) = (&w[0], &w[1]);
        let mut pairs = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let overlap = prev.vectors.column(i).dotc(&next.vectors.column(j)).norm_sqr();
                let jump = (prev.energies[i] - next.energies[j]).abs();
                pairs.push((i, j, overlap, jump));
            }
        }
        // overlaps equal to 1e-6 count as ties
        pairs.sort_by(|a, b| {
            let (qa, qb) = ((a.2 * 1e6).round(), (b.2 * 1e6).round());
            qb.total_cmp(&qa).then(a.3.total_cmp(&b.3))
        });
        let mut map = vec![usize::MAX; n];
        let mut taken = vec![false; n];
        for (i, j, _, _) in pairs {
            if map[i] == usize::MAX && !taken[j] {
                map[i] = j;
                taken[j] = true;
            }
        }
        let last: &Vec<usize> = tracks.last().unwrap();
        let next_track = last.iter().map(|&level| map[level]).collect();
        tracks.push(next_track);
    }
    tracks
}

#[derive(Debug, Clone, Serialize)]
pub struct Anticrossing {
    pub delta_star: f64,
    pub gap: f64,
    /// Sorted-level indices of the two participating levels.
    pub levels: (usize, usize),
    pub labels: (BasisState, BasisState),
    /// `true` when the two levels genuinely cross (gap exactly zero).
    pub is_crossing: bool,
}

/// Refined separations below this are reported as exact crossings.
pub const CROSSING_TOL: f64 = 1e-9;

/// Locates the avoided (or true) crossing between the levels whose dominant
/// characters `label_a` and `label_b` exchange order across the sweep.
///
/// Grid points only bracket the event; the minimum separation is then found
/// by golden-section search on the exact spectrum, so gaps far below the grid
/// resolution are still resolved.
pub fn find_anticrossing(
    curves: &LevelCurves,
    label_a: BasisState,
    label_b: BasisState,
) -> Result<Anticrossing, SpectrumError> {
    let present = |s: BasisState| curves.labels.iter().any(|row| row.contains(&s));
    if !present(label_a) || !present(label_b) {
        return Err(SpectrumError::LabelsNotFound(
            label_a.to_string(),
            label_b.to_string(),
        ));
    }
    let grid = &curves.delta_grid;
    let nk = grid.len();
    let mut best: Option<Anticrossing> = None;

    for i in 0..curves.n_levels() {
        for j in i + 1..curves.n_levels() {
            // +1 while level i carries a and j carries b, -1 for the reverse
            let order: Vec<i8> = curves
                .labels
                .iter()
                .map(|row| match (row[i], row[j]) {
                    (x, y) if x == label_a && y == label_b => 1,
                    (x, y) if x == label_b && y == label_a => -1,
                    _ => 0,
                })
                .collect();
            let marked: Vec<usize> = (0..nk).filter(|&k| order[k] != 0).collect();
            for w in marked.windows(2) {
                let (k1, k2) = (w[0], w[1]);
                if order[k1] == order[k2] {
                    continue;
                }
                let lo = grid[k1.saturating_sub(1)];
                let hi = grid[(k2 + 1).min(nk - 1)];
                let (delta_star, gap) = minimize_separation(curves, i, j, lo, hi)?;
                let is_crossing = gap < CROSSING_TOL;
                let cand = Anticrossing {
                    delta_star,
                    gap: if is_crossing { 0.0 } else { gap },
                    levels: (i, j),
                    labels: (label_a, label_b),
                    is_crossing,
                };
                if best.as_ref().is_none_or(|b| cand.gap < b.gap) {
                    best = Some(cand);
                }
            }
        }
    }

    best.ok_or_else(|| SpectrumError::NoSwapDetected(label_a.to_string(), label_b.to_string()))
}

fn minimize_separation(
    curves: &LevelCurves,
    i: usize,
    j: usize,
    mut lo: f64,
    mut hi: f64,
) -> Result<(f64, f64), SpectrumError> {
    let separation = |delta: f64| -> Result<f64, SpectrumError> {
        let p = curves.params.with_delta(delta)?;
        let eig = eigendecompose(&build_rabi_matrix(&p, curves.n_max, curves.counter_rotating))?;
        Ok(eig.values[j] - eig.values[i])
    };
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let (mut f1, mut f2) = (separation(x1)?, separation(x2)?);
    while hi - lo > 1e-13 * hi.abs().max(1.0) {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = separation(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = separation(x2)?;
        }
    }
    Ok(if f1 <= f2 { (x1, f1) } else { (x2, f2) })
}

#[derive(Debug, Clone, Serialize)]
pub struct CutoffReport {
    pub n_max: usize,
    /// Absolute change of each of the lowest levels between `n_max` and `2 n_max`.
    pub level_changes: Vec<f64>,
}

pub const CUTOFF_CAP: usize = 64;

/// Smallest cutoff in the schedule `2, 4, 8, ..., 64` whose lowest `n_levels`
/// eigenvalues move by less than `tol` when the cutoff doubles.
pub fn converge_cutoff(
    params: &SystemParams,
    delta: f64,
    n_levels: usize,
    tol: f64,
) -> Result<CutoffReport, SpectrumError> {
    if !(tol > 0.0) {
        return Err(SpectrumError::InvalidSweep(format!("tolerance must be positive, got {tol}")));
    }
    if n_levels == 0 || n_levels > 12 {
        return Err(SpectrumError::InvalidSweep(format!(
            "n_levels = {n_levels} must lie in 1..=12 (size of the smallest cutoff)"
        )));
    }
    let p = params.with_delta(delta)?;
    let levels = |n_max: usize| -> Result<Vec<f64>, SpectrumError> {
        let eig = eigendecompose(&build_rabi_matrix(&p, n_max, true))?;
        Ok(eig.values[..n_levels].to_vec())
    };
    let mut n_max = 2;
    let mut current = levels(n_max)?;
    let mut last_change = f64::INFINITY;
    while n_max <= CUTOFF_CAP / 2 {
        let next = levels(2 * n_max)?;
        let changes: Vec<f64> = current.iter().zip(&next).map(|(a, b)| (a - b).abs()).collect();
        last_change = changes.iter().copied().fold(0.0, f64::max);
        if last_change < tol {
            return Ok(CutoffReport {
                n_max,
                level_changes: changes,
            });
        }
        n_max *= 2;
        current = next;
    }
    Err(SpectrumError::NotConverged {
        n_max: CUTOFF_CAP,
        tol,
        change: last_change,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::*;
    use crate::params::RawParams;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn params(l: f64) -> SystemParams {
        SystemParams::new(RawParams {
            lambda1: l,
            lambda2: l,
            ..RawParams::default()
        })
        .unwrap()
    }

    #[test]
    fn bare_ladder() {
        let h = build_rabi_matrix(&params(0.0), 2, true);
        let eig = eigendecompose(&h).unwrap();
        let expect = [0.0, 1.0, 1.0, 2.0, 2.0, 3.0];
        for (e, x) in eig.values.iter().zip(expect) {
            assert!((e - x).abs() < 1e-14, "{:?}", eig.values);
        }
    }

    #[test]
    fn splitting_near_two() {
        let h = build_rabi_matrix(&params(0.1), 12, true);
        let eig = eigendecompose(&h).unwrap();
        let near: Vec<f64> = eig.values.iter().copied().filter(|e| (e - 2.0).abs() < 0.05).collect();
        assert_eq!(near.len(), 2, "{near:?}");
        assert!(near[1] - near[0] > 1e-3);
    }

    #[test]
    fn rwa_does_not_mix_sectors() {
        let h = build_rabi_matrix(&params(0.1), 8, false);
        let eig = eigendecompose(&h).unwrap();
        for k in 0..h.dim() {
            let v = eig.vector(k);
            let sectors: std::collections::BTreeSet<u32> = h
                .basis()
                .iter()
                .zip(v.iter())
                .filter(|(_, c)| c.norm_sqr() > 1e-20)
                .map(|(s, _)| s.excitations())
                .collect();
            assert!(sectors.len() <= 1);
        }
    }

    #[test]
    fn rejects_non_hermitian() {
        let mut m = build_rabi_matrix(&params(0.1), 2, true).into_matrix();
        m[(0, 5)] += Complex64::new(0.0, 1.0);
        let h = HermitianMatrix::new_unchecked(fock_basis(2), m);
        assert!(matches!(eigendecompose(&h), Err(SpectrumError::NonHermitianInput(_))));
    }

    #[test]
    fn free_levels_are_straight() {
        // all levels kept so none enters the window from above
        let sweep = LevelSweep {
            n_points: 20,
            n_max: 3,
            n_levels: 16,
            ..LevelSweep::default()
        };
        let curves = sweep_levels(&params(0.0), &sweep).unwrap();
        for c in 0..curves.n_levels() {
            let e = curves.curve(c);
            for k in 1..e.len() - 1 {
                let second = e[k + 1] - 2.0 * e[k] + e[k - 1];
                assert!(second.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sweep_shape_and_dark_line() {
        let sweep = LevelSweep {
            n_points: 41,
            n_max: 8,
            ..LevelSweep::default()
        };
        let curves = sweep_levels(&params(0.1), &sweep).unwrap();
        assert_eq!(curves.delta_grid.len(), 41);
        for (row, labels) in curves.energies.iter().zip(&curves.labels) {
            assert_eq!(row.len(), 8);
            assert!(row.windows(2).all(|w| w[0] <= w[1]));
            // the antisymmetric combination sits at exactly omega_q
            let k = row.iter().position(|e| (e - 1.0).abs() < 1e-10).expect("dark level");
            assert!(labels[k] == EG00 || labels[k] == GE00);
        }
    }

    #[test]
    fn anticrossing_full_vs_rwa() {
        let sweep = LevelSweep {
            n_max: 8,
            ..LevelSweep::default()
        };
        let full = sweep_levels(&params(0.1), &sweep).unwrap();
        let ac = find_anticrossing(&full, GG10, EE00).unwrap();
        assert!(!ac.is_crossing);
        assert!((ac.delta_star - 2.0).abs() < 0.05, "{ac:?}");
        assert!(ac.gap > 1e-3);

        let rwa = sweep_levels(&params(0.1), &LevelSweep { counter_rotating: false, ..sweep }).unwrap();
        match find_anticrossing(&rwa, GG10, EE00) {
            Ok(ac) => assert_eq!(ac.gap, 0.0),
            Err(e) => assert!(matches!(e, SpectrumError::NoSwapDetected(..))),
        }

        let free = sweep_levels(&params(0.0), &sweep).unwrap();
        let ac = find_anticrossing(&free, GG10, EE00).unwrap();
        assert_eq!(ac.gap, 0.0);
        assert!(ac.is_crossing);
        assert!((ac.delta_star - 2.0).abs() < 1e-9, "{ac:?}");

        assert!(matches!(
            find_anticrossing(&full, GG10, BasisState::local(Qubit::E, Qubit::E, 7)),
            Err(SpectrumError::LabelsNotFound(..))
        ));
    }

    #[test]
    fn gap_shrinks_with_coupling() {
        let sweep = LevelSweep {
            n_max: 8,
            ..LevelSweep::default()
        };
        let gaps: Vec<f64> = [0.1, 0.05, 0.025, 0.0]
            .iter()
            .map(|&l| {
                let curves = sweep_levels(&params(l), &sweep).unwrap();
                find_anticrossing(&curves, GG10, EE00).unwrap().gap
            })
            .collect();
        assert!(gaps.windows(2).all(|w| w[0] > w[1]), "{gaps:?}");
        assert_eq!(gaps[3], 0.0);
    }

    #[test]
    fn cutoff_convergence() {
        let r = converge_cutoff(&params(0.1), 2.0, 6, 1e-8).unwrap();
        assert!(r.n_max <= 16);
        assert!(r.level_changes.iter().all(|c| *c < 1e-8));
        let r = converge_cutoff(&params(0.0), 2.0, 6, 1e-8).unwrap();
        assert_eq!(r.n_max, 2);
        assert!(converge_cutoff(&params(0.1), 2.0, 6, 0.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn residuals_and_orthonormality(
            l1 in 0.0f64..0.3, l2 in 0.0f64..0.3, theta in 0.0f64..PI / 2.0, delta in 1.0f64..3.0
        ) {
            let p = SystemParams::new(RawParams { lambda1: l1, lambda2: l2, theta, delta, ..RawParams::default() }).unwrap();
            let h = build_rabi_matrix(&p, 6, true);
            let eig = eigendecompose(&h).unwrap();
            let norm = h.matrix().norm();
            for k in 0..h.dim() {
                let v = eig.vector(k);
                let r = h.matrix() * v - v * Complex64::new(eig.values[k], 0.0);
                prop_assert!(r.norm() <= 1e-10 * norm);
            }
            let gram = eig.vectors.adjoint() * &eig.vectors;
            let id = DMatrix::<Complex64>::identity(h.dim(), h.dim());
            prop_assert!((gram - id).norm() < 1e-10);
        }

        #[test]
        fn exchange_symmetric_eigenvectors(l in 0.01f64..0.3, theta in 0.05f64..PI / 2.0, delta in 1.0f64..3.0) {
            let p = SystemParams::new(RawParams { lambda1: l, lambda2: l, theta, delta, ..RawParams::default() }).unwrap();
            let h = build_rabi_matrix(&p, 6, true);
            let eig = eigendecompose(&h).unwrap();
            let (ieg, ige) = (h.basis().index_of(&EG00).unwrap(), h.basis().index_of(&GE00).unwrap());
            for k in 0..h.dim() {
                // eigenvector error scales as eps ||H|| / gap; skip near-degenerate levels
                let gap = (0..h.dim()).filter(|&j| j != k).map(|j| (eig.values[j] - eig.values[k]).abs()).fold(f64::INFINITY, f64::min);
                if gap < 1e-6 { continue; }
                let v = eig.vector(k);
                let tol = 1e-13 * h.matrix().norm() / gap;
                prop_assert!((v[ieg].norm_sqr() - v[ige].norm_sqr()).abs() < tol.max(1e-12));
            }
        }
    }
}
