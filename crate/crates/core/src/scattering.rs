//! Single-photon scattering with the waveguide continuum eliminated.
//!
//! Substituting the piecewise plane waves into the contact couplings (step
//! functions valued 1/2 at their jumps) leaves a closed 11x11 system
//!
//! ```text
//! (H_loc - omega + Sigma(omega)) u = s(omega)
//! Sigma = -i g^2/v_g [[1, e^{i phi}], [e^{i phi}, 1]]   on (|eg00>, |ge00>)
//! s     = -g (1, e^{i phi})
//! ```
//!
//! with `phi = omega * tau_d`. The far-field amplitudes follow from the jump
//! conditions at the two qubit positions.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::basis::{self, BasisState};
use crate::hamiltonian::{build_scattering_blocks_with, ScatteringBlocks};
use crate::params::{ParamError, SystemParams};
use crate::spectrum::{eigendecompose, linspace, Eigensystem};

/// Systems whose 1-norm condition estimate exceeds this are treated as singular.
pub const SINGULAR_CONDITION: f64 = 1e14;

/// Resonances narrower than this are invisible to the waveguide and skipped
/// when refining a frequency grid.
pub const DARK_WIDTH: f64 = 1e-13;

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScatterError {
    #[error("incident frequency must be positive, got {0}")]
    NonPositiveFrequency(f64),
    #[error("effective system is singular at omega = {omega} (condition {condition:e})")]
    SingularSystem { omega: f64, condition: f64 },
    #[error("all localized amplitudes vanish at omega = {0}")]
    ZeroNorm(f64),
    #[error("invalid sweep: {0}")]
    InvalidSweep(String),
    #[error(transparent)]
    Params(#[from] ParamError),
}

/// Solution of one scattering problem.
///
/// `localized` holds physical amplitudes in `localized_basis()` order; the
/// amplitude fields follow the stationary-state ansatz, in which the
/// two-photon cavity states carry a `sqrt(2)` (e.g. `u[|eg20>] = sqrt(2) alpha[0][2]`).
#[derive(Debug, Clone, Serialize)]
pub struct AmplitudeSet {
    pub omega: f64,
    pub alpha: [[Complex64; 3]; 2],
    pub beta: [Complex64; 2],
    pub gamma: [Complex64; 3],
    pub t: Complex64,
    pub r: Complex64,
    pub a: Complex64,
    pub b: Complex64,
    pub localized: Vec<Complex64>,
    /// `||M u - s|| / ||s||`.
    pub residual: f64,
    pub condition: f64,
}

impl AmplitudeSet {
    #[allow(clippy::too_many_arguments)]
    fn from_localized(
        omega: f64,
        u: DVector<Complex64>,
        t: Complex64,
        r: Complex64,
        a: Complex64,
        b: Complex64,
        residual: f64,
        condition: f64,
    ) -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        AmplitudeSet {
            omega,
            alpha: [[u[4], u[3], u[2] * h], [u[7], u[6], u[5] * h]],
            beta: [u[1], u[0]],
            gamma: [u[10], u[9], u[8] * h],
            t,
            r,
            a,
            b,
            localized: u.iter().copied().collect(),
            residual,
            condition,
        }
    }
}

/// Reflection and transmission probabilities `(|r|^2, |t|^2)`.
pub fn reflection_transmission(amps: &AmplitudeSet) -> (f64, f64) {
    (amps.r.norm_sqr(), amps.t.norm_sqr())
}

/// Closed-form scatterer for one parameter point.
#[derive(Debug, Clone)]
pub struct Scatterer {
    params: SystemParams,
    blocks: ScatteringBlocks,
    counter_rotating: bool,
}

impl Scatterer {
    pub fn new(params: SystemParams) -> Self {
        Self::with_counter_rotating(params, true)
    }

    pub fn with_counter_rotating(params: SystemParams, counter_rotating: bool) -> Self {
        Scatterer {
            params,
            blocks: build_scattering_blocks_with(&params, counter_rotating),
            counter_rotating,
        }
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn blocks(&self) -> &ScatteringBlocks {
        &self.blocks
    }

    pub fn counter_rotating(&self) -> bool {
        self.counter_rotating
    }

    /// Waveguide self-energy matrix elements `(diagonal, off-diagonal)` at `omega`.
    pub fn self_energy(&self, omega: f64) -> (Complex64, Complex64) {
        let rate = self.params.self_energy_rate();
        let diag = -I * rate;
        let off = -I * rate * Complex64::from_polar(1.0, self.params.phase(omega));
        (diag, off)
    }

    /// `M(omega) = H_loc - omega + Sigma(omega)` and the source `s(omega)`.
    pub fn assemble(&self, omega: f64) -> (DMatrix<Complex64>, DVector<Complex64>) {
        let n = self.blocks.h_loc.dim();
        let (ia, ib) = (self.blocks.origin_index(), self.blocks.separation_index());
        let mut m = self.blocks.h_loc.matrix().clone();
        for k in 0..n {
            m[(k, k)] -= Complex64::new(omega, 0.0);
        }
        let (diag, off) = self.self_energy(omega);
        m[(ia, ia)] += diag;
        m[(ib, ib)] += diag;
        m[(ia, ib)] += off;
        m[(ib, ia)] += off;

        let g = self.params.g();
        let phase = Complex64::from_polar(1.0, self.params.phase(omega));
        let mut s = DVector::zeros(n);
        s[ia] = Complex64::new(-g, 0.0);
        s[ib] = -g * phase;
        (m, s)
    }

    pub fn solve(&self, omega: f64) -> Result<AmplitudeSet, ScatterError> {
        self.solve_with_incident(omega, Complex64::new(1.0, 0.0))
    }

    /// Solves for an incident plane wave of complex amplitude `incident`.
    pub fn solve_with_incident(&self, omega: f64, incident: Complex64) -> Result<AmplitudeSet, ScatterError> {
        if !(omega > 0.0) {
            return Err(ScatterError::NonPositiveFrequency(omega));
        }
        let (m, s) = self.assemble(omega);
        let s = s * incident;
        let singular = |condition| ScatterError::SingularSystem { omega, condition };

        let inv = m.clone().lu().try_inverse().ok_or(singular(f64::INFINITY))?;
        let condition = one_norm(&m) * one_norm(&inv);
        if !condition.is_finite() || condition > SINGULAR_CONDITION {
            return Err(singular(condition));
        }
        let u = &inv * &s;
        let s_norm = s.norm();
        let residual = if s_norm > 0.0 { (&m * &u - &s).norm() / s_norm } else { 0.0 };

        let (ia, ib) = (self.blocks.origin_index(), self.blocks.separation_index());
        let k = self.params.g() / (I * self.params.v_g());
        let phase = Complex64::from_polar(1.0, self.params.phase(omega));
        let t = incident + k * (u[ia] + u[ib] / phase);
        let r = k * (u[ia] + u[ib] * phase);
        let a = incident + k * u[ia];
        let b = k * u[ib] * phase;
        Ok(AmplitudeSet::from_localized(omega, u, t, r, a, b, residual, condition))
    }
}

fn one_norm(m: &DMatrix<Complex64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn assemble_effective_system(
    params: &SystemParams,
    omega: f64,
) -> (DMatrix<Complex64>, DVector<Complex64>) {
    Scatterer::new(*params).assemble(omega)
}

pub fn solve_amplitudes(params: &SystemParams, omega: f64) -> Result<AmplitudeSet, ScatterError> {
    Scatterer::new(*params).solve(omega)
}

/// Bare-state populations of the localized part of the scattering state.
#[derive(Debug, Clone, Serialize)]
pub struct PopulationRow {
    pub omega: f64,
    /// In `localized_basis()` order.
    pub bare: [f64; 11],
    /// `(|ge00> + |eg00>)/sqrt(2)`.
    pub symmetric: f64,
    /// `(|ge00> - |eg00>)/sqrt(2)`.
    pub antisymmetric: f64,
}

impl PopulationRow {
    pub fn of(&self, state: &BasisState) -> Option<f64> {
        basis::localized_basis().index_of(state).map(|i| self.bare[i])
    }
}

/// Populations normalized over the eleven localized amplitudes.
pub fn populations(amps: &AmplitudeSet) -> Result<PopulationRow, ScatterError> {
    let norm: f64 = amps.localized.iter().map(|z| z.norm_sqr()).sum();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(ScatterError::ZeroNorm(amps.omega));
    }
    let mut bare = [0.0; 11];
    for (p, z) in bare.iter_mut().zip(&amps.localized) {
        *p = z.norm_sqr() / norm;
    }
    let (eg, ge) = (amps.localized[4], amps.localized[7]);
    Ok(PopulationRow {
        omega: amps.omega,
        bare,
        symmetric: (ge + eg).norm_sqr() / (2.0 * norm),
        antisymmetric: (ge - eg).norm_sqr() / (2.0 * norm),
    })
}

/// Populations projected onto the eigenstates of `H_loc` instead of bare
/// states, normalized the same way. Entries follow ascending eigenvalues.
pub fn dressed_populations(amps: &AmplitudeSet, eig: &Eigensystem) -> Result<Vec<f64>, ScatterError> {
    let u = DVector::from_column_slice(&amps.localized);
    let norm = u.norm_squared();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(ScatterError::ZeroNorm(amps.omega));
    }
    Ok((0..eig.values.len())
        .map(|k| eig.vector(k).dotc(&u).norm_sqr() / norm)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RowFlag {
    Ok,
    Singular,
    ZeroNorm,
}

impl RowFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            RowFlag::Ok => "ok",
            RowFlag::Singular => "singular",
            RowFlag::ZeroNorm => "zero_norm",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumRow {
    pub omega: f64,
    /// `NaN` on singular rows.
    pub reflection: f64,
    pub transmission: f64,
    pub populations: Option<PopulationRow>,
    pub flag: RowFlag,
}

impl SpectrumRow {
    pub fn is_ok(&self) -> bool {
        self.flag == RowFlag::Ok
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumTable {
    pub params: SystemParams,
    pub counter_rotating: bool,
    pub rows: Vec<SpectrumRow>,
}

impl SpectrumTable {
    pub fn valid_rows(&self) -> impl Iterator<Item = &SpectrumRow> {
        self.rows.iter().filter(|r| r.is_ok())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectrumOptions {
    pub counter_rotating: bool,
    /// Add points around every waveguide-visible resonance of `H_loc`.
    pub refine_resonances: bool,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        SpectrumOptions {
            counter_rotating: true,
            refine_resonances: false,
        }
    }
}

/// Offsets, in resonance widths, sampled around each resolved resonance.
const REFINE_SPAN: f64 = 8.0;
const REFINE_STEP: f64 = 0.25;

impl Scatterer {
    pub fn row(&self, omega: f64) -> SpectrumRow {
        match self.solve(omega) {
            Ok(amps) => {
                let (reflection, transmission) = reflection_transmission(&amps);
                match populations(&amps) {
                    Ok(p) => SpectrumRow {
                        omega,
                        reflection,
                        transmission,
                        populations: Some(p),
                        flag: RowFlag::Ok,
                    },
                    Err(_) => SpectrumRow {
                        omega,
                        reflection,
                        transmission,
                        populations: None,
                        flag: RowFlag::ZeroNorm,
                    },
                }
            }
            Err(_) => SpectrumRow {
                omega,
                reflection: f64::NAN,
                transmission: f64::NAN,
                populations: None,
                flag: RowFlag::Singular,
            },
        }
    }

    /// Centers and first-order widths `|<n|Sigma|n>|` of the eigenstates of
    /// `H_loc` inside `[lo, hi]`, dark states excluded.
    pub fn resonances(&self, lo: f64, hi: f64) -> Vec<(f64, f64)> {
        let eig = eigendecompose(&self.blocks.h_loc).expect("H_loc is Hermitian");
        let (ia, ib) = (self.blocks.origin_index(), self.blocks.separation_index());
        eig.values
            .iter()
            .enumerate()
            .filter(|(_, e)| (lo..=hi).contains(*e))
            .filter_map(|(k, &e)| {
                let v = eig.vector(k);
                let (diag, off) = self.self_energy(e);
                let proj = diag * (v[ia].norm_sqr() + v[ib].norm_sqr())
                    + off * (v[ia].conj() * v[ib] + v[ib].conj() * v[ia]);
                let width = proj.norm();
                (width > DARK_WIDTH).then_some((e, width))
            })
            .collect()
    }
}

fn frequency_grid(scatterer: &Scatterer, lo: f64, hi: f64, n: usize, refine: bool) -> Vec<f64> {
    let mut grid = linspace(lo, hi, n);
    if refine {
        let steps = (REFINE_SPAN / REFINE_STEP) as i64;
        for (center, width) in scatterer.resonances(lo, hi) {
            for k in -steps..=steps {
                let w = center + width * REFINE_STEP * k as f64;
                if w > lo && w < hi {
                    grid.push(w);
                }
            }
        }
        grid.sort_by(f64::total_cmp);
        grid.dedup();
    }
    grid
}

/// Spectrum over `[omega_min, omega_max]` on a uniform grid, optionally
/// augmented with resonance-resolving points. Failing points are flagged.
pub fn sweep_spectrum(
    params: &SystemParams,
    omega_min: f64,
    omega_max: f64,
    n_points: usize,
    options: &SpectrumOptions,
) -> Result<SpectrumTable, ScatterError> {
    if n_points < 2 {
        return Err(ScatterError::InvalidSweep("n_points must be at least 2".into()));
    }
    if !(omega_min > 0.0 && omega_max > omega_min) {
        return Err(ScatterError::InvalidSweep(format!(
            "frequency range [{omega_min}, {omega_max}] must be positive and increasing"
        )));
    }
    let scatterer = Scatterer::with_counter_rotating(*params, options.counter_rotating);
    let grid = frequency_grid(&scatterer, omega_min, omega_max, n_points, options.refine_resonances);
    let rows = grid.par_iter().map(|&w| scatterer.row(w)).collect();
    Ok(SpectrumTable {
        params: *params,
        counter_rotating: options.counter_rotating,
        rows,
    })
}

/// Reflection over an `(omega, delta)` grid.
///
/// `values[i_delta * omegas.len() + i_omega]`; `NaN` marks singular cells.
#[derive(Debug, Clone, Serialize)]
pub struct DensityMap {
    pub omegas: Vec<f64>,
    pub deltas: Vec<f64>,
    pub values: Vec<f64>,
}

impl DensityMap {
    pub fn get(&self, i_delta: usize, i_omega: usize) -> f64 {
        self.values[i_delta * self.omegas.len() + i_omega]
    }
}

pub fn density_map(
    template: &SystemParams,
    omega_range: (f64, f64),
    delta_range: (f64, f64),
    n_omega: usize,
    n_delta: usize,
    counter_rotating: bool,
) -> Result<DensityMap, ScatterError> {
    if n_omega < 2 || n_delta < 2 {
        return Err(ScatterError::InvalidSweep("grid sizes must be at least 2".into()));
    }
    let positive = |(lo, hi): (f64, f64)| lo > 0.0 && hi > lo;
    if !positive(omega_range) || !positive(delta_range) {
        return Err(ScatterError::InvalidSweep(
            "ranges must be positive and increasing".into(),
        ));
    }
    let omegas = linspace(omega_range.0, omega_range.1, n_omega);
    let deltas = linspace(delta_range.0, delta_range.1, n_delta);
    let rows: Vec<Vec<f64>> = deltas
        .par_iter()
        .map(|&delta| {
            let p = template.with_delta(delta)?;
            let s = Scatterer::with_counter_rotating(p, counter_rotating);
            Ok(omegas
                .iter()
                .map(|&w| s.solve(w).map_or(f64::NAN, |a| a.r.norm_sqr()))
                .collect())
        })
        .collect::<Result<_, ScatterError>>()?;
    Ok(DensityMap {
        omegas,
        deltas,
        values: rows.into_iter().flatten().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::*;
    use crate::params::RawParams;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn params(l1: f64, l2: f64) -> SystemParams {
        SystemParams::new(RawParams {
            lambda1: l1,
            lambda2: l2,
            ..RawParams::default()
        })
        .unwrap()
    }

    #[test]
    fn decoupled_cavity_block() {
        let p = params(0.0, 0.0);
        let (m, s) = assemble_effective_system(&p, 1.0);
        let rate = 0.0025 / 2f64.sqrt();
        assert!((rate - 1.7677669529663688e-3).abs() < 1e-15);
        for (i, j) in [(4, 4), (7, 7), (4, 7), (7, 4)] {
            assert!((m[(i, j)] - Complex64::new(0.0, -rate)).norm() < 1e-16);
        }
        assert_eq!(s[4], Complex64::new(-0.05, 0.0));
        assert_eq!(s[7], Complex64::new(-0.05, 0.0));
        assert_eq!(s.iter().filter(|z| z.norm() > 0.0).count(), 2);
    }

    #[test]
    fn self_energy_phase() {
        let p = SystemParams::new(RawParams {
            tau_d: 1.0,
            ..RawParams::default()
        })
        .unwrap();
        let (diag, off) = Scatterer::new(p).self_energy(2.0);
        let phase = off / diag;
        assert!((phase - Complex64::from_polar(1.0, 2.0)).norm() < 1e-14);
    }

    #[test]
    fn resonant_mirror() {
        // exactly at omega = 1 the dark combination makes M singular
        let s = Scatterer::new(params(0.0, 0.0));
        assert!(matches!(s.solve(1.0), Err(ScatterError::SingularSystem { .. })));
        let amps = s.solve(1.0 + 1e-9).unwrap();
        assert!((amps.r.norm() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn far_detuned_transparency() {
        for (l1, l2) in [(0.0, 0.0), (0.1, 0.1), (0.1, 0.25)] {
            let amps = solve_amplitudes(&params(l1, l2), 50.0).unwrap();
            assert!((amps.t.norm() - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn rt_extremes() {
        let s = Scatterer::new(params(0.1, 0.1));
        let mut amps = s.solve(1.5).unwrap();
        amps.r = Complex64::new(0.0, 0.0);
        amps.t = Complex64::new(1.0, 0.0);
        assert_eq!(reflection_transmission(&amps), (0.0, 1.0));
        amps.r = Complex64::from_polar(1.0, 0.3);
        amps.t = Complex64::new(0.0, 0.0);
        let (r, t) = reflection_transmission(&amps);
        assert!((r - 1.0).abs() < 1e-15 && t == 0.0);
    }

    #[test]
    fn amplitude_layout() {
        let amps = solve_amplitudes(&params(0.1, 0.2), 1.3).unwrap();
        let u = &amps.localized;
        assert_eq!(amps.alpha[0][0], u[4]);
        assert_eq!(amps.alpha[1][0], u[7]);
        assert!((amps.alpha[0][2] * 2f64.sqrt() - u[2]).norm() < 1e-15);
        assert!((amps.gamma[2] * 2f64.sqrt() - u[8]).norm() < 1e-15);
        assert_eq!(amps.beta[1], u[0]);
        assert_eq!(amps.gamma[0], u[10]);
        // at tau_d = 0 the field between the qubits has zero length, so a = t - k alpha20
        assert!(amps.residual < 1e-12);
    }

    #[test]
    fn populations_at_reference_point() {
        let s = Scatterer::new(params(0.1, 0.1));
        let p = populations(&s.solve(2.004).unwrap()).unwrap();
        assert!(p.of(&GG10).unwrap() > 0.9);
        assert_eq!(p.of(&GG01), None);
        for w in linspace(0.9, 2.1, 301) {
            if let Ok(a) = s.solve(w) {
                let p = populations(&a).unwrap();
                assert!(p.antisymmetric < 1e-10);
            }
        }
    }

    #[test]
    fn zero_norm_is_reported() {
        let mut amps = solve_amplitudes(&params(0.1, 0.1), 1.3).unwrap();
        amps.localized.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        assert!(matches!(populations(&amps), Err(ScatterError::ZeroNorm(_))));
    }

    #[test]
    fn dressed_populations_sum_to_one() {
        let s = Scatterer::new(params(0.1, 0.2));
        let eig = eigendecompose(&s.blocks().h_loc).unwrap();
        let d = dressed_populations(&s.solve(0.99).unwrap(), &eig).unwrap();
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sweep_shapes() {
        let t = sweep_spectrum(&params(0.1, 0.1), 0.9, 2.1, 2, &SpectrumOptions::default()).unwrap();
        assert_eq!(t.rows.len(), 2);
        assert_eq!(t.rows[0].omega, 0.9);
        assert_eq!(t.rows[1].omega, 2.1);
        assert!(sweep_spectrum(&params(0.1, 0.1), 0.9, 2.1, 1, &SpectrumOptions::default()).is_err());
        assert!(sweep_spectrum(&params(0.1, 0.1), -1.0, 2.1, 10, &SpectrumOptions::default()).is_err());
    }

    #[test]
    fn refinement_resolves_narrow_resonance() {
        let s = Scatterer::new(params(0.1, 0.1));
        let res = s.resonances(1.95, 2.05);
        assert_eq!(res.len(), 2, "{res:?}");
        let narrow = res.iter().copied().fold((0.0, f64::INFINITY), |b, r| if r.1 < b.1 { r } else { b });
        assert!(narrow.1 < 1e-9);
        let (r, _) = reflection_transmission(&s.solve(narrow.0).unwrap());
        assert!(r > 0.99);
    }

    #[test]
    fn density_map_layout() {
        let m = density_map(&params(0.1, 0.1), (0.9, 1.1), (1.5, 2.5), 2, 2, true).unwrap();
        assert_eq!(m.values.len(), 4);
        assert!(m.values.iter().all(|r| (0.0..=1.0 + 1e-12).contains(r)));
        assert_eq!(m.get(1, 0), m.values[2]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn flux_and_residual(
            l1 in 0.0f64..0.3, l2 in 0.0f64..0.3, theta in 0.0f64..PI / 2.0,
            delta in 1.0f64..3.0, omega in 0.5f64..3.0, tau in 0.0f64..5.0,
        ) {
            let p = SystemParams::new(RawParams { lambda1: l1, lambda2: l2, theta, delta, tau_d: tau, ..RawParams::default() }).unwrap();
            if let Ok(a) = solve_amplitudes(&p, omega) {
                let (r, t) = reflection_transmission(&a);
                prop_assert!((r + t - 1.0).abs() < 1e-10, "R+T-1 = {}", r + t - 1.0);
                prop_assert!(a.residual <= 1e-12);
                if let Ok(pop) = populations(&a) {
                    prop_assert!((pop.bare.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                    let pair = pop.bare[4] + pop.bare[7];
                    prop_assert!((pop.symmetric + pop.antisymmetric - pair).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn reciprocity_and_exchange(
            l1 in 0.0f64..0.3, l2 in 0.0f64..0.3, theta in 0.0f64..PI / 2.0,
            delta in 1.0f64..3.0, omega in 0.5f64..3.0,
        ) {
            let a = solve_amplitudes(&params_full(l1, l2, theta, delta), omega);
            let b = solve_amplitudes(&params_full(l2, l1, theta, delta), omega);
            if let (Ok(a), Ok(b)) = (a, b) {
                prop_assert!((a.t - b.t).norm() < 1e-9 * (1.0 + a.condition * 1e-6));
            }
            if let Ok(s) = solve_amplitudes(&params_full(l1, l1, theta, delta), omega) {
                prop_assert!((s.localized[4] - s.localized[7]).norm() <= 1e-12 * s.condition.max(1.0) * s.localized[4].norm().max(1e-300));
            }
        }

        #[test]
        fn linear_in_incident_amplitude(
            l1 in 0.0f64..0.3, l2 in 0.0f64..0.3, omega in 0.5f64..3.0, re in -2.0f64..2.0, im in -2.0f64..2.0,
        ) {
            let c = Complex64::new(re, im);
            let s = Scatterer::new(params(l1, l2));
            if let (Ok(one), Ok(scaled)) = (s.solve(omega), s.solve_with_incident(omega, c)) {
                let tol = 1e-9 * (1.0 + c.norm());
                for (x, y) in one.localized.iter().zip(&scaled.localized) {
                    prop_assert!((x * c - y).norm() <= tol * x.norm().max(1.0));
                }
                prop_assert!(((one.t - 1.0) * c - (scaled.t - c)).norm() <= tol);
                prop_assert!((one.r * c - scaled.r).norm() <= tol);
                prop_assert!(((one.a - 1.0) * c - (scaled.a - c)).norm() <= tol);
                prop_assert!((one.b * c - scaled.b).norm() <= tol);
                prop_assert!(scaled.residual <= 1e-12);
            }
        }
    }

    fn params_full(l1: f64, l2: f64, theta: f64, delta: f64) -> SystemParams {
        SystemParams::new(RawParams {
            lambda1: l1,
            lambda2: l2,
            theta,
            delta,
            ..RawParams::default()
        })
        .unwrap()
    }
}
