//! Generalized two-qubit Rabi Hamiltonian
//!
//! `H = sum_j sigma_ee^(j) + delta a^dag a + sum_j lambda_j (a + a^dag)(cos(theta) sigma_x^(j) + sin(theta) sigma_z^(j))`
//!
//! projected onto a truncated set of bare states, plus the closed-form table
//! form of the localized scattering block.

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

use crate::basis::{self, localized_basis, BasisSet, BasisState};
use crate::params::SystemParams;

/// Tolerance used for the Hermiticity invariant.
pub const HERMITIAN_TOL: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HamiltonianError {
    #[error("matrix is not Hermitian: max |H_ij - conj(H_ji)| = {0:e}")]
    NotHermitian(f64),
    #[error("matrix dimension {matrix} does not match basis size {basis}")]
    DimensionMismatch { matrix: usize, basis: usize },
}

/// Dense complex Hermitian matrix tied to the basis it is expressed in.
#[derive(Debug, Clone)]
pub struct HermitianMatrix {
    basis: BasisSet,
    data: DMatrix<Complex64>,
}

impl HermitianMatrix {
    pub fn new(basis: BasisSet, data: DMatrix<Complex64>) -> Result<Self, HamiltonianError> {
        if data.nrows() != basis.len() || data.ncols() != basis.len() {
            return Err(HamiltonianError::DimensionMismatch {
                matrix: data.nrows().max(data.ncols()),
                basis: basis.len(),
            });
        }
        let dev = hermiticity_defect(&data);
        if dev > HERMITIAN_TOL {
            return Err(HamiltonianError::NotHermitian(dev));
        }
        Ok(HermitianMatrix { basis, data })
    }

    /// Skips the Hermiticity check; used by callers that need to exercise
    /// downstream validation.
    pub fn new_unchecked(basis: BasisSet, data: DMatrix<Complex64>) -> Self {
        HermitianMatrix { basis, data }
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn basis(&self) -> &BasisSet {
        &self.basis
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.data
    }

    pub fn entry(&self, row: &BasisState, col: &BasisState) -> Option<Complex64> {
        let i = self.basis.index_of(row)?;
        let j = self.basis.index_of(col)?;
        Some(self.data[(i, j)])
    }
}

pub fn hermiticity_defect(m: &DMatrix<Complex64>) -> f64 {
    let n = m.nrows();
    let mut dev: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

/// `H|s>` as a list of `(target, amplitude)` pairs, before truncation.
fn apply_rabi(p: &SystemParams, s: &BasisState, counter_rotating: bool) -> Vec<(BasisState, f64)> {
    let mut out = Vec::with_capacity(9);
    let diag = s.q1.is_excited() as u32 as f64 + s.q2.is_excited() as u32 as f64
        + p.delta() * s.n_cav as f64;
    out.push((*s, diag));

    let (sin_t, cos_t) = p.theta().sin_cos();
    let n = s.n_cav;
    let lower = (n > 0).then(|| (n - 1, (n as f64).sqrt()));
    let raise = (n + 1, ((n + 1) as f64).sqrt());

    for (j, lambda) in [(0usize, p.lambda1()), (1, p.lambda2())] {
        if lambda == 0.0 {
            continue;
        }
        let q = if j == 0 { s.q1 } else { s.q2 };
        let with_qubit = |qubit, n_cav| {
            let mut t = *s;
            if j == 0 {
                t.q1 = qubit;
            } else {
                t.q2 = qubit;
            }
            t.n_cav = n_cav;
            t
        };

        for &(n_new, amp) in lower.iter().chain(std::iter::once(&raise)) {
            let photon_down = n_new < n;
            // sigma_x part: rotating terms are sigma_+ a and sigma_- a^dag
            let rotating = (q == basis::Qubit::G && photon_down) || (q == basis::Qubit::E && !photon_down);
            if counter_rotating || rotating {
                out.push((with_qubit(q.flipped(), n_new), lambda * cos_t * amp));
            }
            if counter_rotating {
                out.push((with_qubit(q, n_new), lambda * sin_t * q.sigma_z() * amp));
            }
        }
    }
    out
}

/// Projects the Rabi Hamiltonian onto `basis`; components leaving the basis are dropped.
pub fn project_rabi(p: &SystemParams, basis: BasisSet, counter_rotating: bool) -> HermitianMatrix {
    let n = basis.len();
    let mut data = DMatrix::<Complex64>::zeros(n, n);
    for (col, s) in basis.iter().enumerate() {
        for (target, amp) in apply_rabi(p, s, counter_rotating) {
            if let Some(row) = basis.index_of(&target) {
                data[(row, col)] += Complex64::new(amp, 0.0);
            }
        }
    }
    HermitianMatrix::new(basis, data).expect("Rabi projection is Hermitian")
}

/// Rabi Hamiltonian on `fock_basis(n_max)`.
///
/// With `counter_rotating == false` only `cos(theta)(sigma_+ a + sigma_- a^dag)`
/// survives; the whole `sigma_z (a + a^dag)` channel is dropped.
pub fn build_rabi_matrix(p: &SystemParams, n_max: usize, counter_rotating: bool) -> HermitianMatrix {
    project_rabi(p, basis::fock_basis(n_max), counter_rotating)
}

/// The constants `C1..C10` of the tabulated scattering matrix, in units of `omega_q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AppendixConstants {
    pub c1: Complex64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
    pub c6: f64,
    pub c7: f64,
    pub c8: f64,
    pub c9: f64,
    pub c10: f64,
}

impl AppendixConstants {
    pub fn new(p: &SystemParams) -> Self {
        let d = p.delta();
        let (sin_t, cos_t) = p.theta().sin_cos();
        let c1 = Complex64::new(0.0, -p.gamma_wg() * p.v_g() * p.v_g() / (4.0 * p.g() * p.g()));
        AppendixConstants {
            c1,
            c2: 1.0,
            c3: d,
            c4: 2.0 + d,
            c5: 1.0 + 2.0 * d,
            c6: 1.0 + d,
            c7: p.lambda1() * cos_t,
            c8: p.lambda2() * cos_t,
            c9: (p.lambda1() + p.lambda2()) * sin_t,
            c10: (p.lambda1() - p.lambda2()) * sin_t,
        }
    }
}

/// Where a localized state touches the waveguide.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Position {
    /// Qubit 1 at `x = 0`.
    Origin,
    /// Qubit 2 at `x = d`.
    Separation,
}

#[derive(Debug, Clone)]
pub struct ScatteringBlocks {
    /// Localized 11x11 block acting on physical amplitudes.
    pub h_loc: HermitianMatrix,
    /// The two waveguide-coupled states, `|eg00>` at the origin and `|ge00>` at `d`.
    pub couplings: [(usize, Position); 2],
}

impl ScatteringBlocks {
    pub fn origin_index(&self) -> usize {
        self.couplings[0].0
    }

    pub fn separation_index(&self) -> usize {
        self.couplings[1].0
    }
}

pub fn build_scattering_blocks(p: &SystemParams) -> ScatteringBlocks {
    build_scattering_blocks_with(p, true)
}

pub fn build_scattering_blocks_with(p: &SystemParams, counter_rotating: bool) -> ScatteringBlocks {
    let basis = localized_basis();
    let eg = basis.index_of(&basis::EG00).expect("|eg00> is localized");
    let ge = basis.index_of(&basis::GE00).expect("|ge00> is localized");
    ScatteringBlocks {
        h_loc: project_rabi(p, basis, counter_rotating),
        couplings: [(eg, Position::Origin), (ge, Position::Separation)],
    }
}

/// Localized 11x11 block written out entry by entry from the closed-form table.
///
/// Rows and columns follow `localized_basis()`; the waveguide row and column
/// are omitted and `|gg00>` is the last index.
pub fn appendix_table(p: &SystemParams) -> DMatrix<f64> {
    let c = AppendixConstants::new(p);
    let s = std::f64::consts::SQRT_2;
    let (c2, c3, c4, c5, c6) = (c.c2, c.c3, c.c4, c.c5, c.c6);
    let (c7, c8, c9, c10) = (c.c7, c.c8, c.c9, c.c10);
    #[rustfmt::skip]
    let rows: [[f64; 11]; 11] = [
        // ee10    ee00     eg20      eg10      eg00  ge20       ge10       ge00  gg20      gg10      gg00
        [c4,      c9,      s * c8,   0.0,      c8,   s * c7,    0.0,       c7,   0.0,      0.0,      0.0],
        [c9,      2.0 * c2, 0.0,     c8,       0.0,  0.0,       c7,        0.0,  0.0,      0.0,      0.0],
        [s * c8,  0.0,     c5,       s * c10,  0.0,  0.0,       0.0,       0.0,  0.0,      s * c7,   0.0],
        [0.0,     c8,      s * c10,  c6,       c10,  0.0,       0.0,       0.0,  s * c7,   0.0,      c7],
        [c8,      0.0,     0.0,      c10,      c2,   0.0,       0.0,       0.0,  0.0,      c7,       0.0],
        [s * c7,  0.0,     0.0,      0.0,      0.0,  c5,        -s * c10,  0.0,  0.0,      s * c8,   0.0],
        [0.0,     c7,      0.0,      0.0,      0.0,  -s * c10,  c6,        -c10, s * c8,   0.0,      c8],
        [c7,      0.0,     0.0,      0.0,      0.0,  0.0,       -c10,      c2,   0.0,      c8,       0.0],
        [0.0,     0.0,     0.0,      s * c7,   0.0,  0.0,       s * c8,    0.0,  2.0 * c3, -s * c9,  0.0],
        [0.0,     0.0,     s * c7,   0.0,      c7,   s * c8,    0.0,       c8,   -s * c9,  c3,       -c9],
        [0.0,     0.0,     0.0,      c7,       0.0,  0.0,       c8,        0.0,  0.0,      -c9,      0.0],
    ];
    DMatrix::from_fn(11, 11, |i, j| rows[i][j])
}

#[derive(Debug, Clone)]
pub struct AppendixReport {
    pub max_abs_diff: f64,
    /// `(row, col, programmatic, transcribed)` for entries differing by more than `1e-14`.
    pub mismatches: Vec<(BasisState, BasisState, f64, f64)>,
}

impl AppendixReport {
    pub fn matches(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Compares the projected localized block against the transcribed table.
pub fn verify_against_appendix(p: &SystemParams) -> AppendixReport {
    let blocks = build_scattering_blocks(p);
    let table = appendix_table(p);
    let basis = blocks.h_loc.basis().clone();
    let m = blocks.h_loc.matrix();
    let mut max_abs_diff: f64 = 0.0;
    let mut mismatches = Vec::new();
    for i in 0..11 {
        for j in 0..11 {
            let built = m[(i, j)];
            let diff = (built - Complex64::new(table[(i, j)], 0.0)).norm();
            max_abs_diff = max_abs_diff.max(diff);
            if diff > 1e-14 {
                mismatches.push((
                    basis.get(i).unwrap(),
                    basis.get(j).unwrap(),
                    built.re,
                    table[(i, j)],
                ));
            }
        }
    }
    AppendixReport {
        max_abs_diff,
        mismatches,
    }
}
