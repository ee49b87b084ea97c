//! Brute-force reference for the closed-form solver: a tight-binding chain
//! with the localized block hanging off one site, probed by a Gaussian
//! wavepacket under Crank-Nicolson time stepping.
//!
//! The chain dispersion is `E(k) = omega_probe - 2 J cos k` with the carrier at
//! `k0 = pi/2`, where the group velocity `2 J` equals `v_g` and the dispersion
//! has no curvature. A site coupling `g` then gives the emitter the
//! self-energy `-i g^2 / v_g` at the carrier, as in the continuum.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::hamiltonian::{build_scattering_blocks_with, HermitianMatrix};
use crate::params::SystemParams;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("probe frequency {omega} lies outside the usable band [{lo}, {hi}]")]
    ProbeOutsideBand { omega: f64, lo: f64, hi: f64 },
    #[error("chain of {n_sites} sites is too short for the wavepacket (needs at least {needed})")]
    Placement { n_sites: usize, needed: usize },
    #[error("localized excitation has not decayed: residual {residual:e} exceeds {tol:e}")]
    ResidualTooLarge { residual: f64, tol: f64 },
    #[error("the lattice oracle supports co-located qubits only (tau_d = {0})")]
    UnsupportedDelay(f64),
    #[error("invalid oracle setting: {0}")]
    InvalidSetting(String),
}

/// Spectral full width at half maximum of the probe power, in units of `Gamma`.
pub const DEFAULT_PACKET_FWHM: f64 = 0.1;
/// Packet start and end distance from the emitter, in spatial standard deviations.
pub const PACKET_OFFSET: f64 = 7.0;
pub const DEFAULT_DT: f64 = 4.0;
pub const RESIDUAL_TOL: f64 = 1e-2;

#[derive(Debug, Clone)]
pub struct LatticeModel {
    pub params: SystemParams,
    pub n_sites: usize,
    pub hopping: f64,
    /// Band center and carrier energy.
    pub omega_probe: f64,
    pub x0: usize,
    pub x1: usize,
    pub h_loc: HermitianMatrix,
    pub coupled: [usize; 2],
    pub g_lattice: f64,
    /// Spectral FWHM of the packet power, absolute frequency units.
    pub packet_fwhm: f64,
    pub dt: f64,
}

impl LatticeModel {
    /// Spatial standard deviation of `|psi(x)|^2`.
    pub fn packet_sigma_x(&self) -> f64 {
        packet_sigma_x(self.packet_fwhm, 2.0 * self.hopping)
    }

    pub fn band(&self) -> (f64, f64) {
        let half = 0.9 * 2.0 * self.hopping;
        (self.omega_probe - half, self.omega_probe + half)
    }

    /// Same chain with the emitters disconnected.
    pub fn decoupled(&self) -> Self {
        LatticeModel {
            g_lattice: 0.0,
            ..self.clone()
        }
    }

    pub fn with_dt(&self, dt: f64) -> Self {
        LatticeModel { dt, ..self.clone() }
    }
}

fn packet_sigma_x(fwhm: f64, velocity: f64) -> f64 {
    let sigma_omega = fwhm / (8.0 * 2f64.ln()).sqrt();
    velocity / (2.0 * sigma_omega)
}

/// Smallest chain that keeps the packet clear of both ends for the whole run.
pub fn required_sites(params: &SystemParams, packet_fwhm: f64) -> usize {
    let sigma = packet_sigma_x(packet_fwhm, params.v_g());
    (4.0 * PACKET_OFFSET * sigma).ceil() as usize + 64
}

pub fn build_lattice(params: &SystemParams, omega_probe: f64, n_sites: usize) -> Result<LatticeModel, OracleError> {
    build_lattice_with(
        params,
        omega_probe,
        n_sites,
        DEFAULT_PACKET_FWHM * params.gamma_wg(),
        true,
    )
}

pub fn build_lattice_with(
    params: &SystemParams,
    omega_probe: f64,
    n_sites: usize,
    packet_fwhm: f64,
    counter_rotating: bool,
) -> Result<LatticeModel, OracleError> {
    if params.tau_d() != 0.0 {
        return Err(OracleError::UnsupportedDelay(params.tau_d()));
    }
    if !(omega_probe > 0.0) {
        return Err(OracleError::ProbeOutsideBand {
            omega: omega_probe,
            lo: 0.0,
            hi: f64::INFINITY,
        });
    }
    if !(packet_fwhm > 0.0 && packet_fwhm.is_finite()) {
        return Err(OracleError::InvalidSetting(format!("packet width {packet_fwhm}")));
    }
    let needed = required_sites(params, packet_fwhm);
    if n_sites < needed {
        return Err(OracleError::Placement { n_sites, needed });
    }
    let blocks = build_scattering_blocks_with(params, counter_rotating);
    let coupled = [blocks.origin_index(), blocks.separation_index()];
    let x0 = n_sites / 2;
    Ok(LatticeModel {
        params: *params,
        n_sites,
        hopping: params.v_g() / 2.0,
        omega_probe,
        x0,
        x1: x0,
        h_loc: blocks.h_loc,
        coupled,
        g_lattice: params.g(),
        packet_fwhm,
        dt: DEFAULT_DT,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleResult {
    pub omega: f64,
    pub reflection: f64,
    pub transmission: f64,
    /// Probability left on the emitter site and localized block.
    pub residual: f64,
    pub norm_drift: f64,
    pub steps: usize,
    pub dt: f64,
    pub n_sites: usize,
    pub packet_fwhm: f64,
}

/// Crank-Nicolson propagator for a uniform open chain with a local block
/// attached to one site. The block is eliminated by a Schur complement so
/// each step is a single tridiagonal solve.
struct Propagator {
    n: usize,
    x0: usize,
    beta: Complex64,
    coupled: Vec<usize>,
    /// `-i dt/2 * g`
    kick: Complex64,
    b_local: DMatrix<Complex64>,
    a_local_inv: DMatrix<Complex64>,
    z: DVector<Complex64>,
    cp: Vec<Complex64>,
    inv_denom: Vec<Complex64>,
    dp: Vec<Complex64>,
}

impl Propagator {
    /// `local` is the block Hamiltonian already shifted by the chain's onsite energy.
    fn new(n: usize, hopping: f64, x0: usize, local: &DMatrix<Complex64>, coupled: &[usize], g: f64, dt: f64) -> Self {
        let i_half = Complex64::new(0.0, dt / 2.0);
        let k = local.nrows();
        let id = DMatrix::<Complex64>::identity(k, k);
        let a_local = &id + local * i_half;
        let b_local = &id - local * i_half;
        let a_local_inv = a_local.try_inverse().expect("Cayley block is invertible");
        let mut c = DVector::<Complex64>::zeros(k);
        for &j in coupled {
            c[j] = i_half * g;
        }
        let z = &a_local_inv * &c;
        let schur = c.transpose() * &z;

        let beta = i_half * (-hopping);
        let mut cp = vec![Complex64::new(0.0, 0.0); n];
        let mut inv_denom = vec![Complex64::new(0.0, 0.0); n];
        let mut prev = Complex64::new(0.0, 0.0);
        for x in 0..n {
            let mut diag = Complex64::new(1.0, 0.0);
            if x == x0 {
                diag -= schur[(0, 0)];
            }
            let denom = diag - beta * prev;
            inv_denom[x] = 1.0 / denom;
            cp[x] = beta * inv_denom[x];
            prev = cp[x];
        }
        Propagator {
            n,
            x0,
            beta,
            coupled: coupled.to_vec(),
            kick: -i_half * g,
            b_local,
            a_local_inv,
            z,
            cp,
            inv_denom,
            dp: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    fn step(&mut self, psi: &mut [Complex64], u: &mut DVector<Complex64>) {
        let n = self.n;
        let zero = Complex64::new(0.0, 0.0);

        let mut rhs_u = &self.b_local * &*u;
        for &j in &self.coupled {
            rhs_u[j] += self.kick * psi[self.x0];
        }
        let y = &self.a_local_inv * rhs_u;
        // extra source on the emitter site: B coupling to u minus c^T y, c = -kick
        let source: Complex64 = self
            .coupled
            .iter()
            .map(|&j| self.kick * (u[j] + y[j]))
            .sum();

        // forward sweep with the explicit half step folded in
        let nb = -self.beta;
        let mut prev = zero;
        for x in 0..n {
            let left = if x > 0 { psi[x - 1] } else { zero };
            let right = if x + 1 < n { psi[x + 1] } else { zero };
            let mut rhs = psi[x] + nb * (left + right);
            if x == self.x0 {
                rhs += source;
            }
            prev = flush((rhs - self.beta * prev) * self.inv_denom[x]);
            self.dp[x] = prev;
        }
        let mut next = zero;
        for x in (0..n).rev() {
            next = flush(self.dp[x] - self.cp[x] * next);
            psi[x] = next;
        }
        *u = y - &self.z * psi[self.x0];
    }
}

/// The implicit solve leaks exponentially small amplitude across the whole
/// chain; zeroing it keeps the sweeps out of subnormal arithmetic.
#[inline]
fn flush(z: Complex64) -> Complex64 {
    if z.re.abs() < 1e-150 && z.im.abs() < 1e-150 {
        Complex64::new(0.0, 0.0)
    } else {
        z
    }
}

fn gaussian_packet(n: usize, center: f64, sigma_x: f64, k0: f64) -> Vec<Complex64> {
    let reach = 12.0 * sigma_x;
    let mut psi: Vec<Complex64> = (0..n)
        .map(|x| {
            let d = x as f64 - center;
            if d.abs() > reach {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::from_polar((-d * d / (4.0 * sigma_x * sigma_x)).exp(), k0 * d)
            }
        })
        .collect();
    let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    psi.iter_mut().for_each(|z| *z /= norm);
    psi
}

/// Scatters a packet centered at `omega` off the emitters and returns the
/// probability found on either side once the packet has cleared them.
pub fn oracle_scatter(model: &LatticeModel, omega: f64) -> Result<OracleResult, OracleError> {
    let (lo, hi) = model.band();
    if !(omega > lo && omega < hi) {
        return Err(OracleError::ProbeOutsideBand { omega, lo, hi });
    }
    if !(model.dt > 0.0 && model.dt.is_finite()) {
        return Err(OracleError::InvalidSetting(format!("time step {}", model.dt)));
    }
    let j = model.hopping;
    let k0 = (-(omega - model.omega_probe) / (2.0 * j)).acos();
    let velocity = 2.0 * j * k0.sin();
    let sigma = model.packet_sigma_x();
    let start = model.x0 as f64 - PACKET_OFFSET * sigma;
    if start - PACKET_OFFSET * sigma < 0.0 {
        return Err(OracleError::Placement {
            n_sites: model.n_sites,
            needed: required_sites(&model.params, model.packet_fwhm),
        });
    }

    let dim = model.h_loc.dim();
    let mut local = model.h_loc.matrix().clone();
    for d in 0..dim {
        local[(d, d)] -= Complex64::new(model.omega_probe, 0.0);
    }
    let mut prop = Propagator::new(
        model.n_sites,
        j,
        model.x0,
        &local,
        &model.coupled,
        model.g_lattice,
        model.dt,
    );
    let mut psi = gaussian_packet(model.n_sites, start, sigma, k0);
    let mut u = DVector::<Complex64>::zeros(dim);

    let duration = 2.0 * PACKET_OFFSET * sigma / velocity;
    let steps = (duration / model.dt).ceil() as usize;
    for _ in 0..steps {
        prop.step(&mut psi, &mut u);
    }

    let reflection: f64 = psi[..model.x0].iter().map(|z| z.norm_sqr()).sum();
    let transmission: f64 = psi[model.x0 + 1..].iter().map(|z| z.norm_sqr()).sum();
    let trapped = psi[model.x0].norm_sqr() + u.norm_squared();
    let total = reflection + transmission + trapped;
    let result = OracleResult {
        omega,
        reflection,
        transmission,
        residual: trapped,
        norm_drift: (total - 1.0).abs(),
        steps,
        dt: model.dt,
        n_sites: model.n_sites,
        packet_fwhm: model.packet_fwhm,
    };
    if result.residual > RESIDUAL_TOL {
        return Err(OracleError::ResidualTooLarge {
            residual: result.residual,
            tol: RESIDUAL_TOL,
        });
    }
    Ok(result)
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayCalibration {
    pub fitted_rate: f64,
    pub expected_rate: f64,
    pub relative_error: f64,
}

/// Lets a single two-level emitter at the carrier energy decay into an empty
/// chain with the model's hopping and coupling, and fits the survival
/// probability to an exponential. The continuum prediction is `2 g^2 / v_g`.
pub fn calibrate_decay(model: &LatticeModel) -> Result<DecayCalibration, OracleError> {
    let j = model.hopping;
    let expected = 2.0 * model.g_lattice * model.g_lattice / (2.0 * j);
    if !(expected > 0.0) {
        return Err(OracleError::InvalidSetting("emitter is decoupled".into()));
    }
    // fit window: survival from e^-0.5 down to e^-5
    let t_end = 5.5 / expected;
    let n = 2 * (2.0 * j * t_end).ceil() as usize + 256;
    let x0 = n / 2;
    let local = DMatrix::<Complex64>::zeros(1, 1);
    let mut prop = Propagator::new(n, j, x0, &local, &[0], model.g_lattice, model.dt);
    let mut psi = vec![Complex64::new(0.0, 0.0); n];
    let mut u = DVector::from_element(1, Complex64::new(1.0, 0.0));

    let (mut st, mut sy, mut stt, mut sty, mut m) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let steps = (t_end / model.dt).ceil() as usize;
    for s in 1..=steps {
        prop.step(&mut psi, &mut u);
        let p = u[0].norm_sqr();
        let ln = p.ln();
        if (-5.0..=-0.5).contains(&ln) {
            let t = s as f64 * model.dt;
            st += t;
            sy += ln;
            stt += t * t;
            sty += t * ln;
            m += 1.0;
        }
    }
    if m < 3.0 {
        return Err(OracleError::InvalidSetting("time step too coarse for the decay fit".into()));
    }
    let slope = (m * sty - st * sy) / (m * stt - st * st);
    let fitted = -slope;
    Ok(DecayCalibration {
        fitted_rate: fitted,
        expected_rate: expected,
        relative_error: (fitted - expected).abs() / expected,
    })
}
