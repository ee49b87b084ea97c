//! Physical parameters of the qubit-cavity-waveguide system.
//!
//! All energies are measured in units of the qubit transition frequency,
//! so `omega_q == 1` throughout.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("cavity frequency ratio must be positive, got {0}")]
    NonPositiveFrequency(f64),
    #[error("rate `{name}` must be positive, got {value}")]
    NonPositiveRate { name: &'static str, value: f64 },
    #[error("coupling `{name}` must be non-negative, got {value}")]
    NegativeCoupling { name: &'static str, value: f64 },
    #[error("propagation delay must be non-negative, got {0}")]
    NegativeDelay(f64),
    #[error("parameter `{0}` is not finite")]
    NonFinite(&'static str),
}

/// Unvalidated parameter record as it appears in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawParams {
    /// Cavity frequency in units of the qubit frequency.
    pub delta: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    /// Coupling mixing angle in radians.
    #[serde(default = "default_theta")]
    pub theta: f64,
    /// Qubit-waveguide contact coupling.
    pub g: f64,
    /// Decay rate into the waveguide.
    pub gamma_wg: f64,
    /// Inter-qubit propagation delay `d / v_g`.
    #[serde(default)]
    pub tau_d: f64,
}

fn default_theta() -> f64 {
    PI / 6.0
}

impl Default for RawParams {
    /// The reference working point: `omega_c = 2`, `lambda = 0.1`, `theta = pi/6`,
    /// `g = 0.05`, `Gamma = 0.005`, co-located qubits.
    fn default() -> Self {
        RawParams {
            delta: 2.0,
            lambda1: 0.1,
            lambda2: 0.1,
            theta: default_theta(),
            g: 0.05,
            gamma_wg: 0.005,
            tau_d: 0.0,
        }
    }
}

/// Validated, immutable system parameters.
///
/// The group velocity is derived from `Gamma = 4 g^2 / v_g^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SystemParams {
    delta: f64,
    lambda1: f64,
    lambda2: f64,
    theta: f64,
    g: f64,
    gamma_wg: f64,
    v_g: f64,
    tau_d: f64,
}

impl SystemParams {
    pub fn new(raw: RawParams) -> Result<Self, ParamError> {
        validate_params(raw)
    }

    pub fn omega_q(&self) -> f64 {
        1.0
    }
    pub fn delta(&self) -> f64 {
        self.delta
    }
    pub fn lambda1(&self) -> f64 {
        self.lambda1
    }
    pub fn lambda2(&self) -> f64 {
        self.lambda2
    }
    /// Mixing angle reduced to `[0, 2pi)`.
    pub fn theta(&self) -> f64 {
        self.theta
    }
    pub fn g(&self) -> f64 {
        self.g
    }
    pub fn gamma_wg(&self) -> f64 {
        self.gamma_wg
    }
    pub fn v_g(&self) -> f64 {
        self.v_g
    }
    pub fn tau_d(&self) -> f64 {
        self.tau_d
    }

    /// Magnitude `g^2 / v_g` of the waveguide self-energy on each coupled state.
    pub fn self_energy_rate(&self) -> f64 {
        self.g * self.g / self.v_g
    }

    /// Propagation phase `omega * tau_d` between the two qubit positions.
    pub fn phase(&self, omega: f64) -> f64 {
        omega * self.tau_d
    }

    pub fn raw(&self) -> RawParams {
        RawParams {
            delta: self.delta,
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            theta: self.theta,
            g: self.g,
            gamma_wg: self.gamma_wg,
            tau_d: self.tau_d,
        }
    }

    pub fn with_delta(&self, delta: f64) -> Result<Self, ParamError> {
        validate_params(RawParams { delta, ..self.raw() })
    }

    pub fn with_couplings(&self, lambda1: f64, lambda2: f64) -> Result<Self, ParamError> {
        validate_params(RawParams {
            lambda1,
            lambda2,
            ..self.raw()
        })
    }
}

impl Default for SystemParams {
    fn default() -> Self {
        validate_params(RawParams::default()).expect("default parameters are valid")
    }
}

pub fn validate_params(raw: RawParams) -> Result<SystemParams, ParamError> {
    let fields = [
        ("delta", raw.delta),
        ("lambda1", raw.lambda1),
        ("lambda2", raw.lambda2),
        ("theta", raw.theta),
        ("g", raw.g),
        ("gamma_wg", raw.gamma_wg),
        ("tau_d", raw.tau_d),
    ];
    if let Some((name, _)) = fields.iter().find(|(_, v)| !v.is_finite()) {
        return Err(ParamError::NonFinite(name));
    }
    if raw.delta <= 0.0 {
        return Err(ParamError::NonPositiveFrequency(raw.delta));
    }
    if raw.g <= 0.0 {
        return Err(ParamError::NonPositiveRate {
            name: "g",
            value: raw.g,
        });
    }
    if raw.gamma_wg <= 0.0 {
        return Err(ParamError::NonPositiveRate {
            name: "gamma_wg",
            value: raw.gamma_wg,
        });
    }
    for (name, value) in [("lambda1", raw.lambda1), ("lambda2", raw.lambda2)] {
        if value < 0.0 {
            return Err(ParamError::NegativeCoupling { name, value });
        }
    }
    if raw.tau_d < 0.0 {
        return Err(ParamError::NegativeDelay(raw.tau_d));
    }

    let mut theta = raw.theta.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if theta >= TAU {
        theta = 0.0;
    }

    Ok(SystemParams {
        delta: raw.delta,
        lambda1: raw.lambda1,
        lambda2: raw.lambda2,
        theta,
        g: raw.g,
        gamma_wg: raw.gamma_wg,
        v_g: 2.0 * raw.g / raw.gamma_wg.sqrt(),
        tau_d: raw.tau_d,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reference_point_group_velocity() {
        let p = SystemParams::default();
        assert!((p.v_g() - 2f64.sqrt()).abs() < 1e-14);
        assert!((p.self_energy_rate() - 0.0025 / 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(p.omega_q(), 1.0);
    }

    #[test]
    fn uncoupled_cavity_is_valid() {
        let p = validate_params(RawParams {
            lambda1: 0.0,
            lambda2: 0.0,
            ..RawParams::default()
        })
        .unwrap();
        assert_eq!(p.lambda1(), 0.0);
    }

    #[test]
    fn rejects_nonphysical_values() {
        let base = RawParams::default();
        assert_eq!(
            validate_params(RawParams { delta: -1.0, ..base }),
            Err(ParamError::NonPositiveFrequency(-1.0))
        );
        assert!(matches!(
            validate_params(RawParams { g: 0.0, ..base }),
            Err(ParamError::NonPositiveRate { name: "g", .. })
        ));
        assert!(matches!(
            validate_params(RawParams { gamma_wg: -0.1, ..base }),
            Err(ParamError::NonPositiveRate { name: "gamma_wg", .. })
        ));
        assert!(matches!(
            validate_params(RawParams { lambda2: -0.1, ..base }),
            Err(ParamError::NegativeCoupling { name: "lambda2", .. })
        ));
        assert_eq!(
            validate_params(RawParams { tau_d: -2.0, ..base }),
            Err(ParamError::NegativeDelay(-2.0))
        );
        assert_eq!(
            validate_params(RawParams { theta: f64::NAN, ..base }),
            Err(ParamError::NonFinite("theta"))
        );
    }

    #[test]
    fn theta_is_reduced() {
        let p = validate_params(RawParams {
            theta: -PI / 2.0,
            ..RawParams::default()
        })
        .unwrap();
        assert!((p.theta() - 1.5 * PI).abs() < 1e-14);
        let p = validate_params(RawParams {
            theta: 5.0 * PI,
            ..RawParams::default()
        })
        .unwrap();
        assert!((p.theta() - PI).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn decay_rate_identity(g in 1e-4f64..1.0, gamma in 1e-5f64..1.0, theta in -20.0f64..20.0) {
            let p = validate_params(RawParams { g, gamma_wg: gamma, theta, ..RawParams::default() }).unwrap();
            let lhs = 4.0 * g * g;
            let rhs = p.gamma_wg() * p.v_g() * p.v_g();
            prop_assert!(((lhs - rhs) / lhs).abs() < 1e-14);
            prop_assert!(p.theta() >= 0.0 && p.theta() < TAU);
        }
    }
}
