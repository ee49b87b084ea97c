//! Run configuration: a strict JSON schema validated before any computation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::basis::BasisState;
use crate::params::{ParamError, RawParams, SystemParams};
use crate::spectrum::CUTOFF_CAP;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config is not valid JSON for the schema: {0}")]
    Syntax(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Params(#[from] ParamError),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub params: RawParams,
    #[serde(default = "yes")]
    pub counter_rotating: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<LevelsBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scatter: Option<ScatterBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub populations: Option<PopulationsBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map: Option<MapBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleBlock>,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
    /// Reserved; every command is deterministic.
    #[serde(default)]
    pub seed: u64,
}

fn default_output_dir() -> String {
    "out".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelsBlock {
    pub delta_range: [f64; 2],
    #[serde(default = "default_level_points")]
    pub n_points: usize,
    #[serde(default = "default_n_levels")]
    pub n_levels: usize,
    /// Fock cutoff; chosen by convergence at the sweep midpoint when absent.
    #[serde(default)]
    pub n_max: Option<usize>,
    /// Pair of bare-state labels whose anticrossing is reported.
    #[serde(default = "default_anticrossing")]
    pub anticrossing: Option<[String; 2]>,
}

fn default_level_points() -> usize {
    401
}
fn default_n_levels() -> usize {
    8
}
fn default_anticrossing() -> Option<[String; 2]> {
    Some(["gg10".into(), "ee00".into()])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScatterBlock {
    pub omega_range: [f64; 2],
    #[serde(default = "default_spectrum_points")]
    pub n_points: usize,
    #[serde(default = "yes")]
    pub refine_resonances: bool,
    /// Runs one spectrum per value, overriding `params.lambda2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda2_values: Option<Vec<f64>>,
    #[serde(default = "default_min_height")]
    pub min_height: f64,
    #[serde(default = "default_min_prominence")]
    pub min_prominence: f64,
}

fn default_spectrum_points() -> usize {
    2400
}
fn default_min_height() -> f64 {
    0.1
}
fn default_min_prominence() -> f64 {
    0.05
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PopulationBasis {
    Bare,
    Dressed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationsBlock {
    pub omega_range: [f64; 2],
    #[serde(default = "default_spectrum_points")]
    pub n_points: usize,
    #[serde(default = "yes")]
    pub refine_resonances: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda2_values: Option<Vec<f64>>,
    #[serde(default = "default_basis")]
    pub basis: PopulationBasis,
}

fn default_basis() -> PopulationBasis {
    PopulationBasis::Bare
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapBlock {
    pub omega_range: [f64; 2],
    pub delta_range: [f64; 2],
    #[serde(default = "default_n_omega")]
    pub n_omega: usize,
    #[serde(default = "default_n_delta")]
    pub n_delta: usize,
}

fn default_n_omega() -> usize {
    400
}
fn default_n_delta() -> usize {
    101
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitModel {
    Fano,
    Lorentzian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitTarget {
    /// Spectrum column, e.g. `R` or `pop_antisym`.
    pub column: String,
    pub model: FitModel,
    #[serde(default = "default_fit_window")]
    pub window: [f64; 2],
    /// Narrow the window to this many peak widths around the peak nearest
    /// `target` inside `window`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auto_window: Option<f64>,
    #[serde(default = "default_target")]
    pub target: f64,
}

fn default_fit_window() -> [f64; 2] {
    [0.9, 1.1]
}
fn default_target() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitBlock {
    /// Spectrum CSV files to fit; when empty the `scatter` block is run.
    #[serde(default)]
    pub inputs: Vec<String>,
    pub targets: Vec<FitTarget>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleBlock {
    pub omegas: Vec<f64>,
    /// Chain length; the shortest admissible chain when absent.
    #[serde(default)]
    pub n_sites: Option<usize>,
    /// Packet spectral FWHM in units of `gamma_wg`.
    #[serde(default = "default_packet")]
    pub packet_fwhm: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
}

fn default_packet() -> f64 {
    crate::oracle::DEFAULT_PACKET_FWHM
}
fn default_dt() -> f64 {
    crate::oracle::DEFAULT_DT
}

fn check_range(name: &str, [lo, hi]: [f64; 2]) -> Result<(), ConfigError> {
    if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && hi > lo) {
        return Err(invalid(format!("{name} [{lo}, {hi}] must be positive and increasing")));
    }
    Ok(())
}

fn check_points(name: &str, n: usize) -> Result<(), ConfigError> {
    if n < 2 {
        return Err(invalid(format!("{name} must be at least 2, got {n}")));
    }
    Ok(())
}

fn check_lambdas(values: &Option<Vec<f64>>) -> Result<(), ConfigError> {
    if let Some(v) = values {
        if v.is_empty() {
            return Err(invalid("lambda2_values must not be empty"));
        }
        if let Some(bad) = v.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
            return Err(invalid(format!("lambda2 value {bad} must be finite and non-negative")));
        }
    }
    Ok(())
}

impl RunConfig {
    /// Parses and validates.
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn system_params(&self) -> Result<SystemParams, ConfigError> {
        Ok(SystemParams::new(self.params)?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.system_params()?;
        if let Some(l) = &self.levels {
            check_range("levels.delta_range", l.delta_range)?;
            check_points("levels.n_points", l.n_points)?;
            if let Some(n) = l.n_max {
                if n > CUTOFF_CAP {
                    return Err(invalid(format!("levels.n_max {n} exceeds {CUTOFF_CAP}")));
                }
            }
            let dim = 4 * (l.n_max.unwrap_or(2) + 1);
            if l.n_levels == 0 || l.n_levels > dim {
                return Err(invalid(format!("levels.n_levels must lie in 1..={dim}")));
            }
            if let Some(pair) = &l.anticrossing {
                for label in pair {
                    label
                        .parse::<BasisState>()
                        .map_err(|e| invalid(format!("levels.anticrossing: {e}")))?;
                }
            }
        }
        if let Some(s) = &self.scatter {
            check_range("scatter.omega_range", s.omega_range)?;
            check_points("scatter.n_points", s.n_points)?;
            check_lambdas(&s.lambda2_values)?;
            if !(s.min_height.is_finite() && s.min_prominence.is_finite() && s.min_prominence >= 0.0) {
                return Err(invalid("scatter peak thresholds must be finite"));
            }
        }
        if let Some(p) = &self.populations {
            check_range("populations.omega_range", p.omega_range)?;
            check_points("populations.n_points", p.n_points)?;
            check_lambdas(&p.lambda2_values)?;
        }
        if let Some(m) = &self.map {
            check_range("map.omega_range", m.omega_range)?;
            check_range("map.delta_range", m.delta_range)?;
            check_points("map.n_omega", m.n_omega)?;
            check_points("map.n_delta", m.n_delta)?;
        }
        if let Some(f) = &self.fit {
            if f.targets.is_empty() {
                return Err(invalid("fit.targets must not be empty"));
            }
            if f.inputs.is_empty() && self.scatter.is_none() {
                return Err(invalid("fit needs either fit.inputs or a scatter block"));
            }
            for t in &f.targets {
                check_range("fit.window", t.window)?;
                if let Some(k) = t.auto_window {
                    if !(k.is_finite() && k > 0.0) {
                        return Err(invalid("fit.auto_window must be positive"));
                    }
                }
                if !t.target.is_finite() {
                    return Err(invalid("fit.target must be finite"));
                }
                if t.column.is_empty() || t.column == "omega" || t.column == "flags" {
                    return Err(invalid(format!("fit.column `{}` cannot be fitted", t.column)));
                }
            }
        }
        if let Some(o) = &self.oracle {
            if o.omegas.is_empty() {
                return Err(invalid("oracle.omegas must not be empty"));
            }
            if let Some(bad) = o.omegas.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
                return Err(invalid(format!("oracle frequency {bad} must be positive")));
            }
            if !(o.packet_fwhm.is_finite() && o.packet_fwhm > 0.0) {
                return Err(invalid("oracle.packet_fwhm must be positive"));
            }
            if !(o.dt.is_finite() && o.dt > 0.0) {
                return Err(invalid("oracle.dt must be positive"));
            }
            if self.params.tau_d != 0.0 {
                return Err(invalid("the oracle supports tau_d = 0 only"));
            }
        }
        if self.output_dir.is_empty() {
            return Err(invalid("output_dir must not be empty"));
        }
        Ok(())
    }

    /// Parameter sets for a sweep block with optional `lambda2` overrides,
    /// paired with a file-name suffix.
    pub fn lambda2_variants(&self, values: &Option<Vec<f64>>) -> Result<Vec<(String, SystemParams)>, ConfigError> {
        let base = self.system_params()?;
        match values {
            None => Ok(vec![(String::new(), base)]),
            Some(v) => v
                .iter()
                .map(|&l2| {
                    let p = base.with_couplings(base.lambda1(), l2)?;
                    Ok((format!("_lambda2_{l2}"), p))
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config() {
        let c = RunConfig::from_json("{}").unwrap();
        assert_eq!(c.params, RawParams::default());
        assert!(c.counter_rotating);
        assert_eq!(c.output_dir, "out");
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(
            RunConfig::from_json(r#"{"bogus": 1}"#),
            Err(ConfigError::Syntax(_))
        ));
        assert!(matches!(
            RunConfig::from_json(r#"{"params": {"delta": 2, "lambda1": 0.1, "lambda2": 0.1, "g": 0.05, "gamma_wg": 0.005, "extra": 0}}"#),
            Err(ConfigError::Syntax(_))
        ));
    }

    #[test]
    fn missing_delta_range() {
        assert!(RunConfig::from_json(r#"{"levels": {"n_points": 10}}"#).is_err());
        let c = RunConfig::from_json(r#"{"levels": {"delta_range": [1.5, 2.5]}}"#).unwrap();
        let l = c.levels.unwrap();
        assert_eq!((l.n_points, l.n_levels, l.n_max), (401, 8, None));
    }

    #[test]
    fn validation_errors() {
        let bad = [
            r#"{"levels": {"delta_range": [2.5, 1.5]}}"#,
            r#"{"levels": {"delta_range": [1.5, 2.5], "n_max": -1}}"#,
            r#"{"levels": {"delta_range": [1.5, 2.5], "n_max": 100}}"#,
            r#"{"levels": {"delta_range": [1.5, 2.5], "anticrossing": ["gg10", "xx"]}}"#,
            r#"{"scatter": {"omega_range": [0.9, 2.1], "n_points": 1}}"#,
            r#"{"scatter": {"omega_range": [0.9, 2.1], "lambda2_values": [-0.1]}}"#,
            r#"{"map": {"omega_range": [0.9, 1.1], "delta_range": [0, 2.5]}}"#,
            r#"{"fit": {"targets": [{"column": "R", "model": "fano"}]}}"#,
            r#"{"oracle": {"omegas": []}}"#,
            r#"{"params": {"delta": -2, "lambda1": 0.1, "lambda2": 0.1, "g": 0.05, "gamma_wg": 0.005}}"#,
        ];
        for text in bad {
            assert!(RunConfig::from_json(text).is_err(), "{text}");
        }
    }

    #[test]
    fn roundtrip_and_variants() {
        let c = RunConfig::from_json(
            r#"{"scatter": {"omega_range": [0.9, 1.1], "lambda2_values": [0.15, 0.2]}}"#,
        )
        .unwrap();
        assert_eq!(RunConfig::from_json(&c.to_json()).unwrap(), c);
        let v = c.lambda2_variants(&c.scatter.as_ref().unwrap().lambda2_values).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v[1].1.lambda2(), 0.2);
        assert_eq!(v[0].0, "_lambda2_0.15");
    }
}
