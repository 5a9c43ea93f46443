//! Experiment parameters, spin amplitudes and the kinematic quantities
//! derived from them.
//!
//! Everything is in CGS units: gauss, gauss/cm, cm, s, g, erg.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reduced Planck constant, erg·s.
pub const HBAR: f64 = 1.0546e-27;
/// Neutron mass, g.
pub const NEUTRON_MASS: f64 = 1.6749e-24;
/// Magnitude of the neutron magnetic moment, erg/gauss.
pub const NEUTRON_MOMENT: f64 = 9.662e-24;

/// Default ratio R in the decoupling test `B0 > R·b·σ0`.
pub const DEFAULT_DECOUPLING_RATIO: f64 = 100.0;
/// Bias field used when none is given. It only enters phases and the decoupling check.
pub const DEFAULT_B0: f64 = 1e4;
/// Longitudinal group velocity used when none is given, cm/s.
pub const DEFAULT_VY: f64 = 1e4;

const NORM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    pub hbar: f64,
    pub neutron_mass: f64,
    pub neutron_moment: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            hbar: HBAR,
            neutron_mass: NEUTRON_MASS,
            neutron_moment: NEUTRON_MOMENT,
        }
    }
}

impl PhysicalConstants {
    pub fn validate(&self) -> Result<()> {
        positive("hbar", self.hbar)?;
        positive("mass", self.neutron_mass)?;
        positive("moment", self.neutron_moment)
    }
}

/// Parameters of one Stern-Gerlach arrangement.
///
/// The field inside the magnet is `B = (-b x, 0, B0 + b z)`, the magnet spans
/// `0 <= y <= d` and the particle spends `tau` inside it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SGConfig {
    /// Field gradient, gauss/cm.
    pub b: f64,
    /// Bias field magnitude, gauss.
    #[serde(rename = "B0")]
    pub b0: f64,
    /// Interaction time, s.
    pub tau: f64,
    /// Initial packet width, cm.
    pub sigma0: f64,
    /// Longitudinal group velocity, cm/s.
    pub v_y: f64,
    pub constants: PhysicalConstants,
    /// Ratio R used by [`check_decoupling`].
    pub decoupling_ratio: f64,
}

impl SGConfig {
    /// Builds a config with default constants, `B0` and `v_y`.
    pub fn new(b: f64, tau: f64, sigma0: f64) -> Result<Self> {
        let cfg = Self {
            b,
            b0: DEFAULT_B0,
            tau,
            sigma0,
            v_y: DEFAULT_VY,
            constants: PhysicalConstants::default(),
            decoupling_ratio: DEFAULT_DECOUPLING_RATIO,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn preset(preset: Preset) -> Self {
        let (b, tau, sigma0) = preset.parameters();
        Self::new(b, tau, sigma0).expect("presets are valid")
    }

    pub fn with_b(mut self, b: f64) -> Self {
        self.b = b;
        self
    }

    pub fn with_b0(mut self, b0: f64) -> Self {
        self.b0 = b0;
        self
    }

    pub fn with_v_y(mut self, v_y: f64) -> Self {
        self.v_y = v_y;
        self
    }

    /// Magnet length `d = v_y·tau`, cm.
    pub fn magnet_length(&self) -> f64 {
        self.v_y * self.tau
    }

    pub fn validate(&self) -> Result<()> {
        non_negative("b", self.b)?;
        non_negative("B0", self.b0)?;
        positive("tau", self.tau)?;
        positive("sigma0", self.sigma0)?;
        positive("v_y", self.v_y)?;
        positive("decoupling_ratio", self.decoupling_ratio)?;
        self.constants.validate()
    }

    /// Sets a named scalar parameter. Used by sweeps and CLI overrides.
    pub fn set_param(&mut self, name: ParamName, value: f64) {
        match name {
            ParamName::B => self.b = value,
            ParamName::B0 => self.b0 = value,
            ParamName::Tau => self.tau = value,
            ParamName::Sigma0 => self.sigma0 = value,
            ParamName::Vy => self.v_y = value,
        }
    }

    pub fn param(&self, name: ParamName) -> f64 {
        match name {
            ParamName::B => self.b,
            ParamName::B0 => self.b0,
            ParamName::Tau => self.tau,
            ParamName::Sigma0 => self.sigma0,
            ParamName::Vy => self.v_y,
        }
    }

    /// Drift speed `mu b tau / m` picked up inside the magnet.
    pub fn drift_speed(&self) -> f64 {
        self.constants.neutron_moment * self.b * self.tau / self.constants.neutron_mass
    }

    /// Spreading rate `hbar / (2 m sigma0^2)`, 1/s.
    pub fn spreading_rate(&self) -> f64 {
        self.constants.hbar / (2.0 * self.constants.neutron_mass * self.sigma0 * self.sigma0)
    }
}

/// Scalar parameters that can be swept or overridden by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParamName {
    #[serde(rename = "b")]
    B,
    #[serde(rename = "B0")]
    B0,
    #[serde(rename = "tau")]
    Tau,
    #[serde(rename = "sigma0")]
    Sigma0,
    #[serde(rename = "v_y")]
    Vy,
}

impl ParamName {
    pub fn as_str(self) -> &'static str {
        match self {
            ParamName::B => "b",
            ParamName::B0 => "B0",
            ParamName::Tau => "tau",
            ParamName::Sigma0 => "sigma0",
            ParamName::Vy => "v_y",
        }
    }
}

impl fmt::Display for ParamName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ParamName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "b" => Ok(ParamName::B),
            "B0" => Ok(ParamName::B0),
            "tau" => Ok(ParamName::Tau),
            "sigma0" => Ok(ParamName::Sigma0),
            "v_y" | "vy" => Ok(ParamName::Vy),
            other => Err(Error::config(other, "unknown parameter name")),
        }
    }
}

/// The three representative parameter sets: case (i), (ii) and (iii).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
pub enum Preset {
    Set1,
    Set2,
    Set3,
}

impl Preset {
    /// `(b, tau, sigma0)` in gauss/cm, s, cm.
    pub fn parameters(self) -> (f64, f64, f64) {
        match self {
            Preset::Set1 => (6e4, 5e-4, 1e-5),
            Preset::Set2 => (2e3, 1e-4, 1e-4),
            Preset::Set3 => (4e4, 1e-4, 1e-5),
        }
    }
}

/// Spin state `alpha |up> + beta |down>`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinAmplitudes {
    alpha: Complex64,
    beta: Complex64,
}

impl SpinAmplitudes {
    pub fn new(alpha: Complex64, beta: Complex64) -> Result<Self> {
        let norm = alpha.norm_sqr() + beta.norm_sqr();
        if !norm.is_finite() || (norm - 1.0).abs() >= NORM_TOLERANCE {
            return Err(Error::domain(format!(
                "spin amplitudes must satisfy |alpha|^2 + |beta|^2 = 1, got {norm}"
            )));
        }
        Ok(Self { alpha, beta })
    }

    pub fn real(alpha: f64, beta: f64) -> Result<Self> {
        Self::new(Complex64::new(alpha, 0.0), Complex64::new(beta, 0.0))
    }

    /// `alpha = beta = 1/sqrt(2)`.
    pub fn equal() -> Self {
        let a = std::f64::consts::FRAC_1_SQRT_2;
        Self::real(a, a).expect("normalized")
    }

    pub fn alpha(&self) -> Complex64 {
        self.alpha
    }

    pub fn beta(&self) -> Complex64 {
        self.beta
    }

    pub fn p_up(&self) -> f64 {
        self.alpha.norm_sqr()
    }

    pub fn p_down(&self) -> f64 {
        self.beta.norm_sqr()
    }

    pub fn swapped(&self) -> Self {
        Self {
            alpha: self.beta,
            beta: self.alpha,
        }
    }
}

impl Default for SpinAmplitudes {
    fn default() -> Self {
        Self::equal()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedKinematics {
    /// Transverse drift speed, cm/s.
    pub v_z: f64,
    /// Longitudinal wavenumber, 1/cm.
    pub k_y: f64,
    /// Transverse wavenumber gained in the magnet, 1/cm.
    pub k_z: f64,
    /// Exit phase of the plus component, rad.
    pub delta_plus: f64,
    /// Exit phase of the minus component, rad.
    pub delta_minus: f64,
}

pub fn derive_kinematics(cfg: &SGConfig) -> DerivedKinematics {
    kinematics_after(cfg, cfg.tau)
}

/// Kinematics after `elapsed` seconds inside the magnet (`elapsed <= tau`).
///
/// The common phase is the linear-potential term `m v_z^2 t / (6 hbar)`,
/// i.e. `F^2 t^3 / (6 m hbar)` with `F = mu b`.
pub(crate) fn kinematics_after(cfg: &SGConfig, elapsed: f64) -> DerivedKinematics {
    let c = &cfg.constants;
    let v_z = c.neutron_moment * cfg.b * elapsed / c.neutron_mass;
    let k_y = c.neutron_mass * cfg.v_y / c.hbar;
    let k_z = c.neutron_mass * v_z / c.hbar;
    let bias = c.neutron_moment * cfg.b0 * elapsed / c.hbar;
    let common = c.neutron_mass * v_z * v_z * elapsed / (6.0 * c.hbar);
    DerivedKinematics {
        v_z,
        k_y,
        k_z,
        delta_plus: bias + common,
        delta_minus: -bias + common,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecouplingReport {
    /// `B0 / (b sigma0)`; infinite when `b = 0` and `B0 > 0`.
    pub ratio: f64,
    pub threshold: f64,
    pub valid: bool,
}

/// Checks `B0 >> b sigma0` as `B0 > R b sigma0` (strict).
pub fn check_decoupling(cfg: &SGConfig) -> DecouplingReport {
    let transverse = cfg.b * cfg.sigma0;
    let ratio = if cfg.b0 == 0.0 {
        0.0
    } else if transverse == 0.0 {
        f64::INFINITY
    } else {
        cfg.b0 / transverse
    };
    DecouplingReport {
        ratio,
        threshold: cfg.decoupling_ratio,
        valid: cfg.b0 > cfg.decoupling_ratio * transverse,
    }
}

/// Values read from a flat `key = value` file or from command-line flags.
/// Unset entries fall back to a preset or defaults in [`ConfigValues::resolve`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigValues {
    pub b: Option<f64>,
    pub b0: Option<f64>,
    pub tau: Option<f64>,
    pub sigma0: Option<f64>,
    pub v_y: Option<f64>,
    pub hbar: Option<f64>,
    pub mass: Option<f64>,
    pub moment: Option<f64>,
    pub alpha_re: Option<f64>,
    pub alpha_im: Option<f64>,
    pub beta_re: Option<f64>,
    pub beta_im: Option<f64>,
}

impl ConfigValues {
    /// Parses `key = value` lines. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = Self::default();
        let mut seen = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(line, format!("line {}: expected key=value", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            let parsed: f64 = value
                .parse()
                .map_err(|_| Error::config(key, format!("`{value}` is not a number")))?;
            if !parsed.is_finite() {
                return Err(Error::config(key, "value must be finite"));
            }
            if seen.insert(key.to_string(), lineno).is_some() {
                return Err(Error::config(key, "duplicate key"));
            }
            *values.slot(key)? = Some(parsed);
        }
        Ok(values)
    }

    fn slot(&mut self, key: &str) -> Result<&mut Option<f64>> {
        Ok(match key {
            "b" => &mut self.b,
            "B0" => &mut self.b0,
            "tau" => &mut self.tau,
            "sigma0" => &mut self.sigma0,
            "v_y" | "vy" => &mut self.v_y,
            "hbar" => &mut self.hbar,
            "mass" => &mut self.mass,
            "moment" => &mut self.moment,
            "alpha_re" => &mut self.alpha_re,
            "alpha_im" => &mut self.alpha_im,
            "beta_re" => &mut self.beta_re,
            "beta_im" => &mut self.beta_im,
            other => return Err(Error::config(other, "unknown key")),
        })
    }

    /// Entries set in `other` replace those in `self`.
    pub fn overlay(mut self, other: &ConfigValues) -> Self {
        macro_rules! take {
            ($($field:ident),*) => {
                $( if other.$field.is_some() { self.$field = other.$field; } )*
            };
        }
        take!(b, b0, tau, sigma0, v_y, hbar, mass, moment, alpha_re, alpha_im, beta_re, beta_im);
        self
    }

    /// Builds a validated configuration. Without a preset, `b`, `tau` and
    /// `sigma0` are required.
    pub fn resolve(&self, preset: Option<Preset>) -> Result<(SGConfig, SpinAmplitudes)> {
        let defaults = preset.map(Preset::parameters);
        let pick = |value: Option<f64>, fallback: Option<f64>, key: &str| {
            value
                .or(fallback)
                .ok_or_else(|| Error::config(key, "missing required parameter"))
        };
        let b = pick(self.b, defaults.map(|d| d.0), "b")?;
        let tau = pick(self.tau, defaults.map(|d| d.1), "tau")?;
        let sigma0 = pick(self.sigma0, defaults.map(|d| d.2), "sigma0")?;
        let base = PhysicalConstants::default();
        let cfg = SGConfig {
            b,
            b0: self.b0.unwrap_or(DEFAULT_B0),
            tau,
            sigma0,
            v_y: self.v_y.unwrap_or(DEFAULT_VY),
            constants: PhysicalConstants {
                hbar: self.hbar.unwrap_or(base.hbar),
                neutron_mass: self.mass.unwrap_or(base.neutron_mass),
                neutron_moment: self.moment.unwrap_or(base.neutron_moment),
            },
            decoupling_ratio: DEFAULT_DECOUPLING_RATIO,
        };
        cfg.validate()?;

        let spin = if self.alpha_re.is_none()
            && self.alpha_im.is_none()
            && self.beta_re.is_none()
            && self.beta_im.is_none()
        {
            SpinAmplitudes::equal()
        } else {
            let alpha = Complex64::new(self.alpha_re.unwrap_or(0.0), self.alpha_im.unwrap_or(0.0));
            let beta = Complex64::new(self.beta_re.unwrap_or(0.0), self.beta_im.unwrap_or(0.0));
            SpinAmplitudes::new(alpha, beta).map_err(|e| Error::config("alpha", e.to_string()))?
        };
        Ok((cfg, spin))
    }
}

fn positive(key: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::config(key, format!("must be finite and > 0, got {value}")))
    }
}

fn non_negative(key: &str, value: f64) -> Result<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(Error::config(key, format!("must be finite and >= 0, got {value}")))
    }
}
