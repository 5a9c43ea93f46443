//! Closed-form spin-labelled Gaussian components, inside the magnet and in
//! free flight after it.
//!
//! Each component is a minimum-uncertainty Gaussian released at the entry
//! point, with complex width `s_t = sigma0 (1 + i hbar t / (2 m sigma0^2))`.
//! Inside the magnet the packet accelerates along `±z`; after the exit it
//! drifts at `±v_z`. Both forms are exact solutions of the decoupled
//! equations, including the propagator phase.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::config::{kinematics_after, SGConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpinLabel {
    Plus,
    Minus,
}

impl SpinLabel {
    pub const BOTH: [SpinLabel; 2] = [SpinLabel::Plus, SpinLabel::Minus];

    pub fn sign(self) -> f64 {
        match self {
            SpinLabel::Plus => 1.0,
            SpinLabel::Minus => -1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SpinLabel::Plus => "plus",
            SpinLabel::Minus => "minus",
        }
    }
}

/// Phase ingredients at the snapshot: `Delta`, `k_y`, `k_z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseTerms {
    pub delta: f64,
    pub k_y: f64,
    pub k_z: f64,
}

/// One spin-labelled Gaussian component at a given time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PacketState {
    pub label: SpinLabel,
    /// Time since entering the magnet, s.
    pub time: f64,
    /// Packet center `(x, y, z)`, cm.
    pub center: [f64; 3],
    /// `s_t`, cm.
    pub complex_width: Complex64,
    pub sigma0: f64,
    /// Carrier wavevector `(0, k_y, ±k_z)`, 1/cm.
    pub wavevector: [f64; 3],
    /// Position-independent phase carried by each axis factor, rad.
    pub axis_phase: [f64; 3],
    pub phase_terms: PhaseTerms,
}

/// `s_t` for a packet of initial width `sigma0` after time `t`.
pub fn complex_width(cfg: &SGConfig, t: f64) -> Complex64 {
    Complex64::new(cfg.sigma0, cfg.sigma0 * cfg.spreading_rate() * t)
}

fn check_time(name: &str, t: f64) -> Result<()> {
    if t.is_finite() && t >= 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be finite and >= 0, got {t}")))
    }
}

/// Component after `t_free` seconds of free flight behind the magnet.
pub fn packet_at(cfg: &SGConfig, label: SpinLabel, t_free: f64) -> Result<PacketState> {
    check_time("t_free", t_free)?;
    let kin = kinematics_after(cfg, cfg.tau);
    let total = cfg.tau + t_free;
    let sign = label.sign();
    let delta = match label {
        SpinLabel::Plus => kin.delta_plus,
        SpinLabel::Minus => kin.delta_minus,
    };
    Ok(PacketState {
        label,
        time: total,
        center: [0.0, cfg.v_y * total, sign * (0.5 * kin.v_z * cfg.tau + kin.v_z * t_free)],
        complex_width: complex_width(cfg, total),
        sigma0: cfg.sigma0,
        wavevector: [0.0, kin.k_y, sign * kin.k_z],
        axis_phase: [
            0.0,
            -0.5 * kin.k_y * cfg.v_y * total,
            -delta - 0.5 * kin.k_z * kin.v_z * t_free,
        ],
        phase_terms: PhaseTerms {
            delta,
            k_y: kin.k_y,
            k_z: kin.k_z,
        },
    })
}

/// Component `elapsed` seconds after entering the magnet, `0 <= elapsed <= tau`.
///
/// The exit-state form is evaluated with `tau` replaced by `elapsed`.
pub fn packet_in_magnet(cfg: &SGConfig, label: SpinLabel, elapsed: f64) -> Result<PacketState> {
    check_time("elapsed", elapsed)?;
    if elapsed > cfg.tau {
        return Err(Error::domain(format!(
            "elapsed time {elapsed} exceeds the interaction time {}",
            cfg.tau
        )));
    }
    let kin = kinematics_after(cfg, elapsed);
    let sign = label.sign();
    let delta = match label {
        SpinLabel::Plus => kin.delta_plus,
        SpinLabel::Minus => kin.delta_minus,
    };
    Ok(PacketState {
        label,
        time: elapsed,
        center: [0.0, cfg.v_y * elapsed, sign * 0.5 * kin.v_z * elapsed],
        complex_width: complex_width(cfg, elapsed),
        sigma0: cfg.sigma0,
        wavevector: [0.0, kin.k_y, sign * kin.k_z],
        axis_phase: [0.0, -0.5 * kin.k_y * cfg.v_y * elapsed, -delta],
        phase_terms: PhaseTerms {
            delta,
            k_y: kin.k_y,
            k_z: kin.k_z,
        },
    })
}

/// Component at `t_total` seconds since entry, inside or behind the magnet.
pub fn packet_at_total_time(cfg: &SGConfig, label: SpinLabel, t_total: f64) -> Result<PacketState> {
    check_time("t_total", t_total)?;
    if t_total <= cfg.tau {
        packet_in_magnet(cfg, label, t_total)
    } else {
        packet_at(cfg, label, t_total - cfg.tau)
    }
}

impl PacketState {
    /// `|s_t|`, the standard deviation of the density along each axis.
    pub fn width(&self) -> f64 {
        self.complex_width.norm()
    }

    pub fn center_z(&self) -> f64 {
        self.center[2]
    }

    /// Total position-independent phase.
    pub fn phase_offset(&self) -> f64 {
        self.axis_phase.iter().sum()
    }

    /// `(2 pi)^{-1/2} s^{-1/2}` per axis; cubed for 3-D.
    fn log_norm_per_axis(&self) -> Complex64 {
        -0.25 * (2.0 * PI).ln() - 0.5 * self.complex_width.ln()
    }

    fn quadratic(&self, offset: f64) -> Complex64 {
        -(offset * offset) / (4.0 * self.sigma0 * self.complex_width)
    }

    /// Full complex wave function at `x`.
    pub fn amplitude(&self, x: [f64; 3]) -> Complex64 {
        let mut exponent = 3.0 * self.log_norm_per_axis();
        let mut dot = 0.0;
        for axis in 0..3 {
            exponent += self.quadratic(x[axis] - self.center[axis]);
            dot += self.wavevector[axis] * x[axis];
        }
        exponent += Complex64::new(0.0, dot + self.phase_offset());
        exponent.exp()
    }

    /// One axis factor of the amplitude; the product over the three axes is
    /// [`PacketState::amplitude`]. The z factor alone solves the 1-D z equation.
    pub fn axis_factor(&self, axis: usize, coord: f64) -> Complex64 {
        let phase = self.wavevector[axis] * coord + self.axis_phase[axis];
        (self.log_norm_per_axis() + self.quadratic(coord - self.center[axis]) + Complex64::new(0.0, phase)).exp()
    }

    /// `|psi(x)|^2` from the closed form: an isotropic Gaussian with variance `|s|^2`.
    pub fn density(&self, x: [f64; 3]) -> f64 {
        let var = self.complex_width.norm_sqr();
        let r2: f64 = (0..3).map(|a| (x[a] - self.center[a]).powi(2)).sum();
        (-0.5 * r2 / var).exp() / (2.0 * PI * var).powf(1.5)
    }

    /// Marginal density along z, `x` and `y` integrated out.
    pub fn marginal_z(&self, z: f64) -> f64 {
        let sd = self.width();
        let u = (z - self.center[2]) / sd;
        (-0.5 * u * u).exp() / (sd * (2.0 * PI).sqrt())
    }
}

/// Samples the z-marginal of `state` on `z_grid` (sorted, finite, nonempty).
pub fn density_z_profile(state: &PacketState, z_grid: &[f64]) -> Result<Vec<f64>> {
    check_grid(z_grid)?;
    Ok(z_grid.iter().map(|&z| state.marginal_z(z)).collect())
}

fn check_grid(z_grid: &[f64]) -> Result<()> {
    if z_grid.is_empty() {
        return Err(Error::domain("z grid is empty"));
    }
    if z_grid.iter().any(|z| !z.is_finite()) {
        return Err(Error::domain("z grid contains non-finite values"));
    }
    if z_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::domain("z grid is not sorted"));
    }
    Ok(())
}

/// Both z-profiles of one configuration at one free-flight time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZProfiles {
    pub t_free: f64,
    pub z: Vec<f64>,
    pub plus: Vec<f64>,
    pub minus: Vec<f64>,
}

impl ZProfiles {
    /// Profiles on `points` uniform nodes spanning both packets out to
    /// `half_widths` standard deviations.
    pub fn uniform(cfg: &SGConfig, t_free: f64, points: usize, half_widths: f64) -> Result<Self> {
        if points < 2 {
            return Err(Error::domain("profile needs at least two points"));
        }
        let plus = packet_at(cfg, SpinLabel::Plus, t_free)?;
        let minus = packet_at(cfg, SpinLabel::Minus, t_free)?;
        let extent = plus.center_z().abs() + half_widths * plus.width();
        let step = 2.0 * extent / (points - 1) as f64;
        let z: Vec<f64> = (0..points).map(|i| -extent + step * i as f64).collect();
        Ok(Self {
            t_free,
            plus: density_z_profile(&plus, &z)?,
            minus: density_z_profile(&minus, &z)?,
            z,
        })
    }

    /// Shared area `∫ min(rho_plus, rho_minus) dz` by the trapezoid rule.
    pub fn overlap(&self) -> f64 {
        trapezoid(&self.z, |i| self.plus[i].min(self.minus[i]))
    }

    /// Trapezoid integral of each profile, `(plus, minus)`.
    pub fn norms(&self) -> (f64, f64) {
        (trapezoid(&self.z, |i| self.plus[i]), trapezoid(&self.z, |i| self.minus[i]))
    }
}

fn trapezoid(z: &[f64], value: impl Fn(usize) -> f64) -> f64 {
    z.windows(2)
        .enumerate()
        .map(|(i, w)| 0.5 * (w[1] - w[0]) * (value(i) + value(i + 1)))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Preset;
    use crate::specialfn::panel_rule;
    use approx::assert_relative_eq;

    fn set3() -> SGConfig {
        SGConfig::preset(Preset::Set3)
    }

    #[test]
    fn exit_centers_mirror_each_other() {
        let cfg = set3();
        let plus = packet_at(&cfg, SpinLabel::Plus, 0.0).unwrap();
        let minus = packet_at(&cfg, SpinLabel::Minus, 0.0).unwrap();
        // v_z tau / 2 with v_z = 23.0748 cm/s
        assert_relative_eq!(plus.center_z(), 1.15374e-3, max_relative = 1e-4);
        assert_eq!(plus.center_z(), -minus.center_z());
        assert_eq!(plus.center[1], cfg.v_y * cfg.tau);
    }

    #[test]
    fn no_gradient_no_splitting() {
        let cfg = set3().with_b(0.0);
        for t in [0.0, 1e-3, 0.5] {
            for label in SpinLabel::BOTH {
                assert_eq!(packet_at(&cfg, label, t).unwrap().center_z(), 0.0);
            }
        }
        let z: Vec<f64> = (-50..=50).map(|i| i as f64 * 1e-4).collect();
        let p = density_z_profile(&packet_at(&cfg, SpinLabel::Plus, 0.1).unwrap(), &z).unwrap();
        let m = density_z_profile(&packet_at(&cfg, SpinLabel::Minus, 0.1).unwrap(), &z).unwrap();
        assert_eq!(p, m);
    }

    #[test]
    fn far_field_width() {
        let cfg = set3();
        let s = packet_at(&cfg, SpinLabel::Plus, 0.1).unwrap().width();
        // sigma0 * hbar (t + tau) / (2 m sigma0^2)
        let linear = cfg.constants.hbar * 0.1001 / (2.0 * cfg.constants.neutron_mass * cfg.sigma0);
        assert_relative_eq!(s, linear, max_relative = 1e-9);
        assert_relative_eq!(s, 3.1512, max_relative = 1e-4);
    }

    #[test]
    fn width_grows_with_time() {
        let cfg = set3();
        let mut prev = 0.0;
        for i in 0..50 {
            let t = 1e-7 * 1.5f64.powi(i);
            let s = packet_at_total_time(&cfg, SpinLabel::Minus, t).unwrap().width();
            assert!(s > prev);
            let expected = cfg.sigma0 * (1.0 + (cfg.spreading_rate() * t).powi(2)).sqrt();
            assert_relative_eq!(s, expected, max_relative = 1e-14);
            prev = s;
        }
    }

    #[test]
    fn negative_time_is_rejected() {
        let cfg = set3();
        assert!(packet_at(&cfg, SpinLabel::Plus, -1e-9).is_err());
        assert!(packet_in_magnet(&cfg, SpinLabel::Plus, 2.0 * cfg.tau).is_err());
        assert!(packet_at_total_time(&cfg, SpinLabel::Plus, f64::NAN).is_err());
    }

    #[test]
    fn in_magnet_and_free_forms_meet_at_exit() {
        let cfg = set3();
        for label in SpinLabel::BOTH {
            let a = packet_in_magnet(&cfg, label, cfg.tau).unwrap();
            let b = packet_at(&cfg, label, 0.0).unwrap();
            assert_eq!(a.center, b.center);
            assert_eq!(a.complex_width, b.complex_width);
            assert_relative_eq!(a.phase_offset(), b.phase_offset(), max_relative = 1e-15);
        }
    }

    #[test]
    fn peak_density_and_modulus_agree() {
        let cfg = SGConfig::preset(Preset::Set2);
        for t in [0.0, 1e-5, 1e-2] {
            let state = packet_at(&cfg, SpinLabel::Plus, t).unwrap();
            let peak = state.density(state.center);
            assert_relative_eq!(
                peak,
                (2.0 * PI * state.complex_width.norm_sqr()).powf(-1.5),
                max_relative = 1e-14
            );
            let s = state.width();
            for dz in [-2.0, -0.5, 0.0, 0.3, 1.7] {
                let x = [0.2 * s, state.center[1] - 0.4 * s, state.center[2] + dz * s];
                assert_relative_eq!(
                    state.amplitude(x).norm_sqr(),
                    state.density(x),
                    max_relative = 1e-12
                );
                let factored: Complex64 = (0..3).map(|a| state.axis_factor(a, x[a])).product();
                let direct = state.amplitude(x);
                assert_relative_eq!(factored.norm(), direct.norm(), max_relative = 1e-12);
                // carrier phases reach ~1e9 rad, so agreement is relative to them
                let scale = (state.wavevector[1] * x[1]).abs() + state.phase_offset().abs() + 1.0;
                let dphi = (factored / direct).arg().abs();
                assert!(dphi <= 16.0 * f64::EPSILON * scale, "{dphi} vs {scale}");
            }
            // Gaussian peak along the z line through the center.
            let at = |dz: f64| state.amplitude([0.0, state.center[1], state.center[2] + dz * s]).norm();
            assert!(at(0.0) > at(0.01) && at(0.0) > at(-0.01));
        }
    }

    #[test]
    fn mirror_symmetry_is_pointwise() {
        let cfg = set3();
        let plus = packet_at(&cfg, SpinLabel::Plus, 2e-3).unwrap();
        let minus = packet_at(&cfg, SpinLabel::Minus, 2e-3).unwrap();
        let s = plus.width();
        for i in -5..=5 {
            let x = [0.1 * s * i as f64, plus.center[1] + 0.3 * s, 0.7 * s * i as f64];
            let mirrored = [x[0], x[1], -x[2]];
            assert!((plus.density(x) - minus.density(mirrored)).abs() <= 1e-14 * plus.density(plus.center));
        }
    }

    #[test]
    fn amplitude_is_normalized_in_3d() {
        let cfg = SGConfig::preset(Preset::Set2);
        let state = packet_at(&cfg, SpinLabel::Minus, 1e-4).unwrap();
        let s = state.width();
        let rules: Vec<Vec<(f64, f64)>> = (0..3)
            .map(|a| panel_rule(state.center[a] - 10.0 * s, state.center[a] + 10.0 * s, 4))
            .collect();
        let mut total = 0.0;
        for &(x, wx) in &rules[0] {
            for &(y, wy) in &rules[1] {
                for &(z, wz) in &rules[2] {
                    total += wx * wy * wz * state.amplitude([x, y, z]).norm_sqr();
                }
            }
        }
        assert!((total - 1.0).abs() < 1e-8, "norm = {total}");
    }

    #[test]
    fn profiles_integrate_to_one() {
        let cfg = set3();
        let state = packet_at(&cfg, SpinLabel::Plus, 0.1).unwrap();
        let s = state.width();
        let z: Vec<f64> = (0..=1600).map(|i| state.center_z() - 8.0 * s + i as f64 * 0.01 * s).collect();
        let rho = density_z_profile(&state, &z).unwrap();
        let integral = trapezoid(&z, |i| rho[i]);
        assert!((integral - 1.0).abs() < 1e-6);
        assert!(density_z_profile(&state, &[]).is_err());
        assert!(density_z_profile(&state, &[1.0, 0.0]).is_err());
    }

    #[test]
    fn figure_profiles_overlap() {
        let set1 = ZProfiles::uniform(&SGConfig::preset(Preset::Set1), 0.1, 4001, 10.0).unwrap();
        assert!(set1.overlap() < 1e-6, "overlap {}", set1.overlap());
        let profiles = ZProfiles::uniform(&set3(), 0.1, 4001, 10.0).unwrap();
        // Equal widths: shared area = erfc(c / (sqrt 2 |s|)) = 2 E(t).
        let plus = packet_at(&set3(), SpinLabel::Plus, 0.1).unwrap();
        let expected = libm::erfc(plus.center_z() / (std::f64::consts::SQRT_2 * plus.width()));
        assert_relative_eq!(profiles.overlap(), expected, max_relative = 1e-5);
        assert!(profiles.overlap() > 0.1);
    }
}
