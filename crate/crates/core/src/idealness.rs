//! Formal idealness (the inner product |I| of the two spatial components)
//! versus operational idealness (the error integral E(t) and its limit E_s).

use std::f64::consts::{PI, SQRT_2};
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::config::SGConfig;
use crate::error::{Error, Result};
use crate::specialfn::{gaussian_half_line, integrate_1d, HalfLine};
use crate::wavepacket::{packet_at, PacketState, SpinLabel};

/// Smallest `ln|I|` that the quadrature check will attempt.
pub const MIN_RESOLVABLE_LOG_I: f64 = -700.0;

/// Classification and saturation thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// `|I| < eps_i` counts as formally ideal.
    pub eps_i: f64,
    /// `E_s < eps_e` counts as operationally ideal.
    pub eps_e: f64,
    /// `E(t)` is saturated once `E(t) - E_s < saturation_tol`.
    pub saturation_tol: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            eps_i: 1e-3,
            eps_e: 1e-5,
            saturation_tol: 1e-2,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("eps_i", self.eps_i), ("eps_e", self.eps_e)] {
            if !(v > 0.0 && v < 0.5) {
                return Err(Error::domain(format!("{name} must lie in (0, 0.5), got {v}")));
            }
        }
        if !(self.saturation_tol > 0.0) {
            return Err(Error::domain("saturation_tol must be > 0"));
        }
        Ok(())
    }

    /// True when `|I| >= eps_i` forces `E_s >= eps_e`.
    ///
    /// `-ln|I| >= 2 (mu b tau sigma0 / hbar)^2`, hence
    /// `E_s >= erfc(sqrt(-ln|I|)) / 2 >= erfc(sqrt(-ln eps_i)) / 2`.
    pub fn consistent(&self) -> bool {
        self.eps_e <= 0.5 * libm::erfc((-self.eps_i.ln()).sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Formally and operationally ideal.
    CaseI,
    /// Formally and operationally nonideal.
    CaseIi,
    /// Formally ideal, operationally nonideal.
    CaseIii,
    /// `|I| >= eps_i` with `E_s < eps_e`; only reachable with inconsistent thresholds.
    Intermediate,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::CaseI => "case_i",
            Regime::CaseIi => "case_ii",
            Regime::CaseIii => "case_iii",
            Regime::Intermediate => "intermediate",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InnerProduct {
    pub log_abs_i: f64,
    /// `exp(log_abs_i)`, zero on underflow.
    pub abs_i: f64,
}

/// `|I|` of the exit components in closed form:
/// `ln|I| = -mu^2 b^2 tau^4 / (8 m^2 sigma0^2) - 2 mu^2 b^2 tau^2 sigma0^2 / hbar^2`.
pub fn inner_product(cfg: &SGConfig) -> InnerProduct {
    let c = &cfg.constants;
    let force = c.neutron_moment * cfg.b;
    let separation = force * cfg.tau * cfg.tau / c.neutron_mass;
    let momentum = force * cfg.tau * cfg.sigma0 / c.hbar;
    let log_abs_i = -separation * separation / (8.0 * cfg.sigma0 * cfg.sigma0) - 2.0 * momentum * momentum;
    InnerProduct {
        log_abs_i,
        abs_i: log_abs_i.exp(),
    }
}

/// `|∫ psi_+^* psi_- d^3x|` after `t_free` of free flight, by one adaptive
/// quadrature per axis (the integrand factorizes).
pub fn inner_product_numeric(cfg: &SGConfig, t_free: f64) -> Result<f64> {
    let analytic = inner_product(cfg);
    if analytic.log_abs_i <= MIN_RESOLVABLE_LOG_I {
        return Err(Error::domain(format!(
            "ln|I| = {:.3e} is below what quadrature can resolve",
            analytic.log_abs_i
        )));
    }
    let plus = packet_at(cfg, SpinLabel::Plus, t_free)?;
    let minus = packet_at(cfg, SpinLabel::Minus, t_free)?;
    let mut overlap = Complex64::new(1.0, 0.0);
    for axis in 0..3 {
        overlap *= axis_overlap(&plus, &minus, axis)?;
    }
    Ok(overlap.norm())
}

/// The product `psi_+^* psi_-` along one axis is `exp(A u^2 + B u + C)` in
/// `u = x - x0`, `x0` the midpoint of the two centers. Collecting the
/// coefficients first keeps the large, nearly cancelling carrier and chirp
/// phases out of the pointwise evaluation.
fn axis_overlap(plus: &PacketState, minus: &PacketState, axis: usize) -> Result<Complex64> {
    let i = Complex64::i();
    let x0 = 0.5 * (plus.center[axis] + minus.center[axis]);
    let (dp, dm) = (plus.center[axis] - x0, minus.center[axis] - x0);
    let wp = (4.0 * plus.sigma0 * plus.complex_width).inv().conj();
    let wm = (4.0 * minus.sigma0 * minus.complex_width).inv();
    let log_norm = |s: Complex64| -0.25 * (2.0 * PI).ln() - 0.5 * s.ln();
    let dk = minus.wavevector[axis] - plus.wavevector[axis];
    let a = -(wp + wm);
    let b = 2.0 * (dp * wp + dm * wm) + i * dk;
    let c = log_norm(plus.complex_width).conj() + log_norm(minus.complex_width) - dp * dp * wp - dm * dm * wm
        + i * (dk * x0 + minus.axis_phase[axis] - plus.axis_phase[axis]);

    let s = plus.width().max(minus.width());
    let reach = dp.abs().max(dm.abs()) + 12.0 * s;
    let integrand = |u: f64| (a * u * u + b * u + c).exp();
    let tol = 1e-13;
    let re = integrate_1d(|u| integrand(u).re, -reach, reach, tol)?;
    let im = integrate_1d(|u| integrand(u).im, -reach, reach, tol)?;
    Ok(Complex64::new(re.value, im.value))
}

/// `E(t) = erfc(v_z (t + tau/2) / (sqrt 2 |s_{t+tau}|)) / 2`: the mass of the
/// minus component in the upper half-space `z > 0`.
pub fn error_integral(cfg: &SGConfig, t_free: f64) -> Result<f64> {
    let minus = packet_at(cfg, SpinLabel::Minus, t_free)?;
    gaussian_half_line(minus.center_z(), minus.width(), HalfLine::Positive)
}

/// Same quantity as [`error_integral`] by quadrature of the minus
/// component's z-marginal over `z > 0`.
pub fn error_integral_quadrature(cfg: &SGConfig, t_free: f64) -> Result<f64> {
    let minus = packet_at(cfg, SpinLabel::Minus, t_free)?;
    let upper = minus.center_z().max(0.0) + 40.0 * minus.width();
    Ok(integrate_1d(|z| minus.marginal_z(z), 0.0, upper, 1e-14)?.value)
}

/// `E_s = erfc(sqrt 2 mu b tau sigma0 / hbar) / 2`, the `t -> inf` limit of `E(t)`.
pub fn saturated_error(cfg: &SGConfig) -> f64 {
    0.5 * libm::erfc(SQRT_2 * asymptotic_ratio(cfg) / 2.0)
}

/// Limit of `center_z / |s|`, i.e. `2 mu b tau sigma0 / hbar`.
pub fn asymptotic_ratio(cfg: &SGConfig) -> f64 {
    let c = &cfg.constants;
    2.0 * c.neutron_moment * cfg.b * cfg.tau * cfg.sigma0 / c.hbar
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Saturation {
    #[serde(rename = "E_s")]
    pub e_s: f64,
    pub t_s: f64,
    /// Richardson extrapolation `2 E(2T) - E(T)` of the far tail; agrees
    /// with `e_s` to `O(1/T^2)`.
    pub tail_estimate: f64,
}

const TAIL_TIME: f64 = 100.0;

pub fn saturation(cfg: &SGConfig, tol: f64) -> Result<Saturation> {
    if !(tol > 0.0) {
        return Err(Error::domain("saturation tolerance must be > 0"));
    }
    let e_s = saturated_error(cfg);
    let excess = |t: f64| error_integral(cfg, t).map(|e| e - e_s);

    let t_s = if excess(0.0)? < tol {
        0.0
    } else {
        let mut lo = 0.0;
        let mut hi = cfg.tau;
        let mut doublings = 0;
        while excess(hi)? >= tol {
            lo = hi;
            hi *= 2.0;
            doublings += 1;
            if doublings > 2000 || !hi.is_finite() {
                return Err(Error::domain("saturation time not bracketed"));
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if excess(mid)? < tol {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    };

    let tail = TAIL_TIME.max(1e3 * cfg.tau);
    let near = error_integral(cfg, tail - cfg.tau)?;
    let far = error_integral(cfg, 2.0 * tail - cfg.tau)?;
    Ok(Saturation {
        e_s,
        t_s,
        tail_estimate: 2.0 * far - near,
    })
}

pub fn classify(cfg: &SGConfig, thresholds: &Thresholds) -> Regime {
    let formally_ideal = inner_product(cfg).log_abs_i < thresholds.eps_i.ln();
    let operationally_ideal = saturated_error(cfg) < thresholds.eps_e;
    match (formally_ideal, operationally_ideal) {
        (true, true) => Regime::CaseI,
        (true, false) => Regime::CaseIii,
        (false, false) => Regime::CaseIi,
        (false, true) => Regime::Intermediate,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub t: f64,
    #[serde(rename = "E")]
    pub e: f64,
}

/// `n` log-spaced times on `[start, end]`.
pub fn log_times(start: f64, end: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => {
            let (a, b) = (start.ln(), end.ln());
            (0..n)
                .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
                .collect()
        }
    }
}

/// 200 log-spaced free-flight times on `[1e-6, 1]` s.
pub fn default_times() -> Vec<f64> {
    log_times(1e-6, 1.0, 200)
}

pub fn error_curve(cfg: &SGConfig, times: &[f64]) -> Result<Vec<CurvePoint>> {
    times
        .iter()
        .map(|&t| Ok(CurvePoint { t, e: error_integral(cfg, t)? }))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdealnessReport {
    #[serde(rename = "log_abs_I")]
    pub log_abs_i: f64,
    #[serde(rename = "abs_I")]
    pub abs_i: f64,
    #[serde(rename = "E_s")]
    pub e_s: f64,
    pub t_s: f64,
    pub regime: Regime,
    pub curve: Vec<CurvePoint>,
}

pub fn idealness_report(cfg: &SGConfig, thresholds: &Thresholds, times: &[f64]) -> Result<IdealnessReport> {
    thresholds.validate()?;
    let ip = inner_product(cfg);
    let sat = saturation(cfg, thresholds.saturation_tol)?;
    Ok(IdealnessReport {
        log_abs_i: ip.log_abs_i,
        abs_i: ip.abs_i,
        e_s: sat.e_s,
        t_s: sat.t_s,
        regime: classify(cfg, thresholds),
        curve: error_curve(cfg, times)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Preset;
    use approx::assert_relative_eq;

    fn preset(p: Preset) -> SGConfig {
        SGConfig::preset(p)
    }

    #[test]
    fn inner_product_examples() {
        let cfg = preset(Preset::Set2);
        assert_eq!(inner_product(&cfg.with_b(0.0)).abs_i, 1.0);
        // ln|I| = -0.16639 - 0.06715 by hand
        assert_relative_eq!(inner_product(&cfg).abs_i, 0.79176, max_relative = 1e-4);
        let set3 = inner_product(&preset(Preset::Set3));
        assert_relative_eq!(set3.log_abs_i, -6655.85, max_relative = 1e-5);
        assert_eq!(set3.abs_i, 0.0);
    }

    #[test]
    fn numeric_inner_product_matches_and_is_conserved() {
        let cfg = preset(Preset::Set2);
        let analytic = inner_product(&cfg).abs_i;
        for t in [0.0, 0.05] {
            let numeric = inner_product_numeric(&cfg, t).unwrap();
            assert!((numeric - analytic).abs() < 1e-8, "t={t}: {numeric} vs {analytic}");
        }
        let flat = inner_product_numeric(&cfg.with_b(0.0), 0.0).unwrap();
        assert!((flat - 1.0).abs() < 1e-10);
        assert!(inner_product_numeric(&preset(Preset::Set3), 0.0).is_err());
    }

    #[test]
    fn error_integral_examples() {
        let set3 = preset(Preset::Set3);
        for t in [0.0, 1e-3, 10.0] {
            assert_eq!(error_integral(&set3.with_b(0.0), t).unwrap(), 0.5);
        }
        let e = error_integral(&set3, 0.0012).unwrap();
        assert_relative_eq!(e, 0.2404825, max_relative = 1e-5);
        assert!((e - error_integral_quadrature(&set3, 0.0012).unwrap()).abs() < 1e-10);
        assert!(error_integral(&preset(Preset::Set1), 1.0).unwrap() < 1e-6);
    }

    #[test]
    fn saturation_examples() {
        // mpmath with the default constants
        assert_relative_eq!(saturated_error(&preset(Preset::Set3)), 0.23179708571478, max_relative = 1e-10);
        assert_relative_eq!(saturated_error(&preset(Preset::Set2)), 0.35700693618488, max_relative = 1e-10);
        assert!(saturated_error(&preset(Preset::Set1)) < 1e-6);

        let sat = saturation(&preset(Preset::Set3), Thresholds::default().saturation_tol).unwrap();
        assert_relative_eq!(sat.t_s, 1.0308088e-3, max_relative = 1e-6);
        assert!((sat.tail_estimate - sat.e_s).abs() < 1e-10);

        let flat = saturation(&preset(Preset::Set3).with_b(0.0), 1e-4).unwrap();
        assert_eq!((flat.e_s, flat.t_s), (0.5, 0.0));
    }

    #[test]
    fn tight_saturation_tolerance_pushes_t_s_out() {
        let sat = saturation(&preset(Preset::Set3), 1e-4).unwrap();
        assert_relative_eq!(sat.t_s, 0.11167620, max_relative = 1e-6);
    }

    #[test]
    fn figure_caption_regimes() {
        let th = Thresholds::default();
        assert!(th.consistent());
        for b in [5e4, 5.5e4, 6e4] {
            assert_eq!(classify(&SGConfig::new(b, 5e-4, 1e-5).unwrap(), &th), Regime::CaseI, "b={b}");
        }
        for b in [1e3, 2e3, 3e3] {
            assert_eq!(classify(&SGConfig::new(b, 1e-4, 1e-4).unwrap(), &th), Regime::CaseIi, "b={b}");
        }
        for b in [2e4, 3e4, 4e4] {
            assert_eq!(classify(&SGConfig::new(b, 1e-4, 1e-5).unwrap(), &th), Regime::CaseIii, "b={b}");
        }
    }

    #[test]
    fn inconsistent_thresholds_can_land_in_the_gap() {
        let th = Thresholds {
            eps_i: 1e-6,
            eps_e: 0.3,
            ..Thresholds::default()
        };
        assert!(!th.consistent());
        // |I| ~ 0.39 but E_s ~ 0.23
        let cfg = SGConfig::new(4e3, 1e-4, 1e-4).unwrap();
        assert_eq!(classify(&cfg, &th), Regime::Intermediate);
    }

    #[test]
    fn report_curve_is_bounded_and_monotone() {
        let report = idealness_report(&preset(Preset::Set3), &Thresholds::default(), &default_times()).unwrap();
        assert_eq!(report.curve.len(), 200);
        assert_eq!(report.regime, Regime::CaseIii);
        assert!(report.curve.windows(2).all(|w| w[1].e <= w[0].e));
        assert!(report.curve.iter().all(|p| (0.0..=0.5).contains(&p.e)));
        assert!((report.curve.last().unwrap().e - report.e_s).abs() < 1e-4);
    }

    #[test]
    fn log_times_endpoints() {
        let t = log_times(1e-6, 1.0, 200);
        assert_relative_eq!(t[0], 1e-6, max_relative = 1e-14);
        assert_relative_eq!(t[199], 1.0, max_relative = 1e-14);
        assert!(t.windows(2).all(|w| w[1] > w[0]));
    }
}
