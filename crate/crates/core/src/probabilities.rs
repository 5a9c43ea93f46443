//! Observable probabilities for an imperfect spin analyzer and the counts
//! seen by a second, ideal analyzer placed behind it.

use serde::{Deserialize, Serialize};

use crate::config::{SGConfig, SpinAmplitudes};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityTable {
    #[serde(rename = "P_up_ideal")]
    pub p_up_ideal: f64,
    #[serde(rename = "P_down_ideal")]
    pub p_down_ideal: f64,
    /// Spin up found in the upper plane.
    #[serde(rename = "P_up_ni")]
    pub p_up_ni: f64,
    /// Spin down found in the lower plane.
    #[serde(rename = "P_down_ni")]
    pub p_down_ni: f64,
    /// Everything found in the upper plane.
    #[serde(rename = "P_plus_ni")]
    pub p_plus_ni: f64,
    /// Everything found in the lower plane.
    #[serde(rename = "P_minus_ni")]
    pub p_minus_ni: f64,
    #[serde(rename = "E_s")]
    pub e_s: f64,
}

fn check_error(e_s: f64) -> Result<()> {
    if (0.0..=0.5).contains(&e_s) {
        Ok(())
    } else {
        Err(Error::domain(format!("E_s must lie in [0, 0.5], got {e_s}")))
    }
}

pub fn probability_table(spin: &SpinAmplitudes, e_s: f64) -> Result<ProbabilityTable> {
    check_error(e_s)?;
    let (up, down) = (spin.p_up(), spin.p_down());
    let kept = 1.0 - e_s;
    Ok(ProbabilityTable {
        p_up_ideal: up,
        p_down_ideal: down,
        p_up_ni: kept * up,
        p_down_ni: kept * down,
        p_plus_ni: kept * up + e_s * down,
        p_minus_ni: kept * down + e_s * up,
        e_s,
    })
}

/// Spin-resolved content of the upper plane as an ideal second analyzer
/// sees it: `(P(up), P(down))`.
pub fn cascade_upper_plane(spin: &SpinAmplitudes, e_s: f64) -> Result<(f64, f64)> {
    check_error(e_s)?;
    Ok(((1.0 - e_s) * spin.p_up(), e_s * spin.p_down()))
}

/// Longitudinal distance `Y_s = v_y t_s` past which the second analyzer sits, cm.
pub fn analyzer_placement(cfg: &SGConfig, t_s: f64) -> Result<f64> {
    if !(t_s >= 0.0) || !t_s.is_finite() {
        return Err(Error::domain(format!("t_s must be finite and >= 0, got {t_s}")));
    }
    Ok(cfg.v_y * t_s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Preset;
    use approx::assert_relative_eq;

    const PAPER_E_S: f64 = 0.2478;

    #[test]
    fn equal_superposition_row() {
        let t = probability_table(&SpinAmplitudes::equal(), PAPER_E_S).unwrap();
        assert!((t.p_up_ni - 0.3761).abs() < 5e-5);
        assert!((t.p_plus_ni - 0.5).abs() < 1e-12);
        assert!((t.p_minus_ni - 0.5).abs() < 1e-12);
    }

    #[test]
    fn last_row() {
        let spin = SpinAmplitudes::real(0.9f64.sqrt(), 0.1f64.sqrt()).unwrap();
        let t = probability_table(&spin, PAPER_E_S).unwrap();
        for (got, want) in [(t.p_up_ni, 0.6770), (t.p_down_ni, 0.0752), (t.p_plus_ni, 0.7018), (t.p_minus_ni, 0.2982)] {
            assert!((got - want).abs() <= 5e-5, "{got} vs {want}");
        }
    }

    #[test]
    fn ideal_limit() {
        let spin = SpinAmplitudes::real(0.8, 0.6).unwrap();
        let t = probability_table(&spin, 0.0).unwrap();
        assert_eq!(t.p_up_ni, spin.p_up());
        assert_eq!(t.p_plus_ni, spin.p_up());
        assert_eq!(t.p_minus_ni, spin.p_down());
    }

    #[test]
    fn full_nonideal_is_a_coin_flip() {
        let spin = SpinAmplitudes::real(0.8, 0.6).unwrap();
        let t = probability_table(&spin, 0.5).unwrap();
        assert_relative_eq!(t.p_plus_ni, 0.5, max_relative = 1e-15);
        assert_relative_eq!(t.p_minus_ni, 0.5, max_relative = 1e-15);
    }

    #[test]
    fn sums_and_swap_symmetry() {
        let spin = SpinAmplitudes::real(0.3, (1.0f64 - 0.09).sqrt()).unwrap();
        let t = probability_table(&spin, 0.17).unwrap();
        assert!((t.p_plus_ni + t.p_minus_ni - 1.0).abs() < 1e-12);
        assert!((t.p_up_ni + t.p_down_ni - 0.83).abs() < 1e-12);
        let s = probability_table(&spin.swapped(), 0.17).unwrap();
        assert_eq!((s.p_plus_ni, s.p_minus_ni), (t.p_minus_ni, t.p_plus_ni));
        assert_eq!((s.p_up_ni, s.p_down_ni), (t.p_down_ni, t.p_up_ni));
    }

    #[test]
    fn out_of_range_error_is_rejected() {
        let spin = SpinAmplitudes::equal();
        assert!(probability_table(&spin, -0.01).is_err());
        assert!(probability_table(&spin, 0.51).is_err());
        assert!(cascade_upper_plane(&spin, f64::NAN).is_err());
    }

    #[test]
    fn cascade_examples() {
        let (up, down) = cascade_upper_plane(&SpinAmplitudes::equal(), PAPER_E_S).unwrap();
        assert!((up - 0.3761).abs() < 5e-5 && (down - 0.1239).abs() < 5e-5);
        let spin = SpinAmplitudes::real(0.8, 0.6).unwrap();
        assert_eq!(cascade_upper_plane(&spin, 0.0).unwrap(), (spin.p_up(), 0.0));
        let down_only = SpinAmplitudes::real(0.0, 1.0).unwrap();
        assert_eq!(cascade_upper_plane(&down_only, 0.2).unwrap(), (0.0, 0.2));
    }

    #[test]
    fn placement_is_linear() {
        let cfg = SGConfig::preset(Preset::Set3);
        assert_relative_eq!(analyzer_placement(&cfg, 0.0012).unwrap(), 12.0, max_relative = 1e-12);
        assert_eq!(analyzer_placement(&cfg, 0.0).unwrap(), 0.0);
        assert_relative_eq!(analyzer_placement(&cfg.with_v_y(2e4), 0.0012).unwrap(), 24.0, max_relative = 1e-12);
        assert!(analyzer_placement(&cfg, -1.0).is_err());
    }
}
