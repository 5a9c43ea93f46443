//! Screen sampling: each particle carries a spin label drawn from
//! `(|alpha|^2, |beta|^2)` and lands at a z drawn from that label's marginal.
//!
//! Samples are grouped in blocks of [`BLOCK_SIZE`]; block `i` draws from the
//! ChaCha8 stream `i` of the run seed, so counts do not depend on how blocks
//! are distributed over threads.

use std::io::Write;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{SGConfig, SpinAmplitudes};
use crate::error::{Error, Result};
use crate::wavepacket::{packet_at, SpinLabel};

pub const BLOCK_SIZE: u64 = 65_536;
pub const MAX_CSV_ROWS: u64 = 100_000;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScreenCounts {
    pub up_in_upper: u64,
    pub up_in_lower: u64,
    pub down_in_upper: u64,
    pub down_in_lower: u64,
}

impl ScreenCounts {
    pub fn total(&self) -> u64 {
        self.up_in_upper + self.up_in_lower + self.down_in_upper + self.down_in_lower
    }

    /// Samples whose label disagrees with the sign of z.
    pub fn misclassified(&self) -> u64 {
        self.up_in_lower + self.down_in_upper
    }

    pub fn upper(&self) -> u64 {
        self.up_in_upper + self.down_in_upper
    }

    pub fn lower(&self) -> u64 {
        self.up_in_lower + self.down_in_lower
    }

    fn record(&mut self, label: SpinLabel, z: f64) {
        match (label, z >= 0.0) {
            (SpinLabel::Plus, true) => self.up_in_upper += 1,
            (SpinLabel::Plus, false) => self.up_in_lower += 1,
            (SpinLabel::Minus, true) => self.down_in_upper += 1,
            (SpinLabel::Minus, false) => self.down_in_lower += 1,
        }
    }

    fn merge(self, other: Self) -> Self {
        Self {
            up_in_upper: self.up_in_upper + other.up_in_upper,
            up_in_lower: self.up_in_lower + other.up_in_lower,
            down_in_upper: self.down_in_upper + other.down_in_upper,
            down_in_lower: self.down_in_lower + other.down_in_lower,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McRun {
    pub seed: u64,
    pub n_samples: u64,
    pub t_screen: f64,
    pub counts: ScreenCounts,
}

impl McRun {
    pub fn misclassified_fraction(&self) -> f64 {
        self.counts.misclassified() as f64 / self.n_samples as f64
    }
}

/// Means and standard deviation of the two z-marginals at `t_screen`.
#[derive(Debug, Clone, Copy)]
struct Marginals {
    plus_center: f64,
    minus_center: f64,
    sd: f64,
    p_up: f64,
}

impl Marginals {
    fn new(cfg: &SGConfig, spin: &SpinAmplitudes, t_screen: f64) -> Result<Self> {
        let plus = packet_at(cfg, SpinLabel::Plus, t_screen)?;
        let minus = packet_at(cfg, SpinLabel::Minus, t_screen)?;
        Ok(Self {
            plus_center: plus.center_z(),
            minus_center: minus.center_z(),
            sd: plus.width(),
            p_up: spin.p_up(),
        })
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> (SpinLabel, f64) {
        let u: f64 = rng.gen();
        let n: f64 = rng.sample(StandardNormal);
        if u < self.p_up {
            (SpinLabel::Plus, self.plus_center + self.sd * n)
        } else {
            (SpinLabel::Minus, self.minus_center + self.sd * n)
        }
    }
}

fn block_rng(seed: u64, block: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block);
    rng
}

fn block_len(n_samples: u64, block: u64) -> u64 {
    (n_samples - block * BLOCK_SIZE).min(BLOCK_SIZE)
}

fn check_inputs(t_screen: f64, n_samples: u64) -> Result<()> {
    if n_samples == 0 {
        return Err(Error::domain("n_samples must be >= 1"));
    }
    if !(t_screen.is_finite() && t_screen >= 0.0) {
        return Err(Error::domain(format!("t_screen must be finite and >= 0, got {t_screen}")));
    }
    Ok(())
}

/// Draws `n_samples` screen hits `t_screen` seconds behind the magnet.
/// `z = 0` counts as the upper plane.
pub fn sample_screen(
    cfg: &SGConfig,
    spin: &SpinAmplitudes,
    t_screen: f64,
    n_samples: u64,
    seed: u64,
) -> Result<McRun> {
    check_inputs(t_screen, n_samples)?;
    let marginals = Marginals::new(cfg, spin, t_screen)?;
    let blocks = n_samples.div_ceil(BLOCK_SIZE);
    let counts = (0..blocks)
        .into_par_iter()
        .map(|block| {
            let mut rng = block_rng(seed, block);
            let mut counts = ScreenCounts::default();
            for _ in 0..block_len(n_samples, block) {
                let (label, z) = marginals.draw(&mut rng);
                counts.record(label, z);
            }
            counts
        })
        .reduce(ScreenCounts::default, ScreenCounts::merge);
    Ok(McRun {
        seed,
        n_samples,
        t_screen,
        counts,
    })
}

/// First `min(n_samples, MAX_CSV_ROWS)` samples of the run, as `label,z_cm`.
pub fn write_samples_csv<W: Write>(
    cfg: &SGConfig,
    spin: &SpinAmplitudes,
    t_screen: f64,
    n_samples: u64,
    seed: u64,
    mut out: W,
) -> Result<u64> {
    check_inputs(t_screen, n_samples)?;
    let marginals = Marginals::new(cfg, spin, t_screen)?;
    let rows = n_samples.min(MAX_CSV_ROWS);
    let io = |e: std::io::Error| Error::domain(format!("write failed: {e}"));
    writeln!(out, "label,z_cm").map_err(io)?;
    let mut written = 0;
    let mut block = 0;
    while written < rows {
        let mut rng = block_rng(seed, block);
        for _ in 0..block_len(n_samples, block).min(rows - written) {
            let (label, z) = marginals.draw(&mut rng);
            writeln!(out, "{},{:.16e}", label.as_str(), z).map_err(io)?;
            written += 1;
        }
        block += 1;
    }
    Ok(written)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub standard_error: f64,
}

/// Pools `up_in_lower / (n |alpha|^2)` and `down_in_upper / (n |beta|^2)` by
/// inverse-variance weights. Binomial variances are taken at the pooled
/// fraction `(up_in_lower + down_in_upper) / n`. A branch with zero amplitude
/// is left out.
pub fn empirical_es(run: &McRun, spin: &SpinAmplitudes) -> Result<Estimate> {
    if run.counts.total() != run.n_samples || run.n_samples == 0 {
        return Err(Error::domain(format!(
            "counts sum to {} but n_samples is {}",
            run.counts.total(),
            run.n_samples
        )));
    }
    let n = run.n_samples as f64;
    let pooled = run.counts.misclassified() as f64 / n;
    let branches = [
        (spin.p_up(), run.counts.up_in_lower),
        (spin.p_down(), run.counts.down_in_upper),
    ];
    let mut weight_sum = 0.0;
    let mut weighted = 0.0;
    let mut any = false;
    for (p, count) in branches {
        if p <= 0.0 {
            continue;
        }
        any = true;
        let estimate = count as f64 / (n * p);
        let variance = pooled * (1.0 - p * pooled) / (n * p);
        if variance == 0.0 {
            continue;
        }
        weight_sum += 1.0 / variance;
        weighted += estimate / variance;
    }
    if !any {
        return Err(Error::domain("both spin amplitudes vanish"));
    }
    if weight_sum == 0.0 {
        return Ok(Estimate {
            value: pooled,
            standard_error: 0.0,
        });
    }
    Ok(Estimate {
        value: weighted / weight_sum,
        standard_error: weight_sum.recip().sqrt(),
    })
}

/// JSON record of a run together with the closed-form reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McRecord {
    #[serde(flatten)]
    pub run: McRun,
    pub misclassified_fraction: f64,
    #[serde(rename = "empirical_E")]
    pub empirical_e: Estimate,
    #[serde(rename = "closed_form_E")]
    pub closed_form_e: f64,
}
