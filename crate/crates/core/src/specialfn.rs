//! Error-function family and adaptive Gauss-Kronrod quadrature.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Evaluation cap for [`integrate_1d`].
pub const MAX_EVALUATIONS: usize = 1_000_000;

/// Above this argument `erfc` drops below ~1e-300 and [`log_erfc`] switches
/// to the continued fraction.
const LOG_ERFC_SWITCH: f64 = 26.0;

/// Complementary error function.
///
/// Backed by libm's musl port, accurate to about 1 ulp on the whole line.
pub fn erfc(x: f64) -> Result<f64> {
    if x.is_nan() {
        return Err(Error::domain("erfc of NaN"));
    }
    Ok(libm::erfc(x))
}

pub fn erf(x: f64) -> Result<f64> {
    if x.is_nan() {
        return Err(Error::domain("erf of NaN"));
    }
    Ok(libm::erf(x))
}

/// `ln(erfc(x))`, finite for arguments where `erfc` itself underflows.
pub fn log_erfc(x: f64) -> Result<f64> {
    if x.is_nan() {
        return Err(Error::domain("log_erfc of NaN"));
    }
    if x < LOG_ERFC_SWITCH {
        return Ok(libm::erfc(x).ln());
    }
    if x.is_infinite() {
        return Ok(f64::NEG_INFINITY);
    }
    // Laplace continued fraction erfc(x) = exp(-x^2)/sqrt(pi) / (x + 1/2/(x + 1/(x + 3/2/(x + ...)))).
    // At x >= 26 forty levels are far past convergence.
    let mut denom = x;
    for k in (1..=40).rev() {
        denom = x + 0.5 * k as f64 / denom;
    }
    Ok(-x * x - 0.5 * PI.ln() - denom.ln())
}

/// Which half of the real line a Gaussian's mass is taken over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HalfLine {
    /// `(0, +inf)`
    Positive,
    /// `(-inf, 0)`
    Negative,
}

/// Probability mass of `N(mean, sd^2)` on one side of zero.
pub fn gaussian_half_line(mean: f64, sd: f64, side: HalfLine) -> Result<f64> {
    if !(sd > 0.0) || !sd.is_finite() {
        return Err(Error::domain(format!("standard deviation must be > 0, got {sd}")));
    }
    if mean.is_nan() {
        return Err(Error::domain("mean is NaN"));
    }
    let arg = mean / (SQRT_2 * sd);
    let value = match side {
        HalfLine::Positive => 0.5 * libm::erfc(-arg),
        HalfLine::Negative => 0.5 * libm::erfc(arg),
    };
    Ok(value)
}

/// Normal density with the given mean and standard deviation.
pub fn normal_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let u = (x - mean) / sd;
    (-0.5 * u * u).exp() / (sd * (2.0 * PI).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureResult {
    pub value: f64,
    pub error_estimate: f64,
    pub evaluations: usize,
}

// 21-point Kronrod extension of the 10-point Gauss rule (QUADPACK qk21).
// Odd indices of KRONROD_NODES are the Gauss nodes.
#[allow(clippy::excessive_precision)]
const KRONROD_NODES: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

#[allow(clippy::excessive_precision)]
const GAUSS_WEIGHTS: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

#[allow(clippy::excessive_precision)]
const KRONROD_WEIGHTS: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_958_109_831_074,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

const POINTS_PER_PANEL: usize = 21;

/// One GK21 panel: (kronrod estimate, error estimate).
fn gk21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let f_center = f(center);
    let mut kronrod = f_center * KRONROD_WEIGHTS[10];
    let mut gauss = 0.0;
    let mut abs_sum = kronrod.abs();
    let mut values = [(0.0, 0.0); 10];
    for (j, (&node, &weight)) in KRONROD_NODES[..10].iter().zip(&KRONROD_WEIGHTS[..10]).enumerate() {
        let dx = half * node;
        let lo = f(center - dx);
        let hi = f(center + dx);
        values[j] = (lo, hi);
        kronrod += weight * (lo + hi);
        abs_sum += weight * (lo.abs() + hi.abs());
        if j % 2 == 1 {
            gauss += GAUSS_WEIGHTS[j / 2] * (lo + hi);
        }
    }
    let mean = 0.5 * kronrod;
    let mut asc = KRONROD_WEIGHTS[10] * (f_center - mean).abs();
    for (j, &(lo, hi)) in values.iter().enumerate() {
        asc += KRONROD_WEIGHTS[j] * ((lo - mean).abs() + (hi - mean).abs());
    }
    let result = kronrod * half;
    let res_abs = abs_sum * half.abs();
    let res_asc = asc * half.abs();

    let mut err = ((kronrod - gauss) * half).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    (result, err)
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}

impl Eq for Panel {}

impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Globally adaptive GK21 quadrature of `f` over the finite interval `[a, b]`.
///
/// The panel with the largest error estimate is bisected until the summed
/// estimate drops below the absolute tolerance `tol`.
pub fn integrate_1d<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<QuadratureResult> {
    if !a.is_finite() || !b.is_finite() {
        return Err(Error::domain("integration limits must be finite"));
    }
    if !(tol > 0.0) {
        return Err(Error::domain(format!("tolerance must be > 0, got {tol}")));
    }
    if a == b {
        return Ok(QuadratureResult {
            value: 0.0,
            error_estimate: 0.0,
            evaluations: 0,
        });
    }

    let (value, error) = gk21(&f, a, b);
    let mut evaluations = POINTS_PER_PANEL;
    if !value.is_finite() {
        return Err(Error::domain("integrand is not finite on the interval"));
    }
    let mut heap = BinaryHeap::new();
    heap.push(Panel { a, b, value, error });
    let mut total = value;
    let mut total_error = error;

    while total_error >= tol {
        if evaluations + 2 * POINTS_PER_PANEL > MAX_EVALUATIONS {
            return Err(Error::Convergence {
                estimate: total,
                error_estimate: total_error,
                evaluations,
            });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a.min(worst.b) || mid >= worst.a.max(worst.b) {
            // Interval can no longer be split in floating point.
            return Err(Error::Convergence {
                estimate: total,
                error_estimate: total_error,
                evaluations,
            });
        }
        let (left, left_err) = gk21(&f, worst.a, mid);
        let (right, right_err) = gk21(&f, mid, worst.b);
        evaluations += 2 * POINTS_PER_PANEL;
        if !left.is_finite() || !right.is_finite() {
            return Err(Error::domain("integrand is not finite on the interval"));
        }
        total += left + right - worst.value;
        total_error += left_err + right_err - worst.error;
        heap.push(Panel {
            a: worst.a,
            b: mid,
            value: left,
            error: left_err,
        });
        heap.push(Panel {
            a: mid,
            b: worst.b,
            value: right,
            error: right_err,
        });
        // Incremental updates drift; resum now and then.
        if heap.len() % 64 == 0 {
            total = heap.iter().map(|p| p.value).sum();
            total_error = heap.iter().map(|p| p.error).sum();
        }
    }

    let value: f64 = heap.iter().map(|p| p.value).sum();
    let error_estimate: f64 = heap.iter().map(|p| p.error).sum();
    Ok(QuadratureResult {
        value,
        error_estimate,
        evaluations,
    })
}

/// Non-adaptive composite GK21 rule over `panels` equal panels.
pub fn integrate_panels<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    let panels = panels.max(1);
    let width = (b - a) / panels as f64;
    (0..panels)
        .map(|i| {
            let lo = a + width * i as f64;
            gk21(&f, lo, lo + width).0
        })
        .sum()
}

/// Nodes and weights of the composite GK21 rule, for tensor-product grids.
pub fn panel_rule(a: f64, b: f64, panels: usize) -> Vec<(f64, f64)> {
    let panels = panels.max(1);
    let width = (b - a) / panels as f64;
    let half = 0.5 * width;
    let mut rule = Vec::with_capacity(panels * POINTS_PER_PANEL);
    for i in 0..panels {
        let center = a + width * (i as f64 + 0.5);
        rule.push((center, KRONROD_WEIGHTS[10] * half));
        for (&node, &weight) in KRONROD_NODES[..10].iter().zip(&KRONROD_WEIGHTS[..10]) {
            rule.push((center - half * node, weight * half));
            rule.push((center + half * node, weight * half));
        }
    }
    rule
}
