//! Split-step Fourier check of the closed-form exit state.
//!
//! Only the z equation is integrated:
//! `i hbar dpsi/dt = -hbar^2/(2m) d^2psi/dz^2 + V(z) psi` with
//! `V(z) = ±mu B0 ∓ mu b z`, so the plus component is pushed toward `+z`.
//! The x and y factors evolve freely and identically for both labels.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::config::SGConfig;
use crate::error::{Error, Result};
use crate::wavepacket::{packet_at, packet_in_magnet, SpinLabel};

pub const MIN_POINTS: usize = 256;
pub const DEFAULT_POINTS: usize = 4096;
pub const DEFAULT_STEPS: usize = 4096;
/// Packet widths kept between the outermost packet and the grid edge.
pub const DEFAULT_HALF_WIDTHS: f64 = 10.0;
/// Largest edge density allowed, relative to the peak density.
pub const LEAK_THRESHOLD: f64 = 1e-12;
const EDGE_POINTS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub z_min: f64,
    pub z_max: f64,
    pub n_points: usize,
    pub dt: f64,
    pub n_steps: usize,
}

impl GridSpec {
    /// Symmetric grid `[-half_width, half_width]` with `n_steps` steps covering `tau`.
    pub fn centered(cfg: &SGConfig, half_width: f64, n_points: usize, n_steps: usize) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::Grid("n_steps must be >= 1".into()));
        }
        let grid = Self {
            z_min: -half_width,
            z_max: half_width,
            n_points,
            dt: cfg.tau / n_steps as f64,
            n_steps,
        };
        grid.validate(cfg)?;
        Ok(grid)
    }

    /// Grid sized from the physics: [`DEFAULT_HALF_WIDTHS`] exit widths beyond
    /// the exit center, and a Nyquist wavenumber the same number of momentum
    /// standard deviations (`1/(2 sigma0)`) beyond `k_z`. At least
    /// [`DEFAULT_POINTS`] points.
    pub fn auto(cfg: &SGConfig, n_steps: usize) -> Result<Self> {
        let exit = packet_at(cfg, SpinLabel::Plus, 0.0)?;
        let half_width = exit.center_z().abs() + DEFAULT_HALF_WIDTHS * exit.width().max(cfg.sigma0);
        let k_max = exit.phase_terms.k_z + DEFAULT_HALF_WIDTHS / (2.0 * cfg.sigma0);
        let needed = (2.0 * half_width * k_max / PI).ceil() as usize;
        let n_points = needed.max(DEFAULT_POINTS).next_power_of_two();
        Self::centered(cfg, half_width, n_points, n_steps)
    }

    pub fn validate(&self, cfg: &SGConfig) -> Result<()> {
        if !(self.z_max > self.z_min) || !self.z_min.is_finite() || !self.z_max.is_finite() {
            return Err(Error::Grid(format!("need z_max > z_min, got [{}, {}]", self.z_min, self.z_max)));
        }
        if self.n_points < MIN_POINTS || !self.n_points.is_power_of_two() {
            return Err(Error::Grid(format!(
                "n_points must be a power of two >= {MIN_POINTS}, got {}",
                self.n_points
            )));
        }
        if self.n_steps == 0 || !(self.dt > 0.0) {
            return Err(Error::Grid("need dt > 0 and n_steps >= 1".into()));
        }
        let covered = self.dt * self.n_steps as f64;
        if (covered - cfg.tau).abs() > 1e-12 * cfg.tau {
            return Err(Error::Grid(format!("dt * n_steps = {covered} differs from tau = {}", cfg.tau)));
        }
        Ok(())
    }

    pub fn dz(&self) -> f64 {
        (self.z_max - self.z_min) / self.n_points as f64
    }

    /// Periodic nodes `z_min + j dz`, `j = 0..n_points`.
    pub fn nodes(&self) -> Vec<f64> {
        let dz = self.dz();
        (0..self.n_points).map(|j| self.z_min + dz * j as f64).collect()
    }

    /// FFT-ordered angular wavenumbers.
    fn wavenumbers(&self) -> Vec<f64> {
        let n = self.n_points;
        let dk = 2.0 * PI / (self.z_max - self.z_min);
        (0..n)
            .map(|j| if j < n / 2 { j as f64 } else { j as f64 - n as f64 } * dk)
            .collect()
    }

    /// Same spatial grid with `factor` times as many time steps.
    pub fn refined_in_time(&self, factor: usize) -> Self {
        Self {
            dt: self.dt / factor as f64,
            n_steps: self.n_steps * factor,
            ..*self
        }
    }
}

/// Discrete wave function on a [`GridSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct Evolution {
    pub grid: GridSpec,
    pub z: Vec<f64>,
    pub psi: Vec<Complex64>,
    /// Largest relative norm change over a single step.
    pub max_step_drift: f64,
    /// Largest relative deviation from the initial norm over the run.
    pub norm_drift: f64,
}

fn discrete_norm(psi: &[Complex64], dz: f64) -> f64 {
    psi.iter().map(|c| c.norm_sqr()).sum::<f64>() * dz
}

fn edge_density(psi: &[Complex64]) -> f64 {
    let peak = psi.iter().map(|c| c.norm_sqr()).fold(0.0, f64::max);
    let n = psi.len();
    let edge = psi[..EDGE_POINTS]
        .iter()
        .chain(&psi[n - EDGE_POINTS..])
        .map(|c| c.norm_sqr())
        .fold(0.0, f64::max);
    if peak > 0.0 {
        edge / peak
    } else {
        f64::INFINITY
    }
}

fn check_leak(psi: &[Complex64], when: &str) -> Result<()> {
    let leak = edge_density(psi);
    if leak > LEAK_THRESHOLD {
        return Err(Error::Grid(format!(
            "boundary density {leak:.3e} of peak {when} exceeds {LEAK_THRESHOLD:e}; widen the grid"
        )));
    }
    Ok(())
}

struct Stepper {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    half_potential: Vec<Complex64>,
    kinetic: Vec<Complex64>,
    scratch: Vec<Complex64>,
    inv_n: f64,
}

impl Stepper {
    fn new(cfg: &SGConfig, label: SpinLabel, grid: &GridSpec, z: &[f64]) -> Self {
        let c = &cfg.constants;
        let sign = label.sign();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(grid.n_points);
        let inverse = planner.plan_fft_inverse(grid.n_points);
        let scratch_len = forward.get_inplace_scratch_len().max(inverse.get_inplace_scratch_len());
        let half_potential = z
            .iter()
            .map(|&zi| {
                let v = sign * c.neutron_moment * (cfg.b0 - cfg.b * zi);
                Complex64::from_polar(1.0, -v * grid.dt / (2.0 * c.hbar))
            })
            .collect();
        let kinetic = grid
            .wavenumbers()
            .iter()
            .map(|&k| Complex64::from_polar(1.0, -c.hbar * k * k * grid.dt / (2.0 * c.neutron_mass)))
            .collect();
        Self {
            forward,
            inverse,
            half_potential,
            kinetic,
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
            inv_n: 1.0 / grid.n_points as f64,
        }
    }

    fn potential_half(&self, psi: &mut [Complex64]) {
        for (p, v) in psi.iter_mut().zip(&self.half_potential) {
            *p *= v;
        }
    }

    fn kinetic_full(&mut self, psi: &mut [Complex64]) {
        self.forward.process_with_scratch(psi, &mut self.scratch);
        for (p, k) in psi.iter_mut().zip(&self.kinetic) {
            *p *= k * self.inv_n;
        }
        self.inverse.process_with_scratch(psi, &mut self.scratch);
    }

    /// Strang step: half potential, full kinetic, half potential.
    fn step(&mut self, psi: &mut [Complex64]) {
        self.potential_half(psi);
        self.kinetic_full(psi);
        self.potential_half(psi);
    }
}

/// Integrates the z equation from the entry state to `t = tau`.
pub fn split_step_evolve(cfg: &SGConfig, label: SpinLabel, grid: &GridSpec) -> Result<Evolution> {
    grid.validate(cfg)?;
    let z = grid.nodes();
    let dz = grid.dz();
    let entry = packet_in_magnet(cfg, label, 0.0)?;
    let mut psi: Vec<Complex64> = z.iter().map(|&zi| entry.axis_factor(2, zi)).collect();
    check_leak(&psi, "at entry")?;

    let mut stepper = Stepper::new(cfg, label, grid, &z);
    let initial = discrete_norm(&psi, dz);
    let mut previous = initial;
    let mut max_step_drift: f64 = 0.0;
    let mut norm_drift: f64 = 0.0;
    for _ in 0..grid.n_steps {
        stepper.step(&mut psi);
        let norm = discrete_norm(&psi, dz);
        max_step_drift = max_step_drift.max(((norm - previous) / previous).abs());
        norm_drift = norm_drift.max(((norm - initial) / initial).abs());
        previous = norm;
    }
    check_leak(&psi, "at exit")?;
    Ok(Evolution {
        grid: *grid,
        z,
        psi,
        max_step_drift,
        norm_drift,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    /// `||rho_num - rho_closed|| / ||rho_closed||` on the grid.
    pub l2_density_error: f64,
    /// `||psi_num - psi_closed||` including the phase, relative.
    pub l2_field_error: f64,
    /// `|<psi_closed|psi_num>| / (||psi_closed|| ||psi_num||)`.
    pub fidelity: f64,
    pub norm_drift: f64,
    pub max_step_drift: f64,
}

/// Phase-insensitive overlap modulus of two sampled wave functions.
pub fn fidelity(a: &[Complex64], b: &[Complex64]) -> f64 {
    let overlap: Complex64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
    let na: f64 = a.iter().map(|c| c.norm_sqr()).sum();
    let nb: f64 = b.iter().map(|c| c.norm_sqr()).sum();
    overlap.norm() / (na * nb).sqrt()
}

/// Closed-form exit z-factor on the evolution's grid.
pub fn closed_form_on_grid(cfg: &SGConfig, label: SpinLabel, z: &[f64]) -> Result<Vec<Complex64>> {
    let exit = packet_at(cfg, label, 0.0)?;
    Ok(z.iter().map(|&zi| exit.axis_factor(2, zi)).collect())
}

pub fn compare(cfg: &SGConfig, label: SpinLabel, evolution: &Evolution) -> Result<ComparisonReport> {
    let exact = closed_form_on_grid(cfg, label, &evolution.z)?;
    let numeric = &evolution.psi;
    let mut density_diff = 0.0;
    let mut density_ref = 0.0;
    let mut field_diff = 0.0;
    let mut field_ref = 0.0;
    for (n, e) in numeric.iter().zip(&exact) {
        density_diff += (n.norm_sqr() - e.norm_sqr()).powi(2);
        density_ref += e.norm_sqr().powi(2);
        field_diff += (n - e).norm_sqr();
        field_ref += e.norm_sqr();
    }
    Ok(ComparisonReport {
        l2_density_error: (density_diff / density_ref).sqrt(),
        l2_field_error: (field_diff / field_ref).sqrt(),
        fidelity: fidelity(&exact, numeric),
        norm_drift: evolution.norm_drift,
        max_step_drift: evolution.max_step_drift,
    })
}

pub fn compare_with_closed_form(cfg: &SGConfig, label: SpinLabel, grid: &GridSpec) -> Result<ComparisonReport> {
    let evolution = split_step_evolve(cfg, label, grid)?;
    compare(cfg, label, &evolution)
}

/// Errors at `dt` and `dt/2` on the same spatial grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub coarse: ComparisonReport,
    pub fine: ComparisonReport,
    /// `coarse.l2_field_error / fine.l2_field_error`; 4 for a second-order scheme.
    pub field_error_ratio: f64,
    pub observed_order: f64,
}

pub fn convergence_study(cfg: &SGConfig, label: SpinLabel, grid: &GridSpec) -> Result<ConvergenceStudy> {
    let coarse = compare_with_closed_form(cfg, label, grid)?;
    let fine = compare_with_closed_form(cfg, label, &grid.refined_in_time(2))?;
    let ratio = coarse.l2_field_error / fine.l2_field_error;
    Ok(ConvergenceStudy {
        coarse,
        fine,
        field_error_ratio: ratio,
        observed_order: ratio.log2(),
    })
}

/// Writes `z_cm,density_numeric,density_closed` rows.
pub fn write_density_csv<W: Write>(cfg: &SGConfig, label: SpinLabel, evolution: &Evolution, mut out: W) -> Result<()> {
    let exact = closed_form_on_grid(cfg, label, &evolution.z)?;
    let io = |e: std::io::Error| Error::domain(format!("write failed: {e}"));
    writeln!(out, "z_cm,density_numeric,density_closed").map_err(io)?;
    for ((z, n), e) in evolution.z.iter().zip(&evolution.psi).zip(&exact) {
        writeln!(out, "{:.16e},{:.16e},{:.16e}", z, n.norm_sqr(), e.norm_sqr()).map_err(io)?;
    }
    Ok(())
}
