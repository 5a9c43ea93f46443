//! Acceptance criteria 1 to 8. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use sg_sim::cli::{table1, write_figure};
use sg_sim::config::{Preset, SGConfig, SpinAmplitudes};
use sg_sim::idealness::{
    classify, error_integral, error_integral_quadrature, inner_product, inner_product_numeric, log_times,
    saturation, Regime, Thresholds,
};
use sg_sim::montecarlo::sample_screen;
use sg_sim::pde_oracle::{convergence_study, GridSpec, DEFAULT_STEPS};
use sg_sim::probabilities::analyzer_placement;
use sg_sim::specialfn::integrate_1d;
use sg_sim::wavepacket::{packet_at, SpinLabel};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// alpha, beta, then the six probability columns as printed.
const TABLE1: [[f64; 8]; 4] = [
    [0.7071, 0.7071, 0.5000, 0.5000, 0.3761, 0.3761, 0.5000, 0.5000],
    [0.8000, 0.6000, 0.6400, 0.3600, 0.4814, 0.2708, 0.5706, 0.4294],
    [0.8660, 0.5000, 0.7500, 0.2500, 0.5642, 0.1881, 0.6261, 0.3739],
    [0.9487, 0.3162, 0.9000, 0.1000, 0.6770, 0.0752, 0.7018, 0.2982],
];
const PAPER_E_S: f64 = 0.2478;
const HALF_ULP_4DP: f64 = 5e-5 + 1e-12;

fn criterion_1() -> Outcome {
    let rows = match table1(PAPER_E_S) {
        Ok(rows) => rows,
        Err(e) => return outcome(false, format!("{e:?}")),
    };
    let mut worst: f64 = 0.0;
    for (row, expected) in rows.iter().zip(TABLE1) {
        let p = &row.probabilities;
        let got = [
            row.alpha,
            row.beta,
            p.p_up_ideal,
            p.p_down_ideal,
            p.p_up_ni,
            p.p_down_ni,
            p.p_plus_ni,
            p.p_minus_ni,
        ];
        for (g, e) in got.iter().zip(expected) {
            worst = worst.max((g - e).abs());
        }
    }
    outcome(
        worst <= HALF_ULP_4DP,
        format!("max |computed - table| = {worst:.2e} over 32 cells (limit 5e-5)"),
    )
}

fn criterion_2() -> Outcome {
    let cfg = SGConfig::preset(Preset::Set3);
    let sat = match saturation(&cfg, Thresholds::default().saturation_tol) {
        Ok(s) => s,
        Err(e) => return outcome(false, e.to_string()),
    };
    let relative = (sat.e_s - PAPER_E_S).abs() / PAPER_E_S;
    let mut self_consistency: f64 = 0.0;
    for t in log_times(1e-6, 1.0, 25) {
        let closed = error_integral(&cfg, t).unwrap();
        let quad = error_integral_quadrature(&cfg, t).unwrap();
        self_consistency = self_consistency.max((closed - quad).abs());
    }
    // Richardson tail of the quadrature curve against the asymptote.
    let (near, far) = (100.0, 200.0);
    let tail = 2.0 * error_integral_quadrature(&cfg, far).unwrap() - error_integral_quadrature(&cfg, near).unwrap();
    self_consistency = self_consistency.max((tail - sat.e_s).abs());
    outcome(
        relative <= 0.10 && self_consistency <= 1e-10,
        format!(
            "E_s = {:.6} ({:.2}% from 0.2478, limit 10%); closed form vs quadrature {self_consistency:.1e} (limit 1e-10)",
            sat.e_s,
            100.0 * relative
        ),
    )
}

fn criterion_3() -> Outcome {
    let thresholds = Thresholds::default();
    let cases = [
        (Regime::CaseI, [5e4, 5.5e4, 6e4], 5e-4, 1e-5),
        (Regime::CaseIi, [1e3, 2e3, 3e3], 1e-4, 1e-4),
        (Regime::CaseIii, [2e4, 3e4, 4e4], 1e-4, 1e-5),
    ];
    let mut labels = Vec::new();
    let mut pass = true;
    for (expected, bs, tau, sigma0) in cases {
        for b in bs {
            let got = classify(&SGConfig::new(b, tau, sigma0).unwrap(), &thresholds);
            pass &= got == expected;
            labels.push(format!("b={b:e}:{got}"));
        }
    }
    outcome(pass, labels.join(" "))
}

fn criterion_4() -> Outcome {
    let cfg = SGConfig::preset(Preset::Set3).with_v_y(1e4);
    let sat = saturation(&cfg, Thresholds::default().saturation_tol).unwrap();
    let y_s = analyzer_placement(&cfg, sat.t_s).unwrap();
    let within = |x: f64, target: f64| x >= target / 2.0 && x <= target * 2.0;
    outcome(
        within(sat.t_s, 0.0012) && within(y_s, 12.0),
        format!("t_s = {:.4e} s (target 1.2e-3), Y_s = {y_s:.3} cm (target 12), factor-2 window", sat.t_s),
    )
}

fn random_config(rng: &mut ChaCha8Rng) -> SGConfig {
    let mut log_uniform = |lo: f64, hi: f64| (rng.gen_range(lo.ln()..hi.ln())).exp();
    let b = log_uniform(1e2, 1e5);
    let tau = log_uniform(1e-5, 1e-3);
    let sigma0 = log_uniform(1e-6, 1e-3);
    SGConfig::new(b, tau, sigma0).unwrap()
}

fn three_d_norm(cfg: &SGConfig, label: SpinLabel, t: f64) -> f64 {
    let state = packet_at(cfg, label, t).unwrap();
    let s = state.width();
    (0..3)
        .map(|axis| {
            let c = state.center[axis];
            integrate_1d(|x| state.axis_factor(axis, x).norm_sqr(), c - 12.0 * s, c + 12.0 * s, 1e-13)
                .unwrap()
                .value
        })
        .product()
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(20_241_014);
    let times: Vec<f64> = std::iter::once(0.0).chain(log_times(1e-7, 10.0, 80)).collect();

    // (a)
    let mut monotone_failures = 0;
    for _ in 0..100 {
        let cfg = random_config(&mut rng);
        let mut prev = 0.5;
        for &t in &times {
            let e = error_integral(&cfg, t).unwrap();
            if !(0.0..=0.5).contains(&e) || e > prev {
                monotone_failures += 1;
                break;
            }
            prev = e;
        }
    }

    // (b), (c)
    let mut inner_worst: f64 = 0.0;
    let mut invariance_worst: f64 = 0.0;
    let mut found = 0;
    while found < 50 {
        let cfg = random_config(&mut rng);
        let analytic = inner_product(&cfg);
        if analytic.log_abs_i <= -30.0 {
            continue;
        }
        found += 1;
        let at_exit = inner_product_numeric(&cfg, 0.0).unwrap();
        inner_worst = inner_worst.max((at_exit - analytic.abs_i).abs());
        for t in [1e-4, 1e-2, 1.0] {
            let later = inner_product_numeric(&cfg, t).unwrap();
            invariance_worst = invariance_worst.max((later - at_exit).abs());
        }
    }

    // (d)
    let mut norm_worst: f64 = 0.0;
    for _ in 0..50 {
        let cfg = random_config(&mut rng);
        let t = rng.gen_range(0.0..1.0);
        for label in SpinLabel::BOTH {
            norm_worst = norm_worst.max((three_d_norm(&cfg, label, t) - 1.0).abs());
        }
    }

    outcome(
        monotone_failures == 0 && inner_worst < 1e-8 && invariance_worst < 1e-8 && norm_worst < 1e-8,
        format!(
            "(a) {monotone_failures}/100 monotonicity failures; (b) |I| vs quadrature {inner_worst:.1e}; \
             (c) free-flight drift {invariance_worst:.1e}; (d) norm error {norm_worst:.1e} (limits 1e-8)"
        ),
    )
}

fn criterion_6() -> Outcome {
    let cfg = SGConfig::preset(Preset::Set3);
    let grid = match GridSpec::auto(&cfg, DEFAULT_STEPS) {
        Ok(g) => g,
        Err(e) => return outcome(false, e.to_string()),
    };
    let studies: Vec<_> = SpinLabel::BOTH
        .par_iter()
        .map(|&label| convergence_study(&cfg, label, &grid))
        .collect();
    let mut pass = true;
    let mut parts = vec![format!("{} points, {} steps", grid.n_points, grid.n_steps)];
    for (label, study) in SpinLabel::BOTH.iter().zip(studies) {
        match study {
            Ok(s) => {
                let ok = s.coarse.fidelity > 0.9999
                    && (3.0..=5.0).contains(&s.field_error_ratio)
                    && s.coarse.norm_drift < 1e-10
                    && s.fine.norm_drift < 1e-10;
                pass &= ok;
                parts.push(format!(
                    "{}: fidelity {:.12}, dt-halving error ratio {:.3}, norm drift {:.1e}",
                    label.as_str(),
                    s.coarse.fidelity,
                    s.field_error_ratio,
                    s.coarse.norm_drift.max(s.fine.norm_drift)
                ));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("{}: {e}", label.as_str()));
            }
        }
    }
    outcome(pass, parts.join("; "))
}

fn criterion_7() -> Outcome {
    let cfg = SGConfig::preset(Preset::Set3);
    let spin = SpinAmplitudes::equal();
    let (n, seed, t) = (1_000_000, 20_241_014, 0.1);
    let first = sample_screen(&cfg, &spin, t, n, seed).unwrap();
    let again = sample_screen(&cfg, &spin, t, n, seed).unwrap();
    let e = error_integral(&cfg, t).unwrap();
    let se = (e * (1.0 - e) / n as f64).sqrt();
    let frac = first.misclassified_fraction();
    let z = (frac - e) / se;
    let identical = serde_json::to_string(&first.counts).unwrap() == serde_json::to_string(&again.counts).unwrap();
    outcome(
        z.abs() <= 3.0 && identical,
        format!(
            "misclassified {frac:.6} vs E(0.1 s) = {e:.6}, {z:+.2} standard errors; rerun identical: {identical}"
        ),
    )
}

fn overlap_from_csv(path: &Path) -> f64 {
    let text = std::fs::read_to_string(path).unwrap();
    let rows: Vec<[f64; 3]> = text
        .lines()
        .skip(1)
        .map(|l| {
            let v: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
            [v[0], v[1], v[2]]
        })
        .collect();
    rows.windows(2)
        .map(|w| 0.5 * (w[1][0] - w[0][0]) * (w[0][1].min(w[0][2]) + w[1][1].min(w[1][2])))
        .sum()
}

fn criterion_8() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    for id in [5, 7] {
        if let Err(e) = write_figure(id, dir.path()) {
            return outcome(false, format!("figure {id}: {e:?}"));
        }
    }
    let fig5 = overlap_from_csv(&dir.path().join("fig5b.csv"));
    let fig7 = overlap_from_csv(&dir.path().join("fig7b.csv"));
    outcome(
        fig5 < 1e-6 && fig7 > 0.1,
        format!("overlap at t = 0.1 s: fig5b {fig5:.3e} (limit < 1e-6), fig7b {fig7:.4} (limit > 0.1)"),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome, Duration); 8] = [
        ("Table 1 arithmetic", criterion_1, Duration::from_secs(1)),
        ("Set III saturated error", criterion_2, Duration::from_secs(1)),
        ("regime of each caption", criterion_3, Duration::from_secs(1)),
        ("analyzer placement", criterion_4, Duration::from_secs(1)),
        ("property suite", criterion_5, Duration::from_secs(30)),
        ("split-step oracle", criterion_6, Duration::from_secs(60)),
        ("Monte Carlo screen", criterion_7, Duration::from_secs(30)),
        ("figure overlaps", criterion_8, Duration::from_secs(5)),
    ];
    let mut failures = 0;
    for (i, (name, check, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let pass = result.pass && elapsed < *limit;
        if !pass {
            failures += 1;
        }
        println!(
            "criterion {}: {} {name}: {} [{:.3} s, limit {} s]",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            result.detail,
            elapsed.as_secs_f64(),
            limit.as_secs()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
