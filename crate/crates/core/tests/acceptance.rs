//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::time::{Duration, Instant};

use dpdlab::agmpnn::{self, count_params_formula, AgmpnnModel, InitOptions};
use dpdlab::exec::Mode;
use dpdlab::ila::{self, experiment_train_config, run_cell, sweep_taps, write_rows, ModelSpec, SweepConfig, WaveformSpec};
use dpdlab::mpm::{build_basis, ls_fit, mpm_predict, MpmCoefficients, MpmSpec};
use dpdlab::pa_sim::{pa_forward, preset, DistortionLevel};
use dpdlab::rvftdnn::{self, rvftdnn_param_count, RvftdnnModel};
use dpdlab::signal::{generate_waveform, TapWindow};
use dpdlab::training::finite_diff_check;
use dpdlab::Complex64;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn random_complex(rng: &mut ChaCha8Rng, scale: f64) -> Complex64 {
    c(rng.random_range(-scale..scale), rng.random_range(-scale..scale))
}

fn param_identity() -> Outcome {
    let mut bad = Vec::new();
    for taps in 4..=10 {
        if count_params_formula(taps, 3, 3) != 43 * (taps - 1) + 51 {
            bad.push(taps);
        }
    }
    let at7 = count_params_formula(7, 3, 3);
    outcome(bad.is_empty() && at7 == 309, format!("43(L-1)+51 holds for L=4..10 (mismatches {bad:?}); L=7 gives {at7}"))
}

// (taps, N1, N2) for the high- and low-distortion optima
const TABLE1: [(usize, usize, usize); 14] = [
    (4, 17, 15),
    (5, 13, 13),
    (6, 18, 17),
    (7, 16, 16),
    (8, 19, 12),
    (9, 13, 17),
    (10, 16, 11),
    (4, 17, 17),
    (5, 18, 18),
    (6, 15, 10),
    (7, 16, 16),
    (8, 15, 10),
    (9, 16, 12),
    (10, 15, 14),
];

fn table1_budget() -> Outcome {
    let counts: Vec<usize> = TABLE1.iter().map(|&(t, a, b)| rvftdnn_param_count(t, a, b)).collect();
    // independent enumeration of the weight and bias arrays
    let enumerated: Vec<usize> = TABLE1.iter().map(|&(t, a, b)| RvftdnnModel::zeros(TapWindow::causal_taps(t), a, b).unwrap().params().len()).collect();
    let inside = counts.iter().all(|n| (100..=600).contains(n));
    outcome(inside && counts == enumerated, format!("counts {}..{} over 14 rows, all within [100, 600]: {inside}", counts.iter().min().unwrap(), counts.iter().max().unwrap()))
}

fn mpm_reduction() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let taps = 1 + (seed as usize % 5);
        let k = 1 + (seed as usize % 4);
        let spec = MpmSpec::new(TapWindow::causal_taps(taps), k, 0.0).unwrap();
        let lambda: Vec<Complex64> = (0..spec.n_terms()).map(|_| random_complex(&mut rng, 1.0)).collect();
        let coeffs = MpmCoefficients::new(spec, lambda).unwrap();
        let opts = InitOptions { warm_start: Some(&coeffs), warm_noise: 0.0, seed, ..Default::default() };
        let model = AgmpnnModel::init(spec.window, k, 1, &opts).unwrap();
        let psi = generate_waveform(seed + 40, 256, 0.4).unwrap();
        let (a, b) = (model.forward(&psi), mpm_predict(&coeffs, &psi));
        for (x, y) in a.samples().iter().zip(b.samples()) {
            worst = worst.max((x - y).norm() / y.norm().max(1e-300));
        }
    }
    outcome(worst <= 1e-12, format!("max relative deviation {worst:.2e} over 10 instances (tolerance 1e-12)"))
}

fn gradient_check() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut lines = Vec::new();
    for seed in 1..=3u64 {
        let psi = generate_waveform(seed, 64, 0.5).unwrap().scaled(c(0.8, 0.0));
        let phi = generate_waveform(seed + 100, 64, 0.5).unwrap();
        for (k, m) in [(2, 2), (1, 3)] {
            let mut model = AgmpnnModel::init(TapWindow::causal_taps(3), k, m, &InitOptions { seed, ..Default::default() }).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p: Vec<f64> = model.params().iter().map(|v| v + rng.random_range(-0.3..0.3)).collect();
            model.set_params(&p).unwrap();
            let err = finite_diff_check(&model, &psi, &phi, 2..64, 1e-6).unwrap();
            worst = worst.max(err);
            lines.push(format!("agmpnn K={k} M={m} seed {seed}: {err:.1e}"));
        }
        let net = RvftdnnModel::init(TapWindow::causal_taps(3), 4, 3, seed).unwrap();
        let err = finite_diff_check(&net, &psi, &phi, 2..64, 1e-6).unwrap();
        worst = worst.max(err);
        lines.push(format!("rvftdnn seed {seed}: {err:.1e}"));
    }
    outcome(worst < 1e-4, format!("max relative error {worst:.2e} (tolerance 1e-4); {}", lines.join(", ")))
}

fn pinv_oracle(rows: usize, cols: usize, data: &[Complex64], y: &[Complex64]) -> Vec<Complex64> {
    let a = DMatrix::from_fn(rows, cols, |i, j| data[i * cols + j]);
    let b = DMatrix::from_fn(rows, 1, |i, _| y[i]);
    let pinv = a.pseudo_inverse(1e-14).expect("svd converges");
    (pinv * b).iter().copied().collect()
}

fn ls_equivalence() -> Outcome {
    let mut worst: f64 = 0.0;
    let cases = [(4, 4, 1u64), (8, 4, 2), (6, 3, 3), (3, 2, 4), (32, 1, 5)];
    for (taps, k, seed) in cases {
        let phi = generate_waveform(seed, 4096 + taps, 0.3).unwrap();
        let psi = pa_forward(&preset(DistortionLevel::High).noiseless(), &phi, None).unwrap();
        let spec = MpmSpec::new(TapWindow::causal_taps(taps), k, 0.0).unwrap();
        let range = spec.window.interior(psi.len());
        let basis = build_basis(&psi, &spec, range.start..range.start + 4096).unwrap();
        let target = &phi.samples()[range.start..range.start + 4096];
        let fit = ls_fit(&basis, target, Some(0.0)).unwrap();
        let data: Vec<Complex64> = (0..basis.rows).flat_map(|i| basis.row(i).to_vec()).collect();
        let oracle = pinv_oracle(basis.rows, basis.cols, &data, target);
        for (a, b) in fit.lambda.iter().zip(&oracle) {
            worst = worst.max((a - b).norm());
        }
    }
    outcome(worst <= 1e-8, format!("max coefficient deviation from pseudo-inverse {worst:.2e} on 5 problems, N=4096, T*K<=32 (tolerance 1e-8)"))
}

fn warm_start_bound() -> Outcome {
    let pa = preset(DistortionLevel::High);
    let cfg = experiment_train_config();
    let window = TapWindow::causal_taps(7);
    let spec = ModelSpec::Agmpnn { window, k_orders: 3, n_experts: 3, warm_start: true };
    let mut pass = true;
    let mut lines = Vec::new();
    for seed in 1..=3u64 {
        let fit = run_cell(&pa, &spec, &cfg, WaveformSpec::default(), seed).unwrap();
        let ws = fit.warm_start.as_ref().unwrap().1;
        let post = fit.report.postinverse_nmse_db;
        pass &= post <= ws + 0.01;
        lines.push(format!("seed {seed}: {post:.3} vs LS {ws:.3}"));
    }
    outcome(pass, format!("held-out postinverse NMSE, AGMPNN vs warm start (dB): {}", lines.join(", ")))
}

fn linearization_improvement() -> Outcome {
    let pa = preset(DistortionLevel::Low);
    let spec = ModelSpec::Mpm { window: TapWindow::causal_taps(4), k_orders: 4, ridge: None };
    let fit = run_cell(&pa, &spec, &experiment_train_config(), WaveformSpec::default(), 1).unwrap();
    let (lin, none) = (fit.report.linearization_nmse_db.unwrap(), fit.report.no_dpd_nmse_db.unwrap());
    let gain = none - lin;
    outcome(gain >= 10.0, format!("no DPD {none:.2} dB, LS-MPM DPD {lin:.2} dB, improvement {gain:.2} dB (threshold 10)"))
}

fn agmpnn_advantage() -> Outcome {
    let pa = preset(DistortionLevel::High);
    let cfg = experiment_train_config();
    let window = TapWindow::causal_taps(7);
    let target = agmpnn::count_params_formula(7, 3, 3);
    let budget = ((target as f64 * 0.9).ceil() as usize, (target as f64 * 1.1).floor() as usize);
    let agm = ModelSpec::Agmpnn { window, k_orders: 3, n_experts: 3, warm_start: true };
    let rv = ModelSpec::RvftdnnSearch { window, budget, grid: rvftdnn::default_grid() };
    let mut wins = 0;
    let mut lines = Vec::new();
    for seed in 1..=3u64 {
        let a = run_cell(&pa, &agm, &cfg, WaveformSpec::default(), seed).unwrap().report;
        let r = run_cell(&pa, &rv, &cfg, WaveformSpec::default(), seed).unwrap().report;
        let (la, lr) = (a.linearization_nmse_db.unwrap(), r.linearization_nmse_db.unwrap());
        if la <= lr {
            wins += 1;
        }
        lines.push(format!("seed {seed}: {la:.2} vs {lr:.2} ({}x{}, {} params)", r.k_orders, r.m_experts, r.params_actual));
    }
    outcome(wins >= 2, format!("AGMPNN wins {wins}/3 on linearization NMSE vs RVFTDNN searched in {budget:?} (dB): {}", lines.join(", ")))
}

fn attention_sanity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let window = TapWindow::causal_taps(4);
    let general = AgmpnnModel::init(window, 2, 4, &InitOptions { seed: 9, amplitude_p95: 1.2, ..Default::default() }).unwrap();
    let mut sym = AgmpnnModel::init(window, 2, 2, &InitOptions { seed: 9, ..Default::default() }).unwrap();
    for t in 0..4 {
        sym.mu[4 + t] = sym.mu[t];
        sym.nu[t] = 0.3 * t as f64;
        sym.nu[4 + t] = sym.nu[t];
    }
    sym.offsets[1] = sym.offsets[0];
    let (mut worst_sum, mut worst_half): (f64, f64) = (0.0, 0.0);
    for _ in 0..1000 {
        let taps: Vec<Complex64> = (0..4).map(|_| random_complex(&mut rng, 2.0)).collect();
        let w = general.attention_weights(&taps);
        worst_sum = worst_sum.max((w.iter().sum::<f64>() - 1.0).abs());
        for v in sym.attention_weights(&taps) {
            worst_half = worst_half.max((v - 0.5).abs());
        }
    }
    outcome(worst_sum <= 1e-12 && worst_half <= 1e-12, format!("over 1000 windows: |sum-1| <= {worst_sum:.1e}, symmetric M=2 |w-0.5| <= {worst_half:.1e}"))
}

fn determinism() -> Outcome {
    let cfg = SweepConfig {
        taps_list: vec![3, 4],
        seeds: vec![1, 2],
        waveform: WaveformSpec { n_samples: 8192, bandwidth_fraction: 0.15 },
        train: dpdlab::training::TrainConfig { max_epochs: 3, batch_size: 8, ..experiment_train_config() },
        grid: vec![(8, 8), (10, 9), (12, 8)],
        ..SweepConfig::default()
    };
    let csv = |cfg: &SweepConfig| {
        let mut buf = Vec::new();
        write_rows(&sweep_taps(cfg).unwrap(), &mut buf).unwrap();
        buf
    };
    let (a, b) = (csv(&cfg), csv(&cfg));
    let seq = csv(&SweepConfig { exec: Mode::Sequential, ..cfg.clone() });
    let rows = a.iter().filter(|&&ch| ch == b'\n').count() - 1;
    outcome(a == b && a == seq, format!("{rows} rows, {} bytes; repeat identical: {}, sequential identical: {}", a.len(), a == b, a == seq))
}

fn noise_floor() -> Outcome {
    let cfg = experiment_train_config();
    let window = TapWindow::causal_taps(7);
    let mut best = f64::INFINITY;
    let mut lines = Vec::new();
    for level in [DistortionLevel::Low, DistortionLevel::High] {
        let pa = preset(level);
        let specs = [
            ModelSpec::Mpm { window, k_orders: 5, ridge: None },
            ModelSpec::Agmpnn { window, k_orders: 3, n_experts: 3, warm_start: true },
            ModelSpec::Rvftdnn { window, n1: 16, n2: 16 },
        ];
        for spec in &specs {
            let fit = ila::ila_fit(&pa, &generate_waveform(1, 65536, 0.15).unwrap(), spec, &cfg, ila::IlaSeeds::from_base(1), Default::default()).unwrap();
            let v = fit.report.postinverse_nmse_db;
            best = best.min(v);
            lines.push(format!("{} {}: {v:.2}", level.name(), fit.model.family()));
        }
    }
    outcome(best >= -43.0, format!("best postinverse NMSE {best:.2} dB at 40 dB feedback SNR (floor -43); {}", lines.join(", ")))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Duration); 11] = [
        ("parameter-count identity", param_identity, Duration::from_secs(1)),
        ("table 1 budget consistency", table1_budget, Duration::from_secs(1)),
        ("MPM reduction", mpm_reduction, Duration::from_secs(1)),
        ("gradient correctness", gradient_check, Duration::from_secs(30)),
        ("LS oracle equivalence", ls_equivalence, Duration::from_secs(5)),
        ("warm-start lower bound", warm_start_bound, Duration::from_secs(300)),
        ("linearization improvement", linearization_improvement, Duration::from_secs(60)),
        ("AGMPNN advantage", agmpnn_advantage, Duration::from_secs(1800)),
        ("attention sanity", attention_sanity, Duration::from_secs(1)),
        ("sweep determinism", determinism, Duration::from_secs(600)),
        ("noise floor", noise_floor, Duration::from_secs(300)),
    ];
    let mut failed = 0;
    for (i, (name, check, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = check();
        let took = start.elapsed();
        let pass = o.pass && took <= *limit;
        if !pass {
            failed += 1;
        }
        println!(
            "{} {:>2}. {name}: {} [{:.1}s, limit {}s]",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail,
            took.as_secs_f64(),
            limit.as_secs()
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
