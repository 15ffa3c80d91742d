//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::f64::consts::TAU;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use isac::duallearn::{self, relative_error, training_signals, Problem};
use isac::fbops::{self, analyze_direct, frame_bounds_dense, frame_bounds_polyphase};
use isac::melcompress::{compress, mel_spectrogram};
use isac::scales::{linearize, AuditoryScale};
use isac::{build_kernels, BankOperator, Error, FilterBankSpec, KernelSet, TrainConfig};

/// Closest lengths to 16384 and 4096 that every d in 1..=6 divides.
const LONG: usize = 16380;
const SHORT: usize = 4092;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn fig2_spec(len: usize) -> FilterBankSpec {
    FilterBankSpec::new(16000.0, 40, 128)
        .unwrap()
        .with_decimation(6)
        .with_signal_len(len)
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn c1_condition_number() -> Outcome {
    let bank = build_kernels(&fig2_spec(LONG)).unwrap();
    let diag = frame_bounds_polyphase(&bank, 6, LONG).unwrap();
    outcome(
        (1.00..=1.15).contains(&diag.kappa),
        format!("kappa = {:.4} (A = {:.4}, B = {:.4})", diag.kappa, diag.lower, diag.upper),
    )
}

/// Best κ over d ∈ 1..=6 for one cell of the grid.
fn best_kappa(k: usize, t: usize, gamma: f64) -> (f64, usize) {
    let spec = FilterBankSpec::new(16000.0, k, t)
        .unwrap()
        .with_gamma(gamma)
        .with_signal_len(LONG);
    let bank = build_kernels(&spec).unwrap();
    let mut best = (f64::INFINITY, 0);
    for d in 1..=6 {
        match frame_bounds_polyphase(&bank, d, LONG) {
            Ok(diag) if diag.kappa < best.0 => best = (diag.kappa, d),
            Ok(_) | Err(Error::NotAFrame { .. }) => {}
            Err(e) => panic!("K={k} T={t} d={d}: {e}"),
        }
    }
    best
}

fn c2_table() -> Outcome {
    let ks = [16, 40, 96, 512];
    let ts = [8, 32, 128, 512];
    let mut grid = [[0.0; 4]; 4];
    let mut lines = Vec::new();
    for (i, &k) in ks.iter().enumerate() {
        let mut row = Vec::new();
        for (j, &t) in ts.iter().enumerate() {
            let gamma = if k == 16 || t == 8 { 3.0 } else { 1.0 };
            let (kappa, d) = best_kappa(k, t, gamma);
            grid[i][j] = kappa;
            row.push(format!("{kappa:.3}@d{d}"));
        }
        lines.push(format!("K={k}: {}", row.join(" ")));
    }
    let bounded = grid.iter().flatten().all(|&v| v <= 1.6);
    let monotone = (0..4).all(|j| (1..4).all(|i| grid[i][j] <= grid[i - 1][j] + 0.02));
    let last_row = grid[3].iter().all(|&v| v <= 1.10);
    outcome(
        bounded && monotone && last_row,
        format!(
            "all<=1.6 {bounded}, columns non-increasing {monotone}, K=512 row<=1.10 {last_row}; {}",
            lines.join("; ")
        ),
    )
}

fn c3_oracle() -> Outcome {
    let spec = FilterBankSpec::new(16000.0, 8, 32).unwrap().with_signal_len(240);
    let bank = build_kernels(&spec).unwrap();
    let mut worst: f64 = 0.0;
    for d in [2, 4] {
        let p = frame_bounds_polyphase(&bank, d, 240).unwrap();
        let q = frame_bounds_dense(&bank, d, 240).unwrap();
        worst = worst
            .max((p.lower - q.lower).abs() / q.lower)
            .max((p.upper - q.upper).abs() / q.upper);
    }
    outcome(worst <= 1e-8, format!("max relative bound difference {worst:.2e}"))
}

fn c4_reconstruction() -> Outcome {
    let bank = build_kernels(&fig2_spec(SHORT)).unwrap();
    let op = BankOperator::new(&bank, SHORT).unwrap();
    let mut signals = training_signals(20, SHORT, 404);
    let mut impulse = vec![0.0; SHORT];
    impulse[SHORT / 3] = 1.0;
    signals.push(impulse);
    let mut worst: f64 = 0.0;
    for x in &signals {
        let c = op.analyze(x).unwrap();
        let y = op.canonical_dual_reconstruct(&c).unwrap();
        worst = worst.max(relative_error(x, &y));
    }
    outcome(worst <= 1e-10, format!("worst relative error {worst:.2e} over 21 signals"))
}

fn psd_ratio(bank: &KernelSet, len: usize) -> f64 {
    let p = fbops::total_psd(bank, len).unwrap();
    let hi = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = p.iter().copied().fold(f64::INFINITY, f64::min);
    hi / lo
}

fn c5_learned_dual() -> Outcome {
    let encoder = build_kernels(&fig2_spec(SHORT)).unwrap();
    let cfg = TrainConfig::default();
    let (decoder, report) = duallearn::train(&encoder, &cfg).unwrap();
    // Fresh signals from an unrelated seed, reconstructed outside the trainer.
    let mut fresh: f64 = 0.0;
    for x in training_signals(4, SHORT, 90_210) {
        let c = fbops::analyze(&encoder, &x).unwrap();
        fresh = fresh.max(relative_error(&x, &duallearn::reconstruct(&decoder, &c).unwrap()));
    }
    let kappa = frame_bounds_polyphase(&decoder, 6, SHORT).unwrap().kappa;
    let unregularized = TrainConfig { beta: 0.0, ..cfg.clone() };
    let (plain, _) = duallearn::train(&encoder, &unregularized).unwrap();
    let (ratio_reg, ratio_plain) = (psd_ratio(&decoder, SHORT), psd_ratio(&plain, SHORT));
    let pass = report.held_out_error <= 1e-4
        && fresh <= 1e-4
        && kappa <= 1.2
        && report.iterations <= 2000
        && ratio_reg <= ratio_plain + 1e-9;
    outcome(
        pass,
        format!(
            "held-out error {:.2e} (fresh {fresh:.2e}) after {} iterations, decoder kappa {kappa:.4}, \
             PSD max/min {ratio_reg:.6} vs {ratio_plain:.6} without regularization",
            report.held_out_error, report.iterations
        ),
    )
}

/// Norm-wise relative error over the sampled coordinates. A per-coordinate
/// ratio is meaningless where the exact gradient vanishes, e.g. the imaginary
/// parts of the real 0 Hz and fs/2 channels at beta = 0.
fn c6_gradient() -> Outcome {
    let encoder = build_kernels(&fig2_spec(SHORT)).unwrap();
    let mut details = Vec::new();
    let mut pass = true;
    for beta in [1e-3, 0.0] {
        let problem = Problem::new(&encoder, training_signals(8, SHORT, 6), beta).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(66);
        let mut decoder = duallearn::initial_decoder(&encoder, SHORT).unwrap();
        for v in decoder.kernels.iter_mut().flatten() {
            *v += Complex64::new(rng.random_range(-1e-3..1e-3), rng.random_range(-1e-3..1e-3));
        }
        let (_, grads) = problem.gradient(&decoder).unwrap();
        let h = 1e-6;
        let (mut diff, mut size) = (0.0, 0.0);
        for _ in 0..32 {
            let k = rng.random_range(0..decoder.channels());
            let p = rng.random_range(0..decoder.t_max);
            let imag = rng.random_bool(0.5);
            let bump = if imag { Complex64::new(0.0, h) } else { Complex64::new(h, 0.0) };
            let mut plus = decoder.clone();
            plus.kernels[k][p] += bump;
            let mut minus = decoder.clone();
            minus.kernels[k][p] -= bump;
            let fd = (problem.objective(&plus).unwrap().total
                - problem.objective(&minus).unwrap().total)
                / (2.0 * h);
            let an = if imag { grads[k][p].im } else { grads[k][p].re };
            diff += (fd - an).powi(2);
            size += an * an;
        }
        let rel = (diff / size).sqrt();
        pass &= rel <= 1e-5;
        details.push(format!("beta {beta:e}: {rel:.2e}"));
    }
    outcome(pass, format!("relative error over 32 coordinates, {}", details.join(", ")))
}

fn c7_psd() -> Outcome {
    let bank = build_kernels(&fig2_spec(LONG)).unwrap();
    let ratio = psd_ratio(&bank, LONG);
    // Direct DTFT of the kernels on every 13th bin as a second route.
    let delta = bank.align_offset() as f64;
    let mut direct = Vec::new();
    for m in (0..LONG).step_by(13) {
        let mut total = 0.0;
        for (k, g) in bank.kernels.iter().enumerate() {
            let at = |bin: f64| -> f64 {
                g.iter()
                    .enumerate()
                    .map(|(p, v)| v * Complex64::from_polar(1.0, -TAU * bin * (p as f64 - delta) / LONG as f64))
                    .sum::<Complex64>()
                    .norm_sqr()
            };
            total += 0.5 * bank.channel_weight(k) * (at(m as f64) + at(-(m as f64)));
        }
        direct.push(total);
    }
    let fast = fbops::total_psd(&bank, LONG).unwrap();
    let agree = (0..LONG)
        .step_by(13)
        .zip(&direct)
        .all(|(m, d)| (fast[m] - d).abs() <= 1e-10 * d);
    outcome(
        ratio <= 1.2 && agree,
        format!("max/min = {ratio:.4}, direct DTFT agrees on sampled bins: {agree}"),
    )
}

fn c8_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut failures = Vec::new();

    for name in ["erb", "mel", "log", "linear"] {
        let s = AuditoryScale::from_name(name, 16000.0).unwrap();
        let bad = (0..200).any(|_| {
            let f: f64 = rng.random_range(0.0..8000.0);
            (s.inverse(s.forward(f).unwrap()).unwrap() - f).abs() > 1e-9 * f.max(1.0)
        });
        if bad {
            failures.push(format!("{name} round trip"));
        }
    }

    for t_max in [32, 64, 128, 256, 480] {
        let spec = FilterBankSpec::new(16000.0, 40, t_max).unwrap();
        let f_star = spec.transition_frequency().unwrap();
        if f_star > 0.0 && f_star < 8000.0 {
            let base = AuditoryScale::erb(16000.0).unwrap();
            let lin = linearize(&base, f_star).unwrap();
            let h = 1e-4;
            let left = (lin.forward(f_star).unwrap() - lin.forward(f_star - h).unwrap()) / h;
            let right = (lin.forward(f_star + h).unwrap() - lin.forward(f_star).unwrap()) / h;
            let jump = (lin.forward(f_star).unwrap() - base.forward(f_star).unwrap()).abs();
            if (left - right).abs() > 1e-6 * right || jump > 1e-9 {
                failures.push(format!("C1 matching at T_max={t_max}"));
            }
        }
        let mut last = usize::MAX;
        for i in 0..=400 {
            let f = 8000.0 * i as f64 / 400.0;
            let t = spec.kernel_size(f_star, f).unwrap();
            if t > last || (f <= f_star && t != t_max) {
                failures.push(format!("kernel sizes at T_max={t_max}, f={f}"));
                break;
            }
            last = t;
        }
    }

    let spec = FilterBankSpec::new(16000.0, 24, 64)
        .unwrap()
        .with_decimation(4)
        .with_signal_len(960);
    let bank = build_kernels(&spec).unwrap();
    let op = BankOperator::new(&bank, 960).unwrap();
    let diag = op.frame_bounds().unwrap();
    let signals = training_signals(100, 960, 88);
    for (n, pair) in signals.chunks(2).enumerate() {
        let (x, y) = (&pair[0], &pair[1]);
        let cx = op.analyze(x).unwrap();
        let cy = op.analyze(y).unwrap();
        let lhs: f64 = cx
            .channels
            .iter()
            .zip(&cy.channels)
            .zip(op.weights())
            .map(|((a, b), w)| w * a.iter().zip(b).map(|(u, v)| (u.conj() * v).re).sum::<f64>())
            .sum();
        let rhs: f64 = x.iter().zip(&op.synthesize(&cy).unwrap()).map(|(a, b)| a * b).sum();
        if (lhs - rhs).abs() > 1e-10 * norm(x) * norm(y) {
            failures.push(format!("adjoint pair {n}"));
        }
        let (a, b) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let mix: Vec<f64> = x.iter().zip(y).map(|(u, v)| a * u + b * v).collect();
        let cm = op.analyze(&mix).unwrap();
        let scale = norm(x) + norm(y);
        let linear = cm.channels.iter().zip(&cx.channels).zip(&cy.channels).all(|((m, u), v)| {
            m.iter().zip(u).zip(v).all(|((mm, uu), vv)| (mm - (a * uu + b * vv)).norm() <= 1e-12 * scale)
        });
        if !linear {
            failures.push(format!("linearity pair {n}"));
        }
        let direct = analyze_direct(&bank, x).unwrap();
        let same = direct.channels.iter().zip(&cx.channels).all(|(u, v)| {
            u.iter().zip(v).all(|(p, q)| (p - q).norm() <= 1e-12 * norm(x))
        });
        if !same {
            failures.push(format!("FFT vs direct pair {n}"));
        }
    }
    for (n, x) in signals.iter().enumerate() {
        let e = op.analyze(x).unwrap().weighted_energy(op.weights());
        let ex = norm(x).powi(2);
        if e < diag.lower * ex * (1.0 - 1e-12) || e > diag.upper * ex * (1.0 + 1e-12) {
            failures.push(format!("energy sandwich signal {n}"));
        }
    }

    let x = &signals[0];
    let s = compress(&bank, &op.analyze(x).unwrap()).unwrap();
    let shift = s.hop_samples;
    let shifted: Vec<f64> = (0..960).map(|t| x[(t + 960 - shift) % 960]).collect();
    let s2 = compress(&bank, &op.analyze(&shifted).unwrap()).unwrap();
    let frames = s.frames();
    let covariant = s.data.iter().zip(&s2.data).all(|(r, r2)| {
        (0..frames).all(|m| (r2[(m + 1) % frames] - r[m]).abs() <= 1e-12 * r[m].abs().max(1e-12))
    });
    if !covariant {
        failures.push("spectrogram shift covariance".into());
    }
    if s.data.iter().flatten().any(|&v| v < 0.0) {
        failures.push("spectrogram nonnegativity".into());
    }

    let pass = failures.is_empty();
    let detail = if pass {
        "scale round trips, C1 matching, kernel sizes, adjoint, linearity, FFT vs direct, \
         energy sandwich (100 signals), shift covariance, nonnegativity"
            .to_string()
    } else {
        failures.join(", ")
    };
    outcome(pass, detail)
}

fn c9_mel_shape() -> Outcome {
    let spec = FilterBankSpec::new(16000.0, 40, 480).unwrap().with_decimation(4);
    let x = training_signals(1, 16000, 9).remove(0);
    let s = mel_spectrogram(&spec, &x).unwrap();
    let reference = 16000usize.div_ceil(240);
    let pass = s.channels() == 40 && s.frames().abs_diff(reference) <= 3;
    outcome(
        pass,
        format!("{} x {} against {reference} hop-240 frames", s.channels(), s.frames()),
    )
}

type Criterion = (&'static str, Duration, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("condition number of the 40x128 bank at d=6", Duration::from_secs(10), c1_condition_number),
        ("condition-number table trends", Duration::from_secs(300), c2_table),
        ("polyphase bounds match the dense oracle", Duration::from_secs(5), c3_oracle),
        ("canonical-dual perfect reconstruction", Duration::from_secs(30), c4_reconstruction),
        ("learned same-size dual", Duration::from_secs(300), c5_learned_dual),
        ("gradient against finite differences", Duration::from_secs(30), c6_gradient),
        ("total PSD flatness", Duration::from_secs(5), c7_psd),
        ("property suites", Duration::from_secs(180), c8_properties),
        ("mel spectrogram shape", Duration::from_secs(5), c9_mel_shape),
    ];
    let mut failed = 0;
    for (i, (name, budget, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let out = run();
        let elapsed = start.elapsed();
        let pass = out.pass && elapsed <= *budget;
        if !pass {
            failed += 1;
        }
        println!(
            "{} criterion {}: {name}: {} [{:.2}s, limit {}s]",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            out.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
