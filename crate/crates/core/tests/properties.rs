use num_complex::Complex64;
use proptest::prelude::*;

use isac::design::center_frequencies;
use isac::fbops::analyze_direct;
use isac::melcompress::compress;
use isac::scales::{linearize, AuditoryScale};
use isac::{build_kernels, BankOperator, FilterBankSpec, KernelSet};

const SCALES: [&str; 4] = ["erb", "mel", "log", "linear"];

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// A small bank and a signal length it accepts.
fn bank_and_len() -> impl Strategy<Value = (KernelSet, usize)> {
    (3usize..12, 4u32..7, 1usize..5, 0usize..4, 0usize..2).prop_map(|(k, log_t, d, extra, proto)| {
        let t_max = 1usize << log_t;
        let len = d * (t_max / d + 4 + extra * 3);
        let proto = if proto == 0 { "hann" } else { "rect" };
        let spec = FilterBankSpec::new(16000.0, k, t_max)
            .unwrap()
            .with_prototype(isac::PrototypeKernel::from_name(proto).unwrap())
            .with_decimation(d)
            .with_signal_len(len.max(t_max));
        (build_kernels(&spec).unwrap(), len.max(t_max))
    })
}

fn signal(len: usize, seed: u64) -> Vec<f64> {
    isac::duallearn::training_signals(1, len, seed).remove(0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scale_round_trip(which in 0usize..4, f in 0.0f64..=8000.0) {
        let s = AuditoryScale::from_name(SCALES[which], 16000.0).unwrap();
        let back = s.inverse(s.forward(f).unwrap()).unwrap();
        prop_assert!((back - f).abs() <= 1e-9 * f.max(1.0));
    }

    #[test]
    fn linearization_is_c1(which in 0usize..4, f_star in 50.0f64..7000.0) {
        let base = AuditoryScale::from_name(SCALES[which], 16000.0).unwrap();
        let lin = linearize(&base, f_star).unwrap();
        let h = 1e-4;
        let left = (lin.forward(f_star).unwrap() - lin.forward(f_star - h).unwrap()) / h;
        let right = (lin.forward(f_star + h).unwrap() - lin.forward(f_star).unwrap()) / h;
        prop_assert!((left - right).abs() <= 1e-6 * right);
        prop_assert!((lin.forward(f_star).unwrap() - base.forward(f_star).unwrap()).abs() <= 1e-9);
        let u = lin.forward(f_star / 3.0).unwrap();
        prop_assert!((lin.inverse(u).unwrap() - f_star / 3.0).abs() <= 1e-9 * f_star);
    }

    #[test]
    fn kernel_sizes_are_capped_and_monotone(
        k in 2usize..80,
        t_max in 8usize..600,
        gamma in 0.5f64..4.0,
        which in 0usize..4,
    ) {
        let spec = FilterBankSpec::new(16000.0, k, t_max)
            .unwrap()
            .with_gamma(gamma)
            .with_scale_name(SCALES[which])
            .unwrap();
        let f_star = spec.transition_frequency().unwrap();
        let mut last = usize::MAX;
        for i in 0..=200 {
            let f = 8000.0 * i as f64 / 200.0;
            let t = spec.kernel_size(f_star, f).unwrap();
            prop_assert!(t <= last && t >= 4);
            if f <= f_star {
                prop_assert_eq!(t, t_max);
            }
            last = t;
        }
        let freqs = center_frequencies(&spec, f_star).unwrap();
        prop_assert_eq!(freqs[0], 0.0);
        prop_assert_eq!(freqs[k - 1], 8000.0);
        prop_assert!(freqs.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn synthesis_is_adjoint((bank, len) in bank_and_len(), seed in any::<u64>()) {
        let op = BankOperator::new(&bank, len).unwrap();
        let x = signal(len, seed);
        let y = signal(len, seed ^ 0x5eed);
        let (cx, cy) = (op.analyze(&x).unwrap(), op.analyze(&y).unwrap());
        let lhs: f64 = cx.channels.iter().zip(&cy.channels).zip(op.weights())
            .map(|((a, b), w)| w * a.iter().zip(b).map(|(u, v)| (u.conj() * v).re).sum::<f64>())
            .sum();
        let rhs: f64 = x.iter().zip(&op.synthesize(&cy).unwrap()).map(|(a, b)| a * b).sum();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * norm(&x) * norm(&y));
    }

    #[test]
    fn analysis_is_linear_and_matches_direct(
        (bank, len) in bank_and_len(),
        seed in any::<u64>(),
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
    ) {
        let op = BankOperator::new(&bank, len).unwrap();
        let x = signal(len, seed);
        let y = signal(len, seed.wrapping_add(1));
        let mix: Vec<f64> = x.iter().zip(&y).map(|(u, v)| a * u + b * v).collect();
        let (cx, cy, cm) = (op.analyze(&x).unwrap(), op.analyze(&y).unwrap(), op.analyze(&mix).unwrap());
        let scale = norm(&x) + norm(&y);
        for ((m, u), v) in cm.channels.iter().zip(&cx.channels).zip(&cy.channels) {
            for ((mm, uu), vv) in m.iter().zip(u).zip(v) {
                prop_assert!((mm - (a * uu + b * vv)).norm() <= 1e-12 * scale * (1.0 + a.abs() + b.abs()));
            }
        }
        let direct = analyze_direct(&bank, &x).unwrap();
        for (u, v) in direct.channels.iter().zip(&cx.channels) {
            for (p, q) in u.iter().zip(v) {
                prop_assert!((p - q).norm() <= 1e-12 * norm(&x));
            }
        }
    }

    #[test]
    fn energy_sandwich((bank, len) in bank_and_len(), seed in any::<u64>()) {
        let op = BankOperator::new(&bank, len).unwrap();
        if let Ok(diag) = op.frame_bounds() {
            let x = signal(len, seed);
            let e = op.analyze(&x).unwrap().weighted_energy(op.weights());
            let ex = norm(&x).powi(2);
            prop_assert!(e >= diag.lower * ex * (1.0 - 1e-12));
            prop_assert!(e <= diag.upper * ex * (1.0 + 1e-12));
        }
    }

    #[test]
    fn spectrogram_shift_and_scaling(
        (bank, len) in bank_and_len(),
        seed in any::<u64>(),
        alpha in 0.1f64..10.0,
    ) {
        let op = BankOperator::new(&bank, len).unwrap();
        let x = signal(len, seed);
        let s = compress(&bank, &op.analyze(&x).unwrap()).unwrap();
        prop_assert!(s.data.iter().flatten().all(|&v| v >= 0.0));

        let scaled: Vec<f64> = x.iter().map(|v| alpha * v).collect();
        let s2 = compress(&bank, &op.analyze(&scaled).unwrap()).unwrap();
        for (r, r2) in s.data.iter().zip(&s2.data) {
            for (v, v2) in r.iter().zip(r2) {
                prop_assert!((v2 - alpha * alpha * v).abs() <= 1e-12 * alpha * alpha * v.max(1e-300) + 1e-300);
            }
        }

        // One frame of shift is exact when the hop divides the frame count.
        let frames = len / bank.decimation;
        if frames % s.hop == 0 {
            let shift = s.hop_samples;
            let moved: Vec<f64> = (0..len).map(|t| x[(t + len - shift) % len]).collect();
            let s3 = compress(&bank, &op.analyze(&moved).unwrap()).unwrap();
            let m = s.frames();
            let peak = s.data.iter().flatten().copied().fold(0.0, f64::max);
            for (r, r3) in s.data.iter().zip(&s3.data) {
                for i in 0..m {
                    prop_assert!((r3[(i + 1) % m] - r[i]).abs() <= 1e-12 * peak);
                }
            }
        }
    }

    #[test]
    fn canonical_dual_inverts((bank, len) in bank_and_len(), seed in any::<u64>()) {
        let op = BankOperator::new(&bank, len).unwrap();
        if let Ok(diag) = op.frame_bounds() {
            if diag.kappa < 1e3 {
                let x = signal(len, seed);
                let y = op.canonical_dual_reconstruct(&op.analyze(&x).unwrap()).unwrap();
                let err: f64 = x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                prop_assert!(err <= 1e-9 * norm(&x), "kappa {}: {}", diag.kappa, err / norm(&x));
            }
        }
    }

    #[test]
    fn endpoint_kernels_are_real((bank, _len) in bank_and_len()) {
        let last = bank.channels() - 1;
        for k in [0, last] {
            prop_assert!(bank.kernels[k].iter().all(|z: &Complex64| z.im == 0.0));
        }
    }
}
