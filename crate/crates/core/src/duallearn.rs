//! Learning synthesis kernels that invert a fixed ISAC encoder.
//!
//! The decoder has the same shape as the encoder (K kernels in a `T_max`
//! frame) and reconstructs with `y = Re Σ_k w_k (up_d c_k) ⋆ h_k`. Its kernels
//! minimise the mean relative reconstruction error on random training
//! signals plus `β` times the spectral flatness penalty `var(P)/mean(P)²` of
//! the decoder's total power response `P`.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::design::{BankRole, KernelSet};
use crate::error::{Error, Result};
use crate::fbops::{BankOperator, Coefficients};
use crate::fft;

pub const REPORT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_iters: usize,
    /// Stop once the training RMS relative error falls to this value.
    pub tol: f64,
    pub step_size: f64,
    pub beta: f64,
    pub signals: usize,
    pub signal_len: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_iters: 2000,
            tol: 1e-5,
            step_size: 1.0,
            beta: 1e-3,
            signals: 8,
            signal_len: 4092,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub total: f64,
    /// `(1/N) Σ ‖x_n − y_n‖² / ‖x_n‖²`
    pub reconstruction: f64,
    /// `var(P)/mean(P)²`, before multiplying by `β`.
    pub flatness: f64,
}

impl Objective {
    pub fn rms_relative_error(&self) -> f64 {
        self.reconstruction.sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub format_version: u32,
    pub iterations: usize,
    pub converged: bool,
    pub initial: Objective,
    pub last: Objective,
    pub step_size: f64,
    pub step_halvings: usize,
    /// `‖x − y‖/‖x‖` on a signal drawn after the training batch.
    pub held_out_error: f64,
    /// `None` when the decoder is not a frame at the encoder's `(d, L)`.
    pub decoder_kappa: Option<f64>,
    pub config: TrainConfig,
    /// Total loss after every accepted step, starting with the initial value.
    pub history: Vec<f64>,
}

/// Seeded white Gaussian training signals.
pub fn training_signals(count: usize, len: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    gaussian_signals(&mut rng, count, len)
}

fn gaussian_signals(rng: &mut ChaCha8Rng, count: usize, len: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| (0..len).map(|_| StandardNormal.sample(rng)).collect())
        .collect()
}

pub fn relative_error(x: &[f64], y: &[f64]) -> f64 {
    let err: f64 = x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum();
    let norm: f64 = x.iter().map(|v| v * v).sum();
    (err / norm).sqrt()
}

/// Reconstruction with a decoder bank from encoder coefficients.
pub fn reconstruct(decoder: &KernelSet, c: &Coefficients) -> Result<Vec<f64>> {
    BankOperator::with_decimation(decoder, c.decimation, c.signal_len)?.synthesize(c)
}

/// Initial decoder, the encoder scaled by `2/(A+B)`.
pub fn initial_decoder(encoder: &KernelSet, len: usize) -> Result<KernelSet> {
    let diag = BankOperator::new(encoder, len)?.frame_bounds()?;
    let mut dec = encoder.scaled(2.0 / (diag.lower + diag.upper));
    dec.role = BankRole::Decoder;
    Ok(dec)
}

/// Training data with the encoder side precomputed.
pub struct Problem {
    len: usize,
    decimation: usize,
    delta: usize,
    weights: Vec<f64>,
    beta: f64,
    signals: Vec<Vec<f64>>,
    inv_energy: Vec<f64>,
    /// Per signal, per channel: encoder coefficient spectra of length `M`.
    coeff_spectra: Vec<Vec<Vec<Complex64>>>,
}

impl Problem {
    pub fn new(encoder: &KernelSet, signals: Vec<Vec<f64>>, beta: f64) -> Result<Self> {
        let len = signals
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::Config("at least one training signal is required".into()))?;
        if !(beta >= 0.0) {
            return Err(Error::Config(format!("beta must be ≥ 0, got {beta}")));
        }
        let op = BankOperator::new(encoder, len)?;
        let mut inv_energy = Vec::with_capacity(signals.len());
        let mut coeff_spectra = Vec::with_capacity(signals.len());
        for x in &signals {
            if x.len() != len {
                return Err(Error::Shape("training signals differ in length".into()));
            }
            let e: f64 = x.iter().map(|v| v * v).sum();
            if e == 0.0 {
                return Err(Error::Config("training signal is all zeros".into()));
            }
            inv_energy.push(1.0 / e);
            coeff_spectra.push(op.analyze_spectrum(&fft::forward_real(x)));
        }
        Ok(Self {
            len,
            decimation: encoder.decimation,
            delta: encoder.align_offset(),
            weights: encoder.weights(),
            beta,
            signals,
            inv_energy,
            coeff_spectra,
        })
    }

    fn decoder_spectra(&self, decoder: &KernelSet) -> Result<Vec<Vec<Complex64>>> {
        if decoder.channels() != self.weights.len() {
            return Err(Error::Shape(format!(
                "decoder has {} channels, encoder {}",
                decoder.channels(),
                self.weights.len()
            )));
        }
        let op = BankOperator::with_decimation(decoder, self.decimation, self.len)?;
        Ok(op.spectra().to_vec())
    }

    fn total_psd(&self, spectra: &[Vec<Complex64>]) -> Vec<f64> {
        let n = self.len;
        let mut p = vec![0.0; n];
        for (h, &w) in spectra.iter().zip(&self.weights) {
            for (l, pl) in p.iter_mut().enumerate() {
                *pl += 0.5 * w * (h[l].norm_sqr() + h[(n - l) % n].norm_sqr());
            }
        }
        p
    }

    /// Residual spectra `R̂_n` and the reconstruction term.
    fn residuals(&self, spectra: &[Vec<Complex64>]) -> (Vec<Vec<Complex64>>, f64) {
        let m = self.len / self.decimation;
        let mut recon = 0.0;
        let mut out = Vec::with_capacity(self.signals.len());
        for ((x, chat), inv_e) in self.signals.iter().zip(&self.coeff_spectra).zip(&self.inv_energy) {
            let mut z = vec![Complex64::new(0.0, 0.0); self.len];
            for ((c, h), &w) in chat.iter().zip(spectra).zip(&self.weights) {
                for (l, zl) in z.iter_mut().enumerate() {
                    *zl += w * c[l % m] * h[l].conj();
                }
            }
            fft::inverse(&mut z);
            let r: Vec<f64> = z.iter().zip(x).map(|(y, xv)| y.re - xv).collect();
            recon += r.iter().map(|v| v * v).sum::<f64>() * inv_e;
            out.push(fft::forward_real(&r));
        }
        (out, recon / self.signals.len() as f64)
    }

    fn flatness(p: &[f64]) -> (f64, f64, f64) {
        let n = p.len() as f64;
        let mu = p.iter().sum::<f64>() / n;
        let mean_sq = p.iter().map(|v| v * v).sum::<f64>() / n;
        let var = p.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n;
        (var / (mu * mu), mu, mean_sq)
    }

    pub fn objective(&self, decoder: &KernelSet) -> Result<Objective> {
        let spectra = self.decoder_spectra(decoder)?;
        let (_, reconstruction) = self.residuals(&spectra);
        let (flatness, _, _) = Self::flatness(&self.total_psd(&spectra));
        Ok(Objective {
            total: reconstruction + self.beta * flatness,
            reconstruction,
            flatness,
        })
    }

    /// Objective and its gradient `∂/∂Re h + i ∂/∂Im h` for every entry of
    /// every decoder kernel.
    pub fn gradient(&self, decoder: &KernelSet) -> Result<(Objective, Vec<Vec<Complex64>>)> {
        let spectra = self.decoder_spectra(decoder)?;
        let (res, reconstruction) = self.residuals(&spectra);
        let p = self.total_psd(&spectra);
        let (flatness, mu, mean_sq) = Self::flatness(&p);
        let n = self.len;
        let m = n / self.decimation;
        let count = self.signals.len() as f64;
        let q: Vec<f64> = p
            .iter()
            .map(|&pl| 2.0 / (n as f64 * mu * mu) * (pl - mean_sq / mu))
            .collect();
        let shift = n - self.delta % n;
        let mut grads = Vec::with_capacity(spectra.len());
        for (k, (h, &w)) in spectra.iter().zip(&self.weights).enumerate() {
            let mut buf = vec![Complex64::new(0.0, 0.0); n];
            for ((chat, r), inv_e) in self.coeff_spectra.iter().zip(&res).zip(&self.inv_energy) {
                let a = 2.0 * w * inv_e / count;
                let c = &chat[k];
                for (l, b) in buf.iter_mut().enumerate() {
                    *b += a * c[l % m] * r[l].conj();
                }
            }
            if self.beta > 0.0 {
                let a = self.beta * 2.0 * w * n as f64;
                for (l, b) in buf.iter_mut().enumerate() {
                    *b += a * q[l] * h[l];
                }
            }
            fft::inverse(&mut buf);
            let g: Vec<Complex64> = (0..decoder.t_max).map(|p| buf[(p + shift) % n]).collect();
            grads.push(g);
        }
        Ok((
            Objective {
                total: reconstruction + self.beta * flatness,
                reconstruction,
                flatness,
            },
            grads,
        ))
    }
}

fn step_decoder(decoder: &KernelSet, grads: &[Vec<Complex64>], eta: f64) -> KernelSet {
    let mut out = decoder.clone();
    for (h, g) in out.kernels.iter_mut().zip(grads) {
        for (v, gv) in h.iter_mut().zip(g) {
            *v -= eta * gv;
        }
    }
    out
}

/// Gradient descent from [`initial_decoder`] with a fixed step that is
/// halved whenever it would increase the loss.
///
/// The batch and the held-out signal come from one generator seeded with
/// `cfg.seed`.
pub fn train(encoder: &KernelSet, cfg: &TrainConfig) -> Result<(KernelSet, TrainReport)> {
    if cfg.signals == 0 || cfg.max_iters == 0 || !(cfg.step_size > 0.0) || !(cfg.tol >= 0.0) {
        return Err(Error::Config(format!(
            "invalid training settings: signals={}, max_iters={}, step_size={}, tol={}",
            cfg.signals, cfg.max_iters, cfg.step_size, cfg.tol
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let signals = gaussian_signals(&mut rng, cfg.signals, cfg.signal_len);
    let held_out = gaussian_signals(&mut rng, 1, cfg.signal_len).remove(0);
    let problem = Problem::new(encoder, signals, cfg.beta)?;
    let mut decoder = initial_decoder(encoder, cfg.signal_len)?;
    let (mut obj, mut grads) = problem.gradient(&decoder)?;
    let initial = obj;
    let mut history = vec![obj.total];
    let mut eta = cfg.step_size;
    let mut halvings = 0;
    let mut iterations = 0;
    let mut converged = obj.rms_relative_error() <= cfg.tol;
    while !converged && iterations < cfg.max_iters {
        let trial = step_decoder(&decoder, &grads, eta);
        let (trial_obj, trial_grads) = problem.gradient(&trial)?;
        if !trial_obj.total.is_finite() || trial_obj.total > 1e3 * initial.total {
            return Err(Error::Divergence(format!(
                "loss reached {:.3e} (initial {:.3e}) at iteration {iterations} with step {eta:.3e}",
                trial_obj.total, initial.total
            )));
        }
        if trial_obj.total > obj.total {
            eta *= 0.5;
            halvings += 1;
            if eta < 1e-12 * cfg.step_size {
                return Err(Error::Divergence(format!(
                    "step size collapsed to {eta:.3e} at iteration {iterations}"
                )));
            }
            continue;
        }
        decoder = trial;
        obj = trial_obj;
        grads = trial_grads;
        iterations += 1;
        history.push(obj.total);
        converged = obj.rms_relative_error() <= cfg.tol;
    }
    let c = BankOperator::new(encoder, cfg.signal_len)?.analyze(&held_out)?;
    let held_out_error = relative_error(&held_out, &reconstruct(&decoder, &c)?);
    let decoder_kappa = match BankOperator::with_decimation(&decoder, encoder.decimation, cfg.signal_len)?
        .frame_bounds()
    {
        Ok(diag) => Some(diag.kappa),
        Err(Error::NotAFrame { .. }) => None,
        Err(e) => return Err(e),
    };
    let report = TrainReport {
        format_version: REPORT_FORMAT_VERSION,
        iterations,
        converged,
        initial,
        last: obj,
        step_size: eta,
        step_halvings: halvings,
        held_out_error,
        decoder_kappa,
        config: cfg.clone(),
        history,
    };
    Ok((decoder, report))
}
