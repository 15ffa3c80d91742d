//! Analysis, synthesis, frame bounds and canonical-dual reconstruction.
//!
//! Kernels are placed circularly on the signal grid so that frame position
//! `Δ = ⌊T_max/2⌋` sits at index 0, which makes
//! `c_k[n] = Σ_p g_k[p] x[(d·n − p + Δ) mod L]` a plain circular convolution
//! sampled every `d` samples.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::design::KernelSet;
use crate::eigen::hermitian_eigenvalues;
use crate::error::{Error, Result};
use crate::fft;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Largest signal length accepted by the dense frame-operator oracle.
pub const DENSE_MAX_LEN: usize = 4096;

/// Subsampled complex coefficients, one row per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    pub channels: Vec<Vec<Complex64>>,
    pub decimation: usize,
    pub signal_len: usize,
    pub bank_id: String,
}

impl Coefficients {
    pub fn frames(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    /// `Σ_k w_k ‖c_k‖²`, the energy of the coefficients seen as a real frame.
    pub fn weighted_energy(&self, weights: &[f64]) -> f64 {
        self.channels
            .iter()
            .zip(weights)
            .map(|(c, w)| w * c.iter().map(|z| z.norm_sqr()).sum::<f64>())
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundsMethod {
    Polyphase,
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameDiagnostics {
    pub lower: f64,
    pub upper: f64,
    pub kappa: f64,
    pub method: BoundsMethod,
}

impl FrameDiagnostics {
    fn new(lower: f64, upper: f64, len: usize, d: usize, method: BoundsMethod) -> Result<Self> {
        if !(lower > 1e-12 * upper) || !upper.is_finite() {
            return Err(Error::NotAFrame {
                len,
                decimation: d,
                lower,
                upper,
            });
        }
        Ok(Self {
            lower,
            upper,
            kappa: upper / lower,
            method,
        })
    }
}

/// A kernel set bound to a signal length and decimation, with the kernel
/// spectra cached.
#[derive(Debug, Clone)]
pub struct BankOperator {
    len: usize,
    decimation: usize,
    weights: Vec<f64>,
    spectra: Vec<Vec<Complex64>>,
    bank_id: String,
}

impl BankOperator {
    /// Operator using the bank's own decimation.
    pub fn new(bank: &KernelSet, len: usize) -> Result<Self> {
        Self::with_decimation(bank, bank.decimation, len)
    }

    pub fn with_decimation(bank: &KernelSet, decimation: usize, len: usize) -> Result<Self> {
        bank.check_shape()?;
        if decimation == 0 || len == 0 || !len.is_multiple_of(decimation) {
            return Err(Error::Shape(format!(
                "signal length {len} is not a positive multiple of d={decimation}"
            )));
        }
        if len < bank.t_max {
            return Err(Error::Shape(format!(
                "signal length {len} is shorter than T_max={}",
                bank.t_max
            )));
        }
        let delta = bank.align_offset();
        let spectra = bank
            .kernels
            .iter()
            .map(|g| placed_spectrum(g, len, delta))
            .collect();
        Ok(Self {
            len,
            decimation,
            weights: bank.weights(),
            spectra,
            bank_id: bank.id(),
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn decimation(&self) -> usize {
        self.decimation
    }

    /// Number of coefficients per channel, `L/d`.
    pub fn frames(&self) -> usize {
        self.len / self.decimation
    }

    pub fn channels(&self) -> usize {
        self.spectra.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Length-`L` DFT of each circularly placed kernel.
    pub fn spectra(&self) -> &[Vec<Complex64>] {
        &self.spectra
    }

    fn check_signal(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.len {
            return Err(Error::Shape(format!(
                "signal has {} samples, operator expects {}",
                x.len(),
                self.len
            )));
        }
        Ok(())
    }

    /// Coefficient spectra `Ĉ_k` (length `M`) from a signal spectrum.
    pub fn analyze_spectrum(&self, xhat: &[Complex64]) -> Vec<Vec<Complex64>> {
        let m = self.frames();
        let inv_d = 1.0 / self.decimation as f64;
        self.spectra
            .iter()
            .map(|g| {
                let mut folded = vec![ZERO; m];
                for (l, (x, h)) in xhat.iter().zip(g).enumerate() {
                    folded[l % m] += x * h;
                }
                for v in folded.iter_mut() {
                    *v *= inv_d;
                }
                folded
            })
            .collect()
    }

    pub fn analyze(&self, x: &[f64]) -> Result<Coefficients> {
        self.check_signal(x)?;
        let xhat = fft::forward_real(x);
        let channels = self
            .analyze_spectrum(&xhat)
            .into_iter()
            .map(|mut c| {
                fft::inverse(&mut c);
                c
            })
            .collect();
        Ok(self.wrap(channels))
    }

    fn wrap(&self, channels: Vec<Vec<Complex64>>) -> Coefficients {
        Coefficients {
            channels,
            decimation: self.decimation,
            signal_len: self.len,
            bank_id: self.bank_id.clone(),
        }
    }

    fn check_coefficients(&self, c: &Coefficients) -> Result<()> {
        if c.channels.len() != self.channels()
            || c.channels.iter().any(|row| row.len() != self.frames())
        {
            return Err(Error::Shape(format!(
                "coefficients are {}x{}, operator expects {}x{}",
                c.channels.len(),
                c.frames(),
                self.channels(),
                self.frames()
            )));
        }
        Ok(())
    }

    /// Signal spectrum `Z(ℓ) = Σ_k w_k Ĉ_k(ℓ mod M) conj(Ĝ_k(ℓ))` from
    /// coefficient spectra.
    pub fn synthesize_spectrum(&self, chat: &[Vec<Complex64>]) -> Vec<Complex64> {
        let m = self.frames();
        let mut z = vec![ZERO; self.len];
        for ((c, g), &w) in chat.iter().zip(&self.spectra).zip(&self.weights) {
            for (l, (zl, h)) in z.iter_mut().zip(g).enumerate() {
                *zl += w * c[l % m] * h.conj();
            }
        }
        z
    }

    /// Adjoint of [`analyze`](Self::analyze) under the weighted inner
    /// product `Σ_k w_k Re⟨·,·⟩`.
    pub fn synthesize(&self, c: &Coefficients) -> Result<Vec<f64>> {
        self.check_coefficients(c)?;
        let chat: Vec<Vec<Complex64>> = c
            .channels
            .iter()
            .map(|row| {
                let mut buf = row.clone();
                fft::forward(&mut buf);
                buf
            })
            .collect();
        let mut z = self.synthesize_spectrum(&chat);
        fft::inverse(&mut z);
        Ok(z.into_iter().map(|v| v.re).collect())
    }

    /// `S x`, analysis followed by synthesis.
    pub fn frame_apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let c = self.analyze(x)?;
        self.synthesize(&c)
    }

    /// `P[m] = Σ_k (w_k/2)(|Ĝ_k(m)|² + |Ĝ_k(−m)|²)` on the length-`L` grid.
    pub fn total_psd(&self) -> Vec<f64> {
        let n = self.len;
        let mut p = vec![0.0; n];
        for (g, &w) in self.spectra.iter().zip(&self.weights) {
            for (l, pl) in p.iter_mut().enumerate() {
                *pl += 0.5 * w * (g[l].norm_sqr() + g[(n - l) % n].norm_sqr());
            }
        }
        p
    }

    /// Polyphase blocks of the frame operator, `M` row-major `d×d` Hermitian
    /// matrices with `H_m[j,j'] = (1/d) Σ conj(S(m+jM)) S(m+j'M)` summed over
    /// every kernel and, for weight-2 channels, its conjugate.
    pub fn polyphase_blocks(&self) -> Vec<Complex64> {
        let (n, d, m) = (self.len, self.decimation, self.frames());
        let inv_d = 1.0 / d as f64;
        let mut blocks = vec![ZERO; m * d * d];
        let mut s = vec![ZERO; d];
        for (g, &w) in self.spectra.iter().zip(&self.weights) {
            for r in 0..m {
                let block = &mut blocks[r * d * d..(r + 1) * d * d];
                for (j, sj) in s.iter_mut().enumerate() {
                    *sj = g[r + j * m];
                }
                accumulate_outer(block, &s, inv_d);
                if w == 2.0 {
                    for (j, sj) in s.iter_mut().enumerate() {
                        *sj = g[(n - (r + j * m)) % n].conj();
                    }
                    accumulate_outer(block, &s, inv_d);
                }
            }
        }
        blocks
    }

    /// Frame bounds from the eigenvalues of the polyphase blocks.
    pub fn frame_bounds(&self) -> Result<FrameDiagnostics> {
        let blocks = self.polyphase_blocks();
        let (lower, upper) = block_extremes(&blocks, self.decimation)?;
        FrameDiagnostics::new(
            lower,
            upper,
            self.len,
            self.decimation,
            BoundsMethod::Polyphase,
        )
    }

    /// Solves `S y = b` by conjugate gradients, with `S` applied through its
    /// polyphase blocks.
    pub fn solve_frame(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.check_signal(b)?;
        let blocks = self.polyphase_blocks();
        let (lower, upper) = block_extremes(&blocks, self.decimation)?;
        let diag = FrameDiagnostics::new(
            lower,
            upper,
            self.len,
            self.decimation,
            BoundsMethod::Polyphase,
        )?;
        if diag.kappa - 1.0 < 1e-12 {
            return Ok(b.iter().map(|v| v / lower).collect());
        }
        let apply = |x: &[f64]| apply_blocks(&blocks, self.decimation, x);
        conjugate_gradient(apply, b, 2.0 / (lower + upper), diag.kappa)
    }

    /// Reconstruction with the canonical dual frame, `S⁻¹ A* c`.
    pub fn canonical_dual_reconstruct(&self, c: &Coefficients) -> Result<Vec<f64>> {
        let b = self.synthesize(c)?;
        self.solve_frame(&b)
    }
}

/// Frame-position `p` goes to signal index `(p − Δ) mod L`.
pub(crate) fn placed_spectrum(kernel: &[Complex64], len: usize, delta: usize) -> Vec<Complex64> {
    let mut buf = vec![ZERO; len];
    let shift = len - delta % len;
    for (p, &v) in kernel.iter().enumerate() {
        buf[(p + shift) % len] += v;
    }
    fft::forward(&mut buf);
    buf
}

fn accumulate_outer(block: &mut [Complex64], s: &[Complex64], scale: f64) {
    let d = s.len();
    for j in 0..d {
        let a = s[j].conj() * scale;
        for jj in 0..d {
            block[j * d + jj] += a * s[jj];
        }
    }
}

fn block_extremes(blocks: &[Complex64], d: usize) -> Result<(f64, f64)> {
    let mut lower = f64::INFINITY;
    let mut upper = f64::NEG_INFINITY;
    for block in blocks.chunks(d * d) {
        let (lo, hi) = if d == 1 {
            (block[0].re, block[0].re)
        } else {
            let eig = hermitian_eigenvalues(block, d)?;
            (eig[0], eig[d - 1])
        };
        lower = lower.min(lo);
        upper = upper.max(hi);
    }
    Ok((lower, upper))
}

fn apply_blocks(blocks: &[Complex64], d: usize, x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let m = n / d;
    let xhat = fft::forward_real(x);
    let mut z = vec![ZERO; n];
    for r in 0..m {
        let block = &blocks[r * d * d..(r + 1) * d * d];
        for j in 0..d {
            z[r + j * m] = (0..d).map(|jj| block[j * d + jj] * xhat[r + jj * m]).sum();
        }
    }
    fft::inverse(&mut z);
    z.into_iter().map(|v| v.re).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// CG for a symmetric positive definite operator, starting from `x₀ = α b`.
/// Stops at a relative residual of `1e-13` or after `max(20, ⌈10κ⌉)` steps.
fn conjugate_gradient(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    alpha0: f64,
    kappa: f64,
) -> Result<Vec<f64>> {
    const TOL: f64 = 1e-13;
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        return Ok(vec![0.0; b.len()]);
    }
    let max_iter = ((10.0 * kappa).ceil() as usize).max(20);
    let mut x: Vec<f64> = b.iter().map(|v| alpha0 * v).collect();
    let ax = apply(&x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    for _ in 0..max_iter {
        if rr.sqrt() <= TOL * b_norm {
            return Ok(x);
        }
        let ap = apply(&p);
        let step = rr / dot(&p, &ap);
        for ((xi, ri), (pi, api)) in x.iter_mut().zip(r.iter_mut()).zip(p.iter().zip(&ap)) {
            *xi += step * pi;
            *ri -= step * api;
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        rr = rr_new;
    }
    let rel = rr.sqrt() / b_norm;
    // Rounding can leave the residual just above the target; only a clear
    // miss is an error.
    if rel > 1e3 * TOL {
        return Err(Error::Computation(format!(
            "conjugate gradients stopped at relative residual {rel:.3e}"
        )));
    }
    Ok(x)
}

/// Analysis through FFTs with the bank's decimation.
pub fn analyze(bank: &KernelSet, x: &[f64]) -> Result<Coefficients> {
    BankOperator::new(bank, x.len())?.analyze(x)
}

/// Analysis by direct summation, `O(K·M·T_max)`.
pub fn analyze_direct(bank: &KernelSet, x: &[f64]) -> Result<Coefficients> {
    let op = BankOperator::new(bank, x.len())?;
    let (n, d, delta) = (x.len(), bank.decimation, bank.align_offset());
    let channels = bank
        .kernels
        .iter()
        .map(|g| {
            (0..n / d)
                .map(|i| {
                    g.iter()
                        .enumerate()
                        .map(|(p, h)| h * x[(d * i + n + delta - p) % n])
                        .sum()
                })
                .collect()
        })
        .collect();
    Ok(op.wrap(channels))
}

pub fn synthesize(bank: &KernelSet, c: &Coefficients) -> Result<Vec<f64>> {
    BankOperator::new(bank, c.signal_len)?.synthesize(c)
}

pub fn total_psd(bank: &KernelSet, len: usize) -> Result<Vec<f64>> {
    Ok(BankOperator::with_decimation(bank, 1, len)?.total_psd())
}

/// Frequencies in Hz of the bins returned by [`total_psd`], folded to
/// `[0, fs/2]` for the first `⌊L/2⌋+1` entries.
pub fn psd_frequencies(fs: f64, len: usize) -> Vec<f64> {
    (0..=len / 2).map(|m| m as f64 * fs / len as f64).collect()
}

pub fn frame_bounds_polyphase(bank: &KernelSet, d: usize, len: usize) -> Result<FrameDiagnostics> {
    BankOperator::with_decimation(bank, d, len)?.frame_bounds()
}

/// Frame bounds from the eigenvalues of the real `L×L` frame operator,
/// assembled entry by entry from the kernels in the time domain.
pub fn frame_bounds_dense(bank: &KernelSet, d: usize, len: usize) -> Result<FrameDiagnostics> {
    bank.check_shape()?;
    if len > DENSE_MAX_LEN {
        return Err(Error::Config(format!(
            "dense frame bounds are limited to L ≤ {DENSE_MAX_LEN}, got {len}"
        )));
    }
    if d == 0 || !len.is_multiple_of(d) || len < bank.t_max {
        return Err(Error::Shape(format!(
            "invalid dense setup L={len}, d={d}, T_max={}",
            bank.t_max
        )));
    }
    let delta = bank.align_offset();
    let mut s = DMatrix::<f64>::zeros(len, len);
    for (k, g) in bank.kernels.iter().enumerate() {
        let w = bank.channel_weight(k);
        let taps: Vec<(usize, Complex64)> = g
            .iter()
            .enumerate()
            .filter(|(_, v)| v.norm_sqr() > 0.0)
            .map(|(p, &v)| (p, v))
            .collect();
        for n in 0..len / d {
            // Row (k, n) of the analysis matrix: x[(dn − p + Δ) mod L] ↦ g[p].
            let row: Vec<(usize, Complex64)> = taps
                .iter()
                .map(|&(p, v)| ((d * n + len + delta - p) % len, v))
                .collect();
            for &(t, a) in &row {
                for &(u, b) in &row {
                    s[(t, u)] += w * (a.conj() * b).re;
                }
            }
        }
    }
    let eig = s.symmetric_eigenvalues();
    let lower = eig.min();
    let upper = eig.max();
    FrameDiagnostics::new(lower, upper, len, d, BoundsMethod::Dense)
}

pub fn canonical_dual_reconstruct(bank: &KernelSet, c: &Coefficients) -> Result<Vec<f64>> {
    BankOperator::new(bank, c.signal_len)?.canonical_dual_reconstruct(c)
}
