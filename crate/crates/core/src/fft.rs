//! Thin wrapper over `rustfft` with a per-thread planner cache.

use std::cell::RefCell;

use num_complex::Complex64;
use rustfft::FftPlanner;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// In-place forward DFT, `X[m] = Σ x[t] e^{-2πi tm/N}`.
pub fn forward(buf: &mut [Complex64]) {
    if buf.len() <= 1 {
        return;
    }
    let plan = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(buf.len()));
    plan.process(buf);
}

/// In-place inverse DFT including the 1/N factor.
pub fn inverse(buf: &mut [Complex64]) {
    if buf.len() <= 1 {
        return;
    }
    let plan = PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(buf.len()));
    plan.process(buf);
    let scale = 1.0 / buf.len() as f64;
    for v in buf.iter_mut() {
        *v *= scale;
    }
}

pub fn forward_real(x: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    forward(&mut buf);
    buf
}
