//! Cyclic Jacobi eigenvalue iteration for small dense Hermitian matrices.

use num_complex::Complex64;

use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 64;

/// Eigenvalues (ascending) of the Hermitian matrix stored row-major in `a`.
///
/// Only the upper triangle is read. Iterates until the off-diagonal
/// Frobenius norm falls below `1e-15` times the matrix norm.
pub fn hermitian_eigenvalues(a: &[Complex64], n: usize) -> Result<Vec<f64>> {
    if a.len() != n * n {
        return Err(Error::Shape(format!(
            "expected {n}x{n} matrix, got {} entries",
            a.len()
        )));
    }
    let mut m = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        m[i * n + i] = Complex64::new(a[i * n + i].re, 0.0);
        for j in i + 1..n {
            m[i * n + j] = a[i * n + j];
            m[j * n + i] = a[i * n + j].conj();
        }
    }
    let scale = m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if scale == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let threshold = (1e-15 * scale).powi(2);

    let off = |m: &[Complex64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                s += 2.0 * m[i * n + j].norm_sqr();
            }
        }
        s
    };

    let mut converged = n < 2;
    for _ in 0..MAX_SWEEPS {
        if off(&m) <= threshold {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                let r = apq.norm();
                if r == 0.0 {
                    continue;
                }
                // Rotate column q by the phase of a_pq so the pivot is real.
                let phase = apq / r;
                for k in 0..n {
                    m[k * n + q] *= phase.conj();
                    m[q * n + k] *= phase;
                }
                let app = m[p * n + p].re;
                let aqq = m[q * n + q].re;
                let tau = (aqq - app) / (2.0 * r);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = m[k * n + p];
                    let akq = m[k * n + q];
                    let new_kp = akp * c - akq * s;
                    let new_kq = akp * s + akq * c;
                    m[k * n + p] = new_kp;
                    m[p * n + k] = new_kp.conj();
                    m[k * n + q] = new_kq;
                    m[q * n + k] = new_kq.conj();
                }
                m[p * n + p] = Complex64::new(app - t * r, 0.0);
                m[q * n + q] = Complex64::new(aqq + t * r, 0.0);
                m[p * n + q] = Complex64::new(0.0, 0.0);
                m[q * n + p] = Complex64::new(0.0, 0.0);
            }
        }
    }
    if !converged && off(&m) > threshold * 1e6 {
        return Err(Error::Computation(
            "Jacobi iteration did not converge".into(),
        ));
    }
    let mut eig: Vec<f64> = (0..n).map(|i| m[i * n + i].re).collect();
    eig.sort_by(f64::total_cmp);
    Ok(eig)
}
