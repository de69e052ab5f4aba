//! Reference implementations used for validation only. They trade memory and
//! speed for directness, so the production paths can be held to exact
//! agreement against an independently-coded route.
//!
//! [`AugmentedWalk`] materializes, for unit i, the (n + d)-dimensional vector
//!
//! ```text
//! x~_i = [ sqrt(phi) * e_i ; sqrt(1 - phi) * x_i ]
//! ```
//!
//! and runs the textbook walk on those vectors with the raw inner product
//! <w~, x~> against the same threshold. Fed the same uniform stream as
//! [`crate::walk::WalkState`] (one draw per step, in the same order), the two
//! must produce identical sign sequences: the augmented coordinates are
//! mutually orthogonal and never recur, so the oracle's inner product equals
//! the production path's (1 - phi)-rescaled one up to floating-point
//! re-association.

use crate::design::{DesignParams, OverflowPolicy};
use crate::rng::RngStream;
use crate::walk::{Assignment, WalkError};

/// Brute-force walk over explicitly augmented vectors. O(n + d) per step and
/// per unit of storage; use only at validation scale.
pub struct AugmentedWalk {
    /// Full augmented state: n fresh coordinates, then the d covariate ones.
    w: Vec<f64>,
    step: usize,
    fallback_active: bool,
    restarts: u64,
    rng: RngStream,
}

impl AugmentedWalk {
    pub fn new(params: &DesignParams, seed: u64) -> Self {
        Self {
            w: vec![0.0; params.n() + params.d()],
            step: 0,
            fallback_active: false,
            restarts: 0,
            rng: RngStream::new(seed),
        }
    }

    pub fn restarts(&self) -> u64 {
        self.restarts
    }

    fn augmented(&self, x: &[f64], params: &DesignParams) -> Vec<f64> {
        let n = params.n();
        let mut v = vec![0.0; n + x.len()];
        v[self.step] = params.phi().sqrt();
        for (slot, &xi) in v[n..].iter_mut().zip(x) {
            *slot = (1.0 - params.phi()).sqrt() * xi;
        }
        v
    }

    /// Mirrors `WalkState::assign` step for step, drawing one uniform per
    /// assignment from its own stream.
    pub fn assign(&mut self, x: &[f64], params: &DesignParams) -> Result<Assignment, WalkError> {
        if self.step >= params.n() {
            return Err(WalkError::HorizonExceeded { horizon: params.n() });
        }
        if x.len() != params.d() {
            return Err(WalkError::DimensionMismatch { expected: params.d(), got: x.len() });
        }
        let q = params.q();
        let xt = self.augmented(x, params);

        if self.fallback_active {
            let z = if self.rng.next_bool(q) { 1 } else { -1 };
            self.step += 1;
            return Ok(Assignment { z, eta: Some(eta_for(z, q)), was_overflow: false });
        }

        let c = params.threshold();
        let mut s: f64 = self.w.iter().zip(&xt).map(|(a, b)| a * b).sum();
        let mut was_overflow = false;
        if s.abs() > c {
            was_overflow = true;
            match params.policy() {
                OverflowPolicy::Strict => {
                    let coeff = -2.0 * params.effective_q() * (s / c);
                    for (wi, xi) in self.w.iter_mut().zip(&xt) {
                        *wi += coeff * xi;
                    }
                    let z = if self.rng.next_bool(q) { 1 } else { -1 };
                    self.step += 1;
                    return Ok(Assignment { z, eta: None, was_overflow });
                }
                OverflowPolicy::RandomFallback => {
                    self.fallback_active = true;
                    let z = if self.rng.next_bool(q) { 1 } else { -1 };
                    self.step += 1;
                    return Ok(Assignment { z, eta: Some(eta_for(z, q)), was_overflow });
                }
                OverflowPolicy::Restart => {
                    self.w.iter_mut().for_each(|v| *v = 0.0);
                    self.restarts += 1;
                    s = 0.0;
                }
            }
        }

        let p_plus = if params.label_swap() {
            1.0 - (1.0 - q) * (1.0 + s / c)
        } else {
            q * (1.0 - s / c)
        };
        let z = if self.rng.next_bool(p_plus) { 1 } else { -1 };
        let eta = eta_for(z, q);
        for (wi, xi) in self.w.iter_mut().zip(&xt) {
            *wi += eta * xi;
        }
        self.step += 1;
        Ok(Assignment { z, eta: Some(eta), was_overflow })
    }
}

fn eta_for(z: i8, q: f64) -> f64 {
    if z > 0 {
        2.0 * (1.0 - q)
    } else {
        -2.0 * q
    }
}

/// Quadratic form v^T (phi I + (1 - phi) X X^T)^{-1} v by a dense Cholesky
/// solve (X row-major n x d). Validation-scale only: the matrix is n x n.
pub fn ridge_inverse_quadratic(x: &[f64], n: usize, d: usize, phi: f64, v: &[f64]) -> f64 {
    assert_eq!(x.len(), n * d);
    assert_eq!(v.len(), n);
    assert!(phi > 0.0 && phi < 1.0);
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let dot: f64 =
                x[i * d..(i + 1) * d].iter().zip(&x[j * d..(j + 1) * d]).map(|(a, b)| a * b).sum();
            let mut val = (1.0 - phi) * dot;
            if i == j {
                val += phi;
            }
            m[i * n + j] = val;
            m[j * n + i] = val;
        }
    }
    let sol = cholesky_solve(&mut m, n, v);
    v.iter().zip(&sol).map(|(a, b)| a * b).sum()
}

/// Solves M y = b for symmetric positive definite M (overwritten in place
/// with its Cholesky factor).
fn cholesky_solve(m: &mut [f64], n: usize, b: &[f64]) -> Vec<f64> {
    // Lower-triangular factorization M = L L^T.
    for j in 0..n {
        let mut diag = m[j * n + j];
        for k in 0..j {
            diag -= m[j * n + k] * m[j * n + k];
        }
        assert!(diag > 0.0, "matrix is not positive definite");
        let diag = diag.sqrt();
        m[j * n + j] = diag;
        for i in (j + 1)..n {
            let mut v = m[i * n + j];
            for k in 0..j {
                v -= m[i * n + k] * m[j * n + k];
            }
            m[i * n + j] = v / diag;
        }
    }
    // Forward solve L u = b.
    let mut u = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            u[i] -= m[i * n + k] * u[k];
        }
        u[i] /= m[i * n + i];
    }
    // Back solve L^T y = u.
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            u[i] -= m[k * n + i] * u[k];
        }
        u[i] /= m[i * n + i];
    }
    u
}
