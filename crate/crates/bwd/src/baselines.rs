//! Comparator designs the walk is scored against: Bernoulli draws, complete
//! randomization, Efron's biased coin, Smith's power-law allocation, and the
//! unweighted self-balancing walk of Alweiss et al. with a fixed large
//! threshold.
//!
//! All of them expose the same streaming `assign(x) -> group` surface; only
//! the Alweiss walk actually looks at the covariates.

use crate::rng::RngStream;
use thiserror::Error;

/// Default Efron bias toward the under-assigned arm.
pub const EFRON_BIAS: f64 = 2.0 / 3.0;
/// Default Smith allocation exponent.
pub const SMITH_RHO: f64 = 2.0;
/// Multiplier in the Alweiss threshold c_A = 30 ln(n d / delta).
pub const ALWEISS_THRESHOLD_FACTOR: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    /// Independent draws from the target probabilities.
    Bernoulli,
    /// Fixed per-group quotas, filled in a uniformly random order.
    CompleteRandomization,
    /// Efron's biased coin: fair at ties, else favors the lagging arm.
    Efron,
    /// Smith's design: P(j) proportional to (sum of other counts + 1)^rho.
    Smith,
    /// Self-balancing +/-1 walk with threshold c_A and random fallback.
    Alweiss,
}

impl BaselineKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            BaselineKind::Bernoulli => "bernoulli",
            BaselineKind::CompleteRandomization => "complete",
            BaselineKind::Efron => "efron",
            BaselineKind::Smith => "smith",
            BaselineKind::Alweiss => "alweiss",
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum BaselineError {
    #[error("probabilities must be positive and sum to 1 (got sum {sum})")]
    InvalidProbabilities { sum: f64 },
    #[error("{design} supports exactly two groups, got {got}")]
    BinaryOnly { design: &'static str, got: usize },
    #[error("{design} requires uniform group probabilities")]
    UniformOnly { design: &'static str },
    #[error("all {n} quota slots already assigned")]
    QuotaExhausted { n: usize },
    #[error("covariate dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("parameter `{field}` out of range: {value}")]
    OutOfRange { field: &'static str, value: f64 },
}

/// Streaming state of one baseline design.
pub struct BaselineState {
    kind: BaselineKind,
    p: Vec<f64>,
    counts: Vec<u64>,
    rng: RngStream,
    efron_bias: f64,
    smith_rho: f64,
    /// Remaining per-group slots (complete randomization only).
    quota: Vec<u64>,
    /// Signed covariate sum and threshold (Alweiss only).
    w: Vec<f64>,
    threshold: f64,
    fallback_active: bool,
}

impl BaselineState {
    /// `n` is the assignment horizon (quota total and the Alweiss threshold
    /// both depend on it), `d` the covariate dimension, `delta` the failure
    /// budget for the Alweiss threshold.
    pub fn new(
        kind: BaselineKind,
        p: &[f64],
        n: usize,
        d: usize,
        delta: f64,
        seed: u64,
    ) -> Result<Self, BaselineError> {
        let k = p.len();
        let sum: f64 = p.iter().sum();
        if k < 2 || p.iter().any(|&v| !(v > 0.0) || !v.is_finite()) || (sum - 1.0).abs() > 1e-9 {
            return Err(BaselineError::InvalidProbabilities { sum });
        }
        match kind {
            BaselineKind::Efron | BaselineKind::Alweiss if k != 2 => {
                return Err(BaselineError::BinaryOnly { design: kind.as_str(), got: k });
            }
            // Efron and Smith target balanced counts; a skewed p is not
            // something either procedure can deliver.
            BaselineKind::Efron | BaselineKind::Smith
                if p.iter().any(|&v| (v - 1.0 / k as f64).abs() > 1e-9) =>
            {
                return Err(BaselineError::UniformOnly { design: kind.as_str() });
            }
            BaselineKind::Alweiss if (p[1] - 0.5).abs() > 1e-9 => {
                return Err(BaselineError::UniformOnly { design: kind.as_str() });
            }
            _ => {}
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(BaselineError::OutOfRange { field: "delta", value: delta });
        }
        let quota = if kind == BaselineKind::CompleteRandomization {
            largest_remainder_quotas(p, n)
        } else {
            Vec::new()
        };
        let (w, threshold) = if kind == BaselineKind::Alweiss {
            (vec![0.0; d], ALWEISS_THRESHOLD_FACTOR * (n as f64 * d as f64 / delta).ln())
        } else {
            (Vec::new(), 0.0)
        };
        Ok(Self {
            kind,
            p: p.to_vec(),
            counts: vec![0; k],
            rng: RngStream::new(seed),
            efron_bias: EFRON_BIAS,
            smith_rho: SMITH_RHO,
            quota,
            w,
            threshold,
            fallback_active: false,
        })
    }

    /// Overrides the Efron bias (probability of the under-assigned arm).
    pub fn with_efron_bias(mut self, bias: f64) -> Result<Self, BaselineError> {
        if !(bias > 0.0 && bias < 1.0) {
            return Err(BaselineError::OutOfRange { field: "efron_bias", value: bias });
        }
        self.efron_bias = bias;
        Ok(self)
    }

    /// Overrides the Smith exponent.
    pub fn with_smith_rho(mut self, rho: f64) -> Result<Self, BaselineError> {
        if !rho.is_finite() || rho < 0.0 {
            return Err(BaselineError::OutOfRange { field: "smith_rho", value: rho });
        }
        self.smith_rho = rho;
        Ok(self)
    }

    pub fn kind(&self) -> BaselineKind {
        self.kind
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// True once the Alweiss walk has overflowed and frozen; always false for
    /// the other designs.
    pub fn fallback_active(&self) -> bool {
        self.fallback_active
    }

    /// Distribution of the next assignment given the current state.
    fn next_probabilities(&self) -> Result<Vec<f64>, BaselineError> {
        let k = self.p.len();
        match self.kind {
            BaselineKind::Bernoulli => Ok(self.p.clone()),
            BaselineKind::CompleteRandomization => {
                let total: u64 = self.quota.iter().sum();
                if total == 0 {
                    return Err(BaselineError::QuotaExhausted {
                        n: self.counts.iter().sum::<u64>() as usize,
                    });
                }
                // Each remaining slot is equally likely: the stream is a
                // uniformly random permutation of the quota labels.
                Ok(self.quota.iter().map(|&r| r as f64 / total as f64).collect())
            }
            BaselineKind::Efron => {
                let (a, b) = (self.counts[0], self.counts[1]);
                Ok(if a == b {
                    vec![0.5, 0.5]
                } else if a < b {
                    vec![self.efron_bias, 1.0 - self.efron_bias]
                } else {
                    vec![1.0 - self.efron_bias, self.efron_bias]
                })
            }
            BaselineKind::Smith => {
                let mut weights = Vec::with_capacity(k);
                let total: u64 = self.counts.iter().sum();
                for j in 0..k {
                    let others = (total - self.counts[j]) as f64;
                    weights.push((others + 1.0).powf(self.smith_rho));
                }
                let z: f64 = weights.iter().sum();
                Ok(weights.into_iter().map(|w| w / z).collect())
            }
            BaselineKind::Alweiss => unreachable!("assign handles the walk directly"),
        }
    }

    /// Assigns one unit. Only the Alweiss walk reads `x`.
    pub fn assign(&mut self, x: &[f64]) -> Result<usize, BaselineError> {
        let group = match self.kind {
            BaselineKind::Alweiss => {
                if x.len() != self.w.len() {
                    return Err(BaselineError::DimensionMismatch {
                        expected: self.w.len(),
                        got: x.len(),
                    });
                }
                let z = if self.fallback_active {
                    if self.rng.next_bool(0.5) {
                        1
                    } else {
                        -1
                    }
                } else {
                    let s: f64 = self.w.iter().zip(x).map(|(a, b)| a * b).sum();
                    if s.abs() > self.threshold {
                        self.fallback_active = true;
                        if self.rng.next_bool(0.5) {
                            1
                        } else {
                            -1
                        }
                    } else {
                        let p_plus = (1.0 - s / self.threshold) / 2.0;
                        let z = if self.rng.next_bool(p_plus) { 1 } else { -1 };
                        for (wi, xi) in self.w.iter_mut().zip(x) {
                            *wi += z as f64 * xi;
                        }
                        z
                    }
                };
                if z > 0 {
                    1
                } else {
                    0
                }
            }
            _ => {
                let probs = self.next_probabilities()?;
                let u = self.rng.next_f64();
                let mut acc = 0.0;
                let mut group = probs.len() - 1;
                for (j, pj) in probs.iter().enumerate() {
                    acc += pj;
                    if u < acc {
                        group = j;
                        break;
                    }
                }
                group
            }
        };
        self.counts[group] += 1;
        if self.kind == BaselineKind::CompleteRandomization {
            self.quota[group] -= 1;
        }
        Ok(group)
    }
}

/// Per-group quotas: floor(n p_j) plus one extra for the largest fractional
/// remainders (ties broken toward lower indices) so the total is exactly n.
fn largest_remainder_quotas(p: &[f64], n: usize) -> Vec<u64> {
    let mut quotas: Vec<u64> = p.iter().map(|&v| (n as f64 * v).floor() as u64).collect();
    let assigned: u64 = quotas.iter().sum();
    let mut order: Vec<usize> = (0..p.len()).collect();
    // Descending remainder, ascending index on ties.
    order.sort_by(|&a, &b| {
        let ra = n as f64 * p[a] - (n as f64 * p[a]).floor();
        let rb = n as f64 * p[b] - (n as f64 * p[b]).floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for i in 0..(n as u64 - assigned) as usize {
        quotas[order[i % p.len()]] += 1;
    }
    quotas
}
