//! Effect estimation and the metrics every design is scored on.
//!
//! The estimator is the inverse-probability difference in means
//!
//! ```text
//! tau_hat = (1/n) * sum_i (z_i / p_i) * Y_i,   p_i = q if z_i = +1 else 1-q
//! ```
//!
//! which satisfies the exact decomposition
//! `tau_hat - tau = (2/n) * sum_i eta_i * mu_i` with
//! `mu_i = y_i(1)/(4q) + y_i(0)/(4(1-q))` and eta the centered signs
//! z - (2q - 1); tests hold the implementation to that identity at 1e-9.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("empty input")]
    EmptyInput,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("probability out of range: {0}")]
    InvalidProbability(f64),
    #[error("need at least {need} replications, got {got}")]
    TooFewReplications { need: usize, got: usize },
}

/// Inverse-probability estimate of the treatment-control mean difference.
pub fn dim_estimate(z: &[i8], y_obs: &[f64], q: f64) -> Result<f64, MetricsError> {
    if z.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    if z.len() != y_obs.len() {
        return Err(MetricsError::LengthMismatch { left: z.len(), right: y_obs.len() });
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(MetricsError::InvalidProbability(q));
    }
    let sum: f64 = z
        .iter()
        .zip(y_obs)
        .map(|(&zi, &yi)| {
            let p = if zi > 0 { q } else { 1.0 - q };
            zi as f64 * yi / p
        })
        .sum();
    Ok(sum / z.len() as f64)
}

/// Inverse-probability contrasts of every arm against arm 0, for k-arm
/// assignments with target probabilities `p`.
pub fn dim_estimate_contrasts(
    groups: &[usize],
    y_obs: &[f64],
    p: &[f64],
) -> Result<Vec<f64>, MetricsError> {
    if groups.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    if groups.len() != y_obs.len() {
        return Err(MetricsError::LengthMismatch { left: groups.len(), right: y_obs.len() });
    }
    if p.len() < 2 || p.iter().any(|&v| !(v > 0.0 && v < 1.0)) {
        return Err(MetricsError::InvalidProbability(*p.first().unwrap_or(&f64::NAN)));
    }
    let n = groups.len() as f64;
    let mut sums = vec![0.0; p.len()];
    for (&g, &y) in groups.iter().zip(y_obs) {
        if g >= p.len() {
            return Err(MetricsError::InvalidProbability(g as f64));
        }
        sums[g] += y / p[g];
    }
    Ok((1..p.len()).map(|a| (sums[a] - sums[0]) / n).collect())
}

/// True sample contrast of arm `a` versus arm `b` from full potential
/// outcomes (`y` row-major n x arms).
pub fn sate_true(y: &[f64], arms: usize, a: usize, b: usize) -> Result<f64, MetricsError> {
    if y.is_empty() || arms == 0 || y.len() % arms != 0 {
        return Err(MetricsError::EmptyInput);
    }
    if a >= arms || b >= arms {
        return Err(MetricsError::LengthMismatch { left: a.max(b), right: arms });
    }
    let n = y.len() / arms;
    let sum: f64 = (0..n).map(|i| y[i * arms + a] - y[i * arms + b]).sum();
    Ok(sum / n as f64)
}

/// L2 and L-infinity norms of the eta-weighted covariate sum (x row-major
/// n x d).
pub fn imbalance(eta: &[f64], x: &[f64], d: usize) -> Result<(f64, f64), MetricsError> {
    if eta.is_empty() || d == 0 {
        return Err(MetricsError::EmptyInput);
    }
    if x.len() != eta.len() * d {
        return Err(MetricsError::LengthMismatch { left: x.len(), right: eta.len() * d });
    }
    let mut sum = vec![0.0; d];
    for (i, &e) in eta.iter().enumerate() {
        for (acc, &xi) in sum.iter_mut().zip(&x[i * d..(i + 1) * d]) {
            *acc += e * xi;
        }
    }
    let l2 = sum.iter().map(|v| v * v).sum::<f64>().sqrt();
    let linf = sum.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok((l2, linf))
}

/// Entropy of the empirical group shares, normalized by ln k into [0, 1].
pub fn entropy_normalized(counts: &[u64]) -> Result<f64, MetricsError> {
    if counts.len() < 2 {
        return Err(MetricsError::EmptyInput);
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(MetricsError::EmptyInput);
    }
    let mut h = 0.0;
    for &c in counts {
        if c > 0 {
            let p = c as f64 / total as f64;
            h -= p * p.ln();
        }
    }
    Ok((h / (counts.len() as f64).ln()).clamp(0.0, 1.0))
}

/// The direction the estimator error projects onto:
/// mu_i = y_i(1)/(4q) + y_i(0)/(4(1-q)). At q = 1/2 this is the average of
/// the two potential outcomes.
pub fn mu_vector(y0: &[f64], y1: &[f64], q: f64) -> Result<Vec<f64>, MetricsError> {
    if y0.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    if y0.len() != y1.len() {
        return Err(MetricsError::LengthMismatch { left: y0.len(), right: y1.len() });
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(MetricsError::InvalidProbability(q));
    }
    Ok(y0
        .iter()
        .zip(y1)
        .map(|(&a, &b)| b / (4.0 * q) + a / (4.0 * (1.0 - q)))
        .collect())
}

/// Balance envelope for one walk: the high-probability bound on the L2 norm
/// of the eta-weighted covariate sum, as a function of the design parameters.
/// Requires phi in (0, 1).
pub fn balance_bound(q: f64, d: usize, n: usize, delta: f64, phi: f64) -> f64 {
    assert!(phi > 0.0 && phi < 1.0, "the balance envelope needs phi in (0,1)");
    let q_eff = q.min(1.0 - q);
    let factor = (1.0 / q_eff).min(crate::design::THRESHOLD_FACTOR_CAP);
    factor
        * (d as f64 * (4.0 * d as f64 / delta).ln() * (4.0 * n as f64 / delta).ln()
            / (2.0 * (1.0 - phi) * phi))
            .sqrt()
}

/// Everything recorded about one replication of one design.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationRecord {
    /// Estimated contrast of each arm versus arm 0.
    pub tau_hat: Vec<f64>,
    /// True contrast of each arm versus arm 0.
    pub tau_true: Vec<f64>,
    pub imbalance_l2: f64,
    pub imbalance_linf: f64,
    pub multi_discrepancy: f64,
    pub group_counts: Vec<u64>,
    pub overflow_count: u64,
    pub runtime_ns: u64,
}

/// Aggregate view over replications.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub replications: usize,
    /// Mean error of the first contrast.
    pub bias: f64,
    /// Mean squared error of the first contrast.
    pub mse: f64,
    /// Mean over arms of per-arm squared error (equals `mse` for k = 2).
    pub mise: f64,
    pub median_imbalance_l2: f64,
    pub median_imbalance_linf: f64,
    pub median_multi_discrepancy: f64,
    pub mean_entropy: f64,
    /// Fraction of replications with at least one overflow.
    pub violation_rate: f64,
    pub runtime_mean_ns: f64,
    pub runtime_p50_ns: f64,
    pub runtime_p90_ns: f64,
    pub runtime_p99_ns: f64,
}

/// Percentile with linear interpolation between order statistics.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    if sorted.len() == 1 {
        return sorted[0];
    }
    let rank = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

fn median(values: &mut Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    percentile(values, 0.5)
}

pub fn aggregate(records: &[ReplicationRecord]) -> Result<Summary, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let r = records.len() as f64;
    let mut bias = 0.0;
    let mut mse = 0.0;
    let mut mise = 0.0;
    let mut entropy = 0.0;
    let mut violations = 0usize;
    for rec in records {
        let e0 = rec.tau_hat[0] - rec.tau_true[0];
        bias += e0;
        mse += e0 * e0;
        let arm_err: f64 = rec
            .tau_hat
            .iter()
            .zip(&rec.tau_true)
            .map(|(h, t)| (h - t) * (h - t))
            .sum::<f64>()
            / rec.tau_hat.len() as f64;
        mise += arm_err;
        entropy += entropy_normalized(&rec.group_counts)?;
        if rec.overflow_count > 0 {
            violations += 1;
        }
    }
    let mut l2: Vec<f64> = records.iter().map(|rec| rec.imbalance_l2).collect();
    let mut linf: Vec<f64> = records.iter().map(|rec| rec.imbalance_linf).collect();
    let mut disc: Vec<f64> = records.iter().map(|rec| rec.multi_discrepancy).collect();
    let mut times: Vec<f64> = records.iter().map(|rec| rec.runtime_ns as f64).collect();
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(Summary {
        replications: records.len(),
        bias: bias / r,
        mse: mse / r,
        mise: mise / r,
        median_imbalance_l2: median(&mut l2),
        median_imbalance_linf: median(&mut linf),
        median_multi_discrepancy: median(&mut disc),
        mean_entropy: entropy / r,
        violation_rate: violations as f64 / r,
        runtime_mean_ns: times.iter().sum::<f64>() / r,
        runtime_p50_ns: percentile(&times, 0.50),
        runtime_p90_ns: percentile(&times, 0.90),
        runtime_p99_ns: percentile(&times, 0.99),
    })
}

/// Sample covariance of repeated sign vectors from `draw(rep)`, plus its
/// largest eigenvalue by power iteration (1e-8 relative tolerance).
///
/// Meant for small n (the matrix is dense n x n).
pub fn empirical_z_covariance(
    n: usize,
    reps: usize,
    mut draw: impl FnMut(usize) -> Vec<i8>,
) -> Result<(Vec<f64>, f64), MetricsError> {
    if n == 0 {
        return Err(MetricsError::EmptyInput);
    }
    if reps < 2 {
        return Err(MetricsError::TooFewReplications { need: 2, got: reps });
    }
    let mut samples: Vec<Vec<i8>> = Vec::with_capacity(reps);
    for r in 0..reps {
        let z = draw(r);
        if z.len() != n {
            return Err(MetricsError::LengthMismatch { left: z.len(), right: n });
        }
        samples.push(z);
    }
    let mut mean = vec![0.0; n];
    for z in &samples {
        for (m, &zi) in mean.iter_mut().zip(z) {
            *m += zi as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= reps as f64);
    let mut cov = vec![0.0; n * n];
    let mut centered = vec![0.0; n];
    for z in &samples {
        for i in 0..n {
            centered[i] = z[i] as f64 - mean[i];
        }
        for i in 0..n {
            let ci = centered[i];
            for j in i..n {
                cov[i * n + j] += ci * centered[j];
            }
        }
    }
    let denom = (reps - 1) as f64;
    for i in 0..n {
        for j in i..n {
            let v = cov[i * n + j] / denom;
            cov[i * n + j] = v;
            cov[j * n + i] = v;
        }
    }
    let lambda = power_iteration(&cov, n, 1e-8);
    Ok((cov, lambda))
}

/// Largest eigenvalue of a symmetric positive semidefinite matrix (row-major
/// n x n) by power iteration, to a relative tolerance on the Rayleigh
/// quotient. Returns 0 for the zero matrix.
pub fn power_iteration(mat: &[f64], n: usize, tol: f64) -> f64 {
    assert_eq!(mat.len(), n * n);
    // Deterministic start with energy in every index pattern.
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.01 * (i % 7) as f64).collect();
    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    v.iter_mut().for_each(|a| *a /= norm);
    let mut av = vec![0.0; n];
    let mut lambda = 0.0;
    for _ in 0..100_000 {
        for i in 0..n {
            av[i] = mat[i * n..(i + 1) * n].iter().zip(&v).map(|(m, x)| m * x).sum();
        }
        let new_lambda: f64 = v.iter().zip(&av).map(|(a, b)| a * b).sum();
        let av_norm = av.iter().map(|a| a * a).sum::<f64>().sqrt();
        if av_norm == 0.0 {
            return 0.0;
        }
        for i in 0..n {
            v[i] = av[i] / av_norm;
        }
        if (new_lambda - lambda).abs() <= tol * new_lambda.abs().max(1e-300) {
            return new_lambda;
        }
        lambda = new_lambda;
    }
    lambda
}
