//! Design parameters shared by every balancing walk.
//!
//! The threshold is
//!
//! ```text
//! c = min(1/q_eff, 9.3) * ln(2n / delta),      q_eff = min(q, 1 - q)
//! ```
//!
//! with natural logarithms throughout. Marginal probabilities above one half
//! run through an internal label swap (the walk balances the rarer arm), so
//! only `q_eff` ever enters the threshold.

use thiserror::Error;

/// Cap on the 1/q factor in the threshold. Beyond this point the walk relies
/// on the sub-exponential tail regime instead of growing the threshold.
pub const THRESHOLD_FACTOR_CAP: f64 = 9.3;

/// Sub-Gaussian tail constant used in the concentration envelope.
pub const TAIL_CONSTANT_A: f64 = 0.5803;
/// Companion constant; `alpha = 2 / B` is the sub-exponential scale.
pub const TAIL_CONSTANT_B: f64 = 0.4310;

/// What to do on the measure-zero event that |s| overshoots the threshold c.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OverflowPolicy {
    /// Apply the deterministic drift correction to w and assign the unit by a
    /// fresh q-coin. The step is flagged and carries no weighted sign.
    Strict,
    /// Freeze w and assign this and every remaining unit by independent
    /// q-coins.
    RandomFallback,
    /// Zero w and re-run the step against the fresh state; assignments stay
    /// well-defined with probability one.
    #[default]
    Restart,
}

impl OverflowPolicy {
    pub fn as_str(&self) -> &'static str {
        match self {
            OverflowPolicy::Strict => "strict",
            OverflowPolicy::RandomFallback => "random-fallback",
            OverflowPolicy::Restart => "restart",
        }
    }
}

impl std::fmt::Display for OverflowPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for OverflowPolicy {
    type Err = DesignError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "strict" => Ok(OverflowPolicy::Strict),
            "random-fallback" | "random_fallback" | "fallback" => Ok(OverflowPolicy::RandomFallback),
            "restart" => Ok(OverflowPolicy::Restart),
            _ => Err(DesignError::UnknownPolicy(s.to_string())),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum DesignError {
    #[error("parameter `{field}` out of range: got {value}, need {requirement}")]
    OutOfRange { field: &'static str, value: f64, requirement: &'static str },
    #[error("unknown overflow policy `{0}` (strict | random-fallback | restart)")]
    UnknownPolicy(String),
}

/// Validated parameters for one walk.
#[derive(Debug, Clone)]
pub struct DesignParams {
    n: usize,
    d: usize,
    q: f64,
    phi: f64,
    delta: f64,
    policy: OverflowPolicy,
    // Derived once at construction.
    c: f64,
    q_eff: f64,
    swapped: bool,
}

impl DesignParams {
    /// Validates ranges and precomputes the threshold.
    ///
    /// `n` is the expected assignment horizon, `d` the covariate dimension,
    /// `q` the target marginal P(z = +1), `phi` the robustness mix in [0, 1),
    /// `delta` the failure budget in (0, 1).
    pub fn new(
        n: usize,
        d: usize,
        q: f64,
        phi: f64,
        delta: f64,
        policy: OverflowPolicy,
    ) -> Result<Self, DesignError> {
        if n < 1 {
            return Err(DesignError::OutOfRange {
                field: "n",
                value: n as f64,
                requirement: "n >= 1",
            });
        }
        if d < 1 {
            return Err(DesignError::OutOfRange {
                field: "d",
                value: d as f64,
                requirement: "d >= 1",
            });
        }
        if !(q > 0.0 && q < 1.0) || !q.is_finite() {
            return Err(DesignError::OutOfRange {
                field: "q",
                value: q,
                requirement: "0 < q < 1",
            });
        }
        if !(0.0..1.0).contains(&phi) || !phi.is_finite() {
            return Err(DesignError::OutOfRange {
                field: "phi",
                value: phi,
                requirement: "0 <= phi < 1",
            });
        }
        if !(delta > 0.0 && delta < 1.0) || !delta.is_finite() {
            return Err(DesignError::OutOfRange {
                field: "delta",
                value: delta,
                requirement: "0 < delta < 1",
            });
        }
        let q_eff = q.min(1.0 - q);
        let c = (1.0 / q_eff).min(THRESHOLD_FACTOR_CAP) * (2.0 * n as f64 / delta).ln();
        Ok(Self { n, d, q, phi, delta, policy, c, q_eff, swapped: q > 0.5 })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Target marginal probability of z = +1.
    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn policy(&self) -> OverflowPolicy {
        self.policy
    }

    /// Threshold c on the effective inner product.
    pub fn threshold(&self) -> f64 {
        self.c
    }

    /// min(q, 1 - q): the marginal the walk actually balances.
    pub fn effective_q(&self) -> f64 {
        self.q_eff
    }

    /// True when q > 1/2 and the walk runs label-swapped internally.
    pub fn label_swap(&self) -> bool {
        self.swapped
    }
}

/// Concentration envelope of a parameterized walk: the per-direction variance
/// proxy `sigma_sq` plus the tail constants it is built from.
#[derive(Debug, Clone, Copy)]
pub struct ConcentrationConstants {
    pub a: f64,
    pub b: f64,
    /// Sub-exponential scale 2 / B.
    pub alpha: f64,
    /// Variance proxy: c / (2 q_eff) in the sub-Gaussian regime
    /// (1/q_eff <= 9.3), 12 * A * c in the capped regime.
    pub sigma_sq: f64,
}

impl ConcentrationConstants {
    pub fn for_design(params: &DesignParams) -> Self {
        let c = params.threshold();
        let q_eff = params.effective_q();
        let sigma_sq = if 1.0 / q_eff <= THRESHOLD_FACTOR_CAP {
            c / (2.0 * q_eff)
        } else {
            12.0 * TAIL_CONSTANT_A * c
        };
        Self { a: TAIL_CONSTANT_A, b: TAIL_CONSTANT_B, alpha: 2.0 / TAIL_CONSTANT_B, sigma_sq }
    }
}
