//! The weighted balancing walk: streaming +/-1 assignment that steers each
//! arriving unit against the running signed covariate sum.
//!
//! State is the d-vector `w = sum_j eta_j x_j` over the non-fallback steps so
//! far. For an arriving unit x the walk forms the effective inner product
//!
//! ```text
//! s = (1 - phi) * <w, x>
//! ```
//!
//! and, while |s| <= c, draws z = +1 with probability q (1 - s/c), recording
//! the weighted sign eta = 2(1-q) on treatment and -2q on control. The state
//! update is w += eta * x, so E[eta | state] = -2 q s / c and the walk is
//! mean-reverting in every covariate direction.
//!
//! The `phi` rescaling is exactly equivalent to running the plain walk on
//! covariates augmented with a sqrt(phi)-scaled fresh coordinate per unit
//! (and the remaining block scaled by sqrt(1-phi)), without paying the O(n)
//! state: augmented coordinates are orthogonal across units, so they never
//! contribute to a later inner product. `reference::AugmentedWalk`
//! materializes that construction and is held to sign-for-sign agreement in
//! tests.
//!
//! Marginals q > 1/2 run label-swapped: the walk balances the rarer arm with
//! q_eff = 1 - q and un-swaps on output, which keeps every probability in
//! [0, 1] without clamping.

use crate::design::{DesignParams, OverflowPolicy};
use crate::rng::RngStream;
use thiserror::Error;

/// Tolerance on the unit-norm input contract.
pub const INPUT_NORM_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum WalkError {
    #[error("covariate dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("covariate norm {norm} exceeds 1 (tolerance {INPUT_NORM_TOL})")]
    InputNorm { norm: f64 },
    #[error("assignment horizon exhausted: all {horizon} steps already taken")]
    HorizonExceeded { horizon: usize },
}

/// Outcome of one assignment step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Assignment {
    /// +1 treatment, -1 control.
    pub z: i8,
    /// Weighted sign: 2(1-q) when z = +1, -2q when z = -1. Absent only on a
    /// strict-policy overflow step, where the unit is assigned by a plain
    /// q-coin outside the walk's accounting.
    pub eta: Option<f64>,
    /// True when |s| > c was observed on this step (however the policy then
    /// resolved it).
    pub was_overflow: bool,
}

/// Bit-exact image of a walk, used for persistence and for constructing
/// states directly in tests.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkSnapshot {
    pub w: Vec<f64>,
    pub step: usize,
    pub fallback_active: bool,
    pub restarts: u64,
    pub seed: u64,
    pub rng_position: u128,
}

/// Mutable state of one balancing walk.
#[derive(Debug, Clone)]
pub struct WalkState {
    w: Vec<f64>,
    step: usize,
    fallback_active: bool,
    restarts: u64,
    rng: RngStream,
}

impl WalkState {
    pub fn new(d: usize, seed: u64) -> Self {
        Self {
            w: vec![0.0; d],
            step: 0,
            fallback_active: false,
            restarts: 0,
            rng: RngStream::new(seed),
        }
    }

    /// Running signed covariate sum (excludes fallback steps).
    pub fn w(&self) -> &[f64] {
        &self.w
    }

    /// Number of assignments made so far.
    pub fn step(&self) -> usize {
        self.step
    }

    /// Times the restart policy zeroed the state.
    pub fn restarts(&self) -> u64 {
        self.restarts
    }

    /// True once a random-fallback overflow has frozen the state.
    pub fn fallback_active(&self) -> bool {
        self.fallback_active
    }

    fn check_input(&self, x: &[f64]) -> Result<(), WalkError> {
        if x.len() != self.w.len() {
            return Err(WalkError::DimensionMismatch { expected: self.w.len(), got: x.len() });
        }
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1.0 + INPUT_NORM_TOL {
            return Err(WalkError::InputNorm { norm });
        }
        Ok(())
    }

    /// The inner product the walk actually thresholds: (1 - phi) * <w, x>.
    pub fn effective_inner(&self, x: &[f64], params: &DesignParams) -> Result<f64, WalkError> {
        self.check_input(x)?;
        let dot: f64 = self.w.iter().zip(x).map(|(a, b)| a * b).sum();
        Ok((1.0 - params.phi()) * dot)
    }

    /// Independent coin with the target marginal q.
    fn q_coin(&mut self, q: f64) -> i8 {
        if self.rng.next_bool(q) {
            1
        } else {
            -1
        }
    }

    fn eta_for(z: i8, q: f64) -> f64 {
        if z > 0 {
            2.0 * (1.0 - q)
        } else {
            -2.0 * q
        }
    }

    /// Assigns one unit and updates the state.
    ///
    /// Errors if the horizon is exhausted (`step >= n`), the dimension is
    /// wrong, or ||x|| > 1 beyond tolerance; the state is untouched on error.
    pub fn assign(&mut self, x: &[f64], params: &DesignParams) -> Result<Assignment, WalkError> {
        if self.step >= params.n() {
            return Err(WalkError::HorizonExceeded { horizon: params.n() });
        }
        self.check_input(x)?;
        let q = params.q();

        if self.fallback_active {
            // Frozen state: pure q-coin, w untouched.
            let z = self.q_coin(q);
            self.step += 1;
            return Ok(Assignment { z, eta: Some(Self::eta_for(z, q)), was_overflow: false });
        }

        let c = params.threshold();
        let mut s = self.effective_inner(x, params)?;
        let mut was_overflow = false;

        if s.abs() > c {
            was_overflow = true;
            match params.policy() {
                OverflowPolicy::Strict => {
                    // Deterministic drift correction, then a plain q-coin for
                    // the unit itself; no weighted sign is defined.
                    let coeff = -2.0 * params.effective_q() * (s / c);
                    for (wi, xi) in self.w.iter_mut().zip(x) {
                        *wi += coeff * xi;
                    }
                    let z = self.q_coin(q);
                    self.step += 1;
                    return Ok(Assignment { z, eta: None, was_overflow });
                }
                OverflowPolicy::RandomFallback => {
                    self.fallback_active = true;
                    let z = self.q_coin(q);
                    self.step += 1;
                    return Ok(Assignment { z, eta: Some(Self::eta_for(z, q)), was_overflow });
                }
                OverflowPolicy::Restart => {
                    self.w.iter_mut().for_each(|v| *v = 0.0);
                    self.restarts += 1;
                    s = 0.0; // re-run this step against the fresh state
                }
            }
        }

        // Regular draw at |s| <= c. With the label swap the treatment branch
        // is the swapped walk's control branch, so its probability complements
        // q_eff evaluated at -s; algebra keeps both forms in [0, 1].
        let p_plus = if params.label_swap() {
            1.0 - (1.0 - q) * (1.0 + s / c)
        } else {
            q * (1.0 - s / c)
        };
        debug_assert!(
            (-1e-12..=1.0 + 1e-12).contains(&p_plus),
            "assignment probability escaped [0,1]: {p_plus}"
        );
        let z = self.q_coin(p_plus);
        let eta = Self::eta_for(z, q);
        for (wi, xi) in self.w.iter_mut().zip(x) {
            *wi += eta * xi;
        }
        self.step += 1;
        Ok(Assignment { z, eta: Some(eta), was_overflow })
    }

    /// Clears the signed sum and any fallback freeze; the step counter is
    /// preserved. Idempotent.
    pub fn reset(&mut self) {
        self.w.iter_mut().for_each(|v| *v = 0.0);
        self.fallback_active = false;
    }

    pub fn snapshot(&self) -> WalkSnapshot {
        WalkSnapshot {
            w: self.w.clone(),
            step: self.step,
            fallback_active: self.fallback_active,
            restarts: self.restarts,
            seed: self.rng.seed(),
            rng_position: self.rng.position(),
        }
    }

    pub fn from_snapshot(s: &WalkSnapshot) -> Self {
        Self {
            w: s.w.clone(),
            step: s.step,
            fallback_active: s.fallback_active,
            restarts: s.restarts,
            rng: RngStream::restore(s.seed, s.rng_position),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{DesignParams, OverflowPolicy};

    fn params(policy: OverflowPolicy) -> DesignParams {
        DesignParams::new(1000, 2, 0.5, 0.0, 0.05, policy).unwrap()
    }

    /// A state with a chosen w, for driving specific branches.
    fn state_with_w(w: Vec<f64>, seed: u64) -> WalkState {
        WalkState::from_snapshot(&WalkSnapshot {
            w,
            step: 0,
            fallback_active: false,
            restarts: 0,
            seed,
            rng_position: 0,
        })
    }

    #[test]
    fn first_step_is_a_fair_coin_and_updates_w() {
        let p = params(OverflowPolicy::Restart);
        let mut st = WalkState::new(2, 1);
        let a = st.assign(&[1.0, 0.0], &p).unwrap();
        assert!(a.z == 1 || a.z == -1);
        let eta = a.eta.unwrap();
        assert_eq!(eta, if a.z == 1 { 1.0 } else { -1.0 });
        assert_eq!(st.w(), &[eta, 0.0]);
        assert_eq!(st.step(), 1);
        assert!(!a.was_overflow);
    }

    #[test]
    fn sign_mapping_holds_for_every_assignment() {
        for q in [0.2, 0.5, 0.7] {
            let p = DesignParams::new(500, 2, q, 0.3, 0.05, OverflowPolicy::Restart).unwrap();
            let mut st = WalkState::new(2, 17);
            for i in 0..500 {
                let x = [if i % 2 == 0 { 0.8 } else { -0.5 }, 0.3];
                let a = st.assign(&x, &p).unwrap();
                let eta = a.eta.unwrap();
                // z = eta + 2q - 1 up to rounding in the mapping itself.
                assert!((eta + 2.0 * q - 1.0 - a.z as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_bad_inputs_without_touching_state() {
        let p = params(OverflowPolicy::Restart);
        let mut st = WalkState::new(2, 5);
        assert_eq!(
            st.assign(&[1.0], &p),
            Err(WalkError::DimensionMismatch { expected: 2, got: 1 })
        );
        assert!(matches!(
            st.assign(&[1.0, 0.7], &p),
            Err(WalkError::InputNorm { .. })
        ));
        assert_eq!(st.step(), 0);
        assert_eq!(st.w(), &[0.0, 0.0]);
        // Norm exactly 1 and norm within tolerance are both fine.
        st.assign(&[0.6, 0.8], &p).unwrap();
    }

    #[test]
    fn horizon_is_enforced() {
        let p = DesignParams::new(3, 1, 0.5, 0.0, 0.05, OverflowPolicy::Restart).unwrap();
        let mut st = WalkState::new(1, 2);
        for _ in 0..3 {
            st.assign(&[1.0], &p).unwrap();
        }
        assert_eq!(st.assign(&[1.0], &p), Err(WalkError::HorizonExceeded { horizon: 3 }));
    }

    #[test]
    fn zero_covariate_is_a_fresh_coin_and_leaves_w() {
        let p = params(OverflowPolicy::Restart);
        let mut st = state_with_w(vec![3.0, -1.0], 9);
        let a = st.assign(&[0.0, 0.0], &p).unwrap();
        assert!(a.eta.is_some());
        assert_eq!(st.w(), &[3.0, -1.0]); // w + eta * 0 = w
    }

    #[test]
    fn strict_overflow_applies_drift_correction_and_flags() {
        let p = params(OverflowPolicy::Strict);
        let c = p.threshold();
        // s = 2c > c on the first coordinate.
        let mut st = state_with_w(vec![2.0 * c, 0.0], 13);
        let a = st.assign(&[1.0, 0.0], &p).unwrap();
        assert!(a.was_overflow);
        assert_eq!(a.eta, None);
        // w <- w - 2 q_eff (s/c) x with q_eff = 0.5, s/c = 2.
        assert!((st.w()[0] - (2.0 * c - 2.0)).abs() < 1e-12);
        assert_eq!(st.w()[1], 0.0);
        assert_eq!(st.step(), 1);
    }

    #[test]
    fn random_fallback_freezes_state_and_keeps_eta() {
        let p = params(OverflowPolicy::RandomFallback);
        let c = p.threshold();
        let mut st = state_with_w(vec![2.0 * c, 0.0], 21);
        let a = st.assign(&[1.0, 0.0], &p).unwrap();
        assert!(a.was_overflow);
        assert!(a.eta.is_some());
        assert!(st.fallback_active());
        let frozen = st.w().to_vec();
        for _ in 0..10 {
            let b = st.assign(&[0.0, 1.0], &p).unwrap();
            assert!(b.eta.is_some());
            assert!(!b.was_overflow);
        }
        assert_eq!(st.w(), frozen.as_slice());
    }

    #[test]
    fn restart_zeroes_and_reruns_the_step() {
        let p = params(OverflowPolicy::Restart);
        let c = p.threshold();
        let mut st = state_with_w(vec![2.0 * c, 0.0], 33);
        let a = st.assign(&[1.0, 0.0], &p).unwrap();
        assert!(a.was_overflow);
        let eta = a.eta.expect("restart always yields a weighted sign");
        assert_eq!(st.restarts(), 1);
        // After zeroing, the step re-ran from w = 0: w = eta * x.
        assert_eq!(st.w(), &[eta, 0.0]);
    }

    #[test]
    fn reset_clears_w_and_fallback_but_not_step() {
        let p = params(OverflowPolicy::RandomFallback);
        let c = p.threshold();
        let mut st = state_with_w(vec![2.0 * c, 0.0], 41);
        st.assign(&[1.0, 0.0], &p).unwrap();
        assert!(st.fallback_active());
        let step = st.step();
        st.reset();
        assert_eq!(st.w(), &[0.0, 0.0]);
        assert!(!st.fallback_active());
        assert_eq!(st.step(), step);
        let snap = st.snapshot();
        st.reset(); // idempotent
        assert_eq!(st.snapshot(), snap);
    }

    #[test]
    fn effective_inner_applies_the_phi_rescale() {
        let p = DesignParams::new(100, 2, 0.5, 0.3, 0.05, OverflowPolicy::Restart).unwrap();
        let st = state_with_w(vec![1.0, 2.0], 50);
        let s = st.effective_inner(&[0.5, 0.25], &p).unwrap();
        assert!((s - 0.7 * (0.5 + 0.5)).abs() < 1e-15);
    }

    #[test]
    fn snapshot_round_trip_preserves_the_stream() {
        let p = params(OverflowPolicy::Restart);
        let mut st = WalkState::new(2, 77);
        for i in 0..100 {
            let x = [0.1 * ((i % 10) as f64) / 2.0, 0.4];
            st.assign(&x, &p).unwrap();
        }
        let mut resumed = WalkState::from_snapshot(&st.snapshot());
        for i in 0..100 {
            let x = [0.3, -0.2 * ((i % 3) as f64) / 2.0];
            assert_eq!(st.assign(&x, &p).unwrap(), resumed.assign(&x, &p).unwrap());
        }
        assert_eq!(st.w(), resumed.w());
    }

    #[test]
    fn swap_keeps_probabilities_valid_at_the_boundary() {
        // q = 0.9: without the swap, s near -c would ask for p > 1.
        let p = DesignParams::new(1000, 1, 0.9, 0.0, 0.05, OverflowPolicy::Restart).unwrap();
        let c = p.threshold();
        let mut plus = 0u32;
        let reps = 20_000;
        for seed in 0..reps {
            let mut st = state_with_w(vec![-c], 1000 + seed as u64);
            let a = st.assign(&[1.0], &p).unwrap();
            if a.z == 1 {
                plus += 1;
            }
        }
        // At s = -c the swapped walk assigns treatment deterministically.
        assert_eq!(plus, reps);
    }
}
