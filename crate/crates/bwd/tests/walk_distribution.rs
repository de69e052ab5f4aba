//! Distributional checks on the walk: marginal fidelity, the conditional
//! mean-reversion drift, rarity of threshold crossings in regular runs, and
//! reconstruction of the internal state from the public per-step outputs.

use bwd::dgp::{self, DgpKind};
use bwd::rng::child_seed;
use bwd::walk::WalkSnapshot;
use bwd::{DesignParams, OverflowPolicy, WalkState};

#[test]
fn pooled_treatment_share_matches_the_target_marginal() {
    let n = 500;
    let runs = 200;
    for (qi, &q) in [0.2, 0.5, 0.7].iter().enumerate() {
        let params = DesignParams::new(n, 4, q, 0.3, 0.05, OverflowPolicy::Restart).unwrap();
        let sample = dgp::generate(DgpKind::Linear, n, child_seed(11, qi as u64), 2);
        let mut plus = 0u64;
        for r in 0..runs {
            let mut walk = WalkState::new(4, child_seed(child_seed(12, qi as u64), r));
            for i in 0..n {
                if walk.assign(sample.covariates(i), &params).unwrap().z == 1 {
                    plus += 1;
                }
            }
        }
        let share = plus as f64 / (n * runs as usize) as f64;
        // 1e5 pooled draws: the iid standard error is ~0.0016, and the walk's
        // within-run negative correlation only tightens it.
        assert!(
            (share - q).abs() < 0.01,
            "pooled share {share} strays from q = {q}"
        );
    }
}

/// Plants the state so the walk sees a chosen s, then measures the average
/// weighted sign over many fresh draws. The drift must be -2 min(q, 1-q) s/c
/// on both sides of the label swap.
#[test]
fn conditional_drift_matches_minus_two_q_s_over_c() {
    let reps = 40_000u64;
    for (qi, &q) in [0.3, 0.5, 0.7].iter().enumerate() {
        let params = DesignParams::new(100, 1, q, 0.0, 0.05, OverflowPolicy::Restart).unwrap();
        let c = params.threshold();
        let q_eff = q.min(1.0 - q);
        for (ri, &ratio) in [-0.8, -0.3, 0.4].iter().enumerate() {
            let mut sum = 0.0;
            for r in 0..reps {
                let snap = WalkSnapshot {
                    w: vec![ratio * c],
                    step: 0,
                    fallback_active: false,
                    restarts: 0,
                    seed: child_seed(child_seed(31, (qi * 3 + ri) as u64), r),
                    rng_position: 0,
                };
                let mut walk = WalkState::from_snapshot(&snap);
                sum += walk.assign(&[1.0], &params).unwrap().eta.unwrap();
            }
            let want = -2.0 * q_eff * ratio;
            let got = sum / reps as f64;
            // |eta| <= 2, so the standard error is at most 2/sqrt(reps) = 0.01.
            assert!(
                (got - want).abs() < 0.04,
                "q={q}, s/c={ratio}: mean eta {got}, want {want}"
            );
        }
    }
}

#[test]
fn threshold_crossings_are_rare_and_restart_always_defines_eta() {
    let n = 1000;
    let runs = 300;
    let params = DesignParams::new(n, 4, 0.5, 0.0, 0.05, OverflowPolicy::Restart).unwrap();
    let sample = dgp::generate(DgpKind::Linear, n, 2024, 2);
    let mut runs_with_overflow = 0u32;
    for r in 0..runs {
        let mut walk = WalkState::new(4, child_seed(57, r));
        let mut any = false;
        for i in 0..n {
            let a = walk.assign(sample.covariates(i), &params).unwrap();
            assert!(a.eta.is_some(), "restart left an assignment without a weighted sign");
            any |= a.was_overflow;
        }
        runs_with_overflow += u32::from(any);
    }
    // The failure budget is delta = 0.05 per run; leave binomial headroom.
    assert!(
        f64::from(runs_with_overflow) / runs as f64 <= 0.10,
        "overflow in {runs_with_overflow}/{runs} runs"
    );
}

/// Replays the public outputs (eta, was_overflow) through the documented
/// state equation and demands the reconstruction agree with the walk's own w,
/// for each policy, including through forced threshold crossings.
#[test]
fn state_is_reconstructible_from_outputs() {
    for policy in [OverflowPolicy::Restart, OverflowPolicy::Strict, OverflowPolicy::RandomFallback]
    {
        let d = 200;
        let n = d + 3;
        let params = DesignParams::new(n, d, 0.5, 0.0, 0.9, policy).unwrap();
        let c = params.threshold();
        let mut walk = WalkState::new(d, child_seed(99, policy as u64));
        let mut shadow = vec![0.0f64; d];
        let mut frozen = false;

        let feed = |walk: &mut WalkState, shadow: &mut Vec<f64>, frozen: &mut bool, x: &[f64]| {
            let s = (1.0 - params.phi()) * shadow.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            let a = walk.assign(x, &params).unwrap();
            if *frozen {
                assert!(!a.was_overflow);
                return;
            }
            if a.was_overflow {
                match policy {
                    OverflowPolicy::Strict => {
                        let coeff = -2.0 * params.effective_q() * (s / c);
                        for (w, xi) in shadow.iter_mut().zip(x) {
                            *w += coeff * xi;
                        }
                        assert_eq!(a.eta, None);
                        return;
                    }
                    OverflowPolicy::RandomFallback => {
                        *frozen = true;
                        return;
                    }
                    OverflowPolicy::Restart => shadow.iter_mut().for_each(|v| *v = 0.0),
                }
            }
            let eta = a.eta.unwrap();
            for (w, xi) in shadow.iter_mut().zip(x) {
                *w += eta * xi;
            }
        };

        // Basis feeds build ||w|| = sqrt(d) > c, then an aligned unit forces
        // the crossing; two ordinary steps follow.
        for t in 0..d {
            let mut e = vec![0.0; d];
            e[t] = 1.0;
            feed(&mut walk, &mut shadow, &mut frozen, &e);
        }
        let norm = shadow.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm > c, "construction must cross the threshold");
        let aligned: Vec<f64> = shadow.iter().map(|v| v / norm).collect();
        feed(&mut walk, &mut shadow, &mut frozen, &aligned);
        for t in 0..2 {
            let mut e = vec![0.0; d];
            e[t] = 1.0;
            feed(&mut walk, &mut shadow, &mut frozen, &e);
        }

        for (i, (got, want)) in walk.w().iter().zip(&shadow).enumerate() {
            assert!(
                (got - want).abs() < 1e-9,
                "{policy}: w[{i}] = {got}, reconstruction says {want}"
            );
        }
    }
}

/// Snapshot taken right after a restart event must resume bit-exactly.
#[test]
fn resume_after_a_policy_event_is_bit_exact() {
    let d = 200;
    let n = d + 40;
    let params = DesignParams::new(n, d, 0.5, 0.0, 0.9, OverflowPolicy::Restart).unwrap();
    let mut walk = WalkState::new(d, 7007);
    for t in 0..d {
        let mut e = vec![0.0; d];
        e[t] = 1.0;
        walk.assign(&e, &params).unwrap();
    }
    let w = walk.w().to_vec();
    let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    let aligned: Vec<f64> = w.iter().map(|v| v / norm).collect();
    let a = walk.assign(&aligned, &params).unwrap();
    assert!(a.was_overflow);
    assert_eq!(walk.restarts(), 1);

    let snap = walk.snapshot();
    let mut resumed = WalkState::from_snapshot(&snap);
    for t in 0..30 {
        let mut e = vec![0.0; d];
        e[(t * 7) % d] = 1.0;
        assert_eq!(
            walk.assign(&e, &params).unwrap(),
            resumed.assign(&e, &params).unwrap()
        );
    }
    assert_eq!(walk.w(), resumed.w());
    assert_eq!(walk.restarts(), resumed.restarts());
}
