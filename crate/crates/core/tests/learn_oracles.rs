mod common;

use common::*;
use locm_core::learn::*;
use ndarray::{Array2, ArrayView2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-4;

fn log_probs(net: &DenseNet<f64>, b: &Batch) -> Vec<f64> {
    let p = masked_softmax(net.forward(b.x.view()).view(), &b.masks).unwrap();
    b.actions.iter().enumerate().map(|(r, &a)| p[[r, a]].ln()).collect()
}

#[test]
fn cross_entropy_gradient_matches_finite_differences() {
    let b = batch(1);
    let n = net(ACTIONS, Head::Policy, 2);
    let err = max_rel_error(&n, |m| {
        let o = ce_loss_and_grads(m, b.x.view(), &b.masks, &b.actions).unwrap();
        (o.loss, o.grads)
    });
    assert!(err <= TOL, "max relative error {err:e}");
}

#[test]
fn ppo_policy_gradient_matches_finite_differences() {
    let b = batch(3);
    let n = net(ACTIONS, Head::Policy, 4);
    // Old policy from a nearby network so ratios straddle 1 with some clipped rows.
    let mut old = n.clone();
    old.biases[1].mapv_inplace(|v| v + 0.3);
    let old_lp = log_probs(&old, &b);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let adv: Vec<f64> = (0..ROWS).map(|_| rng.random_range(-2.0..2.0)).collect();
    let run = |m: &DenseNet<f64>, coef: f64| {
        let pb = PolicyBatch { obs: b.x.view(), masks: &b.masks, actions: &b.actions, old_log_probs: &old_lp, advantages: &adv };
        let (l, g) = policy_loss_and_grads(m, &pb, 0.2, coef).unwrap();
        (l.policy_objective(coef), g)
    };
    let err = max_rel_error(&n, |m| run(m, 0.0));
    assert!(err <= TOL, "surrogate: max relative error {err:e}");
    let err = max_rel_error(&n, |m| run(m, 0.01));
    assert!(err <= TOL, "surrogate + entropy: max relative error {err:e}");
}

#[test]
fn entropy_gradient_matches_finite_differences() {
    let b = batch(6);
    let n = net(ACTIONS, Head::Policy, 7);
    let lp = log_probs(&n, &b);
    let zero = vec![0.0; ROWS];
    let err = max_rel_error(&n, |m| {
        let pb = PolicyBatch { obs: b.x.view(), masks: &b.masks, actions: &b.actions, old_log_probs: &lp, advantages: &zero };
        let (l, g) = policy_loss_and_grads(m, &pb, 0.2, 1.0).unwrap();
        (-l.entropy, g)
    });
    assert!(err <= TOL, "max relative error {err:e}");
}

#[test]
fn value_gradient_matches_finite_differences() {
    let b = batch(8);
    let n = net(1, Head::Value, 9);
    let targets: Vec<f64> = (0..ROWS).map(|i| [-1.0, 0.0, 1.0][i % 3]).collect();
    let err = max_rel_error(&n, |m| value_loss_and_grads(m, b.x.view(), &targets).unwrap());
    assert!(err <= TOL, "max relative error {err:e}");
}

/// A_t = Σ_k (γλ)^k δ_{t+k}, summed forward until the episode ends.
fn gae_forward_sum(r: &[f64], v: &[f64], done: &[bool], last: f64, g: f64, l: f64) -> Vec<f64> {
    let n = r.len();
    let next_v = |t: usize| {
        if done[t] {
            0.0
        } else if t + 1 < n {
            v[t + 1]
        } else {
            last
        }
    };
    (0..n)
        .map(|t| {
            let mut a = 0.0;
            let mut w = 1.0;
            for k in t..n {
                a += w * (r[k] + g * next_v(k) - v[k]);
                if done[k] {
                    break;
                }
                w *= g * l;
            }
            a
        })
        .collect()
}

proptest! {
    #[test]
    fn gae_matches_forward_sum(
        steps in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0, prop::bool::weighted(0.15)), 1..60),
        last in -1.0f64..1.0,
        g in 0.5f64..1.0,
        l in 0.0f64..1.0,
    ) {
        let r: Vec<f64> = steps.iter().map(|s| s.0).collect();
        let v: Vec<f64> = steps.iter().map(|s| s.1).collect();
        let d: Vec<bool> = steps.iter().map(|s| s.2).collect();
        let (adv, targets) = gae(&r, &v, &d, last, g, l).unwrap();
        let want = gae_forward_sum(&r, &v, &d, last, g, l);
        for t in 0..r.len() {
            prop_assert!((adv[t] - want[t]).abs() < 1e-9, "t={} {} vs {}", t, adv[t], want[t]);
            prop_assert!((targets[t] - adv[t] - v[t]).abs() < 1e-12);
        }
    }

    #[test]
    fn ppo_losses_match_elementwise_oracle(
        rows in prop::collection::vec((0.01f64..1.0, 0.01f64..1.0, -3.0f64..3.0, -2.0f64..2.0, -2.0f64..2.0), 1..20),
        clip in 0.05f64..0.5,
    ) {
        // Two-action rows: the taken action has probability p, the other 1 - p.
        let n = rows.len();
        let probs = Array2::from_shape_fn((n, 2), |(r, j)| if j == 0 { rows[r].0 } else { 1.0 - rows[r].0 });
        let old: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let adv: Vec<f64> = rows.iter().map(|r| r.2).collect();
        let vp: Vec<f64> = rows.iter().map(|r| r.3).collect();
        let vt: Vec<f64> = rows.iter().map(|r| r.4).collect();
        let l = ppo_losses(probs.view(), &old, &vec![0; n], &adv, &vp, &vt, clip).unwrap();
        let (mut pol, mut ent, mut val, mut clipped) = (0.0, 0.0, 0.0, 0.0);
        for r in &rows {
            let rho = r.0 / r.1;
            let unclipped = rho * r.2;
            let c = rho.clamp(1.0 - clip, 1.0 + clip) * r.2;
            pol -= unclipped.min(c);
            if c < unclipped {
                clipped += 1.0;
            }
            let q = 1.0 - r.0;
            ent -= r.0 * r.0.ln() + if q > 0.0 { q * q.ln() } else { 0.0 };
            val += (r.3 - r.4).powi(2);
        }
        let nf = n as f64;
        prop_assert!((l.policy - pol / nf).abs() < 1e-12);
        prop_assert!((l.entropy - ent / nf).abs() < 1e-12);
        prop_assert!((l.value - val / nf).abs() < 1e-12);
        prop_assert!((l.clip_fraction - clipped / nf).abs() < 1e-12);
    }

    #[test]
    fn masked_softmax_is_a_distribution_over_legal_actions(
        logits in prop::collection::vec(-30.0f64..30.0, 12),
        mask in prop::collection::vec(any::<bool>(), 12),
    ) {
        let x = ArrayView2::from_shape((1, 12), &logits).unwrap();
        match masked_softmax(x, &mask) {
            Err(_) => prop_assert!(mask.iter().all(|m| !m)),
            Ok(p) => {
                prop_assert!((p.sum() - 1.0).abs() < 1e-12);
                for j in 0..12 {
                    prop_assert!(mask[j] || p[[0, j]] == 0.0);
                    prop_assert!(p[[0, j]] >= 0.0);
                }
                let best = masked_argmax(&logits, &mask).unwrap();
                prop_assert!(mask[best]);
            }
        }
    }

    #[test]
    fn adam_step_matches_closed_form(g in prop::collection::vec(-5.0f64..5.0, 1..10), lr in 1e-4f64..1e-1) {
        // After one step from zero moments the update is lr * g / (|g| + eps).
        let mut p = vec![0.0; g.len()];
        let mut adam = AdamState::new(g.len(), lr);
        adam.step_slice(&mut p, &g).unwrap();
        for (pi, gi) in p.iter().zip(&g) {
            let want = -lr * gi / (gi.abs() + 1e-8);
            prop_assert!((pi - want).abs() < 1e-12);
        }
    }

    #[test]
    fn checkpoints_round_trip_bit_exactly(seed in any::<u64>()) {
        let n: DenseNet<f32> = DenseNet::new(&[OBS, 4, ACTIONS], Head::Policy, &mut ChaCha8Rng::seed_from_u64(seed));
        let ck = Checkpoint::from_net(&n, Some(&AdamState::for_net(&n, 1e-3)), CheckpointMeta { iteration: seed, ..Default::default() });
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        prop_assert_eq!(back.net().unwrap(), n);
        prop_assert_eq!(back, ck);
    }
}
