use ndarray::{Array2, ArrayView2};

use super::{DenseNet, Gradients, LearnError, Scalar};

/// Row-wise softmax restricted to legal entries. `masks` is row-major, one row per logit row.
/// Illegal entries come out as exactly zero.
pub fn masked_softmax<F: Scalar>(logits: ArrayView2<F>, masks: &[bool]) -> Result<Array2<F>, LearnError> {
    let (rows, cols) = logits.dim();
    if masks.len() != rows * cols {
        return Err(LearnError::Shape(format!("mask has {} entries, logits {rows}x{cols}", masks.len())));
    }
    let mut probs = Array2::zeros((rows, cols));
    for (r, (row, mut out)) in logits.outer_iter().zip(probs.outer_iter_mut()).enumerate() {
        let mask = &masks[r * cols..(r + 1) * cols];
        softmax_row(row.as_slice().unwrap_or(&row.to_vec()), mask, out.as_slice_mut().expect("contiguous"))
            .ok_or(LearnError::EmptyMask(r))?;
    }
    Ok(probs)
}

/// Writes the masked softmax of one row into `out`; `None` if nothing is legal.
pub fn softmax_row<F: Scalar>(logits: &[F], mask: &[bool], out: &mut [F]) -> Option<()> {
    let max = logits
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&l, _)| l)
        .fold(None, |acc: Option<F>, l| Some(acc.map_or(l, |a| a.max(l))))?;
    let mut sum = F::zero();
    for ((o, &l), &m) in out.iter_mut().zip(logits).zip(mask) {
        *o = if m { (l - max).exp() } else { F::zero() };
        sum = sum + *o;
    }
    for o in out.iter_mut() {
        *o = *o / sum;
    }
    Some(())
}

/// Index of the largest legal logit, lowest index on ties.
pub fn masked_argmax<F: Scalar>(logits: &[F], mask: &[bool]) -> Option<usize> {
    let mut best: Option<(usize, F)> = None;
    for (i, (&l, &m)) in logits.iter().zip(mask).enumerate() {
        if m && best.is_none_or(|(_, b)| l > b) {
            best = Some((i, l));
        }
    }
    best.map(|(i, _)| i)
}

/// Entropy of a probability row, ignoring zero entries.
pub fn entropy_row<F: Scalar>(probs: &[F]) -> F {
    probs
        .iter()
        .filter(|&&p| p > F::zero())
        .fold(F::zero(), |acc, &p| acc - p * p.ln())
}

fn check_rows<F>(obs: &ArrayView2<F>, masks: &[bool], n: usize, width: usize) -> Result<(), LearnError> {
    if obs.nrows() != n || masks.len() != n * width {
        return Err(LearnError::Shape(format!(
            "batch has {} observations, {} mask entries and {n} targets",
            obs.nrows(),
            masks.len()
        )));
    }
    Ok(())
}

/// Mean categorical cross-entropy of the taken actions plus the number of rows whose masked
/// argmax matched the target.
pub struct CeOutput<F> {
    pub loss: F,
    pub grads: Gradients<F>,
    pub correct: usize,
}

pub fn ce_loss_and_grads<F: Scalar>(
    net: &DenseNet<F>,
    obs: ArrayView2<F>,
    masks: &[bool],
    actions: &[usize],
) -> Result<CeOutput<F>, LearnError> {
    let n = actions.len();
    let width = net.output_dim();
    check_rows(&obs, masks, n, width)?;
    let cache = net.forward_cached(obs);
    let mut d_out = masked_softmax(cache.output.view(), masks)?;
    let scale = F::one() / F::from_f64(n as f64);
    let mut loss = F::zero();
    let mut correct = 0;
    for (r, &a) in actions.iter().enumerate() {
        let mask = &masks[r * width..(r + 1) * width];
        if a >= width || !mask[a] {
            return Err(LearnError::MaskedTarget { row: r, action: a });
        }
        let logits = cache.output.row(r);
        if masked_argmax(logits.as_slice().expect("contiguous"), mask) == Some(a) {
            correct += 1;
        }
        let p = d_out[[r, a]];
        loss = loss - p.ln();
        d_out[[r, a]] = p - F::one();
        d_out.row_mut(r).mapv_inplace(|g| g * scale);
    }
    let grads = net.backward(&cache, d_out);
    Ok(CeOutput { loss: loss * scale, grads, correct })
}

/// Scalar PPO loss terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PpoLosses<F> {
    /// `-mean(min(ρA, clip(ρ, 1-ε, 1+ε)A))`.
    pub policy: F,
    /// Mean squared error of value predictions.
    pub value: F,
    /// Mean entropy over legal actions.
    pub entropy: F,
    /// Fraction of samples where the clipped branch was active.
    pub clip_fraction: F,
}

impl<F: Scalar> PpoLosses<F> {
    /// Policy-network objective: surrogate loss minus the entropy bonus.
    pub fn policy_objective(&self, entropy_coef: F) -> F {
        self.policy - entropy_coef * self.entropy
    }
}

fn surrogate<F: Scalar>(ratio: F, adv: F, clip: F) -> (F, bool) {
    let unclipped = ratio * adv;
    let clipped = ratio.max(F::one() - clip).min(F::one() + clip) * adv;
    if clipped < unclipped {
        (clipped, true)
    } else {
        (unclipped, false)
    }
}

/// PPO loss terms from already-computed probabilities.
///
/// `new_probs` holds full masked probability rows, `old_probs` the behaviour probability of each
/// taken action.
#[allow(clippy::too_many_arguments)]
pub fn ppo_losses<F: Scalar>(
    new_probs: ArrayView2<F>,
    old_probs: &[F],
    actions: &[usize],
    advantages: &[F],
    value_preds: &[F],
    value_targets: &[F],
    clip: F,
) -> Result<PpoLosses<F>, LearnError> {
    let n = actions.len();
    if new_probs.nrows() != n
        || old_probs.len() != n
        || advantages.len() != n
        || value_preds.len() != value_targets.len()
    {
        return Err(LearnError::Shape("ppo_losses inputs disagree in length".into()));
    }
    let mut policy = F::zero();
    let mut entropy = F::zero();
    let mut clipped = 0usize;
    for r in 0..n {
        if !(old_probs[r] > F::zero()) {
            return Err(LearnError::NonPositiveOldProb(r));
        }
        let row = new_probs.row(r);
        let ratio = row[actions[r]] / old_probs[r];
        let (obj, c) = surrogate(ratio, advantages[r], clip);
        policy = policy - obj;
        clipped += c as usize;
        entropy = entropy + entropy_row(row.as_slice().unwrap_or(&row.to_vec()));
    }
    let value = value_preds
        .iter()
        .zip(value_targets)
        .fold(F::zero(), |acc, (&v, &t)| acc + (v - t) * (v - t));
    let nf = F::from_f64(n.max(1) as f64);
    Ok(PpoLosses {
        policy: policy / nf,
        value: value / F::from_f64(value_preds.len().max(1) as f64),
        entropy: entropy / nf,
        clip_fraction: F::from_f64(clipped as f64) / nf,
    })
}

/// One PPO minibatch for the policy network.
pub struct PolicyBatch<'a, F> {
    pub obs: ArrayView2<'a, F>,
    pub masks: &'a [bool],
    pub actions: &'a [usize],
    pub old_log_probs: &'a [F],
    pub advantages: &'a [F],
}

/// Loss and gradients of `surrogate loss - entropy_coef * entropy` for the policy network.
pub fn policy_loss_and_grads<F: Scalar>(
    net: &DenseNet<F>,
    batch: &PolicyBatch<'_, F>,
    clip: F,
    entropy_coef: F,
) -> Result<(PpoLosses<F>, Gradients<F>), LearnError> {
    let n = batch.actions.len();
    let width = net.output_dim();
    check_rows(&batch.obs, batch.masks, n, width)?;
    if batch.old_log_probs.len() != n || batch.advantages.len() != n {
        return Err(LearnError::Shape("old log-probs/advantages length".into()));
    }
    let cache = net.forward_cached(batch.obs);
    let probs = masked_softmax(cache.output.view(), batch.masks)?;
    let nf = F::from_f64(n as f64);
    let mut d_out = Array2::zeros(probs.raw_dim());
    let (mut policy, mut entropy, mut clipped) = (F::zero(), F::zero(), 0usize);
    for r in 0..n {
        let a = batch.actions[r];
        let mask = &batch.masks[r * width..(r + 1) * width];
        if a >= width || !mask[a] {
            return Err(LearnError::MaskedTarget { row: r, action: a });
        }
        let p = probs.row(r);
        let ratio = (p[a].ln() - batch.old_log_probs[r]).exp();
        let adv = batch.advantages[r];
        let (obj, is_clipped) = surrogate(ratio, adv, clip);
        policy = policy - obj;
        // d(-obj)/d(log p_a) is -ρA on the unclipped branch, zero when clipped.
        let g_logp = if is_clipped { F::zero() } else { -ratio * adv };
        clipped += is_clipped as usize;
        let h = entropy_row(p.as_slice().expect("contiguous"));
        entropy = entropy + h;
        let mut d = d_out.row_mut(r);
        for j in 0..width {
            if !mask[j] {
                continue;
            }
            let pj = p[j];
            // d log p_a / d z_j = 1[j = a] - p_j ; dH/dz_j = -p_j (ln p_j + H)
            let dlogp = if j == a { F::one() - pj } else { -pj };
            let dh = if pj > F::zero() { -pj * (pj.ln() + h) } else { F::zero() };
            d[j] = (g_logp * dlogp - entropy_coef * dh) / nf;
        }
    }
    let grads = net.backward(&cache, d_out);
    let losses = PpoLosses {
        policy: policy / nf,
        value: F::zero(),
        entropy: entropy / nf,
        clip_fraction: F::from_f64(clipped as f64) / nf,
    };
    Ok((losses, grads))
}

/// Mean squared error of a value network against `targets`, with gradients.
pub fn value_loss_and_grads<F: Scalar>(
    net: &DenseNet<F>,
    obs: ArrayView2<F>,
    targets: &[F],
) -> Result<(F, Gradients<F>), LearnError> {
    if net.output_dim() != 1 || obs.nrows() != targets.len() {
        return Err(LearnError::Shape("value batch shape".into()));
    }
    let cache = net.forward_cached(obs);
    let nf = F::from_f64(targets.len() as f64);
    let two = F::from_f64(2.0);
    let mut loss = F::zero();
    let mut d_out = Array2::zeros((targets.len(), 1));
    for (r, &t) in targets.iter().enumerate() {
        let diff = cache.output[[r, 0]] - t;
        loss = loss + diff * diff;
        d_out[[r, 0]] = two * diff / nf;
    }
    let grads = net.backward(&cache, d_out);
    Ok((loss / nf, grads))
}

/// Generalized advantage estimation over a flat sequence of steps.
///
/// `dones[t]` marks that the episode ended after step `t`; the value after a terminal step is
/// zero. `last_value` bootstraps a trailing unfinished episode. Returns `(advantages, targets)`
/// with `targets = advantages + values`.
pub fn gae<F: Scalar>(
    rewards: &[F],
    values: &[F],
    dones: &[bool],
    last_value: F,
    gamma: F,
    lambda: F,
) -> Result<(Vec<F>, Vec<F>), LearnError> {
    let n = rewards.len();
    if values.len() != n || dones.len() != n {
        return Err(LearnError::Shape(format!(
            "gae: {n} rewards, {} values, {} dones",
            values.len(),
            dones.len()
        )));
    }
    let mut adv = vec![F::zero(); n];
    let mut next_value = last_value;
    let mut next_adv = F::zero();
    for t in (0..n).rev() {
        if dones[t] {
            next_value = F::zero();
            next_adv = F::zero();
        }
        let delta = rewards[t] + gamma * next_value - values[t];
        next_adv = delta + gamma * lambda * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    let targets = adv.iter().zip(values).map(|(&a, &v)| a + v).collect();
    Ok((adv, targets))
}
