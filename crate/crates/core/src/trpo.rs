//! Sample-based trust-region policy optimization with experience replay.
//!
//! The policy is a tabular softmax over logits, the critic a tabular value
//! vector fit to lambda-returns, and each epoch runs the four-step loop:
//! rollout under the current policy, append the trajectory to the replay
//! buffer, draw off-policy trajectories, and solve the KL-constrained
//! surrogate maximization (conjugate gradient plus backtracking line search)
//! over the on/off mixture. At alpha = 1 the off-policy term is skipped
//! structurally and the update is plain on-policy TRPO.
//!
//! With auditing enabled, every executed update is checked against the exact
//! KL-form performance lower bound computed from the environment's MDP.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

use crate::bounds::cor5_lower_bound;
use crate::envs::{rollout_with_rng, TabularEnv, Trajectory};
use crate::error::{Error, Result};
use crate::mdp::{solve_values, PolicyTable};
use crate::rng::stream_rng;

/// Relative slack when accepting a line-search candidate at the KL boundary;
/// covers round-off in the trust-region scaling, far below the 1e-6 slack the
/// compliance audit allows.
const ACCEPT_KL_SLACK: f64 = 1e-9;

/// Tabular softmax policy: probs derived rowwise from free logits, so every
/// action keeps strictly positive probability and importance weights and KLs
/// stay finite.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SoftmaxPolicy {
    logits: Vec<Vec<f64>>,
}

impl SoftmaxPolicy {
    /// Zero logits: the uniform policy.
    pub fn new(n_states: usize, n_actions: usize) -> Self {
        SoftmaxPolicy {
            logits: vec![vec![0.0; n_actions]; n_states],
        }
    }

    pub fn from_logits(logits: Vec<Vec<f64>>) -> Result<Self> {
        if logits.is_empty() || logits[0].is_empty() {
            return Err(Error::EmptyInput("logits".into()));
        }
        let n_actions = logits[0].len();
        for row in &logits {
            if row.len() != n_actions {
                return Err(Error::DimensionMismatch("ragged logit rows".into()));
            }
            if row.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidValue("non-finite logit".into()));
            }
        }
        Ok(SoftmaxPolicy { logits })
    }

    pub fn n_states(&self) -> usize {
        self.logits.len()
    }

    pub fn n_actions(&self) -> usize {
        self.logits[0].len()
    }

    pub fn param_count(&self) -> usize {
        self.n_states() * self.n_actions()
    }

    pub fn logits(&self) -> &[Vec<f64>] {
        &self.logits
    }

    pub fn row_probs(&self, s: usize) -> Vec<f64> {
        let row = &self.logits[s];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|&x| (x - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / sum).collect()
    }

    pub fn probs(&self) -> Vec<Vec<f64>> {
        (0..self.n_states()).map(|s| self.row_probs(s)).collect()
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.row_probs(s)[a]
    }

    pub fn as_table(&self) -> PolicyTable {
        PolicyTable::new(self.probs()).expect("softmax rows are distributions")
    }

    /// theta + scale * direction over the flat (state-major) parameter vector.
    pub fn apply_step(&self, direction: &[f64], scale: f64) -> Result<SoftmaxPolicy> {
        let (ns, na) = (self.n_states(), self.n_actions());
        if direction.len() != ns * na {
            return Err(Error::DimensionMismatch(format!(
                "step has {} entries, policy has {}",
                direction.len(),
                ns * na
            )));
        }
        let logits = (0..ns)
            .map(|s| {
                (0..na)
                    .map(|a| self.logits[s][a] + scale * direction[s * na + a])
                    .collect()
            })
            .collect();
        Ok(SoftmaxPolicy { logits })
    }
}

/// FIFO trajectory store with the generating policy's probability table
/// attached to each entry.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StoredTrajectory {
    pub snapshot: PolicyTable,
    pub trajectory: Trajectory,
}

#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<StoredTrajectory>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer {
            capacity,
            items: VecDeque::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, item: StoredTrajectory) {
        self.items.push_back(item);
        while self.items.len() > self.capacity {
            self.items.pop_front();
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &StoredTrajectory> {
        self.items.iter()
    }

    /// Uniform draw without replacement; returns all items when fewer than
    /// `count` are stored. Order is the sampling order.
    pub fn draw(&self, count: usize, rng: &mut ChaCha8Rng) -> Vec<&StoredTrajectory> {
        let take = count.min(self.items.len());
        rand::seq::index::sample(rng, self.items.len(), take)
            .into_iter()
            .map(|i| &self.items[i])
            .collect()
    }

    /// One JSON line per stored trajectory, oldest first.
    pub fn dump_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for item in &self.items {
            out.push_str(&serde_json::to_string(item)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn load_jsonl(capacity: usize, s: &str) -> Result<Self> {
        let mut buffer = ReplayBuffer::new(capacity);
        for line in s.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let item: StoredTrajectory = serde_json::from_str(line)?;
            for t in &item.trajectory.transitions {
                if !(t.behavior_prob > 0.0 && t.behavior_prob <= 1.0) {
                    return Err(Error::CorruptBuffer(format!(
                        "behavior_prob {} outside (0, 1]",
                        t.behavior_prob
                    )));
                }
            }
            buffer.push(item);
        }
        Ok(buffer)
    }
}

/// Tabular state-value estimator fit to lambda-returns.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ValueEstimator {
    pub v_hat: Vec<f64>,
}

impl ValueEstimator {
    pub fn new(n_states: usize) -> Self {
        ValueEstimator {
            v_hat: vec![0.0; n_states],
        }
    }

    /// Refit on one trajectory's lambda-returns, target_t = adv_t + v_old(s_t)
    /// with the raw (unnormalized) GAE advantages. Tabular least squares is
    /// the per-state mean of targets; unvisited states keep their value.
    pub fn fit_lambda_returns(&mut self, traj: &Trajectory, raw_advantages: &[f64]) -> Result<()> {
        if traj.len() != raw_advantages.len() {
            return Err(Error::DimensionMismatch(
                "one advantage per transition required".into(),
            ));
        }
        let n = self.v_hat.len();
        let mut sums = vec![0.0_f64; n];
        let mut counts = vec![0usize; n];
        for (t, adv) in traj.transitions.iter().zip(raw_advantages) {
            if t.state >= n {
                return Err(Error::DimensionMismatch(format!(
                    "state {} outside value table of size {n}",
                    t.state
                )));
            }
            sums[t.state] += adv + self.v_hat[t.state];
            counts[t.state] += 1;
        }
        for s in 0..n {
            if counts[s] > 0 {
                self.v_hat[s] = sums[s] / counts[s] as f64;
            }
        }
        Ok(())
    }
}

/// Truncated generalized advantage estimates
/// adv_t = sum_l (gamma lambda)^l delta_{t+l}, with the sum cut at episode
/// boundaries (done) and at the segment end; delta_t is the one-step TD
/// residual under `v_hat`.
pub fn gae_advantages(
    traj: &Trajectory,
    v_hat: &[f64],
    gamma: f64,
    lambda: f64,
) -> Result<Vec<f64>> {
    if traj.is_empty() {
        return Err(Error::EmptyInput("trajectory".into()));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidValue(format!(
            "lambda = {lambda} outside [0, 1]"
        )));
    }
    let n = v_hat.len();
    let mut adv = vec![0.0_f64; traj.len()];
    let mut carry = 0.0;
    for (t, tr) in traj.transitions.iter().enumerate().rev() {
        if tr.state >= n || tr.next_state >= n {
            return Err(Error::DimensionMismatch(format!(
                "transition touches state outside value table of size {n}"
            )));
        }
        let nonterminal = if tr.done { 0.0 } else { 1.0 };
        let delta = tr.reward + gamma * v_hat[tr.next_state] * nonterminal - v_hat[tr.state];
        if t + 1 == traj.len() {
            carry = 0.0;
        }
        carry = delta + gamma * lambda * nonterminal * carry;
        adv[t] = carry;
    }
    Ok(adv)
}

/// One importance-weighted sample: the advantage estimate and the probability
/// the generating policy assigned to the taken action.
#[derive(Clone, Copy, Debug)]
pub struct Sample {
    pub state: usize,
    pub action: usize,
    pub advantage: f64,
    pub behavior_prob: f64,
}

/// Monte-Carlo surrogate with the stored behavior probabilities as
/// denominators:
/// alpha * mean_on[(pi'(a|s)/pi(a|s)) adv]
/// + (1-alpha) * mean_off[(pi'(a|s)/beta(a|s)) adv].
pub fn surrogate_loss(
    candidate: &SoftmaxPolicy,
    on_batch: &[Sample],
    off_batch: &[Sample],
    alpha: f64,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidValue(format!(
            "alpha = {alpha} outside [0, 1]"
        )));
    }
    if on_batch.is_empty() {
        return Err(Error::EmptyInput("on-policy batch".into()));
    }
    if alpha < 1.0 && off_batch.is_empty() {
        return Err(Error::EmptyInput(
            "off-policy batch required when alpha < 1".into(),
        ));
    }
    let probs = candidate.probs();
    let batch_mean = |batch: &[Sample]| -> Result<f64> {
        let mut acc = 0.0;
        for s in batch {
            if !(s.behavior_prob > 0.0) {
                return Err(Error::CorruptBuffer(format!(
                    "behavior_prob {} on a drawn sample",
                    s.behavior_prob
                )));
            }
            acc += probs[s.state][s.action] / s.behavior_prob * s.advantage;
        }
        Ok(acc / batch.len() as f64)
    };
    let mut loss = 0.0;
    if alpha > 0.0 {
        loss += alpha * batch_mean(on_batch)?;
    }
    if alpha < 1.0 {
        loss += (1.0 - alpha) * batch_mean(off_batch)?;
    }
    Ok(loss)
}

/// Analytic gradient of [`surrogate_loss`] with respect to the logits at the
/// current policy: d pi(a|s)/d theta[s][b] = pi(a|s) (1[a=b] - pi(b|s)).
pub fn surrogate_gradient(
    policy: &SoftmaxPolicy,
    on_batch: &[Sample],
    off_batch: &[Sample],
    alpha: f64,
) -> Result<Vec<f64>> {
    let (ns, na) = (policy.n_states(), policy.n_actions());
    let probs = policy.probs();
    let mut grad = vec![0.0_f64; ns * na];
    let mut accumulate = |batch: &[Sample], weight: f64| {
        let scale = weight / batch.len() as f64;
        for s in batch {
            let p_row = &probs[s.state];
            let p_a = p_row[s.action];
            let coeff = scale * s.advantage / s.behavior_prob * p_a;
            let base = s.state * na;
            for b in 0..na {
                let indicator = if b == s.action { 1.0 } else { 0.0 };
                grad[base + b] += coeff * (indicator - p_row[b]);
            }
        }
    };
    if alpha > 0.0 && !on_batch.is_empty() {
        accumulate(on_batch, alpha);
    }
    if alpha < 1.0 && !off_batch.is_empty() {
        accumulate(off_batch, 1.0 - alpha);
    }
    Ok(grad)
}

/// Curvature-vector product of the batch-mean KL(pi_theta || pi_theta') at
/// theta' = theta: block-diagonal per state, F_s = diag(p_s) - p_s p_s^T,
/// weighted by the state's visit fraction, plus damping * x.
pub fn fisher_vector_product(
    probs: &[Vec<f64>],
    state_weights: &[f64],
    x: &[f64],
    damping: f64,
) -> Vec<f64> {
    let na = probs[0].len();
    let mut y: Vec<f64> = x.iter().map(|v| v * damping).collect();
    for (s, &w) in state_weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let base = s * na;
        let p = &probs[s];
        let px: f64 = (0..na).map(|a| p[a] * x[base + a]).sum();
        for a in 0..na {
            y[base + a] += w * p[a] * (x[base + a] - px);
        }
    }
    y
}

/// Batch-mean KL(old || candidate) over the recorded state visit weights.
pub fn measured_kl(
    old_probs: &[Vec<f64>],
    candidate: &SoftmaxPolicy,
    state_weights: &[f64],
) -> f64 {
    let new_probs = candidate.probs();
    let mut kl = 0.0;
    for (s, &w) in state_weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let mut state_kl = 0.0;
        for (p, q) in old_probs[s].iter().zip(&new_probs[s]) {
            if *p > 0.0 {
                state_kl += p * (p / q).ln();
            }
        }
        kl += w * state_kl.max(0.0);
    }
    kl
}

fn conjugate_gradient(fvp: &dyn Fn(&[f64]) -> Vec<f64>, b: &[f64], iters: usize) -> Vec<f64> {
    let mut x = vec![0.0_f64; b.len()];
    let mut r = b.to_vec();
    let mut p = b.to_vec();
    let mut rr: f64 = r.iter().map(|v| v * v).sum();
    for _ in 0..iters {
        if rr < 1e-14 {
            break;
        }
        let ap = fvp(&p);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            break;
        }
        let step = rr / pap;
        for i in 0..x.len() {
            x[i] += step * p[i];
            r[i] -= step * ap[i];
        }
        let rr_new: f64 = r.iter().map(|v| v * v).sum();
        let mix = rr_new / rr;
        for i in 0..p.len() {
            p[i] = r[i] + mix * p[i];
        }
        rr = rr_new;
    }
    x
}

#[derive(Clone, Copy, Debug)]
pub struct NaturalStepConfig {
    pub cg_iters: usize,
    pub backtrack_factor: f64,
    pub max_backtracks: usize,
}

impl Default for NaturalStepConfig {
    fn default() -> Self {
        NaturalStepConfig {
            cg_iters: 10,
            backtrack_factor: 0.5,
            max_backtracks: 10,
        }
    }
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub policy: SoftmaxPolicy,
    pub surrogate_after: f64,
    pub kl_after: f64,
    pub accepted: bool,
    pub backtracks: usize,
}

/// KL-constrained natural-gradient update.
///
/// Solves F x = g by conjugate gradient against the supplied curvature
/// product, scales to the trust region (theta' = theta + sqrt(2 delta /
/// x^T F x) x), then backtracks (factor and step cap from `cfg`) until a
/// candidate has measured KL <= delta and non-negative surrogate improvement.
/// On exhaustion the policy is returned unchanged.
pub fn natural_step(
    policy: &SoftmaxPolicy,
    grad: &[f64],
    fvp: &dyn Fn(&[f64]) -> Vec<f64>,
    delta: f64,
    eval: &dyn Fn(&SoftmaxPolicy) -> Result<(f64, f64)>,
    surrogate_before: f64,
    cfg: &NaturalStepConfig,
) -> Result<StepOutcome> {
    if delta <= 0.0 {
        return Err(Error::InvalidValue(format!(
            "delta = {delta} must be positive"
        )));
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient(
            "surrogate gradient contains non-finite entries (advantage blow-up?)".into(),
        ));
    }
    let no_op = |backtracks: usize| StepOutcome {
        policy: policy.clone(),
        surrogate_after: surrogate_before,
        kl_after: 0.0,
        accepted: false,
        backtracks,
    };
    if grad.iter().all(|&g| g == 0.0) {
        return Ok(no_op(0));
    }

    let x = conjugate_gradient(fvp, grad, cfg.cg_iters);
    let fx = fvp(&x);
    let xfx: f64 = x.iter().zip(&fx).map(|(a, b)| a * b).sum();
    if !(xfx > 0.0) {
        return Ok(no_op(0));
    }
    let full_scale = (2.0 * delta / xfx).sqrt();

    let mut scale = full_scale;
    for backtracks in 0..cfg.max_backtracks {
        let candidate = policy.apply_step(&x, scale)?;
        let (surrogate, kl) = eval(&candidate)?;
        if kl <= delta * (1.0 + ACCEPT_KL_SLACK) && surrogate - surrogate_before >= 0.0 {
            return Ok(StepOutcome {
                policy: candidate,
                surrogate_after: surrogate,
                kl_after: kl,
                accepted: true,
                backtracks,
            });
        }
        scale *= cfg.backtrack_factor;
    }
    Ok(no_op(cfg.max_backtracks))
}

/// Trainer hyperparameters. The defaults are the standard trust-region
/// experience-replay settings: gamma 0.99, lambda 0.98, delta 0.01,
/// 1000-transition trajectories, a 100-trajectory buffer with 10 drawn per
/// epoch.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrpoConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub delta: f64,
    pub traj_len: usize,
    pub buffer_capacity: usize,
    pub draw_count: usize,
    pub cg_iters: usize,
    pub cg_damping: f64,
    pub backtrack_factor: f64,
    pub max_backtracks: usize,
    /// Center and scale advantages per batch before the update.
    pub normalize_advantages: bool,
    /// Per-epoch exact solves: eta and the KL-form bound audit.
    pub audit: bool,
}

impl Default for TrpoConfig {
    fn default() -> Self {
        TrpoConfig {
            alpha: 1.0,
            gamma: 0.99,
            lambda: 0.98,
            delta: 0.01,
            traj_len: 1000,
            buffer_capacity: 100,
            draw_count: 10,
            cg_iters: 10,
            cg_damping: 1e-2,
            backtrack_factor: 0.5,
            max_backtracks: 10,
            normalize_advantages: true,
            audit: false,
        }
    }
}

/// Exact-bound audit of one executed update.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AuditRecord {
    /// KL-form lower bound on eta(new) - eta(old) for the executed update
    /// (-inf when vacuous).
    pub cor5_bound: f64,
    pub eta_before: f64,
    pub eta_after: f64,
    /// Whenever the bound is non-negative, eta must not have decreased.
    pub sound: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean undiscounted return per completed episode in the on-policy
    /// segment (total reward when the segment contains no episode boundary).
    pub mean_return: f64,
    pub eta_exact: Option<f64>,
    pub surrogate_before: f64,
    pub surrogate_after: f64,
    /// Measured batch KL of the executed update.
    pub kl: f64,
    pub alpha: f64,
    pub audit: Option<AuditRecord>,
}

pub struct Trainer {
    pub env: TabularEnv,
    pub config: TrpoConfig,
    pub policy: SoftmaxPolicy,
    pub value: ValueEstimator,
    pub buffer: ReplayBuffer,
    root_seed: u64,
    epoch: usize,
}

impl Trainer {
    pub fn new(env: TabularEnv, config: TrpoConfig, root_seed: u64) -> Self {
        let n_states = env.mdp.n_states();
        let n_actions = env.mdp.n_actions();
        let buffer = ReplayBuffer::new(config.buffer_capacity);
        Trainer {
            env,
            config,
            policy: SoftmaxPolicy::new(n_states, n_actions),
            value: ValueEstimator::new(n_states),
            buffer,
            root_seed,
            epoch: 0,
        }
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    fn samples_from(traj: &Trajectory, advantages: &[f64]) -> Vec<Sample> {
        traj.transitions
            .iter()
            .zip(advantages)
            .map(|(t, &adv)| Sample {
                state: t.state,
                action: t.action,
                advantage: adv,
                behavior_prob: t.behavior_prob,
            })
            .collect()
    }

    fn normalize_batches(on: &mut [Sample], off: &mut [Sample]) {
        let n = on.len() + off.len();
        if n == 0 {
            return;
        }
        let mean: f64 = on
            .iter()
            .chain(off.iter())
            .map(|s| s.advantage)
            .sum::<f64>()
            / n as f64;
        let var: f64 = on
            .iter()
            .chain(off.iter())
            .map(|s| (s.advantage - mean).powi(2))
            .sum::<f64>()
            / n as f64;
        let std = var.sqrt();
        let scale = if std > 1e-12 { 1.0 / std } else { 1.0 };
        for s in on.iter_mut().chain(off.iter_mut()) {
            s.advantage = (s.advantage - mean) * scale;
        }
    }

    /// Steps 1-4 of the training loop, value refit included.
    pub fn train_epoch(&mut self) -> Result<EpochRecord> {
        let cfg = self.config.clone();
        let alpha = cfg.alpha;
        let old_policy = self.policy.clone();
        let old_table = old_policy.as_table();
        let old_probs = old_policy.probs();

        // 1. on-policy rollout
        let mut rollout_rng = stream_rng(self.root_seed, 2 * self.epoch as u64);
        let traj = rollout_with_rng(&self.env, &old_table, cfg.traj_len, &mut rollout_rng)?;

        // 2. append to the replay buffer
        self.buffer.push(StoredTrajectory {
            snapshot: old_table.clone(),
            trajectory: traj.clone(),
        });

        // 3. draw off-policy trajectories (skipped entirely at alpha = 1)
        let drawn: Vec<StoredTrajectory> = if alpha < 1.0 {
            let mut draw_rng = stream_rng(self.root_seed, 2 * self.epoch as u64 + 1);
            self.buffer
                .draw(cfg.draw_count, &mut draw_rng)
                .into_iter()
                .cloned()
                .collect()
        } else {
            Vec::new()
        };

        // 4. advantage estimation with the current critic
        let on_raw = gae_advantages(&traj, &self.value.v_hat, cfg.gamma, cfg.lambda)?;
        let mut on_batch = Self::samples_from(&traj, &on_raw);
        let mut off_batch = Vec::new();
        for stored in &drawn {
            let adv = gae_advantages(&stored.trajectory, &self.value.v_hat, cfg.gamma, cfg.lambda)?;
            off_batch.extend(Self::samples_from(&stored.trajectory, &adv));
        }
        if cfg.normalize_advantages {
            Self::normalize_batches(&mut on_batch, &mut off_batch);
        }

        // state visit weights from the on-policy batch (the KL constraint is
        // an expectation under the current policy's own states)
        let n_states = self.env.mdp.n_states();
        let mut state_weights = vec![0.0_f64; n_states];
        for s in &on_batch {
            state_weights[s.state] += 1.0;
        }
        for w in state_weights.iter_mut() {
            *w /= on_batch.len() as f64;
        }

        let surrogate_before = surrogate_loss(&old_policy, &on_batch, &off_batch, alpha)?;
        let grad = surrogate_gradient(&old_policy, &on_batch, &off_batch, alpha)?;

        let fvp = |x: &[f64]| fisher_vector_product(&old_probs, &state_weights, x, cfg.cg_damping);
        let eval = |candidate: &SoftmaxPolicy| -> Result<(f64, f64)> {
            let surrogate = surrogate_loss(candidate, &on_batch, &off_batch, alpha)?;
            let kl = measured_kl(&old_probs, candidate, &state_weights);
            Ok((surrogate, kl))
        };
        let step_cfg = NaturalStepConfig {
            cg_iters: cfg.cg_iters,
            backtrack_factor: cfg.backtrack_factor,
            max_backtracks: cfg.max_backtracks,
        };
        let outcome = natural_step(
            &old_policy,
            &grad,
            &fvp,
            cfg.delta,
            &eval,
            surrogate_before,
            &step_cfg,
        )?;

        // refit the critic on this epoch's on-policy lambda-returns
        self.value.fit_lambda_returns(&traj, &on_raw)?;

        // audit the executed update against the exact KL bound
        let (eta_exact, audit) = if cfg.audit {
            let eta_before = solve_values(&self.env.mdp, &old_table)?.eta;
            let new_table = outcome.policy.as_table();
            let eta_after = solve_values(&self.env.mdp, &new_table)?.eta;
            let audit_beta = if drawn.is_empty() {
                old_table.clone()
            } else {
                mean_policy(&drawn)?
            };
            let bound =
                cor5_lower_bound(&self.env.mdp, &old_table, &new_table, &audit_beta, alpha)?;
            let sound = !(bound >= 0.0) || eta_after >= eta_before - 1e-8;
            (
                Some(eta_after),
                Some(AuditRecord {
                    cor5_bound: bound,
                    eta_before,
                    eta_after,
                    sound,
                }),
            )
        } else {
            (None, None)
        };

        let episodes = traj.transitions.iter().filter(|t| t.done).count();
        let total_reward: f64 = traj.transitions.iter().map(|t| t.reward).sum();
        let mean_return = total_reward / episodes.max(1) as f64;

        let record = EpochRecord {
            epoch: self.epoch,
            mean_return,
            eta_exact,
            surrogate_before,
            surrogate_after: outcome.surrogate_after,
            kl: outcome.kl_after,
            alpha,
            audit,
        };
        self.policy = outcome.policy;
        self.epoch += 1;
        Ok(record)
    }

    pub fn run(&mut self, epochs: usize) -> Result<Vec<EpochRecord>> {
        (0..epochs).map(|_| self.train_epoch()).collect()
    }
}

/// Elementwise mean of the drawn snapshots; rows still sum to one, so this is
/// a valid single behavior policy for the audit bound.
fn mean_policy(drawn: &[StoredTrajectory]) -> Result<PolicyTable> {
    let first = &drawn[0].snapshot;
    let (ns, na) = (first.n_states(), first.n_actions());
    let mut probs = vec![vec![0.0_f64; na]; ns];
    for stored in drawn {
        for s in 0..ns {
            for a in 0..na {
                probs[s][a] += stored.snapshot.prob(s, a);
            }
        }
    }
    let k = drawn.len() as f64;
    for row in probs.iter_mut() {
        for p in row.iter_mut() {
            *p /= k;
        }
    }
    PolicyTable::new(probs)
}
