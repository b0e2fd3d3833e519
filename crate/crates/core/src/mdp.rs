//! Finite MDPs, stochastic policies, and exact solutions of the Bellman
//! equations by dense linear solves.
//!
//! Everything here is closed-form: state values come from
//! v = (I - g*P_pi)^-1 r_pi, occupancies from the transposed system, and the
//! action values from one Bellman backup. No iteration, no approximation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for validating probability distributions on input.
pub const PROB_TOL: f64 = 1e-12;
/// Tolerance for checks on derived quantities (solve outputs).
pub const SOLVE_TOL: f64 = 1e-9;
/// Default cap on the number of states; all solves are dense.
pub const DEFAULT_STATE_CAP: usize = 512;

fn check_distribution(p: &[f64], tol: f64, what: &str) -> Result<()> {
    if p.is_empty() {
        return Err(Error::EmptyInput(what.to_string()));
    }
    let mut sum = 0.0;
    for &x in p {
        if !x.is_finite() || x < 0.0 {
            return Err(Error::InvalidDistribution(format!(
                "{what}: entry {x} is negative or non-finite"
            )));
        }
        sum += x;
    }
    if (sum - 1.0).abs() > tol {
        return Err(Error::InvalidDistribution(format!(
            "{what}: sums to {sum}, expected 1 within {tol:e}"
        )));
    }
    Ok(())
}

#[derive(Clone, Serialize, Deserialize)]
struct MdpData {
    n_states: usize,
    n_actions: usize,
    transition: Vec<Vec<Vec<f64>>>,
    reward: Vec<Vec<f64>>,
    rho0: Vec<f64>,
    gamma: f64,
}

/// A finite discounted MDP: transition tensor P[s][a][s'], reward table
/// R[s][a], initial state distribution, and discount in (0, 1).
///
/// Immutable after construction; construction validates every invariant
/// (stochastic rows within [`PROB_TOL`], finite rewards, strict discount).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "MdpData", into = "MdpData")]
pub struct Mdp {
    n_states: usize,
    n_actions: usize,
    transition: Vec<Vec<Vec<f64>>>,
    reward: Vec<Vec<f64>>,
    rho0: Vec<f64>,
    gamma: f64,
}

impl TryFrom<MdpData> for Mdp {
    type Error = Error;
    fn try_from(d: MdpData) -> Result<Self> {
        Mdp::new(
            d.n_states,
            d.n_actions,
            d.transition,
            d.reward,
            d.rho0,
            d.gamma,
        )
    }
}

impl From<Mdp> for MdpData {
    fn from(m: Mdp) -> Self {
        MdpData {
            n_states: m.n_states,
            n_actions: m.n_actions,
            transition: m.transition,
            reward: m.reward,
            rho0: m.rho0,
            gamma: m.gamma,
        }
    }
}

impl Mdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<Vec<Vec<f64>>>,
        reward: Vec<Vec<f64>>,
        rho0: Vec<f64>,
        gamma: f64,
    ) -> Result<Self> {
        Self::with_state_cap(
            n_states,
            n_actions,
            transition,
            reward,
            rho0,
            gamma,
            DEFAULT_STATE_CAP,
        )
    }

    /// As [`Mdp::new`] with an explicit cap on |S| (dense solves only).
    pub fn with_state_cap(
        n_states: usize,
        n_actions: usize,
        transition: Vec<Vec<Vec<f64>>>,
        reward: Vec<Vec<f64>>,
        rho0: Vec<f64>,
        gamma: f64,
        state_cap: usize,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::InvalidValue(
                "n_states and n_actions must be positive".into(),
            ));
        }
        if n_states > state_cap {
            return Err(Error::InvalidValue(format!(
                "n_states = {n_states} exceeds the dense-solve cap {state_cap}"
            )));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidValue(format!(
                "gamma = {gamma} must lie strictly inside (0, 1)"
            )));
        }
        if transition.len() != n_states || reward.len() != n_states || rho0.len() != n_states {
            return Err(Error::DimensionMismatch(
                "transition/reward/rho0 length must equal n_states".into(),
            ));
        }
        for (s, per_action) in transition.iter().enumerate() {
            if per_action.len() != n_actions {
                return Err(Error::DimensionMismatch(format!(
                    "transition[{s}] has {} actions, expected {n_actions}",
                    per_action.len()
                )));
            }
            for (a, row) in per_action.iter().enumerate() {
                if row.len() != n_states {
                    return Err(Error::DimensionMismatch(format!(
                        "transition[{s}][{a}] has {} entries, expected {n_states}",
                        row.len()
                    )));
                }
                check_distribution(row, PROB_TOL, &format!("P[{s}][{a}]"))?;
            }
        }
        for (s, row) in reward.iter().enumerate() {
            if row.len() != n_actions {
                return Err(Error::DimensionMismatch(format!(
                    "reward[{s}] has {} entries, expected {n_actions}",
                    row.len()
                )));
            }
            for &r in row {
                if !r.is_finite() {
                    return Err(Error::InvalidValue(format!(
                        "reward[{s}] contains non-finite entry {r}"
                    )));
                }
            }
        }
        check_distribution(&rho0, PROB_TOL, "rho0")?;
        Ok(Mdp {
            n_states,
            n_actions,
            transition,
            reward,
            rho0,
            gamma,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn rho0(&self) -> &[f64] {
        &self.rho0
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s][a]
    }

    /// P[s][a][.] as a slice over next states.
    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        &self.transition[s][a]
    }

    /// State transition matrix under `pi`: P_pi[s][s'] = sum_a pi(a|s) P[s][a][s'].
    ///
    /// The |S| x |S||A| policy matrix is never materialized; products with it
    /// are always per-state weighted sums like this one.
    pub fn policy_transition_matrix(&self, pi: &PolicyTable) -> Result<DMatrix<f64>> {
        self.check_policy_dims(pi)?;
        let n = self.n_states;
        let mut m = DMatrix::zeros(n, n);
        for s in 0..n {
            for a in 0..self.n_actions {
                let p = pi.prob(s, a);
                if p == 0.0 {
                    continue;
                }
                for (s2, &t) in self.transition[s][a].iter().enumerate() {
                    m[(s, s2)] += p * t;
                }
            }
        }
        Ok(m)
    }

    /// Expected one-step reward under `pi`: r_pi[s] = sum_a pi(a|s) R[s][a].
    pub fn policy_reward_vector(&self, pi: &PolicyTable) -> Result<DVector<f64>> {
        self.check_policy_dims(pi)?;
        let n = self.n_states;
        let mut r = DVector::zeros(n);
        for s in 0..n {
            r[s] = (0..self.n_actions)
                .map(|a| pi.prob(s, a) * self.reward[s][a])
                .sum();
        }
        Ok(r)
    }

    pub fn check_policy_dims(&self, pi: &PolicyTable) -> Result<()> {
        if pi.n_states() != self.n_states || pi.n_actions() != self.n_actions {
            return Err(Error::DimensionMismatch(format!(
                "policy is {}x{}, MDP is {}x{}",
                pi.n_states(),
                pi.n_actions(),
                self.n_states,
                self.n_actions
            )));
        }
        Ok(())
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[derive(Clone, Serialize, Deserialize)]
struct PolicyData {
    probs: Vec<Vec<f64>>,
}

/// A stochastic tabular policy: probs[s][a] = pi(a|s), each row a distribution.
///
/// Target, candidate, and behavior policies all share this type.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolicyData", into = "PolicyData")]
pub struct PolicyTable {
    probs: Vec<Vec<f64>>,
}

impl TryFrom<PolicyData> for PolicyTable {
    type Error = Error;
    fn try_from(d: PolicyData) -> Result<Self> {
        PolicyTable::new(d.probs)
    }
}

impl From<PolicyTable> for PolicyData {
    fn from(p: PolicyTable) -> Self {
        PolicyData { probs: p.probs }
    }
}

impl PolicyTable {
    pub fn new(probs: Vec<Vec<f64>>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::EmptyInput("policy has no states".into()));
        }
        let n_actions = probs[0].len();
        for (s, row) in probs.iter().enumerate() {
            if row.len() != n_actions {
                return Err(Error::DimensionMismatch(format!(
                    "policy row {s} has {} actions, expected {n_actions}",
                    row.len()
                )));
            }
            check_distribution(row, PROB_TOL, &format!("pi[{s}]"))?;
        }
        Ok(PolicyTable { probs })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        PolicyTable {
            probs: vec![vec![1.0 / n_actions as f64; n_actions]; n_states],
        }
    }

    /// Deterministic policy taking `actions[s]` in state s.
    pub fn deterministic(n_states: usize, n_actions: usize, actions: &[usize]) -> Result<Self> {
        if actions.len() != n_states {
            return Err(Error::DimensionMismatch(
                "one action per state required".into(),
            ));
        }
        let mut probs = vec![vec![0.0; n_actions]; n_states];
        for (s, &a) in actions.iter().enumerate() {
            if a >= n_actions {
                return Err(Error::InvalidValue(format!(
                    "action {a} out of range in state {s}"
                )));
            }
            probs[s][a] = 1.0;
        }
        Ok(PolicyTable { probs })
    }

    /// Convex mixture (1-kappa)*self + kappa*other, rowwise.
    pub fn mix(&self, other: &PolicyTable, kappa: f64) -> Result<PolicyTable> {
        if self.n_states() != other.n_states() || self.n_actions() != other.n_actions() {
            return Err(Error::DimensionMismatch(
                "mixing policies of unequal shape".into(),
            ));
        }
        if !(0.0..=1.0).contains(&kappa) {
            return Err(Error::InvalidValue(format!(
                "kappa = {kappa} outside [0, 1]"
            )));
        }
        let probs = self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| {
                a.iter()
                    .zip(b)
                    .map(|(&x, &y)| (1.0 - kappa) * x + kappa * y)
                    .collect()
            })
            .collect();
        Ok(PolicyTable { probs })
    }

    pub fn n_states(&self) -> usize {
        self.probs.len()
    }

    pub fn n_actions(&self) -> usize {
        self.probs[0].len()
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s][a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.probs
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// All closed-form quantities for one (MDP, policy) pair.
///
/// `rho` is the unnormalized discounted state-occupancy vector
/// rho[s] = sum_t gamma^t Pr(s_t = s); it totals 1/(1-gamma), not 1.
#[derive(Clone, Debug)]
pub struct ValueBundle {
    /// State values v[s].
    pub v: Vec<f64>,
    /// Action values q[s][a].
    pub q: Vec<Vec<f64>>,
    /// Advantages adv[s][a] = q[s][a] - v[s].
    pub adv: Vec<Vec<f64>>,
    /// Unnormalized discounted occupancy, totals 1/(1-gamma).
    pub rho: Vec<f64>,
    /// Performance eta = rho0 . v.
    pub eta: f64,
}

/// Solve the Bellman system exactly for `pi`:
/// v = (I - g*P_pi)^-1 r_pi, q = r + g*P v, rho from the transposed system,
/// eta = rho0 . v.
pub fn solve_values(mdp: &Mdp, pi: &PolicyTable) -> Result<ValueBundle> {
    mdp.check_policy_dims(pi)?;
    let n = mdp.n_states();
    let p_pi = mdp.policy_transition_matrix(pi)?;
    let r_pi = mdp.policy_reward_vector(pi)?;
    let a = DMatrix::identity(n, n) - &p_pi * mdp.gamma();

    let v = a
        .clone()
        .lu()
        .solve(&r_pi)
        .ok_or_else(|| Error::SolveFailure("(I - gamma P_pi) is singular".into()))?;

    let rho0 = DVector::from_column_slice(mdp.rho0());
    let rho = a
        .transpose()
        .lu()
        .solve(&rho0)
        .ok_or_else(|| Error::SolveFailure("(I - gamma P_pi)^T is singular".into()))?;

    let mut q = vec![vec![0.0; mdp.n_actions()]; n];
    let mut adv = vec![vec![0.0; mdp.n_actions()]; n];
    for s in 0..n {
        for act in 0..mdp.n_actions() {
            let future: f64 = mdp
                .transition_row(s, act)
                .iter()
                .zip(v.iter())
                .map(|(&t, &vs)| t * vs)
                .sum();
            q[s][act] = mdp.reward(s, act) + mdp.gamma() * future;
            adv[s][act] = q[s][act] - v[s];
        }
    }

    let eta = rho0.dot(&v);
    Ok(ValueBundle {
        v: v.iter().copied().collect(),
        q,
        adv,
        rho: rho.iter().copied().collect(),
        eta,
    })
}

/// Per-state advantage of `pi_prime` over `pi`:
/// Abar[s] = sum_a pi'(a|s) A_pi(s, a).
pub fn policy_advantage(mdp: &Mdp, pi: &PolicyTable, pi_prime: &PolicyTable) -> Result<Vec<f64>> {
    mdp.check_policy_dims(pi)?;
    mdp.check_policy_dims(pi_prime)?;
    let vb = solve_values(mdp, pi)?;
    Ok(policy_advantage_from(&vb, pi_prime))
}

/// As [`policy_advantage`] but reusing an already-solved bundle for `pi`.
pub fn policy_advantage_from(vb_pi: &ValueBundle, pi_prime: &PolicyTable) -> Vec<f64> {
    vb_pi
        .adv
        .iter()
        .enumerate()
        .map(|(s, adv_row)| {
            adv_row
                .iter()
                .enumerate()
                .map(|(a, &adv)| pi_prime.prob(s, a) * adv)
                .sum()
        })
        .collect()
}

/// Spread of a per-state advantage vector: max entry minus min entry.
pub fn advantage_span(adv_vec: &[f64]) -> Result<f64> {
    if adv_vec.is_empty() {
        return Err(Error::EmptyInput("advantage vector".into()));
    }
    let max = adv_vec.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = adv_vec.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(max - min)
}
