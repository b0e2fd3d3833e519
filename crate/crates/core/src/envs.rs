//! Benchmark tabular environments and a seeded trajectory sampler.
//!
//! Construction is a pure function of the spec: the same (kind, parameters,
//! seed) always produces a bit-identical MDP. Episodic environments encode
//! their reset inside the transition tensor (the goal state transitions back
//! to the initial distribution), so exact solves and sampled rollouts see the
//! same dynamics; the sampler additionally raises the `done` flag on
//! transitions that leave a reset state.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{Mdp, PolicyTable};
use crate::rng::{dirichlet_row, stream_rng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvKind {
    /// Left/right chain with optional slip. Moving right pays a small
    /// progress reward at every state, the rightmost state pays 1 and resets
    /// to the start.
    Chain { length: usize, slip: f64 },
    /// Deterministic 4-action grid; `goal` is a cell index, every non-goal
    /// step pays `step_penalty`, the goal pays 1 and resets to the start.
    Gridworld {
        width: usize,
        height: usize,
        goal: usize,
        step_penalty: f64,
    },
    /// Dirichlet-random continuing MDP with rewards uniform in [-1, 1].
    Random {
        n_states: usize,
        n_actions: usize,
        concentration: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub kind: EnvKind,
    pub seed: u64,
    pub gamma: f64,
}

/// A built environment: the exact MDP plus which states end an episode.
#[derive(Clone, Debug)]
pub struct TabularEnv {
    pub mdp: Mdp,
    /// reset_states[s]: acting in s ends the episode (next state ~ rho0).
    pub reset_states: Vec<bool>,
}

pub const CHAIN_ACTIONS: usize = 2; // 0 = left, 1 = right
pub const GRID_ACTIONS: usize = 4; // 0 = up, 1 = down, 2 = left, 3 = right

/// Per-step reward for the right action in non-goal chain states. Gives the
/// chain an action-value gap at every state instead of only a gamma^distance
/// echo of the goal reward.
pub const CHAIN_PROGRESS_REWARD: f64 = 0.2;
/// Reward for acting in the chain's goal state (which then resets).
pub const CHAIN_GOAL_REWARD: f64 = 1.0;

pub fn build(spec: &EnvSpec) -> Result<TabularEnv> {
    match spec.kind {
        EnvKind::Chain { length, slip } => build_chain(length, slip, spec.gamma),
        EnvKind::Gridworld {
            width,
            height,
            goal,
            step_penalty,
        } => build_gridworld(width, height, goal, step_penalty, spec.gamma),
        EnvKind::Random {
            n_states,
            n_actions,
            concentration,
        } => build_random(n_states, n_actions, concentration, spec.seed, spec.gamma),
    }
}

fn build_chain(length: usize, slip: f64, gamma: f64) -> Result<TabularEnv> {
    if length < 2 {
        return Err(Error::InvalidGeometry(format!("chain length {length} < 2")));
    }
    if !(0.0..=1.0).contains(&slip) {
        return Err(Error::InvalidGeometry(format!(
            "slip {slip} outside [0, 1]"
        )));
    }
    let n = length;
    let goal = n - 1;
    let mut rho0 = vec![0.0; n];
    rho0[0] = 1.0;

    let mut transition = vec![vec![vec![0.0; n]; CHAIN_ACTIONS]; n];
    let mut reward = vec![vec![0.0; CHAIN_ACTIONS]; n];
    for s in 0..n {
        if s == goal {
            for a in 0..CHAIN_ACTIONS {
                transition[s][a] = rho0.clone();
                reward[s][a] = CHAIN_GOAL_REWARD;
            }
            continue;
        }
        let left = s.saturating_sub(1);
        let right = (s + 1).min(n - 1);
        // action 0 = left (slips right), action 1 = right (slips left)
        transition[s][0][left] += 1.0 - slip;
        transition[s][0][right] += slip;
        transition[s][1][right] += 1.0 - slip;
        transition[s][1][left] += slip;
        reward[s][1] = CHAIN_PROGRESS_REWARD;
    }

    let mdp = Mdp::new(n, CHAIN_ACTIONS, transition, reward, rho0, gamma)?;
    let mut reset_states = vec![false; n];
    reset_states[goal] = true;
    Ok(TabularEnv { mdp, reset_states })
}

fn build_gridworld(
    width: usize,
    height: usize,
    goal: usize,
    step_penalty: f64,
    gamma: f64,
) -> Result<TabularEnv> {
    let n = width * height;
    if n < 2 {
        return Err(Error::InvalidGeometry(format!(
            "{width}x{height} grid has no goal cell distinct from the start"
        )));
    }
    if goal >= n {
        return Err(Error::InvalidGeometry(format!(
            "goal {goal} outside {width}x{height} grid"
        )));
    }
    if goal == 0 {
        return Err(Error::InvalidGeometry(
            "goal coincides with the start cell".into(),
        ));
    }
    if !step_penalty.is_finite() {
        return Err(Error::InvalidValue("step_penalty must be finite".into()));
    }
    let mut rho0 = vec![0.0; n];
    rho0[0] = 1.0;

    let mut transition = vec![vec![vec![0.0; n]; GRID_ACTIONS]; n];
    let mut reward = vec![vec![step_penalty; GRID_ACTIONS]; n];
    for cell in 0..n {
        if cell == goal {
            for a in 0..GRID_ACTIONS {
                transition[cell][a] = rho0.clone();
                reward[cell][a] = 1.0;
            }
            continue;
        }
        let row = cell / width;
        let col = cell % width;
        let dest = |a: usize| -> usize {
            match a {
                0 if row > 0 => cell - width,
                1 if row + 1 < height => cell + width,
                2 if col > 0 => cell - 1,
                3 if col + 1 < width => cell + 1,
                _ => cell, // bump the wall, stay put
            }
        };
        for a in 0..GRID_ACTIONS {
            transition[cell][a][dest(a)] = 1.0;
        }
    }

    let mdp = Mdp::new(n, GRID_ACTIONS, transition, reward, rho0, gamma)?;
    let mut reset_states = vec![false; n];
    reset_states[goal] = true;
    Ok(TabularEnv { mdp, reset_states })
}

fn build_random(
    n_states: usize,
    n_actions: usize,
    concentration: f64,
    seed: u64,
    gamma: f64,
) -> Result<TabularEnv> {
    if n_states == 0 || n_actions == 0 {
        return Err(Error::InvalidGeometry(
            "random environment needs at least one state and action".into(),
        ));
    }
    if !(concentration > 0.0) {
        return Err(Error::InvalidValue(format!(
            "Dirichlet concentration {concentration} must be positive"
        )));
    }
    let mut rng = stream_rng(seed, 0);
    let transition = (0..n_states)
        .map(|_| {
            (0..n_actions)
                .map(|_| dirichlet_row(&mut rng, n_states, concentration))
                .collect()
        })
        .collect();
    let reward = (0..n_states)
        .map(|_| {
            (0..n_actions)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect()
        })
        .collect();
    let rho0 = dirichlet_row(&mut rng, n_states, concentration);
    let mdp = Mdp::new(n_states, n_actions, transition, reward, rho0, gamma)?;
    Ok(TabularEnv {
        mdp,
        reset_states: vec![false; n_states],
    })
}

/// One sampled step. `behavior_prob` is the probability the generating policy
/// assigned to the taken action, recorded at sampling time and never
/// recomputed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
    pub done: bool,
    pub behavior_prob: f64,
}

/// A fixed-length segment of transitions; may span several episodes, with
/// `done` marking the boundaries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub transitions: Vec<Transition>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// JSON-lines: one transition object per line, fields in declaration
    /// order (state, action, reward, next_state, done, behavior_prob).
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for t in &self.transitions {
            out.push_str(&serde_json::to_string(t)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_jsonl(s: &str) -> Result<Self> {
        let mut transitions = Vec::new();
        for line in s.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let t: Transition = serde_json::from_str(line)?;
            if !(t.behavior_prob > 0.0 && t.behavior_prob <= 1.0) {
                return Err(Error::CorruptBuffer(format!(
                    "behavior_prob {} outside (0, 1]",
                    t.behavior_prob
                )));
            }
            transitions.push(t);
        }
        Ok(Trajectory { transitions })
    }
}

pub(crate) fn sample_categorical<R: Rng>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        cum += p;
        last_positive = i;
        if u < cum {
            return i;
        }
    }
    // Float tail: cum summed to slightly below 1; charge the draw to the last
    // action with positive mass.
    last_positive
}

/// Sample `horizon` transitions under `policy`, starting from rho0.
pub fn rollout(
    env: &TabularEnv,
    policy: &PolicyTable,
    horizon: usize,
    seed: u64,
) -> Result<Trajectory> {
    let mut rng = stream_rng(seed, 0);
    rollout_with_rng(env, policy, horizon, &mut rng)
}

pub fn rollout_with_rng(
    env: &TabularEnv,
    policy: &PolicyTable,
    horizon: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Trajectory> {
    env.mdp.check_policy_dims(policy)?;
    if horizon == 0 {
        return Err(Error::InvalidValue("horizon must be at least 1".into()));
    }
    let mut transitions = Vec::with_capacity(horizon);
    let mut state = sample_categorical(rng, env.mdp.rho0());
    for _ in 0..horizon {
        let action = sample_categorical(rng, policy.row(state));
        let reward = env.mdp.reward(state, action);
        let next_state = sample_categorical(rng, env.mdp.transition_row(state, action));
        transitions.push(Transition {
            state,
            action,
            reward,
            next_state,
            done: env.reset_states[state],
            behavior_prob: policy.prob(state, action),
        });
        state = next_state;
    }
    Ok(Trajectory { transitions })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain_spec(length: usize, slip: f64, seed: u64, gamma: f64) -> EnvSpec {
        EnvSpec {
            kind: EnvKind::Chain { length, slip },
            seed,
            gamma,
        }
    }

    #[test]
    fn smallest_chain_is_deterministic_two_states() {
        let env = build(&chain_spec(2, 0.0, 0, 0.9)).unwrap();
        assert_eq!(env.mdp.n_states(), 2);
        // state 0: left stays, right reaches the goal
        assert_eq!(env.mdp.transition_row(0, 0), &[1.0, 0.0]);
        assert_eq!(env.mdp.transition_row(0, 1), &[0.0, 1.0]);
        // goal resets to the start and pays the goal reward
        assert_eq!(env.mdp.transition_row(1, 0), &[1.0, 0.0]);
        assert_eq!(env.mdp.reward(1, 0), CHAIN_GOAL_REWARD);
        assert_eq!(env.mdp.reward(0, 1), CHAIN_PROGRESS_REWARD);
        assert_eq!(env.mdp.reward(0, 0), 0.0);
        assert!(env.reset_states[1] && !env.reset_states[0]);
    }

    #[test]
    fn degenerate_gridworld_rejected() {
        let spec = EnvSpec {
            kind: EnvKind::Gridworld {
                width: 1,
                height: 1,
                goal: 0,
                step_penalty: 0.0,
            },
            seed: 0,
            gamma: 0.9,
        };
        assert!(matches!(build(&spec), Err(Error::InvalidGeometry(_))));

        let spec = EnvSpec {
            kind: EnvKind::Gridworld {
                width: 2,
                height: 2,
                goal: 9,
                step_penalty: 0.0,
            },
            seed: 0,
            gamma: 0.9,
        };
        assert!(matches!(build(&spec), Err(Error::InvalidGeometry(_))));
    }

    #[test]
    fn gridworld_moves_and_walls() {
        let spec = EnvSpec {
            kind: EnvKind::Gridworld {
                width: 2,
                height: 2,
                goal: 3,
                step_penalty: -0.1,
            },
            seed: 0,
            gamma: 0.9,
        };
        let env = build(&spec).unwrap();
        // cell 0: up bumps the wall, down goes to 2, right goes to 1
        assert_eq!(env.mdp.transition_row(0, 0)[0], 1.0);
        assert_eq!(env.mdp.transition_row(0, 1)[2], 1.0);
        assert_eq!(env.mdp.transition_row(0, 3)[1], 1.0);
        assert_eq!(env.mdp.reward(0, 0), -0.1);
        assert_eq!(env.mdp.reward(3, 2), 1.0);
        assert!(env.reset_states[3]);
    }

    #[test]
    fn random_env_builds_identically_from_the_same_spec() {
        let spec = EnvSpec {
            kind: EnvKind::Random {
                n_states: 5,
                n_actions: 3,
                concentration: 1.0,
            },
            seed: 42,
            gamma: 0.95,
        };
        let a = build(&spec).unwrap();
        let b = build(&spec).unwrap();
        assert_eq!(
            a.mdp.to_json_string().unwrap(),
            b.mdp.to_json_string().unwrap()
        );
    }

    #[test]
    fn deterministic_rollout_follows_the_unique_path() {
        let env = build(&chain_spec(4, 0.0, 0, 0.9)).unwrap();
        let always_right = PolicyTable::deterministic(4, 2, &[1, 1, 1, 1]).unwrap();
        let traj = rollout(&env, &always_right, 7, 5).unwrap();
        let states: Vec<usize> = traj.transitions.iter().map(|t| t.state).collect();
        // 0 -> 1 -> 2 -> 3(goal, resets) -> 0 -> 1 -> 2
        assert_eq!(states, vec![0, 1, 2, 3, 0, 1, 2]);
        assert!(traj.transitions[3].done);
        assert!(!traj.transitions[2].done);
        assert!(traj
            .transitions
            .iter()
            .all(|t| (t.behavior_prob - 1.0).abs() < 1e-15));
    }

    #[test]
    fn horizon_one_gives_single_transition() {
        let env = build(&chain_spec(3, 0.1, 0, 0.9)).unwrap();
        let pi = PolicyTable::uniform(3, 2);
        let traj = rollout(&env, &pi, 1, 9).unwrap();
        assert_eq!(traj.len(), 1);
        assert!(rollout(&env, &pi, 0, 9).is_err());
    }

    #[test]
    fn rollouts_are_seed_deterministic() {
        let env = build(&chain_spec(5, 0.2, 0, 0.9)).unwrap();
        let pi = PolicyTable::uniform(5, 2);
        let a = rollout(&env, &pi, 100, 77).unwrap();
        let b = rollout(&env, &pi, 100, 77).unwrap();
        assert_eq!(a, b);
        let c = rollout(&env, &pi, 100, 78).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn trajectory_jsonl_round_trip() {
        let env = build(&chain_spec(3, 0.1, 0, 0.9)).unwrap();
        let pi = PolicyTable::uniform(3, 2);
        let traj = rollout(&env, &pi, 20, 3).unwrap();
        let jsonl = traj.to_jsonl().unwrap();
        let back = Trajectory::from_jsonl(&jsonl).unwrap();
        assert_eq!(traj, back);
    }

    #[test]
    fn jsonl_rejects_corrupt_behavior_prob() {
        let line = r#"{"state":0,"action":0,"reward":0.0,"next_state":1,"done":false,"behavior_prob":0.0}"#;
        assert!(matches!(
            Trajectory::from_jsonl(line),
            Err(Error::CorruptBuffer(_))
        ));
    }
}
