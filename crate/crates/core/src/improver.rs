//! Exact, model-based safe policy improvement.
//!
//! Each step searches the conservative mixture family
//! pi_kappa = (1 - kappa) pi + kappa pibar, where pibar is the deterministic
//! greedy maximizer of the mixture-weighted advantage, and picks the kappa
//! whose exact lower bound (TV or KL form) is largest. A step is accepted
//! only when that bound is positive, so accepted steps can never decrease the
//! exact performance; when no kappa qualifies the policy is left unchanged.

use crate::bounds::{cor5_lower_bound, thm1_lower_bound};
use crate::error::{Error, Result};
use crate::mdp::{solve_values, Mdp, PolicyTable};

/// Which penalty the line search evaluates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundKind {
    /// Total-variation penalty.
    Tv,
    /// KL penalty.
    Kl,
}

impl std::str::FromStr for BoundKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tv" => Ok(BoundKind::Tv),
            "kl" => Ok(BoundKind::Kl),
            other => Err(Error::InvalidValue(format!(
                "unknown bound kind {other:?} (expected \"tv\" or \"kl\")"
            ))),
        }
    }
}

/// Behavior policy supplied to each improvement iteration.
#[derive(Clone, Debug)]
pub enum BetaSchedule {
    Fixed(PolicyTable),
    /// Replay the previous iterate (the first iteration uses pi0 itself).
    PreviousIterate,
}

#[derive(Clone, Debug)]
pub struct ImprovementStep {
    pub kappa: f64,
    pub pi_next: PolicyTable,
    pub predicted_lower_bound: f64,
    pub realized_gap: f64,
    pub eta_after: f64,
    pub accepted: bool,
}

/// Number of logarithmically spaced kappa grid points in (0, 1].
pub const KAPPA_GRID_POINTS: usize = 64;
const KAPPA_MIN_EXP: f64 = -6.0;
/// Local refinement around the grid maximizer: rounds x points per round.
const REFINE_ROUNDS: usize = 4;
const REFINE_POINTS: usize = 33;

/// kappa = 0 plus 64 log-spaced points from 1e-6 to 1.
pub fn kappa_grid() -> Vec<f64> {
    let mut grid = Vec::with_capacity(KAPPA_GRID_POINTS + 1);
    grid.push(0.0);
    for i in 0..KAPPA_GRID_POINTS {
        let exp = KAPPA_MIN_EXP * (1.0 - i as f64 / (KAPPA_GRID_POINTS - 1) as f64);
        grid.push(10f64.powf(exp));
    }
    grid
}

/// Greedy deterministic maximizer of the mixture-weighted advantage.
///
/// For states with positive mixture weight w = alpha rho^pi + (1-alpha)
/// rho^beta the row is a point mass on argmax_a A^pi(s, a), ties broken by
/// the lowest action index; zero-weight states copy pi's row so unvisited
/// states do not inflate the TV/KL penalty.
pub fn target_policy(
    mdp: &Mdp,
    pi: &PolicyTable,
    beta: &PolicyTable,
    alpha: f64,
) -> Result<PolicyTable> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidValue(format!(
            "alpha = {alpha} outside [0, 1]"
        )));
    }
    let vb_pi = solve_values(mdp, pi)?;
    let weights = mixture_weights(mdp, beta, &vb_pi.rho, alpha)?;
    target_policy_from(&vb_pi.adv, &weights, pi)
}

fn mixture_weights(mdp: &Mdp, beta: &PolicyTable, rho_pi: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if alpha == 1.0 {
        return Ok(rho_pi.to_vec());
    }
    let rho_beta = solve_values(mdp, beta)?.rho;
    Ok(rho_pi
        .iter()
        .zip(&rho_beta)
        .map(|(p, b)| alpha * p + (1.0 - alpha) * b)
        .collect())
}

/// Advantages within this much of the per-state maximum count as tied.
/// Exact ties (equal-length grid paths, identical reset actions) come out of
/// the linear solves with ~1e-15 noise whose sign flips between iterations;
/// without the tolerance the greedy target flaps between tied actions and the
/// mixture family never closes on it.
const TIE_TOL: f64 = 1e-9;

fn target_policy_from(adv: &[Vec<f64>], weights: &[f64], pi: &PolicyTable) -> Result<PolicyTable> {
    let n_actions = pi.n_actions();
    let mut probs = Vec::with_capacity(adv.len());
    for (s, row) in adv.iter().enumerate() {
        if weights[s] > 0.0 {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let cutoff = max - TIE_TOL * (1.0 + max.abs());
            let best = row
                .iter()
                .position(|&v| v >= cutoff)
                .expect("a row maximum always exists");
            let mut point = vec![0.0; n_actions];
            point[best] = 1.0;
            probs.push(point);
        } else {
            probs.push(pi.row(s).to_vec());
        }
    }
    PolicyTable::new(probs)
}

/// One bound-guided line search along the conservative mixture family.
///
/// The selected lower bound is evaluated exactly (fresh linear solves, the
/// same code path the certification sweep uses) on the kappa grid, then the
/// neighborhood of the grid maximizer is refined so the returned value is
/// grid-resolution independent. The step is accepted only for a strictly
/// positive bound; otherwise kappa = 0 and the policy is unchanged.
pub fn line_search_step(
    mdp: &Mdp,
    pi: &PolicyTable,
    beta: &PolicyTable,
    alpha: f64,
    bound_kind: BoundKind,
) -> Result<ImprovementStep> {
    let vb_pi = solve_values(mdp, pi)?;
    let weights = mixture_weights(mdp, beta, &vb_pi.rho, alpha)?;
    let pibar = target_policy_from(&vb_pi.adv, &weights, pi)?;
    if pibar == *pi {
        // The mixture family degenerates to {pi}: nothing to search.
        return Ok(ImprovementStep {
            kappa: 0.0,
            pi_next: pi.clone(),
            predicted_lower_bound: 0.0,
            realized_gap: 0.0,
            eta_after: vb_pi.eta,
            accepted: false,
        });
    }

    let bound_at = |kappa: f64| -> Result<f64> {
        if kappa == 0.0 {
            return Ok(0.0);
        }
        let candidate = pi.mix(&pibar, kappa)?;
        match bound_kind {
            BoundKind::Tv => thm1_lower_bound(mdp, pi, &candidate, beta, alpha),
            BoundKind::Kl => cor5_lower_bound(mdp, pi, &candidate, beta, alpha),
        }
    };

    let grid = kappa_grid();
    let mut best_kappa = 0.0;
    let mut best_bound = 0.0;
    for &kappa in &grid {
        let b = bound_at(kappa)?;
        if b > best_bound {
            best_bound = b;
            best_kappa = kappa;
        }
    }

    // Refine around the grid maximizer; the grid ratio is ~1.24 so one slot
    // each side brackets the continuous maximizer of a concave bound.
    if best_kappa > 0.0 {
        let ratio = 10f64.powf(-KAPPA_MIN_EXP / (KAPPA_GRID_POINTS - 1) as f64);
        let mut lo = (best_kappa / ratio).max(0.0);
        let mut hi = (best_kappa * ratio).min(1.0);
        for _ in 0..REFINE_ROUNDS {
            let mut local_best = best_kappa;
            for i in 0..REFINE_POINTS {
                let kappa = lo + (hi - lo) * i as f64 / (REFINE_POINTS - 1) as f64;
                if kappa <= 0.0 || kappa > 1.0 {
                    continue;
                }
                let b = bound_at(kappa)?;
                if b > best_bound {
                    best_bound = b;
                    local_best = kappa;
                }
            }
            best_kappa = local_best;
            let spacing = (hi - lo) / (REFINE_POINTS - 1) as f64;
            lo = (best_kappa - spacing).max(lo);
            hi = (best_kappa + spacing).min(hi);
        }
    }

    if best_bound > 0.0 {
        let pi_next = pi.mix(&pibar, best_kappa)?;
        let vb_next = solve_values(mdp, &pi_next)?;
        Ok(ImprovementStep {
            kappa: best_kappa,
            predicted_lower_bound: best_bound,
            realized_gap: vb_next.eta - vb_pi.eta,
            eta_after: vb_next.eta,
            pi_next,
            accepted: true,
        })
    } else {
        Ok(ImprovementStep {
            kappa: 0.0,
            pi_next: pi.clone(),
            predicted_lower_bound: 0.0,
            realized_gap: 0.0,
            eta_after: vb_pi.eta,
            accepted: false,
        })
    }
}

/// Iterate [`line_search_step`] until a step is rejected or `max_iters` is
/// reached. Accepted steps have positive exact bounds, so the eta sequence is
/// non-decreasing.
pub fn improve_until_converged(
    mdp: &Mdp,
    pi0: &PolicyTable,
    beta_schedule: &BetaSchedule,
    alpha: f64,
    bound_kind: BoundKind,
    max_iters: usize,
) -> Result<Vec<ImprovementStep>> {
    if max_iters == 0 {
        return Err(Error::InvalidValue("max_iters must be at least 1".into()));
    }
    let mut steps = Vec::new();
    let mut pi = pi0.clone();
    let mut previous = pi0.clone();
    for _ in 0..max_iters {
        let beta = match beta_schedule {
            BetaSchedule::Fixed(b) => b.clone(),
            BetaSchedule::PreviousIterate => previous.clone(),
        };
        let step = line_search_step(mdp, &pi, &beta, alpha, bound_kind)?;
        let accepted = step.accepted;
        previous = pi;
        pi = step.pi_next.clone();
        steps.push(step);
        if !accepted {
            break;
        }
    }
    Ok(steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cert::{random_mdp, random_policy};
    use crate::envs::{build, EnvKind, EnvSpec};
    use crate::rng::stream_rng;

    /// Exact greedy policy iteration; the independent optimum oracle.
    pub(crate) fn policy_iteration_optimum(mdp: &Mdp) -> (PolicyTable, f64) {
        let n = mdp.n_states();
        let mut pi = PolicyTable::uniform(n, mdp.n_actions());
        for _ in 0..1000 {
            let vb = solve_values(mdp, &pi).unwrap();
            let actions: Vec<usize> = (0..n)
                .map(|s| {
                    let mut best = 0;
                    for a in 1..mdp.n_actions() {
                        if vb.q[s][a] > vb.q[s][best] {
                            best = a;
                        }
                    }
                    best
                })
                .collect();
            let greedy = PolicyTable::deterministic(n, mdp.n_actions(), &actions).unwrap();
            if greedy == pi {
                break;
            }
            pi = greedy;
        }
        let eta = solve_values(mdp, &pi).unwrap().eta;
        (pi, eta)
    }

    fn two_action_mdp() -> Mdp {
        Mdp::new(
            1,
            2,
            vec![vec![vec![1.0], vec![1.0]]],
            vec![vec![0.0, 1.0]],
            vec![1.0],
            0.9,
        )
        .unwrap()
    }

    #[test]
    fn target_policy_is_argmax_invariant_for_greedy_input() {
        let mut rng = stream_rng(20, 0);
        let mdp = random_mdp(&mut rng, 5, 3, 0.9);
        let (pi_star, _) = policy_iteration_optimum(&mdp);
        let pibar = target_policy(&mdp, &pi_star, &pi_star, 1.0).unwrap();
        // greedy target of an optimal policy selects the same actions
        for s in 0..5 {
            let a_star = (0..3).find(|&a| pi_star.prob(s, a) == 1.0).unwrap();
            assert_eq!(pibar.prob(s, a_star), 1.0);
        }
    }

    #[test]
    fn target_policy_is_alpha_free_with_positive_occupancies() {
        let mut rng = stream_rng(21, 0);
        let mdp = random_mdp(&mut rng, 5, 3, 0.9);
        let pi = random_policy(&mut rng, 5, 3);
        let beta = random_policy(&mut rng, 5, 3);
        // Dirichlet rho0 and transitions make every occupancy positive.
        let reference = target_policy(&mdp, &pi, &beta, 1.0).unwrap();
        for &alpha in &[0.0, 0.25, 0.5, 0.75] {
            assert_eq!(target_policy(&mdp, &pi, &beta, alpha).unwrap(), reference);
        }
    }

    #[test]
    fn target_policy_matches_per_state_argmax_oracle() {
        let mut rng = stream_rng(22, 0);
        let mdp = random_mdp(&mut rng, 6, 4, 0.9);
        let pi = random_policy(&mut rng, 6, 4);
        let pibar = target_policy(&mdp, &pi, &pi, 1.0).unwrap();
        let vb = solve_values(&mdp, &pi).unwrap();
        for s in 0..6 {
            let mut best = 0;
            for a in 1..4 {
                if vb.adv[s][a] > vb.adv[s][best] {
                    best = a;
                }
            }
            assert_eq!(pibar.prob(s, best), 1.0);
        }
    }

    #[test]
    fn optimal_policy_yields_rejected_step() {
        let mut rng = stream_rng(23, 0);
        let mdp = random_mdp(&mut rng, 4, 3, 0.9);
        let (pi_star, eta_star) = policy_iteration_optimum(&mdp);
        for kind in [BoundKind::Tv, BoundKind::Kl] {
            let step = line_search_step(&mdp, &pi_star, &pi_star, 1.0, kind).unwrap();
            assert!(!step.accepted);
            assert_eq!(step.kappa, 0.0);
            assert_eq!(step.realized_gap, 0.0);
            assert!((step.eta_after - eta_star).abs() < 1e-9);
        }
    }

    #[test]
    fn two_action_step_is_accepted_and_bound_consistent() {
        let mdp = two_action_mdp();
        let pi = PolicyTable::new(vec![vec![0.9, 0.1]]).unwrap();
        for kind in [BoundKind::Tv, BoundKind::Kl] {
            let step = line_search_step(&mdp, &pi, &pi, 1.0, kind).unwrap();
            assert!(step.accepted, "{kind:?}");
            assert!(step.predicted_lower_bound > 0.0);
            assert!(step.realized_gap > 0.0);
            assert!(step.realized_gap >= step.predicted_lower_bound - 1e-8);
        }
    }

    #[test]
    fn alpha_zero_with_beta_equal_pi_matches_alpha_one() {
        let mut rng = stream_rng(24, 0);
        let mdp = random_mdp(&mut rng, 4, 3, 0.9);
        let pi = random_policy(&mut rng, 4, 3);
        let a1 = line_search_step(&mdp, &pi, &pi, 1.0, BoundKind::Tv).unwrap();
        let a0 = line_search_step(&mdp, &pi, &pi, 0.0, BoundKind::Tv).unwrap();
        assert_eq!(a1.kappa, a0.kappa);
        assert!((a1.predicted_lower_bound - a0.predicted_lower_bound).abs() < 1e-12);
        assert_eq!(a1.pi_next, a0.pi_next);
    }

    #[test]
    fn improvement_sequence_is_monotone_and_reaches_optimum() {
        let spec = EnvSpec {
            kind: EnvKind::Chain {
                length: 5,
                slip: 0.1,
            },
            seed: 0,
            gamma: 0.5,
        };
        let env = build(&spec).unwrap();
        let (_, eta_star) = policy_iteration_optimum(&env.mdp);
        let pi0 = PolicyTable::uniform(5, 2);
        let steps = improve_until_converged(
            &env.mdp,
            &pi0,
            &BetaSchedule::PreviousIterate,
            1.0,
            BoundKind::Tv,
            200,
        )
        .unwrap();
        let mut eta_prev = solve_values(&env.mdp, &pi0).unwrap().eta;
        for step in &steps {
            assert!(step.eta_after >= eta_prev - 1e-8);
            if step.accepted {
                assert!(step.realized_gap >= step.predicted_lower_bound - 1e-8);
            }
            eta_prev = step.eta_after;
        }
        let eta_final = steps.last().unwrap().eta_after;
        assert!(
            (eta_star - eta_final).abs() < 1e-6,
            "final eta {eta_final} vs optimum {eta_star} after {} steps",
            steps.len()
        );
    }

    #[test]
    fn off_policy_improvement_is_monotone() {
        let spec = EnvSpec {
            kind: EnvKind::Chain {
                length: 5,
                slip: 0.1,
            },
            seed: 0,
            gamma: 0.5,
        };
        let env = build(&spec).unwrap();
        let beta = PolicyTable::uniform(5, 2);
        let pi0 = PolicyTable::uniform(5, 2);
        let (_, eta_star) = policy_iteration_optimum(&env.mdp);
        let steps = improve_until_converged(
            &env.mdp,
            &pi0,
            &BetaSchedule::Fixed(beta),
            0.0,
            BoundKind::Tv,
            200,
        )
        .unwrap();
        let mut eta_prev = solve_values(&env.mdp, &pi0).unwrap().eta;
        for step in &steps {
            assert!(step.eta_after >= eta_prev - 1e-8);
            eta_prev = step.eta_after;
        }
        assert!(steps.last().unwrap().eta_after <= eta_star + 1e-8);
    }

    #[test]
    fn grid_refinement_makes_the_bound_resolution_independent() {
        // Evaluate the first-step bound with the production search, then with
        // a 10x denser base grid plus the same refinement; the two maxima
        // must agree to 1e-6.
        let spec = EnvSpec {
            kind: EnvKind::Chain {
                length: 5,
                slip: 0.1,
            },
            seed: 0,
            gamma: 0.5,
        };
        let env = build(&spec).unwrap();
        let pi = PolicyTable::uniform(5, 2);
        let step = line_search_step(&env.mdp, &pi, &pi, 1.0, BoundKind::Tv).unwrap();

        let pibar = target_policy(&env.mdp, &pi, &pi, 1.0).unwrap();
        let bound_at = |kappa: f64| {
            let candidate = pi.mix(&pibar, kappa).unwrap();
            thm1_lower_bound(&env.mdp, &pi, &candidate, &pi, 1.0).unwrap()
        };
        let dense_points = 10 * KAPPA_GRID_POINTS;
        let mut best = 0.0_f64;
        let mut best_kappa = 0.0_f64;
        for i in 0..dense_points {
            let exp = KAPPA_MIN_EXP * (1.0 - i as f64 / (dense_points - 1) as f64);
            let kappa = 10f64.powf(exp);
            let b = bound_at(kappa);
            if b > best {
                best = b;
                best_kappa = kappa;
            }
        }
        // local scan around the dense maximizer
        let lo = (best_kappa * 0.9).max(1e-9);
        let hi = (best_kappa * 1.1).min(1.0);
        for i in 0..2000 {
            let kappa = lo + (hi - lo) * i as f64 / 1999.0;
            best = best.max(bound_at(kappa));
        }
        assert!(
            (step.predicted_lower_bound - best).abs() <= 1e-6,
            "search {} vs dense {}",
            step.predicted_lower_bound,
            best
        );
    }

    #[test]
    fn kappa_grid_shape() {
        let grid = kappa_grid();
        assert_eq!(grid.len(), KAPPA_GRID_POINTS + 1);
        assert_eq!(grid[0], 0.0);
        assert!((grid[1] - 1e-6).abs() < 1e-18);
        assert_eq!(*grid.last().unwrap(), 1.0);
        assert!(grid.windows(2).all(|w| w[0] < w[1]));
    }
}
