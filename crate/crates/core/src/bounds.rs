//! Both sides of every inequality behind the on/off-policy monotonic
//! improvement guarantee, evaluated exactly from linear solves:
//!
//! - the performance-difference identity eta(pi') - eta(pi) = rho^{pi'} . Abar,
//! - the centered inner-product bound |x.y| <= ||x||_1 span(y)/2,
//! - the occupancy-gap chain (model-based and model-free right-hand sides),
//! - the TV-penalty performance lower bound and its KL relaxation.
//!
//! [`BoundReport`] packages all of them for one (MDP, pi, pi', beta, alpha)
//! tuple together with per-inequality verdicts at the certification tolerance.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::divergence::{kl_max, serde_inf, sqrt_product, tv_max};
use crate::error::{Error, Result};
use crate::mdp::{solve_values, Mdp, PolicyTable, ValueBundle};

/// Certification tolerance: inequalities may be violated by at most this much
/// before a tuple counts as a violation (10x the accumulated solve error at
/// the dense-solve state cap).
pub const CERT_TOL: f64 = 1e-8;

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidValue(format!(
            "alpha = {alpha} outside [0, 1]"
        )));
    }
    Ok(())
}

/// Abar[s] in the difference form sum_a (pi'(a|s) - pi(a|s)) q(s, a).
///
/// Algebraically equal to sum_a pi'(a|s) A(s, a); the difference form makes
/// every bound evaluate to exactly zero when pi' is bitwise equal to pi.
fn policy_advantage_diff(
    vb_pi: &ValueBundle,
    pi: &PolicyTable,
    pi_prime: &PolicyTable,
) -> Vec<f64> {
    vb_pi
        .q
        .iter()
        .enumerate()
        .map(|(s, q_row)| {
            q_row
                .iter()
                .enumerate()
                .map(|(a, &q)| (pi_prime.prob(s, a) - pi.prob(s, a)) * q)
                .sum()
        })
        .collect()
}

/// Performance-difference pair: the true gap eta(pi') - eta(pi) and the identity right-hand
/// side rho^{pi'} . Abar_pi'(pi). The two agree up to solve error.
pub fn performance_difference(
    mdp: &Mdp,
    pi: &PolicyTable,
    pi_prime: &PolicyTable,
) -> Result<(f64, f64)> {
    let vb_pi = solve_values(mdp, pi)?;
    let vb_pp = solve_values(mdp, pi_prime)?;
    let abar = policy_advantage_diff(&vb_pi, pi, pi_prime);
    let identity_rhs: f64 = vb_pp.rho.iter().zip(&abar).map(|(r, a)| r * a).sum();
    Ok((vb_pp.eta - vb_pi.eta, identity_rhs))
}

/// Inner-product bound for a centered vector x (sum x = 0) against any y:
/// returns (|x.y|, ||x||_1 * span(y) / 2).
pub fn centered_inner_product_bound(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::EmptyInput("inner-product bound".into()));
    }
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "x has {} entries, y has {}",
            x.len(),
            y.len()
        )));
    }
    let sum: f64 = x.iter().sum();
    if sum.abs() > 1e-10 {
        return Err(Error::NotCentered(sum.abs()));
    }
    let lhs = x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>().abs();
    let l1: f64 = x.iter().map(|a| a.abs()).sum();
    let span = crate::mdp::advantage_span(y)?;
    Ok((lhs, l1 * span / 2.0))
}

fn matrix_inf_norm_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..a.nrows() {
        let mut row = 0.0;
        for j in 0..a.ncols() {
            row += (a[(i, j)] - b[(i, j)]).abs();
        }
        worst = worst.max(row);
    }
    worst
}

fn inv_inf_norm(mdp: &Mdp, p_pi_prime: &DMatrix<f64>) -> Result<f64> {
    let n = mdp.n_states();
    let a = DMatrix::identity(n, n) - p_pi_prime * mdp.gamma();
    let inv = a
        .try_inverse()
        .ok_or_else(|| Error::SolveFailure("(I - gamma P_pi') is singular".into()))?;
    let mut worst = 0.0_f64;
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            row += inv[(i, j)].abs();
        }
        worst = worst.max(row);
    }
    Ok(worst)
}

/// Occupancy-gap chain for the mixture alpha*rho^pi + (1-alpha)*rho^beta:
/// returns (lhs, model-based rhs, model-free rhs) with lhs <= model <= free.
///
/// The model-based rhs uses the transition matrices under each policy and the
/// explicit inverse norm ||(I - gamma P_pi')^-1||_inf with a gamma/(1-gamma)
/// prefactor; the model-free rhs replaces both with policy total variations
/// and gamma/(1-gamma)^2.
pub fn state_dist_gap(
    mdp: &Mdp,
    pi: &PolicyTable,
    pi_prime: &PolicyTable,
    beta: &PolicyTable,
    alpha: f64,
) -> Result<(f64, f64, f64)> {
    check_alpha(alpha)?;
    let vb_pp = solve_values(mdp, pi_prime)?;
    let p_pp = mdp.policy_transition_matrix(pi_prime)?;

    // Mixture occupancy; zero-coefficient sides are skipped outright so the
    // unused policy cannot influence the result.
    let n = mdp.n_states();
    let mut mixture = vec![0.0_f64; n];
    if alpha > 0.0 {
        let vb_pi = solve_values(mdp, pi)?;
        for (m, r) in mixture.iter_mut().zip(&vb_pi.rho) {
            *m += alpha * r;
        }
    }
    if alpha < 1.0 {
        let vb_beta = solve_values(mdp, beta)?;
        for (m, r) in mixture.iter_mut().zip(&vb_beta.rho) {
            *m += (1.0 - alpha) * r;
        }
    }
    let lhs: f64 = vb_pp
        .rho
        .iter()
        .zip(&mixture)
        .map(|(r, m)| (r - m).abs())
        .sum();

    let gamma = mdp.gamma();
    let inv_norm = inv_inf_norm(mdp, &p_pp)?;

    let mut model_mix = 0.0;
    let mut free_mix = 0.0;
    if alpha > 0.0 {
        let p_pi = mdp.policy_transition_matrix(pi)?;
        model_mix += alpha * matrix_inf_norm_diff(&p_pp, &p_pi);
        free_mix += alpha * tv_max(pi_prime, pi)?;
    }
    if alpha < 1.0 {
        let p_beta = mdp.policy_transition_matrix(beta)?;
        model_mix += (1.0 - alpha) * matrix_inf_norm_diff(&p_pp, &p_beta);
        free_mix += (1.0 - alpha) * tv_max(pi_prime, beta)?;
    }

    let model_rhs = gamma / (1.0 - gamma) * model_mix * inv_norm;
    let free_rhs = gamma / (1.0 - gamma).powi(2) * free_mix;
    Ok((lhs, model_rhs, free_rhs))
}

fn q_inf_norm(vb: &ValueBundle) -> f64 {
    vb.q.iter().flatten().map(|x| x.abs()).fold(0.0, f64::max)
}

/// alpha * rho^pi . Abar + (1-alpha) * rho^beta . Abar, skipping
/// zero-coefficient sides entirely.
fn mixed_advantage_term(alpha: f64, rho_pi: &[f64], rho_beta: Option<&[f64]>, abar: &[f64]) -> f64 {
    let mut term = 0.0;
    if alpha > 0.0 {
        term += alpha * rho_pi.iter().zip(abar).map(|(r, a)| r * a).sum::<f64>();
    }
    if alpha < 1.0 {
        let rho_beta = rho_beta.expect("rho_beta required when alpha < 1");
        term += (1.0 - alpha) * rho_beta.iter().zip(abar).map(|(r, a)| r * a).sum::<f64>();
    }
    term
}

fn tv_penalty(alpha: f64, tv_pp: f64, tv_bp: Option<f64>, gamma: f64, q_inf: f64) -> f64 {
    let mut mix = 0.0;
    if alpha > 0.0 {
        mix += alpha * tv_pp * tv_pp;
    }
    if alpha < 1.0 {
        mix += (1.0 - alpha) * tv_pp * tv_bp.expect("tv(beta, pi') required when alpha < 1");
    }
    gamma / (1.0 - gamma).powi(2) * mix * q_inf
}

fn kl_penalty(alpha: f64, kl_pp: f64, kl_bp: Option<f64>, gamma: f64, q_inf: f64) -> f64 {
    let mut mix = 0.0;
    if alpha > 0.0 {
        mix += alpha * kl_pp;
    }
    if alpha < 1.0 {
        mix += (1.0 - alpha)
            * sqrt_product(kl_pp, kl_bp.expect("KL(beta||pi') required when alpha < 1"));
    }
    2.0 * gamma / (1.0 - gamma).powi(2) * mix * q_inf
}

/// TV-form performance lower bound:
/// alpha rho^pi.Abar + (1-alpha) rho^beta.Abar
///   - gamma/(1-gamma)^2 (alpha tv(pi,pi')^2 + (1-alpha) tv(pi,pi') tv(beta,pi')) ||q^pi||_inf.
///
/// At alpha = 1 every beta-dependent factor is skipped, so the value is exactly
/// beta-independent.
pub fn thm1_lower_bound(
    mdp: &Mdp,
    pi: &PolicyTable,
    pi_prime: &PolicyTable,
    beta: &PolicyTable,
    alpha: f64,
) -> Result<f64> {
    check_alpha(alpha)?;
    let vb_pi = solve_values(mdp, pi)?;
    let abar = policy_advantage_diff(&vb_pi, pi, pi_prime);
    let rho_beta = if alpha < 1.0 {
        Some(solve_values(mdp, beta)?.rho)
    } else {
        None
    };
    let adv_term = mixed_advantage_term(alpha, &vb_pi.rho, rho_beta.as_deref(), &abar);
    let tv_pp = tv_max(pi, pi_prime)?;
    let tv_bp = if alpha < 1.0 {
        Some(tv_max(beta, pi_prime)?)
    } else {
        None
    };
    Ok(adv_term - tv_penalty(alpha, tv_pp, tv_bp, mdp.gamma(), q_inf_norm(&vb_pi)))
}

/// KL-form performance lower bound:
/// advantage terms
///   - 2 gamma/(1-gamma)^2 (alpha KLmax(pi||pi')
///       + (1-alpha) sqrt(KLmax(pi||pi') KLmax(beta||pi'))) ||q^pi||_inf.
///
/// Returns -inf when a required KL is infinite (absolute-continuity failure):
/// the bound is then vacuous but still sound.
pub fn cor5_lower_bound(
    mdp: &Mdp,
    pi: &PolicyTable,
    pi_prime: &PolicyTable,
    beta: &PolicyTable,
    alpha: f64,
) -> Result<f64> {
    check_alpha(alpha)?;
    let vb_pi = solve_values(mdp, pi)?;
    let abar = policy_advantage_diff(&vb_pi, pi, pi_prime);
    let rho_beta = if alpha < 1.0 {
        Some(solve_values(mdp, beta)?.rho)
    } else {
        None
    };
    let adv_term = mixed_advantage_term(alpha, &vb_pi.rho, rho_beta.as_deref(), &abar);
    let kl_pp = kl_max(pi, pi_prime)?;
    let kl_bp = if alpha < 1.0 {
        Some(kl_max(beta, pi_prime)?)
    } else {
        None
    };
    let penalty = kl_penalty(alpha, kl_pp, kl_bp, mdp.gamma(), q_inf_norm(&vb_pi));
    if penalty.is_infinite() {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(adv_term - penalty)
}

/// Per-inequality outcomes at [`CERT_TOL`].
///
/// The first five are the certified inequalities; `cor5_rhs_le_thm1_rhs` is an
/// observation only (whether the KL bound was looser than the TV bound on this
/// tuple) and does not affect validity.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BoundVerdicts {
    pub lemma1_identity: bool,
    pub dist_gap_lhs_le_model: bool,
    pub dist_gap_model_le_free: bool,
    pub thm1_sound: bool,
    pub cor5_sound: bool,
    pub cor5_rhs_le_thm1_rhs: bool,
}

impl BoundVerdicts {
    pub fn valid(&self) -> bool {
        self.lemma1_identity
            && self.dist_gap_lhs_le_model
            && self.dist_gap_model_le_free
            && self.thm1_sound
            && self.cor5_sound
    }
}

/// Both sides of every inequality for one (MDP, pi, pi', beta, alpha) tuple.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundReport {
    pub alpha: f64,
    pub true_gap: f64,
    pub lemma1_rhs: f64,
    pub dist_gap_lhs: f64,
    pub dist_gap_model_rhs: f64,
    pub dist_gap_free_rhs: f64,
    pub thm1_lower: f64,
    #[serde(with = "serde_inf")]
    pub cor5_lower: f64,
    pub q_inf_norm: f64,
    pub verdicts: BoundVerdicts,
}

impl BoundReport {
    /// Evaluate every quantity with shared solves (one per distinct policy).
    pub fn compute(
        mdp: &Mdp,
        pi: &PolicyTable,
        pi_prime: &PolicyTable,
        beta: &PolicyTable,
        alpha: f64,
    ) -> Result<Self> {
        check_alpha(alpha)?;
        mdp.check_policy_dims(pi)?;
        mdp.check_policy_dims(pi_prime)?;
        mdp.check_policy_dims(beta)?;

        let vb_pi = solve_values(mdp, pi)?;
        let vb_pp = solve_values(mdp, pi_prime)?;
        let vb_beta = if alpha < 1.0 {
            Some(solve_values(mdp, beta)?)
        } else {
            None
        };

        let abar = policy_advantage_diff(&vb_pi, pi, pi_prime);
        let true_gap = vb_pp.eta - vb_pi.eta;
        let lemma1_rhs: f64 = vb_pp.rho.iter().zip(&abar).map(|(r, a)| r * a).sum();

        // Occupancy-gap chain.
        let n = mdp.n_states();
        let mut mixture = vec![0.0_f64; n];
        if alpha > 0.0 {
            for (m, r) in mixture.iter_mut().zip(&vb_pi.rho) {
                *m += alpha * r;
            }
        }
        if let Some(vb_beta) = &vb_beta {
            for (m, r) in mixture.iter_mut().zip(&vb_beta.rho) {
                *m += (1.0 - alpha) * r;
            }
        }
        let dist_gap_lhs: f64 = vb_pp
            .rho
            .iter()
            .zip(&mixture)
            .map(|(r, m)| (r - m).abs())
            .sum();

        let gamma = mdp.gamma();
        let p_pp = mdp.policy_transition_matrix(pi_prime)?;
        let inv_norm = inv_inf_norm(mdp, &p_pp)?;
        let tv_pp = tv_max(pi, pi_prime)?;
        let mut model_mix = 0.0;
        let mut free_mix = 0.0;
        if alpha > 0.0 {
            let p_pi = mdp.policy_transition_matrix(pi)?;
            model_mix += alpha * matrix_inf_norm_diff(&p_pp, &p_pi);
            free_mix += alpha * tv_pp;
        }
        let tv_bp = if alpha < 1.0 {
            let p_beta = mdp.policy_transition_matrix(beta)?;
            let tv = tv_max(beta, pi_prime)?;
            model_mix += (1.0 - alpha) * matrix_inf_norm_diff(&p_pp, &p_beta);
            free_mix += (1.0 - alpha) * tv;
            Some(tv)
        } else {
            None
        };
        let dist_gap_model_rhs = gamma / (1.0 - gamma) * model_mix * inv_norm;
        let dist_gap_free_rhs = gamma / (1.0 - gamma).powi(2) * free_mix;

        // Lower bounds.
        let q_inf = q_inf_norm(&vb_pi);
        let rho_beta = vb_beta.as_ref().map(|vb| vb.rho.as_slice());
        let adv_term = mixed_advantage_term(alpha, &vb_pi.rho, rho_beta, &abar);
        let thm1_lower = adv_term - tv_penalty(alpha, tv_pp, tv_bp, gamma, q_inf);

        let kl_pp = kl_max(pi, pi_prime)?;
        let kl_bp = if alpha < 1.0 {
            Some(kl_max(beta, pi_prime)?)
        } else {
            None
        };
        let kl_pen = kl_penalty(alpha, kl_pp, kl_bp, gamma, q_inf);
        let cor5_lower = if kl_pen.is_infinite() {
            f64::NEG_INFINITY
        } else {
            adv_term - kl_pen
        };

        let verdicts = BoundVerdicts {
            lemma1_identity: (true_gap - lemma1_rhs).abs() <= CERT_TOL,
            dist_gap_lhs_le_model: dist_gap_lhs <= dist_gap_model_rhs + CERT_TOL,
            dist_gap_model_le_free: dist_gap_model_rhs <= dist_gap_free_rhs + CERT_TOL,
            thm1_sound: thm1_lower <= true_gap + CERT_TOL,
            cor5_sound: cor5_lower <= true_gap + CERT_TOL,
            cor5_rhs_le_thm1_rhs: cor5_lower <= thm1_lower + CERT_TOL,
        };

        Ok(BoundReport {
            alpha,
            true_gap,
            lemma1_rhs,
            dist_gap_lhs,
            dist_gap_model_rhs,
            dist_gap_free_rhs,
            thm1_lower,
            cor5_lower,
            q_inf_norm: q_inf,
            verdicts,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cert::{random_mdp, random_policy};
    use crate::rng::stream_rng;
    use rand::Rng;

    #[test]
    fn identical_policies_zero_gap() {
        let mut rng = stream_rng(1, 0);
        let mdp = random_mdp(&mut rng, 4, 3, 0.9);
        let pi = random_policy(&mut rng, 4, 3);
        let (gap, rhs) = performance_difference(&mdp, &pi, &pi).unwrap();
        assert_eq!(gap, 0.0);
        assert!(rhs.abs() < 1e-12);
    }

    #[test]
    fn two_action_hand_example() {
        // Single state, a1 pays 0, a2 pays 1, gamma = 0.9.
        let mdp = Mdp::new(
            1,
            2,
            vec![vec![vec![1.0], vec![1.0]]],
            vec![vec![0.0, 1.0]],
            vec![1.0],
            0.9,
        )
        .unwrap();
        let pi = PolicyTable::deterministic(1, 2, &[0]).unwrap();
        let pi2 = PolicyTable::deterministic(1, 2, &[1]).unwrap();
        let (gap, rhs) = performance_difference(&mdp, &pi, &pi2).unwrap();
        assert!((gap - 10.0).abs() < 1e-9);
        assert!((rhs - 10.0).abs() < 1e-9);
    }

    #[test]
    fn lemma1_identity_on_random_tuples() {
        let mut rng = stream_rng(2, 0);
        for _ in 0..50 {
            let mdp = random_mdp(&mut rng, 6, 3, 0.95);
            let pi = random_policy(&mut rng, 6, 3);
            let pi2 = random_policy(&mut rng, 6, 3);
            let (gap, rhs) = performance_difference(&mdp, &pi, &pi2).unwrap();
            assert!((gap - rhs).abs() <= 1e-9, "gap {gap} rhs {rhs}");
        }
    }

    #[test]
    fn inner_product_bound_boundary_case() {
        let (lhs, rhs) = centered_inner_product_bound(&[1.0, -1.0], &[3.0, 1.0]).unwrap();
        assert_eq!(lhs, 2.0);
        assert_eq!(rhs, 2.0);
    }

    #[test]
    fn inner_product_bound_zero_vector() {
        let (lhs, rhs) = centered_inner_product_bound(&[0.0, 0.0], &[5.0, -1.0]).unwrap();
        assert_eq!(lhs, 0.0);
        assert_eq!(rhs, 0.0);
    }

    #[test]
    fn inner_product_bound_rejects_uncentered() {
        assert!(matches!(
            centered_inner_product_bound(&[1.0, 1.0], &[1.0, 1.0]),
            Err(Error::NotCentered(_))
        ));
    }

    #[test]
    fn inner_product_bound_randomized() {
        let mut rng = stream_rng(3, 0);
        for _ in 0..10_000 {
            let n = rng.random_range(2..20usize);
            let mut x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mean = x.iter().sum::<f64>() / n as f64;
            for v in x.iter_mut() {
                *v -= mean;
            }
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let (lhs, rhs) = centered_inner_product_bound(&x, &y).unwrap();
            assert!(lhs <= rhs + 1e-10);
        }
    }

    #[test]
    fn dist_gap_identical_triple_is_zero() {
        let mut rng = stream_rng(4, 0);
        let mdp = random_mdp(&mut rng, 5, 3, 0.9);
        let pi = random_policy(&mut rng, 5, 3);
        let (lhs, model, free) = state_dist_gap(&mdp, &pi, &pi, &pi, 0.5).unwrap();
        assert!(lhs < 1e-10);
        assert_eq!(model, 0.0);
        assert_eq!(free, 0.0);
    }

    #[test]
    fn dist_gap_alpha_one_ignores_beta() {
        let mut rng = stream_rng(5, 0);
        let mdp = random_mdp(&mut rng, 5, 3, 0.9);
        let pi = random_policy(&mut rng, 5, 3);
        let beta = random_policy(&mut rng, 5, 3);
        let (lhs, model, free) = state_dist_gap(&mdp, &pi, &pi, &beta, 1.0).unwrap();
        assert!(lhs < 1e-10);
        assert_eq!(model, 0.0);
        assert_eq!(free, 0.0);
    }

    #[test]
    fn dist_gap_chain_on_random_tuples() {
        let mut rng = stream_rng(6, 0);
        for _ in 0..100 {
            let mdp = random_mdp(&mut rng, 6, 3, 0.9);
            let pi = random_policy(&mut rng, 6, 3);
            let pi2 = random_policy(&mut rng, 6, 3);
            let beta = random_policy(&mut rng, 6, 3);
            let (lhs, model, free) = state_dist_gap(&mdp, &pi, &pi2, &beta, 0.5).unwrap();
            assert!(lhs <= model + CERT_TOL, "lhs {lhs} model {model}");
            assert!(model <= free + CERT_TOL, "model {model} free {free}");
        }
    }

    #[test]
    fn thm1_zero_at_identity_and_beta_free_at_alpha_one() {
        let mut rng = stream_rng(7, 0);
        let mdp = random_mdp(&mut rng, 5, 3, 0.9);
        let pi = random_policy(&mut rng, 5, 3);
        let b1 = random_policy(&mut rng, 5, 3);
        let b2 = random_policy(&mut rng, 5, 3);

        assert_eq!(thm1_lower_bound(&mdp, &pi, &pi, &b1, 1.0).unwrap(), 0.0);

        let pi2 = random_policy(&mut rng, 5, 3);
        let with_b1 = thm1_lower_bound(&mdp, &pi, &pi2, &b1, 1.0).unwrap();
        let with_b2 = thm1_lower_bound(&mdp, &pi, &pi2, &b2, 1.0).unwrap();
        assert_eq!(with_b1.to_bits(), with_b2.to_bits());
    }

    #[test]
    fn bounds_sound_on_random_tuples() {
        let mut rng = stream_rng(8, 0);
        for _ in 0..200 {
            let mdp = random_mdp(&mut rng, 5, 3, 0.95);
            let pi = random_policy(&mut rng, 5, 3);
            let pi2 = random_policy(&mut rng, 5, 3);
            let beta = random_policy(&mut rng, 5, 3);
            let alpha: f64 = rng.random();
            let (gap, _) = performance_difference(&mdp, &pi, &pi2).unwrap();
            let t = thm1_lower_bound(&mdp, &pi, &pi2, &beta, alpha).unwrap();
            let c = cor5_lower_bound(&mdp, &pi, &pi2, &beta, alpha).unwrap();
            assert!(t <= gap + CERT_TOL, "thm1 {t} gap {gap}");
            assert!(c <= gap + CERT_TOL, "cor5 {c} gap {gap}");
        }
    }

    #[test]
    fn cor5_infinite_kl_gives_neg_inf_sentinel() {
        let mdp = Mdp::new(
            1,
            3,
            vec![vec![vec![1.0], vec![1.0], vec![1.0]]],
            vec![vec![0.0, 1.0, 0.5]],
            vec![1.0],
            0.9,
        )
        .unwrap();
        // KL(beta || pi') is infinite: beta has mass on an action pi'
        // assigns zero to; KL(pi || pi') stays finite and positive.
        let pi = PolicyTable::new(vec![vec![0.3, 0.7, 0.0]]).unwrap();
        let pi2 = PolicyTable::new(vec![vec![0.5, 0.5, 0.0]]).unwrap();
        let beta = PolicyTable::new(vec![vec![0.2, 0.3, 0.5]]).unwrap();
        let c = cor5_lower_bound(&mdp, &pi, &pi2, &beta, 0.5).unwrap();
        assert_eq!(c, f64::NEG_INFINITY);
        // at alpha = 1 the beta factor is skipped and the bound is finite
        let c1 = cor5_lower_bound(&mdp, &pi, &pi2, &beta, 1.0).unwrap();
        assert!(c1.is_finite());
    }

    #[test]
    fn alpha_zero_uses_only_the_off_policy_terms() {
        let mut rng = stream_rng(11, 0);
        let mdp = random_mdp(&mut rng, 5, 3, 0.9);
        let pi = random_policy(&mut rng, 5, 3);
        let pi2 = random_policy(&mut rng, 5, 3);
        let beta = random_policy(&mut rng, 5, 3);
        let got = thm1_lower_bound(&mdp, &pi, &pi2, &beta, 0.0).unwrap();

        // manual: rho^beta . Abar - gamma/(1-gamma)^2 tv(pi,pi') tv(beta,pi') ||q||
        let vb_pi = solve_values(&mdp, &pi).unwrap();
        let vb_beta = solve_values(&mdp, &beta).unwrap();
        let abar = policy_advantage_diff(&vb_pi, &pi, &pi2);
        let adv: f64 = vb_beta.rho.iter().zip(&abar).map(|(r, a)| r * a).sum();
        let q_inf = vb_pi
            .q
            .iter()
            .flatten()
            .map(|x| x.abs())
            .fold(0.0, f64::max);
        let gamma = mdp.gamma();
        let expected = adv
            - gamma / (1.0 - gamma).powi(2)
                * (tv_max(&pi, &pi2).unwrap() * tv_max(&beta, &pi2).unwrap())
                * q_inf;
        assert_eq!(got.to_bits(), expected.to_bits());
    }

    #[test]
    fn cor5_identity_is_zero() {
        let mut rng = stream_rng(9, 0);
        let mdp = random_mdp(&mut rng, 4, 3, 0.9);
        let pi = random_policy(&mut rng, 4, 3);
        assert_eq!(cor5_lower_bound(&mdp, &pi, &pi, &pi, 0.3).unwrap(), 0.0);
    }

    #[test]
    fn report_fields_consistent_with_standalone_ops() {
        let mut rng = stream_rng(10, 0);
        let mdp = random_mdp(&mut rng, 5, 3, 0.9);
        let pi = random_policy(&mut rng, 5, 3);
        let pi2 = random_policy(&mut rng, 5, 3);
        let beta = random_policy(&mut rng, 5, 3);
        let alpha = 0.37;
        let report = BoundReport::compute(&mdp, &pi, &pi2, &beta, alpha).unwrap();

        let (gap, rhs) = performance_difference(&mdp, &pi, &pi2).unwrap();
        let (lhs, model, free) = state_dist_gap(&mdp, &pi, &pi2, &beta, alpha).unwrap();
        let t = thm1_lower_bound(&mdp, &pi, &pi2, &beta, alpha).unwrap();
        let c = cor5_lower_bound(&mdp, &pi, &pi2, &beta, alpha).unwrap();

        assert_eq!(report.true_gap.to_bits(), gap.to_bits());
        assert_eq!(report.lemma1_rhs.to_bits(), rhs.to_bits());
        assert_eq!(report.dist_gap_lhs.to_bits(), lhs.to_bits());
        assert_eq!(report.dist_gap_model_rhs.to_bits(), model.to_bits());
        assert_eq!(report.dist_gap_free_rhs.to_bits(), free.to_bits());
        assert_eq!(report.thm1_lower.to_bits(), t.to_bits());
        assert_eq!(report.cor5_lower.to_bits(), c.to_bits());
        assert!(report.verdicts.valid());
    }

    #[test]
    fn report_json_round_trips_with_sentinels() {
        let mdp = Mdp::new(
            1,
            3,
            vec![vec![vec![1.0], vec![1.0], vec![1.0]]],
            vec![vec![0.0, 1.0, 0.5]],
            vec![1.0],
            0.9,
        )
        .unwrap();
        let pi = PolicyTable::new(vec![vec![0.3, 0.7, 0.0]]).unwrap();
        let pi2 = PolicyTable::new(vec![vec![0.5, 0.5, 0.0]]).unwrap();
        let beta = PolicyTable::new(vec![vec![0.2, 0.3, 0.5]]).unwrap();
        let report = BoundReport::compute(&mdp, &pi, &pi2, &beta, 0.5).unwrap();
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.contains("\"-inf\""));
        let back: BoundReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.cor5_lower, f64::NEG_INFINITY);
        assert!(back.verdicts.cor5_sound);
    }
}
