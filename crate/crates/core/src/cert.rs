//! Randomized numerical certification of the performance bounds.
//!
//! Tuples (MDP, pi, pi', beta, alpha) are generated with Dirichlet(1,...,1)
//! rows, rewards uniform in [-1, 1], discounts from a fixed set, and sizes in
//! small ranges. Each tuple gets its own ChaCha stream derived from the root
//! seed, so the sweep is order-independent and safe to parallelize.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::BoundReport;
use crate::error::Result;
use crate::mdp::{Mdp, PolicyTable};
use crate::rng::{dirichlet_row, stream_rng};

/// Determinism caveat stamped into machine-readable output.
pub const FP_NOTE: &str = "byte-identical for a fixed seed and build; \
ln/exp go through the platform libm, so cross-platform byte equality is not guaranteed";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CertConfig {
    pub n_tuples: usize,
    pub root_seed: u64,
    /// Inclusive state-count range.
    pub s_range: (usize, usize),
    /// Inclusive action-count range.
    pub a_range: (usize, usize),
    pub gammas: Vec<f64>,
}

impl Default for CertConfig {
    fn default() -> Self {
        CertConfig {
            n_tuples: 10_000,
            root_seed: 1,
            s_range: (2, 10),
            a_range: (2, 5),
            gammas: vec![0.9, 0.95, 0.99],
        }
    }
}

/// One generated certification input, serializable so a violating tuple can
/// be dumped verbatim for reproduction.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CertTuple {
    pub index: usize,
    pub mdp: Mdp,
    pub pi: PolicyTable,
    pub pi_prime: PolicyTable,
    pub beta: PolicyTable,
    pub alpha: f64,
}

pub fn random_mdp<R: Rng>(rng: &mut R, n_states: usize, n_actions: usize, gamma: f64) -> Mdp {
    let transition = (0..n_states)
        .map(|_| {
            (0..n_actions)
                .map(|_| dirichlet_row(rng, n_states, 1.0))
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
    let rho0 = dirichlet_row(rng, n_states, 1.0);
    Mdp::new(n_states, n_actions, transition, reward, rho0, gamma)
        .expect("generated MDP is valid by construction")
}

pub fn random_policy<R: Rng>(rng: &mut R, n_states: usize, n_actions: usize) -> PolicyTable {
    PolicyTable::new(
        (0..n_states)
            .map(|_| dirichlet_row(rng, n_actions, 1.0))
            .collect(),
    )
    .expect("generated policy is valid by construction")
}

fn tuple_from_rng(cfg: &CertConfig, index: usize, rng: &mut ChaCha8Rng) -> CertTuple {
    let n_states = rng.random_range(cfg.s_range.0..=cfg.s_range.1);
    let n_actions = rng.random_range(cfg.a_range.0..=cfg.a_range.1);
    let gamma = cfg.gammas[rng.random_range(0..cfg.gammas.len())];
    let mdp = random_mdp(rng, n_states, n_actions, gamma);
    let pi = random_policy(rng, n_states, n_actions);
    let pi_prime = random_policy(rng, n_states, n_actions);
    let beta = random_policy(rng, n_states, n_actions);
    // Mostly uniform alpha, with point masses on the endpoints so the
    // pure on- and pure off-policy paths are exercised too.
    let u: f64 = rng.random();
    let alpha = if u < 0.05 {
        0.0
    } else if u < 0.10 {
        1.0
    } else {
        rng.random()
    };
    CertTuple {
        index,
        mdp,
        pi,
        pi_prime,
        beta,
        alpha,
    }
}

/// Deterministic tuple for `index` under `cfg.root_seed`.
pub fn generate_tuple(cfg: &CertConfig, index: usize) -> CertTuple {
    let mut rng = stream_rng(cfg.root_seed, index as u64);
    tuple_from_rng(cfg, index, &mut rng)
}

/// Worst observed slacks per inequality (an inequality lhs <= rhs contributes
/// lhs - rhs, so anything above the tolerance is a violation) plus counters.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CertSummary {
    pub n_tuples: usize,
    pub n_violations: usize,
    /// Tuples whose KL bound degenerated to the -inf sentinel.
    pub n_infinite_kl: usize,
    pub max_lemma1_abs_dev: f64,
    pub max_lhs_minus_model: f64,
    pub max_model_minus_free: f64,
    pub max_thm1_minus_gap: f64,
    /// Over finite-KL tuples only.
    pub max_cor5_minus_gap: f64,
    /// Observation only: > 0 would mean the KL bound exceeded the TV bound
    /// somewhere. Finite-KL tuples only.
    pub max_cor5_minus_thm1: f64,
    pub root_seed: u64,
    pub fp_note: String,
}

#[derive(Clone, Debug)]
pub struct CertRun {
    /// One report per tuple, in tuple-index order.
    pub reports: Vec<BoundReport>,
    /// Tuples whose verdicts failed, for diagnostic dumps.
    pub violations: Vec<CertTuple>,
    pub summary: CertSummary,
}

/// Run the full sweep. Tuples are independent; evaluation is parallel and the
/// output order is fixed by tuple index.
pub fn run_certification(cfg: &CertConfig) -> Result<CertRun> {
    let evaluated: Vec<(BoundReport, Option<CertTuple>)> = (0..cfg.n_tuples)
        .into_par_iter()
        .map(|index| {
            let tuple = generate_tuple(cfg, index);
            let report = BoundReport::compute(
                &tuple.mdp,
                &tuple.pi,
                &tuple.pi_prime,
                &tuple.beta,
                tuple.alpha,
            )?;
            let violation = if report.verdicts.valid() {
                None
            } else {
                Some(tuple)
            };
            Ok((report, violation))
        })
        .collect::<Result<_>>()?;

    let mut summary = CertSummary {
        n_tuples: cfg.n_tuples,
        n_violations: 0,
        n_infinite_kl: 0,
        max_lemma1_abs_dev: 0.0,
        max_lhs_minus_model: f64::NEG_INFINITY,
        max_model_minus_free: f64::NEG_INFINITY,
        max_thm1_minus_gap: f64::NEG_INFINITY,
        max_cor5_minus_gap: f64::NEG_INFINITY,
        max_cor5_minus_thm1: f64::NEG_INFINITY,
        root_seed: cfg.root_seed,
        fp_note: FP_NOTE.to_string(),
    };
    let mut reports = Vec::with_capacity(cfg.n_tuples);
    let mut violations = Vec::new();
    for (report, violation) in evaluated {
        summary.max_lemma1_abs_dev = summary
            .max_lemma1_abs_dev
            .max((report.true_gap - report.lemma1_rhs).abs());
        summary.max_lhs_minus_model = summary
            .max_lhs_minus_model
            .max(report.dist_gap_lhs - report.dist_gap_model_rhs);
        summary.max_model_minus_free = summary
            .max_model_minus_free
            .max(report.dist_gap_model_rhs - report.dist_gap_free_rhs);
        summary.max_thm1_minus_gap = summary
            .max_thm1_minus_gap
            .max(report.thm1_lower - report.true_gap);
        if report.cor5_lower.is_finite() {
            summary.max_cor5_minus_gap = summary
                .max_cor5_minus_gap
                .max(report.cor5_lower - report.true_gap);
            summary.max_cor5_minus_thm1 = summary
                .max_cor5_minus_thm1
                .max(report.cor5_lower - report.thm1_lower);
        } else {
            summary.n_infinite_kl += 1;
        }
        if let Some(tuple) = violation {
            summary.n_violations += 1;
            violations.push(tuple);
        }
        reports.push(report);
    }
    Ok(CertRun {
        reports,
        violations,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::BoundReport;

    #[test]
    fn tuples_are_deterministic_per_index() {
        let cfg = CertConfig::default();
        let a = generate_tuple(&cfg, 17);
        let b = generate_tuple(&cfg, 17);
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        let c = generate_tuple(&cfg, 18);
        assert_ne!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&c).unwrap()
        );
    }

    #[test]
    fn forced_identical_tuple_reports_all_zero() {
        let cfg = CertConfig::default();
        let t = generate_tuple(&cfg, 0);
        let report = BoundReport::compute(&t.mdp, &t.pi, &t.pi, &t.pi, t.alpha).unwrap();
        assert_eq!(report.true_gap, 0.0);
        assert_eq!(report.thm1_lower, 0.0);
        assert_eq!(report.cor5_lower, 0.0);
        assert_eq!(report.dist_gap_free_rhs, 0.0);
        assert!(report.verdicts.valid());
    }

    #[test]
    fn small_sweep_passes_and_is_reproducible() {
        let cfg = CertConfig {
            n_tuples: 200,
            ..CertConfig::default()
        };
        let run1 = run_certification(&cfg).unwrap();
        assert_eq!(run1.summary.n_violations, 0, "violations in small sweep");
        let run2 = run_certification(&cfg).unwrap();
        let json1: Vec<String> = run1
            .reports
            .iter()
            .map(|r| serde_json::to_string(r).unwrap())
            .collect();
        let json2: Vec<String> = run2
            .reports
            .iter()
            .map(|r| serde_json::to_string(r).unwrap())
            .collect();
        assert_eq!(json1, json2);
    }
}
