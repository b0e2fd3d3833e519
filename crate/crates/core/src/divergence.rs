//! Policy-to-policy distances: total variation, KL divergence, and the
//! mixture metric blending on- and off-policy expected KLs.
//!
//! Total variation uses the full-sum convention sum_a |pi - pi'| (range
//! [0, 2]), which equals the infinity norm of the difference of the induced
//! policy matrices; the half-sum convention is tv/2 when needed. KL is in
//! nats. Zero-probability handling: 0*log(0/q) = 0 and p*log(p/0) = +inf,
//! so an absolute-continuity failure propagates as an infinite divergence.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::PolicyTable;

fn check_same_shape(a: &PolicyTable, b: &PolicyTable) -> Result<()> {
    if a.n_states() != b.n_states() || a.n_actions() != b.n_actions() {
        return Err(Error::DimensionMismatch(format!(
            "policies are {}x{} and {}x{}",
            a.n_states(),
            a.n_actions(),
            b.n_states(),
            b.n_actions()
        )));
    }
    Ok(())
}

/// Per-state total variation sum_a |pi(a|s) - pi'(a|s)|, each in [0, 2].
pub fn tv_per_state(pi: &PolicyTable, pi_prime: &PolicyTable) -> Result<Vec<f64>> {
    check_same_shape(pi, pi_prime)?;
    Ok((0..pi.n_states())
        .map(|s| {
            (0..pi.n_actions())
                .map(|a| (pi.prob(s, a) - pi_prime.prob(s, a)).abs())
                .sum()
        })
        .collect())
}

/// Maximum per-state total variation; equals ||Pi^{pi'} - Pi^{pi}||_inf.
pub fn tv_max(pi: &PolicyTable, pi_prime: &PolicyTable) -> Result<f64> {
    Ok(tv_per_state(pi, pi_prime)?.into_iter().fold(0.0, f64::max))
}

/// Per-state D_KL(pi(.|s) || pi'(.|s)) in nats. Argument order is
/// (reference, candidate); the divergence is asymmetric.
pub fn kl_per_state(pi: &PolicyTable, pi_prime: &PolicyTable) -> Result<Vec<f64>> {
    check_same_shape(pi, pi_prime)?;
    Ok((0..pi.n_states())
        .map(|s| {
            let mut kl = 0.0_f64;
            for a in 0..pi.n_actions() {
                let p = pi.prob(s, a);
                if p == 0.0 {
                    continue;
                }
                let q = pi_prime.prob(s, a);
                if q == 0.0 {
                    return f64::INFINITY;
                }
                kl += p * (p / q).ln();
            }
            // KL >= 0 exactly; clear float round-off from near-identical rows.
            kl.max(0.0)
        })
        .collect())
}

/// max_s D_KL(pi(.|s) || pi'(.|s)); +inf on absolute-continuity failure.
pub fn kl_max(pi: &PolicyTable, pi_prime: &PolicyTable) -> Result<f64> {
    Ok(kl_per_state(pi, pi_prime)?.into_iter().fold(0.0, f64::max))
}

/// Expected KL under `weights`, which need not be normalized (an unnormalized
/// occupancy vector is accepted). States with zero weight are excluded, so an
/// infinite KL there does not poison the expectation.
pub fn expected_kl(pi: &PolicyTable, pi_prime: &PolicyTable, weights: &[f64]) -> Result<f64> {
    check_same_shape(pi, pi_prime)?;
    if weights.len() != pi.n_states() {
        return Err(Error::DimensionMismatch(format!(
            "{} weights for {} states",
            weights.len(),
            pi.n_states()
        )));
    }
    let mut total = 0.0;
    for &w in weights {
        if !w.is_finite() || w < 0.0 {
            return Err(Error::InvalidValue(format!(
                "weight {w} is negative or non-finite"
            )));
        }
        total += w;
    }
    if total == 0.0 {
        return Err(Error::ZeroWeights);
    }
    let kls = kl_per_state(pi, pi_prime)?;
    let mut acc = 0.0;
    for (w, kl) in weights.iter().zip(&kls) {
        if *w > 0.0 {
            acc += (w / total) * kl;
        }
    }
    Ok(acc)
}

/// Square root of a product where 0 * inf is read as 0: if either factor is
/// exactly zero the whole geometric-mean term vanishes.
pub(crate) fn sqrt_product(a: f64, b: f64) -> f64 {
    if a == 0.0 || b == 0.0 {
        0.0
    } else {
        (a * b).sqrt()
    }
}

/// Mixture KL metric
/// alpha * E_{rho_pi}[KL(pi||pi')]
///   + (1-alpha) * sqrt(E_{rho_pi}[KL(pi||pi')] * E_{rho_beta}[KL(beta||pi')]).
///
/// At alpha = 1 this is exactly the on-policy expected KL; the off-policy
/// factor is never computed, so beta cannot perturb the value.
pub fn mixture_kl_metric(
    pi: &PolicyTable,
    pi_prime: &PolicyTable,
    beta: &PolicyTable,
    rho_pi: &[f64],
    rho_beta: &[f64],
    alpha: f64,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidValue(format!(
            "alpha = {alpha} outside [0, 1]"
        )));
    }
    let on = expected_kl(pi, pi_prime, rho_pi)?;
    if alpha == 1.0 {
        return Ok(on);
    }
    let off = expected_kl(beta, pi_prime, rho_beta)?;
    let cross = sqrt_product(on, off);
    Ok(if alpha == 0.0 {
        cross
    } else {
        alpha * on + (1.0 - alpha) * cross
    })
}

pub(crate) mod serde_inf {
    //! f64 fields that may be IEEE infinite; serialized as "inf" / "-inf".
    use serde::de::Error as DeError;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else if *x > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum NumOrStr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match NumOrStr::deserialize(d)? {
            NumOrStr::Num(x) => Ok(x),
            NumOrStr::Str(s) => match s.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(D::Error::custom(format!(
                    "unknown float sentinel {other:?}"
                ))),
            },
        }
    }
}

mod serde_inf_vec {
    use serde::de::Error as DeError;
    use serde::ser::SerializeSeq;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for &x in v {
            if x.is_finite() {
                seq.serialize_element(&x)?;
            } else if x > 0.0 {
                seq.serialize_element("inf")?;
            } else {
                seq.serialize_element("-inf")?;
            }
        }
        seq.end()
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum NumOrStr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let raw: Vec<NumOrStr> = Vec::deserialize(d)?;
        raw.into_iter()
            .map(|e| match e {
                NumOrStr::Num(x) => Ok(x),
                NumOrStr::Str(s) => match s.as_str() {
                    "inf" => Ok(f64::INFINITY),
                    "-inf" => Ok(f64::NEG_INFINITY),
                    other => Err(D::Error::custom(format!(
                        "unknown float sentinel {other:?}"
                    ))),
                },
            })
            .collect()
    }
}

/// Every divergence between one policy pair, plus the weighting used for the
/// expected KL.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DivergenceProfile {
    pub tv_per_state: Vec<f64>,
    pub tv_max: f64,
    #[serde(with = "serde_inf_vec")]
    pub kl_per_state: Vec<f64>,
    #[serde(with = "serde_inf")]
    pub kl_max: f64,
    #[serde(with = "serde_inf")]
    pub expected_kl: f64,
    /// Normalized weighting distribution the expectation was taken under.
    pub weights: Vec<f64>,
}

impl DivergenceProfile {
    pub fn compute(pi: &PolicyTable, pi_prime: &PolicyTable, weights: &[f64]) -> Result<Self> {
        let tv = tv_per_state(pi, pi_prime)?;
        let tv_max = tv.iter().cloned().fold(0.0, f64::max);
        let kls = kl_per_state(pi, pi_prime)?;
        let kl_max = kls.iter().cloned().fold(0.0, f64::max);
        let total: f64 = weights.iter().sum();
        if total == 0.0 {
            return Err(Error::ZeroWeights);
        }
        let normalized: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let expected = expected_kl(pi, pi_prime, weights)?;
        Ok(DivergenceProfile {
            tv_per_state: tv,
            tv_max,
            kl_per_state: kls,
            kl_max,
            expected_kl: expected,
            weights: normalized,
        })
    }
}
