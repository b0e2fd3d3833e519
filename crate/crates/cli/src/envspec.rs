//! Compact environment spec strings for the CLI:
//!
//! - `chain:length=5,slip=0.1`
//! - `grid:4x4,goal=5,penalty=-0.04` (or `width=4,height=4`)
//! - `random:states=6,actions=3,conc=1.0`

use anyhow::{bail, Context, Result};
use monobound::envs::{EnvKind, EnvSpec};
use std::collections::HashMap;

pub fn parse_env_spec(raw: &str, seed: u64, gamma: f64) -> Result<EnvSpec> {
    let (kind_name, rest) = raw.split_once(':').unwrap_or((raw, ""));
    let mut shorthand_dims: Option<(usize, usize)> = None;
    let mut kv: HashMap<&str, &str> = HashMap::new();
    for tok in rest.split(',').filter(|t| !t.trim().is_empty()) {
        let tok = tok.trim();
        if let Some((k, v)) = tok.split_once('=') {
            kv.insert(k.trim(), v.trim());
        } else if let Some((w, h)) = tok.split_once('x') {
            shorthand_dims = Some((
                w.parse()
                    .with_context(|| format!("bad grid width in {tok:?}"))?,
                h.parse()
                    .with_context(|| format!("bad grid height in {tok:?}"))?,
            ));
        } else {
            bail!("unrecognized token {tok:?} in env spec {raw:?}");
        }
    }
    let get = |key: &str| kv.get(key).copied();
    let parse_or = |key: &str, default: f64| -> Result<f64> {
        match get(key) {
            Some(v) => v.parse().with_context(|| format!("bad {key} in {raw:?}")),
            None => Ok(default),
        }
    };

    let kind = match kind_name {
        "chain" => EnvKind::Chain {
            length: match get("length") {
                Some(v) => v
                    .parse()
                    .with_context(|| format!("bad length in {raw:?}"))?,
                None => bail!("chain spec needs length=N"),
            },
            slip: parse_or("slip", 0.1)?,
        },
        "grid" => {
            let (width, height) = match shorthand_dims {
                Some(dims) => dims,
                None => (
                    match get("width") {
                        Some(v) => v.parse().context("bad width")?,
                        None => bail!("grid spec needs WxH or width=/height="),
                    },
                    match get("height") {
                        Some(v) => v.parse().context("bad height")?,
                        None => bail!("grid spec needs WxH or width=/height="),
                    },
                ),
            };
            let goal = match get("goal") {
                Some(v) => v.parse().with_context(|| format!("bad goal in {raw:?}"))?,
                None => width * height - 1,
            };
            EnvKind::Gridworld {
                width,
                height,
                goal,
                step_penalty: parse_or("penalty", -0.04)?,
            }
        }
        "random" => EnvKind::Random {
            n_states: match get("states") {
                Some(v) => v.parse().context("bad states")?,
                None => bail!("random spec needs states=N"),
            },
            n_actions: match get("actions") {
                Some(v) => v.parse().context("bad actions")?,
                None => bail!("random spec needs actions=N"),
            },
            concentration: parse_or("conc", 1.0)?,
        },
        other => bail!("unknown environment kind {other:?} (chain, grid, random)"),
    };
    Ok(EnvSpec { kind, seed, gamma })
}
