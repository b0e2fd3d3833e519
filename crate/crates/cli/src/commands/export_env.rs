//! `export-env`: build an environment and emit its MDP as JSON.

use anyhow::{Context, Result};
use clap::Args;
use monobound::envs::build;
use std::path::Path;

use crate::config::FileConfig;
use crate::envspec::parse_env_spec;
use crate::output::write_text;

#[derive(Args, Debug)]
pub struct ExportEnvArgs {
    /// Environment spec, e.g. random:states=5,actions=3.
    #[arg(long)]
    pub env: Option<String>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub env_seed: Option<u64>,
}

pub fn run(args: ExportEnvArgs, file: &FileConfig, out: Option<&Path>) -> Result<i32> {
    let env_raw: String = file.resolve_required("env", args.env)?;
    let gamma = file.resolve("gamma", args.gamma, 0.95)?;
    let env_seed = file.resolve("env-seed", args.env_seed, 0)?;
    let spec = parse_env_spec(&env_raw, env_seed, gamma)?;
    let env = build(&spec).context("building environment")?;
    let mut json = env.mdp.to_json_string()?;
    json.push('\n');
    write_text(out, &json)?;
    Ok(0)
}
