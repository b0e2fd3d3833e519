//! `certify`: randomized numerical certification of every bound inequality.

use anyhow::Result;
use clap::Args;
use monobound::cert::{run_certification, CertConfig};
use std::path::Path;

use crate::config::{parse_f64_list, FileConfig};
use crate::output::write_text;

#[derive(Args, Debug)]
pub struct CertifyArgs {
    /// Number of random (MDP, pi, pi', beta, alpha) tuples.
    #[arg(long)]
    pub n_tuples: Option<usize>,
    /// Smallest state count.
    #[arg(long)]
    pub s_min: Option<usize>,
    /// Largest state count.
    #[arg(long)]
    pub s_max: Option<usize>,
    /// Smallest action count.
    #[arg(long)]
    pub a_min: Option<usize>,
    /// Largest action count.
    #[arg(long)]
    pub a_max: Option<usize>,
    /// Comma-separated discount set.
    #[arg(long)]
    pub gammas: Option<String>,
}

pub fn run(args: CertifyArgs, file: &FileConfig, seed: u64, out: Option<&Path>) -> Result<i32> {
    let defaults = CertConfig::default();
    let gammas_raw = args
        .gammas
        .or_else(|| file.raw("gammas").map(str::to_string))
        .unwrap_or_else(|| "0.9,0.95,0.99".to_string());
    let cfg = CertConfig {
        n_tuples: file.resolve("n-tuples", args.n_tuples, defaults.n_tuples)?,
        root_seed: seed,
        s_range: (
            file.resolve("s-min", args.s_min, defaults.s_range.0)?,
            file.resolve("s-max", args.s_max, defaults.s_range.1)?,
        ),
        a_range: (
            file.resolve("a-min", args.a_min, defaults.a_range.0)?,
            file.resolve("a-max", args.a_max, defaults.a_range.1)?,
        ),
        gammas: parse_f64_list(&gammas_raw)?,
    };
    anyhow::ensure!(cfg.n_tuples >= 1, "n-tuples must be at least 1");

    let run = run_certification(&cfg)?;

    let mut body = String::new();
    for report in &run.reports {
        body.push_str(&serde_json::to_string(report)?);
        body.push('\n');
    }
    for tuple in &run.violations {
        body.push_str(&serde_json::to_string(
            &serde_json::json!({ "violation_tuple": tuple }),
        )?);
        body.push('\n');
    }
    body.push_str(&serde_json::to_string(
        &serde_json::json!({ "summary": run.summary }),
    )?);
    body.push('\n');
    write_text(out, &body)?;

    let s = &run.summary;
    eprintln!(
        "certify: {} tuples, {} violations, {} infinite-KL sentinels",
        s.n_tuples, s.n_violations, s.n_infinite_kl
    );
    eprintln!(
        "  max slacks: lemma1 |dev| {:.3e}, lhs-model {:.3e}, model-free {:.3e}, thm1-gap {:.3e}, cor5-gap {:.3e}, cor5-thm1 {:.3e}",
        s.max_lemma1_abs_dev,
        s.max_lhs_minus_model,
        s.max_model_minus_free,
        s.max_thm1_minus_gap,
        s.max_cor5_minus_gap,
        s.max_cor5_minus_thm1
    );
    if s.n_violations > 0 {
        eprintln!("certify: FAILED, offending tuples serialized in output");
        return Ok(2);
    }
    Ok(0)
}
