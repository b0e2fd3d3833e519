//! `train`: trust-region training runs with experience replay over an
//! (alpha, seed) grid, with per-cell CSVs and an aggregated curve file.

use anyhow::{Context, Result};
use clap::Args;
use monobound::envs::build;
use monobound::rng::derive_seed;
use monobound::trpo::{Trainer, TrpoConfig};
use rayon::prelude::*;
use std::path::Path;

use crate::config::{parse_f64_list, FileConfig};
use crate::envspec::parse_env_spec;
use crate::output::{fmt_f64, write_text, DETERMINISM_HEADER};

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Environment spec, e.g. grid:6x6,goal=35,penalty=-0.04.
    #[arg(long)]
    pub env: Option<String>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub env_seed: Option<u64>,
    /// Comma-separated mixture coefficients.
    #[arg(long)]
    pub alphas: Option<String>,
    /// Number of independent runs per alpha.
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// GAE decay rate.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Trust region size.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Transitions per on-policy trajectory.
    #[arg(long)]
    pub traj_len: Option<usize>,
    /// Replay buffer capacity in trajectories.
    #[arg(long)]
    pub buffer_cap: Option<usize>,
    /// Trajectories drawn from the buffer per epoch.
    #[arg(long)]
    pub draw_count: Option<usize>,
    /// Audit every update against the exact KL-form bound.
    #[arg(long)]
    pub audit: bool,
}

pub const CELL_CSV_HEADER: &str =
    "epoch,mean_return,eta_exact,surrogate_before,surrogate_after,kl,alpha,bound_audit";

pub struct Cell {
    alpha: f64,
    seed_index: usize,
    csv: String,
}

pub fn run(args: TrainArgs, file: &FileConfig, root_seed: u64, out: Option<&Path>) -> Result<i32> {
    let env_raw: String = file.resolve_required("env", args.env)?;
    let defaults = TrpoConfig::default();
    let gamma = file.resolve("gamma", args.gamma, defaults.gamma)?;
    let env_seed = file.resolve("env-seed", args.env_seed, 0)?;
    let alphas_raw = args
        .alphas
        .or_else(|| file.raw("alphas").map(str::to_string))
        .unwrap_or_else(|| "0.0,0.5,0.75,0.8,0.9,0.99,1.0".to_string());
    let alphas = parse_f64_list(&alphas_raw)?;
    let n_seeds = file.resolve("seeds", args.seeds, 10)?;
    let epochs = file.resolve("epochs", args.epochs, 200)?;
    let config_base = TrpoConfig {
        gamma,
        lambda: file.resolve("lambda", args.lambda, defaults.lambda)?,
        delta: file.resolve("delta", args.delta, defaults.delta)?,
        traj_len: file.resolve("traj-len", args.traj_len, defaults.traj_len)?,
        buffer_capacity: file.resolve("buffer-cap", args.buffer_cap, defaults.buffer_capacity)?,
        draw_count: file.resolve("draw-count", args.draw_count, defaults.draw_count)?,
        audit: file.resolve("audit", if args.audit { Some(true) } else { None }, false)?,
        ..defaults
    };
    anyhow::ensure!(!alphas.is_empty(), "alphas must be non-empty");
    anyhow::ensure!(
        n_seeds >= 1 && epochs >= 1,
        "seeds and epochs must be at least 1"
    );

    let spec = parse_env_spec(&env_raw, env_seed, gamma)?;
    let env = build(&spec).context("building environment")?;

    // (alpha, seed) cells are independent; run them in parallel with seeds
    // derived from the root so the outputs do not depend on scheduling.
    let cells: Vec<Cell> = alphas
        .iter()
        .enumerate()
        .flat_map(|(ai, &alpha)| (0..n_seeds).map(move |si| (ai, alpha, si)))
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(alpha_index, alpha, seed_index)| {
            let cell_index = (alpha_index * n_seeds + seed_index) as u64;
            let run_seed = derive_seed(root_seed, cell_index);
            let config = TrpoConfig {
                alpha,
                ..config_base.clone()
            };
            let mut trainer = Trainer::new(env.clone(), config, run_seed);
            let records = trainer.run(epochs)?;
            let mut csv = String::new();
            csv.push_str(DETERMINISM_HEADER);
            csv.push('\n');
            csv.push_str(CELL_CSV_HEADER);
            csv.push('\n');
            for r in &records {
                csv.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    r.epoch,
                    fmt_f64(r.mean_return),
                    r.eta_exact.map(fmt_f64).unwrap_or_default(),
                    fmt_f64(r.surrogate_before),
                    fmt_f64(r.surrogate_after),
                    fmt_f64(r.kl),
                    fmt_f64(r.alpha),
                    r.audit.map(|a| fmt_f64(a.cor5_bound)).unwrap_or_default(),
                ));
            }
            Ok(Cell {
                alpha,
                seed_index,
                csv,
            })
        })
        .collect::<Result<_>>()?;

    let out_dir = out.unwrap_or_else(|| Path::new("train_out"));
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    for cell in &cells {
        let name = format!("train_alpha{}_seed{}.csv", cell.alpha, cell.seed_index);
        write_text(Some(&out_dir.join(name)), &cell.csv)?;
    }

    // Aggregate by re-parsing the emitted per-cell CSVs so the aggregate always
    // matches recomputation from the written files.
    let aggregate = aggregate_cells(&alphas, n_seeds, epochs, &cells)?;
    write_text(Some(&out_dir.join("train_aggregate.csv")), &aggregate)?;

    eprintln!(
        "train: {} alphas x {} seeds x {} epochs written to {}",
        alphas.len(),
        n_seeds,
        epochs,
        out_dir.display()
    );
    Ok(0)
}

pub fn aggregate_cells(
    alphas: &[f64],
    n_seeds: usize,
    epochs: usize,
    cells: &[Cell],
) -> Result<String> {
    let mut body = String::new();
    body.push_str(DETERMINISM_HEADER);
    body.push('\n');
    body.push_str("epoch,alpha,mean_return,stderr_return\n");
    for &alpha in alphas {
        // per-epoch returns across seeds, parsed back out of the CSVs
        let mut by_epoch: Vec<Vec<f64>> = vec![Vec::with_capacity(n_seeds); epochs];
        for cell in cells.iter().filter(|c| c.alpha == alpha) {
            for line in cell
                .csv
                .lines()
                .filter(|l| !l.starts_with('#') && !l.starts_with("epoch"))
            {
                let mut fields = line.split(',');
                let epoch: usize = fields.next().unwrap().parse()?;
                let mean_return: f64 = fields.next().unwrap().parse()?;
                by_epoch[epoch].push(mean_return);
            }
        }
        for (epoch, returns) in by_epoch.iter().enumerate() {
            let n = returns.len() as f64;
            let mean = returns.iter().sum::<f64>() / n;
            let stderr = if returns.len() > 1 {
                let var = returns.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
                (var / n).sqrt()
            } else {
                0.0
            };
            body.push_str(&format!(
                "{},{},{},{}\n",
                epoch,
                fmt_f64(alpha),
                fmt_f64(mean),
                fmt_f64(stderr)
            ));
        }
    }
    Ok(body)
}
