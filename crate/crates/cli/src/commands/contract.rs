use mcre_core::env::sample_path;
use mcre_core::models::linear::{op_norm, shared_noise_differences};
use mcre_core::report::{fmt_f64, CsvRecord};
use mcre_core::{EnvProcess, SeedStream};
use nalgebra::DVector;
use rayon::prelude::*;

use super::{axis, build, log_plot, vector_start, write_plot, write_table, Built};
use crate::error::LabError;
use crate::Context;

/// Blocks enumerated exhaustively when the support is small, else sampled.
const MAX_ENUMERATED: usize = 64;
const SAMPLED_BLOCKS: usize = 8;

/// Environment blocks of length `p` to probe the block drift at.
pub fn probe_blocks(env: &EnvProcess, p: usize, stream: &SeedStream) -> Result<Vec<Vec<f64>>, LabError> {
    if let Some(support) = env.support() {
        let count = support.len().checked_pow(p as u32).filter(|c| *c <= MAX_ENUMERATED);
        if let Some(count) = count {
            return Ok((0..count)
                .map(|mut i| {
                    (0..p)
                        .map(|_| {
                            let v = support[i % support.len()];
                            i /= support.len();
                            v
                        })
                        .collect()
                })
                .collect());
        }
    }
    (0..SAMPLED_BLOCKS as u64)
        .map(|r| Ok(sample_path(env, 1, p as i64, &mut stream.rng(r))?.values().to_vec()))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
struct ContractRow {
    t: usize,
    mean_norm: f64,
    min_norm: f64,
    max_norm: f64,
    max_ratio: f64,
}

impl CsvRecord for ContractRow {
    const HEADER: &'static [&'static str] = &["t", "mean_norm", "min_norm", "max_norm", "max_ratio_to_norm_product"];

    fn fields(&self) -> Vec<String> {
        vec![self.t.to_string(), fmt_f64(self.mean_norm), fmt_f64(self.min_norm), fmt_f64(self.max_norm), fmt_f64(self.max_ratio)]
    }
}

#[derive(Debug, Clone, PartialEq)]
struct BlockRow {
    block: Vec<f64>,
    gamma: f64,
}

impl CsvRecord for BlockRow {
    const HEADER: &'static [&'static str] = &["block", "gamma"];

    fn fields(&self) -> Vec<String> {
        let ys: Vec<String> = self.block.iter().map(|y| fmt_f64(*y)).collect();
        vec![ys.join(" "), fmt_f64(self.gamma)]
    }
}

pub fn run(ctx: &mut Context) -> Result<(), LabError> {
    let m = match build(ctx)? {
        Built::Linear(m) => m,
        _ => return Err(mcre_core::Error::Unsupported("the contract command applies to linear models only".into()).into()),
    };
    let c = ctx.config.contract.clone();
    let stream = ctx.stream.clone();
    let dim = m.kernel.dim();
    let x1 = vector_start(&c.x1, axis(dim, 1.0), "contract.x1")?;
    let x2 = vector_start(&c.x2, DVector::zeros(dim), "contract.x2")?;
    let d0 = (&x1 - &x2).norm();
    if d0 == 0.0 {
        return Err(LabError::Config("contract.x1 and contract.x2 coincide".into()));
    }
    if c.reps == 0 || c.steps == 0 {
        return Err(LabError::Config("contract.steps and contract.reps must be positive".into()));
    }

    let env_stream = stream.derive("env");
    let chain_stream = stream.derive("chain");
    // Per replication: (|d_t|, |d_t| / (|||A_t ⋯ A_1||| |d_0|)) for t = 0..=steps.
    let runs: Vec<Vec<(f64, f64)>> = (0..c.reps as u64)
        .into_par_iter()
        .map(|r| {
            let path = sample_path(&m.params.env, 0, c.steps as i64 - 1, &mut env_stream.rng(r))?;
            let diffs = shared_noise_differences(&m.kernel, &x1, &x2, &path, &mut chain_stream.rng(r))?;
            diffs
                .iter()
                .enumerate()
                .map(|(t, d)| {
                    let bound = op_norm(&m.kernel.product(&path.values()[..t])?)? * d0;
                    let n = d.norm();
                    Ok((n, if bound > 0.0 { n / bound } else { 0.0 }))
                })
                .collect()
        })
        .collect::<mcre_core::Result<_>>()?;
    let rows: Vec<ContractRow> = (0..=c.steps)
        .map(|t| {
            let norms = runs.iter().map(|r| r[t].0);
            ContractRow {
                t,
                mean_norm: norms.clone().sum::<f64>() / c.reps as f64,
                min_norm: norms.clone().fold(f64::INFINITY, f64::min),
                max_norm: norms.fold(0.0, f64::max),
                max_ratio: runs.iter().map(|r| r[t].1).fold(0.0, f64::max),
            }
        })
        .collect();
    let worst = rows.iter().map(|r| r.max_ratio).fold(0.0, f64::max);
    ctx.report.constant("max_ratio_to_norm_product", worst);
    ctx.report.constant("final_mean_norm", rows.last().expect("steps > 0").mean_norm);
    ctx.report.verdict(
        "shared-noise contraction",
        worst <= 1.0 + 1e-9,
        if worst <= 1.0 + 1e-9 { String::new() } else { format!("difference norm exceeds the product norm bound by a factor {worst}") },
    );

    let blocks = probe_blocks(&m.params.env, m.params.p, &stream.derive("blocks"))?;
    let block_rows: Vec<BlockRow> = blocks.into_iter().map(|b| BlockRow { gamma: m.multistep.block_gamma(&b), block: b }).collect();
    let gammas = block_rows.iter().map(|r| r.gamma);
    ctx.report.constant("block_gamma_min", gammas.clone().fold(f64::INFINITY, f64::min));
    ctx.report.constant("block_gamma_max", gammas.fold(0.0, f64::max));
    ctx.report.constant("block_k", m.multistep.drift().k);

    let s = m.stability;
    ctx.report.constant("stability_mean", s.mean);
    ctx.report.constant("stability_std_error", s.std_error);
    ctx.report.constant("stability_ci_low", s.ci_low);
    ctx.report.constant("stability_ci_high", s.ci_high);
    ctx.report.verdict(
        "random-coefficient stability",
        s.ci_high < 0.0,
        if s.ci_high < 0.0 { String::new() } else { format!("CI [{}, {}] does not lie below 0", s.ci_low, s.ci_high) },
    );

    write_table(ctx, "contract.csv", &rows)?;
    write_plot(ctx, log_plot("Shared-noise difference norms", "contract.csv", "t", &["mean_norm"], Some(["min_norm", "max_norm"])))?;
    write_table(ctx, "blocks.csv", &block_rows)?;
    Ok(())
}
