//! The subcommands. Each writes its artifact to `out` and returns the process
//! exit code; errors carry their own codes.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use permgibbs_core::diagnostics::{tv_distance, CycleStats};
use permgibbs_core::environment::{discretize, sample_continuum, RealBox};
use permgibbs_core::exactgibbs::specification;
use permgibbs_core::lossnet::derive_seed;
use permgibbs_core::regime::regime_report;
use permgibbs_core::verify::{run_criterion, CriterionResult, VerifyOptions, VerifyReport, CRITERIA};
use permgibbs_core::{Error, GasConfig, PerfectSampler, RegimeOptions, Result};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::RunConfig;

/// Samples are drawn and written in blocks of this many indices.
const BLOCK: usize = 4096;

fn emit(out: &mut dyn Write, value: &Value) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Parameter(format!("thread pool: {e}")))
}

/// Exit code 0 iff the uniqueness condition holds, 1 otherwise.
pub fn regime(cfg: &RunConfig, out: &mut dyn Write) -> Result<i32> {
    let opts = RegimeOptions {
        tol: cfg.tol,
        closed_bound: cfg.closed_bound,
        good_density_override: cfg.good_density,
    };
    let report = regime_report(cfg.rho, cfg.alpha, &cfg.potential()?, &opts)?;
    emit(out, &json!({ "meta": cfg.meta(), "report": report }))?;
    Ok(if report.uniqueness_ok { 0 } else { 1 })
}

pub fn gen_env(cfg: &RunConfig, continuum: bool, out: &mut dyn Write) -> Result<i32> {
    let value = if continuum {
        let region = RealBox::new(
            cfg.bbox
                .axes()
                .iter()
                .map(|&(lo, hi)| (lo as f64, hi as f64 + 1.0))
                .collect(),
        )?;
        let pts = sample_continuum(cfg.dim, &region, cfg.rho, cfg.seed)?;
        let (env, _) = discretize(&pts);
        json!({
            "meta": cfg.meta(),
            "continuum": pts,
            "environment": serde_json::from_str::<Value>(&env.to_json()?)?,
        })
    } else {
        let env = cfg.environment()?;
        json!({ "meta": cfg.meta(), "environment": serde_json::from_str::<Value>(&env.to_json()?)? })
    };
    emit(out, &value)?;
    Ok(0)
}

fn sampler(cfg: &RunConfig) -> Result<PerfectSampler> {
    let env = cfg.environment()?;
    Ok(PerfectSampler::for_instance(
        &env,
        &cfg.volume(&env)?,
        &cfg.boundary()?,
        cfg.alpha,
        &cfg.potential()?,
        cfg.max_points,
    )?
    .with_max_doublings(cfg.max_window_doublings))
}

/// One JSON line per sample, in index order whatever `jobs` is.
pub fn sample(cfg: &RunConfig, jobs: usize, dump_marks: Option<&Path>, out: &mut dyn Write) -> Result<i32> {
    let sampler = sampler(cfg)?;
    let digest = cfg.digest();
    let pool = pool(jobs)?;
    if let Some(dir) = dump_marks {
        std::fs::create_dir_all(dir)?;
    }
    for start in (0..cfg.n_samples).step_by(BLOCK) {
        let end = (start + BLOCK).min(cfg.n_samples);
        let draws: Vec<Result<_>> = pool.install(|| {
            (start..end)
                .into_par_iter()
                .map(|i| sampler.draw(derive_seed(cfg.seed, i as u64)))
                .collect()
        });
        for (i, draw) in (start..end).zip(draws) {
            let draw = draw?;
            let mut line = serde_json::to_value(&draw)?;
            line["config_digest"] = json!(digest);
            line["index"] = json!(i);
            serde_json::to_writer(&mut *out, &line)?;
            writeln!(out)?;
            if let Some(dir) = dump_marks {
                let marks = sampler.marks_for(draw.seed)?;
                std::fs::write(dir.join(format!("marks-{i:06}.json")), marks.to_json()?)?;
            }
        }
    }
    Ok(0)
}

pub fn exact_dist(cfg: &RunConfig, out: &mut dyn Write) -> Result<i32> {
    let env = cfg.environment()?;
    let table = specification(
        &env,
        &cfg.volume(&env)?,
        &cfg.boundary()?,
        cfg.alpha,
        &cfg.potential()?,
        cfg.max_points,
    )?;
    emit(
        out,
        &json!({ "meta": cfg.meta(), "table": serde_json::from_str::<Value>(&table.to_json()?)? }),
    )?;
    Ok(0)
}

fn tally(samples: &[GasConfig]) -> (CycleStats, BTreeMap<GasConfig, u64>) {
    let mut stats = CycleStats::new();
    let mut counts = BTreeMap::new();
    for g in samples {
        stats.add(g);
        *counts.entry(g.clone()).or_insert(0) += 1;
    }
    (stats, counts)
}

/// Cycle statistics of the samples in `input` (lines written by `sample`),
/// or of `n_samples` fresh samples; with the exact TV distance when the
/// volume is small enough to enumerate.
pub fn stats(
    cfg: &RunConfig,
    jobs: usize,
    input: Option<&Path>,
    csv: Option<&Path>,
    out: &mut dyn Write,
) -> Result<i32> {
    let samples: Vec<GasConfig> = match input {
        Some(path) => std::fs::read_to_string(path)?
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                let v: Value = serde_json::from_str(l)?;
                let sample = v
                    .get("sample")
                    .ok_or_else(|| Error::Parameter(format!("{}: line without a sample", path.display())))?;
                Ok(serde_json::from_value(sample.clone())?)
            })
            .collect::<Result<_>>()?,
        None => {
            let sampler = sampler(cfg)?;
            pool(jobs)?.install(|| {
                (0..cfg.n_samples)
                    .into_par_iter()
                    .map(|i| sampler.sample(derive_seed(cfg.seed, i as u64)))
                    .collect::<Result<_>>()
            })?
        }
    };
    // chunked tallies merge to the same totals in any order
    let (stats, counts) = pool(jobs)?.install(|| {
        samples.par_chunks(BLOCK).map(tally).reduce(
            || (CycleStats::new(), BTreeMap::new()),
            |(mut s, mut c), (s2, c2)| {
                s.merge(&s2);
                for (g, n) in c2 {
                    *c.entry(g).or_insert(0) += n;
                }
                (s, c)
            },
        )
    });
    let env = cfg.environment()?;
    let tv = match specification(
        &env,
        &cfg.volume(&env)?,
        &cfg.boundary()?,
        cfg.alpha,
        &cfg.potential()?,
        cfg.max_points,
    ) {
        Ok(table) if !samples.is_empty() => Some(tv_distance(&counts, &table)?),
        Ok(_) | Err(Error::Size { .. }) => None,
        Err(e) => return Err(e),
    };
    if let Some(path) = csv {
        std::fs::write(path, stats.to_csv())?;
    }
    emit(
        out,
        &json!({
            "meta": cfg.meta(),
            "stats": serde_json::from_str::<Value>(&stats.summary_json()?)?,
            "distinct_states": counts.len(),
            "tv_to_exact": tv,
        }),
    )?;
    Ok(0)
}

/// Runs the acceptance criteria; exit code 1 if any fails. One summary line
/// per criterion goes to `log`.
pub fn verify(
    opts: &VerifyOptions,
    only: &[u32],
    jobs: usize,
    out: &mut dyn Write,
    log: &mut dyn Write,
) -> Result<i32> {
    let ids: Vec<u32> = CRITERIA
        .iter()
        .map(|(id, _)| *id)
        .filter(|id| only.is_empty() || only.contains(id))
        .collect();
    if let Some(bad) = only.iter().find(|id| !ids.contains(id)) {
        return Err(Error::Parameter(format!("no criterion {bad}")));
    }
    let criteria: Vec<CriterionResult> = pool(jobs)?.install(|| {
        ids.par_iter()
            .map(|&id| run_criterion(id, opts))
            .collect::<Result<_>>()
    })?;
    for c in &criteria {
        writeln!(log, "{c}")?;
    }
    let report = VerifyReport {
        options: opts.clone(),
        all_passed: criteria.iter().all(|c| c.passed),
        criteria,
    };
    emit(out, &serde_json::to_value(&report)?)?;
    Ok(if report.all_passed { 0 } else { 1 })
}
