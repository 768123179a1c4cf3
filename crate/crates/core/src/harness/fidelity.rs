use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use super::{derive_seed, FidelityMode};
use crate::em::{fit, FitConfig, InitMethod};
use crate::geometry::{sample_surface, TriangleMesh};
use crate::mixture::avg_loglik;
use crate::{Error, Result};

const FIT_STREAM: u64 = 1;
const EVAL_STREAM: u64 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub ks: Vec<usize>,
    pub inits: Vec<InitMethod>,
    pub modes: Vec<FidelityMode>,
    /// Fresh surface samples used to score each fit.
    pub eval_n: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            ks: vec![10, 50, 100],
            inits: vec![InitMethod::KMeansPlusPlus],
            modes: FidelityMode::ALL.to_vec(),
            eval_n: 50_000,
            max_iters: 25,
            tol: 1e-12,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FidelityRow {
    pub k: usize,
    pub init: String,
    pub mode: String,
    pub seed: u64,
    /// NaN when the fit failed.
    pub avg_loglik: f64,
    pub lower_bound: f64,
    pub jensen_bound: f64,
    pub iterations: usize,
    pub failed: bool,
    pub error: String,
}

/// Fits every `(k, init, mode)` combination and scores it on one shared
/// evaluation cloud. All modes at the same `(k, init)` use the same fit seed.
pub fn run_fidelity_sweep(mesh: &TriangleMesh, config: &SweepConfig) -> Result<Vec<FidelityRow>> {
    if config.ks.is_empty() || config.inits.is_empty() || config.modes.is_empty() {
        return Err(Error::validation("sweep needs at least one K, init and mode"));
    }
    let eval = sample_surface(mesh, config.eval_n, derive_seed(config.seed, EVAL_STREAM, 0))?;
    let mut jobs = Vec::new();
    for (ki, &k) in config.ks.iter().enumerate() {
        for (ii, &init) in config.inits.iter().enumerate() {
            for &mode in &config.modes {
                let seed = derive_seed(config.seed, FIT_STREAM, (ki * config.inits.len() + ii) as u64);
                jobs.push((k, init, mode, seed));
            }
        }
    }
    let rows = jobs
        .into_par_iter()
        .map(|(k, init, mode, seed)| {
            let primitives = mode.primitives(mesh);
            let fit_config = FitConfig {
                init,
                max_iters: config.max_iters,
                tol: config.tol,
                mode: mode.fit_mode(),
                seed,
                ..FitConfig::new(k)
            };
            let outcome = fit(&primitives, &fit_config).and_then(|r| Ok((avg_loglik(&eval, &r.model)?, r)));
            let mut row = FidelityRow {
                k,
                init: init.to_string(),
                mode: mode.to_string(),
                seed,
                avg_loglik: f64::NAN,
                lower_bound: f64::NAN,
                jensen_bound: f64::NAN,
                iterations: 0,
                failed: false,
                error: String::new(),
            };
            match outcome {
                Ok((ll, report)) => {
                    row.avg_loglik = ll;
                    row.lower_bound = *report.lower_bound_trace.last().expect("trace is never empty");
                    row.jensen_bound = *report.jensen_trace.last().expect("trace is never empty");
                    row.iterations = report.iterations_run;
                }
                Err(e) => {
                    row.failed = true;
                    row.error = e.to_string();
                }
            }
            row
        })
        .collect();
    Ok(rows)
}

pub fn write_fidelity_csv(rows: &[FidelityRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(|e| Error::Validation(format!("cannot write CSV: {e}")))?;
    }
    w.flush().map_err(|e| Error::Validation(format!("cannot write CSV: {e}")))?;
    Ok(())
}
