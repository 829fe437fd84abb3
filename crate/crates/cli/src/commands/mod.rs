//! Subcommand implementations. Every command is a plain function over a
//! [`RunConfig`](crate::config::RunConfig) so the acceptance suite can drive
//! the exact code path the binary runs.

mod demo;
mod figs;
mod gen_env;
mod map_cmd;
mod train_eval;

pub use demo::{cmd_protocol_demo, DemoResult};
pub use figs::{cmd_fig5, cmd_fig6, Fig5Result, Fig6Record, Fig6Result};
pub use gen_env::{cmd_gen_env, GenEnvResult};
pub use map_cmd::cmd_map;
pub use train_eval::{cmd_eval, cmd_train};

use std::path::Path;

use anyhow::{Context, Result};
use beamshare_core::simenv::BeamEnvironment;

pub(crate) fn load_env_dir(dir: &Path) -> Result<BeamEnvironment> {
    BeamEnvironment::load_dir(dir).with_context(|| {
        format!(
            "loading environment from {} (run `beamshare gen-env` first?)",
            dir.display()
        )
    })
}

/// Runs one closure per seed on its own thread and reassembles the results in
/// seed order, so downstream output bytes never depend on scheduling.
pub(crate) fn par_map_seeds<T: Send>(
    seeds: &[u64],
    f: impl Fn(u64) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    std::thread::scope(|scope| {
        let f = &f;
        let handles: Vec<_> = seeds
            .iter()
            .map(|&seed| scope.spawn(move || f(seed)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| anyhow::bail!("seed worker panicked")))
            .collect()
    })
}

pub(crate) fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Sample standard error of the mean; zero for a single observation.
pub(crate) fn stderr_of_mean(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}
