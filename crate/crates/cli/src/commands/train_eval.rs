//! `train` and `eval`: per-seed training runs and standalone evaluation of a
//! saved model.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use beamshare_core::dqn::{
    deserialize_weights, evaluate, init_network, serialize_weights, train, Arch, TrainConfig,
};

use super::{load_env_dir, par_map_seeds};
use crate::config::RunConfig;

/// Trains one model per configured seed on the environment in `env_dir`.
/// Writes `model_seed<k>.bin` and `history_seed<k>.csv` under
/// `<out>/train_<label>/` and returns the model paths in seed order.
pub fn cmd_train(cfg: &RunConfig, env_dir: &Path) -> Result<Vec<PathBuf>> {
    let env = load_env_dir(env_dir)?;
    let arch = Arch::for_env(&env);
    let out_dir = cfg.out.join(format!("train_{}", env.label()));
    std::fs::create_dir_all(&out_dir)?;

    let results = par_map_seeds(&cfg.seeds, |seed| {
        let run_cfg = TrainConfig { seed, ..cfg.train.clone() };
        let init = init_network(arch, seed)?;
        let (net, history) = train(&env, &run_cfg, &init)?;
        Ok((seed, net, history))
    })?;

    let mut paths = Vec::new();
    for (seed, net, history) in results {
        let model_path = out_dir.join(format!("model_seed{seed}.bin"));
        std::fs::write(&model_path, serialize_weights(&net))?;
        std::fs::write(out_dir.join(format!("history_seed{seed}.csv")), history.to_csv_string())?;
        let score = evaluate(&net, &env, env.test_locations())?;
        println!(
            "seed {seed}: {} episodes, eval ratio {score:.4} -> {}",
            history.len(),
            model_path.display()
        );
        paths.push(model_path);
    }
    Ok(paths)
}

/// Loads a weight blob and reports its mean RSRP ratio on an environment's
/// test locations.
pub fn cmd_eval(_cfg: &RunConfig, model_path: &Path, env_dir: &Path) -> Result<f64> {
    let blob = std::fs::read(model_path)
        .with_context(|| format!("reading model {}", model_path.display()))?;
    let net = deserialize_weights(&blob)?;
    let env = load_env_dir(env_dir)?;
    let ratio = evaluate(&net, &env, env.test_locations())?;
    println!("{} on {}: rsrp ratio {ratio:.6}", model_path.display(), env.label());
    Ok(ratio)
}
