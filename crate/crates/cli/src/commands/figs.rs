//! `fig5` and `fig6`: the two headline experiments.
//!
//! `fig5` trains on environment A and evaluates the same model on A, B, and C
//! against their Chamfer distance from A. `fig6` compares training from
//! scratch on B with fine-tuning an A-pretrained model on B, measured in
//! episodes (and MAC operations) to reach 95% of the scratch run's best
//! trailing-mean reward.

use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{bail, Result};
use beamshare_core::dqn::{
    fine_tune, init_network, macop_count, train, Arch, TrainConfig, TrainHistory, REWARD_WINDOW,
};
use beamshare_core::geometry::chamfer_distance;
use beamshare_core::simenv::BeamEnvironment;

use super::{load_env_dir, median, par_map_seeds, stderr_of_mean};
use crate::config::RunConfig;

#[derive(Debug)]
pub struct Fig5Result {
    /// `(seed, [ratio_A, ratio_B, ratio_C])`
    pub per_seed: Vec<(u64, [f64; 3])>,
    pub chamfer_to_a: [f64; 3],
    pub median_ratios: [f64; 3],
    pub csv_path: PathBuf,
    pub per_seed_csv_path: PathBuf,
}

pub fn cmd_fig5(cfg: &RunConfig) -> Result<Fig5Result> {
    let envs = load_abc(cfg)?;
    let labels = ["A", "B", "C"];
    let chamfer_to_a = [
        0.0,
        chamfer_distance(envs[0].cloud(), envs[1].cloud()),
        chamfer_distance(envs[0].cloud(), envs[2].cloud()),
    ];
    let arch = Arch::for_env(&envs[0]);

    let per_seed: Vec<(u64, [f64; 3])> = par_map_seeds(&cfg.seeds, |seed| {
        let run_cfg = TrainConfig { seed, reference_reward: None, ..cfg.train.clone() };
        let init = init_network(arch, seed)?;
        let (net, _) = train(&envs[0], &run_cfg, &init)?;
        let mut ratios = [0.0; 3];
        for (k, env) in envs.iter().enumerate() {
            ratios[k] = beamshare_core::dqn::evaluate(&net, env, env.test_locations())?;
        }
        Ok((seed, ratios))
    })?;

    let mut per_seed_csv = String::from("seed,environment,rsrp_ratio\n");
    for (seed, ratios) in &per_seed {
        for (k, label) in labels.iter().enumerate() {
            writeln!(per_seed_csv, "{seed},{label},{:.6}", ratios[k]).unwrap();
        }
    }

    let mut csv = String::from("environment,chamfer_to_A,mean_rsrp_ratio,stderr\n");
    let mut median_ratios = [0.0; 3];
    for (k, label) in labels.iter().enumerate() {
        let column: Vec<f64> = per_seed.iter().map(|(_, r)| r[k]).collect();
        let mean = column.iter().sum::<f64>() / column.len() as f64;
        median_ratios[k] = median(&column);
        writeln!(csv, "{label},{:.6},{:.6},{:.6}", chamfer_to_a[k], mean, stderr_of_mean(&column)).unwrap();
    }

    std::fs::create_dir_all(&cfg.out)?;
    let csv_path = cfg.out.join("fig5.csv");
    let per_seed_csv_path = cfg.out.join("fig5_per_seed.csv");
    std::fs::write(&csv_path, csv)?;
    std::fs::write(&per_seed_csv_path, per_seed_csv)?;

    println!("trained on A over {} seeds; median rsrp ratios:", cfg.seeds.len());
    for (k, label) in labels.iter().enumerate() {
        println!("  {label}: ratio {:.4} at Chamfer distance {:.4}", median_ratios[k], chamfer_to_a[k]);
    }
    println!("-> {}", csv_path.display());
    Ok(Fig5Result { per_seed, chamfer_to_a, median_ratios, csv_path, per_seed_csv_path })
}

#[derive(Debug)]
pub struct Fig6Record {
    pub seed: u64,
    pub scratch_episodes: usize,
    pub finetune_episodes: usize,
    pub scratch_mac: u64,
    pub finetune_mac: u64,
    pub speedup: f64,
    pub scratch_history: TrainHistory,
    pub finetune_history: TrainHistory,
}

#[derive(Debug)]
pub struct Fig6Result {
    pub records: Vec<Fig6Record>,
    pub median_speedup: f64,
    pub curves_path: PathBuf,
    pub summary_path: PathBuf,
}

pub fn cmd_fig6(cfg: &RunConfig) -> Result<Fig6Result> {
    let envs = load_abc(cfg)?;
    let (env_a, env_b) = (&envs[0], &envs[1]);
    let arch = Arch::for_env(env_a);
    let fraction = cfg.train.stop_at_reward_fraction.unwrap_or(0.95);
    let steps_per_episode = env_b.n_locations() as u64;

    let records: Vec<Fig6Record> = par_map_seeds(&cfg.seeds, |seed| {
        // Pretraining on A, exactly like fig5's runs.
        let base_cfg = TrainConfig { seed, reference_reward: None, ..cfg.train.clone() };
        let (pretrained, _) = train(env_a, &base_cfg, &init_network(arch, seed)?)?;

        // Reference run: scratch on B, full length.
        let (_, scratch_history) = train(env_b, &base_cfg, &init_network(arch, seed)?)?;
        let best = scratch_history
            .best_trailing_mean(REWARD_WINDOW)
            .ok_or_else(|| anyhow::anyhow!("scratch run shorter than the reward window"))?;
        let line = fraction * best;
        let scratch_episodes = scratch_history
            .episodes_to_reach(line, REWARD_WINDOW)
            .expect("the best window itself reaches the line");

        // Fine-tune run, measured against the same absolute line and allowed
        // to stop as soon as it crosses it.
        let ft_cfg = TrainConfig { seed, reference_reward: Some(best), ..cfg.train.clone() };
        let (_, finetune_history) = fine_tune(&pretrained, env_b, &ft_cfg)?;
        let finetune_episodes = finetune_history
            .episodes_to_reach(line, REWARD_WINDOW)
            .unwrap_or(finetune_history.len());

        let scratch_mac = macop_count(&arch, scratch_episodes as u64 * steps_per_episode, cfg.train.batch_size);
        let finetune_mac = macop_count(&arch, finetune_episodes as u64 * steps_per_episode, cfg.train.batch_size);
        Ok(Fig6Record {
            seed,
            scratch_episodes,
            finetune_episodes,
            scratch_mac,
            finetune_mac,
            speedup: scratch_episodes as f64 / finetune_episodes as f64,
            scratch_history,
            finetune_history,
        })
    })?;

    let mut curves = String::from("seed,mode,episode,reward\n");
    for r in &records {
        for e in &r.scratch_history.episodes {
            writeln!(curves, "{},scratch,{},{:.6}", r.seed, e.episode, e.total_reward).unwrap();
        }
        for e in &r.finetune_history.episodes {
            writeln!(curves, "{},finetune,{},{:.6}", r.seed, e.episode, e.total_reward).unwrap();
        }
    }

    let mut summary =
        String::from("seed,scratch_episodes,finetune_episodes,scratch_mac,finetune_mac,speedup\n");
    for r in &records {
        writeln!(
            summary,
            "{},{},{},{},{},{:.2}",
            r.seed, r.scratch_episodes, r.finetune_episodes, r.scratch_mac, r.finetune_mac, r.speedup
        )
        .unwrap();
    }

    std::fs::create_dir_all(&cfg.out)?;
    let curves_path = cfg.out.join("fig6_curves.csv");
    let summary_path = cfg.out.join("fig6_summary.csv");
    std::fs::write(&curves_path, curves)?;
    std::fs::write(&summary_path, summary)?;

    let speedups: Vec<f64> = records.iter().map(|r| r.speedup).collect();
    let median_speedup = median(&speedups);
    println!("scratch-on-B vs A-pretrained-fine-tune-on-B ({}% line):", fraction * 100.0);
    for r in &records {
        // The per-episode cost is identical in both runs, so the MAC ratio
        // reduces exactly to the episode ratio.
        debug_assert_eq!(
            r.scratch_mac * r.finetune_episodes as u64,
            r.finetune_mac * r.scratch_episodes as u64
        );
        println!(
            "  seed {}: {} vs {} episodes ({} vs {} MACs), speedup {:.2}",
            r.seed, r.scratch_episodes, r.finetune_episodes, r.scratch_mac, r.finetune_mac, r.speedup
        );
    }
    println!("median speedup: {median_speedup:.2}x -> {}", summary_path.display());
    Ok(Fig6Result { records, median_speedup, curves_path, summary_path })
}

fn load_abc(cfg: &RunConfig) -> Result<[BeamEnvironment; 3]> {
    let mut envs = Vec::new();
    for label in ["A", "B", "C"] {
        let dir = cfg.out.join(label);
        if !dir.join("cloud.txt").exists() {
            bail!("missing environment {label} under {} (run `beamshare gen-env` first)", cfg.out.display());
        }
        envs.push(load_env_dir(&dir)?);
    }
    envs.try_into().map_err(|_| anyhow::anyhow!("expected exactly three environments"))
}
