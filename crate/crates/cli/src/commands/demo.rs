//! `protocol-demo`: the onboarding sequence over real localhost sockets, with
//! a centralized-unit kill-and-restart in the middle to exercise registry
//! persistence.

use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{Context, Result};
use beamshare_core::dqn::{init_network, train, Arch, QNetwork, TrainConfig};
use beamshare_core::geometry::{chamfer_distance, PointCloud};
use beamshare_core::registry::{run_onboarding_scenario, ScenarioOptions, ScenarioReport, TransportKind};
use beamshare_core::simenv::{generate_environment, perturbed_environment, BeamEnvironment};

use crate::config::RunConfig;

#[derive(Debug)]
pub struct DemoResult {
    pub report: ScenarioReport,
    pub expected_peer: String,
    pub csv_path: PathBuf,
    pub registry_dir: PathBuf,
}

/// Builds four existing gNBs in two similarity pairs plus a new gNB close to
/// the first pair, trains the existing models briefly, and runs the full
/// report → query → transfer → fine-tune → contribute sequence over sockets.
pub fn cmd_protocol_demo(cfg: &RunConfig) -> Result<DemoResult> {
    let (existing, new_env) = build_demo_fleet(cfg)?;

    // Offline brute-force argmin, for the printed cross-check.
    let expected_peer = existing
        .iter()
        .map(|(c, _)| (c.label().to_string(), chamfer_distance(new_env.cloud(), c)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(l, _)| l)
        .expect("fleet is non-empty");

    let registry_dir = cfg.out.join("demo_registry");
    if registry_dir.exists() {
        std::fs::remove_dir_all(&registry_dir)
            .with_context(|| format!("clearing {}", registry_dir.display()))?;
    }

    let ft_cfg = TrainConfig {
        episodes_max: cfg.demo_episodes,
        seed: cfg.seeds[0],
        ..cfg.train.clone()
    };
    let report = run_onboarding_scenario(
        &existing,
        &new_env,
        &ft_cfg,
        &ScenarioOptions {
            transport: TransportKind::Sockets,
            persist_dir: registry_dir.clone(),
            restart_central_after_reports: true,
        },
    )?;

    let mut csv = String::from("chosen_peer,chamfer_distance,fine_tune_episodes,final_score,central_version\n");
    writeln!(
        csv,
        "{},{:.6},{},{:.6},{}",
        report.chosen_peer,
        report.chamfer_distance,
        report.fine_tune_episodes,
        report.final_score,
        report.central_version
    )
    .unwrap();
    std::fs::create_dir_all(&cfg.out)?;
    let csv_path = cfg.out.join("protocol_report.csv");
    std::fs::write(&csv_path, csv)?;

    println!("onboarding demo over localhost sockets (centralized unit restarted mid-run):");
    println!("  chosen peer:        {} (offline argmin: {expected_peer})", report.chosen_peer);
    println!("  Chamfer distance:   {:.4} m^2", report.chamfer_distance);
    println!("  fine-tune episodes: {}", report.fine_tune_episodes);
    println!("  final eval ratio:   {:.4}", report.final_score);
    println!("  registry version:   {}", report.central_version);
    println!("-> {}", csv_path.display());

    Ok(DemoResult { report, expected_peer, csv_path, registry_dir })
}

/// Two pairs of similar deployments plus a new gNB near the first pair. Every
/// node id doubles as its cloud label.
pub fn build_demo_fleet(cfg: &RunConfig) -> Result<(Vec<(PointCloud, QNetwork)>, BeamEnvironment)> {
    let seed = cfg.env.seed;
    let mut spec1 = cfg.env.clone();
    spec1.label = "gnb1".into();
    spec1.seed = seed.wrapping_add(10);
    let mut spec2 = cfg.env.clone();
    spec2.label = "gnb3".into();
    spec2.seed = seed.wrapping_add(20);

    let env1 = generate_environment(&spec1)?;
    let env2 = generate_environment(&spec2)?;
    let env1b = perturbed_environment(&env1, "gnb2", 0.3, seed.wrapping_add(11))?;
    let env2b = perturbed_environment(&env2, "gnb4", 0.3, seed.wrapping_add(21))?;
    let new_env = perturbed_environment(&env1, "newgnb", 0.2, seed.wrapping_add(30))?;

    let arch = Arch::for_env(&env1);
    let node_cfg = |s: u64| TrainConfig {
        episodes_max: cfg.demo_episodes,
        seed: s,
        ..cfg.train.clone()
    };
    let mut existing = Vec::new();
    for (i, env) in [&env1, &env1b, &env2, &env2b].into_iter().enumerate() {
        let run_seed = cfg.seeds[0].wrapping_add(i as u64);
        let (model, _) = train(env, &node_cfg(run_seed), &init_network(arch, run_seed)?)?;
        existing.push((env.cloud().clone(), model));
    }
    Ok((existing, new_env))
}
