//! Command-level behavior at reduced scale: output shapes, documented edge
//! cases, and rerun stability.

use std::path::Path;

use beamshare_cli::config::RunConfig;
use beamshare_cli::{cmd_eval, cmd_fig5, cmd_fig6, cmd_gen_env, cmd_map, cmd_protocol_demo, cmd_train};
use beamshare_core::geometry::{chamfer_distance, PointCloud};

fn small_cfg(out: &Path) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.apply_kv("n_train_locations = 60\nn_test_locations = 20\nepisodes_max = 12\nseeds = 1,2\ndemo_episodes = 5\n")
        .unwrap();
    cfg.out = out.to_path_buf();
    cfg
}

#[test]
fn gen_env_orders_radii_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_cfg(dir.path());
    let first = cmd_gen_env(&cfg).unwrap();
    assert!(first.chamfer_ab < first.chamfer_ac, "B must sit closer to A than C");
    assert_eq!(first.dirs.len(), 3);

    let again = cmd_gen_env(&cfg).unwrap();
    assert_eq!(first.chamfer_ab, again.chamfer_ab);
    for f in ["A/cloud.txt", "B/rsrp_table.csv", "C/spec.cfg", "A/path.csv"] {
        let p = dir.path().join(f);
        assert!(p.exists(), "{f} missing");
    }
}

#[test]
fn gen_env_zero_radius_b_gives_zero_distance() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_cfg(dir.path());
    cfg.radius_b = 0.0;
    let result = cmd_gen_env(&cfg).unwrap();
    assert_eq!(result.chamfer_ab, 0.0);
}

#[test]
fn map_two_clouds_realize_their_chamfer_distance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_cfg(dir.path());
    cmd_gen_env(&cfg).unwrap();

    let a = dir.path().join("A");
    let b = dir.path().join("B");
    let path = cmd_map(&cfg, &[a.clone(), b.clone()]).unwrap();
    let text = std::fs::read_to_string(path).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 2, "one row per cloud");

    let pos: Vec<[f64; 2]> = rows
        .iter()
        .map(|r| {
            let cells: Vec<&str> = r.split(',').collect();
            [cells[1].parse().unwrap(), cells[2].parse().unwrap()]
        })
        .collect();
    let layout_dist = ((pos[0][0] - pos[1][0]).powi(2) + (pos[0][1] - pos[1][1]).powi(2)).sqrt();
    let want = chamfer_distance(
        &PointCloud::load(a.join("cloud.txt")).unwrap(),
        &PointCloud::load(b.join("cloud.txt")).unwrap(),
    );
    // Two nodes can always realize their target exactly.
    assert!(
        (layout_dist - want).abs() < 1e-4 * want.max(1e-6),
        "layout distance {layout_dist} vs Chamfer {want}"
    );
}

#[test]
fn map_colocates_identical_clouds() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_cfg(dir.path());
    cfg.radius_b = 0.0;
    cmd_gen_env(&cfg).unwrap();
    let path = cmd_map(&cfg, &[]).unwrap();
    let text = std::fs::read_to_string(path).unwrap();
    assert_eq!(text.lines().count(), 4, "header + A, B, C");

    let rows: Vec<Vec<String>> = text
        .lines()
        .skip(1)
        .map(|r| r.split(',').map(str::to_string).collect())
        .collect();
    // A and B are identical (radius 0), so they land on the same point.
    let (ax, ay): (f64, f64) = (rows[0][1].parse().unwrap(), rows[0][2].parse().unwrap());
    let (bx, by): (f64, f64) = (rows[1][1].parse().unwrap(), rows[1][2].parse().unwrap());
    let d = ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt();
    assert!(d < 1e-6, "identical environments should co-locate, got {d}");
}

#[test]
fn map_needs_two_clouds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_cfg(dir.path());
    assert!(cmd_map(&cfg, &[]).is_err());
}

#[test]
fn train_then_eval_round_trips_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_cfg(dir.path());
    cfg.seeds = vec![3];
    cmd_gen_env(&cfg).unwrap();

    let models = cmd_train(&cfg, &dir.path().join("A")).unwrap();
    assert_eq!(models.len(), 1);
    let history = dir.path().join("train_A").join("history_seed3.csv");
    let text = std::fs::read_to_string(history).unwrap();
    assert!(text.starts_with("episode,total_reward,rsrp_ratio,epsilon,cumulative_mac\n"));
    assert_eq!(text.lines().count(), 1 + cfg.train.episodes_max);

    let ratio = cmd_eval(&cfg, &models[0], &dir.path().join("A")).unwrap();
    assert!((0.0..=1.0).contains(&ratio));

    // Evaluating the same blob twice is bit-stable.
    let again = cmd_eval(&cfg, &models[0], &dir.path().join("A")).unwrap();
    assert_eq!(ratio, again);
}

#[test]
fn fig5_outputs_have_documented_shape() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_cfg(dir.path());
    cmd_gen_env(&cfg).unwrap();
    let result = cmd_fig5(&cfg).unwrap();

    let text = std::fs::read_to_string(&result.csv_path).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "environment,chamfer_to_A,mean_rsrp_ratio,stderr");
    assert_eq!(rows.len(), 4, "header plus exactly three environment rows");
    let a_row: Vec<&str> = rows[1].split(',').collect();
    assert_eq!(a_row[0], "A");
    assert_eq!(a_row[1].parse::<f64>().unwrap(), 0.0, "chamfer_to_A of A is zero");

    let per_seed = std::fs::read_to_string(&result.per_seed_csv_path).unwrap();
    assert_eq!(per_seed.lines().count(), 1 + 3 * cfg.seeds.len());
}

#[test]
fn fig5_requires_environments() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_cfg(dir.path());
    let err = cmd_fig5(&cfg).unwrap_err().to_string();
    assert!(err.contains("gen-env"), "error should point at gen-env, got: {err}");
}

#[test]
fn fig6_summary_shape_and_first_episode_advantage() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_cfg(dir.path());
    cmd_gen_env(&cfg).unwrap();
    let result = cmd_fig6(&cfg).unwrap();

    let summary = std::fs::read_to_string(&result.summary_path).unwrap();
    let rows: Vec<&str> = summary.lines().collect();
    assert_eq!(rows[0], "seed,scratch_episodes,finetune_episodes,scratch_mac,finetune_mac,speedup");
    assert_eq!(rows.len(), 1 + cfg.seeds.len());
    for row in &rows[1..] {
        let speedup = row.split(',').nth(5).unwrap();
        let (_, frac) = speedup.split_once('.').expect("two-decimal speedup");
        assert_eq!(frac.len(), 2, "speedup printed with 2 decimals, got '{speedup}'");
    }

    // The fine-tune curve starts from a transferred policy, so its first
    // episode should beat the scratch run's first episode for most seeds.
    let better = result
        .records
        .iter()
        .filter(|r| {
            r.finetune_history.episodes[0].total_reward > r.scratch_history.episodes[0].total_reward
        })
        .count();
    assert!(
        2 * better > result.records.len(),
        "fine-tune episode-1 reward should beat scratch for a majority of seeds ({better}/{})",
        result.records.len()
    );
}

#[test]
fn protocol_demo_picks_first_cluster_and_persists() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_cfg(dir.path());
    let result = cmd_protocol_demo(&cfg).unwrap();

    assert_eq!(result.report.chosen_peer, result.expected_peer);
    assert!(
        result.report.chosen_peer == "gnb1" || result.report.chosen_peer == "gnb2",
        "new gNB was built near the first pair, got {}",
        result.report.chosen_peer
    );
    assert_eq!(result.report.central_version, 5);
    assert!(result.registry_dir.join("version").exists());
    assert!(result.csv_path.exists());

    // Rerunning the demo reproduces the report bytes.
    let first = std::fs::read(&result.csv_path).unwrap();
    let again = cmd_protocol_demo(&cfg).unwrap();
    assert_eq!(first, std::fs::read(&again.csv_path).unwrap());
}
