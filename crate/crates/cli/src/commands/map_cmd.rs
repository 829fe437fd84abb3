//! `map`: pairwise distance map over environment clouds and its 2-D layout.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use beamshare_core::geometry::PointCloud;
use beamshare_core::layout::{build_distance_map, kamada_kawai, LayoutParams};

use crate::config::RunConfig;

/// Loads one cloud per environment directory (default: `A`, `B`, `C` under
/// the output directory), embeds the distance map, and writes
/// `map.csv` with `label,x,y,residual_energy` rows.
pub fn cmd_map(cfg: &RunConfig, env_dirs: &[PathBuf]) -> Result<PathBuf> {
    let dirs: Vec<PathBuf> = if env_dirs.is_empty() {
        ["A", "B", "C"]
            .iter()
            .map(|l| cfg.out.join(l))
            .filter(|d| d.join("cloud.txt").exists())
            .collect()
    } else {
        env_dirs.to_vec()
    };
    if dirs.len() < 2 {
        bail!("map needs at least two environment clouds, found {}", dirs.len());
    }

    let clouds: Vec<PointCloud> = dirs
        .iter()
        .map(|d| load_cloud(d))
        .collect::<Result<_>>()?;
    let map = build_distance_map(&clouds)?;
    let layout = kamada_kawai(&map, &LayoutParams::default());

    let mut csv = String::from("label,x,y,residual_energy\n");
    for (label, pos) in map.labels().iter().zip(&layout.positions) {
        writeln!(csv, "{label},{:.6},{:.6},{:.6e}", pos[0], pos[1], layout.residual_energy).unwrap();
    }
    std::fs::create_dir_all(&cfg.out)?;
    let path = cfg.out.join("map.csv");
    std::fs::write(&path, csv)?;
    println!(
        "{} environments embedded, residual energy {:.3e} -> {}",
        map.len(),
        layout.residual_energy,
        path.display()
    );
    Ok(path)
}

fn load_cloud(dir: &Path) -> Result<PointCloud> {
    PointCloud::load(dir.join("cloud.txt"))
        .with_context(|| format!("loading cloud from {}", dir.display()))
}
