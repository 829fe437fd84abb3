//! Pairwise Chamfer distance matrix over environments and its 2-D embedding.
//!
//! The embedding minimizes the Kamada-Kawai stress energy
//!
//! ```text
//! E = 1/2 Σ_{i≠j} k_ij (‖x_i − x_j‖ − l_ij)²,    l_ij = d_ij,  k_ij = 1/d_ij²
//! ```
//!
//! by gradient descent with a backtracking line search. Pairs with `d_ij = 0`
//! (identical environments) are excluded from the energy — their weight is
//! singular and co-location is the correct layout for them. The layout is
//! presentation-only: peer selection always consults the distance matrix,
//! never layout coordinates.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{chamfer_distance, PointCloud};

/// Symmetric Chamfer-distance matrix (m²) over N labeled environments.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMap {
    labels: Vec<String>,
    d: Vec<Vec<f64>>,
}

impl DistanceMap {
    /// Validates: unique single-line labels without commas, square matrix,
    /// exact symmetry, zero diagonal, finite non-negative entries.
    pub fn new(labels: Vec<String>, d: Vec<Vec<f64>>) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(Error::InvalidInput("distance map must cover at least one environment".into()));
        }
        for (i, a) in labels.iter().enumerate() {
            if a.contains(',') || a.contains('\n') || a.trim().is_empty() {
                return Err(Error::InvalidInput(format!("bad label '{a}'")));
            }
            if labels[i + 1..].contains(a) {
                return Err(Error::InvalidInput(format!("duplicate label '{a}'")));
            }
        }
        if d.len() != n || d.iter().any(|row| row.len() != n) {
            return Err(Error::InvalidInput(format!("distance matrix must be {n}×{n}")));
        }
        for i in 0..n {
            if d[i][i] != 0.0 {
                return Err(Error::InvalidInput("distance matrix diagonal must be zero".into()));
            }
            for j in 0..n {
                let v = d[i][j];
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::InvalidInput(format!("bad distance entry d[{i}][{j}] = {v}")));
                }
                if d[i][j] != d[j][i] {
                    return Err(Error::InvalidInput("distance matrix must be symmetric".into()));
                }
            }
        }
        Ok(Self { labels, d })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.d[i][j]
    }

    pub fn matrix(&self) -> &[Vec<f64>] {
        &self.d
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// CSV form: header row of labels, then N rows of N entries.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{}", self.labels.join(",")).unwrap();
        for row in &self.d {
            let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            writeln!(out, "{}", cells.join(",")).unwrap();
        }
        out
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse("empty distance map CSV".into()))?;
        let labels: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
        let mut d = Vec::new();
        for line in lines {
            let row: Result<Vec<f64>> = line
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Parse(format!("bad distance entry '{s}'")))
                })
                .collect();
            d.push(row?);
        }
        Self::new(labels, d)
    }
}

/// Builds the full pairwise Chamfer matrix. Each unordered pair is computed
/// once, so the result is symmetric by construction.
pub fn build_distance_map(clouds: &[PointCloud]) -> Result<DistanceMap> {
    if clouds.is_empty() {
        return Err(Error::InvalidInput("need at least one cloud".into()));
    }
    let labels: Vec<String> = clouds.iter().map(|c| c.label().to_string()).collect();
    let n = clouds.len();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let c = chamfer_distance(&clouds[i], &clouds[j]);
            d[i][j] = c;
            d[j][i] = c;
        }
    }
    DistanceMap::new(labels, d)
}

/// Optimizer controls for [`kamada_kawai`].
#[derive(Debug, Clone)]
pub struct LayoutParams {
    pub iterations: usize,
    pub step_size: f64,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for LayoutParams {
    fn default() -> Self {
        Self { iterations: 2000, step_size: 0.1, tolerance: 1e-9, seed: 0 }
    }
}

/// A 2-D embedding of a distance map plus its residual stress energy.
#[derive(Debug, Clone)]
pub struct Layout {
    pub positions: Vec<[f64; 2]>,
    pub residual_energy: f64,
}

/// Evaluates the stress energy of `positions` against the map's target
/// distances. Pairs with zero target distance are skipped.
pub fn stress_energy(positions: &[[f64; 2]], map: &DistanceMap) -> Result<f64> {
    if positions.len() != map.len() {
        return Err(Error::InvalidInput(format!(
            "{} positions for a {}-environment map",
            positions.len(),
            map.len()
        )));
    }
    Ok(stress_energy_unchecked(positions, map))
}

fn stress_energy_unchecked(positions: &[[f64; 2]], map: &DistanceMap) -> f64 {
    let n = positions.len();
    let mut e = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let l = map.distance(i, j);
            if l == 0.0 {
                continue;
            }
            let dx = positions[i][0] - positions[j][0];
            let dy = positions[i][1] - positions[j][1];
            let dist = (dx * dx + dy * dy).sqrt();
            let r = dist - l;
            e += r * r / (l * l);
        }
    }
    e
}

fn stress_gradient(positions: &[[f64; 2]], map: &DistanceMap) -> Vec<[f64; 2]> {
    let n = positions.len();
    let mut g = vec![[0.0; 2]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let l = map.distance(i, j);
            if l == 0.0 {
                continue;
            }
            let dx = positions[i][0] - positions[j][0];
            let dy = positions[i][1] - positions[j][1];
            let dist = (dx * dx + dy * dy).sqrt();
            if dist < 1e-12 {
                // Coincident points with a nonzero target: direction is
                // undefined, leave this pair to later iterations.
                continue;
            }
            let coef = 2.0 * (dist - l) / (l * l * dist);
            g[i][0] += coef * dx;
            g[i][1] += coef * dy;
            g[j][0] -= coef * dx;
            g[j][1] -= coef * dy;
        }
    }
    g
}

/// Gradient-descent minimization of the stress energy from a seeded circular
/// initialization. Deterministic given `(map, params)`; the accepted-iterate
/// energy sequence is non-increasing and the best iterate is returned.
pub fn kamada_kawai(map: &DistanceMap, params: &LayoutParams) -> Layout {
    kamada_kawai_with_trace(map, params).0
}

/// Same as [`kamada_kawai`] but also returns the energies of the accepted
/// iterates, starting with the initial configuration.
pub fn kamada_kawai_with_trace(map: &DistanceMap, params: &LayoutParams) -> (Layout, Vec<f64>) {
    let n = map.len();
    if n == 1 {
        return (Layout { positions: vec![[0.0, 0.0]], residual_energy: 0.0 }, vec![0.0]);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let phase: f64 = rng.gen::<f64>() * std::f64::consts::TAU;
    let max_d = map
        .matrix()
        .iter()
        .flatten()
        .copied()
        .fold(0.0_f64, f64::max);
    let radius = max_d / 2.0;

    // Zero-distance pairs carry no energy term, so identical environments are
    // co-located at initialization instead; equal-row members then receive
    // identical gradients and stay together.
    let group = zero_distance_groups(map);
    let n_groups = group.iter().copied().max().unwrap_or(0) + 1;
    let mut pos: Vec<[f64; 2]> = (0..n)
        .map(|k| {
            let a = phase + std::f64::consts::TAU * group[k] as f64 / n_groups as f64;
            [radius * a.cos(), radius * a.sin()]
        })
        .collect();

    let iterations = params.iterations.max(1);
    let tolerance = if params.tolerance > 0.0 { params.tolerance } else { 1e-9 };
    let mut energy = stress_energy_unchecked(&pos, map);
    let mut trace = vec![energy];
    let mut step = if params.step_size > 0.0 { params.step_size } else { 0.1 };

    for _ in 0..iterations {
        let grad = stress_gradient(&pos, map);
        let gnorm2: f64 = grad.iter().map(|g| g[0] * g[0] + g[1] * g[1]).sum();
        if gnorm2 < 1e-30 {
            break;
        }

        // Backtracking line search with the Armijo condition.
        let mut accepted = None;
        let mut s = step;
        for _ in 0..60 {
            let trial: Vec<[f64; 2]> = pos
                .iter()
                .zip(&grad)
                .map(|(p, g)| [p[0] - s * g[0], p[1] - s * g[1]])
                .collect();
            let e_trial = stress_energy_unchecked(&trial, map);
            if e_trial <= energy - 1e-4 * s * gnorm2 {
                accepted = Some((trial, e_trial, s));
                break;
            }
            s *= 0.5;
        }
        let Some((trial, e_trial, s_used)) = accepted else {
            break;
        };
        let improvement = energy - e_trial;
        pos = trial;
        energy = e_trial;
        trace.push(energy);
        step = (s_used * 1.5).min(1e6);
        if improvement < tolerance {
            break;
        }
    }

    (Layout { positions: pos, residual_energy: energy }, trace)
}

/// Assigns consecutive group ids to the connected components of the
/// "distance is exactly zero" relation.
fn zero_distance_groups(map: &DistanceMap) -> Vec<usize> {
    let n = map.len();
    let mut group = vec![usize::MAX; n];
    let mut next = 0;
    for i in 0..n {
        if group[i] != usize::MAX {
            continue;
        }
        group[i] = next;
        for j in (i + 1)..n {
            if group[j] == usize::MAX && map.distance(i, j) == 0.0 {
                group[j] = next;
            }
        }
        next += 1;
    }
    group
}

/// The stored environment most similar to `query`, by Chamfer distance, with
/// ties broken toward the lexicographically smallest label.
pub fn nearest_environment(map: &DistanceMap, query: &str) -> Result<String> {
    if map.len() < 2 {
        return Err(Error::InvalidInput(
            "nearest-environment query needs at least two environments".into(),
        ));
    }
    let qi = map
        .index_of(query)
        .ok_or_else(|| Error::InvalidInput(format!("unknown environment '{query}'")))?;
    let mut best: Option<(f64, &str)> = None;
    for (j, label) in map.labels().iter().enumerate() {
        if j == qi {
            continue;
        }
        let dist = map.distance(qi, j);
        let better = match best {
            None => true,
            Some((bd, bl)) => dist < bd || (dist == bd && label.as_str() < bl),
        };
        if better {
            best = Some((dist, label));
        }
    }
    Ok(best.expect("N >= 2 guarantees a candidate").1.to_string())
}
