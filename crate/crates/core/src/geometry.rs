//! Point-cloud representation of deployment environments and the Chamfer
//! distance used to compare them.
//!
//! An environment is a set of 2-D points: the gNB position at index 0 and the
//! surrounding scatterers after it. Two environments are similar when their
//! clouds cover each other closely, which the Chamfer distance captures as the
//! average squared nearest-neighbor distance in both directions.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// A point in the deployment plane, in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance_squared(&self, other: &Point2) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        self.distance_squared(other).sqrt()
    }
}

/// One environment: a labeled, non-empty set of finite points. Index 0 is the
/// gNB position by convention; the rest are scatterers.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    label: String,
    points: Vec<Point2>,
}

impl PointCloud {
    /// Validates the cloud invariants: at least one point, all coordinates
    /// finite, label free of newlines.
    pub fn new(label: impl Into<String>, points: Vec<Point2>) -> Result<Self> {
        let label = label.into();
        if points.is_empty() {
            return Err(Error::InvalidInput(
                "point cloud must contain at least one point".into(),
            ));
        }
        if let Some(p) = points.iter().find(|p| !p.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "point cloud '{label}' contains a non-finite point ({}, {})",
                p.x, p.y
            )));
        }
        if label.contains('\n') || label.contains('\r') {
            return Err(Error::InvalidInput("cloud label must be a single line".into()));
        }
        Ok(Self { label, points })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        // Construction forbids empty clouds.
        false
    }

    /// The gNB position (index 0 by convention).
    pub fn gnb(&self) -> Point2 {
        self.points[0]
    }

    /// Everything after the gNB point.
    pub fn scatterers(&self) -> &[Point2] {
        &self.points[1..]
    }

    pub fn with_label(&self, label: impl Into<String>) -> Result<Self> {
        Self::new(label, self.points.clone())
    }

    /// Text form: one `env <label>` header line, then one `x y` pair per line.
    /// Coordinates are written in shortest exact decimal form, so a round
    /// trip is lossless.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "env {}", self.label).unwrap();
        for p in &self.points {
            writeln!(out, "{} {}", p.x, p.y).unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty cloud file".into()))?;
        let label = header
            .strip_prefix("env ")
            .ok_or_else(|| Error::Parse(format!("expected 'env <label>' header, got '{header}'")))?
            .trim()
            .to_string();
        let mut points = Vec::new();
        for line in lines {
            let mut parts = line.split_whitespace();
            let x = parse_coord(parts.next(), line)?;
            let y = parse_coord(parts.next(), line)?;
            if parts.next().is_some() {
                return Err(Error::Parse(format!("expected 'x y' pair, got '{line}'")));
            }
            points.push(Point2::new(x, y));
        }
        Self::new(label, points)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path.as_ref())?;
        Self::from_text(&text)
    }
}

fn parse_coord(part: Option<&str>, line: &str) -> Result<f64> {
    let s = part.ok_or_else(|| Error::Parse(format!("expected 'x y' pair, got '{line}'")))?;
    s.parse::<f64>()
        .map_err(|_| Error::Parse(format!("bad coordinate '{s}'")))
}

/// Chamfer distance between two clouds, in m²:
///
/// ```text
/// D(P,Q) = (1/|P|) Σ_{p∈P} min_{q∈Q} ‖p−q‖²  +  (1/|Q|) Σ_{q∈Q} min_{p∈P} ‖q−p‖²
/// ```
///
/// Exact brute-force nearest neighbors; the per-point minima are sorted before
/// summing so the result is bit-identical under any reordering of either cloud.
pub fn chamfer_distance(p: &PointCloud, q: &PointCloud) -> f64 {
    directed_mean_sq(p.points(), q.points()) + directed_mean_sq(q.points(), p.points())
}

fn directed_mean_sq(from: &[Point2], to: &[Point2]) -> f64 {
    let mut mins: Vec<f64> = from
        .iter()
        .map(|a| {
            to.iter()
                .map(|b| a.distance_squared(b))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    mins.sort_by(f64::total_cmp);
    mins.iter().sum::<f64>() / from.len() as f64
}

/// Displaces every point (gNB included) by an independent uniform draw from
/// the disc of the given radius, via rejection sampling from the bounding
/// square. Identical `(cloud, radius, seed)` give identical output.
pub fn perturb_cloud(cloud: &PointCloud, radius: f64, seed: u64) -> Result<PointCloud> {
    if !radius.is_finite() || radius < 0.0 {
        return Err(Error::InvalidInput(format!(
            "perturbation radius must be finite and non-negative, got {radius}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = cloud
        .points()
        .iter()
        .map(|p| {
            let (dx, dy) = sample_disc(&mut rng, radius);
            Point2::new(p.x + dx, p.y + dy)
        })
        .collect();
    PointCloud::new(cloud.label(), points)
}

fn sample_disc(rng: &mut ChaCha8Rng, radius: f64) -> (f64, f64) {
    loop {
        let dx = (2.0 * rng.gen::<f64>() - 1.0) * radius;
        let dy = (2.0 * rng.gen::<f64>() - 1.0) * radius;
        if dx * dx + dy * dy <= radius * radius {
            return (dx, dy);
        }
    }
}
