//! Synthetic scattering-channel RSRP model, environment generation, and the
//! beam-selection MDP.
//!
//! The channel is an explicit two-hop reflection model: a line-of-sight path
//! plus one bounce per scatterer, each attenuated by inverse-square path loss
//! and a Gaussian beam gain over the angular offset from the beam boresight.
//! Powers add linearly; RSRP is reported in dB. Receiver-side beams are not
//! modeled — the action space is the transmit beam set only.
//!
//! An environment's UE path is a full loop around the perimeter of a square:
//! random arc-length positions sorted into traversal order. Episodes walk the
//! path once, one step per location.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{perturb_cloud, Point2, PointCloud};

/// Scatterers are rejected inside this disc around the gNB.
pub const GNB_EXCLUSION_RADIUS: f64 = 0.5;

/// Everything needed to generate one environment deterministically.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub label: String,
    pub square_side: f64,
    pub n_scatterers: usize,
    pub n_train_locations: usize,
    pub n_test_locations: usize,
    pub beam_angles: Vec<f64>,
    pub beam_sigma: f64,
    pub reflection_gain: f64,
    pub seed: u64,
}

impl Default for EnvSpec {
    fn default() -> Self {
        Self {
            label: "A".into(),
            square_side: 6.0,
            n_scatterers: 5,
            n_train_locations: 200,
            n_test_locations: 100,
            beam_angles: vec![0.0, 90.0, 180.0, 270.0],
            beam_sigma: 30.0,
            reflection_gain: 0.3,
            seed: 1,
        }
    }
}

impl EnvSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.square_side.is_finite() && self.square_side > 0.0) {
            return Err(Error::InvalidInput(format!("square_side must be positive, got {}", self.square_side)));
        }
        if self.n_train_locations == 0 {
            return Err(Error::InvalidInput("n_train_locations must be at least 1".into()));
        }
        if self.beam_angles.is_empty() {
            return Err(Error::InvalidInput("at least one beam angle required".into()));
        }
        for (i, &a) in self.beam_angles.iter().enumerate() {
            if !(a.is_finite() && (0.0..360.0).contains(&a)) {
                return Err(Error::InvalidInput(format!("beam angle {a} outside [0, 360)")));
            }
            if self.beam_angles[i + 1..].contains(&a) {
                return Err(Error::InvalidInput(format!("duplicate beam angle {a}")));
            }
        }
        if !(self.beam_sigma.is_finite() && self.beam_sigma > 0.0) {
            return Err(Error::InvalidInput("beam_sigma must be positive".into()));
        }
        if !(self.reflection_gain.is_finite() && self.reflection_gain >= 0.0) {
            return Err(Error::InvalidInput("reflection_gain must be non-negative".into()));
        }
        Ok(())
    }

    /// Key-value text form (`key = value` lines).
    pub fn to_kv_string(&self) -> String {
        let mut out = String::new();
        writeln!(out, "label = {}", self.label).unwrap();
        writeln!(out, "square_side = {}", self.square_side).unwrap();
        writeln!(out, "n_scatterers = {}", self.n_scatterers).unwrap();
        writeln!(out, "n_train_locations = {}", self.n_train_locations).unwrap();
        writeln!(out, "n_test_locations = {}", self.n_test_locations).unwrap();
        let beams: Vec<String> = self.beam_angles.iter().map(|a| format!("{a}")).collect();
        writeln!(out, "beam_angles = {}", beams.join(",")).unwrap();
        writeln!(out, "beam_sigma = {}", self.beam_sigma).unwrap();
        writeln!(out, "reflection_gain = {}", self.reflection_gain).unwrap();
        writeln!(out, "seed = {}", self.seed).unwrap();
        out
    }

    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut spec = EnvSpec::default();
        for (key, value) in parse_kv_lines(text)? {
            match key.as_str() {
                "label" => spec.label = value,
                "square_side" => spec.square_side = parse_num(&key, &value)?,
                "n_scatterers" => spec.n_scatterers = parse_num(&key, &value)?,
                "n_train_locations" => spec.n_train_locations = parse_num(&key, &value)?,
                "n_test_locations" => spec.n_test_locations = parse_num(&key, &value)?,
                "beam_angles" => {
                    spec.beam_angles = value
                        .split(',')
                        .map(|s| parse_num::<f64>("beam_angles", s.trim()))
                        .collect::<Result<_>>()?;
                }
                "beam_sigma" => spec.beam_sigma = parse_num(&key, &value)?,
                "reflection_gain" => spec.reflection_gain = parse_num(&key, &value)?,
                "seed" => spec.seed = parse_num(&key, &value)?,
                other => return Err(Error::Parse(format!("unknown env spec key '{other}'"))),
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// Splits `key = value` lines, skipping blanks and `#` comments.
pub fn parse_kv_lines(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("expected 'key = value', got '{line}'")))?;
        pairs.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(pairs)
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse::<T>()
        .map_err(|_| Error::Parse(format!("bad value '{value}' for key '{key}'")))
}

/// The MDP substrate: one environment's cloud, UE path, test locations, and
/// precomputed per-location per-beam RSRP tables.
#[derive(Debug, Clone)]
pub struct BeamEnvironment {
    cloud: PointCloud,
    spec: EnvSpec,
    train_path: Vec<Point2>,
    test_locations: Vec<Point2>,
    /// Train-path RSRP in dB, `[location][beam]`.
    rsrp_table: Vec<Vec<f64>>,
    /// Min-max normalization of `rsrp_table` over all entries.
    rsrp_norm: Vec<Vec<f64>>,
    /// Test-location RSRP in dB, `[location][beam]`.
    test_rsrp_table: Vec<Vec<f64>>,
}

/// Mutable cursor of one episode; owned by a single training loop.
#[derive(Debug, Clone)]
pub struct Episode {
    index: usize,
    beam: usize,
    done: bool,
}

impl Episode {
    pub fn index(&self) -> usize {
        self.index
    }

    pub fn beam(&self) -> usize {
        self.beam
    }

    pub fn is_done(&self) -> bool {
        self.done
    }
}

/// What the agent sees: UE position scaled by the half-side to [−1, 1] and a
/// one-hot encoding of the currently selected beam.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub ue_xy: [f64; 2],
    pub beam_onehot: Vec<f64>,
}

impl Observation {
    /// Flat feature vector: `[x, y, onehot...]`.
    pub fn features(&self) -> Vec<f64> {
        let mut f = Vec::with_capacity(2 + self.beam_onehot.len());
        f.push(self.ue_xy[0]);
        f.push(self.ue_xy[1]);
        f.extend_from_slice(&self.beam_onehot);
        f
    }
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub next_obs: Observation,
    pub reward: f64,
    pub done: bool,
    /// Chosen-beam over best-beam normalized RSRP at the visited location.
    pub rsrp_ratio: f64,
}

/// Generates an environment from its spec: gNB at the square's center,
/// scatterers uniform inside the square outside the gNB exclusion disc, a
/// perimeter loop of train locations, and uniformly drawn test locations.
/// Bit-identical output for identical specs.
pub fn generate_environment(spec: &EnvSpec) -> Result<BeamEnvironment> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let side = spec.square_side;

    let gnb = Point2::new(0.0, 0.0);
    let mut points = vec![gnb];
    for _ in 0..spec.n_scatterers {
        loop {
            let x = (rng.gen::<f64>() - 0.5) * side;
            let y = (rng.gen::<f64>() - 0.5) * side;
            let p = Point2::new(x, y);
            if p.distance(&gnb) >= GNB_EXCLUSION_RADIUS {
                points.push(p);
                break;
            }
        }
    }
    let cloud = PointCloud::new(spec.label.clone(), points)?;

    let train_path = sorted_perimeter_points(&mut rng, side, spec.n_train_locations);
    let test_locations = sorted_perimeter_points(&mut rng, side, spec.n_test_locations);

    BeamEnvironment::from_cloud(cloud, spec.clone(), train_path, test_locations)
}

/// Derives a sibling environment by perturbing every point of `base`'s cloud
/// (gNB included) within `radius`, keeping the same UE path and test set.
pub fn perturbed_environment(
    base: &BeamEnvironment,
    label: &str,
    radius: f64,
    seed: u64,
) -> Result<BeamEnvironment> {
    let cloud = perturb_cloud(base.cloud(), radius, seed)?.with_label(label)?;
    let mut spec = base.spec().clone();
    spec.label = label.to_string();
    BeamEnvironment::from_cloud(cloud, spec, base.train_path.clone(), base.test_locations.clone())
}

fn sorted_perimeter_points(rng: &mut ChaCha8Rng, side: f64, n: usize) -> Vec<Point2> {
    let mut arcs: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 4.0 * side).collect();
    arcs.sort_by(f64::total_cmp);
    arcs.iter().map(|&u| point_on_perimeter(side, u)).collect()
}

/// Maps an arc length `u ∈ [0, 4·side)` onto the square perimeter, starting at
/// the southeast corner and walking counterclockwise (east side first).
pub fn point_on_perimeter(side: f64, u: f64) -> Point2 {
    let h = side / 2.0;
    if u < side {
        Point2::new(h, -h + u)
    } else if u < 2.0 * side {
        Point2::new(h - (u - side), h)
    } else if u < 3.0 * side {
        Point2::new(-h, h - (u - 2.0 * side))
    } else {
        Point2::new(-h + (u - 3.0 * side), -h)
    }
}

/// Received power for one beam at one UE position, in dB:
/// a line-of-sight term plus one two-hop term per scatterer, each weighted by
/// a Gaussian gain over the wrapped boresight offset and inverse-square path
/// loss. Powers add linearly before conversion to dB.
pub fn compute_rsrp(
    cloud: &PointCloud,
    beam_angle: f64,
    ue: Point2,
    beam_sigma: f64,
    reflection_gain: f64,
) -> Result<f64> {
    let gnb = cloud.gnb();
    if ue.distance_squared(&gnb) == 0.0 {
        return Err(Error::InvalidInput("UE position coincides with the gNB".into()));
    }
    let mut power = beam_gain(bearing_deg(gnb, ue) - beam_angle, beam_sigma) / ue.distance_squared(&gnb);
    for s in cloud.scatterers() {
        let hop = gnb.distance(s) + s.distance(&ue);
        power += reflection_gain * beam_gain(bearing_deg(gnb, *s) - beam_angle, beam_sigma) / (hop * hop);
    }
    Ok(10.0 * power.log10())
}

/// Gaussian boresight gain over the wrapped angular offset (degrees).
fn beam_gain(delta_deg: f64, sigma_deg: f64) -> f64 {
    let d = wrap_angle_180(delta_deg);
    (-d * d / (2.0 * sigma_deg * sigma_deg)).exp()
}

/// Wraps an angle difference into [0, 180] degrees.
pub fn wrap_angle_180(delta_deg: f64) -> f64 {
    let mut r = delta_deg % 360.0;
    if r > 180.0 {
        r -= 360.0;
    } else if r < -180.0 {
        r += 360.0;
    }
    r.abs()
}

fn bearing_deg(from: Point2, to: Point2) -> f64 {
    (to.y - from.y).atan2(to.x - from.x).to_degrees()
}

/// RSRP table in dB for every (location, beam) pair.
pub fn build_rsrp_table(
    cloud: &PointCloud,
    beam_angles: &[f64],
    locations: &[Point2],
    beam_sigma: f64,
    reflection_gain: f64,
) -> Result<Vec<Vec<f64>>> {
    locations
        .iter()
        .map(|&ue| {
            beam_angles
                .iter()
                .map(|&a| compute_rsrp(cloud, a, ue, beam_sigma, reflection_gain))
                .collect()
        })
        .collect()
}

/// Min-max normalization over all entries; a constant table maps to all zeros.
pub fn min_max_normalize(table: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for row in table {
        for &v in row {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    let span = hi - lo;
    table
        .iter()
        .map(|row| {
            row.iter()
                .map(|&v| if span > 0.0 { (v - lo) / span } else { 0.0 })
                .collect()
        })
        .collect()
}

impl BeamEnvironment {
    /// Builds an environment for an existing cloud and UE geometry,
    /// precomputing all RSRP tables.
    pub fn from_cloud(
        cloud: PointCloud,
        spec: EnvSpec,
        train_path: Vec<Point2>,
        test_locations: Vec<Point2>,
    ) -> Result<Self> {
        spec.validate()?;
        if train_path.is_empty() {
            return Err(Error::InvalidInput("train path must be non-empty".into()));
        }
        let rsrp_table =
            build_rsrp_table(&cloud, &spec.beam_angles, &train_path, spec.beam_sigma, spec.reflection_gain)?;
        let rsrp_norm = min_max_normalize(&rsrp_table);
        let test_rsrp_table =
            build_rsrp_table(&cloud, &spec.beam_angles, &test_locations, spec.beam_sigma, spec.reflection_gain)?;
        Ok(Self { cloud, spec, train_path, test_locations, rsrp_table, rsrp_norm, test_rsrp_table })
    }

    pub fn cloud(&self) -> &PointCloud {
        &self.cloud
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn label(&self) -> &str {
        self.cloud.label()
    }

    pub fn train_path(&self) -> &[Point2] {
        &self.train_path
    }

    pub fn test_locations(&self) -> &[Point2] {
        &self.test_locations
    }

    pub fn rsrp_table(&self) -> &[Vec<f64>] {
        &self.rsrp_table
    }

    pub fn rsrp_norm(&self) -> &[Vec<f64>] {
        &self.rsrp_norm
    }

    pub fn test_rsrp_table(&self) -> &[Vec<f64>] {
        &self.test_rsrp_table
    }

    pub fn n_beams(&self) -> usize {
        self.spec.beam_angles.len()
    }

    pub fn n_locations(&self) -> usize {
        self.train_path.len()
    }

    /// Beam index maximizing RSRP at a train-path location; ties go to the
    /// lowest index.
    pub fn best_beam(&self, location_index: usize) -> Result<usize> {
        let row = self
            .rsrp_table
            .get(location_index)
            .ok_or_else(|| Error::InvalidInput(format!("location index {location_index} out of range")))?;
        Ok(argmax(row))
    }

    pub fn observation(&self, location_index: usize, beam: usize) -> Observation {
        let p = self.train_path[location_index.min(self.train_path.len() - 1)];
        let h = self.spec.square_side / 2.0;
        let mut onehot = vec![0.0; self.n_beams()];
        onehot[beam] = 1.0;
        Observation { ue_xy: [p.x / h, p.y / h], beam_onehot: onehot }
    }

    /// Starts an episode at path position 0 with the given beam selected.
    pub fn reset(&self, initial_beam: usize) -> Result<(Episode, Observation)> {
        if initial_beam >= self.n_beams() {
            return Err(Error::InvalidInput(format!("initial beam {initial_beam} out of range")));
        }
        let ep = Episode { index: 0, beam: initial_beam, done: false };
        let obs = self.observation(0, initial_beam);
        Ok((ep, obs))
    }

    /// Applies one action at the cursor's location:
    /// `reward = 0.9·rsrp_norm − 0.1·(wrapped Δθ / 90°)`, then advances the
    /// cursor. The episode is done after the final path location.
    pub fn step(&self, ep: &mut Episode, action: usize) -> Result<StepOutcome> {
        if ep.done {
            return Err(Error::ContractViolation("step called after episode end".into()));
        }
        if action >= self.n_beams() {
            return Err(Error::InvalidInput(format!("action {action} out of range")));
        }
        let loc = ep.index;
        let r_norm = self.rsrp_norm[loc][action];
        let delta = wrap_angle_180(self.spec.beam_angles[action] - self.spec.beam_angles[ep.beam]);
        let reward = 0.9 * r_norm - 0.1 * (delta / 90.0);

        let best = argmax(&self.rsrp_norm[loc]);
        let denom = self.rsrp_norm[loc][best];
        let rsrp_ratio = if denom == 0.0 { 1.0 } else { r_norm / denom };

        ep.index += 1;
        ep.beam = action;
        ep.done = ep.index >= self.train_path.len();
        let next_obs = self.observation(ep.index, action);
        Ok(StepOutcome { next_obs, reward, done: ep.done, rsrp_ratio })
    }

    /// Writes the environment as a directory: `cloud.txt` (geometry format),
    /// `path.csv`, `test_locations.csv`, `rsrp_table.csv` /
    /// `test_rsrp_table.csv` (dB, 6 decimals), and `spec.cfg`.
    pub fn save_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        self.cloud.save(dir.join("cloud.txt"))?;
        fs::write(dir.join("path.csv"), points_csv(&self.train_path))?;
        fs::write(dir.join("test_locations.csv"), points_csv(&self.test_locations))?;
        fs::write(dir.join("rsrp_table.csv"), table_csv(&self.rsrp_table))?;
        fs::write(dir.join("test_rsrp_table.csv"), table_csv(&self.test_rsrp_table))?;
        fs::write(dir.join("spec.cfg"), self.spec.to_kv_string())?;
        Ok(())
    }

    /// Reads an environment directory back. RSRP tables come from the files
    /// (6-decimal dB); the normalized table is rebuilt from them.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let spec = EnvSpec::from_kv_str(&fs::read_to_string(dir.join("spec.cfg"))?)?;
        let cloud = PointCloud::load(dir.join("cloud.txt"))?;
        let train_path = parse_points_csv(&fs::read_to_string(dir.join("path.csv"))?)?;
        let test_locations = parse_points_csv(&fs::read_to_string(dir.join("test_locations.csv"))?)?;
        let rsrp_table = parse_table_csv(&fs::read_to_string(dir.join("rsrp_table.csv"))?)?;
        let test_rsrp_table = parse_table_csv(&fs::read_to_string(dir.join("test_rsrp_table.csv"))?)?;

        let n_beams = spec.beam_angles.len();
        if train_path.len() != rsrp_table.len()
            || rsrp_table.iter().any(|r| r.len() != n_beams)
            || test_locations.len() != test_rsrp_table.len()
            || test_rsrp_table.iter().any(|r| r.len() != n_beams)
        {
            return Err(Error::Parse(format!("inconsistent table shapes in {}", dir.display())));
        }
        let rsrp_norm = min_max_normalize(&rsrp_table);
        Ok(Self { cloud, spec, train_path, test_locations, rsrp_table, rsrp_norm, test_rsrp_table })
    }
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn points_csv(points: &[Point2]) -> String {
    let mut out = String::from("x,y\n");
    for p in points {
        writeln!(out, "{},{}", p.x, p.y).unwrap();
    }
    out
}

fn parse_points_csv(text: &str) -> Result<Vec<Point2>> {
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let (x, y) = line
                .split_once(',')
                .ok_or_else(|| Error::Parse(format!("expected 'x,y', got '{line}'")))?;
            Ok(Point2::new(
                x.trim().parse().map_err(|_| Error::Parse(format!("bad x '{x}'")))?,
                y.trim().parse().map_err(|_| Error::Parse(format!("bad y '{y}'")))?,
            ))
        })
        .collect()
}

fn table_csv(table: &[Vec<f64>]) -> String {
    let mut out = String::new();
    for row in table {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
        writeln!(out, "{}", cells.join(",")).unwrap();
    }
    out
}

fn parse_table_csv(text: &str) -> Result<Vec<Vec<f64>>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            line.split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Parse(format!("bad table entry '{s}'")))
                })
                .collect()
        })
        .collect()
}
