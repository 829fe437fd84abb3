//! Run configuration: a plain-text key-value file merged with command-line
//! overrides. Every knob of the pipeline lives here so reruns of a config are
//! byte-reproducible.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use beamshare_core::dqn::TrainConfig;
use beamshare_core::simenv::{parse_kv_lines, EnvSpec};

#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Spec of the base environment A; B and C are derived from it.
    pub env: EnvSpec,
    /// Perturbation radius generating environment B.
    pub radius_b: f64,
    /// Perturbation radius generating environment C.
    pub radius_c: f64,
    pub train: TrainConfig,
    /// Training seeds; one independent run per seed.
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    /// Episode budget for the nodes in the protocol demo.
    pub demo_episodes: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            env: EnvSpec::default(),
            radius_b: 0.25,
            radius_c: 2.0,
            train: TrainConfig::default(),
            seeds: vec![1, 2, 3, 4, 5, 6, 7],
            out: PathBuf::from("runs"),
            demo_episodes: 30,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut cfg = RunConfig::default();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config file {}", path.display()))?;
            cfg.apply_kv(&text)
                .with_context(|| format!("parsing config file {}", path.display()))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply_kv(&mut self, text: &str) -> Result<()> {
        for (key, value) in parse_kv_lines(text)? {
            match key.as_str() {
                "square_side" => self.env.square_side = num(&key, &value)?,
                "n_scatterers" => self.env.n_scatterers = num(&key, &value)?,
                "n_train_locations" => self.env.n_train_locations = num(&key, &value)?,
                "n_test_locations" => self.env.n_test_locations = num(&key, &value)?,
                "beam_angles" => {
                    self.env.beam_angles = value
                        .split(',')
                        .map(|s| num::<f64>("beam_angles", s.trim()))
                        .collect::<Result<_>>()?;
                }
                "beam_sigma" => self.env.beam_sigma = num(&key, &value)?,
                "reflection_gain" => self.env.reflection_gain = num(&key, &value)?,
                "env_seed" => self.env.seed = num(&key, &value)?,
                "radius_b" => self.radius_b = num(&key, &value)?,
                "radius_c" => self.radius_c = num(&key, &value)?,
                "episodes_max" => self.train.episodes_max = num(&key, &value)?,
                "gamma" => self.train.gamma = num(&key, &value)?,
                "epsilon_start" => self.train.epsilon_start = num(&key, &value)?,
                "epsilon_end" => self.train.epsilon_end = num(&key, &value)?,
                "epsilon_decay" => self.train.epsilon_decay = num(&key, &value)?,
                "replay_capacity" => self.train.replay_capacity = num(&key, &value)?,
                "batch_size" => self.train.batch_size = num(&key, &value)?,
                "learning_rate" => self.train.learning_rate = num(&key, &value)?,
                "target_sync_every" => self.train.target_sync_every = num(&key, &value)?,
                "stop_at_reward_fraction" => {
                    self.train.stop_at_reward_fraction = if value == "none" {
                        None
                    } else {
                        Some(num(&key, &value)?)
                    };
                }
                "seeds" => {
                    self.seeds = value
                        .split(',')
                        .map(|s| num::<u64>("seeds", s.trim()))
                        .collect::<Result<_>>()?;
                }
                "out" => self.out = PathBuf::from(&value),
                "demo_episodes" => self.demo_episodes = num(&key, &value)?,
                other => bail!("unknown config key '{other}'"),
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.train.validate()?;
        if self.seeds.is_empty() {
            bail!("seed list must be non-empty");
        }
        for r in [self.radius_b, self.radius_c] {
            if !(r.is_finite() && r >= 0.0) {
                bail!("perturbation radii must be finite and non-negative, got {r}");
            }
        }
        Ok(())
    }

    /// Canonical text form, mostly for debugging and run provenance.
    pub fn to_kv_string(&self) -> String {
        let mut s = self.env.to_kv_string().replace("seed = ", "env_seed = ");
        s = s.lines().filter(|l| !l.starts_with("label")).collect::<Vec<_>>().join("\n");
        s.push('\n');
        writeln!(s, "radius_b = {}", self.radius_b).unwrap();
        writeln!(s, "radius_c = {}", self.radius_c).unwrap();
        writeln!(s, "episodes_max = {}", self.train.episodes_max).unwrap();
        writeln!(s, "gamma = {}", self.train.gamma).unwrap();
        writeln!(s, "epsilon_start = {}", self.train.epsilon_start).unwrap();
        writeln!(s, "epsilon_end = {}", self.train.epsilon_end).unwrap();
        writeln!(s, "epsilon_decay = {}", self.train.epsilon_decay).unwrap();
        writeln!(s, "replay_capacity = {}", self.train.replay_capacity).unwrap();
        writeln!(s, "batch_size = {}", self.train.batch_size).unwrap();
        writeln!(s, "learning_rate = {}", self.train.learning_rate).unwrap();
        writeln!(s, "target_sync_every = {}", self.train.target_sync_every).unwrap();
        match self.train.stop_at_reward_fraction {
            Some(f) => writeln!(s, "stop_at_reward_fraction = {f}").unwrap(),
            None => writeln!(s, "stop_at_reward_fraction = none").unwrap(),
        }
        let seeds: Vec<String> = self.seeds.iter().map(|v| v.to_string()).collect();
        writeln!(s, "seeds = {}", seeds.join(",")).unwrap();
        writeln!(s, "out = {}", self.out.display()).unwrap();
        writeln!(s, "demo_episodes = {}", self.demo_episodes).unwrap();
        s
    }
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse::<T>()
        .map_err(|_| anyhow::anyhow!("bad value '{value}' for config key '{key}'"))
}
