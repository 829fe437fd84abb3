//! Workbench for environment-aware transfer reinforcement learning in
//! mmWave beam selection.
//!
//! The crate covers the full pipeline:
//!
//! - [`geometry`] — point-cloud environments and the Chamfer distance;
//! - [`layout`] — pairwise distance maps and their 2-D stress-minimized
//!   embedding;
//! - [`simenv`] — a synthetic scattering-channel RSRP model and the
//!   beam-selection MDP;
//! - [`dqn`] — a from-scratch DQN (3-layer MLP, replay buffer, target
//!   network), fine-tuning, evaluation, MAC accounting, and a bit-exact
//!   weight format;
//! - [`registry`] — the gNB ↔ centralized-unit model-sharing protocol over
//!   in-process or socket transports, with a persistent cloud registry.
//!
//! Every stochastic operation takes an explicit seed and is bit-reproducible.

pub mod dqn;
pub mod error;
pub mod geometry;
pub mod layout;
pub mod registry;
pub mod simenv;

pub use dqn::{
    deserialize_weights, evaluate, fine_tune, init_network, macop_count, serialize_weights, train,
    Arch, QNetwork, ReplayBuffer, TrainConfig, TrainHistory,
};
pub use error::{Error, Result};
pub use geometry::{chamfer_distance, perturb_cloud, Point2, PointCloud};
pub use layout::{
    build_distance_map, kamada_kawai, nearest_environment, stress_energy, DistanceMap, Layout,
    LayoutParams,
};
pub use registry::{
    run_onboarding_scenario, CentralState, CentralUnit, GnbNode, ScenarioOptions, ScenarioReport,
    TransportKind,
};
pub use simenv::{
    compute_rsrp, generate_environment, perturbed_environment, BeamEnvironment, EnvSpec, Episode,
    Observation, StepOutcome,
};
