//! The model-sharing protocol between gNBs and a centralized unit.
//!
//! Existing gNBs report point clouds of their environments to the centralized
//! unit, which maintains the pairwise Chamfer distance map. A newly deployed
//! gNB queries the unit for its most similar peer, pulls that peer's trained
//! weights, fine-tunes locally, and finally contributes its own state back to
//! the registry.

pub mod transport;
pub mod wire;

use std::collections::BTreeMap;
use std::collections::hash_map::DefaultHasher;
use std::fs;
use std::hash::{Hash, Hasher};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;

use crate::dqn::{deserialize_weights, evaluate, fine_tune, serialize_weights, QNetwork, TrainConfig};
use crate::error::{Error, Result};
use crate::geometry::{chamfer_distance, PointCloud};
use crate::layout::{build_distance_map, DistanceMap};
use crate::simenv::BeamEnvironment;

pub use transport::{InProcessTransport, NodeHandler, NodeServer, SocketTransport, Transport};
pub use wire::{read_frame, write_frame, Body, Envelope, WireCloud};

/// Well-known node id of the centralized unit.
pub const CENTRAL_ID: &str = "central";

/// Whether a node already owns a trained model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Existing,
    New,
}

/// A gNB participant. The role is derived from model presence, so
/// `Existing ⟹ model present` holds by construction.
#[derive(Debug, Clone)]
pub struct GnbNode {
    id: String,
    cloud: PointCloud,
    model: Option<QNetwork>,
}

impl GnbNode {
    pub fn new(id: impl Into<String>, cloud: PointCloud, model: Option<QNetwork>) -> Result<Self> {
        let id = id.into();
        validate_node_id(&id)?;
        Ok(Self { id, cloud, model })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn cloud(&self) -> &PointCloud {
        &self.cloud
    }

    pub fn model(&self) -> Option<&QNetwork> {
        self.model.as_ref()
    }

    pub fn set_model(&mut self, model: QNetwork) {
        self.model = Some(model);
    }

    pub fn role(&self) -> Role {
        if self.model.is_some() {
            Role::Existing
        } else {
            Role::New
        }
    }
}

impl NodeHandler for GnbNode {
    fn handle_envelope(&mut self, envelope: Envelope) -> Envelope {
        let body = match envelope.body {
            Body::ModelRequest => match &self.model {
                Some(model) => Body::ModelTransfer {
                    weights_b64: BASE64.encode(serialize_weights(model)),
                },
                None => Body::Error { message: "untrained peer".into() },
            },
            other => Body::Error { message: format!("unexpected message for a gNB node: {other:?}") },
        };
        Envelope { sender: self.id.clone(), body }
    }
}

fn validate_node_id(id: &str) -> Result<()> {
    if id.is_empty() || !id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
        return Err(Error::InvalidInput(format!(
            "node id '{id}' must be non-empty and use only [A-Za-z0-9_-]"
        )));
    }
    Ok(())
}

/// The centralized unit's registry: one cloud per reporting gNB, the derived
/// distance map, and a version counter bumped on every accepted report.
#[derive(Debug, Clone, Default)]
pub struct CentralState {
    clouds: BTreeMap<String, PointCloud>,
    map: Option<DistanceMap>,
    version: u64,
}

impl CentralState {
    pub fn clouds(&self) -> &BTreeMap<String, PointCloud> {
        &self.clouds
    }

    pub fn map(&self) -> Option<&DistanceMap> {
        self.map.as_ref()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn len(&self) -> usize {
        self.clouds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clouds.is_empty()
    }

    fn accept(&mut self, sender: &str, cloud: PointCloud) -> Result<u64> {
        validate_node_id(sender)?;
        let relabeled = cloud.with_label(sender)?;
        self.clouds.insert(sender.to_string(), relabeled);
        let clouds: Vec<PointCloud> = self.clouds.values().cloned().collect();
        self.map = Some(build_distance_map(&clouds)?);
        self.version += 1;
        Ok(self.version)
    }

    /// The stored gNB closest to `cloud` by Chamfer distance; lexicographic
    /// tie-break on the id via sorted iteration with a strict comparison.
    pub fn nearest(&self, cloud: &PointCloud) -> Result<(String, f64)> {
        let mut best: Option<(String, f64)> = None;
        for (id, stored) in &self.clouds {
            let d = chamfer_distance(cloud, stored);
            if best.as_ref().is_none_or(|(_, bd)| d < *bd) {
                best = Some((id.clone(), d));
            }
        }
        best.ok_or_else(|| Error::Protocol("no peers".into()))
    }
}

/// Centralized unit node. With persistence enabled, every accepted report is
/// mirrored to a directory of geometry-format cloud files plus a `version`
/// file, so a restarted unit resumes with an identical registry.
#[derive(Debug)]
pub struct CentralUnit {
    state: CentralState,
    persist_dir: Option<PathBuf>,
}

impl CentralUnit {
    pub fn new() -> Self {
        Self { state: CentralState::default(), persist_dir: None }
    }

    /// Opens (or creates) a persistent unit backed by `dir`. An existing
    /// registry in `dir` is loaded.
    pub fn with_persistence(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        if dir.join("version").exists() {
            Self::load(&dir)
        } else {
            fs::create_dir_all(&dir)?;
            Ok(Self { state: CentralState::default(), persist_dir: Some(dir) })
        }
    }

    /// Restores a unit from its persistence directory.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let version: u64 = fs::read_to_string(dir.join("version"))?
            .trim()
            .parse()
            .map_err(|_| Error::Parse("bad version file".into()))?;
        let mut entries: Vec<PathBuf> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "cloud"))
            .collect();
        entries.sort();
        let mut clouds = BTreeMap::new();
        for path in entries {
            let cloud = PointCloud::load(&path)?;
            clouds.insert(cloud.label().to_string(), cloud);
        }
        let map = if clouds.is_empty() {
            None
        } else {
            let list: Vec<PointCloud> = clouds.values().cloned().collect();
            Some(build_distance_map(&list)?)
        };
        Ok(Self {
            state: CentralState { clouds, map, version },
            persist_dir: Some(dir.to_path_buf()),
        })
    }

    pub fn state(&self) -> &CentralState {
        &self.state
    }

    /// Stores (or replaces) the sender's cloud, recomputes the distance map,
    /// bumps the version, and persists.
    pub fn handle_report(&mut self, sender: &str, cloud: PointCloud) -> Result<u64> {
        let version = self.state.accept(sender, cloud)?;
        self.persist(sender)?;
        Ok(version)
    }

    fn persist(&self, sender: &str) -> Result<()> {
        let Some(dir) = &self.persist_dir else {
            return Ok(());
        };
        fs::create_dir_all(dir)?;
        let cloud = &self.state.clouds[sender];
        cloud.save(dir.join(format!("{sender}.cloud")))?;
        fs::write(dir.join("version"), format!("{}\n", self.state.version))?;
        Ok(())
    }
}

impl Default for CentralUnit {
    fn default() -> Self {
        Self::new()
    }
}

impl NodeHandler for CentralUnit {
    fn handle_envelope(&mut self, envelope: Envelope) -> Envelope {
        let sender = envelope.sender;
        let body = match envelope.body {
            Body::PointCloudReport { cloud } | Body::StateContribution { cloud } => {
                match cloud.to_cloud().and_then(|c| self.handle_report(&sender, c)) {
                    Ok(version) => Body::DistanceMapAck { version },
                    Err(e) => Body::Error { message: e.to_string() },
                }
            }
            Body::NearestQuery { cloud } => {
                match cloud.to_cloud().and_then(|c| self.state.nearest(&c)) {
                    Ok((peer, distance)) => Body::NearestResponse { peer, distance },
                    Err(e) => Body::Error { message: e.to_string() },
                }
            }
            Body::ModelRequest => Body::Error { message: "centralized unit does not host models".into() },
            other => Body::Error { message: format!("unexpected message for the centralized unit: {other:?}") },
        };
        Envelope { sender: CENTRAL_ID.to_string(), body }
    }
}

/// Sends one point-cloud report and returns the acknowledged map version.
pub fn report_cloud(
    transport: &dyn Transport,
    sender: &str,
    cloud: &PointCloud,
    central: &str,
) -> Result<u64> {
    let reply = transport.request(
        central,
        Envelope { sender: sender.to_string(), body: Body::PointCloudReport { cloud: cloud.into() } },
    )?;
    match reply.body {
        Body::DistanceMapAck { version } => Ok(version),
        Body::Error { message } => Err(Error::Protocol(message)),
        other => Err(Error::Protocol(format!("unexpected reply: {other:?}"))),
    }
}

/// Asks the centralized unit for the most similar stored gNB.
pub fn query_nearest(
    transport: &dyn Transport,
    sender: &str,
    cloud: &PointCloud,
    central: &str,
) -> Result<(String, f64)> {
    let reply = transport.request(
        central,
        Envelope { sender: sender.to_string(), body: Body::NearestQuery { cloud: cloud.into() } },
    )?;
    match reply.body {
        Body::NearestResponse { peer, distance } => Ok((peer, distance)),
        Body::Error { message } => Err(Error::Protocol(message)),
        other => Err(Error::Protocol(format!("unexpected reply: {other:?}"))),
    }
}

/// Pulls a peer's trained weights and reconstructs the network. The blob is
/// bit-exact, so the result equals the peer's model parameter-for-parameter.
pub fn request_model(transport: &dyn Transport, requester: &str, peer: &str) -> Result<QNetwork> {
    let reply = transport.request(
        peer,
        Envelope { sender: requester.to_string(), body: Body::ModelRequest },
    )?;
    match reply.body {
        Body::ModelTransfer { weights_b64 } => {
            let bytes = BASE64
                .decode(weights_b64.as_bytes())
                .map_err(|e| Error::CorruptModel(format!("bad base64 payload: {e}")))?;
            deserialize_weights(&bytes)
        }
        Body::Error { message } => Err(Error::Protocol(message)),
        other => Err(Error::Protocol(format!("unexpected reply: {other:?}"))),
    }
}

/// Registers a freshly fine-tuned node with the centralized unit. Refused
/// locally if the node has no model yet.
pub fn contribute_state(transport: &dyn Transport, node: &GnbNode, central: &str) -> Result<u64> {
    if node.model.is_none() {
        return Err(Error::InvalidInput(
            "a node cannot contribute its state before it holds a trained model".into(),
        ));
    }
    let reply = transport.request(
        central,
        Envelope {
            sender: node.id.clone(),
            body: Body::StateContribution { cloud: node.cloud().into() },
        },
    )?;
    match reply.body {
        Body::DistanceMapAck { version } => Ok(version),
        Body::Error { message } => Err(Error::Protocol(message)),
        other => Err(Error::Protocol(format!("unexpected reply: {other:?}"))),
    }
}

/// Which transport an onboarding scenario runs over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransportKind {
    InProcess,
    Sockets,
}

#[derive(Debug, Clone)]
pub struct ScenarioOptions {
    pub transport: TransportKind,
    /// Directory backing the centralized unit's registry.
    pub persist_dir: PathBuf,
    /// Kill and restore the centralized unit from persistence between the
    /// report phase and the nearest query.
    pub restart_central_after_reports: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioReport {
    pub chosen_peer: String,
    pub chamfer_distance: f64,
    pub fine_tune_episodes: usize,
    pub final_score: f64,
    pub central_version: u64,
    /// Hash of the transferred weight blob, for bit-identity checks.
    pub transferred_weights_hash: u64,
}

pub fn hash_bytes(bytes: &[u8]) -> u64 {
    let mut hasher = DefaultHasher::new();
    bytes.hash(&mut hasher);
    hasher.finish()
}

/// Runs the whole onboarding sequence: reports from every existing gNB,
/// (optionally) a centralized-unit restart, the nearest query, the model
/// transfer, local fine-tuning, evaluation, and the closing state
/// contribution. Deterministic given the inputs and seeds.
pub fn run_onboarding_scenario(
    existing: &[(PointCloud, QNetwork)],
    new_env: &BeamEnvironment,
    fine_tune_cfg: &TrainConfig,
    options: &ScenarioOptions,
) -> Result<ScenarioReport> {
    if existing.is_empty() {
        return Err(Error::InvalidInput("scenario needs at least one existing gNB".into()));
    }
    let new_id = new_env.cloud().label().to_string();
    validate_node_id(&new_id)?;
    let mut ids = vec![CENTRAL_ID.to_string(), new_id.clone()];
    for (cloud, _) in existing {
        let id = cloud.label().to_string();
        validate_node_id(&id)?;
        if ids.contains(&id) {
            return Err(Error::InvalidInput(format!("duplicate node id '{id}'")));
        }
        ids.push(id);
    }

    match options.transport {
        TransportKind::InProcess => {
            let transport = InProcessTransport::new();
            transport.register(
                CENTRAL_ID,
                Box::new(CentralUnit::with_persistence(&options.persist_dir)?),
            );
            for (cloud, model) in existing {
                let node = GnbNode::new(cloud.label(), cloud.clone(), Some(model.clone()))?;
                transport.register(node.id().to_string(), Box::new(node));
            }
            let restart = |t: &InProcessTransport| -> Result<()> {
                t.replace(CENTRAL_ID, Box::new(CentralUnit::load(&options.persist_dir)?));
                Ok(())
            };
            scenario_steps(&transport, restart, existing, new_env, fine_tune_cfg, options)
        }
        TransportKind::Sockets => {
            let transport = SocketTransport::new();
            let central = Arc::new(Mutex::new(CentralUnit::with_persistence(&options.persist_dir)?));
            let central_server = std::cell::RefCell::new(Some(NodeServer::spawn(CENTRAL_ID, central)?));
            transport.set_peer(CENTRAL_ID, central_server.borrow().as_ref().unwrap().addr());

            let mut peer_servers = Vec::new();
            for (cloud, model) in existing {
                let node = GnbNode::new(cloud.label(), cloud.clone(), Some(model.clone()))?;
                let id = node.id().to_string();
                let server = NodeServer::spawn(&id, Arc::new(Mutex::new(node)))?;
                transport.set_peer(id, server.addr());
                peer_servers.push(server);
            }

            let restart = |t: &SocketTransport| -> Result<()> {
                if let Some(server) = central_server.borrow_mut().take() {
                    server.shutdown();
                }
                let reloaded = Arc::new(Mutex::new(CentralUnit::load(&options.persist_dir)?));
                let server = NodeServer::spawn(CENTRAL_ID, reloaded)?;
                t.set_peer(CENTRAL_ID, server.addr());
                *central_server.borrow_mut() = Some(server);
                Ok(())
            };
            let report = scenario_steps(&transport, restart, existing, new_env, fine_tune_cfg, options);

            if let Some(server) = central_server.into_inner() {
                server.shutdown();
            }
            for server in peer_servers {
                server.shutdown();
            }
            report
        }
    }
}

fn scenario_steps<T: Transport>(
    transport: &T,
    restart: impl Fn(&T) -> Result<()>,
    existing: &[(PointCloud, QNetwork)],
    new_env: &BeamEnvironment,
    fine_tune_cfg: &TrainConfig,
    options: &ScenarioOptions,
) -> Result<ScenarioReport> {
    // Steps 1-4: existing gNBs report their environments; the unit keeps the
    // distance map current.
    for (cloud, _) in existing {
        report_cloud(transport, cloud.label(), cloud, CENTRAL_ID)?;
    }

    if options.restart_central_after_reports {
        restart(transport)?;
    }

    // Steps 5-8: the new gNB shares its cloud and learns its nearest peer.
    let new_cloud = new_env.cloud();
    let new_id = new_cloud.label();
    let (chosen_peer, chamfer) = query_nearest(transport, new_id, new_cloud, CENTRAL_ID)?;

    // Steps 9-11: model transfer from the chosen peer.
    let transferred = request_model(transport, new_id, &chosen_peer)?;
    let transferred_weights_hash = hash_bytes(&serialize_weights(&transferred));

    // Steps 12-13: local fine-tuning and evaluation at the new gNB.
    let (tuned, history) = fine_tune(&transferred, new_env, fine_tune_cfg)?;
    let final_score = evaluate(&tuned, new_env, new_env.test_locations())?;

    // Step 14: the new gNB contributes its state to the registry.
    let new_node = GnbNode::new(new_id, new_cloud.clone(), Some(tuned))?;
    let central_version = contribute_state(transport, &new_node, CENTRAL_ID)?;

    Ok(ScenarioReport {
        chosen_peer,
        chamfer_distance: chamfer,
        fine_tune_episodes: history.len(),
        final_score,
        central_version,
        transferred_weights_hash,
    })
}
