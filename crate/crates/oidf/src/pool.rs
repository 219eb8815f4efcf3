//! The artifact pool and the per-IdP digest log.

use std::collections::{HashMap, HashSet, VecDeque};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use expresso_core::api::DigestRecord;
use expresso_core::artifacts::{run_ceremony, ZkArtifacts};
use expresso_core::ceremony::{CeremonyError, CeremonyState, CeremonyTranscript, Phase1Parameters};
use expresso_core::circuit::{compile, BoilerplateProgram, CircuitError};
use expresso_core::encoding::{Decode, Encode};
use expresso_core::r1cs::{ConstraintSystem, Digest32};
use rand::RngCore;
use serde::Deserialize;
use thiserror::Error;

use crate::store::{LogEntry, Store};

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("IdP {0} is not enrolled")]
    UnknownIdP(String),
    #[error("artifact pool is exhausted; retry after replenishment")]
    PoolExhausted,
    #[error("IdP {0} has no allocation yet")]
    NoAllocation(String),
    #[error(transparent)]
    Ceremony(#[from] CeremonyError),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error("storage: {0}")]
    Storage(#[from] std::io::Error),
    #[error("corrupt registry state: {0}")]
    Corrupt(String),
}

/// Produces fresh, unversioned ceremony outputs.
pub trait ArtifactSource: Send + Sync {
    fn program(&self) -> &BoilerplateProgram;
    fn produce(&self) -> Result<(ZkArtifacts, CeremonyTranscript), RegistryError>;
}

/// Runs a full phase-2 cycle per artifact from a shared initial state. Each
/// configured contributor draws fresh OS entropy; the beacon is the public
/// source string plus a cycle counter.
pub struct CeremonySource {
    program: BoilerplateProgram,
    cs: ConstraintSystem,
    initial: CeremonyState,
    contributors: Vec<String>,
    beacon_source: String,
    cycles: AtomicU64,
}

impl CeremonySource {
    pub fn new(
        program: BoilerplateProgram,
        phase1: &Phase1Parameters,
        contributors: Vec<String>,
        beacon_source: impl Into<String>,
    ) -> Result<Self, RegistryError> {
        let cs = compile(&program)?;
        let initial = CeremonyState::initialize(phase1, &cs, program.program_digest)?;
        Ok(Self::from_initial(program, cs, initial, contributors, beacon_source))
    }

    /// Reuses an already initialised phase-2 state.
    pub fn from_initial(
        program: BoilerplateProgram,
        cs: ConstraintSystem,
        initial: CeremonyState,
        contributors: Vec<String>,
        beacon_source: impl Into<String>,
    ) -> Self {
        Self {
            program,
            cs,
            initial,
            contributors,
            beacon_source: beacon_source.into(),
            cycles: AtomicU64::new(0),
        }
    }

    pub fn constraint_system(&self) -> &ConstraintSystem {
        &self.cs
    }
}

impl ArtifactSource for CeremonySource {
    fn program(&self) -> &BoilerplateProgram {
        &self.program
    }

    fn produce(&self) -> Result<(ZkArtifacts, CeremonyTranscript), RegistryError> {
        let cycle = self.cycles.fetch_add(1, Ordering::Relaxed);
        let contributors: Vec<(String, Vec<u8>)> = self
            .contributors
            .iter()
            .map(|id| {
                let mut entropy = vec![0u8; 32];
                rand::rngs::OsRng.fill_bytes(&mut entropy);
                (id.clone(), entropy)
            })
            .collect();
        let beacon = format!("{}#{cycle}", self.beacon_source);
        Ok(run_ceremony(&self.initial, &contributors, beacon.as_bytes(), &self.beacon_source, &self.cs, 0)?)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct RegistryConfig {
    pub enrolled: Vec<String>,
    /// Replenish in the background once fewer artifacts than this are pending.
    /// Zero disables automatic replenishment.
    pub low_watermark: usize,
    pub replenish_batch: usize,
    pub data_dir: Option<PathBuf>,
}

impl Default for RegistryConfig {
    fn default() -> Self {
        Self {
            enrolled: Vec::new(),
            low_watermark: 0,
            replenish_batch: 1,
            data_dir: None,
        }
    }
}

impl RegistryConfig {
    pub fn load(path: &std::path::Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}

struct PoolEntry {
    pool_digest: Digest32,
    artifacts: ZkArtifacts,
}

#[derive(Default)]
struct Pool {
    pending: VecDeque<PoolEntry>,
    delivered: HashSet<Digest32>,
    /// Blob of the most recent delivery per IdP; older ones are dropped.
    latest_blob: HashMap<String, Digest32>,
}

pub struct Registry {
    source: Arc<dyn ArtifactSource>,
    config: RegistryConfig,
    enrolled: HashSet<String>,
    store: Store,
    pool: Mutex<Pool>,
    history: RwLock<HashMap<String, Vec<DigestRecord>>>,
    replenishing: AtomicBool,
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

impl Registry {
    /// Opens the registry, replaying the log when a data directory is set.
    pub fn open(config: RegistryConfig, source: Arc<dyn ArtifactSource>) -> Result<Self, RegistryError> {
        let (store, replay) = match &config.data_dir {
            Some(dir) => Store::open(dir)?,
            None => (Store::memory(), Vec::new()),
        };
        let registry = Self {
            source,
            enrolled: config.enrolled.iter().cloned().collect(),
            config,
            store,
            pool: Mutex::new(Pool::default()),
            history: RwLock::new(HashMap::new()),
            replenishing: AtomicBool::new(false),
        };
        registry.replay(replay)?;
        Ok(registry)
    }

    fn replay(&self, entries: Vec<LogEntry>) -> Result<(), RegistryError> {
        let mut pool = self.pool.lock().unwrap();
        let mut history = self.history.write().unwrap();
        // Consumed pool blobs are deleted, so skip their enqueue entries.
        let consumed: HashSet<Digest32> = entries
            .iter()
            .filter_map(|e| match e {
                LogEntry::Allocate { pool_digest, .. } => Some(*pool_digest),
                _ => None,
            })
            .collect();
        for entry in entries {
            match entry {
                LogEntry::Enqueue { pool_digest, .. } if consumed.contains(&pool_digest) => {}
                LogEntry::Enqueue { pool_digest, .. } => {
                    let bytes = self
                        .store
                        .get_blob(&pool_digest)
                        .ok_or_else(|| RegistryError::Corrupt(format!("missing pooled blob {}", hex::encode(pool_digest))))?;
                    let artifacts = ZkArtifacts::from_bytes(&bytes)
                        .map_err(|e| RegistryError::Corrupt(format!("pooled blob: {e}")))?;
                    if artifacts.artifact_digest != pool_digest || !artifacts.is_self_consistent() {
                        return Err(RegistryError::Corrupt("pooled blob digest mismatch".into()));
                    }
                    pool.pending.push_back(PoolEntry { pool_digest, artifacts });
                }
                LogEntry::Allocate { record, .. } => {
                    pool.delivered.insert(record.artifact_digest);
                    pool.latest_blob.insert(record.idp_id.clone(), record.artifact_digest);
                    history.entry(record.idp_id.clone()).or_default().push(record);
                }
            }
        }
        Ok(())
    }

    pub fn program(&self) -> &BoilerplateProgram {
        self.source.program()
    }

    pub fn pending(&self) -> usize {
        self.pool.lock().unwrap().pending.len()
    }

    /// Number of stored blobs (pooled artifacts, latest deliveries, transcripts).
    pub fn stored_blobs(&self) -> usize {
        self.store.blob_count()
    }

    /// Runs `count` ceremony cycles and enqueues the results. Returns the
    /// pool digests in enqueue order.
    pub fn replenish(&self, count: usize) -> Result<Vec<Digest32>, RegistryError> {
        let mut digests = Vec::with_capacity(count);
        for _ in 0..count {
            let (artifacts, transcript) = self.source.produce()?;
            let pool_digest = artifacts.artifact_digest;
            let transcript_digest = transcript.digest();
            self.store.put_blob(transcript_digest, transcript.to_bytes())?;
            self.store.put_blob(pool_digest, artifacts.to_bytes())?;
            let mut pool = self.pool.lock().unwrap();
            self.store.append(&LogEntry::Enqueue { pool_digest, transcript_digest })?;
            pool.pending.push_back(PoolEntry { pool_digest, artifacts });
            digests.push(pool_digest);
        }
        Ok(digests)
    }

    /// Pops one pooled artifact, stamps the IdP's next version on it and
    /// publishes its digest, all under one lock.
    pub fn request_artifacts(&self, idp_id: &str) -> Result<(DigestRecord, ZkArtifacts), RegistryError> {
        if !self.enrolled.contains(idp_id) {
            return Err(RegistryError::UnknownIdP(idp_id.to_string()));
        }
        let mut pool = self.pool.lock().unwrap();
        let entry = pool.pending.pop_front().ok_or(RegistryError::PoolExhausted)?;
        let version = self
            .history
            .read()
            .unwrap()
            .get(idp_id)
            .and_then(|h| h.last())
            .map_or(1, |r| r.version + 1);
        let source = entry.artifacts;
        let artifacts =
            ZkArtifacts::new(version, source.program_digest, source.proving_key, source.transcript_digest);
        let record = DigestRecord {
            idp_id: idp_id.to_string(),
            version,
            artifact_digest: artifacts.artifact_digest,
            published_at: now(),
        };
        if pool.delivered.contains(&record.artifact_digest) {
            return Err(RegistryError::Corrupt("artifact digest already delivered".into()));
        }

        self.store.put_blob(record.artifact_digest, artifacts.to_bytes())?;
        self.store.append(&LogEntry::Allocate {
            pool_digest: entry.pool_digest,
            record: record.clone(),
        })?;
        self.store.delete_blob(&entry.pool_digest)?;
        if let Some(old) = pool.latest_blob.insert(idp_id.to_string(), record.artifact_digest) {
            self.store.delete_blob(&old)?;
        }
        pool.delivered.insert(record.artifact_digest);
        self.history.write().unwrap().entry(idp_id.to_string()).or_default().push(record.clone());
        tracing::info!(idp = idp_id, version, digest = %hex::encode(record.artifact_digest), "artifact allocated");
        Ok((record, artifacts))
    }

    fn check_enrolled(&self, idp_id: &str) -> Result<(), RegistryError> {
        if self.enrolled.contains(idp_id) {
            Ok(())
        } else {
            Err(RegistryError::UnknownIdP(idp_id.to_string()))
        }
    }

    pub fn latest_digest(&self, idp_id: &str) -> Result<DigestRecord, RegistryError> {
        self.check_enrolled(idp_id)?;
        self.history
            .read()
            .unwrap()
            .get(idp_id)
            .and_then(|h| h.last().cloned())
            .ok_or_else(|| RegistryError::NoAllocation(idp_id.to_string()))
    }

    pub fn history(&self, idp_id: &str) -> Result<Vec<DigestRecord>, RegistryError> {
        self.check_enrolled(idp_id)?;
        Ok(self.history.read().unwrap().get(idp_id).cloned().unwrap_or_default())
    }

    pub fn blob(&self, digest: &Digest32) -> Option<Arc<Vec<u8>>> {
        self.store.get_blob(digest)
    }

    pub fn below_watermark(&self) -> bool {
        self.pending() < self.config.low_watermark
    }

    /// Tops the pool back up when it has fallen below the watermark. Only one
    /// caller replenishes at a time; the others return immediately.
    pub fn maintain(&self) -> Result<usize, RegistryError> {
        if !self.below_watermark() || self.replenishing.swap(true, Ordering::AcqRel) {
            return Ok(0);
        }
        let deficit = self.config.low_watermark.saturating_sub(self.pending());
        let result = self.replenish(deficit.max(self.config.replenish_batch));
        self.replenishing.store(false, Ordering::Release);
        result.map(|d| d.len())
    }
}
