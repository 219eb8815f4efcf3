//! Restart recovery. The registration is kept in `rp-state.json`; artifacts
//! and the cached proof live next to it in files named by artifact digest.

use std::fs;
use std::io;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use expresso_core::artifacts::ZkArtifacts;
use expresso_core::credential::ClientCredential;
use expresso_core::encoding::{Decode, Encode};
use expresso_core::membership::MembershipProof;
use serde::{Deserialize, Serialize};

use crate::client::RpState;

const STATE_FILE: &str = "rp-state.json";

#[derive(Serialize, Deserialize)]
struct StateFile {
    registration_token: String,
    credential: String,
    artifact_digest: String,
}

pub struct Saved {
    pub registration_token: String,
    pub credential: ClientCredential,
    pub artifacts: ZkArtifacts,
    pub proof: Option<MembershipProof>,
}

fn invalid(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(tmp, path)
}

pub fn save(dir: &Path, state: &RpState) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let digest = hex::encode(state.artifacts.artifact_digest);
    let artifacts_path = dir.join(format!("{digest}.artifacts"));
    if !artifacts_path.exists() {
        write_atomic(&artifacts_path, &state.artifacts.to_bytes())?;
    }
    let proof_path = dir.join(format!("{digest}.proof"));
    match &state.cached_proof {
        Some(p) => write_atomic(&proof_path, &p.to_bytes())?,
        None if proof_path.exists() => fs::remove_file(&proof_path)?,
        None => {}
    }
    let file = StateFile {
        registration_token: state.registration_token.clone(),
        credential: STANDARD.encode(state.credential.to_bytes()),
        artifact_digest: digest.clone(),
    };
    write_atomic(&dir.join(STATE_FILE), &serde_json::to_vec_pretty(&file).map_err(io::Error::other)?)?;

    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let stale = path.extension().is_some_and(|e| e == "artifacts" || e == "proof")
            && path.file_stem().is_some_and(|s| s != digest.as_str());
        if stale {
            fs::remove_file(path)?;
        }
    }
    Ok(())
}

pub fn load(dir: &Path) -> io::Result<Saved> {
    let file: StateFile = serde_json::from_slice(&fs::read(dir.join(STATE_FILE))?).map_err(io::Error::other)?;
    let credential_bytes = STANDARD.decode(&file.credential).map_err(|e| invalid(e.to_string()))?;
    let credential = ClientCredential::from_bytes(&credential_bytes).map_err(|e| invalid(e.to_string()))?;
    let artifacts = ZkArtifacts::from_bytes(&fs::read(dir.join(format!("{}.artifacts", file.artifact_digest)))?)
        .map_err(|e| invalid(e.to_string()))?;
    if hex::encode(artifacts.compute_digest()) != file.artifact_digest {
        return Err(invalid("stored artifacts do not match their file name"));
    }
    let proof = match fs::read(dir.join(format!("{}.proof", file.artifact_digest))) {
        Ok(bytes) => Some(MembershipProof::from_bytes(&bytes).map_err(|e| invalid(e.to_string()))?),
        Err(e) if e.kind() == io::ErrorKind::NotFound => None,
        Err(e) => return Err(e),
    };
    Ok(Saved {
        registration_token: file.registration_token,
        credential,
        artifacts,
        proof,
    })
}
