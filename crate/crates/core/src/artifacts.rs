//! zk-Artifacts: the versioned key bundle an IdP hands to its relying parties.

use sha2::{Digest, Sha256};

use crate::ceremony::{self, CeremonyError, CeremonyState, CeremonyTranscript};
use crate::encoding::{Decode, DecodeError, Encode, Reader, Writer};
use crate::groth16::{ProvingKey, VerificationKey};
use crate::r1cs::{ConstraintSystem, Digest32};

const CONTAINER_MAGIC: &[u8; 8] = b"XPRART01";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ZkArtifacts {
    pub version: u64,
    pub program_digest: Digest32,
    pub proving_key: ProvingKey,
    pub verification_key: VerificationKey,
    pub transcript_digest: Digest32,
    /// SHA-256 over the canonical encoding of every field above.
    pub artifact_digest: Digest32,
}

impl ZkArtifacts {
    pub fn new(version: u64, program_digest: Digest32, proving_key: ProvingKey, transcript_digest: Digest32) -> Self {
        let mut a = Self {
            version,
            program_digest,
            verification_key: proving_key.vk.clone(),
            proving_key,
            transcript_digest,
            artifact_digest: [0; 32],
        };
        a.artifact_digest = a.compute_digest();
        a
    }

    fn encode_body(&self, w: &mut Writer) {
        w.u64(self.version);
        w.raw(&self.program_digest);
        self.proving_key.encode(w);
        self.verification_key.encode(w);
        w.raw(&self.transcript_digest);
    }

    pub fn compute_digest(&self) -> Digest32 {
        let mut w = Writer::default();
        self.encode_body(&mut w);
        Sha256::digest(w.into_bytes()).into()
    }

    /// The stored digest matches the contents. Says nothing about whether
    /// the digest is the one a registry published.
    pub fn is_self_consistent(&self) -> bool {
        self.compute_digest() == self.artifact_digest && self.proving_key.vk == self.verification_key
    }

    pub fn sidecar(&self, file_name: &str) -> String {
        format!("{}  {file_name}\n", hex::encode(self.artifact_digest))
    }
}

/// The container file: magic, body, then the digest.
impl Encode for ZkArtifacts {
    fn encode(&self, w: &mut Writer) {
        w.raw(CONTAINER_MAGIC);
        self.encode_body(w);
        w.raw(&self.artifact_digest);
    }
}

/// Decoding does not check the digest, so tampered bundles can be loaded
/// and then rejected by the integrity check.
impl Decode for ZkArtifacts {
    fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        if r.array::<8>()? != *CONTAINER_MAGIC {
            return Err(DecodeError::Invalid("not an artifact container".into()));
        }
        Ok(Self {
            version: r.u64()?,
            program_digest: r.array()?,
            proving_key: ProvingKey::decode(r)?,
            verification_key: VerificationKey::decode(r)?,
            transcript_digest: r.array()?,
            artifact_digest: r.array()?,
        })
    }
}

/// Applies the beacon to a ceremony state and packages the result.
pub fn finalize(
    state: &CeremonyState,
    beacon: &[u8],
    beacon_source: &str,
    cs: &ConstraintSystem,
    version: u64,
) -> Result<(ZkArtifacts, CeremonyTranscript), CeremonyError> {
    let (key, transcript) = ceremony::finalize(state, beacon, beacon_source, cs)?;
    let artifacts = ZkArtifacts::new(version, state.program_digest, key, transcript.digest());
    Ok((artifacts, transcript))
}

/// One complete phase-2 cycle from a cached initial state.
pub fn run_ceremony(
    initial: &CeremonyState,
    contributors: &[(String, Vec<u8>)],
    beacon: &[u8],
    beacon_source: &str,
    cs: &ConstraintSystem,
    version: u64,
) -> Result<(ZkArtifacts, CeremonyTranscript), CeremonyError> {
    let mut state = initial.clone();
    for (id, entropy) in contributors {
        state = ceremony::contribute(&state, id, entropy)?.0;
    }
    finalize(&state, beacon, beacon_source, cs, version)
}
