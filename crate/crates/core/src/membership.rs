//! Membership proofs and the pseudonyms derived from them.

use ark_bn254::Fr;
use sha2::{Digest, Sha256};

use crate::encoding::{Decode, DecodeError, Encode, Reader, Writer};
use crate::groth16::Proof;
use crate::r1cs::Digest32;

/// Upper bound on the serialized size of a membership proof.
pub const MAX_PROOF_PAYLOAD: usize = 4096;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MembershipProof {
    pub proof: Proof,
    pub public_inputs: Vec<Fr>,
    pub artifact_version: u64,
}

impl MembershipProof {
    /// `H(proof)` over the canonical Groth16 proof bytes.
    pub fn proof_id(&self) -> Digest32 {
        Sha256::digest(self.proof.to_bytes()).into()
    }
}

impl Encode for MembershipProof {
    fn encode(&self, w: &mut Writer) {
        w.u64(self.artifact_version);
        w.vec(&self.public_inputs, |w, x| w.fr(x));
        self.proof.encode(w);
    }
}

impl Decode for MembershipProof {
    fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        if r.remaining() > MAX_PROOF_PAYLOAD {
            return Err(DecodeError::Invalid("membership proof payload too large".into()));
        }
        Ok(Self {
            artifact_version: r.u64()?,
            public_inputs: r.vec(|r| r.fr())?,
            proof: Proof::decode(r)?,
        })
    }
}

/// `H(user_id || proof_id || salt)` with length-prefixed parts.
pub fn derive_ppid(user_id: &[u8], proof: &MembershipProof, salt: &[u8]) -> Digest32 {
    let proof_id = proof.proof_id();
    let mut h = Sha256::new();
    h.update(b"expresso/ppid");
    for part in [user_id, &proof_id, salt] {
        h.update((part.len() as u32).to_le_bytes());
        h.update(part);
    }
    h.finalize().into()
}
