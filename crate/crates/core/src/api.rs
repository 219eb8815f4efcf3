//! JSON bodies exchanged between the registry, the IdP, the relying parties
//! and the user agent. Binary values travel as base64url without padding,
//! digests as lowercase hex. Field names are documented in `docs/api.md`.

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{BoilerplateProgram, Parameter, ValueType, Visibility};
use crate::encoding::{Decode, Encode};
use crate::membership::MembershipProof;
use crate::r1cs::Digest32;

pub mod b64 {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&URL_SAFE_NO_PAD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        URL_SAFE_NO_PAD.decode(s).map_err(serde::de::Error::custom)
    }
}

pub mod hex32 {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(digest: &Digest32, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(digest))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Digest32, D::Error> {
        let s = String::deserialize(d)?;
        let bytes = hex::decode(s).map_err(serde::de::Error::custom)?;
        bytes.try_into().map_err(|_| serde::de::Error::custom("digest must be 32 bytes"))
    }
}

/// Every non-2xx response carries one of these.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    /// Stable machine-readable code such as `pool_exhausted`.
    pub error: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParameterDto {
    pub name: String,
    pub visibility: String,
    #[serde(rename = "type")]
    pub ty: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoilerplateResponse {
    pub source_text: String,
    #[serde(with = "hex32")]
    pub program_digest: Digest32,
    pub parameters: Vec<ParameterDto>,
}

impl From<&BoilerplateProgram> for BoilerplateResponse {
    fn from(p: &BoilerplateProgram) -> Self {
        Self {
            source_text: p.source_text.clone(),
            program_digest: p.program_digest,
            parameters: p
                .parameter_schema
                .iter()
                .map(|param| ParameterDto {
                    name: param.name.clone(),
                    visibility: match param.visibility {
                        Visibility::Public => "public",
                        Visibility::Private => "private",
                    }
                    .into(),
                    ty: param.ty.to_string(),
                })
                .collect(),
        }
    }
}

impl BoilerplateResponse {
    /// Rebuilds the program, refusing a digest that does not match the text.
    pub fn into_program(self) -> Result<BoilerplateProgram, String> {
        let mut schema = Vec::with_capacity(self.parameters.len());
        for p in &self.parameters {
            let visibility = match p.visibility.as_str() {
                "public" => Visibility::Public,
                "private" => Visibility::Private,
                other => return Err(format!("unknown visibility {other}")),
            };
            let ty = match p.ty.as_str() {
                "point" => ValueType::Point,
                "scalar" => ValueType::Scalar,
                "field" => ValueType::Field,
                other => return Err(format!("unknown type {other}")),
            };
            schema.push(Parameter::new(&p.name, visibility, ty));
        }
        let program = BoilerplateProgram::new(self.source_text, schema);
        if program.program_digest != self.program_digest {
            return Err("program digest does not match source text".into());
        }
        Ok(program)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DigestRecord {
    pub idp_id: String,
    pub version: u64,
    #[serde(with = "hex32")]
    pub artifact_digest: Digest32,
    /// Seconds since the Unix epoch.
    pub published_at: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AllocationResponse {
    pub record: DigestRecord,
    /// The artifact container.
    #[serde(with = "b64")]
    pub artifacts: Vec<u8>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlobResponse {
    #[serde(with = "hex32")]
    pub digest: Digest32,
    #[serde(with = "b64")]
    pub data: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisterRequest {
    pub client_name: String,
    /// Proxy handle the user agent resolves to the real callback.
    pub redirect_uri: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegisterResponse {
    /// Bearer secret for `GET /artifacts/current` and `POST /deregister`.
    pub registration_token: String,
    #[serde(with = "b64")]
    pub credential: Vec<u8>,
    #[serde(with = "b64")]
    pub artifacts: Vec<u8>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArtifactsResponse {
    pub version: u64,
    #[serde(with = "hex32")]
    pub artifact_digest: Digest32,
    #[serde(with = "b64")]
    pub artifacts: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthorizeResponse {
    pub request_id: String,
    pub scope: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoginRequest {
    pub request_id: String,
    pub username: String,
    pub password: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoginResponse {
    pub session_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsentRequest {
    pub request_id: String,
    pub session_id: String,
    pub granted: Vec<String>,
}

/// Where the user agent goes next, with the parameters to deliver.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsentResponse {
    pub redirect_uri: String,
    /// `id_token=...&state=...`, form-encoded.
    pub fragment: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenKeyResponse {
    pub alg: String,
    #[serde(with = "b64")]
    pub key: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallbackResponse {
    pub subject: String,
    pub claims: std::collections::BTreeMap<String, String>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FragmentError {
    #[error("malformed parameters: {0}")]
    Malformed(String),
    #[error("missing parameter {0}")]
    Missing(&'static str),
    #[error("bad proof encoding: {0}")]
    Proof(String),
}

/// The login request an RP hands to the user agent. It names neither the RP
/// nor its real callback.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuthRequest {
    pub proof: MembershipProof,
    pub scope: Vec<String>,
    pub state: String,
    pub redirect_uri: String,
}

#[derive(Serialize, Deserialize)]
struct AuthRequestParams {
    proof: String,
    scope: String,
    state: String,
    redirect_uri: String,
}

impl AuthRequest {
    /// Form-encoded parameters, as carried in the redirect fragment.
    pub fn to_fragment(&self) -> String {
        serde_urlencoded::to_string(AuthRequestParams {
            proof: URL_SAFE_NO_PAD.encode(self.proof.to_bytes()),
            scope: self.scope.join(" "),
            state: self.state.clone(),
            redirect_uri: self.redirect_uri.clone(),
        })
        .expect("strings always encode")
    }

    pub fn from_fragment(fragment: &str) -> Result<Self, FragmentError> {
        let p: AuthRequestParams =
            serde_urlencoded::from_str(fragment).map_err(|e| FragmentError::Malformed(e.to_string()))?;
        let bytes = URL_SAFE_NO_PAD.decode(&p.proof).map_err(|e| FragmentError::Proof(e.to_string()))?;
        let proof = MembershipProof::from_bytes(&bytes).map_err(|e| FragmentError::Proof(e.to_string()))?;
        if p.state.is_empty() {
            return Err(FragmentError::Missing("state"));
        }
        Ok(Self {
            proof,
            scope: p.scope.split_whitespace().map(str::to_string).collect(),
            state: p.state,
            redirect_uri: p.redirect_uri,
        })
    }
}

/// The token response the IdP sends back through the user agent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenFragment {
    pub id_token: String,
    pub state: String,
}

impl TokenFragment {
    pub fn to_fragment(&self) -> String {
        serde_urlencoded::to_string(self).expect("strings always encode")
    }

    pub fn from_fragment(fragment: &str) -> Result<Self, FragmentError> {
        serde_urlencoded::from_str(fragment).map_err(|e| FragmentError::Malformed(e.to_string()))
    }
}
