//! The relying party's secret membership credential.

use ark_bn254::Fr;

use crate::babyjubjub::{BabyJubjub, Point};
use crate::eddsa::{verify_native, Signature};
use crate::encoding::{Decode, DecodeError, Encode, Reader, Writer};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClientCredential {
    pub client_id: Fr,
    pub signature: Signature<BabyJubjub>,
    pub idp_credential_pk: Point,
}

impl ClientCredential {
    pub fn is_valid(&self) -> bool {
        verify_native(&self.idp_credential_pk, &self.client_id, &self.signature)
    }
}

impl Encode for ClientCredential {
    fn encode(&self, w: &mut Writer) {
        w.fr(&self.client_id);
        self.signature.write(w);
        self.idp_credential_pk.write(w);
    }
}

impl Decode for ClientCredential {
    fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(Self {
            client_id: r.fr()?,
            signature: Signature::read(r)?,
            idp_credential_pk: Point::read(r)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eddsa::SigningKeyPair;

    #[test]
    fn round_trip_and_validity() {
        let kp = SigningKeyPair::<BabyJubjub>::generate(&[3u8; 32]).unwrap();
        let client_id = Fr::from(77u64);
        let cred = ClientCredential {
            client_id,
            signature: kp.sign(&client_id),
            idp_credential_pk: kp.pk,
        };
        assert!(cred.is_valid());
        let bytes = cred.to_bytes();
        assert_eq!(bytes.len(), 32 + 65 + 33);
        assert_eq!(ClientCredential::from_bytes(&bytes).unwrap(), cred);
        let mut forged = cred.clone();
        forged.client_id += Fr::from(1u64);
        assert!(!forged.is_valid());
    }
}
