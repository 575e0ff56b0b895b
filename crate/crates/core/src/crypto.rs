//! Hashing and signatures.
//!
//! SHA-256 backs [`hash`]; Ed25519 backs [`sign`]/[`verify`]. Key pairs are
//! derived deterministically from a 64-bit seed so scenarios are reproducible.

use std::fmt;
use std::str::FromStr;

use ed25519_dalek::{Signer, SigningKey, Verifier, VerifyingKey};
use sha2::{Digest as _, Sha256};

use crate::codec::Encoder;

pub const DIGEST_LEN: usize = 32;

/// A 32-octet hash value.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Digest(pub [u8; DIGEST_LEN]);

impl Digest {
    pub const ZERO: Digest = Digest([0; DIGEST_LEN]);

    pub fn as_bytes(&self) -> &[u8; DIGEST_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_slice(bytes: &[u8]) -> Option<Digest> {
        bytes.try_into().ok().map(Digest)
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", &self.to_hex()[..16])
    }
}

impl FromStr for Digest {
    type Err = hex::FromHexError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut out = [0u8; DIGEST_LEN];
        hex::decode_to_slice(s.trim(), &mut out)?;
        Ok(Digest(out))
    }
}

pub fn hash(message: &[u8]) -> Digest {
    Digest(Sha256::digest(message).into())
}

/// `hash(a ‖ b)`, the inner-node rule of the Merkle tree.
pub fn hash_pair(a: &Digest, b: &Digest) -> Digest {
    let mut h = Sha256::new();
    h.update(a.0);
    h.update(b.0);
    Digest(h.finalize().into())
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PubKey(pub [u8; 32]);

impl fmt::Debug for PubKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PubKey({})", &hex::encode(self.0)[..16])
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct SecretKey([u8; 32]);

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SecretKey(..)")
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyPair {
    pub secret: SecretKey,
    pub public: PubKey,
}

/// Opaque signature octets. Anything that is not a well-formed signature simply
/// fails verification.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Signature(pub Vec<u8>);

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let h = hex::encode(&self.0);
        write!(f, "Signature({})", &h[..h.len().min(16)])
    }
}

pub fn keygen(seed: u64) -> KeyPair {
    let material = Encoder::new().field(b"superlight/keygen").u64(seed).finish();
    let secret = hash(&material).0;
    let public = SigningKey::from_bytes(&secret).verifying_key().to_bytes();
    KeyPair { secret: SecretKey(secret), public: PubKey(public) }
}

pub fn sign(message: &[u8], secret: &SecretKey) -> Signature {
    let key = SigningKey::from_bytes(&secret.0);
    Signature(key.sign(message).to_bytes().to_vec())
}

pub fn verify(message: &[u8], sig: &Signature, public: &PubKey) -> bool {
    let Ok(key) = VerifyingKey::from_bytes(&public.0) else {
        return false;
    };
    let Ok(bytes) = <[u8; 64]>::try_from(sig.0.as_slice()) else {
        return false;
    };
    key.verify(message, &ed25519_dalek::Signature::from_bytes(&bytes)).is_ok()
}
