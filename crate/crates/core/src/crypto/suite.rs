use std::hash::{DefaultHasher, Hasher};

use ed25519_dalek::{Signer as _, Verifier as _};
use hmac::{Hmac, KeyInit, Mac};
use sha2::{Digest as _, Sha256};

use super::{CryptoSuite, MacKey, MacTag, Signature, SigningKey, VerifyingKey, TAG_LEN};

/// SHA-256 digests and chains, HMAC-SHA-256 tags truncated to 16 octets,
/// Ed25519 signatures.
#[derive(Debug, Default, Clone, Copy)]
pub struct RealCrypto;

impl CryptoSuite for RealCrypto {
    fn name(&self) -> &'static str {
        "real"
    }

    fn mac_raw(&self, key: &MacKey, data: &[u8]) -> MacTag {
        let mut mac = <Hmac<Sha256> as KeyInit>::new_from_slice(&key.0).expect("any key length");
        mac.update(data);
        let full = mac.finalize().into_bytes();
        MacTag(full[..TAG_LEN].try_into().unwrap())
    }

    fn keypair_from_seed(&self, seed: &[u8; 32]) -> SigningKey {
        let sk = ed25519_dalek::SigningKey::from_bytes(seed);
        SigningKey {
            secret: *seed,
            public: VerifyingKey(sk.verifying_key().to_bytes()),
        }
    }

    fn sign(&self, key: &SigningKey, payload: &[u8]) -> Signature {
        let sk = ed25519_dalek::SigningKey::from_bytes(&key.secret);
        Signature(sk.sign(payload).to_bytes())
    }

    fn verify(&self, key: &VerifyingKey, payload: &[u8], sig: &Signature) -> bool {
        let Ok(vk) = ed25519_dalek::VerifyingKey::from_bytes(&key.0) else {
            return false;
        };
        vk.verify(payload, &ed25519_dalek::Signature::from_bytes(&sig.0))
            .is_ok()
    }
}

/// Keyed SipHash stand-ins. Anyone holding a verifying key can mint
/// signatures for it, which is fine inside the simulator where adversary
/// scripts never forge other nodes' messages.
#[derive(Debug, Default, Clone, Copy)]
pub struct TestCrypto;

fn keyed(key: &[u8], domain: u8, data: &[u8]) -> u64 {
    let mut h = DefaultHasher::new();
    h.write(key);
    h.write_u8(domain);
    h.write(data);
    h.finish()
}

impl CryptoSuite for TestCrypto {
    fn name(&self) -> &'static str {
        "test"
    }

    fn mac_raw(&self, key: &MacKey, data: &[u8]) -> MacTag {
        let mut out = [0u8; TAG_LEN];
        out[..8].copy_from_slice(&keyed(&key.0, 0, data).to_be_bytes());
        out[8..].copy_from_slice(&keyed(&key.0, 1, data).to_be_bytes());
        MacTag(out)
    }

    fn keypair_from_seed(&self, seed: &[u8; 32]) -> SigningKey {
        SigningKey {
            secret: *seed,
            public: VerifyingKey(Sha256::digest(seed).into()),
        }
    }

    fn sign(&self, key: &SigningKey, payload: &[u8]) -> Signature {
        mock_signature(&key.public, payload)
    }

    fn verify(&self, key: &VerifyingKey, payload: &[u8], sig: &Signature) -> bool {
        mock_signature(key, payload) == *sig
    }
}

fn mock_signature(public: &VerifyingKey, payload: &[u8]) -> Signature {
    let mut out = [0u8; 64];
    for (i, chunk) in out.chunks_mut(8).enumerate() {
        chunk.copy_from_slice(&keyed(&public.0, 16 + i as u8, payload).to_be_bytes());
    }
    Signature(out)
}
