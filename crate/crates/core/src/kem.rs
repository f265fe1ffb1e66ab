//! Data encapsulation keyed by the target-group element the scheme encapsulates.

use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use hkdf::Hkdf;
use rand::{CryptoRng, RngCore};
use sha2::Sha256;

use crate::error::{Error, Result};
use crate::group::{GroupElement, Gt};

/// ChaCha20-Poly1305 with a 96-bit nonce; the only registered DEM.
pub const DEM_CHACHA20_POLY1305: u8 = 0x01;
pub const NONCE_LEN: usize = 12;

const KDF_SALT: &[u8] = b"DHABE:KEM";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DemPayload {
    pub alg_id: u8,
    pub nonce: [u8; NONCE_LEN],
    pub body: Vec<u8>,
}

/// HKDF-SHA256 over `encode(key_element) ‖ header`.
pub fn derive_key(key_element: &Gt, header: &[u8]) -> [u8; 32] {
    let mut ikm = key_element.encode();
    ikm.extend_from_slice(header);
    let hk = Hkdf::<Sha256>::new(Some(KDF_SALT), &ikm);
    let mut okm = [0u8; 32];
    hk.expand(b"dem-key", &mut okm)
        .expect("32 bytes is a valid HKDF-SHA256 output length");
    okm
}

pub fn seal<R: RngCore + CryptoRng + ?Sized>(
    key: &[u8; 32],
    plaintext: &[u8],
    rng: &mut R,
) -> DemPayload {
    let mut nonce = [0u8; NONCE_LEN];
    rng.fill_bytes(&mut nonce);
    let cipher = ChaCha20Poly1305::new(Key::from_slice(key));
    let body = cipher
        .encrypt(Nonce::from_slice(&nonce), Payload { msg: plaintext, aad: &[] })
        .expect("ChaCha20-Poly1305 encryption of an in-memory buffer cannot fail");
    DemPayload {
        alg_id: DEM_CHACHA20_POLY1305,
        nonce,
        body,
    }
}

pub fn check_alg(payload: &DemPayload) -> Result<()> {
    match payload.alg_id {
        DEM_CHACHA20_POLY1305 => Ok(()),
        other => Err(Error::UnsupportedDem(other)),
    }
}

pub fn open(key: &[u8; 32], payload: &DemPayload) -> Result<Vec<u8>> {
    check_alg(payload)?;
    let cipher = ChaCha20Poly1305::new(Key::from_slice(key));
    cipher
        .decrypt(
            Nonce::from_slice(&payload.nonce),
            Payload { msg: &payload.body, aad: &[] },
        )
        .map_err(|_| Error::AuthenticationFailed)
}
