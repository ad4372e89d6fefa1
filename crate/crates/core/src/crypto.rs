//! Symmetric primitives: hashing, MACs, labeled key derivation, the
//! forward-secret key ratchet, nonce arithmetic, and encrypt-then-MAC
//! sealing.
//!
//! One hash family (SHA-256) backs everything. Sealed messages are
//! AES-256-CBC with PKCS#7 padding and a fresh random IV, authenticated by
//! HMAC-SHA-256 over `header || IV || ciphertext`. The tag is always
//! verified before any decryption work happens, so a forged blob never
//! reaches the block cipher.

use hkdf::Hkdf;
use hmac::{Hmac, KeyInit, Mac};
use rand::TryCryptoRng;
use sha2::{Digest, Sha256};
use subtle::ConstantTimeEq;
use zeroize::Zeroize;

use crate::error::CryptoError;

type HmacSha256 = Hmac<Sha256>;

/// Byte width of nonces and challenges.
pub const NONCE_LEN: usize = 16;
/// Byte width of symmetric keys.
pub const KEY_LEN: usize = 32;
/// Byte width of MAC tags.
pub const TAG_LEN: usize = 32;
/// AES block width; IVs and padded ciphertext lengths are multiples of it.
pub const BLOCK_LEN: usize = 16;

/// A 16-byte random nonce or challenge.
pub type Nonce = [u8; NONCE_LEN];

/// A 16-byte random authentication challenge.
pub type Challenge = [u8; NONCE_LEN];

/// KDF label for the next authentication key in the ratchet chain.
pub const LABEL_AUTH: &str = "auth";
/// KDF label for encryption keys.
pub const LABEL_ENC: &str = "enc";
/// KDF label for MAC keys.
pub const LABEL_MAC: &str = "mac";
/// KDF label for session keys derived from a shared curve point.
pub const LABEL_SESS: &str = "sess";

/// Salt used when deriving the epoch-0 key set from the fabrication secret.
pub const PROVISION_SALT: &[u8] = b"provision";

#[cfg(test)]
pub(crate) static CIPHER_INVOCATIONS: std::sync::atomic::AtomicUsize =
    std::sync::atomic::AtomicUsize::new(0);

/// Counts block-cipher uses in tests, proving that [`open`] never touches
/// the cipher when the tag fails.
fn note_cipher_invocation() {
    #[cfg(test)]
    CIPHER_INVOCATIONS.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
}

/// One epoch of the ratcheted symmetric key material shared between a
/// device and its authenticator.
///
/// All three keys of epoch `e + 1` are derived from the epoch-`e`
/// authentication key, so compromising the keys of epoch `e + 1` reveals
/// nothing about epoch `e` (the derivation is one-way), and holding epoch
/// `e` keys is useless once both sides have moved past it and erased them.
#[derive(Clone, PartialEq, Eq)]
pub struct AuthKeySet {
    pub key_auth: [u8; KEY_LEN],
    pub key_enc: [u8; KEY_LEN],
    pub key_mac: [u8; KEY_LEN],
    pub epoch: u64,
}

impl Drop for AuthKeySet {
    fn drop(&mut self) {
        self.key_auth.zeroize();
        self.key_enc.zeroize();
        self.key_mac.zeroize();
    }
}

impl std::fmt::Debug for AuthKeySet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        // Never print key bytes; a short fingerprint is enough to tell two
        // key sets apart in logs.
        f.debug_struct("AuthKeySet")
            .field("epoch", &self.epoch)
            .field("auth", &fingerprint(&self.key_auth))
            .field("enc", &fingerprint(&self.key_enc))
            .field("mac", &fingerprint(&self.key_mac))
            .finish()
    }
}

impl AuthKeySet {
    /// Derives the epoch-0 key set from the fabrication secret.
    pub fn initial(fabrication_secret: &[u8]) -> Self {
        derive_keyset(fabrication_secret, PROVISION_SALT, 0)
    }

    /// One ratchet step: every key of the next epoch is derived from this
    /// epoch's authentication key, salted with the nonce of the request
    /// that triggered the update.
    pub fn ratchet(&self, request_nonce: &Nonce) -> Self {
        derive_keyset(&self.key_auth, request_nonce, self.epoch + 1)
    }

    /// Seals `plaintext` under this epoch's encryption and MAC keys.
    pub fn seal<R: TryCryptoRng + ?Sized>(
        &self,
        rng: &mut R,
        header: &[u8],
        plaintext: &[u8],
    ) -> Result<SealedMessage, CryptoError> {
        seal(&self.key_enc, &self.key_mac, rng, header, plaintext)
    }

    /// Opens a sealed message; see [`open`].
    pub fn open(&self, header: &[u8], sealed: &SealedMessage) -> Result<Vec<u8>, CryptoError> {
        open(&self.key_enc, &self.key_mac, header, sealed)
    }
}

fn derive_keyset(ikm: &[u8], salt: &[u8], epoch: u64) -> AuthKeySet {
    AuthKeySet {
        key_auth: kdf_array(ikm, LABEL_AUTH, salt),
        key_enc: kdf_array(ikm, LABEL_ENC, salt),
        key_mac: kdf_array(ikm, LABEL_MAC, salt),
        epoch,
    }
}

/// SHA-256.
pub fn hash(data: &[u8]) -> [u8; 32] {
    Sha256::digest(data).into()
}

/// Short hex fingerprint of secret or bulky material, safe to log.
pub fn fingerprint(data: &[u8]) -> String {
    hex::encode(&hash(data)[..4])
}

/// HMAC-SHA-256 over `data`.
pub fn mac(key: &[u8], data: &[u8]) -> [u8; TAG_LEN] {
    let mut m = HmacSha256::new_from_slice(key).expect("HMAC accepts any key length");
    m.update(data);
    m.finalize().into_bytes().into()
}

/// Constant-time tag comparison.
pub fn verify_mac(key: &[u8], data: &[u8], tag: &[u8]) -> bool {
    let expected = mac(key, data);
    tag.len() == TAG_LEN && expected.ct_eq(tag).into()
}

/// Labeled HKDF-SHA-256. The label is baked into the expansion info, so
/// outputs under different labels are independent; output under one label
/// is prefix-stable in `len`.
pub fn kdf(ikm: &[u8], label: &str, salt: &[u8], len: usize) -> Result<Vec<u8>, CryptoError> {
    let hk = Hkdf::<Sha256>::new(Some(salt), ikm);
    let mut out = vec![0u8; len];
    hk.expand(label.as_bytes(), &mut out)
        .map_err(|_| CryptoError::KdfLength)?;
    Ok(out)
}

fn kdf_array(ikm: &[u8], label: &str, salt: &[u8]) -> [u8; KEY_LEN] {
    kdf(ikm, label, salt, KEY_LEN)
        .expect("32 bytes is far below the HKDF output bound")
        .try_into()
        .expect("length fixed above")
}

/// Draws a fresh 16-byte nonce.
pub fn fresh_nonce<R: TryCryptoRng + ?Sized>(rng: &mut R) -> Result<Nonce, CryptoError> {
    let mut n = [0u8; NONCE_LEN];
    fill_random(rng, &mut n)?;
    Ok(n)
}

/// Draws a fresh 16-byte authentication challenge.
pub fn fresh_challenge<R: TryCryptoRng + ?Sized>(rng: &mut R) -> Result<Challenge, CryptoError> {
    fresh_nonce(rng)
}

/// The two per-cycle nonces and their binding sum.
///
/// Each end contributes one nonce; the sum proves both ends saw the same
/// pair without either one dictating it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NonceTriple {
    pub n_sed: Nonce,
    pub n_bms: Nonce,
    pub n_sum: Nonce,
}

impl NonceTriple {
    /// Builds the triple with the sum computed, so it is valid by
    /// construction.
    pub fn from_parts(n_sed: Nonce, n_bms: Nonce) -> Self {
        NonceTriple {
            n_sed,
            n_bms,
            n_sum: nonce_sum(&n_sed, &n_bms),
        }
    }

    /// True iff `n_sum` equals the 128-bit modular sum of the two nonces.
    pub fn is_valid(&self) -> bool {
        verify_nonce_sum(&self.n_sed, &self.n_bms, &self.n_sum)
    }
}

/// Fills `buf` from a cryptographic RNG, mapping entropy failure to
/// [`CryptoError::Entropy`].
pub fn fill_random<R: TryCryptoRng + ?Sized>(
    rng: &mut R,
    buf: &mut [u8],
) -> Result<(), CryptoError> {
    rng.try_fill_bytes(buf).map_err(|_| CryptoError::Entropy)
}

/// Big-endian byte-wise addition of two equal-width strings, wrapping
/// modulo `256^width`.
fn wrapping_add_be(a: &[u8], b: &[u8], out: &mut [u8]) {
    debug_assert_eq!(a.len(), b.len());
    debug_assert_eq!(a.len(), out.len());
    let mut carry = 0u16;
    for i in (0..a.len()).rev() {
        let s = a[i] as u16 + b[i] as u16 + carry;
        out[i] = s as u8;
        carry = s >> 8;
    }
}

/// `(a + b) mod 2^128` over big-endian 16-byte nonces. Both ends compute
/// this over the nonces they exchanged; agreeing on the sum proves each
/// saw the other's nonce unmodified.
pub fn nonce_sum(a: &Nonce, b: &Nonce) -> Nonce {
    let mut out = [0u8; NONCE_LEN];
    wrapping_add_be(a, b, &mut out);
    out
}

/// Checks a claimed nonce sum in constant time.
pub fn verify_nonce_sum(local: &Nonce, peer: &Nonce, claimed: &Nonce) -> bool {
    nonce_sum(local, peer).ct_eq(claimed).into()
}

/// An encrypt-then-MAC blob: AES-256-CBC ciphertext with its IV, covered
/// together with a caller-supplied header by HMAC-SHA-256.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SealedMessage {
    pub iv: [u8; BLOCK_LEN],
    pub ciphertext: Vec<u8>,
    pub tag: [u8; TAG_LEN],
}

impl SealedMessage {
    /// Serializes as `IV || ciphertext || tag`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(BLOCK_LEN + self.ciphertext.len() + TAG_LEN);
        out.extend_from_slice(&self.iv);
        out.extend_from_slice(&self.ciphertext);
        out.extend_from_slice(&self.tag);
        out
    }

    /// Strict structural parse: at least one ciphertext block, and a
    /// ciphertext length that is a whole number of blocks.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        if bytes.len() < BLOCK_LEN + BLOCK_LEN + TAG_LEN {
            return Err(CryptoError::SealedEncoding);
        }
        let ct_len = bytes.len() - BLOCK_LEN - TAG_LEN;
        if ct_len % BLOCK_LEN != 0 {
            return Err(CryptoError::SealedEncoding);
        }
        let mut iv = [0u8; BLOCK_LEN];
        iv.copy_from_slice(&bytes[..BLOCK_LEN]);
        let ciphertext = bytes[BLOCK_LEN..BLOCK_LEN + ct_len].to_vec();
        let mut tag = [0u8; TAG_LEN];
        tag.copy_from_slice(&bytes[BLOCK_LEN + ct_len..]);
        Ok(SealedMessage { iv, ciphertext, tag })
    }
}

fn mac_transcript(key_mac: &[u8; KEY_LEN], header: &[u8], iv: &[u8], ct: &[u8]) -> [u8; TAG_LEN] {
    let mut m = HmacSha256::new_from_slice(key_mac).expect("HMAC accepts any key length");
    m.update(header);
    m.update(iv);
    m.update(ct);
    m.finalize().into_bytes().into()
}

/// Encrypt-then-MAC with a fresh random IV. The header is authenticated
/// but not encrypted.
pub fn seal<R: TryCryptoRng + ?Sized>(
    key_enc: &[u8; KEY_LEN],
    key_mac: &[u8; KEY_LEN],
    rng: &mut R,
    header: &[u8],
    plaintext: &[u8],
) -> Result<SealedMessage, CryptoError> {
    use aes::cipher::{block_padding::Pkcs7, BlockModeEncrypt, KeyIvInit};
    let mut iv = [0u8; BLOCK_LEN];
    fill_random(rng, &mut iv)?;
    note_cipher_invocation();
    let ciphertext = cbc::Encryptor::<aes::Aes256>::new(key_enc.into(), (&iv).into())
        .encrypt_padded_vec::<Pkcs7>(plaintext);
    let tag = mac_transcript(key_mac, header, &iv, &ciphertext);
    Ok(SealedMessage { iv, ciphertext, tag })
}

/// Verifies the tag over `header || IV || ciphertext` and only then
/// decrypts. A bad tag returns [`CryptoError::AuthenticationFailure`]
/// without running the cipher; a padding error behind a valid tag — which
/// indicates a sender bug, not a forgery — returns
/// [`CryptoError::MalformedMessage`].
pub fn open(
    key_enc: &[u8; KEY_LEN],
    key_mac: &[u8; KEY_LEN],
    header: &[u8],
    sealed: &SealedMessage,
) -> Result<Vec<u8>, CryptoError> {
    use aes::cipher::{block_padding::Pkcs7, BlockModeDecrypt, KeyIvInit};
    if sealed.ciphertext.is_empty() || sealed.ciphertext.len() % BLOCK_LEN != 0 {
        return Err(CryptoError::SealedEncoding);
    }
    let expected = mac_transcript(key_mac, header, &sealed.iv, &sealed.ciphertext);
    if !bool::from(expected.ct_eq(&sealed.tag)) {
        return Err(CryptoError::AuthenticationFailure);
    }
    note_cipher_invocation();
    cbc::Decryptor::<aes::Aes256>::new(key_enc.into(), (&sealed.iv).into())
        .decrypt_padded_vec::<Pkcs7>(&sealed.ciphertext)
        .map_err(|_| CryptoError::MalformedMessage)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use std::sync::atomic::Ordering;

    fn rng() -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(0xA11CE)
    }

    fn test_keys() -> AuthKeySet {
        AuthKeySet::initial(b"unit-test fabrication secret")
    }

    #[test]
    fn seal_open_roundtrip_across_lengths() {
        let keys = test_keys();
        let mut r = rng();
        for len in [0usize, 1, 15, 16, 17, 31, 32, 33, 255, 1024] {
            let pt: Vec<u8> = (0..len).map(|i| (i * 7) as u8).collect();
            let sealed = keys.seal(&mut r, b"hdr", &pt).unwrap();
            assert_eq!(keys.open(b"hdr", &sealed).unwrap(), pt, "len = {len}");
            // Ciphertext is always padded to a whole block.
            assert_eq!(sealed.ciphertext.len() % BLOCK_LEN, 0);
            assert!(sealed.ciphertext.len() > len - len % BLOCK_LEN || len == 0);
        }
    }

    #[test]
    fn fresh_ivs_make_equal_plaintexts_differ() {
        let keys = test_keys();
        let mut r = rng();
        let a = keys.seal(&mut r, b"h", b"same message").unwrap();
        let b = keys.seal(&mut r, b"h", b"same message").unwrap();
        assert_ne!(a.iv, b.iv);
        assert_ne!(a.ciphertext, b.ciphertext);
    }

    #[test]
    fn every_flipped_bit_is_rejected_without_touching_the_cipher() {
        let keys = test_keys();
        let mut r = rng();
        let sealed = keys.seal(&mut r, b"header", b"attack at dawn").unwrap();
        let encoded = sealed.to_bytes();
        for byte in 0..encoded.len() {
            for bit in 0..8 {
                let mut tampered = encoded.clone();
                tampered[byte] ^= 1 << bit;
                let parsed = SealedMessage::from_bytes(&tampered).unwrap();
                let before = CIPHER_INVOCATIONS.load(Ordering::SeqCst);
                let err = keys.open(b"header", &parsed).unwrap_err();
                assert_eq!(err, CryptoError::AuthenticationFailure);
                assert_eq!(
                    CIPHER_INVOCATIONS.load(Ordering::SeqCst),
                    before,
                    "cipher ran on a forged message (byte {byte}, bit {bit})"
                );
            }
        }
        // A flipped header bit is an equally hard failure.
        assert_eq!(
            keys.open(b"hEader", &sealed).unwrap_err(),
            CryptoError::AuthenticationFailure
        );
    }

    #[test]
    fn truncated_or_ragged_blobs_never_parse() {
        let keys = test_keys();
        let mut r = rng();
        let encoded = keys.seal(&mut r, b"h", b"payload bytes").unwrap().to_bytes();
        for len in 0..encoded.len() {
            match SealedMessage::from_bytes(&encoded[..len]) {
                Err(CryptoError::SealedEncoding) => {}
                Err(other) => panic!("unexpected error at len {len}: {other:?}"),
                Ok(_) => {
                    // A shorter prefix can only parse if it still has whole
                    // blocks; it must then fail authentication.
                    assert_eq!(
                        keys.open(b"h", &SealedMessage::from_bytes(&encoded[..len]).unwrap())
                            .unwrap_err(),
                        CryptoError::AuthenticationFailure
                    );
                }
            }
        }
    }

    #[test]
    fn valid_tag_over_garbage_padding_is_a_distinct_error() {
        let keys = test_keys();
        let mut r = rng();
        // Seal a one-block plaintext, then keep only the first ciphertext
        // block. That block decrypts to the original 16 bytes — all zeros,
        // which is invalid PKCS#7 — and we re-tag it so the MAC passes.
        let sealed = keys.seal(&mut r, b"h", &[0u8; BLOCK_LEN]).unwrap();
        assert_eq!(sealed.ciphertext.len(), 2 * BLOCK_LEN);
        let mut forged = sealed.clone();
        forged.ciphertext.truncate(BLOCK_LEN);
        forged.tag = super::mac_transcript(&keys.key_mac, b"h", &forged.iv, &forged.ciphertext);
        assert_eq!(
            keys.open(b"h", &forged).unwrap_err(),
            CryptoError::MalformedMessage
        );
    }

    #[test]
    fn wrong_epoch_keys_fail_authentication() {
        let keys = test_keys();
        let next = keys.ratchet(&[9u8; NONCE_LEN]);
        let mut r = rng();
        let sealed = keys.seal(&mut r, b"h", b"msg").unwrap();
        assert_eq!(
            next.open(b"h", &sealed).unwrap_err(),
            CryptoError::AuthenticationFailure
        );
    }

    #[test]
    fn kdf_is_deterministic_label_separated_and_prefix_stable() {
        let a1 = kdf(b"ikm", LABEL_AUTH, b"salt", 32).unwrap();
        let a2 = kdf(b"ikm", LABEL_AUTH, b"salt", 32).unwrap();
        assert_eq!(a1, a2);
        let e = kdf(b"ikm", LABEL_ENC, b"salt", 32).unwrap();
        let m = kdf(b"ikm", LABEL_MAC, b"salt", 32).unwrap();
        assert_ne!(a1, e);
        assert_ne!(a1, m);
        assert_ne!(e, m);
        // Different salt, different output.
        assert_ne!(kdf(b"ikm", LABEL_AUTH, b"salt2", 32).unwrap(), a1);
        // Prefix stability: shorter requests are prefixes of longer ones.
        let short = kdf(b"ikm", LABEL_AUTH, b"salt", 16).unwrap();
        assert_eq!(short, a1[..16]);
        let long = kdf(b"ikm", LABEL_AUTH, b"salt", 96).unwrap();
        assert_eq!(long[..32], a1);
        // Output length cap: 255 * 32 bytes for SHA-256.
        assert!(kdf(b"ikm", LABEL_AUTH, b"salt", 255 * 32).is_ok());
        assert_eq!(
            kdf(b"ikm", LABEL_AUTH, b"salt", 255 * 32 + 1).unwrap_err(),
            CryptoError::KdfLength
        );
    }

    #[test]
    fn ratchet_advances_epochs_and_is_replayable_from_the_nonce_transcript() {
        let initial = AuthKeySet::initial(b"fab secret");
        assert_eq!(initial.epoch, 0);
        let nonces: Vec<Nonce> = (0u8..5).map(|i| [i; NONCE_LEN]).collect();
        let mut live = initial.clone();
        for n in &nonces {
            let next = live.ratchet(n);
            assert_eq!(next.epoch, live.epoch + 1);
            assert_ne!(next.key_auth, live.key_auth);
            assert_ne!(next.key_enc, live.key_enc);
            assert_ne!(next.key_mac, live.key_mac);
            live = next;
        }
        // Replaying the same nonce transcript from the fabrication secret
        // reproduces exactly the same epoch-5 keys.
        let mut replay = AuthKeySet::initial(b"fab secret");
        for n in &nonces {
            replay = replay.ratchet(n);
        }
        assert_eq!(replay, live);
        // A transcript differing in one nonce diverges permanently.
        let mut other = AuthKeySet::initial(b"fab secret");
        for (i, n) in nonces.iter().enumerate() {
            let n = if i == 2 { &[0xFFu8; NONCE_LEN] } else { n };
            other = other.ratchet(n);
        }
        assert_eq!(other.epoch, live.epoch);
        assert_ne!(other, live);
    }

    #[test]
    fn initial_keys_depend_on_the_fabrication_secret() {
        let a = AuthKeySet::initial(b"secret-a");
        let b = AuthKeySet::initial(b"secret-b");
        assert_ne!(a.key_auth, b.key_auth);
        assert_ne!(a, b);
        assert_eq!(a, AuthKeySet::initial(b"secret-a"));
    }

    #[test]
    fn keyset_debug_output_never_contains_key_bytes() {
        let keys = test_keys();
        let shown = format!("{keys:?}");
        assert!(!shown.contains(&hex::encode(keys.key_auth)));
        assert!(!shown.contains(&hex::encode(keys.key_enc)));
        assert!(!shown.contains(&hex::encode(keys.key_mac)));
        assert!(shown.contains("epoch"));
    }

    #[test]
    fn mac_verification_is_exact() {
        let tag = mac(b"key", b"data");
        assert!(verify_mac(b"key", b"data", &tag));
        assert!(!verify_mac(b"key", b"datA", &tag));
        assert!(!verify_mac(b"keY", b"data", &tag));
        assert!(!verify_mac(b"key", b"data", &tag[..31]));
        let mut wrong = tag;
        wrong[0] ^= 1;
        assert!(!verify_mac(b"key", b"data", &wrong));
    }

    #[test]
    fn width_one_byte_addition_matches_u8_arithmetic_exhaustively() {
        for a in 0u8..=255 {
            for b in 0u8..=255 {
                let mut out = [0u8; 1];
                wrapping_add_be(&[a], &[b], &mut out);
                assert_eq!(out[0], a.wrapping_add(b));
            }
        }
    }

    #[test]
    fn nonce_sum_matches_u128_arithmetic() {
        let mut r = rng();
        for _ in 0..2000 {
            let a = fresh_nonce(&mut r).unwrap();
            let b = fresh_nonce(&mut r).unwrap();
            let expected = u128::from_be_bytes(a).wrapping_add(u128::from_be_bytes(b));
            assert_eq!(u128::from_be_bytes(nonce_sum(&a, &b)), expected);
        }
        // Carry chain across every byte.
        let all_ff = [0xFFu8; NONCE_LEN];
        let one = {
            let mut n = [0u8; NONCE_LEN];
            n[NONCE_LEN - 1] = 1;
            n
        };
        assert_eq!(nonce_sum(&all_ff, &one), [0u8; NONCE_LEN]);
        assert!(verify_nonce_sum(&all_ff, &one, &[0u8; NONCE_LEN]));
        assert!(!verify_nonce_sum(&all_ff, &one, &one));
    }

    #[test]
    fn sealed_message_codec_roundtrips() {
        let keys = test_keys();
        let mut r = rng();
        let sealed = keys.seal(&mut r, b"h", b"roundtrip me").unwrap();
        let bytes = sealed.to_bytes();
        assert_eq!(SealedMessage::from_bytes(&bytes).unwrap(), sealed);
        assert_eq!(
            SealedMessage::from_bytes(&bytes[..BLOCK_LEN + TAG_LEN + 1]).unwrap_err(),
            CryptoError::SealedEncoding
        );
    }
}
