//! Implicit-certificate issuance and key reconstruction.
//!
//! The scheme binds a key pair to a certificate without carrying either a
//! public key or a signature inside it:
//!
//! 1. The requester picks a secret `t` and sends `P = t·G`.
//! 2. The CA picks an ephemeral `k`, computes the reconstruction point
//!    `U = P + k·G`, encodes the certificate around `U`, and returns the
//!    private-key contribution `s = (e·k + d_CA) mod n`, where
//!    `e = H(cert) mod n`.
//! 3. The requester computes `prk = (e·t + s) mod n` and
//!    `pub = e·U + Q_CA`, accepting only if `pub == prk·G`.
//! 4. Any peer holding the CA public key recomputes the same `pub` from
//!    the certificate alone — so a certificate that reconstructs to a key
//!    the holder can use *is* the CA's endorsement.
//!
//! Tampering with the certificate, `s`, or the CA key breaks the
//! `pub == prk·G` identity (or leaves the peer with a key the holder
//! cannot match), which is what the authentication flows rely on.

use num_bigint::BigUint;
use rand::TryCryptoRng;

use crate::cert::{CertMeta, Certificate};
use crate::crypto;
use crate::ec::{curve_for, AlgorithmId, CurveParams, Point, Scalar};
use crate::error::EcqvError;
use crate::ids::SessionId;

/// How many fresh ephemerals the CA tries when the certificate hash keeps
/// reducing to zero (probability ~1/n per attempt).
const ISSUE_RETRY_LIMIT: usize = 4;

/// The requester's certificate-request secret `t` and public point `t·G`.
pub struct CertRequestSecret {
    algorithm_id: AlgorithmId,
    t: Scalar,
    p_req: Point,
}

impl CertRequestSecret {
    /// Draws a fresh request secret on the given curve.
    pub fn generate<R: TryCryptoRng + ?Sized>(
        algorithm_id: AlgorithmId,
        rng: &mut R,
    ) -> Result<Self, EcqvError> {
        let curve = registered(algorithm_id)?;
        let t = curve.random_scalar(rng)?;
        Ok(Self::from_scalar(algorithm_id, t).expect("random_scalar never returns zero"))
    }

    /// Builds a request from a chosen scalar — used by exhaustive and
    /// known-answer tests; production callers use [`generate`](Self::generate).
    pub fn from_scalar(algorithm_id: AlgorithmId, t: Scalar) -> Result<Self, EcqvError> {
        let curve = registered(algorithm_id)?;
        if t.is_zero() {
            return Err(EcqvError::BadRequestPoint);
        }
        let p_req = curve.scalar_mul_base(&t);
        Ok(CertRequestSecret {
            algorithm_id,
            t,
            p_req,
        })
    }

    pub fn algorithm_id(&self) -> AlgorithmId {
        self.algorithm_id
    }

    /// The public request point `t·G` sent to the CA.
    pub fn request_point(&self) -> &Point {
        &self.p_req
    }

    /// Serialized secret scalar, exposed to the in-crate test harness so it
    /// can assert that `t` never appears on the wire.
    pub(crate) fn private_bytes(&self) -> Vec<u8> {
        let curve = registered(self.algorithm_id).expect("constructed on a registered curve");
        curve.scalar_to_bytes(&self.t)
    }
}

impl std::fmt::Debug for CertRequestSecret {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CertRequestSecret")
            .field("algorithm_id", &self.algorithm_id)
            .finish_non_exhaustive()
    }
}

/// The CA's long-term key pair.
pub struct CaKeyPair {
    algorithm_id: AlgorithmId,
    private: Scalar,
    public: Point,
}

impl CaKeyPair {
    pub fn generate<R: TryCryptoRng + ?Sized>(
        algorithm_id: AlgorithmId,
        rng: &mut R,
    ) -> Result<Self, EcqvError> {
        let curve = registered(algorithm_id)?;
        let private = curve.random_scalar(rng)?;
        Ok(Self::from_scalar(algorithm_id, private).expect("random_scalar never returns zero"))
    }

    pub fn from_scalar(algorithm_id: AlgorithmId, private: Scalar) -> Result<Self, EcqvError> {
        let curve = registered(algorithm_id)?;
        if private.is_zero() {
            return Err(EcqvError::BadRequestPoint);
        }
        let public = curve.scalar_mul_base(&private);
        Ok(CaKeyPair {
            algorithm_id,
            private,
            public,
        })
    }

    pub fn algorithm_id(&self) -> AlgorithmId {
        self.algorithm_id
    }

    pub fn public(&self) -> &Point {
        &self.public
    }

    pub(crate) fn private(&self) -> &Scalar {
        &self.private
    }

    /// Canonical private-scalar bytes, for persistence by the role layer.
    pub fn private_bytes(&self) -> Vec<u8> {
        curve_for(self.algorithm_id)
            .expect("constructor checked registration")
            .scalar_to_bytes(&self.private)
    }

    pub fn from_private_bytes(algorithm_id: AlgorithmId, bytes: &[u8]) -> Result<Self, EcqvError> {
        let curve = registered(algorithm_id)?;
        let private = curve.scalar_from_bytes(bytes)?;
        Self::from_scalar(algorithm_id, private)
    }
}

impl std::fmt::Debug for CaKeyPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CaKeyPair")
            .field("algorithm_id", &self.algorithm_id)
            .field("public", &self.public)
            .finish_non_exhaustive()
    }
}

/// The private-key contribution `s` the CA returns alongside the
/// certificate. It is useless without the requester's secret `t`, so it
/// travels under the protocol layer's MAC but needs no encryption.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrivateKeyContribution(Scalar);

impl PrivateKeyContribution {
    pub fn to_bytes(&self, algorithm_id: AlgorithmId) -> Result<Vec<u8>, EcqvError> {
        Ok(registered(algorithm_id)?.scalar_to_bytes(&self.0))
    }

    pub fn from_bytes(algorithm_id: AlgorithmId, bytes: &[u8]) -> Result<Self, EcqvError> {
        Ok(PrivateKeyContribution(
            registered(algorithm_id)?.scalar_from_bytes(bytes)?,
        ))
    }

    /// Constructs from a raw scalar — exposed for perturbation tests.
    pub fn from_scalar(s: Scalar) -> Self {
        PrivateKeyContribution(s)
    }
}

/// A reconstructed key pair satisfying `pub == prk·G` by construction.
pub struct KeyPair {
    algorithm_id: AlgorithmId,
    prk: Scalar,
    pub public: Point,
}

impl KeyPair {
    pub fn algorithm_id(&self) -> AlgorithmId {
        self.algorithm_id
    }

    pub(crate) fn private(&self) -> &Scalar {
        &self.prk
    }

    /// Canonical fixed-width private-key bytes (for secret tracking in the
    /// test harness; never written to logs by any role).
    pub(crate) fn private_bytes(&self) -> Vec<u8> {
        curve_for(self.algorithm_id)
            .expect("constructor checked registration")
            .scalar_to_bytes(&self.prk)
    }

    /// Recomputes the defining identity `public == prk·G` from scratch.
    pub fn verify(&self) -> bool {
        curve_for(self.algorithm_id)
            .map(|c| c.scalar_mul_base(&self.prk) == self.public)
            .unwrap_or(false)
    }
}

impl std::fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KeyPair")
            .field("algorithm_id", &self.algorithm_id)
            .field("public", &self.public)
            .finish_non_exhaustive()
    }
}

/// Hashes encoded certificate bytes to a scalar: SHA-256, big-endian,
/// reduced modulo the group order. A zero result is rejected upstream.
pub fn cert_hash_scalar(curve: &CurveParams, cert_bytes: &[u8]) -> Scalar {
    let digest = crypto::hash(cert_bytes);
    curve.scalar_reduce(&BigUint::from_bytes_be(&digest))
}

/// CA-side issuance: fresh ephemeral `k`, reconstruction point
/// `U = P + k·G`, certificate encoding, and the private-key contribution
/// `s = (e·k + d_CA) mod n`. Retries with a new `k` if the certificate
/// hash reduces to zero.
pub fn ca_issue<R: TryCryptoRng + ?Sized>(
    ca: &CaKeyPair,
    session_id: SessionId,
    meta: &CertMeta,
    p_req: &Point,
    rng: &mut R,
) -> Result<(PrivateKeyContribution, Certificate), EcqvError> {
    let curve = registered(meta.algorithm_id)?;
    for _ in 0..ISSUE_RETRY_LIMIT {
        let k = curve.random_scalar(rng)?;
        match ca_issue_with_ephemeral(ca, session_id, meta, p_req, &k) {
            Err(EcqvError::DegenerateHash) => continue,
            other => return other,
        }
    }
    Err(EcqvError::DegenerateHash)
}

/// Single-attempt issuance with a caller-chosen ephemeral, for known-answer
/// and exhaustive tests. Fails with [`EcqvError::DegenerateHash`] instead
/// of retrying.
pub fn ca_issue_with_ephemeral(
    ca: &CaKeyPair,
    session_id: SessionId,
    meta: &CertMeta,
    p_req: &Point,
    k: &Scalar,
) -> Result<(PrivateKeyContribution, Certificate), EcqvError> {
    let curve = registered(meta.algorithm_id)?;
    if ca.algorithm_id != meta.algorithm_id {
        return Err(EcqvError::BadRequestPoint);
    }
    if p_req.is_infinity() || !curve.contains(p_req) {
        return Err(EcqvError::BadRequestPoint);
    }
    let u = curve.point_add(p_req, &curve.scalar_mul_base(k))?;
    let certificate = Certificate {
        session_id,
        meta: *meta,
        reconstruction_point: u,
    };
    let cert_bytes = certificate.encode()?;
    let e = cert_hash_scalar(curve, &cert_bytes);
    if e.is_zero() {
        return Err(EcqvError::DegenerateHash);
    }
    let s = curve.scalar_add(&curve.scalar_mul_mod(&e, k), ca.private());
    Ok((PrivateKeyContribution(s), certificate))
}

/// Requester-side reconstruction: `prk = (e·t + s) mod n`,
/// `pub = e·U + Q_CA`, accepted only if `pub == prk·G`.
pub fn reconstruct_own_keys(
    req: &CertRequestSecret,
    s: &PrivateKeyContribution,
    certificate: &Certificate,
    ca_public: &Point,
) -> Result<KeyPair, EcqvError> {
    let algorithm_id = certificate.meta.algorithm_id;
    let curve = registered(algorithm_id)?;
    if req.algorithm_id != algorithm_id {
        return Err(EcqvError::ReconstructionFailed);
    }
    let e = cert_hash_scalar(curve, &certificate.encode()?);
    let prk = curve.scalar_add(&curve.scalar_mul_mod(&e, &req.t), &s.0);
    let public = reconstruct_public(curve, &e, &certificate.reconstruction_point, ca_public)?;
    if curve.scalar_mul_base(&prk) != public {
        return Err(EcqvError::ReconstructionFailed);
    }
    Ok(KeyPair {
        algorithm_id,
        prk,
        public,
    })
}

/// Peer-side reconstruction of a certificate holder's public key:
/// `H(cert)·U + Q_CA`. Uses only public values.
pub fn reconstruct_peer_public(
    certificate: &Certificate,
    ca_public: &Point,
) -> Result<Point, EcqvError> {
    let curve = registered(certificate.meta.algorithm_id)?;
    let e = cert_hash_scalar(curve, &certificate.encode()?);
    reconstruct_public(curve, &e, &certificate.reconstruction_point, ca_public)
}

fn reconstruct_public(
    curve: &CurveParams,
    e: &Scalar,
    u: &Point,
    ca_public: &Point,
) -> Result<Point, EcqvError> {
    let eu = curve.scalar_mul(e, u)?;
    Ok(curve.point_add(&eu, ca_public)?)
}

fn registered(algorithm_id: AlgorithmId) -> Result<&'static CurveParams, EcqvError> {
    curve_for(algorithm_id).ok_or(EcqvError::Cert(crate::error::CertError::UnknownAlgorithm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ec::{ALG_P256_SHA256, ALG_TOY17_SHA256};
    use crate::ids::DeviceId;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn toy_meta() -> CertMeta {
        CertMeta {
            algorithm_id: ALG_TOY17_SHA256,
            issuer_id: DeviceId(*b"sed\0\0\0\0\0"),
            subject_id: DeviceId(*b"bms\0\0\0\0\0"),
            valid_from: 1_000,
            valid_to: 2_000,
        }
    }

    fn toy_scalar(v: u8) -> Scalar {
        curve_for(ALG_TOY17_SHA256)
            .unwrap()
            .scalar_from_biguint(BigUint::from(v))
            .unwrap()
    }

    /// The worked example with all randomness pinned: t = 3, k = 5,
    /// d_CA = 7 on the 19-element toy group.
    #[test]
    fn pinned_toy_issuance_reconstructs_and_matches_the_group_table() {
        let curve = curve_for(ALG_TOY17_SHA256).unwrap();
        let ca = CaKeyPair::from_scalar(ALG_TOY17_SHA256, toy_scalar(7)).unwrap();
        let req = CertRequestSecret::from_scalar(ALG_TOY17_SHA256, toy_scalar(3)).unwrap();
        // 3G = (10, 6) in the frozen group table.
        assert_eq!(
            curve.point_to_bytes(req.request_point()),
            vec![0x04, 10, 6]
        );

        let session = SessionId([0x42; 16]);
        let (s, cert) = ca_issue_with_ephemeral(&ca, session, &toy_meta(), req.request_point(), &toy_scalar(5))
            .expect("pinned example must not hit a degenerate hash");
        // U = 3G + 5G = 8G = (13, 7).
        assert_eq!(
            curve.point_to_bytes(&cert.reconstruction_point),
            vec![0x04, 13, 7]
        );
        // s = (e·k + d_CA) mod 19 for e = H(cert) mod 19.
        let e = cert_hash_scalar(curve, &cert.encode().unwrap());
        let expected_s = curve.scalar_add(&curve.scalar_mul_mod(&e, &toy_scalar(5)), &toy_scalar(7));
        assert_eq!(s, PrivateKeyContribution::from_scalar(expected_s));

        let keys = reconstruct_own_keys(&req, &s, &cert, ca.public()).unwrap();
        assert!(keys.verify());
        // prk = e·t + s = e·(3+5) + 7 = 8e + 7 (mod 19), so pub = (8e+7)·G.
        let expected_prk = curve.scalar_add(
            &curve.scalar_mul_mod(&e, &toy_scalar(8)),
            &toy_scalar(7),
        );
        assert_eq!(keys.private(), &expected_prk);
        assert_eq!(keys.public, curve.scalar_mul_base(&expected_prk));
        // The peer derives the same public key from public data alone.
        assert_eq!(
            reconstruct_peer_public(&cert, ca.public()).unwrap(),
            keys.public
        );
    }

    #[test]
    fn issuance_rejects_bad_request_points() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let ca = CaKeyPair::generate(ALG_TOY17_SHA256, &mut rng).unwrap();
        let session = SessionId([1; 16]);
        let err = ca_issue(&ca, session, &toy_meta(), &Point::Infinity, &mut rng).unwrap_err();
        assert_eq!(err, EcqvError::BadRequestPoint);
        let off_curve = Point::Affine {
            x: BigUint::from(4u8),
            y: BigUint::from(4u8),
        };
        let err = ca_issue(&ca, session, &toy_meta(), &off_curve, &mut rng).unwrap_err();
        assert_eq!(err, EcqvError::BadRequestPoint);
    }

    #[test]
    fn perturbed_contribution_or_certificate_is_rejected() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let curve = curve_for(ALG_TOY17_SHA256).unwrap();
        let ca = CaKeyPair::generate(ALG_TOY17_SHA256, &mut rng).unwrap();
        let req = CertRequestSecret::generate(ALG_TOY17_SHA256, &mut rng).unwrap();
        let session = SessionId([9; 16]);
        let (s, cert) = ca_issue(&ca, session, &toy_meta(), req.request_point(), &mut rng).unwrap();
        assert!(reconstruct_own_keys(&req, &s, &cert, ca.public()).is_ok());

        // s + 1 mod n.
        let s_bytes = s.to_bytes(ALG_TOY17_SHA256).unwrap();
        let bumped = curve.scalar_reduce(&(BigUint::from_bytes_be(&s_bytes) + 1u8));
        let s_bad = PrivateKeyContribution::from_scalar(bumped);
        assert_eq!(
            reconstruct_own_keys(&req, &s_bad, &cert, ca.public()).unwrap_err(),
            EcqvError::ReconstructionFailed
        );

        // A different session id changes the certificate hash.
        let mut cert_bad = cert.clone();
        cert_bad.session_id = SessionId([8; 16]);
        assert_eq!(
            reconstruct_own_keys(&req, &s, &cert_bad, ca.public()).unwrap_err(),
            EcqvError::ReconstructionFailed
        );

        // Wrong CA public key.
        let other_ca = CaKeyPair::generate(ALG_TOY17_SHA256, &mut rng).unwrap();
        assert_eq!(
            reconstruct_own_keys(&req, &s, &cert, other_ca.public()).unwrap_err(),
            EcqvError::ReconstructionFailed
        );
        // And the peer-side reconstruction under the wrong CA key yields a
        // different public key, so mutual authentication would fail.
        let honest = reconstruct_peer_public(&cert, ca.public()).unwrap();
        let rogue = reconstruct_peer_public(&cert, other_ca.public()).unwrap();
        assert_ne!(honest, rogue);
    }

    #[test]
    fn production_curve_issuance_accepts_statistically() {
        let mut rng = ChaCha20Rng::seed_from_u64(0xEC4);
        let ca = CaKeyPair::generate(ALG_P256_SHA256, &mut rng).unwrap();
        let meta = CertMeta {
            algorithm_id: ALG_P256_SHA256,
            ..toy_meta()
        };
        for i in 0..25 {
            let req = CertRequestSecret::generate(ALG_P256_SHA256, &mut rng).unwrap();
            let session = SessionId([i as u8; 16]);
            let (s, cert) =
                ca_issue(&ca, session, &meta, req.request_point(), &mut rng).unwrap();
            let keys = reconstruct_own_keys(&req, &s, &cert, ca.public()).unwrap();
            assert!(keys.verify());
            assert_eq!(
                reconstruct_peer_public(&cert, ca.public()).unwrap(),
                keys.public
            );
        }
    }

    #[test]
    fn request_secrets_cover_the_toy_group_and_match_the_table() {
        // Exhaustive: every admissible t produces p_req = t·G.
        let curve = curve_for(ALG_TOY17_SHA256).unwrap();
        for t in 1u8..19 {
            let req = CertRequestSecret::from_scalar(ALG_TOY17_SHA256, toy_scalar(t)).unwrap();
            assert_eq!(
                req.request_point(),
                &curve.scalar_mul_base(&toy_scalar(t)),
                "t = {t}"
            );
            assert!(!req.request_point().is_infinity());
        }
        assert!(CertRequestSecret::from_scalar(ALG_TOY17_SHA256, toy_scalar(0)).is_err());
    }

    #[test]
    fn debug_output_reveals_no_secret_scalars() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let ca = CaKeyPair::generate(ALG_TOY17_SHA256, &mut rng).unwrap();
        let req = CertRequestSecret::generate(ALG_TOY17_SHA256, &mut rng).unwrap();
        let shown = format!("{ca:?} {req:?}");
        assert!(shown.contains(".."));
        assert!(!shown.to_lowercase().contains("private"));
    }
}
