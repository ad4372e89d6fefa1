//! Frozen certificate byte vectors.
//!
//! `data/cert_vectors.txt` holds hand-derived encodings (see the header
//! comment there). Decoding must reproduce every field, re-encoding must
//! reproduce the exact bytes, and each malformed line must fail with the
//! exact error named. If the codec ever drifts, this suite — not a unit
//! test that derives expectations from the code under test — is what
//! catches it.

use sedauth::cert::Certificate;
use sedauth::ec::{algorithm_by_name, curve_for};
use sedauth::error::CertError;
use sedauth::ids::{DeviceId, SessionId};

const VECTORS: &str = include_str!("data/cert_vectors.txt");

fn unhex(token: &str) -> Vec<u8> {
    if token == "-" {
        return Vec::new();
    }
    hex::decode(token).expect("vector file holds valid hex")
}

fn error_by_name(token: &str) -> CertError {
    match token {
        "LengthMismatch" => CertError::LengthMismatch,
        "UnknownVersion" => CertError::UnknownVersion,
        "UnknownAlgorithm" => CertError::UnknownAlgorithm,
        "PointEncoding" => CertError::PointEncoding,
        "OffCurvePoint" => CertError::OffCurvePoint,
        "TrailingGarbage" => CertError::TrailingGarbage,
        "InvalidValidity" => CertError::InvalidValidity,
        other => panic!("vector file names unknown error `{other}`"),
    }
}

fn device_id(token: &str) -> DeviceId {
    DeviceId(
        token
            .as_bytes()
            .try_into()
            .expect("vector device ids are exactly eight bytes"),
    )
}

#[test]
fn golden_vectors_decode_encode_and_reject_exactly_as_frozen() {
    let mut ok_lines = 0;
    let mut err_lines = 0;
    for (idx, raw) in VECTORS.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let ctx = format!("vector line {}", idx + 1);
        match fields[0] {
            "ok" => {
                let [_, bytes_hex, alg, session_hex, issuer, subject, from, to, point_hex] =
                    fields[..]
                else {
                    panic!("{ctx}: malformed ok line");
                };
                let bytes = unhex(bytes_hex);
                let cert = Certificate::decode(&bytes)
                    .unwrap_or_else(|e| panic!("{ctx}: decode failed: {e}"));

                let algorithm =
                    algorithm_by_name(alg).unwrap_or_else(|| panic!("{ctx}: unknown curve"));
                assert_eq!(cert.meta.algorithm_id, algorithm, "{ctx}: algorithm");
                assert_eq!(
                    cert.session_id,
                    SessionId(unhex(session_hex).try_into().unwrap()),
                    "{ctx}: session id"
                );
                assert_eq!(cert.meta.issuer_id, device_id(issuer), "{ctx}: issuer");
                assert_eq!(cert.meta.subject_id, device_id(subject), "{ctx}: subject");
                assert_eq!(cert.meta.valid_from, from.parse::<u64>().unwrap(), "{ctx}");
                assert_eq!(cert.meta.valid_to, to.parse::<u64>().unwrap(), "{ctx}");

                let curve = curve_for(algorithm).expect("registered curve");
                assert_eq!(
                    curve.point_to_bytes(&cert.reconstruction_point),
                    unhex(point_hex),
                    "{ctx}: reconstruction point"
                );

                let reencoded = cert.encode().unwrap_or_else(|e| panic!("{ctx}: {e}"));
                assert_eq!(reencoded, bytes, "{ctx}: re-encoding must be byte-exact");
                ok_lines += 1;
            }
            "err" => {
                let [_, bytes_hex, expected] = fields[..] else {
                    panic!("{ctx}: malformed err line");
                };
                let bytes = unhex(bytes_hex);
                match Certificate::decode(&bytes) {
                    Ok(_) => panic!("{ctx}: malformed bytes decoded successfully"),
                    Err(e) => assert_eq!(e, error_by_name(expected), "{ctx}"),
                }
                err_lines += 1;
            }
            other => panic!("{ctx}: unknown vector kind `{other}`"),
        }
    }
    // Guards against the file being truncated or mis-parsed into no-ops.
    assert_eq!(ok_lines, 3, "expected exactly three well-formed vectors");
    assert_eq!(err_lines, 10, "expected exactly ten malformed vectors");
}
