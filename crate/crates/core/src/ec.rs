//! Short-Weierstrass elliptic-curve groups over prime fields.
//!
//! The protocol only needs group arithmetic — point addition, scalar
//! multiplication, and canonical encodings — so this module implements
//! exactly that in affine coordinates over [`num_bigint::BigUint`].
//! Constant-time execution is explicitly out of scope: the devices this
//! stack targets live on closed networks where the adversary owns the wire,
//! not a co-resident timing probe.
//!
//! Two curves are registered:
//!
//! * [`ALG_P256_SHA256`] — NIST P-256, the production group.
//! * [`ALG_TOY17_SHA256`] — `y^2 = x^3 + 2x + 2` over `F_17`, a 19-element
//!   group that is small enough to verify by exhaustive enumeration. Only
//!   used by tests and the demo tooling; never deploy it.

use std::sync::LazyLock;

use num_bigint::BigUint;
use num_traits::{One, Zero};
use rand::TryCryptoRng;

use crate::error::{CryptoError, EcError};

/// Identifies a (curve, hash) suite in certificates and on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AlgorithmId(pub u8);

/// NIST P-256 with SHA-256. The production suite.
pub const ALG_P256_SHA256: AlgorithmId = AlgorithmId(0x01);
/// The 19-element toy group over F_17 with SHA-256. Tests and demos only.
pub const ALG_TOY17_SHA256: AlgorithmId = AlgorithmId(0xF0);

/// A point on a short-Weierstrass curve, in affine coordinates.
///
/// The point at infinity is the group identity. `Point` does not remember
/// which curve it belongs to; every [`CurveParams`] operation validates its
/// inputs against that curve and rejects foreign points with
/// [`EcError::OffCurve`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Point {
    Infinity,
    Affine { x: BigUint, y: BigUint },
}

impl Point {
    pub fn is_infinity(&self) -> bool {
        matches!(self, Point::Infinity)
    }
}

/// A scalar reduced modulo the group order of the curve that produced it.
///
/// Scalars are only constructed through [`CurveParams`] methods, which
/// enforce `value < group_order`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scalar(BigUint);

impl Scalar {
    pub fn value(&self) -> &BigUint {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }
}

/// Domain parameters of one short-Weierstrass curve `y^2 = x^3 + ax + b`
/// over the prime field `F_p`, together with a generator of a prime-order
/// subgroup.
#[derive(Debug, Clone)]
pub struct CurveParams {
    pub name: &'static str,
    pub field_prime: BigUint,
    pub coeff_a: BigUint,
    pub coeff_b: BigUint,
    pub generator: Point,
    pub group_order: BigUint,
    pub cofactor: u32,
    /// Bit length of `group_order`; sets the canonical encoding width.
    pub key_bits: u32,
}

impl CurveParams {
    /// Canonical byte width of one scalar or one coordinate.
    pub fn byte_len(&self) -> usize {
        (self.key_bits as usize).div_ceil(8)
    }

    /// Checks the structural invariants of the parameter set: a nonsingular
    /// curve, a generator on it, and `group_order * generator == identity`.
    pub fn validate(&self) -> Result<(), EcError> {
        let p = &self.field_prime;
        if p < &BigUint::from(3u8) {
            return Err(EcError::InvalidParams("field prime too small"));
        }
        if &self.coeff_a >= p || &self.coeff_b >= p {
            return Err(EcError::InvalidParams("coefficients not reduced"));
        }
        // Discriminant of y^2 = x^3 + ax + b is -16(4a^3 + 27b^2); the curve
        // is nonsingular iff 4a^3 + 27b^2 != 0 in F_p.
        let four_a3 = (BigUint::from(4u8) * self.coeff_a.modpow(&BigUint::from(3u8), p)) % p;
        let twenty7_b2 = (BigUint::from(27u8) * self.coeff_b.modpow(&BigUint::from(2u8), p)) % p;
        if ((four_a3 + twenty7_b2) % p).is_zero() {
            return Err(EcError::InvalidParams("singular curve"));
        }
        if !self.contains(&self.generator) || self.generator.is_infinity() {
            return Err(EcError::InvalidParams("generator not on curve"));
        }
        if self.group_order < BigUint::from(2u8) {
            return Err(EcError::InvalidParams("group order too small"));
        }
        if self.key_bits as u64 != self.group_order.bits() {
            return Err(EcError::InvalidParams("key_bits does not match group order"));
        }
        let ng = self.mul_unchecked(&self.group_order, &self.generator);
        if !ng.is_infinity() {
            return Err(EcError::InvalidParams("generator order does not divide group_order"));
        }
        Ok(())
    }

    /// True iff `p` is the identity or an affine point satisfying the curve
    /// equation with reduced coordinates.
    pub fn contains(&self, point: &Point) -> bool {
        match point {
            Point::Infinity => true,
            Point::Affine { x, y } => {
                let p = &self.field_prime;
                if x >= p || y >= p {
                    return false;
                }
                let lhs = y.modpow(&BigUint::from(2u8), p);
                let rhs = (x.modpow(&BigUint::from(3u8), p)
                    + &self.coeff_a * x
                    + &self.coeff_b)
                    % p;
                lhs == rhs
            }
        }
    }

    /// Group addition. Both inputs must lie on this curve.
    pub fn point_add(&self, a: &Point, b: &Point) -> Result<Point, EcError> {
        if !self.contains(a) || !self.contains(b) {
            return Err(EcError::OffCurve);
        }
        Ok(self.add_unchecked(a, b))
    }

    /// Group negation: `(x, y) -> (x, -y)`.
    pub fn point_negate(&self, a: &Point) -> Result<Point, EcError> {
        if !self.contains(a) {
            return Err(EcError::OffCurve);
        }
        Ok(match a {
            Point::Infinity => Point::Infinity,
            Point::Affine { x, y } => Point::Affine {
                x: x.clone(),
                y: self.fsub(&BigUint::zero(), y),
            },
        })
    }

    /// Scalar multiplication `k * point` by double-and-add.
    pub fn scalar_mul(&self, k: &Scalar, point: &Point) -> Result<Point, EcError> {
        if !self.contains(point) {
            return Err(EcError::OffCurve);
        }
        Ok(self.mul_unchecked(&k.0, point))
    }

    /// `k * G` for the registered generator.
    pub fn scalar_mul_base(&self, k: &Scalar) -> Point {
        self.mul_unchecked(&k.0, &self.generator)
    }

    /// Draws a uniform scalar in `[1, group_order - 1]` by rejection
    /// sampling, so every value in range is exactly equally likely.
    pub fn random_scalar<R: TryCryptoRng + ?Sized>(
        &self,
        rng: &mut R,
    ) -> Result<Scalar, CryptoError> {
        let width = self.byte_len();
        let excess = (width * 8) as u32 - self.key_bits;
        let mask: u8 = 0xFFu8 >> excess;
        let mut buf = vec![0u8; width];
        // With the top byte masked to key_bits the acceptance probability is
        // at least 1/2, so 512 rounds failing indicates a broken RNG, not
        // bad luck.
        for _ in 0..512 {
            rng.try_fill_bytes(&mut buf).map_err(|_| CryptoError::Entropy)?;
            buf[0] &= mask;
            let v = BigUint::from_bytes_be(&buf);
            if !v.is_zero() && v < self.group_order {
                return Ok(Scalar(v));
            }
        }
        Err(CryptoError::Entropy)
    }

    /// Strict scalar decoding: exactly [`byte_len`](Self::byte_len) bytes,
    /// big-endian, value strictly below the group order.
    pub fn scalar_from_bytes(&self, bytes: &[u8]) -> Result<Scalar, EcError> {
        if bytes.len() != self.byte_len() {
            return Err(EcError::Encoding);
        }
        let v = BigUint::from_bytes_be(bytes);
        self.scalar_from_biguint(v)
    }

    /// Admits an integer already known to be below the group order.
    pub fn scalar_from_biguint(&self, v: BigUint) -> Result<Scalar, EcError> {
        if v >= self.group_order {
            return Err(EcError::ScalarRange);
        }
        Ok(Scalar(v))
    }

    /// Reduces an arbitrary integer modulo the group order.
    pub fn scalar_reduce(&self, v: &BigUint) -> Scalar {
        Scalar(v % &self.group_order)
    }

    /// `(a + b) mod group_order`.
    pub fn scalar_add(&self, a: &Scalar, b: &Scalar) -> Scalar {
        Scalar((&a.0 + &b.0) % &self.group_order)
    }

    /// `(a * b) mod group_order`.
    pub fn scalar_mul_mod(&self, a: &Scalar, b: &Scalar) -> Scalar {
        Scalar((&a.0 * &b.0) % &self.group_order)
    }

    /// Canonical fixed-width big-endian scalar encoding.
    pub fn scalar_to_bytes(&self, s: &Scalar) -> Vec<u8> {
        to_fixed_width_be(&s.0, self.byte_len())
    }

    /// Canonical point encoding: `0x00` for the identity, otherwise
    /// `0x04 || x || y` with fixed-width big-endian coordinates.
    pub fn point_to_bytes(&self, point: &Point) -> Vec<u8> {
        match point {
            Point::Infinity => vec![0x00],
            Point::Affine { x, y } => {
                let w = self.byte_len();
                let mut out = Vec::with_capacity(1 + 2 * w);
                out.push(0x04);
                out.extend_from_slice(&to_fixed_width_be(x, w));
                out.extend_from_slice(&to_fixed_width_be(y, w));
                out
            }
        }
    }

    /// Strict inverse of [`point_to_bytes`](Self::point_to_bytes); rejects
    /// wrong lengths, unknown tags, and points off the curve.
    pub fn point_from_bytes(&self, bytes: &[u8]) -> Result<Point, EcError> {
        match bytes.first() {
            Some(0x00) => {
                if bytes.len() == 1 {
                    Ok(Point::Infinity)
                } else {
                    Err(EcError::Encoding)
                }
            }
            Some(0x04) => {
                let w = self.byte_len();
                if bytes.len() != 1 + 2 * w {
                    return Err(EcError::Encoding);
                }
                let x = BigUint::from_bytes_be(&bytes[1..1 + w]);
                let y = BigUint::from_bytes_be(&bytes[1 + w..]);
                let point = Point::Affine { x, y };
                if !self.contains(&point) {
                    return Err(EcError::OffCurve);
                }
                Ok(point)
            }
            _ => Err(EcError::Encoding),
        }
    }

    /// Encoded length of a non-identity point: `1 + 2 * byte_len()`.
    pub fn point_encoding_len(&self) -> usize {
        1 + 2 * self.byte_len()
    }

    // ---- field helpers ------------------------------------------------

    fn fadd(&self, a: &BigUint, b: &BigUint) -> BigUint {
        (a + b) % &self.field_prime
    }

    fn fsub(&self, a: &BigUint, b: &BigUint) -> BigUint {
        ((a + &self.field_prime) - (b % &self.field_prime)) % &self.field_prime
    }

    fn fmul(&self, a: &BigUint, b: &BigUint) -> BigUint {
        (a * b) % &self.field_prime
    }

    fn finv(&self, a: &BigUint) -> BigUint {
        a.modinv(&self.field_prime)
            .expect("inverse of a nonzero element of a prime field always exists")
    }

    // ---- group law ----------------------------------------------------

    fn add_unchecked(&self, a: &Point, b: &Point) -> Point {
        let (x1, y1) = match a {
            Point::Infinity => return b.clone(),
            Point::Affine { x, y } => (x, y),
        };
        let (x2, y2) = match b {
            Point::Infinity => return a.clone(),
            Point::Affine { x, y } => (x, y),
        };
        if x1 == x2 {
            // Either inverses (vertical chord) or a doubling. A doubling of
            // a point with y == 0 is also vertical.
            if self.fadd(y1, y2).is_zero() {
                return Point::Infinity;
            }
            // y1 == y2 != 0: tangent.
            let three = BigUint::from(3u8);
            let two = BigUint::from(2u8);
            let num = self.fadd(&self.fmul(&three, &self.fmul(x1, x1)), &self.coeff_a);
            let den = self.finv(&self.fmul(&two, y1));
            let lambda = self.fmul(&num, &den);
            return self.chord_result(&lambda, x1, y1, x2);
        }
        let num = self.fsub(y2, y1);
        let den = self.finv(&self.fsub(x2, x1));
        let lambda = self.fmul(&num, &den);
        self.chord_result(&lambda, x1, y1, x2)
    }

    fn chord_result(&self, lambda: &BigUint, x1: &BigUint, y1: &BigUint, x2: &BigUint) -> Point {
        let x3 = self.fsub(&self.fsub(&self.fmul(lambda, lambda), x1), x2);
        let y3 = self.fsub(&self.fmul(lambda, &self.fsub(x1, &x3)), y1);
        Point::Affine { x: x3, y: y3 }
    }

    /// Double-and-add over Jacobian coordinates, so the whole ladder costs
    /// a single field inversion (at the final affine conversion) instead of
    /// one per step. The affine chord-tangent law above stays as the
    /// reference implementation that tests compare against.
    fn mul_unchecked(&self, k: &BigUint, point: &Point) -> Point {
        let (px, py) = match point {
            Point::Infinity => return Point::Infinity,
            Point::Affine { x, y } => (x, y),
        };
        if k.is_zero() {
            return Point::Infinity;
        }
        let mut acc = Jacobian::identity();
        for i in (0..k.bits()).rev() {
            acc = self.jdouble(&acc);
            if k.bit(i) {
                acc = self.jmixed_add(&acc, px, py);
            }
        }
        self.jto_affine(&acc)
    }

    fn jdouble(&self, p: &Jacobian) -> Jacobian {
        // dbl-2007-bl for arbitrary a. When y = 0 (a two-torsion point) or
        // z = 0 (the identity), z3 = 2·y·z vanishes, yielding the identity
        // with no special-casing.
        let xx = self.fmul(&p.x, &p.x);
        let yy = self.fmul(&p.y, &p.y);
        let yyyy = self.fmul(&yy, &yy);
        let zz = self.fmul(&p.z, &p.z);
        let x_plus_yy = self.fadd(&p.x, &yy);
        let s = {
            let sq = self.fmul(&x_plus_yy, &x_plus_yy);
            let t = self.fsub(&self.fsub(&sq, &xx), &yyyy);
            self.fadd(&t, &t)
        };
        let m = {
            let three_xx = self.fadd(&self.fadd(&xx, &xx), &xx);
            self.fadd(&three_xx, &self.fmul(&self.coeff_a, &self.fmul(&zz, &zz)))
        };
        let x3 = self.fsub(&self.fmul(&m, &m), &self.fadd(&s, &s));
        let y3 = {
            let eight_yyyy = {
                let two = self.fadd(&yyyy, &yyyy);
                let four = self.fadd(&two, &two);
                self.fadd(&four, &four)
            };
            self.fsub(&self.fmul(&m, &self.fsub(&s, &x3)), &eight_yyyy)
        };
        let z3 = {
            let y_plus_z = self.fadd(&p.y, &p.z);
            let sq = self.fmul(&y_plus_z, &y_plus_z);
            self.fsub(&self.fsub(&sq, &yy), &zz)
        };
        Jacobian { x: x3, y: y3, z: z3 }
    }

    fn jmixed_add(&self, p: &Jacobian, qx: &BigUint, qy: &BigUint) -> Jacobian {
        if p.z.is_zero() {
            return Jacobian {
                x: qx.clone(),
                y: qy.clone(),
                z: BigUint::one(),
            };
        }
        let z1z1 = self.fmul(&p.z, &p.z);
        let u2 = self.fmul(qx, &z1z1);
        let s2 = self.fmul(qy, &self.fmul(&p.z, &z1z1));
        let h = self.fsub(&u2, &p.x);
        let r = self.fsub(&s2, &p.y);
        if h.is_zero() {
            if r.is_zero() {
                // Same point: fall back to doubling.
                return self.jdouble(p);
            }
            return Jacobian::identity();
        }
        let hh = self.fmul(&h, &h);
        let hhh = self.fmul(&h, &hh);
        let v = self.fmul(&p.x, &hh);
        let x3 = self.fsub(
            &self.fsub(&self.fmul(&r, &r), &hhh),
            &self.fadd(&v, &v),
        );
        let y3 = self.fsub(
            &self.fmul(&r, &self.fsub(&v, &x3)),
            &self.fmul(&p.y, &hhh),
        );
        let z3 = self.fmul(&p.z, &h);
        Jacobian { x: x3, y: y3, z: z3 }
    }

    fn jto_affine(&self, p: &Jacobian) -> Point {
        if p.z.is_zero() {
            return Point::Infinity;
        }
        let zi = self.finv(&p.z);
        let zi2 = self.fmul(&zi, &zi);
        let x = self.fmul(&p.x, &zi2);
        let y = self.fmul(&p.y, &self.fmul(&zi2, &zi));
        Point::Affine { x, y }
    }

    /// Reference ladder over the affine group law, for tests that validate
    /// the Jacobian fast path.
    #[cfg(test)]
    fn mul_affine_reference(&self, k: &BigUint, point: &Point) -> Point {
        let mut acc = Point::Infinity;
        for i in (0..k.bits()).rev() {
            acc = self.add_unchecked(&acc, &acc);
            if k.bit(i) {
                acc = self.add_unchecked(&acc, point);
            }
        }
        acc
    }
}

/// Internal projective representation: `(X, Y, Z)` with `x = X/Z²`,
/// `y = Y/Z³`; the identity is any triple with `Z = 0`.
struct Jacobian {
    x: BigUint,
    y: BigUint,
    z: BigUint,
}

impl Jacobian {
    fn identity() -> Self {
        Jacobian {
            x: BigUint::one(),
            y: BigUint::one(),
            z: BigUint::zero(),
        }
    }
}

/// Left-pads `v` to exactly `width` big-endian bytes.
fn to_fixed_width_be(v: &BigUint, width: usize) -> Vec<u8> {
    let raw = v.to_bytes_be();
    assert!(raw.len() <= width, "value wider than its canonical encoding");
    let mut out = vec![0u8; width];
    out[width - raw.len()..].copy_from_slice(&raw);
    out
}

fn hexu(s: &str) -> BigUint {
    BigUint::parse_bytes(s.as_bytes(), 16).expect("valid hex constant")
}

static P256: LazyLock<CurveParams> = LazyLock::new(|| CurveParams {
    name: "p256",
    field_prime: hexu("ffffffff00000001000000000000000000000000ffffffffffffffffffffffff"),
    // a = -3 mod p
    coeff_a: hexu("ffffffff00000001000000000000000000000000fffffffffffffffffffffffc"),
    coeff_b: hexu("5ac635d8aa3a93e7b3ebbd55769886bc651d06b0cc53b0f63bce3c3e27d2604b"),
    generator: Point::Affine {
        x: hexu("6b17d1f2e12c4247f8bce6e563a440f277037d812deb33a0f4a13945d898c296"),
        y: hexu("4fe342e2fe1a7f9b8ee7eb4a7c0f9e162bce33576b315ececbb6406837bf51f5"),
    },
    group_order: hexu("ffffffff00000000ffffffffffffffffbce6faada7179e84f3b9cac2fc632551"),
    cofactor: 1,
    key_bits: 256,
});

static TOY17: LazyLock<CurveParams> = LazyLock::new(|| CurveParams {
    name: "toy17",
    field_prime: BigUint::from(17u8),
    coeff_a: BigUint::from(2u8),
    coeff_b: BigUint::from(2u8),
    generator: Point::Affine {
        x: BigUint::from(5u8),
        y: BigUint::from(1u8),
    },
    group_order: BigUint::from(19u8),
    cofactor: 1,
    key_bits: 5,
});

/// Looks up the curve for a registered algorithm identifier.
pub fn curve_for(alg: AlgorithmId) -> Option<&'static CurveParams> {
    match alg {
        ALG_P256_SHA256 => Some(&P256),
        ALG_TOY17_SHA256 => Some(&TOY17),
        _ => None,
    }
}

/// Looks up an algorithm identifier by curve name (for CLI flags).
pub fn algorithm_by_name(name: &str) -> Option<AlgorithmId> {
    match name {
        "p256" => Some(ALG_P256_SHA256),
        "toy17" | "toy" => Some(ALG_TOY17_SHA256),
        _ => None,
    }
}

/// Inverse of [`algorithm_by_name`]: the canonical flag name, or a hex
/// rendering of the raw identifier for unregistered suites.
pub fn algorithm_name(id: AlgorithmId) -> String {
    match id {
        ALG_P256_SHA256 => "p256".into(),
        ALG_TOY17_SHA256 => "toy17".into(),
        other => format!("{:#04x}", other.0),
    }
}

/// All registered algorithm identifiers.
pub fn registered_algorithms() -> [AlgorithmId; 2] {
    [ALG_P256_SHA256, ALG_TOY17_SHA256]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn toy() -> &'static CurveParams {
        curve_for(ALG_TOY17_SHA256).unwrap()
    }

    fn p256() -> &'static CurveParams {
        curve_for(ALG_P256_SHA256).unwrap()
    }

    fn affine(x: u8, y: u8) -> Point {
        Point::Affine {
            x: BigUint::from(x),
            y: BigUint::from(y),
        }
    }

    #[test]
    fn registered_curves_validate() {
        toy().validate().unwrap();
        p256().validate().unwrap();
    }

    #[test]
    fn invalid_params_are_rejected() {
        // Singular curve: a = 0, b = 0.
        let mut c = toy().clone();
        c.coeff_a = BigUint::zero();
        c.coeff_b = BigUint::zero();
        assert!(matches!(c.validate(), Err(EcError::InvalidParams(_))));

        // Generator off the curve.
        let mut c = toy().clone();
        c.generator = affine(5, 2);
        assert!(matches!(c.validate(), Err(EcError::InvalidParams(_))));

        // Wrong group order.
        let mut c = toy().clone();
        c.group_order = BigUint::from(18u8);
        assert!(matches!(c.validate(), Err(EcError::InvalidParams(_))));
    }

    #[test]
    fn toy_doubling_and_chord_match_known_values() {
        let c = toy();
        // 2G and 3G in the 19-element group generated by (5, 1).
        let g2 = c.point_add(&c.generator, &c.generator).unwrap();
        assert_eq!(g2, affine(6, 3));
        let g3 = c.point_add(&g2, &c.generator).unwrap();
        assert_eq!(g3, affine(10, 6));
    }

    #[test]
    fn identity_behaves_as_neutral_element() {
        let c = toy();
        let g = &c.generator;
        assert_eq!(c.point_add(&Point::Infinity, g).unwrap(), *g);
        assert_eq!(c.point_add(g, &Point::Infinity).unwrap(), *g);
        assert_eq!(
            c.point_add(&Point::Infinity, &Point::Infinity).unwrap(),
            Point::Infinity
        );
        let neg = c.point_negate(g).unwrap();
        assert_eq!(c.point_add(g, &neg).unwrap(), Point::Infinity);
    }

    #[test]
    fn scalar_mul_matches_repeated_addition_on_toy_curve() {
        let c = toy();
        let mut acc = Point::Infinity;
        for k in 0u8..=19 {
            let s = c.scalar_reduce(&BigUint::from(k));
            let viaddadd = acc.clone();
            let viamul = c.mul_unchecked(&BigUint::from(k), &c.generator);
            assert_eq!(viamul, viaddadd, "k = {k}");
            assert_eq!(
                c.scalar_mul_base(&s),
                c.mul_unchecked(&(BigUint::from(k) % &c.group_order), &c.generator)
            );
            acc = c.add_unchecked(&acc, &c.generator);
        }
        // Full cycle: 19 * G = identity, 20 * G = G again.
        assert!(c.mul_unchecked(&BigUint::from(19u8), &c.generator).is_infinity());
        assert_eq!(
            c.mul_unchecked(&BigUint::from(20u8), &c.generator),
            c.generator
        );
    }

    #[test]
    fn doubling_a_two_torsion_point_gives_identity() {
        // On y^2 = x^3 + 1 over F_7, the point (3, 0) has y = 0, so doubling
        // it must hit the vertical-tangent branch and return the identity.
        let c = CurveParams {
            name: "f7",
            field_prime: BigUint::from(7u8),
            coeff_a: BigUint::zero(),
            coeff_b: BigUint::one(),
            generator: affine(3, 0),
            group_order: BigUint::from(2u8),
            cofactor: 1,
            key_bits: 2,
        };
        c.validate().unwrap();
        let p = affine(3, 0);
        assert!(c.contains(&p));
        assert_eq!(c.point_add(&p, &p).unwrap(), Point::Infinity);
    }

    #[test]
    fn foreign_points_are_rejected() {
        let c = toy();
        let not_on_curve = affine(4, 4);
        assert!(!c.contains(&not_on_curve));
        assert_eq!(
            c.point_add(&not_on_curve, &c.generator),
            Err(EcError::OffCurve)
        );
        assert_eq!(
            c.scalar_mul(&c.scalar_reduce(&BigUint::from(2u8)), &not_on_curve),
            Err(EcError::OffCurve)
        );
        // A P-256 point is by overwhelming likelihood not on the toy curve,
        // and its unreduced coordinates are rejected outright.
        let foreign = p256().generator.clone();
        assert_eq!(c.point_add(&foreign, &c.generator), Err(EcError::OffCurve));
    }

    #[test]
    fn p256_generator_has_the_registered_order() {
        let c = p256();
        let n_minus_1 = &c.group_order - BigUint::one();
        let almost = c.mul_unchecked(&n_minus_1, &c.generator);
        // (n-1)G = -G, so adding G yields the identity.
        assert_eq!(
            c.point_add(&almost, &c.generator).unwrap(),
            Point::Infinity
        );
        assert_eq!(c.point_negate(&almost).unwrap(), c.generator);
    }

    #[test]
    fn scalar_codec_is_fixed_width_and_strict() {
        let c = p256();
        let one = c.scalar_from_biguint(BigUint::one()).unwrap();
        let bytes = c.scalar_to_bytes(&one);
        assert_eq!(bytes.len(), 32);
        assert_eq!(bytes[31], 1);
        assert_eq!(c.scalar_from_bytes(&bytes).unwrap(), one);
        // Wrong width.
        assert_eq!(c.scalar_from_bytes(&bytes[1..]), Err(EcError::Encoding));
        // Value == group order is out of range.
        let n_bytes = to_fixed_width_be(&c.group_order, 32);
        assert_eq!(c.scalar_from_bytes(&n_bytes), Err(EcError::ScalarRange));
    }

    #[test]
    fn point_codec_roundtrips_and_rejects_malformed_input() {
        let c = toy();
        for k in 0u8..19 {
            let p = c.mul_unchecked(&BigUint::from(k), &c.generator);
            let enc = c.point_to_bytes(&p);
            if k == 0 {
                assert_eq!(enc, vec![0x00]);
            } else {
                assert_eq!(enc.len(), c.point_encoding_len());
                assert_eq!(enc[0], 0x04);
            }
            assert_eq!(c.point_from_bytes(&enc).unwrap(), p);
        }
        assert_eq!(c.point_from_bytes(&[]), Err(EcError::Encoding));
        assert_eq!(c.point_from_bytes(&[0x02, 5]), Err(EcError::Encoding));
        assert_eq!(c.point_from_bytes(&[0x00, 0x00]), Err(EcError::Encoding));
        assert_eq!(c.point_from_bytes(&[0x04, 5]), Err(EcError::Encoding));
        // Valid shape, but (4, 4) is not on the curve.
        assert_eq!(c.point_from_bytes(&[0x04, 4, 4]), Err(EcError::OffCurve));
    }

    #[test]
    fn p256_point_codec_width() {
        let c = p256();
        let enc = c.point_to_bytes(&c.generator);
        assert_eq!(enc.len(), 65);
        assert_eq!(c.point_from_bytes(&enc).unwrap(), c.generator);
    }

    #[test]
    fn random_scalar_is_in_range_and_deterministic_under_a_fixed_seed() {
        let c = toy();
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let a = c.random_scalar(&mut rng).unwrap();
        let mut rng2 = ChaCha20Rng::seed_from_u64(7);
        let b = c.random_scalar(&mut rng2).unwrap();
        assert_eq!(a, b);
        for _ in 0..1000 {
            let s = c.random_scalar(&mut rng).unwrap();
            assert!(!s.is_zero());
            assert!(s.value() < &c.group_order);
        }
        let cp = p256();
        for _ in 0..16 {
            let s = cp.random_scalar(&mut rng).unwrap();
            assert!(!s.is_zero());
            assert!(s.value() < &cp.group_order);
        }
    }

    #[test]
    fn random_scalar_on_toy_curve_is_uniform_within_5_sigma() {
        let c = toy();
        let mut rng = ChaCha20Rng::seed_from_u64(0xBEEF);
        const DRAWS: usize = 10_000;
        let mut counts = [0usize; 19];
        for _ in 0..DRAWS {
            let s = c.random_scalar(&mut rng).unwrap();
            let v: u8 = s.value().try_into().unwrap();
            counts[v as usize] += 1;
        }
        assert_eq!(counts[0], 0, "zero must never be drawn");
        let p = 1.0 / 18.0;
        let mean = DRAWS as f64 * p;
        let sigma = (DRAWS as f64 * p * (1.0 - p)).sqrt();
        for (v, &n) in counts.iter().enumerate().skip(1) {
            let dev = (n as f64 - mean).abs();
            assert!(
                dev <= 5.0 * sigma,
                "residue {v} drawn {n} times, expected {mean:.1} +/- {:.1}",
                5.0 * sigma
            );
        }
    }

    #[test]
    fn jacobian_ladder_matches_the_affine_reference() {
        let mut rng = ChaCha20Rng::seed_from_u64(0x5CA1A2);
        // Toy curve: every scalar in and beyond the group order.
        let c = toy();
        for k in 0u8..=42 {
            let k = BigUint::from(k);
            assert_eq!(c.mul_unchecked(&k, &c.generator), c.mul_affine_reference(&k, &c.generator));
        }
        // Production curve: sampled scalars, including boundary values.
        let c = p256();
        let mut scalars: Vec<BigUint> = (0..12)
            .map(|_| c.random_scalar(&mut rng).unwrap().value().clone())
            .collect();
        scalars.push(BigUint::one());
        scalars.push(BigUint::from(2u8));
        scalars.push(&c.group_order - BigUint::one());
        for k in &scalars {
            assert_eq!(
                c.mul_unchecked(k, &c.generator),
                c.mul_affine_reference(k, &c.generator),
                "scalar {k}"
            );
        }
    }

    #[test]
    fn group_law_is_commutative_and_associative() {
        // Exhaustive over the toy group.
        let c = toy();
        let points: Vec<Point> = (0u8..19)
            .map(|k| c.mul_unchecked(&BigUint::from(k), &c.generator))
            .collect();
        for p in &points {
            for q in &points {
                assert_eq!(c.add_unchecked(p, q), c.add_unchecked(q, p));
            }
        }
        for p in &points {
            for q in &points {
                for r in points.iter().step_by(3) {
                    let left = c.add_unchecked(&c.add_unchecked(p, q), r);
                    let right = c.add_unchecked(p, &c.add_unchecked(q, r));
                    assert_eq!(left, right);
                }
            }
        }
        // Sampled on the production curve.
        let c = p256();
        let mut rng = ChaCha20Rng::seed_from_u64(0xAB5);
        for _ in 0..8 {
            let p = c.scalar_mul_base(&c.random_scalar(&mut rng).unwrap());
            let q = c.scalar_mul_base(&c.random_scalar(&mut rng).unwrap());
            let r = c.scalar_mul_base(&c.random_scalar(&mut rng).unwrap());
            assert_eq!(c.add_unchecked(&p, &q), c.add_unchecked(&q, &p));
            assert_eq!(
                c.add_unchecked(&c.add_unchecked(&p, &q), &r),
                c.add_unchecked(&p, &c.add_unchecked(&q, &r))
            );
        }
    }

    #[test]
    fn scalar_mul_distributes_over_scalar_addition() {
        let c = toy();
        let mut rng = ChaCha20Rng::seed_from_u64(0xD157);
        for _ in 0..1000 {
            let a = c.random_scalar(&mut rng).unwrap();
            let b = c.random_scalar(&mut rng).unwrap();
            let sum = c.scalar_add(&a, &b);
            let lhs = c.scalar_mul_base(&sum);
            let rhs = c
                .point_add(&c.scalar_mul_base(&a), &c.scalar_mul_base(&b))
                .unwrap();
            assert_eq!(lhs, rhs);
        }
        let c = p256();
        for _ in 0..6 {
            let a = c.random_scalar(&mut rng).unwrap();
            let b = c.random_scalar(&mut rng).unwrap();
            let sum = c.scalar_add(&a, &b);
            assert_eq!(
                c.scalar_mul_base(&sum),
                c.point_add(&c.scalar_mul_base(&a), &c.scalar_mul_base(&b))
                    .unwrap()
            );
        }
    }

    #[test]
    fn scalar_arithmetic_wraps_modulo_group_order() {
        let c = toy();
        let a = c.scalar_from_biguint(BigUint::from(15u8)).unwrap();
        let b = c.scalar_from_biguint(BigUint::from(10u8)).unwrap();
        assert_eq!(c.scalar_add(&a, &b).value(), &BigUint::from(6u8));
        assert_eq!(c.scalar_mul_mod(&a, &b).value(), &BigUint::from(17u8));
        assert_eq!(
            c.scalar_from_biguint(BigUint::from(19u8)),
            Err(EcError::ScalarRange)
        );
        assert_eq!(
            c.scalar_reduce(&BigUint::from(40u8)).value(),
            &BigUint::from(2u8)
        );
    }
}
