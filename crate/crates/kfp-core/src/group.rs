//! Galilean group operations, anisotropic dilations, and invariant boxes.
//!
//! Phase-space/time points z = (v, x, t) in R^n x R^n x R compose by the
//! non-commutative law
//!
//! ```text
//! (v0, x0, t0) o (v, x, t) = (v + v0, x0 + x + t*v0, t0 + t),
//! ```
//!
//! and scale by the anisotropic dilation d_r(v, x, t) = (r v, r^3 x, r^2 t).
//! The kinetic operator `d/dt + v.grad_x - div_v(A grad_v)` is invariant under
//! left translations by this law, which is why every box used by the Harnack
//! machinery is an image `z0 o d_r(cube)`.

use serde::de::{self, SeqAccess, Visitor};
use serde::ser::SerializeSeq;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{CoreError, Result};

/// A point z = (v, x, t) of the phase space-time, acting as a group element.
///
/// `v` and `x` must have the same length n >= 1 and all coordinates must be
/// finite.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupPoint {
    v: Vec<f64>,
    x: Vec<f64>,
    t: f64,
}

impl GroupPoint {
    pub fn new(v: Vec<f64>, x: Vec<f64>, t: f64) -> Result<Self> {
        if v.is_empty() {
            return Err(CoreError::Validation("dimension n must be >= 1".into()));
        }
        if v.len() != x.len() {
            return Err(CoreError::DimensionMismatch {
                left: v.len(),
                right: x.len(),
            });
        }
        if !t.is_finite() || v.iter().chain(x.iter()).any(|c| !c.is_finite()) {
            return Err(CoreError::NonFinite {
                what: "group point",
            });
        }
        Ok(Self { v, x, t })
    }

    /// Convenience constructor for n = 1.
    pub fn scalar(v: f64, x: f64, t: f64) -> Self {
        Self::new(vec![v], vec![x], t).expect("finite scalar point")
    }

    /// The identity element (0, 0, 0) of dimension n.
    pub fn identity(n: usize) -> Self {
        Self {
            v: vec![0.0; n],
            x: vec![0.0; n],
            t: 0.0,
        }
    }

    pub fn n(&self) -> usize {
        self.v.len()
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    /// Flat coordinate view `[v..., x..., t]`, matching the wire format.
    pub fn coords(&self) -> Vec<f64> {
        let mut c = Vec::with_capacity(2 * self.n() + 1);
        c.extend_from_slice(&self.v);
        c.extend_from_slice(&self.x);
        c.push(self.t);
        c
    }

    pub fn from_coords(c: &[f64]) -> Result<Self> {
        if c.len() < 3 || c.len() % 2 == 0 {
            return Err(CoreError::Validation(format!(
                "expected odd coordinate count 2n+1 >= 3, got {}",
                c.len()
            )));
        }
        let n = c.len() / 2;
        Self::new(c[..n].to_vec(), c[n..2 * n].to_vec(), c[2 * n])
    }

    fn check_dim(&self, other: &GroupPoint) -> Result<()> {
        if self.n() != other.n() {
            return Err(CoreError::DimensionMismatch {
                left: self.n(),
                right: other.n(),
            });
        }
        Ok(())
    }

    /// Componentwise maximum absolute difference, for tests and tolerances.
    pub fn max_abs_diff(&self, other: &GroupPoint) -> f64 {
        self.coords()
            .iter()
            .zip(other.coords())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

// Points serialize as the flat JSON array [v..., x..., t].
impl Serialize for GroupPoint {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let c = self.coords();
        let mut seq = serializer.serialize_seq(Some(c.len()))?;
        for value in c {
            seq.serialize_element(&value)?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for GroupPoint {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct PointVisitor;
        impl<'de> Visitor<'de> for PointVisitor {
            type Value = GroupPoint;
            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a flat array [v..., x..., t] of odd length >= 3")
            }
            fn visit_seq<A: SeqAccess<'de>>(
                self,
                mut seq: A,
            ) -> std::result::Result<GroupPoint, A::Error> {
                let mut c = Vec::new();
                while let Some(value) = seq.next_element::<f64>()? {
                    c.push(value);
                }
                GroupPoint::from_coords(&c).map_err(de::Error::custom)
            }
        }
        deserializer.deserialize_seq(PointVisitor)
    }
}

/// Composition z0 o z = (v + v0, x0 + x + t*v0, t0 + t).
pub fn compose(z0: &GroupPoint, z: &GroupPoint) -> Result<GroupPoint> {
    z0.check_dim(z)?;
    let n = z0.n();
    let mut v = vec![0.0; n];
    let mut x = vec![0.0; n];
    for j in 0..n {
        v[j] = z.v[j] + z0.v[j];
        x[j] = z0.x[j] + z.x[j] + z.t * z0.v[j];
    }
    GroupPoint::new(v, x, z0.t + z.t)
}

/// Group inverse z^{-1} = (-v, t*v - x, -t), so that z o z^{-1} = identity.
pub fn inverse(z: &GroupPoint) -> GroupPoint {
    let n = z.n();
    let mut v = vec![0.0; n];
    let mut x = vec![0.0; n];
    for j in 0..n {
        v[j] = -z.v[j];
        x[j] = z.t * z.v[j] - z.x[j];
    }
    GroupPoint {
        v,
        x,
        t: -z.t,
    }
}

/// Anisotropic dilation d_r(v, x, t) = (r v, r^3 x, r^2 t), r > 0.
pub fn dilate(r: f64, z: &GroupPoint) -> Result<GroupPoint> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(CoreError::InvalidScale(r));
    }
    let r3 = r * r * r;
    let r2 = r * r;
    Ok(GroupPoint {
        v: z.v.iter().map(|&c| r * c).collect(),
        x: z.x.iter().map(|&c| r3 * c).collect(),
        t: r2 * z.t,
    })
}

/// The constants of the one-box Harnack inequality and of the chain step rule.
///
/// `m` is the Harnack constant M > 1; `r` in ]0,1[ and `delta` locate the
/// sub-boxes Q+ = Q_R and Q- = Q_R(0,0,-Delta) inside the unit box, under the
/// constraint 0 < R^2 < Delta < Delta + R^2 < 1; `s` in ]0,R[ sizes the
/// compact slice K^-; `h` > 0 is the control-energy threshold under which a
/// curve step is guaranteed to land in K^-.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarnackConstants {
    #[serde(rename = "M")]
    pub m: f64,
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "Delta")]
    pub delta: f64,
    #[serde(rename = "S")]
    pub s: f64,
    #[serde(rename = "h")]
    pub h: f64,
}

impl HarnackConstants {
    pub fn new(m: f64, r: f64, delta: f64, s: f64, h: f64) -> Result<Self> {
        let c = Self { m, r, delta, s, h };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let Self { m, r, delta, s, h } = *self;
        if !(m > 1.0) {
            return Err(CoreError::InvalidConstants(format!("M must be > 1, got {m}")));
        }
        if !(r > 0.0 && r < 1.0) {
            return Err(CoreError::InvalidConstants(format!(
                "R must lie in ]0,1[, got {r}"
            )));
        }
        let r2 = r * r;
        if !(r2 < delta && delta + r2 < 1.0) {
            return Err(CoreError::InvalidConstants(format!(
                "need 0 < R^2 < Delta < Delta + R^2 < 1, got R^2 = {r2}, Delta = {delta}"
            )));
        }
        if !(s > 0.0 && s < r) {
            return Err(CoreError::InvalidConstants(format!(
                "S must lie in ]0,R[, got S = {s}, R = {r}"
            )));
        }
        if !(h > 0.0) {
            return Err(CoreError::InvalidConstants(format!("h must be > 0, got {h}")));
        }
        Ok(())
    }

    /// Defaults R = 0.5, Delta = 0.5, S = 0.25 with a caller-chosen M and the
    /// conservative closed-form energy threshold for h (see
    /// [`crate::chain::energy_threshold_bound`] and the empirical calibration
    /// in [`crate::chain::derive_h`]).
    pub fn with_defaults(m: f64) -> Result<Self> {
        let (r, delta, s) = (0.5, 0.5, 0.25);
        let h = crate::chain::energy_threshold_bound(r, delta, s);
        Self::new(m, r, delta, s, h)
    }
}

/// The box families used by the Harnack machinery.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoxKind {
    /// Q_r(z0) = z0 o d_r Q with Q = ]-1,1[^n x ]-1,1[^n x ]-1,0[ (open).
    #[serde(rename = "UNIT_Q")]
    UnitQ,
    /// Same shear rule as Q but with the two-sided time window ]t0-r^2, t0+r^2[.
    #[serde(rename = "SYMMETRIC_Q")]
    SymmetricQ,
    /// z0 o d_r Q+ with Q+ = Q_R (upper Harnack box; open).
    #[serde(rename = "Q_PLUS")]
    QPlus,
    /// z0 o d_r Q- with Q- = Q_R(0, 0, -Delta) (lower Harnack box; open).
    #[serde(rename = "Q_MINUS")]
    QMinus,
    /// z0 o d_r K- with K- = [-S,S]^n x [-S^3,S^3]^n x {-(Delta + R^2/2)} (closed slice).
    #[serde(rename = "K_MINUS")]
    KMinus,
}

impl BoxKind {
    pub fn needs_constants(self) -> bool {
        matches!(self, BoxKind::QPlus | BoxKind::QMinus | BoxKind::KMinus)
    }

    pub fn name(self) -> &'static str {
        match self {
            BoxKind::UnitQ => "UNIT_Q",
            BoxKind::SymmetricQ => "SYMMETRIC_Q",
            BoxKind::QPlus => "Q_PLUS",
            BoxKind::QMinus => "Q_MINUS",
            BoxKind::KMinus => "K_MINUS",
        }
    }
}

/// A box `(base, radius, kind)`; membership is evaluated lazily from the
/// defining inequalities, never from materialized faces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSpec {
    pub base: GroupPoint,
    #[serde(rename = "r")]
    pub radius: f64,
    pub kind: BoxKind,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub constants: Option<HarnackConstants>,
}

impl BoxSpec {
    pub fn new(
        base: GroupPoint,
        radius: f64,
        kind: BoxKind,
        constants: Option<HarnackConstants>,
    ) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(CoreError::InvalidScale(radius));
        }
        if kind.needs_constants() {
            match constants {
                None => {
                    return Err(CoreError::MissingConstants { kind: kind.name() });
                }
                Some(c) => c.validate()?,
            }
        }
        Ok(Self {
            base,
            radius,
            kind,
            constants,
        })
    }

    /// The open unit box Q at the origin (n-dimensional velocity/position).
    pub fn unit(n: usize) -> Self {
        Self {
            base: GroupPoint::identity(n),
            radius: 1.0,
            kind: BoxKind::UnitQ,
            constants: None,
        }
    }

    pub fn n(&self) -> usize {
        self.base.n()
    }

    fn constants(&self) -> Result<&HarnackConstants> {
        self.constants
            .as_ref()
            .ok_or(CoreError::MissingConstants {
                kind: self.kind.name(),
            })
    }

    /// Membership test with strict boundaries (`eps = 0`).
    pub fn contains(&self, z: &GroupPoint) -> Result<bool> {
        self.contains_with_tolerance(z, 0.0)
    }

    /// Membership with a signed boundary tolerance.
    ///
    /// Positive `eps` enlarges every face by `eps` (so `eps > 0` accepts the
    /// closure), negative `eps` shrinks the box. Q-type boxes are open, K^- is
    /// closed; with the default `eps = 0` the comparisons are strict `<` for
    /// the open kinds and `<=` for K^-.
    pub fn contains_with_tolerance(&self, z: &GroupPoint, eps: f64) -> Result<bool> {
        self.base.check_dim(z)?;
        let z0 = &self.base;
        let r = self.radius;
        let dt = z.t - z0.t;
        // Shear-corrected position offset relative to the base drift line.
        let shear =
            |j: usize| -> f64 { z.x[j] - z0.x[j] - dt * z0.v[j] };

        let open_lt = |value: f64, bound: f64| value < bound + eps;
        let closed_le = |value: f64, bound: f64| value <= bound + eps;

        match self.kind {
            BoxKind::UnitQ | BoxKind::SymmetricQ => {
                let r3 = r * r * r;
                let r2 = r * r;
                for j in 0..self.n() {
                    if !open_lt((z.v[j] - z0.v[j]).abs(), r) {
                        return Ok(false);
                    }
                    if !open_lt(shear(j).abs(), r3) {
                        return Ok(false);
                    }
                }
                let (lo, hi) = match self.kind {
                    BoxKind::UnitQ => (z0.t - r2, z0.t),
                    _ => (z0.t - r2, z0.t + r2),
                };
                Ok(open_lt(lo, z.t) && open_lt(z.t, hi))
            }
            BoxKind::QPlus | BoxKind::QMinus => {
                let c = self.constants()?;
                // z0 o d_r Q_R (resp. z0 o d_r Q_R(0,0,-Delta)) is again a
                // plain Q-box of radius rho = r*R; only the time window moves.
                let rho = r * c.r;
                let rho3 = rho * rho * rho;
                for j in 0..self.n() {
                    if !open_lt((z.v[j] - z0.v[j]).abs(), rho) {
                        return Ok(false);
                    }
                    if !open_lt(shear(j).abs(), rho3) {
                        return Ok(false);
                    }
                }
                let top = match self.kind {
                    BoxKind::QPlus => z0.t,
                    _ => z0.t - r * r * c.delta,
                };
                Ok(open_lt(top - rho * rho, z.t) && open_lt(z.t, top))
            }
            BoxKind::KMinus => {
                let c = self.constants()?;
                let slice_t = z0.t - r * r * (c.delta + c.r * c.r / 2.0);
                if (z.t - slice_t).abs() > eps.max(0.0) {
                    return Ok(false);
                }
                let vs = r * c.s;
                let xs = r * r * r * c.s * c.s * c.s;
                for j in 0..self.n() {
                    if !closed_le((z.v[j] - z0.v[j]).abs(), vs) {
                        return Ok(false);
                    }
                    // Shear correction against the slice time, same rule.
                    let sh = z.x[j] - z0.x[j] - (z.t - z0.t) * z0.v[j];
                    if !closed_le(sh.abs(), xs) {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
        }
    }

    /// Vertices of the closure: images of the defining cube's corners under
    /// `z0 o d_r(.)`. Q-type boxes have 2^(2n+1) vertices; the K^- slice has
    /// 2^(2n).
    pub fn corners(&self) -> Result<Vec<GroupPoint>> {
        let n = self.n();
        let c = if self.kind.needs_constants() {
            Some(*self.constants()?)
        } else {
            None
        };

        // Describe the corner cube in pre-dilation coordinates.
        let (v_half, x_half, t_values): (f64, f64, Vec<f64>) = match self.kind {
            BoxKind::UnitQ => (1.0, 1.0, vec![-1.0, 0.0]),
            BoxKind::SymmetricQ => (1.0, 1.0, vec![-1.0, 1.0]),
            BoxKind::QPlus => {
                let c = c.unwrap();
                (c.r, c.r * c.r * c.r, vec![-c.r * c.r, 0.0])
            }
            BoxKind::QMinus => {
                let c = c.unwrap();
                let r2 = c.r * c.r;
                (c.r, c.r * r2, vec![-c.delta - r2, -c.delta])
            }
            BoxKind::KMinus => {
                let c = c.unwrap();
                (
                    c.s,
                    c.s * c.s * c.s,
                    vec![-(c.delta + c.r * c.r / 2.0)],
                )
            }
        };

        let mut out = Vec::new();
        let sign_count = 1usize << (2 * n);
        for t_cube in &t_values {
            for mask in 0..sign_count {
                let mut v = vec![0.0; n];
                let mut x = vec![0.0; n];
                for j in 0..n {
                    v[j] = if mask & (1 << j) != 0 { v_half } else { -v_half };
                    x[j] = if mask & (1 << (n + j)) != 0 {
                        x_half
                    } else {
                        -x_half
                    };
                }
                let cube_corner = GroupPoint::new(v, x, *t_cube)?;
                out.push(compose(&self.base, &dilate(self.radius, &cube_corner)?)?);
            }
        }
        Ok(out)
    }
}
