//! Quaternion and pose algebra plus head-relative direction-of-arrival.
//!
//! Head frame: x forward, y left, z up (right-handed). A [`Pose`]
//! orientation `q` maps head-frame vectors into the room frame, so a room
//! vector is expressed in head coordinates with `rotate(q⁻¹, v)`.

use core::f64::consts::PI;
use core::ops::Mul;

use crate::error::bail;
use crate::math;
use crate::Result;

pub type Vec3 = [f64; 3];

pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

pub fn norm(a: Vec3) -> f64 {
    math::sqrt(dot(a, a))
}

pub fn lerp(a: Vec3, b: Vec3, s: f64) -> Vec3 {
    add(a, scale(sub(b, a), s))
}

/// Angle between two non-zero vectors in degrees, in `[0, 180]`.
pub fn angle_deg(a: Vec3, b: Vec3) -> f64 {
    // atan2 form stays accurate for nearly parallel vectors
    math::atan2(norm(cross(a, b)), dot(a, b)).to_degrees()
}

/// Rotation quaternion, scalar first.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Default for Quat {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Mul for Quat {
    type Output = Quat;

    /// Hamilton product, renormalized.
    fn mul(self, r: Quat) -> Quat {
        Quat {
            w: self.w * r.w - self.x * r.x - self.y * r.y - self.z * r.z,
            x: self.w * r.x + self.x * r.w + self.y * r.z - self.z * r.y,
            y: self.w * r.y - self.x * r.z + self.y * r.w + self.z * r.x,
            z: self.w * r.z + self.x * r.y - self.y * r.x + self.z * r.w,
        }
        .normalized()
    }
}

impl Quat {
    pub const IDENTITY: Quat = Quat { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    pub fn norm(&self) -> f64 {
        math::sqrt(self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z)
    }

    pub fn normalized(self) -> Self {
        let n = self.norm();
        Self { w: self.w / n, x: self.x / n, y: self.y / n, z: self.z / n }
    }

    pub fn conj(self) -> Self {
        Self { w: self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    /// Inverse of a unit quaternion.
    pub fn inverse(self) -> Self {
        self.conj()
    }

    pub fn dot(&self, o: &Quat) -> f64 {
        self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn vector(&self) -> Vec3 {
        [self.x, self.y, self.z]
    }

    /// Picks the representative of `{q, -q}` with a non-negative scalar part.
    pub fn canonical(self) -> Self {
        if self.w < 0.0 {
            Self { w: -self.w, x: -self.x, y: -self.y, z: -self.z }
        } else {
            self
        }
    }

    pub fn from_axis_angle(axis: Vec3, angle_rad: f64) -> Self {
        let n = norm(axis);
        if n == 0.0 || angle_rad == 0.0 {
            return Self::IDENTITY;
        }
        let s = math::sin(angle_rad / 2.0) / n;
        Self { w: math::cos(angle_rad / 2.0), x: axis[0] * s, y: axis[1] * s, z: axis[2] * s }.normalized()
    }

    /// Rotation vector (axis · angle) of the canonical representative.
    pub fn to_rotation_vector(self) -> Vec3 {
        let q = self.canonical();
        let v = q.vector();
        let s = norm(v);
        if s < 1e-12 {
            // first order: angle·axis ≈ 2·vec
            return scale(v, 2.0);
        }
        let angle = 2.0 * math::atan2(s, q.w);
        scale(v, angle / s)
    }

    /// Intrinsic Z-Y-X (yaw, pitch, roll) Euler angles in radians.
    pub fn from_yaw_pitch_roll(yaw: f64, pitch: f64, roll: f64) -> Self {
        Self::from_axis_angle([0.0, 0.0, 1.0], yaw)
            * Self::from_axis_angle([0.0, 1.0, 0.0], pitch)
            * Self::from_axis_angle([1.0, 0.0, 0.0], roll)
    }

    /// Yaw (rotation about z) of the forward axis, radians.
    pub fn yaw(&self) -> f64 {
        let f = self.rotate_unchecked([1.0, 0.0, 0.0]);
        math::atan2(f[1], f[0])
    }

    /// Quaternion of a proper rotation matrix given as rows.
    pub fn from_matrix(m: [[f64; 3]; 3]) -> Self {
        let tr = m[0][0] + m[1][1] + m[2][2];
        let q = if tr > 0.0 {
            let s = math::sqrt(tr + 1.0) * 2.0;
            Quat::new(0.25 * s, (m[2][1] - m[1][2]) / s, (m[0][2] - m[2][0]) / s, (m[1][0] - m[0][1]) / s)
        } else if m[0][0] > m[1][1] && m[0][0] > m[2][2] {
            let s = math::sqrt(1.0 + m[0][0] - m[1][1] - m[2][2]) * 2.0;
            Quat::new((m[2][1] - m[1][2]) / s, 0.25 * s, (m[0][1] + m[1][0]) / s, (m[0][2] + m[2][0]) / s)
        } else if m[1][1] > m[2][2] {
            let s = math::sqrt(1.0 + m[1][1] - m[0][0] - m[2][2]) * 2.0;
            Quat::new((m[0][2] - m[2][0]) / s, (m[0][1] + m[1][0]) / s, 0.25 * s, (m[1][2] + m[2][1]) / s)
        } else {
            let s = math::sqrt(1.0 + m[2][2] - m[0][0] - m[1][1]) * 2.0;
            Quat::new((m[1][0] - m[0][1]) / s, (m[0][2] + m[2][0]) / s, (m[1][2] + m[2][1]) / s, 0.25 * s)
        };
        q.normalized().canonical()
    }

    pub(crate) fn rotate_unchecked(&self, v: Vec3) -> Vec3 {
        // v' = v + 2w(u×v) + 2u×(u×v)
        let u = self.vector();
        let t = scale(cross(u, v), 2.0);
        add(add(v, scale(t, self.w)), cross(u, t))
    }

    /// Shortest-path spherical interpolation, `s ∈ [0, 1]`.
    pub fn slerp(self, other: Quat, s: f64) -> Quat {
        let mut b = other;
        let mut d = self.dot(&other);
        if d < 0.0 {
            b = Quat::new(-b.w, -b.x, -b.y, -b.z);
            d = -d;
        }
        if d > 1.0 - 1e-12 {
            let lin = Quat::new(
                self.w + s * (b.w - self.w),
                self.x + s * (b.x - self.x),
                self.y + s * (b.y - self.y),
                self.z + s * (b.z - self.z),
            );
            return lin.normalized().canonical();
        }
        let theta = math::acos(d.min(1.0));
        let st = math::sin(theta);
        let (ka, kb) = (math::sin((1.0 - s) * theta) / st, math::sin(s * theta) / st);
        Quat::new(ka * self.w + kb * b.w, ka * self.x + kb * b.x, ka * self.y + kb * b.y, ka * self.z + kb * b.z)
            .normalized()
            .canonical()
    }
}

/// Rotates `v` by the unit quaternion `q`.
pub fn rotate(q: Quat, v: Vec3) -> Result<Vec3> {
    let n = q.norm();
    if (n - 1.0).abs() > 1e-6 {
        bail!(Contract, "rotation quaternion has norm {n}");
    }
    Ok(q.rotate_unchecked(v))
}

/// Head position and orientation at time `t` (seconds).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Pose {
    pub t: f64,
    pub p: Vec3,
    pub q: Quat,
}

impl Pose {
    /// Builds a pose, renormalizing and canonicalizing the orientation.
    pub fn new(t: f64, p: Vec3, q: Quat) -> Self {
        Self { t, p, q: q.normalized().canonical() }
    }

    /// Head-frame offset expressed in room coordinates.
    pub fn to_room(&self, offset: Vec3) -> Vec3 {
        add(self.p, self.q.rotate_unchecked(offset))
    }
}

/// Unit direction of arrival in the head frame.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DoaVector(Vec3);

impl DoaVector {
    /// Normalizes a non-zero vector.
    pub fn new(v: Vec3) -> Result<Self> {
        let n = norm(v);
        if !(n > 1e-12) || !n.is_finite() {
            bail!(DegenerateGeometry, "cannot normalize direction {:?}", v);
        }
        Ok(Self(scale(v, 1.0 / n)))
    }

    pub fn from_az_el_deg(az: f64, el: f64) -> Self {
        let (a, e) = (az.to_radians(), el.to_radians());
        Self([math::cos(e) * math::cos(a), math::cos(e) * math::sin(a), math::sin(e)])
    }

    pub fn vector(&self) -> Vec3 {
        self.0
    }

    /// Azimuth in degrees, counter-clockwise from forward (left positive).
    pub fn azimuth_deg(&self) -> f64 {
        math::atan2(self.0[1], self.0[0]).to_degrees()
    }

    pub fn elevation_deg(&self) -> f64 {
        math::asin(self.0[2].clamp(-1.0, 1.0)).to_degrees()
    }

    pub fn angle_to_deg(&self, other: &DoaVector) -> f64 {
        angle_deg(self.0, other.0)
    }
}

/// Direction of a room-frame source as seen from the head.
pub fn to_head_frame(source: Vec3, head: &Pose) -> Result<DoaVector> {
    let rel = sub(source, head.p);
    if norm(rel) <= 1e-6 {
        bail!(DegenerateGeometry, "source {:?} coincides with head position {:?}", source, head.p);
    }
    DoaVector::new(rotate(head.q.inverse(), rel)?)
}

/// Positions of the three head trackers in the head frame, centroid at the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrackerLayout {
    points: [Vec3; 3],
}

impl Default for TrackerLayout {
    /// Equilateral triangle with 10 cm sides in the horizontal plane, one
    /// vertex pointing forward.
    fn default() -> Self {
        Self::equilateral(0.10)
    }
}

impl TrackerLayout {
    pub fn equilateral(side: f64) -> Self {
        let r = side / math::sqrt(3.0);
        let pt = |deg: f64| {
            let a = deg.to_radians();
            [r * math::cos(a), r * math::sin(a), 0.0]
        };
        Self { points: [pt(0.0), pt(120.0), pt(240.0)] }
    }

    /// Arbitrary layout; it is re-centred on its centroid.
    pub fn new(points: [Vec3; 3]) -> Result<Self> {
        frame_of(points)?;
        let c = centroid(points);
        Ok(Self { points: points.map(|p| sub(p, c)) })
    }

    pub fn points(&self) -> [Vec3; 3] {
        self.points
    }

    /// Tracker positions in the room for a given head pose.
    pub fn place(&self, pose: &Pose) -> [Vec3; 3] {
        self.points.map(|p| pose.to_room(p))
    }
}

fn centroid(p: [Vec3; 3]) -> Vec3 {
    scale(add(add(p[0], p[1]), p[2]), 1.0 / 3.0)
}

/// Orthonormal frame (as matrix columns e1, e2, n) spanned by a triangle.
fn frame_of(p: [Vec3; 3]) -> Result<[Vec3; 3]> {
    let e1 = sub(p[1], p[0]);
    let nrm = cross(e1, sub(p[2], p[0]));
    let area = 0.5 * norm(nrm);
    if area <= 1e-8 {
        bail!(DegenerateGeometry, "tracker triangle area {area:e} m² is too small (collinear trackers)");
    }
    let e1 = scale(e1, 1.0 / norm(e1));
    let n = scale(nrm, 1.0 / norm(nrm));
    Ok([e1, cross(n, e1), n])
}

/// Head pose from three observed tracker positions: the position is their
/// centroid and the orientation aligns the reference layout with them.
pub fn pose_from_trackers(t: f64, a: Vec3, b: Vec3, c: Vec3, layout: &TrackerLayout) -> Result<Pose> {
    let obs = frame_of([a, b, c])?;
    let refr = frame_of(layout.points)?;
    // R = F_obs · F_refᵀ with frames stored as columns
    let mut m = [[0.0; 3]; 3];
    for (i, row) in m.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (0..3).map(|k| obs[k][i] * refr[k][j]).sum();
        }
    }
    Ok(Pose::new(t, centroid([a, b, c]), Quat::from_matrix(m)))
}

/// Body-frame angular velocity (rad/s) taking `q_prev` to `q_next` in `dt`.
///
/// Uses the axis-angle of `q_prev⁻¹ ⊗ q_next` after sign canonicalization, so
/// the result's norm is exactly the relative rotation angle over `dt`.
pub fn angular_velocity(q_prev: Quat, q_next: Quat, dt: f64) -> Result<Vec3> {
    if !(dt > 0.0) {
        bail!(Contract, "time step must be positive, got {dt}");
    }
    let rel = (q_prev.inverse() * q_next).canonical();
    Ok(scale(rel.to_rotation_vector(), 1.0 / dt))
}

/// Wraps an angle in degrees to `(-180, 180]`.
pub fn wrap_deg(a: f64) -> f64 {
    let mut x = a % 360.0;
    if x > 180.0 {
        x -= 360.0;
    } else if x <= -180.0 {
        x += 360.0;
    }
    x
}

pub(crate) const DEG: f64 = PI / 180.0;
