//! SO(3)/SE(3) types, rotation output representations, and relative-pose
//! algebra.
//!
//! Five interchangeable rotation parameterizations are supported: rotation
//! vector (axis-angle), intrinsic ZYX Euler angles, extrinsic XYZ Euler
//! angles, unit quaternion, and the raw 3x3 rotation matrix. All internal
//! arithmetic is f64; angles are radians and translations are meters.

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

/// Small-angle cutoff below which Rodrigues coefficients switch to their
/// second-order Taylor expansions.
pub const SMALL_ANGLE: f64 = 1e-6;

/// Frobenius tolerance for the orthogonality and determinant checks on
/// rotation-matrix construction.
pub const SO3_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum GeomError {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("matrix is not in SO(3): orthogonality defect {ortho:.3e}, det {det:.9}")]
    NotRotation { ortho: f64, det: f64 },
    #[error("quaternion norm {0:.3e} is not 1")]
    NotUnitQuaternion(f64),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, GeomError>;

/// Proper rotation: orthogonal 3x3 matrix with determinant +1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix {
    m: Matrix3<f64>,
}

impl RotationMatrix {
    pub fn identity() -> Self {
        Self {
            m: Matrix3::identity(),
        }
    }

    /// Validates the SO(3) invariants (orthogonality and det = +1, both
    /// within `SO3_TOL`) before wrapping.
    pub fn try_new(m: Matrix3<f64>) -> Result<Self> {
        if !m.iter().all(|v| v.is_finite()) {
            return Err(GeomError::NonFinite("rotation matrix"));
        }
        let ortho = (m.transpose() * m - Matrix3::identity()).norm();
        let det = m.determinant();
        if ortho > SO3_TOL || (det - 1.0).abs() > SO3_TOL {
            return Err(GeomError::NotRotation { ortho, det });
        }
        Ok(Self { m })
    }

    /// Wraps without validation. Only for matrices produced by operations
    /// that preserve SO(3) membership by construction.
    pub(crate) fn new_unchecked(m: Matrix3<f64>) -> Self {
        Self { m }
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    /// Row-major flattening r11..r33.
    pub fn flatten(&self) -> [f64; 9] {
        let m = &self.m;
        [
            m[(0, 0)],
            m[(0, 1)],
            m[(0, 2)],
            m[(1, 0)],
            m[(1, 1)],
            m[(1, 2)],
            m[(2, 0)],
            m[(2, 1)],
            m[(2, 2)],
        ]
    }

    pub fn from_flat(v: &[f64; 9]) -> Result<Self> {
        Self::try_new(Matrix3::from_row_slice(v))
    }

    pub fn transpose(&self) -> Self {
        Self {
            m: self.m.transpose(),
        }
    }
}

/// Unit quaternion in scalar-first [w, x, y, z] order with the canonical
/// sign convention w >= 0 (and first nonzero of x, y, z positive at w = 0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitQuaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl UnitQuaternion {
    pub fn identity() -> Self {
        Self {
            w: 1.0,
            x: 0.0,
            y: 0.0,
            z: 0.0,
        }
    }

    /// Requires unit norm within 1e-9; renormalizes the residual and applies
    /// the canonical sign.
    pub fn try_new(w: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if !n.is_finite() {
            return Err(GeomError::NonFinite("quaternion"));
        }
        if (n - 1.0).abs() > 1e-9 {
            return Err(GeomError::NotUnitQuaternion(n));
        }
        Ok(Self {
            w: w / n,
            x: x / n,
            y: y / n,
            z: z / n,
        }
        .canonicalized())
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
    }

    /// Flips the sign so that w >= 0; ties on w = 0 resolved by the first
    /// nonzero vector component.
    pub fn canonicalized(mut self) -> Self {
        let flip = if self.w != 0.0 {
            self.w < 0.0
        } else if self.x != 0.0 {
            self.x < 0.0
        } else if self.y != 0.0 {
            self.y < 0.0
        } else {
            self.z < 0.0
        };
        if flip {
            self.w = -self.w;
            self.x = -self.x;
            self.y = -self.y;
            self.z = -self.z;
        }
        self
    }
}

/// Axis-angle rotation vector; direction is the axis, magnitude the angle in
/// radians. Canonical form has magnitude <= pi.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationVector {
    pub wx: f64,
    pub wy: f64,
    pub wz: f64,
}

impl RotationVector {
    pub fn new(wx: f64, wy: f64, wz: f64) -> Self {
        Self { wx, wy, wz }
    }

    pub fn vector(&self) -> Vector3<f64> {
        Vector3::new(self.wx, self.wy, self.wz)
    }

    pub fn angle(&self) -> f64 {
        self.vector().norm()
    }
}

/// Intrinsic ZYX Euler angles (yaw alpha, pitch beta, roll gamma), applied
/// about the moving axes z, then y', then x''.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerIntrinsicZYX {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

/// Extrinsic XYZ Euler angles about the fixed global axes, applied x (gamma),
/// then y (beta), then z (alpha). Stored in application order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerExtrinsicXYZ {
    pub gamma: f64,
    pub beta: f64,
    pub alpha: f64,
}

/// Translation in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Translation {
    pub tx: f64,
    pub ty: f64,
    pub tz: f64,
}

impl Translation {
    pub fn zero() -> Self {
        Self {
            tx: 0.0,
            ty: 0.0,
            tz: 0.0,
        }
    }

    pub fn new(tx: f64, ty: f64, tz: f64) -> Self {
        Self { tx, ty, tz }
    }

    pub fn vector(&self) -> Vector3<f64> {
        Vector3::new(self.tx, self.ty, self.tz)
    }

    pub fn from_vector(v: Vector3<f64>) -> Self {
        Self {
            tx: v.x,
            ty: v.y,
            tz: v.z,
        }
    }

    pub fn norm(&self) -> f64 {
        self.vector().norm()
    }
}

/// Rigid transform: rotation followed by translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseSE3 {
    pub rotation: RotationMatrix,
    pub translation: Translation,
}

impl PoseSE3 {
    pub fn identity() -> Self {
        Self {
            rotation: RotationMatrix::identity(),
            translation: Translation::zero(),
        }
    }

    pub fn new(rotation: RotationMatrix, translation: Translation) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    /// Applies the transform to a point: R p + t.
    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.matrix() * p + self.translation.vector()
    }
}

/// Tag selecting one of the five rotation parameterizations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReprTag {
    RotVec,
    EulerIntrinsic,
    EulerExtrinsic,
    Quat,
    Matrix,
}

impl ReprTag {
    pub const ALL: [ReprTag; 5] = [
        ReprTag::RotVec,
        ReprTag::EulerIntrinsic,
        ReprTag::EulerExtrinsic,
        ReprTag::Quat,
        ReprTag::Matrix,
    ];

    /// Length of the flattened rotation block (3 / 3 / 3 / 4 / 9).
    pub fn rotation_dim(self) -> usize {
        match self {
            ReprTag::RotVec | ReprTag::EulerIntrinsic | ReprTag::EulerExtrinsic => 3,
            ReprTag::Quat => 4,
            ReprTag::Matrix => 9,
        }
    }

    /// Length of the full output vector including the appended translation.
    pub fn pose_dim(self) -> usize {
        self.rotation_dim() + 3
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ReprTag::RotVec => "rotvec",
            ReprTag::EulerIntrinsic => "euler_int",
            ReprTag::EulerExtrinsic => "euler_ext",
            ReprTag::Quat => "quat",
            ReprTag::Matrix => "matrix",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "rotvec" => Ok(ReprTag::RotVec),
            "euler_int" => Ok(ReprTag::EulerIntrinsic),
            "euler_ext" => Ok(ReprTag::EulerExtrinsic),
            "quat" => Ok(ReprTag::Quat),
            "matrix" => Ok(ReprTag::Matrix),
            other => Err(GeomError::InvalidArgument(format!(
                "unknown representation tag `{other}` (expected rotvec, euler_int, euler_ext, quat, matrix)"
            ))),
        }
    }
}

/// Tagged rotation value holding exactly one of the five parameterizations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RotationRepr {
    RotVec(RotationVector),
    EulerIntrinsic(EulerIntrinsicZYX),
    EulerExtrinsic(EulerExtrinsicXYZ),
    Quat(UnitQuaternion),
    Matrix(RotationMatrix),
}

impl RotationRepr {
    pub fn tag(&self) -> ReprTag {
        match self {
            RotationRepr::RotVec(_) => ReprTag::RotVec,
            RotationRepr::EulerIntrinsic(_) => ReprTag::EulerIntrinsic,
            RotationRepr::EulerExtrinsic(_) => ReprTag::EulerExtrinsic,
            RotationRepr::Quat(_) => ReprTag::Quat,
            RotationRepr::Matrix(_) => ReprTag::Matrix,
        }
    }

    /// Flattened rotation block in the tag's layout ([alpha,beta,gamma] for
    /// intrinsic Euler, [gamma,beta,alpha] for extrinsic, [w,x,y,z] for
    /// quaternions, row-major r11..r33 for matrices).
    pub fn flatten(&self) -> Vec<f64> {
        match self {
            RotationRepr::RotVec(v) => vec![v.wx, v.wy, v.wz],
            RotationRepr::EulerIntrinsic(e) => vec![e.alpha, e.beta, e.gamma],
            RotationRepr::EulerExtrinsic(e) => vec![e.gamma, e.beta, e.alpha],
            RotationRepr::Quat(q) => q.as_array().to_vec(),
            RotationRepr::Matrix(r) => r.flatten().to_vec(),
        }
    }
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Single-axis rotation about x.
pub fn rot_x(theta: f64) -> Matrix3<f64> {
    let (s, c) = theta.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

/// Single-axis rotation about y.
pub fn rot_y(theta: f64) -> Matrix3<f64> {
    let (s, c) = theta.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

/// Single-axis rotation about z.
pub fn rot_z(theta: f64) -> Matrix3<f64> {
    let (s, c) = theta.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Exponential map R = I + (sin t / t) [w]x + ((1 - cos t) / t^2) [w]x^2,
/// with second-order Taylor coefficients below `SMALL_ANGLE`.
pub fn rodrigues_to_matrix(v: &RotationVector) -> Result<RotationMatrix> {
    let w = v.vector();
    if !w.iter().all(|x| x.is_finite()) {
        return Err(GeomError::NonFinite("rotation vector"));
    }
    let theta = w.norm();
    let (a, b) = if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        (1.0 - t2 / 6.0, 0.5 - t2 / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / (theta * theta))
    };
    let k = skew(&w);
    let m = Matrix3::identity() + a * k + b * (k * k);
    Ok(RotationMatrix::new_unchecked(m))
}

/// Logarithm map, inverse of `rodrigues_to_matrix`. Routed through the
/// quaternion extraction, which stays well conditioned at 180 degrees.
pub fn matrix_to_rotvec(r: &RotationMatrix) -> Result<RotationVector> {
    let q = matrix_to_quat(r)?;
    Ok(quat_to_rotvec(&q))
}

/// Axis-angle vector of a canonical unit quaternion; magnitude <= pi since
/// w >= 0.
pub fn quat_to_rotvec(q: &UnitQuaternion) -> RotationVector {
    let n = (q.x * q.x + q.y * q.y + q.z * q.z).sqrt();
    if n < 1e-12 {
        // theta ~ 2n, so axis*theta ~ 2*(x,y,z) up to O(n^3)
        return RotationVector::new(2.0 * q.x, 2.0 * q.y, 2.0 * q.z);
    }
    let theta = 2.0 * n.atan2(q.w);
    let s = theta / n;
    RotationVector::new(s * q.x, s * q.y, s * q.z)
}

/// Closed-form quaternion to rotation matrix map for scalar-first [w,x,y,z].
pub fn quat_to_matrix(q: &UnitQuaternion) -> Result<RotationMatrix> {
    let n = q.dot(q).sqrt();
    if (n - 1.0).abs() > 1e-9 {
        return Err(GeomError::NotUnitQuaternion(n));
    }
    let (w, x, y, z) = (q.w, q.x, q.y, q.z);
    let m = Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    );
    Ok(RotationMatrix::new_unchecked(m))
}

/// Shepperd-style extraction: evaluates the four candidates
/// {1+tr, 1+2r11-tr, 1+2r22-tr, 1+2r33-tr} and divides by the largest,
/// which keeps the division stable near 180-degree rotations.
pub fn matrix_to_quat(r: &RotationMatrix) -> Result<UnitQuaternion> {
    let m = r.matrix();
    let tr = m.trace();
    let c0 = 1.0 + tr;
    let c1 = 1.0 + 2.0 * m[(0, 0)] - tr;
    let c2 = 1.0 + 2.0 * m[(1, 1)] - tr;
    let c3 = 1.0 + 2.0 * m[(2, 2)] - tr;

    let (mut w, mut x, mut y, mut z);
    if c0 >= c1 && c0 >= c2 && c0 >= c3 {
        let s = c0.sqrt(); // 2w
        w = 0.5 * s;
        let inv = 0.5 / s;
        x = (m[(2, 1)] - m[(1, 2)]) * inv;
        y = (m[(0, 2)] - m[(2, 0)]) * inv;
        z = (m[(1, 0)] - m[(0, 1)]) * inv;
    } else if c1 >= c2 && c1 >= c3 {
        let s = c1.sqrt(); // 2x
        x = 0.5 * s;
        let inv = 0.5 / s;
        w = (m[(2, 1)] - m[(1, 2)]) * inv;
        y = (m[(0, 1)] + m[(1, 0)]) * inv;
        z = (m[(0, 2)] + m[(2, 0)]) * inv;
    } else if c2 >= c3 {
        let s = c2.sqrt(); // 2y
        y = 0.5 * s;
        let inv = 0.5 / s;
        w = (m[(0, 2)] - m[(2, 0)]) * inv;
        x = (m[(0, 1)] + m[(1, 0)]) * inv;
        z = (m[(1, 2)] + m[(2, 1)]) * inv;
    } else {
        let s = c3.sqrt(); // 2z
        z = 0.5 * s;
        let inv = 0.5 / s;
        w = (m[(1, 0)] - m[(0, 1)]) * inv;
        x = (m[(0, 2)] + m[(2, 0)]) * inv;
        y = (m[(1, 2)] + m[(2, 1)]) * inv;
    }

    let n = (w * w + x * x + y * y + z * z).sqrt();
    if !n.is_finite() || n < 1e-12 {
        return Err(GeomError::NotRotation {
            ortho: (m.transpose() * m - Matrix3::identity()).norm(),
            det: m.determinant(),
        });
    }
    w /= n;
    x /= n;
    y /= n;
    z /= n;
    Ok(UnitQuaternion { w, x, y, z }.canonicalized())
}

/// R = Rz(alpha) Ry(beta) Rx(gamma); successive rotation about the moving
/// z, y', x'' axes equals this fixed-axis product.
pub fn euler_intrinsic_to_matrix(e: &EulerIntrinsicZYX) -> Result<RotationMatrix> {
    if ![e.alpha, e.beta, e.gamma].iter().all(|v| v.is_finite()) {
        return Err(GeomError::NonFinite("euler angles"));
    }
    Ok(RotationMatrix::new_unchecked(
        rot_z(e.alpha) * rot_y(e.beta) * rot_x(e.gamma),
    ))
}

/// Fixed-axis rotations applied x (gamma), then y (beta), then z (alpha):
/// R = Rz(alpha) Ry(beta) Rx(gamma).
pub fn euler_extrinsic_to_matrix(e: &EulerExtrinsicXYZ) -> Result<RotationMatrix> {
    if ![e.alpha, e.beta, e.gamma].iter().all(|v| v.is_finite()) {
        return Err(GeomError::NonFinite("euler angles"));
    }
    Ok(RotationMatrix::new_unchecked(
        rot_z(e.alpha) * rot_y(e.beta) * rot_x(e.gamma),
    ))
}

fn wrap_half_open(a: f64) -> f64 {
    if a == -std::f64::consts::PI {
        std::f64::consts::PI
    } else {
        a
    }
}

/// Decomposes R = Rz(alpha) Ry(beta) Rx(gamma). Near the |beta| = pi/2
/// singularity (cos beta below 1e-7) only alpha - gamma is observable;
/// gamma is fixed to 0 there.
fn decompose_zyx(r: &RotationMatrix) -> (f64, f64, f64) {
    let m = r.matrix();
    let cb = m[(0, 0)].hypot(m[(1, 0)]);
    let beta = (-m[(2, 0)]).atan2(cb);
    if cb < 1e-7 {
        let alpha = (-m[(0, 1)]).atan2(m[(1, 1)]);
        (wrap_half_open(alpha), beta, 0.0)
    } else {
        let alpha = m[(1, 0)].atan2(m[(0, 0)]);
        let gamma = m[(2, 1)].atan2(m[(2, 2)]);
        (wrap_half_open(alpha), beta, wrap_half_open(gamma))
    }
}

pub fn matrix_to_euler_intrinsic(r: &RotationMatrix) -> EulerIntrinsicZYX {
    let (alpha, beta, gamma) = decompose_zyx(r);
    EulerIntrinsicZYX { alpha, beta, gamma }
}

pub fn matrix_to_euler_extrinsic(r: &RotationMatrix) -> EulerExtrinsicXYZ {
    let (alpha, beta, gamma) = decompose_zyx(r);
    EulerExtrinsicXYZ { gamma, beta, alpha }
}

/// Rotation angle of r1^T r2, evaluated through the quaternion difference
/// with atan2. Unlike the arccos-of-trace form this stays accurate down to
/// machine precision for nearly identical rotations, so it is the right
/// evaluator for round-trip error measurements.
pub fn rotation_angle_between(r1: &RotationMatrix, r2: &RotationMatrix) -> Result<f64> {
    let a = matrix_to_quat(r1)?;
    let b = matrix_to_quat(r2)?;
    // conj(a) * b
    let w = a.w * b.w + a.x * b.x + a.y * b.y + a.z * b.z;
    let x = a.w * b.x - a.x * b.w - a.y * b.z + a.z * b.y;
    let y = a.w * b.y + a.x * b.z - a.y * b.w - a.z * b.x;
    let z = a.w * b.z - a.x * b.y + a.y * b.x - a.z * b.w;
    let v = (x * x + y * y + z * z).sqrt();
    Ok(2.0 * v.atan2(w.abs()))
}

/// Nearest rotation in the Frobenius sense: from the SVD M = U S V^T,
/// R = U diag(1, 1, det(U V^T)) V^T, which enforces det = +1.
pub fn project_to_so3(m: &Matrix3<f64>) -> Result<RotationMatrix> {
    if !m.iter().all(|v| v.is_finite()) {
        return Err(GeomError::NonFinite("matrix"));
    }
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd with u requested");
    let v_t = svd.v_t.expect("svd with v_t requested");
    let sigma = svd.singular_values;
    if sigma[0] <= 0.0 || sigma[2] <= sigma[0] * 1e-12 {
        return Err(GeomError::Degenerate(format!(
            "rank-deficient matrix, singular values {:.3e} {:.3e} {:.3e}",
            sigma[0], sigma[1], sigma[2]
        )));
    }
    let d = (u * v_t).determinant();
    let s = if d < 0.0 { -1.0 } else { 1.0 };
    let correction = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, s));
    Ok(RotationMatrix::new_unchecked(u * correction * v_t))
}

/// Scales a raw 4-vector [w,x,y,z] to unit norm and canonical sign.
pub fn normalize_quat(raw: &[f64; 4]) -> Result<UnitQuaternion> {
    if !raw.iter().all(|v| v.is_finite()) {
        return Err(GeomError::NonFinite("quaternion"));
    }
    let n = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n <= 1e-12 {
        return Err(GeomError::Degenerate(format!(
            "quaternion norm {n:.3e} too small to normalize"
        )));
    }
    Ok(UnitQuaternion {
        w: raw[0] / n,
        x: raw[1] / n,
        y: raw[2] / n,
        z: raw[3] / n,
    }
    .canonicalized())
}

/// Pose of `view2` expressed in the frame of `reference`:
/// R_rel = R_ref^T R_2, t_rel = R_ref^T (t_2 - t_ref), so that
/// compose(reference, result) = view2.
pub fn relative_pose(reference: &PoseSE3, view2: &PoseSE3) -> PoseSE3 {
    let r_ref_t = reference.rotation.matrix().transpose();
    let r_rel = r_ref_t * view2.rotation.matrix();
    let t_rel = r_ref_t * (view2.translation.vector() - reference.translation.vector());
    PoseSE3 {
        rotation: RotationMatrix::new_unchecked(r_rel),
        translation: Translation::from_vector(t_rel),
    }
}

/// SE(3) group product: rotation Ra Rb, translation Ra tb + ta.
pub fn compose(a: &PoseSE3, b: &PoseSE3) -> PoseSE3 {
    let r = a.rotation.matrix() * b.rotation.matrix();
    let t = a.rotation.matrix() * b.translation.vector() + a.translation.vector();
    PoseSE3 {
        rotation: RotationMatrix::new_unchecked(r),
        translation: Translation::from_vector(t),
    }
}

/// SE(3) inverse: rotation R^T, translation -R^T t.
pub fn inverse(a: &PoseSE3) -> PoseSE3 {
    let r_t = a.rotation.matrix().transpose();
    let t = -(r_t * a.translation.vector());
    PoseSE3 {
        rotation: RotationMatrix::new_unchecked(r_t),
        translation: Translation::from_vector(t),
    }
}

/// Builds a pose from a tagged rotation payload and a translation.
pub fn repr_to_pose(r: &RotationRepr, t: &Translation) -> Result<PoseSE3> {
    let rotation = match r {
        RotationRepr::RotVec(v) => rodrigues_to_matrix(v)?,
        RotationRepr::EulerIntrinsic(e) => euler_intrinsic_to_matrix(e)?,
        RotationRepr::EulerExtrinsic(e) => euler_extrinsic_to_matrix(e)?,
        RotationRepr::Quat(q) => quat_to_matrix(q)?,
        RotationRepr::Matrix(m) => *m,
    };
    Ok(PoseSE3 {
        rotation,
        translation: *t,
    })
}

/// Converts a pose's rotation into the requested parameterization.
pub fn pose_to_repr(p: &PoseSE3, tag: ReprTag) -> Result<RotationRepr> {
    Ok(match tag {
        ReprTag::RotVec => RotationRepr::RotVec(matrix_to_rotvec(&p.rotation)?),
        ReprTag::EulerIntrinsic => {
            RotationRepr::EulerIntrinsic(matrix_to_euler_intrinsic(&p.rotation))
        }
        ReprTag::EulerExtrinsic => {
            RotationRepr::EulerExtrinsic(matrix_to_euler_extrinsic(&p.rotation))
        }
        ReprTag::Quat => RotationRepr::Quat(matrix_to_quat(&p.rotation)?),
        ReprTag::Matrix => RotationRepr::Matrix(p.rotation),
    })
}

/// Flattened output vector: rotation block in the tag's layout followed by
/// the translation [tx, ty, tz].
pub fn flatten_pose(p: &PoseSE3, tag: ReprTag) -> Result<Vec<f64>> {
    let repr = pose_to_repr(p, tag)?;
    let mut y = repr.flatten();
    y.extend_from_slice(&[p.translation.tx, p.translation.ty, p.translation.tz]);
    Ok(y)
}

/// Parses a flattened output vector back into a pose. Rotation payloads must
/// already be canonical (unit quaternion / SO(3) matrix within tolerance).
pub fn unflatten_pose(tag: ReprTag, y: &[f64]) -> Result<PoseSE3> {
    if y.len() != tag.pose_dim() {
        return Err(GeomError::InvalidArgument(format!(
            "expected {} components for tag {}, got {}",
            tag.pose_dim(),
            tag.as_str(),
            y.len()
        )));
    }
    let (rot, t) = y.split_at(tag.rotation_dim());
    let translation = Translation::new(t[0], t[1], t[2]);
    let repr = match tag {
        ReprTag::RotVec => RotationRepr::RotVec(RotationVector::new(rot[0], rot[1], rot[2])),
        ReprTag::EulerIntrinsic => RotationRepr::EulerIntrinsic(EulerIntrinsicZYX {
            alpha: rot[0],
            beta: rot[1],
            gamma: rot[2],
        }),
        ReprTag::EulerExtrinsic => RotationRepr::EulerExtrinsic(EulerExtrinsicXYZ {
            gamma: rot[0],
            beta: rot[1],
            alpha: rot[2],
        }),
        ReprTag::Quat => {
            RotationRepr::Quat(UnitQuaternion::try_new(rot[0], rot[1], rot[2], rot[3])?)
        }
        ReprTag::Matrix => RotationRepr::Matrix(RotationMatrix::from_flat(
            rot.try_into().expect("length checked above"),
        )?),
    };
    repr_to_pose(&repr, &translation)
}
