//! Rotation/translation error metrics and the composite training losses,
//! with analytic gradients with respect to raw network output vectors.
//!
//! All arccos arguments are clamped to [-1, 1]. Inside a guard band of
//! `GRAD_GUARD` around the endpoints the gradient is defined as 0 and the
//! evaluation is flagged, since the true derivative diverges there.

use crate::geom3::{self, PoseSE3, ReprTag, RotationMatrix, Translation, UnitQuaternion};
use thiserror::Error;

/// Width of the arccos-endpoint band inside which gradients are zeroed.
pub const GRAD_GUARD: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum LossError {
    #[error(transparent)]
    Geom(#[from] geom3::GeomError),
    #[error("translation direction undefined: |t_est| = {norm_est:.3e}, |t_gt| = {norm_gt:.3e}")]
    UndefinedDirection { norm_est: f64, norm_gt: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, LossError>;

/// Translation error choice for the quaternion pose loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TranslationMode {
    /// Metric Euclidean distance in meters.
    EuclideanM,
    /// Scale-invariant angle between translation directions, radians.
    DirectionRad,
}

/// Weighting and translation-mode configuration shared by the composite
/// losses.
#[derive(Debug, Clone, Copy)]
pub struct LossConfig {
    /// Weight on the translation term.
    pub alpha: f64,
    pub translation_mode: TranslationMode,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            translation_mode: TranslationMode::EuclideanM,
        }
    }
}

fn clamp_unit(x: f64) -> f64 {
    x.clamp(-1.0, 1.0)
}

fn check_rotation(r: &RotationMatrix, what: &'static str) -> Result<()> {
    let m = r.matrix();
    let defect = (m.transpose() * m - nalgebra::Matrix3::identity()).norm();
    if !defect.is_finite() || defect > 1e-6 {
        return Err(LossError::InvalidArgument(format!(
            "{what} is not a rotation (orthogonality defect {defect:.3e})"
        )));
    }
    Ok(())
}

/// Minimum rotation angle aligning two rotations:
/// arccos(clamp((tr(R_est^T R_gt) - 1) / 2)), in [0, pi].
pub fn geodesic_distance(r_est: &RotationMatrix, r_gt: &RotationMatrix) -> Result<f64> {
    check_rotation(r_est, "r_est")?;
    check_rotation(r_gt, "r_gt")?;
    let tr = (r_est.matrix().transpose() * r_gt.matrix()).trace();
    Ok(clamp_unit((tr - 1.0) / 2.0).acos())
}

/// Angular distance on the quaternion hypersphere, double-cover aware:
/// 2 arccos(clamp(|q_est . q_gt|)), in [0, pi].
pub fn quaternion_error(q_est: &UnitQuaternion, q_gt: &UnitQuaternion) -> Result<f64> {
    for (q, what) in [(q_est, "q_est"), (q_gt, "q_gt")] {
        let n = q.dot(q).sqrt();
        if !n.is_finite() || (n - 1.0).abs() > 1e-9 {
            return Err(LossError::InvalidArgument(format!(
                "{what} is not a unit quaternion (norm {n:.9})"
            )));
        }
    }
    let a = q_est.dot(q_gt).abs();
    Ok(2.0 * a.clamp(0.0, 1.0).acos())
}

/// Metric distance between translation vectors in meters.
pub fn euclidean_translation_error(t_est: &Translation, t_gt: &Translation) -> f64 {
    (t_est.vector() - t_gt.vector()).norm()
}

/// Angle between translation directions, scale-invariant.
pub fn translation_direction_error(t_est: &Translation, t_gt: &Translation) -> Result<f64> {
    let (ne, ng) = (t_est.norm(), t_gt.norm());
    if ne <= 1e-9 || ng <= 1e-9 {
        return Err(LossError::UndefinedDirection {
            norm_est: ne,
            norm_gt: ng,
        });
    }
    let c = t_est.vector().dot(&t_gt.vector()) / (ne * ng);
    Ok(clamp_unit(c).acos())
}

/// Geodesic rotation error plus alpha-weighted Euclidean translation error.
pub fn universal_loss(pred: &PoseSE3, gt: &PoseSE3, cfg: &LossConfig) -> Result<f64> {
    let rot = geodesic_distance(&pred.rotation, &gt.rotation)?;
    let trans = euclidean_translation_error(&pred.translation, &gt.translation);
    Ok(rot + cfg.alpha * trans)
}

/// Geodesic rotation error plus alpha-weighted translation direction error.
pub fn reloc3r_loss(pred: &PoseSE3, gt: &PoseSE3, cfg: &LossConfig) -> Result<f64> {
    let rot = geodesic_distance(&pred.rotation, &gt.rotation)?;
    let dir = translation_direction_error(&pred.translation, &gt.translation)?;
    Ok(rot + cfg.alpha * dir)
}

/// Mean squared error over a flat output vector: ||y_est - y_gt||^2 / d.
pub fn mse_loss(y_est: &[f64], y_gt: &[f64]) -> Result<f64> {
    if y_est.len() != y_gt.len() || y_est.is_empty() {
        return Err(LossError::InvalidArgument(format!(
            "mse over mismatched lengths {} vs {}",
            y_est.len(),
            y_gt.len()
        )));
    }
    let d = y_est.len() as f64;
    Ok(y_est
        .iter()
        .zip(y_gt)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / d)
}

/// Quaternion rotation error plus alpha-weighted translation error, with the
/// translation term selected by `cfg.translation_mode`.
pub fn quaternion_pose_loss(
    q_est: &UnitQuaternion,
    t_est: &Translation,
    q_gt: &UnitQuaternion,
    t_gt: &Translation,
    cfg: &LossConfig,
) -> Result<f64> {
    let rot = quaternion_error(q_est, q_gt)?;
    let trans = match cfg.translation_mode {
        TranslationMode::EuclideanM => euclidean_translation_error(t_est, t_gt),
        TranslationMode::DirectionRad => translation_direction_error(t_est, t_gt)?,
    };
    Ok(rot + cfg.alpha * trans)
}

/// Arithmetic-mean batch reduction of a per-pair loss.
pub fn batch_mean(per_item: &[f64]) -> Result<f64> {
    if per_item.is_empty() {
        return Err(LossError::InvalidArgument("empty batch".into()));
    }
    Ok(per_item.iter().sum::<f64>() / per_item.len() as f64)
}

/// How the forward and inverse direction losses of a bidirectional head are
/// combined into one training objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairReduction {
    Sum,
    Mean,
}

pub fn combine_bidirectional(forward: f64, inverse: f64, reduction: PairReduction) -> f64 {
    match reduction {
        PairReduction::Sum => forward + inverse,
        PairReduction::Mean => 0.5 * (forward + inverse),
    }
}

/// Loss selected by string id in training configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Universal,
    Reloc3r,
    Mse,
    QuatPoseMetric,
    QuatPoseDirection,
}

impl LossKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::Universal => "universal",
            LossKind::Reloc3r => "reloc3r",
            LossKind::Mse => "mse",
            LossKind::QuatPoseMetric => "quat_pose_metric",
            LossKind::QuatPoseDirection => "quat_pose_direction",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "universal" => Ok(LossKind::Universal),
            "reloc3r" => Ok(LossKind::Reloc3r),
            "mse" => Ok(LossKind::Mse),
            "quat_pose_metric" => Ok(LossKind::QuatPoseMetric),
            "quat_pose_direction" => Ok(LossKind::QuatPoseDirection),
            other => Err(LossError::InvalidArgument(format!(
                "unknown loss id `{other}`"
            ))),
        }
    }

    /// Representation tag the raw-gradient path of this loss is defined on.
    /// MSE accepts every tag; the quaternion losses require the quaternion
    /// head and the matrix-decomposition losses the matrix head.
    pub fn supports_tag(self, tag: ReprTag) -> bool {
        match self {
            LossKind::Mse => true,
            LossKind::QuatPoseMetric | LossKind::QuatPoseDirection => tag == ReprTag::Quat,
            LossKind::Universal | LossKind::Reloc3r => tag == ReprTag::Matrix,
        }
    }
}

/// Loss value together with its gradient with respect to the raw output
/// vector. `clamped` is set when any arccos argument fell inside the
/// endpoint guard band and its gradient contribution was zeroed.
#[derive(Debug, Clone)]
pub struct LossEval {
    pub value: f64,
    pub grad: Vec<f64>,
    pub clamped: bool,
}

fn quat_error_value_grad(q_raw: &[f64], q_gt: &UnitQuaternion) -> (f64, [f64; 4], bool) {
    let g = q_gt.as_array();
    let n = q_raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    let qh: Vec<f64> = q_raw.iter().map(|v| v / n).collect();
    let s: f64 = qh.iter().zip(g.iter()).map(|(a, b)| a * b).sum();
    let a = clamp_unit(s.abs());
    let value = 2.0 * a.acos();
    if a >= 1.0 - GRAD_GUARD {
        return (value, [0.0; 4], true);
    }
    let sign = if s >= 0.0 { 1.0 } else { -1.0 };
    let de_da = -2.0 / (1.0 - a * a).sqrt();
    let mut grad = [0.0; 4];
    for i in 0..4 {
        // d a / d q = sign * (g - s qh) / n  (projection through normalization)
        grad[i] = de_da * sign * (g[i] - s * qh[i]) / n;
    }
    (value, grad, false)
}

fn euclid_value_grad(t_est: &[f64], t_gt: &Translation) -> (f64, [f64; 3]) {
    let g = [t_gt.tx, t_gt.ty, t_gt.tz];
    let d: Vec<f64> = t_est.iter().zip(g.iter()).map(|(a, b)| a - b).collect();
    let e = d.iter().map(|v| v * v).sum::<f64>().sqrt();
    if e <= 1e-12 {
        return (e, [0.0; 3]);
    }
    (e, [d[0] / e, d[1] / e, d[2] / e])
}

fn direction_value_grad(t_est: &[f64], t_gt: &Translation) -> Result<(f64, [f64; 3], bool)> {
    let g = [t_gt.tx, t_gt.ty, t_gt.tz];
    let ne = t_est.iter().map(|v| v * v).sum::<f64>().sqrt();
    let ng = t_gt.norm();
    if ne <= 1e-9 || ng <= 1e-9 {
        return Err(LossError::UndefinedDirection {
            norm_est: ne,
            norm_gt: ng,
        });
    }
    let ue: Vec<f64> = t_est.iter().map(|v| v / ne).collect();
    let ug: Vec<f64> = g.iter().map(|v| v / ng).collect();
    let c = clamp_unit(ue.iter().zip(ug.iter()).map(|(a, b)| a * b).sum());
    let value = c.acos();
    if c.abs() >= 1.0 - GRAD_GUARD {
        return Ok((value, [0.0; 3], true));
    }
    let de_dc = -1.0 / (1.0 - c * c).sqrt();
    let mut grad = [0.0; 3];
    for i in 0..3 {
        grad[i] = de_dc * (ug[i] - c * ue[i]) / ne;
    }
    Ok((value, grad, false))
}

fn geodesic_raw_value_grad(m_raw: &[f64], r_gt: &RotationMatrix) -> (f64, [f64; 9], bool) {
    let g = r_gt.flatten();
    // tr(M^T R_gt) is the elementwise dot product of the two 3x3 blocks
    let tr: f64 = m_raw.iter().zip(g.iter()).map(|(a, b)| a * b).sum();
    let c = clamp_unit((tr - 1.0) / 2.0);
    let value = c.acos();
    if c.abs() >= 1.0 - GRAD_GUARD {
        return (value, [0.0; 9], true);
    }
    let de_dc = -1.0 / (1.0 - c * c).sqrt();
    let mut grad = [0.0; 9];
    for i in 0..9 {
        grad[i] = de_dc * g[i] / 2.0;
    }
    (value, grad, false)
}

/// Evaluates the selected loss and its analytic gradient with respect to the
/// raw output vector `raw` (rotation block in the `tag` layout followed by
/// translation). The ground truth is given as a pose; MSE compares against
/// its canonical flattening.
pub fn loss_value_grad(
    kind: LossKind,
    raw: &[f64],
    tag: ReprTag,
    gt: &PoseSE3,
    cfg: &LossConfig,
) -> Result<LossEval> {
    if !kind.supports_tag(tag) {
        return Err(LossError::InvalidArgument(format!(
            "loss `{}` has no raw-output gradient for representation `{}`",
            kind.as_str(),
            tag.as_str()
        )));
    }
    if raw.len() != tag.pose_dim() {
        return Err(LossError::InvalidArgument(format!(
            "raw vector length {} does not match representation `{}` ({} expected)",
            raw.len(),
            tag.as_str(),
            tag.pose_dim()
        )));
    }
    if !raw.iter().all(|v| v.is_finite()) {
        return Err(LossError::InvalidArgument("non-finite raw output".into()));
    }

    match kind {
        LossKind::Mse => {
            let y_gt = geom3::flatten_pose(gt, tag)?;
            let d = raw.len() as f64;
            let value = mse_loss(raw, &y_gt)?;
            let grad = raw
                .iter()
                .zip(y_gt.iter())
                .map(|(a, b)| 2.0 * (a - b) / d)
                .collect();
            Ok(LossEval {
                value,
                grad,
                clamped: false,
            })
        }
        LossKind::QuatPoseMetric | LossKind::QuatPoseDirection => {
            let q_gt = geom3::matrix_to_quat(&gt.rotation)?;
            let (rot_v, rot_g, rot_clamped) = quat_error_value_grad(&raw[..4], &q_gt);
            let mode = if kind == LossKind::QuatPoseMetric {
                TranslationMode::EuclideanM
            } else {
                TranslationMode::DirectionRad
            };
            let (tr_v, tr_g, tr_clamped) = match mode {
                TranslationMode::EuclideanM => {
                    let (v, g) = euclid_value_grad(&raw[4..], &gt.translation);
                    (v, g, false)
                }
                TranslationMode::DirectionRad => direction_value_grad(&raw[4..], &gt.translation)?,
            };
            let mut grad = Vec::with_capacity(7);
            grad.extend_from_slice(&rot_g);
            grad.extend(tr_g.iter().map(|v| cfg.alpha * v));
            Ok(LossEval {
                value: rot_v + cfg.alpha * tr_v,
                grad,
                clamped: rot_clamped || tr_clamped,
            })
        }
        LossKind::Universal | LossKind::Reloc3r => {
            let (rot_v, rot_g, rot_clamped) = geodesic_raw_value_grad(&raw[..9], &gt.rotation);
            let (tr_v, tr_g, tr_clamped) = match kind {
                LossKind::Universal => {
                    let (v, g) = euclid_value_grad(&raw[9..], &gt.translation);
                    (v, g, false)
                }
                _ => direction_value_grad(&raw[9..], &gt.translation)?,
            };
            let mut grad = Vec::with_capacity(12);
            grad.extend_from_slice(&rot_g);
            grad.extend(tr_g.iter().map(|v| cfg.alpha * v));
            Ok(LossEval {
                value: rot_v + cfg.alpha * tr_v,
                grad,
                clamped: rot_clamped || tr_clamped,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom3::testutil::{random_pose, random_quat, random_rotation};
    use crate::geom3::{rot_x, RotationVector};
    use approx::assert_abs_diff_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn geodesic_examples() {
        let id = RotationMatrix::identity();
        assert_eq!(geodesic_distance(&id, &id).unwrap(), 0.0);
        let rx_pi = RotationMatrix::try_new(rot_x(PI)).unwrap();
        assert_abs_diff_eq!(geodesic_distance(&id, &rx_pi).unwrap(), PI, epsilon = 1e-12);
        let a = RotationMatrix::try_new(rot_x(0.2)).unwrap();
        let b = RotationMatrix::try_new(rot_x(0.5)).unwrap();
        assert_abs_diff_eq!(geodesic_distance(&a, &b).unwrap(), 0.3, epsilon = 1e-12);
    }

    #[test]
    fn quaternion_error_examples() {
        let mut rng = StdRng::seed_from_u64(31);
        let q = random_quat(&mut rng);
        assert_eq!(quaternion_error(&q, &q).unwrap(), 0.0);
        let neg = UnitQuaternion {
            w: -q.w,
            x: -q.x,
            y: -q.y,
            z: -q.z,
        };
        assert_eq!(quaternion_error(&q, &neg).unwrap(), 0.0);
    }

    #[test]
    fn quaternion_error_matches_geodesic() {
        let mut rng = StdRng::seed_from_u64(32);
        for _ in 0..10_000 {
            let q1 = random_quat(&mut rng);
            let q2 = random_quat(&mut rng);
            let e_q = quaternion_error(&q1, &q2).unwrap();
            let e_g = geodesic_distance(
                &crate::geom3::quat_to_matrix(&q1).unwrap(),
                &crate::geom3::quat_to_matrix(&q2).unwrap(),
            )
            .unwrap();
            assert!((e_q - e_g).abs() < 1e-9, "gap {}", (e_q - e_g).abs());
        }
    }

    #[test]
    fn geodesic_bi_invariance() {
        let mut rng = StdRng::seed_from_u64(33);
        for _ in 0..1000 {
            let q = random_rotation(&mut rng);
            let r1 = random_rotation(&mut rng);
            let r2 = random_rotation(&mut rng);
            let d0 = geodesic_distance(&r1, &r2).unwrap();
            let qr1 = RotationMatrix::try_new(q.matrix() * r1.matrix()).unwrap();
            let qr2 = RotationMatrix::try_new(q.matrix() * r2.matrix()).unwrap();
            let d1 = geodesic_distance(&qr1, &qr2).unwrap();
            assert!((d0 - d1).abs() < 1e-9);
        }
    }

    #[test]
    fn metric_symmetry() {
        let mut rng = StdRng::seed_from_u64(34);
        for _ in 0..200 {
            let r1 = random_rotation(&mut rng);
            let r2 = random_rotation(&mut rng);
            assert!(
                (geodesic_distance(&r1, &r2).unwrap() - geodesic_distance(&r2, &r1).unwrap())
                    .abs()
                    < 1e-12
            );
            let t1 = Translation::new(rng.gen(), rng.gen(), rng.gen());
            let t2 = Translation::new(rng.gen(), rng.gen(), rng.gen());
            assert_eq!(
                euclidean_translation_error(&t1, &t2),
                euclidean_translation_error(&t2, &t1)
            );
            let q1 = random_quat(&mut rng);
            let q2 = random_quat(&mut rng);
            assert!(
                (quaternion_error(&q1, &q2).unwrap() - quaternion_error(&q2, &q1).unwrap()).abs()
                    < 1e-15
            );
        }
    }

    #[test]
    fn euclidean_examples() {
        let t = Translation::new(1.0, -2.0, 0.5);
        assert_eq!(euclidean_translation_error(&t, &t), 0.0);
        assert_eq!(
            euclidean_translation_error(
                &Translation::zero(),
                &Translation::new(3.0, 4.0, 0.0)
            ),
            5.0
        );
        let mut rng = StdRng::seed_from_u64(35);
        for _ in 0..100 {
            let a = Translation::new(rng.gen(), rng.gen(), rng.gen());
            let b = Translation::new(rng.gen(), rng.gen(), rng.gen());
            let oracle = ((a.tx - b.tx).powi(2) + (a.ty - b.ty).powi(2) + (a.tz - b.tz).powi(2))
                .sqrt();
            assert_abs_diff_eq!(euclidean_translation_error(&a, &b), oracle, epsilon = 1e-15);
        }
    }

    #[test]
    fn direction_examples() {
        let t = Translation::new(0.4, 0.1, -0.2);
        let t2 = Translation::new(0.8, 0.2, -0.4);
        assert!(translation_direction_error(&t, &t2).unwrap() < 1e-9);
        let ex = Translation::new(1.0, 0.0, 0.0);
        let ey = Translation::new(0.0, 1.0, 0.0);
        assert_abs_diff_eq!(
            translation_direction_error(&ex, &ey).unwrap(),
            FRAC_PI_2,
            epsilon = 1e-15
        );
        let neg = Translation::new(-1.0, 0.0, 0.0);
        assert_abs_diff_eq!(
            translation_direction_error(&ex, &neg).unwrap(),
            PI,
            epsilon = 1e-15
        );
        assert!(matches!(
            translation_direction_error(&Translation::zero(), &ex),
            Err(LossError::UndefinedDirection { .. })
        ));
    }

    #[test]
    fn universal_loss_examples() {
        let cfg = LossConfig::default();
        let mut rng = StdRng::seed_from_u64(36);
        let p = random_pose(&mut rng);
        assert!(universal_loss(&p, &p, &cfg).unwrap() < 1e-9);
        let gt = PoseSE3::new(
            RotationMatrix::try_new(rot_x(PI)).unwrap(),
            Translation::zero(),
        );
        assert_abs_diff_eq!(
            universal_loss(&PoseSE3::identity(), &gt, &cfg).unwrap(),
            PI,
            epsilon = 1e-9
        );
        // batch of two items is the arithmetic mean
        let a = universal_loss(&PoseSE3::identity(), &gt, &cfg).unwrap();
        let b = universal_loss(&p, &p, &cfg).unwrap();
        assert_abs_diff_eq!(
            batch_mean(&[a, b]).unwrap(),
            (a + b) / 2.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn reloc3r_loss_examples() {
        let cfg = LossConfig::default();
        let gt = PoseSE3::new(
            RotationMatrix::identity(),
            Translation::new(0.0, 1.0, 0.0),
        );
        let pred = PoseSE3::new(
            RotationMatrix::identity(),
            Translation::new(1.0, 0.0, 0.0),
        );
        assert_abs_diff_eq!(
            reloc3r_loss(&pred, &gt, &cfg).unwrap(),
            FRAC_PI_2,
            epsilon = 1e-12
        );
        let scaled = PoseSE3::new(
            RotationMatrix::identity(),
            Translation::new(0.0, 3.0, 0.0),
        );
        assert!(reloc3r_loss(&scaled, &gt, &cfg).unwrap() < 1e-9);
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse_loss(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 1.0);
        // quaternion representation: divisor is exactly 7
        let y = vec![0.0; 7];
        let mut g = vec![0.0; 7];
        g[0] = 7.0f64.sqrt();
        assert_abs_diff_eq!(mse_loss(&y, &g).unwrap(), 1.0, epsilon = 1e-12);
        assert!(mse_loss(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn quaternion_pose_loss_examples() {
        let cfg = LossConfig::default();
        let mut rng = StdRng::seed_from_u64(37);
        let q = random_quat(&mut rng);
        let t = Translation::new(0.1, 0.2, 0.3);
        // identical inputs sit at the arccos conditioning floor (~1e-8)
        assert!(quaternion_pose_loss(&q, &t, &q, &t, &cfg).unwrap() < 1e-7);
        let neg = UnitQuaternion {
            w: -q.w,
            x: -q.x,
            y: -q.y,
            z: -q.z,
        };
        assert!(quaternion_pose_loss(&neg, &t, &q, &t, &cfg).unwrap() < 1e-7);
        // e_rot = 0.1, e_trans = 0.05 m, alpha = 1 -> 0.15
        let q_gt = UnitQuaternion::identity();
        let q_est = UnitQuaternion::try_new((0.05f64).cos(), (0.05f64).sin(), 0.0, 0.0).unwrap();
        let t_est = Translation::new(0.05, 0.2, 0.3);
        let t_gt = Translation::new(0.0, 0.2, 0.3);
        assert_abs_diff_eq!(
            quaternion_pose_loss(&q_est, &t_est, &q_gt, &t_gt, &cfg).unwrap(),
            0.15,
            epsilon = 1e-12
        );
    }

    #[test]
    fn composite_zero_iff_components_zero() {
        let cfg = LossConfig::default();
        let mut rng = StdRng::seed_from_u64(38);
        for _ in 0..100 {
            let gt = random_pose(&mut rng);
            let rot_off = PoseSE3::new(
                RotationMatrix::try_new(gt.rotation.matrix() * rot_x(0.01)).unwrap(),
                gt.translation,
            );
            assert!(universal_loss(&rot_off, &gt, &cfg).unwrap() > 1e-4);
            let t_off = PoseSE3::new(
                gt.rotation,
                Translation::new(gt.translation.tx + 0.01, gt.translation.ty, gt.translation.tz),
            );
            assert!(universal_loss(&t_off, &gt, &cfg).unwrap() > 1e-4);
        }
    }

    #[test]
    fn arccos_boundary_fuzz_is_finite() {
        let mut rng = StdRng::seed_from_u64(39);
        let cfg = LossConfig::default();
        for _ in 0..100_000 {
            let q = random_quat(&mut rng);
            // nudge into a nearly identical quaternion so the dot product
            // lands within float noise of +-1
            let eps = 1e-9 * (rng.gen::<f64>() - 0.5);
            let raw = [q.w + eps, q.x, q.y, q.z];
            let q2 = crate::geom3::normalize_quat(&raw).unwrap();
            let e = quaternion_error(&q, &q2).unwrap();
            assert!(e.is_finite());
            let r = crate::geom3::quat_to_matrix(&q).unwrap();
            let r2 = crate::geom3::quat_to_matrix(&q2).unwrap();
            assert!(geodesic_distance(&r, &r2).unwrap().is_finite());
            let t = Translation::new(1.0, eps, 0.0);
            let t2 = Translation::new(1.0, 0.0, eps.abs());
            assert!(translation_direction_error(&t, &t2).unwrap().is_finite());
            let ev = loss_value_grad(
                LossKind::QuatPoseMetric,
                &[q.w, q.x, q.y, q.z, 0.1, 0.2, 0.3],
                ReprTag::Quat,
                &PoseSE3::new(
                    crate::geom3::quat_to_matrix(&q2).unwrap(),
                    Translation::new(0.1, 0.2, 0.3),
                ),
                &cfg,
            )
            .unwrap();
            assert!(ev.value.is_finite());
            assert!(ev.grad.iter().all(|g| g.is_finite()));
        }
    }

    fn finite_diff_check(
        kind: LossKind,
        raw: &[f64],
        tag: ReprTag,
        gt: &PoseSE3,
        cfg: &LossConfig,
    ) {
        let eval = loss_value_grad(kind, raw, tag, gt, cfg).unwrap();
        assert!(!eval.clamped, "test point must be away from clamp");
        let h = 1e-5;
        for i in 0..raw.len() {
            let mut plus = raw.to_vec();
            plus[i] += h;
            let mut minus = raw.to_vec();
            minus[i] -= h;
            let fp = loss_value_grad(kind, &plus, tag, gt, cfg).unwrap().value;
            let fm = loss_value_grad(kind, &minus, tag, gt, cfg).unwrap().value;
            let fd = (fp - fm) / (2.0 * h);
            let denom = fd.abs().max(eval.grad[i].abs()).max(1e-4);
            let rel = (fd - eval.grad[i]).abs() / denom;
            assert!(
                rel < 1e-5,
                "{:?} component {i}: analytic {} vs fd {} (rel {rel:.2e})",
                kind,
                eval.grad[i],
                fd
            );
        }
    }

    #[test]
    fn mse_gradient_zero_at_optimum() {
        let mut rng = StdRng::seed_from_u64(40);
        let gt = random_pose(&mut rng);
        let y = crate::geom3::flatten_pose(&gt, ReprTag::Quat).unwrap();
        let ev = loss_value_grad(LossKind::Mse, &y, ReprTag::Quat, &gt, &LossConfig::default())
            .unwrap();
        assert!(ev.value < 1e-18);
        assert!(ev.grad.iter().all(|g| g.abs() < 1e-12));
    }

    #[test]
    fn loss_gradients_match_finite_differences() {
        let mut rng = StdRng::seed_from_u64(41);
        let cfg = LossConfig::default();
        for _ in 0..100 {
            let gt = random_pose(&mut rng);
            // raw quaternion away from both the optimum and the antipode
            let raw_q: Vec<f64> = (0..7)
                .map(|i| {
                    if i < 4 {
                        rng.gen::<f64>() * 2.0 - 1.0
                    } else {
                        rng.gen::<f64>() - 0.5
                    }
                })
                .collect();
            let qn = raw_q[..4].iter().map(|v| v * v).sum::<f64>().sqrt();
            if qn < 0.3 {
                continue;
            }
            let probe = loss_value_grad(LossKind::QuatPoseMetric, &raw_q, ReprTag::Quat, &gt, &cfg)
                .unwrap();
            let t_dist = {
                let d = [
                    raw_q[4] - gt.translation.tx,
                    raw_q[5] - gt.translation.ty,
                    raw_q[6] - gt.translation.tz,
                ];
                (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
            };
            if probe.clamped || probe.value < 1e-3 || t_dist < 1e-3 {
                continue;
            }
            finite_diff_check(LossKind::QuatPoseMetric, &raw_q, ReprTag::Quat, &gt, &cfg);
            if raw_q[4..].iter().map(|v| v * v).sum::<f64>().sqrt() > 1e-2 {
                finite_diff_check(LossKind::QuatPoseDirection, &raw_q, ReprTag::Quat, &gt, &cfg);
            }
            finite_diff_check(LossKind::Mse, &raw_q, ReprTag::Quat, &gt, &cfg);

            let mut raw_m: Vec<f64> = (0..12).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
            // keep the matrix block well inside the arccos domain
            for v in raw_m[..9].iter_mut() {
                *v *= 0.4;
            }
            let probe_m =
                loss_value_grad(LossKind::Universal, &raw_m, ReprTag::Matrix, &gt, &cfg).unwrap();
            if probe_m.clamped {
                continue;
            }
            finite_diff_check(LossKind::Universal, &raw_m, ReprTag::Matrix, &gt, &cfg);
            if raw_m[9..].iter().map(|v| v * v).sum::<f64>().sqrt() > 1e-2 {
                finite_diff_check(LossKind::Reloc3r, &raw_m, ReprTag::Matrix, &gt, &cfg);
            }
        }
    }

    #[test]
    fn direction_gradient_orthogonal_to_estimate() {
        let mut rng = StdRng::seed_from_u64(42);
        for _ in 0..100 {
            let t_est = [
                rng.gen::<f64>() + 0.1,
                rng.gen::<f64>() - 0.5,
                rng.gen::<f64>() - 0.5,
            ];
            let t_gt = Translation::new(rng.gen::<f64>() + 0.1, rng.gen(), rng.gen());
            let (_, grad, clamped) = direction_value_grad(&t_est, &t_gt).unwrap();
            if clamped {
                continue;
            }
            let dot: f64 = grad.iter().zip(t_est.iter()).map(|(a, b)| a * b).sum();
            assert!(dot.abs() < 1e-9, "radial component {dot}");
        }
    }

    #[test]
    fn clamped_evaluation_flags_and_zeroes() {
        let cfg = LossConfig::default();
        let gt = PoseSE3::identity();
        let raw = [1.0, 0.0, 0.0, 0.0, 0.5, 0.0, 0.0];
        let ev = loss_value_grad(LossKind::QuatPoseMetric, &raw, ReprTag::Quat, &gt, &cfg).unwrap();
        assert!(ev.clamped);
        assert!(ev.grad[..4].iter().all(|g| *g == 0.0));
    }

    #[test]
    fn unsupported_pairing_is_rejected() {
        let gt = PoseSE3::identity();
        let err = loss_value_grad(
            LossKind::Universal,
            &[0.0; 7],
            ReprTag::Quat,
            &gt,
            &LossConfig::default(),
        );
        assert!(matches!(err, Err(LossError::InvalidArgument(_))));
    }

    #[test]
    fn rotation_vector_repr_mse_gradient() {
        // rotvec heads train through plain MSE; check the chain end to end
        let mut rng = StdRng::seed_from_u64(43);
        let gt = random_pose(&mut rng);
        let raw: Vec<f64> = (0..6).map(|_| rng.gen::<f64>() - 0.5).collect();
        finite_diff_check(LossKind::Mse, &raw, ReprTag::RotVec, &gt, &LossConfig::default());
        let _ = RotationVector::new(raw[0], raw[1], raw[2]);
    }
}
