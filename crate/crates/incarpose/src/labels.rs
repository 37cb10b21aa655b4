//! Reference-relative target generation, marker-based ground-truth
//! derivation, and the marker-vs-reconstruction trajectory comparison.

use crate::geom3::{self, PoseSE3, RotationMatrix, Translation, UnitQuaternion};
use crate::losses;
use nalgebra::{Matrix4, Vector3};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabelError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("marker id mismatch: reference saw `{reference}`, query saw `{query}`")]
    MarkerMismatch { reference: String, query: String },
    #[error("trajectories share no image ids")]
    EmptyOverlap,
    #[error(transparent)]
    Geom(#[from] geom3::GeomError),
    #[error(transparent)]
    Loss(#[from] losses::LossError),
}

pub type Result<T> = std::result::Result<T, LabelError>;

/// One detected marker in one image: the camera-from-marker transform plus
/// the physical marker edge length that scaled it.
#[derive(Debug, Clone)]
pub struct MarkerObservation {
    pub image_id: String,
    pub marker_id: String,
    pub pose_cam_from_marker: PoseSE3,
    pub marker_size_m: f64,
}

impl MarkerObservation {
    pub fn new(
        image_id: impl Into<String>,
        marker_id: impl Into<String>,
        pose_cam_from_marker: PoseSE3,
        marker_size_m: f64,
    ) -> Result<Self> {
        if !(marker_size_m > 0.0) {
            return Err(LabelError::InvalidArgument(format!(
                "marker size must be positive, got {marker_size_m}"
            )));
        }
        Ok(Self {
            image_id: image_id.into(),
            marker_id: marker_id.into(),
            pose_cam_from_marker,
            marker_size_m,
        })
    }
}

/// Ordered list of (image_id, pose) entries sharing one reference frame.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub frame_label: String,
    pub entries: Vec<(String, PoseSE3)>,
}

impl Trajectory {
    pub fn new(frame_label: impl Into<String>, entries: Vec<(String, PoseSE3)>) -> Result<Self> {
        let mut ids: Vec<&str> = entries.iter().map(|(id, _)| id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(LabelError::InvalidArgument(
                "duplicate image ids in trajectory".into(),
            ));
        }
        Ok(Self {
            frame_label: frame_label.into(),
            entries,
        })
    }

    pub fn get(&self, image_id: &str) -> Option<&PoseSE3> {
        self.entries
            .iter()
            .find(|(id, _)| id == image_id)
            .map(|(_, p)| p)
    }
}

/// Per-frame comparison result. `direction_error_deg` is present only when
/// the metric displacement exceeded the gate threshold.
#[derive(Debug, Clone)]
pub struct GtComparisonRow {
    pub image_id: String,
    pub rotation_error_deg: f64,
    pub direction_error_deg: Option<f64>,
    pub displacement_m: f64,
}

/// Max/mean/median over the rotation column and the gated direction column.
#[derive(Debug, Clone, Default)]
pub struct GtComparisonSummary {
    pub rotation_max_deg: f64,
    pub rotation_mean_deg: f64,
    pub rotation_median_deg: f64,
    pub direction_max_deg: Option<f64>,
    pub direction_mean_deg: Option<f64>,
    pub direction_median_deg: Option<f64>,
    pub frames_compared: usize,
    pub frames_gated_in: usize,
}

/// Relative target for a training pair; the second view expressed in the
/// reference frame.
pub fn make_relative_target(reference: &PoseSE3, view2: &PoseSE3) -> PoseSE3 {
    geom3::relative_pose(reference, view2)
}

/// Relative camera pose from one marker seen in both images:
/// T_query_cam<-ref_cam = T_query (T_ref)^-1, both camera-from-marker.
pub fn marker_relative_pose(
    ref_obs: &MarkerObservation,
    query_obs: &MarkerObservation,
) -> Result<PoseSE3> {
    if ref_obs.marker_id != query_obs.marker_id {
        return Err(LabelError::MarkerMismatch {
            reference: ref_obs.marker_id.clone(),
            query: query_obs.marker_id.clone(),
        });
    }
    Ok(geom3::compose(
        &query_obs.pose_cam_from_marker,
        &geom3::inverse(&ref_obs.pose_cam_from_marker),
    ))
}

/// Fuses per-marker relative-pose estimates: chordal mean of the rotations
/// (principal eigenvector of the quaternion outer-product sum, which is
/// sign-invariant) and the component-wise mean of the translations.
pub fn aggregate_marker_poses(per_marker: &[PoseSE3]) -> Result<PoseSE3> {
    if per_marker.is_empty() {
        return Err(LabelError::InvalidArgument(
            "cannot aggregate an empty pose list".into(),
        ));
    }
    let mut acc = Matrix4::<f64>::zeros();
    let mut t_sum = Vector3::zeros();
    for pose in per_marker {
        let q = geom3::matrix_to_quat(&pose.rotation)?;
        let v = nalgebra::Vector4::new(q.w, q.x, q.y, q.z);
        acc += v * v.transpose();
        t_sum += pose.translation.vector();
    }
    let eig = nalgebra::SymmetricEigen::new(acc);
    let mut best = 0;
    for i in 1..4 {
        if eig.eigenvalues[i] > eig.eigenvalues[best] {
            best = i;
        }
    }
    let v = eig.eigenvectors.column(best);
    let q = UnitQuaternion::try_new(v[0], v[1], v[2], v[3])?;
    Ok(PoseSE3 {
        rotation: geom3::quat_to_matrix(&q)?,
        translation: Translation::from_vector(t_sum / per_marker.len() as f64),
    })
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).expect("no NaN in error columns"));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Compares two trajectories expressed in the same reference frame.
///
/// Rotation error per shared frame is the geodesic angle in degrees. Both
/// translation sets are normalized by their own RMS norm over the shared
/// frames before the direction comparison; the displacement gate itself is
/// applied on trajectory `a`'s metric translation (the marker-based side)
/// before normalization.
pub fn compare_trajectories(
    a: &Trajectory,
    b: &Trajectory,
    displacement_threshold_m: f64,
) -> Result<(Vec<GtComparisonRow>, GtComparisonSummary)> {
    let shared: Vec<(&str, &PoseSE3, &PoseSE3)> = a
        .entries
        .iter()
        .filter_map(|(id, pa)| b.get(id).map(|pb| (id.as_str(), pa, pb)))
        .collect();
    if shared.is_empty() {
        return Err(LabelError::EmptyOverlap);
    }

    let rms = |poses: &[(&str, &PoseSE3, &PoseSE3)], pick_a: bool| -> f64 {
        let ss: f64 = poses
            .iter()
            .map(|(_, pa, pb)| {
                let t = if pick_a { pa } else { pb };
                t.translation.vector().norm_squared()
            })
            .sum();
        (ss / poses.len() as f64).sqrt()
    };
    let scale_a = rms(&shared, true);
    let scale_b = rms(&shared, false);

    let mut rows = Vec::with_capacity(shared.len());
    for (id, pa, pb) in &shared {
        let rot_deg =
            losses::geodesic_distance(&pa.rotation, &pb.rotation)?.to_degrees();
        let displacement = pa.translation.norm();
        let direction_error_deg = if displacement > displacement_threshold_m {
            let ta = if scale_a > 0.0 {
                Translation::from_vector(pa.translation.vector() / scale_a)
            } else {
                pa.translation
            };
            let tb = if scale_b > 0.0 {
                Translation::from_vector(pb.translation.vector() / scale_b)
            } else {
                pb.translation
            };
            match losses::translation_direction_error(&ta, &tb) {
                Ok(e) => Some(e.to_degrees()),
                Err(losses::LossError::UndefinedDirection { .. }) => None,
                Err(e) => return Err(e.into()),
            }
        } else {
            None
        };
        rows.push(GtComparisonRow {
            image_id: id.to_string(),
            rotation_error_deg: rot_deg,
            direction_error_deg,
            displacement_m: displacement,
        });
    }

    let mut rot: Vec<f64> = rows.iter().map(|r| r.rotation_error_deg).collect();
    let mut dir: Vec<f64> = rows.iter().filter_map(|r| r.direction_error_deg).collect();
    let mut summary = GtComparisonSummary {
        rotation_max_deg: rot.iter().cloned().fold(f64::MIN, f64::max),
        rotation_mean_deg: rot.iter().sum::<f64>() / rot.len() as f64,
        rotation_median_deg: median(&mut rot),
        frames_compared: rows.len(),
        frames_gated_in: dir.len(),
        ..Default::default()
    };
    if !dir.is_empty() {
        summary.direction_max_deg = Some(dir.iter().cloned().fold(f64::MIN, f64::max));
        summary.direction_mean_deg = Some(dir.iter().sum::<f64>() / dir.len() as f64);
        summary.direction_median_deg = Some(median(&mut dir));
    }
    Ok((rows, summary))
}
