//! Closed-form similarity alignment of corresponded point sets and the
//! post-alignment RMSE used as the trajectory change score.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};

use crate::error::{Error, Result};
use crate::geometry::SimTransform;

/// Minimum number of corresponded points.
pub const MIN_POINTS: usize = 3;

/// Relative eigenvalue cutoff for flagging flat or linear point sets.
const RANK_TOL: f64 = 1e-12;

/// Reference `P` and candidate `P*`, corresponded by index.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloudPair {
    reference: Vec<Vector3<f64>>,
    candidate: Vec<Vector3<f64>>,
}

impl PointCloudPair {
    pub fn new(reference: Vec<Vector3<f64>>, candidate: Vec<Vector3<f64>>) -> Result<Self> {
        if reference.len() != candidate.len() {
            return Err(Error::LengthMismatch {
                left: reference.len(),
                right: candidate.len(),
            });
        }
        if reference.len() < MIN_POINTS {
            return Err(Error::TooFewPoints {
                needed: MIN_POINTS,
                got: reference.len(),
            });
        }
        Ok(Self {
            reference,
            candidate,
        })
    }

    pub fn reference(&self) -> &[Vector3<f64>] {
        &self.reference
    }

    pub fn candidate(&self) -> &[Vector3<f64>] {
        &self.candidate
    }

    pub fn len(&self) -> usize {
        self.reference.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reference.is_empty()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum AlignmentMode {
    /// Rotation, translation and scale.
    #[default]
    Sim3,
    /// Rotation and translation, scale pinned to 1.
    Se3,
}

/// Rank deficiency of the candidate cloud. Alignment still succeeds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Degeneracy {
    Coplanar,
    Collinear,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlignmentResult {
    /// Maps candidate points onto the reference.
    pub transform: SimTransform,
    pub rmse: f64,
    pub degeneracy: Option<Degeneracy>,
}

fn centroid(points: &[Vector3<f64>]) -> Vector3<f64> {
    points.iter().sum::<Vector3<f64>>() / points.len() as f64
}

/// `sqrt(mean ‖p_i − (a·R·p*_i + t)‖²)` for a given transform.
pub fn rmse_under(pair: &PointCloudPair, transform: &SimTransform) -> f64 {
    let sum: f64 = pair
        .reference
        .iter()
        .zip(&pair.candidate)
        .map(|(p, q)| (p - transform.apply(q)).norm_squared())
        .sum();
    (sum / pair.len() as f64).sqrt()
}

pub fn align(pair: &PointCloudPair, mode: AlignmentMode) -> Result<AlignmentResult> {
    let n = pair.len() as f64;
    let mu_ref = centroid(&pair.reference);
    let mu_cand = centroid(&pair.candidate);

    let mut cross = Matrix3::zeros();
    let mut scatter = Matrix3::zeros();
    for (p, q) in pair.reference.iter().zip(&pair.candidate) {
        let dp = p - mu_ref;
        let dq = q - mu_cand;
        cross += dp * dq.transpose();
        scatter += dq * dq.transpose();
    }
    cross /= n;
    scatter /= n;
    let var_cand = scatter.trace();
    if !(var_cand > f64::MIN_POSITIVE) || !var_cand.is_finite() {
        return Err(Error::DegenerateAlignment(
            "candidate points have zero variance".into(),
        ));
    }

    let mut eig: Vec<f64> = scatter.symmetric_eigenvalues().iter().copied().collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    let degeneracy = if eig[1] <= RANK_TOL * eig[0] {
        Some(Degeneracy::Collinear)
    } else if eig[2] <= RANK_TOL * eig[0] {
        Some(Degeneracy::Coplanar)
    } else {
        None
    };

    let svd = cross.svd(true, true);
    let u = svd.u.expect("svd computed with u");
    let v_t = svd.v_t.expect("svd computed with v_t");
    let d = svd.singular_values;
    let smallest = (0..3).min_by(|&a, &b| d[a].total_cmp(&d[b])).unwrap_or(2);
    let mut s = Vector3::new(1.0, 1.0, 1.0);
    if u.determinant() * v_t.determinant() < 0.0 {
        s[smallest] = -1.0;
    }
    let rot = u * Matrix3::from_diagonal(&s) * v_t;
    let rotation = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(rot));

    let scale = match mode {
        AlignmentMode::Sim3 => {
            let a = d.component_mul(&s).sum() / var_cand;
            if !(a > 0.0) {
                return Err(Error::DegenerateAlignment(
                    "reference points have zero variance".into(),
                ));
            }
            a
        }
        AlignmentMode::Se3 => 1.0,
    };
    let translation = mu_ref - scale * (rotation * mu_cand);
    let transform = SimTransform::new(rotation, translation, scale)?;
    let rmse = rmse_under(pair, &transform);
    Ok(AlignmentResult {
        transform,
        rmse,
        degeneracy,
    })
}

/// Similarity transform minimizing `Σ ‖p_i − a·R·p*_i − t‖²`.
pub fn umeyama(pair: &PointCloudPair) -> Result<SimTransform> {
    align(pair, AlignmentMode::Sim3).map(|r| r.transform)
}

/// Post-alignment RMSE between reference and candidate.
pub fn change_score(pair: &PointCloudPair) -> Result<f64> {
    align(pair, AlignmentMode::Sim3).map(|r| r.rmse)
}
