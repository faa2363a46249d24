//! Expressing a chain in its inertial reference frame.
//!
//! Translations are centered on the mean CA position and rotated into the
//! principal axes of the (unit-mass) inertia tensor, smallest moment first.
//! Eigenvector signs of the first two axes are fixed from the structure
//! itself so that any rigid copy of a chain lands on the same coordinates.

use nalgebra::SymmetricEigen;
use thiserror::Error;

use crate::backbone::{ProteinFrames, RigidTransform};
use crate::so3::{Mat3, RotationMatrix, Vec3};

/// Smallest accepted gap between consecutive moments, relative to the largest.
pub const DEGENERACY_GAP: f64 = 1e-8;

/// Third moments smaller than this fraction of their absolute counterpart
/// are treated as zero when choosing axis signs.
const SKEW_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CanonicalizeError {
    #[error("Empty: no residues to canonicalize")]
    Empty,
    #[error("DegenerateInertia: relative eigenvalue gap {gap:.3e} below {DEGENERACY_GAP:e}")]
    DegenerateInertia { gap: f64 },
}

impl CanonicalizeError {
    pub fn name(&self) -> &'static str {
        match self {
            CanonicalizeError::Empty => "Empty",
            CanonicalizeError::DegenerateInertia { .. } => "DegenerateInertia",
        }
    }
}

/// What was removed during canonicalization: `t' = Vᵀ(t − centroid)`, `r' = Vᵀ r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CanonicalPose {
    pub centroid: Vec3,
    pub axes: RotationMatrix,
    /// Principal moments in ascending order, Å².
    pub moments: [f64; 3],
}

impl CanonicalPose {
    /// Maps canonical frames back to the pose they were taken from.
    pub fn restore(&self, canonical: &ProteinFrames) -> ProteinFrames {
        canonical.transformed(&self.axes, &self.centroid)
    }
}

pub fn center_of_mass(frames: &ProteinFrames) -> Result<Vec3, CanonicalizeError> {
    if frames.is_empty() {
        return Err(CanonicalizeError::Empty);
    }
    let sum = frames
        .frames()
        .iter()
        .fold(Vec3::zeros(), |acc, f| acc + f.t);
    Ok(sum / frames.len() as f64)
}

/// `Σ (‖x‖² I − x xᵀ)` over already-centered points.
pub fn inertia_tensor(centered: &[Vec3]) -> Mat3 {
    let mut inertia = Mat3::zeros();
    for x in centered {
        inertia += Mat3::identity() * x.norm_squared() - x * x.transpose();
    }
    // exact symmetry regardless of rounding in the outer products
    (inertia + inertia.transpose()) * 0.5
}

/// Eigenvectors of a symmetric matrix as a right-handed rotation, ordered by
/// ascending eigenvalue.
///
/// The first two columns are negated when their largest-magnitude entry is
/// negative (lowest index on ties); the third is their cross product.
pub fn principal_axes(inertia: &Mat3) -> Result<(RotationMatrix, [f64; 3]), CanonicalizeError> {
    let eig = SymmetricEigen::new(*inertia);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let moments = order.map(|k| eig.eigenvalues[k]);

    let scale = moments.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let gap = if scale > 0.0 {
        (moments[1] - moments[0]).min(moments[2] - moments[1]) / scale
    } else {
        0.0
    };
    if gap.is_nan() || gap < DEGENERACY_GAP {
        return Err(CanonicalizeError::DegenerateInertia { gap });
    }

    let column = |k: usize| -> Vec3 {
        let v: Vec3 = eig.eigenvectors.column(order[k]).into_owned();
        let v = v.normalize();
        let lead = (0..3).fold(
            0,
            |best, i| if v[i].abs() > v[best].abs() { i } else { best },
        );
        if v[lead] < 0.0 {
            -v
        } else {
            v
        }
    };
    let e1 = column(0);
    let e2 = column(1);
    Ok((orthonormal_axes(e1, e2), moments))
}

/// Right-handed basis from two (nearly) orthonormal vectors.
fn orthonormal_axes(e1: Vec3, e2: Vec3) -> RotationMatrix {
    let e1 = e1.normalize();
    let e2 = (e2 - e1 * e1.dot(&e2)).normalize();
    RotationMatrix::from_columns(&e1, &e2, &e1.cross(&e2))
}

/// Sign that makes the distribution of `coords` skew positive, falling back
/// to the sign of the first clearly nonzero coordinate.
fn skew_sign(coords: impl Iterator<Item = f64> + Clone) -> f64 {
    let third: f64 = coords.clone().map(|c| c.powi(3)).sum();
    let abs_third: f64 = coords.clone().map(|c| c.abs().powi(3)).sum();
    if third.abs() > SKEW_TOLERANCE * abs_third {
        return third.signum();
    }
    let largest = coords.clone().fold(0.0f64, |m, c| m.max(c.abs()));
    coords
        .into_iter()
        .find(|c| c.abs() > 1e-6 * largest)
        .map_or(1.0, f64::signum)
}

/// Centers the frames and rotates them into their principal axes.
///
/// Axis signs follow the skew of the residue distribution along each of the
/// two smaller axes, which depends only on the internal geometry.
pub fn canonicalize(
    frames: &ProteinFrames,
) -> Result<(ProteinFrames, CanonicalPose), CanonicalizeError> {
    let centroid = center_of_mass(frames)?;
    let centered: Vec<Vec3> = frames.frames().iter().map(|f| f.t - centroid).collect();
    let (axes, moments) = principal_axes(&inertia_tensor(&centered))?;

    let m = axes.matrix();
    let mut cols = [m.column(0).into_owned(), m.column(1).into_owned()];
    for col in cols.iter_mut() {
        let sign = skew_sign(centered.iter().map(|x| col.dot(x)));
        *col *= sign;
    }
    let axes = orthonormal_axes(cols[0], cols[1]);

    let inverse = axes.transpose();
    let canonical = frames
        .frames()
        .iter()
        .zip(&centered)
        .map(|(f, x)| RigidTransform::new(inverse.apply(x), inverse * f.r))
        .collect();
    let canonical = frames
        .with_frames(canonical)
        .expect("amino acids unchanged");
    Ok((
        canonical,
        CanonicalPose {
            centroid,
            axes,
            moments,
        },
    ))
}
