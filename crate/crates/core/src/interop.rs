//! Plain-array entry points for callers outside Rust.
//!
//! Every function takes and returns owned arrays (`[x, y, z]` translations,
//! `[w, x, y, z]` quaternions) and reports failures as an [`InteropError`]
//! whose message starts with the library error name.

use std::fmt;

use crate::backbone::{
    frames_from_backbone, ProteinBackbone, ProteinFrames, Residue, RigidTransform, UNKNOWN_AA,
};
use crate::canonicalize::{canonicalize, CanonicalPose};
use crate::flowmatch::{interpolate, target_velocity};
use crate::so3::{matrix_from_quat, quat_from_matrix, UnitQuaternion, Vec3};
use crate::views::{make_phase1_pair, PerturbConfig, Perturber, ViewPair};

/// Allowed deviation of an input quaternion from unit norm.
pub const QUATERNION_NORM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct InteropError {
    pub name: &'static str,
    pub message: String,
}

impl fmt::Display for InteropError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for InteropError {}

macro_rules! from_library_error {
    ($($ty:ty),*) => {$(
        impl From<$ty> for InteropError {
            fn from(e: $ty) -> Self {
                InteropError { name: e.name(), message: e.to_string() }
            }
        }
    )*};
}

from_library_error!(
    crate::backbone::BackboneError,
    crate::canonicalize::CanonicalizeError,
    crate::views::ViewsError,
    crate::flowmatch::FlowError
);

fn shape_error(message: String) -> InteropError {
    InteropError {
        name: "ShapeMismatch",
        message: format!("ShapeMismatch: {message}"),
    }
}

/// Frames of one chain as arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayBundle {
    pub t: Vec<[f64; 3]>,
    pub q: Vec<[f64; 4]>,
    pub aa: Vec<u8>,
}

impl ArrayBundle {
    /// Amino acids default to unknown when `aa` is `None`.
    pub fn new(
        t: Vec<[f64; 3]>,
        q: Vec<[f64; 4]>,
        aa: Option<Vec<u8>>,
    ) -> Result<Self, InteropError> {
        let aa = aa.unwrap_or_else(|| vec![UNKNOWN_AA; t.len()]);
        if q.len() != t.len() || aa.len() != t.len() {
            return Err(shape_error(format!(
                "t has {} rows, q {}, aa {}",
                t.len(),
                q.len(),
                aa.len()
            )));
        }
        if let Some(i) = q.iter().position(|q| {
            let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
            norm.is_nan() || (norm - 1.0).abs() > QUATERNION_NORM_TOLERANCE
        }) {
            return Err(InteropError {
                name: "NotUnitQuaternion",
                message: format!("NotUnitQuaternion: row {i} of q is not unit within {QUATERNION_NORM_TOLERANCE:e}"),
            });
        }
        Ok(ArrayBundle { t, q, aa })
    }

    pub fn from_frames(frames: &ProteinFrames) -> Self {
        ArrayBundle {
            t: frames
                .frames()
                .iter()
                .map(|f| [f.t.x, f.t.y, f.t.z])
                .collect(),
            q: frames
                .frames()
                .iter()
                .map(|f| quat_from_matrix(&f.r).to_array())
                .collect(),
            aa: frames.aa().to_vec(),
        }
    }

    pub fn to_frames(&self) -> Result<ProteinFrames, InteropError> {
        let frames = self
            .t
            .iter()
            .zip(&self.q)
            .map(|(t, q)| {
                RigidTransform::new(
                    Vec3::from(*t),
                    matrix_from_quat(&UnitQuaternion::from_array_unchecked(*q)),
                )
            })
            .collect();
        Ok(ProteinFrames::new(frames, self.aa.clone())?)
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

/// Residue frames from per-residue N, CA and C coordinates.
pub fn frames_from_coords(
    n: &[[f64; 3]],
    ca: &[[f64; 3]],
    c: &[[f64; 3]],
    aa: Option<&[u8]>,
) -> Result<ArrayBundle, InteropError> {
    if ca.len() != n.len() || c.len() != n.len() || aa.is_some_and(|a| a.len() != n.len()) {
        return Err(shape_error(format!(
            "atom arrays have {}, {} and {} rows",
            n.len(),
            ca.len(),
            c.len()
        )));
    }
    let residues = (0..n.len())
        .map(|i| Residue {
            n: Vec3::from(n[i]),
            ca: Vec3::from(ca[i]),
            c: Vec3::from(c[i]),
            aa: aa.map_or(UNKNOWN_AA, |a| a[i]),
        })
        .collect();
    let frames = frames_from_backbone(&ProteinBackbone::new(residues)?)?;
    Ok(ArrayBundle::from_frames(&frames))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalArrays {
    pub frames: ArrayBundle,
    pub centroid: [f64; 3],
    /// Row-major principal axes; column `k` is axis `k`.
    pub axes: [[f64; 3]; 3],
    pub moments: [f64; 3],
}

fn pose_arrays(pose: &CanonicalPose) -> ([f64; 3], [[f64; 3]; 3]) {
    let m = pose.axes.matrix();
    let axes = [0, 1, 2].map(|r| [m[(r, 0)], m[(r, 1)], m[(r, 2)]]);
    ([pose.centroid.x, pose.centroid.y, pose.centroid.z], axes)
}

pub fn canonicalize_arrays(bundle: &ArrayBundle) -> Result<CanonicalArrays, InteropError> {
    let (frames, pose) = canonicalize(&bundle.to_frames()?)?;
    let (centroid, axes) = pose_arrays(&pose);
    Ok(CanonicalArrays {
        frames: ArrayBundle::from_frames(&frames),
        centroid,
        axes,
        moments: pose.moments,
    })
}

/// Canonical `g0` and its per-residue perturbation `g1`.
pub fn phase1_pair_arrays(
    bundle: &ArrayBundle,
    sigma: f64,
    epsilon: f64,
    seed: u64,
) -> Result<(ArrayBundle, ArrayBundle), InteropError> {
    let perturber = Perturber::new(PerturbConfig {
        sigma,
        epsilon,
        seed,
    })?;
    let pair = make_phase1_pair(&bundle.to_frames()?, &perturber)?;
    Ok((
        ArrayBundle::from_frames(&pair.g0),
        ArrayBundle::from_frames(&pair.g1),
    ))
}

fn pair_from(g0: &ArrayBundle, g1: &ArrayBundle) -> Result<ViewPair, InteropError> {
    let (f0, f1) = (g0.to_frames()?, g1.to_frames()?);
    if f0.len() != f1.len() {
        return Err(shape_error(format!(
            "g0 has {} residues, g1 has {}",
            f0.len(),
            f1.len()
        )));
    }
    let pose = CanonicalPose {
        centroid: Vec3::zeros(),
        axes: crate::so3::RotationMatrix::identity(),
        moments: [0.0; 3],
    };
    Ok(ViewPair {
        g0: f0,
        g1: f1,
        provenance: crate::views::Provenance::Md {
            source: "arrays".into(),
            s: 0.0,
            delta: 0.0,
        },
        poses: [pose, pose],
    })
}

pub fn interpolate_arrays(
    g0: &ArrayBundle,
    g1: &ArrayBundle,
    tau: f64,
) -> Result<ArrayBundle, InteropError> {
    let state = interpolate(&pair_from(g0, g1)?, tau)?;
    Ok(ArrayBundle {
        t: state
            .frames
            .frames()
            .iter()
            .map(|f| [f.t.x, f.t.y, f.t.z])
            .collect(),
        q: state.quats.iter().map(|q| q.to_array()).collect(),
        aa: state.frames.aa().to_vec(),
    })
}

/// Per-residue translation and quaternion velocities.
pub type VelocityArrays = (Vec<[f64; 3]>, Vec<[f64; 4]>);

/// Translation and quaternion velocities of the path at `tau`.
pub fn fm_target_arrays(
    g0: &ArrayBundle,
    g1: &ArrayBundle,
    tau: f64,
) -> Result<VelocityArrays, InteropError> {
    let target = target_velocity(&pair_from(g0, g1)?, tau)?;
    Ok((
        target.u_trans.iter().map(|v| [v.x, v.y, v.z]).collect(),
        target.u_rot.iter().map(|v| v.0).collect(),
    ))
}
