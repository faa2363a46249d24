//! The JSONL frames format.
//!
//! Each line holds one chain: `{id, L, aa, t, q, meta}`. A view pair is two
//! consecutive lines tagged `view: "g0"` and `view: "g1"`.

use serde::{Deserialize, Serialize};

use rigid_frames::backbone::{ProteinFrames, RigidTransform};
use rigid_frames::canonicalize::CanonicalPose;
use rigid_frames::so3::{
    matrix_from_quat, quat_from_matrix, Mat3, RotationMatrix, UnitQuaternion, Vec3,
};
use rigid_frames::views::{Provenance, ViewPair};

use crate::error::CliError;

/// Accepted deviation of a stored quaternion from unit norm.
pub const UNIT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    /// Straight from atom coordinates.
    Frames,
    Canonical,
    Perturb,
    Md,
    Integrate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum View {
    G0,
    G1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub provenance: Origin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub view: Option<View>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    /// Start time of an MD pair, ns.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    /// Interval of an MD pair, ns.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub centroid: Option<[f64; 3]>,
    /// Row-major principal axes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axes: Option<[[f64; 3]; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moments: Option<[f64; 3]>,
}

impl Meta {
    pub fn new(provenance: Origin) -> Self {
        Meta {
            provenance,
            view: None,
            sigma: None,
            epsilon: None,
            seed: None,
            source: None,
            s: None,
            delta: None,
            centroid: None,
            axes: None,
            moments: None,
        }
    }

    pub fn with_pose(mut self, pose: &CanonicalPose) -> Self {
        let m = pose.axes.matrix();
        self.centroid = Some([pose.centroid.x, pose.centroid.y, pose.centroid.z]);
        self.axes = Some([0, 1, 2].map(|r| [m[(r, 0)], m[(r, 1)], m[(r, 2)]]));
        self.moments = Some(pose.moments);
        self
    }

    pub fn pose(&self) -> Option<CanonicalPose> {
        let (c, a, m) = (self.centroid?, self.axes?, self.moments?);
        let axes = Mat3::from_fn(|r, col| a[r][col]);
        Some(CanonicalPose {
            centroid: Vec3::from(c),
            axes: RotationMatrix::new(axes).ok()?,
            moments: m,
        })
    }

    /// Whether the record claims to sit in its own inertial frame.
    pub fn is_canonical(&self) -> bool {
        match self.provenance {
            Origin::Canonical | Origin::Md => true,
            Origin::Perturb => self.view != Some(View::G1),
            Origin::Frames | Origin::Integrate => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramesRecord {
    pub id: String,
    #[serde(rename = "L")]
    pub len: usize,
    pub aa: Vec<u8>,
    pub t: Vec<[f64; 3]>,
    pub q: Vec<[f64; 4]>,
    pub meta: Meta,
}

impl FramesRecord {
    pub fn from_frames(id: impl Into<String>, frames: &ProteinFrames, meta: Meta) -> Self {
        FramesRecord {
            id: id.into(),
            len: frames.len(),
            aa: frames.aa().to_vec(),
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
            meta,
        }
    }

    /// Shape and unit-norm problems, if any, as a message.
    pub fn shape_problem(&self) -> Option<String> {
        if self.aa.len() != self.len || self.t.len() != self.len || self.q.len() != self.len {
            return Some(format!(
                "L = {} but aa, t, q have {}, {}, {} entries",
                self.len,
                self.aa.len(),
                self.t.len(),
                self.q.len()
            ));
        }
        None
    }

    pub fn to_frames(&self) -> Result<ProteinFrames, CliError> {
        let invalid = |msg: String| CliError::usage(format!("record {}: {msg}", self.id));
        if let Some(problem) = self.shape_problem() {
            return Err(invalid(problem));
        }
        let mut frames = Vec::with_capacity(self.len);
        for (i, (t, q)) in self.t.iter().zip(&self.q).enumerate() {
            if t.iter().chain(q).any(|v| !v.is_finite()) {
                return Err(invalid(format!("residue {i} has non-finite values")));
            }
            let quat = UnitQuaternion::from_array_unchecked(*q);
            if (quat.norm() - 1.0).abs() > UNIT_TOLERANCE {
                return Err(invalid(format!(
                    "residue {i} quaternion norm {}",
                    quat.norm()
                )));
            }
            frames.push(RigidTransform::new(Vec3::from(*t), matrix_from_quat(&quat)));
        }
        ProteinFrames::new(frames, self.aa.clone()).map_err(|e| invalid(e.to_string()))
    }
}

fn identity_pose() -> CanonicalPose {
    CanonicalPose {
        centroid: Vec3::zeros(),
        axes: RotationMatrix::identity(),
        moments: [0.0; 3],
    }
}

/// The two records of a pair.
pub fn pair_records(id: &str, pair: &ViewPair) -> [FramesRecord; 2] {
    let base = match &pair.provenance {
        Provenance::Perturb {
            sigma,
            epsilon,
            seed,
        } => Meta {
            sigma: Some(*sigma),
            epsilon: Some(*epsilon),
            seed: Some(*seed),
            ..Meta::new(Origin::Perturb)
        },
        Provenance::Md { source, s, delta } => Meta {
            source: Some(source.clone()),
            s: Some(*s),
            delta: Some(*delta),
            ..Meta::new(Origin::Md)
        },
    };
    let view = |v: View, pose: &CanonicalPose| {
        Meta {
            view: Some(v),
            ..base.clone()
        }
        .with_pose(pose)
    };
    [
        FramesRecord::from_frames(id, &pair.g0, view(View::G0, &pair.poses[0])),
        FramesRecord::from_frames(id, &pair.g1, view(View::G1, &pair.poses[1])),
    ]
}

fn provenance_of(meta: &Meta) -> Result<Provenance, String> {
    let need = |name: &str| format!("pair record lacks meta.{name}");
    match meta.provenance {
        Origin::Perturb => Ok(Provenance::Perturb {
            sigma: meta.sigma.ok_or_else(|| need("sigma"))?,
            epsilon: meta.epsilon.ok_or_else(|| need("epsilon"))?,
            seed: meta.seed.ok_or_else(|| need("seed"))?,
        }),
        Origin::Md => Ok(Provenance::Md {
            source: meta.source.clone().ok_or_else(|| need("source"))?,
            s: meta.s.ok_or_else(|| need("s"))?,
            delta: meta.delta.ok_or_else(|| need("delta"))?,
        }),
        other => Err(format!("records of provenance {other:?} do not form pairs")),
    }
}

/// Groups consecutive `g0`/`g1` records into pairs.
pub fn records_to_pairs(records: &[FramesRecord]) -> Result<Vec<(String, ViewPair)>, CliError> {
    if !records.len().is_multiple_of(2) {
        return Err(CliError::usage(format!(
            "pair files need an even number of records, found {}",
            records.len()
        )));
    }
    records
        .chunks(2)
        .enumerate()
        .map(|(k, two)| {
            let (a, b) = (&two[0], &two[1]);
            let bad = |msg: String| CliError::usage(format!("pair {k} ({}): {msg}", a.id));
            if a.meta.view != Some(View::G0) || b.meta.view != Some(View::G1) {
                return Err(bad("expected a g0 record followed by a g1 record".into()));
            }
            let provenance = provenance_of(&a.meta).map_err(bad)?;
            let pair = ViewPair {
                g0: a.to_frames()?,
                g1: b.to_frames()?,
                provenance,
                poses: [
                    a.meta.pose().unwrap_or_else(identity_pose),
                    b.meta.pose().unwrap_or_else(identity_pose),
                ],
            };
            if pair.g0.len() != pair.g1.len() {
                return Err(bad(format!(
                    "g0 has {} residues, g1 has {}",
                    pair.g0.len(),
                    pair.g1.len()
                )));
            }
            Ok((a.id.clone(), pair))
        })
        .collect()
}
