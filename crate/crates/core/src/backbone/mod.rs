//! Protein backbones and their per-residue rigid frames.
//!
//! Each residue contributes its N, CA and C atoms. The frame of a residue is
//! anchored at CA with the first axis along CA→C and the second axis in the
//! N–CA–C plane, obtained by Gram–Schmidt orthogonalization.

mod distogram;
pub mod pdb;

pub use distogram::{
    distogram, distogram_bin, distogram_lower_bounds, DISTOGRAM_BINS, DISTOGRAM_MAX, DISTOGRAM_MIN,
};
pub use pdb::{
    parse_backbone, parse_chains, parse_models, write_pdb, write_pdb_models, ParsedChain, PdbModel,
};

use thiserror::Error;

use crate::so3::{RotationMatrix, Vec3};

/// Ideal CA–C bond length, Å.
pub const IDEAL_CA_C: f64 = 1.525;
/// Ideal N–CA bond length, Å.
pub const IDEAL_N_CA: f64 = 1.458;
/// Ideal N–CA–C bond angle, degrees.
pub const IDEAL_N_CA_C_DEG: f64 = 111.2;

/// Residues with N–CA–C closer than this to a straight line have no frame.
pub const COLLINEAR_TOLERANCE: f64 = 1e-4;
/// Minimum N–CA and C–CA distance accepted, Å.
pub const MIN_BOND_LENGTH: f64 = 0.5;

/// Amino-acid index used for anything outside the twenty standard residues.
pub const UNKNOWN_AA: u8 = 21;

const STANDARD_RESIDUES: [&str; 20] = [
    "ALA", "ARG", "ASN", "ASP", "CYS", "GLN", "GLU", "GLY", "HIS", "ILE", "LEU", "LYS", "MET",
    "PHE", "PRO", "SER", "THR", "TRP", "TYR", "VAL",
];

/// Maps a three-letter residue name to `1..=20`, or [`UNKNOWN_AA`].
pub fn aa_index(resname: &str) -> u8 {
    STANDARD_RESIDUES
        .iter()
        .position(|&name| name.eq_ignore_ascii_case(resname.trim()))
        .map_or(UNKNOWN_AA, |i| i as u8 + 1)
}

/// Three-letter name for an amino-acid index; `UNK` for 21 and anything invalid.
pub fn aa_name(index: u8) -> &'static str {
    match index {
        1..=20 => STANDARD_RESIDUES[index as usize - 1],
        _ => "UNK",
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackboneError {
    #[error("NoResidues: found {found} complete residue(s), need at least 2")]
    NoResidues { found: usize },
    #[error("MalformedRecord: line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("CollinearAtoms: residue {index} has collinear N, CA, C")]
    CollinearAtoms { index: usize },
    #[error(
        "DegenerateGeometry: residue {index} has a backbone bond shorter than {MIN_BOND_LENGTH} Å"
    )]
    DegenerateGeometry { index: usize },
    #[error("InvalidAminoAcid: residue {index} has identity {aa}, expected 1..=21")]
    InvalidAminoAcid { index: usize, aa: u8 },
    #[error("LengthMismatch: {frames} frames but {aa} amino-acid identities")]
    LengthMismatch { frames: usize, aa: usize },
}

impl BackboneError {
    pub fn name(&self) -> &'static str {
        match self {
            BackboneError::NoResidues { .. } => "NoResidues",
            BackboneError::MalformedRecord { .. } => "MalformedRecord",
            BackboneError::CollinearAtoms { .. } => "CollinearAtoms",
            BackboneError::DegenerateGeometry { .. } => "DegenerateGeometry",
            BackboneError::InvalidAminoAcid { .. } => "InvalidAminoAcid",
            BackboneError::LengthMismatch { .. } => "LengthMismatch",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residue {
    pub n: Vec3,
    pub ca: Vec3,
    pub c: Vec3,
    pub aa: u8,
}

/// An ordered chain of at least two residues.
#[derive(Debug, Clone, PartialEq)]
pub struct ProteinBackbone {
    residues: Vec<Residue>,
}

impl ProteinBackbone {
    pub fn new(residues: Vec<Residue>) -> Result<Self, BackboneError> {
        if residues.len() < 2 {
            return Err(BackboneError::NoResidues {
                found: residues.len(),
            });
        }
        for (index, r) in residues.iter().enumerate() {
            if !(1..=UNKNOWN_AA).contains(&r.aa) {
                return Err(BackboneError::InvalidAminoAcid { index, aa: r.aa });
            }
            if !((r.c - r.ca).norm() > MIN_BOND_LENGTH && (r.n - r.ca).norm() > MIN_BOND_LENGTH) {
                return Err(BackboneError::DegenerateGeometry { index });
            }
        }
        Ok(ProteinBackbone { residues })
    }

    pub fn residues(&self) -> &[Residue] {
        &self.residues
    }

    pub fn len(&self) -> usize {
        self.residues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.residues.is_empty()
    }

    pub fn ca_positions(&self) -> Vec<Vec3> {
        self.residues.iter().map(|r| r.ca).collect()
    }

    /// Applies `x ↦ R·x + s` to every atom.
    pub fn transformed(&self, rotation: &RotationMatrix, shift: &Vec3) -> ProteinBackbone {
        let map = |x: &Vec3| rotation.apply(x) + shift;
        ProteinBackbone {
            residues: self
                .residues
                .iter()
                .map(|r| Residue {
                    n: map(&r.n),
                    ca: map(&r.ca),
                    c: map(&r.c),
                    aa: r.aa,
                })
                .collect(),
        }
    }
}

/// Pose of one residue: `x_global = r · x_local + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub t: Vec3,
    pub r: RotationMatrix,
}

impl RigidTransform {
    pub fn new(t: Vec3, r: RotationMatrix) -> Self {
        RigidTransform { t, r }
    }

    pub fn identity() -> Self {
        RigidTransform {
            t: Vec3::zeros(),
            r: RotationMatrix::identity(),
        }
    }

    pub fn apply(&self, local: &Vec3) -> Vec3 {
        self.r.apply(local) + self.t
    }

    /// Left action of a global rigid motion `(R, s)`: `(R·t + s, R·r)`.
    pub fn left_transformed(&self, rotation: &RotationMatrix, shift: &Vec3) -> RigidTransform {
        RigidTransform {
            t: rotation.apply(&self.t) + shift,
            r: *rotation * self.r,
        }
    }
}

/// Rigid frames of a chain together with amino-acid identities.
#[derive(Debug, Clone, PartialEq)]
pub struct ProteinFrames {
    frames: Vec<RigidTransform>,
    aa: Vec<u8>,
}

impl ProteinFrames {
    pub fn new(frames: Vec<RigidTransform>, aa: Vec<u8>) -> Result<Self, BackboneError> {
        if frames.len() != aa.len() {
            return Err(BackboneError::LengthMismatch {
                frames: frames.len(),
                aa: aa.len(),
            });
        }
        if let Some((index, &a)) = aa
            .iter()
            .enumerate()
            .find(|(_, a)| !(1..=UNKNOWN_AA).contains(*a))
        {
            return Err(BackboneError::InvalidAminoAcid { index, aa: a });
        }
        Ok(ProteinFrames { frames, aa })
    }

    pub fn frames(&self) -> &[RigidTransform] {
        &self.frames
    }

    pub fn aa(&self) -> &[u8] {
        &self.aa
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn translations(&self) -> Vec<Vec3> {
        self.frames.iter().map(|f| f.t).collect()
    }

    pub fn rotations(&self) -> Vec<RotationMatrix> {
        self.frames.iter().map(|f| f.r).collect()
    }

    /// Replaces the frames, keeping amino-acid identities.
    pub fn with_frames(&self, frames: Vec<RigidTransform>) -> Result<Self, BackboneError> {
        ProteinFrames::new(frames, self.aa.clone())
    }

    /// Applies the left action of `(R, s)` to every frame.
    pub fn transformed(&self, rotation: &RotationMatrix, shift: &Vec3) -> ProteinFrames {
        ProteinFrames {
            frames: self
                .frames
                .iter()
                .map(|f| f.left_transformed(rotation, shift))
                .collect(),
            aa: self.aa.clone(),
        }
    }
}

/// Gram–Schmidt frame of one residue from its N, CA and C positions.
pub fn frame_from_atoms(n: &Vec3, ca: &Vec3, c: &Vec3) -> Option<RigidTransform> {
    let v1 = c - ca;
    let v2 = n - ca;
    let (len1, len2) = (v1.norm(), v2.norm());
    if len1 == 0.0 || len2 == 0.0 {
        return None;
    }
    let e1 = v1 / len1;
    let u2 = v2 - e1 * e1.dot(&v2);
    let len_u2 = u2.norm();
    // |u2| / |v2| is the sine of the N–CA–C angle.
    if len_u2 <= len2 * COLLINEAR_TOLERANCE.sin() {
        return None;
    }
    let e2 = u2 / len_u2;
    let e3 = e1.cross(&e2);
    Some(RigidTransform {
        t: *ca,
        r: RotationMatrix::from_columns(&e1, &e2, &e3),
    })
}

pub fn frames_from_backbone(bb: &ProteinBackbone) -> Result<ProteinFrames, BackboneError> {
    let frames = bb
        .residues()
        .iter()
        .enumerate()
        .map(|(index, res)| {
            frame_from_atoms(&res.n, &res.ca, &res.c).ok_or(BackboneError::CollinearAtoms { index })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ProteinFrames {
        frames,
        aa: bb.residues().iter().map(|r| r.aa).collect(),
    })
}

/// Local coordinates of N and C in the residue frame under ideal geometry.
pub fn ideal_local_atoms() -> (Vec3, Vec3) {
    let alpha = IDEAL_N_CA_C_DEG.to_radians();
    let n = Vec3::new(IDEAL_N_CA * alpha.cos(), IDEAL_N_CA * alpha.sin(), 0.0);
    let c = Vec3::new(IDEAL_CA_C, 0.0, 0.0);
    (n, c)
}

/// Places N, CA and C of every residue with idealized bond geometry.
pub fn backbone_from_frames(frames: &ProteinFrames) -> Result<ProteinBackbone, BackboneError> {
    let (n_local, c_local) = ideal_local_atoms();
    let residues = frames
        .frames()
        .iter()
        .zip(frames.aa())
        .map(|(f, &aa)| Residue {
            n: f.apply(&n_local),
            ca: f.t,
            c: f.apply(&c_local),
            aa,
        })
        .collect();
    ProteinBackbone::new(residues)
}
