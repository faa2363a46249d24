//! Ideal-geometry backbones built from backbone torsions.

use rand::Rng;

use crate::backbone::{
    BackboneError, ProteinBackbone, Residue, IDEAL_CA_C, IDEAL_N_CA, IDEAL_N_CA_C_DEG,
};
use crate::so3::Vec3;

/// Peptide C–N bond length, Å.
pub const IDEAL_C_N: f64 = 1.329;
pub const IDEAL_CA_C_N_DEG: f64 = 116.2;
pub const IDEAL_C_N_CA_DEG: f64 = 121.7;

/// Places `d` so that `|cd| = length`, `∠bcd = angle` and the dihedral
/// `a-b-c-d` equals `torsion` (radians).
pub fn place_atom(a: &Vec3, b: &Vec3, c: &Vec3, length: f64, angle: f64, torsion: f64) -> Vec3 {
    let bc = (c - b).normalize();
    let n = (b - a).cross(&bc).normalize();
    let m = n.cross(&bc);
    let local = Vec3::new(
        -length * angle.cos(),
        length * angle.sin() * torsion.cos(),
        length * angle.sin() * torsion.sin(),
    );
    c + bc * local.x + m * local.y + n * local.z
}

/// Dihedral angle `a-b-c-d` in `(-π, π]`.
pub fn dihedral(a: &Vec3, b: &Vec3, c: &Vec3, d: &Vec3) -> f64 {
    let b1 = b - a;
    let b2 = c - b;
    let b3 = d - c;
    let y = b2.norm() * b1.dot(&b2.cross(&b3));
    let x = b1.cross(&b2).dot(&b2.cross(&b3));
    y.atan2(x)
}

/// Chain with ideal bond geometry and trans peptides. `phi[0]` and the last
/// `psi` have no atoms to act on and are ignored.
pub fn chain_from_torsions(
    phi: &[f64],
    psi: &[f64],
    aa: &[u8],
) -> Result<ProteinBackbone, BackboneError> {
    let len = phi.len().min(psi.len()).min(aa.len());
    if len == 0 {
        return Err(BackboneError::NoResidues { found: 0 });
    }
    let n_ca_c = IDEAL_N_CA_C_DEG.to_radians();
    let ca_c_n = IDEAL_CA_C_N_DEG.to_radians();
    let c_n_ca = IDEAL_C_N_CA_DEG.to_radians();
    let omega = std::f64::consts::PI;

    let mut residues = Vec::with_capacity(len);
    let n = Vec3::zeros();
    let ca = Vec3::new(IDEAL_N_CA, 0.0, 0.0);
    let c = ca + Vec3::new(-n_ca_c.cos(), n_ca_c.sin(), 0.0) * IDEAL_CA_C;
    residues.push(Residue {
        n,
        ca,
        c,
        aa: aa[0],
    });
    for i in 1..len {
        let prev = residues[i - 1];
        let n = place_atom(&prev.n, &prev.ca, &prev.c, IDEAL_C_N, ca_c_n, psi[i - 1]);
        let ca = place_atom(&prev.ca, &prev.c, &n, IDEAL_N_CA, c_n_ca, omega);
        let c = place_atom(&prev.c, &n, &ca, IDEAL_CA_C, n_ca_c, phi[i]);
        residues.push(Residue {
            n,
            ca,
            c,
            aa: aa[i],
        });
    }
    ProteinBackbone::new(residues)
}

/// Random chain mixing helical, extended and loop torsions in short runs.
pub fn random_chain<R: Rng + ?Sized>(
    len: usize,
    rng: &mut R,
) -> Result<ProteinBackbone, BackboneError> {
    const BASINS: [(f64, f64); 3] = [(-63.0, -43.0), (-120.0, 130.0), (-80.0, 70.0)];
    let mut phi = Vec::with_capacity(len);
    let mut psi = Vec::with_capacity(len);
    let mut basin = BASINS[0];
    for i in 0..len {
        if i % 6 == 0 {
            basin = BASINS[rng.random_range(0..BASINS.len())];
        }
        phi.push((basin.0 + rng.random_range(-15.0..15.0f64)).to_radians());
        psi.push((basin.1 + rng.random_range(-15.0..15.0f64)).to_radians());
    }
    let aa: Vec<u8> = (0..len).map(|_| rng.random_range(1..=20)).collect();
    chain_from_torsions(&phi, &psi, &aa)
}
