//! Paired views `(g0, g1)` of one chain.
//!
//! Phase I perturbs every residue of a canonicalized chain independently with
//! Gaussian translation noise and IGSO(3) rotation noise. Phase II pairs
//! canonicalized snapshots of a trajectory a fixed time interval apart.
//!
//! Every residue draws from its own ChaCha20 stream, selected by residue index
//! under the configured seed, so the result does not depend on iteration
//! order or thread count.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::backbone::{
    frames_from_backbone, BackboneError, ProteinBackbone, ProteinFrames, RigidTransform,
};
use crate::canonicalize::{canonicalize, CanonicalPose, CanonicalizeError};
use crate::igso3::{build_table, sample_rotation, AngleDensityTable, Igso3Error, Igso3Params};
use crate::so3::{exp_map, RotationMatrix, RotationVector, Vec3};

/// Translation noise scale, Å.
pub const DEFAULT_SIGMA: f64 = 0.03;
pub const DEFAULT_EPSILON: f64 = 0.5;
/// Time between paired snapshots, ns.
pub const DEFAULT_DELTA_NS: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ViewsError {
    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),
    #[error("TrajectoryTooShort: span {span} ns is shorter than delta {delta} ns")]
    TrajectoryTooShort { span: f64, delta: f64 },
    #[error("ResidueMismatch: snapshot {snapshot} has {found} residues, expected {expected}")]
    ResidueMismatch {
        snapshot: usize,
        expected: usize,
        found: usize,
    },
    #[error(transparent)]
    Backbone(#[from] BackboneError),
    #[error(transparent)]
    Canonicalize(#[from] CanonicalizeError),
    #[error(transparent)]
    Igso3(#[from] Igso3Error),
}

impl ViewsError {
    pub fn name(&self) -> &'static str {
        match self {
            ViewsError::InvalidConfig(_) => "InvalidConfig",
            ViewsError::TrajectoryTooShort { .. } => "TrajectoryTooShort",
            ViewsError::ResidueMismatch { .. } => "ResidueMismatch",
            ViewsError::Backbone(e) => e.name(),
            ViewsError::Canonicalize(e) => e.name(),
            ViewsError::Igso3(e) => e.name(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbConfig {
    pub sigma: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for PerturbConfig {
    fn default() -> Self {
        PerturbConfig {
            sigma: DEFAULT_SIGMA,
            epsilon: DEFAULT_EPSILON,
            seed: 0,
        }
    }
}

impl PerturbConfig {
    pub fn validate(&self) -> Result<(), ViewsError> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(ViewsError::InvalidConfig(format!(
                "sigma must be finite and >= 0, got {}",
                self.sigma
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(ViewsError::InvalidConfig(format!(
                "epsilon must be finite and > 0, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// A perturbation config together with its tabulated IGSO(3) angle law.
#[derive(Debug, Clone)]
pub struct Perturber {
    config: PerturbConfig,
    table: AngleDensityTable,
}

impl Perturber {
    pub fn new(config: PerturbConfig) -> Result<Self, ViewsError> {
        config.validate()?;
        let table = build_table(&Igso3Params::new(config.epsilon))?;
        Ok(Perturber { config, table })
    }

    /// Reuses a prebuilt table; its epsilon replaces the one in `config`.
    pub fn with_table(config: PerturbConfig, table: AngleDensityTable) -> Result<Self, ViewsError> {
        let config = PerturbConfig {
            epsilon: table.epsilon(),
            ..config
        };
        config.validate()?;
        Ok(Perturber { config, table })
    }

    pub fn config(&self) -> &PerturbConfig {
        &self.config
    }

    pub fn table(&self) -> &AngleDensityTable {
        &self.table
    }

    /// Translation noise first, then rotation noise, both from `rng`.
    pub fn perturb_frame<R: Rng + ?Sized>(
        &self,
        frame: &RigidTransform,
        rng: &mut R,
    ) -> RigidTransform {
        let t = perturb_translation(&frame.t, self.config.sigma, rng);
        let r = perturb_rotation(&frame.r, &self.table, rng);
        RigidTransform::new(t, r)
    }
}

/// The random stream owned by one residue.
pub fn residue_rng(seed: u64, residue: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(residue as u64);
    rng
}

/// `t + σ z` with `z` standard normal.
pub fn perturb_translation<R: Rng + ?Sized>(t: &Vec3, sigma: f64, rng: &mut R) -> Vec3 {
    let z = Vec3::new(
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
    );
    t + z * sigma
}

/// `r · noise` with `noise` drawn around the identity from `table`.
pub fn perturb_rotation<R: Rng + ?Sized>(
    r: &RotationMatrix,
    table: &AngleDensityTable,
    rng: &mut R,
) -> RotationMatrix {
    *r * sample_rotation(&RotationMatrix::identity(), table, rng)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    Perturb { sigma: f64, epsilon: f64, seed: u64 },
    Md { source: String, s: f64, delta: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewPair {
    pub g0: ProteinFrames,
    pub g1: ProteinFrames,
    pub provenance: Provenance,
    /// Canonical poses of the inputs behind `g0` and `g1`. A perturbed `g1`
    /// shares the pose of `g0`.
    pub poses: [CanonicalPose; 2],
}

impl ViewPair {
    /// The same pair with the roles of `g0` and `g1` exchanged.
    pub fn swapped(&self) -> ViewPair {
        ViewPair {
            g0: self.g1.clone(),
            g1: self.g0.clone(),
            provenance: self.provenance.clone(),
            poses: [self.poses[1], self.poses[0]],
        }
    }
}

/// Canonicalizes `frames` and perturbs every residue of the result.
///
/// `g1` stays in the canonical frame of `g0`; it is not canonicalized again.
pub fn make_phase1_pair(
    frames: &ProteinFrames,
    perturber: &Perturber,
) -> Result<ViewPair, ViewsError> {
    let (g0, pose) = canonicalize(frames)?;
    let seed = perturber.config.seed;
    let perturbed: Vec<RigidTransform> = g0
        .frames()
        .par_iter()
        .enumerate()
        .map(|(i, f)| perturber.perturb_frame(f, &mut residue_rng(seed, i)))
        .collect();
    let g1 = g0.with_frames(perturbed)?;
    let PerturbConfig {
        sigma,
        epsilon,
        seed,
    } = perturber.config;
    Ok(ViewPair {
        g0,
        g1,
        provenance: Provenance::Perturb {
            sigma,
            epsilon,
            seed,
        },
        poses: [pose, pose],
    })
}

/// Snapshots of one chain with their times in ns.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySeries {
    snapshots: Vec<ProteinBackbone>,
    times: Vec<f64>,
}

impl TrajectorySeries {
    pub fn new(snapshots: Vec<ProteinBackbone>, times: Vec<f64>) -> Result<Self, ViewsError> {
        if snapshots.len() != times.len() {
            return Err(ViewsError::InvalidConfig(format!(
                "{} snapshots but {} time stamps",
                snapshots.len(),
                times.len()
            )));
        }
        if snapshots.is_empty() {
            return Err(ViewsError::InvalidConfig(
                "trajectory has no snapshots".into(),
            ));
        }
        if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ViewsError::InvalidConfig(
                "snapshot times must be finite and strictly increasing".into(),
            ));
        }
        let expected = snapshots[0].len();
        if let Some((snapshot, bb)) = snapshots
            .iter()
            .enumerate()
            .find(|(_, bb)| bb.len() != expected)
        {
            return Err(ViewsError::ResidueMismatch {
                snapshot,
                expected,
                found: bb.len(),
            });
        }
        Ok(TrajectorySeries { snapshots, times })
    }

    pub fn snapshots(&self) -> &[ProteinBackbone] {
        &self.snapshots
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn span(&self) -> f64 {
        self.times[self.times.len() - 1] - self.times[0]
    }

    /// Index of the snapshot closest to `time` if it lies within `tolerance`;
    /// the earlier one wins a tie.
    pub fn nearest(&self, time: f64, tolerance: f64) -> Option<usize> {
        let after = self.times.partition_point(|&t| t < time);
        let candidates = [
            after.checked_sub(1),
            (after < self.times.len()).then_some(after),
        ];
        candidates
            .into_iter()
            .flatten()
            .min_by(|&a, &b| {
                (self.times[a] - time)
                    .abs()
                    .total_cmp(&(self.times[b] - time).abs())
            })
            .filter(|&k| (self.times[k] - time).abs() <= tolerance)
    }
}

/// Start times `first + k·stride` whose partner `s + delta` is still inside the trajectory.
fn start_grid(first: f64, last: f64, delta: f64, stride: f64) -> Vec<f64> {
    let slack = 1e-9 * (last - first).abs().max(1.0);
    (0..)
        .map(|k| first + k as f64 * stride)
        .take_while(|s| s + delta <= last + slack)
        .collect()
}

/// Pairs canonicalized snapshots at `s` and `s + delta` for `s` on a grid of
/// spacing `stride` starting at the first snapshot.
///
/// Snapshots are matched to the nearest available time within `stride / 2`;
/// grid points without a match on either side are skipped.
pub fn extract_md_pairs(
    traj: &TrajectorySeries,
    source: &str,
    delta: f64,
    stride: f64,
) -> Result<Vec<ViewPair>, ViewsError> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(ViewsError::InvalidConfig(format!(
            "delta must be finite and > 0, got {delta}"
        )));
    }
    if !(stride > 0.0 && stride.is_finite()) {
        return Err(ViewsError::InvalidConfig(format!(
            "stride must be finite and > 0, got {stride}"
        )));
    }
    let span = traj.span();
    if span < delta {
        return Err(ViewsError::TrajectoryTooShort { span, delta });
    }
    let times = traj.times();
    let tolerance = stride / 2.0;
    let matches: Vec<(f64, usize, usize)> =
        start_grid(times[0], times[times.len() - 1], delta, stride)
            .into_iter()
            .filter_map(|s| {
                let a = traj.nearest(s, tolerance)?;
                let b = traj.nearest(s + delta, tolerance)?;
                (a != b).then_some((s, a, b))
            })
            .collect();

    let canonical: Vec<Option<(ProteinFrames, CanonicalPose)>> = {
        let mut needed = vec![false; times.len()];
        for &(_, a, b) in &matches {
            needed[a] = true;
            needed[b] = true;
        }
        traj.snapshots
            .par_iter()
            .zip(needed.par_iter())
            .map(|(bb, &used)| {
                if !used {
                    return Ok(None);
                }
                let frames = frames_from_backbone(bb)?;
                Ok(Some(canonicalize(&frames)?))
            })
            .collect::<Result<_, ViewsError>>()?
    };

    Ok(matches
        .into_iter()
        .map(|(s, a, b)| {
            let (g0, p0) = canonical[a]
                .clone()
                .expect("matched snapshot canonicalized");
            let (g1, p1) = canonical[b]
                .clone()
                .expect("matched snapshot canonicalized");
            ViewPair {
                g0,
                g1,
                provenance: Provenance::Md {
                    source: source.to_string(),
                    s,
                    delta,
                },
                poses: [p0, p1],
            }
        })
        .collect())
}

/// Body-frame rotation vector of a turn by `angle` about `world_axis` for a
/// frame currently at `r0`.
pub fn world_axis_rotation(r0: &RotationMatrix, world_axis: &Vec3, angle: f64) -> RotationVector {
    RotationVector(r0.transpose().apply(&world_axis.normalize()) * angle)
}

/// `R0 (exp(ω) − I) p`: how far the point `p` of a frame at `r0` moves
/// under the right-multiplied perturbation `exp(ω)`.
pub fn perturbation_displacement(r0: &RotationMatrix, omega: &RotationVector, p: &Vec3) -> Vec3 {
    r0.apply(&(exp_map(omega).apply(p) - p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::igso3::DEFAULT_GRID_SIZE;
    use rand::rngs::StdRng;

    fn perturber(sigma: f64, epsilon: f64, seed: u64) -> Perturber {
        Perturber::new(PerturbConfig {
            sigma,
            epsilon,
            seed,
        })
        .unwrap()
    }

    fn helix_frames(len: usize) -> ProteinFrames {
        let frames = (0..len)
            .map(|i| {
                let a = i as f64 * 100f64.to_radians();
                let t = Vec3::new(2.3 * a.cos(), 2.3 * a.sin(), 1.5 * i as f64);
                RigidTransform::new(t, exp_map(&RotationVector::new(0.0, 0.0, a)))
            })
            .collect();
        ProteinFrames::new(frames, vec![1; len]).unwrap()
    }

    #[test]
    fn translation_noise() {
        let mut rng = StdRng::seed_from_u64(1);
        let t = Vec3::new(1.0, 2.0, 3.0);
        assert_eq!(perturb_translation(&t, 0.0, &mut rng), t);

        let n = 100_000;
        let mut sum_sq = Vec3::zeros();
        for _ in 0..n {
            let d = perturb_translation(&t, 0.03, &mut rng) - t;
            sum_sq += d.component_mul(&d);
        }
        for k in 0..3 {
            let std = (sum_sq[k] / n as f64).sqrt();
            assert!((std / 0.03 - 1.0).abs() < 0.02, "std {std}");
        }

        let a = perturb_translation(&t, 0.03, &mut residue_rng(9, 4));
        let b = perturb_translation(&t, 0.03, &mut residue_rng(9, 4));
        assert_eq!(a.map(f64::to_bits), b.map(f64::to_bits));
    }

    #[test]
    fn small_epsilon_rotation_noise_is_concentrated() {
        let table = build_table(&Igso3Params::new(1e-3)).unwrap();
        let mut rng = StdRng::seed_from_u64(2);
        let r = exp_map(&RotationVector::new(0.3, -1.0, 2.0));
        let mut close = 0;
        for _ in 0..1000 {
            let out = perturb_rotation(&r, &table, &mut rng);
            assert!(out.orthonormality_error() < 1e-9);
            assert!((out.determinant() - 1.0).abs() < 1e-9);
            if r.angle_to(&out) < 0.1 {
                close += 1;
            }
        }
        assert!(close >= 990);
    }

    #[test]
    fn phase1_no_noise_limit_and_determinism() {
        let g = helix_frames(40);
        let table = build_table(&Igso3Params {
            grid_size: DEFAULT_GRID_SIZE,
            ..Igso3Params::new(1e-9)
        })
        .unwrap();
        let quiet = Perturber::with_table(
            PerturbConfig {
                sigma: 0.0,
                epsilon: 1.0,
                seed: 3,
            },
            table,
        )
        .unwrap();
        let pair = make_phase1_pair(&g, &quiet).unwrap();
        for (a, b) in pair.g0.frames().iter().zip(pair.g1.frames()) {
            assert_eq!(a.t, b.t);
            assert!(a.r.angle_to(&b.r) < 1e-3);
        }
        assert_eq!(pair.poses[0], pair.poses[1]);

        let p = perturber(0.03, 0.5, 7);
        assert_eq!(
            make_phase1_pair(&g, &p).unwrap(),
            make_phase1_pair(&g, &p).unwrap()
        );
        let other = make_phase1_pair(&g, &perturber(0.03, 0.5, 8)).unwrap();
        assert_ne!(other.g1, make_phase1_pair(&g, &p).unwrap().g1);
    }

    #[test]
    fn phase1_factorizes_into_translation_then_rotation() {
        let g = helix_frames(12);
        let p = perturber(0.03, 0.5, 11);
        let pair = make_phase1_pair(&g, &p).unwrap();
        for (i, (f0, f1)) in pair.g0.frames().iter().zip(pair.g1.frames()).enumerate() {
            let mut rng = residue_rng(11, i);
            let t = perturb_translation(&f0.t, 0.03, &mut rng);
            let r = perturb_rotation(&f0.r, p.table(), &mut rng);
            assert_eq!(t.map(f64::to_bits), f1.t.map(f64::to_bits));
            assert_eq!(
                r.matrix().map(f64::to_bits),
                f1.r.matrix().map(f64::to_bits)
            );
        }
    }

    #[test]
    fn phase1_is_thread_count_independent() {
        let g = helix_frames(64);
        let p = perturber(0.03, 0.5, 5);
        let single = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let many = rayon::ThreadPoolBuilder::new()
            .num_threads(8)
            .build()
            .unwrap();
        let a = single.install(|| make_phase1_pair(&g, &p).unwrap());
        let b = many.install(|| make_phase1_pair(&g, &p).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn phase1_breaks_pairwise_distances() {
        let g = helix_frames(10);
        for seed in 0..100 {
            let pair = make_phase1_pair(&g, &perturber(0.03, 0.5, seed)).unwrap();
            let (t0, t1) = (pair.g0.translations(), pair.g1.translations());
            let changed =
                (0..10).any(|i| (0..i).any(|j| (t0[i] - t0[j]).norm() != (t1[i] - t1[j]).norm()));
            assert!(changed, "seed {seed}");
        }
    }

    #[test]
    fn invalid_configs() {
        assert!(matches!(
            Perturber::new(PerturbConfig {
                sigma: -1.0,
                ..Default::default()
            }),
            Err(ViewsError::InvalidConfig(_))
        ));
        assert!(matches!(
            Perturber::new(PerturbConfig {
                epsilon: 0.0,
                ..Default::default()
            }),
            Err(ViewsError::InvalidConfig(_))
        ));
    }

    #[test]
    fn anisotropy_witness() {
        let p = Vec3::z();
        let axis = Vec3::z();
        let theta = std::f64::consts::FRAC_PI_2;
        let ra = RotationMatrix::identity();
        let rb = exp_map(&RotationVector::new(0.0, theta, 0.0));
        let da = perturbation_displacement(&ra, &world_axis_rotation(&ra, &axis, theta), &p);
        let db = perturbation_displacement(&rb, &world_axis_rotation(&rb, &axis, theta), &p);
        assert!(da.norm() < 1e-12);
        assert!((db.norm() - 2f64.sqrt()).abs() < 1e-12);
        assert!((db.norm() - da.norm()).abs() > 0.1 * p.norm());
        // the same body-frame vector moves p by the same distance from any start
        let w = RotationVector::new(0.2, -0.4, 0.9);
        let same_a = perturbation_displacement(&ra, &w, &p).norm();
        let same_b = perturbation_displacement(&rb, &w, &p).norm();
        assert!((same_a - same_b).abs() < 1e-12);
    }

    #[test]
    fn nearest_snapshot_matching() {
        let bb = crate::backbone::backbone_from_frames(&helix_frames(5)).unwrap();
        let traj =
            TrajectorySeries::new(vec![bb.clone(), bb.clone(), bb], vec![0.0, 1.0, 2.5]).unwrap();
        assert_eq!(traj.nearest(0.4, 0.5), Some(0));
        assert_eq!(traj.nearest(0.5, 0.5), Some(0));
        assert_eq!(traj.nearest(1.8, 0.5), None);
        assert_eq!(traj.nearest(2.2, 0.5), Some(2));
        assert_eq!(traj.nearest(9.0, 0.5), None);
    }

    #[test]
    fn trajectory_validation() {
        let bb = crate::backbone::backbone_from_frames(&helix_frames(5)).unwrap();
        let short = crate::backbone::backbone_from_frames(&helix_frames(4)).unwrap();
        assert!(matches!(
            TrajectorySeries::new(vec![bb.clone(), short], vec![0.0, 1.0]),
            Err(ViewsError::ResidueMismatch {
                snapshot: 1,
                expected: 5,
                found: 4
            })
        ));
        assert!(matches!(
            TrajectorySeries::new(vec![bb.clone(), bb.clone()], vec![1.0, 1.0]),
            Err(ViewsError::InvalidConfig(_))
        ));
        let traj = TrajectorySeries::new(vec![bb.clone(), bb], vec![0.0, 1.0]).unwrap();
        let err = extract_md_pairs(&traj, "x", 2.0, 2.0).unwrap_err();
        assert_eq!(err.name(), "TrajectoryTooShort");
    }
}
