//! Statistical oracles and fixture builders shared by the test suites.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rigid_frames::backbone::{frames_from_backbone, ProteinBackbone};
use rigid_frames::canonicalize::{inertia_tensor, principal_axes, CanonicalizeError};
use rigid_frames::so3::{exp_map, RotationMatrix, RotationVector, Vec3};
use rigid_frames::synth::random_chain;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Two-sided Kolmogorov–Smirnov distance between a sample and a CDF.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted.iter().enumerate().fold(0.0, |d, (i, &x)| {
        let f = cdf(x);
        d.max((i + 1) as f64 / n - f).max(f - i as f64 / n)
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson test of `samples` against `bins` bins of equal probability under `cdf`.
pub fn chi_square_test(samples: &[f64], cdf: impl Fn(f64) -> f64, bins: usize) -> ChiSquare {
    let mut counts = vec![0usize; bins];
    for &x in samples {
        let k = ((cdf(x) * bins as f64) as usize).min(bins - 1);
        counts[k] += 1;
    }
    let expected = samples.len() as f64 / bins as f64;
    let statistic = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    let dof = bins - 1;
    let p_value = ChiSquared::new(dof as f64)
        .expect("positive degrees of freedom")
        .sf(statistic);
    ChiSquare {
        statistic,
        dof,
        p_value,
    }
}

/// Smallest gap between consecutive principal moments of the CA cloud,
/// relative to the largest moment.
pub fn relative_gap(bb: &ProteinBackbone) -> Result<f64, CanonicalizeError> {
    let ca = bb.ca_positions();
    let centroid = ca.iter().fold(Vec3::zeros(), |a, p| a + p) / ca.len() as f64;
    let centered: Vec<Vec3> = ca.iter().map(|p| p - centroid).collect();
    let (_, m) = principal_axes(&inertia_tensor(&centered))?;
    Ok((m[1] - m[0]).min(m[2] - m[1]) / m[2])
}

/// Named random chains of 30 to 120 residues whose principal moments are
/// separated by more than `min_gap` (relative).
pub fn fixture_corpus(count: usize, min_gap: f64, seed: u64) -> Vec<(String, ProteinBackbone)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let len = rng.random_range(30..=120);
        let bb = random_chain(len, &mut rng).expect("ideal chains are valid");
        if frames_from_backbone(&bb).is_err() {
            continue;
        }
        if relative_gap(&bb).is_ok_and(|g| g > min_gap) {
            out.push((format!("fixture_{:03}", out.len()), bb));
        }
    }
    out
}

/// Rotation with a uniformly random axis and an angle uniform in `[0, π)`.
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> RotationMatrix {
    let axis = rigid_frames::igso3::sample_axis(rng);
    exp_map(&RotationVector::from_axis_angle(
        &axis,
        rng.random_range(0.0..std::f64::consts::PI),
    ))
}

/// Random rotation together with a shift of up to `reach` Å per coordinate.
pub fn random_rigid_motion<R: Rng + ?Sized>(rng: &mut R, reach: f64) -> (RotationMatrix, Vec3) {
    let r = random_rotation(rng);
    let s = Vec3::new(
        rng.random_range(-reach..reach),
        rng.random_range(-reach..reach),
        rng.random_range(-reach..reach),
    );
    (r, s)
}
