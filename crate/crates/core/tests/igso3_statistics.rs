use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rigid_frames::igso3::{
    angle_pdf_series, build_table, sample_rotation, Igso3Params, DEFAULT_L_MAX,
};
use rigid_frames::so3::{log_map, RotationMatrix, Vec3};
use testkit::{chi_square_test, ks_statistic, random_rotation};

fn sampled_angles(epsilon: f64, n: usize, seed: u64) -> Vec<f64> {
    let table = build_table(&Igso3Params::new(epsilon)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| sample_rotation(&RotationMatrix::identity(), &table, &mut rng).angle())
        .collect()
}

#[test]
fn angles_follow_the_tabulated_cdf() {
    let table = build_table(&Igso3Params::new(0.5)).unwrap();
    let angles = sampled_angles(0.5, 100_000, 1);
    let ks = ks_statistic(&angles, |x| table.cdf_at(x));
    assert!(ks < 0.01, "KS {ks}");
    let chi = chi_square_test(&angles, |x| table.cdf_at(x), 64);
    assert!(chi.p_value > 0.01, "{chi:?}");
}

#[test]
fn inverse_sampling_median_matches_rejection_sampling() {
    // Rejection sampling straight from the series density shares no code
    // with the tabulated inverse CDF.
    let eps = 0.5;
    let bound = (0..2000)
        .map(|k| angle_pdf_series(k as f64 * std::f64::consts::PI / 1999.0, eps, DEFAULT_L_MAX))
        .fold(0.0, f64::max)
        * 1.05;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut accepted = Vec::with_capacity(1_000_000);
    while accepted.len() < 1_000_000 {
        let theta = rng.random_range(0.0..std::f64::consts::PI);
        if rng.random::<f64>() * bound < angle_pdf_series(theta, eps, DEFAULT_L_MAX) {
            accepted.push(theta);
        }
    }
    accepted.sort_by(f64::total_cmp);
    let rejection_median = accepted[accepted.len() / 2];
    let table = build_table(&Igso3Params::new(eps)).unwrap();
    let inverse_median = table.sample_angle(0.5);
    assert!(
        (rejection_median - inverse_median).abs() < 2e-3,
        "{rejection_median} vs {inverse_median}"
    );
}

#[test]
fn axes_are_isotropic() {
    let table = build_table(&Igso3Params::new(1.0)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 50_000;
    let mut mean = Vec3::zeros();
    let mut second = nalgebra::Matrix3::<f64>::zeros();
    for _ in 0..n {
        let r = sample_rotation(&RotationMatrix::identity(), &table, &mut rng);
        let w = log_map(&r).map(|v| v.0).unwrap_or_default();
        if w.norm() > 1e-9 {
            let axis = w.normalize();
            mean += axis;
            second += axis * axis.transpose();
        }
    }
    mean /= n as f64;
    second /= n as f64;
    assert!(mean.norm() < 0.02, "mean axis {mean}");
    assert!((second - nalgebra::Matrix3::identity() / 3.0).abs().max() < 0.01);
}

#[test]
fn smaller_epsilon_concentrates_angles() {
    let means: Vec<f64> = [0.1, 0.3, 0.5, 1.0, 2.0]
        .iter()
        .map(|&e| {
            let a = sampled_angles(e, 20_000, 4);
            a.iter().sum::<f64>() / a.len() as f64
        })
        .collect();
    assert!(means.windows(2).all(|w| w[0] < w[1]), "{means:?}");
}

#[test]
fn left_invariance_and_determinism() {
    let table = build_table(&Igso3Params::new(0.5)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mu = random_rotation(&mut rng);
    let mut a = ChaCha8Rng::seed_from_u64(6);
    let mut b = ChaCha8Rng::seed_from_u64(6);
    let mut deviations = Vec::new();
    for _ in 0..20_000 {
        let centered = sample_rotation(&mu, &table, &mut a);
        let plain = sample_rotation(&RotationMatrix::identity(), &table, &mut b);
        assert!(((mu * plain).matrix() - centered.matrix()).abs().max() < 1e-12);
        deviations.push(mu.angle_to(&centered));
    }
    let chi = chi_square_test(&deviations, |x| table.cdf_at(x), 32);
    assert!(chi.p_value > 0.01, "{chi:?}");

    let first = sampled_angles(0.5, 100, 9);
    let second = sampled_angles(0.5, 100, 9);
    assert_eq!(first, second);
}
