//! Isotropic Gaussian distribution on SO(3).
//!
//! A sample is `μ · exp(θ n̂)` with the axis `n̂` uniform on the sphere and the
//! angle `θ` drawn from the angle marginal
//!
//! ```text
//! p(θ) = (1 − cos θ)/π · Σ_l (2l+1) e^{−l(l+1)ε²} sin((l+½)θ) / sin(θ/2)
//! ```
//!
//! For small ε the series converges slowly and the closed-form heat-kernel
//! approximation is used instead. Its variance parameter is `ε²`, the same
//! quantity that multiplies `l(l+1)` in the series exponent.
//!
//! Angles are sampled by inverse transform on a tabulated CDF: the density is
//! evaluated on a uniform grid over `[0, π]`, renormalized with the trapezoid
//! rule, accumulated, and inverted by linear interpolation.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::so3::{exp_map, RotationMatrix, RotationVector, Vec3};

pub const DEFAULT_L_MAX: usize = 2000;
pub const DEFAULT_GRID_SIZE: usize = 8192;
pub const DEFAULT_APPROX_THRESHOLD: f64 = 0.1;
pub const MIN_GRID_SIZE: usize = 256;

/// Series terms are dropped once their envelope falls below this.
const SERIES_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Igso3Error {
    #[error("InvalidParams: {0}")]
    InvalidParams(String),
    #[error("DegenerateDensity: every tabulated density value is below 1e-300")]
    DegenerateDensity,
}

impl Igso3Error {
    pub fn name(&self) -> &'static str {
        match self {
            Igso3Error::InvalidParams(_) => "InvalidParams",
            Igso3Error::DegenerateDensity => "DegenerateDensity",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Igso3Params {
    pub epsilon: f64,
    pub l_max: usize,
    pub grid_size: usize,
    /// Concentrations below this use the closed-form approximation.
    pub approx_threshold: f64,
}

impl Igso3Params {
    pub fn new(epsilon: f64) -> Self {
        Igso3Params {
            epsilon,
            l_max: DEFAULT_L_MAX,
            grid_size: DEFAULT_GRID_SIZE,
            approx_threshold: DEFAULT_APPROX_THRESHOLD,
        }
    }

    pub fn validate(&self) -> Result<(), Igso3Error> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Igso3Error::InvalidParams(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.l_max < 1 {
            return Err(Igso3Error::InvalidParams("l_max must be at least 1".into()));
        }
        if self.grid_size < MIN_GRID_SIZE {
            return Err(Igso3Error::InvalidParams(format!(
                "grid_size must be at least {MIN_GRID_SIZE}, got {}",
                self.grid_size
            )));
        }
        Ok(())
    }

    pub fn uses_series(&self) -> bool {
        self.epsilon >= self.approx_threshold
    }
}

/// Truncated series for the angle density.
///
/// Summation stops at `l_max` or once `(2l+1)² e^{−l(l+1)ε²}`, which bounds
/// the magnitude of term `l`, drops below `1e-12` past its peak. Negative
/// partial sums (truncation ringing) are clamped to zero.
pub fn angle_pdf_series(theta: f64, epsilon: f64, l_max: usize) -> f64 {
    let half_sin = (theta / 2.0).sin();
    if half_sin == 0.0 {
        return 0.0;
    }
    let eps2 = epsilon * epsilon;
    let mut sum = 0.0;
    for l in 0..=l_max {
        let lf = l as f64;
        let decay = (-lf * (lf + 1.0) * eps2).exp();
        if decay == 0.0 {
            break;
        }
        let degree = 2.0 * lf + 1.0;
        sum += degree * decay * ((lf + 0.5) * theta).sin() / half_sin;
        if lf * (lf + 1.0) * eps2 > 1.0 && degree * degree * decay < SERIES_TOLERANCE {
            break;
        }
    }
    ((1.0 - theta.cos()) / PI * sum).max(0.0)
}

/// Natural log of the small-ε approximation; `-inf` at θ = 0.
fn ln_angle_pdf_approx(theta: f64, epsilon: f64) -> f64 {
    if theta <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let t = epsilon * epsilon;
    // (1 − cos θ)/(2 sin(θ/2)) = sin(θ/2); the periodic images are folded
    // into exponents that cannot overflow.
    let bracket = theta
        - (theta - 2.0 * PI) * (-PI * (PI - theta) / t).exp()
        - (theta + 2.0 * PI) * (-PI * (PI + theta) / t).exp();
    (theta / 2.0).sin().ln() - 0.5 * PI.ln() - 1.5 * t.ln() + t / 4.0 - theta * theta / (4.0 * t)
        + bracket.ln()
}

/// Closed-form approximation of the angle density for small ε.
pub fn angle_pdf_approx(theta: f64, epsilon: f64) -> f64 {
    ln_angle_pdf_approx(theta, epsilon).exp()
}

/// Angle marginal of the uniform distribution on SO(3).
pub fn uniform_limit_pdf(theta: f64) -> f64 {
    (1.0 - theta.cos()) / PI
}

fn trapezoid(values: &[f64], step: f64) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let inner: f64 = values[1..n - 1].iter().sum();
    step * (inner + 0.5 * (values[0] + values[n - 1]))
}

/// Tabulated angle density and CDF for one concentration.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleDensityTable {
    epsilon: f64,
    thetas: Vec<f64>,
    pdf: Vec<f64>,
    cdf: Vec<f64>,
    raw_mass: f64,
}

impl AngleDensityTable {
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    /// Renormalized density on the grid.
    pub fn pdf(&self) -> &[f64] {
        &self.pdf
    }

    pub fn cdf(&self) -> &[f64] {
        &self.cdf
    }

    /// Trapezoidal mass of the density before renormalization.
    pub fn raw_mass(&self) -> f64 {
        self.raw_mass
    }

    fn step(&self) -> f64 {
        self.thetas[1] - self.thetas[0]
    }

    fn locate(&self, theta: f64) -> (usize, f64) {
        let last = self.thetas.len() - 1;
        let pos = (theta / self.step()).clamp(0.0, last as f64);
        let k = (pos.floor() as usize).min(last - 1);
        (k, (theta - self.thetas[k]) / self.step())
    }

    /// Piecewise-linear CDF; the exact inverse of [`sample_angle`].
    pub fn cdf_at(&self, theta: f64) -> f64 {
        if theta <= 0.0 {
            return 0.0;
        }
        if theta >= PI {
            return 1.0;
        }
        let (k, frac) = self.locate(theta);
        self.cdf[k] + frac.clamp(0.0, 1.0) * (self.cdf[k + 1] - self.cdf[k])
    }

    pub fn pdf_at(&self, theta: f64) -> f64 {
        let (k, frac) = self.locate(theta.clamp(0.0, PI));
        self.pdf[k] + frac.clamp(0.0, 1.0) * (self.pdf[k + 1] - self.pdf[k])
    }

    pub fn sample_angle(&self, u: f64) -> f64 {
        sample_angle(self, u)
    }
}

pub fn build_table(params: &Igso3Params) -> Result<AngleDensityTable, Igso3Error> {
    params.validate()?;
    let n = params.grid_size;
    let step = PI / (n - 1) as f64;
    let thetas: Vec<f64> = (0..n)
        .map(|k| if k == n - 1 { PI } else { k as f64 * step })
        .collect();

    // Work relative to the largest value so that very concentrated
    // approximations do not underflow to an all-zero table.
    let (mut pdf, scale) = if params.uses_series() {
        let pdf: Vec<f64> = thetas
            .iter()
            .map(|&t| angle_pdf_series(t, params.epsilon, params.l_max))
            .collect();
        (pdf, 1.0)
    } else {
        let logs: Vec<f64> = thetas
            .iter()
            .map(|&t| ln_angle_pdf_approx(t, params.epsilon))
            .collect();
        let peak = logs
            .iter()
            .copied()
            .filter(|v| v.is_finite())
            .fold(f64::NEG_INFINITY, f64::max);
        if !peak.is_finite() {
            return Err(Igso3Error::DegenerateDensity);
        }
        (logs.iter().map(|v| (v - peak).exp()).collect(), peak.exp())
    };

    if pdf.iter().any(|v| !v.is_finite()) || pdf.iter().all(|&v| v < 1e-300) {
        return Err(Igso3Error::DegenerateDensity);
    }
    let mass = trapezoid(&pdf, step);
    let raw_mass = mass * scale;
    for v in pdf.iter_mut() {
        *v /= mass;
    }

    let mut cdf = Vec::with_capacity(n);
    let mut acc = 0.0;
    cdf.push(0.0);
    for k in 1..n {
        acc += 0.5 * step * (pdf[k - 1] + pdf[k]);
        cdf.push(acc);
    }
    let total = cdf[n - 1];
    for c in cdf.iter_mut() {
        *c /= total;
    }
    cdf[n - 1] = 1.0;

    Ok(AngleDensityTable {
        epsilon: params.epsilon,
        thetas,
        pdf,
        cdf,
        raw_mass,
    })
}

/// Inverse CDF by linear interpolation; `u` is clamped to `[0, 1]`.
pub fn sample_angle(table: &AngleDensityTable, u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    let cdf = &table.cdf;
    let k = cdf.partition_point(|&c| c < u);
    if k == 0 {
        return table.thetas[0];
    }
    let k = k.min(cdf.len() - 1);
    let frac = (u - cdf[k - 1]) / (cdf[k] - cdf[k - 1]);
    table.thetas[k - 1] + frac * (table.thetas[k] - table.thetas[k - 1])
}

/// Uniform direction on S² from a normalized standard Gaussian.
pub fn sample_axis<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        );
        let n = v.norm();
        if n >= 1e-8 {
            return v / n;
        }
    }
}

/// Draws `μ · exp(θ n̂)`: axis first, then angle.
pub fn sample_rotation<R: Rng + ?Sized>(
    mu: &RotationMatrix,
    table: &AngleDensityTable,
    rng: &mut R,
) -> RotationMatrix {
    let axis = sample_axis(rng);
    let theta = sample_angle(table, rng.random::<f64>());
    *mu * exp_map(&RotationVector::from_axis_angle(&axis, theta))
}

#[cfg(test)]
mod tests {
    use std::f64::consts::FRAC_PI_2;

    use rand::SeedableRng;

    use super::*;

    fn grid(n: usize) -> (Vec<f64>, f64) {
        let step = PI / (n - 1) as f64;
        ((0..n).map(|k| k as f64 * step).collect(), step)
    }

    #[test]
    fn series_vanishes_at_zero() {
        assert_eq!(angle_pdf_series(0.0, 0.5, DEFAULT_L_MAX), 0.0);
    }

    #[test]
    fn series_reaches_uniform_limit() {
        let (thetas, _) = grid(2001);
        for t in thetas {
            assert!((angle_pdf_series(t, 10.0, DEFAULT_L_MAX) - uniform_limit_pdf(t)).abs() < 1e-3);
        }
    }

    #[test]
    fn series_integrates_to_one() {
        let (thetas, step) = grid(8192);
        let values: Vec<f64> = thetas
            .iter()
            .map(|&t| angle_pdf_series(t, 0.5, DEFAULT_L_MAX))
            .collect();
        assert!((trapezoid(&values, step) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn approximation_integrates_to_one() {
        let (thetas, step) = grid(8192);
        let values: Vec<f64> = thetas.iter().map(|&t| angle_pdf_approx(t, 0.05)).collect();
        assert!((trapezoid(&values, step) - 1.0).abs() < 1e-2);
    }

    #[test]
    fn approximation_agrees_with_long_series_near_mode() {
        let (thetas, _) = grid(8192);
        let series: Vec<f64> = thetas
            .iter()
            .map(|&t| angle_pdf_series(t, 0.05, 5000))
            .collect();
        let mode = (0..series.len())
            .max_by(|&a, &b| series[a].total_cmp(&series[b]))
            .unwrap();
        for k in mode.saturating_sub(20)..=mode + 20 {
            let approx = angle_pdf_approx(thetas[k], 0.05);
            assert!(
                (approx - series[k]).abs() / series[k] < 0.02,
                "theta {}",
                thetas[k]
            );
        }
    }

    #[test]
    fn approximation_is_concentrated() {
        assert!(angle_pdf_approx(FRAC_PI_2, 0.01) < 1e-100);
        assert_eq!(angle_pdf_approx(0.0, 0.05), 0.0);
        assert!(angle_pdf_approx(1e-9, 0.05) < 1e-6);
    }

    #[test]
    fn uniform_limit_values() {
        assert_eq!(uniform_limit_pdf(0.0), 0.0);
        assert_eq!(uniform_limit_pdf(PI), 2.0 / PI);
        let (thetas, step) = grid(100_001);
        let values: Vec<f64> = thetas.iter().map(|&t| uniform_limit_pdf(t)).collect();
        assert!((trapezoid(&values, step) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn table_cdf_is_monotone_with_exact_endpoints() {
        let table = build_table(&Igso3Params::new(0.5)).unwrap();
        assert_eq!(table.thetas().len(), 8192);
        assert_eq!(table.cdf()[0], 0.0);
        assert_eq!(*table.cdf().last().unwrap(), 1.0);
        assert!(table.cdf().windows(2).all(|w| w[0] <= w[1]));
        assert!(table.pdf().iter().all(|&p| p >= 0.0));
        assert!((trapezoid(table.pdf(), table.step()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn large_epsilon_table_is_uniform() {
        let table = build_table(&Igso3Params::new(10.0)).unwrap();
        let max_dev = table
            .thetas()
            .iter()
            .zip(table.pdf())
            .map(|(&t, &p)| (p - uniform_limit_pdf(t)).abs())
            .fold(0.0, f64::max);
        assert!(max_dev < 1e-3);
    }

    #[test]
    fn tiny_epsilon_table_is_still_usable() {
        let table = build_table(&Igso3Params::new(1e-9)).unwrap();
        assert!(table.sample_angle(0.999) < 1e-3);
        assert!(table.raw_mass().is_finite());
    }

    #[test]
    fn invalid_params_are_rejected() {
        assert!(matches!(
            build_table(&Igso3Params::new(0.0)),
            Err(Igso3Error::InvalidParams(_))
        ));
        let mut p = Igso3Params::new(0.5);
        p.grid_size = 100;
        assert!(matches!(build_table(&p), Err(Igso3Error::InvalidParams(_))));
        p.grid_size = 512;
        p.l_max = 0;
        assert!(build_table(&p).is_err());
    }

    #[test]
    fn sample_angle_endpoints_and_monotonicity() {
        let table = build_table(&Igso3Params::new(0.5)).unwrap();
        assert_eq!(sample_angle(&table, 0.0), 0.0);
        assert_eq!(sample_angle(&table, 1.0), PI);
        let mut rng = rand::rngs::StdRng::seed_from_u64(11);
        for _ in 0..1000 {
            let (a, b): (f64, f64) = (rng.random(), rng.random());
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            assert!(sample_angle(&table, lo) <= sample_angle(&table, hi));
        }
    }

    #[test]
    fn cdf_at_inverts_sample_angle() {
        let table = build_table(&Igso3Params::new(0.7)).unwrap();
        for k in 1..100 {
            let u = k as f64 / 100.0;
            assert!((table.cdf_at(sample_angle(&table, u)) - u).abs() < 1e-12);
        }
    }

    #[test]
    fn axis_is_unit() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(12);
        for _ in 0..1000 {
            assert!((sample_axis(&mut rng).norm() - 1.0).abs() < 1e-12);
        }
    }
}
