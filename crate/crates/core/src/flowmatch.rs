//! Flow-matching targets and losses on residue frames.
//!
//! The path from `g0` to `g1` interpolates translations linearly and rotations
//! by SLERP on unit quaternions. Its velocity is the regression target for a
//! [`VelocityPredictor`]; the rotational part lives in quaternion tangent
//! space `R⁴`.
//!
//! Losses are averaged over residues and τ points. Per-term contributions are
//! reduced by pairwise summation in a fixed order, so results are identical
//! for any number of threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backbone::{ProteinFrames, RigidTransform};
use crate::so3::{
    lerp, matrix_from_quat, quat_from_matrix, slerp, slerp_derivative, QuaternionTangent, So3Error,
    UnitQuaternion, Vec3,
};
use crate::views::ViewPair;

/// Loss increases in a row after which fitting gives up.
pub const DIVERGENCE_PATIENCE: usize = 50;
pub const DEFAULT_FIT_STEPS: usize = 5000;
pub const DEFAULT_FIT_LR: f64 = 0.1;

/// A predicted τ must lie this close to a grid point of a [`TabularPredictor`].
const TAU_MATCH: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlowError {
    #[error("InvalidTau: tau {tau} outside [0, 1]")]
    InvalidTau { tau: f64 },
    #[error("EmptyTaus: no tau points given")]
    EmptyTaus,
    #[error("AntipodalPair: residue {index} has quaternion dot {dot:.3e}")]
    AntipodalPair { index: usize, dot: f64 },
    #[error("LengthMismatch: g0 has {g0} residues, g1 has {g1}")]
    LengthMismatch { g0: usize, g1: usize },
    #[error("PredictorShape: expected {expected} residues, predictor returned {found}")]
    PredictorShape { expected: usize, found: usize },
    #[error("NonFinite: predictor returned a non-finite velocity at residue {index}")]
    NonFinite { index: usize },
    #[error("TauNotInTable: tau {tau} is not a grid point of the table")]
    TauNotInTable { tau: f64 },
    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),
    #[error("Diverged: loss rose for {DIVERGENCE_PATIENCE} consecutive steps (step {step}, loss {loss:e})")]
    Diverged { step: usize, loss: f64 },
}

impl FlowError {
    pub fn name(&self) -> &'static str {
        match self {
            FlowError::InvalidTau { .. } => "InvalidTau",
            FlowError::EmptyTaus => "EmptyTaus",
            FlowError::AntipodalPair { .. } => "AntipodalPair",
            FlowError::LengthMismatch { .. } => "LengthMismatch",
            FlowError::PredictorShape { .. } => "PredictorShape",
            FlowError::NonFinite { .. } => "NonFinite",
            FlowError::TauNotInTable { .. } => "TauNotInTable",
            FlowError::InvalidConfig(_) => "InvalidConfig",
            FlowError::Diverged { .. } => "Diverged",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// `g0 → g1`.
    Forward,
    /// `g1 → g0`, evaluated on the swapped pair.
    Backward,
    Bidirectional,
}

/// A point on the interpolation path.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolatedState {
    pub tau: f64,
    /// Which way along the pair the path runs.
    pub direction: Direction,
    pub frames: ProteinFrames,
    /// Quaternions the rotations of `frames` were built from.
    pub quats: Vec<UnitQuaternion>,
}

/// Per-residue translation and quaternion velocities.
#[derive(Debug, Clone, PartialEq)]
pub struct Velocities {
    pub u_trans: Vec<Vec3>,
    pub u_rot: Vec<QuaternionTangent>,
}

pub type VelocityTarget = Velocities;

impl Velocities {
    pub fn zeros(len: usize) -> Self {
        Velocities {
            u_trans: vec![Vec3::zeros(); len],
            u_rot: vec![QuaternionTangent::zero(); len],
        }
    }

    pub fn len(&self) -> usize {
        self.u_trans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u_trans.is_empty()
    }
}

pub trait VelocityPredictor: Sync {
    fn predict(&self, state: &InterpolatedState) -> Result<Velocities, FlowError>;
}

/// Always predicts zero velocity.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroPredictor;

impl VelocityPredictor for ZeroPredictor {
    fn predict(&self, state: &InterpolatedState) -> Result<Velocities, FlowError> {
        Ok(Velocities::zeros(state.frames.len()))
    }
}

/// Returns the exact path velocity of a known pair, ignoring the state's frames.
#[derive(Debug, Clone)]
pub struct OraclePredictor {
    forward: ViewPair,
    backward: ViewPair,
}

impl OraclePredictor {
    pub fn new(pair: &ViewPair) -> Self {
        OraclePredictor {
            forward: pair.clone(),
            backward: pair.swapped(),
        }
    }
}

impl VelocityPredictor for OraclePredictor {
    fn predict(&self, state: &InterpolatedState) -> Result<Velocities, FlowError> {
        let pair = match state.direction {
            Direction::Backward => &self.backward,
            _ => &self.forward,
        };
        target_velocity(pair, state.tau)
    }
}

/// Free velocity values indexed by τ grid point and residue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityTable {
    /// `[tau][residue]`
    pub u_trans: Vec<Vec<[f64; 3]>>,
    /// `[tau][residue]`
    pub u_rot: Vec<Vec<[f64; 4]>>,
}

impl VelocityTable {
    pub fn zeros(n_taus: usize, len: usize) -> Self {
        VelocityTable {
            u_trans: vec![vec![[0.0; 3]; len]; n_taus],
            u_rot: vec![vec![[0.0; 4]; len]; n_taus],
        }
    }

    fn velocities(&self, k: usize) -> Velocities {
        Velocities {
            u_trans: self.u_trans[k].iter().map(|v| Vec3::from(*v)).collect(),
            u_rot: self.u_rot[k]
                .iter()
                .map(|v| QuaternionTangent(*v))
                .collect(),
        }
    }
}

/// Lookup-table velocity field with one table per direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularPredictor {
    pub taus: Vec<f64>,
    pub forward: VelocityTable,
    pub backward: VelocityTable,
}

impl TabularPredictor {
    pub fn zeros(taus: &[f64], len: usize) -> Self {
        TabularPredictor {
            taus: taus.to_vec(),
            forward: VelocityTable::zeros(taus.len(), len),
            backward: VelocityTable::zeros(taus.len(), len),
        }
    }

    /// Table filled with the exact targets of `pair`.
    pub fn exact(pair: &ViewPair, taus: &[f64]) -> Result<Self, FlowError> {
        let mut table = TabularPredictor::zeros(taus, pair.g0.len());
        for (dir_pair, dir_table) in [
            (pair.clone(), &mut table.forward),
            (pair.swapped(), &mut table.backward),
        ] {
            for (k, &tau) in taus.iter().enumerate() {
                let target = target_velocity(&dir_pair, tau)?;
                dir_table.u_trans[k] = target.u_trans.iter().map(|v| [v.x, v.y, v.z]).collect();
                dir_table.u_rot[k] = target.u_rot.iter().map(|v| v.0).collect();
            }
        }
        Ok(table)
    }

    pub fn table(&self, direction: Direction) -> &VelocityTable {
        match direction {
            Direction::Backward => &self.backward,
            _ => &self.forward,
        }
    }

    pub fn table_mut(&mut self, direction: Direction) -> &mut VelocityTable {
        match direction {
            Direction::Backward => &mut self.backward,
            _ => &mut self.forward,
        }
    }

    fn tau_index(&self, tau: f64) -> Option<usize> {
        self.taus.iter().position(|&t| (t - tau).abs() <= TAU_MATCH)
    }

    /// Parameters in a fixed order: direction, τ, residue, then
    /// three translation and four rotation components.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for table in [&self.forward, &self.backward] {
            for (trans, rot) in table.u_trans.iter().zip(&table.u_rot) {
                for (t, r) in trans.iter().zip(rot) {
                    out.extend_from_slice(t);
                    out.extend_from_slice(r);
                }
            }
        }
        out
    }

    /// Inverse of [`TabularPredictor::params`].
    pub fn set_params(&mut self, values: &[f64]) {
        let mut it = values.iter().copied();
        for table in [&mut self.forward, &mut self.backward] {
            for (trans, rot) in table.u_trans.iter_mut().zip(table.u_rot.iter_mut()) {
                for (t, r) in trans.iter_mut().zip(rot.iter_mut()) {
                    for v in t.iter_mut().chain(r.iter_mut()) {
                        *v = it.next().expect("parameter vector too short");
                    }
                }
            }
        }
    }
}

impl VelocityPredictor for TabularPredictor {
    fn predict(&self, state: &InterpolatedState) -> Result<Velocities, FlowError> {
        let k = self
            .tau_index(state.tau)
            .ok_or(FlowError::TauNotInTable { tau: state.tau })?;
        Ok(self.table(state.direction).velocities(k))
    }
}

/// Loss of one direction, or the sum of both.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub l_r3: f64,
    pub l_so3: f64,
    pub total: f64,
    pub direction: Direction,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BidirectionalLoss {
    pub forward: LossReport,
    pub backward: LossReport,
    /// Component-wise sum of both directions.
    pub combined: LossReport,
}

/// τ grid `0.05, 0.15, …, 0.95`.
pub fn default_taus() -> Vec<f64> {
    (0..10).map(|k| (2 * k + 1) as f64 / 20.0).collect()
}

/// `n` points drawn uniformly from `[0, 1)`.
pub fn random_taus<R: rand::Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.random::<f64>()).collect()
}

fn check_tau(tau: f64) -> Result<(), FlowError> {
    if (0.0..=1.0).contains(&tau) {
        Ok(())
    } else {
        Err(FlowError::InvalidTau { tau })
    }
}

fn check_pair(pair: &ViewPair) -> Result<(), FlowError> {
    if pair.g0.len() != pair.g1.len() {
        return Err(FlowError::LengthMismatch {
            g0: pair.g0.len(),
            g1: pair.g1.len(),
        });
    }
    Ok(())
}

fn with_index(index: usize) -> impl Fn(So3Error) -> FlowError {
    move |e| match e {
        So3Error::AntipodalPair { dot } => FlowError::AntipodalPair { index, dot },
        other => unreachable!("unit quaternions only fail as antipodal pairs: {other}"),
    }
}

fn interpolate_in(
    pair: &ViewPair,
    tau: f64,
    direction: Direction,
) -> Result<InterpolatedState, FlowError> {
    check_pair(pair)?;
    check_tau(tau)?;
    let mut frames = Vec::with_capacity(pair.g0.len());
    let mut quats = Vec::with_capacity(pair.g0.len());
    for (i, (f0, f1)) in pair.g0.frames().iter().zip(pair.g1.frames()).enumerate() {
        let q = slerp(&quat_from_matrix(&f0.r), &quat_from_matrix(&f1.r), tau)
            .map_err(with_index(i))?;
        frames.push(RigidTransform::new(
            lerp(&f0.t, &f1.t, tau),
            matrix_from_quat(&q),
        ));
        quats.push(q);
    }
    let frames = pair.g0.with_frames(frames).expect("amino acids unchanged");
    Ok(InterpolatedState {
        tau,
        direction,
        frames,
        quats,
    })
}

/// Point at `tau` on the path from `g0` to `g1`.
pub fn interpolate(pair: &ViewPair, tau: f64) -> Result<InterpolatedState, FlowError> {
    interpolate_in(pair, tau, Direction::Forward)
}

/// Velocity of the path at `tau`: `t1 − t0` and the SLERP derivative.
pub fn target_velocity(pair: &ViewPair, tau: f64) -> Result<VelocityTarget, FlowError> {
    check_pair(pair)?;
    check_tau(tau)?;
    let mut u_trans = Vec::with_capacity(pair.g0.len());
    let mut u_rot = Vec::with_capacity(pair.g0.len());
    for (i, (f0, f1)) in pair.g0.frames().iter().zip(pair.g1.frames()).enumerate() {
        u_trans.push(f1.t - f0.t);
        u_rot.push(
            slerp_derivative(&quat_from_matrix(&f0.r), &quat_from_matrix(&f1.r), tau)
                .map_err(with_index(i))?,
        );
    }
    Ok(Velocities { u_trans, u_rot })
}

/// Sum by recursive halving.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n if n <= 8 => values.iter().sum(),
        n => {
            let (a, b) = values.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

fn check_prediction(pred: &Velocities, len: usize) -> Result<(), FlowError> {
    if pred.u_trans.len() != len || pred.u_rot.len() != len {
        return Err(FlowError::PredictorShape {
            expected: len,
            found: pred.u_trans.len().min(pred.u_rot.len()),
        });
    }
    let finite = |i: &usize| {
        pred.u_trans[*i]
            .iter()
            .chain(&pred.u_rot[*i].0)
            .all(|v| v.is_finite())
    };
    if let Some(index) = (0..len).find(|i| !finite(i)) {
        return Err(FlowError::NonFinite { index });
    }
    Ok(())
}

/// Per-(τ, residue) squared residuals, τ-major.
fn residuals(
    predictor: &dyn VelocityPredictor,
    pair: &ViewPair,
    taus: &[f64],
    direction: Direction,
) -> Result<(Vec<f64>, Vec<f64>), FlowError> {
    if taus.is_empty() {
        return Err(FlowError::EmptyTaus);
    }
    let len = pair.g0.len();
    let per_tau: Vec<(Vec<f64>, Vec<f64>)> = taus
        .par_iter()
        .map(|&tau| {
            let state = interpolate_in(pair, tau, direction)?;
            let target = target_velocity(pair, tau)?;
            let pred = predictor.predict(&state)?;
            check_prediction(&pred, len)?;
            let trans = (0..len)
                .map(|i| (pred.u_trans[i] - target.u_trans[i]).norm_squared())
                .collect();
            let rot = (0..len)
                .map(|i| {
                    (0..4)
                        .map(|k| (pred.u_rot[i].0[k] - target.u_rot[i].0[k]).powi(2))
                        .sum()
                })
                .collect();
            Ok((trans, rot))
        })
        .collect::<Result<_, FlowError>>()?;
    let (trans, rot): (Vec<Vec<f64>>, Vec<Vec<f64>>) = per_tau.into_iter().unzip();
    Ok((trans.concat(), rot.concat()))
}

fn loss_in(
    predictor: &dyn VelocityPredictor,
    pair: &ViewPair,
    taus: &[f64],
    direction: Direction,
) -> Result<LossReport, FlowError> {
    let (trans, rot) = residuals(predictor, pair, taus, direction)?;
    let count = trans.len().max(1) as f64;
    let l_r3 = pairwise_sum(&trans) / count;
    let l_so3 = pairwise_sum(&rot) / count;
    Ok(LossReport {
        l_r3,
        l_so3,
        total: l_r3 + l_so3,
        direction,
    })
}

/// Mean squared velocity error along `g0 → g1` over `taus` and residues.
pub fn directional_loss(
    predictor: &dyn VelocityPredictor,
    pair: &ViewPair,
    taus: &[f64],
) -> Result<LossReport, FlowError> {
    loss_in(predictor, pair, taus, Direction::Forward)
}

/// Forward loss plus the loss on the swapped pair, with its own targets.
pub fn bidirectional_loss(
    predictor: &dyn VelocityPredictor,
    pair: &ViewPair,
    taus: &[f64],
) -> Result<BidirectionalLoss, FlowError> {
    let forward = loss_in(predictor, pair, taus, Direction::Forward)?;
    let backward = loss_in(predictor, &pair.swapped(), taus, Direction::Backward)?;
    let l_r3 = forward.l_r3 + backward.l_r3;
    let l_so3 = forward.l_so3 + backward.l_so3;
    let combined = LossReport {
        l_r3,
        l_so3,
        total: forward.total + backward.total,
        direction: Direction::Bidirectional,
    };
    Ok(BidirectionalLoss {
        forward,
        backward,
        combined,
    })
}

/// Explicit Euler rollout of the predicted field from `g0` over τ ∈ [0, 1].
///
/// Quaternions are renormalized after every step and the rotations rebuilt
/// from them.
pub fn integrate_flow(
    predictor: &dyn VelocityPredictor,
    g0: &ProteinFrames,
    n_steps: usize,
) -> Result<ProteinFrames, FlowError> {
    integrate_flow_with(predictor, g0, n_steps, |_| {})
}

/// [`integrate_flow`] that hands every intermediate state to `observe`.
pub fn integrate_flow_with(
    predictor: &dyn VelocityPredictor,
    g0: &ProteinFrames,
    n_steps: usize,
    mut observe: impl FnMut(&InterpolatedState),
) -> Result<ProteinFrames, FlowError> {
    if n_steps == 0 {
        return Err(FlowError::InvalidConfig(
            "n_steps must be at least 1".into(),
        ));
    }
    let h = 1.0 / n_steps as f64;
    let mut state = InterpolatedState {
        tau: 0.0,
        direction: Direction::Forward,
        frames: g0.clone(),
        quats: g0.frames().iter().map(|f| quat_from_matrix(&f.r)).collect(),
    };
    for step in 0..n_steps {
        let pred = predictor.predict(&state)?;
        check_prediction(&pred, g0.len())?;
        let mut frames = Vec::with_capacity(g0.len());
        for (i, f) in state.frames.frames().iter().enumerate() {
            let t = f.t + pred.u_trans[i] * h;
            let u = pred.u_rot[i].0;
            if u == [0.0; 4] {
                frames.push(RigidTransform::new(t, f.r));
                continue;
            }
            let q = state.quats[i].to_array();
            let q = UnitQuaternion::new_normalize(
                q[0] + h * u[0],
                q[1] + h * u[1],
                q[2] + h * u[2],
                q[3] + h * u[3],
            )
            .map_err(|_| FlowError::NonFinite { index: i })?;
            state.quats[i] = q;
            frames.push(RigidTransform::new(t, matrix_from_quat(&q)));
        }
        state.frames = g0.with_frames(frames).expect("amino acids unchanged");
        state.tau = if step + 1 == n_steps {
            1.0
        } else {
            (step + 1) as f64 * h
        };
        observe(&state);
    }
    Ok(state.frames)
}

/// Bidirectional loss of `table` and its gradient with respect to every entry.
pub fn loss_and_gradient(
    table: &TabularPredictor,
    pair: &ViewPair,
) -> Result<(BidirectionalLoss, TabularPredictor), FlowError> {
    let loss = bidirectional_loss(table, pair, &table.taus)?;
    let mut grad = TabularPredictor::zeros(&table.taus, pair.g0.len());
    let count = (table.taus.len() * pair.g0.len()) as f64;
    for (direction, dir_pair) in [
        (Direction::Forward, pair.clone()),
        (Direction::Backward, pair.swapped()),
    ] {
        let values = table.table(direction);
        let g = grad.table_mut(direction);
        for (k, &tau) in table.taus.iter().enumerate() {
            let target = target_velocity(&dir_pair, tau)?;
            for i in 0..pair.g0.len() {
                for c in 0..3 {
                    g.u_trans[k][i][c] =
                        2.0 * (values.u_trans[k][i][c] - target.u_trans[i][c]) / count;
                }
                for c in 0..4 {
                    g.u_rot[k][i][c] = 2.0 * (values.u_rot[k][i][c] - target.u_rot[i].0[c]) / count;
                }
            }
        }
    }
    Ok((loss, grad))
}

/// Gradient descent on a zero-initialized [`TabularPredictor`] against the
/// bidirectional loss of `pair` on the grid `taus`.
pub fn fit_tabular_predictor(
    pair: &ViewPair,
    taus: &[f64],
    steps: usize,
    lr: f64,
) -> Result<(TabularPredictor, BidirectionalLoss), FlowError> {
    fit_from(
        TabularPredictor::zeros(taus, pair.g0.len()),
        pair,
        steps,
        lr,
    )
}

/// [`fit_tabular_predictor`] starting from an existing table.
pub fn fit_from(
    mut table: TabularPredictor,
    pair: &ViewPair,
    steps: usize,
    lr: f64,
) -> Result<(TabularPredictor, BidirectionalLoss), FlowError> {
    if steps == 0 || !(lr > 0.0 && lr.is_finite()) {
        return Err(FlowError::InvalidConfig(format!(
            "need steps >= 1 and lr > 0, got {steps} and {lr}"
        )));
    }
    if table.taus.is_empty() {
        return Err(FlowError::EmptyTaus);
    }
    let mut previous = f64::INFINITY;
    let mut rising = 0;
    for step in 0..steps {
        let (loss, grad) = loss_and_gradient(&table, pair)?;
        let total = loss.combined.total;
        if total == 0.0 {
            break;
        }
        rising = if total > previous { rising + 1 } else { 0 };
        if rising >= DIVERGENCE_PATIENCE || !total.is_finite() {
            return Err(FlowError::Diverged { step, loss: total });
        }
        previous = total;
        let updated: Vec<f64> = table
            .params()
            .iter()
            .zip(grad.params())
            .map(|(p, g)| p - lr * g)
            .collect();
        table.set_params(&updated);
    }
    let loss = bidirectional_loss(&table, pair, &table.taus)?;
    Ok((table, loss))
}
