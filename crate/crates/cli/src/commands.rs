use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use rigid_frames::backbone::{
    frames_from_backbone, parse_backbone, parse_chains, parse_models, BackboneError,
};
use rigid_frames::canonicalize::canonicalize;
use rigid_frames::flowmatch::{
    bidirectional_loss, default_taus, fit_tabular_predictor, integrate_flow, random_taus,
    target_velocity, LossReport, OraclePredictor, TabularPredictor, VelocityPredictor,
    ZeroPredictor,
};
use rigid_frames::igso3::{build_table, sample_rotation, Igso3Params};
use rigid_frames::so3::RotationMatrix;
use rigid_frames::views::{
    extract_md_pairs, make_phase1_pair, residue_rng, PerturbConfig, Perturber, TrajectorySeries,
    ViewPair,
};

use crate::error::CliError;
use crate::io::{exact, parse_jsonl, read_input, to_json, to_jsonl, write_output};
use crate::records::{pair_records, records_to_pairs, FramesRecord, Meta, Origin};
use crate::{Command, DirectionArg, GlobalArgs, InOut, TauArgs};

pub fn dispatch(global: &GlobalArgs, command: &Command) -> Result<u8, CliError> {
    match command {
        Command::Frames(io) => cmd_frames(io),
        Command::Canonicalize(io) => cmd_canonicalize(io),
        Command::Perturb(io) => cmd_perturb(global, io),
        Command::Mdpairs {
            inputs,
            output,
            dt_ns,
            id,
        } => cmd_mdpairs(global, inputs, output, *dt_ns, id.as_deref()),
        Command::Fmtarget {
            io,
            taus,
            direction,
        } => cmd_fmtarget(global, io, taus, *direction),
        Command::Fmloss {
            io,
            taus,
            predictor,
        } => cmd_fmloss(global, io, taus, predictor),
        Command::Integrate {
            io,
            predictor,
            steps,
        } => cmd_integrate(io, predictor, *steps),
        Command::Fit {
            io,
            taus,
            steps,
            lr,
            pair,
        } => cmd_fit(global, io, taus, *steps, *lr, *pair),
        Command::SampleIgso3 { n, output } => cmd_sample_igso3(global, *n, output),
        Command::Verify { input } => crate::verify::cmd_verify(input),
    }
}

fn stem(path: &str) -> String {
    if path == "-" {
        return "stdin".into();
    }
    Path::new(path)
        .file_stem()
        .map_or_else(|| path.to_string(), |s| s.to_string_lossy().into_owned())
}

/// Parse failures of atom input are usage errors; everything else comes from the library.
fn pdb_error(path: &str, e: BackboneError) -> CliError {
    match e {
        BackboneError::NoResidues { .. } => CliError::usage(format!("{path}: no residues ({e})")),
        BackboneError::MalformedRecord { .. } => CliError::usage(format!("{path}: {e}")),
        other => CliError::from(other),
    }
}

fn read_records(path: &str) -> Result<Vec<FramesRecord>, CliError> {
    parse_jsonl(&read_input(path)?)
}

fn read_pairs(path: &str) -> Result<Vec<(String, ViewPair)>, CliError> {
    records_to_pairs(&read_records(path)?)
}

/// Runs `f` over `items` in parallel and returns results in input order,
/// failing with the first error in that order.
fn ordered<T: Sync, U: Send>(
    items: &[T],
    f: impl Fn(&T) -> Result<U, CliError> + Sync,
) -> Result<Vec<U>, CliError> {
    let results: Vec<Result<U, CliError>> = items.par_iter().map(&f).collect();
    results.into_iter().collect()
}

fn resolve_taus(global: &GlobalArgs, args: &TauArgs) -> Result<Vec<f64>, CliError> {
    let taus = match (&args.taus, args.random_taus) {
        (Some(t), _) => t.clone(),
        (None, Some(n)) => random_taus(n, &mut residue_rng(global.seed, 0)),
        (None, None) => default_taus(),
    };
    if taus.is_empty() {
        return Err(CliError::usage("no τ values given"));
    }
    if let Some(bad) = taus.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(CliError::usage(format!("τ = {bad} is outside [0, 1]")));
    }
    Ok(taus)
}

fn cmd_frames(io: &InOut) -> Result<u8, CliError> {
    let text = read_input(&io.input)?;
    let chains = parse_chains(&text).map_err(|e| pdb_error(&io.input, e))?;
    let name = stem(&io.input);
    let mut records = Vec::with_capacity(chains.len());
    for chain in &chains {
        if chain.skipped > 0 {
            eprintln!(
                "warning: chain {:?}: skipped {} residue(s) with missing backbone atoms",
                chain.chain_id, chain.skipped
            );
        }
        let frames = frames_from_backbone(&chain.backbone)?;
        let id = match chain.chain_id {
            ' ' => name.clone(),
            c => format!("{name}_{c}"),
        };
        records.push(FramesRecord::from_frames(
            id,
            &frames,
            Meta::new(Origin::Frames),
        ));
    }
    write_output(&io.output, to_jsonl(&records).as_bytes())?;
    Ok(0)
}

fn cmd_canonicalize(io: &InOut) -> Result<u8, CliError> {
    let records = read_records(&io.input)?;
    let out = ordered(&records, |rec| {
        let (frames, pose) = canonicalize(&rec.to_frames()?)?;
        Ok(FramesRecord::from_frames(
            rec.id.clone(),
            &frames,
            Meta::new(Origin::Canonical).with_pose(&pose),
        ))
    })?;
    write_output(&io.output, to_jsonl(&out).as_bytes())?;
    Ok(0)
}

fn cmd_perturb(global: &GlobalArgs, io: &InOut) -> Result<u8, CliError> {
    let records = read_records(&io.input)?;
    let perturber = Perturber::new(PerturbConfig {
        sigma: global.sigma,
        epsilon: global.epsilon,
        seed: global.seed,
    })?;
    let pairs = ordered(&records, |rec| {
        let pair = make_phase1_pair(&rec.to_frames()?, &perturber)?;
        Ok(pair_records(&rec.id, &pair))
    })?;
    let out: Vec<FramesRecord> = pairs.into_iter().flatten().collect();
    write_output(&io.output, to_jsonl(&out).as_bytes())?;
    Ok(0)
}

fn load_trajectory(inputs: &[String], dt_ns: f64) -> Result<TrajectorySeries, CliError> {
    if !(dt_ns > 0.0 && dt_ns.is_finite()) {
        return Err(CliError::usage(format!(
            "--dt-ns must be finite and > 0, got {dt_ns}"
        )));
    }
    let files: Vec<String> = match inputs {
        [single] if Path::new(single).is_dir() => {
            let mut paths: Vec<String> = std::fs::read_dir(single)
                .map_err(|e| CliError::io(&format!("listing {single}"), e))?
                .filter_map(|entry| entry.ok().map(|e| e.path()))
                .filter(|p| {
                    p.extension()
                        .is_some_and(|ext| ext.eq_ignore_ascii_case("pdb"))
                })
                .map(|p| p.to_string_lossy().into_owned())
                .collect();
            paths.sort();
            if paths.is_empty() {
                return Err(CliError::usage(format!("{single}: no .pdb files")));
            }
            paths
        }
        [single] => {
            let models = parse_models(&read_input(single)?).map_err(|e| pdb_error(single, e))?;
            let stamped = models.iter().all(|m| m.time_ps.is_some());
            let times = models
                .iter()
                .enumerate()
                .map(|(k, m)| {
                    if stamped {
                        m.time_ps.unwrap_or_default() / 1000.0
                    } else {
                        k as f64 * dt_ns
                    }
                })
                .collect();
            let snapshots = models.into_iter().map(|m| m.chain.backbone).collect();
            return Ok(TrajectorySeries::new(snapshots, times)?);
        }
        many => many.to_vec(),
    };
    let snapshots = ordered(&files, |path| {
        parse_backbone(&read_input(path)?)
            .map(|c| c.backbone)
            .map_err(|e| pdb_error(path, e))
    })?;
    let times = (0..snapshots.len()).map(|k| k as f64 * dt_ns).collect();
    Ok(TrajectorySeries::new(snapshots, times)?)
}

fn cmd_mdpairs(
    global: &GlobalArgs,
    inputs: &[String],
    output: &str,
    dt_ns: f64,
    id: Option<&str>,
) -> Result<u8, CliError> {
    let traj = load_trajectory(inputs, dt_ns)?;
    let source = id.map_or_else(|| stem(&inputs[0]), str::to_string);
    let pairs = extract_md_pairs(&traj, &source, global.delta_ns, global.stride())?;
    let out: Vec<FramesRecord> = pairs
        .iter()
        .enumerate()
        .flat_map(|(k, pair)| pair_records(&format!("{source}_{k:04}"), pair))
        .collect();
    write_output(output, to_jsonl(&out).as_bytes())?;
    Ok(0)
}

#[derive(Serialize)]
struct TargetRecord<'a> {
    id: &'a str,
    direction: &'static str,
    tau: f64,
    u_trans: Vec<[f64; 3]>,
    u_rot: Vec<[f64; 4]>,
}

fn cmd_fmtarget(
    global: &GlobalArgs,
    io: &InOut,
    taus: &TauArgs,
    direction: DirectionArg,
) -> Result<u8, CliError> {
    let pairs = read_pairs(&io.input)?;
    let taus = resolve_taus(global, taus)?;
    let lines = ordered(&pairs, |(id, pair)| {
        let mut oriented = Vec::new();
        if direction != DirectionArg::Backward {
            oriented.push(("forward", pair.clone()));
        }
        if direction != DirectionArg::Forward {
            oriented.push(("backward", pair.swapped()));
        }
        let mut lines = String::new();
        for (name, p) in &oriented {
            for &tau in &taus {
                let target = target_velocity(p, tau)?;
                lines.push_str(&to_json(&TargetRecord {
                    id,
                    direction: name,
                    tau,
                    u_trans: target.u_trans.iter().map(|v| [v.x, v.y, v.z]).collect(),
                    u_rot: target.u_rot.iter().map(|v| v.0).collect(),
                }));
                lines.push('\n');
            }
        }
        Ok(lines)
    })?;
    write_output(&io.output, lines.concat().as_bytes())?;
    Ok(0)
}

enum PredictorChoice {
    Zero,
    Oracle,
    Table(Box<TabularPredictor>),
}

impl PredictorChoice {
    fn parse(spec: &str) -> Result<Self, CliError> {
        match spec {
            "zero" => Ok(PredictorChoice::Zero),
            "oracle" => Ok(PredictorChoice::Oracle),
            path => {
                let text = read_input(path)?;
                let table = serde_json::from_str(&text)
                    .map_err(|e| CliError::usage(format!("{path}: not a predictor table: {e}")))?;
                Ok(PredictorChoice::Table(Box::new(table)))
            }
        }
    }

    fn with<R>(&self, pair: &ViewPair, f: impl FnOnce(&dyn VelocityPredictor) -> R) -> R {
        match self {
            PredictorChoice::Zero => f(&ZeroPredictor),
            PredictorChoice::Oracle => f(&OraclePredictor::new(pair)),
            PredictorChoice::Table(table) => f(table.as_ref()),
        }
    }
}

fn loss_row(id: &str, report: &LossReport) -> [String; 5] {
    let direction = format!("{:?}", report.direction).to_lowercase();
    [
        id.to_string(),
        direction,
        exact(report.l_r3),
        exact(report.l_so3),
        exact(report.total),
    ]
}

fn csv_bytes(
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<Vec<u8>, CliError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| CliError::library(format!("writing CSV: {e}"));
    writer.write_record(header).map_err(fail)?;
    for row in rows {
        writer.write_record(&row).map_err(fail)?;
    }
    writer
        .into_inner()
        .map_err(|e| CliError::library(format!("writing CSV: {e}")))
}

fn cmd_fmloss(
    global: &GlobalArgs,
    io: &InOut,
    taus: &TauArgs,
    predictor: &str,
) -> Result<u8, CliError> {
    let pairs = read_pairs(&io.input)?;
    let taus = resolve_taus(global, taus)?;
    let predictor = PredictorChoice::parse(predictor)?;
    let losses = ordered(&pairs, |(_, pair)| {
        Ok(predictor.with(pair, |p| bidirectional_loss(p, pair, &taus))?)
    })?;
    let rows = pairs.iter().zip(&losses).flat_map(|((id, _), loss)| {
        [loss.forward, loss.backward, loss.combined].map(|r| loss_row(id, &r).to_vec())
    });
    write_output(
        &io.output,
        &csv_bytes(&["id", "direction", "l_r3", "l_so3", "total"], rows)?,
    )?;
    Ok(0)
}

fn cmd_integrate(io: &InOut, predictor: &str, steps: usize) -> Result<u8, CliError> {
    if steps == 0 {
        return Err(CliError::usage("--steps must be at least 1"));
    }
    let pairs = read_pairs(&io.input)?;
    let predictor = PredictorChoice::parse(predictor)?;
    let ends = ordered(&pairs, |(_, pair)| {
        Ok(predictor.with(pair, |p| integrate_flow(p, &pair.g0, steps))?)
    })?;
    let mut records = Vec::with_capacity(ends.len());
    for ((id, pair), end) in pairs.iter().zip(&ends) {
        let (mut dt, mut dr) = (0.0f64, 0.0f64);
        for (a, b) in end.frames().iter().zip(pair.g1.frames()) {
            dt = dt.max((a.t - b.t).norm());
            dr = dr.max(a.r.angle_to(&b.r));
        }
        eprintln!("{id}: distance to g1 after {steps} steps: {dt:.3e} Å, {dr:.3e} rad");
        records.push(FramesRecord::from_frames(
            id.clone(),
            end,
            Meta::new(Origin::Integrate),
        ));
    }
    write_output(&io.output, to_jsonl(&records).as_bytes())?;
    Ok(0)
}

fn cmd_fit(
    global: &GlobalArgs,
    io: &InOut,
    taus: &TauArgs,
    steps: usize,
    lr: f64,
    index: usize,
) -> Result<u8, CliError> {
    let pairs = read_pairs(&io.input)?;
    let taus = resolve_taus(global, taus)?;
    let (id, pair) = pairs.get(index).ok_or_else(|| {
        CliError::usage(format!(
            "--pair {index} but the file has {} pairs",
            pairs.len()
        ))
    })?;
    let initial = bidirectional_loss(&TabularPredictor::zeros(&taus, pair.g0.len()), pair, &taus)?;
    let (table, fin) = fit_tabular_predictor(pair, &taus, steps, lr)?;
    eprintln!(
        "{id}: bidirectional loss {:.6e} -> {:.6e} after {steps} steps",
        initial.combined.total, fin.combined.total
    );
    write_output(&io.output, format!("{}\n", to_json(&table)).as_bytes())?;
    Ok(0)
}

fn cmd_sample_igso3(global: &GlobalArgs, n: usize, output: &str) -> Result<u8, CliError> {
    let table = build_table(&Igso3Params::new(global.epsilon))?;
    let identity = RotationMatrix::identity();
    let angles: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| sample_rotation(&identity, &table, &mut residue_rng(global.seed, i)).angle())
        .collect();
    let rows = angles.iter().map(|a| vec![exact(*a)]);
    write_output(output, &csv_bytes(&["angle"], rows)?)?;
    Ok(0)
}
