//! Format invariants of frames records.

use rigid_frames::canonicalize::inertia_tensor;
use rigid_frames::so3::Vec3;

use crate::error::{CliError, EXIT_FAILED_CHECKS};
use crate::io::{parse_jsonl, read_input};
use crate::records::{FramesRecord, Origin, View, UNIT_TOLERANCE};

/// Largest accepted distance of a canonical centroid from the origin, Å.
pub const CENTROID_TOLERANCE: f64 = 1e-6;
/// Largest accepted off-diagonal inertia entry, relative to the trace.
pub const INERTIA_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    Skip,
}

impl Status {
    fn label(self) -> &'static str {
        match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skip => "SKIP",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub status: Status,
    pub detail: String,
}

fn check(name: &'static str, problem: Option<String>, ok: impl Into<String>) -> Check {
    match problem {
        Some(detail) => Check {
            name,
            status: Status::Fail,
            detail,
        },
        None => Check {
            name,
            status: Status::Pass,
            detail: ok.into(),
        },
    }
}

fn skip(name: &'static str, reason: &str) -> Check {
    Check {
        name,
        status: Status::Skip,
        detail: reason.to_string(),
    }
}

/// Every check of one record, in a fixed order.
pub fn check_record(rec: &FramesRecord) -> Vec<Check> {
    let mut out = Vec::new();
    let shape = rec.shape_problem();
    let shape_ok = shape.is_none();
    out.push(check("shape", shape, format!("{} residues", rec.len)));
    if !shape_ok {
        for name in ["aa", "finite", "unit_quaternion", "centroid", "inertia"] {
            out.push(skip(name, "bad shape"));
        }
        return out;
    }

    let bad_aa = rec.aa.iter().position(|a| !(1..=21).contains(a));
    out.push(check(
        "aa",
        bad_aa.map(|i| format!("residue {i} has code {}", rec.aa[i])),
        "codes in 1..=21",
    ));

    let non_finite =
        (0..rec.len).find(|&i| rec.t[i].iter().chain(&rec.q[i]).any(|v| !v.is_finite()));
    out.push(check(
        "finite",
        non_finite.map(|i| format!("residue {i} has non-finite values")),
        "all finite",
    ));

    let norm_error = (0..rec.len)
        .map(|i| {
            (
                i,
                (rec.q[i].iter().map(|v| v * v).sum::<f64>().sqrt() - 1.0).abs(),
            )
        })
        .find(|(_, err)| err.is_nan() || *err > UNIT_TOLERANCE);
    out.push(check(
        "unit_quaternion",
        norm_error.map(|(i, err)| format!("residue {i} norm deviates by {err:.3e}")),
        format!("within {UNIT_TOLERANCE:e}"),
    ));

    let reason = match (rec.meta.provenance, rec.meta.view) {
        (Origin::Perturb, Some(View::G1)) => Some("perturbed view"),
        _ if !rec.meta.is_canonical() => Some("not canonical"),
        _ if non_finite.is_some() || rec.len == 0 => Some("no usable coordinates"),
        _ => None,
    };
    if let Some(reason) = reason {
        out.push(skip("centroid", reason));
        out.push(skip("inertia", reason));
        return out;
    }

    let points: Vec<Vec3> = rec.t.iter().map(|t| Vec3::from(*t)).collect();
    let centroid = points.iter().fold(Vec3::zeros(), |a, p| a + p) / points.len() as f64;
    out.push(check(
        "centroid",
        (centroid.norm().is_nan() || centroid.norm() >= CENTROID_TOLERANCE)
            .then(|| format!("centroid {:.3e} Å from the origin", centroid.norm())),
        format!("{:.1e} Å from the origin", centroid.norm()),
    ));

    let inertia = inertia_tensor(&points);
    let trace = inertia.trace();
    let off = [(0, 1), (0, 2), (1, 2)]
        .iter()
        .fold(0.0f64, |m, &(r, c)| m.max(inertia[(r, c)].abs()));
    let ascending = inertia[(0, 0)] <= inertia[(1, 1)] && inertia[(1, 1)] <= inertia[(2, 2)];
    let problem = if off.is_nan() || off >= INERTIA_TOLERANCE * trace {
        Some(format!(
            "off-diagonal inertia {off:.3e} against trace {trace:.3e}"
        ))
    } else if !ascending {
        Some("principal moments are not ascending".to_string())
    } else {
        None
    };
    out.push(check(
        "inertia",
        problem,
        format!("off-diagonal {:.1e} of trace", off / trace),
    ));
    out
}

pub fn cmd_verify(input: &str) -> Result<u8, CliError> {
    let records: Vec<FramesRecord> = parse_jsonl(&read_input(input)?)?;
    let mut failed = 0usize;
    let mut total = 0usize;
    println!("{:<24} {:<16} {:<6} detail", "id", "check", "status");
    for (k, rec) in records.iter().enumerate() {
        let label = match rec.meta.view {
            Some(View::G0) => format!("{}[g0]", rec.id),
            Some(View::G1) => format!("{}[g1]", rec.id),
            None => rec.id.clone(),
        };
        let label = if label.is_empty() {
            format!("#{k}")
        } else {
            label
        };
        for c in check_record(rec) {
            total += 1;
            if c.status == Status::Fail {
                failed += 1;
            }
            println!(
                "{:<24} {:<16} {:<6} {}",
                label,
                c.name,
                c.status.label(),
                c.detail
            );
        }
    }
    println!("{} records, {total} checks, {failed} failed", records.len());
    Ok(if failed == 0 { 0 } else { EXIT_FAILED_CHECKS })
}
