//! Fixed-column PDB reading and writing for backbone atoms.
//!
//! Only `ATOM`/`HETATM` records named N, CA or C are kept. Reading stops at
//! the end of the first model; [`parse_models`] reads every `MODEL` block of
//! a trajectory file. Alternate locations prefer blank or `A`, and residues
//! are ordered by residue number and insertion code.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{aa_index, aa_name, BackboneError, ProteinBackbone, Residue};
use crate::so3::Vec3;

/// One chain read from a PDB model.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedChain {
    pub chain_id: char,
    pub backbone: ProteinBackbone,
    /// Residues that had some but not all of N, CA and C.
    pub skipped: usize,
}

/// First chain of one `MODEL` block, with its time stamp when the title
/// carries one (`t= <ps>`, as written by GROMACS).
#[derive(Debug, Clone, PartialEq)]
pub struct PdbModel {
    pub time_ps: Option<f64>,
    pub chain: ParsedChain,
}

struct AtomRecord {
    name: String,
    alt_loc: char,
    res_name: String,
    chain: char,
    res_seq: i32,
    i_code: char,
    pos: Vec3,
}

fn column(line: &str, range: std::ops::Range<usize>) -> Option<&str> {
    let end = range.end.min(line.len());
    if range.start >= end {
        return Some("");
    }
    line.get(range.start..end)
}

fn char_at(line: &str, idx: usize) -> char {
    line.as_bytes().get(idx).map_or(' ', |&b| b as char)
}

fn parse_atom(line: &str, line_no: usize) -> Result<AtomRecord, BackboneError> {
    let malformed = |reason: &str| BackboneError::MalformedRecord {
        line: line_no,
        reason: reason.to_string(),
    };
    if !line.is_ascii() {
        return Err(malformed("non-ASCII characters"));
    }
    if line.len() < 54 {
        return Err(malformed("record shorter than the coordinate columns"));
    }
    let coord = |range: std::ops::Range<usize>, axis: &str| -> Result<f64, BackboneError> {
        let text = column(line, range).unwrap_or("").trim();
        text.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| malformed(&format!("unparseable {axis} coordinate {text:?}")))
    };
    let res_seq_text = column(line, 22..26).unwrap_or("").trim();
    let res_seq = res_seq_text
        .parse::<i32>()
        .map_err(|_| malformed(&format!("unparseable residue number {res_seq_text:?}")))?;
    Ok(AtomRecord {
        name: column(line, 12..16).unwrap_or("").trim().to_string(),
        alt_loc: char_at(line, 16),
        res_name: column(line, 17..20).unwrap_or("").trim().to_string(),
        chain: char_at(line, 21),
        res_seq,
        i_code: char_at(line, 26),
        pos: Vec3::new(
            coord(30..38, "x")?,
            coord(38..46, "y")?,
            coord(46..54, "z")?,
        ),
    })
}

#[derive(Default)]
struct ResidueAtoms {
    name: String,
    // (position, alt-loc priority); lower priority wins
    n: Option<(Vec3, u8)>,
    ca: Option<(Vec3, u8)>,
    c: Option<(Vec3, u8)>,
}

impl ResidueAtoms {
    fn offer(&mut self, atom: &AtomRecord) {
        let slot = match atom.name.as_str() {
            "N" => &mut self.n,
            "CA" => &mut self.ca,
            "C" => &mut self.c,
            _ => return,
        };
        let priority = if atom.alt_loc == ' ' || atom.alt_loc == 'A' {
            0
        } else {
            1
        };
        if slot.is_none_or(|(_, existing)| priority < existing) {
            *slot = Some((atom.pos, priority));
        }
    }
}

#[derive(Default)]
struct ChainAtoms {
    residues: BTreeMap<(i32, char), ResidueAtoms>,
}

impl ChainAtoms {
    fn finish(self, chain_id: char) -> Result<ParsedChain, BackboneError> {
        let mut residues = Vec::new();
        let mut skipped = 0;
        for atoms in self.residues.into_values() {
            match (atoms.n, atoms.ca, atoms.c) {
                (Some((n, _)), Some((ca, _)), Some((c, _))) => residues.push(Residue {
                    n,
                    ca,
                    c,
                    aa: aa_index(&atoms.name),
                }),
                (None, None, None) => {}
                _ => skipped += 1,
            }
        }
        let backbone = ProteinBackbone::new(residues)?;
        Ok(ParsedChain {
            chain_id,
            backbone,
            skipped,
        })
    }
}

/// Chains of one model in order of first appearance.
#[derive(Default)]
struct ModelAtoms {
    chains: Vec<(char, ChainAtoms)>,
    title_time_ps: Option<f64>,
}

impl ModelAtoms {
    fn add(&mut self, atom: AtomRecord) {
        let idx = match self.chains.iter().position(|(id, _)| *id == atom.chain) {
            Some(i) => i,
            None => {
                self.chains.push((atom.chain, ChainAtoms::default()));
                self.chains.len() - 1
            }
        };
        let residue = self.chains[idx]
            .1
            .residues
            .entry((atom.res_seq, atom.i_code))
            .or_default();
        if residue.name.is_empty() {
            residue.name = atom.res_name.clone();
        }
        residue.offer(&atom);
    }

    fn is_empty(&self) -> bool {
        self.chains.is_empty()
    }
}

fn time_from_title(line: &str) -> Option<f64> {
    let rest = &line[line.find("t=")? + 2..];
    rest.split_whitespace().next()?.parse().ok()
}

/// Splits the text into models. Without `MODEL` records the whole file is one model.
fn read_models(text: &str, first_only: bool) -> Result<Vec<ModelAtoms>, BackboneError> {
    let mut models = Vec::new();
    let mut current = ModelAtoms::default();
    let mut pending_time = None;
    for (i, line) in text.lines().enumerate() {
        let record = line.get(..6).unwrap_or(line);
        if record.starts_with("ATOM") || record.starts_with("HETATM") {
            current.add(parse_atom(line, i + 1)?);
        } else if record.starts_with("TITLE") || record.starts_with("REMARK") {
            if let Some(t) = time_from_title(line) {
                pending_time = Some(t);
            }
        } else if record.starts_with("MODEL") {
            if !current.is_empty() {
                models.push(std::mem::take(&mut current));
                if first_only {
                    break;
                }
            }
            current.title_time_ps = pending_time.take();
        } else if record.starts_with("ENDMDL") {
            if !current.is_empty() {
                models.push(std::mem::take(&mut current));
            }
            if first_only {
                break;
            }
        } else if record.trim_end() == "END" {
            break;
        }
    }
    if !current.is_empty() {
        models.push(current);
    }
    Ok(models)
}

/// Every chain of the first model.
///
/// Chains with fewer than two complete residues are dropped; if none are
/// left the result is `NoResidues`.
pub fn parse_chains(text: &str) -> Result<Vec<ParsedChain>, BackboneError> {
    let Some(model) = read_models(text, true)?.into_iter().next() else {
        return Err(BackboneError::NoResidues { found: 0 });
    };
    let mut chains = Vec::new();
    let mut best_found = 0;
    for (id, atoms) in model.chains {
        match atoms.finish(id) {
            Ok(chain) => chains.push(chain),
            Err(BackboneError::NoResidues { found }) => best_found = best_found.max(found),
            Err(e) => return Err(e),
        }
    }
    if chains.is_empty() {
        return Err(BackboneError::NoResidues { found: best_found });
    }
    Ok(chains)
}

/// First chain of the first model.
pub fn parse_backbone(text: &str) -> Result<ParsedChain, BackboneError> {
    let Some(model) = read_models(text, true)?.into_iter().next() else {
        return Err(BackboneError::NoResidues { found: 0 });
    };
    let (id, atoms) = model
        .chains
        .into_iter()
        .next()
        .expect("non-empty model has a chain");
    atoms.finish(id)
}

/// First chain of every model, in file order.
pub fn parse_models(text: &str) -> Result<Vec<PdbModel>, BackboneError> {
    let models = read_models(text, false)?;
    if models.is_empty() {
        return Err(BackboneError::NoResidues { found: 0 });
    }
    models
        .into_iter()
        .map(|m| {
            let time_ps = m.title_time_ps;
            let (id, atoms) = m
                .chains
                .into_iter()
                .next()
                .expect("non-empty model has a chain");
            Ok(PdbModel {
                time_ps,
                chain: atoms.finish(id)?,
            })
        })
        .collect()
}

fn write_atoms(out: &mut String, bb: &ProteinBackbone, chain: char, serial: &mut usize) {
    for (i, res) in bb.residues().iter().enumerate() {
        for (name, pos) in [("N", res.n), ("CA", res.ca), ("C", res.c)] {
            let _ = writeln!(
                out,
                "ATOM  {:>5} {:<4} {:>3} {}{:>4}    {:>8.3}{:>8.3}{:>8.3}{:>6.2}{:>6.2}          {:>2}",
                *serial,
                format!(" {name}"),
                aa_name(res.aa),
                chain,
                i + 1,
                pos.x,
                pos.y,
                pos.z,
                1.0,
                0.0,
                &name[..1],
            );
            *serial += 1;
        }
    }
}

/// Backbone atoms as PDB text with three-decimal coordinates.
pub fn write_pdb(bb: &ProteinBackbone, chain: char) -> String {
    let mut out = String::new();
    let mut serial = 1;
    write_atoms(&mut out, bb, chain, &mut serial);
    out.push_str("TER\nEND\n");
    out
}

/// Multi-model PDB with a `t= <ps>` title line ahead of each model.
pub fn write_pdb_models(models: &[(f64, ProteinBackbone)], chain: char) -> String {
    let mut out = String::new();
    for (k, (time_ps, bb)) in models.iter().enumerate() {
        let _ = writeln!(out, "TITLE     trajectory t= {time_ps:.5} step= {k}");
        let _ = writeln!(out, "MODEL     {:>4}", k + 1);
        let mut serial = 1;
        write_atoms(&mut out, bb, chain, &mut serial);
        out.push_str("TER\nENDMDL\n");
    }
    out.push_str("END\n");
    out
}
