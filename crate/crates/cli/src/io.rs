//! Input/output plumbing: `-` for stdin/stdout, atomic file replacement and
//! JSON with exact floats.

use std::io::{self, Read, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::ser::{CompactFormatter, Formatter};

use crate::error::CliError;

pub fn read_input(path: &str) -> Result<String, CliError> {
    let mut text = String::new();
    if path == "-" {
        io::stdin()
            .read_to_string(&mut text)
            .map_err(|e| CliError::io("reading stdin", e))?;
    } else {
        text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(&format!("reading {path}"), e))?;
    }
    Ok(text)
}

/// Writes to stdout, or to `path` through a temporary file in the same
/// directory so a failed run never leaves partial output behind.
pub fn write_output(path: &str, bytes: &[u8]) -> Result<(), CliError> {
    if path == "-" {
        let mut out = io::stdout().lock();
        return out
            .write_all(bytes)
            .and_then(|_| out.flush())
            .map_err(|e| CliError::io("writing stdout", e));
    }
    let target = Path::new(path);
    let dir = match target.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let fail = |e: io::Error| CliError {
        code: 1,
        message: format!("writing {path}: {e}"),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(fail)?;
    tmp.write_all(bytes).map_err(fail)?;
    tmp.as_file().sync_all().map_err(fail)?;
    tmp.persist(target).map_err(|e| fail(e.error))?;
    Ok(())
}

/// Compact JSON that prints every `f64` with 17 significant digits.
#[derive(Default)]
struct ExactFloats(CompactFormatter);

impl Formatter for ExactFloats {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, ExactFloats::default());
    value
        .serialize(&mut ser)
        .expect("in-memory serialization cannot fail");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

/// One JSON document per line.
pub fn to_jsonl<T: Serialize>(values: &[T]) -> String {
    let mut out = String::new();
    for v in values {
        out.push_str(&to_json(v));
        out.push('\n');
    }
    out
}

/// Parses non-empty lines; errors name the offending line.
pub fn parse_jsonl<T: serde::de::DeserializeOwned>(text: &str) -> Result<Vec<T>, CliError> {
    text.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(i, line)| {
            serde_json::from_str(line)
                .map_err(|e| CliError::usage(format!("line {}: malformed JSON: {e}", i + 1)))
        })
        .collect()
}

/// Formats a float for CSV output with the same precision as JSON.
pub fn exact(value: f64) -> String {
    format!("{value:.16e}")
}
