//! Plain-text parameter checkpoints.
//!
//! ```text
//! dali-checkpoint 1
//! entry generator.w0 2 128 trainable
//! 1.2e-1 -3.4e-2 ...
//! ```
//!
//! One header line per entry followed by one line with `rows * cols`
//! row-major values in shortest round-trip exponent notation.

use std::io::{BufRead, Write};

use crate::autodiff::Matrix;
use crate::error::{Error, Result};

use super::ParamStore;

const MAGIC: &str = "dali-checkpoint 1";

pub fn write_checkpoint<W: Write>(store: &ParamStore, mut out: W) -> Result<()> {
    writeln!(out, "{MAGIC}")?;
    for (name, entry) in store.iter() {
        let (rows, cols) = entry.value.dim();
        let flag = if entry.trainable { "trainable" } else { "frozen" };
        writeln!(out, "entry {name} {rows} {cols} {flag}")?;
        let mut first = true;
        for v in entry.value.iter() {
            if !first {
                out.write_all(b" ")?;
            }
            write!(out, "{v:e}")?;
            first = false;
        }
        writeln!(out)?;
    }
    Ok(())
}

fn bad(line: usize, message: impl Into<String>) -> Error {
    Error::Checkpoint {
        line,
        message: message.into(),
    }
}

pub fn read_checkpoint<R: BufRead>(input: R) -> Result<ParamStore> {
    let mut lines = input.lines().enumerate();
    match lines.next() {
        Some((_, Ok(l))) if l.trim() == MAGIC => {}
        Some((_, Err(e))) => return Err(e.into()),
        _ => return Err(bad(1, format!("expected header `{MAGIC}`"))),
    }

    let mut store = ParamStore::new();
    while let Some((i, header)) = lines.next() {
        let header = header?;
        if header.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = header.split_whitespace().collect();
        let [tag, name, rows, cols, flag] = fields[..] else {
            return Err(bad(i + 1, "malformed entry header"));
        };
        if tag != "entry" {
            return Err(bad(i + 1, format!("expected `entry`, found `{tag}`")));
        }
        let rows: usize = rows.parse().map_err(|_| bad(i + 1, "bad row count"))?;
        let cols: usize = cols.parse().map_err(|_| bad(i + 1, "bad column count"))?;
        let trainable = match flag {
            "trainable" => true,
            "frozen" => false,
            other => return Err(bad(i + 1, format!("unknown flag `{other}`"))),
        };

        let (j, body) = lines
            .next()
            .ok_or_else(|| bad(i + 2, format!("missing values for `{name}`")))?;
        let body = body?;
        let values = body
            .split_whitespace()
            .map(|tok| tok.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| bad(j + 1, format!("`{name}`: {e}")))?;
        if values.len() != rows * cols {
            return Err(bad(
                j + 1,
                format!(
                    "`{name}` declares {rows}x{cols} but has {} values",
                    values.len()
                ),
            ));
        }
        let value = Matrix::from_shape_vec((rows, cols), values)
            .map_err(|e| bad(j + 1, e.to_string()))?;
        store.insert(name, value, trainable);
    }
    Ok(store)
}
