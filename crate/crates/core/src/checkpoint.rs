//! Line-delimited JSON snapshots of a state.
//!
//! The first line is a header, then one line per nonzero amplitude. Floats are
//! written with 17 significant digits so a write/read cycle is lossless.

use std::io::{self, BufRead, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::state::{Configuration, GmpState, StateError, Statistics};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("invalid state: {0}")]
    State(#[from] StateError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u32,
    #[serde(rename = "M")]
    pub side: usize,
    #[serde(rename = "N")]
    pub particles: usize,
    pub statistics: Statistics,
    pub step: u64,
    #[serde(rename = "K_r")]
    pub norm_constant: f64,
}

#[derive(Debug, Deserialize)]
struct Record {
    chirality: usize,
    occupations: Vec<u8>,
    re: f64,
    im: f64,
}

/// Shortest scientific form carrying 17 significant digits.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_checkpoint<W: Write>(
    out: &mut W,
    side: usize,
    state: &GmpState,
) -> Result<(), CheckpointError> {
    if side * side != state.vertex_count() {
        return Err(CheckpointError::Format {
            line: 0,
            msg: format!(
                "side {side} does not match {} vertices",
                state.vertex_count()
            ),
        });
    }
    writeln!(
        out,
        "{{\"version\":{FORMAT_VERSION},\"M\":{side},\"N\":{},\"statistics\":\"{}\",\"step\":{},\"K_r\":{}}}",
        state.particles(),
        state.statistics(),
        state.step(),
        format_f64(state.norm_constant())
    )?;
    for (k, config, amp) in state.iter_nonzero() {
        let occ: Vec<String> = config.occupations().iter().map(u8::to_string).collect();
        writeln!(
            out,
            "{{\"chirality\":{k},\"occupations\":[{}],\"re\":{},\"im\":{}}}",
            occ.join(","),
            format_f64(amp.re),
            format_f64(amp.im)
        )?;
    }
    Ok(())
}

pub fn read_checkpoint<R: BufRead>(
    input: R,
) -> Result<(CheckpointHeader, GmpState), CheckpointError> {
    let mut lines = input.lines().enumerate();
    let header: CheckpointHeader = loop {
        match lines.next() {
            None => {
                return Err(CheckpointError::Format {
                    line: 1,
                    msg: "missing header".into(),
                })
            }
            Some((i, line)) => {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                break serde_json::from_str(&line).map_err(|e| CheckpointError::Format {
                    line: i + 1,
                    msg: e.to_string(),
                })?;
            }
        }
    };
    if header.version != FORMAT_VERSION {
        return Err(CheckpointError::Version(header.version));
    }
    let vertex_count = header.side * header.side;
    let mut entries = Vec::new();
    for (i, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&line).map_err(|e| CheckpointError::Format {
            line: i + 1,
            msg: e.to_string(),
        })?;
        let rec: Record = serde_json::from_value(value).map_err(|e| CheckpointError::Format {
            line: i + 1,
            msg: e.to_string(),
        })?;
        if rec.occupations.len() != vertex_count {
            return Err(CheckpointError::Format {
                line: i + 1,
                msg: format!(
                    "expected {vertex_count} occupations, found {}",
                    rec.occupations.len()
                ),
            });
        }
        entries.push((
            rec.chirality,
            Configuration::new(&rec.occupations),
            Complex64::new(rec.re, rec.im),
        ));
    }
    let state = GmpState::from_entries(
        vertex_count,
        header.particles,
        header.statistics,
        header.step,
        header.norm_constant,
        entries,
    )?;
    Ok((header, state))
}
