//! Plain-text model files.
//!
//! ```text
//! disco-model 1
//! q 64
//! iterations 4
//! neighbors out
//! alpha1 64 64
//! <64 lines of 64 values>
//! alpha3 64
//! <1 line of 64 values>
//! ...
//! ```
//!
//! Tensors appear in the order alpha1..alpha4, beta1..beta3, row-major, with
//! 17 significant digits so a round trip is exact.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use crate::embedding::{EmbedConfig, Theta, TENSOR_NAMES};
use crate::error::{Error, Result};

pub const MODEL_HEADER: &str = "disco-model 1";

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub theta: Theta,
    pub embed: EmbedConfig,
}

pub fn to_string(model: &Model) -> String {
    let theta = &model.theta;
    let q = theta.q();
    let mut out = String::new();
    writeln!(out, "{MODEL_HEADER}").unwrap();
    writeln!(out, "q {q}").unwrap();
    writeln!(out, "iterations {}", model.embed.iterations).unwrap();
    writeln!(out, "neighbors {}", model.embed.neighbors).unwrap();
    for (name, values) in theta.tensors() {
        let cols = if matches!(name, "alpha1" | "alpha2" | "beta2" | "beta3") {
            writeln!(out, "{name} {q} {q}").unwrap();
            q
        } else {
            writeln!(out, "{name} {}", values.len()).unwrap();
            values.len()
        };
        for row in values.chunks(cols) {
            let line: Vec<String> = row.iter().map(|x| format!("{x:.16e}")).collect();
            writeln!(out, "{}", line.join(" ")).unwrap();
        }
    }
    out
}

pub fn save(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_string(model))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Model> {
    read(fs::File::open(path)?)
}

pub fn read(input: impl Read) -> Result<Model> {
    let mut lines = BufReader::new(input).lines();
    let mut line_no = 0usize;
    let mut next = || -> Result<String> {
        line_no += 1;
        match lines.next() {
            Some(l) => Ok(l?.trim().to_string()),
            None => Err(Error::ModelFormat(format!("unexpected end of file at line {line_no}"))),
        }
    };
    let header = next()?;
    if header != MODEL_HEADER {
        return Err(Error::ModelFormat(format!("expected '{MODEL_HEADER}', found '{header}'")));
    }
    let field = |line: String, key: &str| -> Result<String> {
        match line.split_once(' ') {
            Some((k, v)) if k == key => Ok(v.trim().to_string()),
            _ => Err(Error::ModelFormat(format!("expected '{key} <value>', found '{line}'"))),
        }
    };
    let parse_usize = |s: String, what: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::ModelFormat(format!("bad {what} '{s}'")))
    };
    let q = parse_usize(field(next()?, "q")?, "q")?;
    if q == 0 {
        return Err(Error::ModelFormat("q must be positive".into()));
    }
    let iterations = parse_usize(field(next()?, "iterations")?, "iterations")?;
    let neighbors = field(next()?, "neighbors")?
        .parse()
        .map_err(|e: Error| Error::ModelFormat(e.to_string()))?;

    let mut theta = Theta::zeros(q);
    for (name, slot) in TENSOR_NAMES.iter().zip(theta.tensors_mut()) {
        let (_, values) = slot;
        let shape_line = next()?;
        let mut parts = shape_line.split_whitespace();
        if parts.next() != Some(*name) {
            return Err(Error::ModelFormat(format!("expected tensor '{name}', found '{shape_line}'")));
        }
        let dims: Vec<usize> = parts
            .map(|p| p.parse().map_err(|_| Error::ModelFormat(format!("bad shape '{shape_line}'"))))
            .collect::<Result<_>>()?;
        let (rows, cols) = match dims[..] {
            [r, c] => (r, c),
            [c] => (1, c),
            _ => return Err(Error::ModelFormat(format!("bad shape '{shape_line}'"))),
        };
        if rows * cols != values.len() {
            return Err(Error::ModelFormat(format!(
                "{name} has shape {rows}x{cols}, expected {} values for q={q}",
                values.len()
            )));
        }
        for r in 0..rows {
            let row = next()?;
            let parsed: Vec<f64> = row
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| Error::ModelFormat(format!("bad number '{t}' in {name}"))))
                .collect::<Result<_>>()?;
            if parsed.len() != cols {
                return Err(Error::ModelFormat(format!("{name} row {r} has {} values, expected {cols}", parsed.len())));
            }
            values[r * cols..(r + 1) * cols].copy_from_slice(&parsed);
        }
    }
    if let Some(name) = theta.first_non_finite() {
        return Err(Error::ModelFormat(format!("{name} holds a non-finite value")));
    }
    Ok(Model {
        theta,
        embed: EmbedConfig { iterations, neighbors },
    })
}
