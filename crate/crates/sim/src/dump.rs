//! Plain-text channel dumps.
//!
//! A dump is a sequence of blocks. Each block opens with `[name rows cols]`
//! and is followed by `rows * cols` lines `re,im` in row-major order. Blank
//! lines and `#` comments are ignored. Numbers are written in shortest
//! round-trip form, so a dump reloads bit-exactly.
//!
//! An SDMA channel set uses blocks `g_k` (`N x 1`), `h_m` (`N x 1`),
//! `g_cross` (`K x M`) and `c_si` (`N x N`).

use std::fmt::Write as _;

use bacnoma_core::geometry::{Positions, SdmaChannelSet};
use bacnoma_core::linalg::{CMatrix, CVector};
use bacnoma_core::Complex64;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum DumpError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("missing block `{0}`")]
    Missing(String),
    #[error("block `{name}` has shape {rows}x{cols}, expected {want}")]
    Shape {
        name: String,
        rows: usize,
        cols: usize,
        want: String,
    },
}

pub fn write_block(out: &mut String, name: &str, m: &CMatrix) {
    let _ = writeln!(out, "[{name} {} {}]", m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let z = m[(i, j)];
            let _ = writeln!(out, "{:e},{:e}", z.re, z.im);
        }
    }
}

pub fn read_blocks(text: &str) -> Result<Vec<(String, CMatrix)>, DumpError> {
    let mut blocks = Vec::new();
    let mut current: Option<(String, usize, usize, Vec<Complex64>)> = None;
    let syntax = |line: usize, message: &str| DumpError::Syntax {
        line,
        message: message.to_string(),
    };
    let finish = |cur: Option<(String, usize, usize, Vec<Complex64>)>, line: usize| -> Result<Option<(String, CMatrix)>, DumpError> {
        match cur {
            None => Ok(None),
            Some((name, r, c, v)) if v.len() == r * c => Ok(Some((name, CMatrix::from_row_slice(r, c, &v)))),
            Some((name, _, _, _)) => Err(syntax(line, &format!("block `{name}` has the wrong number of entries"))),
        }
    };
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(head) = line.strip_prefix('[') {
            let head = head
                .strip_suffix(']')
                .ok_or_else(|| syntax(line_no, "unterminated block header"))?;
            if let Some(b) = finish(current.take(), line_no)? {
                blocks.push(b);
            }
            let parts: Vec<&str> = head.split_whitespace().collect();
            let [name, r, c] = parts[..] else {
                return Err(syntax(line_no, "block header must be `[name rows cols]`"));
            };
            let r: usize = r.parse().map_err(|_| syntax(line_no, "bad row count"))?;
            let c: usize = c.parse().map_err(|_| syntax(line_no, "bad column count"))?;
            current = Some((name.to_string(), r, c, Vec::with_capacity(r * c)));
            continue;
        }
        let Some((_, r, c, values)) = current.as_mut() else {
            return Err(syntax(line_no, "entry outside a block"));
        };
        if values.len() == *r * *c {
            return Err(syntax(line_no, "too many entries in block"));
        }
        let (re, im) = line
            .split_once(',')
            .ok_or_else(|| syntax(line_no, "entry must be `re,im`"))?;
        let re: f64 = re.trim().parse().map_err(|_| syntax(line_no, "bad real part"))?;
        let im: f64 = im.trim().parse().map_err(|_| syntax(line_no, "bad imaginary part"))?;
        if !(re.is_finite() && im.is_finite()) {
            return Err(syntax(line_no, "entries must be finite"));
        }
        values.push(Complex64::new(re, im));
    }
    if let Some(b) = finish(current, text.lines().count())? {
        blocks.push(b);
    }
    Ok(blocks)
}

pub fn write_sdma(ch: &SdmaChannelSet) -> String {
    let mut out = String::from("# sdma channel set\n");
    for (k, g) in ch.g.iter().enumerate() {
        write_block(&mut out, &format!("g_{k}"), &CMatrix::from_columns(std::slice::from_ref(g)));
    }
    for (m, h) in ch.h.iter().enumerate() {
        write_block(&mut out, &format!("h_{m}"), &CMatrix::from_columns(std::slice::from_ref(h)));
    }
    write_block(&mut out, "g_cross", &ch.g_cross);
    write_block(&mut out, "c_si", &ch.c_si);
    out
}

fn take(blocks: &mut Vec<(String, CMatrix)>, name: &str) -> Option<CMatrix> {
    let i = blocks.iter().position(|(n, _)| n == name)?;
    Some(blocks.remove(i).1)
}

fn shape_err(name: &str, m: &CMatrix, want: String) -> DumpError {
    DumpError::Shape {
        name: name.to_string(),
        rows: m.nrows(),
        cols: m.ncols(),
        want,
    }
}

/// Inverse of [`write_sdma`]; positions are not stored and come back empty.
pub fn read_sdma(text: &str) -> Result<SdmaChannelSet, DumpError> {
    let mut blocks = read_blocks(text)?;
    let c_si = take(&mut blocks, "c_si").ok_or_else(|| DumpError::Missing("c_si".into()))?;
    let n = c_si.nrows();
    if c_si.ncols() != n {
        return Err(shape_err("c_si", &c_si, "square".into()));
    }
    let mut vectors = |prefix: &str| -> Result<Vec<CVector>, DumpError> {
        let mut out = Vec::new();
        while let Some(m) = take(&mut blocks, &format!("{prefix}_{}", out.len())) {
            if m.shape() != (n, 1) {
                return Err(shape_err(&format!("{prefix}_{}", out.len()), &m, format!("{n}x1")));
            }
            out.push(m.column(0).into_owned());
        }
        if out.is_empty() {
            return Err(DumpError::Missing(format!("{prefix}_0")));
        }
        Ok(out)
    };
    let g = vectors("g")?;
    let h = vectors("h")?;
    let g_cross = take(&mut blocks, "g_cross").ok_or_else(|| DumpError::Missing("g_cross".into()))?;
    if g_cross.shape() != (g.len(), h.len()) {
        return Err(shape_err("g_cross", &g_cross, format!("{}x{}", g.len(), h.len())));
    }
    if let Some((name, _)) = blocks.first() {
        return Err(DumpError::Syntax {
            line: 0,
            message: format!("unexpected block `{name}`"),
        });
    }
    Ok(SdmaChannelSet {
        g,
        h,
        g_cross,
        c_si,
        positions: Positions {
            base_station: [0.0, 0.0],
            users: Vec::new(),
            devices: Vec::new(),
        },
    })
}
