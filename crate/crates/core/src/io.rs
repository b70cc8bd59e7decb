//! Plain-text artifacts: grid fields as CSV with a three-line header, and
//! two-column curves.
//!
//! Grid layout:
//!
//! ```text
//! # axes 0:16:401 -5:7:301
//! # gamma=0.6 penalty=1 charge=once
//! x1,x2,value
//! 0.0000000000000000e0,-5.0000000000000000e0,-1.0000000000000000e0
//! ```
//!
//! Rows are row-major with the last axis varying fastest. Numbers carry 17
//! significant digits, so parsing a file gives back the exact `f64`s.

use std::fmt::Write as _;
use std::path::Path;

use crate::dynsys::{Axis, StateGrid};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GridCsv {
    pub axes: Vec<Axis>,
    /// `key=value` pairs of the metadata line, in order.
    pub meta: Vec<(String, String)>,
    pub column: String,
    pub values: Vec<f64>,
}

fn parse_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parse(msg.into()))
}

fn valid_token(s: &str) -> bool {
    !s.is_empty() && !s.contains(|c: char| c.is_whitespace() || c == ',' || c == '=')
}

fn axis_names(dim: usize) -> Vec<String> {
    (1..=dim).map(|i| format!("x{i}")).collect()
}

impl GridCsv {
    pub fn new(grid: &StateGrid, meta: Vec<(String, String)>, column: &str, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Config(format!(
                "field has {} values, grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if !valid_token(column) || meta.iter().any(|(k, v)| !valid_token(k) || !valid_token(v)) {
            return Err(Error::Config("column and metadata must be non-empty words".into()));
        }
        Ok(Self { axes: grid.axes().to_vec(), meta, column: column.to_string(), values })
    }

    /// Boolean mask as a 0/1 field.
    pub fn from_mask(grid: &StateGrid, meta: Vec<(String, String)>, column: &str, mask: &[bool]) -> Result<Self> {
        Self::new(grid, meta, column, mask.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect())
    }

    pub fn grid(&self) -> Result<StateGrid> {
        StateGrid::new(self.axes.clone())
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn to_csv_string(&self) -> String {
        let grid = StateGrid::new(self.axes.clone()).expect("axes were validated on construction");
        let mut out = String::with_capacity(64 * self.values.len() + 128);
        out.push_str("# axes");
        for a in &self.axes {
            let _ = write!(out, " {}:{}:{}", a.min, a.max, a.count);
        }
        out.push_str("\n#");
        for (k, v) in &self.meta {
            let _ = write!(out, " {k}={v}");
        }
        out.push('\n');
        for name in axis_names(self.axes.len()) {
            let _ = write!(out, "{name},");
        }
        out.push_str(&self.column);
        out.push('\n');
        for (i, v) in self.values.iter().enumerate() {
            for c in grid.coords(i) {
                let _ = write!(out, "{c:.16e},");
            }
            let _ = writeln!(out, "{}", fmt_value(*v, &self.column));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let axes_line = lines.next().ok_or(Error::Parse("empty file".into()))?;
        let axes = axes_line
            .strip_prefix("# axes")
            .ok_or(Error::Parse("first line must start with '# axes'".into()))?
            .split_whitespace()
            .map(parse_axis)
            .collect::<Result<Vec<_>>>()?;
        if axes.is_empty() {
            return parse_err("no axes declared");
        }
        let grid = StateGrid::new(axes.clone()).map_err(|e| Error::Parse(e.to_string()))?;
        let n = axes.iter().try_fold(1usize, |acc, a| acc.checked_mul(a.count));
        if n.is_none_or(|n| n > 1 << 28) {
            return parse_err("grid too large");
        }

        let meta_line = lines.next().ok_or(Error::Parse("missing metadata line".into()))?;
        let meta = meta_line
            .strip_prefix('#')
            .ok_or(Error::Parse("metadata line must start with '#'".into()))?
            .split_whitespace()
            .map(|kv| match kv.split_once('=') {
                Some((k, v)) if valid_token(k) && valid_token(v) => Ok((k.to_string(), v.to_string())),
                _ => parse_err(format!("bad metadata entry '{kv}'")),
            })
            .collect::<Result<Vec<_>>>()?;

        let header: Vec<&str> = lines.next().ok_or(Error::Parse("missing column line".into()))?.split(',').collect();
        let names = axis_names(axes.len());
        if header.len() != axes.len() + 1 || header.iter().zip(&names).any(|(h, n)| h != n) {
            return parse_err(format!("column line must be {},<name>", names.join(",")));
        }
        let column = header[axes.len()].to_string();
        if !valid_token(&column) {
            return parse_err("empty value column name");
        }

        let mut values = Vec::new();
        for (i, line) in lines.enumerate() {
            if i >= grid.len() {
                return parse_err("more rows than grid nodes");
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != axes.len() + 1 {
                return parse_err(format!("row {i}: expected {} fields", axes.len() + 1));
            }
            let expect = grid.coords(i);
            for (f, e) in fields.iter().zip(&expect) {
                let c: f64 = f.parse().map_err(|_| Error::Parse(format!("row {i}: bad number '{f}'")))?;
                if c != *e {
                    return parse_err(format!("row {i}: coordinate {c} does not match node {e}"));
                }
            }
            let last = fields[axes.len()];
            values.push(last.parse().map_err(|_| Error::Parse(format!("row {i}: bad value '{last}'")))?);
        }
        if values.len() != grid.len() {
            return parse_err(format!("expected {} rows, found {}", grid.len(), values.len()));
        }
        Ok(Self { axes, meta, column, values })
    }
}

fn fmt_value(v: f64, column: &str) -> String {
    if column.ends_with("mask") {
        // masks are 0/1 already; keep them short
        format!("{v}")
    } else {
        format!("{v:.16e}")
    }
}

fn parse_axis(spec: &str) -> Result<Axis> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return parse_err(format!("axis '{spec}' is not min:max:count"));
    }
    let min: f64 = parts[0].parse().map_err(|_| Error::Parse(format!("bad axis bound '{}'", parts[0])))?;
    let max: f64 = parts[1].parse().map_err(|_| Error::Parse(format!("bad axis bound '{}'", parts[1])))?;
    let count: usize = parts[2].parse().map_err(|_| Error::Parse(format!("bad axis count '{}'", parts[2])))?;
    Axis::new(min, max, count).map_err(|e| Error::Parse(e.to_string()))
}

/// Two-column CSV with a header line.
pub fn curve_to_csv(names: (&str, &str), samples: &[(f64, f64)]) -> String {
    let mut out = format!("{},{}\n", names.0, names.1);
    for (x, y) in samples {
        let _ = writeln!(out, "{x:.16e},{y:.16e}");
    }
    out
}

pub fn parse_curve_csv(text: &str) -> Result<((String, String), Vec<(f64, f64)>)> {
    let mut lines = text.lines();
    let header = lines.next().ok_or(Error::Parse("empty file".into()))?;
    let (a, b) = match header.split_once(',') {
        Some((a, b)) if valid_token(a) && valid_token(b) => (a.to_string(), b.to_string()),
        _ => return parse_err("header must be two column names"),
    };
    let samples = lines
        .enumerate()
        .map(|(i, line)| {
            let (x, y) = line.split_once(',').ok_or(Error::Parse(format!("row {i}: expected two fields")))?;
            let num = |s: &str| s.parse::<f64>().map_err(|_| Error::Parse(format!("row {i}: bad number '{s}'")));
            Ok((num(x)?, num(y)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(((a, b), samples))
}

/// Writes through a temporary sibling and a rename, so a file is either
/// absent or complete.
pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
