//! Domain, function, exhaustion and report files.
//!
//! Domains and reports are JSON; grid functions are CSV with header
//! `node,value`, where `inf` denotes `+∞`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exhaustion::Exhaustion;
use crate::function::GridFunction;
use crate::grid::{build_lattice, Kernel, MarkovGrid};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum DomainSpec {
    Lattice {
        dims: Vec<usize>,
        #[serde(default = "unit")]
        h: f64,
        #[serde(default)]
        mask: Vec<usize>,
    },
    Explicit {
        n: usize,
        /// `[i, j, p]` triplets.
        kernel: Vec<(usize, usize, f64)>,
        absorbing: Vec<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        coords: Option<Vec<Vec<f64>>>,
    },
}

fn unit() -> f64 {
    1.0
}

impl DomainSpec {
    pub fn build(&self) -> Result<MarkovGrid> {
        match self {
            DomainSpec::Lattice { dims, h, mask } => build_lattice(dims, *h, mask),
            DomainSpec::Explicit {
                n,
                kernel,
                absorbing,
                coords,
            } => {
                let k = Kernel::from_triplets(*n, kernel)?;
                let grid = MarkovGrid::new(k, coords.clone())?;
                let mut declared = absorbing.clone();
                declared.sort_unstable();
                declared.dedup();
                if let Some(&i) = declared.iter().find(|&&i| i >= *n) {
                    return Err(Error::NodeOutOfRange { node: i, n: *n });
                }
                if declared != grid.absorbing() {
                    return Err(Error::InvalidKernel(format!(
                        "declared absorbing nodes {declared:?} differ from the zero rows {:?}",
                        grid.absorbing()
                    )));
                }
                Ok(grid)
            }
        }
    }

    /// The lattice description when the grid came from a lattice build,
    /// otherwise the explicit kernel.
    pub fn from_grid(grid: &MarkovGrid) -> Self {
        match grid.lattice() {
            Some(l) => DomainSpec::Lattice {
                dims: l.dims.clone(),
                h: l.spacing,
                mask: l.mask.clone(),
            },
            None => DomainSpec::Explicit {
                n: grid.n(),
                kernel: grid.kernel().triplets(),
                absorbing: grid.absorbing(),
                coords: grid.coords().map(|c| c.to_vec()),
            },
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_json<T: for<'de> Deserialize<'de>>(path: &Path, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line() as u64,
        message: e.to_string(),
    })
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    parse_json(path, &read_text(path)?)
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::InvalidInput(e.to_string()))?;
    s.push('\n');
    write_text(path, &s)
}

pub fn read_domain(path: &Path) -> Result<MarkovGrid> {
    let spec: DomainSpec = read_json(path)?;
    spec.build()
}

pub fn write_domain(path: &Path, grid: &MarkovGrid) -> Result<()> {
    write_json(path, &DomainSpec::from_grid(grid))
}

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn parse_value(text: &str) -> Option<f64> {
    match text.trim() {
        "inf" | "+inf" | "Inf" | "+Inf" | "infinity" => Some(f64::INFINITY),
        t => t.parse::<f64>().ok(),
    }
}

/// Parses a `node,value` CSV. Every node `0..n−1` must appear exactly once.
pub fn parse_function(path: &Path, text: &str) -> Result<GridFunction> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| parse_error(path, 1, e.to_string()))?
        .clone();
    if headers.len() != 2 || &headers[0] != "node" || &headers[1] != "value" {
        return Err(parse_error(path, 1, "expected header `node,value`"));
    }
    let mut entries: Vec<(usize, f64, u64)> = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_error(path, line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != 2 {
            return Err(parse_error(path, line, "expected two fields"));
        }
        let node: usize = rec[0]
            .parse()
            .map_err(|_| parse_error(path, line, format!("invalid node index `{}`", &rec[0])))?;
        let value =
            parse_value(&rec[1]).ok_or_else(|| parse_error(path, line, format!("invalid value `{}`", &rec[1])))?;
        if value.is_nan() {
            return Err(parse_error(path, line, "value is NaN"));
        }
        if value == f64::NEG_INFINITY {
            return Err(parse_error(path, line, "value is -inf"));
        }
        entries.push((node, value, line));
    }
    let n = entries.len();
    let mut values = vec![None; n];
    for (node, value, line) in entries {
        if node >= n {
            return Err(parse_error(
                path,
                line,
                format!("node {node} out of range for {n} rows"),
            ));
        }
        if values[node].replace(value).is_some() {
            return Err(parse_error(path, line, format!("node {node} listed twice")));
        }
    }
    GridFunction::new(values.into_iter().map(|v| v.expect("every slot filled")).collect())
}

pub fn read_function(path: &Path) -> Result<GridFunction> {
    parse_function(path, &read_text(path)?)
}

/// Reads a function and checks its length against the grid.
pub fn read_function_for(path: &Path, grid: &MarkovGrid) -> Result<GridFunction> {
    let f = read_function(path)?;
    if f.len() != grid.n() {
        return Err(parse_error(
            path,
            0,
            format!("{} values for a grid with {} nodes", f.len(), grid.n()),
        ));
    }
    Ok(f)
}

pub fn format_function(f: &GridFunction) -> String {
    let mut s = String::from("node,value\n");
    for (i, v) in f.values().iter().enumerate() {
        s.push_str(&format!("{i},{v:?}\n"));
    }
    s
}

pub fn write_function(path: &Path, f: &GridFunction) -> Result<()> {
    write_text(path, &format_function(f))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExhaustionSpec {
    pub sets: Vec<Vec<usize>>,
}

pub fn read_exhaustion(path: &Path, grid: &MarkovGrid) -> Result<Exhaustion> {
    let spec: ExhaustionSpec = read_json(path)?;
    Exhaustion::from_ids(grid, &spec.sets)
}

pub fn write_exhaustion(path: &Path, e: &Exhaustion) -> Result<()> {
    write_json(
        path,
        &ExhaustionSpec {
            sets: e.sets().iter().map(|s| s.ids()).collect(),
        },
    )
}

/// Writes a table with the given header; every row must match its width.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::InvalidInput(e.to_string());
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(r).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
    write_text(path, &String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// `dir/name`, for output bundles.
pub fn output_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}
