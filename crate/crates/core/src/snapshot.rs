//! CSV snapshot of one time slice of a field.
//!
//! Layout:
//!
//! ```text
//! # nbmo-snapshot v1 n=2 L=4 N=64 ordering=row-major t=0.25
//! x1,x2,value
//! -3.9375,-3.9375,0.0012
//! ...
//! ```
//!
//! Rows follow the flat storage order: the last coordinate (the normal
//! direction `x_n`) varies fastest. Values are written in shortest
//! round-trip form, so a write/read cycle is lossless.

use std::io::{BufRead, BufReader, Read, Write};

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField};

pub const SNAPSHOT_VERSION: u32 = 1;
const MAGIC: &str = "nbmo-snapshot";

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotHeader {
    pub dim: usize,
    pub half_width: f64,
    pub points: usize,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub header: SnapshotHeader,
    pub values: Vec<f64>,
}

impl Snapshot {
    /// Attach the values to `grid`; the spatial layout must match the header.
    pub fn into_field(self, grid: &Grid) -> Result<ScalarField> {
        let h = &self.header;
        if grid.dim() != h.dim || grid.points() != h.points || grid.half_width() != h.half_width {
            return Err(Error::Snapshot(format!(
                "header n={} L={} N={} does not match grid n={} L={} N={}",
                h.dim,
                h.half_width,
                h.points,
                grid.dim(),
                grid.half_width(),
                grid.points()
            )));
        }
        ScalarField::new(grid, self.values)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Snapshot(e.to_string())
}

pub fn write_snapshot<W: Write>(mut out: W, f: &ScalarField, time: f64) -> Result<()> {
    let g = f.grid();
    writeln!(
        out,
        "# {MAGIC} v{SNAPSHOT_VERSION} n={} L={} N={} ordering=row-major t={time}",
        g.dim(),
        g.half_width(),
        g.points()
    )?;
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (1..=g.dim()).map(|i| format!("x{i}")).collect();
    header.push("value".into());
    w.write_record(&header).map_err(csv_err)?;
    let mut p = vec![0.0; g.dim()];
    let mut row = Vec::with_capacity(g.dim() + 1);
    for (idx, v) in f.values().iter().enumerate() {
        g.point(idx, &mut p);
        row.clear();
        row.extend(p.iter().map(|x| x.to_string()));
        row.push(v.to_string());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn parse_header(line: &str) -> Result<SnapshotHeader> {
    let bad = |m: &str| Error::Snapshot(format!("{m} in header '{}'", line.trim_end()));
    let mut words = line.trim().strip_prefix('#').ok_or_else(|| bad("missing '#'"))?.split_whitespace();
    if words.next() != Some(MAGIC) {
        return Err(bad("missing magic"));
    }
    if words.next() != Some(&format!("v{SNAPSHOT_VERSION}")) {
        return Err(bad("unsupported version"));
    }
    let (mut dim, mut half_width, mut points, mut time, mut ordering) = (None, None, None, None, None);
    for w in words {
        let (k, v) = w.split_once('=').ok_or_else(|| bad("malformed field"))?;
        match k {
            "n" => dim = v.parse().ok(),
            "L" => half_width = v.parse().ok(),
            "N" => points = v.parse().ok(),
            "t" => time = v.parse().ok(),
            "ordering" => ordering = Some(v.to_string()),
            _ => return Err(bad("unknown field")),
        }
    }
    if ordering.as_deref() != Some("row-major") {
        return Err(bad("ordering must be row-major"));
    }
    match (dim, half_width, points, time) {
        (Some(dim), Some(half_width), Some(points), Some(time)) => {
            Ok(SnapshotHeader { dim, half_width, points, time })
        }
        _ => Err(bad("missing or invalid n, L, N or t")),
    }
}

pub fn read_snapshot<R: Read>(input: R) -> Result<Snapshot> {
    let mut reader = BufReader::new(input);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let header = parse_header(&first)?;
    let mut rdr = csv::Reader::from_reader(reader);
    let cols = rdr.headers().map_err(csv_err)?.len();
    if cols != header.dim + 1 {
        return Err(Error::Snapshot(format!("expected {} columns, found {cols}", header.dim + 1)));
    }
    let mut values = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let v = rec[header.dim]
            .parse::<f64>()
            .map_err(|e| Error::Snapshot(format!("row {}: {e}", values.len() + 1)))?;
        values.push(v);
    }
    let expected = header.points.pow(header.dim as u32);
    if values.len() != expected {
        return Err(Error::Snapshot(format!("expected {expected} rows, found {}", values.len())));
    }
    Ok(Snapshot { header, values })
}
