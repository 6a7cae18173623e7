//! On-disk formats: diagnostics CSV, snapshot files and run reports.
//!
//! Diagnostics CSV, schema version [`CSV_SCHEMA_VERSION`]:
//! `time, mass, l1, l2, lp_<p>…, linf, energy, min, max, spectral_tail, dt`,
//! then for every ledger exponent `dp_<p>, dp_slack_<p>, sv_<p>, sv_slack_<p>`,
//! then `energy_dissipation, energy_dissipation_slack`. Norm columns other
//! than `l1`, `l2` and `linf` appear in increasing `p`. Floats are written in
//! shortest round-trip scientific notation.
//!
//! Snapshots are a text header line `NLPMSNAP1 <d> <N> <time>` followed by
//! `N^d` little-endian `f64` samples in row-major order, with a TOML sidecar
//! carrying the time and the full run configuration.

use std::fs;
use std::io::{self, BufRead, Read, Write};
use std::path::Path;

use nlpm::diagnostics::DiagnosticsRecord;
use nlpm::torus::{make_grid, Field};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

pub const CSV_SCHEMA_VERSION: u32 = 1;
pub const SNAPSHOT_MAGIC: &str = "NLPMSNAP1";

fn p_label(p: f64) -> String {
    format!("{p}")
}

fn norm_column(p: f64) -> String {
    if p == 1.0 {
        "l1".into()
    } else if p == 2.0 {
        "l2".into()
    } else if p == f64::INFINITY {
        "linf".into()
    } else {
        format!("lp_{}", p_label(p))
    }
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

/// Column order of the norms: `l1`, `l2`, the rest by `p`, then `linf`.
fn norm_order(record: &DiagnosticsRecord) -> Vec<f64> {
    let ps: Vec<f64> = record.lp_norms.iter().map(|(p, _)| *p).collect();
    let mut ordered: Vec<f64> = [1.0, 2.0].into_iter().filter(|p| ps.contains(p)).collect();
    let mut rest: Vec<f64> = ps.iter().copied().filter(|p| *p != 1.0 && *p != 2.0 && p.is_finite()).collect();
    rest.sort_by(|a, b| a.total_cmp(b));
    ordered.extend(rest);
    if ps.contains(&f64::INFINITY) {
        ordered.push(f64::INFINITY);
    }
    ordered
}

pub fn csv_header(first: &DiagnosticsRecord) -> Vec<String> {
    let mut cols: Vec<String> = vec!["time".into(), "mass".into()];
    cols.extend(norm_order(first).into_iter().map(norm_column));
    cols.extend(["energy", "min", "max", "spectral_tail", "dt"].map(String::from));
    for acc in &first.ledger.per_p {
        let p = p_label(acc.p);
        cols.extend([format!("dp_{p}"), format!("dp_slack_{p}"), format!("sv_{p}"), format!("sv_slack_{p}")]);
    }
    cols.extend(["energy_dissipation", "energy_dissipation_slack"].map(String::from));
    cols
}

fn csv_row(r: &DiagnosticsRecord, norms: &[f64]) -> Vec<String> {
    let mut row = vec![num(r.time), num(r.mass)];
    row.extend(norms.iter().map(|p| num(r.lp(*p).unwrap_or(f64::NAN))));
    row.extend([r.energy, r.min_value, r.max_value, r.spectral_tail, r.dt].map(num));
    for acc in &r.ledger.per_p {
        row.extend([acc.dp, acc.dp_slack, acc.sv, acc.sv_slack].map(num));
    }
    row.extend([r.ledger.energy, r.ledger.energy_slack].map(num));
    row
}

/// Writes the diagnostics table of `records`.
pub fn write_csv<W: Write>(out: W, records: &[DiagnosticsRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if let Some(first) = records.first() {
        let norms = norm_order(first);
        w.write_record(csv_header(first))?;
        for r in records {
            w.write_record(csv_row(r, &norms))?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn csv_string(records: &[DiagnosticsRecord]) -> String {
    let mut buf = Vec::new();
    write_csv(&mut buf, records).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("the CSV is ASCII")
}

/// Sidecar metadata of a snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotMeta {
    pub time: f64,
    pub d: usize,
    pub n: usize,
    pub config: RunConfig,
}

pub fn write_snapshot(bin: &Path, field: &Field, time: f64, config: &RunConfig) -> io::Result<()> {
    let grid = field.grid();
    let mut out = io::BufWriter::new(fs::File::create(bin)?);
    writeln!(out, "{SNAPSHOT_MAGIC} {} {} {}", grid.dimension(), grid.points_per_axis(), num(time))?;
    for v in field.values() {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    let meta = SnapshotMeta { time, d: grid.dimension(), n: grid.points_per_axis(), config: config.clone() };
    let text = toml::to_string(&meta).map_err(io::Error::other)?;
    fs::write(bin.with_extension("toml"), text)
}

/// Reads a snapshot back as `(time, field)`.
pub fn read_snapshot(bin: &Path) -> io::Result<(f64, Field)> {
    let bad = |msg: String| io::Error::new(io::ErrorKind::InvalidData, format!("{}: {msg}", bin.display()));
    let mut reader = io::BufReader::new(fs::File::open(bin)?);
    let mut header = String::new();
    reader.read_line(&mut header)?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 4 || parts[0] != SNAPSHOT_MAGIC {
        return Err(bad(format!("bad header {header:?}")));
    }
    let d: usize = parts[1].parse().map_err(|_| bad("bad dimension".into()))?;
    let n: usize = parts[2].parse().map_err(|_| bad("bad grid size".into()))?;
    let time: f64 = parts[3].parse().map_err(|_| bad("bad time".into()))?;
    let grid = make_grid(d, n).map_err(|e| bad(e.to_string()))?;
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    if bytes.len() != 8 * grid.total_points() {
        return Err(bad(format!("expected {} samples, found {} bytes", grid.total_points(), bytes.len())));
    }
    let values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let field = Field::new(grid, values).map_err(|e| bad(e.to_string()))?;
    Ok((time, field))
}
