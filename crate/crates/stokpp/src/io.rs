//! File formats: CSV with a header row, binary field snapshots, tabulated
//! kernels and JSON summaries.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so equal
//! values always produce equal bytes.

use std::borrow::Cow;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::Serialize;
use stokpp_core::ensemble::{EnsembleSummary, WCovTable};
use stokpp_core::grid::{Field, GridSpec};
use stokpp_core::noise::TabulatedKernel;
use stokpp_core::sde::SdePath;

use crate::error::{Error, Result};

/// Quotes a CSV cell when it contains a separator, quote or line break.
pub fn csv_escape(cell: &str) -> Cow<'_, str> {
    if cell.contains([',', '"', '\n', '\r']) {
        Cow::Owned(format!("\"{}\"", cell.replace('"', "\"\"")))
    } else {
        Cow::Borrowed(cell)
    }
}

pub struct CsvWriter<W: Write> {
    out: W,
    columns: usize,
}

impl<W: Write> CsvWriter<W> {
    pub fn new(mut out: W, header: &[&str]) -> std::io::Result<Self> {
        write_row(&mut out, header.iter().copied())?;
        Ok(Self {
            out,
            columns: header.len(),
        })
    }

    pub fn row<S: AsRef<str>>(&mut self, cells: &[S]) -> std::io::Result<()> {
        assert_eq!(cells.len(), self.columns, "CSV row width");
        write_row(&mut self.out, cells.iter().map(AsRef::as_ref))
    }

    pub fn numbers(&mut self, cells: &[f64]) -> std::io::Result<()> {
        let cells: Vec<String> = cells.iter().map(|v| v.to_string()).collect();
        self.row(&cells)
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

fn write_row<'a>(out: &mut impl Write, cells: impl Iterator<Item = &'a str>) -> std::io::Result<()> {
    for (i, c) in cells.enumerate() {
        if i > 0 {
            out.write_all(b",")?;
        }
        out.write_all(csv_escape(c).as_bytes())?;
    }
    out.write_all(b"\n")
}

/// Splits one CSV record, honouring quoted cells. Records spanning lines are
/// not supported (none of our inputs need them).
pub fn csv_split(line: &str) -> std::result::Result<Vec<String>, String> {
    let mut cells = Vec::new();
    let mut cur = String::new();
    let mut chars = line.chars().peekable();
    let mut quoted = false;
    while let Some(c) = chars.next() {
        match (quoted, c) {
            (true, '"') if chars.peek() == Some(&'"') => {
                cur.push('"');
                chars.next();
            }
            (true, '"') => quoted = false,
            (true, c) => cur.push(c),
            (false, '"') if cur.is_empty() => quoted = true,
            (false, ',') => cells.push(std::mem::take(&mut cur)),
            (false, c) => cur.push(c),
        }
    }
    if quoted {
        return Err("unterminated quoted cell".into());
    }
    cells.push(cur);
    Ok(cells)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn finish(path: &Path, mut w: BufWriter<File>) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    finish(path, w)
}

pub fn write_field_csv(path: &Path, field: &Field) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut csv = CsvWriter::new(create(path)?, &["x", "value"]).map_err(io)?;
    for (i, &v) in field.values.iter().enumerate() {
        csv.numbers(&[field.grid.x(i), v]).map_err(io)?;
    }
    finish(path, csv.into_inner())
}

// ------------------------------------------------------------ snapshots

const SNAPSHOT_HEADER: usize = 5 * 8;

/// Little-endian: `x0, dx` (f64), `n` (u64), `frame_offset, time` (f64),
/// then `n` values (f64).
pub fn encode_snapshot(field: &Field) -> Vec<u8> {
    let g = &field.grid;
    let mut out = Vec::with_capacity(SNAPSHOT_HEADER + 8 * g.n);
    out.extend_from_slice(&g.x0.to_le_bytes());
    out.extend_from_slice(&g.dx.to_le_bytes());
    out.extend_from_slice(&(g.n as u64).to_le_bytes());
    out.extend_from_slice(&g.frame_offset.to_le_bytes());
    out.extend_from_slice(&field.time.to_le_bytes());
    for v in &field.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_snapshot(bytes: &[u8]) -> Result<Field> {
    if bytes.len() < SNAPSHOT_HEADER {
        return Err(Error::Format(format!("snapshot of {} bytes has no header", bytes.len())));
    }
    let word = |k: usize| -> [u8; 8] { bytes[8 * k..8 * k + 8].try_into().unwrap() };
    let f = |k| f64::from_le_bytes(word(k));
    let n = u64::from_le_bytes(word(2));
    let expected = (n as usize)
        .checked_mul(8)
        .and_then(|b| b.checked_add(SNAPSHOT_HEADER))
        .filter(|&len| len == bytes.len())
        .ok_or_else(|| Error::Format(format!("snapshot header says {n} nodes but holds {} bytes", bytes.len())))?;
    let values = bytes[SNAPSHOT_HEADER..expected]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let mut grid = GridSpec::new(f(0), f(1), n as usize).map_err(|e| Error::Format(e.to_string()))?;
    grid.frame_offset = f(3);
    Field::new(grid, values, f(4)).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_snapshot(path: &Path, field: &Field) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(&encode_snapshot(field)).map_err(|e| Error::io(path, e))?;
    finish(path, w)
}

pub fn read_snapshot(path: &Path) -> Result<Field> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode_snapshot(&bytes)
}

// ------------------------------------------------------------ kernels

/// Two-column `lag, gamma` CSV. A non-numeric first row is a header; blank
/// lines and `#` comments are skipped.
pub fn parse_tabulated_kernel(text: &str, origin: &str) -> Result<TabulatedKernel> {
    let mut lags = Vec::new();
    let mut values = Vec::new();
    let mut seen_row = false;
    for (k, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |message: String| Error::Parse {
            path: origin.to_string(),
            line: k + 1,
            key: "kernel".into(),
            message,
        };
        let cells = csv_split(line).map_err(bad)?;
        if cells.len() != 2 {
            return Err(bad(format!("expected 2 columns, found {}", cells.len())));
        }
        let parsed: std::result::Result<Vec<f64>, _> = cells.iter().map(|c| c.trim().parse::<f64>()).collect();
        match parsed {
            Ok(p) => {
                lags.push(p[0]);
                values.push(p[1]);
            }
            Err(_) if !seen_row => {}
            Err(e) => return Err(bad(format!("not a number: {e}"))),
        }
        seen_row = true;
    }
    TabulatedKernel::new(lags, values).map_err(|e| Error::Parse {
        path: origin.to_string(),
        line: 0,
        key: "kernel".into(),
        message: e.to_string(),
    })
}

pub fn read_tabulated_kernel(path: &Path) -> Result<TabulatedKernel> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_tabulated_kernel(&text, &path.display().to_string())
}

// ------------------------------------------------------------ tables

/// Long format `level, kind, t, g`: one row per marker observation.
pub fn write_markers_csv(path: &Path, summary: &EnsembleSummary) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut csv = CsvWriter::new(create(path)?, &["level", "kind", "t", "g"]).map_err(io)?;
    for track in &summary.tracks {
        let kind = format!("{:?}", track.kind).to_lowercase();
        for (t, g) in track.times.iter().zip(&track.positions) {
            csv.row(&[track.a.to_string(), kind.clone(), t.to_string(), g.to_string()]).map_err(io)?;
        }
    }
    finish(path, csv.into_inner())
}

pub fn write_wcov_csv(path: &Path, table: &WCovTable) -> Result<()> {
    let io = |e| Error::io(path, e);
    let header = [
        "lag",
        "covariance",
        "std_error",
        "second_moment",
        "second_moment_se",
        "mean_w",
        "predicted_covariance",
    ];
    let mut csv = CsvWriter::new(create(path)?, &header).map_err(io)?;
    for e in &table.entries {
        csv.numbers(&[
            e.lag,
            e.covariance,
            e.std_error,
            e.second_moment,
            e.second_moment_se,
            e.mean_w,
            e.predicted_covariance,
        ])
        .map_err(io)?;
    }
    finish(path, csv.into_inner())
}

/// Cross-path `t, mean, var` of `v` at every `stride`-th step.
pub fn write_sde_csv(path: &Path, paths: &[SdePath], stride: usize) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut csv = CsvWriter::new(create(path)?, &["t", "mean", "var"]).map_err(io)?;
    let Some(first) = paths.first() else {
        return finish(path, csv.into_inner());
    };
    let mut column = vec![0.0; paths.len()];
    for step in (0..=first.steps()).step_by(stride.max(1)) {
        for (c, p) in column.iter_mut().zip(paths) {
            *c = p.values[step];
        }
        let mean = stokpp_core::stats::mean(&column);
        let var = if column.len() > 1 {
            stokpp_core::stats::sample_variance(&column)
        } else {
            0.0
        };
        csv.numbers(&[first.time(step), mean, var]).map_err(io)?;
    }
    finish(path, csv.into_inner())
}

/// Reads a whole CSV file into rows (header included).
pub fn read_csv(path: &Path) -> Result<Vec<Vec<String>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    BufReader::new(file)
        .lines()
        .enumerate()
        .map(|(k, line)| {
            let line = line.map_err(|e| Error::io(path, e))?;
            csv_split(&line).map_err(|message| Error::Parse {
                path: path.display().to_string(),
                line: k + 1,
                key: "csv".into(),
                message,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn escaping_round_trips() {
        for cell in ["plain", "a,b", "say \"hi\"", "two\nlines", ""] {
            let mut out = Vec::new();
            write_row(&mut out, [cell, "x"].into_iter()).unwrap();
            let line = String::from_utf8(out).unwrap();
            if !cell.contains('\n') {
                assert_eq!(csv_split(line.trim_end_matches('\n')).unwrap(), vec![cell.to_string(), "x".into()]);
            }
        }
        assert_eq!(csv_escape("a\"b"), "\"a\"\"b\"");
    }

    #[test]
    fn snapshot_round_trip_is_bitwise() {
        let mut grid = GridSpec::new(-3.25, 0.05, 17).unwrap();
        grid.frame_offset = 1.5;
        let field = Field::from_fn(grid, |x| (-x * x).exp() + 1e-300);
        let mut field = field;
        field.time = 12.5;
        let back = decode_snapshot(&encode_snapshot(&field)).unwrap();
        assert_eq!(back.grid, field.grid);
        assert_eq!(back.time.to_bits(), field.time.to_bits());
        assert!(back.values.iter().zip(&field.values).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn truncated_snapshot_is_rejected() {
        let field = Field::constant(GridSpec::new(0.0, 0.1, 4).unwrap(), 0.5);
        let bytes = encode_snapshot(&field);
        assert!(decode_snapshot(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode_snapshot(&bytes[..10]).is_err());
    }

    #[test]
    fn kernel_csv_with_header_and_comments() {
        let text = "# measured\nlag,gamma\n0,1\n0.5, 0.6\n1,0.2\n";
        let k = parse_tabulated_kernel(text, "k.csv").unwrap();
        assert_eq!(k.lags(), &[0.0, 0.5, 1.0]);
        assert_eq!(k.values(), &[1.0, 0.6, 0.2]);
    }

    #[test]
    fn kernel_csv_reports_line() {
        let err = parse_tabulated_kernel("lag,gamma\n0,1\n1,oops\n", "k.csv").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }
}
