//! CSV formats.
//!
//! Field files have a header `x1,..,xn,f1,..,fm` and one row per grid node
//! in grid order (last axis fastest). Spectral files have a header
//! `alpha1,..,alphan,re_f1,im_f1,..` and one row per retained mode; modes
//! that are not listed are zero. Numbers are written in shortest
//! round-trip form, so equal data give byte-identical files.

use std::io::{Read, Write};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::mode_algebra::MultiIndex;
use crate::torus_fourier::{GridField, SpectralField, TorusGrid};

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|e| Error::Parse {
        line,
        message: format!("{s:?}: {e}"),
    })
}

fn count_prefixed(header: &csv::StringRecord, prefix: &str) -> usize {
    header.iter().filter(|h| h.trim().starts_with(prefix)).count()
}

pub fn write_field<W: Write>(field: &GridField, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let n = field.grid.dim;
    let header: Vec<String> = (1..=n)
        .map(|i| format!("x{i}"))
        .chain((1..=field.components).map(|i| format!("f{i}")))
        .collect();
    w.write_record(&header)?;
    for node in 0..field.grid.len() {
        let row: Vec<String> = field
            .grid
            .point(node)
            .iter()
            .chain(field.at(node))
            .map(|v| format!("{v}"))
            .collect();
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_field<R: Read>(input: R) -> Result<GridField> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    let n = count_prefixed(&header, "x");
    let m = count_prefixed(&header, "f");
    if n == 0 || m == 0 || n + m != header.len() {
        return Err(Error::Parse {
            line: 1,
            message: "expected header x1..xn,f1..fm".into(),
        });
    }
    let mut coords = Vec::new();
    let mut values = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = row + 2;
        for (c, s) in rec.iter().enumerate() {
            let v = parse_f64(s, line)?;
            if c < n {
                coords.push(v);
            } else {
                values.push(v);
            }
        }
    }
    let rows = coords.len() / n;
    let points = (rows as f64).powf(1.0 / n as f64).round() as usize;
    let grid = TorusGrid::new(n, points.max(1))?;
    if grid.len() != rows {
        return Err(Error::Parse {
            line: 0,
            message: format!("{rows} rows do not form a grid in {n} dimensions"),
        });
    }
    for node in 0..rows {
        let expect = grid.point(node);
        let got = &coords[node * n..(node + 1) * n];
        if expect.iter().zip(got).any(|(a, b)| (a - b).abs() > 1e-9) {
            return Err(Error::Parse {
                line: node + 2,
                message: format!("coordinates {got:?} out of grid order, expected {expect:?}"),
            });
        }
    }
    GridField::new(grid, m, values)
}

pub fn write_spectral<W: Write>(field: &SpectralField, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let header: Vec<String> = (1..=field.dim)
        .map(|i| format!("alpha{i}"))
        .chain((1..=field.components).flat_map(|i| [format!("re_f{i}"), format!("im_f{i}")]))
        .collect();
    w.write_record(&header)?;
    for (pos, alpha) in field.modes().iter().enumerate() {
        let mut row: Vec<String> = alpha.0.iter().map(|a| a.to_string()).collect();
        for c in field.by_position(pos) {
            row.push(format!("{}", c.re));
            row.push(format!("{}", c.im));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a spectral file; the radius is the largest `|alpha_i|` present unless `radius` is given.
pub fn read_spectral<R: Read>(input: R, radius: Option<usize>) -> Result<SpectralField> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    let n = count_prefixed(&header, "alpha");
    let rest = header.len() - n;
    if n == 0 || rest == 0 || rest % 2 != 0 {
        return Err(Error::Parse {
            line: 1,
            message: "expected header alpha1..alphan,re_f1,im_f1,..".into(),
        });
    }
    let comps = rest / 2;
    let mut rows = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = row + 2;
        let alpha = rec
            .iter()
            .take(n)
            .map(|s| {
                s.trim().parse::<i64>().map_err(|e| Error::Parse {
                    line,
                    message: format!("{s:?}: {e}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let nums = rec.iter().skip(n).map(|s| parse_f64(s, line)).collect::<Result<Vec<_>>>()?;
        let vals: Vec<Complex64> = nums.chunks(2).map(|p| Complex64::new(p[0], p[1])).collect();
        rows.push((MultiIndex(alpha), vals, line));
    }
    let radius = radius.unwrap_or_else(|| rows.iter().map(|(a, _, _)| a.radius() as usize).max().unwrap_or(0));
    let mut field = SpectralField::zeros(n, comps, radius);
    for (alpha, vals, line) in rows {
        let slot = field.get_mut(&alpha).ok_or_else(|| Error::Parse {
            line,
            message: format!("mode {alpha} outside radius {radius}"),
        })?;
        slot.copy_from_slice(&vals);
    }
    Ok(field)
}
