//! File formats for trajectories, fields, and measures.
//!
//! * trajectories: CSV with columns step, t, re_w, im_w, re_dw, im_dw, int_R2
//! * fields: flat little-endian f64 binary (row-major) plus a JSON header
//! * quantum measures: CSV with columns cell, i, j, x, y, mass

use std::io::{BufRead, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::gff::{BoundaryCondition, Domain, GridField, QuantumMeasure};
use crate::loewner::FlowTrajectory;

pub fn write_trajectory_csv<W: Write>(mut out: W, traj: &FlowTrajectory) -> Result<()> {
    writeln!(out, "step,t,re_w,im_w,re_dw,im_dw,int_R2")?;
    for (k, s) in traj.states().iter().enumerate() {
        writeln!(
            out,
            "{k},{},{},{},{},{},{}",
            s.t,
            s.w.re,
            s.w.im,
            s.dw.re,
            s.dw.im,
            traj.int_r_squared(k)
        )?;
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct FieldHeader {
    domain: Domain,
    bc: BoundaryCondition,
    seed: u64,
    nx: usize,
    ny: usize,
    spacing: f64,
    origin_re: f64,
    origin_im: f64,
}

/// Writes `<stem>.f64` (raw values) and `<stem>.json` (header).
pub fn write_field(field: &GridField, stem: &Path) -> Result<()> {
    let header = FieldHeader {
        domain: field.domain,
        bc: field.bc,
        seed: field.seed,
        nx: field.nx(),
        ny: field.ny(),
        spacing: field.spacing(),
        origin_re: field.origin().re,
        origin_im: field.origin().im,
    };
    let json = serde_json::to_string_pretty(&header)
        .map_err(|e| LabError::Config(format!("header serialization: {e}")))?;
    std::fs::write(stem.with_extension("json"), json)?;

    let mut out = BufWriter::new(std::fs::File::create(stem.with_extension("f64"))?);
    for v in field.values() {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_field(stem: &Path) -> Result<GridField> {
    let json = std::fs::read_to_string(stem.with_extension("json"))?;
    let header: FieldHeader = serde_json::from_str(&json)
        .map_err(|e| LabError::Config(format!("header parse: {e}")))?;
    let mut bytes = Vec::new();
    std::fs::File::open(stem.with_extension("f64"))?.read_to_end(&mut bytes)?;
    if bytes.len() != header.nx * header.ny * 8 {
        return Err(LabError::Config(format!(
            "field payload is {} bytes, expected {}",
            bytes.len(),
            header.nx * header.ny * 8
        )));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    GridField::from_raw(
        header.domain,
        header.bc,
        header.seed,
        header.nx,
        header.ny,
        header.spacing,
        num_complex::Complex64::new(header.origin_re, header.origin_im),
        values,
    )
}

pub fn write_measure_csv<W: Write>(mut out: W, measure: &QuantumMeasure) -> Result<()> {
    writeln!(out, "cell,i,j,x,y,mass")?;
    for (idx, (i, j, z, mass)) in measure.cells.iter().enumerate() {
        writeln!(out, "{idx},{i},{j},{},{},{}", z.re, z.im, mass)?;
    }
    Ok(())
}

/// Reads a CSV produced by this module back into rows of floats, skipping
/// the header (test support for the exported formats).
pub fn read_csv_rows<R: Read>(reader: R) -> Result<Vec<Vec<f64>>> {
    let buf = std::io::BufReader::new(reader);
    let mut rows = Vec::new();
    for (ln, line) in buf.lines().enumerate() {
        let line = line?;
        if ln == 0 || line.is_empty() {
            continue;
        }
        rows.push(
            line.split(',')
                .map(|tok| {
                    tok.parse::<f64>()
                        .map_err(|e| LabError::Config(format!("bad csv field {tok}: {e}")))
                })
                .collect::<Result<Vec<f64>>>()?,
        );
    }
    Ok(rows)
}
