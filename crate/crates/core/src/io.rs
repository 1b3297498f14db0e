//! Boundary import and export: a `#`-prefixed JSON header line followed by
//! `u,theta` rows.

use std::io::{BufRead, BufReader, Read, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::boundary::{Boundary, BoundaryKind};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Real + DeserializeOwned"))]
pub struct BoundaryHeader<T> {
    pub params: ModelParams<T>,
    pub lambda: Option<T>,
    pub kind: BoundaryKind,
}

fn io_err(e: impl std::fmt::Display) -> Error {
    Error::Config(format!("boundary file: {e}"))
}

pub fn write_boundary<T, W>(w: W, b: &Boundary<T>, header: &BoundaryHeader<T>) -> Result<()>
where
    T: Real + Serialize,
    W: Write,
{
    let mut w = w;
    let json = serde_json::to_string(header).map_err(io_err)?;
    writeln!(w, "# {json}").map_err(io_err)?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["u", "theta"]).map_err(io_err)?;
    for (u, t) in b.grid.iter().zip(&b.theta) {
        out.serialize((u.to_f64().unwrap_or(f64::NAN), t.to_f64().unwrap_or(f64::NAN)))
            .map_err(io_err)?;
    }
    out.flush().map_err(io_err)?;
    Ok(())
}

pub fn read_boundary<T, R>(r: R) -> Result<(Boundary<T>, BoundaryHeader<T>)>
where
    T: Real + DeserializeOwned,
    R: Read,
{
    let mut r = BufReader::new(r);
    let mut first = String::new();
    r.read_line(&mut first).map_err(io_err)?;
    let json = first.trim().strip_prefix('#').ok_or_else(|| io_err("missing header line"))?;
    let header: BoundaryHeader<T> = serde_json::from_str(json.trim()).map_err(io_err)?;
    let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
    let mut grid = Vec::new();
    let mut theta = Vec::new();
    for row in rd.deserialize::<(f64, f64)>() {
        let (u, t) = row.map_err(io_err)?;
        grid.push(crate::scalar::lit::<T>(u));
        theta.push(crate::scalar::lit::<T>(t));
    }
    let b = Boundary::new(grid, theta, header.kind, header.params.sigma_h2)?;
    Ok((b, header))
}
