//! CSV ingestion of sites and observations, and realization output.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::geometry::{LocationSet, Metric, Point};
use crate::simulate::Realization;

/// Sites and field values read from one data table.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub locations: LocationSet,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Layout {
    Planar,
    Spherical,
}

fn layout(headers: &csv::StringRecord, want_z: bool) -> Result<(Layout, [usize; 2], Option<usize>)> {
    let find = |name: &str| headers.iter().position(|h| h.trim() == name);
    let z = if want_z {
        Some(find("z").ok_or_else(|| Error::Parse {
            row: 1,
            message: "missing column 'z'".into(),
        })?)
    } else {
        None
    };
    if let (Some(x), Some(y)) = (find("x"), find("y")) {
        return Ok((Layout::Planar, [x, y], z));
    }
    if let (Some(lon), Some(lat)) = (find("lon"), find("lat")) {
        return Ok((Layout::Spherical, [lon, lat], z));
    }
    Err(Error::Parse {
        row: 1,
        message: "header must contain 'x,y' or 'lon,lat'".into(),
    })
}

fn field(rec: &csv::StringRecord, col: usize, row: usize, name: &str) -> Result<f64> {
    let raw = rec.get(col).ok_or_else(|| Error::Parse {
        row,
        message: format!("missing field '{name}'"),
    })?;
    raw.trim().parse::<f64>().map_err(|_| Error::Parse {
        row,
        message: format!("cannot parse '{raw}' as a number in column '{name}'"),
    })
}

fn metric_for(layout: Layout, radius_km: f64) -> Metric {
    match layout {
        Layout::Planar => Metric::Euclidean,
        Layout::Spherical => Metric::GreatCircle { radius_km },
    }
}

/// Rows are numbered as in the file: the header is row 1.
fn records<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader)
}

/// Read `x,y` or `lon,lat` sites; spherical tables use a sphere of `radius_km`.
pub fn read_locations<R: Read>(reader: R, radius_km: f64) -> Result<LocationSet> {
    let mut rdr = records(reader);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    let (lay, cols, _) = layout(&headers, false)?;
    let mut points = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 2;
        let rec = rec.map_err(csv_error)?;
        points.push([
            field(&rec, cols[0], row, &headers[cols[0]])?,
            field(&rec, cols[1], row, &headers[cols[1]])?,
        ]);
    }
    LocationSet::new(points, metric_for(lay, radius_km))
}

/// Read `x,y,z` or `lon,lat,z`; with a `rep` column only rows of replicate `rep` are kept.
pub fn read_dataset<R: Read>(reader: R, radius_km: f64, mut rep: Option<u64>) -> Result<Dataset> {
    let mut rdr = records(reader);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    let (lay, cols, z) = layout(&headers, true)?;
    let z = z.expect("z requested");
    let rep_col = headers.iter().position(|h| h == "rep");
    let mut points: Vec<Point> = Vec::new();
    let mut values = Vec::new();
    let mut first_rep = None;
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 2;
        let rec = rec.map_err(csv_error)?;
        if let Some(rc) = rep_col {
            let r = field(&rec, rc, row, "rep")?;
            if r < 0.0 || r.fract() != 0.0 {
                return Err(Error::Parse {
                    row,
                    message: format!("replicate index '{r}' is not a non-negative integer"),
                });
            }
            let r = r as u64;
            let wanted = *rep.get_or_insert(*first_rep.get_or_insert(r));
            if r != wanted {
                continue;
            }
        }
        points.push([
            field(&rec, cols[0], row, &headers[cols[0]])?,
            field(&rec, cols[1], row, &headers[cols[1]])?,
        ]);
        values.push(field(&rec, z, row, "z")?);
    }
    if points.is_empty() {
        return Err(Error::Parse {
            row: 1,
            message: "no observations".into(),
        });
    }
    let locations = LocationSet::new(points, metric_for(lay, radius_km))?;
    Ok(Dataset { locations, values })
}

fn csv_error(e: csv::Error) -> Error {
    match e.position() {
        Some(p) => Error::Parse {
            row: p.line() as usize,
            message: e.to_string(),
        },
        None => Error::Io(e.to_string()),
    }
}

/// Write realizations as `rep,x,y,z` rows; replicate numbers start at 0.
pub fn write_realizations<W: Write>(mut out: W, locs: &LocationSet, reps: &[Realization]) -> Result<()> {
    writeln!(out, "rep,x,y,z")?;
    for (r, real) in reps.iter().enumerate() {
        if real.values.len() != locs.len() {
            return Err(Error::Dimension {
                expected: locs.len(),
                got: real.values.len(),
            });
        }
        for (p, v) in locs.points().iter().zip(&real.values) {
            writeln!(out, "{r},{},{},{}", p[0], p[1], v)?;
        }
    }
    Ok(())
}
