//! Measurement CSV and report formatting.
//!
//! Numbers are written with 17 significant digits in `.`-separated scientific
//! notation, which round-trips every `f64` exactly and does not depend on locale.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::types::{MeasurementTuple, RadarSite, SiteNoise, Vec3};

pub const MEASUREMENT_HEADER: [&str; 13] = [
    "radar_id", "sx", "sy", "sz", "sigma_d", "kappa", "sigma_f", "f_c", "d", "ux", "uy", "uz", "f",
];

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("malformed header: expected `{expected}`, found `{found}`")]
    Header { expected: String, found: String },

    #[error("row {row}: {message}")]
    Row { row: usize, message: String },

    #[error("no data rows")]
    Empty,

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Formats a float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_measurements_csv<W: Write>(out: W, sites: &[RadarSite], meas: &[MeasurementTuple]) -> Result<(), FormatError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(MEASUREMENT_HEADER)?;
    for (i, (s, m)) in sites.iter().zip(meas).enumerate() {
        let mut rec = vec![i.to_string()];
        rec.extend(
            [s.s.x, s.s.y, s.s.z, s.sigma_d, s.kappa, s.sigma_f, s.f_c, m.d, m.u.x, m.u.y, m.u.z, m.f]
                .iter()
                .map(|&x| fmt_f64(x)),
        );
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a measurement CSV. Row numbers in errors count the header as row 1.
pub fn read_measurements_csv<R: Read>(input: R) -> Result<(Vec<RadarSite>, Vec<MeasurementTuple>), FormatError> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(input);
    let header = r.headers()?.clone();
    if header.iter().ne(MEASUREMENT_HEADER.iter().copied()) {
        return Err(FormatError::Header {
            expected: MEASUREMENT_HEADER.join(","),
            found: header.iter().collect::<Vec<_>>().join(","),
        });
    }
    let mut sites = Vec::new();
    let mut meas = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let row = k + 2;
        let rec = rec.map_err(|e| FormatError::Row {
            row,
            message: e.to_string(),
        })?;
        if rec.len() != MEASUREMENT_HEADER.len() {
            return Err(FormatError::Row {
                row,
                message: format!("expected {} fields, found {}", MEASUREMENT_HEADER.len(), rec.len()),
            });
        }
        let mut vals = [0.0f64; 12];
        for (j, field) in rec.iter().skip(1).enumerate() {
            vals[j] = field.trim().parse().map_err(|_| FormatError::Row {
                row,
                message: format!("column `{}`: cannot parse `{field}` as a number", MEASUREMENT_HEADER[j + 1]),
            })?;
        }
        let row_err = |e: crate::Error| FormatError::Row {
            row,
            message: e.to_string(),
        };
        let site = RadarSite::new(
            Vec3::new(vals[0], vals[1], vals[2]),
            SiteNoise {
                sigma_d: vals[3],
                kappa: vals[4],
                sigma_f: vals[5],
                f_c: vals[6],
            },
        )
        .map_err(row_err)?;
        let m = MeasurementTuple {
            d: vals[7],
            u: Vec3::new(vals[8], vals[9], vals[10]),
            f: vals[11],
        };
        m.validate().map_err(row_err)?;
        sites.push(site);
        meas.push(m);
    }
    if sites.is_empty() {
        return Err(FormatError::Empty);
    }
    Ok((sites, meas))
}

/// Writes `bytes` to `path` via a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}
