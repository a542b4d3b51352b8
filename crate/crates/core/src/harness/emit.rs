//! CSV and JSON output of sweep results.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use super::config::Format;
use super::sweep::{PointRecord, SweepResult};
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 9] = [
    "detector",
    "snr_db",
    "trials",
    "errors",
    "ser",
    "ci_lo",
    "ci_hi",
    "ser_se_pred",
    "diverged",
];

/// 17 significant digits: enough to read back the same `f64`.
fn float(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io("<csv>", io),
        other => Error::analysis(format!("csv: {other:?}")),
    }
}

pub fn write_csv<W: Write>(w: W, records: &[PointRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in records {
        out.write_record([
            r.detector.clone(),
            float(r.snr_db),
            r.trials.to_string(),
            r.errors.to_string(),
            float(r.ser),
            float(r.ci_lo),
            float(r.ci_hi),
            r.ser_se_pred.map(float).unwrap_or_default(),
            r.diverged.to_string(),
        ])
        .map_err(csv_err)?;
    }
    out.flush().map_err(|e| Error::io("<csv>", e))
}

/// Parses the CSV layout written by [`write_csv`]. Wall time is not part of
/// the CSV and reads back as zero.
pub fn read_csv<R: Read>(r: R) -> Result<Vec<PointRecord>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers().map_err(csv_err)?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::config(format!("unexpected csv header {header:?}")));
    }
    let bad = |field: &str, v: &str| Error::config(format!("bad {field} value '{v}'"));
    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(csv_err)?;
        let f =
            |i: usize| -> Result<f64> { row[i].parse().map_err(|_| bad(CSV_HEADER[i], &row[i])) };
        let u =
            |i: usize| -> Result<u64> { row[i].parse().map_err(|_| bad(CSV_HEADER[i], &row[i])) };
        records.push(PointRecord {
            detector: row[0].to_string(),
            snr_db: f(1)?,
            trials: u(2)?,
            errors: u(3)?,
            ser: f(4)?,
            ci_lo: f(5)?,
            ci_hi: f(6)?,
            ser_se_pred: if row[7].is_empty() { None } else { Some(f(7)?) },
            diverged: u(8)?,
            wall_time_s: 0.0,
        });
    }
    Ok(records)
}

/// Writes `<dir>/<name>.csv` or `<dir>/<name>.json` and returns the path.
pub fn emit(result: &SweepResult, format: Format, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let ext = match format {
        Format::Csv => "csv",
        Format::Json => "json",
    };
    let path = dir.join(format!("{}.{ext}", result.config.name));
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = BufWriter::new(file);
    match format {
        Format::Csv => write_csv(&mut w, &result.records).map_err(|e| match e {
            Error::Io { source, .. } => Error::io(&path, source),
            other => other,
        })?,
        Format::Json => {
            serde_json::to_writer_pretty(&mut w, result)
                .map_err(|e| Error::io(&path, std::io::Error::other(e)))?;
            w.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(ser: f64, pred: Option<f64>) -> PointRecord {
        PointRecord {
            detector: "exact/optimal/10".into(),
            snr_db: 0.1 + 0.2,
            trials: 3,
            errors: 7,
            ser,
            ci_lo: ser / 3.0,
            ci_hi: ser * std::f64::consts::PI,
            ser_se_pred: pred,
            diverged: 1,
            wall_time_s: 0.0,
        }
    }

    #[test]
    fn empty_result_is_header_only() {
        let mut buf = Vec::new();
        write_csv(&mut buf, &[]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "detector,snr_db,trials,errors,ser,ci_lo,ci_hi,ser_se_pred,diverged\n"
        );
    }

    #[test]
    fn missing_prediction_is_blank() {
        let mut buf = Vec::new();
        write_csv(&mut buf, &[rec(0.25, None)]).unwrap();
        let back = read_csv(buf.as_slice()).unwrap();
        assert_eq!(back[0].ser_se_pred, None);
    }

    #[test]
    fn rejects_foreign_header() {
        assert!(read_csv("a,b\n1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn unwritable_directory_is_io_error() {
        let dir = std::env::temp_dir().join(format!("mlama-emit-{}", std::process::id()));
        std::fs::write(&dir, b"not a directory").unwrap();
        let result = SweepResult {
            config: crate::harness::SweepConfig::from_toml("detectors=[\"mf\"]\nsnr_db=[0.0]")
                .unwrap(),
            seed: 0,
            mt: 64,
            records: vec![],
        };
        let err = emit(&result, Format::Csv, &dir.join("sub")).unwrap_err();
        std::fs::remove_file(&dir).unwrap();
        assert!(matches!(err, Error::Io { .. }));
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_bit_exact(ser in 0.0f64..1.0, pred in proptest::option::of(1e-300f64..1.0)) {
            let records = vec![rec(ser, pred), rec(ser.sqrt(), None)];
            let mut buf = Vec::new();
            write_csv(&mut buf, &records).unwrap();
            let back = read_csv(buf.as_slice()).unwrap();
            prop_assert_eq!(back.len(), 2);
            for (a, b) in records.iter().zip(&back) {
                prop_assert_eq!(a.snr_db.to_bits(), b.snr_db.to_bits());
                prop_assert_eq!(a.ser.to_bits(), b.ser.to_bits());
                prop_assert_eq!(a.ci_lo.to_bits(), b.ci_lo.to_bits());
                prop_assert_eq!(a.ci_hi.to_bits(), b.ci_hi.to_bits());
                prop_assert_eq!(a.ser_se_pred.map(f64::to_bits), b.ser_se_pred.map(f64::to_bits));
                prop_assert_eq!((a.trials, a.errors, a.diverged), (b.trials, b.errors, b.diverged));
            }
        }
    }
}
