//! CSV metrics files and their `.meta` sidecars.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::metrics::{MetricsLog, MetricsRow};
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 7] = [
    "sim_time",
    "server_step",
    "client_updates",
    "accuracy",
    "loss",
    "mean_staleness",
    "rejected",
];

/// Shortest exponent form with 17 significant digits; parses back exactly.
pub fn format_real(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn meta_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta")
}

/// Write `bytes` to a sibling temp file, then rename over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes)
        .and_then(|()| f.sync_all())
        .map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn render_csv(log: &MetricsLog) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    // writing to a Vec cannot fail
    w.write_record(CSV_HEADER).expect("in-memory csv");
    for r in &log.rows {
        w.write_record([
            format_real(r.sim_time),
            r.server_step.to_string(),
            r.client_updates.to_string(),
            format_real(r.accuracy),
            format_real(r.loss),
            format_real(r.mean_staleness),
            r.rejected.to_string(),
        ])
        .expect("in-memory csv");
    }
    w.into_inner().expect("in-memory csv")
}

pub fn render_meta(log: &MetricsLog) -> String {
    log.metadata
        .iter()
        .map(|(k, v)| format!("{k}={v}\n"))
        .collect()
}

/// Write the metrics CSV and its `.meta` sidecar.
pub fn emit_csv(log: &MetricsLog, path: &Path) -> Result<()> {
    write_atomic(path, &render_csv(log))?;
    write_atomic(&meta_path(path), render_meta(log).as_bytes())
}

/// Parse a metrics CSV written by [`emit_csv`].
pub fn read_csv(path: &Path) -> Result<Vec<MetricsRow>> {
    let ingest = |line: u64, message: String| Error::Ingest {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => ingest(0, format!("{other:?}")),
    })?;
    let headers = reader.headers().map_err(|e| ingest(1, e.to_string()))?;
    if headers.iter().ne(CSV_HEADER) {
        return Err(ingest(1, "unexpected header".into()));
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i as u64 + 2;
        let rec = rec.map_err(|e| ingest(line, e.to_string()))?;
        let real = |j: usize| -> Result<f64> {
            rec[j]
                .parse()
                .map_err(|_| ingest(line, format!("bad {} `{}`", CSV_HEADER[j], &rec[j])))
        };
        let int = |j: usize| -> Result<u64> {
            rec[j]
                .parse()
                .map_err(|_| ingest(line, format!("bad {} `{}`", CSV_HEADER[j], &rec[j])))
        };
        rows.push(MetricsRow {
            sim_time: real(0)?,
            server_step: int(1)?,
            client_updates: int(2)?,
            accuracy: real(3)?,
            loss: real(4)?,
            mean_staleness: real(5)?,
            rejected: int(6)?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::DenseVec;
    use proptest::prelude::*;

    fn row(t: f64, acc: f64) -> MetricsRow {
        MetricsRow {
            sim_time: t,
            server_step: 3,
            client_updates: 30,
            accuracy: acc,
            loss: 0.1 + acc,
            mean_staleness: 1.0 / 3.0,
            rejected: 2,
        }
    }

    #[test]
    fn empty_log_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        emit_csv(&MetricsLog::new(DenseVec::zeros(1)), &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text, format!("{}\n", CSV_HEADER.join(",")));
        assert!(read_csv(&path).unwrap().is_empty());
        assert!(meta_path(&path).exists());
    }

    #[test]
    fn meta_holds_key_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub").join("m.csv");
        let mut log = MetricsLog::new(DenseVec::zeros(1));
        log.metadata.push(("sim.seed".into(), "9".into()));
        emit_csv(&log, &path).unwrap();
        assert_eq!(
            fs::read_to_string(meta_path(&path)).unwrap(),
            "sim.seed=9\n"
        );
    }

    #[test]
    fn bad_rows_are_reported_with_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(
            &path,
            format!("{}\n0,0,0,0,0,0,0\n1,x,0,0,0,0,0\n", CSV_HEADER.join(",")),
        )
        .unwrap();
        match read_csv(&path) {
            Err(Error::Ingest { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    proptest! {
        #[test]
        fn round_trip_is_exact(vals in proptest::collection::vec((0.0f64..1e6, 0.0f64..1.0), 0..20)) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("rt.csv");
            let mut log = MetricsLog::new(DenseVec::zeros(1));
            log.rows = vals.iter().map(|&(t, a)| row(t, a)).collect();
            emit_csv(&log, &path).unwrap();
            let back = read_csv(&path).unwrap();
            prop_assert_eq!(back.len(), log.rows.len());
            for (a, b) in back.iter().zip(&log.rows) {
                prop_assert_eq!(a.sim_time.to_bits(), b.sim_time.to_bits());
                prop_assert_eq!(a.accuracy.to_bits(), b.accuracy.to_bits());
                prop_assert_eq!(a.loss.to_bits(), b.loss.to_bits());
                prop_assert_eq!(a.mean_staleness.to_bits(), b.mean_staleness.to_bits());
                prop_assert_eq!(a, b);
            }
        }
    }
}
