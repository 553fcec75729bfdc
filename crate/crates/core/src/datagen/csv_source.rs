use std::collections::HashMap;
use std::path::Path;

use super::{ClientDataset, Example};
use crate::error::{Error, Result};

/// Read a federation from a headed, comma-separated file. Every distinct
/// value of `client_column` becomes one client (ids assigned in order of
/// first appearance); rows keep their file order within a client.
pub fn load_csv_federation(
    path: &Path,
    feature_columns: &[&str],
    label_column: &str,
    client_column: &str,
) -> Result<Vec<ClientDataset>> {
    let ingest = |line: u64, message: String| Error::Ingest {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => ingest(0, format!("{other:?}")),
        })?;

    let headers = reader
        .headers()
        .map_err(|e| ingest(1, e.to_string()))?
        .clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| ingest(1, format!("unknown column `{name}`")))
    };
    let feature_idx = feature_columns
        .iter()
        .map(|c| column(c))
        .collect::<Result<Vec<_>>>()?;
    let label_idx = column(label_column)?;
    let client_idx = column(client_column)?;

    let mut ids: HashMap<String, usize> = HashMap::new();
    let mut clients: Vec<ClientDataset> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            ingest(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| record.get(i).unwrap_or("").trim();

        let features = feature_idx
            .iter()
            .map(|&i| {
                field(i)
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        ingest(
                            line,
                            format!(
                                "non-numeric feature `{}` in column {}",
                                field(i),
                                headers[i].trim()
                            ),
                        )
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        let raw_label = field(label_idx);
        let label = raw_label
            .parse::<f64>()
            .ok()
            .filter(|v| *v >= 0.0 && v.fract() == 0.0 && v.is_finite())
            .ok_or_else(|| {
                ingest(
                    line,
                    format!("label `{raw_label}` is not a non-negative integer"),
                )
            })? as usize;

        let key = field(client_idx).to_string();
        let next = ids.len();
        let id = *ids.entry(key).or_insert(next);
        if id == clients.len() {
            clients.push(ClientDataset::new(id, Vec::new()));
        }
        clients[id].examples.push(Example::new(features, label));
    }
    Ok(clients)
}
