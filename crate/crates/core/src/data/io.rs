//! JSONL ingestion and re-serialization.
//!
//! One distribution per line. Two record schemas:
//!
//! ```text
//! {"id": "p0", "label": 1, "samples": [[0.1, 0.2], [0.3, 0.4]]}
//! {"id": "h0", "label": null, "support_size": 16, "indices": [0, 3], "weights": [0.25, 0.75]}
//! ```
//!
//! Floats round-trip exactly: serialization uses the shortest representation
//! that parses back to the same bits.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{
    Dataset, DistributionDataset, EmpiricalDistribution, SupportDistribution, SupportIndexDataset,
};
use crate::error::{Error, Result};

/// On-disk dataset schema.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    /// `{"id", "label", "samples"}` records.
    Jsonl,
    /// `{"id", "label", "support_size", "indices", "weights"}` records.
    HistogramJsonl,
}

impl std::str::FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" => Ok(DatasetFormat::Jsonl),
            "histogram-jsonl" => Ok(DatasetFormat::HistogramJsonl),
            other => Err(Error::Invalid(format!("unknown dataset format `{other}`"))),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleRecord {
    id: String,
    label: Option<i64>,
    samples: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HistogramRecord {
    id: String,
    label: Option<i64>,
    support_size: usize,
    indices: Vec<usize>,
    weights: Vec<f64>,
}

/// Load a dataset, preserving file order. Errors report the offending line.
pub fn load_dataset(path: impl AsRef<Path>, format: DatasetFormat) -> Result<Dataset> {
    let path = path.as_ref();
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string());
    let reader = BufReader::new(File::open(path)?);

    match format {
        DatasetFormat::Jsonl => {
            let mut dists = Vec::new();
            for (lineno, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let record: SampleRecord =
                    serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
                        line: lineno + 1,
                        message: e.to_string(),
                    })?;
                dists.push(record_to_distribution(record, lineno + 1)?);
            }
            Ok(Dataset::Empirical(DistributionDataset::new(name, dists)?))
        }
        DatasetFormat::HistogramJsonl => {
            let mut dists = Vec::new();
            let mut support_size = None;
            for (lineno, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let record: HistogramRecord =
                    serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
                        line: lineno + 1,
                        message: e.to_string(),
                    })?;
                match support_size {
                    None => support_size = Some(record.support_size),
                    Some(v) if v != record.support_size => {
                        return Err(Error::DimensionMismatch(format!(
                            "line {}: support_size {} differs from {}",
                            lineno + 1,
                            record.support_size,
                            v
                        )));
                    }
                    _ => {}
                }
                dists.push(SupportDistribution::new(
                    record.id,
                    record.indices,
                    record.weights,
                    record.support_size,
                    record.label,
                )?);
            }
            let support_size =
                support_size.ok_or_else(|| Error::Invalid(format!("dataset `{name}` is empty")))?;
            Ok(Dataset::Support(SupportIndexDataset::new(
                name,
                dists,
                support_size,
            )?))
        }
    }
}

fn record_to_distribution(record: SampleRecord, line: usize) -> Result<EmpiricalDistribution> {
    let n = record.samples.len();
    if n == 0 {
        return Err(Error::MalformedRecord {
            line,
            message: format!("`{}` has no samples", record.id),
        });
    }
    let d = record.samples[0].len();
    for (i, row) in record.samples.iter().enumerate() {
        if row.len() != d {
            return Err(Error::DimensionMismatch(format!(
                "line {line}: sample {i} of `{}` has width {} but the first sample has {}",
                record.id,
                row.len(),
                d
            )));
        }
    }
    let flat: Vec<f64> = record.samples.into_iter().flatten().collect();
    let samples = Array2::from_shape_vec((n, d), flat)
        .map_err(|e| Error::Invalid(e.to_string()))?;
    EmpiricalDistribution::new(record.id, samples, record.label)
}

/// Write a dataset back to JSONL in its natural schema.
pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path.as_ref())?);
    match dataset {
        Dataset::Empirical(ds) => {
            for dist in ds.iter() {
                let record = SampleRecord {
                    id: dist.id().to_string(),
                    label: dist.label(),
                    samples: dist
                        .samples()
                        .rows()
                        .into_iter()
                        .map(|r| r.to_vec())
                        .collect(),
                };
                serde_json::to_writer(&mut out, &record)
                    .map_err(|e| Error::Invalid(e.to_string()))?;
                out.write_all(b"\n")?;
            }
        }
        Dataset::Support(ds) => {
            for dist in ds.iter() {
                let record = HistogramRecord {
                    id: dist.id().to_string(),
                    label: dist.label(),
                    support_size: ds.support_size(),
                    indices: dist.indices().to_vec(),
                    weights: dist.weights().to_vec(),
                };
                serde_json::to_writer(&mut out, &record)
                    .map_err(|e| Error::Invalid(e.to_string()))?;
                out.write_all(b"\n")?;
            }
        }
    }
    out.flush()?;
    Ok(())
}
