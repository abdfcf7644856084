//! Datasets, label files and prediction files (all JSONL), text
//! normalization and label statistics.

use std::collections::{BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use indexmap::IndexMap;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::binary::BinaryPrediction;
use crate::error::{Error, Result};
use crate::features::{check_same_ids, FeatureFile};
use crate::hypemo::MultiLabelRow;
use crate::metrics::PredictionSet;
use crate::taxonomy::{nfc, Taxonomy};

/// Lowercased text with line breaks turned into spaces, commas, numerals and
/// other non-alphanumeric symbols removed, and whitespace collapsed.
pub fn normalize_text(s: &str) -> String {
    let kept: String = s
        .chars()
        .map(|c| if c == '\n' || c == '\r' { ' ' } else { c })
        .filter(|&c| c != ',' && !c.is_numeric())
        .filter(|&c| c.is_alphanumeric() || c.is_whitespace())
        .collect();
    kept.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    #[serde(default)]
    pub text: String,
    #[serde(default)]
    pub labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<String>,
}

/// Read JSONL, one value per non-blank line. Parse errors carry the line
/// number.
pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| Error::Jsonl {
            path: path.to_owned(),
            line: i + 1,
            source,
        })?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, rows: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_jsonl_to(&mut w, rows)?;
    w.flush()?;
    Ok(())
}

pub fn write_jsonl_to<W: Write, T: Serialize>(mut w: W, rows: &[T]) -> Result<()> {
    for r in rows {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Read a dataset. With a taxonomy, labels are NFC-normalized and must be
/// leaves.
pub fn read_dataset(path: impl AsRef<Path>, taxonomy: Option<&Taxonomy>) -> Result<Vec<Sample>> {
    let mut samples: Vec<Sample> = read_jsonl(path)?;
    validate_samples(&mut samples, taxonomy)?;
    Ok(samples)
}

pub fn validate_samples(samples: &mut [Sample], taxonomy: Option<&Taxonomy>) -> Result<()> {
    let mut seen = HashSet::with_capacity(samples.len());
    for s in samples.iter_mut() {
        if !seen.insert(s.id.clone()) {
            return Err(Error::DuplicateId(s.id.clone()));
        }
        if let Some(t) = taxonomy {
            for l in &mut s.labels {
                *l = nfc(l);
                if !t.contains(l) || !t.is_leaf(l)? {
                    return Err(Error::UnknownLabel(l.clone()));
                }
            }
        }
    }
    Ok(())
}

pub fn write_dataset(path: impl AsRef<Path>, samples: &[Sample]) -> Result<()> {
    write_jsonl(path, samples)
}

/// Pair each sample with its feature row, in sample order. The two id sets
/// must match.
pub fn attach_features(samples: &[Sample], features: &FeatureFile) -> Result<Vec<MultiLabelRow>> {
    check_same_ids(samples.iter().map(|s| &s.id), features.ids().iter())?;
    Ok(samples
        .iter()
        .map(|s| MultiLabelRow {
            id: s.id.clone(),
            feature: features.get(&s.id).expect("ids checked").iter().map(|&v| f64::from(v)).collect(),
            labels: s.labels.clone(),
        })
        .collect())
}

#[derive(Serialize, Deserialize)]
struct BinaryLabel {
    id: String,
    #[serde(deserialize_with = "zero_or_one")]
    label: u8,
}

fn zero_or_one<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<u8, D::Error> {
    let v = u8::deserialize(d)?;
    if v > 1 {
        return Err(serde::de::Error::custom(format!("label must be 0 or 1, got {v}")));
    }
    Ok(v)
}

/// `{"id": str, "label": 0|1}` per line.
pub fn read_binary_labels(path: impl AsRef<Path>) -> Result<Vec<(String, bool)>> {
    let rows: Vec<BinaryLabel> = read_jsonl(path)?;
    let mut seen = HashSet::with_capacity(rows.len());
    rows.into_iter()
        .map(|r| {
            if !seen.insert(r.id.clone()) {
                return Err(Error::DuplicateId(r.id));
            }
            Ok((r.id, r.label == 1))
        })
        .collect()
}

pub fn write_binary_labels(path: impl AsRef<Path>, labels: &[(String, bool)]) -> Result<()> {
    let rows: Vec<BinaryLabel> = labels
        .iter()
        .map(|(id, y)| BinaryLabel {
            id: id.clone(),
            label: u8::from(*y),
        })
        .collect();
    write_jsonl(path, &rows)
}

/// `{"id": str, "labels": [str]}` per line.
pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<PredictionSet>> {
    let mut rows: Vec<PredictionSet> = read_jsonl(path)?;
    for r in &mut rows {
        r.labels = r.labels.iter().map(|l| nfc(l)).collect::<BTreeSet<_>>();
    }
    Ok(rows)
}

pub fn write_predictions(path: impl AsRef<Path>, rows: &[PredictionSet]) -> Result<()> {
    write_jsonl(path, rows)
}

/// Dataset labels as prediction sets, for scoring against gold.
pub fn gold_sets(samples: &[Sample]) -> Vec<PredictionSet> {
    samples
        .iter()
        .map(|s| PredictionSet::new(s.id.clone(), s.labels.iter().cloned()))
        .collect()
}

pub fn read_binary_predictions(path: impl AsRef<Path>) -> Result<Vec<BinaryPrediction>> {
    read_jsonl(path)
}

pub fn write_binary_predictions(path: impl AsRef<Path>, rows: &[BinaryPrediction]) -> Result<()> {
    write_jsonl(path, rows)
}

/// Count of every leaf label, keyed in leaf-index order.
pub fn stats(samples: &[Sample], taxonomy: &Taxonomy) -> Result<IndexMap<String, usize>> {
    let mut counts: IndexMap<String, usize> =
        taxonomy.leaf_set().iter().map(|l| (l.to_string(), 0)).collect();
    for s in samples {
        for l in &s.labels {
            *counts
                .get_mut(nfc(l).as_str())
                .ok_or_else(|| Error::UnknownLabel(l.clone()))? += 1;
        }
    }
    Ok(counts)
}
