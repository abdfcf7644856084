//! Label-set union over several prediction files.

use std::collections::{BTreeSet, HashMap};

use crate::error::{Error, Result};
use crate::metrics::PredictionSet;

/// Per id, the union of all input label sets. Output follows the first
/// file's order. Every file must cover the same ids.
pub fn union_ensemble(files: &[Vec<PredictionSet>]) -> Result<Vec<PredictionSet>> {
    let Some(first) = files.first() else {
        return Ok(Vec::new());
    };
    let maps = files.iter().map(|f| index(f)).collect::<Result<Vec<_>>>()?;
    let base: BTreeSet<&str> = maps[0].keys().copied().collect();
    let mut diff = BTreeSet::new();
    for m in &maps[1..] {
        let ids: BTreeSet<&str> = m.keys().copied().collect();
        diff.extend(base.symmetric_difference(&ids).copied());
    }
    if !diff.is_empty() {
        return Err(Error::IdMismatch(diff.into_iter().map(str::to_owned).collect()));
    }
    Ok(first
        .iter()
        .map(|p| PredictionSet {
            sample_id: p.sample_id.clone(),
            labels: maps
                .iter()
                .flat_map(|m| m[p.sample_id.as_str()].iter().cloned())
                .collect(),
        })
        .collect())
}

fn index(file: &[PredictionSet]) -> Result<HashMap<&str, &BTreeSet<String>>> {
    let mut m = HashMap::with_capacity(file.len());
    for p in file {
        if m.insert(p.sample_id.as_str(), &p.labels).is_some() {
            return Err(Error::DuplicateId(p.sample_id.clone()));
        }
    }
    Ok(m)
}
