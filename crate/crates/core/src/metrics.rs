//! Hierarchical precision/recall/F1 by ancestor-set augmentation, per-class
//! F1, and binary macro-F1.

use std::collections::{BTreeSet, HashMap};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::taxonomy::Taxonomy;

/// Labels predicted (or annotated) for one sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionSet {
    #[serde(rename = "id")]
    pub sample_id: String,
    pub labels: BTreeSet<String>,
}

impl PredictionSet {
    pub fn new<I, S>(sample_id: impl Into<String>, labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            sample_id: sample_id.into(),
            labels: labels.into_iter().map(Into::into).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub hierarchical_precision: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub hierarchical_recall: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub hierarchical_f1: Option<f64>,
    pub per_class_f1: IndexMap<String, f64>,
    pub macro_f1: f64,
}

pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// `labels` together with all their non-root ancestors.
pub fn augment<'t, S: AsRef<str>>(t: &'t Taxonomy, labels: &[S]) -> Result<BTreeSet<&'t str>> {
    let mark = augment_mask(t, labels.iter().map(AsRef::as_ref))?;
    Ok(mark
        .iter()
        .enumerate()
        .filter(|(_, &m)| m)
        .map(|(i, _)| t.label_at(i))
        .collect())
}

fn augment_mask<'a>(t: &Taxonomy, labels: impl Iterator<Item = &'a str>) -> Result<Vec<bool>> {
    let root = t.node(t.root())?;
    let mut mark = vec![false; t.len()];
    for l in labels {
        let i = t.node(l)?;
        mark[i] = true;
        for (j, a) in t.ancestor_nodes(i).into_iter().enumerate() {
            mark[j] |= a;
        }
    }
    mark[root] = false;
    Ok(mark)
}

/// Pair up gold and predicted sets by sample id. Gold order is kept.
fn align<'a>(
    gold: &'a [PredictionSet],
    pred: &'a [PredictionSet],
) -> Result<Vec<(&'a PredictionSet, &'a PredictionSet)>> {
    let mut by_id: HashMap<&str, &PredictionSet> = HashMap::with_capacity(pred.len());
    for p in pred {
        if by_id.insert(&p.sample_id, p).is_some() {
            return Err(Error::DuplicateId(p.sample_id.clone()));
        }
    }
    let mut gold_ids = BTreeSet::new();
    for g in gold {
        if !gold_ids.insert(g.sample_id.as_str()) {
            return Err(Error::DuplicateId(g.sample_id.clone()));
        }
    }
    let pred_ids: BTreeSet<&str> = by_id.keys().copied().collect();
    if gold_ids != pred_ids {
        return Err(Error::IdMismatch(
            gold_ids
                .symmetric_difference(&pred_ids)
                .map(|s| s.to_string())
                .collect(),
        ));
    }
    Ok(gold.iter().map(|g| (g, by_id[g.sample_id.as_str()])).collect())
}

/// Micro-averaged hierarchical P/R/F1 over samples, plus per-leaf F1.
pub fn hierarchical_prf(
    t: &Taxonomy,
    gold: &[PredictionSet],
    pred: &[PredictionSet],
) -> Result<MetricsReport> {
    let pairs = align(gold, pred)?;
    let (mut inter, mut n_pred, mut n_gold) = (0usize, 0usize, 0usize);
    for (g, p) in &pairs {
        let ga = augment_mask(t, g.labels.iter().map(String::as_str))?;
        let pa = augment_mask(t, p.labels.iter().map(String::as_str))?;
        n_gold += ga.iter().filter(|&&x| x).count();
        n_pred += pa.iter().filter(|&&x| x).count();
        inter += ga.iter().zip(&pa).filter(|(&a, &b)| a && b).count();
    }
    if n_gold == 0 {
        return Err(Error::EmptyGold);
    }
    let hp = ratio(inter, n_pred);
    let hr = ratio(inter, n_gold);

    let leaves = t.leaf_set();
    let per_class = per_class_f1(gold, pred, &leaves)?;
    let macro_f1 = mean(per_class.values().copied());
    Ok(MetricsReport {
        hierarchical_precision: Some(hp),
        hierarchical_recall: Some(hr),
        hierarchical_f1: Some(f1(hp, hr)),
        per_class_f1: per_class,
        macro_f1,
    })
}

fn mean(xs: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = xs.len();
    if n == 0 {
        0.0
    } else {
        xs.sum::<f64>() / n as f64
    }
}

/// Binary F1 per class from sample membership; 0 when a class never occurs
/// in gold or prediction.
pub fn per_class_f1<S: AsRef<str>>(
    gold: &[PredictionSet],
    pred: &[PredictionSet],
    classes: &[S],
) -> Result<IndexMap<String, f64>> {
    let pairs = align(gold, pred)?;
    let mut out = IndexMap::with_capacity(classes.len());
    for c in classes {
        let c = c.as_ref();
        let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
        for (g, p) in &pairs {
            match (g.labels.contains(c), p.labels.contains(c)) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                (false, false) => {}
            }
        }
        out.insert(c.to_owned(), ratio(2 * tp, 2 * tp + fp + fn_));
    }
    Ok(out)
}

/// Unweighted mean of the F1 of class 0 and class 1.
pub fn macro_f1(gold: &[bool], pred: &[bool]) -> Result<MetricsReport> {
    if gold.len() != pred.len() {
        return Err(Error::LengthMismatch {
            left: gold.len(),
            right: pred.len(),
        });
    }
    let mut per_class = IndexMap::new();
    for class in [false, true] {
        let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
        for (&g, &p) in gold.iter().zip(pred) {
            match (g == class, p == class) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                (false, false) => {}
            }
        }
        per_class.insert(
            u8::from(class).to_string(),
            ratio(2 * tp, 2 * tp + fp + fn_),
        );
    }
    let macro_f1 = mean(per_class.values().copied());
    Ok(MetricsReport {
        hierarchical_precision: None,
        hierarchical_recall: None,
        hierarchical_f1: None,
        per_class_f1: per_class,
        macro_f1,
    })
}
