//! Hyperbolic label-aware classifier head.
//!
//! A sample feature goes through `Dense → tanh → Dense` to a tangent vector
//! `z`. A linear head on `z` gives class logits, and `exp_0(z)` places the
//! sample in the Poincaré ball. Training minimizes
//! `d(exp_0(z), gold label) · CE(softmax(logits), gold)`, with the label
//! embedding frozen. Predictions are decoded by Z-score thresholding.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cones::LabelEmbedding;
use crate::error::{Error, Result};
use crate::features::FeatureFile;
use crate::hyperbolic::{self, exp_map_origin_vjp, exp_map_raw, PoincareVec};
use crate::metrics::PredictionSet;
use crate::modelio::*;
use crate::nn::{cross_entropy, scale_blocks, softmax, Adam, Dense, Parameters};

pub const MAGIC: &[u8; 4] = b"HPMO";
pub const VERSION: u16 = 1;

/// A sample carrying any number of gold labels.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiLabelRow {
    pub id: String,
    pub feature: Vec<f64>,
    pub labels: Vec<String>,
}

/// A sample with exactly one gold label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledRow {
    pub id: String,
    pub feature: Vec<f64>,
    pub label: String,
}

/// One output row per (sample, label) pair, in input order. Rows with no
/// labels are dropped; their count is returned alongside.
pub fn explode_multilabel(rows: &[MultiLabelRow]) -> (Vec<LabeledRow>, usize) {
    let mut out = Vec::with_capacity(rows.len() * 2);
    let mut dropped = 0;
    for r in rows {
        if r.labels.is_empty() {
            dropped += 1;
        }
        for l in &r.labels {
            out.push(LabeledRow {
                id: r.id.clone(),
                feature: r.feature.clone(),
                label: l.clone(),
            });
        }
    }
    (out, dropped)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HypemoConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub tau: f64,
    /// Treat the distance weight as a constant during backprop.
    pub detach_weight: bool,
}

impl Default for HypemoConfig {
    fn default() -> Self {
        Self {
            hidden: 128,
            learning_rate: 5e-3,
            epochs: 100,
            batch_size: 32,
            seed: 0,
            tau: 1.0,
            detach_weight: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypemoModel {
    labels: Vec<String>,
    pub tau: f64,
    hidden: Dense,
    proj: Dense,
    head: Dense,
}

impl Parameters for HypemoModel {
    fn blocks(&self) -> Vec<&[f64]> {
        [&self.hidden, &self.proj, &self.head]
            .into_iter()
            .flat_map(|l| l.blocks())
            .collect()
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let Self {
            hidden, proj, head, ..
        } = self;
        let mut v = hidden.blocks_mut();
        v.extend(proj.blocks_mut());
        v.extend(head.blocks_mut());
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub probs: Vec<f64>,
    pub point: PoincareVec,
}

struct Cache {
    h: Vec<f64>,
    z: Vec<f64>,
    logits: Vec<f64>,
}

impl HypemoModel {
    /// Randomly initialized model for `labels` (leaf order).
    pub fn new<S: AsRef<str>>(
        input_dim: usize,
        hidden_dim: usize,
        emb_dim: usize,
        labels: &[S],
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            labels: labels.iter().map(|s| s.as_ref().to_owned()).collect(),
            tau: 1.0,
            hidden: Dense::init(input_dim, hidden_dim, &mut rng),
            proj: Dense::init(hidden_dim, emb_dim, &mut rng),
            head: Dense::init(emb_dim, labels.len(), &mut rng),
        }
    }

    /// All-zero weights.
    pub fn zeros<S: AsRef<str>>(input_dim: usize, hidden_dim: usize, emb_dim: usize, labels: &[S]) -> Self {
        Self {
            labels: labels.iter().map(|s| s.as_ref().to_owned()).collect(),
            tau: 1.0,
            hidden: Dense::zeros(input_dim, hidden_dim),
            proj: Dense::zeros(hidden_dim, emb_dim),
            head: Dense::zeros(emb_dim, labels.len()),
        }
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn input_dim(&self) -> usize {
        self.hidden.in_dim
    }

    pub fn emb_dim(&self) -> usize {
        self.proj.out_dim
    }

    fn class_of(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownLabel(label.to_owned()))
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        Ok(())
    }

    fn run(&self, x: &[f64]) -> Result<Cache> {
        let h: Vec<f64> = self.hidden.forward(x).into_iter().map(f64::tanh).collect();
        let z = self.proj.forward(&h);
        let logits = self.head.forward(&z);
        if z.iter().chain(&logits).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteActivation);
        }
        Ok(Cache { h, z, logits })
    }

    pub fn forward(&self, feature: &[f64]) -> Result<Forward> {
        self.check_input(feature)?;
        let c = self.run(feature)?;
        Ok(Forward {
            probs: softmax(&c.logits),
            point: PoincareVec::new(exp_map_raw(&c.z))?,
        })
    }

    fn check_embedding(&self, emb: &LabelEmbedding) -> Result<()> {
        if emb.dim() != self.emb_dim() {
            return Err(Error::DimMismatch {
                expected: self.emb_dim(),
                got: emb.dim(),
            });
        }
        Ok(())
    }

    /// Distance-weighted cross-entropy for a single sample.
    pub fn loss(&self, emb: &LabelEmbedding, feature: &[f64], gold: &str) -> Result<f64> {
        self.check_input(feature)?;
        self.check_embedding(emb)?;
        let k = self.class_of(gold)?;
        let c = self.run(feature)?;
        let (_, dist) = emb.nearest(&exp_map_raw(&c.z), gold)?;
        Ok(dist * cross_entropy(&c.logits, k))
    }

    /// Loss and its gradient with respect to every parameter, flattened in
    /// `Parameters` order.
    pub fn loss_and_gradient(
        &self,
        emb: &LabelEmbedding,
        feature: &[f64],
        gold: &str,
        detach_weight: bool,
    ) -> Result<(f64, Vec<f64>)> {
        self.check_input(feature)?;
        self.check_embedding(emb)?;
        let k = self.class_of(gold)?;
        let mut grad = self.zeros_like();
        let loss = self.accumulate(emb, feature, k, detach_weight, &mut grad)?;
        Ok((loss, grad.flat_parameters()))
    }

    fn zeros_like(&self) -> Self {
        Self {
            labels: Vec::new(),
            tau: self.tau,
            hidden: self.hidden.zeros_like(),
            proj: self.proj.zeros_like(),
            head: self.head.zeros_like(),
        }
    }

    fn accumulate(
        &self,
        emb: &LabelEmbedding,
        x: &[f64],
        k: usize,
        detach_weight: bool,
        grad: &mut Self,
    ) -> Result<f64> {
        let c = self.run(x)?;
        let point = exp_map_raw(&c.z);
        let (node, dist) = emb.nearest(&point, &self.labels[k])?;
        let ce = cross_entropy(&c.logits, k);

        let mut g_logits = softmax(&c.logits);
        g_logits[k] -= 1.0;
        for g in &mut g_logits {
            *g *= dist;
        }
        let mut g_z = self.head.backward(&c.z, &g_logits, &mut grad.head);
        if !detach_weight {
            let g_point = hyperbolic::distance_grad_u(&point, emb.vector(node).coords());
            let g_w = exp_map_origin_vjp(&c.z, &g_point);
            for (a, b) in g_z.iter_mut().zip(&g_w) {
                *a += ce * b;
            }
        }
        let g_h = self.proj.backward(&c.h, &g_z, &mut grad.proj);
        let g_pre: Vec<f64> = g_h.iter().zip(&c.h).map(|(g, h)| g * (1.0 - h * h)).collect();
        self.hidden.backward(x, &g_pre, &mut grad.hidden);
        Ok(dist * ce)
    }

    /// Layout after the common header:
    ///
    /// ```text
    /// input_dim u32, hidden_dim u32, emb_dim u32, n_classes u32, tau f64
    /// n_classes × { len u16, label bytes (UTF-8) }
    /// hidden (hidden_dim × input_dim, hidden_dim)
    /// proj   (emb_dim × hidden_dim, emb_dim)
    /// head   (n_classes × emb_dim, n_classes)
    /// ```
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        write_header(&mut w, MAGIC, VERSION)?;
        write_dim(&mut w, self.hidden.in_dim)?;
        write_dim(&mut w, self.hidden.out_dim)?;
        write_dim(&mut w, self.proj.out_dim)?;
        write_dim(&mut w, self.labels.len())?;
        write_f64(&mut w, self.tau)?;
        write_labels(&mut w, &self.labels)?;
        write_dense(&mut w, &self.hidden)?;
        write_dense(&mut w, &self.proj)?;
        write_dense(&mut w, &self.head)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        read_header(&mut r, MAGIC, VERSION)?;
        let input = read_dim(&mut r)?;
        let hidden = read_dim(&mut r)?;
        let emb = read_dim(&mut r)?;
        let n = read_dim(&mut r)?;
        let tau = read_f64(&mut r)?;
        let labels = read_labels(&mut r, n)?;
        let m = Self {
            labels,
            tau,
            hidden: read_dense(&mut r, input, hidden)?,
            proj: read_dense(&mut r, hidden, emb)?,
            head: read_dense(&mut r, emb, n)?,
        };
        expect_eof(&mut r)?;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

/// `label_distance(point, gold) · −log p(gold)` for a single sample.
pub fn hypemo_loss(m: &HypemoModel, emb: &LabelEmbedding, feature: &[f64], gold_leaf: &str) -> Result<f64> {
    m.loss(emb, feature, gold_leaf)
}

/// Mini-batch Adam on exploded single-label rows. Row order within each
/// epoch is shuffled with the seeded generator.
pub fn train_hypemo<S: AsRef<str>>(
    rows: &[LabeledRow],
    leaves: &[S],
    emb: &LabelEmbedding,
    cfg: &HypemoConfig,
) -> Result<HypemoModel> {
    if rows.is_empty() {
        return Err(Error::BadConfig("no training rows".into()));
    }
    if cfg.batch_size == 0 || cfg.hidden == 0 {
        return Err(Error::BadConfig("batch_size and hidden must be positive".into()));
    }
    let input_dim = rows[0].feature.len();
    let mut model = HypemoModel::new(input_dim, cfg.hidden, emb.dim(), leaves, cfg.seed);
    model.tau = cfg.tau;
    let classes: Vec<usize> = rows
        .iter()
        .map(|r| {
            model.check_input(&r.feature)?;
            model.class_of(&r.label)
        })
        .collect::<Result<_>>()?;
    for l in model.labels() {
        emb.vectors_of(l)?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut adam = Adam::new(cfg.learning_rate, &model);
    let mut order: Vec<usize> = (0..rows.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grad = model.zeros_like();
            for &i in batch {
                total += model.accumulate(emb, &rows[i].feature, classes[i], cfg.detach_weight, &mut grad)?;
            }
            scale_blocks(&mut grad, 1.0 / batch.len() as f64);
            adam.step(&mut model, &grad);
        }
        if !total.is_finite() || !model.all_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
    }
    Ok(model)
}

/// Indices whose Z-score `(p − mean)/σ` (population σ) exceeds `tau`. Falls
/// back to the arg-max (lowest index on ties) when that set is empty or σ is
/// numerically zero.
pub fn zscore_select(probs: &[f64], tau: f64) -> Vec<usize> {
    if probs.is_empty() {
        return Vec::new();
    }
    let n = probs.len() as f64;
    let mean = probs.iter().sum::<f64>() / n;
    let std = (probs.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / n).sqrt();
    let mut argmax = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[argmax] {
            argmax = i;
        }
    }
    let scale = probs.iter().fold(0.0f64, |m, p| m.max(p.abs()));
    if std <= 4.0 * f64::EPSILON * scale {
        return vec![argmax];
    }
    let picked: Vec<usize> = (0..probs.len())
        .filter(|&i| (probs[i] - mean) / std > tau)
        .collect();
    if picked.is_empty() {
        vec![argmax]
    } else {
        picked
    }
}

/// Z-score decoding to label names; `leaves[i]` names `probs[i]`.
pub fn zscore_decode<S: AsRef<str>>(probs: &[f64], tau: f64, leaves: &[S]) -> BTreeSet<String> {
    zscore_select(probs, tau)
        .into_iter()
        .map(|i| leaves[i].as_ref().to_owned())
        .collect()
}

/// Forward every record and decode with the model's `tau`. Only leaf labels
/// are produced.
pub fn predict_hier(m: &HypemoModel, features: &FeatureFile) -> Result<Vec<PredictionSet>> {
    if !features.is_empty() && features.dim() != m.input_dim() {
        return Err(Error::DimMismatch {
            expected: m.input_dim(),
            got: features.dim(),
        });
    }
    features
        .records()
        .map(|r| {
            let f = m.forward(&r.to_f64())?;
            Ok(PredictionSet {
                sample_id: r.sample_id.to_owned(),
                labels: zscore_decode(&f.probs, m.tau, m.labels()),
            })
        })
        .collect()
}
