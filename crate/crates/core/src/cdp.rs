//! Class-definition multi-task head.
//!
//! A shared `Dense → tanh` trunk feeds two heads. The class head emits one
//! sigmoid per leaf. The match head sees `trunk(sample) ⊕ trunk(definition)`
//! and predicts whether the definition belongs to one of the sample's gold
//! labels.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureFile;
use crate::hypemo::MultiLabelRow;
use crate::metrics::PredictionSet;
use crate::modelio::*;
use crate::nn::{bce_with_logit, scale_blocks, sigmoid, Adam, Dense, Parameters};

pub const MAGIC: &[u8; 4] = b"CDPM";
pub const VERSION: u16 = 1;
pub const DEFAULT_LAMBDA_AUX: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CdpConfig {
    pub hidden: usize,
    pub match_hidden: usize,
    pub lambda_aux: f64,
    pub threshold: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for CdpConfig {
    fn default() -> Self {
        Self {
            hidden: 128,
            match_hidden: 64,
            lambda_aux: DEFAULT_LAMBDA_AUX,
            threshold: 0.5,
            learning_rate: 5e-3,
            epochs: 100,
            batch_size: 32,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CdpModel {
    labels: Vec<String>,
    pub lambda_aux: f64,
    pub threshold: f64,
    trunk: Dense,
    class_head: Dense,
    match_hidden: Dense,
    match_out: Dense,
}

impl Parameters for CdpModel {
    fn blocks(&self) -> Vec<&[f64]> {
        [&self.trunk, &self.class_head, &self.match_hidden, &self.match_out]
            .into_iter()
            .flat_map(|l| l.blocks())
            .collect()
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let Self {
            trunk,
            class_head,
            match_hidden,
            match_out,
            ..
        } = self;
        let mut v = trunk.blocks_mut();
        v.extend(class_head.blocks_mut());
        v.extend(match_hidden.blocks_mut());
        v.extend(match_out.blocks_mut());
        v
    }
}

/// Forward activations kept for backprop.
struct Pass {
    h: Vec<f64>,
    logits: Vec<f64>,
}

impl CdpModel {
    pub fn new<S: AsRef<str>>(input_dim: usize, labels: &[S], cfg: &CdpConfig) -> Result<Self> {
        if !(cfg.lambda_aux >= 0.0) || !cfg.lambda_aux.is_finite() {
            return Err(Error::BadConfig(format!("lambda_aux must be ≥ 0, got {}", cfg.lambda_aux)));
        }
        if cfg.hidden == 0 || cfg.match_hidden == 0 {
            return Err(Error::BadConfig("hidden widths must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Ok(Self {
            labels: labels.iter().map(|s| s.as_ref().to_owned()).collect(),
            lambda_aux: cfg.lambda_aux,
            threshold: cfg.threshold,
            trunk: Dense::init(input_dim, cfg.hidden, &mut rng),
            class_head: Dense::init(cfg.hidden, labels.len(), &mut rng),
            match_hidden: Dense::init(2 * cfg.hidden, cfg.match_hidden, &mut rng),
            match_out: Dense::init(cfg.match_hidden, 1, &mut rng),
        })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn input_dim(&self) -> usize {
        self.trunk.in_dim
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

    fn class_of(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownLabel(label.to_owned()))
    }

    fn trunk(&self, x: &[f64]) -> Vec<f64> {
        self.trunk.forward(x).into_iter().map(f64::tanh).collect()
    }

    fn pass(&self, x: &[f64]) -> Result<Pass> {
        let h = self.trunk(x);
        let logits = self.class_head.forward(&h);
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteActivation);
        }
        Ok(Pass { h, logits })
    }

    /// Per-class membership probabilities.
    pub fn class_probs(&self, feature: &[f64]) -> Result<Vec<f64>> {
        self.check_input(feature)?;
        Ok(self.pass(feature)?.logits.into_iter().map(sigmoid).collect())
    }

    /// Probability that `definition` describes one of the sample's labels.
    pub fn match_prob(&self, feature: &[f64], definition: &[f64]) -> Result<f64> {
        self.check_input(feature)?;
        self.check_input(definition)?;
        let (_, _, logit) = self.match_forward(&self.trunk(feature), &self.trunk(definition));
        Ok(sigmoid(logit))
    }

    fn match_forward(&self, hs: &[f64], hd: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
        let joined: Vec<f64> = hs.iter().chain(hd).copied().collect();
        let m: Vec<f64> = self.match_hidden.forward(&joined).into_iter().map(f64::tanh).collect();
        let logit = self.match_out.forward(&m)[0];
        (joined, m, logit)
    }

    fn gold_mask(&self, gold: &[String]) -> Result<Vec<f64>> {
        let mut y = vec![0.0; self.labels.len()];
        for g in gold {
            y[self.class_of(g)?] = 1.0;
        }
        Ok(y)
    }

    /// `Σ_k BCE(σ(logit_k), [k ∈ gold]) + λ · BCE(match, [matched ∈ gold])`.
    pub fn loss(&self, feature: &[f64], definition: &[f64], gold: &[String], matched: &str) -> Result<f64> {
        self.check_input(feature)?;
        self.check_input(definition)?;
        let y = self.gold_mask(gold)?;
        let t = y[self.class_of(matched)?];
        let p = self.pass(feature)?;
        let class: f64 = p.logits.iter().zip(&y).map(|(&z, &y)| bce_with_logit(z, y)).sum();
        let (_, _, logit) = self.match_forward(&p.h, &self.trunk(definition));
        Ok(class + self.lambda_aux * bce_with_logit(logit, t))
    }

    /// Loss and flat gradient in `Parameters` order.
    pub fn loss_and_gradient(
        &self,
        feature: &[f64],
        definition: &[f64],
        gold: &[String],
        matched: &str,
    ) -> Result<(f64, Vec<f64>)> {
        self.check_input(feature)?;
        self.check_input(definition)?;
        let y = self.gold_mask(gold)?;
        let t = y[self.class_of(matched)?];
        let mut grad = self.zeros_like();
        let l = self.accumulate(feature, &y, &[(definition, t)], 1.0, &mut grad)?;
        Ok((l, grad.flat_parameters()))
    }

    fn zeros_like(&self) -> Self {
        Self {
            labels: Vec::new(),
            lambda_aux: self.lambda_aux,
            threshold: self.threshold,
            trunk: self.trunk.zeros_like(),
            class_head: self.class_head.zeros_like(),
            match_hidden: self.match_hidden.zeros_like(),
            match_out: self.match_out.zeros_like(),
        }
    }

    /// Class loss plus `λ · pair_weight · Σ_pairs match BCE`.
    fn accumulate(
        &self,
        x: &[f64],
        y: &[f64],
        pairs: &[(&[f64], f64)],
        pair_weight: f64,
        grad: &mut Self,
    ) -> Result<f64> {
        let p = self.pass(x)?;
        let mut loss: f64 = p.logits.iter().zip(y).map(|(&z, &y)| bce_with_logit(z, y)).sum();
        let g_logits: Vec<f64> = p.logits.iter().zip(y).map(|(&z, &y)| sigmoid(z) - y).collect();
        let mut g_h = self.class_head.backward(&p.h, &g_logits, &mut grad.class_head);

        let w = self.lambda_aux * pair_weight;
        for &(def, t) in pairs {
            let hd = self.trunk(def);
            let (joined, m, logit) = self.match_forward(&p.h, &hd);
            loss += w * bce_with_logit(logit, t);
            if w == 0.0 {
                continue;
            }
            let g_m = self.match_out.backward(&m, &[w * (sigmoid(logit) - t)], &mut grad.match_out);
            let g_pre: Vec<f64> = g_m.iter().zip(&m).map(|(g, a)| g * (1.0 - a * a)).collect();
            let g_joined = self.match_hidden.backward(&joined, &g_pre, &mut grad.match_hidden);
            let (g_hs, g_hd) = g_joined.split_at(hd.len());
            for (a, b) in g_h.iter_mut().zip(g_hs) {
                *a += b;
            }
            let g_dpre: Vec<f64> = g_hd.iter().zip(&hd).map(|(g, a)| g * (1.0 - a * a)).collect();
            self.trunk.backward(def, &g_dpre, &mut grad.trunk);
        }
        let g_pre: Vec<f64> = g_h.iter().zip(&p.h).map(|(g, a)| g * (1.0 - a * a)).collect();
        self.trunk.backward(x, &g_pre, &mut grad.trunk);
        if !loss.is_finite() {
            return Err(Error::NonFiniteActivation);
        }
        Ok(loss)
    }

    /// Labels with probability above the threshold, else the arg-max (lowest
    /// index on ties).
    pub fn decode(&self, probs: &[f64]) -> BTreeSet<String> {
        let mut out: BTreeSet<String> = probs
            .iter()
            .zip(&self.labels)
            .filter(|(&p, _)| p > self.threshold)
            .map(|(_, l)| l.clone())
            .collect();
        if out.is_empty() && !probs.is_empty() {
            let mut best = 0;
            for (i, &p) in probs.iter().enumerate() {
                if p > probs[best] {
                    best = i;
                }
            }
            out.insert(self.labels[best].clone());
        }
        out
    }

    /// Layout after the common header:
    ///
    /// ```text
    /// input_dim u32, hidden u32, match_hidden u32, n_classes u32
    /// lambda_aux f64, threshold f64
    /// n_classes × { len u16, label bytes (UTF-8) }
    /// trunk        (hidden × input_dim, hidden)
    /// class_head   (n_classes × hidden, n_classes)
    /// match_hidden (match_hidden × 2·hidden, match_hidden)
    /// match_out    (1 × match_hidden, 1)
    /// ```
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        write_header(&mut w, MAGIC, VERSION)?;
        write_dim(&mut w, self.trunk.in_dim)?;
        write_dim(&mut w, self.trunk.out_dim)?;
        write_dim(&mut w, self.match_hidden.out_dim)?;
        write_dim(&mut w, self.labels.len())?;
        write_f64(&mut w, self.lambda_aux)?;
        write_f64(&mut w, self.threshold)?;
        write_labels(&mut w, &self.labels)?;
        for l in [&self.trunk, &self.class_head, &self.match_hidden, &self.match_out] {
            write_dense(&mut w, l)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        read_header(&mut r, MAGIC, VERSION)?;
        let input = read_dim(&mut r)?;
        let hidden = read_dim(&mut r)?;
        let mh = read_dim(&mut r)?;
        let n = read_dim(&mut r)?;
        let lambda_aux = read_f64(&mut r)?;
        let threshold = read_f64(&mut r)?;
        let labels = read_labels(&mut r, n)?;
        let m = Self {
            labels,
            lambda_aux,
            threshold,
            trunk: read_dense(&mut r, input, hidden)?,
            class_head: read_dense(&mut r, hidden, n)?,
            match_hidden: read_dense(&mut r, 2 * hidden, mh)?,
            match_out: read_dense(&mut r, mh, 1)?,
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

/// Free-function form of [`CdpModel::loss`].
pub fn cdp_loss(
    m: &CdpModel,
    sample_feature: &[f64],
    definition_feature: &[f64],
    gold: &[String],
    matched_label: &str,
) -> Result<f64> {
    m.loss(sample_feature, definition_feature, gold, matched_label)
}

/// One positive drawn uniformly from `gold`, then one negative drawn
/// uniformly from `leaves ∖ gold`. The negative is omitted when every leaf
/// is gold.
pub fn sample_definition_pairs<S: AsRef<str>>(
    gold: &[S],
    leaves: &[S],
    seed: u64,
) -> Result<Vec<(String, bool)>> {
    draw_pairs(gold, leaves, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub(crate) fn draw_pairs<S: AsRef<str>, R: Rng>(
    gold: &[S],
    leaves: &[S],
    rng: &mut R,
) -> Result<Vec<(String, bool)>> {
    let gold: BTreeSet<&str> = gold.iter().map(AsRef::as_ref).collect();
    if gold.is_empty() {
        return Err(Error::GoldEmpty);
    }
    let positives: Vec<&str> = gold.iter().copied().collect();
    let negatives: Vec<&str> = leaves
        .iter()
        .map(AsRef::as_ref)
        .filter(|l| !gold.contains(l))
        .collect();
    let mut out = vec![(positives.choose(rng).expect("non-empty").to_string(), true)];
    if let Some(n) = negatives.choose(rng) {
        out.push((n.to_string(), false));
    }
    Ok(out)
}

/// Mini-batch Adam. Each row contributes its class loss plus `λ` times the
/// mean match loss over its sampled definition pairs. Rows without gold
/// labels only train the class head.
pub fn train_cdp<S: AsRef<str>>(
    rows: &[MultiLabelRow],
    leaves: &[S],
    definitions: &FeatureFile,
    cfg: &CdpConfig,
) -> Result<CdpModel> {
    if rows.is_empty() {
        return Err(Error::BadConfig("no training rows".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::BadConfig("batch_size must be positive".into()));
    }
    let missing: Vec<String> = leaves
        .iter()
        .map(|l| l.as_ref())
        .filter(|l| definitions.get(l).is_none())
        .map(str::to_owned)
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingDefinitionFeature(missing));
    }
    let input_dim = rows[0].feature.len();
    let mut model = CdpModel::new(input_dim, leaves, cfg)?;
    if definitions.dim() != input_dim {
        return Err(Error::DimMismatch {
            expected: input_dim,
            got: definitions.dim(),
        });
    }
    let defs: Vec<Vec<f64>> = model
        .labels
        .iter()
        .map(|l| definitions.get(l).expect("checked").iter().map(|&v| f64::from(v)).collect())
        .collect();
    let masks: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| {
            model.check_input(&r.feature)?;
            model.gold_mask(&r.labels)
        })
        .collect::<Result<_>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut adam = Adam::new(cfg.learning_rate, &model);
    let mut order: Vec<usize> = (0..rows.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grad = model.zeros_like();
            for &i in batch {
                let row = &rows[i];
                let pairs: Vec<(&[f64], f64)> = if row.labels.is_empty() {
                    Vec::new()
                } else {
                    draw_pairs(&row.labels, &model.labels, &mut rng)?
                        .into_iter()
                        .map(|(l, t)| {
                            let k = model.class_of(&l).expect("leaf");
                            (defs[k].as_slice(), if t { 1.0 } else { 0.0 })
                        })
                        .collect()
                };
                let pw = if pairs.is_empty() { 0.0 } else { 1.0 / pairs.len() as f64 };
                total += model
                    .accumulate(&row.feature, &masks[i], &pairs, pw, &mut grad)
                    .map_err(|_| Error::NonFiniteLoss { epoch })?;
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

/// Threshold decoding with the arg-max fallback; output is never empty.
pub fn predict_cdp(m: &CdpModel, features: &FeatureFile) -> Result<Vec<PredictionSet>> {
    if !features.is_empty() && features.dim() != m.input_dim() {
        return Err(Error::DimMismatch {
            expected: m.input_dim(),
            got: features.dim(),
        });
    }
    features
        .records()
        .map(|r| {
            Ok(PredictionSet {
                sample_id: r.sample_id.to_owned(),
                labels: m.decode(&m.class_probs(&r.to_f64())?),
            })
        })
        .collect()
}
