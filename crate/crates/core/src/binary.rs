//! Binary persuasion detector over concatenated text ⊕ image features.
//!
//! `x → linear1 → act → linear2 → sigmoid`, with `act` a sigmoid unless
//! configured otherwise, trained on the class-imbalance-weighted BCE
//! `−(1/N) Σ [w·y·ln x + (1−w)(1−y)·ln(1−x)]` with `w = (K − f)/f`.
//!
//! With `w > 1` (positives in the minority) the negative-class coefficient
//! `1 − w` turns negative and the loss is no longer bounded below by zero.
//! The formula is kept as written.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{check_same_ids, FeatureFile};
use crate::modelio::*;
use crate::nn::{sigmoid, Activation, Adam, Dense, Parameters};

pub const MAGIC: &[u8; 4] = b"BINP";
pub const VERSION: u16 = 1;
pub const PROB_CLAMP: f64 = 1e-12;

/// `(K − f)/f` for `K` samples of which `f` are positive.
pub fn imbalance_weight(total: usize, positives: usize) -> Result<f64> {
    if positives == 0 || positives >= total {
        return Err(Error::DegenerateClassBalance { total, positives });
    }
    Ok((total - positives) as f64 / positives as f64)
}

/// Mean weighted BCE. Probabilities are clamped to
/// `[PROB_CLAMP, 1 − PROB_CLAMP]` before taking logs.
pub fn weighted_bce(probs: &[f64], targets: &[bool], w: f64) -> Result<f64> {
    if probs.len() != targets.len() {
        return Err(Error::LengthMismatch {
            left: probs.len(),
            right: targets.len(),
        });
    }
    if probs.is_empty() {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for (&x, &y) in probs.iter().zip(targets) {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::ProbOutOfRange(x));
        }
        let x = x.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        sum += if y { w * x.ln() } else { (1.0 - w) * (1.0 - x).ln() };
    }
    Ok(-sum / probs.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BinaryConfig {
    pub hidden: usize,
    pub activation: Activation,
    pub threshold: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for BinaryConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            activation: Activation::Sigmoid,
            threshold: 0.5,
            learning_rate: 5e-3,
            epochs: 100,
            batch_size: 32,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinaryModel {
    pub activation: Activation,
    pub weight: f64,
    pub threshold: f64,
    linear1: Dense,
    linear2: Dense,
}

impl Parameters for BinaryModel {
    fn blocks(&self) -> Vec<&[f64]> {
        let mut v = self.linear1.blocks();
        v.extend(self.linear2.blocks());
        v
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let Self { linear1, linear2, .. } = self;
        let mut v = linear1.blocks_mut();
        v.extend(linear2.blocks_mut());
        v
    }
}

/// One output row of [`predict_binary`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryPrediction {
    pub id: String,
    pub label: u8,
    pub prob: f64,
}

impl BinaryModel {
    pub fn new(input_dim: usize, weight: f64, cfg: &BinaryConfig) -> Result<Self> {
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(Error::BadConfig(format!("class weight must be > 0, got {weight}")));
        }
        if cfg.hidden == 0 {
            return Err(Error::BadConfig("hidden must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Ok(Self {
            activation: cfg.activation,
            weight,
            threshold: cfg.threshold,
            linear1: Dense::init(input_dim, cfg.hidden, &mut rng),
            linear2: Dense::init(cfg.hidden, 1, &mut rng),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.linear1.in_dim
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

    fn hidden(&self, x: &[f64]) -> Vec<f64> {
        self.linear1
            .forward(x)
            .into_iter()
            .map(|v| self.activation.apply(v))
            .collect()
    }

    pub fn prob(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        let p = sigmoid(self.linear2.forward(&self.hidden(x))[0]);
        if !p.is_finite() {
            return Err(Error::NonFiniteActivation);
        }
        Ok(p)
    }

    /// Weighted BCE of the model on a batch, using the model's class weight.
    pub fn loss(&self, xs: &[Vec<f64>], ys: &[bool]) -> Result<f64> {
        let probs = xs.iter().map(|x| self.prob(x)).collect::<Result<Vec<_>>>()?;
        weighted_bce(&probs, ys, self.weight)
    }

    /// Loss and flat gradient in `Parameters` order.
    pub fn loss_and_gradient(&self, xs: &[Vec<f64>], ys: &[bool]) -> Result<(f64, Vec<f64>)> {
        if xs.len() != ys.len() {
            return Err(Error::LengthMismatch {
                left: xs.len(),
                right: ys.len(),
            });
        }
        for x in xs {
            self.check_input(x)?;
        }
        let mut grad = self.zeros_like();
        let idx: Vec<usize> = (0..xs.len()).collect();
        let l = self.accumulate(xs, ys, &idx, &mut grad);
        Ok((l, grad.flat_parameters()))
    }

    fn zeros_like(&self) -> Self {
        Self {
            activation: self.activation,
            weight: self.weight,
            threshold: self.threshold,
            linear1: self.linear1.zeros_like(),
            linear2: self.linear2.zeros_like(),
        }
    }

    /// Batch-mean loss over `idx`; gradients are averaged too.
    fn accumulate(&self, xs: &[Vec<f64>], ys: &[bool], idx: &[usize], grad: &mut Self) -> f64 {
        let n = idx.len() as f64;
        let w = self.weight;
        let mut sum = 0.0;
        for &i in idx {
            let x = &xs[i];
            let h = self.hidden(x);
            let p = sigmoid(self.linear2.forward(&h)[0]);
            let pc = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            let (l, dz) = if ys[i] {
                (-w * pc.ln(), -w * (1.0 - p))
            } else {
                (-(1.0 - w) * (1.0 - pc).ln(), (1.0 - w) * p)
            };
            sum += l;
            // Inside the clamp region the loss is flat.
            let dz = if p == pc { dz / n } else { 0.0 };
            let g_h = self.linear2.backward(&h, &[dz], &mut grad.linear2);
            let g_pre: Vec<f64> = g_h
                .iter()
                .zip(&h)
                .map(|(g, &a)| g * self.activation.derivative(a))
                .collect();
            self.linear1.backward(x, &g_pre, &mut grad.linear1);
        }
        sum / n
    }

    /// Layout after the common header:
    ///
    /// ```text
    /// input_dim u32, hidden u32, activation u8 (0 tanh, 1 sigmoid, 2 relu)
    /// weight f64, threshold f64
    /// linear1 (hidden × input_dim, hidden)
    /// linear2 (1 × hidden, 1)
    /// ```
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        write_header(&mut w, MAGIC, VERSION)?;
        write_dim(&mut w, self.linear1.in_dim)?;
        write_dim(&mut w, self.linear1.out_dim)?;
        write_u8(&mut w, self.activation.code())?;
        write_f64(&mut w, self.weight)?;
        write_f64(&mut w, self.threshold)?;
        write_dense(&mut w, &self.linear1)?;
        write_dense(&mut w, &self.linear2)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        read_header(&mut r, MAGIC, VERSION)?;
        let input = read_dim(&mut r)?;
        let hidden = read_dim(&mut r)?;
        let code = read_u8(&mut r)?;
        let activation = Activation::from_code(code)
            .ok_or_else(|| Error::MalformedHeader(format!("unknown activation code {code}")))?;
        let weight = read_f64(&mut r)?;
        let threshold = read_f64(&mut r)?;
        let m = Self {
            activation,
            weight,
            threshold,
            linear1: read_dense(&mut r, input, hidden)?,
            linear2: read_dense(&mut r, hidden, 1)?,
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

/// Train on in-memory rows. The class weight comes from the label counts.
pub fn fit_binary(xs: &[Vec<f64>], ys: &[bool], cfg: &BinaryConfig) -> Result<BinaryModel> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch {
            left: xs.len(),
            right: ys.len(),
        });
    }
    if cfg.batch_size == 0 {
        return Err(Error::BadConfig("batch_size must be positive".into()));
    }
    let w = imbalance_weight(ys.len(), ys.iter().filter(|&&y| y).count())?;
    let mut model = BinaryModel::new(xs[0].len(), w, cfg)?;
    for x in xs {
        model.check_input(x)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut adam = Adam::new(cfg.learning_rate, &model);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grad = model.zeros_like();
            total += model.accumulate(xs, ys, batch, &mut grad);
            adam.step(&mut model, &grad);
        }
        if !total.is_finite() || !model.all_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
    }
    Ok(model)
}

/// Rows of `text ⊕ image` in `labels` order. All three id sets must agree.
pub fn join_binary_inputs(
    text: &FeatureFile,
    image: &FeatureFile,
    labels: &[(String, bool)],
) -> Result<(Vec<Vec<f64>>, Vec<bool>)> {
    check_same_ids(text.ids().iter(), image.ids().iter())?;
    check_same_ids(text.ids().iter(), labels.iter().map(|(id, _)| id))?;
    if labels.len() != text.len() {
        let mut seen = std::collections::HashSet::new();
        let dups: Vec<&String> = labels.iter().map(|(id, _)| id).filter(|id| !seen.insert(*id)).collect();
        return Err(Error::DuplicateId(dups[0].clone()));
    }
    let xs = labels
        .iter()
        .map(|(id, _)| concat_row(text, image, id))
        .collect();
    Ok((xs, labels.iter().map(|&(_, y)| y).collect()))
}

fn concat_row(text: &FeatureFile, image: &FeatureFile, id: &str) -> Vec<f64> {
    text.get(id)
        .expect("ids checked")
        .iter()
        .chain(image.get(id).expect("ids checked"))
        .map(|&v| f64::from(v))
        .collect()
}

pub fn train_binary(
    text: &FeatureFile,
    image: &FeatureFile,
    labels: &[(String, bool)],
    cfg: &BinaryConfig,
) -> Result<BinaryModel> {
    let (xs, ys) = join_binary_inputs(text, image, labels)?;
    fit_binary(&xs, &ys, cfg)
}

/// One prediction per id in `text` order; `label = 1` iff `prob ≥ threshold`.
pub fn predict_binary(m: &BinaryModel, text: &FeatureFile, image: &FeatureFile) -> Result<Vec<BinaryPrediction>> {
    check_same_ids(text.ids().iter(), image.ids().iter())?;
    text.ids()
        .iter()
        .map(|id| {
            let prob = m.prob(&concat_row(text, image, id))?;
            Ok(BinaryPrediction {
                id: id.clone(),
                label: u8::from(prob >= m.threshold),
                prob,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn weight_examples() {
        assert_eq!(imbalance_weight(1200, 800).unwrap(), 0.5);
        assert_eq!(imbalance_weight(10, 5).unwrap(), 1.0);
        assert_eq!(imbalance_weight(10, 2).unwrap(), 4.0);
        assert!(matches!(imbalance_weight(10, 0), Err(Error::DegenerateClassBalance { .. })));
        assert!(matches!(imbalance_weight(10, 10), Err(Error::DegenerateClassBalance { .. })));
    }

    #[test]
    fn bce_examples() {
        let l = weighted_bce(&[0.5], &[true], 0.5).unwrap();
        assert!((l - 0.5 * 2f64.ln()).abs() < 1e-15);
        assert!(weighted_bce(&[1.0, 0.0], &[true, false], 0.5).unwrap() < 1e-11);
        let probs = [0.2, 0.7, 0.9];
        let ys = [false, true, false];
        let plain: f64 = probs
            .iter()
            .zip(ys)
            .map(|(&x, y)| if y { -f64::ln(x) } else { -f64::ln(1.0 - x) })
            .sum::<f64>()
            / 3.0;
        assert!((weighted_bce(&probs, &ys, 0.5).unwrap() - 0.5 * plain).abs() < 1e-15);
        assert!(matches!(weighted_bce(&[0.5], &[], 0.5), Err(Error::LengthMismatch { .. })));
        assert!(matches!(weighted_bce(&[1.5], &[true], 0.5), Err(Error::ProbOutOfRange(_))));
        assert!(matches!(weighted_bce(&[f64::NAN], &[true], 0.5), Err(Error::ProbOutOfRange(_))));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for act in [Activation::Sigmoid, Activation::Tanh] {
            let cfg = BinaryConfig {
                hidden: 4,
                activation: act,
                seed: 2,
                ..Default::default()
            };
            let m = BinaryModel::new(3, 0.5, &cfg).unwrap();
            let xs = vec![vec![0.1, -0.4, 0.8], vec![1.2, 0.3, -0.7], vec![-0.2, 0.2, 0.5]];
            let ys = [true, false, true];
            let (l, grad) = m.loss_and_gradient(&xs, &ys).unwrap();
            assert!((l - m.loss(&xs, &ys).unwrap()).abs() < 1e-14);
            let base = m.flat_parameters();
            for i in 0..base.len() {
                let eval = |d: f64| {
                    let mut p = base.clone();
                    p[i] += d;
                    let mut mm = m.clone();
                    mm.set_flat_parameters(&p);
                    mm.loss(&xs, &ys).unwrap()
                };
                let fd = (eval(1e-6) - eval(-1e-6)) / 2e-6;
                assert!((fd - grad[i]).abs() <= 1e-6 * fd.abs().max(1e-3), "{act:?} {i}: {fd} vs {}", grad[i]);
            }
        }
    }

    #[test]
    fn predict_tie_and_ids() {
        let m = BinaryModel {
            activation: Activation::Sigmoid,
            weight: 0.5,
            threshold: 0.5,
            linear1: Dense::zeros(2, 2),
            linear2: Dense::zeros(2, 1),
        };
        let t = FeatureFile::from_rows(1, [("a", vec![1.0f32])]).unwrap();
        let i = FeatureFile::from_rows(1, [("a", vec![2.0f32])]).unwrap();
        let p = predict_binary(&m, &t, &i).unwrap();
        assert_eq!(p, vec![BinaryPrediction { id: "a".into(), label: 1, prob: 0.5 }]);
        let i2 = FeatureFile::from_rows(1, [("b", vec![2.0f32])]).unwrap();
        match predict_binary(&m, &t, &i2) {
            Err(Error::IdMismatch(ids)) => assert_eq!(ids, vec!["a", "b"]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn model_round_trip() {
        let cfg = BinaryConfig {
            activation: Activation::Relu,
            hidden: 3,
            ..Default::default()
        };
        let m = BinaryModel::new(4, 0.5, &cfg).unwrap();
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"BINP");
        assert_eq!(BinaryModel::read_from(&buf[..]).unwrap(), m);
    }

    proptest! {
        #[test]
        fn bce_nonnegative_for_majority_positive_weights(
            rows in prop::collection::vec((0.0f64..=1.0, any::<bool>()), 1..30),
            w in 1e-6f64..=1.0,
        ) {
            let (p, y): (Vec<f64>, Vec<bool>) = rows.into_iter().unzip();
            prop_assert!(weighted_bce(&p, &y, w).unwrap() >= 0.0);
        }

        #[test]
        fn weight_identity(k in 2usize..100_000, frac in 0.0f64..1.0) {
            let f = 1 + ((k - 2) as f64 * frac) as usize;
            let w = imbalance_weight(k, f).unwrap();
            let lhs = w * f as f64;
            let rhs = (k - f) as f64;
            prop_assert!((lhs - rhs).abs() <= rhs * f64::EPSILON);
        }
    }
}
