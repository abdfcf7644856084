//! Hyperbolic entailment cones in the Poincaré ball and Riemannian SGD
//! training of label-tree embeddings.
//!
//! A node `x` owns the cone of points whose geodesic from `x` deviates from
//! the ray `0 → x` by at most the half-aperture `ψ(x) = asin(k(1−‖x‖²)/‖x‖)`.
//! The energy `E(x, y) = max(0, Ξ(x, y) − ψ(x))` is zero exactly when `y`
//! lies in the cone of `x`. Cones are only defined outside the inner radius,
//! where the asin argument reaches 1.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hyperbolic::{self, rescale_factor, PoincareVec, MAX_NORM};
use crate::taxonomy::{label_of_node_id, nfc, LabelTree};
use crate::vecmath::{dist_sq, dot, norm, norm_sq};

pub const DEFAULT_CONE_K: f64 = 0.1;
pub const DEFAULT_DIM: usize = 100;

/// Gap kept between trained vectors and the inner radius, where the aperture
/// gradient is singular.
const INNER_MARGIN: f64 = 1e-3;
const OUTER_LIMIT: f64 = MAX_NORM - 1e-7;
/// Largest Euclidean displacement of a single RSGD update.
const MAX_STEP: f64 = 0.01;

/// Radius below which no cone exists: the positive root of `k r² + r − k = 0`.
pub fn inner_radius(k: f64) -> Result<f64> {
    if !(k > 0.0 && k < 1.0) {
        return Err(Error::BadK(k));
    }
    // 2k / (1 + √(1+4k²)) is the same root without cancellation.
    Ok(2.0 * k / (1.0 + (1.0 + 4.0 * k * k).sqrt()))
}

fn check_outside(x: &[f64], k: f64) -> Result<f64> {
    let inner = inner_radius(k)?;
    let n = norm(x);
    // One ulp of slack so the boundary value itself is accepted.
    if n < inner * (1.0 - f64::EPSILON) {
        return Err(Error::InsideInnerRadius { norm: n, inner });
    }
    Ok(n)
}

/// Half-aperture `asin(k(1−‖x‖²)/‖x‖)` in radians.
pub fn cone_aperture(x: &PoincareVec, k: f64) -> Result<f64> {
    check_outside(x.coords(), k)?;
    Ok(aperture(x.coords(), k))
}

fn aperture(x: &[f64], k: f64) -> f64 {
    let a = norm_sq(x);
    (k * (1.0 - a) / a.sqrt()).min(1.0).asin()
}

/// Cosine of the angle at `x` between the cone axis and the geodesic to `y`.
fn xi_cos(x: &[f64], y: &[f64]) -> Option<f64> {
    let a = norm_sq(x);
    let b = norm_sq(y);
    let p = dot(x, y);
    let q = dist_sq(x, y);
    let d = 1.0 + a * b - 2.0 * p;
    let num = p * (1.0 + a) - a * (1.0 + b);
    let den = a.sqrt() * q.sqrt() * d.max(0.0).sqrt();
    if den == 0.0 {
        None
    } else {
        Some((num / den).clamp(-1.0, 1.0))
    }
}

/// Angle Ξ(x, y); zero when `y == x`.
fn xi(x: &[f64], y: &[f64]) -> f64 {
    xi_cos(x, y).map_or(0.0, f64::acos)
}

/// `max(0, Ξ(parent, child) − ψ(parent))`.
pub fn cone_energy(parent: &PoincareVec, child: &PoincareVec, k: f64) -> Result<f64> {
    if parent.dim() != child.dim() {
        return Err(Error::DimMismatch {
            expected: parent.dim(),
            got: child.dim(),
        });
    }
    check_outside(parent.coords(), k)?;
    check_outside(child.coords(), k)?;
    Ok(energy(parent.coords(), child.coords(), k))
}

pub(crate) fn energy(x: &[f64], y: &[f64], k: f64) -> f64 {
    (xi(x, y) - aperture(x, k)).max(0.0)
}

/// Energy and its gradients with respect to parent and child. The
/// subgradient at the `max(0, ·)` kink is taken as zero.
pub(crate) fn energy_grad(x: &[f64], y: &[f64], k: f64) -> (f64, Vec<f64>, Vec<f64>) {
    let dim = x.len();
    let Some(c) = xi_cos(x, y) else {
        return (0.0, vec![0.0; dim], vec![0.0; dim]);
    };
    let a = norm_sq(x);
    let s = (k * (1.0 - a) / a.sqrt()).min(1.0);
    let e = c.acos() - s.asin();
    if e <= 0.0 {
        return (0.0, vec![0.0; dim], vec![0.0; dim]);
    }

    let b = norm_sq(y);
    let p = dot(x, y);
    let q = dist_sq(x, y);
    let d = 1.0 + a * b - 2.0 * p;
    let den = a.sqrt() * q.sqrt() * d.sqrt();

    // dΞ = −dc / √(1−c²); dc = dA/B − c·d(ln B)
    let dxi = -1.0 / (1.0 - c * c).sqrt().max(1e-9);
    let dpsi = -k * (1.0 + a) / (a.powf(1.5) * (1.0 - s * s).sqrt().max(1e-9));

    let mut gx = Vec::with_capacity(dim);
    let mut gy = Vec::with_capacity(dim);
    for i in 0..dim {
        let (xi_, yi) = (x[i], y[i]);
        let da_dx = (1.0 + a) * yi + 2.0 * (p - 1.0 - b) * xi_;
        let da_dy = (1.0 + a) * xi_ - 2.0 * a * yi;
        let dlnb_dx = xi_ / a + (xi_ - yi) / q + (b * xi_ - yi) / d;
        let dlnb_dy = -(xi_ - yi) / q + (a * yi - xi_) / d;
        let dc_dx = da_dx / den - c * dlnb_dx;
        let dc_dy = da_dy / den - c * dlnb_dy;
        gx.push(dxi * dc_dx - dpsi * xi_);
        gy.push(dxi * dc_dy);
    }
    (e, gx, gy)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConeTrainConfig {
    pub dim: usize,
    pub cone_k: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Leading epochs run at a tenth of the learning rate.
    pub burn_in_epochs: usize,
    pub negatives_per_positive: usize,
    /// Margin γ for negative pairs; also the energy below which an edge
    /// counts as satisfied.
    pub margin: f64,
    pub seed: u64,
}

impl Default for ConeTrainConfig {
    fn default() -> Self {
        Self {
            dim: DEFAULT_DIM,
            cone_k: DEFAULT_CONE_K,
            epochs: 300,
            learning_rate: 0.1,
            burn_in_epochs: 20,
            negatives_per_positive: 10,
            margin: 0.01,
            seed: 0,
        }
    }
}

impl ConeTrainConfig {
    fn validate(&self) -> Result<()> {
        inner_radius(self.cone_k)?;
        let bad = |m: &str| Err(Error::BadConfig(m.into()));
        if self.dim == 0 {
            return bad("dim must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return bad("margin must be positive");
        }
        Ok(())
    }
}

/// Trained vectors for every node of a label tree.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelEmbedding {
    dim: usize,
    cone_k: f64,
    ids: Vec<String>,
    vectors: Vec<PoincareVec>,
    by_label: BTreeMap<String, Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct EmbeddingFile {
    dim: usize,
    cone_k: f64,
    vectors: IndexMap<String, Vec<f64>>,
}

impl LabelEmbedding {
    pub fn new(cone_k: f64, entries: Vec<(String, PoincareVec)>) -> Result<Self> {
        inner_radius(cone_k)?;
        let dim = entries.first().map_or(0, |(_, v)| v.dim());
        let mut ids = Vec::with_capacity(entries.len());
        let mut vectors = Vec::with_capacity(entries.len());
        let mut by_label: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        let mut seen = HashSet::new();
        for (i, (id, v)) in entries.into_iter().enumerate() {
            if v.dim() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    got: v.dim(),
                });
            }
            if !seen.insert(id.clone()) {
                return Err(Error::DuplicateId(id));
            }
            by_label.entry(label_of_node_id(&id)).or_default().push(i);
            ids.push(id);
            vectors.push(v);
        }
        Ok(Self {
            dim,
            cone_k,
            ids,
            vectors,
            by_label,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cone_k(&self) -> f64 {
        self.cone_k
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &PoincareVec)> {
        self.ids.iter().map(String::as_str).zip(&self.vectors)
    }

    pub fn get(&self, node_id: &str) -> Option<&PoincareVec> {
        self.ids.iter().position(|i| i == node_id).map(|i| &self.vectors[i])
    }

    /// Vectors of every tree node carrying `label`.
    pub fn vectors_of(&self, label: &str) -> Result<Vec<&PoincareVec>> {
        let nodes = self
            .by_label
            .get(&nfc(label))
            .ok_or_else(|| Error::UnknownLabel(label.to_owned()))?;
        Ok(nodes.iter().map(|&i| &self.vectors[i]).collect())
    }

    /// Distance from `point` to the nearest embedded copy of `label`.
    pub fn label_distance(&self, point: &PoincareVec, label: &str) -> Result<f64> {
        if point.dim() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                got: point.dim(),
            });
        }
        Ok(self.nearest(point.coords(), label)?.1)
    }

    /// Index and distance of the nearest copy of `label`. Ties go to the
    /// first node in tree order.
    pub(crate) fn nearest(&self, point: &[f64], label: &str) -> Result<(usize, f64)> {
        let nodes = self
            .by_label
            .get(&nfc(label))
            .ok_or_else(|| Error::UnknownLabel(label.to_owned()))?;
        let mut best = (usize::MAX, f64::INFINITY);
        for &i in nodes {
            let d = hyperbolic::distance(point, self.vectors[i].coords());
            if d < best.1 {
                best = (i, d);
            }
        }
        Ok(best)
    }

    pub(crate) fn vector(&self, i: usize) -> &PoincareVec {
        &self.vectors[i]
    }

    /// Check that node ids are exactly those of `tree`.
    pub fn matches_tree(&self, tree: &LabelTree) -> bool {
        let mine: HashSet<&str> = self.ids.iter().map(String::as_str).collect();
        mine.len() == tree.len() && tree.nodes().iter().all(|n| mine.contains(n.id.as_str()))
    }

    /// Energies of every tree edge, in `tree.edges()` order.
    pub fn edge_energies(&self, tree: &LabelTree) -> Result<Vec<f64>> {
        let lookup: HashMap<&str, usize> =
            self.ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        tree.edges()
            .into_iter()
            .map(|(p, c)| {
                let pi = lookup
                    .get(tree.nodes()[p].id.as_str())
                    .ok_or_else(|| Error::UnknownLabel(tree.nodes()[p].id.clone()))?;
                let ci = lookup
                    .get(tree.nodes()[c].id.as_str())
                    .ok_or_else(|| Error::UnknownLabel(tree.nodes()[c].id.clone()))?;
                Ok(energy(
                    self.vectors[*pi].coords(),
                    self.vectors[*ci].coords(),
                    self.cone_k,
                ))
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let file = EmbeddingFile {
            dim: self.dim,
            cone_k: self.cone_k,
            vectors: self
                .iter()
                .map(|(id, v)| (id.to_owned(), v.coords().to_vec()))
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: EmbeddingFile = serde_json::from_str(text)?;
        let mut entries = Vec::with_capacity(file.vectors.len());
        for (id, v) in file.vectors {
            if v.len() != file.dim {
                return Err(Error::DimMismatch {
                    expected: file.dim,
                    got: v.len(),
                });
            }
            entries.push((id, PoincareVec::new(v)?));
        }
        let mut emb = Self::new(file.cone_k, entries)?;
        emb.dim = file.dim;
        Ok(emb)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut s = self.to_json()?;
        s.push('\n');
        std::fs::write(path, s)?;
        Ok(())
    }
}

/// Per-epoch mean loss recorded during training.
#[derive(Debug, Clone, Default, Serialize)]
pub struct ConeTrainReport {
    pub epoch_losses: Vec<f64>,
}

pub fn train_label_embeddings(tree: &LabelTree, cfg: &ConeTrainConfig) -> Result<LabelEmbedding> {
    train_label_embeddings_with_report(tree, cfg).map(|(e, _)| e)
}

/// Labels related to each label by ancestry (in either direction) or
/// identity, derived from the tree so duplicated nodes share relations.
fn related_labels(tree: &LabelTree) -> HashMap<&str, HashSet<&str>> {
    let mut rel: HashMap<&str, HashSet<&str>> = HashMap::new();
    for (i, n) in tree.nodes().iter().enumerate() {
        rel.entry(&n.label).or_default().insert(&n.label);
        for a in tree.ancestors(i) {
            let al = tree.nodes()[a].label.as_str();
            rel.entry(&n.label).or_default().insert(al);
            rel.entry(al).or_default().insert(&n.label);
        }
    }
    rel
}

fn project_to_annulus(x: &mut [f64], lower: f64) {
    let n = norm(x);
    let target = if n < lower {
        lower
    } else if n > OUTER_LIMIT {
        OUTER_LIMIT
    } else {
        return;
    };
    if n == 0.0 {
        x[0] = target;
        return;
    }
    let s = target / n;
    for v in x.iter_mut() {
        *v *= s;
    }
}

pub fn train_label_embeddings_with_report(
    tree: &LabelTree,
    cfg: &ConeTrainConfig,
) -> Result<(LabelEmbedding, ConeTrainReport)> {
    cfg.validate()?;
    if tree.is_empty() {
        return Err(Error::EmptyTree);
    }
    let k = cfg.cone_k;
    let inner = inner_radius(k)?;
    let lower = inner + INNER_MARGIN;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let n = tree.len();
    let init_lo = inner + 0.05;
    let init_hi = 0.4f64.max(init_lo);
    let mut vecs: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let mut dir: Vec<f64> = (0..cfg.dim).map(|_| rng.sample(StandardNormal)).collect();
            let dn = norm(&dir);
            let r = rng.random_range(init_lo..=init_hi);
            for v in dir.iter_mut() {
                *v *= r / dn;
            }
            dir
        })
        .collect();

    let edges = tree.edges();
    let rel = related_labels(tree);
    // Negative candidates per parent node: nodes whose label is unrelated.
    let candidates: Vec<Vec<usize>> = (0..n)
        .map(|u| {
            let related = &rel[tree.nodes()[u].label.as_str()];
            (0..n)
                .filter(|&v| !related.contains(tree.nodes()[v].label.as_str()))
                .collect()
        })
        .collect();

    let mut order: Vec<usize> = (0..edges.len()).collect();
    let mut report = ConeTrainReport::default();
    for epoch in 0..cfg.epochs {
        let lr = if epoch < cfg.burn_in_epochs {
            cfg.learning_rate / 10.0
        } else {
            cfg.learning_rate
        };
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut terms = 0usize;
        for &ei in &order {
            let (u, v) = edges[ei];
            let (e, gu, gv) = energy_grad(&vecs[u], &vecs[v], k);
            total += e;
            terms += 1;
            let mut grad_u = gu;
            let mut updates: Vec<(usize, Vec<f64>)> = vec![(v, gv)];

            let cand = &candidates[u];
            if !cand.is_empty() {
                for _ in 0..cfg.negatives_per_positive {
                    let w = cand[rng.random_range(0..cand.len())];
                    let (en, gnu, gnw) = energy_grad(&vecs[u], &vecs[w], k);
                    let hinge = (cfg.margin - en).max(0.0);
                    total += hinge;
                    terms += 1;
                    if hinge > 0.0 {
                        for (a, b) in grad_u.iter_mut().zip(&gnu) {
                            *a -= b;
                        }
                        updates.push((w, gnw.into_iter().map(|g| -g).collect()));
                    }
                }
            }
            updates.push((u, grad_u));

            for (node, g) in updates {
                let mut f = lr * rescale_factor(&vecs[node]);
                let step = f * norm(&g);
                if step > MAX_STEP {
                    f *= MAX_STEP / step;
                }
                let x = &mut vecs[node];
                for (xi, gi) in x.iter_mut().zip(&g) {
                    *xi -= f * gi;
                }
                project_to_annulus(x, lower);
            }
        }
        let mean = total / terms.max(1) as f64;
        if !mean.is_finite() || vecs.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteLoss { epoch });
        }
        report.epoch_losses.push(mean);
    }

    let entries = tree
        .nodes()
        .iter()
        .zip(vecs)
        .map(|(node, v)| Ok((node.id.clone(), PoincareVec::new(v)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut emb = LabelEmbedding::new(k, entries)?;
    emb.dim = cfg.dim;
    Ok((emb, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::{Taxonomy, TaxonomyDoc};
    use std::f64::consts::FRAC_PI_2;

    fn pv(c: &[f64]) -> PoincareVec {
        PoincareVec::new(c.to_vec()).unwrap()
    }

    #[test]
    fn inner_radius_values() {
        // Quadratic formula evaluated at high precision: 0.09901951359...
        let r = inner_radius(0.1).unwrap();
        assert!((r - 0.099_019_513_592_784_8).abs() < 1e-15);
        assert!((0.1 * (1.0 - r * r) / r - 1.0).abs() < 1e-14);
        assert!(inner_radius(1e-9).unwrap() < 1e-8);
        assert!(matches!(inner_radius(0.0), Err(Error::BadK(_))));
        assert!(matches!(inner_radius(1.0), Err(Error::BadK(_))));
    }

    #[test]
    fn aperture_values() {
        let a = cone_aperture(&pv(&[0.5, 0.0]), 0.1).unwrap();
        assert!((a - 0.15f64.asin()).abs() < 1e-15);
        assert!((a - 0.150_568).abs() < 1e-6);
        let r = inner_radius(0.1).unwrap();
        let at = cone_aperture(&pv(&[r, 0.0]), 0.1).unwrap();
        assert!((at - FRAC_PI_2).abs() < 1e-6);
        assert!(matches!(
            cone_aperture(&pv(&[0.05, 0.0]), 0.1),
            Err(Error::InsideInnerRadius { .. })
        ));
    }

    #[test]
    fn aperture_decreases_with_norm() {
        let r = inner_radius(0.1).unwrap();
        let mut prev = f64::INFINITY;
        for i in 0..=1000 {
            let t = r + (0.999 - r) * i as f64 / 1000.0;
            let a = cone_aperture(&pv(&[t, 0.0]), 0.1).unwrap();
            assert!(a < prev);
            prev = a;
        }
    }

    #[test]
    fn energy_on_axis_and_opposite() {
        let p = pv(&[0.3, 0.2]);
        let c = pv(&[0.6, 0.4]);
        assert_eq!(cone_energy(&p, &c, 0.1).unwrap(), 0.0);
        let opp = pv(&[-0.3, -0.2]);
        assert!(cone_energy(&p, &opp, 0.1).unwrap() > 1.0);
        assert!(matches!(
            cone_energy(&p, &pv(&[0.0, 0.01]), 0.1),
            Err(Error::InsideInnerRadius { .. })
        ));
    }

    #[test]
    fn energy_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut checked = 0;
        while checked < 30 {
            let x: Vec<f64> = (0..5).map(|_| rng.random_range(-0.4..0.4)).collect();
            let y: Vec<f64> = (0..5).map(|_| rng.random_range(-0.4..0.4)).collect();
            if norm(&x) < 0.15 || norm(&y) < 0.15 || energy(&x, &y, 0.1) < 1e-3 {
                continue;
            }
            let (_, gx, gy) = energy_grad(&x, &y, 0.1);
            let h = 1e-6;
            for i in 0..5 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += h;
                xm[i] -= h;
                let fd = (energy(&xp, &y, 0.1) - energy(&xm, &y, 0.1)) / (2.0 * h);
                assert!((fd - gx[i]).abs() <= 1e-5 * fd.abs().max(1.0), "x{i}: {fd} vs {}", gx[i]);
                let mut yp = y.clone();
                let mut ym = y.clone();
                yp[i] += h;
                ym[i] -= h;
                let fd = (energy(&x, &yp, 0.1) - energy(&x, &ym, 0.1)) / (2.0 * h);
                assert!((fd - gy[i]).abs() <= 1e-5 * fd.abs().max(1.0), "y{i}: {fd} vs {}", gy[i]);
            }
            checked += 1;
        }
    }

    fn tree_of(edges: &[(&str, &str)], root: &str) -> LabelTree {
        let mut nodes = vec![root.to_string()];
        for (p, c) in edges {
            for s in [p, c] {
                if !nodes.contains(&s.to_string()) {
                    nodes.push(s.to_string());
                }
            }
        }
        Taxonomy::from_doc(TaxonomyDoc {
            root: root.into(),
            nodes,
            edges: edges.iter().map(|(p, c)| (p.to_string(), c.to_string())).collect(),
            definitions: Default::default(),
            leaf_index: Default::default(),
        })
        .unwrap()
        .dag_to_tree()
    }

    #[test]
    fn single_edge_converges() {
        let tree = tree_of(&[("R", "A")], "R");
        let cfg = ConeTrainConfig {
            epochs: 200,
            dim: 10,
            ..Default::default()
        };
        let emb = train_label_embeddings(&tree, &cfg).unwrap();
        let e = emb.edge_energies(&tree).unwrap();
        assert!(e[0] < cfg.margin, "{e:?}");
    }

    #[test]
    fn same_seed_is_bitwise_identical() {
        let tree = tree_of(&[("R", "A"), ("R", "B"), ("A", "C"), ("B", "C")], "R");
        let cfg = ConeTrainConfig {
            epochs: 30,
            dim: 8,
            seed: 3,
            ..Default::default()
        };
        let a = train_label_embeddings(&tree, &cfg).unwrap();
        let b = train_label_embeddings(&tree, &cfg).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        let c = train_label_embeddings(&tree, &ConeTrainConfig { seed: 4, ..cfg }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn vectors_stay_in_annulus() {
        let tree = tree_of(&[("R", "A"), ("R", "B"), ("A", "C"), ("B", "D")], "R");
        let cfg = ConeTrainConfig {
            epochs: 50,
            dim: 4,
            learning_rate: 5.0,
            ..Default::default()
        };
        let emb = train_label_embeddings(&tree, &cfg).unwrap();
        let inner = inner_radius(cfg.cone_k).unwrap();
        for (_, v) in emb.iter() {
            assert!(v.norm() > inner && v.norm() < MAX_NORM, "{}", v.norm());
        }
    }

    #[test]
    fn negatives_exclude_related_labels() {
        let tree = tree_of(&[("R", "A"), ("R", "B"), ("A", "C"), ("B", "C")], "R");
        let rel = related_labels(&tree);
        assert!(rel["A"].contains("C") && rel["C"].contains("B") && rel["R"].contains("C"));
        assert!(!rel["A"].contains("B"));
    }

    #[test]
    fn label_distance_takes_nearest_copy() {
        let emb = LabelEmbedding::new(
            0.1,
            vec![
                ("R".into(), pv(&[0.2, 0.0])),
                ("R/A".into(), pv(&[0.5, 0.1])),
                ("R/A/C".into(), pv(&[0.7, 0.2])),
                ("R/B".into(), pv(&[0.0, 0.5])),
                ("R/B/C".into(), pv(&[-0.1, 0.7])),
            ],
        )
        .unwrap();
        let p = pv(&[0.7, 0.2]);
        assert_eq!(emb.label_distance(&p, "C").unwrap(), 0.0);
        let q = pv(&[0.0, 0.6]);
        let d1 = hyperbolic::distance(q.coords(), &[0.7, 0.2]);
        let d2 = hyperbolic::distance(q.coords(), &[-0.1, 0.7]);
        assert_eq!(emb.label_distance(&q, "C").unwrap(), d1.min(d2));
        assert!(matches!(emb.label_distance(&q, "Z"), Err(Error::UnknownLabel(_))));
    }

    #[test]
    fn json_round_trip() {
        let tree = tree_of(&[("R", "a/b")], "R");
        let cfg = ConeTrainConfig {
            epochs: 2,
            dim: 3,
            ..Default::default()
        };
        let emb = train_label_embeddings(&tree, &cfg).unwrap();
        let back = LabelEmbedding::from_json(&emb.to_json().unwrap()).unwrap();
        assert_eq!(back, emb);
        assert!(back.matches_tree(&tree));
        assert_eq!(back.vectors_of("a/b").unwrap().len(), 1);
    }
}
