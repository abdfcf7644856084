//! Seeded fixture generators: random taxonomies, separable Gaussian blobs
//! per leaf, and a two-class detector fixture.

use std::collections::BTreeMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::data::Sample;
use crate::error::Result;
use crate::features::FeatureFile;
use crate::taxonomy::{Taxonomy, TaxonomyDoc};

/// A rooted DAG on `n` nodes named `n0..`, rooted at `n0`. Every other node
/// draws one to three parents among earlier nodes.
pub fn random_taxonomy<R: Rng>(n: usize, rng: &mut R) -> Taxonomy {
    assert!(n >= 1);
    let nodes: Vec<String> = (0..n).map(|i| format!("n{i}")).collect();
    let mut edges = Vec::new();
    for i in 1..n {
        let k = rng.random_range(1..=3usize).min(i);
        let mut parents: Vec<usize> = (0..i).collect();
        parents.shuffle(rng);
        let mut chosen = parents[..k].to_vec();
        chosen.sort_unstable();
        for p in chosen {
            edges.push((nodes[p].clone(), nodes[i].clone()));
        }
    }
    Taxonomy::from_doc(TaxonomyDoc {
        root: nodes[0].clone(),
        nodes,
        edges,
        definitions: BTreeMap::new(),
        leaf_index: BTreeMap::new(),
    })
    .expect("generated DAG is valid")
}

/// One Gaussian blob per leaf.
#[derive(Debug, Clone)]
pub struct BlobFixture {
    pub samples: Vec<Sample>,
    pub features: FeatureFile,
    /// Keyed by leaf label; each row is the leaf's blob centre.
    pub definitions: FeatureFile,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlobConfig {
    pub dim: usize,
    pub per_leaf: usize,
    /// Distance of every centre from the origin.
    pub radius: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for BlobConfig {
    fn default() -> Self {
        Self {
            dim: 16,
            per_leaf: 50,
            radius: 4.0,
            noise: 0.5,
            seed: 0,
        }
    }
}

fn centres<R: Rng>(n: usize, dim: usize, radius: f64, rng: &mut R) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x * radius / norm).collect()
        })
        .collect()
}

/// `per_leaf` single-label samples around each leaf centre, interleaved
/// across leaves. Sample ids are `s00000`, `s00001`, ….
pub fn blob_fixture(taxonomy: &Taxonomy, cfg: &BlobConfig) -> Result<BlobFixture> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let leaves = taxonomy.leaf_set();
    let cs = centres(leaves.len(), cfg.dim, cfg.radius, &mut rng);
    let noise = Normal::new(0.0, cfg.noise).expect("noise ≥ 0");
    let mut samples = Vec::with_capacity(leaves.len() * cfg.per_leaf);
    let mut features = FeatureFile::new(cfg.dim);
    for j in 0..cfg.per_leaf {
        for (k, leaf) in leaves.iter().enumerate() {
            let id = format!("s{:05}", j * leaves.len() + k);
            let row: Vec<f32> = cs[k].iter().map(|c| (c + noise.sample(&mut rng)) as f32).collect();
            features.push(id.clone(), &row)?;
            samples.push(Sample {
                id,
                text: String::new(),
                labels: vec![leaf.to_string()],
                image_ref: None,
            });
        }
    }
    let definitions = FeatureFile::from_rows(
        cfg.dim,
        leaves
            .iter()
            .zip(&cs)
            .map(|(l, c)| (l.to_string(), c.iter().map(|&x| x as f32).collect())),
    )?;
    Ok(BlobFixture {
        samples,
        features,
        definitions,
    })
}

/// Samples with one to three distinct leaf labels each (probabilities
/// 0.3 / 0.5 / 0.2, mean 1.9). Features are the mean of the label centres
/// plus noise.
pub fn multilabel_fixture(taxonomy: &Taxonomy, n: usize, cfg: &BlobConfig) -> Result<BlobFixture> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let leaves = taxonomy.leaf_set();
    let cs = centres(leaves.len(), cfg.dim, cfg.radius, &mut rng);
    let noise = Normal::new(0.0, cfg.noise).expect("noise ≥ 0");
    let mut samples = Vec::with_capacity(n);
    let mut features = FeatureFile::new(cfg.dim);
    let idx: Vec<usize> = (0..leaves.len()).collect();
    for i in 0..n {
        let u: f64 = rng.random();
        let k = if u < 0.3 { 1 } else if u < 0.8 { 2 } else { 3 };
        let mut chosen: Vec<usize> = idx.choose_multiple(&mut rng, k.min(leaves.len())).copied().collect();
        chosen.sort_unstable();
        let row: Vec<f32> = (0..cfg.dim)
            .map(|d| {
                let m = chosen.iter().map(|&c| cs[c][d]).sum::<f64>() / chosen.len() as f64;
                (m + noise.sample(&mut rng)) as f32
            })
            .collect();
        let id = format!("m{i:05}");
        features.push(id.clone(), &row)?;
        samples.push(Sample {
            id,
            text: String::new(),
            labels: chosen.iter().map(|&c| leaves[c].to_string()).collect(),
            image_ref: None,
        });
    }
    let definitions = FeatureFile::from_rows(
        cfg.dim,
        leaves
            .iter()
            .zip(&cs)
            .map(|(l, c)| (l.to_string(), c.iter().map(|&x| x as f32).collect())),
    )?;
    Ok(BlobFixture {
        samples,
        features,
        definitions,
    })
}

#[derive(Debug, Clone)]
pub struct BinaryFixture {
    pub text: FeatureFile,
    pub image: FeatureFile,
    pub labels: Vec<(String, bool)>,
}

/// `n` samples, `positives` of them labelled 1. The classes are shifted in
/// opposite directions along a random axis in both modalities.
pub fn binary_fixture(
    n: usize,
    positives: usize,
    text_dim: usize,
    image_dim: usize,
    seed: u64,
) -> Result<BinaryFixture> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let axes = centres(2, text_dim + image_dim, 1.5, &mut rng);
    let axis = &axes[0];
    let mut ys: Vec<bool> = (0..n).map(|i| i < positives).collect();
    ys.shuffle(&mut rng);
    let mut text = FeatureFile::new(text_dim);
    let mut image = FeatureFile::new(image_dim);
    let mut labels = Vec::with_capacity(n);
    for (i, &y) in ys.iter().enumerate() {
        let sign = if y { 1.0 } else { -1.0 };
        let row: Vec<f32> = axis
            .iter()
            .map(|a| {
                let e: f64 = StandardNormal.sample(&mut rng);
                (sign * a + 0.5 * e) as f32
            })
            .collect();
        let id = format!("b{i:05}");
        text.push(id.clone(), &row[..text_dim])?;
        image.push(id.clone(), &row[text_dim..])?;
        labels.push((id, y));
    }
    Ok(BinaryFixture { text, image, labels })
}
