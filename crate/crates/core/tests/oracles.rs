//! Library results checked against independently written brute-force
//! versions.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use pertax::cones::{cone_aperture, cone_energy, inner_radius, LabelEmbedding};
use pertax::data::{stats, Sample};
use pertax::ensemble::union_ensemble;
use pertax::hyperbolic::{poincare_distance, PoincareVec};
use pertax::hypemo::{explode_multilabel, zscore_select};
use pertax::metrics::{augment, hierarchical_prf, per_class_f1, PredictionSet};
use pertax::synthetic::{multilabel_fixture, random_taxonomy, BlobConfig};
use pertax::taxonomy::{bundled, Taxonomy};
use proptest::prelude::*;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Reflexive-transitive closure by repeated edge relaxation until nothing
/// changes.
fn closure(t: &Taxonomy) -> HashMap<String, BTreeSet<String>> {
    let mut anc: HashMap<String, BTreeSet<String>> = t
        .labels()
        .iter()
        .map(|l| (l.clone(), BTreeSet::from([l.clone()])))
        .collect();
    let edges: Vec<(String, String)> = t.edges().map(|(p, c)| (p.to_owned(), c.to_owned())).collect();
    loop {
        let mut changed = false;
        for (p, c) in &edges {
            let from_parent = anc[p].clone();
            let child = anc.get_mut(c).unwrap();
            for a in from_parent {
                changed |= child.insert(a);
            }
        }
        if !changed {
            return anc;
        }
    }
}

fn proper_ancestors(t: &Taxonomy, cl: &HashMap<String, BTreeSet<String>>, label: &str) -> BTreeSet<String> {
    cl[label]
        .iter()
        .filter(|a| a.as_str() != label && a.as_str() != t.root())
        .cloned()
        .collect()
}

/// Independent hierarchical scorer: augment inline, then micro-average.
fn brute_hf1(t: &Taxonomy, gold: &[Vec<String>], pred: &[Vec<String>]) -> (f64, f64, f64) {
    let cl = closure(t);
    let aug = |s: &Vec<String>| -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for l in s {
            for a in &cl[l] {
                if a != t.root() {
                    out.insert(a.clone());
                }
            }
        }
        out
    };
    let (mut inter, mut np, mut ng) = (0usize, 0usize, 0usize);
    for (g, p) in gold.iter().zip(pred) {
        let (g, p) = (aug(g), aug(p));
        inter += g.intersection(&p).count();
        np += p.len();
        ng += g.len();
    }
    let hp = if np == 0 { 0.0 } else { inter as f64 / np as f64 };
    let hr = inter as f64 / ng as f64;
    let f = if hp + hr == 0.0 { 0.0 } else { 2.0 * hp * hr / (hp + hr) };
    (hp, hr, f)
}

fn random_subset<R: Rng>(pool: &[&str], rng: &mut R, max: usize) -> Vec<String> {
    let k = rng.random_range(0..=max.min(pool.len()));
    pool.choose_multiple(rng, k).map(|s| s.to_string()).collect()
}

fn sets(ids: &[String], labels: &[Vec<String>]) -> Vec<PredictionSet> {
    ids.iter()
        .zip(labels)
        .map(|(id, l)| PredictionSet::new(id.clone(), l.iter().cloned()))
        .collect()
}

#[test]
fn ancestors_match_closure_on_random_dags() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..200 {
        let n = rng.random_range(1..=25);
        let t = random_taxonomy(n, &mut rng);
        let cl = closure(&t);
        for l in t.labels() {
            let got: BTreeSet<String> = t.ancestors(l).unwrap().into_iter().map(str::to_owned).collect();
            assert_eq!(got, proper_ancestors(&t, &cl, l), "label {l}");
        }
        assert!(t.ancestors(t.root()).unwrap().is_empty());
    }
}

#[test]
fn augment_matches_closure() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let t = random_taxonomy(rng.random_range(2..=25), &mut rng);
        let cl = closure(&t);
        let labels: Vec<&str> = t.labels().iter().map(String::as_str).collect();
        let s = random_subset(&labels, &mut rng, 4);
        let want: BTreeSet<String> = s
            .iter()
            .flat_map(|l| cl[l].iter().cloned())
            .filter(|a| a != t.root())
            .collect();
        let got: BTreeSet<String> = augment(&t, &s).unwrap().into_iter().map(str::to_owned).collect();
        assert_eq!(got, want);
    }
}

/// Root paths to each label, as depth lists, by plain recursion.
fn path_depths(t: &Taxonomy) -> BTreeMap<String, Vec<usize>> {
    fn walk(t: &Taxonomy, label: &str, depth: usize, out: &mut BTreeMap<String, Vec<usize>>) {
        out.entry(label.to_owned()).or_default().push(depth);
        for c in t.children(label).unwrap() {
            walk(t, c, depth + 1, out);
        }
    }
    let mut out = BTreeMap::new();
    walk(t, t.root(), 0, &mut out);
    for v in out.values_mut() {
        v.sort_unstable();
    }
    out
}

fn check_tree(t: &Taxonomy) {
    let tree = t.dag_to_tree();
    let paths = path_depths(t);
    assert_eq!(tree.len(), paths.values().map(Vec::len).sum::<usize>());
    for (label, depths) in &paths {
        let nodes = tree.nodes_of(label).unwrap();
        let mut got: Vec<usize> = nodes.iter().map(|&i| tree.nodes()[i].depth).collect();
        got.sort_unstable();
        assert_eq!(&got, depths, "label {label}");
    }
    let roots = tree.nodes().iter().filter(|n| n.parent.is_none()).count();
    assert_eq!(roots, 1);
    for (i, n) in tree.nodes().iter().enumerate() {
        if let Some(p) = n.parent {
            assert!(tree.children(p).contains(&i));
            assert_eq!(tree.nodes()[p].depth + 1, n.depth);
        }
    }
}

#[test]
fn tree_expansion_matches_path_enumeration() {
    check_tree(&bundled::subtask1());
    check_tree(&bundled::subtask2());
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        check_tree(&random_taxonomy(rng.random_range(1..=14), &mut rng));
    }
}

#[test]
fn tree_expansion_is_deterministic() {
    let t = bundled::subtask2();
    assert_eq!(t.dag_to_tree(), t.dag_to_tree());
}

#[test]
fn hierarchical_f1_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..200 {
        let t = random_taxonomy(rng.random_range(2..=25), &mut rng);
        let labels: Vec<&str> = t.labels().iter().filter(|l| *l != t.root()).map(String::as_str).collect();
        let n = rng.random_range(1..=8);
        let ids: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
        let mut gold: Vec<Vec<String>> = (0..n).map(|_| random_subset(&labels, &mut rng, 3)).collect();
        if gold.iter().all(Vec::is_empty) {
            gold[0].push(labels[0].to_owned());
        }
        let pred: Vec<Vec<String>> = (0..n).map(|_| random_subset(&labels, &mut rng, 3)).collect();
        let r = hierarchical_prf(&t, &sets(&ids, &gold), &sets(&ids, &pred)).unwrap();
        let (hp, hr, hf) = brute_hf1(&t, &gold, &pred);
        assert!((r.hierarchical_precision.unwrap() - hp).abs() <= 1e-12);
        assert!((r.hierarchical_recall.unwrap() - hr).abs() <= 1e-12);
        assert!((r.hierarchical_f1.unwrap() - hf).abs() <= 1e-12);
    }
}

#[test]
fn scores_ignore_sample_order() {
    let t = bundled::subtask1();
    let leaves = t.leaf_set();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let ids: Vec<String> = (0..30).map(|i| format!("s{i}")).collect();
    let gold: Vec<Vec<String>> = (0..30).map(|_| random_subset(&leaves, &mut rng, 3)).collect();
    let pred: Vec<Vec<String>> = (0..30).map(|_| random_subset(&leaves, &mut rng, 3)).collect();
    let g = sets(&ids, &gold);
    let mut p = sets(&ids, &pred);
    let a = hierarchical_prf(&t, &g, &p).unwrap();
    p.reverse();
    let b = hierarchical_prf(&t, &g, &p).unwrap();
    assert_eq!(a.hierarchical_f1, b.hierarchical_f1);
}

#[test]
fn ancestor_prediction_never_beats_exact_leaf() {
    let t = bundled::subtask2();
    for leaf in t.leaf_set() {
        let gold = vec![PredictionSet::new("x", [leaf])];
        let exact = hierarchical_prf(&t, &gold, &gold).unwrap().hierarchical_f1.unwrap();
        assert_eq!(exact, 1.0);
        for a in t.ancestors(leaf).unwrap() {
            let pred = vec![PredictionSet::new("x", [a])];
            let s = hierarchical_prf(&t, &gold, &pred).unwrap().hierarchical_f1.unwrap();
            assert!(s < exact && s > 0.0, "{leaf} / {a}: {s}");
        }
    }
}

#[test]
fn per_class_f1_matches_counting() {
    let classes = ["a", "b", "c", "d"];
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..100 {
        let n = rng.random_range(1..20);
        let ids: Vec<String> = (0..n).map(|i| i.to_string()).collect();
        let gold: Vec<Vec<String>> = (0..n).map(|_| random_subset(&classes, &mut rng, 3)).collect();
        let pred: Vec<Vec<String>> = (0..n).map(|_| random_subset(&classes, &mut rng, 3)).collect();
        let got = per_class_f1(&sets(&ids, &gold), &sets(&ids, &pred), &classes).unwrap();
        for c in classes {
            let (mut tp, mut fp, mut fneg) = (0, 0, 0);
            for (g, p) in gold.iter().zip(&pred) {
                let (g, p): (BTreeSet<&str>, BTreeSet<&str>) =
                    (g.iter().map(String::as_str).collect(), p.iter().map(String::as_str).collect());
                match (g.contains(c), p.contains(c)) {
                    (true, true) => tp += 1,
                    (false, true) => fp += 1,
                    (true, false) => fneg += 1,
                    _ => {}
                }
            }
            let want = if tp + fp + fneg == 0 {
                0.0
            } else {
                2.0 * tp as f64 / (2 * tp + fp + fneg) as f64
            };
            assert!((got[c] - want).abs() < 1e-15);
        }
    }
}

#[test]
fn label_distance_is_min_over_copies() {
    let t = bundled::subtask1();
    let tree = t.dag_to_tree();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let point = |rng: &mut ChaCha8Rng| {
        let v: Vec<f64> = (0..5).map(|_| rng.random_range(-0.4..0.4)).collect();
        PoincareVec::new(v).unwrap()
    };
    let entries = tree.nodes().iter().map(|n| (n.id.clone(), point(&mut rng))).collect();
    let emb = LabelEmbedding::new(0.1, entries).unwrap();
    for _ in 0..50 {
        let x = point(&mut rng);
        for (label, nodes) in tree.label_to_nodes() {
            let want = nodes
                .iter()
                .map(|&i| poincare_distance(&x, emb.get(&tree.nodes()[i].id).unwrap()).unwrap())
                .fold(f64::INFINITY, f64::min);
            assert_eq!(emb.label_distance(&x, label).unwrap(), want);
        }
    }
}

/// Rejection-sample a point inside the cone at `x` (energy exactly 0).
fn sample_in_cone(x: &PoincareVec, k: f64, rng: &mut ChaCha8Rng) -> Option<PoincareVec> {
    let r_min = inner_radius(k).unwrap();
    for _ in 0..10_000 {
        let r = rng.random_range(r_min + 1e-3..0.99);
        let th = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let y = PoincareVec::new(vec![r * th.cos(), r * th.sin()]).unwrap();
        if cone_energy(x, &y, k).unwrap() == 0.0 {
            return Some(y);
        }
    }
    None
}

#[test]
fn cone_containment_is_transitive() {
    let k = 0.1;
    let r_min = inner_radius(k).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut checked = 0;
    while checked < 500 {
        let r = rng.random_range(r_min + 1e-3..0.9);
        let th = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let x = PoincareVec::new(vec![r * th.cos(), r * th.sin()]).unwrap();
        let Some(y) = sample_in_cone(&x, k, &mut rng) else { continue };
        let Some(z) = sample_in_cone(&y, k, &mut rng) else { continue };
        let e = cone_energy(&x, &z, k).unwrap();
        assert!(e <= 1e-7, "x={x:?} y={y:?} z={z:?} E={e}");
        checked += 1;
    }
}

#[test]
fn aperture_sweep_is_decreasing() {
    let r_min = inner_radius(0.1).unwrap();
    let mut prev = f64::INFINITY;
    for i in 0..1000 {
        let r = r_min + (0.99999 - r_min) * i as f64 / 999.0;
        let a = cone_aperture(&PoincareVec::new(vec![r, 0.0]).unwrap(), 0.1).unwrap();
        assert!(a < prev || i == 0);
        prev = a;
    }
}

#[test]
fn explode_count_on_seven_thousand_samples() {
    let t = bundled::subtask1();
    let fx = multilabel_fixture(&t, 7000, &BlobConfig::default()).unwrap();
    let rows = pertax::data::attach_features(&fx.samples, &fx.features).unwrap();
    let (ex, dropped) = explode_multilabel(&rows);
    let want: usize = fx.samples.iter().map(|s| s.labels.len()).sum();
    assert_eq!(dropped, 0);
    assert_eq!(ex.len(), want);
    let mean = want as f64 / 7000.0;
    assert!((mean - 1.9).abs() < 0.05, "mean labels {mean}");
    // Rows keep input order.
    let order: Vec<&str> = ex.iter().map(|r| r.id.as_str()).collect();
    let mut sorted = order.clone();
    sorted.sort();
    assert_eq!(order, sorted);
}

#[test]
fn stats_match_naive_counts() {
    let t = bundled::subtask1();
    let leaves = t.leaf_set();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let samples: Vec<Sample> = (0..200)
        .map(|i| Sample {
            id: i.to_string(),
            text: String::new(),
            labels: random_subset(&leaves, &mut rng, 3),
            image_ref: None,
        })
        .collect();
    let got = stats(&samples, &t).unwrap();
    for (k, leaf) in leaves.iter().enumerate() {
        let want = samples.iter().filter(|s| s.labels.iter().any(|l| l == leaf)).count();
        assert_eq!(got.get_index(k).unwrap(), (&leaf.to_string(), &want));
    }
}

fn pred_file(ids: usize, pool: &'static [&'static str]) -> impl Strategy<Value = Vec<PredictionSet>> {
    prop::collection::vec(prop::sample::subsequence(pool, 0..=pool.len()), ids).prop_map(|rows| {
        rows.into_iter()
            .enumerate()
            .map(|(i, l)| PredictionSet::new(format!("s{i}"), l))
            .collect()
    })
}

const POOL: &[&str] = &["Smears", "Doubt", "Slogans", "Repetition", "Loaded Language"];

proptest! {
    #[test]
    fn union_is_commutative_associative_idempotent(
        a in pred_file(6, POOL), b in pred_file(6, POOL), c in pred_file(6, POOL)
    ) {
        let ab = union_ensemble(&[a.clone(), b.clone()]).unwrap();
        let ba = union_ensemble(&[b.clone(), a.clone()]).unwrap();
        let key = |v: &[PredictionSet]| v.iter().map(|p| (p.sample_id.clone(), p.labels.clone())).collect::<BTreeMap<_, _>>();
        prop_assert_eq!(key(&ab), key(&ba));
        let ab_c = union_ensemble(&[ab.clone(), c.clone()]).unwrap();
        let bc = union_ensemble(&[b.clone(), c.clone()]).unwrap();
        let a_bc = union_ensemble(&[a.clone(), bc]).unwrap();
        prop_assert_eq!(key(&ab_c), key(&a_bc));
        prop_assert_eq!(union_ensemble(&[a.clone(), a.clone()]).unwrap(), a);
    }

    #[test]
    fn union_recall_dominates_components(a in pred_file(6, POOL), b in pred_file(6, POOL), g in pred_file(6, POOL)) {
        prop_assume!(g.iter().any(|p| !p.labels.is_empty()));
        let t = bundled::subtask1();
        let u = union_ensemble(&[a.clone(), b.clone()]).unwrap();
        let hr = |p: &[PredictionSet]| hierarchical_prf(&t, &g, p).unwrap().hierarchical_recall.unwrap();
        prop_assert!(hr(&u) >= hr(&a).max(hr(&b)));
    }

    #[test]
    fn zscore_output_never_empty(probs in prop::collection::vec(0.0f64..1.0, 1..30), tau in -3.0f64..5.0) {
        let s = zscore_select(&probs, tau);
        prop_assert!(!s.is_empty());
        prop_assert!(s.iter().all(|&i| i < probs.len()));
    }

    #[test]
    fn self_score_is_one(seed in 0u64..1000) {
        let t = bundled::subtask2();
        let leaves = t.leaf_set();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ids: Vec<String> = (0..5).map(|i| i.to_string()).collect();
        let gold: Vec<Vec<String>> = (0..5).map(|_| {
            let mut s = random_subset(&leaves, &mut rng, 3);
            if s.is_empty() { s.push(leaves[0].to_owned()); }
            s
        }).collect();
        let g = sets(&ids, &gold);
        prop_assert_eq!(hierarchical_prf(&t, &g, &g).unwrap().hierarchical_f1, Some(1.0));
    }
}
