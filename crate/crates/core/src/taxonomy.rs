//! Persuasion-technique taxonomy: a rooted DAG of labels, plus its
//! path-expanded tree form used for label embeddings.
//!
//! Labels are NFC-normalized on load and on every lookup, so callers can pass
//! either composed or decomposed Unicode.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};
use unicode_normalization::{is_nfc, UnicodeNormalization};

use crate::error::{Error, Result};

/// On-disk taxonomy document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxonomyDoc {
    pub root: String,
    pub nodes: Vec<String>,
    pub edges: Vec<(String, String)>,
    #[serde(default)]
    pub definitions: BTreeMap<String, String>,
    #[serde(default)]
    pub leaf_index: BTreeMap<String, usize>,
}

/// Validated, immutable taxonomy DAG.
#[derive(Debug, Clone)]
pub struct Taxonomy {
    labels: Vec<String>,
    index: HashMap<String, usize>,
    root: usize,
    children: Vec<Vec<usize>>,
    parents: Vec<Vec<usize>>,
    definitions: Vec<String>,
    /// Node ids of leaves, ordered by leaf index.
    leaves: Vec<usize>,
    leaf_of_node: Vec<Option<usize>>,
}

pub(crate) fn nfc(s: &str) -> String {
    if is_nfc(s) {
        s.to_owned()
    } else {
        s.nfc().collect()
    }
}

impl Taxonomy {
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: TaxonomyDoc = serde_json::from_str(text)?;
        Self::from_doc(doc)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn from_doc(doc: TaxonomyDoc) -> Result<Self> {
        let labels: Vec<String> = doc.nodes.iter().map(|n| nfc(n)).collect();

        let mut index = HashMap::with_capacity(labels.len());
        let mut dups = Vec::new();
        for (i, l) in labels.iter().enumerate() {
            if l.is_empty() {
                return Err(Error::BadConfig("empty label name".into()));
            }
            if index.insert(l.clone(), i).is_some() && !dups.contains(l) {
                dups.push(l.clone());
            }
        }
        if !dups.is_empty() {
            return Err(Error::DuplicateLabel(dups));
        }

        let root_name = nfc(&doc.root);
        let root = *index
            .get(&root_name)
            .ok_or_else(|| Error::UnknownRoot(root_name.clone()))?;

        let n = labels.len();
        let mut children = vec![Vec::new(); n];
        let mut parents = vec![Vec::new(); n];
        let mut unknown = Vec::new();
        let mut seen = HashSet::new();
        let mut dup_edges = Vec::new();
        for (p, c) in &doc.edges {
            let (p, c) = (nfc(p), nfc(c));
            match (index.get(&p), index.get(&c)) {
                (Some(&pi), Some(&ci)) => {
                    if !seen.insert((pi, ci)) {
                        dup_edges.push((p, c));
                        continue;
                    }
                    children[pi].push(ci);
                    parents[ci].push(pi);
                }
                (pi, ci) => {
                    for (name, found) in [(p, pi.is_some()), (c, ci.is_some())] {
                        if !found && !unknown.contains(&name) {
                            unknown.push(name);
                        }
                    }
                }
            }
        }
        if !unknown.is_empty() {
            return Err(Error::UnknownNodeInEdge(unknown));
        }
        if !dup_edges.is_empty() {
            return Err(Error::DuplicateEdge(dup_edges));
        }

        if let Some(cycle) = find_cycle(&children) {
            return Err(Error::CycleDetected(
                cycle.into_iter().map(|i| labels[i].clone()).collect(),
            ));
        }

        // In an acyclic graph, "every node reachable from root" is equivalent
        // to "the root is the only parentless node".
        let parentless: Vec<String> = (0..n)
            .filter(|&i| parents[i].is_empty() && i != root)
            .map(|i| labels[i].clone())
            .collect();
        if !parentless.is_empty() || !parents[root].is_empty() {
            return Err(Error::MultipleRoots {
                declared: root_name,
                parentless,
            });
        }

        let mut definitions = vec![String::new(); n];
        for (label, text) in &doc.definitions {
            let l = nfc(label);
            let i = *index.get(&l).ok_or(Error::UnknownLabel(l))?;
            definitions[i] = text.clone();
        }

        let leaf_nodes: Vec<usize> = (0..n).filter(|&i| children[i].is_empty()).collect();
        let leaf_count = leaf_nodes.len();
        let mut slots: Vec<Option<usize>> = vec![None; leaf_count];
        let mut leaf_of_node = vec![None; n];
        for (label, &id) in &doc.leaf_index {
            let l = nfc(label);
            let i = *index.get(&l).ok_or_else(|| Error::UnknownLabel(l.clone()))?;
            if !children[i].is_empty() {
                return Err(Error::BadLeafIndex(format!("{l:?} is not a leaf")));
            }
            if id >= leaf_count {
                return Err(Error::BadLeafIndex(format!(
                    "{l:?} has index {id} but there are only {leaf_count} leaves"
                )));
            }
            if let Some(other) = slots[id] {
                return Err(Error::BadLeafIndex(format!(
                    "index {id} assigned to both {:?} and {l:?}",
                    labels[other]
                )));
            }
            slots[id] = Some(i);
            leaf_of_node[i] = Some(id);
        }
        // Leaves without an explicit index fill the free slots in document order.
        let free_slots: Vec<usize> = (0..leaf_count).filter(|&s| slots[s].is_none()).collect();
        let mut free = free_slots.into_iter();
        for &i in &leaf_nodes {
            if leaf_of_node[i].is_none() {
                let s = free.next().expect("free slot count equals unindexed leaf count");
                slots[s] = Some(i);
                leaf_of_node[i] = Some(s);
            }
        }
        let leaves = slots.into_iter().map(|s| s.unwrap()).collect();

        Ok(Self {
            labels,
            index,
            root,
            children,
            parents,
            definitions,
            leaves,
            leaf_of_node,
        })
    }

    pub fn to_doc(&self) -> TaxonomyDoc {
        let mut edges = Vec::new();
        for (p, cs) in self.children.iter().enumerate() {
            for &c in cs {
                edges.push((self.labels[p].clone(), self.labels[c].clone()));
            }
        }
        TaxonomyDoc {
            root: self.root().to_owned(),
            nodes: self.labels.clone(),
            edges,
            definitions: self
                .labels
                .iter()
                .zip(&self.definitions)
                .map(|(l, d)| (l.clone(), d.clone()))
                .collect(),
            leaf_index: self
                .leaves
                .iter()
                .enumerate()
                .map(|(k, &i)| (self.labels[i].clone(), k))
                .collect(),
        }
    }

    pub fn root(&self) -> &str {
        &self.labels[self.root]
    }

    /// All labels in document order.
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn contains(&self, label: &str) -> bool {
        self.node(label).is_ok()
    }

    pub(crate) fn node(&self, label: &str) -> Result<usize> {
        let found = if is_nfc(label) {
            self.index.get(label)
        } else {
            self.index.get(&nfc(label))
        };
        found.copied().ok_or_else(|| Error::UnknownLabel(label.to_owned()))
    }

    pub(crate) fn label_at(&self, node: usize) -> &str {
        &self.labels[node]
    }

    pub fn is_leaf(&self, label: &str) -> Result<bool> {
        Ok(self.children[self.node(label)?].is_empty())
    }

    pub fn children(&self, label: &str) -> Result<Vec<&str>> {
        let i = self.node(label)?;
        Ok(self.children[i].iter().map(|&c| self.label_at(c)).collect())
    }

    pub fn parents(&self, label: &str) -> Result<Vec<&str>> {
        let i = self.node(label)?;
        Ok(self.parents[i].iter().map(|&p| self.label_at(p)).collect())
    }

    pub fn definition(&self, label: &str) -> Result<&str> {
        Ok(&self.definitions[self.node(label)?])
    }

    /// Leaf labels ordered by leaf index.
    pub fn leaf_set(&self) -> Vec<&str> {
        self.leaves.iter().map(|&i| self.label_at(i)).collect()
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }

    pub fn leaf_index(&self, label: &str) -> Result<Option<usize>> {
        Ok(self.leaf_of_node[self.node(label)?])
    }

    /// Edges as (parent, child) in document order of parents, then edge order.
    pub fn edges(&self) -> impl Iterator<Item = (&str, &str)> {
        self.children.iter().enumerate().flat_map(move |(p, cs)| {
            cs.iter().map(move |&c| (self.label_at(p), self.label_at(c)))
        })
    }

    pub(crate) fn ancestor_nodes(&self, node: usize) -> Vec<bool> {
        let mut mark = vec![false; self.labels.len()];
        let mut queue: VecDeque<usize> = self.parents[node].iter().copied().collect();
        while let Some(p) = queue.pop_front() {
            if !mark[p] {
                mark[p] = true;
                queue.extend(self.parents[p].iter().copied());
            }
        }
        mark[self.root] = false;
        mark
    }

    /// Every DAG ancestor strictly between `label` and the root, in document
    /// order.
    pub fn ancestors(&self, label: &str) -> Result<Vec<&str>> {
        let mark = self.ancestor_nodes(self.node(label)?);
        Ok(mark
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(i, _)| self.label_at(i))
            .collect())
    }

    /// Strict descendants of `label`, in document order.
    pub fn descendants(&self, label: &str) -> Result<Vec<&str>> {
        let start = self.node(label)?;
        let mut mark = vec![false; self.labels.len()];
        let mut stack: Vec<usize> = self.children[start].clone();
        while let Some(c) = stack.pop() {
            if !mark[c] {
                mark[c] = true;
                stack.extend(self.children[c].iter().copied());
            }
        }
        Ok((0..mark.len())
            .filter(|&i| mark[i])
            .map(|i| self.label_at(i))
            .collect())
    }

    /// Expand the DAG into a tree with one node per distinct root path.
    pub fn dag_to_tree(&self) -> LabelTree {
        let mut nodes: Vec<TreeNode> = Vec::new();
        let mut children: Vec<Vec<usize>> = Vec::new();
        // (dag node, tree parent)
        let mut stack: Vec<(usize, Option<usize>)> = vec![(self.root, None)];
        while let Some((dag, parent)) = stack.pop() {
            let label = self.labels[dag].clone();
            let (id, depth) = match parent {
                None => (escape_segment(&label), 0),
                Some(p) => (
                    format!("{}/{}", nodes[p].id, escape_segment(&label)),
                    nodes[p].depth + 1,
                ),
            };
            let me = nodes.len();
            nodes.push(TreeNode {
                id,
                label,
                parent,
                depth,
            });
            children.push(Vec::new());
            if let Some(p) = parent {
                children[p].push(me);
            }
            // Reverse so children are visited (and numbered) in edge order.
            for &c in self.children[dag].iter().rev() {
                stack.push((c, Some(me)));
            }
        }
        LabelTree::from_parts(nodes, children)
    }
}

/// Iterative three-colour DFS; returns one cycle as a node sequence.
fn find_cycle(children: &[Vec<usize>]) -> Option<Vec<usize>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        White,
        Grey,
        Black,
    }
    let n = children.len();
    let mut mark = vec![Mark::White; n];
    for start in 0..n {
        if mark[start] != Mark::White {
            continue;
        }
        let mut path = vec![start];
        let mut cursor = vec![0usize];
        mark[start] = Mark::Grey;
        while let Some(&node) = path.last() {
            let k = cursor.last_mut().unwrap();
            if let Some(&next) = children[node].get(*k) {
                *k += 1;
                match mark[next] {
                    Mark::White => {
                        mark[next] = Mark::Grey;
                        path.push(next);
                        cursor.push(0);
                    }
                    Mark::Grey => {
                        let pos = path.iter().position(|&x| x == next).unwrap();
                        return Some(path[pos..].to_vec());
                    }
                    Mark::Black => {}
                }
            } else {
                mark[node] = Mark::Black;
                path.pop();
                cursor.pop();
            }
        }
    }
    None
}

fn escape_segment(label: &str) -> String {
    label.replace('%', "%25").replace('/', "%2F")
}

fn unescape_segment(seg: &str) -> String {
    seg.replace("%2F", "/").replace("%25", "%")
}

/// Label carried by a path-qualified tree node id.
pub fn label_of_node_id(id: &str) -> String {
    unescape_segment(id.rsplit('/').next().unwrap_or(id))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeNode {
    /// Root path of escaped labels joined by `/`.
    pub id: String,
    pub label: String,
    pub parent: Option<usize>,
    pub depth: usize,
}

/// DAG expanded into a tree; multi-parent labels appear once per root path.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelTree {
    nodes: Vec<TreeNode>,
    children: Vec<Vec<usize>>,
    label_to_nodes: BTreeMap<String, Vec<usize>>,
    id_index: HashMap<String, usize>,
}

impl LabelTree {
    fn from_parts(nodes: Vec<TreeNode>, children: Vec<Vec<usize>>) -> Self {
        let mut label_to_nodes: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        let mut id_index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            label_to_nodes.entry(n.label.clone()).or_default().push(i);
            id_index.insert(n.id.clone(), i);
        }
        Self {
            nodes,
            children,
            label_to_nodes,
            id_index,
        }
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn children(&self, node: usize) -> &[usize] {
        &self.children[node]
    }

    /// Tree edges as (parent, child) node indices, in node order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| n.parent.map(|p| (p, i)))
            .collect()
    }

    pub fn label_to_nodes(&self) -> &BTreeMap<String, Vec<usize>> {
        &self.label_to_nodes
    }

    pub fn nodes_of(&self, label: &str) -> Option<&[usize]> {
        self.label_to_nodes.get(&nfc(label)).map(Vec::as_slice)
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.id_index.get(id).copied()
    }

    /// Strict tree ancestors of `node`, nearest first.
    pub fn ancestors(&self, node: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut cur = self.nodes[node].parent;
        while let Some(p) = cur {
            out.push(p);
            cur = self.nodes[p].parent;
        }
        out
    }

    /// Strict tree descendants of `node`.
    pub fn descendants(&self, node: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = self.children[node].clone();
        while let Some(c) = stack.pop() {
            out.push(c);
            stack.extend(self.children[c].iter().copied());
        }
        out
    }
}

/// Taxonomies shipped with the crate.
pub mod bundled {
    use super::Taxonomy;

    /// Text-only hierarchy: 20 leaf techniques.
    pub const SUBTASK1_JSON: &str = include_str!("../data/taxonomy_subtask1.json");
    /// Text+image hierarchy: adds Transfer and Appeal to (Strong) Emotions.
    pub const SUBTASK2_JSON: &str = include_str!("../data/taxonomy_subtask2.json");

    pub fn subtask1() -> Taxonomy {
        Taxonomy::from_json(SUBTASK1_JSON).expect("bundled taxonomy is valid")
    }

    pub fn subtask2() -> Taxonomy {
        Taxonomy::from_json(SUBTASK2_JSON).expect("bundled taxonomy is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(root: &str, nodes: &[&str], edges: &[(&str, &str)]) -> TaxonomyDoc {
        TaxonomyDoc {
            root: root.into(),
            nodes: nodes.iter().map(|s| s.to_string()).collect(),
            edges: edges
                .iter()
                .map(|(p, c)| (p.to_string(), c.to_string()))
                .collect(),
            definitions: BTreeMap::new(),
            leaf_index: BTreeMap::new(),
        }
    }

    #[test]
    fn minimal_fan_out() {
        let t = Taxonomy::from_doc(doc("P", &["P", "A", "B"], &[("P", "A"), ("P", "B")])).unwrap();
        assert_eq!(t.leaf_set(), vec!["A", "B"]);
        assert_eq!(t.ancestors("P").unwrap(), Vec::<&str>::new());
        assert_eq!(t.ancestors("A").unwrap(), Vec::<&str>::new());
    }

    #[test]
    fn cycle_is_rejected_with_labels() {
        let err = Taxonomy::from_doc(doc(
            "P",
            &["P", "A", "B"],
            &[("P", "A"), ("P", "B"), ("A", "P")],
        ))
        .unwrap_err();
        match err {
            Error::CycleDetected(c) => {
                assert!(c.contains(&"P".to_string()) && c.contains(&"A".to_string()))
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn structural_errors() {
        let e = Taxonomy::from_doc(doc("P", &["P", "A"], &[("P", "Z")])).unwrap_err();
        assert!(matches!(e, Error::UnknownNodeInEdge(ref v) if v == &["Z"]));

        let e = Taxonomy::from_doc(doc("P", &["P", "A", "B"], &[("P", "A")])).unwrap_err();
        assert!(matches!(e, Error::MultipleRoots { ref parentless, .. } if parentless == &["B"]));

        let e = Taxonomy::from_doc(doc("P", &["P", "A", "A"], &[("P", "A")])).unwrap_err();
        assert!(matches!(e, Error::DuplicateLabel(ref v) if v == &["A"]));

        let e = Taxonomy::from_doc(doc("P", &["P", "A"], &[("P", "A"), ("P", "A")])).unwrap_err();
        assert!(matches!(e, Error::DuplicateEdge(_)));

        let e = Taxonomy::from_doc(doc("Q", &["P", "A"], &[("P", "A")])).unwrap_err();
        assert!(matches!(e, Error::UnknownRoot(_)));

        // Root with a parent but no cycle: some other node must be parentless.
        let e = Taxonomy::from_doc(doc("A", &["P", "A"], &[("P", "A")])).unwrap_err();
        assert!(matches!(e, Error::MultipleRoots { .. }));
    }

    #[test]
    fn leaf_index_fill_and_validation() {
        let mut d = doc(
            "R",
            &["R", "a", "b", "c"],
            &[("R", "a"), ("R", "b"), ("R", "c")],
        );
        d.leaf_index.insert("c".into(), 0);
        let t = Taxonomy::from_doc(d.clone()).unwrap();
        assert_eq!(t.leaf_set(), vec!["c", "a", "b"]);

        d.leaf_index.insert("a".into(), 0);
        assert!(matches!(Taxonomy::from_doc(d.clone()), Err(Error::BadLeafIndex(_))));
        d.leaf_index.clear();
        d.leaf_index.insert("a".into(), 3);
        assert!(matches!(Taxonomy::from_doc(d.clone()), Err(Error::BadLeafIndex(_))));
        d.leaf_index.clear();
        d.leaf_index.insert("R".into(), 0);
        assert!(matches!(Taxonomy::from_doc(d), Err(Error::BadLeafIndex(_))));
    }

    #[test]
    fn chain_has_single_leaf() {
        let t = Taxonomy::from_doc(doc("P", &["P", "A", "B"], &[("P", "A"), ("A", "B")])).unwrap();
        assert_eq!(t.leaf_set(), vec!["B"]);
        assert_eq!(t.ancestors("B").unwrap(), vec!["A"]);
    }

    #[test]
    fn labels_are_nfc_normalized() {
        // "é" decomposed in the document, composed in the query.
        let t = Taxonomy::from_doc(doc(
            "R",
            &["R", "clich\u{0065}\u{0301}"],
            &[("R", "clich\u{0065}\u{0301}")],
        ))
        .unwrap();
        assert!(t.contains("clich\u{00e9}"));
        assert_eq!(t.leaf_set(), vec!["clich\u{00e9}"]);
    }

    #[test]
    fn diamond_expands_to_five_tree_nodes() {
        let t = Taxonomy::from_doc(doc(
            "R",
            &["R", "A", "B", "C"],
            &[("R", "A"), ("R", "B"), ("A", "C"), ("B", "C")],
        ))
        .unwrap();
        let tree = t.dag_to_tree();
        assert_eq!(tree.len(), 5);
        let ids: Vec<&str> = tree.nodes().iter().map(|n| n.id.as_str()).collect();
        assert_eq!(ids, vec!["R", "R/A", "R/A/C", "R/B", "R/B/C"]);
        assert_eq!(tree.nodes_of("C").unwrap(), &[2, 4]);
    }

    #[test]
    fn pure_tree_is_isomorphic() {
        let t = Taxonomy::from_doc(doc(
            "R",
            &["R", "A", "B", "C"],
            &[("R", "A"), ("R", "B"), ("A", "C")],
        ))
        .unwrap();
        let tree = t.dag_to_tree();
        assert_eq!(tree.len(), t.len());
        for (p, c) in tree.edges() {
            let (pl, cl) = (&tree.nodes()[p].label, &tree.nodes()[c].label);
            assert!(t.children(pl).unwrap().contains(&cl.as_str()));
        }
    }

    #[test]
    fn slash_in_label_is_escaped_in_node_id() {
        let t = Taxonomy::from_doc(doc("R", &["R", "a/b"], &[("R", "a/b")])).unwrap();
        let tree = t.dag_to_tree();
        assert_eq!(tree.nodes()[1].id, "R/a%2Fb");
        assert_eq!(label_of_node_id(&tree.nodes()[1].id), "a/b");
    }

    #[test]
    fn bundled_taxonomies() {
        let t1 = bundled::subtask1();
        let leaves = t1.leaf_set();
        assert_eq!(leaves.len(), 20);
        assert_eq!(leaves[0], "Presenting Irrelevant Data (Red Herring)");
        assert_eq!(leaves[2], "Smears");
        assert_eq!(leaves[19], "Doubt");
        assert!(t1
            .ancestors("Presenting Irrelevant Data (Red Herring)")
            .unwrap()
            .contains(&"Distraction"));

        let t2 = bundled::subtask2();
        let leaves2 = t2.leaf_set();
        assert_eq!(leaves2.len(), 22);
        assert_eq!(&leaves2[..20], &leaves[..]);
        assert_eq!(leaves2[20], "Transfer");
        assert_eq!(leaves2[21], "Appeal to (Strong) Emotions");
    }

    #[test]
    fn doc_round_trip() {
        let t = bundled::subtask2();
        let back = Taxonomy::from_doc(t.to_doc()).unwrap();
        assert_eq!(back.labels(), t.labels());
        assert_eq!(back.leaf_set(), t.leaf_set());
        assert_eq!(back.edges().count(), t.edges().count());
    }
}
