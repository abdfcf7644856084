//! Python bindings. Prediction rows cross the boundary as `(id, [labels])`
//! tuples; vectors as lists of floats.

use std::collections::BTreeMap;

use pertax::cones::{self, ConeTrainConfig};
use pertax::features::FeatureFile;
use pertax::hyperbolic::{self, PoincareVec};
use pertax::metrics::{MetricsReport, PredictionSet};
use pertax::{binary, cdp, data, ensemble, hypemo, metrics, taxonomy};
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: pertax::Error) -> PyErr {
    match e {
        pertax::Error::Io(io) => PyOSError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

type Rows = Vec<(String, Vec<String>)>;

fn to_sets(rows: Rows) -> Vec<PredictionSet> {
    rows.into_iter().map(|(id, l)| PredictionSet::new(id, l)).collect()
}

fn from_sets(sets: Vec<PredictionSet>) -> Rows {
    sets.into_iter().map(|p| (p.sample_id, p.labels.into_iter().collect())).collect()
}

fn point(v: Vec<f64>) -> PyResult<PoincareVec> {
    PoincareVec::new(v).map_err(err)
}

#[pyclass(name = "Taxonomy", module = "pertax_py")]
struct PyTaxonomy(taxonomy::Taxonomy);

#[pymethods]
impl PyTaxonomy {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        taxonomy::Taxonomy::from_json(text).map(Self).map_err(err)
    }

    #[staticmethod]
    fn from_path(path: &str) -> PyResult<Self> {
        taxonomy::Taxonomy::from_path(path).map(Self).map_err(err)
    }

    /// One of the two bundled taxonomies (1 or 2).
    #[staticmethod]
    fn bundled(which: u8) -> PyResult<Self> {
        match which {
            1 => Ok(Self(taxonomy::bundled::subtask1())),
            2 => Ok(Self(taxonomy::bundled::subtask2())),
            _ => Err(PyValueError::new_err("bundled taxonomy must be 1 or 2")),
        }
    }

    #[getter]
    fn root(&self) -> String {
        self.0.root().to_owned()
    }

    fn labels(&self) -> Vec<String> {
        self.0.labels().to_vec()
    }

    fn leaves(&self) -> Vec<String> {
        self.0.leaf_set().into_iter().map(str::to_owned).collect()
    }

    fn leaf_index(&self, label: &str) -> PyResult<Option<usize>> {
        self.0.leaf_index(label).map_err(err)
    }

    fn is_leaf(&self, label: &str) -> PyResult<bool> {
        self.0.is_leaf(label).map_err(err)
    }

    fn parents(&self, label: &str) -> PyResult<Vec<String>> {
        Ok(self.0.parents(label).map_err(err)?.into_iter().map(str::to_owned).collect())
    }

    fn children(&self, label: &str) -> PyResult<Vec<String>> {
        Ok(self.0.children(label).map_err(err)?.into_iter().map(str::to_owned).collect())
    }

    fn ancestors(&self, label: &str) -> PyResult<Vec<String>> {
        Ok(self.0.ancestors(label).map_err(err)?.into_iter().map(str::to_owned).collect())
    }

    /// Tree nodes as `(id, label, parent_id, depth)`.
    fn to_tree(&self) -> Vec<(String, String, Option<String>, usize)> {
        let tree = self.0.dag_to_tree();
        tree.nodes()
            .iter()
            .map(|n| (n.id.clone(), n.label.clone(), n.parent.map(|p| tree.nodes()[p].id.clone()), n.depth))
            .collect()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

#[pyclass(name = "LabelEmbedding", module = "pertax_py")]
struct PyLabelEmbedding(cones::LabelEmbedding);

#[pymethods]
impl PyLabelEmbedding {
    #[staticmethod]
    #[pyo3(signature = (taxonomy, dim = 100, epochs = 300, seed = 0))]
    fn train(taxonomy: &PyTaxonomy, dim: usize, epochs: usize, seed: u64) -> PyResult<Self> {
        let cfg = ConeTrainConfig {
            dim,
            epochs,
            seed,
            ..Default::default()
        };
        cones::train_label_embeddings(&taxonomy.0.dag_to_tree(), &cfg).map(Self).map_err(err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        cones::LabelEmbedding::read(path).map(Self).map_err(err)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.0.write(path).map_err(err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn vector(&self, node_id: &str) -> Option<Vec<f64>> {
        self.0.get(node_id).map(|v| v.coords().to_vec())
    }

    fn label_distance(&self, x: Vec<f64>, label: &str) -> PyResult<f64> {
        self.0.label_distance(&point(x)?, label).map_err(err)
    }

    fn edge_energies(&self, taxonomy: &PyTaxonomy) -> PyResult<Vec<f64>> {
        self.0.edge_energies(&taxonomy.0.dag_to_tree()).map_err(err)
    }
}

#[pyclass(name = "FeatureFile", module = "pertax_py")]
struct PyFeatureFile(FeatureFile);

#[pymethods]
impl PyFeatureFile {
    #[new]
    fn new(dim: usize) -> Self {
        Self(FeatureFile::new(dim))
    }

    #[staticmethod]
    fn read(path: &str) -> PyResult<Self> {
        FeatureFile::read(path).map(Self).map_err(err)
    }

    fn write(&self, path: &str) -> PyResult<()> {
        self.0.write(path).map_err(err)
    }

    fn push(&mut self, id: String, row: Vec<f32>) -> PyResult<()> {
        self.0.push(id, &row).map_err(err)
    }

    fn get(&self, id: &str) -> Option<Vec<f32>> {
        self.0.get(id).map(<[f32]>::to_vec)
    }

    fn ids(&self) -> Vec<String> {
        self.0.ids().to_vec()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn concat(&self, other: &PyFeatureFile) -> PyResult<Self> {
        self.0.concat(&other.0).map(Self).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

#[pyclass(name = "HypemoModel", module = "pertax_py")]
struct PyHypemoModel(hypemo::HypemoModel);

#[pymethods]
impl PyHypemoModel {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        hypemo::HypemoModel::load(path).map(Self).map_err(err)
    }

    fn labels(&self) -> Vec<String> {
        self.0.labels().to_vec()
    }

    #[getter]
    fn tau(&self) -> f64 {
        self.0.tau
    }

    #[setter]
    fn set_tau(&mut self, tau: f64) {
        self.0.tau = tau;
    }

    /// Class probabilities and the projected point for one feature vector.
    fn forward(&self, feature: Vec<f64>) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let f = self.0.forward(&feature).map_err(err)?;
        Ok((f.probs, f.point.into_inner()))
    }

    fn predict(&self, features: &PyFeatureFile) -> PyResult<Rows> {
        hypemo::predict_hier(&self.0, &features.0).map(from_sets).map_err(err)
    }
}

#[pyclass(name = "CdpModel", module = "pertax_py")]
struct PyCdpModel(cdp::CdpModel);

#[pymethods]
impl PyCdpModel {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        cdp::CdpModel::load(path).map(Self).map_err(err)
    }

    fn labels(&self) -> Vec<String> {
        self.0.labels().to_vec()
    }

    fn predict(&self, features: &PyFeatureFile) -> PyResult<Rows> {
        cdp::predict_cdp(&self.0, &features.0).map(from_sets).map_err(err)
    }
}

#[pyclass(name = "BinaryModel", module = "pertax_py")]
struct PyBinaryModel(binary::BinaryModel);

#[pymethods]
impl PyBinaryModel {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        binary::BinaryModel::load(path).map(Self).map_err(err)
    }

    #[getter]
    fn weight(&self) -> f64 {
        self.0.weight
    }

    /// `(id, label, prob)` per sample.
    fn predict(&self, text: &PyFeatureFile, image: &PyFeatureFile) -> PyResult<Vec<(String, u8, f64)>> {
        let rows = binary::predict_binary(&self.0, &text.0, &image.0).map_err(err)?;
        Ok(rows.into_iter().map(|p| (p.id, p.label, p.prob)).collect())
    }
}

#[pyfunction]
fn poincare_distance(u: Vec<f64>, v: Vec<f64>) -> PyResult<f64> {
    hyperbolic::poincare_distance(&point(u)?, &point(v)?).map_err(err)
}

#[pyfunction]
fn exp_map_origin(v: Vec<f64>) -> PyResult<Vec<f64>> {
    hyperbolic::exp_map_origin(&v).map(PoincareVec::into_inner).map_err(err)
}

#[pyfunction]
fn project_to_ball(x: Vec<f64>) -> PyResult<Vec<f64>> {
    hyperbolic::project_to_ball(&x).map(PoincareVec::into_inner).map_err(err)
}

#[pyfunction]
fn inner_radius(k: f64) -> PyResult<f64> {
    cones::inner_radius(k).map_err(err)
}

#[pyfunction]
fn cone_aperture(x: Vec<f64>, k: f64) -> PyResult<f64> {
    cones::cone_aperture(&point(x)?, k).map_err(err)
}

#[pyfunction]
fn cone_energy(parent: Vec<f64>, child: Vec<f64>, k: f64) -> PyResult<f64> {
    cones::cone_energy(&point(parent)?, &point(child)?, k).map_err(err)
}

fn report_dict<'py>(py: Python<'py>, r: MetricsReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    if let Some(v) = r.hierarchical_precision {
        d.set_item("hierarchical_precision", v)?;
    }
    if let Some(v) = r.hierarchical_recall {
        d.set_item("hierarchical_recall", v)?;
    }
    if let Some(v) = r.hierarchical_f1 {
        d.set_item("hierarchical_f1", v)?;
    }
    let per_class: BTreeMap<String, f64> = r.per_class_f1.into_iter().collect();
    d.set_item("per_class_f1", per_class)?;
    d.set_item("macro_f1", r.macro_f1)?;
    Ok(d)
}

#[pyfunction]
fn hierarchical_prf<'py>(py: Python<'py>, taxonomy: &PyTaxonomy, gold: Rows, pred: Rows) -> PyResult<Bound<'py, PyDict>> {
    let r = metrics::hierarchical_prf(&taxonomy.0, &to_sets(gold), &to_sets(pred)).map_err(err)?;
    report_dict(py, r)
}

#[pyfunction]
fn macro_f1<'py>(py: Python<'py>, gold: Vec<bool>, pred: Vec<bool>) -> PyResult<Bound<'py, PyDict>> {
    report_dict(py, metrics::macro_f1(&gold, &pred).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (probs, leaves, tau = 1.0))]
fn zscore_decode(probs: Vec<f64>, leaves: Vec<String>, tau: f64) -> PyResult<Vec<String>> {
    if probs.len() != leaves.len() {
        return Err(err(pertax::Error::LengthMismatch {
            left: probs.len(),
            right: leaves.len(),
        }));
    }
    Ok(hypemo::zscore_decode(&probs, tau, &leaves).into_iter().collect())
}

#[pyfunction]
fn normalize_text(s: &str) -> String {
    data::normalize_text(s)
}

#[pyfunction]
fn union_ensemble(files: Vec<Rows>) -> PyResult<Rows> {
    let files: Vec<Vec<PredictionSet>> = files.into_iter().map(to_sets).collect();
    ensemble::union_ensemble(&files).map(from_sets).map_err(err)
}

#[pyfunction]
fn weighted_bce(probs: Vec<f64>, targets: Vec<bool>, w: f64) -> PyResult<f64> {
    binary::weighted_bce(&probs, &targets, w).map_err(err)
}

#[pyfunction]
fn imbalance_weight(total: usize, positives: usize) -> PyResult<f64> {
    binary::imbalance_weight(total, positives).map_err(err)
}

#[pymodule]
fn pertax_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTaxonomy>()?;
    m.add_class::<PyLabelEmbedding>()?;
    m.add_class::<PyFeatureFile>()?;
    m.add_class::<PyHypemoModel>()?;
    m.add_class::<PyCdpModel>()?;
    m.add_class::<PyBinaryModel>()?;
    m.add_function(wrap_pyfunction!(poincare_distance, m)?)?;
    m.add_function(wrap_pyfunction!(exp_map_origin, m)?)?;
    m.add_function(wrap_pyfunction!(project_to_ball, m)?)?;
    m.add_function(wrap_pyfunction!(inner_radius, m)?)?;
    m.add_function(wrap_pyfunction!(cone_aperture, m)?)?;
    m.add_function(wrap_pyfunction!(cone_energy, m)?)?;
    m.add_function(wrap_pyfunction!(hierarchical_prf, m)?)?;
    m.add_function(wrap_pyfunction!(macro_f1, m)?)?;
    m.add_function(wrap_pyfunction!(zscore_decode, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_text, m)?)?;
    m.add_function(wrap_pyfunction!(union_ensemble, m)?)?;
    m.add_function(wrap_pyfunction!(weighted_bce, m)?)?;
    m.add_function(wrap_pyfunction!(imbalance_weight, m)?)?;
    Ok(())
}
