//! `pertax`: taxonomy tools, label embedding, training, prediction,
//! ensembling and scoring. Reports go to stdout as JSON unless `--out` is
//! given.

use std::collections::HashMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;

use pertax::binary::{self, BinaryConfig, BinaryModel};
use pertax::cdp::{self, CdpConfig, CdpModel};
use pertax::cones::{self, ConeTrainConfig, LabelEmbedding};
use pertax::data;
use pertax::ensemble::union_ensemble;
use pertax::features::FeatureFile;
use pertax::hypemo::{self, HypemoConfig, HypemoModel};
use pertax::metrics::{hierarchical_prf, macro_f1};
use pertax::taxonomy::Taxonomy;

#[derive(Parser)]
#[command(name = "pertax", version, about = "Hierarchical persuasion-technique classification toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a taxonomy or expand it into a tree.
    #[command(subcommand)]
    Taxonomy(TaxonomyCmd),
    /// Train Poincaré label embeddings with entailment cones.
    #[command(subcommand)]
    EmbedLabels(EmbedCmd),
    #[command(subcommand)]
    Train(TrainCmd),
    #[command(subcommand)]
    Predict(PredictCmd),
    #[command(subcommand)]
    Ensemble(EnsembleCmd),
    #[command(subcommand)]
    Score(ScoreCmd),
    /// Label frequencies of a dataset, in leaf-index order.
    Stats {
        #[arg(long)]
        taxonomy: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum TaxonomyCmd {
    Check {
        #[arg(long)]
        taxonomy: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    ToTree {
        #[arg(long)]
        taxonomy: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum EmbedCmd {
    Train {
        #[arg(long)]
        taxonomy: PathBuf,
        /// Where to write the embedding JSON.
        #[arg(long)]
        label_emb: PathBuf,
        /// JSON file with any `ConeTrainConfig` fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        dim: Option<usize>,
        #[command(flatten)]
        common: Common,
        /// Training report destination.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
}

#[derive(Args)]
struct Inputs {
    #[arg(long)]
    features: PathBuf,
    /// Concatenated after `--features`, row by row.
    #[arg(long)]
    image_features: Option<PathBuf>,
}

#[derive(Subcommand)]
enum TrainCmd {
    Hypemo {
        #[arg(long)]
        taxonomy: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        label_emb: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Cdp {
        #[arg(long)]
        taxonomy: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        inputs: Inputs,
        /// Feature file keyed by leaf label.
        #[arg(long)]
        definitions: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        lambda_aux: Option<f64>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Binary {
        /// JSONL of `{"id", "label": 0|1}`.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        image_features: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum PredictCmd {
    Hypemo {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        inputs: Inputs,
        /// Overrides the threshold stored in the model.
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Cdp {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Binary {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        image_features: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum EnsembleCmd {
    Union {
        /// Prediction files; give the flag once per file.
        #[arg(long = "pred", required = true)]
        preds: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ScoreCmd {
    Hier {
        #[arg(long)]
        taxonomy: PathBuf,
        /// Dataset or prediction JSONL holding the gold labels.
        #[arg(long, alias = "data")]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Binary {
        /// JSONL of `{"id", "label": 0|1}`.
        #[arg(long, alias = "data")]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Taxonomy(TaxonomyCmd::Check { taxonomy, out }) => {
            let t = load_taxonomy(&taxonomy)?;
            let tree = t.dag_to_tree();
            let leaves: Vec<_> = t
                .leaf_set()
                .into_iter()
                .enumerate()
                .map(|(i, l)| json!({ "index": i, "label": l }))
                .collect();
            emit_json(
                out.as_deref(),
                &json!({
                    "valid": true,
                    "root": t.root(),
                    "nodes": t.len(),
                    "edges": t.edges().count(),
                    "leaves": leaves,
                    "tree_nodes": tree.len(),
                }),
            )
        }
        Command::Taxonomy(TaxonomyCmd::ToTree { taxonomy, out }) => {
            let tree = load_taxonomy(&taxonomy)?.dag_to_tree();
            let nodes: Vec<_> = tree
                .nodes()
                .iter()
                .map(|n| {
                    json!({
                        "id": n.id,
                        "label": n.label,
                        "parent": n.parent.map(|p| tree.nodes()[p].id.clone()),
                        "depth": n.depth,
                    })
                })
                .collect();
            emit_json(out.as_deref(), &json!({ "nodes": nodes }))
        }
        Command::EmbedLabels(EmbedCmd::Train {
            taxonomy,
            label_emb,
            config,
            dim,
            common,
            out,
        }) => {
            let tree = load_taxonomy(&taxonomy)?.dag_to_tree();
            let mut cfg: ConeTrainConfig = load_config(config.as_deref())?;
            if let Some(d) = dim {
                cfg.dim = d;
            }
            override_common(&common, &mut cfg.seed, &mut cfg.epochs, &mut cfg.learning_rate);
            let (emb, report) = cones::train_label_embeddings_with_report(&tree, &cfg)?;
            emb.write(&label_emb)
                .with_context(|| format!("writing {}", label_emb.display()))?;
            let energies = emb.edge_energies(&tree)?;
            let satisfied = energies.iter().filter(|&&e| e < cfg.margin).count();
            emit_json(
                out.as_deref(),
                &json!({
                    "config": cfg,
                    "tree_nodes": tree.len(),
                    "edges": energies.len(),
                    "edges_below_margin": satisfied,
                    "max_edge_energy": energies.iter().copied().fold(0.0, f64::max),
                    "final_loss": report.epoch_losses.last(),
                }),
            )
        }
        Command::Train(TrainCmd::Hypemo {
            taxonomy,
            data: data_path,
            inputs,
            label_emb,
            model,
            tau,
            config,
            common,
            out,
        }) => {
            let t = load_taxonomy(&taxonomy)?;
            let samples = data::read_dataset(&data_path, Some(&t))?;
            let features = load_inputs(&inputs)?;
            let rows = data::attach_features(&samples, &features)?;
            let (exploded, dropped) = hypemo::explode_multilabel(&rows);
            let emb = LabelEmbedding::read(&label_emb)
                .with_context(|| format!("reading {}", label_emb.display()))?;
            let mut cfg: HypemoConfig = load_config(config.as_deref())?;
            if let Some(x) = tau {
                cfg.tau = x;
            }
            override_common(&common, &mut cfg.seed, &mut cfg.epochs, &mut cfg.learning_rate);
            let m = hypemo::train_hypemo(&exploded, &t.leaf_set(), &emb, &cfg)?;
            m.save(&model)?;
            emit_json(
                out.as_deref(),
                &json!({
                    "config": cfg,
                    "samples": samples.len(),
                    "training_rows": exploded.len(),
                    "dropped_unlabelled": dropped,
                }),
            )
        }
        Command::Train(TrainCmd::Cdp {
            taxonomy,
            data: data_path,
            inputs,
            definitions,
            model,
            lambda_aux,
            config,
            common,
            out,
        }) => {
            let t = load_taxonomy(&taxonomy)?;
            let samples = data::read_dataset(&data_path, Some(&t))?;
            let features = load_inputs(&inputs)?;
            let rows = data::attach_features(&samples, &features)?;
            let defs = read_features(&definitions)?;
            let mut cfg: CdpConfig = load_config(config.as_deref())?;
            if let Some(l) = lambda_aux {
                cfg.lambda_aux = l;
            }
            override_common(&common, &mut cfg.seed, &mut cfg.epochs, &mut cfg.learning_rate);
            let m = cdp::train_cdp(&rows, &t.leaf_set(), &defs, &cfg)?;
            m.save(&model)?;
            emit_json(out.as_deref(), &json!({ "config": cfg, "samples": samples.len() }))
        }
        Command::Train(TrainCmd::Binary {
            data: data_path,
            features,
            image_features,
            model,
            config,
            common,
            out,
        }) => {
            let labels = data::read_binary_labels(&data_path)?;
            let text = read_features(&features)?;
            let image = read_features(&image_features)?;
            let mut cfg: BinaryConfig = load_config(config.as_deref())?;
            override_common(&common, &mut cfg.seed, &mut cfg.epochs, &mut cfg.learning_rate);
            let m = binary::train_binary(&text, &image, &labels, &cfg)?;
            m.save(&model)?;
            let positives = labels.iter().filter(|l| l.1).count();
            emit_json(
                out.as_deref(),
                &json!({
                    "config": cfg,
                    "samples": labels.len(),
                    "positives": positives,
                    "class_weight": m.weight,
                }),
            )
        }
        Command::Predict(PredictCmd::Hypemo { model, inputs, tau, out }) => {
            let mut m = HypemoModel::load(&model).with_context(|| format!("reading {}", model.display()))?;
            if let Some(x) = tau {
                m.tau = x;
            }
            let preds = hypemo::predict_hier(&m, &load_inputs(&inputs)?)?;
            emit_jsonl(out.as_deref(), &preds)
        }
        Command::Predict(PredictCmd::Cdp { model, inputs, out }) => {
            let m = CdpModel::load(&model).with_context(|| format!("reading {}", model.display()))?;
            let preds = cdp::predict_cdp(&m, &load_inputs(&inputs)?)?;
            emit_jsonl(out.as_deref(), &preds)
        }
        Command::Predict(PredictCmd::Binary {
            model,
            features,
            image_features,
            out,
        }) => {
            let m = BinaryModel::load(&model).with_context(|| format!("reading {}", model.display()))?;
            let preds = binary::predict_binary(&m, &read_features(&features)?, &read_features(&image_features)?)?;
            emit_jsonl(out.as_deref(), &preds)
        }
        Command::Ensemble(EnsembleCmd::Union { preds, out }) => {
            let files = preds
                .iter()
                .map(|p| data::read_predictions(p).with_context(|| format!("reading {}", p.display())))
                .collect::<Result<Vec<_>>>()?;
            emit_jsonl(out.as_deref(), &union_ensemble(&files)?)
        }
        Command::Score(ScoreCmd::Hier {
            taxonomy,
            gold,
            pred,
            out,
        }) => {
            let t = load_taxonomy(&taxonomy)?;
            let g = data::read_predictions(&gold)?;
            let p = data::read_predictions(&pred)?;
            emit_json(out.as_deref(), &hierarchical_prf(&t, &g, &p)?)
        }
        Command::Score(ScoreCmd::Binary { gold, pred, out }) => {
            let g = data::read_binary_labels(&gold)?;
            let p = data::read_binary_predictions(&pred)?;
            let by_id: HashMap<&str, bool> = p.iter().map(|r| (r.id.as_str(), r.label == 1)).collect();
            let mut missing: Vec<String> = g
                .iter()
                .filter(|(id, _)| !by_id.contains_key(id.as_str()))
                .map(|(id, _)| id.clone())
                .collect();
            let gold_ids: std::collections::HashSet<&str> = g.iter().map(|(id, _)| id.as_str()).collect();
            missing.extend(p.iter().filter(|r| !gold_ids.contains(r.id.as_str())).map(|r| r.id.clone()));
            if !missing.is_empty() {
                missing.sort();
                return Err(pertax::Error::IdMismatch(missing).into());
            }
            let gy: Vec<bool> = g.iter().map(|(_, y)| *y).collect();
            let py: Vec<bool> = g.iter().map(|(id, _)| by_id[id.as_str()]).collect();
            emit_json(out.as_deref(), &macro_f1(&gy, &py)?)
        }
        Command::Stats { taxonomy, data: data_path, out } => {
            let t = load_taxonomy(&taxonomy)?;
            let samples = data::read_dataset(&data_path, Some(&t))?;
            emit_json(out.as_deref(), &data::stats(&samples, &t)?)
        }
    }
}

fn load_taxonomy(path: &Path) -> Result<Taxonomy> {
    Taxonomy::from_path(path).with_context(|| format!("loading taxonomy {}", path.display()))
}

fn read_features(path: &Path) -> Result<FeatureFile> {
    FeatureFile::read(path).with_context(|| format!("reading features {}", path.display()))
}

fn load_inputs(inputs: &Inputs) -> Result<FeatureFile> {
    let text = read_features(&inputs.features)?;
    match &inputs.image_features {
        Some(p) => Ok(text.concat(&read_features(p)?)?),
        None => Ok(text),
    }
}

fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
        }
    }
}

fn override_common(c: &Common, seed: &mut u64, epochs: &mut usize, lr: &mut f64) {
    if let Some(s) = c.seed {
        *seed = s;
    }
    if let Some(e) = c.epochs {
        *epochs = e;
    }
    if let Some(l) = c.lr {
        *lr = l;
    }
}

fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_out(out, text.as_bytes())
}

fn emit_jsonl<T: Serialize>(out: Option<&Path>, rows: &[T]) -> Result<()> {
    let mut buf = Vec::new();
    data::write_jsonl_to(&mut buf, rows)?;
    write_out(out, &buf)
}

fn write_out(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => fs::write(p, bytes).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
            Ok(())
        }
    }
}
