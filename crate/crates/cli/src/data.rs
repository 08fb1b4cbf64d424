//! Inputs of a run, loaded once and shared by every command.

use std::collections::BTreeMap;
use std::path::Path;

use denstopo::dataset::{load_activation_matrix, load_labels, stratified_subsample, SampleSpec};
use denstopo::knn::{build_knn_graph, content_hash, load_graph_cache, save_graph_cache};
use denstopo::{ActivationMatrix, LabelSet, NeighborGraph};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;
use crate::error::{CliError, StageContext};

pub struct RunData {
    pub layers: Vec<ActivationMatrix>,
    pub labels: Option<LabelSet>,
    pub macro_labels: Option<LabelSet>,
    /// Original row of every analysed point.
    pub source_index: Vec<usize>,
    /// Input path to SHA-256 of the file bytes.
    pub input_hashes: BTreeMap<String, String>,
    graphs: Option<Vec<NeighborGraph>>,
}

pub fn file_hash(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Stage {
        stage: "load".into(),
        source: denstopo::Error::Io {
            path: path.to_path_buf(),
            source: e,
        },
    })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl RunData {
    pub fn load(cfg: &PipelineConfig) -> Result<Self, CliError> {
        let mut input_hashes = BTreeMap::new();
        let mut layers = Vec::with_capacity(cfg.layers.len());
        for lf in &cfg.layers {
            let stage = format!("load layer {}", lf.tag);
            let x = load_activation_matrix(&lf.path).stage(&stage)?.with_layer_id(&lf.tag);
            if let Some(first) = layers.first() {
                let first: &ActivationMatrix = first;
                if first.n_points() != x.n_points() {
                    return Err(denstopo::Error::LengthMismatch {
                        expected: first.n_points(),
                        found: x.n_points(),
                    })
                    .stage(stage);
                }
            }
            input_hashes.insert(lf.path.display().to_string(), file_hash(&lf.path)?);
            layers.push(x);
        }
        let n = layers[0].n_points();
        let mut read_labels = |path: &Option<std::path::PathBuf>, what: &str| -> Result<Option<LabelSet>, CliError> {
            let Some(path) = path else { return Ok(None) };
            let y = load_labels(path).stage(format!("load {what}"))?;
            y.check_len(n).stage(format!("load {what}"))?;
            input_hashes.insert(path.display().to_string(), file_hash(path)?);
            Ok(Some(y))
        };
        let mut labels = read_labels(&cfg.labels, "labels")?;
        let mut macro_labels = read_labels(&cfg.macro_labels, "macro labels")?;
        let mut source_index: Vec<usize> = (0..n).collect();

        if let Some(sample) = cfg.sample {
            let y = labels
                .as_ref()
                .ok_or_else(|| CliError::Usage("sampling needs labels".into()))?;
            let spec = SampleSpec {
                n_classes_kept: sample.n_classes,
                n_per_class: sample.n_per_class,
                seed: cfg.seed,
            };
            let mut kept = None;
            for x in &mut layers {
                let (xs, ys, index) = stratified_subsample(x, y, &spec).stage("subsample")?;
                *x = xs;
                kept = Some((ys, index));
            }
            let (ys, index) = kept.expect("at least one layer");
            macro_labels = macro_labels.map(|m| m.select(&index));
            labels = Some(ys);
            source_index = index;
        }
        Ok(RunData {
            layers,
            labels,
            macro_labels,
            source_index,
            input_hashes,
            graphs: None,
        })
    }

    pub fn n_points(&self) -> usize {
        self.layers[0].n_points()
    }

    /// One graph per layer with `k` neighbors, built once and truncated on
    /// later calls. With a cache directory, graphs are read from and written
    /// to it keyed by the content hash of each matrix.
    pub fn graphs(&mut self, k_max: usize, cache: Option<&Path>) -> Result<&[NeighborGraph], CliError> {
        if self.graphs.as_ref().is_none_or(|g| g[0].k() < k_max) {
            let built = self
                .layers
                .par_iter()
                .map(|x| {
                    let stage = format!("knn graph {}", x.layer_id());
                    let hash = cache.map(|_| content_hash(x));
                    if let (Some(dir), Some(hash)) = (cache, &hash) {
                        if let Some(g) = load_graph_cache(dir, x.layer_id(), hash, k_max).stage(&stage)? {
                            return Ok(g);
                        }
                    }
                    let g = build_knn_graph(x, k_max).stage(&stage)?;
                    if let (Some(dir), Some(hash)) = (cache, &hash) {
                        save_graph_cache(dir, &g, hash).stage(&stage)?;
                    }
                    Ok(g)
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            self.graphs = Some(built);
        }
        Ok(self.graphs.as_deref().expect("graphs were just built"))
    }

    /// Graphs truncated to `k`.
    pub fn graphs_at(&mut self, k: usize, k_max: usize, cache: Option<&Path>) -> Result<Vec<NeighborGraph>, CliError> {
        self.graphs(k_max, cache)?
            .iter()
            .map(|g| if g.k() == k { Ok(g.clone()) } else { g.truncate(k).stage("knn graph") })
            .collect()
    }
}
