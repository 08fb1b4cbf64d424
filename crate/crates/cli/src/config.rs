//! Pipeline configuration: a TOML file with one section per command, and
//! command-line overrides applied on top.

use std::path::{Path, PathBuf};

use denstopo::dataset::{DEFAULT_CKA_BANDWIDTH_FRACTION, DEFAULT_K, DEFAULT_Z};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LayerFile {
    pub tag: String,
    pub path: PathBuf,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SampleSection {
    pub n_classes: usize,
    pub n_per_class: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct OverlapSection {
    pub sweep_k: Vec<usize>,
    pub sweep_n: Vec<usize>,
    /// Layers used as fixed references, besides the output layer.
    pub checkpoints: Vec<String>,
    pub histogram_bins: usize,
}

impl Default for OverlapSection {
    fn default() -> Self {
        OverlapSection {
            sweep_k: Vec::new(),
            sweep_n: Vec::new(),
            checkpoints: Vec::new(),
            histogram_bins: 20,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterSection {
    pub z: f64,
    pub sweep_z: Vec<f64>,
    /// Smallest class count listed by name in composition reports.
    pub min_count: Option<usize>,
}

impl Default for ClusterSection {
    fn default() -> Self {
        ClusterSection {
            z: DEFAULT_Z,
            sweep_z: Vec::new(),
            min_count: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsSection {
    pub cka_fractions: Vec<f64>,
    /// Gaussian and linear CKA use at most this many points.
    pub cka_max_points: usize,
    pub n_shuffles: usize,
    pub hubs: usize,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        DiagnosticsSection {
            cka_fractions: vec![0.1, DEFAULT_CKA_BANDWIDTH_FRACTION, 0.5, 1.0, 2.0],
            cka_max_points: 5000,
            n_shuffles: 100,
            hubs: 10,
        }
    }
}

/// Everything a run depends on. The output directory, thread count and cache
/// switch do not change results and are left out of the serialized form.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub k: usize,
    pub labels: Option<PathBuf>,
    pub macro_labels: Option<PathBuf>,
    /// Image stack for the entropy diagnostic.
    pub images: Option<PathBuf>,
    pub sample: Option<SampleSection>,
    #[serde(rename = "layer")]
    pub layers: Vec<LayerFile>,
    pub overlap: OverlapSection,
    pub cluster: ClusterSection,
    pub diagnostics: DiagnosticsSection,
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing)]
    pub cache: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            k: DEFAULT_K,
            labels: None,
            macro_labels: None,
            images: None,
            sample: None,
            layers: Vec::new(),
            overlap: OverlapSection::default(),
            cluster: ClusterSection::default(),
            diagnostics: DiagnosticsSection::default(),
            out: None,
            cache: false,
        }
    }
}

/// Values given on the command line; `None` leaves the file value in place.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub k: Option<usize>,
    pub z: Option<f64>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub sweep_k: Option<Vec<usize>>,
    pub sweep_z: Option<Vec<f64>>,
    pub sweep_n: Option<Vec<usize>>,
    pub layers: Vec<LayerFile>,
    pub labels: Option<PathBuf>,
    pub macro_labels: Option<PathBuf>,
    pub images: Option<PathBuf>,
    pub cache: bool,
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl PipelineConfig {
    /// Parses a config file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: PipelineConfig = toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for layer in &mut cfg.layers {
            let mut p = Some(layer.path.clone());
            resolve(base, &mut p);
            layer.path = p.unwrap_or_default();
        }
        resolve(base, &mut cfg.labels);
        resolve(base, &mut cfg.macro_labels);
        resolve(base, &mut cfg.images);
        resolve(base, &mut cfg.out);
        Ok(cfg)
    }

    /// Applies command-line values. Layers given on the command line replace
    /// the configured list.
    pub fn apply(&mut self, o: Overrides) {
        if let Some(k) = o.k {
            self.k = k;
        }
        if let Some(z) = o.z {
            self.cluster.z = z;
        }
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(v) = o.sweep_k {
            self.overlap.sweep_k = v;
        }
        if let Some(v) = o.sweep_n {
            self.overlap.sweep_n = v;
        }
        if let Some(v) = o.sweep_z {
            self.cluster.sweep_z = v;
        }
        if !o.layers.is_empty() {
            self.layers = o.layers;
        }
        self.out = o.out.or(self.out.take());
        self.labels = o.labels.or(self.labels.take());
        self.macro_labels = o.macro_labels.or(self.macro_labels.take());
        self.images = o.images.or(self.images.take());
        self.cache |= o.cache;
    }

    /// Checks everything that does not need the data.
    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |m: String| Err(CliError::Usage(m));
        if self.layers.is_empty() {
            return usage("no layers given; use --layer TAG=PATH or [[layer]] entries".into());
        }
        let mut tags: Vec<&str> = self.layers.iter().map(|l| l.tag.as_str()).collect();
        tags.sort_unstable();
        if tags.windows(2).any(|w| w[0] == w[1]) {
            return usage("layer tags must be unique".into());
        }
        if tags.iter().any(|t| t.is_empty() || t.contains(['/', '\\', ','])) {
            return usage("layer tags must be nonempty and free of '/', '\\' and ','".into());
        }
        if self.k == 0 || self.overlap.sweep_k.contains(&0) {
            return usage("k must be positive".into());
        }
        if !(self.cluster.z >= 0.0) || self.cluster.sweep_z.iter().any(|z| !(*z >= 0.0)) {
            return usage("Z must be >= 0".into());
        }
        if self.overlap.histogram_bins == 0 {
            return usage("histogram_bins must be positive".into());
        }
        if self.diagnostics.cka_fractions.iter().any(|f| !(*f > 0.0)) {
            return usage("CKA bandwidth fractions must be positive".into());
        }
        if self.diagnostics.cka_max_points < 4 {
            return usage("cka_max_points must be at least 4".into());
        }
        if self.diagnostics.n_shuffles == 0 {
            return usage("n_shuffles must be positive".into());
        }
        for c in &self.overlap.checkpoints {
            if !self.layers.iter().any(|l| &l.tag == c) {
                return usage(format!("checkpoint '{c}' is not a layer tag"));
            }
        }
        if !self.overlap.sweep_n.is_empty() && self.labels.is_none() {
            return usage("an N sweep needs labels to keep the class ratio".into());
        }
        Ok(())
    }

    /// Canonical JSON of the result-relevant settings.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// SHA-256 of [`Self::canonical_json`], hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    /// Largest neighbor count any stage asks for.
    pub fn k_max(&self) -> usize {
        self.overlap.sweep_k.iter().copied().chain([self.k]).max().unwrap_or(self.k)
    }
}

/// Parses `TAG=PATH`.
pub fn parse_layer(s: &str) -> Result<LayerFile, String> {
    let (tag, path) = s
        .split_once('=')
        .ok_or_else(|| format!("expected TAG=PATH, got '{s}'"))?;
    Ok(LayerFile {
        tag: tag.to_string(),
        path: PathBuf::from(path),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_sections_and_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(
            &path,
            r#"
seed = 4
k = 12
labels = "y.npy"

[[layer]]
tag = "a"
path = "a.npy"

[[layer]]
tag = "b"
path = "/abs/b.npy"

[cluster]
z = 2.0
sweep_z = [1.0, 2.0]

[overlap]
sweep_k = [5, 40]
"#,
        )
        .unwrap();
        let mut cfg = PipelineConfig::from_file(&path).unwrap();
        assert_eq!(cfg.layers[0].path, dir.path().join("a.npy"));
        assert_eq!(cfg.layers[1].path, PathBuf::from("/abs/b.npy"));
        assert_eq!(cfg.labels, Some(dir.path().join("y.npy")));
        assert_eq!(cfg.k_max(), 40);
        let before = cfg.hash();
        cfg.apply(Overrides {
            z: Some(3.0),
            out: Some("elsewhere".into()),
            ..Overrides::default()
        });
        assert_eq!(cfg.cluster.z, 3.0);
        assert_eq!(cfg.k, 12);
        assert_ne!(cfg.hash(), before);
        cfg.validate().unwrap();
    }

    #[test]
    fn output_location_does_not_change_the_hash() {
        let mut a = PipelineConfig {
            layers: vec![parse_layer("x=x.npy").unwrap()],
            ..PipelineConfig::default()
        };
        let h = a.hash();
        a.out = Some("/tmp/elsewhere".into());
        a.cache = true;
        assert_eq!(a.hash(), h);
    }

    #[test]
    fn invalid_settings() {
        assert!(PipelineConfig::default().validate().is_err());
        let ok = PipelineConfig {
            layers: vec![parse_layer("x=x.npy").unwrap()],
            ..PipelineConfig::default()
        };
        ok.validate().unwrap();
        let dup = PipelineConfig {
            layers: vec![parse_layer("x=a").unwrap(), parse_layer("x=b").unwrap()],
            ..ok.clone()
        };
        assert!(dup.validate().is_err());
        let mut neg = ok.clone();
        neg.cluster.z = -1.0;
        assert!(neg.validate().is_err());
        let mut ck = ok.clone();
        ck.overlap.checkpoints = vec!["nope".into()];
        assert!(ck.validate().is_err());
        let mut sn = ok;
        sn.overlap.sweep_n = vec![100];
        assert!(sn.validate().is_err());
        assert!(parse_layer("no-separator").is_err());
        assert!(toml::from_str::<PipelineConfig>("bogus = 1").is_err());
    }
}
