//! Synthetic point clouds with known structure: planted Gaussian blobs,
//! uniform low-dimensional manifolds embedded in higher dimension, and a
//! staged layer family in which class structure appears abruptly.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dataset::{ActivationMatrix, LabelSet};
use crate::error::Result;
use crate::rng::{substream, Substream};

fn rng(seed: u64) -> ChaCha8Rng {
    substream(seed, Substream::Synthetic)
}

fn normal_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

/// `count` random orthonormal vectors in `dim` dimensions (Gram-Schmidt).
fn orthonormal_frame(rng: &mut ChaCha8Rng, dim: usize, count: usize) -> Vec<Vec<f64>> {
    assert!(count <= dim, "cannot fit {count} orthonormal vectors in {dim} dimensions");
    let mut frame: Vec<Vec<f64>> = Vec::with_capacity(count);
    while frame.len() < count {
        let mut v = normal_vec(rng, dim);
        for u in &frame {
            let proj: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= proj * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-8 {
            frame.push(v.into_iter().map(|a| a / norm).collect());
        }
    }
    frame
}

/// Isotropic Gaussian blobs around `centers`, `n_per_blob` points each,
/// emitted blob by blob.
pub fn gaussian_blobs(
    centers: &[Vec<f64>],
    n_per_blob: usize,
    sigma: f64,
    seed: u64,
) -> Result<(ActivationMatrix, LabelSet)> {
    let mut rng = rng(seed);
    let dim = centers.first().map_or(0, Vec::len);
    let mut values = Vec::with_capacity(centers.len() * n_per_blob * dim);
    let mut labels = Vec::with_capacity(centers.len() * n_per_blob);
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..n_per_blob {
            values.extend(center.iter().map(|m| {
                let z: f64 = StandardNormal.sample(&mut rng);
                m + sigma * z
            }));
            labels.push(c);
        }
    }
    Ok((
        ActivationMatrix::new("blobs", labels.len(), dim, values)?,
        LabelSet::new(labels),
    ))
}

/// `n_blobs` unit-variance blobs in `dim` dimensions whose centers sit
/// `separation` apart along orthogonal axes.
pub fn planted_blobs(
    n_blobs: usize,
    dim: usize,
    n_per_blob: usize,
    separation: f64,
    seed: u64,
) -> Result<(ActivationMatrix, LabelSet)> {
    let centers: Vec<Vec<f64>> = (0..n_blobs)
        .map(|b| {
            let mut c = vec![0.0; dim];
            c[b % dim] = separation * (1 + b / dim) as f64;
            c
        })
        .collect();
    gaussian_blobs(&centers, n_per_blob, 1.0, seed)
}

/// `n` points uniform on a random `manifold_dim`-dimensional unit cube
/// embedded in `ambient_dim` dimensions.
pub fn uniform_manifold(
    manifold_dim: usize,
    ambient_dim: usize,
    n: usize,
    seed: u64,
) -> Result<ActivationMatrix> {
    let mut rng = rng(seed);
    let frame = orthonormal_frame(&mut rng, ambient_dim, manifold_dim);
    let offset = normal_vec(&mut rng, ambient_dim);
    let mut values = Vec::with_capacity(n * ambient_dim);
    for _ in 0..n {
        let mut p = offset.clone();
        for axis in &frame {
            let t: f64 = rng.random();
            p.iter_mut().zip(axis).for_each(|(a, b)| *a += t * b);
        }
        values.extend(p);
    }
    ActivationMatrix::new(format!("manifold{manifold_dim}"), n, ambient_dim, values)
}

/// Parameters of [`staged_family`]. Each stage is
/// `noise + diffuse[s] * nuisance + macro_weight[s] * macro_center + class_weight[s] * class_offset`,
/// where `noise` and `nuisance` are fixed per point across stages.
#[derive(Clone, Debug, PartialEq)]
pub struct StagedFamilyConfig {
    pub n_macro: usize,
    pub classes_per_macro: usize,
    pub n_per_class: usize,
    pub dim: usize,
    pub diffuse: Vec<f64>,
    pub macro_weight: Vec<f64>,
    pub class_weight: Vec<f64>,
    pub seed: u64,
}

impl Default for StagedFamilyConfig {
    /// Ten stages: a nuisance component fades out over the first stages, two
    /// macro groups emerge gradually in the middle, and the classes nucleate
    /// abruptly at stage 7.
    fn default() -> Self {
        StagedFamilyConfig {
            n_macro: 2,
            classes_per_macro: 3,
            n_per_class: 100,
            dim: 6,
            diffuse: vec![1.2, 0.8, 0.5, 0.3, 0.15, 0.0, 0.0, 0.0, 0.0, 0.0],
            macro_weight: vec![0.0, 0.0, 0.0, 1.5, 3.0, 4.5, 6.0, 6.0, 6.0, 6.0],
            class_weight: vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.3, 4.0, 5.0, 6.0],
            seed: 0,
        }
    }
}

impl StagedFamilyConfig {
    pub fn n_stages(&self) -> usize {
        self.diffuse.len()
    }

    pub fn nucleation_stage(&self) -> usize {
        // The stage with the largest jump in class weight.
        (1..self.n_stages())
            .max_by(|&a, &b| {
                let da = self.class_weight[a] - self.class_weight[a - 1];
                let db = self.class_weight[b] - self.class_weight[b - 1];
                da.total_cmp(&db).then(b.cmp(&a))
            })
            .unwrap_or(0)
    }
}

#[derive(Clone, Debug)]
pub struct StagedFamily {
    pub layers: Vec<ActivationMatrix>,
    pub class_labels: LabelSet,
    pub macro_labels: LabelSet,
}

/// Layer family that is diffuse at first, then splits into macro groups,
/// then into classes.
pub fn staged_family(cfg: &StagedFamilyConfig) -> Result<StagedFamily> {
    assert!(
        cfg.macro_weight.len() == cfg.n_stages() && cfg.class_weight.len() == cfg.n_stages(),
        "stage schedules must have equal length"
    );
    let mut rng = rng(cfg.seed);
    let dim = cfg.dim;
    let n_classes = cfg.n_macro * cfg.classes_per_macro;
    let n = n_classes * cfg.n_per_class;
    // Macro centers and class offsets are orthonormal directions scaled by
    // the stage weights, so every class is equidistant from its siblings.
    let frame = orthonormal_frame(&mut rng, dim, cfg.n_macro.max(cfg.classes_per_macro));
    let class_frame = orthonormal_frame(&mut rng, dim, cfg.classes_per_macro);

    let mut class_labels = Vec::with_capacity(n);
    let mut macro_labels = Vec::with_capacity(n);
    for c in 0..n_classes {
        for _ in 0..cfg.n_per_class {
            class_labels.push(c);
            macro_labels.push(c / cfg.classes_per_macro);
        }
    }
    let noise: Vec<Vec<f64>> = (0..n).map(|_| normal_vec(&mut rng, dim)).collect();
    let nuisance: Vec<Vec<f64>> = (0..n).map(|_| normal_vec(&mut rng, dim)).collect();

    let layers = (0..cfg.n_stages())
        .map(|s| {
            let mut values = Vec::with_capacity(n * dim);
            for i in 0..n {
                let g = macro_labels[i];
                let c = class_labels[i] % cfg.classes_per_macro;
                for f in 0..dim {
                    values.push(
                        noise[i][f]
                            + cfg.diffuse[s] * nuisance[i][f]
                            + cfg.macro_weight[s] * frame[g][f]
                            + cfg.class_weight[s] * class_frame[c][f],
                    );
                }
            }
            ActivationMatrix::new(format!("stage{s}"), n, dim, values)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StagedFamily {
        layers,
        class_labels: LabelSet::new(class_labels),
        macro_labels: LabelSet::new(macro_labels),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blobs_shape_and_labels() {
        let (x, y) = planted_blobs(5, 16, 20, 10.0, 1).unwrap();
        assert_eq!(x.n_points(), 100);
        assert_eq!(x.n_features(), 16);
        assert_eq!(y.n_classes(), 5);
    }

    #[test]
    fn generators_are_seeded() {
        assert_eq!(uniform_manifold(2, 10, 50, 3).unwrap(), uniform_manifold(2, 10, 50, 3).unwrap());
        assert_ne!(uniform_manifold(2, 10, 50, 3).unwrap(), uniform_manifold(2, 10, 50, 4).unwrap());
    }

    #[test]
    fn staged_family_layout() {
        let cfg = StagedFamilyConfig {
            n_per_class: 5,
            ..StagedFamilyConfig::default()
        };
        let fam = staged_family(&cfg).unwrap();
        assert_eq!(fam.layers.len(), 10);
        assert_eq!(fam.class_labels.n_classes(), 6);
        assert_eq!(fam.macro_labels.n_classes(), 2);
        assert_eq!(cfg.nucleation_stage(), 7);
    }
}
