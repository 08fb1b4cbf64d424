//! Exact Euclidean k-nearest-neighbor graphs.
//!
//! Construction is brute force. Candidates are ranked by the key
//! `(squared distance, index)`, so ties always resolve to the smaller index
//! and the output does not depend on the worker count or on blocking.
//! Square roots are taken once, after selection.

use std::cmp::Ordering;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::dataset::ActivationMatrix;
use crate::error::{Error, Result};
use crate::npy::{self, ArrayData, NpyArray};

/// Query rows processed together so candidate rows are reused from cache.
const QUERY_BLOCK: usize = 16;

/// Per-point ordered k-neighbor lists with their Euclidean distances.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborGraph {
    layer_id: String,
    k: usize,
    n_points: usize,
    neighbors: Vec<usize>,
    distances: Vec<f64>,
}

#[inline]
pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Euclidean distance, bit-identical to the distances stored in graphs.
#[inline]
pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    squared_distance(a, b).sqrt()
}

#[inline]
fn by_distance_then_index(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

impl NeighborGraph {
    /// Assembles a graph from explicit rows, checking every structural invariant.
    pub fn from_parts(
        layer_id: impl Into<String>,
        neighbors: Vec<Vec<usize>>,
        distances: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let n_points = neighbors.len();
        let k = neighbors.first().map_or(0, Vec::len);
        if n_points < 2 || k == 0 || k >= n_points {
            return Err(Error::InvalidParameter(format!(
                "graph needs N >= 2 and 1 <= k < N (N = {n_points}, k = {k})"
            )));
        }
        if distances.len() != n_points {
            return Err(Error::LengthMismatch {
                expected: n_points,
                found: distances.len(),
            });
        }
        for (i, (nb, ds)) in neighbors.iter().zip(&distances).enumerate() {
            if nb.len() != k || ds.len() != k {
                return Err(Error::InvalidParameter(format!("row {i} does not have {k} entries")));
            }
            if nb.iter().any(|&j| j >= n_points || j == i) {
                return Err(Error::InvalidParameter(format!(
                    "row {i} has an out-of-range index or a self-loop"
                )));
            }
            let mut seen = nb.clone();
            seen.sort_unstable();
            seen.dedup();
            if seen.len() != k {
                return Err(Error::InvalidParameter(format!("row {i} repeats a neighbor")));
            }
            if ds.iter().any(|d| !(*d >= 0.0) || !d.is_finite()) || ds.windows(2).any(|w| w[0] > w[1]) {
                return Err(Error::InvalidParameter(format!(
                    "row {i} distances must be finite, non-negative and ascending"
                )));
            }
        }
        Ok(NeighborGraph {
            layer_id: layer_id.into(),
            k,
            n_points,
            neighbors: neighbors.concat(),
            distances: distances.concat(),
        })
    }

    pub fn layer_id(&self) -> &str {
        &self.layer_id
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i * self.k..(i + 1) * self.k]
    }

    pub fn distances(&self, i: usize) -> &[f64] {
        &self.distances[i * self.k..(i + 1) * self.k]
    }

    /// Keeps the first `k` neighbors of every row.
    pub fn truncate(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.k {
            return Err(Error::InvalidParameter(format!(
                "cannot truncate a k = {} graph to k = {k}",
                self.k
            )));
        }
        let mut neighbors = Vec::with_capacity(self.n_points * k);
        let mut distances = Vec::with_capacity(self.n_points * k);
        for i in 0..self.n_points {
            neighbors.extend_from_slice(&self.neighbors(i)[..k]);
            distances.extend_from_slice(&self.distances(i)[..k]);
        }
        Ok(NeighborGraph {
            layer_id: self.layer_id.clone(),
            k,
            n_points: self.n_points,
            neighbors,
            distances,
        })
    }
}

fn check_k(n_points: usize, k: usize) -> Result<()> {
    if n_points < 2 {
        return Err(Error::InvalidParameter(format!(
            "kNN graph needs at least 2 points, got {n_points}"
        )));
    }
    if k < 1 || k > n_points - 1 {
        return Err(Error::InvalidParameter(format!(
            "k = {k} out of range 1..={}",
            n_points - 1
        )));
    }
    Ok(())
}

/// Builds the exact kNN graph of `x`.
pub fn build_knn_graph(x: &ActivationMatrix, k: usize) -> Result<NeighborGraph> {
    let n = x.n_points();
    check_k(n, k)?;

    let blocks: Vec<(Vec<usize>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .step_by(QUERY_BLOCK)
        .map(|start| {
            let end = (start + QUERY_BLOCK).min(n);
            let mut candidates: Vec<Vec<(f64, usize)>> =
                (start..end).map(|_| Vec::with_capacity(n - 1)).collect();
            for j in 0..n {
                let cand = x.row(j);
                for (q, buf) in (start..end).zip(candidates.iter_mut()) {
                    if q != j {
                        buf.push((squared_distance(x.row(q), cand), j));
                    }
                }
            }
            let mut nb = Vec::with_capacity((end - start) * k);
            let mut ds = Vec::with_capacity((end - start) * k);
            for mut buf in candidates {
                if k < buf.len() {
                    buf.select_nth_unstable_by(k - 1, by_distance_then_index);
                    buf.truncate(k);
                }
                buf.sort_unstable_by(by_distance_then_index);
                for (d2, j) in buf {
                    nb.push(j);
                    ds.push(d2.sqrt());
                }
            }
            (nb, ds)
        })
        .collect();

    let mut neighbors = Vec::with_capacity(n * k);
    let mut distances = Vec::with_capacity(n * k);
    for (nb, ds) in blocks {
        neighbors.extend(nb);
        distances.extend(ds);
    }
    Ok(NeighborGraph {
        layer_id: x.layer_id().to_string(),
        k,
        n_points: n,
        neighbors,
        distances,
    })
}

/// Number of rows in which each point appears as a neighbor.
pub fn in_degree(g: &NeighborGraph) -> Vec<usize> {
    let mut counts = vec![0usize; g.n_points()];
    for &j in &g.neighbors {
        counts[j] += 1;
    }
    counts
}

/// The `top` points with the largest in-degree, as `(point, in_degree)`,
/// descending; ties go to the smaller index.
pub fn top_hubs(g: &NeighborGraph, top: usize) -> Vec<(usize, usize)> {
    let mut ranked: Vec<(usize, usize)> = in_degree(g).into_iter().enumerate().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(top);
    ranked
}

pub fn mean_first_nn_distance(g: &NeighborGraph) -> f64 {
    let total: f64 = (0..g.n_points()).map(|i| g.distances(i)[0]).sum();
    total / g.n_points() as f64
}

/// SHA-256 of the shape and little-endian payload of `x`, as hex.
pub fn content_hash(x: &ActivationMatrix) -> String {
    let mut hasher = Sha256::new();
    hasher.update((x.n_points() as u64).to_le_bytes());
    hasher.update((x.n_features() as u64).to_le_bytes());
    for v in x.values() {
        hasher.update(v.to_le_bytes());
    }
    hex::encode(hasher.finalize())
}

fn cache_paths(dir: &Path, key: &str) -> (PathBuf, PathBuf, PathBuf) {
    (
        dir.join(format!("{key}.neighbors.npy")),
        dir.join(format!("{key}.distances.npy")),
        dir.join(format!("{key}.meta")),
    )
}

/// Writes `g` under `dir` keyed by the content hash of its source matrix.
/// Neighbors go to an `N×k` `i8` container, distances to an `N×k` `f8`
/// container, and a sidecar line records `k` and the hash.
pub fn save_graph_cache(dir: &Path, g: &NeighborGraph, x_hash: &str) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (nb_path, ds_path, meta_path) = cache_paths(dir, x_hash);
    let shape = vec![g.n_points, g.k];
    npy::write_npy_file(
        &nb_path,
        &NpyArray::from_i64(shape.clone(), g.neighbors.iter().map(|&j| j as i64).collect())?,
    )?;
    npy::write_npy_file(&ds_path, &NpyArray::from_f64(shape, g.distances.clone())?)?;
    fs::write(&meta_path, format!("k={} sha256={x_hash}\n", g.k))
        .map_err(|e| Error::io(&meta_path, e))
}

/// Loads a cached graph for `x_hash` if one exists with at least `k`
/// neighbors, truncated to `k`.
pub fn load_graph_cache(
    dir: &Path,
    layer_id: &str,
    x_hash: &str,
    k: usize,
) -> Result<Option<NeighborGraph>> {
    let (nb_path, ds_path, meta_path) = cache_paths(dir, x_hash);
    let Ok(meta) = fs::read_to_string(&meta_path) else {
        return Ok(None);
    };
    let mut cached_k = None;
    let mut hash_ok = false;
    for field in meta.split_whitespace() {
        if let Some(v) = field.strip_prefix("k=") {
            cached_k = v.parse::<usize>().ok();
        } else if let Some(v) = field.strip_prefix("sha256=") {
            hash_ok = v == x_hash;
        }
    }
    match cached_k {
        Some(ck) if hash_ok && ck >= k => {}
        _ => return Ok(None),
    }
    let nb = npy::read_npy_file(&nb_path)?;
    let ds = npy::read_npy_file(&ds_path)?;
    let (ArrayData::I64(nb_vals), ArrayData::F64(ds_vals)) = (nb.data, ds.data) else {
        return Err(Error::Format("graph cache has unexpected element types".into()));
    };
    let [n, ck] = nb.shape[..] else {
        return Err(Error::Format("graph cache neighbors must be 2-D".into()));
    };
    if ds.shape != nb.shape {
        return Err(Error::Format("graph cache arrays disagree in shape".into()));
    }
    let rows: Vec<Vec<usize>> = nb_vals
        .chunks_exact(ck)
        .map(|r| r.iter().map(|&j| j as usize).collect())
        .collect();
    let dists: Vec<Vec<f64>> = ds_vals.chunks_exact(ck).map(<[f64]>::to_vec).collect();
    debug_assert_eq!(rows.len(), n);
    let g = NeighborGraph::from_parts(layer_id, rows, dists)?;
    Ok(Some(if ck == k { g } else { g.truncate(k)? }))
}
