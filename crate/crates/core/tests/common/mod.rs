//! Brute-force reference implementations used as test oracles. Each one
//! works from a dense distance or adjacency matrix and shares no code with
//! the library beyond its data types.
#![allow(dead_code)]

use std::collections::BTreeMap;

use denstopo::dataset::ActivationMatrix;
use denstopo::knn::NeighborGraph;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize) -> ActivationMatrix {
    let values = (0..n * d).map(|_| StandardNormal.sample(rng)).collect();
    ActivationMatrix::new("x", n, d, values).unwrap()
}

/// Matrix with coordinates on a coarse integer lattice, so distance ties are common.
pub fn lattice_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize) -> ActivationMatrix {
    let values = (0..n * d).map(|_| rng.random_range(0..3) as f64).collect();
    ActivationMatrix::new("x", n, d, values).unwrap()
}

/// Euclidean distance summed feature by feature in index order.
pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for f in 0..a.len() {
        let t = a[f] - b[f];
        s += t * t;
    }
    s.sqrt()
}

pub fn distance_matrix(x: &ActivationMatrix) -> Vec<Vec<f64>> {
    let n = x.n_points();
    (0..n)
        .map(|i| (0..n).map(|j| distance(x.row(i), x.row(j))).collect())
        .collect()
}

/// Every other point of row `i`, ordered by distance then index.
pub fn sorted_row(dm: &[Vec<f64>], i: usize) -> Vec<usize> {
    let mut row: Vec<usize> = (0..dm.len()).filter(|&j| j != i).collect();
    row.sort_by(|&a, &b| dm[i][a].partial_cmp(&dm[i][b]).unwrap().then(a.cmp(&b)));
    row
}

/// kNN by sorting the full candidate list of every point.
pub fn naive_knn(x: &ActivationMatrix, k: usize) -> (Vec<Vec<usize>>, Vec<Vec<f64>>) {
    let n = x.n_points();
    let mut nbrs = Vec::with_capacity(n);
    let mut dists = Vec::with_capacity(n);
    for i in 0..n {
        let mut cands: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| {
                let mut s = 0.0;
                for f in 0..x.n_features() {
                    let t = x.row(i)[f] - x.row(j)[f];
                    s += t * t;
                }
                (s, j)
            })
            .collect();
        cands.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        nbrs.push(cands[..k].iter().map(|c| c.1).collect());
        dists.push(cands[..k].iter().map(|c| c.0.sqrt()).collect());
    }
    (nbrs, dists)
}

pub fn graph_rows(g: &NeighborGraph) -> (Vec<Vec<usize>>, Vec<Vec<f64>>) {
    (0..g.n_points())
        .map(|i| (g.neighbors(i).to_vec(), g.distances(i).to_vec()))
        .unzip()
}

/// Dense 0/1 adjacency of a kNN graph.
pub fn adjacency(g: &NeighborGraph) -> Vec<Vec<u8>> {
    let n = g.n_points();
    let mut a = vec![vec![0u8; n]; n];
    for (i, row) in a.iter_mut().enumerate() {
        for &j in g.neighbors(i) {
            row[j] = 1;
        }
    }
    a
}

/// Mean over points of `(1/k) * sum_j A_ij B_ij`, with a full double sum.
pub fn dense_overlap(a: &[Vec<u8>], b: &[Vec<u8>], k: usize) -> (f64, Vec<f64>) {
    let n = a.len();
    let per_point: Vec<f64> = (0..n)
        .map(|i| {
            let mut s = 0usize;
            for j in 0..n {
                s += (a[i][j] * b[i][j]) as usize;
            }
            s as f64 / k as f64
        })
        .collect();
    let mut total = 0.0;
    for v in &per_point {
        total += v;
    }
    (total / n as f64, per_point)
}

/// Adjacency of "same label": `A_ij = 1` when `i != j` and the labels agree.
pub fn label_adjacency(labels: &[usize]) -> Vec<Vec<u8>> {
    let n = labels.len();
    (0..n)
        .map(|i| (0..n).map(|j| u8::from(i != j && labels[i] == labels[j])).collect())
        .collect()
}

/// ARI from the four pair counts, enumerating all point pairs.
pub fn ari_by_pairs(a: &[usize], b: &[usize]) -> f64 {
    let (mut ss, mut sd, mut ds, mut dd) = (0u128, 0u128, 0u128, 0u128);
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            match (a[i] == a[j], b[i] == b[j]) {
                (true, true) => ss += 1,
                (true, false) => sd += 1,
                (false, true) => ds += 1,
                (false, false) => dd += 1,
            }
        }
    }
    let num = 2.0 * (ss as f64 * dd as f64 - sd as f64 * ds as f64);
    let den = (ss + sd) as f64 * (sd + dd) as f64 + (ss + ds) as f64 * (ds + dd) as f64;
    if den == 0.0 {
        1.0
    } else {
        num / den
    }
}

pub fn random_partition(rng: &mut ChaCha8Rng, n: usize, max_classes: usize) -> Vec<usize> {
    let q = rng.random_range(1..=max_classes);
    (0..n).map(|_| rng.random_range(0..q)).collect()
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].partial_cmp(&v[j]).unwrap());
        let mut r = vec![0.0; v.len()];
        let mut s = 0;
        while s < idx.len() {
            let mut e = s;
            while e + 1 < idx.len() && v[idx[e + 1]] == v[idx[s]] {
                e += 1;
            }
            for &t in &idx[s..=e] {
                r[t] = (s + e) as f64 / 2.0;
            }
            s = e + 1;
        }
        r
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let mean = |r: &[f64]| r.iter().sum::<f64>() / r.len() as f64;
    let (ma, mb) = (mean(&ra), mean(&rb));
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// Output of [`reference_peaks`]: the pipeline up to saddles, recomputed
/// from the full distance matrix.
pub struct ReferencePeaks {
    pub intrinsic_dim: f64,
    pub log_density: Vec<f64>,
    pub maxima: Vec<usize>,
    pub label: Vec<usize>,
    /// `(peak_a, peak_b) -> (border point, capped log-density)`, `peak_a < peak_b`.
    pub saddles: BTreeMap<(usize, usize), (usize, f64)>,
}

/// Exhaustive density-peak pipeline before merging. Intended for N ≤ 500.
pub fn reference_peaks(x: &ActivationMatrix, k: usize) -> ReferencePeaks {
    let n = x.n_points();
    let dm = distance_matrix(x);
    let rows: Vec<Vec<usize>> = (0..n).map(|i| sorted_row(&dm, i)).collect();

    let mut used = 0usize;
    let mut log_sum = 0.0;
    for i in 0..n {
        let (r1, r2) = (dm[i][rows[i][0]], dm[i][rows[i][1]]);
        if r1 > 0.0 {
            used += 1;
            log_sum += (r2 / r1).ln();
        }
    }
    let d = used as f64 / log_sum;
    let log_density: Vec<f64> = (0..n)
        .map(|i| (k as f64).ln() - (n as f64).ln() - d * dm[i][rows[i][k - 1]].ln())
        .collect();
    let denser = |a: usize, b: usize| {
        log_density[a] > log_density[b] || (log_density[a] == log_density[b] && a < b)
    };
    let knn = |i: usize| &rows[i][..k];

    let mut maxima: Vec<usize> = (0..n)
        .filter(|&i| knn(i).iter().all(|&j| denser(i, j)))
        .filter(|&i| !(0..n).any(|j| denser(j, i) && knn(j).contains(&i)))
        .collect();
    maxima.sort_by(|&a, &b| if denser(a, b) { std::cmp::Ordering::Less } else { std::cmp::Ordering::Greater });

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| if denser(a, b) { std::cmp::Ordering::Less } else { std::cmp::Ordering::Greater });
    let mut label = vec![usize::MAX; n];
    for (p, &m) in maxima.iter().enumerate() {
        label[m] = p;
    }
    for &i in &order {
        if label[i] != usize::MAX {
            continue;
        }
        let parent = match knn(i).iter().find(|&&j| denser(j, i)) {
            Some(&j) => j,
            None => (0..n)
                .filter(|&m| denser(m, i))
                .min_by(|&a, &b| dm[i][a].partial_cmp(&dm[i][b]).unwrap().then(a.cmp(&b)))
                .unwrap(),
        };
        label[i] = label[parent];
    }

    let peak_height: Vec<f64> = maxima.iter().map(|&m| log_density[m]).collect();
    let mut best: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for i in 0..n {
        let a = label[i];
        for &j in knn(i) {
            let b = label[j];
            if a == b {
                continue;
            }
            let strictly_nearest = (0..n)
                .filter(|&m| m != i && label[m] == a)
                .all(|m| dm[j][m] > dm[j][i]);
            if strictly_nearest {
                let key = (a.min(b), a.max(b));
                let cur = best.entry(key).or_insert(i);
                if denser(i, *cur) {
                    *cur = i;
                }
            }
        }
    }
    let saddles = best
        .into_iter()
        .map(|((a, b), i)| {
            let cap = peak_height[a].min(peak_height[b]);
            ((a, b), (i, log_density[i].min(cap)))
        })
        .collect();
    ReferencePeaks {
        intrinsic_dim: d,
        log_density,
        maxima,
        label,
        saddles,
    }
}
