//! Density-peak clustering with saddle-point detection.
//!
//! The pipeline is: intrinsic dimension from the two nearest neighbors, a
//! kNN log-density per point, density maxima, assignment of every other
//! point to the peak of its nearest denser point, border and saddle
//! detection between peaks, and a statistical merge of peaks whose height
//! above a saddle is within `Z` error units.
//!
//! Wherever densities are compared, ties are broken by point index (lower
//! index counts as denser), which makes every stage a strict total order
//! and the output independent of evaluation order.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use crate::dataset::ActivationMatrix;
use crate::error::{Error, Result};
use crate::knn::{build_knn_graph, euclidean, NeighborGraph};

/// Standard error of the kNN log-density estimate at `k` neighbors.
pub fn log_density_error(k: usize) -> f64 {
    let k = k as f64;
    ((4.0 * k + 2.0) / (k * (k + 1.0))).sqrt()
}

/// Largest peak-minus-saddle log-density gap at which two peaks are merged.
pub fn merge_threshold(k: usize, z: f64) -> f64 {
    2.0 * z * log_density_error(k)
}

/// TWO-NN maximum-likelihood intrinsic dimension from the ratio of second to
/// first neighbor distances. Points whose first neighbor is a duplicate are
/// left out of the fit.
pub fn estimate_intrinsic_dimension(g: &NeighborGraph) -> Result<f64> {
    if g.k() < 2 {
        return Err(Error::InvalidParameter(
            "intrinsic dimension needs a graph with k >= 2".into(),
        ));
    }
    let mut used = 0usize;
    let mut log_ratio_sum = 0.0;
    for i in 0..g.n_points() {
        let d = g.distances(i);
        if d[0] > 0.0 {
            used += 1;
            log_ratio_sum += (d[1] / d[0]).ln();
        }
    }
    if used == 0 {
        return Err(Error::Numerical(
            "every point has a duplicate; no neighbor ratios available".into(),
        ));
    }
    if 2 * used < g.n_points() {
        return Err(Error::Numerical(format!(
            "only {used} of {} points have a positive first-neighbor distance",
            g.n_points()
        )));
    }
    let d = used as f64 / log_ratio_sum;
    if !d.is_finite() || d <= 0.0 {
        return Err(Error::Numerical(
            "second and first neighbor distances coincide; dimension is unbounded".into(),
        ));
    }
    Ok(d)
}

/// What to do when a point's k-th neighbor distance is zero.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DuplicatePolicy {
    Reject,
    /// Replace the zero radius by 1e-3 times the smallest positive distance
    /// in the graph and flag the point.
    #[default]
    Perturb,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityEstimate {
    /// `ln k - ln N - d ln r_k` per point; the ball-volume constant is dropped.
    pub log_density: Vec<f64>,
    /// Standard error of every log-density, identical for all points.
    pub error: f64,
    pub k_used: usize,
    pub intrinsic_dim: f64,
    /// Points whose zero k-th neighbor distance was perturbed.
    pub flagged: Vec<usize>,
}

impl DensityEstimate {
    pub fn n_points(&self) -> usize {
        self.log_density.len()
    }

    /// Strict total order on points: higher log-density, then lower index.
    #[inline]
    pub fn is_denser(&self, a: usize, b: usize) -> bool {
        self.cmp_points(a, b) == Ordering::Greater
    }

    #[inline]
    fn cmp_points(&self, a: usize, b: usize) -> Ordering {
        self.log_density[a]
            .total_cmp(&self.log_density[b])
            .then(b.cmp(&a))
    }

    /// Point indices from densest to sparsest.
    pub fn descending_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.n_points()).collect();
        order.sort_by(|&a, &b| self.cmp_points(b, a));
        order
    }

    /// Returns a copy with `shift` added to every log-density.
    pub fn shifted(&self, shift: f64) -> Self {
        DensityEstimate {
            log_density: self.log_density.iter().map(|v| v + shift).collect(),
            ..self.clone()
        }
    }

    pub fn min_log_density(&self) -> f64 {
        self.log_density.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

pub fn estimate_log_density(
    g: &NeighborGraph,
    d: f64,
    k: usize,
    duplicates: DuplicatePolicy,
) -> Result<DensityEstimate> {
    if k == 0 || k > g.k() {
        return Err(Error::InvalidParameter(format!(
            "density k = {k} must be in 1..={}",
            g.k()
        )));
    }
    if !(d > 0.0) || !d.is_finite() {
        return Err(Error::InvalidParameter(format!("dimension {d} must be positive")));
    }
    let n = g.n_points();
    let mut flagged = Vec::new();
    let mut floor = None;
    let base = (k as f64).ln() - (n as f64).ln();
    let mut log_density = Vec::with_capacity(n);
    for i in 0..n {
        let mut rk = g.distances(i)[k - 1];
        if rk <= 0.0 {
            if duplicates == DuplicatePolicy::Reject {
                return Err(Error::Numerical(format!(
                    "point {i} has a zero distance to its {k}-th neighbor"
                )));
            }
            let min_positive = match floor {
                Some(v) => v,
                None => {
                    let v = (0..n)
                        .flat_map(|j| g.distances(j).iter().copied())
                        .filter(|&v| v > 0.0)
                        .fold(f64::INFINITY, f64::min);
                    if !v.is_finite() {
                        return Err(Error::Numerical(
                            "all neighbor distances are zero".into(),
                        ));
                    }
                    floor = Some(v);
                    v
                }
            };
            rk = min_positive * 1e-3;
            flagged.push(i);
        }
        log_density.push(base - d * rk.ln());
    }
    Ok(DensityEstimate {
        log_density,
        error: log_density_error(k),
        k_used: k,
        intrinsic_dim: d,
        flagged,
    })
}

fn check_consistent(g: &NeighborGraph, de: &DensityEstimate) -> Result<()> {
    if g.n_points() != de.n_points() {
        return Err(Error::LengthMismatch {
            expected: g.n_points(),
            found: de.n_points(),
        });
    }
    if de.k_used > g.k() {
        return Err(Error::InvalidParameter(format!(
            "density used k = {} but the graph only has k = {}",
            de.k_used,
            g.k()
        )));
    }
    Ok(())
}

/// Points denser than all their k neighbors and not inside the neighborhood
/// of any denser point, ordered densest first.
pub fn find_density_maxima(g: &NeighborGraph, de: &DensityEstimate) -> Result<Vec<usize>> {
    check_consistent(g, de)?;
    let n = g.n_points();
    let k = de.k_used;
    let mut shadowed = vec![false; n];
    for j in 0..n {
        for &i in &g.neighbors(j)[..k] {
            if de.is_denser(j, i) {
                shadowed[i] = true;
            }
        }
    }
    let mut maxima: Vec<usize> = (0..n)
        .filter(|&i| !shadowed[i] && g.neighbors(i)[..k].iter().all(|&j| de.is_denser(i, j)))
        .collect();
    maxima.sort_by(|&a, &b| de.cmp_points(b, a));
    Ok(maxima)
}

/// Per-point peak labels with the maximum and height of every peak.
///
/// Peaks are numbered `0..n_peaks` from the highest to the lowest.
#[derive(Clone, Debug, PartialEq)]
pub struct PeakPartition {
    pub peak_label: Vec<usize>,
    pub maxima: Vec<usize>,
    pub peak_log_density: Vec<f64>,
    /// Merge confidence applied, `None` before merging.
    pub z_used: Option<f64>,
}

impl PeakPartition {
    pub fn n_peaks(&self) -> usize {
        self.maxima.len()
    }

    pub fn n_points(&self) -> usize {
        self.peak_label.len()
    }

    /// Point indices of each peak, ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_peaks()];
        for (i, &l) in self.peak_label.iter().enumerate() {
            out[l].push(i);
        }
        out
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut out = vec![0; self.n_peaks()];
        for &l in &self.peak_label {
            out[l] += 1;
        }
        out
    }
}

/// Labels every point with the peak of its nearest denser point, visiting
/// points from densest to sparsest. When no denser point is among the k
/// neighbors, the nearest denser point in the whole dataset is used.
pub fn assign_to_peaks(
    x: &ActivationMatrix,
    g: &NeighborGraph,
    de: &DensityEstimate,
    maxima: &[usize],
) -> Result<PeakPartition> {
    check_consistent(g, de)?;
    if x.n_points() != g.n_points() {
        return Err(Error::LengthMismatch {
            expected: g.n_points(),
            found: x.n_points(),
        });
    }
    if maxima.is_empty() {
        return Err(Error::InvalidParameter("no density maxima given".into()));
    }
    let n = g.n_points();
    let k = de.k_used;
    let mut sorted_maxima = maxima.to_vec();
    sorted_maxima.sort_by(|&a, &b| de.cmp_points(b, a));
    sorted_maxima.dedup();

    const UNSET: usize = usize::MAX;
    let mut label = vec![UNSET; n];
    for (peak, &m) in sorted_maxima.iter().enumerate() {
        label[m] = peak;
    }
    for i in de.descending_order() {
        if label[i] != UNSET {
            continue;
        }
        let parent = match g.neighbors(i)[..k].iter().find(|&&j| de.is_denser(j, i)) {
            Some(&j) => j,
            None => {
                let xi = x.row(i);
                (0..n)
                    .filter(|&m| de.is_denser(m, i))
                    .map(|m| (euclidean(xi, x.row(m)), m))
                    .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
                    .map(|(_, m)| m)
                    .ok_or_else(|| {
                        Error::InvalidParameter(format!(
                            "point {i} has no denser point and is not a maximum"
                        ))
                    })?
            }
        };
        label[i] = label[parent];
    }
    let peak_log_density = sorted_maxima.iter().map(|&m| de.log_density[m]).collect();
    Ok(PeakPartition {
        peak_label: label,
        maxima: sorted_maxima,
        peak_log_density,
        z_used: None,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Saddle {
    /// Densest border point between the two peaks.
    pub point: usize,
    /// Its log-density, capped at the lower of the two peak heights.
    pub log_density: f64,
}

/// Saddles between peak pairs that share a border. Keys are stored with the
/// smaller peak id first; lookups are symmetric.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SaddleTable {
    entries: BTreeMap<(usize, usize), Saddle>,
}

fn pair_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl SaddleTable {
    pub fn get(&self, a: usize, b: usize) -> Option<&Saddle> {
        self.entries.get(&pair_key(a, b))
    }

    pub fn insert(&mut self, a: usize, b: usize, saddle: Saddle) {
        assert_ne!(a, b, "a saddle joins two distinct peaks");
        self.entries.insert(pair_key(a, b), saddle);
    }

    /// `(alpha, beta, saddle)` with `alpha < beta`, in key order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, &Saddle)> {
        self.entries.iter().map(|(&(a, b), s)| (a, b, s))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Finds, for every pair of peaks, the densest point of their common border.
///
/// Point `i` of peak `a` is on the border with peak `b` when some `j` among
/// its k neighbors belongs to `b` and `i` is strictly closer to `j` than any
/// other member of `a`. Borders are symmetrized by union.
pub fn find_saddle_points(
    x: &ActivationMatrix,
    g: &NeighborGraph,
    de: &DensityEstimate,
    p: &PeakPartition,
) -> Result<SaddleTable> {
    check_consistent(g, de)?;
    if p.n_points() != g.n_points() || x.n_points() != g.n_points() {
        return Err(Error::LengthMismatch {
            expected: g.n_points(),
            found: p.n_points().min(x.n_points()),
        });
    }
    let k = de.k_used;
    let label = &p.peak_label;
    let members = p.members();
    // Two nearest members of a peak to a point, for rows too short to decide.
    let mut nearest_members: HashMap<(usize, usize), [(f64, usize); 2]> = HashMap::new();

    let mut best: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for i in 0..g.n_points() {
        let a = label[i];
        for (&j, &dij) in g.neighbors(i)[..k].iter().zip(&g.distances(i)[..k]) {
            let b = label[j];
            if b == a {
                continue;
            }
            let on_border = 'check: {
                let row = g.neighbors(j);
                let row_d = g.distances(j);
                for (&m, &dm) in row.iter().zip(row_d) {
                    if dm > dij {
                        break 'check true;
                    }
                    if m != i && label[m] == a {
                        break 'check false;
                    }
                }
                // Row ends before passing dij: fall back to an exact scan.
                let two = nearest_members.entry((j, a)).or_insert_with(|| {
                    let xj = x.row(j);
                    let mut two = [(f64::INFINITY, usize::MAX); 2];
                    for &m in &members[a] {
                        let cand = (euclidean(xj, x.row(m)), m);
                        let less = |u: &(f64, usize), v: &(f64, usize)| {
                            u.0.total_cmp(&v.0).then(u.1.cmp(&v.1)) == Ordering::Less
                        };
                        if less(&cand, &two[0]) {
                            two[1] = two[0];
                            two[0] = cand;
                        } else if less(&cand, &two[1]) {
                            two[1] = cand;
                        }
                    }
                    two
                });
                let other = if two[0].1 == i { two[1].0 } else { two[0].0 };
                other > dij
            };
            if on_border {
                best.entry(pair_key(a, b))
                    .and_modify(|cur| {
                        if de.is_denser(i, *cur) {
                            *cur = i;
                        }
                    })
                    .or_insert(i);
            }
        }
    }

    let mut table = SaddleTable::default();
    for ((a, b), point) in best {
        let cap = p.peak_log_density[a].min(p.peak_log_density[b]);
        table.insert(
            a,
            b,
            Saddle {
                point,
                log_density: de.log_density[point].min(cap),
            },
        );
    }
    Ok(table)
}

/// Merges peaks that are not statistically distinguishable from their
/// saddles at confidence `z`.
///
/// While some pair's gap `min(peak heights) - saddle` is below the merge
/// threshold, the pair with the smallest gap is fused under the higher
/// peak's label, and its saddles to third peaks become the higher of the two
/// former saddles. Surviving peaks are renumbered highest first.
pub fn merge_indistinguishable_peaks(
    p: &PeakPartition,
    s: &SaddleTable,
    de: &DensityEstimate,
    z: f64,
) -> Result<(PeakPartition, SaddleTable)> {
    if !(z >= 0.0) {
        return Err(Error::InvalidParameter(format!("Z = {z} must be >= 0")));
    }
    let threshold = merge_threshold(de.k_used, z);
    let n_peaks = p.n_peaks();
    let height = &p.peak_log_density;
    let higher_peak = |a: usize, b: usize| -> bool { de.is_denser(p.maxima[a], p.maxima[b]) };

    let mut target: Vec<usize> = (0..n_peaks).collect();
    let mut saddles = s.entries.clone();
    loop {
        let candidate = saddles
            .iter()
            .map(|(&(a, b), sd)| (height[a].min(height[b]) - sd.log_density, a, b))
            .filter(|&(gap, _, _)| gap < threshold)
            .min_by(|u, v| u.0.total_cmp(&v.0).then((u.1, u.2).cmp(&(v.1, v.2))));
        let Some((_, a, b)) = candidate else { break };
        let (hi, lo) = if higher_peak(a, b) { (a, b) } else { (b, a) };
        saddles.remove(&pair_key(a, b));
        target[lo] = hi;

        let moved: Vec<((usize, usize), Saddle)> = saddles
            .iter()
            .filter(|(&(u, v), _)| u == lo || v == lo)
            .map(|(&key, &sd)| (key, sd))
            .collect();
        for ((u, v), sd) in moved {
            saddles.remove(&(u, v));
            let third = if u == lo { v } else { u };
            let key = pair_key(hi, third);
            match saddles.get_mut(&key) {
                Some(existing) => {
                    if sd.log_density > existing.log_density
                        || (sd.log_density == existing.log_density
                            && de.is_denser(sd.point, existing.point))
                    {
                        *existing = sd;
                    }
                }
                None => {
                    saddles.insert(key, sd);
                }
            }
        }
    }

    let root = |mut peak: usize| {
        while target[peak] != peak {
            peak = target[peak];
        }
        peak
    };
    let mut survivors: Vec<usize> = (0..n_peaks).filter(|&a| target[a] == a).collect();
    survivors.sort_by(|&a, &b| {
        if higher_peak(a, b) {
            Ordering::Less
        } else if higher_peak(b, a) {
            Ordering::Greater
        } else {
            Ordering::Equal
        }
    });
    let mut renumber = vec![usize::MAX; n_peaks];
    for (new, &old) in survivors.iter().enumerate() {
        renumber[old] = new;
    }
    let old_to_new: Vec<usize> = (0..n_peaks).map(|a| renumber[root(a)]).collect();

    let merged = PeakPartition {
        peak_label: p.peak_label.iter().map(|&l| old_to_new[l]).collect(),
        maxima: survivors.iter().map(|&a| p.maxima[a]).collect(),
        peak_log_density: survivors.iter().map(|&a| height[a]).collect(),
        z_used: Some(z),
    };
    let mut table = SaddleTable::default();
    for ((a, b), sd) in saddles {
        table.insert(old_to_new[a], old_to_new[b], sd);
    }
    Ok((merged, table))
}

/// Peaks and saddles before the statistical merge, reusable across `Z` values.
#[derive(Clone, Debug, PartialEq)]
pub struct PeakLandscape {
    pub density: DensityEstimate,
    pub partition: PeakPartition,
    pub saddles: SaddleTable,
}

/// Final density-peak clustering at one `Z`.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityPeaks {
    pub density: DensityEstimate,
    pub partition: PeakPartition,
    pub saddles: SaddleTable,
}

impl PeakLandscape {
    /// Runs every stage up to saddle detection on a prebuilt graph, using its
    /// first `k` neighbors.
    pub fn from_graph(x: &ActivationMatrix, g: &NeighborGraph, k: usize) -> Result<Self> {
        let g_k = if g.k() == k { g.clone() } else { g.truncate(k)? };
        let d = estimate_intrinsic_dimension(&g_k)?;
        let density = estimate_log_density(&g_k, d, k, DuplicatePolicy::Perturb)?;
        let maxima = find_density_maxima(&g_k, &density)?;
        let partition = assign_to_peaks(x, &g_k, &density, &maxima)?;
        let saddles = find_saddle_points(x, &g_k, &density, &partition)?;
        Ok(PeakLandscape {
            density,
            partition,
            saddles,
        })
    }

    pub fn merge(&self, z: f64) -> Result<DensityPeaks> {
        let (partition, saddles) =
            merge_indistinguishable_peaks(&self.partition, &self.saddles, &self.density, z)?;
        Ok(DensityPeaks {
            density: self.density.clone(),
            partition,
            saddles,
        })
    }
}

/// End-to-end clustering of `x` with `k` neighbors and merge confidence `z`.
pub fn cluster_density_peaks(x: &ActivationMatrix, k: usize, z: f64) -> Result<DensityPeaks> {
    if k < 2 {
        return Err(Error::InvalidParameter(
            "density-peak clustering needs k >= 2".into(),
        ));
    }
    let g = build_knn_graph(x, k)?;
    PeakLandscape::from_graph(x, &g, k)?.merge(z)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(points: &[f64]) -> ActivationMatrix {
        ActivationMatrix::new("line", points.len(), 1, points.to_vec()).unwrap()
    }

    fn estimate(log_density: Vec<f64>, k: usize) -> DensityEstimate {
        DensityEstimate {
            log_density,
            error: log_density_error(k),
            k_used: k,
            intrinsic_dim: 1.0,
            flagged: vec![],
        }
    }

    #[test]
    fn error_and_threshold_values() {
        assert!((log_density_error(30) - (122.0f64 / 930.0).sqrt()).abs() < 1e-15);
        assert!((log_density_error(30) - 0.362192).abs() < 5e-7);
        assert!((merge_threshold(30, 1.0) - 0.724383).abs() < 5e-7);
        assert_eq!(merge_threshold(30, 0.0), 0.0);
    }

    #[test]
    fn degenerate_dimension_is_an_error() {
        // Every point has a duplicate.
        let pts = [0.0, 0.0, 5.0, 5.0, 10.0, 10.0];
        let g = build_knn_graph(&line(&pts), 2).unwrap();
        assert!(matches!(estimate_intrinsic_dimension(&g), Err(Error::Numerical(_))));
        // Every first/second ratio is exactly 1.
        let square = ActivationMatrix::from_rows(
            "sq",
            &[vec![0.0, 0.0], vec![1.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0]],
        )
        .unwrap();
        let g = build_knn_graph(&square, 2).unwrap();
        assert!(matches!(estimate_intrinsic_dimension(&g), Err(Error::Numerical(_))));
    }

    #[test]
    fn log_density_shift_under_halving() {
        let pts: Vec<f64> = [0.0, 0.3, 1.1, 1.5, 2.8, 3.0, 4.4].to_vec();
        let half: Vec<f64> = pts.iter().map(|v| v / 2.0).collect();
        let g = build_knn_graph(&line(&pts), 3).unwrap();
        let gh = build_knn_graph(&line(&half), 3).unwrap();
        let a = estimate_log_density(&g, 1.7, 3, DuplicatePolicy::Reject).unwrap();
        let b = estimate_log_density(&gh, 1.7, 3, DuplicatePolicy::Reject).unwrap();
        for (x, y) in a.log_density.iter().zip(&b.log_density) {
            assert!((y - x - 1.7 * 2f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn duplicates_are_rejected_or_flagged() {
        let pts = [0.0, 0.0, 0.0, 1.0, 2.5];
        let g = build_knn_graph(&line(&pts), 2).unwrap();
        assert!(estimate_log_density(&g, 1.0, 2, DuplicatePolicy::Reject).is_err());
        let de = estimate_log_density(&g, 1.0, 2, DuplicatePolicy::Perturb).unwrap();
        assert_eq!(de.flagged, vec![0, 1, 2]);
        assert!(de.log_density.iter().all(|v| v.is_finite()));
        let expected = (2.0f64).ln() - (5.0f64).ln() - (1.0e-3f64).ln();
        assert!((de.log_density[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn everyone_neighbors_everyone_gives_one_maximum() {
        let x = line(&[0.0, 0.2, 0.9, 1.0, 3.0]);
        let g = build_knn_graph(&x, 4).unwrap();
        let de = estimate(vec![0.1, 0.5, 0.3, 0.5, -1.0], 4);
        // Point 1 wins the tie with point 3 by index.
        assert_eq!(find_density_maxima(&g, &de).unwrap(), vec![1]);
    }

    #[test]
    fn monotone_slope_has_single_label() {
        let x = line(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        let g = build_knn_graph(&x, 2).unwrap();
        let de = estimate(vec![5.0, 4.0, 3.0, 2.0, 1.0, 0.0], 2);
        let maxima = find_density_maxima(&g, &de).unwrap();
        assert_eq!(maxima, vec![0]);
        let p = assign_to_peaks(&x, &g, &de, &maxima).unwrap();
        assert!(p.peak_label.iter().all(|&l| l == 0));
        let s = find_saddle_points(&x, &g, &de, &p).unwrap();
        assert!(s.is_empty());
    }

    #[test]
    fn assignment_widens_beyond_k() {
        // Point 3 only has sparser points among its 1 neighbor but sits in the
        // neighborhood of the denser point 1, so it is not a maximum.
        let x = line(&[0.0, 1.0, 1.9, 3.0, 3.2]);
        let g = build_knn_graph(&x, 1).unwrap();
        let de = estimate(vec![0.0, 3.0, 2.5, 2.0, 1.0], 1);
        let maxima = vec![1];
        let p = assign_to_peaks(&x, &g, &de, &maxima).unwrap();
        assert!(p.peak_label.iter().all(|&l| l == 0));
        assert!(assign_to_peaks(&x, &g, &de, &[]).is_err());
    }

    fn two_bumps() -> (ActivationMatrix, NeighborGraph, DensityEstimate) {
        let x = line(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let g = build_knn_graph(&x, 1).unwrap();
        let de = estimate(vec![1.0, 3.0, 2.0, 0.5, 2.2, 2.8, 0.9], 1);
        (x, g, de)
    }

    #[test]
    fn saddle_between_two_bumps() {
        let (x, g, de) = two_bumps();
        let maxima = find_density_maxima(&g, &de).unwrap();
        assert_eq!(maxima, vec![1, 5]);
        let p = assign_to_peaks(&x, &g, &de, &maxima).unwrap();
        assert_eq!(p.peak_label, vec![0, 0, 0, 0, 1, 1, 1]);
        let s = find_saddle_points(&x, &g, &de, &p).unwrap();
        assert_eq!(s.len(), 1);
        // Point 4 is the only border point: 3's single neighbor is in its own peak.
        let sd = s.get(1, 0).unwrap();
        assert_eq!(sd.point, 4);
        assert_eq!(sd.log_density, 2.2);
        assert_eq!(s.get(0, 1), s.get(1, 0));
    }

    #[test]
    fn merge_respects_threshold() {
        let (x, g, de) = two_bumps();
        let maxima = find_density_maxima(&g, &de).unwrap();
        let p = assign_to_peaks(&x, &g, &de, &maxima).unwrap();
        let s = find_saddle_points(&x, &g, &de, &p).unwrap();
        // Gap is 2.8 - 2.2 = 0.6; the k = 1 error is sqrt(3).
        let (kept, ks) = merge_indistinguishable_peaks(&p, &s, &de, 0.1).unwrap();
        assert_eq!(kept.n_peaks(), 2);
        assert_eq!(ks.len(), 1);
        let (merged, ms) = merge_indistinguishable_peaks(&p, &s, &de, 0.2).unwrap();
        assert_eq!(merged.n_peaks(), 1);
        assert!(ms.is_empty());
        assert!(merged.peak_label.iter().all(|&l| l == 0));
        assert_eq!(merged.maxima, vec![1]);
        assert_eq!(merged.z_used, Some(0.2));
        let (none, _) = merge_indistinguishable_peaks(&p, &s, &de, 0.0).unwrap();
        assert_eq!(none.n_peaks(), 2);
        assert!(merge_indistinguishable_peaks(&p, &s, &de, -1.0).is_err());
    }

    #[test]
    fn merged_saddles_take_the_maximum() {
        let de = estimate(vec![5.0, 4.0, 3.0, 1.0, 2.0, 0.5], 30);
        let p = PeakPartition {
            peak_label: vec![0, 1, 2, 0, 1, 2],
            maxima: vec![0, 1, 2],
            peak_log_density: vec![5.0, 4.0, 3.0],
            z_used: None,
        };
        let mut s = SaddleTable::default();
        s.insert(0, 1, Saddle { point: 4, log_density: 3.9 });
        s.insert(0, 2, Saddle { point: 3, log_density: 1.0 });
        s.insert(1, 2, Saddle { point: 5, log_density: 0.5 });
        let (m, ms) = merge_indistinguishable_peaks(&p, &s, &de, 1.0).unwrap();
        assert_eq!(m.n_peaks(), 2);
        assert_eq!(m.peak_label, vec![0, 0, 1, 0, 0, 1]);
        assert_eq!(ms.get(0, 1).unwrap().log_density, 1.0);
    }
}
