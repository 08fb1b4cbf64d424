//! Partition agreement, saddle dendrograms and peak composition reports.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use crate::dataset::LabelSet;
use crate::density::{DensityEstimate, PeakPartition, SaddleTable};
use crate::error::{Error, Result};

fn pairs(n: u64) -> u128 {
    let n = n as u128;
    n * n.saturating_sub(1) / 2
}

/// Adjusted Rand Index of two labelings of the same points.
///
/// Pair counts are accumulated as exact integers and combined in a single
/// final division. Two trivial partitions that coincide (both one cluster,
/// or both all singletons) score 1.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::InvalidParameter(
            "ARI needs at least two points".into(),
        ));
    }
    let mut count_a: HashMap<usize, u64> = HashMap::new();
    let mut count_b: HashMap<usize, u64> = HashMap::new();
    let mut joint: HashMap<(usize, usize), u64> = HashMap::new();
    for (&u, &v) in a.iter().zip(b) {
        *count_a.entry(u).or_default() += 1;
        *count_b.entry(v).or_default() += 1;
        *joint.entry((u, v)).or_default() += 1;
    }
    let index: u128 = joint.values().map(|&c| pairs(c)).sum();
    let sum_a: u128 = count_a.values().map(|&c| pairs(c)).sum();
    let sum_b: u128 = count_b.values().map(|&c| pairs(c)).sum();
    let total = pairs(a.len() as u64);

    // (index - sa*sb/total) / ((sa+sb)/2 - sa*sb/total), scaled by 2*total.
    let numerator = 2 * (index * total) as i128 - 2 * (sum_a * sum_b) as i128;
    let denominator = ((sum_a + sum_b) * total) as i128 - 2 * (sum_a * sum_b) as i128;
    if denominator == 0 {
        return Ok(1.0);
    }
    Ok(numerator as f64 / denominator as f64)
}

/// One agglomeration step. Nodes `0..n_leaves` are peaks; the node created
/// by merge `m` has id `n_leaves + m`.
#[derive(Clone, Debug, PartialEq)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    /// Similarity (saddle log-density, WPGMA-averaged) at which they join.
    pub height: f64,
    pub size: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dendrogram {
    /// Peak log-densities.
    pub leaf_heights: Vec<f64>,
    pub merges: Vec<Merge>,
}

/// Similarity assigned to peak pairs without a common border: the lowest
/// log-density in the data minus one error unit.
pub fn missing_saddle_fill(de: &DensityEstimate) -> f64 {
    de.min_log_density() - de.error
}

/// WPGMA agglomeration of peaks on saddle log-densities.
///
/// At every step the most similar pair of clusters merges, and the new
/// cluster's similarity to any other is the plain average of its two parts'
/// similarities. Pairs without a saddle start at `fill`.
pub fn build_dendrogram(p: &PeakPartition, s: &SaddleTable, fill: f64) -> Dendrogram {
    let n = p.n_peaks();
    let mut sim: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for a in 0..n {
        for b in a + 1..n {
            sim.insert((a, b), s.get(a, b).map_or(fill, |sd| sd.log_density));
        }
    }
    let mut active: Vec<usize> = (0..n).collect();
    let mut size: Vec<usize> = vec![1; n];
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    let key = |a: usize, b: usize| if a < b { (a, b) } else { (b, a) };

    while active.len() > 1 {
        let mut best: Option<((usize, usize), f64)> = None;
        for (ia, &a) in active.iter().enumerate() {
            for &b in &active[ia + 1..] {
                let v = sim[&key(a, b)];
                if best.is_none_or(|(_, bv)| v > bv) {
                    best = Some((key(a, b), v));
                }
            }
        }
        let ((a, b), height) = best.expect("at least two active clusters");
        let node = n + merges.len();
        size.push(size[a] + size[b]);
        merges.push(Merge {
            left: a,
            right: b,
            height,
            size: size[node],
        });
        active.retain(|&c| c != a && c != b);
        for &c in &active {
            let v = 0.5 * (sim[&key(a, c)] + sim[&key(b, c)]);
            sim.insert(key(c, node), v);
        }
        active.push(node);
    }
    Dendrogram {
        leaf_heights: p.peak_log_density.clone(),
        merges,
    }
}

impl Dendrogram {
    pub fn n_leaves(&self) -> usize {
        self.leaf_heights.len()
    }

    fn node_height(&self, node: usize) -> f64 {
        if node < self.n_leaves() {
            self.leaf_heights[node]
        } else {
            self.merges[node - self.n_leaves()].height
        }
    }

    /// Leaf sets joined at each merge, with members sorted; independent of
    /// heights, used to compare tree shapes.
    pub fn topology(&self) -> Vec<(Vec<usize>, Vec<usize>)> {
        let n = self.n_leaves();
        let mut leaves: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        let mut out = Vec::with_capacity(self.merges.len());
        for m in &self.merges {
            let (l, r) = (leaves[m.left].clone(), leaves[m.right].clone());
            let mut joined = [l.clone(), r.clone()].concat();
            joined.sort_unstable();
            out.push(if l < r { (l, r) } else { (r, l) });
            leaves.push(joined);
        }
        out
    }

    /// Block id per leaf after applying every merge with height `>= threshold`.
    /// Blocks are numbered by their smallest leaf.
    pub fn cut(&self, threshold: f64) -> Vec<usize> {
        let n = self.n_leaves();
        let mut parent: Vec<usize> = (0..n + self.merges.len()).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for (m, merge) in self.merges.iter().enumerate() {
            if merge.height >= threshold {
                let node = n + m;
                let l = find(&mut parent, merge.left);
                let r = find(&mut parent, merge.right);
                parent[l] = node;
                parent[r] = node;
            }
        }
        let roots: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();
        let mut ids: HashMap<usize, usize> = HashMap::new();
        roots
            .iter()
            .map(|r| {
                let next = ids.len();
                *ids.entry(*r).or_insert(next)
            })
            .collect()
    }

    /// Nested-parentheses tree with branch lengths equal to the drop in
    /// height from child to parent. Leaves are named `peak<id>`.
    pub fn to_newick(&self) -> String {
        let n = self.n_leaves();
        if n == 0 {
            return ";".into();
        }
        let root = n + self.merges.len() - 1;
        let mut out = String::new();
        self.write_node(root, None, &mut out);
        out.push(';');
        out
    }

    fn write_node(&self, node: usize, parent_height: Option<f64>, out: &mut String) {
        let n = self.n_leaves();
        let height = self.node_height(node);
        if node < n {
            write!(out, "peak{node}").unwrap();
        } else {
            let m = &self.merges[node - n];
            out.push('(');
            self.write_node(m.left, Some(height), out);
            out.push(',');
            self.write_node(m.right, Some(height), out);
            out.push(')');
        }
        let length = parent_height.map_or(0.0, |ph| height - ph);
        write!(out, ":{length}").unwrap();
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PeakComposition {
    pub peak: usize,
    pub size: usize,
    /// `(class, count)` for classes with at least `min_count` members,
    /// largest first.
    pub listed: Vec<(usize, usize)>,
    pub elided_classes: usize,
    pub elided_points: usize,
    /// Fraction of the peak taken by its most frequent class.
    pub purity: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PeakReport {
    pub min_count: usize,
    /// Rows ordered from the smallest to the largest peak.
    pub rows: Vec<PeakComposition>,
}

/// Half the mean class size, rounded up.
pub fn default_min_count(y: &LabelSet) -> usize {
    let classes = y.n_classes().max(1);
    y.len().div_ceil(2 * classes).max(1)
}

pub fn peak_composition(p: &PeakPartition, y: &LabelSet, min_count: usize) -> Result<PeakReport> {
    y.check_len(p.n_points())?;
    let mut per_peak: Vec<BTreeMap<usize, usize>> = vec![BTreeMap::new(); p.n_peaks()];
    for (&peak, &class) in p.peak_label.iter().zip(y.labels()) {
        *per_peak[peak].entry(class).or_default() += 1;
    }
    let mut rows: Vec<PeakComposition> = per_peak
        .into_iter()
        .enumerate()
        .map(|(peak, hist)| {
            let size: usize = hist.values().sum();
            let mut counts: Vec<(usize, usize)> = hist.into_iter().collect();
            counts.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
            let purity = counts.first().map_or(0.0, |c| c.1 as f64 / size as f64);
            let (listed, elided): (Vec<_>, Vec<_>) =
                counts.into_iter().partition(|c| c.1 >= min_count);
            PeakComposition {
                peak,
                size,
                listed,
                elided_classes: elided.len(),
                elided_points: elided.iter().map(|c| c.1).sum(),
                purity,
            }
        })
        .collect();
    rows.sort_by(|a, b| a.size.cmp(&b.size).then(a.peak.cmp(&b.peak)));
    Ok(PeakReport { min_count, rows })
}

impl PeakReport {
    /// Plain-text table: one line per peak, smallest first, with listed
    /// classes and a trailing `...` when smaller classes were elided.
    pub fn render(&self) -> String {
        let mut out = format!("# peak composition, classes with >= {} points\n", self.min_count);
        out.push_str("peak\tsize\tpurity\tclasses\n");
        for row in &self.rows {
            let mut classes: Vec<String> =
                row.listed.iter().map(|(c, n)| format!("{c}:{n}")).collect();
            if row.elided_classes > 0 {
                classes.push("...".into());
            }
            writeln!(
                out,
                "{}\t{}\t{:.4}\t{}",
                row.peak,
                row.size,
                row.purity,
                classes.join(" ")
            )
            .unwrap();
        }
        out
    }
}

/// ARI of every layer's peaks against the macro and the fine labels.
pub fn macro_vs_class_ari_profile(
    partitions: &[PeakPartition],
    y_macro: &LabelSet,
    y_class: &LabelSet,
) -> Result<Vec<(f64, f64)>> {
    partitions
        .iter()
        .map(|p| {
            Ok((
                adjusted_rand_index(&p.peak_label, y_macro.labels())?,
                adjusted_rand_index(&p.peak_label, y_class.labels())?,
            ))
        })
        .collect()
}
