//! Neighborhood overlap between representations.
//!
//! For two graphs over the same points, the per-point overlap is the
//! fraction of the `k` neighbors shared by both, and the overlap of the pair
//! is its mean. Against class labels the same quantity becomes the fraction
//! of neighbors sharing the point's class (the neighborhood hit).

use rayon::prelude::*;

use crate::dataset::LabelSet;
use crate::error::{Error, Result};
use crate::knn::NeighborGraph;

/// Tag used in place of a layer name for the ground-truth reference.
pub const GROUND_TRUTH_TAG: &str = "gt";

#[derive(Clone, Debug, PartialEq)]
pub struct OverlapResult {
    pub chi: f64,
    pub per_point_chi: Vec<f64>,
    pub k: usize,
    pub pair: (String, String),
}

impl OverlapResult {
    fn from_counts(counts: Vec<usize>, k: usize, pair: (String, String)) -> Self {
        let per_point_chi: Vec<f64> = counts.into_iter().map(|c| c as f64 / k as f64).collect();
        // Sequential sum in index order so the mean is reproducible.
        let chi = per_point_chi.iter().sum::<f64>() / per_point_chi.len() as f64;
        OverlapResult {
            chi,
            per_point_chi,
            k,
            pair,
        }
    }
}

fn sorted_intersection_len(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

fn check_compatible(a: &NeighborGraph, b: &NeighborGraph) -> Result<()> {
    if a.n_points() != b.n_points() {
        return Err(Error::LengthMismatch {
            expected: a.n_points(),
            found: b.n_points(),
        });
    }
    if a.k() != b.k() {
        return Err(Error::InvalidParameter(format!(
            "graphs use different k ({} vs {})",
            a.k(),
            b.k()
        )));
    }
    Ok(())
}

/// Overlap between two layers' neighborhoods.
pub fn layer_overlap(gl: &NeighborGraph, gm: &NeighborGraph) -> Result<OverlapResult> {
    check_compatible(gl, gm)?;
    let counts: Vec<usize> = (0..gl.n_points())
        .into_par_iter()
        .map(|i| {
            let mut a = gl.neighbors(i).to_vec();
            let mut b = gm.neighbors(i).to_vec();
            a.sort_unstable();
            b.sort_unstable();
            sorted_intersection_len(&a, &b)
        })
        .collect();
    Ok(OverlapResult::from_counts(
        counts,
        gl.k(),
        (gl.layer_id().to_string(), gm.layer_id().to_string()),
    ))
}

/// Overlap of a layer's neighborhoods with the class-label adjacency.
pub fn ground_truth_overlap(g: &NeighborGraph, y: &LabelSet) -> Result<OverlapResult> {
    y.check_len(g.n_points())?;
    let labels = y.labels();
    let counts: Vec<usize> = (0..g.n_points())
        .into_par_iter()
        .map(|i| g.neighbors(i).iter().filter(|&&j| labels[j] == labels[i]).count())
        .collect();
    Ok(OverlapResult::from_counts(
        counts,
        g.k(),
        (g.layer_id().to_string(), GROUND_TRUTH_TAG.to_string()),
    ))
}

/// What each layer of a profile is compared against.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum OverlapReference {
    /// A fixed layer, addressed by its tag.
    Layer(String),
    GroundTruth,
    /// Each layer against the next one.
    Consecutive,
}

/// Overlap of every layer (or adjacent pair) with `reference`, in input order.
pub fn overlap_profile(
    graphs: &[NeighborGraph],
    reference: &OverlapReference,
    y: Option<&LabelSet>,
) -> Result<Vec<OverlapResult>> {
    if let Some(first) = graphs.first() {
        for g in &graphs[1..] {
            check_compatible(first, g)?;
        }
    }
    match reference {
        OverlapReference::GroundTruth => {
            let y = y.ok_or_else(|| {
                Error::InvalidParameter("ground-truth profile needs labels".into())
            })?;
            graphs.iter().map(|g| ground_truth_overlap(g, y)).collect()
        }
        OverlapReference::Consecutive => {
            if graphs.len() < 2 {
                return Err(Error::InvalidParameter(
                    "consecutive profile needs at least 2 layers".into(),
                ));
            }
            graphs
                .windows(2)
                .map(|w| layer_overlap(&w[0], &w[1]))
                .collect()
        }
        OverlapReference::Layer(tag) => {
            let reference = graphs
                .iter()
                .find(|g| g.layer_id() == tag)
                .ok_or_else(|| Error::InvalidParameter(format!("no layer tagged '{tag}'")))?;
            graphs.iter().map(|g| layer_overlap(g, reference)).collect()
        }
    }
}

/// Counts of per-point values in `n_bins` uniform bins on `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

pub fn chi_histogram(r: &OverlapResult, n_bins: usize) -> Result<Histogram> {
    if n_bins == 0 {
        return Err(Error::InvalidParameter("histogram needs at least one bin".into()));
    }
    let edges = (0..=n_bins).map(|b| b as f64 / n_bins as f64).collect();
    let mut counts = vec![0usize; n_bins];
    for &v in &r.per_point_chi {
        // Values are multiples of 1/k; the nudge keeps exact edges in the upper bin.
        let bin = ((v * n_bins as f64 + 1e-9).floor() as usize).min(n_bins - 1);
        counts[bin] += 1;
    }
    Ok(Histogram { edges, counts })
}
