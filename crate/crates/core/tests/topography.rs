mod common;

use common::{ari_by_pairs, random_partition, rng};
use denstopo::dataset::LabelSet;
use denstopo::density::{PeakPartition, Saddle, SaddleTable};
use denstopo::synth::{staged_family, StagedFamilyConfig};
use denstopo::topography::{
    adjusted_rand_index, build_dendrogram, default_min_count, macro_vs_class_ari_profile,
    peak_composition,
};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn ari_matches_pair_enumeration() {
    let mut r = rng(41);
    for _ in 0..200 {
        let n = r.random_range(2..150);
        let a = random_partition(&mut r, n, 8);
        let b = if r.random_bool(0.3) {
            // Correlated: copy a and perturb a few labels.
            a.iter().map(|&l| if r.random_bool(0.2) { r.random_range(0..8) } else { l }).collect()
        } else {
            random_partition(&mut r, n, 8)
        };
        let got = adjusted_rand_index(&a, &b).unwrap();
        assert!((got - ari_by_pairs(&a, &b)).abs() <= 1e-12, "{a:?} {b:?}");
    }
}

#[test]
fn ari_identity_and_one_cluster() {
    let mut r = rng(42);
    for _ in 0..20 {
        let a = random_partition(&mut r, 60, 5);
        assert_eq!(adjusted_rand_index(&a, &a).unwrap(), 1.0);
        let b = random_partition(&mut r, 60, 5);
        if b.iter().any(|&l| l != b[0]) {
            assert_eq!(adjusted_rand_index(&vec![0; 60], &b).unwrap(), 0.0);
        }
    }
    assert_eq!(adjusted_rand_index(&[0, 0, 0], &[7, 7, 7]).unwrap(), 1.0);
    assert_eq!(adjusted_rand_index(&[0, 1, 2], &[2, 0, 1]).unwrap(), 1.0);
    assert!(adjusted_rand_index(&[0, 1], &[0]).is_err());
    assert!(adjusted_rand_index(&[0], &[0]).is_err());
}

#[test]
fn ari_handles_large_inputs_exactly() {
    let n = 200_000;
    let a: Vec<usize> = (0..n).map(|i| i % 10).collect();
    let b: Vec<usize> = (0..n).map(|i| (i / 7) % 10).collect();
    // Reference from exact rational arithmetic on the contingency table.
    let v = adjusted_rand_index(&a, &b).unwrap();
    assert!((v - 0.04757618912719843).abs() <= 1e-15);
    assert_eq!(adjusted_rand_index(&a, &a).unwrap(), 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ari_is_symmetric_and_label_free(seed in any::<u64>(), n in 2usize..80) {
        let mut r = rng(seed);
        let a = random_partition(&mut r, n, 6);
        let b = random_partition(&mut r, n, 6);
        let ab = adjusted_rand_index(&a, &b).unwrap();
        prop_assert_eq!(ab, adjusted_rand_index(&b, &a).unwrap());
        let renamed: Vec<usize> = a.iter().map(|&l| 1000 - 3 * l).collect();
        prop_assert_eq!(ab, adjusted_rand_index(&renamed, &b).unwrap());
        prop_assert!(ab <= 1.0);
    }
}

fn partition(heights: Vec<f64>) -> PeakPartition {
    let n = heights.len();
    PeakPartition {
        peak_label: (0..n).collect(),
        maxima: (0..n).collect(),
        peak_log_density: heights,
        z_used: Some(1.0),
    }
}

fn random_landscape(seed: u64) -> (PeakPartition, SaddleTable) {
    let mut r = rng(seed);
    let n = r.random_range(2..12);
    let mut heights: Vec<f64> = (0..n).map(|_| r.random_range(0.0..10.0)).collect();
    heights.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut s = SaddleTable::default();
    for a in 0..n {
        for b in a + 1..n {
            if r.random_bool(0.5) {
                let cap = heights[a].min(heights[b]);
                s.insert(a, b, Saddle { point: a, log_density: cap - r.random_range(0.0..5.0) });
            }
        }
    }
    (partition(heights), s)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dendrogram_heights_never_increase(seed in any::<u64>()) {
        let (p, s) = random_landscape(seed);
        let t = build_dendrogram(&p, &s, -10.0);
        prop_assert_eq!(t.merges.len(), p.n_peaks() - 1);
        prop_assert!(t.merges.windows(2).all(|w| w[1].height <= w[0].height));
        prop_assert_eq!(t.merges.last().unwrap().size, p.n_peaks());
    }

    #[test]
    fn lower_cuts_are_coarser(seed in any::<u64>(), hi in -12.0f64..12.0, drop in 0.0f64..10.0) {
        let (p, s) = random_landscape(seed);
        let t = build_dendrogram(&p, &s, -10.0);
        let fine = t.cut(hi);
        let coarse = t.cut(hi - drop);
        // Every fine block lies inside one coarse block.
        for i in 0..fine.len() {
            for j in 0..fine.len() {
                if fine[i] == fine[j] {
                    prop_assert_eq!(coarse[i], coarse[j]);
                }
            }
        }
        prop_assert!(t.cut(f64::NEG_INFINITY).iter().all(|&b| b == 0));
    }
}

#[test]
fn newick_branch_lengths() {
    let p = partition(vec![5.0, 4.0, 3.0]);
    let mut s = SaddleTable::default();
    s.insert(0, 1, Saddle { point: 0, log_density: 3.5 });
    let t = build_dendrogram(&p, &s, 0.0);
    assert_eq!(t.to_newick(), "(peak2:3,(peak0:1.5,peak1:0.5):3.5):0;");
}

#[test]
fn composition_report() {
    // Peak 0 holds classes 0 and 1; peak 1 holds class 2 and a stray class-0 point.
    let labels = vec![0, 0, 0, 1, 1, 1, 2, 2, 2, 0];
    let p = PeakPartition {
        peak_label: vec![0, 0, 0, 0, 0, 0, 1, 1, 1, 1],
        maxima: vec![0, 6],
        peak_log_density: vec![2.0, 1.0],
        z_used: Some(1.0),
    };
    let y = LabelSet::new(labels);
    assert_eq!(default_min_count(&y), 2);
    let report = peak_composition(&p, &y, 2).unwrap();
    assert_eq!(report.rows.len(), 2);
    let small = &report.rows[0];
    assert_eq!((small.peak, small.size), (1, 4));
    assert_eq!(small.listed, vec![(2, 3)]);
    assert_eq!((small.elided_classes, small.elided_points), (1, 1));
    assert!((small.purity - 0.75).abs() < 1e-15);
    assert!(report.render().contains("..."));
}

#[test]
fn macro_then_class_agreement_on_staged_family() {
    let cfg = StagedFamilyConfig::default();
    let fam = staged_family(&cfg).unwrap();
    let partitions: Vec<PeakPartition> = fam
        .layers
        .iter()
        .map(|x| denstopo::density::cluster_density_peaks(x, 30, 1.0).unwrap().partition)
        .collect();
    let profile = macro_vs_class_ari_profile(&partitions, &fam.macro_labels, &fam.class_labels).unwrap();
    let first_above = |f: &dyn Fn(&(f64, f64)) -> f64| profile.iter().position(|v| f(v) > 0.5).unwrap();
    assert!(first_above(&|v| v.0) < first_above(&|v| v.1));
    let last = profile.last().unwrap();
    assert!(last.1 > last.0);
    let macro_peak = profile.iter().map(|v| v.0).fold(f64::MIN, f64::max);
    assert!(macro_peak > last.0 + 0.3);
}
