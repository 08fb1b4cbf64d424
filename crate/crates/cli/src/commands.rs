//! The `overlap`, `cluster` and `diagnostics` analyses.

use std::path::PathBuf;

use denstopo::cka::{gaussian_cka, linear_cka};
use denstopo::dataset::{random_subset, stratified_subsample, SampleSpec};
use denstopo::density::{estimate_intrinsic_dimension, PeakLandscape};
use denstopo::entropy::{image_shannon_entropy, load_image_stack, neighborhood_entropy, shuffled_entropy_samples};
use denstopo::knn::{build_knn_graph, top_hubs};
use denstopo::npy::{ArrayData, NpyArray};
use denstopo::overlap::{chi_histogram, overlap_profile, OverlapReference, OverlapResult};
use denstopo::topography::{
    adjusted_rand_index, build_dendrogram, default_min_count, missing_saddle_fill, peak_composition,
};
use denstopo::{LabelSet, NeighborGraph};
use rayon::prelude::*;

use crate::config::PipelineConfig;
use crate::data::RunData;
use crate::error::{CliError, StageContext};
use crate::output::{num, OutputDir};

pub struct Run<'a> {
    pub cfg: &'a PipelineConfig,
    pub data: RunData,
    pub out: OutputDir,
}

impl Run<'_> {
    fn cache_dir(&self) -> Option<PathBuf> {
        self.cfg.cache.then(|| self.out.root().join("cache"))
    }

    fn graphs_at(&mut self, k: usize) -> Result<Vec<NeighborGraph>, CliError> {
        let cache = self.cache_dir();
        self.data.graphs_at(k, self.cfg.k_max(), cache.as_deref())
    }

    fn tags(&self) -> Vec<String> {
        self.data.layers.iter().map(|x| x.layer_id().to_string()).collect()
    }
}

fn profile_rows(results: &[OverlapResult]) -> Vec<Vec<String>> {
    results
        .iter()
        .map(|r| vec![r.pair.0.clone(), r.pair.1.clone(), num(r.chi)])
        .collect()
}

fn output_tag(graphs: &[NeighborGraph]) -> String {
    graphs.last().expect("at least one layer").layer_id().to_string()
}

type ChiPair = (Option<Vec<f64>>, Option<Vec<f64>>);

/// gt and output-layer overlap of every layer, `None` where not available.
fn gt_and_output(graphs: &[NeighborGraph], labels: Option<&LabelSet>) -> Result<ChiPair, CliError> {
    let chi = |rs: Vec<OverlapResult>| rs.into_iter().map(|r| r.chi).collect::<Vec<_>>();
    let gt = labels
        .map(|y| overlap_profile(graphs, &OverlapReference::GroundTruth, Some(y)))
        .transpose()
        .stage("overlap ground truth")?
        .map(chi);
    let out = (graphs.len() >= 2)
        .then(|| overlap_profile(graphs, &OverlapReference::Layer(output_tag(graphs)), None))
        .transpose()
        .stage("overlap output")?
        .map(chi);
    Ok((gt, out))
}

fn opt(v: Option<&Vec<f64>>, i: usize) -> String {
    v.map_or(String::new(), |v| num(v[i]))
}

pub fn overlap(run: &mut Run) -> Result<(), CliError> {
    let cfg = run.cfg;
    if run.data.layers.len() < 2 && run.data.labels.is_none() {
        return Err(CliError::Usage("overlap needs at least 2 layers or labels".into()));
    }
    let graphs = run.graphs_at(cfg.k)?;
    let bins = cfg.overlap.histogram_bins;
    let header = ["layer", "reference", "chi"];
    let mut histograms = Vec::new();
    let mut push_hist = |results: &[OverlapResult]| -> Result<(), CliError> {
        for r in results {
            let h = chi_histogram(r, bins).stage("overlap histogram")?;
            for (b, count) in h.counts.iter().enumerate() {
                histograms.push(vec![
                    r.pair.0.clone(),
                    r.pair.1.clone(),
                    num(h.edges[b]),
                    num(h.edges[b + 1]),
                    count.to_string(),
                ]);
            }
        }
        Ok(())
    };

    if let Some(y) = &run.data.labels {
        let gt = overlap_profile(&graphs, &OverlapReference::GroundTruth, Some(y)).stage("overlap ground truth")?;
        run.out.csv("overlap/gt_profile.csv", &header, &profile_rows(&gt))?;
        let per_point: Vec<f64> = gt.iter().flat_map(|r| r.per_point_chi.iter().copied()).collect();
        let array = NpyArray::from_f64(vec![gt.len(), run.data.n_points()], per_point).stage("overlap ground truth")?;
        run.out.npy("overlap/gt_per_point.npy", &array)?;
        push_hist(&gt)?;
    }
    if graphs.len() >= 2 {
        let reference = OverlapReference::Layer(output_tag(&graphs));
        let out = overlap_profile(&graphs, &reference, None).stage("overlap output")?;
        run.out.csv("overlap/output_profile.csv", &header, &profile_rows(&out))?;
        push_hist(&out)?;
        let cons = overlap_profile(&graphs, &OverlapReference::Consecutive, None).stage("overlap consecutive")?;
        run.out.csv("overlap/consecutive_profile.csv", &header, &profile_rows(&cons))?;
    }
    for tag in &cfg.overlap.checkpoints {
        let r = overlap_profile(&graphs, &OverlapReference::Layer(tag.clone()), None)
            .stage(format!("overlap checkpoint {tag}"))?;
        run.out.csv(&format!("overlap/checkpoint_{tag}_profile.csv"), &header, &profile_rows(&r))?;
    }
    run.out.csv(
        "overlap/histograms.csv",
        &["layer", "reference", "bin_low", "bin_high", "count"],
        &histograms,
    )?;

    for &k in &cfg.overlap.sweep_k {
        let g = run.graphs_at(k)?;
        let (gt, out) = gt_and_output(&g, run.data.labels.as_ref())?;
        let rows = run
            .tags()
            .into_iter()
            .enumerate()
            .map(|(i, tag)| vec![tag, opt(gt.as_ref(), i), opt(out.as_ref(), i)])
            .collect::<Vec<_>>();
        run.out.csv(&format!("overlap/sweep_k/k{k}.csv"), &["layer", "chi_gt", "chi_output"], &rows)?;
    }
    for &n in &cfg.overlap.sweep_n {
        sweep_n_profile(run, n)?;
    }
    Ok(())
}

/// Overlap profiles on a stratified subsample of about `n` points that keeps
/// the ratio of classes to points per class.
fn sweep_n_profile(run: &mut Run, n: usize) -> Result<(), CliError> {
    let cfg = run.cfg;
    let y = run.data.labels.as_ref().expect("validated: N sweep has labels");
    let members = y.members();
    let q = members.len();
    let m = members.values().map(Vec::len).min().unwrap_or(0);
    let ratio = q as f64 / m as f64;
    let q_n = ((n as f64 * ratio).sqrt().round() as usize).clamp(1, q);
    let m_n = n / q_n;
    if m_n == 0 || m_n > m || q_n * m_n <= cfg.k {
        return Err(CliError::Usage(format!(
            "N sweep value {n} cannot be drawn as {q_n} classes x {m_n} points with k = {} \
             (data has {q} classes, smallest has {m} points)",
            cfg.k
        )));
    }
    let spec = SampleSpec {
        n_classes_kept: q_n,
        n_per_class: m_n,
        seed: cfg.seed,
    };
    let stage = format!("overlap N sweep {n}");
    let (graphs, ys) = {
        let sub: Vec<_> = run
            .data
            .layers
            .iter()
            .map(|x| stratified_subsample(x, y, &spec))
            .collect::<denstopo::Result<_>>()
            .stage(&stage)?;
        let ys = sub[0].1.clone();
        let graphs = sub
            .par_iter()
            .map(|(x, _, _)| build_knn_graph(x, cfg.k))
            .collect::<denstopo::Result<Vec<_>>>()
            .stage(&stage)?;
        (graphs, ys)
    };
    let (gt, out) = gt_and_output(&graphs, Some(&ys))?;
    let rows = run
        .tags()
        .into_iter()
        .enumerate()
        .map(|(i, tag)| {
            vec![tag, q_n.to_string(), m_n.to_string(), opt(gt.as_ref(), i), opt(out.as_ref(), i)]
        })
        .collect::<Vec<_>>();
    run.out.csv(
        &format!("overlap/sweep_n/n{n}.csv"),
        &["layer", "n_classes", "n_per_class", "chi_gt", "chi_output"],
        &rows,
    )
}

fn ari_or_blank(labels: &[usize], y: Option<&LabelSet>) -> Result<String, CliError> {
    y.map(|y| adjusted_rand_index(labels, y.labels()))
        .transpose()
        .stage("ari")
        .map(|v| v.map_or(String::new(), num))
}

pub fn cluster(run: &mut Run) -> Result<(), CliError> {
    let cfg = run.cfg;
    if cfg.k < 2 {
        return Err(CliError::Usage("density peaks need k >= 2".into()));
    }
    let graphs = run.graphs_at(cfg.k)?;
    let landscapes: Vec<PeakLandscape> = run
        .data
        .layers
        .par_iter()
        .zip(&graphs)
        .map(|(x, g)| PeakLandscape::from_graph(x, g, cfg.k).stage(format!("cluster {}", x.layer_id())))
        .collect::<Result<_, _>>()?;

    let zs: Vec<f64> = if cfg.cluster.sweep_z.is_empty() {
        vec![cfg.cluster.z]
    } else {
        cfg.cluster.sweep_z.clone()
    };
    let y = run.data.labels.clone();
    let y_macro = run.data.macro_labels.clone();
    let mut ari_rows = Vec::new();
    let mut sweep_rows = Vec::new();
    for (tag, land) in run.tags().into_iter().zip(&landscapes) {
        let stage = format!("cluster {tag}");
        for &z in &zs {
            let r = land.merge(z).stage(&stage)?;
            sweep_rows.push(vec![
                tag.clone(),
                num(z),
                r.partition.n_peaks().to_string(),
                ari_or_blank(&r.partition.peak_label, y.as_ref())?,
            ]);
        }

        let r = land.merge(cfg.cluster.z).stage(&stage)?;
        let p = &r.partition;
        ari_rows.push(vec![
            tag.clone(),
            num(cfg.cluster.z),
            p.n_peaks().to_string(),
            ari_or_blank(&p.peak_label, y.as_ref())?,
            ari_or_blank(&p.peak_label, y_macro.as_ref())?,
        ]);

        let dir = format!("cluster/{tag}");
        let n = p.n_points();
        run.out.npy(
            &format!("{dir}/log_density.npy"),
            &NpyArray::from_f64(vec![n], r.density.log_density.clone()).stage(&stage)?,
        )?;
        run.out.npy(
            &format!("{dir}/peak_labels.npy"),
            &NpyArray::new(vec![n], ArrayData::I64(p.peak_label.iter().map(|&l| l as i64).collect()))
                .stage(&stage)?,
        )?;
        let sizes = p.sizes();
        let peak_rows: Vec<Vec<String>> = (0..p.n_peaks())
            .map(|a| {
                vec![
                    a.to_string(),
                    p.maxima[a].to_string(),
                    num(p.peak_log_density[a]),
                    sizes[a].to_string(),
                ]
            })
            .collect();
        run.out.csv(&format!("{dir}/peaks.csv"), &["peak", "maximum", "log_density", "size"], &peak_rows)?;
        let saddle_rows: Vec<Vec<String>> = r
            .saddles
            .iter()
            .map(|(a, b, s)| vec![a.to_string(), b.to_string(), s.point.to_string(), num(s.log_density)])
            .collect();
        run.out.csv(
            &format!("{dir}/saddles.csv"),
            &["peak_a", "peak_b", "point", "log_density"],
            &saddle_rows,
        )?;
        let tree = build_dendrogram(p, &r.saddles, missing_saddle_fill(&r.density));
        run.out.text(&format!("{dir}/dendrogram.nwk"), &format!("{}\n", tree.to_newick()))?;
        let merge_rows: Vec<Vec<String>> = tree
            .merges
            .iter()
            .enumerate()
            .map(|(m, mg)| {
                vec![
                    (tree.n_leaves() + m).to_string(),
                    mg.left.to_string(),
                    mg.right.to_string(),
                    num(mg.height),
                    mg.size.to_string(),
                ]
            })
            .collect();
        run.out.csv(
            &format!("{dir}/dendrogram.csv"),
            &["node", "left", "right", "height", "size"],
            &merge_rows,
        )?;
        if let Some(y) = &y {
            let min_count = cfg.cluster.min_count.unwrap_or_else(|| default_min_count(y));
            let report = peak_composition(p, y, min_count).stage(&stage)?;
            run.out.text(&format!("{dir}/composition.txt"), &report.render())?;
        }
    }
    run.out.csv(
        "cluster/ari.csv",
        &["layer", "z", "n_peaks", "ari_class", "ari_macro"],
        &ari_rows,
    )?;
    run.out.csv("cluster/z_sweep.csv", &["layer", "z", "n_peaks", "ari_class"], &sweep_rows)
}

pub fn diagnostics(run: &mut Run) -> Result<(), CliError> {
    let cfg = run.cfg;
    let diag = &cfg.diagnostics;
    let graphs = run.graphs_at(cfg.k)?;
    let tags = run.tags();

    let mut id_rows = Vec::new();
    let mut hub_rows = Vec::new();
    for (tag, g) in tags.iter().zip(&graphs) {
        if g.k() >= 2 {
            let d = estimate_intrinsic_dimension(g).stage(format!("intrinsic dimension {tag}"))?;
            id_rows.push(vec![tag.clone(), num(d)]);
        }
        for (rank, (point, degree)) in top_hubs(g, diag.hubs).into_iter().enumerate() {
            hub_rows.push(vec![
                tag.clone(),
                (rank + 1).to_string(),
                point.to_string(),
                run.data.source_index[point].to_string(),
                degree.to_string(),
            ]);
        }
    }
    run.out.csv("diagnostics/intrinsic_dimension.csv", &["layer", "intrinsic_dim"], &id_rows)?;
    run.out.csv(
        "diagnostics/hubs.csv",
        &["layer", "rank", "point", "source_index", "in_degree"],
        &hub_rows,
    )?;

    if run.data.layers.len() >= 2 {
        let subset = random_subset(run.data.n_points(), diag.cka_max_points, cfg.seed);
        let layers: Vec<_> = run
            .data
            .layers
            .iter()
            .map(|x| x.select_rows(&subset))
            .collect::<denstopo::Result<_>>()
            .stage("cka")?;
        let reference = layers.last().expect("at least two layers");
        let rows = layers
            .par_iter()
            .map(|x| {
                let stage = format!("cka {}", x.layer_id());
                let mut row = vec![x.layer_id().to_string(), reference.layer_id().to_string()];
                row.push(num(linear_cka(x, reference).stage(&stage)?));
                for &f in &diag.cka_fractions {
                    row.push(num(gaussian_cka(x, reference, f).stage(&stage)?));
                }
                Ok(row)
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        let mut header = vec!["layer".to_string(), "reference".into(), "linear".into()];
        header.extend(diag.cka_fractions.iter().map(|f| format!("gaussian_{}", num(*f))));
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        run.out.csv("diagnostics/cka.csv", &header, &rows)?;
    }

    if let Some(path) = &cfg.images {
        let images = load_image_stack(path).stage("entropy images")?;
        run.data
            .input_hashes
            .insert(path.display().to_string(), crate::data::file_hash(path)?);
        // Without sampling there must be one image per point; with sampling the
        // stack is indexed by original row.
        let fits = if cfg.sample.is_some() {
            run.data.source_index.iter().all(|&i| i < images.len())
        } else {
            images.len() == run.data.n_points()
        };
        if !fits {
            return Err(denstopo::Error::LengthMismatch {
                expected: run.data.n_points(),
                found: images.len(),
            })
            .stage("entropy images");
        }
        let entropy: Vec<f64> = run
            .data
            .source_index
            .par_iter()
            .map(|&i| image_shannon_entropy(&images[i]))
            .collect::<denstopo::Result<_>>()
            .stage("entropy images")?;
        run.out.npy(
            "diagnostics/image_entropy.npy",
            &NpyArray::from_f64(vec![entropy.len()], entropy.clone()).stage("entropy images")?,
        )?;
        let mut rows = Vec::new();
        for (tag, g) in tags.iter().zip(&graphs) {
            let stage = format!("entropy {tag}");
            let profile = neighborhood_entropy(g, &entropy, cfg.k).stage(&stage)?;
            let samples = shuffled_entropy_samples(g, &entropy, cfg.k, diag.n_shuffles, cfg.seed).stage(&stage)?;
            let mean = samples.iter().sum::<f64>() / samples.len() as f64;
            let var = if samples.len() > 1 {
                samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (samples.len() - 1) as f64
            } else {
                0.0
            };
            rows.push(vec![tag.clone(), num(profile.layer_mean), num(mean), num(var.sqrt())]);
        }
        run.out.csv(
            "diagnostics/entropy.csv",
            &["layer", "neighborhood_entropy", "shuffled_mean", "shuffled_std"],
            &rows,
        )?;
    }
    Ok(())
}
