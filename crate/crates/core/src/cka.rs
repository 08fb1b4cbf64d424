//! Centered kernel alignment between two representations of the same points.

use rayon::prelude::*;

use crate::dataset::ActivationMatrix;
use crate::error::{Error, Result};
use crate::knn::{build_knn_graph, mean_first_nn_distance, squared_distance};

/// Which products linear CKA is evaluated with. Both give the same value.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CkaRoute {
    /// `D×D` cross-covariances; cheaper when features are fewer than points.
    FeatureSpace,
    /// `N×N` Gram matrices.
    GramSpace,
}

fn check_same_points(x: &ActivationMatrix, y: &ActivationMatrix) -> Result<()> {
    if x.n_points() != y.n_points() {
        return Err(Error::LengthMismatch {
            expected: x.n_points(),
            found: y.n_points(),
        });
    }
    Ok(())
}

/// Column-centered copy, row-major.
fn centered_columns(x: &ActivationMatrix) -> Vec<f64> {
    let (n, d) = (x.n_points(), x.n_features());
    let mut means = vec![0.0; d];
    for i in 0..n {
        for (m, v) in means.iter_mut().zip(x.row(i)) {
            *m += v;
        }
    }
    means.iter_mut().for_each(|m| *m /= n as f64);
    let mut out = x.values().to_vec();
    for row in out.chunks_exact_mut(d) {
        for (v, m) in row.iter_mut().zip(&means) {
            *v -= m;
        }
    }
    out
}

/// `Aᵀ B` for row-major `n×da` and `n×db`, returned row-major `da×db`.
fn transpose_product(a: &[f64], da: usize, b: &[f64], db: usize, n: usize) -> Vec<f64> {
    (0..da)
        .into_par_iter()
        .flat_map_iter(|p| {
            let mut row = vec![0.0; db];
            for i in 0..n {
                let ap = a[i * da + p];
                for (r, bv) in row.iter_mut().zip(&b[i * db..(i + 1) * db]) {
                    *r += ap * bv;
                }
            }
            row
        })
        .collect()
}

/// `A Aᵀ` for row-major `n×d`.
fn gram(a: &[f64], d: usize, n: usize) -> Vec<f64> {
    (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let ai = &a[i * d..(i + 1) * d];
            (0..n).map(move |j| ai.iter().zip(&a[j * d..(j + 1) * d]).map(|(u, v)| u * v).sum())
        })
        .collect()
}

fn frobenius_sq(m: &[f64]) -> f64 {
    m.iter().map(|v| v * v).sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

fn alignment(cross: f64, self_x: f64, self_y: f64) -> Result<f64> {
    let denom = self_x.sqrt() * self_y.sqrt();
    if !(denom > 0.0) {
        return Err(Error::Numerical(
            "a representation has zero variance; CKA is undefined".into(),
        ));
    }
    Ok(cross / denom)
}

pub fn linear_cka_with(x: &ActivationMatrix, y: &ActivationMatrix, route: CkaRoute) -> Result<f64> {
    check_same_points(x, y)?;
    let n = x.n_points();
    let (dx, dy) = (x.n_features(), y.n_features());
    let xc = centered_columns(x);
    let yc = centered_columns(y);
    match route {
        CkaRoute::FeatureSpace => {
            let yx = transpose_product(&yc, dy, &xc, dx, n);
            let xx = transpose_product(&xc, dx, &xc, dx, n);
            let yy = transpose_product(&yc, dy, &yc, dy, n);
            alignment(frobenius_sq(&yx), frobenius_sq(&xx), frobenius_sq(&yy))
        }
        CkaRoute::GramSpace => {
            let kx = gram(&xc, dx, n);
            let ky = gram(&yc, dy, n);
            alignment(dot(&kx, &ky), frobenius_sq(&kx), frobenius_sq(&ky))
        }
    }
}

/// Linear CKA, evaluated in whichever space is smaller and clamped to
/// [0, 1] against rounding.
pub fn linear_cka(x: &ActivationMatrix, y: &ActivationMatrix) -> Result<f64> {
    let route = if x.n_features().max(y.n_features()) < x.n_points() {
        CkaRoute::FeatureSpace
    } else {
        CkaRoute::GramSpace
    };
    Ok(linear_cka_with(x, y, route)?.clamp(0.0, 1.0))
}

/// Gaussian Gram matrix with bandwidth `sigma`, put through the unbiased
/// HSIC centering: zero diagonal, then the corrected row/column means removed.
///
/// Entries are rescaled so the largest off-diagonal one is 1. The centering is
/// linear and CKA is a normalized ratio, so the rescaling does not change the
/// result, but it keeps small bandwidths from underflowing to zero.
fn unbiased_gaussian_gram(x: &ActivationMatrix, sigma: f64) -> Vec<f64> {
    let n = x.n_points();
    let scale = 1.0 / (2.0 * sigma * sigma);
    let sq: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let xi = x.row(i);
            (0..n).map(move |j| squared_distance(xi, x.row(j)))
        })
        .collect();
    let nearest = sq
        .iter()
        .enumerate()
        .filter(|(f, _)| f / n != f % n)
        .map(|(_, &v)| v)
        .fold(f64::INFINITY, f64::min);
    let mut k: Vec<f64> = sq
        .iter()
        .enumerate()
        .map(|(f, &v)| if f / n == f % n { 0.0 } else { (-(v - nearest) * scale).exp() })
        .collect();
    let mut means: Vec<f64> = k.chunks_exact(n).map(|r| r.iter().sum::<f64>() / (n - 2) as f64).collect();
    let correction = means.iter().sum::<f64>() / (2 * (n - 1)) as f64;
    means.iter_mut().for_each(|m| *m -= correction);
    for (i, row) in k.chunks_exact_mut(n).enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = if i == j { 0.0 } else { *v - means[i] - means[j] };
        }
    }
    k
}

/// Gaussian-kernel bandwidth for `x`: `fraction` times its mean first-neighbor distance.
pub fn gaussian_bandwidth(x: &ActivationMatrix, fraction: f64) -> Result<f64> {
    if !(fraction > 0.0) {
        return Err(Error::InvalidParameter("bandwidth fraction must be positive".into()));
    }
    let d1 = mean_first_nn_distance(&build_knn_graph(x, 1)?);
    if !(d1 > 0.0) {
        return Err(Error::Numerical(
            "all points coincide with a neighbor; Gaussian bandwidth is zero".into(),
        ));
    }
    Ok(fraction * d1)
}

/// CKA of Gaussian Gram matrices under the unbiased HSIC estimator. Each
/// representation gets its own bandwidth, `bandwidth_fraction` times its mean
/// first-neighbor distance. Needs at least 4 points; slightly negative
/// estimates are reported as 0.
pub fn gaussian_cka(x: &ActivationMatrix, y: &ActivationMatrix, bandwidth_fraction: f64) -> Result<f64> {
    check_same_points(x, y)?;
    if x.n_points() < 4 {
        return Err(Error::InvalidParameter("Gaussian CKA needs at least 4 points".into()));
    }
    let kx = unbiased_gaussian_gram(x, gaussian_bandwidth(x, bandwidth_fraction)?);
    let ky = unbiased_gaussian_gram(y, gaussian_bandwidth(y, bandwidth_fraction)?);
    Ok(alignment(dot(&kx, &ky), frobenius_sq(&kx), frobenius_sq(&ky))?.clamp(0.0, 1.0))
}
