//! Image Shannon entropy and its average over kNN neighborhoods.

use std::path::Path;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::knn::NeighborGraph;
use crate::npy::{self, ArrayData};
use crate::rng::{substream, Substream};

/// An 8-bit image stored height × width × channels, channels fastest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    channels: usize,
    values: Vec<u8>,
}

impl ImageTensor {
    pub fn new(height: usize, width: usize, channels: usize, values: Vec<u8>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::InvalidParameter("image needs at least one channel".into()));
        }
        if values.len() != height * width * channels {
            return Err(Error::LengthMismatch {
                expected: height * width * channels,
                found: values.len(),
            });
        }
        Ok(ImageTensor {
            height,
            width,
            channels,
            values,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn n_pixels(&self) -> usize {
        self.height * self.width
    }
}

/// Splits an `N×H×W×C` (or `N×H×W`, single channel) `u1` container into images.
pub fn load_image_stack(path: impl AsRef<Path>) -> Result<Vec<ImageTensor>> {
    let array = npy::read_npy_file(path)?;
    let ArrayData::U8(values) = array.data else {
        return Err(Error::Unsupported("images must be stored as u1".into()));
    };
    let (n, h, w, c) = match array.shape[..] {
        [n, h, w] => (n, h, w, 1),
        [n, h, w, c] => (n, h, w, c),
        _ => {
            return Err(Error::Unsupported(format!(
                "image stack must be 3-D or 4-D, got {:?}",
                array.shape
            )))
        }
    };
    let stride = h * w * c;
    (0..n)
        .map(|i| ImageTensor::new(h, w, c, values[i * stride..(i + 1) * stride].to_vec()))
        .collect()
}

/// Mean over channels of the 256-bin Shannon entropy, in bits.
pub fn image_shannon_entropy(img: &ImageTensor) -> Result<f64> {
    let n_pixels = img.n_pixels();
    if n_pixels == 0 {
        return Err(Error::InvalidParameter("empty image".into()));
    }
    let mut total = 0.0;
    for ch in 0..img.channels {
        let mut hist = [0usize; 256];
        for v in img.values.iter().skip(ch).step_by(img.channels) {
            hist[*v as usize] += 1;
        }
        total -= hist
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / n_pixels as f64;
                p * p.log2()
            })
            .sum::<f64>();
    }
    Ok(total / img.channels as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EntropyProfile {
    /// Mean entropy of each point's k neighbors.
    pub per_point: Vec<f64>,
    pub layer_mean: f64,
}

fn check_inputs(g: &NeighborGraph, s: &[f64], k: usize) -> Result<()> {
    if s.len() != g.n_points() {
        return Err(Error::LengthMismatch {
            expected: g.n_points(),
            found: s.len(),
        });
    }
    if k == 0 || k > g.k() {
        return Err(Error::InvalidParameter(format!(
            "entropy k = {k} must be in 1..={}",
            g.k()
        )));
    }
    Ok(())
}

fn layer_mean_with(g: &NeighborGraph, s: &[f64], k: usize, target: impl Fn(usize) -> usize) -> (Vec<f64>, f64) {
    let per_point: Vec<f64> = (0..g.n_points())
        .map(|i| g.neighbors(i)[..k].iter().map(|&j| s[target(j)]).sum::<f64>() / k as f64)
        .collect();
    let mean = per_point.iter().sum::<f64>() / per_point.len() as f64;
    (per_point, mean)
}

/// Average image entropy within each point's first `k` neighbors.
pub fn neighborhood_entropy(g: &NeighborGraph, s: &[f64], k: usize) -> Result<EntropyProfile> {
    check_inputs(g, s, k)?;
    let (per_point, layer_mean) = layer_mean_with(g, s, k, |j| j);
    Ok(EntropyProfile {
        per_point,
        layer_mean,
    })
}

/// Layer-mean entropy for each of `n_shuffles` random relabelings of the
/// neighbor targets.
pub fn shuffled_entropy_samples(
    g: &NeighborGraph,
    s: &[f64],
    k: usize,
    n_shuffles: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    check_inputs(g, s, k)?;
    if n_shuffles == 0 {
        return Err(Error::InvalidParameter("need at least one shuffle".into()));
    }
    let mut rng = substream(seed, Substream::ShuffleBaseline);
    let mut perm: Vec<usize> = (0..g.n_points()).collect();
    Ok((0..n_shuffles)
        .map(|_| {
            perm.shuffle(&mut rng);
            layer_mean_with(g, s, k, |j| perm[j]).1
        })
        .collect())
}

/// Mean of [`shuffled_entropy_samples`].
pub fn shuffled_entropy_baseline(
    g: &NeighborGraph,
    s: &[f64],
    k: usize,
    n_shuffles: usize,
    seed: u64,
) -> Result<f64> {
    let samples = shuffled_entropy_samples(g, s, k, n_shuffles, seed)?;
    Ok(samples.iter().sum::<f64>() / samples.len() as f64)
}
