use super::LabeledPatchSet;
use crate::error::{Error, Result};

/// Standard deviations below this are replaced by 1 so degenerate bands map
/// to zero instead of NaN.
pub const MIN_STD: f64 = 1e-12;

/// Per-band standardisation parameters (population standard deviation).
#[derive(Debug, Clone, PartialEq)]
pub struct ZScoreParams {
    pub mean_per_band: Vec<f64>,
    pub std_per_band: Vec<f64>,
}

impl ZScoreParams {
    fn from_moments(mean: Vec<f64>, var: Vec<f64>) -> Self {
        let std_per_band = var
            .into_iter()
            .map(|v| {
                let s = v.max(0.0).sqrt();
                if s < MIN_STD {
                    1.0
                } else {
                    s
                }
            })
            .collect();
        Self {
            mean_per_band: mean,
            std_per_band,
        }
    }

    pub fn bands(&self) -> usize {
        self.mean_per_band.len()
    }

    #[inline]
    pub fn apply(&self, band: usize, v: f64) -> f64 {
        (v - self.mean_per_band[band]) / self.std_per_band[band]
    }
}

/// Fits mean and standard deviation per band over every pixel of every patch.
pub fn zscore_fit(set: &LabeledPatchSet) -> Result<ZScoreParams> {
    if set.is_empty() {
        return Err(Error::EmptyDataset("cannot fit z-score on an empty set".into()));
    }
    let b = set.bands();
    let n = (set.len() * set.pixels_per_patch()) as f64;
    let mut mean = vec![0.0; b];
    for px in set.data().chunks_exact(b) {
        mean.iter_mut().zip(px).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; b];
    for px in set.data().chunks_exact(b) {
        for ((s, v), m) in var.iter_mut().zip(px).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    var.iter_mut().for_each(|s| *s /= n);
    Ok(ZScoreParams::from_moments(mean, var))
}

pub fn zscore_apply(set: &LabeledPatchSet, params: &ZScoreParams) -> Result<LabeledPatchSet> {
    let b = set.bands();
    if params.bands() != b {
        return Err(Error::DimensionMismatch {
            expected: b,
            got: params.bands(),
        });
    }
    let data = set
        .data()
        .chunks_exact(b)
        .flat_map(|px| px.iter().enumerate().map(|(band, &v)| params.apply(band, v)))
        .collect();
    set.with_data(data, set.axis().clone())
}

/// Per-patch, per-band pixel mean and sum of squared deviations.
///
/// Lets cross-validation fit z-score parameters on any subset of patches
/// without copying them, and gives the spatial-mean features for free.
#[derive(Debug, Clone)]
pub struct PatchMoments {
    bands: usize,
    pixels: usize,
    means: Vec<f64>,
    m2: Vec<f64>,
}

impl PatchMoments {
    pub fn new(set: &LabeledPatchSet) -> Self {
        let b = set.bands();
        let pixels = set.pixels_per_patch();
        let mut means = vec![0.0; set.len() * b];
        let mut m2 = vec![0.0; set.len() * b];
        for i in 0..set.len() {
            let patch = set.patch(i);
            let mean = &mut means[i * b..(i + 1) * b];
            for px in patch.chunks_exact(b) {
                mean.iter_mut().zip(px).for_each(|(m, v)| *m += v);
            }
            mean.iter_mut().for_each(|m| *m /= pixels as f64);
            let sq = &mut m2[i * b..(i + 1) * b];
            for px in patch.chunks_exact(b) {
                for ((s, v), m) in sq.iter_mut().zip(px).zip(mean.iter()) {
                    *s += (v - m) * (v - m);
                }
            }
        }
        Self {
            bands: b,
            pixels,
            means,
            m2,
        }
    }

    pub fn len(&self) -> usize {
        self.means.len() / self.bands
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    /// Spatial mean of `band` in patch `i`.
    #[inline]
    pub fn mean(&self, i: usize, band: usize) -> f64 {
        self.means[i * self.bands + band]
    }

    /// Z-score parameters over the pixels of the patches at `indices`,
    /// merged with the pairwise (Chan et al.) update.
    pub fn fit(&self, indices: &[usize]) -> Result<ZScoreParams> {
        if indices.is_empty() {
            return Err(Error::EmptyDataset("cannot fit z-score on an empty set".into()));
        }
        let b = self.bands;
        let nb = self.pixels as f64;
        let mut count = 0.0;
        let mut mean = vec![0.0; b];
        let mut m2 = vec![0.0; b];
        for &i in indices {
            let n = count + nb;
            for band in 0..b {
                let pm = self.means[i * b + band];
                let delta = pm - mean[band];
                mean[band] += delta * nb / n;
                m2[band] += self.m2[i * b + band] + delta * delta * count * nb / n;
            }
            count = n;
        }
        let var = m2.into_iter().map(|s| s / count).collect();
        Ok(ZScoreParams::from_moments(mean, var))
    }
}
