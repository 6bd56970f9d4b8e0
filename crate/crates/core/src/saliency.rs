//! Information-entropy ranking of candidate bands.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::collinearity::BandMatrix;
use crate::error::{Error, Result};

pub const DEFAULT_BIT_DEPTH: u32 = 14;

/// Shannon entropy, in bits, of band `i` quantised into `2^bit_depth`
/// equal-width bins spanning the band's observed range.
pub fn band_entropy(m: &BandMatrix, i: usize, bit_depth: u32) -> Result<f64> {
    if i >= m.bands() {
        return Err(Error::DimensionMismatch {
            expected: m.bands(),
            got: i,
        });
    }
    if !(1..=16).contains(&bit_depth) {
        return Err(Error::precondition(format!("bit depth {bit_depth} outside 1..=16")));
    }
    Ok(histogram_entropy(m.column(i), 1usize << bit_depth))
}

fn histogram_entropy(values: &[f64], bins: usize) -> f64 {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    if !(span > 0.0) {
        return 0.0;
    }
    let mut counts = vec![0u32; bins];
    let scale = bins as f64 / span;
    for &v in values {
        let bin = (((v - lo) * scale) as usize).min(bins - 1);
        counts[bin] += 1;
    }
    let n = values.len() as f64;
    let h = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum::<f64>();
    h.max(0.0)
}

/// Bands ordered by descending entropy, ties by ascending band index.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyRanking {
    entries: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingRow {
    pub band_index: usize,
    pub wavelength_nm: f64,
    pub entropy_bits: f64,
    pub rank: usize,
}

impl EntropyRanking {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Band indices, best first.
    pub fn order(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.0).collect()
    }

    pub fn entropy_bits(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.1).collect()
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    /// `rank` is 1-based.
    pub fn rows(&self, wavelengths_nm: &[f64]) -> Vec<RankingRow> {
        self.entries
            .iter()
            .enumerate()
            .map(|(r, &(b, h))| RankingRow {
                band_index: b,
                wavelength_nm: wavelengths_nm[b],
                entropy_bits: h,
                rank: r + 1,
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, wavelengths_nm: &[f64], w: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(w);
        for row in self.rows(wavelengths_nm) {
            writer.serialize(row)?;
        }
        writer.flush().map_err(|e| Error::Data(format!("csv flush: {e}")))
    }
}

pub fn read_ranking_csv<R: Read>(r: R) -> Result<Vec<RankingRow>> {
    csv::Reader::from_reader(r)
        .deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

pub fn rank_by_entropy(
    m: &BandMatrix,
    candidates: &[usize],
    bit_depth: u32,
) -> Result<EntropyRanking> {
    if candidates.is_empty() {
        return Err(Error::precondition("no candidate bands to rank"));
    }
    let mut sorted = candidates.to_vec();
    sorted.sort_unstable();
    if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::precondition(format!("duplicate candidate band {}", w[0])));
    }
    let entropies = candidates
        .par_iter()
        .map(|&b| band_entropy(m, b, bit_depth))
        .collect::<Result<Vec<_>>>()?;
    let mut entries: Vec<(usize, f64)> = candidates.iter().copied().zip(entropies).collect();
    entries.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(EntropyRanking { entries })
}
