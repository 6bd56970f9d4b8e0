//! Multispectral sensor simulation: one Gaussian optical filter per selected
//! band, applied to every pixel spectrum as a weighted average.

use std::io::{Read, Write};

use crate::datacube::{HyperCube, LabeledPatchSet, WavelengthAxis};
use crate::error::{Error, Result};

pub const DEFAULT_FWHM_BANDS: f64 = 5.0;

/// Unnormalised Gaussian filter response at `offset` bands from the centre.
pub fn gaussian_response(offset: f64, fwhm_bands: f64) -> f64 {
    let sigma = fwhm_bands / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt());
    (-offset * offset / (2.0 * sigma * sigma)).exp()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    /// Centre band of every filter, ascending.
    pub centers: Vec<usize>,
    pub center_wavelengths_nm: Vec<f64>,
    pub fwhm_bands: f64,
    /// One row per filter over all source bands; each row sums to 1.
    pub weights: Vec<Vec<f64>>,
}

impl FilterBank {
    pub fn filters(&self) -> usize {
        self.centers.len()
    }

    pub fn source_bands(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(w);
        let mut header = vec![
            "center_band".to_string(),
            "center_wavelength_nm".to_string(),
            "fwhm_bands".to_string(),
        ];
        header.extend((0..self.source_bands()).map(|b| format!("w{b}")));
        writer.write_record(&header)?;
        for ((c, wl), row) in self.centers.iter().zip(&self.center_wavelengths_nm).zip(&self.weights) {
            let mut rec = vec![c.to_string(), wl.to_string(), self.fwhm_bands.to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            writer.write_record(&rec)?;
        }
        writer.flush().map_err(|e| Error::Data(format!("csv flush: {e}")))
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(r);
        let mut bank = FilterBank {
            centers: Vec::new(),
            center_wavelengths_nm: Vec::new(),
            fwhm_bands: 0.0,
            weights: Vec::new(),
        };
        for record in reader.records() {
            let record = record?;
            let num = |i: usize| -> Result<f64> {
                record
                    .get(i)
                    .and_then(|f| f.parse().ok())
                    .ok_or_else(|| Error::Data(format!("bad filter-bank field {i}")))
            };
            bank.centers.push(
                record
                    .get(0)
                    .and_then(|f| f.parse().ok())
                    .ok_or_else(|| Error::Data("bad center_band".into()))?,
            );
            bank.center_wavelengths_nm.push(num(1)?);
            bank.fwhm_bands = num(2)?;
            bank.weights.push((3..record.len()).map(num).collect::<Result<_>>()?);
        }
        Ok(bank)
    }
}

/// Gaussian filters of width `fwhm_bands` centred on `centers`, evaluated on
/// the band-index grid, truncated at the spectrum edges and normalised to
/// unit sum.
pub fn build_filter_bank(
    centers: &[usize],
    axis: &WavelengthAxis,
    fwhm_bands: f64,
) -> Result<FilterBank> {
    if centers.is_empty() {
        return Err(Error::precondition("no filter centres"));
    }
    if !(fwhm_bands > 0.0) || !fwhm_bands.is_finite() {
        return Err(Error::precondition(format!("FWHM must be positive, got {fwhm_bands}")));
    }
    let bands = axis.len();
    let mut sorted = centers.to_vec();
    sorted.sort_unstable();
    if let Some(&bad) = sorted.iter().find(|&&c| c >= bands) {
        return Err(Error::DimensionMismatch {
            expected: bands,
            got: bad,
        });
    }
    if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::precondition(format!("duplicate filter centre {}", w[0])));
    }
    let weights = sorted
        .iter()
        .map(|&c| {
            let mut row: Vec<f64> = (0..bands)
                .map(|b| gaussian_response(b as f64 - c as f64, fwhm_bands))
                .collect();
            let sum: f64 = row.iter().sum();
            row.iter_mut().for_each(|w| *w /= sum);
            row
        })
        .collect();
    Ok(FilterBank {
        center_wavelengths_nm: sorted.iter().map(|&c| axis.as_slice()[c]).collect(),
        centers: sorted,
        fwhm_bands,
        weights,
    })
}

fn filter_pixels(data: &[f64], bands: usize, bank: &FilterBank) -> Result<Vec<f64>> {
    if bank.source_bands() != bands {
        return Err(Error::DimensionMismatch {
            expected: bands,
            got: bank.source_bands(),
        });
    }
    Ok(data
        .chunks_exact(bands)
        .flat_map(|px| {
            bank.weights
                .iter()
                .map(move |row| row.iter().zip(px).map(|(w, v)| w * v).sum::<f64>())
        })
        .collect())
}

/// Simulated `k`-band cube; the wavelength axis becomes the filter centres.
pub fn simulate_cube(cube: &HyperCube, bank: &FilterBank) -> Result<HyperCube> {
    let data = filter_pixels(cube.data(), cube.bands(), bank)?;
    let axis = WavelengthAxis::new(bank.center_wavelengths_nm.clone())?;
    HyperCube::new(cube.height(), cube.width(), data, axis)
}

/// Simulated `k`-band patch set with the original labels.
pub fn simulate_patches(set: &LabeledPatchSet, bank: &FilterBank) -> Result<LabeledPatchSet> {
    let data = filter_pixels(set.data(), set.bands(), bank)?;
    set.with_data(data, WavelengthAxis::new(bank.center_wavelengths_nm.clone())?)
}
