//! Pairwise variance inflation factors and the inter-band redundancy scan
//! that pre-selects candidate bands.
//!
//! For every band `x` the scan walks left (`x-1, x-2, ...`) while the VIF
//! between `x` and the neighbour stays above `theta`, and likewise to the
//! right. The walk lengths `d_left[x]`, `d_right[x]` measure how far the
//! band's redundancy zone extends on each side; `d[x] = |d_left - d_right|`
//! is small at the centre of a zone, so local minima of `d` are the zone
//! centres.

use std::io::{Read, Write};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datacube::{HyperCube, LabeledPatchSet, WavelengthAxis};
use crate::error::{Error, Result};
use crate::regression::{pairwise_r2, subsample_stride, vif_from_r2};

pub use crate::regression::VIF_MAX;

/// Default row cap for OLS fits.
pub const DEFAULT_SUBSAMPLE_CAP: usize = 100_000;

/// Candidates must have `d` strictly below this.
pub const MAX_CANDIDATE_DISTANCE: usize = 5;

/// Pixel samples by bands, stored column by column.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    rows: usize,
    columns: Vec<Vec<f64>>,
    axis: WavelengthAxis,
    subsample_cap: usize,
}

impl BandMatrix {
    pub fn from_columns(columns: Vec<Vec<f64>>, axis: WavelengthAxis) -> Result<Self> {
        if columns.len() != axis.len() {
            return Err(Error::DimensionMismatch {
                expected: axis.len(),
                got: columns.len(),
            });
        }
        let rows = columns[0].len();
        if rows < 2 {
            return Err(Error::precondition(format!(
                "band matrix needs at least 2 rows, got {rows}"
            )));
        }
        for (b, c) in columns.iter().enumerate() {
            if c.len() != rows {
                return Err(Error::DimensionMismatch {
                    expected: rows,
                    got: c.len(),
                });
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data(format!("band {b} has non-finite values")));
            }
        }
        Ok(Self {
            rows,
            columns,
            axis,
            subsample_cap: DEFAULT_SUBSAMPLE_CAP,
        })
    }

    /// Columns labelled with their own index as wavelength; handy for
    /// synthetic data.
    pub fn from_columns_indexed(columns: Vec<Vec<f64>>) -> Result<Self> {
        let axis = WavelengthAxis::linear(0.0, 1.0, columns.len())?;
        Self::from_columns(columns, axis)
    }

    fn from_interleaved(data: &[f64], bands: usize, axis: WavelengthAxis) -> Result<Self> {
        let rows = data.len() / bands;
        let mut columns = vec![Vec::with_capacity(rows); bands];
        for px in data.chunks_exact(bands) {
            columns.iter_mut().zip(px).for_each(|(c, &v)| c.push(v));
        }
        Self::from_columns(columns, axis)
    }

    /// Every pixel of every patch, one row each.
    pub fn from_patch_set(set: &LabeledPatchSet) -> Result<Self> {
        Self::from_interleaved(set.data(), set.bands(), set.axis().clone())
    }

    pub fn from_cube(cube: &HyperCube) -> Result<Self> {
        Self::from_interleaved(cube.data(), cube.bands(), cube.axis().clone())
    }

    /// Caps the number of rows used by OLS fits; `0` disables the cap.
    pub fn with_subsample_cap(mut self, cap: usize) -> Self {
        self.subsample_cap = cap;
        self
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn bands(&self) -> usize {
        self.columns.len()
    }

    pub fn axis(&self) -> &WavelengthAxis {
        &self.axis
    }

    pub fn column(&self, band: usize) -> &[f64] {
        &self.columns[band]
    }

    /// Row step used for OLS fits.
    pub fn ols_stride(&self) -> usize {
        subsample_stride(self.rows, self.subsample_cap)
    }

    fn check_band(&self, band: usize) -> Result<()> {
        if band >= self.bands() {
            return Err(Error::DimensionMismatch {
                expected: self.bands(),
                got: band,
            });
        }
        Ok(())
    }
}

/// VIF between two bands from the simple OLS fit of one on the other:
/// `1 / (1 - R²)`, or [`VIF_MAX`] for an exact fit or a constant band.
pub fn vif_pair(m: &BandMatrix, i: usize, j: usize) -> Result<f64> {
    m.check_band(i)?;
    m.check_band(j)?;
    if i == j {
        return Err(Error::precondition(format!("vif_pair called with i == j == {i}")));
    }
    Ok(vif_from_r2(pairwise_r2(m.column(j), m.column(i), m.ols_stride())))
}

/// Symmetric, lazily filled cache of pairwise VIFs, safe to share between
/// threads. Each pair is computed at most once.
#[derive(Debug)]
pub struct VifTable {
    size: usize,
    cells: Vec<OnceLock<f64>>,
    fits: AtomicUsize,
}

impl VifTable {
    pub fn new(size: usize) -> Self {
        Self {
            size,
            cells: (0..size * size.saturating_sub(1) / 2).map(|_| OnceLock::new()).collect(),
            fits: AtomicUsize::new(0),
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    fn slot(&self, i: usize, j: usize) -> usize {
        let (lo, hi) = if i < j { (i, j) } else { (j, i) };
        debug_assert!(lo != hi && hi < self.size);
        hi * (hi - 1) / 2 + lo
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.cells[self.slot(i, j)].get().copied()
    }

    /// Cached VIF of `(i, j)`, computing it from `m` on first use.
    pub fn vif(&self, m: &BandMatrix, i: usize, j: usize) -> f64 {
        *self.cells[self.slot(i, j)].get_or_init(|| {
            self.fits.fetch_add(1, Ordering::Relaxed);
            vif_pair(m, i, j).expect("band indices checked by caller")
        })
    }

    /// Number of OLS fits performed so far.
    pub fn fits(&self) -> usize {
        self.fits.load(Ordering::Relaxed)
    }

    /// Filled entries as `(i, j, vif)` with `i < j`.
    pub fn entries(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for hi in 1..self.size {
            for lo in 0..hi {
                if let Some(v) = self.get(lo, hi) {
                    out.push((lo, hi, v));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IbraResult {
    pub theta: f64,
    pub wavelengths_nm: Vec<f64>,
    pub d_left: Vec<usize>,
    pub d_right: Vec<usize>,
    pub d: Vec<usize>,
    pub candidates: Vec<usize>,
}

/// One line of the per-band IBRA CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IbraRow {
    pub band_index: usize,
    pub wavelength_nm: f64,
    pub d_left: usize,
    pub d_right: usize,
    pub d: usize,
    pub is_candidate: bool,
}

impl IbraResult {
    pub fn rows(&self) -> Vec<IbraRow> {
        (0..self.d.len())
            .map(|b| IbraRow {
                band_index: b,
                wavelength_nm: self.wavelengths_nm[b],
                d_left: self.d_left[b],
                d_right: self.d_right[b],
                d: self.d[b],
                is_candidate: self.candidates.binary_search(&b).is_ok(),
            })
            .collect()
    }

    pub fn candidate_wavelengths(&self) -> Vec<f64> {
        self.candidates.iter().map(|&b| self.wavelengths_nm[b]).collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(w);
        for row in self.rows() {
            writer.serialize(row)?;
        }
        writer.flush().map_err(|e| Error::Data(format!("csv flush: {e}")))
    }
}

pub fn read_ibra_csv<R: Read>(r: R) -> Result<Vec<IbraRow>> {
    csv::Reader::from_reader(r)
        .deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

/// Count of consecutive neighbours of `band` in direction `step` whose VIF
/// with `band` exceeds `theta`. The nearest neighbour is always tested.
fn redundancy_run(
    m: &BandMatrix,
    table: &VifTable,
    band: usize,
    theta: f64,
    leftwards: bool,
) -> usize {
    let limit = if leftwards { band } else { m.bands() - 1 - band };
    let mut run = 0;
    while run < limit {
        let t = run + 1;
        let other = if leftwards { band - t } else { band + t };
        if table.vif(m, band, other) > theta {
            run += 1;
        } else {
            break;
        }
    }
    run
}

/// Runs the redundancy scan at threshold `theta` with a fresh VIF table.
pub fn interband_redundancy(m: &BandMatrix, theta: f64) -> Result<IbraResult> {
    let table = VifTable::new(m.bands());
    interband_redundancy_with_table(m, theta, &table)
}

/// Runs the redundancy scan reusing `table`, which may already hold VIFs
/// from scans at other thresholds.
pub fn interband_redundancy_with_table(
    m: &BandMatrix,
    theta: f64,
    table: &VifTable,
) -> Result<IbraResult> {
    if !(theta > 1.0) || !theta.is_finite() {
        return Err(Error::precondition(format!("theta must be a finite value > 1, got {theta}")));
    }
    let b = m.bands();
    if b < 2 {
        return Err(Error::precondition("redundancy scan needs at least 2 bands"));
    }
    if table.size() != b {
        return Err(Error::DimensionMismatch {
            expected: b,
            got: table.size(),
        });
    }
    let runs: Vec<(usize, usize)> = (0..b)
        .into_par_iter()
        .map(|x| {
            (
                redundancy_run(m, table, x, theta, true),
                redundancy_run(m, table, x, theta, false),
            )
        })
        .collect();
    let (d_left, d_right): (Vec<usize>, Vec<usize>) = runs.into_iter().unzip();
    let d: Vec<usize> = d_left.iter().zip(&d_right).map(|(l, r)| l.abs_diff(*r)).collect();
    let candidates = local_minima(&d)?;
    Ok(IbraResult {
        theta,
        wavelengths_nm: m.axis().as_slice().to_vec(),
        d_left,
        d_right,
        d,
        candidates,
    })
}

/// Interior local minima of `d` with `d < 5`.
///
/// A run of equal values counts as one minimum when the values on both sides
/// of the run are larger; its leftmost index is reported. Runs touching
/// either end of the spectrum are never minima.
pub fn local_minima(d: &[usize]) -> Result<Vec<usize>> {
    if d.is_empty() {
        return Err(Error::precondition("local_minima on an empty list"));
    }
    let mut out = Vec::new();
    let mut start = 0;
    while start < d.len() {
        let mut end = start;
        while end + 1 < d.len() && d[end + 1] == d[start] {
            end += 1;
        }
        let interior = start > 0 && end + 1 < d.len();
        if interior
            && d[start - 1] > d[start]
            && d[end + 1] > d[start]
            && d[start] < MAX_CANDIDATE_DISTANCE
        {
            out.push(start);
        }
        start = end + 1;
    }
    Ok(out)
}
