//! Hyperspectral cubes, labeled patch sets and the preprocessing steps that
//! turn raw sensor frames into classification-ready data.
//!
//! Cubes are stored band-interleaved-by-pixel: element `(row, col, band)`
//! lives at `(row * width + col) * bands + band`.

mod io;
mod zscore;

pub use io::{
    load_cube, load_label_map, load_patch_set, read_cube, save_cube, save_label_map,
    save_patch_set, write_cube, HSC1_MAGIC, HSC1_VERSION,
};
pub use zscore::{zscore_apply, zscore_fit, PatchMoments, ZScoreParams, MIN_STD};

use crate::error::{Error, Result};

/// Centre wavelength, in nanometres, of every band of a cube.
#[derive(Debug, Clone, PartialEq)]
pub struct WavelengthAxis(Vec<f64>);

impl WavelengthAxis {
    pub fn new(wavelengths_nm: Vec<f64>) -> Result<Self> {
        if wavelengths_nm.is_empty() {
            return Err(Error::Data("wavelength axis is empty".into()));
        }
        if let Some(i) = wavelengths_nm.iter().position(|w| !w.is_finite()) {
            return Err(Error::Data(format!("wavelength {i} is not finite")));
        }
        if let Some(i) = wavelengths_nm.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::Data(format!(
                "wavelengths not strictly increasing at band {}",
                i + 1
            )));
        }
        Ok(Self(wavelengths_nm))
    }

    /// Evenly spaced axis starting at `start_nm`.
    pub fn linear(start_nm: f64, step_nm: f64, bands: usize) -> Result<Self> {
        Self::new((0..bands).map(|b| start_nm + step_nm * b as f64).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, band: usize) -> Option<f64> {
        self.0.get(band).copied()
    }

    /// Sub-axis holding the wavelengths of `bands`, in the given order.
    ///
    /// The result must itself be strictly increasing.
    pub fn select(&self, bands: &[usize]) -> Result<Self> {
        let mut out = Vec::with_capacity(bands.len());
        for &b in bands {
            out.push(self.get(b).ok_or(Error::DimensionMismatch {
                expected: self.len(),
                got: b,
            })?);
        }
        Self::new(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperCube {
    height: usize,
    width: usize,
    bands: usize,
    data: Vec<f64>,
    axis: WavelengthAxis,
}

impl HyperCube {
    pub fn new(
        height: usize,
        width: usize,
        data: Vec<f64>,
        axis: WavelengthAxis,
    ) -> Result<Self> {
        let bands = axis.len();
        if height == 0 || width == 0 {
            return Err(Error::precondition("cube dimensions must be positive"));
        }
        let expected = height * width * bands;
        if data.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite value at flat index {i}"
            )));
        }
        Ok(Self {
            height,
            width,
            bands,
            data,
            axis,
        })
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        axis: WavelengthAxis,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let bands = axis.len();
        let mut data = Vec::with_capacity(height * width * bands);
        for r in 0..height {
            for c in 0..width {
                for b in 0..bands {
                    data.push(f(r, c, b));
                }
            }
        }
        Self::new(height, width, data, axis)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn axis(&self) -> &WavelengthAxis {
        &self.axis
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, band: usize) -> f64 {
        self.data[(row * self.width + col) * self.bands + band]
    }

    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> &[f64] {
        let start = (row * self.width + col) * self.bands;
        &self.data[start..start + self.bands]
    }

    /// Per-band mean over the rectangle `rows × cols`, e.g. the pixels of a
    /// reflectance reference panel.
    pub fn region_mean(
        &self,
        rows: std::ops::Range<usize>,
        cols: std::ops::Range<usize>,
    ) -> Result<Vec<f64>> {
        if rows.is_empty() || cols.is_empty() || rows.end > self.height || cols.end > self.width {
            return Err(Error::precondition(format!(
                "region {rows:?}x{cols:?} is empty or outside a {}x{} cube",
                self.height, self.width
            )));
        }
        let mut acc = vec![0.0; self.bands];
        for r in rows.clone() {
            for c in cols.clone() {
                for (a, v) in acc.iter_mut().zip(self.pixel(r, c)) {
                    *a += v;
                }
            }
        }
        let n = (rows.len() * cols.len()) as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        Ok(acc)
    }
}

/// Converts raw digital numbers to reflectance against a reference panel:
/// `rho = (scene - dark) / (target - dark) * rho_target`, band by band.
pub fn reflectance_correct(
    scene: &HyperCube,
    target_mean_dn: &[f64],
    dark_dn: &[f64],
    rho_target: f64,
) -> Result<HyperCube> {
    let bands = scene.bands();
    for got in [target_mean_dn.len(), dark_dn.len()] {
        if got != bands {
            return Err(Error::DimensionMismatch {
                expected: bands,
                got,
            });
        }
    }
    if !(rho_target > 0.0 && rho_target <= 1.0) {
        return Err(Error::precondition(format!(
            "reference reflectance {rho_target} outside (0, 1]"
        )));
    }
    let mut denom = Vec::with_capacity(bands);
    for (band, (t, d)) in target_mean_dn.iter().zip(dark_dn).enumerate() {
        let den = t - d;
        if den == 0.0 {
            return Err(Error::DivideByZero { band });
        }
        denom.push(den);
    }
    let data = scene
        .data()
        .chunks_exact(bands)
        .flat_map(|px| {
            px.iter()
                .zip(dark_dn)
                .zip(&denom)
                .map(|((v, d), den)| (v - d) / den * rho_target)
        })
        .collect();
    HyperCube::new(scene.height(), scene.width(), data, scene.axis().clone())
}

/// Averages adjacent band pairs `(2j, 2j+1)`; a trailing odd band is dropped.
pub fn spectral_bin2(cube: &HyperCube) -> Result<HyperCube> {
    let bands = cube.bands();
    if bands < 2 {
        return Err(Error::precondition(format!(
            "spectral binning needs at least 2 bands, cube has {bands}"
        )));
    }
    let out_bands = bands / 2;
    fn pair_mean(s: &[f64], out_bands: usize) -> impl Iterator<Item = f64> + '_ {
        (0..out_bands).map(move |j| (s[2 * j] + s[2 * j + 1]) / 2.0)
    }
    let axis = WavelengthAxis::new(pair_mean(cube.axis().as_slice(), out_bands).collect())?;
    let data = cube
        .data()
        .chunks_exact(bands)
        .flat_map(|px| pair_mean(px, out_bands))
        .collect();
    HyperCube::new(cube.height(), cube.width(), data, axis)
}

/// Per-pixel class labels; `None` marks unlabeled pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    height: usize,
    width: usize,
    labels: Vec<Option<usize>>,
}

impl LabelMap {
    /// Builds a map from raw integers where `-1` means unlabeled.
    pub fn from_raw(height: usize, width: usize, raw: &[i64]) -> Result<Self> {
        if raw.len() != height * width {
            return Err(Error::DimensionMismatch {
                expected: height * width,
                got: raw.len(),
            });
        }
        let labels = raw
            .iter()
            .map(|&v| match v {
                -1 => Ok(None),
                v if v >= 0 => Ok(Some(v as usize)),
                v => Err(Error::Data(format!("invalid label {v}"))),
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            height,
            width,
            labels,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, row: usize, col: usize) -> Option<usize> {
        self.labels[row * self.width + col]
    }

    pub fn to_raw(&self) -> Vec<i64> {
        self.labels
            .iter()
            .map(|l| l.map_or(-1, |v| v as i64))
            .collect()
    }
}

/// Fixed-size square patches with one class label each.
///
/// Patches are stored back to back, each in `(row, col, band)` order.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPatchSet {
    patch_size: usize,
    axis: WavelengthAxis,
    classes: usize,
    data: Vec<f64>,
    labels: Vec<usize>,
}

impl LabeledPatchSet {
    /// `classes` is inferred as `max(label) + 1`; every class below it must be
    /// present.
    pub fn new(
        patch_size: usize,
        axis: WavelengthAxis,
        data: Vec<f64>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::EmptyDataset("patch set has no patches".into()));
        }
        let classes = labels.iter().max().map_or(0, |m| m + 1);
        let mut seen = vec![false; classes];
        labels.iter().for_each(|&l| seen[l] = true);
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::Data(format!(
                "class {missing} has no patches (labels must cover 0..{classes})"
            )));
        }
        Self::with_classes(patch_size, axis, data, labels, classes)
    }

    fn with_classes(
        patch_size: usize,
        axis: WavelengthAxis,
        data: Vec<f64>,
        labels: Vec<usize>,
        classes: usize,
    ) -> Result<Self> {
        if patch_size == 0 {
            return Err(Error::precondition("patch size must be positive"));
        }
        let expected = labels.len() * patch_size * patch_size * axis.len();
        if data.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite value at flat index {i}")));
        }
        Ok(Self {
            patch_size,
            axis,
            classes,
            data,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    pub fn bands(&self) -> usize {
        self.axis.len()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn axis(&self) -> &WavelengthAxis {
        &self.axis
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Values of a single patch per pixel.
    pub fn pixels_per_patch(&self) -> usize {
        self.patch_size * self.patch_size
    }

    pub fn patch(&self, i: usize) -> &[f64] {
        let len = self.pixels_per_patch() * self.bands();
        &self.data[i * len..(i + 1) * len]
    }

    /// Patches at `indices`, keeping the class count of `self` even when a
    /// class is absent from the subset.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.pixels_per_patch() * self.bands());
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::DimensionMismatch {
                    expected: self.len(),
                    got: i,
                });
            }
            data.extend_from_slice(self.patch(i));
            labels.push(self.labels[i]);
        }
        Self::with_classes(self.patch_size, self.axis.clone(), data, labels, self.classes)
    }

    /// Same labels and geometry, new pixel values and wavelength axis.
    pub fn with_data(&self, data: Vec<f64>, axis: WavelengthAxis) -> Result<Self> {
        Self::with_classes(self.patch_size, axis, data, self.labels.clone(), self.classes)
    }

    /// Count of patches per class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        self.labels.iter().for_each(|&l| counts[l] += 1);
        counts
    }
}

/// Cuts one `patch_size × patch_size` window around every labeled pixel on
/// the `stride` grid. Windows that leave the image repeat the edge pixels.
pub fn extract_patches(
    cube: &HyperCube,
    label_map: &LabelMap,
    patch_size: usize,
    stride: usize,
) -> Result<LabeledPatchSet> {
    if label_map.height() != cube.height() || label_map.width() != cube.width() {
        return Err(Error::precondition(format!(
            "label map is {}x{} but cube is {}x{}",
            label_map.height(),
            label_map.width(),
            cube.height(),
            cube.width()
        )));
    }
    if patch_size % 2 == 0 {
        return Err(Error::precondition(format!("patch size {patch_size} must be odd")));
    }
    if patch_size > cube.height().min(cube.width()) {
        return Err(Error::precondition(format!(
            "patch size {patch_size} exceeds the smaller cube side"
        )));
    }
    if stride == 0 {
        return Err(Error::precondition("stride must be positive"));
    }
    let half = (patch_size / 2) as isize;
    let clamp = |v: isize, hi: usize| v.clamp(0, hi as isize - 1) as usize;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for r in (0..cube.height()).step_by(stride) {
        for c in (0..cube.width()).step_by(stride) {
            let Some(label) = label_map.get(r, c) else {
                continue;
            };
            for dr in -half..=half {
                let rr = clamp(r as isize + dr, cube.height());
                for dc in -half..=half {
                    let cc = clamp(c as isize + dc, cube.width());
                    data.extend_from_slice(cube.pixel(rr, cc));
                }
            }
            labels.push(label);
        }
    }
    if labels.is_empty() {
        return Err(Error::EmptyDataset(
            "no labeled pixels on the sampling grid".into(),
        ));
    }
    LabeledPatchSet::new(patch_size, cube.axis().clone(), data, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn axis(b: usize) -> WavelengthAxis {
        WavelengthAxis::linear(400.0, 4.0, b).unwrap()
    }

    fn const_cube(h: usize, w: usize, per_band: &[f64]) -> HyperCube {
        HyperCube::from_fn(h, w, axis(per_band.len()), |_, _, b| per_band[b]).unwrap()
    }

    #[test]
    fn axis_rejects_non_increasing() {
        assert!(WavelengthAxis::new(vec![400.0, 400.0]).is_err());
        assert!(WavelengthAxis::new(vec![401.0, 400.0]).is_err());
        assert!(WavelengthAxis::new(vec![]).is_err());
    }

    #[test]
    fn cube_rejects_nan_and_bad_length() {
        assert!(HyperCube::new(1, 1, vec![f64::NAN], axis(1)).is_err());
        assert!(matches!(
            HyperCube::new(1, 2, vec![0.0], axis(1)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn reflectance_scene_equals_target() {
        let target = [250.0, 300.0, 410.0];
        let dark = [50.0, 20.0, 10.0];
        let scene = const_cube(2, 3, &target);
        let out = reflectance_correct(&scene, &target, &dark, 0.99).unwrap();
        out.data().iter().for_each(|&v| assert_abs_diff_eq!(v, 0.99, epsilon = 1e-12));
    }

    #[test]
    fn reflectance_scene_equals_dark() {
        let target = [250.0, 300.0];
        let dark = [50.0, 20.0];
        let out = reflectance_correct(&const_cube(2, 2, &dark), &target, &dark, 0.99).unwrap();
        out.data().iter().for_each(|&v| assert_eq!(v, 0.0));
    }

    #[test]
    fn reflectance_worked_example() {
        let out = reflectance_correct(&const_cube(1, 1, &[150.0]), &[250.0], &[50.0], 0.99)
            .unwrap();
        assert_abs_diff_eq!(out.get(0, 0, 0), 0.495, epsilon = 1e-12);
    }

    #[test]
    fn reflectance_zero_denominator_names_band() {
        let err = reflectance_correct(&const_cube(1, 1, &[1.0, 2.0]), &[5.0, 7.0], &[4.0, 7.0], 0.99)
            .unwrap_err();
        assert!(matches!(err, Error::DivideByZero { band: 1 }));
    }

    #[test]
    fn reflectance_is_affine_per_band() {
        let target = [900.0, 1200.0];
        let dark = [30.0, 45.0];
        let scene = HyperCube::from_fn(3, 3, axis(2), |r, c, b| (r * 31 + c * 7 + b * 101) as f64)
            .unwrap();
        let out = reflectance_correct(&scene, &target, &dark, 0.95).unwrap();
        for r in 0..3 {
            for c in 0..3 {
                for b in 0..2 {
                    let direct = (scene.get(r, c, b) - dark[b]) / (target[b] - dark[b]) * 0.95;
                    assert_abs_diff_eq!(out.get(r, c, b), direct, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn region_mean_averages_rectangle() {
        let cube = HyperCube::from_fn(4, 4, axis(1), |r, c, _| (r * 4 + c) as f64).unwrap();
        let m = cube.region_mean(1..3, 1..3).unwrap();
        assert_abs_diff_eq!(m[0], (5.0 + 6.0 + 9.0 + 10.0) / 4.0, epsilon = 1e-12);
        assert!(cube.region_mean(0..0, 0..1).is_err());
        assert!(cube.region_mean(0..5, 0..1).is_err());
    }

    #[test]
    fn bin2_pairs_bands() {
        let cube = const_cube(2, 2, &[1.0, 3.0, 5.0, 9.0]);
        let out = spectral_bin2(&cube).unwrap();
        assert_eq!(out.bands(), 2);
        assert_eq!(out.pixel(1, 1), &[2.0, 7.0]);
        assert_eq!(out.axis().as_slice(), &[402.0, 410.0]);
    }

    #[test]
    fn bin2_drops_trailing_odd_band() {
        let out = spectral_bin2(&const_cube(1, 2, &[1.0, 2.0, 3.0, 4.0, 100.0])).unwrap();
        assert_eq!(out.bands(), 2);
        assert_eq!(out.pixel(0, 1), &[1.5, 3.5]);
    }

    #[test]
    fn bin2_300_to_150() {
        let cube = HyperCube::from_fn(2, 2, axis(300), |r, c, b| (r + c + b) as f64).unwrap();
        assert_eq!(spectral_bin2(&cube).unwrap().bands(), 150);
    }

    #[test]
    fn bin2_needs_two_bands() {
        assert!(matches!(
            spectral_bin2(&const_cube(1, 1, &[1.0])),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn bin2_preserves_pixel_mean() {
        let cube = HyperCube::from_fn(3, 2, axis(7), |r, c, b| ((r * 13 + c * 5 + b * b) % 17) as f64)
            .unwrap();
        let out = spectral_bin2(&cube).unwrap();
        for r in 0..3 {
            for c in 0..2 {
                let a: f64 = cube.pixel(r, c)[..6].iter().sum::<f64>() / 6.0;
                let b: f64 = out.pixel(r, c).iter().sum::<f64>() / 3.0;
                assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn single_center_patch_is_whole_cube() {
        let cube = HyperCube::from_fn(5, 5, axis(2), |r, c, b| (r * 10 + c + 100 * b) as f64)
            .unwrap();
        let mut raw = vec![-1; 25];
        raw[12] = 0;
        let labels = LabelMap::from_raw(5, 5, &raw).unwrap();
        let set = extract_patches(&cube, &labels, 5, 1).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.patch(0), cube.data());
    }

    #[test]
    fn every_labeled_pixel_yields_a_patch() {
        let cube = HyperCube::from_fn(7, 6, axis(3), |r, c, b| (r + c + b) as f64).unwrap();
        let raw: Vec<i64> = (0..42).map(|i| i % 3).collect();
        let labels = LabelMap::from_raw(7, 6, &raw).unwrap();
        let set = extract_patches(&cube, &labels, 5, 1).unwrap();
        assert_eq!(set.len(), 42);
        assert_eq!(set.classes(), 3);
        // corner patch is edge-clamped: its first pixel is pixel (0,0)
        assert_eq!(&set.patch(0)[..3], cube.pixel(0, 0));
    }

    #[test]
    fn stride_visits_grid_only() {
        let cube = HyperCube::from_fn(6, 6, axis(1), |r, c, _| (r * 6 + c) as f64).unwrap();
        let mut raw: Vec<i64> = (0..36).map(|i| (i / 12) as i64).collect();
        raw[14] = -1; // (2, 2) is on the grid but unlabeled
        raw[7] = -1; // (1, 1) is off the grid anyway
        let labels = LabelMap::from_raw(6, 6, &raw).unwrap();
        let set = extract_patches(&cube, &labels, 3, 2).unwrap();
        assert_eq!(set.len(), 8);
        // centre pixel of every patch lies on the even grid
        for i in 0..set.len() {
            let centre = set.patch(i)[4] as usize;
            assert_eq!((centre / 6 % 2, centre % 6 % 2), (0, 0));
        }
        assert_eq!(set.labels(), &[0, 0, 0, 1, 1, 2, 2, 2]);
    }

    #[test]
    fn no_labels_is_empty_dataset() {
        let cube = HyperCube::from_fn(5, 5, axis(1), |_, _, _| 0.0).unwrap();
        let labels = LabelMap::from_raw(5, 5, &[-1; 25]).unwrap();
        assert!(matches!(
            extract_patches(&cube, &labels, 3, 1),
            Err(Error::EmptyDataset(_))
        ));
    }

    #[test]
    fn patch_size_preconditions() {
        let cube = HyperCube::from_fn(4, 4, axis(1), |_, _, _| 0.0).unwrap();
        let labels = LabelMap::from_raw(4, 4, &[0; 16]).unwrap();
        assert!(extract_patches(&cube, &labels, 2, 1).is_err());
        assert!(extract_patches(&cube, &labels, 5, 1).is_err());
        assert!(extract_patches(&cube, &labels, 3, 0).is_err());
    }
}
