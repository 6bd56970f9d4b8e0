//! Greedy wrapper selection of `k` bands from the pre-selected candidates,
//! scored by macro-F1 under 5×2 stratified cross-validation.

mod cv;
mod gss;
mod metrics;

pub use cv::{make_cv_plan, make_cv_plan_from_labels, CvPlan, FOLDS, REPETITIONS};
pub use gss::{
    greedy_spectral_selection, read_summary_csv, threshold_sweep, write_summary_csv,
    SelectionReport, SummaryRow, SweepOutcome, TraceStep, STOP_DROP,
};
pub use metrics::{ConfusionMatrix, FoldMetrics, MetricsReport};

use ndarray::Array2;
use rayon::prelude::*;

use crate::classifier::{check_subset, fit_predict, ClassifierSpec};
use crate::collinearity::BandMatrix;
use crate::datacube::{LabeledPatchSet, PatchMoments, ZScoreParams};
use crate::error::{Error, Result};
use crate::regression::{multiple_r2, pairwise_r2, vif_from_r2};

/// Multicollinearity VIF of each band in `subset` against all the others,
/// from an OLS fit with intercept.
pub fn vif_multi(m: &BandMatrix, subset: &[usize]) -> Result<Vec<f64>> {
    if subset.len() < 2 {
        return Err(Error::precondition("vif_multi needs at least 2 bands"));
    }
    check_subset(subset, m.bands())?;
    let stride = m.ols_stride();
    if let [a, b] = *subset {
        let v = vif_from_r2(pairwise_r2(m.column(a), m.column(b), stride));
        return Ok(vec![v, v]);
    }
    Ok(subset
        .par_iter()
        .enumerate()
        .map(|(pos, &band)| {
            let others: Vec<&[f64]> = subset
                .iter()
                .enumerate()
                .filter(|&(p, _)| p != pos)
                .map(|(_, &o)| m.column(o))
                .collect();
            vif_from_r2(multiple_r2(m.column(band), &others, stride))
        })
        .collect())
}

/// Scores band subsets of one patch set under a fixed CV plan and
/// classifier. Per-patch moments are computed once and reused for every
/// subset and fold.
pub struct Evaluator<'a> {
    moments: PatchMoments,
    labels: &'a [usize],
    classes: usize,
    plan: &'a CvPlan,
    spec: &'a ClassifierSpec,
}

impl<'a> Evaluator<'a> {
    pub fn new(set: &'a LabeledPatchSet, spec: &'a ClassifierSpec, plan: &'a CvPlan) -> Result<Self> {
        spec.validate()?;
        let n = set.len();
        for (train, val) in plan.pairs() {
            if let Some(&bad) = train.iter().chain(val).find(|&&i| i >= n) {
                return Err(Error::DimensionMismatch { expected: n, got: bad });
            }
        }
        Ok(Self {
            moments: PatchMoments::new(set),
            labels: set.labels(),
            classes: set.classes(),
            plan,
            spec,
        })
    }

    /// Z-score parameters of fold `fold`, fit on its training indices only.
    pub fn fold_params(&self, fold: usize) -> Result<ZScoreParams> {
        let pairs = self.plan.pairs();
        let (train, _) = pairs
            .get(fold)
            .ok_or_else(|| Error::precondition(format!("fold {fold} out of range")))?;
        self.moments.fit(train)
    }

    fn features(&self, idx: &[usize], bands: &[usize], params: &ZScoreParams) -> (Array2<f64>, Vec<usize>) {
        let x = Array2::from_shape_fn((idx.len(), bands.len()), |(r, f)| {
            params.apply(bands[f], self.moments.mean(idx[r], bands[f]))
        });
        (x, idx.iter().map(|&i| self.labels[i]).collect())
    }

    pub fn evaluate(&self, band_subset: &[usize]) -> Result<MetricsReport> {
        check_subset(band_subset, self.moments.bands())?;
        let folds = self
            .plan
            .pairs()
            .into_par_iter()
            .map(|(train, val)| {
                let params = self.moments.fit(train)?;
                let (tx, ty) = self.features(train, band_subset, &params);
                let (vx, vy) = self.features(val, band_subset, &params);
                let pred = fit_predict(self.spec, tx.view(), &ty, vx.view(), &vy, self.classes)?;
                Ok(ConfusionMatrix::new(&vy, &pred, self.classes)?.metrics())
            })
            .collect::<Result<Vec<_>>>()?;
        MetricsReport::from_folds(folds)
    }
}

/// Cross-validated metrics of `band_subset`: per fold, z-score on the training
/// patches, featurise, train, predict the validation patches.
pub fn evaluate_selection(
    set: &LabeledPatchSet,
    band_subset: &[usize],
    spec: &ClassifierSpec,
    plan: &CvPlan,
) -> Result<MetricsReport> {
    Evaluator::new(set, spec, plan)?.evaluate(band_subset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::featurize;
    use crate::datacube::{zscore_apply, zscore_fit, WavelengthAxis};
    use crate::regression::VIF_MAX;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn noisy_set(n: usize, classes: usize, bands: usize, signal: f64, seed: u64) -> LabeledPatchSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let s = 3;
        let mut data = Vec::new();
        let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
        for &l in &labels {
            for _ in 0..s * s {
                for b in 0..bands {
                    let mean = if b == 0 { signal * l as f64 } else { 0.0 };
                    data.push(mean + noise.sample(&mut rng));
                }
            }
        }
        let axis = WavelengthAxis::linear(400.0, 10.0, bands).unwrap();
        LabeledPatchSet::new(s, axis, data, labels).unwrap()
    }

    /// Brute-force R² via the explicit normal equations with intercept.
    fn normal_equations_vif(m: &BandMatrix, target: usize, others: &[usize]) -> f64 {
        let n = m.rows();
        let p = others.len() + 1;
        let mut xtx = vec![vec![0.0; p]; p];
        let mut xty = vec![0.0; p];
        let y = m.column(target);
        for r in 0..n {
            let row: Vec<f64> = std::iter::once(1.0).chain(others.iter().map(|&o| m.column(o)[r])).collect();
            for i in 0..p {
                xty[i] += row[i] * y[r];
                for j in 0..p {
                    xtx[i][j] += row[i] * row[j];
                }
            }
        }
        // Gauss-Jordan with partial pivoting
        for c in 0..p {
            let piv = (c..p).max_by(|&a, &b| xtx[a][c].abs().total_cmp(&xtx[b][c].abs())).unwrap();
            xtx.swap(c, piv);
            xty.swap(c, piv);
            for r in 0..p {
                if r != c {
                    let f = xtx[r][c] / xtx[c][c];
                    for k in c..p {
                        xtx[r][k] -= f * xtx[c][k];
                    }
                    xty[r] -= f * xty[c];
                }
            }
        }
        let beta: Vec<f64> = (0..p).map(|i| xty[i] / xtx[i][i]).collect();
        let mean = y.iter().sum::<f64>() / n as f64;
        let (mut sse, mut sst) = (0.0, 0.0);
        for r in 0..n {
            let fit = beta[0] + others.iter().enumerate().map(|(k, &o)| beta[k + 1] * m.column(o)[r]).sum::<f64>();
            sse += (y[r] - fit).powi(2);
            sst += (y[r] - mean).powi(2);
        }
        1.0 / (sse / sst)
    }

    fn random_columns(rows: usize, bands: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 1.0).unwrap();
        (0..bands).map(|_| (0..rows).map(|_| noise.sample(&mut rng)).collect()).collect()
    }

    #[test]
    fn two_band_vif_equals_pairwise() {
        let m = BandMatrix::from_columns_indexed(random_columns(200, 3, 4)).unwrap();
        let v = vif_multi(&m, &[2, 0]).unwrap();
        let p = crate::collinearity::vif_pair(&m, 2, 0).unwrap();
        assert_abs_diff_eq!(v[0], p, epsilon = 1e-9);
        assert_abs_diff_eq!(v[1], p, epsilon = 1e-9);
    }

    #[test]
    fn exact_dependence_is_vif_max() {
        let mut cols = random_columns(100, 2, 5);
        cols.push(cols[0].iter().zip(&cols[1]).map(|(a, b)| a + b).collect());
        let m = BandMatrix::from_columns_indexed(cols).unwrap();
        assert_eq!(vif_multi(&m, &[0, 1, 2]).unwrap(), vec![VIF_MAX; 3]);
    }

    #[test]
    fn independent_bands_near_one() {
        // three exactly orthogonal centred +-1 patterns
        let cols: Vec<Vec<f64>> = (0..3)
            .map(|k| (0..64).map(|i| if (i >> k) & 1 == 0 { 1.0 } else { -1.0 }).collect())
            .collect();
        let m = BandMatrix::from_columns_indexed(cols).unwrap();
        for (b, v) in vif_multi(&m, &[0, 1, 2]).unwrap().into_iter().enumerate() {
            assert_abs_diff_eq!(v, 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(v, normal_equations_vif(&m, b, &[0, 1, 2].iter().copied().filter(|&o| o != b).collect::<Vec<_>>()), epsilon = 1e-9);
        }
    }

    #[test]
    fn multi_vif_matches_normal_equations() {
        let mut cols = random_columns(150, 4, 6);
        // introduce some collinearity
        cols[3] = cols[3].iter().zip(&cols[0]).map(|(a, b)| 0.3 * a + b).collect();
        let m = BandMatrix::from_columns_indexed(cols).unwrap();
        let subset = [0, 1, 3, 2];
        let v = vif_multi(&m, &subset).unwrap();
        for (pos, &band) in subset.iter().enumerate() {
            let others: Vec<usize> = subset.iter().copied().filter(|&o| o != band).collect();
            assert_abs_diff_eq!(v[pos], normal_equations_vif(&m, band, &others), epsilon = 1e-7);
        }
    }

    #[test]
    fn vif_multi_preconditions() {
        let m = BandMatrix::from_columns_indexed(random_columns(10, 2, 1)).unwrap();
        assert!(vif_multi(&m, &[0]).is_err());
        assert!(vif_multi(&m, &[0, 5]).is_err());
    }

    #[test]
    fn fast_features_match_materialised_zscore() {
        let set = noisy_set(12, 2, 4, 3.0, 2);
        let spec = ClassifierSpec::default();
        let plan = make_cv_plan(&set, 5).unwrap();
        let ev = Evaluator::new(&set, &spec, &plan).unwrap();
        let (train, _) = plan.pairs()[3];
        let params = ev.fold_params(3).unwrap();
        let direct = zscore_fit(&set.subset(train).unwrap()).unwrap();
        for b in 0..4 {
            assert_abs_diff_eq!(params.mean_per_band[b], direct.mean_per_band[b], epsilon = 1e-12);
            assert_abs_diff_eq!(params.std_per_band[b], direct.std_per_band[b], epsilon = 1e-12);
        }
        let (fast, _) = ev.features(train, &[1, 3], &params);
        let (slow, _) = featurize(&zscore_apply(&set.subset(train).unwrap(), &direct).unwrap(), &[1, 3]).unwrap();
        for (a, b) in fast.iter().zip(slow.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn validation_data_never_reaches_zscore_fit() {
        let set = noisy_set(20, 2, 3, 2.0, 3);
        let spec = ClassifierSpec::default();
        let plan = make_cv_plan(&set, 1).unwrap();
        let before: Vec<ZScoreParams> = {
            let ev = Evaluator::new(&set, &spec, &plan).unwrap();
            (0..10).map(|f| ev.fold_params(f).unwrap()).collect()
        };
        for (fold, (train, val)) in plan.pairs().into_iter().enumerate() {
            // blow up every validation patch
            let mut data = set.data().to_vec();
            let len = set.pixels_per_patch() * set.bands();
            for &i in val {
                data[i * len..(i + 1) * len].iter_mut().for_each(|v| *v = *v * 1e3 + 1e6);
            }
            let poisoned = set.with_data(data, set.axis().clone()).unwrap();
            let ev = Evaluator::new(&poisoned, &spec, &plan).unwrap();
            assert_eq!(ev.fold_params(fold).unwrap(), before[fold]);
            assert!(train.iter().all(|i| !val.contains(i)));
        }
    }

    #[test]
    fn separable_duplicates_score_perfectly() {
        let set = noisy_set(40, 2, 2, 20.0, 4);
        let plan = make_cv_plan(&set, 2).unwrap();
        let r = evaluate_selection(&set, &[0], &ClassifierSpec::default(), &plan).unwrap();
        assert_eq!(r.macro_f1, 1.0);
        assert_eq!(r.per_fold.len(), 10);
    }

    #[test]
    fn random_labels_are_chance() {
        let set = noisy_set(200, 2, 3, 0.0, 5);
        let plan = make_cv_plan(&set, 3).unwrap();
        let r = evaluate_selection(&set, &[0, 1, 2], &ClassifierSpec::default(), &plan).unwrap();
        assert!((r.oa - 0.5).abs() <= 0.1, "oa = {}", r.oa);
    }

    #[test]
    fn evaluation_is_deterministic() {
        let set = noisy_set(60, 3, 3, 1.0, 6);
        let plan = make_cv_plan(&set, 3).unwrap();
        let spec = ClassifierSpec::default();
        let a = evaluate_selection(&set, &[0, 2], &spec, &plan).unwrap();
        let b = evaluate_selection(&set, &[0, 2], &spec, &plan).unwrap();
        assert_eq!(a, b);
        let mean = a.per_fold.iter().map(|f| f.macro_f1).sum::<f64>() / 10.0;
        assert_abs_diff_eq!(a.macro_f1, mean, epsilon = 1e-12);
    }
}
