use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{vif_multi, CvPlan, Evaluator, MetricsReport};
use crate::classifier::ClassifierSpec;
use crate::collinearity::{interband_redundancy_with_table, BandMatrix, VifTable};
use crate::datacube::LabeledPatchSet;
use crate::error::{Error, Result};
use crate::saliency::rank_by_entropy;

/// The search stops once a swap scores this far (absolute macro-F1) below
/// the best subset so far.
pub const STOP_DROP: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub selected: Vec<usize>,
    pub removed: Option<usize>,
    pub added: Option<usize>,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub k: usize,
    pub theta: Option<f64>,
    /// Candidate bands in the order the search consumed them.
    pub candidates: Vec<usize>,
    pub selected_bands: Vec<usize>,
    pub selected_wavelengths_nm: Vec<f64>,
    pub best_f1: f64,
    pub metrics: MetricsReport,
    pub trace: Vec<TraceStep>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl SelectionReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Band whose multicollinearity VIF is largest; exact ties go to the lowest
/// band index.
fn most_redundant(m: &BandMatrix, selected: &[usize]) -> Result<usize> {
    if selected.len() < 2 {
        return Ok(0);
    }
    let vifs = vif_multi(m, selected)?;
    let mut best = 0;
    for pos in 1..selected.len() {
        if vifs[pos] > vifs[best] || (vifs[pos] == vifs[best] && selected[pos] < selected[best]) {
            best = pos;
        }
    }
    Ok(best)
}

/// Greedy search over `ranked` (best candidate first): start from the top
/// `k`, then repeatedly evict the most redundant member for the next
/// candidate, keeping the best cross-validated subset.
pub fn greedy_spectral_selection(
    set: &LabeledPatchSet,
    m: &BandMatrix,
    ranked: &[usize],
    k: usize,
    spec: &ClassifierSpec,
    plan: &CvPlan,
) -> Result<SelectionReport> {
    if k == 0 {
        return Err(Error::precondition("k must be at least 1"));
    }
    if ranked.is_empty() {
        return Err(Error::precondition("no candidate bands"));
    }
    if m.bands() != set.bands() {
        return Err(Error::DimensionMismatch {
            expected: set.bands(),
            got: m.bands(),
        });
    }
    let evaluator = Evaluator::new(set, spec, plan)?;
    let mut warnings = Vec::new();
    if k > ranked.len() {
        warnings.push(format!(
            "k = {k} exceeds the {} available candidates; using all of them",
            ranked.len()
        ));
    }
    let take = k.min(ranked.len());
    let mut selected = ranked[..take].to_vec();
    let mut metrics = evaluator.evaluate(&selected)?;
    let mut best_f1 = metrics.macro_f1;
    let mut best = selected.clone();
    let mut trace = vec![TraceStep {
        selected: selected.clone(),
        removed: None,
        added: None,
        f1: best_f1,
    }];
    for &next in &ranked[take..] {
        let pos = most_redundant(m, &selected)?;
        let removed = selected.remove(pos);
        selected.push(next);
        let candidate = evaluator.evaluate(&selected)?;
        let f1 = candidate.macro_f1;
        trace.push(TraceStep {
            selected: selected.clone(),
            removed: Some(removed),
            added: Some(next),
            f1,
        });
        if f1 > best_f1 {
            best_f1 = f1;
            best = selected.clone();
            metrics = candidate;
        } else if f1 <= best_f1 - STOP_DROP {
            break;
        }
    }
    let wavelengths = set.axis().as_slice();
    Ok(SelectionReport {
        k,
        theta: None,
        candidates: ranked.to_vec(),
        selected_wavelengths_nm: best.iter().map(|&b| wavelengths[b]).collect(),
        selected_bands: best,
        best_f1,
        metrics,
        trace,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    /// Non-empty reports, best macro-F1 first.
    pub reports: Vec<SelectionReport>,
    /// Thresholds whose redundancy scan produced no candidates.
    pub empty_thetas: Vec<f64>,
}

impl SweepOutcome {
    pub fn winner(&self) -> Option<&SelectionReport> {
        self.reports.first()
    }
}

/// Redundancy scan, entropy ranking and greedy selection at every threshold
/// in `thetas`. VIFs are shared between thresholds.
pub fn threshold_sweep(
    set: &LabeledPatchSet,
    m: &BandMatrix,
    thetas: &[f64],
    k: usize,
    bit_depth: u32,
    spec: &ClassifierSpec,
    plan: &CvPlan,
) -> Result<SweepOutcome> {
    if thetas.is_empty() {
        return Err(Error::precondition("no thresholds to sweep"));
    }
    let table = VifTable::new(m.bands());
    let results = thetas
        .par_iter()
        .map(|&theta| {
            let ibra = interband_redundancy_with_table(m, theta, &table)?;
            if ibra.candidates.is_empty() {
                return Ok(None);
            }
            let ranking = rank_by_entropy(m, &ibra.candidates, bit_depth)?;
            let mut report = greedy_spectral_selection(set, m, &ranking.order(), k, spec, plan)?;
            report.theta = Some(theta);
            Ok(Some(report))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut reports = Vec::new();
    let mut empty_thetas = Vec::new();
    for (theta, r) in thetas.iter().zip(results) {
        match r {
            Some(r) => reports.push(r),
            None => empty_thetas.push(*theta),
        }
    }
    reports.sort_by(|a, b| b.best_f1.total_cmp(&a.best_f1));
    Ok(SweepOutcome {
        reports,
        empty_thetas,
    })
}

/// One line of the results table: selection, then fold mean and standard
/// deviation of every metric. Lists are `;`-separated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub theta: Option<f64>,
    pub k: usize,
    pub selected_bands: String,
    pub selected_wavelengths_nm: String,
    pub oa: f64,
    pub oa_std: f64,
    pub prec: f64,
    pub prec_std: f64,
    pub rec: f64,
    pub rec_std: f64,
    pub f1: f64,
    pub f1_std: f64,
}

impl From<&SelectionReport> for SummaryRow {
    fn from(r: &SelectionReport) -> Self {
        let join = |v: Vec<String>| v.join(";");
        let std = r.metrics.std();
        Self {
            theta: r.theta,
            k: r.k,
            selected_bands: join(r.selected_bands.iter().map(|b| b.to_string()).collect()),
            selected_wavelengths_nm: join(
                r.selected_wavelengths_nm.iter().map(|w| w.to_string()).collect(),
            ),
            oa: r.metrics.oa,
            oa_std: std.oa,
            prec: r.metrics.macro_precision,
            prec_std: std.macro_precision,
            rec: r.metrics.macro_recall,
            rec_std: std.macro_recall,
            f1: r.metrics.macro_f1,
            f1_std: std.macro_f1,
        }
    }
}

pub fn write_summary_csv<W: Write>(reports: &[SelectionReport], w: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(w);
    for r in reports {
        writer.serialize(SummaryRow::from(r))?;
    }
    writer.flush().map_err(|e| Error::Data(format!("csv flush: {e}")))
}

pub fn read_summary_csv<R: Read>(r: R) -> Result<Vec<SummaryRow>> {
    csv::Reader::from_reader(r)
        .deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datacube::WavelengthAxis;
    use crate::selection::make_cv_plan;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    /// Two classes; band 0 carries the label, the rest are noise.
    fn dataset(seed: u64) -> (LabeledPatchSet, BandMatrix) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let (n, s, bands) = (60, 2, 4);
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let mut data = Vec::new();
        for &l in &labels {
            for _ in 0..s * s {
                for b in 0..bands {
                    let mean = if b == 0 { 4.0 * l as f64 } else { 0.0 };
                    data.push(mean + noise.sample(&mut rng));
                }
            }
        }
        let axis = WavelengthAxis::linear(450.0, 20.0, bands).unwrap();
        let set = LabeledPatchSet::new(s, axis, data, labels).unwrap();
        let m = BandMatrix::from_patch_set(&set).unwrap();
        (set, m)
    }

    #[test]
    fn exactly_k_candidates_is_one_evaluation() {
        let (set, m) = dataset(1);
        let plan = make_cv_plan(&set, 1).unwrap();
        let r = greedy_spectral_selection(&set, &m, &[2, 0], 2, &ClassifierSpec::default(), &plan)
            .unwrap();
        assert_eq!(r.trace.len(), 1);
        assert_eq!(r.selected_bands, vec![2, 0]);
        assert!(r.warnings.is_empty());
    }

    #[test]
    fn k_larger_than_candidates_warns() {
        let (set, m) = dataset(2);
        let plan = make_cv_plan(&set, 1).unwrap();
        let r = greedy_spectral_selection(&set, &m, &[1, 0], 5, &ClassifierSpec::default(), &plan)
            .unwrap();
        assert_eq!(r.selected_bands, vec![1, 0]);
        assert_eq!(r.trace.len(), 1);
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn k_one_swaps_single_member() {
        let (set, m) = dataset(3);
        let plan = make_cv_plan(&set, 2).unwrap();
        let r = greedy_spectral_selection(&set, &m, &[1, 0, 2, 3], 1, &ClassifierSpec::default(), &plan)
            .unwrap();
        assert_eq!(r.selected_bands, vec![0]);
        assert_eq!(r.trace[1].removed, Some(1));
        assert_eq!(r.trace[1].added, Some(0));
        // band 2 is noise: the drop ends the search before band 3 is tried
        assert_eq!(r.trace.len(), 3);
        let max = r.trace.iter().map(|t| t.f1).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(r.best_f1, max);
    }

    #[test]
    fn preconditions() {
        let (set, m) = dataset(4);
        let plan = make_cv_plan(&set, 2).unwrap();
        let spec = ClassifierSpec::default();
        assert!(greedy_spectral_selection(&set, &m, &[0], 0, &spec, &plan).is_err());
        assert!(greedy_spectral_selection(&set, &m, &[], 1, &spec, &plan).is_err());
        assert!(threshold_sweep(&set, &m, &[], 1, 14, &spec, &plan).is_err());
    }

    #[test]
    fn ties_evict_lowest_band() {
        // two exact copies: pairwise VIFs tie at VIF_MAX
        let c: Vec<f64> = (0..20).map(|i| ((i * 7) % 5) as f64).collect();
        let other: Vec<f64> = (0..20).map(|i| ((i * 3) % 7) as f64).collect();
        let m = BandMatrix::from_columns_indexed(vec![other, c.clone(), c]).unwrap();
        assert_eq!(most_redundant(&m, &[2, 1]).unwrap(), 1);
        assert_eq!(most_redundant(&m, &[1, 2]).unwrap(), 0);
        assert_eq!(most_redundant(&m, &[0, 2, 1]).unwrap(), 2);
    }

    #[test]
    fn report_json_and_summary_round_trip() {
        let (set, m) = dataset(5);
        let plan = make_cv_plan(&set, 3).unwrap();
        let mut r = greedy_spectral_selection(&set, &m, &[0, 3, 1], 2, &ClassifierSpec::default(), &plan)
            .unwrap();
        r.theta = Some(10.0);
        let json = r.to_json().unwrap();
        assert_eq!(SelectionReport::from_json(&json).unwrap(), r);
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        for key in ["k", "theta", "selected_bands", "selected_wavelengths_nm", "metrics", "trace"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        for key in ["oa", "prec", "rec", "f1", "per_fold"] {
            assert!(v["metrics"].get(key).is_some(), "missing metrics.{key}");
        }
        let mut buf = Vec::new();
        write_summary_csv(std::slice::from_ref(&r), &mut buf).unwrap();
        let rows = read_summary_csv(buf.as_slice()).unwrap();
        assert_eq!(rows, vec![SummaryRow::from(&r)]);
    }
}
