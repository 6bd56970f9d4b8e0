//! Wrapper classifiers that score a band subset.
//!
//! The built-in backend is multinomial logistic regression on per-band
//! spatial means, fit by full-batch gradient descent. Any other model can be
//! attached as an external command speaking a CSV file protocol.

use std::fs;
use std::path::Path;
use std::process::Command;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::datacube::LabeledPatchSet;
use crate::error::{Error, Result};

pub const FEATURE_RECIPE: &str = "band-spatial-mean";

// Step-halving limit when a gradient step fails to lower the loss.
const MAX_HALVINGS: u32 = 40;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassifierKind {
    LogisticBaseline,
    /// Shell command run inside a directory holding `train.csv` and
    /// `val.csv`; it must write `pred.csv`.
    External { command: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSpec {
    pub kind: ClassifierKind,
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    pub seed: u64,
}

impl Default for ClassifierSpec {
    fn default() -> Self {
        Self {
            kind: ClassifierKind::LogisticBaseline,
            learning_rate: 0.1,
            epochs: 300,
            l2: 1e-4,
            seed: 42,
        }
    }
}

impl ClassifierSpec {
    pub fn external(command: impl Into<String>) -> Self {
        Self {
            kind: ClassifierKind::External {
                command: command.into(),
            },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::precondition("epochs must be at least 1"));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::precondition("learning rate must be positive"));
        }
        if !(self.l2 >= 0.0) || !self.l2.is_finite() {
            return Err(Error::precondition("l2 must be non-negative"));
        }
        if let ClassifierKind::External { command } = &self.kind {
            if command.trim().is_empty() {
                return Err(Error::precondition("external backend command is empty"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    /// `classes × features`.
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
    pub recipe: &'static str,
    /// Regularised training loss before the first step and after every epoch.
    pub loss_history: Vec<f64>,
}

impl TrainedModel {
    pub fn classes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn features(&self) -> usize {
        self.weights.ncols()
    }
}

/// One row per patch: the spatial mean of each band in `band_subset`.
pub fn featurize(
    set: &LabeledPatchSet,
    band_subset: &[usize],
) -> Result<(Array2<f64>, Vec<usize>)> {
    check_subset(band_subset, set.bands())?;
    let b = set.bands();
    let pixels = set.pixels_per_patch() as f64;
    let mut x = Array2::zeros((set.len(), band_subset.len()));
    for (i, mut row) in x.axis_iter_mut(Axis(0)).enumerate() {
        for px in set.patch(i).chunks_exact(b) {
            for (f, &band) in band_subset.iter().enumerate() {
                row[f] += px[band];
            }
        }
        row.mapv_inplace(|v| v / pixels);
    }
    Ok((x, set.labels().to_vec()))
}

pub(crate) fn check_subset(band_subset: &[usize], bands: usize) -> Result<()> {
    if band_subset.is_empty() {
        return Err(Error::precondition("band subset is empty"));
    }
    if let Some(&bad) = band_subset.iter().find(|&&b| b >= bands) {
        return Err(Error::DimensionMismatch {
            expected: bands,
            got: bad,
        });
    }
    Ok(())
}

/// Row-wise softmax of `scores`.
pub fn softmax_rows(scores: &Array2<f64>) -> Array2<f64> {
    let mut p = scores.clone();
    for mut row in p.axis_iter_mut(Axis(0)) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|s| (s - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|e| e / sum);
    }
    p
}

fn scores(weights: &Array2<f64>, biases: &Array1<f64>, x: ArrayView2<f64>) -> Array2<f64> {
    x.dot(&weights.t()) + biases
}

/// Mean cross-entropy plus `l2/2 * |W|²`, and its gradient with respect to
/// the weights and biases.
pub fn loss_and_gradient(
    weights: &Array2<f64>,
    biases: &Array1<f64>,
    x: ArrayView2<f64>,
    y: &[usize],
    l2: f64,
) -> (f64, Array2<f64>, Array1<f64>) {
    let (classes, features) = weights.dim();
    let n = x.nrows() as f64;
    let mut grad_w = Array2::zeros((classes, features));
    let mut grad_b = Array1::zeros(classes);
    let mut p = vec![0.0; classes];
    let mut ce = 0.0;
    for (row, &label) in x.axis_iter(Axis(0)).zip(y) {
        for (k, pk) in p.iter_mut().enumerate() {
            *pk = biases[k] + weights.row(k).dot(&row);
        }
        let max = p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let target = p[label];
        let mut sum = 0.0;
        for pk in p.iter_mut() {
            *pk = (*pk - max).exp();
            sum += *pk;
        }
        ce += max + sum.ln() - target;
        for (k, pk) in p.iter().enumerate() {
            let delta = pk / sum - if k == label { 1.0 } else { 0.0 };
            grad_b[k] += delta;
            grad_w.row_mut(k).scaled_add(delta, &row);
        }
    }
    grad_w.mapv_inplace(|g| g / n);
    grad_w.scaled_add(l2, weights);
    grad_b.mapv_inplace(|g| g / n);
    let loss = ce / n + 0.5 * l2 * weights.iter().map(|w| w * w).sum::<f64>();
    (loss, grad_w, grad_b)
}

/// Fits softmax regression by full-batch gradient descent. A step that would
/// raise the loss is retried at half the step size, so the loss history is
/// non-increasing.
pub fn train(
    spec: &ClassifierSpec,
    x: ArrayView2<f64>,
    y: &[usize],
    classes: usize,
) -> Result<TrainedModel> {
    spec.validate()?;
    if spec.kind != ClassifierKind::LogisticBaseline {
        return Err(Error::precondition(
            "only the logistic baseline trains in-process; use fit_predict for external backends",
        ));
    }
    check_training_data(x, y, classes)?;
    let f = x.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let init = Normal::new(0.0, 0.01).expect("valid normal");
    let mut w = Array2::from_shape_simple_fn((classes, f), || init.sample(&mut rng));
    let mut b = Array1::zeros(classes);
    let (mut loss, mut gw, mut gb) = loss_and_gradient(&w, &b, x, y, spec.l2);
    let mut history = Vec::with_capacity(spec.epochs + 1);
    history.push(loss);
    let mut lr = spec.learning_rate;
    'epochs: for _ in 0..spec.epochs {
        let mut halvings = 0;
        loop {
            let w_new = &w - &(&gw * lr);
            let b_new = &b - &(&gb * lr);
            let (l_new, gw_new, gb_new) = loss_and_gradient(&w_new, &b_new, x, y, spec.l2);
            if l_new <= loss {
                (w, b, loss, gw, gb) = (w_new, b_new, l_new, gw_new, gb_new);
                break;
            }
            halvings += 1;
            if halvings > MAX_HALVINGS {
                break 'epochs;
            }
            lr *= 0.5;
        }
        history.push(loss);
    }
    if w.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Data("training diverged to non-finite weights".into()));
    }
    Ok(TrainedModel {
        weights: w,
        biases: b,
        recipe: FEATURE_RECIPE,
        loss_history: history,
    })
}

fn check_training_data(x: ArrayView2<f64>, y: &[usize], classes: usize) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            got: y.len(),
        });
    }
    if x.ncols() == 0 || x.nrows() == 0 {
        return Err(Error::precondition("empty training matrix"));
    }
    if let Some(&bad) = y.iter().find(|&&l| l >= classes) {
        return Err(Error::precondition(format!("label {bad} >= class count {classes}")));
    }
    let first = y[0];
    if y.iter().all(|&l| l == first) {
        return Err(Error::precondition("training labels contain a single class"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("training features contain non-finite values".into()));
    }
    Ok(())
}

/// Argmax of the class scores; ties resolve to the lowest class index.
pub fn predict(model: &TrainedModel, x: ArrayView2<f64>) -> Result<Vec<usize>> {
    if x.ncols() != model.features() {
        return Err(Error::DimensionMismatch {
            expected: model.features(),
            got: x.ncols(),
        });
    }
    let s = scores(&model.weights, &model.biases, x);
    Ok(s.axis_iter(Axis(0)).map(|row| argmax(row.iter().copied())).collect())
}

pub(crate) fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Trains on `(train_x, train_y)` and predicts `val_x` with whichever backend
/// `spec` names.
pub fn fit_predict(
    spec: &ClassifierSpec,
    train_x: ArrayView2<f64>,
    train_y: &[usize],
    val_x: ArrayView2<f64>,
    val_y: &[usize],
    classes: usize,
) -> Result<Vec<usize>> {
    match &spec.kind {
        ClassifierKind::LogisticBaseline => {
            let model = train(spec, train_x, train_y, classes)?;
            predict(&model, val_x)
        }
        ClassifierKind::External { command } => {
            spec.validate()?;
            check_training_data(train_x, train_y, classes)?;
            if val_x.ncols() != train_x.ncols() {
                return Err(Error::DimensionMismatch {
                    expected: train_x.ncols(),
                    got: val_x.ncols(),
                });
            }
            run_external(command, train_x, train_y, val_x, val_y, classes)
        }
    }
}

fn write_feature_csv(path: &Path, x: ArrayView2<f64>, y: &[usize]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (0..x.ncols()).map(|f| format!("f{f}")).collect();
    header.push("label".into());
    w.write_record(&header)?;
    for (row, label) in x.axis_iter(Axis(0)).zip(y) {
        let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        rec.push(label.to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn run_external(
    command: &str,
    train_x: ArrayView2<f64>,
    train_y: &[usize],
    val_x: ArrayView2<f64>,
    val_y: &[usize],
    classes: usize,
) -> Result<Vec<usize>> {
    let dir = tempfile::Builder::new()
        .prefix("bandpick-backend-")
        .tempdir()
        .map_err(|e| Error::Backend(format!("cannot create exchange directory: {e}")))?;
    let train_path = dir.path().join("train.csv");
    let val_path = dir.path().join("val.csv");
    let pred_path = dir.path().join("pred.csv");
    write_feature_csv(&train_path, train_x, train_y)?;
    write_feature_csv(&val_path, val_x, val_y)?;
    let status = Command::new("sh")
        .arg("-c")
        .arg(command)
        .current_dir(dir.path())
        .env("BANDPICK_TRAIN", &train_path)
        .env("BANDPICK_VAL", &val_path)
        .env("BANDPICK_PRED", &pred_path)
        .env("BANDPICK_CLASSES", classes.to_string())
        .status()
        .map_err(|e| Error::Backend(format!("cannot run '{command}': {e}")))?;
    if !status.success() {
        return Err(Error::Backend(format!("'{command}' exited with {status}")));
    }
    let text = fs::read_to_string(&pred_path)
        .map_err(|e| Error::Backend(format!("cannot read pred.csv: {e}")))?;
    parse_predictions(&text, val_x.nrows(), classes)
}

fn parse_predictions(text: &str, rows: usize, classes: usize) -> Result<Vec<usize>> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty()).peekable();
    if lines.peek().is_some_and(|l| l.parse::<usize>().is_err()) {
        lines.next();
    }
    let preds = lines
        .map(|l| {
            l.parse::<usize>()
                .ok()
                .filter(|&p| p < classes)
                .ok_or_else(|| Error::Backend(format!("invalid prediction '{l}'")))
        })
        .collect::<Result<Vec<_>>>()?;
    if preds.len() != rows {
        return Err(Error::Backend(format!(
            "pred.csv has {} predictions for {rows} validation rows",
            preds.len()
        )));
    }
    Ok(preds)
}
