//! Ordinary least squares with an intercept, reduced to the coefficient of
//! determination. Both routes centre the data first, which absorbs the
//! intercept.

/// Sentinel VIF for perfectly (or degenerately) predictable bands.
pub const VIF_MAX: f64 = 1e12;

/// R² at or above this is treated as an exact fit.
pub const R2_EXACT: f64 = 1.0 - 1e-12;

// A centred sum of squares this small relative to the raw sum of squares is
// rounding noise on a constant column.
const DEGENERATE_RATIO: f64 = 1e-20;

/// Row step that keeps at most `cap` of `rows` rows: rows `0, s, 2s, ...`.
pub fn subsample_stride(rows: usize, cap: usize) -> usize {
    if cap == 0 || rows <= cap {
        1
    } else {
        rows.div_ceil(cap)
    }
}

pub fn vif_from_r2(r2: Option<f64>) -> f64 {
    match r2 {
        Some(r2) if r2 < R2_EXACT => 1.0 / (1.0 - r2.max(0.0)),
        _ => VIF_MAX,
    }
}

fn centred(col: &[f64], stride: usize) -> Option<Vec<f64>> {
    let vals: Vec<f64> = col.iter().step_by(stride).copied().collect();
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let raw: f64 = vals.iter().map(|v| v * v).sum();
    let out: Vec<f64> = vals.iter().map(|v| v - mean).collect();
    let ss: f64 = out.iter().map(|v| v * v).sum();
    if ss == 0.0 || ss <= DEGENERATE_RATIO * raw {
        None
    } else {
        Some(out)
    }
}

/// R² of the simple regression of `y` on `x` (symmetric in its arguments).
/// `None` when either column has no variance.
pub fn pairwise_r2(x: &[f64], y: &[f64], stride: usize) -> Option<f64> {
    let x = centred(x, stride)?;
    let y = centred(y, stride)?;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(&y) {
        sxx += a * a;
        syy += b * b;
        sxy += a * b;
    }
    Some((sxy * sxy / (sxx * syy)).min(1.0))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn project_out(v: &mut [f64], basis: &[Vec<f64>]) {
    // two passes of modified Gram-Schmidt keep the residual orthogonal to
    // working precision
    for _ in 0..2 {
        for q in basis {
            let c = dot(q, v);
            v.iter_mut().zip(q).for_each(|(x, qi)| *x -= c * qi);
        }
    }
}

/// R² of regressing `target` on all `predictors`, via an orthonormal basis of
/// the centred predictor span. Predictors that add no new direction (constant
/// or linearly dependent on earlier ones) are skipped, giving the
/// minimum-norm least-squares fit. `None` when the target has no variance.
pub fn multiple_r2(target: &[f64], predictors: &[&[f64]], stride: usize) -> Option<f64> {
    let y = centred(target, stride)?;
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(predictors.len());
    for p in predictors {
        let Some(mut v) = centred(p, stride) else {
            continue;
        };
        let before = dot(&v, &v);
        project_out(&mut v, &basis);
        let after = dot(&v, &v);
        if after <= DEGENERATE_RATIO * before {
            continue;
        }
        let norm = after.sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        basis.push(v);
    }
    let sst = dot(&y, &y);
    let mut r = y;
    project_out(&mut r, &basis);
    let sse = dot(&r, &r);
    Some((1.0 - sse / sst).clamp(0.0, 1.0))
}
