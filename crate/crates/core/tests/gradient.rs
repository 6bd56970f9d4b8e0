use bandpick::classifier::loss_and_gradient;
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const H: f64 = 1e-5;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

#[test]
fn analytic_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (n, f, c) = (5, 3, 3);
    for _ in 0..50 {
        let x = Array2::from_shape_fn((n, f), |_| rng.sample::<f64, _>(StandardNormal));
        let y: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
        let w = Array2::from_shape_fn((c, f), |_| rng.sample::<f64, _>(StandardNormal));
        let b = Array1::from_shape_fn(c, |_| rng.sample::<f64, _>(StandardNormal));
        let l2 = rng.random_range(0.0..0.1);
        let (_, gw, gb) = loss_and_gradient(&w, &b, x.view(), &y, l2);
        for idx in 0..c * f {
            let (i, j) = (idx / f, idx % f);
            let mut wp = w.clone();
            let mut wm = w.clone();
            wp[[i, j]] += H;
            wm[[i, j]] -= H;
            let lp = loss_and_gradient(&wp, &b, x.view(), &y, l2).0;
            let lm = loss_and_gradient(&wm, &b, x.view(), &y, l2).0;
            let fd = (lp - lm) / (2.0 * H);
            assert!(rel_err(gw[[i, j]], fd) < 1e-5, "w[{i},{j}]: {} vs {fd}", gw[[i, j]]);
        }
        for i in 0..c {
            let mut bp = b.clone();
            let mut bm = b.clone();
            bp[i] += H;
            bm[i] -= H;
            let lp = loss_and_gradient(&w, &bp, x.view(), &y, l2).0;
            let lm = loss_and_gradient(&w, &bm, x.view(), &y, l2).0;
            let fd = (lp - lm) / (2.0 * H);
            assert!(rel_err(gb[i], fd) < 1e-5, "b[{i}]: {} vs {fd}", gb[i]);
        }
    }
}
