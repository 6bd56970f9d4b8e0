use std::collections::BTreeSet;

use bandpick::collinearity::{
    interband_redundancy, interband_redundancy_with_table, BandMatrix, VifTable,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn walk_matrix(seed: u64, rows: usize, bands: usize) -> BandMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(bands);
    for b in 0..bands {
        let noise: f64 = rng.random_range(0.05..1.5);
        let col = (0..rows)
            .map(|r| {
                let e: f64 = rng.sample(StandardNormal);
                if b == 0 { e } else { cols[b - 1][r] + noise * e }
            })
            .collect();
        cols.push(col);
    }
    BandMatrix::from_columns_indexed(cols).unwrap()
}

fn pearson_vif(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    let r = sxy / (sxx * syy).sqrt();
    1.0 / (1.0 - r * r)
}

struct Scan {
    d_left: Vec<usize>,
    d_right: Vec<usize>,
    d: Vec<usize>,
    candidates: Vec<usize>,
    visited: BTreeSet<(usize, usize)>,
}

fn brute_scan(m: &BandMatrix, theta: f64) -> Scan {
    let b = m.bands();
    let mut visited = BTreeSet::new();
    let mut collinear = |x: usize, y: usize| {
        visited.insert((x.min(y), x.max(y)));
        pearson_vif(m.column(x), m.column(y)) > theta
    };
    let mut d_left = vec![0; b];
    let mut d_right = vec![0; b];
    for x in 0..b {
        while d_left[x] < x && collinear(x, x - d_left[x] - 1) {
            d_left[x] += 1;
        }
        while x + d_right[x] + 1 < b && collinear(x, x + d_right[x] + 1) {
            d_right[x] += 1;
        }
    }
    let d: Vec<usize> = (0..b).map(|x| d_left[x].abs_diff(d_right[x])).collect();
    let candidates = (1..b)
        .filter(|&x| d[x] < 5 && d[x - 1] > d[x])
        .filter(|&x| matches!((x + 1..b).find(|&y| d[y] != d[x]), Some(y) if d[y] > d[x]))
        .collect();
    Scan { d_left, d_right, d, candidates, visited }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn scan_matches_brute_force(seed in any::<u64>(), bands in 2usize..=16, rows in 30usize..200, theta in 5.0f64..12.0) {
        let m = walk_matrix(seed, rows, bands);
        let table = VifTable::new(bands);
        let got = interband_redundancy_with_table(&m, theta, &table).unwrap();
        let want = brute_scan(&m, theta);
        prop_assert_eq!(&got.d_left, &want.d_left);
        prop_assert_eq!(&got.d_right, &want.d_right);
        prop_assert_eq!(&got.d, &want.d);
        prop_assert_eq!(&got.candidates, &want.candidates);
        prop_assert_eq!(table.fits(), want.visited.len());
        prop_assert_eq!(got.d_left[0], 0);
        prop_assert_eq!(got.d_right[bands - 1], 0);
    }

    #[test]
    fn higher_threshold_shortens_runs(seed in any::<u64>(), bands in 2usize..=16, a in 5.0f64..12.0, b in 5.0f64..12.0) {
        let m = walk_matrix(seed, 80, bands);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let low = interband_redundancy(&m, lo).unwrap();
        let high = interband_redundancy(&m, hi).unwrap();
        for x in 0..bands {
            prop_assert!(high.d_left[x] <= low.d_left[x]);
            prop_assert!(high.d_right[x] <= low.d_right[x]);
        }
    }
}

#[test]
fn block_structure_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for blocks in [vec![3, 4, 5], vec![1, 6, 2, 2], vec![8, 8]] {
        let rows = 300;
        let mut cols = Vec::new();
        for &len in &blocks {
            let latent: Vec<f64> = (0..rows).map(|_| rng.sample(StandardNormal)).collect();
            for _ in 0..len {
                cols.push(
                    latent
                        .iter()
                        .map(|l| l + 0.1 * rng.sample::<f64, _>(StandardNormal))
                        .collect(),
                );
            }
        }
        let m = BandMatrix::from_columns_indexed(cols).unwrap();
        for theta in [5.0, 10.0] {
            let got = interband_redundancy(&m, theta).unwrap();
            let want = brute_scan(&m, theta);
            assert_eq!(got.d_left, want.d_left, "{blocks:?}");
            assert_eq!(got.d_right, want.d_right, "{blocks:?}");
            assert_eq!(got.candidates, want.candidates, "{blocks:?}");
        }
    }
}
