use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;
use qfa_core::qdft::{qdft, sqdft, MultiSeries};
use qfa_core::qr::{check_loss, solve_qr, RegressionData, DEFAULT_MAX_ITER, DEFAULT_TOL};
use qfa_core::qseries::{half_grid, qacf, qper, qser};
use qfa_core::spectral::{lw_estimate_at, window_weight, LagWindow};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Minimum check loss over all exact fits through `p` observations.
fn enumeration_objective(data: &RegressionData, alpha: f64) -> f64 {
    let (n, p) = (data.n(), data.p());
    let mut best = f64::INFINITY;
    let mut idx: Vec<usize> = (0..p).collect();
    loop {
        let mut a = vec![vec![0.0; p + 1]; p];
        for (r, &i) in idx.iter().enumerate() {
            for c in 0..p {
                a[r][c] = data.x(i, c);
            }
            a[r][p] = data.y()[i];
        }
        if let Some(beta) = gauss(a) {
            best = best.min(check_loss(&data.residuals(&beta), alpha).unwrap());
        }
        // next combination
        let mut k = p;
        while k > 0 && idx[k - 1] == n - p + k - 1 {
            k -= 1;
        }
        if k == 0 {
            return best;
        }
        idx[k - 1] += 1;
        for t in k..p {
            idx[t] = idx[t - 1] + 1;
        }
    }
}

fn gauss(mut a: Vec<Vec<f64>>) -> Option<Vec<f64>> {
    let p = a.len();
    for c in 0..p {
        let piv = (c..p).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[piv][c].abs() < 1e-10 {
            return None;
        }
        a.swap(c, piv);
        for r in 0..p {
            if r != c {
                let f = a[r][c] / a[c][c];
                for k in c..=p {
                    a[r][k] -= f * a[c][k];
                }
            }
        }
    }
    Some((0..p).map(|i| a[i][p] / a[i][i]).collect())
}

fn random_data(seed: u64, n: usize, p: usize) -> RegressionData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cols: Vec<Vec<f64>> = (0..p)
        .map(|j| {
            (0..n)
                .map(|_| if j == 0 { 1.0 } else { rng.gen_range(-2.0..2.0) })
                .collect()
        })
        .collect();
    let y = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
    RegressionData::from_columns(cols, y).unwrap()
}

fn random_series(seed: u64, m: usize, n: usize) -> MultiSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    MultiSeries::new(
        (0..m)
            .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect(),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn qr_matches_enumeration(seed in any::<u64>(), n in 4usize..=12, p in 1usize..=3, alpha in 0.05f64..0.95) {
        let data = random_data(seed, n, p);
        let got = solve_qr(&data, alpha, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let oracle = enumeration_objective(&data, alpha);
        prop_assert!((got.objective - oracle).abs() <= 1e-8 * (1.0 + oracle), "{} vs {}", got.objective, oracle);
    }

    #[test]
    fn qr_equivariance(seed in any::<u64>(), scale in 0.1f64..10.0, shift in -3.0f64..3.0, alpha in 0.1f64..0.9) {
        let data = random_data(seed, 30, 2);
        let base = solve_qr(&data, alpha, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let y2: Vec<f64> = data.y().iter().zip(data.column(1)).map(|(y, x)| scale * y + shift * x).collect();
        let moved = solve_qr(&data.with_response(y2).unwrap(), alpha, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        prop_assert!((moved.objective - scale * base.objective).abs() <= 1e-7 * (1.0 + moved.objective));
    }

    #[test]
    fn qr_subgradient_balance(seed in any::<u64>(), alpha in 0.1f64..0.9) {
        // optimality: some ζ ∈ [0,1]^Z balances the signs of the residuals
        let data = random_data(seed, 25, 2);
        let sol = solve_qr(&data, alpha, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let r = data.residuals(&sol.beta);
        let tol = 1e-9 * (1.0 + r.iter().fold(0.0f64, |a, v| a.max(v.abs())));
        let (mut below, mut zero) = (0usize, 0usize);
        for v in &r {
            if *v < -tol { below += 1 } else if v.abs() <= tol { zero += 1 }
        }
        // intercept column: #{r<0} ≤ αn ≤ #{r≤0}
        let an = alpha * 25.0;
        prop_assert!(below as f64 <= an + 1e-9 && an <= (below + zero) as f64 + 1e-9);
    }

    #[test]
    fn qacf_matches_direct_sums(seed in any::<u64>(), n in 16usize..48) {
        let z = qdft(&random_series(seed, 2, n), &[0.3, 0.6]).unwrap();
        let qs = qser(&z).unwrap();
        let acf = qacf(&qs);
        for j in 0..2 {
            for jp in 0..2 {
                for lv in 0..2 {
                    let (x, y) = (qs.series(j, lv), qs.series(jp, lv));
                    let (mx, my) = (qs.xbar(j, lv), qs.xbar(jp, lv));
                    for tau in 0..n {
                        let direct: f64 = (0..n - tau).map(|t| (x[t + tau] - mx) * (y[t] - my)).sum::<f64>() / n as f64;
                        prop_assert!((acf.lags(j, jp, lv)[tau] - direct).abs() <= 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn lw_matches_direct_sum(seed in any::<u64>(), n in 16usize..48, bw in 2.0f64..12.0) {
        let z = qdft(&random_series(seed, 2, n), &[0.5]).unwrap();
        let acf = qacf(&qser(&z).unwrap());
        let w = LagWindow::tukey_hanning(bw.min(n as f64 - 1.0)).unwrap();
        let freqs: Vec<usize> = (0..n).collect();
        let est = lw_estimate_at(&acf, &w, &freqs).unwrap();
        for (fi, &v) in freqs.iter().enumerate() {
            let om = 2.0 * PI * v as f64 / n as f64;
            for j in 0..2 {
                for jp in 0..2 {
                    let mut s = Complex64::new(0.0, 0.0);
                    for tau in -(n as i64 - 1)..n as i64 {
                        s += window_weight(&w, tau) * acf.get(j, jp, 0, tau as isize) * Complex64::from_polar(1.0, -om * tau as f64);
                    }
                    prop_assert!((est.get(0, fi, j, jp) - s).norm() <= 1e-9);
                }
            }
        }
    }
}

#[test]
fn qacf_fourier_transform_is_qper() {
    for (seed, n) in [(1u64, 64usize), (2, 65), (3, 128)] {
        let z = qdft(&random_series(seed, 2, n), &[0.25, 0.5, 0.75]).unwrap();
        let acf = qacf(&qser(&z).unwrap());
        let per = qper(&z);
        for lv in 0..3 {
            for v in 1..n {
                let om = 2.0 * PI * v as f64 / n as f64;
                for j in 0..2 {
                    for jp in 0..2 {
                        let mut s = Complex64::new(0.0, 0.0);
                        for tau in -(n as i64 - 1)..n as i64 {
                            s += acf.get(j, jp, lv, tau as isize) * Complex64::from_polar(1.0, -om * tau as f64);
                        }
                        let target = per.get(lv, v, j, jp);
                        assert!((s - target).norm() <= 1e-8 * (1.0 + target.norm()));
                    }
                }
            }
        }
    }
}

#[test]
fn qdft_location_shift() {
    let s = random_series(4, 1, 40);
    let shifted = MultiSeries::new(vec![s.series(0).iter().map(|v| v + 2.5).collect()]).unwrap();
    let levels = [0.2, 0.5, 0.8];
    let (a, b) = (qdft(&s, &levels).unwrap(), qdft(&shifted, &levels).unwrap());
    for lv in 0..3 {
        assert!((b.get(0, lv, 0) - a.get(0, lv, 0) - Complex64::new(100.0, 0.0)).norm() < 1e-8);
        for v in 1..40 {
            // regression at v > 0 keeps its slope coefficients
            let (za, zb) = (a.get(0, lv, v), b.get(0, lv, v));
            assert!((za - zb).norm() <= 1e-6 * (1.0 + za.norm()), "v={v}");
        }
    }
}

#[test]
fn half_grid_excludes_zero_and_nyquist() {
    assert_eq!(half_grid(8), vec![1, 2, 3]);
    assert_eq!(half_grid(9), vec![1, 2, 3, 4]);
    assert_eq!(half_grid(512).len(), 255);
}

/// Check loss of the slope pair carried by `z` with the intercept refitted.
fn slope_objective(y: &[f64], v: usize, z: Complex64, alpha: f64) -> f64 {
    let n = y.len();
    let om = 2.0 * PI * v as f64 / n as f64;
    let (b2, b3) = (2.0 * z.re / n as f64, -2.0 * z.im / n as f64);
    let r: Vec<f64> = (0..n)
        .map(|t| {
            let tt = (t + 1) as f64;
            y[t] - b2 * (om * tt).cos() - b3 * (om * tt).sin()
        })
        .collect();
    let mut sorted = r.clone();
    sorted.sort_by(f64::total_cmp);
    let c = sorted[((n as f64 * alpha).ceil() as usize).max(1) - 1];
    check_loss(&r.iter().map(|x| x - c).collect::<Vec<_>>(), alpha).unwrap()
}

#[test]
fn sqdft_is_optimal_per_level_for_tiny_penalty() {
    // the QR solution need not be unique, so compare attained objectives
    let s = random_series(8, 1, 64);
    let y = s.series(0);
    let levels: Vec<f64> = (0..9).map(|i| 0.1 + 0.1 * i as f64).collect();
    let a = qdft(&s, &levels).unwrap();
    let b = sqdft(&s, &levels, -20.0, false).unwrap();
    for v in 1..32 {
        for (lv, &alpha) in levels.iter().enumerate() {
            let oa = slope_objective(y, v, a.get(0, lv, v), alpha);
            let ob = slope_objective(y, v, b.get(0, lv, v), alpha);
            assert!((ob - oa).abs() <= 1e-6 * oa, "v={v} level={lv}: {ob} vs {oa}");
        }
    }
}
