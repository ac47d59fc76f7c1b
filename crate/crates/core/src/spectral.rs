//! Lag-window estimates of the quantile spectral matrix and the
//! Kullback-Leibler divergence between spectral matrix fields.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{QfaError, Result};
use crate::linalg::hermitian_cholesky;
use crate::qseries::{half_grid, QSpecMatrix, QacfArray, SpecKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowKind {
    TukeyHanning,
    Bartlett,
    Parzen,
}

/// Symmetric lag window with bandwidth `M`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LagWindow {
    pub kind: WindowKind,
    pub m: f64,
}

impl LagWindow {
    pub fn new(kind: WindowKind, m: f64) -> Result<Self> {
        if !(m > 0.0) || !m.is_finite() {
            return Err(QfaError::domain("window bandwidth must be positive"));
        }
        Ok(Self { kind, m })
    }

    pub fn tukey_hanning(m: f64) -> Result<Self> {
        Self::new(WindowKind::TukeyHanning, m)
    }
}

/// `W_M(τ)`; zero for `|τ| > M`.
pub fn window_weight(w: &LagWindow, tau: i64) -> f64 {
    let u = (tau as f64).abs() / w.m;
    if u > 1.0 {
        return 0.0;
    }
    match w.kind {
        WindowKind::TukeyHanning => 0.5 * (1.0 + (PI * u).cos()),
        WindowKind::Bartlett => 1.0 - u,
        WindowKind::Parzen => {
            if u <= 0.5 {
                1.0 - 6.0 * u * u + 6.0 * u * u * u
            } else {
                2.0 * (1.0 - u).powi(3)
            }
        }
    }
}

/// `Ŝ(ω_v, α) = Σ_{|τ|<n} W_M(τ) Γ(τ, α) e^{−iτω_v}` on the half grid
/// `v = 1..⌊(n−1)/2⌋`.
pub fn lw_estimate(acf: &QacfArray, w: &LagWindow) -> Result<QSpecMatrix> {
    lw_estimate_at(acf, w, &half_grid(acf.n()))
}

/// As [`lw_estimate`] on arbitrary Fourier indices. The windowed lags are
/// folded onto a length-`n` circle (`τ` and `−τ ≡ n − τ`), so one FFT per
/// matrix entry evaluates the sum exactly at every Fourier frequency.
pub fn lw_estimate_at(acf: &QacfArray, w: &LagWindow, freqs: &[usize]) -> Result<QSpecMatrix> {
    let (m, n, l) = (acf.m(), acf.n(), acf.num_levels());
    if w.m >= n as f64 {
        return Err(QfaError::domain(format!(
            "window bandwidth {} must be below the series length {n}",
            w.m
        )));
    }
    if freqs.iter().any(|&v| v >= n) {
        return Err(QfaError::domain("frequency index outside the Fourier grid"));
    }
    let weights: Vec<f64> = (0..n).map(|t| window_weight(w, t as i64)).collect();
    let maxlag = (w.m.floor() as usize).min(n - 1);
    let fft = FftPlanner::new().plan_fft_forward(n);

    let per_level: Vec<Vec<Complex64>> = (0..l)
        .into_par_iter()
        .map(|lv| {
            let mut block = vec![Complex64::new(0.0, 0.0); freqs.len() * m * m];
            let mut buf = vec![Complex64::new(0.0, 0.0); n];
            for j in 0..m {
                for jp in j..m {
                    buf.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
                    let fwd = acf.lags(j, jp, lv);
                    let bwd = acf.lags(jp, j, lv);
                    buf[0].re = weights[0] * fwd[0];
                    for tau in 1..=maxlag {
                        buf[tau].re += weights[tau] * fwd[tau];
                        buf[n - tau].re += weights[tau] * bwd[tau];
                    }
                    fft.process(&mut buf);
                    for (fi, &v) in freqs.iter().enumerate() {
                        let s = &mut block[fi * m * m..(fi + 1) * m * m];
                        if j == jp {
                            s[j * m + j] = Complex64::new(buf[v].re, 0.0);
                        } else {
                            s[j * m + jp] = buf[v];
                            s[jp * m + j] = buf[v].conj();
                        }
                    }
                }
            }
            block
        })
        .collect();
    let mut out = QSpecMatrix::zeros(
        m,
        n,
        acf.levels().to_vec(),
        freqs.to_vec(),
        SpecKind::LwEstimate,
    );
    for (lv, block) in per_level.into_iter().enumerate() {
        out.level_block_mut(lv).copy_from_slice(&block);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KldResult {
    pub value: f64,
    /// Number of frequencies in the grid.
    pub frequencies: usize,
    pub levels: usize,
}

/// Solve `L Lᴴ x = b` for a Cholesky factor `L` (row-major, lower).
fn chol_solve(m: usize, l: &[Complex64], b: &mut [Complex64]) {
    for i in 0..m {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * m + k] * b[k];
        }
        b[i] = s / l[i * m + i].re;
    }
    for i in (0..m).rev() {
        let mut s = b[i];
        for k in i + 1..m {
            s -= l[k * m + i].conj() * b[k];
        }
        b[i] = s / l[i * m + i].re;
    }
}

/// Single-slice divergence `tr(ŜS⁻¹) − log(det Ŝ / det S) − m`.
pub fn kld_slice(m: usize, est: &[Complex64], truth: &[Complex64]) -> Option<f64> {
    let ls = hermitian_cholesky(m, truth)?;
    let le = hermitian_cholesky(m, est)?;
    // tr(Ŝ S⁻¹) = tr(S⁻¹ Ŝ) = Σ_i (S⁻¹ Ŝ e_i)_i
    let mut tr = 0.0;
    let mut col = vec![Complex64::new(0.0, 0.0); m];
    for i in 0..m {
        for (r, c) in col.iter_mut().enumerate() {
            *c = est[r * m + i];
        }
        chol_solve(m, &ls, &mut col);
        tr += col[i].re;
    }
    let logdet = |l: &[Complex64]| -> f64 { (0..m).map(|i| 2.0 * l[i * m + i].re.ln()).sum() };
    Some(tr - (logdet(&le) - logdet(&ls)) - m as f64)
}

/// Grid average of [`kld_slice`].
pub fn kld(est: &QSpecMatrix, truth: &QSpecMatrix) -> Result<KldResult> {
    if !est.same_grid(truth) {
        return Err(QfaError::domain("estimate and truth are on different grids"));
    }
    let (m, l, nv) = (est.m(), est.num_levels(), est.freqs().len());
    if l == 0 || nv == 0 {
        return Err(QfaError::size("empty evaluation grid"));
    }
    let mut total = 0.0;
    for lv in 0..l {
        for fi in 0..nv {
            let v = kld_slice(m, est.slice(lv, fi), truth.slice(lv, fi)).ok_or(
                QfaError::SingularSlice {
                    freq: est.freqs()[fi],
                    level: lv,
                },
            )?;
            total += v;
        }
    }
    Ok(KldResult {
        value: total / (l * nv) as f64,
        frequencies: nv,
        levels: l,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tukey_hanning_examples() {
        let w = LagWindow::tukey_hanning(30.0).unwrap();
        assert_eq!(window_weight(&w, 0), 1.0);
        assert!(window_weight(&w, 30).abs() < 1e-15);
        assert!((window_weight(&w, 15) - 0.5).abs() < 1e-15);
        assert_eq!(window_weight(&w, 31), 0.0);
        assert_eq!(window_weight(&w, -15), window_weight(&w, 15));
    }

    #[test]
    fn other_windows() {
        let b = LagWindow::new(WindowKind::Bartlett, 10.0).unwrap();
        assert!((window_weight(&b, 5) - 0.5).abs() < 1e-15);
        let p = LagWindow::new(WindowKind::Parzen, 10.0).unwrap();
        assert_eq!(window_weight(&p, 0), 1.0);
        assert!((window_weight(&p, 5) - 0.25).abs() < 1e-15);
        assert!(window_weight(&p, 10).abs() < 1e-15);
        assert!(LagWindow::tukey_hanning(0.0).is_err());
    }

    #[test]
    fn scalar_kld_of_doubled_spectrum() {
        let c = |v: f64| Complex64::new(v, 0.0);
        let truth = QSpecMatrix::from_parts(
            1,
            8,
            vec![0.5],
            vec![1, 2, 3],
            SpecKind::Truth,
            vec![c(1.0), c(2.5), c(0.3)],
        )
        .unwrap();
        let mut est = truth.clone();
        est.values_mut().iter_mut().for_each(|v| *v *= 2.0);
        let k = kld(&est, &truth).unwrap();
        assert!((k.value - (1.0 - 2f64.ln())).abs() < 1e-12);
        assert!(kld(&truth, &truth).unwrap().value.abs() < 1e-12);
    }

    #[test]
    fn singular_slice_is_reported() {
        let c = |v: f64| Complex64::new(v, 0.0);
        let truth =
            QSpecMatrix::from_parts(1, 8, vec![0.5], vec![1, 2], SpecKind::Truth, vec![c(1.0), c(1.0)])
                .unwrap();
        let est =
            QSpecMatrix::from_parts(1, 8, vec![0.5], vec![1, 2], SpecKind::Truth, vec![c(1.0), c(0.0)])
                .unwrap();
        assert_eq!(
            kld(&est, &truth),
            Err(QfaError::SingularSlice { freq: 2, level: 0 })
        );
    }
}
