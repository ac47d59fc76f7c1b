//! Quantile discrete Fourier transform.
//!
//! At each Fourier frequency `ω_v ∈ (0, π)` the trigonometric quantile
//! regression of `y(t)` on `{1, cos(ω_v t), sin(ω_v t)}` gives
//! `Z(ω_v, α) = (n/2)(β̂₂ − iβ̂₃)`; at `ω = π` the cosine-only regression
//! gives `Z = n·β̂₂`, and at `ω = 0` the intercept-only regression gives
//! `Z = n·β̂₁` (n times the sample quantile). The remaining frequencies
//! follow from conjugate symmetry.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::bspline::{build_spline_basis, check_levels, default_knot_count, SplineBasis};
use crate::error::{QfaError, Result};
use crate::qr::{solve_qr, RegressionData, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::sqr::{assemble_sqr, penalty_plan, solve_sqr};

/// Smallest supported series length.
pub const MIN_LENGTH: usize = 8;

/// `m` real series of common length `n`, stored series-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiSeries {
    m: usize,
    n: usize,
    values: Vec<f64>,
}

impl MultiSeries {
    pub fn new(series: Vec<Vec<f64>>) -> Result<Self> {
        let m = series.len();
        if m == 0 {
            return Err(QfaError::size("at least one series is required"));
        }
        let n = series[0].len();
        if series.iter().any(|s| s.len() != n) {
            return Err(QfaError::size("series have different lengths"));
        }
        Self::from_flat(m, n, series.concat())
    }

    /// `values[j*n + t]` is series `j` at time `t + 1`.
    pub fn from_flat(m: usize, n: usize, values: Vec<f64>) -> Result<Self> {
        if m == 0 || values.len() != m * n {
            return Err(QfaError::size("values do not form an m x n array"));
        }
        if n < MIN_LENGTH {
            return Err(QfaError::size(format!(
                "series length {n} is below the minimum {MIN_LENGTH}"
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(QfaError::domain("series contain non-finite values"));
        }
        Ok(Self { m, n, values })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn series(&self, j: usize) -> &[f64] {
        &self.values[j * self.n..(j + 1) * self.n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Fourier frequencies `ω_v = 2πv/n`, `v = 0..n−1`.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierGrid {
    n: usize,
    freqs: Vec<f64>,
}

pub fn fourier_grid(n: usize) -> Result<FourierGrid> {
    if n < 2 {
        return Err(QfaError::size("a Fourier grid needs n >= 2"));
    }
    let freqs = (0..n).map(|v| 2.0 * PI * v as f64 / n as f64).collect();
    Ok(FourierGrid { n, freqs })
}

impl FourierGrid {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn omega(&self, v: usize) -> f64 {
        self.freqs[v]
    }

    /// Index of `ω = π`, present only for even `n`.
    pub fn nyquist(&self) -> Option<usize> {
        (self.n % 2 == 0).then_some(self.n / 2)
    }

    /// Indices of the frequencies strictly inside `(0, π)`.
    pub fn general(&self) -> std::ops::RangeInclusive<usize> {
        1..=(self.n - 1) / 2
    }
}

/// `Z_j(ω_v, α_ℓ)` for all series, levels and Fourier frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct QdftArray {
    m: usize,
    n: usize,
    levels: Vec<f64>,
    /// Index `(j·L + ℓ)·n + v`.
    z: Vec<Complex64>,
}

impl QdftArray {
    /// Wrap raw values laid out as `(j·L + ℓ)·n + v`.
    pub fn from_parts(m: usize, n: usize, levels: Vec<f64>, z: Vec<Complex64>) -> Result<Self> {
        check_levels(&levels)?;
        if m == 0 || n == 0 || z.len() != m * levels.len() * n {
            return Err(QfaError::size("QDFT values do not match m x L x n"));
        }
        Ok(Self { m, n, levels, z })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn get(&self, j: usize, level: usize, v: usize) -> Complex64 {
        self.z[(j * self.levels.len() + level) * self.n + v]
    }

    /// The length-`n` sequence `Z_j(ω_·, α_ℓ)`.
    pub fn sequence(&self, j: usize, level: usize) -> &[Complex64] {
        let s = (j * self.levels.len() + level) * self.n;
        &self.z[s..s + self.n]
    }

    pub fn sequence_mut(&mut self, j: usize, level: usize) -> &mut [Complex64] {
        let s = (j * self.levels.len() + level) * self.n;
        &mut self.z[s..s + self.n]
    }

    pub fn values(&self) -> &[Complex64] {
        &self.z
    }

    /// Largest `|Z(ω_v) − Z*(ω_{n−v})|` over all cells, together with the
    /// largest imaginary part at `ω = 0` and `ω = π`.
    pub fn symmetry_defect(&self) -> f64 {
        let n = self.n;
        let mut worst = 0.0f64;
        for j in 0..self.m {
            for l in 0..self.levels.len() {
                let z = self.sequence(j, l);
                worst = worst.max(z[0].im.abs());
                if n % 2 == 0 {
                    worst = worst.max(z[n / 2].im.abs());
                }
                for v in 1..n {
                    worst = worst.max((z[v] - z[n - v].conj()).norm());
                }
            }
        }
        worst
    }

    /// Overwrite the upper half with conjugates of the lower half and zero the
    /// imaginary parts at `ω = 0` and `ω = π`.
    pub fn enforce_symmetry(&mut self) {
        for j in 0..self.m {
            for l in 0..self.levels.len() {
                fill_symmetric(self.sequence_mut(j, l));
            }
        }
    }
}

fn fill_symmetric(z: &mut [Complex64]) {
    let n = z.len();
    z[0].im = 0.0;
    if n % 2 == 0 {
        z[n / 2].im = 0.0;
    }
    for v in n / 2 + 1..n {
        z[v] = z[n - v].conj();
    }
}

fn cell_error(series: usize, freq: usize, level: usize, e: QfaError) -> QfaError {
    QfaError::Cell {
        series,
        freq,
        level,
        source: Box::new(e),
    }
}

/// Per-(series, frequency) task list over the lower half `0..=n/2`.
fn tasks(m: usize, n: usize) -> Vec<(usize, usize)> {
    (0..m).flat_map(|j| (0..=n / 2).map(move |v| (j, v))).collect()
}

fn regression_at(y: &[f64], n: usize, v: usize) -> Result<(RegressionData, f64)> {
    let omega = 2.0 * PI * v as f64 / n as f64;
    if v == 0 {
        Ok((
            RegressionData::from_columns(vec![vec![1.0; n]], y.to_vec())?,
            n as f64,
        ))
    } else if 2 * v == n {
        Ok((RegressionData::trigonometric(y, PI, false)?, n as f64))
    } else {
        Ok((RegressionData::trigonometric(y, omega, true)?, n as f64 / 2.0))
    }
}

fn coefficient_to_z(beta: &[f64], v: usize, scale: f64) -> Complex64 {
    if v == 0 {
        Complex64::new(scale * beta[0], 0.0)
    } else if beta.len() == 2 {
        Complex64::new(scale * beta[1], 0.0)
    } else {
        Complex64::new(scale * beta[1], -scale * beta[2])
    }
}

/// Assemble per-task level columns into the array and complete by symmetry.
fn assemble(
    m: usize,
    n: usize,
    levels: &[f64],
    results: Vec<Result<Vec<Complex64>>>,
) -> Result<QdftArray> {
    let l = levels.len();
    let mut z = vec![Complex64::new(0.0, 0.0); m * l * n];
    for ((j, v), res) in tasks(m, n).into_iter().zip(results) {
        let col = res?;
        for (lv, c) in col.into_iter().enumerate() {
            z[(j * l + lv) * n + v] = c;
        }
    }
    let mut out = QdftArray {
        m,
        n,
        levels: levels.to_vec(),
        z,
    };
    out.enforce_symmetry();
    Ok(out)
}

/// Quantile DFT by per-level trigonometric quantile regression.
pub fn qdft(series: &MultiSeries, levels: &[f64]) -> Result<QdftArray> {
    check_levels(levels)?;
    if levels.is_empty() {
        return Err(QfaError::size("at least one quantile level is required"));
    }
    let (m, n) = (series.m(), series.n());
    let results: Vec<Result<Vec<Complex64>>> = tasks(m, n)
        .into_par_iter()
        .map(|(j, v)| {
            let (data, scale) =
                regression_at(series.series(j), n, v).map_err(|e| cell_error(j, v, 0, e))?;
            levels
                .iter()
                .enumerate()
                .map(|(lv, &alpha)| {
                    solve_qr(&data, alpha, DEFAULT_TOL, DEFAULT_MAX_ITER)
                        .map(|s| coefficient_to_z(&s.beta, v, scale))
                        .map_err(|e| cell_error(j, v, lv, e))
                })
                .collect()
        })
        .collect();
    assemble(m, n, levels, results)
}

/// Spline QDFT: one SQR solve over all levels per (series, frequency) with
/// the default knot rule. The `ω = 0` column holds the per-level sample
/// quantiles, as in [`qdft`].
pub fn sqdft(series: &MultiSeries, levels: &[f64], mu: f64, weighted: bool) -> Result<QdftArray> {
    let basis = build_spline_basis(levels, default_knot_count(levels.len()))?;
    sqdft_with_basis(series, &basis, mu, weighted)
}

pub fn sqdft_with_basis(
    series: &MultiSeries,
    basis: &SplineBasis,
    mu: f64,
    weighted: bool,
) -> Result<QdftArray> {
    let levels = basis.levels();
    let (m, n) = (series.m(), series.n());
    let results: Vec<Result<Vec<Complex64>>> = tasks(m, n)
        .into_par_iter()
        .map(|(j, v)| {
            let (data, scale) =
                regression_at(series.series(j), n, v).map_err(|e| cell_error(j, v, 0, e))?;
            if v == 0 {
                return levels
                    .iter()
                    .enumerate()
                    .map(|(lv, &alpha)| {
                        solve_qr(&data, alpha, DEFAULT_TOL, DEFAULT_MAX_ITER)
                            .map(|s| coefficient_to_z(&s.beta, v, scale))
                            .map_err(|e| cell_error(j, v, lv, e))
                    })
                    .collect();
            }
            let plan = penalty_plan(levels, n, data.p(), basis, mu, weighted)
                .map_err(|e| cell_error(j, v, 0, e))?;
            let prob = assemble_sqr(&data, basis, &plan).map_err(|e| cell_error(j, v, 0, e))?;
            let sol = solve_sqr(&prob, DEFAULT_TOL, SQR_MAX_ITER)
                .map_err(|e| cell_error(j, v, 0, e))?;
            Ok((0..levels.len())
                .map(|lv| {
                    let beta = &sol.beta_at_levels[lv * sol.p..(lv + 1) * sol.p];
                    coefficient_to_z(beta, v, scale)
                })
                .collect())
        })
        .collect();
    assemble(m, n, levels, results)
}

/// Iteration cap for the joint SQR solves, which take more steps than
/// single-level fits.
pub const SQR_MAX_ITER: usize = 100;
