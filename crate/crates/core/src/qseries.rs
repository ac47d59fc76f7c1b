//! Quantile series, quantile auto/cross-covariances and quantile
//! periodograms derived from a [`QdftArray`].

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::bspline::check_levels;
use crate::error::{QfaError, Result};
use crate::qdft::QdftArray;

/// Relative tolerance for the conjugate-symmetry check in [`qser`].
pub const SYMMETRY_TOL: f64 = 1e-9;

/// `x_j(t, α_ℓ)` for `t = 1..n` together with `x̄_j(α_ℓ) = Z_j(0, α_ℓ)/n`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileSeriesArray {
    m: usize,
    n: usize,
    levels: Vec<f64>,
    /// Index `(j·L + ℓ)·n + (t − 1)`.
    x: Vec<f64>,
    /// Index `j·L + ℓ`.
    xbar: Vec<f64>,
}

impl QuantileSeriesArray {
    pub fn from_parts(
        m: usize,
        n: usize,
        levels: Vec<f64>,
        x: Vec<f64>,
        xbar: Vec<f64>,
    ) -> Result<Self> {
        check_levels(&levels)?;
        let l = levels.len();
        if m == 0 || n == 0 || x.len() != m * l * n || xbar.len() != m * l {
            return Err(QfaError::size("quantile series do not match m x L x n"));
        }
        Ok(Self {
            m,
            n,
            levels,
            x,
            xbar,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn series(&self, j: usize, level: usize) -> &[f64] {
        let s = (j * self.levels.len() + level) * self.n;
        &self.x[s..s + self.n]
    }

    pub fn xbar(&self, j: usize, level: usize) -> f64 {
        self.xbar[j * self.levels.len() + level]
    }

    pub fn values(&self) -> &[f64] {
        &self.x
    }

    pub fn means(&self) -> &[f64] {
        &self.xbar
    }
}

/// Biased auto/cross-covariances `γ_{jj′}(τ, α_ℓ)`, `τ = 0..n−1`.
///
/// Negative lags follow from `γ_{jj′}(−τ) = γ_{j′j}(τ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QacfArray {
    m: usize,
    n: usize,
    levels: Vec<f64>,
    /// Index `((j·m + j′)·L + ℓ)·n + τ`.
    gamma: Vec<f64>,
}

impl QacfArray {
    pub fn from_parts(m: usize, n: usize, levels: Vec<f64>, gamma: Vec<f64>) -> Result<Self> {
        check_levels(&levels)?;
        if m == 0 || n == 0 || gamma.len() != m * m * levels.len() * n {
            return Err(QfaError::size("QACF values do not match m x m x L x n"));
        }
        Ok(Self {
            m,
            n,
            levels,
            gamma,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    /// `γ_{jj′}(τ, α_ℓ)` for `τ ≥ 0`.
    pub fn lags(&self, j: usize, jp: usize, level: usize) -> &[f64] {
        let s = ((j * self.m + jp) * self.levels.len() + level) * self.n;
        &self.gamma[s..s + self.n]
    }

    /// `γ_{jj′}(τ, α_ℓ)` for any `|τ| < n`.
    pub fn get(&self, j: usize, jp: usize, level: usize, tau: isize) -> f64 {
        if tau >= 0 {
            self.lags(j, jp, level)[tau as usize]
        } else {
            self.lags(jp, j, level)[(-tau) as usize]
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.gamma
    }
}

/// Origin of a spectral matrix field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpecKind {
    Periodogram,
    LwEstimate,
    Truth,
    Smoothed,
}

/// Hermitian `m x m` matrices over a (level, frequency) grid. Frequencies
/// are Fourier indices `v` of a length-`n` grid, `ω_v = 2πv/n`.
#[derive(Debug, Clone, PartialEq)]
pub struct QSpecMatrix {
    m: usize,
    n: usize,
    levels: Vec<f64>,
    freqs: Vec<usize>,
    kind: SpecKind,
    /// Index `((ℓ·V + i)·m + j)·m + j′`.
    s: Vec<Complex64>,
}

impl QSpecMatrix {
    pub fn from_parts(
        m: usize,
        n: usize,
        levels: Vec<f64>,
        freqs: Vec<usize>,
        kind: SpecKind,
        s: Vec<Complex64>,
    ) -> Result<Self> {
        check_levels(&levels)?;
        if m == 0 || s.len() != levels.len() * freqs.len() * m * m {
            return Err(QfaError::size("spectral values do not match L x V x m x m"));
        }
        if freqs.iter().any(|&v| v >= n) {
            return Err(QfaError::domain("frequency index outside the Fourier grid"));
        }
        Ok(Self {
            m,
            n,
            levels,
            freqs,
            kind,
            s,
        })
    }

    pub(crate) fn zeros(
        m: usize,
        n: usize,
        levels: Vec<f64>,
        freqs: Vec<usize>,
        kind: SpecKind,
    ) -> Self {
        let len = levels.len() * freqs.len() * m * m;
        Self {
            m,
            n,
            levels,
            freqs,
            kind,
            s: vec![Complex64::new(0.0, 0.0); len],
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Length of the underlying Fourier grid.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    /// Fourier indices of the stored frequencies.
    pub fn freqs(&self) -> &[usize] {
        &self.freqs
    }

    pub fn omegas(&self) -> Vec<f64> {
        self.freqs
            .iter()
            .map(|&v| 2.0 * std::f64::consts::PI * v as f64 / self.n as f64)
            .collect()
    }

    pub fn kind(&self) -> SpecKind {
        self.kind
    }

    pub fn set_kind(&mut self, kind: SpecKind) {
        self.kind = kind;
    }

    pub fn get(&self, level: usize, fi: usize, j: usize, jp: usize) -> Complex64 {
        self.s[((level * self.freqs.len() + fi) * self.m + j) * self.m + jp]
    }

    /// Row-major `m x m` slice at (level, frequency position).
    pub fn slice(&self, level: usize, fi: usize) -> &[Complex64] {
        let mm = self.m * self.m;
        let s = (level * self.freqs.len() + fi) * mm;
        &self.s[s..s + mm]
    }

    pub fn slice_mut(&mut self, level: usize, fi: usize) -> &mut [Complex64] {
        let mm = self.m * self.m;
        let s = (level * self.freqs.len() + fi) * mm;
        &mut self.s[s..s + mm]
    }

    /// All slices of one level, frequency-major.
    pub fn level_block_mut(&mut self, level: usize) -> &mut [Complex64] {
        let b = self.freqs.len() * self.m * self.m;
        &mut self.s[level * b..(level + 1) * b]
    }

    pub fn values(&self) -> &[Complex64] {
        &self.s
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.s
    }

    /// Same levels, frequencies and dimension.
    pub fn same_grid(&self, other: &QSpecMatrix) -> bool {
        self.m == other.m
            && self.n == other.n
            && self.levels == other.levels
            && self.freqs == other.freqs
    }
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    let mut planner = FftPlanner::new();
    if inverse {
        planner.plan_fft_inverse(n)
    } else {
        planner.plan_fft_forward(n)
    }
}

/// Inverse transform `x_j(t, α) = n⁻¹ Σ_v Z_j(ω_v, α) e^{itω_v}`.
pub fn qser(qdft: &QdftArray) -> Result<QuantileSeriesArray> {
    let scale = qdft.values().iter().fold(0.0f64, |a, z| a.max(z.norm()));
    let defect = qdft.symmetry_defect();
    if defect > SYMMETRY_TOL * (1.0 + scale) {
        return Err(QfaError::domain(format!(
            "QDFT is not conjugate symmetric (defect {defect:.3e})"
        )));
    }
    let (m, n, l) = (qdft.m(), qdft.n(), qdft.num_levels());
    let fft = plan(n, true);
    let cells: Vec<Vec<f64>> = (0..m * l)
        .into_par_iter()
        .map(|c| {
            let mut buf = qdft.sequence(c / l, c % l).to_vec();
            fft.process(&mut buf);
            // buf[k] = Σ_v Z_v e^{2πivk/n}; time t maps to k = t mod n
            (1..=n).map(|t| buf[t % n].re / n as f64).collect()
        })
        .collect();
    let xbar = (0..m * l)
        .map(|c| qdft.sequence(c / l, c % l)[0].re / n as f64)
        .collect();
    Ok(QuantileSeriesArray {
        m,
        n,
        levels: qdft.levels().to_vec(),
        x: cells.concat(),
        xbar,
    })
}

/// `γ_{jj′}(τ, α) = n⁻¹ Σ_{t=τ+1}^{n} (x_j(t) − x̄_j)(x_{j′}(t − τ) − x̄_{j′})`,
/// computed from zero-padded length-`2n` transforms.
pub fn qacf(qs: &QuantileSeriesArray) -> QacfArray {
    let (m, n, l) = (qs.m(), qs.n(), qs.num_levels());
    let fwd = plan(2 * n, false);
    let inv = plan(2 * n, true);
    let per_level: Vec<Vec<Vec<f64>>> = (0..l)
        .into_par_iter()
        .map(|lv| {
            let spectra: Vec<Vec<Complex64>> = (0..m)
                .map(|j| {
                    let xb = qs.xbar(j, lv);
                    let mut buf = vec![Complex64::new(0.0, 0.0); 2 * n];
                    for (b, x) in buf.iter_mut().zip(qs.series(j, lv)) {
                        b.re = x - xb;
                    }
                    fwd.process(&mut buf);
                    buf
                })
                .collect();
            let mut out = Vec::with_capacity(m * m);
            for j in 0..m {
                for jp in 0..m {
                    let mut buf: Vec<Complex64> = spectra[j]
                        .iter()
                        .zip(&spectra[jp])
                        .map(|(a, b)| a * b.conj())
                        .collect();
                    inv.process(&mut buf);
                    let norm = (2 * n * n) as f64;
                    out.push(buf[..n].iter().map(|c| c.re / norm).collect());
                }
            }
            out
        })
        .collect();
    let mut gamma = vec![0.0; m * m * l * n];
    for (lv, pairs) in per_level.into_iter().enumerate() {
        for (pair, g) in pairs.into_iter().enumerate() {
            let s = (pair * l + lv) * n;
            gamma[s..s + n].copy_from_slice(&g);
        }
    }
    QacfArray {
        m,
        n,
        levels: qs.levels().to_vec(),
        gamma,
    }
}

/// Quantile periodogram and cross-periodograms `n⁻¹ Z_j Z_{j′}*` on the full
/// Fourier grid.
pub fn qper(qdft: &QdftArray) -> QSpecMatrix {
    qper_at(qdft, &(0..qdft.n()).collect::<Vec<_>>())
}

/// As [`qper`] on the Fourier indices `freqs`.
pub fn qper_at(qdft: &QdftArray, freqs: &[usize]) -> QSpecMatrix {
    let (m, n, l) = (qdft.m(), qdft.n(), qdft.num_levels());
    let mut out = QSpecMatrix::zeros(
        m,
        n,
        qdft.levels().to_vec(),
        freqs.to_vec(),
        SpecKind::Periodogram,
    );
    for lv in 0..l {
        for (fi, &v) in freqs.iter().enumerate() {
            let s = out.slice_mut(lv, fi);
            for j in 0..m {
                let zj = qdft.get(j, lv, v);
                for jp in 0..m {
                    s[j * m + jp] = if j == jp {
                        Complex64::new(zj.norm_sqr() / n as f64, 0.0)
                    } else {
                        zj * qdft.get(jp, lv, v).conj() / n as f64
                    };
                }
            }
        }
    }
    out
}

/// Half grid `v = 1..⌊(n−1)/2⌋` used for spectral estimates and the KLD.
pub fn half_grid(n: usize) -> Vec<usize> {
    (1..=(n.saturating_sub(1)) / 2).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qdft::{qdft, MultiSeries};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dft_of(y: &[f64]) -> Vec<Complex64> {
        let n = y.len();
        (0..n)
            .map(|v| {
                (1..=n)
                    .map(|t| {
                        let a = -2.0 * std::f64::consts::PI * (v * t) as f64 / n as f64;
                        Complex64::new(a.cos(), a.sin()) * y[t - 1]
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn inverse_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for n in [16, 17] {
            let y: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
            let z = QdftArray::from_parts(1, n, vec![0.5], dft_of(&y)).unwrap();
            let qs = qser(&z).unwrap();
            for t in 0..n {
                assert!((qs.series(0, 0)[t] - y[t]).abs() < 1e-10);
            }
            let mean = y.iter().sum::<f64>() / n as f64;
            assert!((qs.xbar(0, 0) - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_series_has_constant_qser() {
        let s = MultiSeries::new(vec![vec![3.0; 12]]).unwrap();
        let z = qdft(&s, &[0.25, 0.5]).unwrap();
        let qs = qser(&z).unwrap();
        for l in 0..2 {
            assert!(qs.series(0, l).iter().all(|x| (x - 3.0).abs() < 1e-9));
        }
    }

    #[test]
    fn asymmetric_input_is_rejected() {
        let mut z = vec![Complex64::new(1.0, 0.0); 8];
        z[1] = Complex64::new(0.0, 1.0);
        let a = QdftArray::from_parts(1, 8, vec![0.5], z).unwrap();
        assert!(matches!(qser(&a), Err(QfaError::Domain(_))));
    }

    #[test]
    fn lag_zero_is_variance_and_periodogram_is_rank_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let y1: Vec<f64> = (0..40).map(|_| rng.gen::<f64>()).collect();
        let y2: Vec<f64> = (0..40).map(|_| rng.gen::<f64>()).collect();
        let s = MultiSeries::new(vec![y1, y2]).unwrap();
        let z = qdft(&s, &[0.3, 0.6]).unwrap();
        let qs = qser(&z).unwrap();
        let acf = qacf(&qs);
        for j in 0..2 {
            let x = qs.series(j, 0);
            let xb = qs.xbar(j, 0);
            let var = x.iter().map(|v| (v - xb) * (v - xb)).sum::<f64>() / 40.0;
            assert!((acf.lags(j, j, 0)[0] - var).abs() < 1e-12 * (1.0 + var));
        }
        let q = qper(&z);
        for l in 0..2 {
            for fi in 0..40 {
                let s = q.slice(l, fi);
                let det = s[0] * s[3] - s[1] * s[2];
                let scale = (s[0] * s[3]).norm();
                assert!(det.norm() <= 1e-9 * scale.max(1e-300));
                assert!(s[0].re >= 0.0 && s[0].im == 0.0);
                assert_eq!(s[1], s[2].conj());
            }
        }
    }
}
