//! Smoothing across quantile levels with natural cubic smoothing splines.
//!
//! For a grid `x_1 < … < x_L` the fitted values minimize
//! `Σ(v_ℓ − g(x_ℓ))² + λ∫g″²`, i.e. `ĝ = (I + λK)⁻¹v` with the roughness
//! matrix `K = Q R⁻¹ Qᵀ`. `K` is diagonalized once per grid so every fit
//! and every GCV evaluation costs `O(L²)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{QfaError, Result};
use crate::qdft::QdftArray;
use crate::qseries::{QSpecMatrix, SpecKind};

/// Number of points in the GCV search grid.
pub const GCV_GRID: usize = 61;
/// Default eigenvalue floor of [`psd_repair`] relative to the largest
/// eigenvalue of each slice.
pub const DEFAULT_FLOOR: f64 = 1e-6;
const RHO_LIMIT: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambdaMode {
    Gcv,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RhoMode {
    Estimate,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmootherConfig {
    pub lambda_mode: LambdaMode,
    /// Smoothing parameter for [`LambdaMode::Fixed`].
    pub lambda: f64,
    /// Interpret `lambda` on the normalized scale `λ′ = λ·tr(K)/L`.
    pub normalized: bool,
    pub ar1_whiten: bool,
    pub ar1_rho_mode: RhoMode,
    pub ar1_rho: f64,
}

impl Default for SmootherConfig {
    fn default() -> Self {
        Self {
            lambda_mode: LambdaMode::Gcv,
            lambda: 1.0,
            normalized: true,
            ar1_whiten: false,
            ar1_rho_mode: RhoMode::Estimate,
            ar1_rho: 0.0,
        }
    }
}

impl SmootherConfig {
    pub fn gcv() -> Self {
        Self::default()
    }

    /// Fixed smoothing at normalized level `λ′`.
    pub fn fixed(lambda: f64) -> Self {
        Self {
            lambda_mode: LambdaMode::Fixed,
            lambda,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda_mode == LambdaMode::Fixed && !(self.lambda > 0.0 && self.lambda.is_finite())
        {
            return Err(QfaError::domain("fixed smoothing requires a positive lambda"));
        }
        if self.ar1_whiten
            && self.ar1_rho_mode == RhoMode::Fixed
            && !(self.ar1_rho > -1.0 && self.ar1_rho < 1.0)
        {
            return Err(QfaError::domain("AR(1) coefficient must lie in (-1, 1)"));
        }
        Ok(())
    }
}

/// Outcome of one smoothing call.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothFit {
    pub values: Vec<f64>,
    /// Raw `λ` used.
    pub lambda: f64,
    /// AR(1) coefficient used for whitening, if any.
    pub rho: Option<f64>,
    /// True when GCV picked an endpoint of its search grid.
    pub at_boundary: bool,
}

/// Roughness matrix `K = Q R⁻¹ Qᵀ` of the natural cubic spline on `x`
/// (row-major `L x L`).
pub fn roughness_matrix(x: &[f64]) -> Result<Vec<f64>> {
    let l = x.len();
    if l < 4 {
        return Err(QfaError::size("smoothing needs at least 4 grid points"));
    }
    if x.windows(2).any(|w| !(w[0] < w[1])) || x.iter().any(|v| !v.is_finite()) {
        return Err(QfaError::domain("smoothing grid must be strictly increasing"));
    }
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let inner = l - 2;
    let mut q = DMatrix::<f64>::zeros(l, inner);
    let mut r = DMatrix::<f64>::zeros(inner, inner);
    for j in 0..inner {
        q[(j, j)] = 1.0 / h[j];
        q[(j + 1, j)] = -1.0 / h[j] - 1.0 / h[j + 1];
        q[(j + 2, j)] = 1.0 / h[j + 1];
        r[(j, j)] = (h[j] + h[j + 1]) / 3.0;
        if j + 1 < inner {
            r[(j, j + 1)] = h[j + 1] / 6.0;
            r[(j + 1, j)] = h[j + 1] / 6.0;
        }
    }
    let chol = r
        .cholesky()
        .ok_or_else(|| QfaError::numeric("spline band matrix is not positive definite"))?;
    let rinv_qt = chol.solve(&q.transpose());
    let k = &q * rinv_qt;
    let mut out = vec![0.0; l * l];
    for i in 0..l {
        for j in 0..l {
            // symmetrize rounding
            out[i * l + j] = 0.5 * (k[(i, j)] + k[(j, i)]);
        }
    }
    Ok(out)
}

/// Eigenbasis `M = U diag(λ_i) Uᵀ` of a symmetric penalty.
#[derive(Debug, Clone)]
struct Eigen {
    u: DMatrix<f64>,
    vals: Vec<f64>,
}

impl Eigen {
    fn new(l: usize, m: &[f64]) -> Self {
        let mat = DMatrix::from_row_slice(l, l, m);
        let e = mat.symmetric_eigen();
        // PSD penalty: rounding noise on the null space (lines) is set to 0
        let top = e.eigenvalues.iter().fold(0.0f64, |a, v| a.max(*v));
        let vals = e
            .eigenvalues
            .iter()
            .map(|&v| if v <= 1e-10 * top { 0.0 } else { v })
            .collect();
        Self {
            u: e.eigenvectors,
            vals,
        }
    }

    fn coords(&self, v: &[f64]) -> Vec<f64> {
        (self.u.transpose() * DVector::from_column_slice(v))
            .iter()
            .copied()
            .collect()
    }

    fn from_coords(&self, c: &[f64]) -> Vec<f64> {
        (&self.u * DVector::from_column_slice(c)).iter().copied().collect()
    }

    /// `(residual sum of squares, trace of the hat matrix)` at `λ`.
    fn rss_trace(&self, c: &[f64], lambda: f64) -> (f64, f64) {
        let mut rss = 0.0;
        let mut tr = 0.0;
        for (ci, &e) in c.iter().zip(&self.vals) {
            let shrink = 1.0 / (1.0 + lambda * e);
            let r = ci * (1.0 - shrink);
            rss += r * r;
            tr += shrink;
        }
        (rss, tr)
    }

    fn fit(&self, c: &[f64], lambda: f64) -> Vec<f64> {
        let shrunk: Vec<f64> = c
            .iter()
            .zip(&self.vals)
            .map(|(ci, e)| ci / (1.0 + lambda * e))
            .collect();
        self.from_coords(&shrunk)
    }
}

/// GCV score `L·RSS / (L − tr A)²`.
fn gcv_score(l: usize, rss: f64, tr: f64) -> f64 {
    let d = l as f64 - tr;
    l as f64 * rss / (d * d)
}

/// Cubic smoothing spline on a fixed grid.
#[derive(Debug, Clone)]
pub struct Smoother {
    grid: Vec<f64>,
    k: Vec<f64>,
    eig: Eigen,
    /// `L / tr(K)`, the raw `λ` corresponding to `λ′ = 1`.
    scale: f64,
}

impl Smoother {
    pub fn new(grid: &[f64]) -> Result<Self> {
        let k = roughness_matrix(grid)?;
        let l = grid.len();
        let tr: f64 = (0..l).map(|i| k[i * l + i]).sum();
        let eig = Eigen::new(l, &k);
        Ok(Self {
            grid: grid.to_vec(),
            k,
            eig,
            scale: l as f64 / tr,
        })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// Row-major roughness matrix `K`.
    pub fn roughness(&self) -> &[f64] {
        &self.k
    }

    /// Raw `λ` for the normalized value `λ′`.
    pub fn raw_lambda(&self, normalized: f64) -> f64 {
        normalized * self.scale
    }

    /// The GCV search grid of raw `λ` values, `λ′ = 10^{(k−30)/5}`.
    pub fn gcv_lambdas(&self) -> Vec<f64> {
        (0..GCV_GRID)
            .map(|k| self.scale * 10f64.powf((k as f64 - 30.0) / 5.0))
            .collect()
    }

    /// GCV score at raw `λ` (no whitening).
    pub fn gcv(&self, values: &[f64], lambda: f64) -> f64 {
        let c = self.eig.coords(values);
        let (rss, tr) = self.eig.rss_trace(&c, lambda);
        gcv_score(self.grid.len(), rss, tr)
    }

    pub fn smooth(&self, values: &[f64], cfg: &SmootherConfig) -> Result<SmoothFit> {
        cfg.validate()?;
        let l = self.grid.len();
        if values.len() != l {
            return Err(QfaError::size("values do not match the smoothing grid"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(QfaError::domain("values must be finite"));
        }
        if !cfg.ar1_whiten {
            let (fit, lambda, at_boundary) = self.fit_with(&self.eig, values, cfg);
            return Ok(SmoothFit {
                values: fit,
                lambda,
                rho: None,
                at_boundary,
            });
        }

        let rho = match cfg.ar1_rho_mode {
            RhoMode::Fixed => cfg.ar1_rho,
            RhoMode::Estimate => {
                let pilot_cfg = SmootherConfig {
                    ar1_whiten: false,
                    ..*cfg
                };
                let (pilot, _, _) = self.fit_with(&self.eig, values, &pilot_cfg);
                let e: Vec<f64> = values.iter().zip(&pilot).map(|(a, b)| a - b).collect();
                lag1_autocorrelation(&e).clamp(-RHO_LIMIT, RHO_LIMIT)
            }
        };
        // With h = Pg, the criterion becomes ‖Pv − h‖² + λ hᵀ(P⁻ᵀKP⁻¹)h.
        let pinv = prais_winsten_inverse(l, rho);
        let kmat = DMatrix::from_row_slice(l, l, &self.k);
        let b = pinv.transpose() * kmat * &pinv;
        let bsym: Vec<f64> = (0..l)
            .flat_map(|i| {
                let b = &b;
                (0..l).map(move |j| 0.5 * (b[(i, j)] + b[(j, i)]))
            })
            .collect();
        let eig = Eigen::new(l, &bsym);
        let pv = prais_winsten(values, rho);
        let (h, lambda, at_boundary) = self.fit_with(&eig, &pv, cfg);
        let g = pinv * DVector::from_column_slice(&h);
        Ok(SmoothFit {
            values: g.iter().copied().collect(),
            lambda,
            rho: Some(rho),
            at_boundary,
        })
    }

    fn fit_with(&self, eig: &Eigen, values: &[f64], cfg: &SmootherConfig) -> (Vec<f64>, f64, bool) {
        let c = eig.coords(values);
        match cfg.lambda_mode {
            LambdaMode::Fixed => {
                let lambda = if cfg.normalized {
                    self.raw_lambda(cfg.lambda)
                } else {
                    cfg.lambda
                };
                (eig.fit(&c, lambda), lambda, false)
            }
            LambdaMode::Gcv => {
                let lambdas = self.gcv_lambdas();
                let l = self.grid.len();
                let mut best = (f64::INFINITY, 0usize);
                for (i, &lam) in lambdas.iter().enumerate() {
                    let (rss, tr) = eig.rss_trace(&c, lam);
                    let s = gcv_score(l, rss, tr);
                    if s < best.0 {
                        best = (s, i);
                    }
                }
                let at_boundary = best.1 == 0 || best.1 == lambdas.len() - 1;
                if at_boundary {
                    log::warn!(
                        "GCV selected the boundary of its search grid (lambda = {:.3e}); consider a wider grid",
                        lambdas[best.1]
                    );
                }
                let lambda = lambdas[best.1];
                (eig.fit(&c, lambda), lambda, at_boundary)
            }
        }
    }
}

fn lag1_autocorrelation(e: &[f64]) -> f64 {
    let den: f64 = e.iter().map(|v| v * v).sum();
    if den == 0.0 {
        return 0.0;
    }
    e.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / den
}

/// Prais–Winsten transform: `(√(1−ρ²)v_1, v_2 − ρv_1, …)`.
fn prais_winsten(v: &[f64], rho: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(v.len());
    out.push((1.0 - rho * rho).sqrt() * v[0]);
    for w in v.windows(2) {
        out.push(w[1] - rho * w[0]);
    }
    out
}

/// Dense inverse of the Prais–Winsten matrix (lower triangular).
fn prais_winsten_inverse(l: usize, rho: f64) -> DMatrix<f64> {
    let s = (1.0 - rho * rho).sqrt();
    let mut m = DMatrix::<f64>::zeros(l, l);
    for i in 0..l {
        // g_i = ρ^i h_0 / s + Σ_{k=1..i} ρ^{i−k} h_k
        m[(i, 0)] = rho.powi(i as i32) / s;
        for k in 1..=i {
            m[(i, k)] = rho.powi((i - k) as i32);
        }
    }
    m
}

/// Smooth `values` observed on `grid`.
pub fn smooth_series(grid: &[f64], values: &[f64], cfg: &SmootherConfig) -> Result<Vec<f64>> {
    Ok(Smoother::new(grid)?.smooth(values, cfg)?.values)
}

/// Smooth a lag-window estimate across levels entry by entry (diagonal
/// entries as reals, off-diagonal entries in real and imaginary parts), then
/// restore Hermitian symmetry and apply [`psd_repair`].
pub fn lwqs(est: &QSpecMatrix, cfg: &SmootherConfig) -> Result<QSpecMatrix> {
    cfg.validate()?;
    let (m, l, nv) = (est.m(), est.num_levels(), est.freqs().len());
    let sm = Smoother::new(est.levels())?;
    let per_freq: Vec<Result<Vec<Complex64>>> = (0..nv)
        .into_par_iter()
        .map(|fi| {
            // index ℓ·m² + j·m + j′
            let mut out = vec![Complex64::new(0.0, 0.0); l * m * m];
            for j in 0..m {
                for jp in j..m {
                    let re: Vec<f64> = (0..l).map(|lv| est.get(lv, fi, j, jp).re).collect();
                    let re = sm.smooth(&re, cfg)?.values;
                    let im = if j == jp {
                        vec![0.0; l]
                    } else {
                        let im: Vec<f64> = (0..l).map(|lv| est.get(lv, fi, j, jp).im).collect();
                        sm.smooth(&im, cfg)?.values
                    };
                    for lv in 0..l {
                        let c = Complex64::new(re[lv], im[lv]);
                        out[lv * m * m + j * m + jp] = c;
                        out[lv * m * m + jp * m + j] = c.conj();
                    }
                }
            }
            Ok(out)
        })
        .collect();
    let mut res = est.clone();
    res.set_kind(SpecKind::Smoothed);
    for (fi, block) in per_freq.into_iter().enumerate() {
        let block = block?;
        for lv in 0..l {
            res.slice_mut(lv, fi)
                .copy_from_slice(&block[lv * m * m..(lv + 1) * m * m]);
        }
    }
    Ok(psd_repair(&res, DEFAULT_FLOOR))
}

/// Smooth the real and imaginary parts of each QDFT sequence across levels
/// for `v = 0..⌊n/2⌋`, then re-impose conjugate symmetry.
pub fn qslw(qdft: &QdftArray, cfg: &SmootherConfig) -> Result<QdftArray> {
    cfg.validate()?;
    let (m, n, l) = (qdft.m(), qdft.n(), qdft.num_levels());
    let sm = Smoother::new(qdft.levels())?;
    let tasks: Vec<(usize, usize)> = (0..m).flat_map(|j| (0..=n / 2).map(move |v| (j, v))).collect();
    let cols: Vec<Result<Vec<Complex64>>> = tasks
        .par_iter()
        .map(|&(j, v)| {
            let real_only = v == 0 || 2 * v == n;
            let re: Vec<f64> = (0..l).map(|lv| qdft.get(j, lv, v).re).collect();
            let re = sm.smooth(&re, cfg)?.values;
            let im = if real_only {
                vec![0.0; l]
            } else {
                let im: Vec<f64> = (0..l).map(|lv| qdft.get(j, lv, v).im).collect();
                sm.smooth(&im, cfg)?.values
            };
            Ok(re.into_iter().zip(im).map(|(a, b)| Complex64::new(a, b)).collect())
        })
        .collect();
    let mut out = qdft.clone();
    for (&(j, v), col) in tasks.iter().zip(cols) {
        for (lv, c) in col?.into_iter().enumerate() {
            out.sequence_mut(j, lv)[v] = c;
        }
    }
    out.enforce_symmetry();
    Ok(out)
}

/// Clip the eigenvalues of every Hermitian slice below
/// `floor_ratio × (largest eigenvalue)`. Slices already above the floor are
/// returned unchanged.
pub fn psd_repair(est: &QSpecMatrix, floor_ratio: f64) -> QSpecMatrix {
    let m = est.m();
    let mut out = est.clone();
    let nslices = est.num_levels() * est.freqs().len();
    let nv = est.freqs().len();
    let repaired: Vec<Option<Vec<Complex64>>> = (0..nslices)
        .into_par_iter()
        .map(|s| repair_slice(m, est.slice(s / nv, s % nv), floor_ratio))
        .collect();
    for (s, r) in repaired.into_iter().enumerate() {
        if let Some(r) = r {
            out.slice_mut(s / nv, s % nv).copy_from_slice(&r);
        }
    }
    out
}

fn repair_slice(m: usize, a: &[Complex64], floor_ratio: f64) -> Option<Vec<Complex64>> {
    let mat = DMatrix::from_fn(m, m, |i, j| {
        // Hermitian part
        (a[i * m + j] + a[j * m + i].conj()) * 0.5
    });
    let e = mat.symmetric_eigen();
    let top = e.eigenvalues.iter().fold(f64::NEG_INFINITY, |x, v| x.max(*v));
    let scale = if top > 0.0 {
        top
    } else {
        e.eigenvalues.iter().fold(0.0f64, |x, v| x.max(v.abs()))
    };
    if scale == 0.0 {
        return None;
    }
    let floor = floor_ratio * scale;
    if e.eigenvalues.iter().all(|v| *v >= floor) {
        return None;
    }
    let vals: Vec<f64> = e.eigenvalues.iter().map(|v| v.max(floor)).collect();
    let u = &e.eigenvectors;
    let mut out = vec![Complex64::new(0.0, 0.0); m * m];
    for i in 0..m {
        for j in 0..m {
            let mut s = Complex64::new(0.0, 0.0);
            for (k, &lam) in vals.iter().enumerate() {
                s += u[(i, k)] * u[(j, k)].conj() * lam;
            }
            out[i * m + j] = s;
        }
        out[i * m + i].im = 0.0;
    }
    for i in 0..m {
        for j in 0..i {
            out[j * m + i] = out[i * m + j].conj();
        }
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::lu_solve;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(l: usize) -> Vec<f64> {
        (0..l).map(|i| 0.1 + 0.8 * i as f64 / (l - 1) as f64).collect()
    }

    #[test]
    fn linear_values_are_fixed_points() {
        let g = grid(21);
        let v: Vec<f64> = g.iter().map(|a| 1.0 - 2.0 * a).collect();
        for lam in [1e-6, 1.0, 1e6] {
            let out = smooth_series(&g, &v, &SmootherConfig::fixed(lam)).unwrap();
            for (a, b) in out.iter().zip(&v) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn huge_penalty_gives_least_squares_line() {
        let g = grid(15);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v: Vec<f64> = (0..15).map(|_| rng.gen::<f64>()).collect();
        let cfg = SmootherConfig {
            normalized: false,
            ..SmootherConfig::fixed(1e12)
        };
        let out = smooth_series(&g, &v, &cfg).unwrap();
        let n = 15.0;
        let (sx, sy) = (g.iter().sum::<f64>(), v.iter().sum::<f64>());
        let sxx: f64 = g.iter().map(|x| x * x).sum();
        let sxy: f64 = g.iter().zip(&v).map(|(x, y)| x * y).sum();
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        let icpt = (sy - slope * sx) / n;
        for (x, o) in g.iter().zip(&out) {
            assert!((o - (icpt + slope * x)).abs() < 1e-6);
        }
    }

    #[test]
    fn gcv_matches_dense_hat_matrix() {
        let g: Vec<f64> = (0..20).map(|i| (i as f64 + 0.3 * (i as f64).sin()) / 20.0).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v: Vec<f64> = g.iter().map(|x| (6.0 * x).sin() + 0.3 * rng.gen::<f64>()).collect();
        let sm = Smoother::new(&g).unwrap();
        let k = sm.roughness();
        let l = g.len();
        for lam in [1e-5, 1e-3, 0.1] {
            // hat matrix A = (I + λK)⁻¹ column by column
            let mut a = vec![0.0; l * l];
            for i in 0..l {
                a[i * l + i] = 1.0;
            }
            let mut sys = a.clone();
            for i in 0..l * l {
                sys[i] += lam * k[i];
            }
            let mut hat = vec![0.0; l * l];
            for c in 0..l {
                let e: Vec<f64> = (0..l).map(|r| if r == c { 1.0 } else { 0.0 }).collect();
                let col = lu_solve(l, &sys, &e, 1e-14).unwrap();
                for r in 0..l {
                    hat[r * l + c] = col[r];
                }
            }
            let tr: f64 = (0..l).map(|i| hat[i * l + i]).sum();
            let fit: Vec<f64> = (0..l)
                .map(|r| (0..l).map(|c| hat[r * l + c] * v[c]).sum())
                .collect();
            let rss: f64 = fit.iter().zip(&v).map(|(f, y)| (y - f) * (y - f)).sum();
            let oracle = l as f64 * rss / ((l as f64 - tr) * (l as f64 - tr));
            let got = sm.gcv(&v, lam);
            assert!((got - oracle).abs() <= 1e-8 * oracle, "{got} vs {oracle}");
        }
    }

    #[test]
    fn roughness_annihilates_lines() {
        let g = grid(12);
        let k = roughness_matrix(&g).unwrap();
        let line: Vec<f64> = g.iter().map(|x| 3.0 * x - 1.0).collect();
        let q: f64 = (0..12)
            .map(|i| (0..12).map(|j| line[i] * k[i * 12 + j] * line[j]).sum::<f64>())
            .sum();
        assert!(q.abs() < 1e-8);
    }

    #[test]
    fn psd_repair_contract() {
        let c = |re, im| Complex64::new(re, im);
        let pd = vec![c(2.0, 0.0), c(0.5, 0.3), c(0.5, -0.3), c(1.0, 0.0)];
        let z = vec![c(1.0, 2.0), c(0.5, -1.0)];
        let rank1: Vec<Complex64> = (0..2)
            .flat_map(|i| (0..2).map(move |j| (i, j)))
            .map(|(i, j)| z[i] * z[j].conj())
            .collect();
        let s = QSpecMatrix::from_parts(
            2,
            8,
            vec![0.5],
            vec![1, 2],
            SpecKind::Periodogram,
            [pd.clone(), rank1].concat(),
        )
        .unwrap();
        let r = psd_repair(&s, 1e-6);
        assert_eq!(r.slice(0, 0), &pd[..]);
        let sl = r.slice(0, 1);
        let mat = DMatrix::from_fn(2, 2, |i, j| sl[i * 2 + j]);
        let ev = mat.symmetric_eigen().eigenvalues;
        let (lo, hi) = (ev.min(), ev.max());
        assert!(lo > 0.0 && hi / lo <= 1e6 * (1.0 + 1e-9));
        assert_eq!(sl[1], sl[2].conj());
    }

    #[test]
    fn qslw_keeps_constants_and_symmetry() {
        let n = 10;
        let levels = vec![0.2, 0.4, 0.6, 0.8];
        let mut z = Vec::new();
        for _ in 0..4 {
            for v in 0..n {
                let w = if v == 0 { 0.0 } else { v as f64 };
                z.push(Complex64::new(1.0 + (w * 0.3).cos(), (w * 0.7).sin()));
            }
        }
        let mut q = QdftArray::from_parts(1, n, levels, z).unwrap();
        q.enforce_symmetry();
        let out = qslw(&q, &SmootherConfig::gcv()).unwrap();
        assert_eq!(out.symmetry_defect(), 0.0);
        for (a, b) in out.values().iter().zip(q.values()) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn whitening_with_zero_rho_is_plain_smoothing() {
        let g = grid(30);
        let v: Vec<f64> = g.iter().map(|x| (8.0 * x).sin()).collect();
        let plain = smooth_series(&g, &v, &SmootherConfig::fixed(0.01)).unwrap();
        let cfg = SmootherConfig {
            ar1_whiten: true,
            ar1_rho_mode: RhoMode::Fixed,
            ar1_rho: 0.0,
            ..SmootherConfig::fixed(0.01)
        };
        let white = smooth_series(&g, &v, &cfg).unwrap();
        for (a, b) in plain.iter().zip(&white) {
            assert!((a - b).abs() < 1e-10);
        }
        let est = Smoother::new(&g)
            .unwrap()
            .smooth(
                &v,
                &SmootherConfig {
                    ar1_whiten: true,
                    ..SmootherConfig::gcv()
                },
            )
            .unwrap();
        assert!(est.rho.unwrap().abs() <= RHO_LIMIT);
    }

    #[test]
    fn tiny_lambda_interpolates_and_refit_changes_little() {
        let g = grid(40);
        let v: Vec<f64> = g.iter().map(|x| (5.0 * x).sin() + 0.05 * (40.0 * x).cos()).collect();
        let out = smooth_series(&g, &v, &SmootherConfig::fixed(1e-9)).unwrap();
        for (a, b) in out.iter().zip(&v) {
            assert!((a - b).abs() < 1e-6);
        }
        let cfg = SmootherConfig::fixed(0.05);
        let once = smooth_series(&g, &v, &cfg).unwrap();
        let twice = smooth_series(&g, &once, &cfg).unwrap();
        let norm = |x: &[f64]| x.iter().map(|a| a * a).sum::<f64>().sqrt();
        let diff: Vec<f64> = once.iter().zip(&twice).map(|(a, b)| a - b).collect();
        assert!(norm(&diff) <= 5e-2 * norm(&once));
    }
}
