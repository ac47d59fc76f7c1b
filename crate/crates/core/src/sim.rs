//! The bivariate mixture testbed, ensemble ground truth and Monte Carlo
//! KLD experiments.
//!
//! Series one mixes a low-pass AR(1) `u₁`, a high-pass AR(1) `u₂` and a
//! band-pass AR(2) `u₃` through level-dependent weights; series two is `u₃`
//! delayed by ten steps.
//!
//! Seeding: every Gaussian stream is a ChaCha8 generator seeded with
//! [`stream_seed`]`(master, run, component)`, a SplitMix64 hash chain, so a
//! run's data depend only on the master seed and the run index. Normal
//! variates come from `rand_distr::StandardNormal` (ziggurat).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::bspline::{build_spline_basis, default_knot_count};
use crate::error::{QfaError, Result};
use crate::linalg::hermitian_cholesky;
use crate::qdft::{qdft, sqdft_with_basis, MultiSeries, QdftArray};
use crate::qseries::{half_grid, qacf, qper_at, qser, QSpecMatrix, QacfArray, SpecKind};
use crate::qsmooth::{lwqs, psd_repair, qslw, SmootherConfig, DEFAULT_FLOOR};
use crate::spectral::{kld, lw_estimate, LagWindow};

/// Runs evaluated concurrently before their results are reduced in order.
const CHUNK: usize = 32;

/// Continuous weight function: `at_lo` below `lo`, `at_hi` above `hi`,
/// linear in between.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClampLinear {
    pub lo: f64,
    pub hi: f64,
    pub at_lo: f64,
    pub at_hi: f64,
}

impl ClampLinear {
    pub fn constant(c: f64) -> Self {
        Self {
            lo: -1.0,
            hi: 1.0,
            at_lo: c,
            at_hi: c,
        }
    }

    pub fn slope(&self) -> f64 {
        (self.at_hi - self.at_lo) / (self.hi - self.lo)
    }

    pub fn eval(&self, u: f64) -> f64 {
        if u < self.lo {
            self.at_lo
        } else if u > self.hi {
            self.at_hi
        } else {
            self.at_lo + self.slope() * (u - self.lo)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureFns {
    pub psi1: ClampLinear,
    pub psi2: ClampLinear,
}

impl Default for MixtureFns {
    fn default() -> Self {
        Self {
            psi1: ClampLinear {
                lo: -0.8,
                hi: 0.8,
                at_lo: 0.9,
                at_hi: 0.2,
            },
            psi2: ClampLinear {
                lo: -0.4,
                hi: 0.4,
                at_lo: 0.5,
                at_hi: 1.0,
            },
        }
    }
}

/// Default mixture weight `ψ₁` (`which = 1`) or `ψ₂` (`which = 2`).
pub fn psi(u: f64, which: u8) -> f64 {
    let f = MixtureFns::default();
    match which {
        1 => f.psi1.eval(u),
        2 => f.psi2.eval(u),
        _ => panic!("mixture function index must be 1 or 2"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub n: usize,
    pub a11: f64,
    pub a21: f64,
    pub r: f64,
    pub f0: f64,
    pub seed: u64,
    pub burn_in: usize,
    pub delay: usize,
    pub mixture: MixtureFns,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n: 512,
            a11: 0.8,
            a21: -0.7,
            r: 0.9,
            f0: 0.2,
            seed: 1,
            burn_in: 1000,
            delay: 10,
            mixture: MixtureFns::default(),
        }
    }
}

impl SimConfig {
    pub fn a31(&self) -> f64 {
        2.0 * self.r * (2.0 * std::f64::consts::PI * self.f0).cos()
    }

    pub fn a32(&self) -> f64 {
        -self.r * self.r
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < crate::qdft::MIN_LENGTH {
            return Err(QfaError::size("series length too short"));
        }
        for c in [vec![self.a11], vec![self.a21], vec![self.a31(), self.a32()]] {
            partial_autocorrelations(&c)?;
        }
        Ok(())
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of the Gaussian stream for `component` of run `run`.
pub fn stream_seed(master: u64, run: u64, component: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ run) ^ component)
}

/// Step-down (Levinson) recursion from AR coefficients to partial
/// autocorrelations; fails unless every `|κ_k| < 1`.
fn partial_autocorrelations(coeffs: &[f64]) -> Result<Vec<f64>> {
    let mut a = coeffs.to_vec();
    let mut kappa = vec![0.0; a.len()];
    for k in (0..a.len()).rev() {
        let kk = a[k];
        if !(kk.abs() < 1.0) {
            return Err(QfaError::domain(format!(
                "AR coefficients {coeffs:?} are not stationary"
            )));
        }
        kappa[k] = kk;
        let d = 1.0 - kk * kk;
        let prev: Vec<f64> = (0..k).map(|i| (a[i] + kk * a[k - 1 - i]) / d).collect();
        a.truncate(k);
        a.copy_from_slice(&prev);
    }
    Ok(kappa)
}

/// Zero-mean, unit-variance Gaussian AR sample. The innovation variance
/// `Π(1 − κ_k²)` makes the stationary variance one.
pub fn gen_ar(coeffs: &[f64], n_out: usize, burn_in: usize, seed: u64) -> Result<Vec<f64>> {
    let kappa = partial_autocorrelations(coeffs)?;
    let sd = kappa.iter().map(|k| 1.0 - k * k).product::<f64>().sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = burn_in + n_out;
    let mut x = vec![0.0; total];
    for t in 0..total {
        let e: f64 = StandardNormal.sample(&mut rng);
        let mut v = sd * e;
        for (k, a) in coeffs.iter().enumerate() {
            if t > k {
                v += a * x[t - 1 - k];
            }
        }
        x[t] = v;
    }
    Ok(x.split_off(burn_in))
}

/// The pair `(y₁, y₂)` of run `run`.
pub fn simulate_run(cfg: &SimConfig, run: u64) -> Result<MultiSeries> {
    cfg.validate()?;
    let n = cfg.n;
    let u1 = gen_ar(&[cfg.a11], n, cfg.burn_in, stream_seed(cfg.seed, run, 1))?;
    let u2 = gen_ar(&[cfg.a21], n, cfg.burn_in, stream_seed(cfg.seed, run, 2))?;
    let u3 = gen_ar(
        &[cfg.a31(), cfg.a32()],
        n + cfg.delay,
        cfg.burn_in,
        stream_seed(cfg.seed, run, 3),
    )?;
    let (p1, p2) = (cfg.mixture.psi1, cfg.mixture.psi2);
    let mut y1 = Vec::with_capacity(n);
    for t in 0..n {
        let w1 = p1.eval(u1[t]);
        let u4 = w1 * u1[t] + (1.0 - w1) * u2[t];
        let w2 = p2.eval(u4);
        y1.push(w2 * u4 + (1.0 - w2) * u3[t + cfg.delay]);
    }
    let y2 = u3[..n].to_vec();
    MultiSeries::new(vec![y1, y2])
}

/// Run 0 of `cfg`.
pub fn simulate_pair(cfg: &SimConfig) -> Result<MultiSeries> {
    simulate_run(cfg, 0)
}

/// Evaluate `f` on runs `0..runs`, `CHUNK` at a time in parallel, handing
/// each result to `reduce` in run order.
fn for_runs<T: Send>(
    runs: usize,
    f: impl Fn(u64) -> Result<T> + Sync,
    mut reduce: impl FnMut(usize, T),
) -> Result<()> {
    let mut start = 0;
    while start < runs {
        let end = (start + CHUNK).min(runs);
        let out: Vec<Result<T>> = (start..end).into_par_iter().map(|r| f(r as u64)).collect();
        for (i, r) in out.into_iter().enumerate() {
            reduce(start + i, r?);
        }
        start = end;
    }
    Ok(())
}

/// Ensemble mean of quantile periodograms on the half grid over `runs`
/// independent runs of `cfg`.
pub fn ensemble_truth(cfg: &SimConfig, levels: &[f64], runs: usize) -> Result<QSpecMatrix> {
    if runs < 100 {
        return Err(QfaError::domain("ensemble truth needs at least 100 runs"));
    }
    let freqs = half_grid(cfg.n);
    let mut sum: Option<QSpecMatrix> = None;
    for_runs(
        runs,
        |r| {
            let z = qdft(&simulate_run(cfg, r)?, levels)?;
            Ok(qper_at(&z, &freqs))
        },
        |_, p| match sum.as_mut() {
            None => sum = Some(p),
            Some(s) => s
                .values_mut()
                .iter_mut()
                .zip(p.values())
                .for_each(|(a, b)| *a += b),
        },
    )?;
    let mut truth = sum.expect("runs > 0");
    truth
        .values_mut()
        .iter_mut()
        .for_each(|v| *v /= runs as f64);
    truth.set_kind(SpecKind::Truth);
    let (m, nv) = (truth.m(), truth.freqs().len());
    for lv in 0..truth.num_levels() {
        for fi in 0..nv {
            if hermitian_cholesky(m, truth.slice(lv, fi)).is_none() {
                return Err(QfaError::SingularSlice {
                    freq: truth.freqs()[fi],
                    level: lv,
                });
            }
        }
    }
    Ok(truth)
}

/// Spectral estimators compared by [`monte_carlo_kld`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EstimatorSpec {
    /// The truth itself.
    Oracle,
    Lw { window: LagWindow },
    Lwqs { window: LagWindow, smoother: SmootherConfig },
    Qslw { window: LagWindow, smoother: SmootherConfig },
    Sqrlw { window: LagWindow, mu: f64, weighted: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub struct KldSummary {
    pub mean: f64,
    /// Sample standard deviation over runs.
    pub sd: f64,
    pub values: Vec<f64>,
}

impl KldSummary {
    fn from_values(values: Vec<f64>) -> Self {
        let k = values.len() as f64;
        let mean = values.iter().sum::<f64>() / k;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, sd, values }
    }
}

fn lw_from_qdft(z: &QdftArray, window: &LagWindow) -> Result<QSpecMatrix> {
    let acf: QacfArray = qacf(&qser(z)?);
    lw_estimate(&acf, window)
}

/// KLD of every estimator on runs `0..runs` of `cfg`, sharing the simulated
/// data and QDFTs of each run. Estimates pass through [`psd_repair`] before
/// the divergence is taken.
pub fn monte_carlo_kld(
    cfg: &SimConfig,
    estimators: &[EstimatorSpec],
    truth: &QSpecMatrix,
    runs: usize,
) -> Result<Vec<KldSummary>> {
    if runs == 0 {
        return Err(QfaError::domain("at least one run is required"));
    }
    if truth.freqs() != half_grid(cfg.n).as_slice() || truth.n() != cfg.n {
        return Err(QfaError::domain("truth is not on the half grid of the simulation"));
    }
    let levels = truth.levels().to_vec();
    let needs_qdft = estimators
        .iter()
        .any(|e| !matches!(e, EstimatorSpec::Oracle | EstimatorSpec::Sqrlw { .. }));
    let basis = if estimators.iter().any(|e| matches!(e, EstimatorSpec::Sqrlw { .. })) {
        Some(build_spline_basis(&levels, default_knot_count(levels.len()))?)
    } else {
        None
    };

    let per_run = |r: u64| -> Result<Vec<f64>> {
        let series = simulate_run(cfg, r)?;
        let z = if needs_qdft {
            Some(qdft(&series, &levels)?)
        } else {
            None
        };
        let mut lw_cache: Vec<(f64, QSpecMatrix)> = Vec::new();
        let mut sqr_cache: Vec<((u64, bool), QdftArray)> = Vec::new();
        let mut out = Vec::with_capacity(estimators.len());
        for e in estimators {
            let est = match e {
                EstimatorSpec::Oracle => truth.clone(),
                EstimatorSpec::Lw { window } | EstimatorSpec::Lwqs { window, .. } => {
                    let key = window.m;
                    let lw = match lw_cache.iter().find(|(k, _)| *k == key) {
                        Some((_, s)) => s.clone(),
                        None => {
                            let s = lw_from_qdft(z.as_ref().expect("qdft computed"), window)?;
                            lw_cache.push((key, s.clone()));
                            s
                        }
                    };
                    match e {
                        EstimatorSpec::Lwqs { smoother, .. } => lwqs(&lw, smoother)?,
                        _ => lw,
                    }
                }
                EstimatorSpec::Qslw { window, smoother } => {
                    let zs = qslw(z.as_ref().expect("qdft computed"), smoother)?;
                    lw_from_qdft(&zs, window)?
                }
                EstimatorSpec::Sqrlw {
                    window,
                    mu,
                    weighted,
                } => {
                    let key = (mu.to_bits(), *weighted);
                    let zs = match sqr_cache.iter().find(|(k, _)| *k == key) {
                        Some((_, z)) => z.clone(),
                        None => {
                            let z = sqdft_with_basis(
                                &series,
                                basis.as_ref().expect("basis built"),
                                *mu,
                                *weighted,
                            )?;
                            sqr_cache.push((key, z.clone()));
                            z
                        }
                    };
                    lw_from_qdft(&zs, window)?
                }
            };
            let est = psd_repair(&est, DEFAULT_FLOOR);
            out.push(kld(&est, truth)?.value);
        }
        Ok(out)
    };

    let mut values = vec![Vec::with_capacity(runs); estimators.len()];
    for_runs(runs, per_run, |_, v| {
        for (acc, x) in values.iter_mut().zip(v) {
            acc.push(x);
        }
    })?;
    Ok(values.into_iter().map(KldSummary::from_values).collect())
}
