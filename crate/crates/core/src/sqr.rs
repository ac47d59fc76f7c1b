//! Spline quantile regression: joint quantile regression over a grid of
//! levels with coefficient functions `β(α) = Φ(α)θ` in a cubic B-spline
//! span and an L1 penalty on their second derivatives.
//!
//! Coefficients are exposed in the stacked order `θ = (θ_1ᵀ, …, θ_pᵀ)ᵀ`
//! with one length-`K` block per regressor. Internally the solver
//! interleaves them (`k·p + j`) so that the Newton matrix is banded with
//! half-bandwidth `4p − 1`.

use crate::bspline::SplineBasis;
use crate::error::{QfaError, Result};
use crate::linalg::BandMatrix;
use crate::lp::{BoxLp, Design, LpOptions};
use crate::qr::{check_loss, weighted_moments, RegressionData};

/// Per-level penalty constants.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyPlan {
    pub mu: f64,
    /// `exp(μ − 8)`
    pub c0: f64,
    pub weighted: bool,
    /// `w_ℓ`, all ones when unweighted.
    pub weights: Vec<f64>,
    /// `c_ℓ`
    pub c: Vec<f64>,
}

/// Level weight `0.25 / (α(1 − α))`, equal to 1 at the median.
pub fn level_weight(alpha: f64) -> f64 {
    0.25 / (alpha * (1.0 - alpha))
}

/// `c_ℓ = c0 · nL·w_ℓ / Σ_ℓ' ‖w_ℓ' Φ̈(α_ℓ')‖₁` where `Φ̈(α) = I_p ⊗ φ̈(α)ᵀ`.
pub fn penalty_plan(
    levels: &[f64],
    n: usize,
    p: usize,
    basis: &SplineBasis,
    mu: f64,
    weighted: bool,
) -> Result<PenaltyPlan> {
    if levels != basis.levels() {
        return Err(QfaError::domain("levels differ from the basis levels"));
    }
    if n == 0 || p == 0 {
        return Err(QfaError::size("n and p must be positive"));
    }
    if !mu.is_finite() {
        return Err(QfaError::domain("mu must be finite"));
    }
    let l = levels.len();
    let c0 = (mu - 8.0).exp();
    let weights: Vec<f64> = if weighted {
        levels.iter().map(|&a| level_weight(a)).collect()
    } else {
        vec![1.0; l]
    };
    let denom: f64 = (0..l)
        .map(|i| weights[i] * p as f64 * basis.phi_dd_row(i).iter().map(|v| v.abs()).sum::<f64>())
        .sum();
    let c = if denom > 0.0 {
        weights
            .iter()
            .map(|w| c0 * (n * l) as f64 * w / denom)
            .collect()
    } else {
        vec![0.0; l]
    };
    Ok(PenaltyPlan {
        mu,
        c0,
        weighted,
        weights,
        c,
    })
}

/// Assembled dual LP `max{bᵀζ : Dᵀζ = a, 0 ≤ ζ ≤ 1}`.
///
/// `D` has `nL` data rows (level-major) followed by `pL` penalty rows and is
/// applied implicitly; [`SqrProblem::d_row`] and [`SqrProblem::dense_d`]
/// materialize it for inspection.
#[derive(Debug, Clone)]
pub struct SqrProblem {
    data: RegressionData,
    basis: SplineBasis,
    plan: PenaltyPlan,
    /// `a` in internal ordering.
    a_int: Vec<f64>,
    b: Vec<f64>,
    zeta0: Vec<f64>,
    offset: f64,
}

#[derive(Debug, Clone)]
pub struct SqrSolution {
    /// Stacked `(θ_1, …, θ_p)`, each block of length `K`.
    pub theta: Vec<f64>,
    /// Row-major `L x p` matrix of `β̂(α_ℓ) = Φ(α_ℓ)θ̂`.
    pub beta_at_levels: Vec<f64>,
    pub p: usize,
    /// Penalized check loss at `θ̂`.
    pub objective: f64,
    pub duality_gap: f64,
    pub iterations: usize,
}

impl SqrSolution {
    pub fn beta(&self, level: usize, j: usize) -> f64 {
        self.beta_at_levels[level * self.p + j]
    }
}

pub fn assemble_sqr(
    data: &RegressionData,
    basis: &SplineBasis,
    plan: &PenaltyPlan,
) -> Result<SqrProblem> {
    let l = basis.num_levels();
    if plan.c.len() != l || plan.weights.len() != l {
        return Err(QfaError::domain("penalty plan does not match the basis"));
    }
    if plan.c.iter().any(|c| !(*c >= 0.0) || !c.is_finite()) {
        return Err(QfaError::domain("penalty constants must be finite and nonnegative"));
    }
    let (n, p, k) = (data.n(), data.p(), basis.dim());
    let y = data.y();
    let colsum: Vec<f64> = (0..p).map(|j| data.column(j).iter().sum()).collect();

    let mut a_int = vec![0.0; p * k];
    for lv in 0..l {
        let alpha = basis.levels()[lv];
        let (f, phi, dd) = basis.local(lv);
        for q in 0..4 {
            for j in 0..p {
                a_int[(f + q) * p + j] +=
                    (1.0 - alpha) * phi[q] * colsum[j] + plan.c[lv] * dd[q];
            }
        }
    }
    let mut b = Vec::with_capacity(n * l + p * l);
    let mut zeta0 = Vec::with_capacity(n * l + p * l);
    for &alpha in basis.levels() {
        b.extend_from_slice(y);
        zeta0.extend(std::iter::repeat(1.0 - alpha).take(n));
    }
    b.extend(std::iter::repeat(0.0).take(p * l));
    zeta0.extend(std::iter::repeat(0.5).take(p * l));
    let ysum: f64 = y.iter().sum();
    let offset = basis.levels().iter().map(|a| (1.0 - a) * ysum).sum();
    Ok(SqrProblem {
        data: data.clone(),
        basis: basis.clone(),
        plan: plan.clone(),
        a_int,
        b,
        zeta0,
        offset,
    })
}

impl SqrProblem {
    /// `(n, p, K, L)`
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        (
            self.data.n(),
            self.data.p(),
            self.basis.dim(),
            self.basis.num_levels(),
        )
    }

    pub fn nrows(&self) -> usize {
        self.b.len()
    }

    pub fn ncols(&self) -> usize {
        self.a_int.len()
    }

    pub fn basis(&self) -> &SplineBasis {
        &self.basis
    }

    pub fn penalty(&self) -> &PenaltyPlan {
        &self.plan
    }

    pub fn data(&self) -> &RegressionData {
        &self.data
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    /// `a` in stacked coefficient order.
    pub fn a(&self) -> Vec<f64> {
        self.to_stacked(&self.a_int)
    }

    /// Row `i` of `D` in stacked coefficient order.
    pub fn d_row(&self, i: usize) -> Vec<f64> {
        let mut row = vec![0.0; self.ncols()];
        SqrDesign { prob: self }.row(i, &mut row);
        self.to_stacked(&row)
    }

    /// Row-major dense copy of `D`.
    pub fn dense_d(&self) -> Vec<f64> {
        (0..self.nrows()).flat_map(|i| self.d_row(i)).collect()
    }

    fn to_stacked(&self, internal: &[f64]) -> Vec<f64> {
        let (_, p, k, _) = self.dims();
        let mut out = vec![0.0; p * k];
        for kk in 0..k {
            for j in 0..p {
                out[j * k + kk] = internal[kk * p + j];
            }
        }
        out
    }
}

struct SqrDesign<'a> {
    prob: &'a SqrProblem,
}

impl Design for SqrDesign<'_> {
    type Gram = BandMatrix;

    fn nrows(&self) -> usize {
        self.prob.nrows()
    }

    fn ncols(&self) -> usize {
        self.prob.ncols()
    }

    fn apply(&self, theta: &[f64], out: &mut [f64]) {
        let pr = self.prob;
        let (n, p, _, l) = pr.dims();
        let mut beta = vec![0.0; p];
        for lv in 0..l {
            let (f, phi, dd) = pr.basis.local(lv);
            for (j, bj) in beta.iter_mut().enumerate() {
                *bj = (0..4).map(|q| phi[q] * theta[(f + q) * p + j]).sum();
            }
            let block = &mut out[lv * n..(lv + 1) * n];
            block.iter_mut().for_each(|v| *v = 0.0);
            for (j, &bj) in beta.iter().enumerate() {
                for (o, x) in block.iter_mut().zip(pr.data.column(j)) {
                    *o += bj * x;
                }
            }
            let c2 = 2.0 * pr.plan.c[lv];
            for j in 0..p {
                let s: f64 = (0..4).map(|q| dd[q] * theta[(f + q) * p + j]).sum();
                out[n * l + lv * p + j] = c2 * s;
            }
        }
    }

    fn apply_t(&self, v: &[f64], out: &mut [f64]) {
        let pr = self.prob;
        let (n, p, _, l) = pr.dims();
        out.iter_mut().for_each(|o| *o = 0.0);
        for lv in 0..l {
            let (f, phi, dd) = pr.basis.local(lv);
            let block = &v[lv * n..(lv + 1) * n];
            let c2 = 2.0 * pr.plan.c[lv];
            for j in 0..p {
                let g: f64 = block.iter().zip(pr.data.column(j)).map(|(a, b)| a * b).sum();
                let vp = v[n * l + lv * p + j];
                for q in 0..4 {
                    out[(f + q) * p + j] += phi[q] * g + c2 * dd[q] * vp;
                }
            }
        }
    }

    fn new_gram(&self) -> BandMatrix {
        let p = self.prob.data.p();
        BandMatrix::zeros(self.ncols(), 4 * p - 1)
    }

    fn factor_gram(&self, w: &[f64], gram: &mut BandMatrix) -> Result<()> {
        let zeros = vec![0.0; self.nrows()];
        let mut scratch = vec![0.0; self.ncols()];
        let mut scratch2 = vec![0.0; self.ncols()];
        self.normal_system(w, &zeros, &zeros, gram, &mut scratch, &mut scratch2)
    }

    fn normal_system(
        &self,
        w: &[f64],
        v: &[f64],
        u: &[f64],
        gram: &mut BandMatrix,
        dv: &mut [f64],
        du: &mut [f64],
    ) -> Result<()> {
        let pr = self.prob;
        let (n, p, _, l) = pr.dims();
        gram.clear();
        dv.iter_mut().for_each(|x| *x = 0.0);
        du.iter_mut().for_each(|x| *x = 0.0);
        let mut gm = vec![0.0; p * p];
        let mut sv = vec![0.0; p];
        let mut su = vec![0.0; p];
        for lv in 0..l {
            let r = lv * n..(lv + 1) * n;
            level_moments(
                &pr.data,
                &w[r.clone()],
                &v[r.clone()],
                &u[r],
                &mut gm,
                &mut sv,
                &mut su,
            );
            let (f, phi, dd) = pr.basis.local(lv);
            for qa in 0..4 {
                for ja in 0..p {
                    let ia = (f + qa) * p + ja;
                    dv[ia] += phi[qa] * sv[ja];
                    du[ia] += phi[qa] * su[ja];
                    for qb in 0..=qa {
                        let pa = phi[qa] * phi[qb];
                        for jb in 0..p {
                            let ib = (f + qb) * p + jb;
                            if ib <= ia {
                                gram.add_lower(ia, ib, pa * gm[ja * p + jb]);
                            }
                        }
                    }
                }
            }
            let c2 = 2.0 * pr.plan.c[lv];
            for j in 0..p {
                let row = n * l + lv * p + j;
                let wr = w[row] * c2 * c2;
                for qa in 0..4 {
                    let ia = (f + qa) * p + j;
                    dv[ia] += c2 * dd[qa] * v[row];
                    du[ia] += c2 * dd[qa] * u[row];
                    for qb in 0..=qa {
                        gram.add_lower(ia, (f + qb) * p + j, wr * dd[qa] * dd[qb]);
                    }
                }
            }
        }
        gram.factor()
            .map_err(|_| QfaError::numeric("spline design is rank deficient"))
    }

    fn solve_gram(&self, gram: &BandMatrix, rhs: &mut [f64]) {
        gram.solve_in_place(rhs);
    }

    fn row(&self, i: usize, out: &mut [f64]) {
        let pr = self.prob;
        let (n, p, _, l) = pr.dims();
        out.iter_mut().for_each(|o| *o = 0.0);
        if i < n * l {
            let (lv, t) = (i / n, i % n);
            let (f, phi, _) = pr.basis.local(lv);
            for q in 0..4 {
                for j in 0..p {
                    out[(f + q) * p + j] = phi[q] * pr.data.x(t, j);
                }
            }
        } else {
            let (lv, j) = ((i - n * l) / p, (i - n * l) % p);
            let (f, _, dd) = pr.basis.local(lv);
            for q in 0..4 {
                out[(f + q) * p + j] = 2.0 * pr.plan.c[lv] * dd[q];
            }
        }
    }
}

/// Full symmetric `Xᵀ diag(w) X` (row-major `p x p`), `Xᵀv` and `Xᵀu`.
fn level_moments(
    data: &RegressionData,
    w: &[f64],
    v: &[f64],
    u: &[f64],
    gm: &mut [f64],
    sv: &mut [f64],
    su: &mut [f64],
) {
    let p = data.p();
    fn store<const P: usize>(
        m: ([[f64; P]; P], [f64; P], [f64; P]),
        gm: &mut [f64],
        sv: &mut [f64],
        su: &mut [f64],
    ) {
        for j in 0..P {
            for k in 0..=j {
                gm[j * P + k] = m.0[j][k];
                gm[k * P + j] = m.0[j][k];
            }
        }
        sv.copy_from_slice(&m.1);
        su.copy_from_slice(&m.2);
    }
    match p {
        1 => store::<1>(weighted_moments(&[data.column(0)], w, v, u), gm, sv, su),
        2 => store::<2>(
            weighted_moments(&[data.column(0), data.column(1)], w, v, u),
            gm,
            sv,
            su,
        ),
        3 => store::<3>(
            weighted_moments(&[data.column(0), data.column(1), data.column(2)], w, v, u),
            gm,
            sv,
            su,
        ),
        _ => {
            for j in 0..p {
                let cj = data.column(j);
                sv[j] = v.iter().zip(cj).map(|(a, b)| a * b).sum();
                su[j] = u.iter().zip(cj).map(|(a, b)| a * b).sum();
                for k in 0..=j {
                    let ck = data.column(k);
                    let s: f64 = (0..w.len()).map(|t| w[t] * cj[t] * ck[t]).sum();
                    gm[j * p + k] = s;
                    gm[k * p + j] = s;
                }
            }
        }
    }
}

/// Solve the SQR problem from the initial dual point
/// `ζ = ((1 − α_1)1ₙ, …, (1 − α_L)1ₙ, ½·1_{pL})`.
pub fn solve_sqr(problem: &SqrProblem, tol: f64, max_iter: usize) -> Result<SqrSolution> {
    if !(tol > 0.0) {
        return Err(QfaError::domain("tolerance must be positive"));
    }
    let design = SqrDesign { prob: problem };
    let lp = BoxLp {
        design: &design,
        b: &problem.b,
        a: &problem.a_int,
        zeta0: &problem.zeta0,
        offset: problem.offset,
    };
    let opts = LpOptions {
        tol,
        max_iter,
        round_below: None,
    };
    let sol = lp.solve(&opts).map_err(|e| match e {
        QfaError::NotConverged {
            iterations,
            gap,
            last_iterate,
        } => QfaError::NotConverged {
            iterations,
            gap,
            last_iterate: problem.to_stacked(&last_iterate),
        },
        other => other,
    })?;
    let theta = problem.to_stacked(&sol.theta);
    let (_, p, _, l) = problem.dims();
    let mut beta_at_levels = vec![0.0; l * p];
    for lv in 0..l {
        let (f, phi, _) = problem.basis.local(lv);
        for j in 0..p {
            beta_at_levels[lv * p + j] =
                (0..4).map(|q| phi[q] * sol.theta[(f + q) * p + j]).sum();
        }
    }
    let objective = sqr_objective(&problem.data, &problem.basis, &problem.plan, &theta)?;
    Ok(SqrSolution {
        theta,
        beta_at_levels,
        p,
        objective,
        duality_gap: sol.gap,
        iterations: sol.iterations,
    })
}

/// `Σ_ℓ Σ_t ρ_{α_ℓ}(y_t − x_tᵀΦ(α_ℓ)θ) + Σ_ℓ c_ℓ‖Φ̈(α_ℓ)θ‖₁` for stacked `θ`.
pub fn sqr_objective(
    data: &RegressionData,
    basis: &SplineBasis,
    plan: &PenaltyPlan,
    theta: &[f64],
) -> Result<f64> {
    let (p, k, l) = (data.p(), basis.dim(), basis.num_levels());
    if theta.len() != p * k || plan.c.len() != l {
        return Err(QfaError::size("theta or penalty plan has the wrong length"));
    }
    let mut total = 0.0;
    for lv in 0..l {
        let phi = basis.phi_row(lv);
        let dd = basis.phi_dd_row(lv);
        let beta: Vec<f64> = (0..p)
            .map(|j| phi.iter().zip(&theta[j * k..(j + 1) * k]).map(|(a, b)| a * b).sum())
            .collect();
        total += check_loss(&data.residuals(&beta), basis.levels()[lv])?;
        let rough: f64 = (0..p)
            .map(|j| {
                dd.iter()
                    .zip(&theta[j * k..(j + 1) * k])
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
                    .abs()
            })
            .sum();
        total += plan.c[lv] * rough;
    }
    Ok(total)
}

/// Roughness `Σ_ℓ ‖Φ̈(α_ℓ)θ‖₁` of stacked coefficients.
pub fn roughness(basis: &SplineBasis, p: usize, theta: &[f64]) -> f64 {
    let k = basis.dim();
    (0..basis.num_levels())
        .map(|lv| {
            let dd = basis.phi_dd_row(lv);
            (0..p)
                .map(|j| {
                    dd.iter()
                        .zip(&theta[j * k..(j + 1) * k])
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
                        .abs()
                })
                .sum::<f64>()
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bspline::build_spline_basis;
    use crate::qr::{solve_qr, DEFAULT_MAX_ITER, DEFAULT_TOL};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn levels(l: usize) -> Vec<f64> {
        (0..l).map(|i| 0.1 + 0.8 * i as f64 / (l - 1) as f64).collect()
    }

    fn random_trig(n: usize, seed: u64, v: usize) -> RegressionData {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
        let omega = 2.0 * std::f64::consts::PI * v as f64 / n as f64;
        RegressionData::trigonometric(&y, omega, true).unwrap()
    }

    #[test]
    fn plan_constants() {
        let lv = levels(9);
        let b = build_spline_basis(&lv, usize::MAX).unwrap();
        let plan = penalty_plan(&lv, 16, 3, &b, 8.0, false).unwrap();
        assert_eq!(plan.c0, 1.0);
        assert!(plan.weights.iter().all(|w| *w == 1.0));
        let denom: f64 = (0..9)
            .map(|l| 3.0 * (0..b.dim()).map(|k| b.phi_dd(l, k).abs()).sum::<f64>())
            .sum();
        for c in &plan.c {
            assert!((c - 16.0 * 9.0 / denom).abs() < 1e-12 * c);
        }
        assert_eq!(level_weight(0.5), 1.0);
        assert!((level_weight(0.1) - 0.25 / 0.09).abs() < 1e-15);
        let w = penalty_plan(&lv, 16, 3, &b, 8.0, true).unwrap();
        assert!((w.c[0] / w.c[4] - level_weight(0.1)).abs() < 1e-12);
    }

    #[test]
    fn dimensions_and_penalty_free_reduction() {
        let lv = levels(4);
        let b = build_spline_basis(&lv, usize::MAX).unwrap();
        let y: Vec<f64> = (0..8).map(|t| (t as f64 * 0.7).sin()).collect();
        let data = RegressionData::from_columns(vec![vec![1.0; 8]], y).unwrap();
        let mut plan = penalty_plan(&lv, 8, 1, &b, 0.0, false).unwrap();
        let prob = assemble_sqr(&data, &b, &plan).unwrap();
        assert_eq!((prob.nrows(), prob.ncols()), (8 * 4 + 4, 4));
        assert_eq!(prob.dense_d().len(), 36 * 4);

        plan.c = vec![0.0; 4];
        let prob = assemble_sqr(&data, &b, &plan).unwrap();
        for i in 32..36 {
            assert!(prob.d_row(i).iter().all(|v| *v == 0.0));
        }
        let a = prob.a();
        for k in 0..4 {
            let want: f64 = (0..4).map(|l| (1.0 - lv[l]) * b.phi(l, k) * 8.0).sum();
            assert!((a[k] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn assembly_matches_dense_loops() {
        let lv = levels(7);
        let b = build_spline_basis(&lv, usize::MAX).unwrap();
        let data = random_trig(10, 3, 2);
        let plan = penalty_plan(&lv, 10, 3, &b, 5.0, true).unwrap();
        let prob = assemble_sqr(&data, &b, &plan).unwrap();
        let (n, p, k, l) = prob.dims();
        let d = prob.dense_d();
        let q = p * k;
        // rows of D against the definition
        for lvl in 0..l {
            for t in 0..n {
                let row = &d[(lvl * n + t) * q..(lvl * n + t + 1) * q];
                for j in 0..p {
                    for kk in 0..k {
                        let want = data.x(t, j) * b.phi(lvl, kk);
                        assert!((row[j * k + kk] - want).abs() < 1e-14);
                    }
                }
            }
            for j in 0..p {
                let row = &d[(n * l + lvl * p + j) * q..(n * l + lvl * p + j + 1) * q];
                for kk in 0..k {
                    let want = 2.0 * plan.c[lvl] * b.phi_dd(lvl, kk);
                    assert!((row[j * k + kk] - want).abs() < 1e-12 * (1.0 + want.abs()));
                }
            }
        }
        // a by an independent summation
        let a = prob.a();
        for j in 0..p {
            for kk in 0..k {
                let mut s = 0.0;
                for lvl in 0..l {
                    for t in 0..n {
                        s += (1.0 - lv[lvl]) * b.phi(lvl, kk) * data.x(t, j);
                    }
                    s += plan.c[lvl] * b.phi_dd(lvl, kk);
                }
                assert!((a[j * k + kk] - s).abs() < 1e-12 * (1.0 + s.abs()));
            }
        }
        // implicit products agree with the dense matrix
        let design = SqrDesign { prob: &prob };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let th: Vec<f64> = (0..q).map(|_| rng.gen::<f64>() - 0.5).collect();
        let mut out = vec![0.0; prob.nrows()];
        design.apply(&th, &mut out);
        let th_st = prob.to_stacked(&th);
        for i in 0..prob.nrows() {
            let want: f64 = (0..q).map(|c| d[i * q + c] * th_st[c]).sum();
            assert!((out[i] - want).abs() < 1e-11);
        }
    }

    #[test]
    fn constant_response_is_flat() {
        let lv = levels(9);
        let b = build_spline_basis(&lv, usize::MAX).unwrap();
        let data = RegressionData::trigonometric(&vec![2.5; 32], 0.7, true).unwrap();
        for mu in [-5.0, 4.0] {
            let plan = penalty_plan(&lv, 32, 3, &b, mu, false).unwrap();
            let prob = assemble_sqr(&data, &b, &plan).unwrap();
            let sol = solve_sqr(&prob, 1e-9, 80).unwrap();
            for l in 0..9 {
                assert!((sol.beta(l, 0) - 2.5).abs() < 1e-6);
                assert!(sol.beta(l, 1).abs() < 1e-6 && sol.beta(l, 2).abs() < 1e-6);
            }
            assert!(sol.objective < 1e-5);
        }
    }

    #[test]
    fn tiny_penalty_reproduces_per_level_fits() {
        let lv = levels(11);
        let b = build_spline_basis(&lv, usize::MAX).unwrap();
        let data = random_trig(64, 5, 7);
        let plan = penalty_plan(&lv, 64, 3, &b, -20.0, false).unwrap();
        let prob = assemble_sqr(&data, &b, &plan).unwrap();
        let sol = solve_sqr(&prob, 1e-9, 80).unwrap();
        for (l, &alpha) in lv.iter().enumerate() {
            let qr = solve_qr(&data, alpha, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
            let beta: Vec<f64> = (0..3).map(|j| sol.beta(l, j)).collect();
            let obj = check_loss(&data.residuals(&beta), alpha).unwrap();
            assert!(obj - qr.objective < 1e-3, "level {l}: {obj} vs {}", qr.objective);
        }
    }

    #[test]
    fn duality_and_local_optimality() {
        let lv = levels(9);
        let b = build_spline_basis(&lv, usize::MAX).unwrap();
        let data = random_trig(48, 11, 5);
        let plan = penalty_plan(&lv, 48, 3, &b, 3.0, true).unwrap();
        let prob = assemble_sqr(&data, &b, &plan).unwrap();
        let tol = 1e-8;
        let design = SqrDesign { prob: &prob };
        let lp = BoxLp {
            design: &design,
            b: &prob.b,
            a: &prob.a_int,
            zeta0: &prob.zeta0,
            offset: prob.offset,
        };
        let raw = lp
            .solve(&LpOptions {
                tol,
                max_iter: 80,
                round_below: None,
            })
            .unwrap();
        let mut dz = vec![0.0; prob.ncols()];
        design.apply_t(&raw.zeta, &mut dz);
        let amax = prob.a_int.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (x, a) in dz.iter().zip(&prob.a_int) {
            assert!((x - a).abs() <= 1e-6 * (1.0 + amax));
        }
        assert!(raw.zeta.iter().all(|z| *z >= -1e-8 && *z <= 1.0 + 1e-8));
        assert!((raw.primal - raw.dual).abs() <= 10.0 * tol * (1.0 + raw.dual.abs()));

        let sol = solve_sqr(&prob, tol, 80).unwrap();
        assert!((sol.objective - raw.primal).abs() < 1e-6 * (1.0 + sol.objective));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let scale = sol.theta.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for _ in 0..100 {
            let th: Vec<f64> = sol
                .theta
                .iter()
                .map(|v| v + 1e-2 * scale * (rng.gen::<f64>() - 0.5))
                .collect();
            let o = sqr_objective(&data, &b, &plan, &th).unwrap();
            assert!(sol.objective <= o + 1e-7 * (1.0 + o));
        }
    }

    #[test]
    fn roughness_decreases_with_mu() {
        let lv = levels(21);
        let b = build_spline_basis(&lv, usize::MAX).unwrap();
        let data = random_trig(128, 21, 9);
        let mut last = f64::INFINITY;
        for mu in [0.0, 2.0, 4.0, 6.0, 8.0] {
            let plan = penalty_plan(&lv, 128, 3, &b, mu, false).unwrap();
            let prob = assemble_sqr(&data, &b, &plan).unwrap();
            let sol = solve_sqr(&prob, 1e-9, 80).unwrap();
            let r = roughness(&b, 3, &sol.theta);
            assert!(r <= last * (1.0 + 1e-6) + 1e-9, "mu {mu}: {r} > {last}");
            last = r;
        }
    }

    #[test]
    fn zero_penalty_objective_is_sum_of_check_losses() {
        let lv = levels(5);
        let b = build_spline_basis(&lv, usize::MAX).unwrap();
        let data = random_trig(20, 2, 3);
        let mut plan = penalty_plan(&lv, 20, 3, &b, 0.0, false).unwrap();
        plan.c = vec![0.0; 5];
        let th: Vec<f64> = (0..3 * b.dim()).map(|i| (i as f64 * 0.3).cos()).collect();
        let mut want = 0.0;
        for l in 0..5 {
            let beta: Vec<f64> = (0..3)
                .map(|j| (0..b.dim()).map(|k| b.phi(l, k) * th[j * b.dim() + k]).sum())
                .collect();
            want += check_loss(&data.residuals(&beta), lv[l]).unwrap();
        }
        let got = sqr_objective(&data, &b, &plan, &th).unwrap();
        assert!((got - want).abs() < 1e-12 * want);
    }
}
