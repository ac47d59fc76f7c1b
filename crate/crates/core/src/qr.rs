//! Linear quantile regression: check loss, interior-point solver and a
//! brute-force vertex-enumeration oracle for small instances.

use crate::error::{QfaError, Result};
use crate::linalg::{lu_solve, DenseCholesky};
use crate::lp::{dot_product, BoxLp, Design, LpOptions};

/// Default relative duality-gap tolerance.
pub const DEFAULT_TOL: f64 = 1e-7;
/// Default iteration cap.
pub const DEFAULT_MAX_ITER: usize = 50;

/// Quantile level validated to lie in the open interval (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct CheckLossParams {
    alpha: f64,
}

impl CheckLossParams {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha > 0.0 && alpha < 1.0 {
            Ok(Self { alpha })
        } else {
            Err(QfaError::domain(format!(
                "quantile level {alpha} outside (0, 1)"
            )))
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    #[inline]
    pub fn rho(&self, r: f64) -> f64 {
        if r >= 0.0 {
            self.alpha * r
        } else {
            (self.alpha - 1.0) * r
        }
    }
}

/// `Σ ρ_α(r_t)` with `ρ_α(r) = α r I(r ≥ 0) + (α − 1) r I(r < 0)`.
pub fn check_loss(residuals: &[f64], alpha: f64) -> Result<f64> {
    let p = CheckLossParams::new(alpha)?;
    Ok(residuals.iter().map(|&r| p.rho(r)).sum())
}

/// Design matrix (stored column-major) and response of a regression problem.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionData {
    n: usize,
    p: usize,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl RegressionData {
    /// Build from design columns; every column must have the length of `y`.
    pub fn from_columns(columns: Vec<Vec<f64>>, y: Vec<f64>) -> Result<Self> {
        let n = y.len();
        let p = columns.len();
        if p == 0 || n < p {
            return Err(QfaError::size(format!(
                "need n >= p >= 1, got n = {n}, p = {p}"
            )));
        }
        let mut x = Vec::with_capacity(n * p);
        for c in &columns {
            if c.len() != n {
                return Err(QfaError::size("design column length differs from response"));
            }
            x.extend_from_slice(c);
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(QfaError::domain("regression data contains non-finite values"));
        }
        Ok(Self { n, p, x, y })
    }

    /// Build from a row-major `n x p` design.
    pub fn from_rows(rows: &[Vec<f64>], y: Vec<f64>) -> Result<Self> {
        let p = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != p) {
            return Err(QfaError::size("ragged design rows"));
        }
        let cols = (0..p).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
        Self::from_columns(cols, y)
    }

    /// Intercept plus `cos(ωt)` and (unless `omega` is π) `sin(ωt)`, `t = 1..n`.
    pub fn trigonometric(y: &[f64], omega: f64, with_sine: bool) -> Result<Self> {
        let n = y.len();
        let mut cols = vec![vec![1.0; n]];
        cols.push((1..=n).map(|t| (omega * t as f64).cos()).collect());
        if with_sine {
            cols.push((1..=n).map(|t| (omega * t as f64).sin()).collect());
        }
        Self::from_columns(cols, y.to_vec())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Column `j` of the design.
    pub fn column(&self, j: usize) -> &[f64] {
        &self.x[j * self.n..(j + 1) * self.n]
    }

    pub fn x(&self, t: usize, j: usize) -> f64 {
        self.x[j * self.n + t]
    }

    /// `y − Xβ`
    pub fn residuals(&self, beta: &[f64]) -> Vec<f64> {
        let mut r = self.y.clone();
        for (j, b) in beta.iter().enumerate() {
            for (ri, xi) in r.iter_mut().zip(self.column(j)) {
                *ri -= b * xi;
            }
        }
        r
    }

    /// Same design with a different response.
    pub fn with_response(&self, y: Vec<f64>) -> Result<Self> {
        if y.len() != self.n {
            return Err(QfaError::size("response length differs from design"));
        }
        Ok(Self {
            y,
            ..self.clone()
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QrSolution {
    pub beta: Vec<f64>,
    /// `Σ ρ_α(y − Xβ)`
    pub objective: f64,
    pub iterations: usize,
    pub duality_gap: f64,
}

/// Dense design for the interior-point engine; the Gram matrix is `p x p`.
pub(crate) struct DenseDesign<'a> {
    pub data: &'a RegressionData,
}

pub(crate) struct DenseGram {
    m: Vec<f64>,
    chol: Option<DenseCholesky>,
    buf: Vec<f64>,
}

impl Design for DenseDesign<'_> {
    type Gram = DenseGram;

    fn nrows(&self) -> usize {
        self.data.n
    }

    fn ncols(&self) -> usize {
        self.data.p
    }

    fn apply(&self, theta: &[f64], out: &mut [f64]) {
        let d = self.data;
        out.iter_mut().for_each(|v| *v = 0.0);
        for (j, &b) in theta.iter().enumerate() {
            for (o, x) in out.iter_mut().zip(d.column(j)) {
                *o += b * x;
            }
        }
    }

    fn apply_t(&self, v: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = dot_product(v, self.data.column(j));
        }
    }

    fn new_gram(&self) -> DenseGram {
        DenseGram {
            m: vec![0.0; self.data.p * self.data.p],
            chol: None,
            buf: vec![0.0; self.data.n],
        }
    }

    fn factor_gram(&self, w: &[f64], g: &mut DenseGram) -> Result<()> {
        let d = self.data;
        let p = d.p;
        let mut buf = std::mem::take(&mut g.buf);
        for j in 0..p {
            for (b, (wi, xi)) in buf.iter_mut().zip(w.iter().zip(d.column(j))) {
                *b = wi * xi;
            }
            for k in 0..=j {
                let v = dot_product(&buf, d.column(k));
                g.m[j * p + k] = v;
                g.m[k * p + j] = v;
            }
        }
        g.buf = buf;
        g.chol = Some(DenseCholesky::factor(p, &g.m).map_err(|_| {
            QfaError::numeric("design matrix is rank deficient")
        })?);
        Ok(())
    }

    fn normal_system(
        &self,
        w: &[f64],
        v: &[f64],
        u: &[f64],
        g: &mut DenseGram,
        dv: &mut [f64],
        du: &mut [f64],
    ) -> Result<()> {
        match self.data.p {
            1 => self.fused_normal::<1>(w, v, u, g, dv, du),
            2 => self.fused_normal::<2>(w, v, u, g, dv, du),
            3 => self.fused_normal::<3>(w, v, u, g, dv, du),
            _ => {
                self.factor_gram(w, g)?;
                self.apply_t(v, dv);
                self.apply_t(u, du);
                Ok(())
            }
        }
    }

    fn solve_gram(&self, g: &DenseGram, rhs: &mut [f64]) {
        g.chol
            .as_ref()
            .expect("gram factored before solve")
            .solve_in_place(rhs);
    }

    fn row(&self, i: usize, out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.data.x(i, j);
        }
    }
}

impl DenseDesign<'_> {
    fn fused_normal<const P: usize>(
        &self,
        w: &[f64],
        v: &[f64],
        u: &[f64],
        g: &mut DenseGram,
        dv: &mut [f64],
        du: &mut [f64],
    ) -> Result<()> {
        let d = self.data;
        let cols: [&[f64]; P] = std::array::from_fn(|j| d.column(j));
        let (gm, sv, su) = weighted_moments::<P>(&cols, w, v, u);
        for j in 0..P {
            for k in 0..=j {
                g.m[j * P + k] = gm[j][k];
                g.m[k * P + j] = gm[j][k];
            }
        }
        dv[..P].copy_from_slice(&sv);
        du[..P].copy_from_slice(&su);
        g.chol = Some(DenseCholesky::factor(P, &g.m).map_err(|_| {
            QfaError::numeric("design matrix is rank deficient")
        })?);
        Ok(())
    }
}

/// One pass over the rows of a `P`-column design accumulating the lower
/// triangle of `Xᵀ diag(w) X` together with `Xᵀv` and `Xᵀu`.
#[inline]
pub(crate) fn weighted_moments<const P: usize>(
    cols: &[&[f64]; P],
    w: &[f64],
    v: &[f64],
    u: &[f64],
) -> ([[f64; P]; P], [f64; P], [f64; P]) {
    let n = w.len();
    let cols: [&[f64]; P] = std::array::from_fn(|j| &cols[j][..n]);
    let (v, u) = (&v[..n], &u[..n]);
    let mut gm = [[0.0f64; P]; P];
    let mut sv = [0.0f64; P];
    let mut su = [0.0f64; P];
    for i in 0..n {
        let x: [f64; P] = std::array::from_fn(|j| cols[j][i]);
        let wi = w[i];
        for j in 0..P {
            let wx = wi * x[j];
            for k in 0..=j {
                gm[j][k] += wx * x[k];
            }
            sv[j] += v[i] * x[j];
            su[j] += u[i] * x[j];
        }
    }
    (gm, sv, su)
}

/// Solve `min_β Σ ρ_α(y_t − x_tᵀβ)` by the primal-dual interior-point
/// method on the bounded dual `max{yᵀζ : Xᵀζ = (1 − α)Xᵀ1, ζ ∈ [0,1]ⁿ}`,
/// starting from `ζ = (1 − α)·1`.
pub fn solve_qr(data: &RegressionData, alpha: f64, tol: f64, max_iter: usize) -> Result<QrSolution> {
    let params = CheckLossParams::new(alpha)?;
    if !(tol > 0.0) {
        return Err(QfaError::domain("tolerance must be positive"));
    }
    let design = DenseDesign { data };
    let n = data.n;
    let zeta0 = vec![1.0 - alpha; n];
    let mut a = vec![0.0; data.p];
    design.apply_t(&zeta0, &mut a);
    let offset = (1.0 - alpha) * data.y.iter().sum::<f64>();
    let lp = BoxLp {
        design: &design,
        b: &data.y,
        a: &a,
        zeta0: &zeta0,
        offset,
    };
    let sol = lp.solve(&LpOptions {
        tol,
        max_iter,
        round_below: Some(1e-2),
    })?;
    let objective = data
        .residuals(&sol.theta)
        .iter()
        .map(|&r| params.rho(r))
        .sum();
    Ok(QrSolution {
        beta: sol.theta,
        objective,
        iterations: sol.iterations,
        duality_gap: sol.gap,
    })
}

/// Global minimizer by enumerating every exact fit through `p` observations.
/// Limited to `n ≤ 12`, `p ≤ 3`.
pub fn solve_qr_oracle(data: &RegressionData, alpha: f64) -> Result<QrSolution> {
    let params = CheckLossParams::new(alpha)?;
    let (n, p) = (data.n, data.p);
    if n > 12 || p > 3 {
        return Err(QfaError::size(format!(
            "oracle limited to n <= 12 and p <= 3, got n = {n}, p = {p}"
        )));
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut idx: Vec<usize> = (0..p).collect();
    loop {
        let mut a = vec![0.0; p * p];
        for (r, &i) in idx.iter().enumerate() {
            for j in 0..p {
                a[r * p + j] = data.x(i, j);
            }
        }
        let b: Vec<f64> = idx.iter().map(|&i| data.y[i]).collect();
        if let Some(beta) = lu_solve(p, &a, &b, 1e-12) {
            let obj: f64 = data.residuals(&beta).iter().map(|&r| params.rho(r)).sum();
            if best.as_ref().map_or(true, |(o, _)| obj < *o) {
                best = Some((obj, beta));
            }
        }
        // next p-combination in lexicographic order
        let mut k = p;
        loop {
            if k == 0 {
                let (objective, beta) = best.ok_or_else(|| {
                    QfaError::numeric("no nonsingular p-subset; design is rank deficient")
                })?;
                return Ok(QrSolution {
                    beta,
                    objective,
                    iterations: 0,
                    duality_gap: 0.0,
                });
            }
            k -= 1;
            if idx[k] < n - p + k {
                idx[k] += 1;
                for m in k + 1..p {
                    idx[m] = idx[m - 1] + 1;
                }
                break;
            }
        }
    }
}
