//! Primal-dual interior-point solver for box-constrained linear programs of
//! the form
//!
//! ```text
//!   max  bᵀζ   s.t.  Dᵀζ = a,  0 ≤ ζ ≤ 1
//!   min  aᵀθ + 1ᵀ(b − Dθ)₊                       (its dual, θ free)
//! ```
//!
//! Ordinary quantile regression is the special case `D = X`, `b = y`,
//! `a = (1 − α) Xᵀ1`; spline quantile regression stacks one such block per
//! quantile level plus the roughness-penalty rows.
//!
//! The iteration is a Mehrotra predictor-corrector with separate primal and
//! dual step lengths and log-barrier handling of both bounds. Near the
//! optimum the current θ is rounded to the vertex spanned by the `q`
//! smallest residuals; if the implied dual certificate is feasible the
//! vertex is returned with a zero duality gap.

use crate::error::{QfaError, Result};
use crate::linalg::lu_solve;

/// Step-length damping applied to the maximal feasible step.
pub const STEP_DAMPING: f64 = 0.9995;

/// Constraint matrix `D` (N rows, q columns) accessed through products only.
pub trait Design {
    /// Factorization workspace for `Dᵀ diag(w) D`.
    type Gram;

    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    /// `out = D θ`
    fn apply(&self, theta: &[f64], out: &mut [f64]);
    /// `out = Dᵀ v`
    fn apply_t(&self, v: &[f64], out: &mut [f64]);
    fn new_gram(&self) -> Self::Gram;
    /// Assemble and factor `Dᵀ diag(w) D` into `gram`.
    fn factor_gram(&self, w: &[f64], gram: &mut Self::Gram) -> Result<()>;
    /// Solve with the factored Gram matrix in place.
    fn solve_gram(&self, gram: &Self::Gram, rhs: &mut [f64]);
    /// Factor `Dᵀ diag(w) D` into `gram` and set `dv = Dᵀv`, `du = Dᵀu`.
    fn normal_system(
        &self,
        w: &[f64],
        v: &[f64],
        u: &[f64],
        gram: &mut Self::Gram,
        dv: &mut [f64],
        du: &mut [f64],
    ) -> Result<()> {
        self.factor_gram(w, gram)?;
        self.apply_t(v, dv);
        self.apply_t(u, du);
        Ok(())
    }
    /// Dense row `i` of `D`.
    fn row(&self, i: usize, out: &mut [f64]);
}

#[derive(Debug, Clone, Copy)]
pub struct LpOptions {
    /// Convergence threshold on the relative duality gap.
    pub tol: f64,
    pub max_iter: usize,
    /// Relative gap below which vertex rounding is attempted; `None` disables it.
    pub round_below: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub theta: Vec<f64>,
    pub zeta: Vec<f64>,
    /// `aᵀθ + Σ(b − Dθ)₊ − offset`
    pub primal: f64,
    /// `bᵀζ − offset`
    pub dual: f64,
    pub gap: f64,
    pub iterations: usize,
    /// True when the solution was certified at a vertex by rounding.
    pub vertex: bool,
}

/// Problem data. `offset` is the constant separating the LP objectives from
/// the statistical objective (e.g. `(1 − α)·Σy` for plain QR); it only enters
/// the reported objective values and the relative-gap scale.
pub struct BoxLp<'a, D: Design> {
    pub design: &'a D,
    pub b: &'a [f64],
    pub a: &'a [f64],
    pub zeta0: &'a [f64],
    pub offset: f64,
}

#[inline(always)]
fn fmax(a: f64, b: f64) -> f64 {
    if a > b {
        a
    } else {
        b
    }
}

#[inline]
fn dot(x: &[f64], y: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let cx = x.chunks_exact(4);
    let cy = y.chunks_exact(4);
    let (rx, ry) = (cx.remainder(), cy.remainder());
    for (a, b) in cx.zip(cy) {
        acc[0] += a[0] * b[0];
        acc[1] += a[1] * b[1];
        acc[2] += a[2] * b[2];
        acc[3] += a[3] * b[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (a, b) in rx.iter().zip(ry) {
        s += a * b;
    }
    s
}

impl<'a, D: Design> BoxLp<'a, D> {
    pub fn solve(&self, opts: &LpOptions) -> Result<LpSolution> {
        let d = self.design;
        let (n, q) = (d.nrows(), d.ncols());
        if self.b.len() != n || self.a.len() != q || self.zeta0.len() != n {
            return Err(QfaError::size("LP dimensions are inconsistent"));
        }
        if n < q {
            return Err(QfaError::size(format!(
                "need at least as many rows ({n}) as unknowns ({q})"
            )));
        }

        let mut gram = d.new_gram();
        let mut zeta = self.zeta0.to_vec();
        let mut s: Vec<f64> = zeta.iter().map(|v| 1.0 - v).collect();
        if zeta.iter().zip(&s).any(|(z, s)| !(*z > 0.0 && *s > 0.0)) {
            return Err(QfaError::domain(
                "initial dual point must lie strictly inside (0,1)",
            ));
        }

        // Least-squares start for θ.
        let ones = vec![1.0; n];
        let mut theta = vec![0.0; q];
        let mut rp = vec![0.0; q];
        d.normal_system(&ones, self.b, &zeta, &mut gram, &mut theta, &mut rp)?;
        d.solve_gram(&gram, &mut theta);

        let mut fit_c = vec![0.0; n];
        d.apply(&theta, &mut fit_c);
        let mut r: Vec<f64> = self.b.iter().zip(&fit_c).map(|(b, f)| b - f).collect();
        let mean_abs = r.iter().map(|v| v.abs()).sum::<f64>() / n as f64;
        let shift = (0.1 * mean_abs).max(1e-6);
        // w − z = r keeps the dual equality satisfied from the start.
        let mut w: Vec<f64> = r.iter().map(|v| v.max(0.0) + shift).collect();
        let mut z: Vec<f64> = r.iter().map(|v| (-v).max(0.0) + shift).collect();

        let mut inv_zeta = vec![0.0; n];
        let mut inv_s = vec![0.0; n];
        let mut inv_z = vec![0.0; n];
        let mut inv_w = vec![0.0; n];
        let mut tw = vec![0.0; n];
        let mut rd = vec![0.0; n];
        let mut v = vec![0.0; n];
        let mut dzeta = vec![0.0; n];
        let mut rxz = vec![0.0; n];
        let mut rsw = vec![0.0; n];
        let mut dtheta = vec![0.0; q];

        let mut gap = dot(&zeta, &z) + dot(&s, &w);
        let mut dual = dot(self.b, &zeta) - self.offset;
        let mut iter = 0usize;
        loop {
            let scale = 1.0 + dual.abs();
            if gap <= opts.tol * scale {
                let primal = dot(self.a, &theta) + r.iter().map(|v| v.max(0.0)).sum::<f64>()
                    - self.offset;
                return Ok(LpSolution {
                    theta,
                    zeta,
                    primal,
                    dual,
                    gap,
                    iterations: iter,
                    vertex: false,
                });
            }
            if let Some(rb) = opts.round_below {
                if gap <= rb * scale {
                    if let Some(mut sol) = self.try_vertex(&theta) {
                        sol.iterations = iter;
                        return Ok(sol);
                    }
                }
            }
            if iter >= opts.max_iter {
                return Err(QfaError::NotConverged {
                    iterations: iter,
                    gap: gap / scale,
                    last_iterate: theta,
                });
            }
            iter += 1;

            // Scaling, dual residual Dθ − b − z + w, and the predictor
            // right-hand side (which reduces to Θ r).
            {
                let (zeta, s, z, w, r) = (&zeta[..n], &s[..n], &z[..n], &w[..n], &r[..n]);
                let (inv_zeta, inv_s) = (&mut inv_zeta[..n], &mut inv_s[..n]);
                let (inv_z, inv_w) = (&mut inv_z[..n], &mut inv_w[..n]);
                let (tw, rd, v) = (&mut tw[..n], &mut rd[..n], &mut v[..n]);
                for i in 0..n {
                    // A single reciprocal yields 1/ζ, 1/s, 1/z, 1/w and
                    // Θ = ζs / (zs + wζ).
                    let pp = zeta[i] * s[i];
                    let qq = z[i] * s[i] + w[i] * zeta[i];
                    let zw = z[i] * w[i];
                    let inv = 1.0 / (pp * qq * zw);
                    let a = inv * zw * qq;
                    inv_zeta[i] = a * s[i];
                    inv_s[i] = a * zeta[i];
                    let b = inv * pp * qq;
                    inv_z[i] = b * w[i];
                    inv_w[i] = b * z[i];
                    let t = inv * zw * pp * pp;
                    tw[i] = t;
                    rd[i] = -r[i] - z[i] + w[i];
                    v[i] = t * r[i];
                }
            }
            d.normal_system(&tw, &v, &zeta, &mut gram, &mut dtheta, &mut rp)?;
            for (x, (pj, aj)) in dtheta.iter_mut().zip(rp.iter().zip(self.a)) {
                *x -= aj - pj;
            }
            d.solve_gram(&gram, &mut dtheta);
            d.apply(&dtheta, &mut fit_c);
            let fit = &fit_c[..n];

            // Predictor direction and its step bounds.
            let (mut mz, mut ms, mut mzz, mut mww) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
            let (inv_zeta, inv_s, tw, rr) = (&inv_zeta[..n], &inv_s[..n], &tw[..n], &r[..n]);
            let dzeta = &mut dzeta[..n];
            for i in 0..n {
                let dx = tw[i] * (rr[i] - fit[i]);
                dzeta[i] = dx;
                let a = dx * inv_zeta[i];
                let b = dx * inv_s[i];
                mz = fmax(mz, -a);
                ms = fmax(ms, b);
                // dz = −z(1 + a), dw = −w(1 − b)
                mzz = fmax(mzz, 1.0 + a);
                mww = fmax(mww, 1.0 - b);
            }
            let mut tp = (STEP_DAMPING / fmax(mz, ms)).min(1.0);
            let mut td = (STEP_DAMPING / fmax(mzz, mww)).min(1.0);

            let (zeta_s, s_s, z_s, w_s) = (&zeta[..n], &s[..n], &z[..n], &w[..n]);
            let (rxz, rsw) = (&mut rxz[..n], &mut rsw[..n]);
            if tp < 1.0 || td < 1.0 {
                let (zeta, s, z, w) = (zeta_s, s_s, z_s, w_s);
                let (rd, inv_z, inv_w) = (&rd[..n], &inv_z[..n], &inv_w[..n]);
                // Mehrotra corrector with adaptive centering.
                let mut g_aff = 0.0;
                for i in 0..n {
                    let dx = dzeta[i];
                    let dz = -z[i] * (1.0 + dx * inv_zeta[i]);
                    let dw = -w[i] * (1.0 - dx * inv_s[i]);
                    g_aff += (zeta[i] + tp * dx) * (z[i] + td * dz)
                        + (s[i] - tp * dx) * (w[i] + td * dw);
                }
                let ratio = (g_aff / gap).max(0.0);
                let mu = gap * ratio * ratio * ratio / (2.0 * n as f64);
                let vv = &mut v[..n];
                for i in 0..n {
                    let dx = dzeta[i];
                    let dz = -z[i] * (1.0 + dx * inv_zeta[i]);
                    let dw = -w[i] * (1.0 - dx * inv_s[i]);
                    let a = mu - zeta[i] * z[i] - dx * dz;
                    let b = mu - s[i] * w[i] + dx * dw;
                    rxz[i] = a;
                    rsw[i] = b;
                    vv[i] = tw[i] * (a * inv_zeta[i] - b * inv_s[i] - rd[i]);
                }
                d.apply_t(&v, &mut dtheta);
                for (x, (pj, aj)) in dtheta.iter_mut().zip(rp.iter().zip(self.a)) {
                    *x -= aj - pj;
                }
                d.solve_gram(&gram, &mut dtheta);
                let fit = {
                    d.apply(&dtheta, &mut fit_c);
                    &fit_c[..n]
                };
                let (mut mz, mut ms, mut mzz, mut mww) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
                for i in 0..n {
                    let rho = rxz[i] * inv_zeta[i] - rsw[i] * inv_s[i] - rd[i];
                    let dx = tw[i] * (rho - fit[i]);
                    dzeta[i] = dx;
                    let dz = (rxz[i] - z[i] * dx) * inv_zeta[i];
                    let dw = (rsw[i] + w[i] * dx) * inv_s[i];
                    rxz[i] = dz;
                    rsw[i] = dw;
                    mz = fmax(mz, -dx * inv_zeta[i]);
                    ms = fmax(ms, dx * inv_s[i]);
                    mzz = fmax(mzz, -dz * inv_z[i]);
                    mww = fmax(mww, -dw * inv_w[i]);
                }
                tp = (STEP_DAMPING / fmax(mz, ms)).min(1.0);
                td = (STEP_DAMPING / fmax(mzz, mww)).min(1.0);
            } else {
                let (z, w) = (z_s, w_s);
                for i in 0..n {
                    let dx = dzeta[i];
                    rxz[i] = -z[i] * (1.0 + dx * inv_zeta[i]);
                    rsw[i] = -w[i] * (1.0 - dx * inv_s[i]);
                }
            }

            for (t, dt) in theta.iter_mut().zip(&dtheta) {
                *t += td * dt;
            }
            d.apply(&theta, &mut fit_c);
            let mut g0 = [0.0f64; 2];
            let mut dsum = 0.0;
            let (fit, bb, dzeta, rxz, rsw) =
                (&fit_c[..n], &self.b[..n], &dzeta[..n], &rxz[..n], &rsw[..n]);
            let (zeta, s, z, w, r) =
                (&mut zeta[..n], &mut s[..n], &mut z[..n], &mut w[..n], &mut r[..n]);
            for i in 0..n {
                let zi = zeta[i] + tp * dzeta[i];
                let si = s[i] - tp * dzeta[i];
                let zz = z[i] + td * rxz[i];
                let ww = w[i] + td * rsw[i];
                zeta[i] = zi;
                s[i] = si;
                z[i] = zz;
                w[i] = ww;
                r[i] = bb[i] - fit[i];
                g0[i & 1] += zi * zz + si * ww;
                dsum += bb[i] * zi;
            }
            gap = g0[0] + g0[1];
            dual = dsum - self.offset;
        }
    }

    /// Round `theta` to the vertex through the `q` rows with the smallest
    /// absolute residuals and certify it with a feasible dual point.
    pub fn try_vertex(&self, theta: &[f64]) -> Option<LpSolution> {
        let d = self.design;
        let (n, q) = (d.nrows(), d.ncols());
        let mut fit = vec![0.0; n];
        d.apply(theta, &mut fit);
        let mut order: Vec<usize> = (0..n).collect();
        let absr: Vec<f64> = self.b.iter().zip(&fit).map(|(b, f)| (b - f).abs()).collect();
        order.select_nth_unstable_by(q - 1, |&i, &j| {
            absr[i].total_cmp(&absr[j]).then(i.cmp(&j))
        });
        let mut basis: Vec<usize> = order[..q].to_vec();
        basis.sort_unstable();

        let mut db = vec![0.0; q * q];
        let mut row = vec![0.0; q];
        for (k, &i) in basis.iter().enumerate() {
            d.row(i, &mut row);
            db[k * q..(k + 1) * q].copy_from_slice(&row);
        }
        let bb: Vec<f64> = basis.iter().map(|&i| self.b[i]).collect();
        let vtheta = lu_solve(q, &db, &bb, 1e-12)?;

        d.apply(&vtheta, &mut fit);
        let bscale = 1.0 + self.b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let eps = 1e-11 * bscale;
        let mut zeta = vec![0.0; n];
        let mut in_basis = vec![false; n];
        for &i in &basis {
            in_basis[i] = true;
        }
        for i in 0..n {
            if in_basis[i] {
                continue;
            }
            let ri = self.b[i] - fit[i];
            if ri > eps {
                zeta[i] = 1.0;
            } else if ri < -eps {
                zeta[i] = 0.0;
            } else {
                return None;
            }
        }
        let mut rhs = vec![0.0; q];
        d.apply_t(&zeta, &mut rhs);
        for (r, a) in rhs.iter_mut().zip(self.a) {
            *r = a - *r;
        }
        let mut dbt = vec![0.0; q * q];
        for i in 0..q {
            for j in 0..q {
                dbt[j * q + i] = db[i * q + j];
            }
        }
        let zb = lu_solve(q, &dbt, &rhs, 1e-12)?;
        const FEAS: f64 = 1e-9;
        if zb.iter().any(|v| !(*v >= -FEAS && *v <= 1.0 + FEAS)) {
            return None;
        }
        for (&i, &v) in basis.iter().zip(&zb) {
            zeta[i] = v.clamp(0.0, 1.0);
        }
        let primal = dot(self.a, &vtheta)
            + self
                .b
                .iter()
                .zip(&fit)
                .map(|(b, f)| (b - f).max(0.0))
                .sum::<f64>()
            - self.offset;
        let dual = dot(self.b, &zeta) - self.offset;
        Some(LpSolution {
            theta: vtheta,
            zeta,
            primal,
            dual,
            gap: (primal - dual).abs(),
            iterations: 0,
            vertex: true,
        })
    }
}

pub(crate) fn dot_product(x: &[f64], y: &[f64]) -> f64 {
    dot(x, y)
}
