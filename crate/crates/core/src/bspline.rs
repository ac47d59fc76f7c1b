//! Cubic B-spline bases over a grid of quantile levels.

use crate::error::{QfaError, Result};

const DEGREE: usize = 3;

/// Cubic B-spline basis evaluated on a level grid.
///
/// The full knot placement repeats each boundary level four times and uses
/// the interior levels `α_3, …, α_{L-2}` as simple knots, which gives `K = L`
/// basis functions and an invertible `Φ` on the grid. See
/// [`default_knot_count`] for the rule used by the SQR estimators.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineBasis {
    levels: Vec<f64>,
    knots: Vec<f64>,
    k: usize,
    /// Row-major `L x K`.
    phi: Vec<f64>,
    phi_dd: Vec<f64>,
    /// First nonzero basis index per level.
    first: Vec<usize>,
    local: Vec<[f64; 4]>,
    local_dd: Vec<[f64; 4]>,
}

/// Interior knot count of the reduced rule `⌈2.5·L^0.4⌉`.
pub fn reduced_knot_count(levels: usize) -> usize {
    (2.5 * (levels as f64).powf(0.4)).ceil() as usize
}

/// Knot budget for `build_spline_basis`: the full basis (`K = L`) up to 50
/// levels, the reduced rule above that.
pub fn default_knot_count(levels: usize) -> usize {
    if levels <= 50 {
        usize::MAX
    } else {
        reduced_knot_count(levels)
    }
}

pub(crate) fn check_levels(levels: &[f64]) -> Result<()> {
    if levels.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
        return Err(QfaError::domain("quantile levels must lie in (0,1)"));
    }
    if levels.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(QfaError::domain("quantile levels must be strictly increasing"));
    }
    Ok(())
}

/// Build a clamped cubic basis on `levels` with at most `max_knots` interior
/// knots. With `max_knots ≥ L − 4` the interior knots are `α_3, …, α_{L-2}`;
/// otherwise `max_knots` knots are placed at equally spaced quantiles of the
/// level grid.
pub fn build_spline_basis(levels: &[f64], max_knots: usize) -> Result<SplineBasis> {
    let l = levels.len();
    if l < 4 {
        return Err(QfaError::size(format!("need at least 4 levels, got {l}")));
    }
    check_levels(levels)?;
    let (lo, hi) = (levels[0], levels[l - 1]);

    let interior: Vec<f64> = if max_knots >= l - 4 {
        levels[2..l - 2].to_vec()
    } else {
        let m = max_knots;
        (1..=m)
            .map(|i| {
                let pos = (l - 1) as f64 * i as f64 / (m + 1) as f64;
                let j = (pos.floor() as usize).min(l - 2);
                let f = pos - j as f64;
                levels[j] + f * (levels[j + 1] - levels[j])
            })
            .collect()
    };
    let mut knots = vec![lo; DEGREE + 1];
    knots.extend_from_slice(&interior);
    knots.extend(std::iter::repeat(hi).take(DEGREE + 1));
    let k = knots.len() - DEGREE - 1;

    let mut phi = vec![0.0; l * k];
    let mut phi_dd = vec![0.0; l * k];
    let mut first = Vec::with_capacity(l);
    let mut local = Vec::with_capacity(l);
    let mut local_dd = Vec::with_capacity(l);
    for (row, &x) in levels.iter().enumerate() {
        let span = find_span(&knots, k, x);
        let (v, dd) = basis_and_second_derivative(&knots, span, x);
        let f = span - DEGREE;
        for a in 0..4 {
            phi[row * k + f + a] = v[a];
            phi_dd[row * k + f + a] = dd[a];
        }
        first.push(f);
        local.push(v);
        local_dd.push(dd);
    }
    Ok(SplineBasis {
        levels: levels.to_vec(),
        knots,
        k,
        phi,
        phi_dd,
        first,
        local,
        local_dd,
    })
}

impl SplineBasis {
    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Basis dimension `K`.
    pub fn dim(&self) -> usize {
        self.k
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    /// `φ_k(α_ℓ)`
    pub fn phi(&self, level: usize, k: usize) -> f64 {
        self.phi[level * self.k + k]
    }

    /// `φ̈_k(α_ℓ)`
    pub fn phi_dd(&self, level: usize, k: usize) -> f64 {
        self.phi_dd[level * self.k + k]
    }

    /// Row `ℓ` of `Φ` as a dense slice of length `K`.
    pub fn phi_row(&self, level: usize) -> &[f64] {
        &self.phi[level * self.k..(level + 1) * self.k]
    }

    pub fn phi_dd_row(&self, level: usize) -> &[f64] {
        &self.phi_dd[level * self.k..(level + 1) * self.k]
    }

    /// Index of the first of the four nonzero basis functions at level `ℓ`,
    /// with their values and second derivatives.
    pub(crate) fn local(&self, level: usize) -> (usize, &[f64; 4], &[f64; 4]) {
        (self.first[level], &self.local[level], &self.local_dd[level])
    }

    /// Evaluate all `K` basis functions and their second derivatives at `x`
    /// inside the boundary levels.
    pub fn evaluate(&self, x: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let (lo, hi) = (self.knots[0], self.knots[self.knots.len() - 1]);
        if !(x >= lo && x <= hi) {
            return Err(QfaError::domain(format!(
                "{x} outside the basis range [{lo}, {hi}]"
            )));
        }
        let span = find_span(&self.knots, self.k, x);
        let (v, dd) = basis_and_second_derivative(&self.knots, span, x);
        let mut vals = vec![0.0; self.k];
        let mut dds = vec![0.0; self.k];
        let f = span - DEGREE;
        vals[f..f + 4].copy_from_slice(&v);
        dds[f..f + 4].copy_from_slice(&dd);
        Ok((vals, dds))
    }
}

/// Knot span `s` with `t_s ≤ x < t_{s+1}`; the right boundary maps to the
/// last nonempty span.
fn find_span(knots: &[f64], k: usize, x: f64) -> usize {
    if x >= knots[k] {
        return k - 1;
    }
    let mut lo = DEGREE;
    let mut hi = k;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if x < knots[mid] {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    lo
}

/// Values and second derivatives of the four cubic basis functions that are
/// nonzero on `span`, via the triangular table of lower-degree functions.
fn basis_and_second_derivative(knots: &[f64], span: usize, x: f64) -> ([f64; 4], [f64; 4]) {
    const P: usize = DEGREE;
    let mut ndu = [[0.0f64; P + 1]; P + 1];
    let mut left = [0.0f64; P + 1];
    let mut right = [0.0f64; P + 1];
    ndu[0][0] = 1.0;
    for j in 1..=P {
        left[j] = x - knots[span + 1 - j];
        right[j] = knots[span + j] - x;
        let mut saved = 0.0;
        for r in 0..j {
            // lower triangle holds knot differences
            ndu[j][r] = right[r + 1] + left[j - r];
            let temp = ndu[r][j - 1] / ndu[j][r];
            ndu[r][j] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        ndu[j][j] = saved;
    }

    let mut vals = [0.0; P + 1];
    let mut second = [0.0; P + 1];
    for r in 0..=P {
        vals[r] = ndu[r][P];
    }
    let mut a = [[0.0f64; P + 1]; 2];
    for r in 0..=P {
        let (mut s1, mut s2) = (0usize, 1usize);
        a[0] = [0.0; P + 1];
        a[1] = [0.0; P + 1];
        a[0][0] = 1.0;
        for k in 1..=2usize {
            let mut d = 0.0;
            let rk = r as isize - k as isize;
            let pk = P - k;
            if r >= k {
                let rk = rk as usize;
                a[s2][0] = a[s1][0] / ndu[pk + 1][rk];
                d = a[s2][0] * ndu[rk][pk];
            }
            let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
            let j2 = if r as isize - 1 <= pk as isize { k - 1 } else { P - r };
            for j in j1..=j2 {
                let idx = (rk + j as isize) as usize;
                a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                d += a[s2][j] * ndu[idx][pk];
            }
            if r <= pk {
                a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                d += a[s2][k] * ndu[r][pk];
            }
            if k == 2 {
                second[r] = d;
            }
            std::mem::swap(&mut s1, &mut s2);
        }
    }
    let factor = (P * (P - 1)) as f64;
    for v in second.iter_mut() {
        *v *= factor;
    }
    (vals, second)
}
