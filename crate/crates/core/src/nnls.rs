//! Non-negative least squares with a free intercept.
//!
//! Active-set scheme of the Lawson–Hanson kind, run on the normal equations
//! of the column-centered problem: centering profiles the unconstrained
//! intercept out, so the sign constraint applies to the slope coefficients
//! only. Problems here are small and dense (a handful of candidate series),
//! so a pivoted dense solve per active-set change is the whole cost.

use crate::scalar::Real;
use crate::{Error, Result};

/// Result of a constrained fit.
#[derive(Debug, Clone)]
pub struct NnlsFit<F> {
    pub intercept: F,
    /// One non-negative coefficient per input column.
    pub coefficients: Vec<F>,
    /// Fitted values on the raw (uncentered) scale.
    pub fitted: Vec<F>,
    /// Weighted sum of squared residuals.
    pub sse: F,
}

/// KKT stationarity diagnostics for a candidate solution.
#[derive(Debug, Clone)]
pub struct KktReport<F> {
    /// Largest |∂SSE/∂β_j| over coefficients with β_j > 0 (0 if none).
    pub max_active_gradient: F,
    /// Smallest ∂SSE/∂β_j over coefficients at the bound (+∞ if none).
    pub min_bound_gradient: F,
    pub ok: bool,
}

/// Minimize Σ w_i (y_i − β₀ − Σ_j β_j x_ij)² subject to β_j ≥ 0, β₀ free.
///
/// `columns` are the regressor columns; all must match `y` in length.
/// `weights`, when given, must be positive.
pub fn nnls_with_intercept<F: Real>(
    columns: &[Vec<F>],
    y: &[F],
    weights: Option<&[F]>,
) -> Result<NnlsFit<F>> {
    let n = y.len();
    if n == 0 {
        return Err(Error::InsufficientData("nnls requires observations".into()));
    }
    for (j, col) in columns.iter().enumerate() {
        if col.len() != n {
            return Err(Error::Contract(format!(
                "nnls column {j} has length {} but y has {n}",
                col.len()
            )));
        }
    }
    let ones;
    let w: &[F] = match weights {
        Some(w) => {
            if w.len() != n {
                return Err(Error::Contract("nnls weights length mismatch".into()));
            }
            w
        }
        None => {
            ones = vec![F::one(); n];
            &ones
        }
    };
    let wsum = w.iter().fold(F::zero(), |a, &b| a + b);
    if wsum <= F::zero() {
        return Err(Error::Contract("nnls weights must have positive sum".into()));
    }

    let k = columns.len();
    let y_mean = dot(w, y) / wsum;
    let col_means: Vec<F> = columns.iter().map(|c| dot(w, c) / wsum).collect();

    // Gram matrix and right-hand side of the centered problem.
    let mut gram = vec![F::zero(); k * k];
    let mut rhs = vec![F::zero(); k];
    for a in 0..k {
        for b in a..k {
            let mut s = F::zero();
            for i in 0..n {
                s += w[i] * (columns[a][i] - col_means[a]) * (columns[b][i] - col_means[b]);
            }
            gram[a * k + b] = s;
            gram[b * k + a] = s;
        }
        let mut s = F::zero();
        for i in 0..n {
            s += w[i] * (columns[a][i] - col_means[a]) * (y[i] - y_mean);
        }
        rhs[a] = s;
    }

    let scale = (0..k)
        .map(|j| gram[j * k + j])
        .fold(F::zero(), |a, b| a.max(b))
        .max(F::one());
    let entry_tol = scale * F::of(1e-13);

    let mut beta = vec![F::zero(); k];
    let mut active = vec![false; k];
    let max_outer = 3 * k.max(1) + 10;
    for _ in 0..max_outer {
        // Dual vector of the centered problem: rhs − Gram·beta.
        let mut best: Option<(usize, F)> = None;
        for j in 0..k {
            if active[j] {
                continue;
            }
            let mut g = rhs[j];
            for l in 0..k {
                g -= gram[j * k + l] * beta[l];
            }
            if g > entry_tol && best.map_or(true, |(_, bg)| g > bg) {
                best = Some((j, g));
            }
        }
        let Some((enter, _)) = best else { break };
        active[enter] = true;

        // Inner feasibility loop.
        loop {
            let members: Vec<usize> = (0..k).filter(|&j| active[j]).collect();
            let z = match solve_subsystem(&gram, &rhs, k, &members) {
                Some(z) => z,
                None => {
                    // Numerically dependent column; drop the entrant and move on.
                    active[enter] = false;
                    break;
                }
            };
            if z.iter().all(|&v| v > F::zero()) {
                for (&j, &v) in members.iter().zip(&z) {
                    beta[j] = v;
                }
                for j in 0..k {
                    if !active[j] {
                        beta[j] = F::zero();
                    }
                }
                break;
            }
            // Step toward z until the first coefficient hits zero.
            let mut alpha = F::one();
            let mut leave = None;
            for (idx, &j) in members.iter().enumerate() {
                if z[idx] <= F::zero() {
                    let t = beta[j] / (beta[j] - z[idx]);
                    if t < alpha {
                        alpha = t;
                        leave = Some(j);
                    }
                }
            }
            for (idx, &j) in members.iter().enumerate() {
                beta[j] = beta[j] + alpha * (z[idx] - beta[j]);
            }
            match leave {
                Some(j) => {
                    beta[j] = F::zero();
                    active[j] = false;
                }
                None => break,
            }
        }
    }

    let intercept = y_mean - (0..k).map(|j| beta[j] * col_means[j]).fold(F::zero(), |a, b| a + b);
    let mut fitted = vec![intercept; n];
    for j in 0..k {
        for i in 0..n {
            fitted[i] += beta[j] * columns[j][i];
        }
    }
    let mut sse = F::zero();
    for i in 0..n {
        let r = y[i] - fitted[i];
        sse += w[i] * r * r;
    }
    Ok(NnlsFit { intercept, coefficients: beta, fitted, sse })
}

/// Evaluate the KKT stationarity conditions of `fit` on the original data:
/// ∂SSE/∂β_j must vanish for strictly positive coefficients and be
/// non-negative for coefficients at the bound.
pub fn kkt_check<F: Real>(
    columns: &[Vec<F>],
    y: &[F],
    weights: Option<&[F]>,
    fit: &NnlsFit<F>,
    tol: F,
) -> KktReport<F> {
    let n = y.len();
    let ones;
    let w: &[F] = match weights {
        Some(w) => w,
        None => {
            ones = vec![F::one(); n];
            &ones
        }
    };
    let mut max_active = F::zero();
    let mut min_bound = F::infinity();
    for (j, col) in columns.iter().enumerate() {
        let mut grad = F::zero();
        for i in 0..n {
            grad -= F::of(2.0) * w[i] * col[i] * (y[i] - fit.fitted[i]);
        }
        if fit.coefficients[j] > F::zero() {
            max_active = max_active.max(grad.abs());
        } else {
            min_bound = min_bound.min(grad);
        }
    }
    let ok = max_active <= tol && (min_bound.is_infinite() || min_bound >= -tol);
    KktReport { max_active_gradient: max_active, min_bound_gradient: min_bound, ok }
}

fn dot<F: Real>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).fold(F::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Solve the restriction of `gram`·z = `rhs` to `members` by Gaussian
/// elimination with partial pivoting. `None` on a numerically singular
/// subsystem.
fn solve_subsystem<F: Real>(gram: &[F], rhs: &[F], k: usize, members: &[usize]) -> Option<Vec<F>> {
    let m = members.len();
    let mut a = vec![F::zero(); m * m];
    let mut b = vec![F::zero(); m];
    let mut diag_max = F::zero();
    for (r, &jr) in members.iter().enumerate() {
        for (c, &jc) in members.iter().enumerate() {
            a[r * m + c] = gram[jr * k + jc];
        }
        diag_max = diag_max.max(gram[jr * k + jr]);
        b[r] = rhs[jr];
    }
    let pivot_tol = diag_max.max(F::one()) * F::of(1e-13);
    for col in 0..m {
        let mut piv = col;
        for r in col + 1..m {
            if a[r * m + col].abs() > a[piv * m + col].abs() {
                piv = r;
            }
        }
        if a[piv * m + col].abs() <= pivot_tol {
            return None;
        }
        if piv != col {
            for c in 0..m {
                a.swap(col * m + c, piv * m + c);
            }
            b.swap(col, piv);
        }
        let d = a[col * m + col];
        for r in col + 1..m {
            let f = a[r * m + col] / d;
            if f != F::zero() {
                for c in col..m {
                    let v = a[col * m + c];
                    a[r * m + c] = a[r * m + c] - f * v;
                }
                b[r] = b[r] - f * b[col];
            }
        }
    }
    let mut z = vec![F::zero(); m];
    for r in (0..m).rev() {
        let mut s = b[r];
        for c in r + 1..m {
            s -= a[r * m + c] * z[c];
        }
        z[r] = s / a[r * m + r];
    }
    Some(z)
}
