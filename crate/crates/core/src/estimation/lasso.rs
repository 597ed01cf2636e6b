//! L1-penalized least squares by cyclic coordinate descent.
//!
//! Minimizes `0.5 * ||t - D b||^2 + lambda * ||b||_1`. The solver works on
//! the Gram form (`D'D`, `D't`, `t't`), so callers that only have second
//! moments never need to materialize a design matrix. Each coordinate update
//! divides by its own squared column norm, which is the same as solving on
//! unit-norm columns and mapping back.
//!
//! Coordinate descent crawls on strongly collinear designs. Two additions
//! keep it fast: along every direction in the null space of `D'D` the
//! quadratic is flat, so each sweep also minimizes the L1 term exactly along
//! those directions (a weighted median); and whenever the support has been
//! stable for a few sweeps, the exact solution on that support with those
//! signs is tried. It is kept if it satisfies the optimality conditions;
//! otherwise the iterate moves toward it up to the first sign change.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};

pub const TOLERANCE: f64 = 1e-8;
pub const MAX_SWEEPS: usize = 10_000;
const POLISH_EVERY: usize = 5;

#[derive(Debug, Clone, Serialize)]
pub struct LassoFit {
    pub coefficients: Vec<f64>,
    pub sweeps: usize,
    pub duality_gap: f64,
}

/// Minimizes `sum_j |b_j + s v_j|` over `s`: a weighted median of the
/// breakpoints `-b_j / v_j` with weights `|v_j|`.
fn l1_line_minimizer(b: &DVector<f64>, v: &DVector<f64>) -> f64 {
    let mut knots: Vec<(f64, f64)> =
        b.iter().zip(v.iter()).filter(|(_, &vj)| vj != 0.0).map(|(&bj, &vj)| (-bj / vj, vj.abs())).collect();
    if knots.is_empty() {
        return 0.0;
    }
    knots.sort_by(|a, c| a.0.total_cmp(&c.0));
    let half = knots.iter().map(|k| k.1).sum::<f64>() / 2.0;
    let mut acc = 0.0;
    for &(t, w) in &knots {
        acc += w;
        if acc >= half {
            return t;
        }
    }
    knots[knots.len() - 1].0
}

/// A lasso problem in Gram form.
#[derive(Debug, Clone)]
pub struct GramLasso {
    gram: DMatrix<f64>,
    corr: DVector<f64>,
    tt: f64,
    null_space: Vec<DVector<f64>>,
}

enum Polish {
    Exact(DVector<f64>),
    Step(DVector<f64>),
    None,
}

fn soft(z: f64, l: f64) -> f64 {
    if z > l {
        z - l
    } else if z < -l {
        z + l
    } else {
        0.0
    }
}

impl GramLasso {
    pub fn new(gram: DMatrix<f64>, corr: DVector<f64>, tt: f64) -> Result<Self> {
        let p = corr.len();
        if gram.nrows() != p || gram.ncols() != p {
            return Err(Error::invalid("Gram matrix and correlation vector disagree in size"));
        }
        if gram.iter().chain(corr.iter()).any(|v| !v.is_finite()) || !tt.is_finite() {
            return Err(Error::invalid("non-finite lasso input"));
        }
        let eig = SymmetricEigen::new(gram.clone());
        let top = eig.eigenvalues.amax();
        let null_space = (0..p)
            .filter(|&i| eig.eigenvalues[i] <= 1e-12 * top)
            .map(|i| eig.eigenvectors.column(i).into_owned())
            .collect();
        Ok(Self { gram, corr, tt, null_space })
    }

    pub fn from_design(design: &DMatrix<f64>, target: &DVector<f64>) -> Result<Self> {
        if design.nrows() != target.len() {
            return Err(Error::invalid(format!(
                "design has {} rows, target has {}",
                design.nrows(),
                target.len()
            )));
        }
        Self::new(design.tr_mul(design), design.tr_mul(target), target.norm_squared())
    }

    pub fn dim(&self) -> usize {
        self.corr.len()
    }

    /// Smallest penalty with an all-zero solution.
    pub fn lambda_max(&self) -> f64 {
        self.corr.amax()
    }

    pub fn objective(&self, b: &DVector<f64>, lambda: f64) -> f64 {
        let rss = self.tt - 2.0 * b.dot(&self.corr) + b.dot(&(&self.gram * b));
        0.5 * rss.max(0.0) + lambda * b.lp_norm(1)
    }

    /// Largest violation of the subgradient optimality conditions.
    pub fn kkt_residual(&self, b: &DVector<f64>, lambda: f64) -> f64 {
        let g = &self.corr - &self.gram * b;
        g.iter()
            .zip(b.iter())
            .map(|(&gj, &bj)| if bj == 0.0 { (gj.abs() - lambda).max(0.0) } else { (gj - lambda * bj.signum()).abs() })
            .fold(0.0, f64::max)
    }

    fn duality_gap(&self, b: &DVector<f64>, grad: &DVector<f64>, lambda: f64) -> f64 {
        let bc = b.dot(&self.corr);
        let rss = (self.tt - 2.0 * bc + b.dot(&(&self.gram * b))).max(0.0);
        let primal = 0.5 * rss + lambda * b.lp_norm(1);
        let gmax = grad.amax();
        let s = if gmax > lambda { lambda / gmax } else { 1.0 };
        // Dual point theta = s * r; ||t - theta||^2 expanded in Gram terms.
        let tr = self.tt - bc;
        let dual = 0.5 * self.tt - 0.5 * (self.tt - 2.0 * s * tr + s * s * rss);
        (primal - dual).max(0.0)
    }

    /// Solves the stationarity equations on the support of `b` with its
    /// signs. If that solution keeps every sign and is optimal it is
    /// returned as exact; otherwise `b` moves toward it until the first
    /// coordinate reaches zero, which lowers the objective within the orthant.
    fn polish(&self, b: &DVector<f64>, lambda: f64) -> Polish {
        let active: Vec<usize> = (0..b.len()).filter(|&j| b[j] != 0.0).collect();
        if active.is_empty() {
            return Polish::None;
        }
        let k = active.len();
        let g = DMatrix::from_fn(k, k, |i, j| self.gram[(active[i], active[j])]);
        let rhs = DVector::from_fn(k, |i, _| self.corr[active[i]] - lambda * b[active[i]].signum());
        // Least-norm solution; the Gram matrix may be singular.
        let eig = SymmetricEigen::new(g);
        let top = eig.eigenvalues.amax();
        let proj = eig.eigenvectors.tr_mul(&rhs);
        let scaled = DVector::from_fn(k, |i, _| {
            let l = eig.eigenvalues[i];
            if l > 1e-12 * top {
                proj[i] / l
            } else {
                0.0
            }
        });
        let sol = &eig.eigenvectors * scaled;
        let mut out = DVector::zeros(b.len());
        for (i, &j) in active.iter().enumerate() {
            out[j] = sol[i];
        }
        let keeps_signs = active.iter().all(|&j| out[j] != 0.0 && out[j].signum() == b[j].signum());
        if keeps_signs {
            let bound = TOLERANCE * self.lambda_max().max(1.0);
            return if self.kkt_residual(&out, lambda) <= bound { Polish::Exact(out) } else { Polish::None };
        }
        // First crossing along the segment from b to the solution.
        let (mut t, mut hit) = (1.0, active[0]);
        for &j in &active {
            if out[j].signum() != b[j].signum() {
                let tj = b[j] / (b[j] - out[j]);
                if tj < t {
                    t = tj;
                    hit = j;
                }
            }
        }
        let mut moved = b + (&out - b) * t;
        moved[hit] = 0.0;
        if self.objective(&moved, lambda) < self.objective(b, lambda) {
            Polish::Step(moved)
        } else {
            Polish::None
        }
    }

    /// Solves at `lambda`, optionally warm-started.
    pub fn solve(&self, lambda: f64, warm: Option<&[f64]>) -> Result<LassoFit> {
        if !(lambda >= 0.0) {
            return Err(Error::invalid("lambda must be nonnegative"));
        }
        let p = self.dim();
        let mut b = match warm {
            Some(w) if w.len() == p => DVector::from_column_slice(w),
            Some(_) => return Err(Error::invalid("warm start has the wrong length")),
            None => DVector::zeros(p),
        };
        let mut grad = &self.corr - &self.gram * &b;
        let tol = TOLERANCE * self.tt.sqrt().max(1.0);
        let mut stable = 0usize;
        for sweep in 1..=MAX_SWEEPS {
            let support: Vec<bool> = b.iter().map(|v| *v != 0.0).collect();
            let mut max_change = 0.0f64;
            for j in 0..p {
                let gjj = self.gram[(j, j)];
                if gjj <= 0.0 {
                    b[j] = 0.0;
                    continue;
                }
                let old = b[j];
                let new = soft(grad[j] + gjj * old, lambda) / gjj;
                let d = new - old;
                if d != 0.0 {
                    b[j] = new;
                    grad.axpy(-d, &self.gram.column(j), 1.0);
                    max_change = max_change.max(d.abs() * gjj.sqrt());
                }
            }
            if lambda > 0.0 {
                for v in &self.null_space {
                    let step = l1_line_minimizer(&b, v);
                    if step != 0.0 && b.lp_norm(1) > (&b + v * step).lp_norm(1) {
                        b.axpy(step, v, 1.0);
                        grad.axpy(-step, &(&self.gram * v), 1.0);
                        // Coordinates zeroed by the step must stay exactly zero.
                        for j in 0..p {
                            if b[j].abs() < 1e-15 * (1.0 + step.abs()) {
                                b[j] = 0.0;
                            }
                        }
                    }
                }
            }
            // The change is measured on the fitted-value scale, relative to the
            // target norm. A small duality gap alone does not bound the
            // subgradient residual tightly enough.
            if max_change <= tol {
                let gap = self.duality_gap(&b, &grad, lambda);
                return Ok(LassoFit { coefficients: b.as_slice().to_vec(), sweeps: sweep, duality_gap: gap });
            }
            let support_changed = b.iter().zip(&support).any(|(v, &was)| (*v != 0.0) != was);
            stable = if support_changed { 0 } else { stable + 1 };
            if stable > 0 && stable % POLISH_EVERY == 0 {
                match self.polish(&b, lambda) {
                    Polish::Exact(exact) => {
                        let g = &self.corr - &self.gram * &exact;
                        let gap = self.duality_gap(&exact, &g, lambda);
                        return Ok(LassoFit { coefficients: exact.as_slice().to_vec(), sweeps: sweep, duality_gap: gap });
                    }
                    Polish::Step(moved) => {
                        b = moved;
                        grad = &self.corr - &self.gram * &b;
                        stable = 0;
                    }
                    Polish::None => {}
                }
            }
        }
        Err(Error::NonConvergence { sweeps: MAX_SWEEPS, gap: self.duality_gap(&b, &grad, lambda) })
    }
}

/// Solves the lasso for an explicit design matrix and target.
pub fn lasso(design: &DMatrix<f64>, target: &DVector<f64>, lambda: f64) -> Result<LassoFit> {
    GramLasso::from_design(design, target)?.solve(lambda, None)
}
