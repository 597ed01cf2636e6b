//! Selection of invalid instruments by an L1 penalty on their direct
//! effects, assuming that a majority of the candidates are valid.
//!
//! After partialling out the background set, the model is
//! `y = W alpha + x beta + e` with `alpha_j != 0` marking an invalid
//! candidate. With `P` the projection onto the span of `W`, the estimator
//! minimizes `0.5 ||P (y - W alpha - x beta)||^2 + lambda ||alpha||_1`.
//! Profiling out `beta` leaves a lasso in `alpha` whose Gram form only needs
//! second moments, which is what every fit below works with.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::baseline::tsls;
use super::lasso::GramLasso;
use crate::error::{Error, Result};
use crate::stats::{solve_spd, Dataset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SisviveConfig {
    pub folds: usize,
    pub grid_points: usize,
    /// The penalty grid spans `lambda_max * 10^-decades ..= lambda_max`.
    pub decades: f64,
    /// Fixed penalty (on the full-sample scale); skips cross-validation.
    pub lambda: Option<f64>,
    /// Pick the largest penalty within one standard error of the best.
    pub one_se: bool,
    /// Seed of the fold assignment.
    pub seed: u64,
}

impl Default for SisviveConfig {
    fn default() -> Self {
        Self { folds: 10, grid_points: 50, decades: 4.0, lambda: None, one_se: false, seed: 0 }
    }
}

impl SisviveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 || self.grid_points < 2 || !(self.decades > 0.0) {
            return Err(Error::invalid("sisvive needs >= 2 folds, >= 2 grid points and a positive span"));
        }
        if self.lambda.is_some_and(|l| !(l >= 0.0)) {
            return Err(Error::invalid("fixed lambda must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SisviveResult {
    pub valid_w: Vec<String>,
    pub invalid_z: Vec<String>,
    pub dce: f64,
    pub alpha_coefs: BTreeMap<String, f64>,
    pub lambda_selected: f64,
}

/// Second moments partialled on the background, for one block of rows.
struct Reduced {
    gww: DMatrix<f64>,
    gx: DVector<f64>,
    gy: DVector<f64>,
}

/// Centered cross-products over columns `[B.., W.., x, y]`.
fn reduce(g: &DMatrix<f64>, nb: usize, k: usize, gamma: Option<&DMatrix<f64>>) -> Result<(Reduced, DMatrix<f64>)> {
    let p = nb + k + 2;
    let a = g.view((nb, nb), (k + 2, k + 2)).into_owned();
    let (ga, gamma) = if nb == 0 {
        (a, DMatrix::zeros(0, k + 2))
    } else {
        let gbb = g.view((0, 0), (nb, nb)).into_owned();
        let gba = g.view((0, nb), (nb, p - nb)).into_owned();
        let gamma = match gamma {
            Some(gm) => gm.clone(),
            None => solve_spd(&gbb, &gba, "background covariance")?,
        };
        let cross = gba.transpose() * &gamma;
        let m = a - &cross - cross.transpose() + gamma.transpose() * gbb * &gamma;
        ((&m + m.transpose()) * 0.5, gamma)
    };
    let red = Reduced {
        gww: ga.view((0, 0), (k, k)).into_owned(),
        gx: ga.view((0, k), (k, 1)).column(0).into_owned(),
        gy: ga.view((0, k + 1), (k, 1)).column(0).into_owned(),
    };
    Ok((red, gamma))
}

/// The profiled lasso in `alpha` plus what is needed to recover `beta`.
struct Profiled {
    lasso: GramLasso,
    gx: DVector<f64>,
    q: f64,
    xy: f64,
}

impl Profiled {
    fn new(r: &Reduced) -> Result<Self> {
        let rhs = DMatrix::from_columns(&[r.gx.clone(), r.gy.clone()]);
        let h = solve_spd(&r.gww, &rhs, "candidate covariance")?;
        let q = r.gx.dot(&h.column(0));
        let xy = r.gx.dot(&h.column(1));
        let yy = r.gy.dot(&h.column(1));
        let xx: f64 = r.gx.norm_squared().max(f64::MIN_POSITIVE);
        if !(q > 1e-12 * xx.sqrt()) {
            return Err(Error::WeakInstruments { r_squared: 0.0 });
        }
        let gram = &r.gww - &r.gx * r.gx.transpose() / q;
        let corr = &r.gy - &r.gx * (xy / q);
        let tt = yy - xy * xy / q;
        let lasso = GramLasso::new((&gram + gram.transpose()) * 0.5, corr, tt)?;
        Ok(Self { lasso, gx: r.gx.clone(), q, xy })
    }

    fn beta(&self, alpha: &DVector<f64>) -> f64 {
        (self.xy - self.gx.dot(alpha)) / self.q
    }
}

/// `v' M^+ v` for symmetric positive semidefinite `M`.
fn pinv_quadratic(m: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    let eig = SymmetricEigen::new(m.clone());
    let top = eig.eigenvalues.amax();
    let proj = eig.eigenvectors.tr_mul(v);
    proj.iter()
        .zip(eig.eigenvalues.iter())
        .filter(|(_, &l)| l > 1e-10 * top)
        .map(|(c, l)| c * c / l)
        .sum()
}

fn centered_crossprod(rows: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let sums = rows.row_sum().transpose();
    let mut g = rows.tr_mul(rows);
    g -= &sums * sums.transpose() / rows.nrows() as f64;
    (g, sums)
}

fn path(problem: &GramLasso, grid: &[f64]) -> Result<Vec<DVector<f64>>> {
    let mut out = Vec::with_capacity(grid.len());
    let mut warm: Option<Vec<f64>> = None;
    for &l in grid {
        let fit = problem.solve(l, warm.as_deref())?;
        out.push(DVector::from_column_slice(&fit.coefficients));
        warm = Some(fit.coefficients);
    }
    Ok(out)
}

/// Mean held-out projected loss along the grid, one entry per fold.
fn cross_validate(m: &DMatrix<f64>, nb: usize, k: usize, grid: &[f64], cfg: &SisviveConfig) -> Result<Vec<Vec<f64>>> {
    let n = m.nrows();
    let (full, full_sums) = (m.tr_mul(m), m.row_sum().transpose());
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let mut losses = Vec::with_capacity(cfg.folds);
    for f in 0..cfg.folds {
        let held: Vec<usize> = order.iter().enumerate().filter(|(i, _)| i % cfg.folds == f).map(|(_, &r)| r).collect();
        let nh = held.len();
        if nh == 0 || nh == n {
            continue;
        }
        let rows = m.select_rows(&held);
        let raw_h = rows.tr_mul(&rows);
        let (gh, _) = centered_crossprod(&rows);
        let st = &full_sums - rows.row_sum().transpose();
        let nt = (n - nh) as f64;
        let gt = &full - raw_h - &st * st.transpose() / nt;
        let (rt, gamma) = reduce(&gt, nb, k, None)?;
        let problem = Profiled::new(&rt)?;
        let scaled: Vec<f64> = grid.iter().map(|l| l * nt / n as f64).collect();
        let alphas = path(&problem.lasso, &scaled)?;
        let (rh, _) = reduce(&gh, nb, k, Some(&gamma))?;
        let fold_loss = alphas
            .iter()
            .map(|a| {
                let v = &rh.gy - &rh.gww * a - &rh.gx * problem.beta(a);
                pinv_quadratic(&rh.gww, &v) / nh as f64
            })
            .collect();
        losses.push(fold_loss);
    }
    if losses.is_empty() {
        return Err(Error::invalid("too few rows for cross-validation"));
    }
    Ok(losses)
}

fn select_lambda(grid: &[f64], losses: &[Vec<f64>], one_se: bool) -> f64 {
    let kf = losses.len() as f64;
    let mean: Vec<f64> = (0..grid.len()).map(|i| losses.iter().map(|l| l[i]).sum::<f64>() / kf).collect();
    // Grid is decreasing, so on ties the larger penalty wins.
    let best = (0..grid.len()).fold(0, |b, i| if mean[i] < mean[b] { i } else { b });
    if !one_se || losses.len() < 2 {
        return grid[best];
    }
    let var = losses.iter().map(|l| (l[best] - mean[best]).powi(2)).sum::<f64>() / (kf - 1.0);
    let bound = mean[best] + (var / kf).sqrt();
    grid[(0..=best).find(|&i| mean[i] <= bound).unwrap_or(best)]
}

fn check_sets(data: &Dataset, candidates: &[&str], background: &[&str], x: &str, y: &str) -> Result<()> {
    if candidates.is_empty() {
        return Err(Error::invalid("sisvive needs at least one candidate"));
    }
    let mut seen = std::collections::HashSet::new();
    for n in candidates.iter().chain(background).chain([&x, &y]) {
        data.index_of(n)?;
        if !seen.insert(*n) {
            return Err(Error::invalid(format!("`{n}` appears in more than one role")));
        }
    }
    Ok(())
}

/// Splits `candidates` into valid instruments and invalid ones, then
/// estimates the effect of `x` on `y` by TSLS with the valid set as
/// instruments and the invalid set plus `background` as covariates.
pub fn sisvive(
    data: &Dataset,
    candidates: &[&str],
    background: &[&str],
    x: &str,
    y: &str,
    cfg: &SisviveConfig,
) -> Result<SisviveResult> {
    cfg.validate()?;
    check_sets(data, candidates, background, x, y)?;
    let mut w: Vec<&str> = candidates.to_vec();
    w.sort_unstable();
    let mut b: Vec<&str> = background.to_vec();
    b.sort_unstable();
    let (nb, k) = (b.len(), w.len());
    if data.n() <= nb + k + 2 {
        return Err(Error::invalid(format!("n = {} too small for {} columns", data.n(), nb + k + 2)));
    }
    let mut cols = b.clone();
    cols.extend_from_slice(&w);
    cols.push(x);
    cols.push(y);
    let m = data.matrix_of(&cols)?;
    let (full, _) = centered_crossprod(&m);
    let (red, _) = reduce(&full, nb, k, None)?;
    let problem = Profiled::new(&red)?;

    let lambda = match cfg.lambda {
        Some(l) => l,
        None => {
            let top = problem.lasso.lambda_max();
            if top <= 0.0 {
                0.0
            } else {
                let g = cfg.grid_points;
                let grid: Vec<f64> =
                    (0..g).map(|i| top * 10f64.powf(-cfg.decades * i as f64 / (g - 1) as f64)).collect();
                let losses = cross_validate(&m, nb, k, &grid, cfg)?;
                select_lambda(&grid, &losses, cfg.one_se)
            }
        }
    };
    let top = problem.lasso.lambda_max();
    // Walk down from the top of the path for a well-conditioned warm start.
    let steps: Vec<f64> = if lambda < top { vec![top, lambda] } else { vec![lambda] };
    let alpha = path(&problem.lasso, &steps)?.pop().expect("nonempty path");

    let mut valid_w = Vec::new();
    let mut invalid_z = Vec::new();
    let mut alpha_coefs = BTreeMap::new();
    for (j, name) in w.iter().enumerate() {
        alpha_coefs.insert(name.to_string(), alpha[j]);
        if alpha[j] == 0.0 {
            valid_w.push(name.to_string());
        } else {
            invalid_z.push(name.to_string());
        }
    }
    if valid_w.is_empty() {
        return Err(Error::NoInstruments);
    }
    let instruments: Vec<&str> = valid_w.iter().map(String::as_str).collect();
    let mut conditioning: Vec<&str> = invalid_z.iter().map(String::as_str).collect();
    conditioning.extend_from_slice(&b);
    let dce = tsls(data, x, y, &instruments, &conditioning)?;
    Ok(SisviveResult { valid_w, invalid_z, dce, alpha_coefs, lambda_selected: lambda })
}
