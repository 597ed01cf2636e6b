use crate::error::{Error, Result};
use crate::stats::{ols, solve_spd, CovMatrix, Dataset};

/// First-stage R^2 below which instruments are rejected as weak.
pub const MIN_FIRST_STAGE_R2: f64 = 1e-6;

/// Least-squares coefficients of `y` on `regressors`.
pub fn ols_effect(data: &Dataset, y: &str, regressors: &[&str]) -> Result<Vec<(String, f64)>> {
    ols(data, y, regressors)
}

/// Two-stage least squares coefficient of `x`, with `conditioning` entering
/// both stages as exogenous covariates.
pub fn tsls(data: &Dataset, x: &str, y: &str, instruments: &[&str], conditioning: &[&str]) -> Result<f64> {
    if data.n() <= instruments.len() + conditioning.len() + 1 {
        return Err(Error::invalid(format!(
            "n = {} too small for {} instruments and {} covariates",
            data.n(),
            instruments.len(),
            conditioning.len()
        )));
    }
    tsls_cov(data.covariance(), x, y, instruments, conditioning)
}

/// TSLS from second moments. With centered data this is the same estimator
/// as [`tsls`] (the partialled-out form of the two-stage regression).
pub fn tsls_cov(cov: &CovMatrix, x: &str, y: &str, instruments: &[&str], conditioning: &[&str]) -> Result<f64> {
    if instruments.is_empty() {
        return Err(Error::invalid("tsls needs at least one instrument"));
    }
    let mut all: Vec<&str> = instruments.to_vec();
    all.extend_from_slice(conditioning);
    all.push(x);
    all.push(y);
    for (i, a) in all.iter().enumerate() {
        if all[..i].contains(a) {
            return Err(Error::invalid(format!("`{a}` appears in more than one role")));
        }
    }
    let k = instruments.len();
    let mut targets = cov.indices(instruments)?;
    targets.push(cov.index_of(x)?);
    targets.push(cov.index_of(y)?);
    let m = cov.conditional_matrix(&targets, &cov.indices(conditioning)?)?;
    let szz = m.view((0, 0), (k, k)).into_owned();
    let rhs = m.view((0, k), (k, 2)).into_owned();
    let a = solve_spd(&szz, &rhs, "instrument covariance")?;
    let sxz = rhs.column(0);
    let explained = sxz.dot(&a.column(0));
    let r_squared = explained / m[(k, k)];
    if !(r_squared >= MIN_FIRST_STAGE_R2) {
        return Err(Error::WeakInstruments { r_squared });
    }
    Ok(sxz.dot(&a.column(1)) / explained)
}

