//! Hoeffding's D statistic with a permutation p-value.
//!
//! The bivariate counts `Q_i` are computed with a Fenwick tree over the
//! y-codes while sweeping x in rank order, so each statistic costs
//! `O(n log n)`. Ties are handled with mid-ranks and half/quarter counts.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::TestConfig;
use crate::error::{Error, Result};

pub const MIN_LENGTH: usize = 20;
const HEAVY_TIE_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HoeffdingResult {
    pub statistic: f64,
    pub p_value: f64,
    pub independent: bool,
    /// More than 20% of observations share a value with another in x or y.
    pub heavy_ties: bool,
}

/// Dense codes (0-based, ties share a code) and mid-ranks (1-based).
fn codes_and_midranks(v: &[f64]) -> (Vec<usize>, Vec<f64>, usize) {
    let n = v.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut codes = vec![0; n];
    let mut ranks = vec![0.0; n];
    let mut tied = 0;
    let mut start = 0;
    let mut code = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && v[order[end]] == v[order[start]] {
            end += 1;
        }
        let mid = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            codes[i] = code;
            ranks[i] = mid;
        }
        if end - start > 1 {
            tied += end - start;
        }
        code += 1;
        start = end;
    }
    (codes, ranks, tied)
}

struct Fenwick {
    tree: Vec<u32>,
}

impl Fenwick {
    fn new(n: usize) -> Self {
        Self { tree: vec![0; n + 1] }
    }

    fn clear(&mut self) {
        self.tree.iter_mut().for_each(|t| *t = 0);
    }

    fn add(&mut self, code: usize) {
        let mut i = code + 1;
        while i < self.tree.len() {
            self.tree[i] += 1;
            i += i & i.wrapping_neg();
        }
    }

    /// Number of inserted codes strictly below `code`.
    fn below(&self, code: usize) -> u32 {
        let mut i = code;
        let mut s = 0;
        while i > 0 {
            s += self.tree[i];
            i -= i & i.wrapping_neg();
        }
        s
    }
}

/// Precomputed x-side structure, reused across permutations of y.
struct Prepared {
    n: usize,
    x_rank: Vec<f64>,
    // Indices sorted by x, and the boundaries of equal-x groups.
    x_order: Vec<usize>,
    x_groups: Vec<(usize, usize)>,
    y_levels: usize,
}

impl Prepared {
    fn new(x: &[f64], y_levels: usize) -> Self {
        let n = x.len();
        let (x_code, x_rank, _) = codes_and_midranks(x);
        let mut x_order: Vec<usize> = (0..n).collect();
        x_order.sort_by_key(|&i| x_code[i]);
        let mut x_groups = Vec::new();
        let mut s = 0;
        while s < n {
            let mut e = s + 1;
            while e < n && x_code[x_order[e]] == x_code[x_order[s]] {
                e += 1;
            }
            x_groups.push((s, e));
            s = e;
        }
        Self { n, x_rank, x_order, x_groups, y_levels }
    }

    /// D for the pairing `(x_i, y_i)` given y codes and mid-ranks.
    fn statistic(&self, y_code: &[usize], y_rank: &[f64], bit: &mut Fenwick, scratch: &mut Vec<usize>) -> f64 {
        let n = self.n;
        bit.clear();
        let (mut d1, mut d2, mut d3) = (0.0, 0.0, 0.0);
        for &(s, e) in &self.x_groups {
            let group = &self.x_order[s..e];
            scratch.clear();
            scratch.extend_from_slice(group);
            if scratch.len() > 1 {
                scratch.sort_by_key(|&i| y_code[i]);
            }
            let mut k = 0;
            while k < scratch.len() {
                let mut m = k + 1;
                while m < scratch.len() && y_code[scratch[m]] == y_code[scratch[k]] {
                    m += 1;
                }
                // Within this x-group: k members have smaller y, m - k share y.
                let code = y_code[scratch[k]];
                let ll = bit.below(code) as f64;
                let le = (bit.below(code + 1) - bit.below(code)) as f64;
                let el = k as f64;
                let ee = (m - k - 1) as f64;
                let q = 1.0 + ll + 0.25 * ee + 0.5 * (el + le);
                for &i in &scratch[k..m] {
                    let (r, sr) = (self.x_rank[i], y_rank[i]);
                    d1 += (q - 1.0) * (q - 2.0);
                    d2 += (r - 1.0) * (r - 2.0) * (sr - 1.0) * (sr - 2.0);
                    d3 += (r - 2.0) * (sr - 2.0) * (q - 1.0);
                }
                k = m;
            }
            for &i in group {
                bit.add(y_code[i]);
            }
        }
        let nf = n as f64;
        let num = (nf - 2.0) * (nf - 3.0) * d1 + d2 - 2.0 * (nf - 2.0) * d3;
        let den = nf * (nf - 1.0) * (nf - 2.0) * (nf - 3.0) * (nf - 4.0);
        30.0 * num / den
    }
}

/// D without ties in either margin, where `yx[k]` is the 0-based y rank of
/// the observation with the k-th smallest x.
fn statistic_untied(yx: &[usize], bit: &mut Fenwick) -> f64 {
    let n = yx.len();
    bit.clear();
    let (mut d1, mut d2, mut d3) = (0.0, 0.0, 0.0);
    for (k, &c) in yx.iter().enumerate() {
        // Points below in both coordinates.
        let q1 = bit.below(c) as f64;
        bit.add(c);
        let (r, s) = (k as f64, c as f64);
        d1 += q1 * (q1 - 1.0);
        d2 += r * (r - 1.0) * s * (s - 1.0);
        d3 += (r - 1.0) * (s - 1.0) * q1;
    }
    let nf = n as f64;
    let num = (nf - 2.0) * (nf - 3.0) * d1 + d2 - 2.0 * (nf - 2.0) * d3;
    let den = nf * (nf - 1.0) * (nf - 2.0) * (nf - 3.0) * (nf - 4.0);
    30.0 * num / den
}

/// Hoeffding's D for paired samples (scaled so that D lies in [-0.5, 1]).
pub fn hoeffding_d(x: &[f64], y: &[f64]) -> Result<f64> {
    check(x, y)?;
    let (y_code, y_rank, _) = codes_and_midranks(y);
    let levels = y_code.iter().max().map_or(0, |m| m + 1);
    let prep = Prepared::new(x, levels);
    Ok(prep.statistic(&y_code, &y_rank, &mut Fenwick::new(levels), &mut Vec::new()))
}

fn check(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!("length mismatch: {} vs {}", x.len(), y.len())));
    }
    if x.len() < MIN_LENGTH {
        return Err(Error::invalid(format!("need at least {MIN_LENGTH} pairs, got {}", x.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite value in independence test input"));
    }
    Ok(())
}

/// Permutation test of independence based on Hoeffding's D. The p-value is
/// `(1 + #{D_perm >= D_obs}) / (n_perm + 1)`.
pub fn hoeffding_independent(x: &[f64], y: &[f64], cfg: &TestConfig) -> Result<HoeffdingResult> {
    check(x, y)?;
    let n = x.len();
    let (y_code, y_rank, y_tied) = codes_and_midranks(y);
    let (_, _, x_tied) = codes_and_midranks(x);
    let heavy_ties = x_tied.max(y_tied) as f64 > HEAVY_TIE_FRACTION * n as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let finish = |observed: f64, exceed: usize| {
        let p_value = (1 + exceed) as f64 / (cfg.n_perm + 1) as f64;
        HoeffdingResult { statistic: observed, p_value, independent: p_value >= cfg.alpha, heavy_ties }
    };
    // Relative slack so that permutations reproducing the observed pairing
    // up to rounding count as exceedances.
    let threshold = |observed: f64| observed - 1e-12 * observed.abs().max(1e-12);

    if x_tied == 0 && y_tied == 0 {
        let mut x_order: Vec<usize> = (0..n).collect();
        x_order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
        let mut yx: Vec<usize> = x_order.iter().map(|&i| y_code[i]).collect();
        let mut bit = Fenwick::new(n);
        let observed = statistic_untied(&yx, &mut bit);
        let t = threshold(observed);
        let mut exceed = 0;
        for _ in 0..cfg.n_perm {
            yx.shuffle(&mut rng);
            if statistic_untied(&yx, &mut bit) >= t {
                exceed += 1;
            }
        }
        return Ok(finish(observed, exceed));
    }

    let levels = y_code.iter().max().map_or(0, |m| m + 1);
    let prep = Prepared::new(x, levels);
    let mut bit = Fenwick::new(prep.y_levels);
    let mut scratch = Vec::new();
    let observed = prep.statistic(&y_code, &y_rank, &mut bit, &mut scratch);
    let mut perm: Vec<usize> = (0..n).collect();
    let mut pc = vec![0usize; n];
    let mut pr = vec![0.0; n];
    let t = threshold(observed);
    let mut exceed = 0usize;
    for _ in 0..cfg.n_perm {
        perm.shuffle(&mut rng);
        for (i, &j) in perm.iter().enumerate() {
            pc[i] = y_code[j];
            pr[i] = y_rank[j];
        }
        if prep.statistic(&pc, &pr, &mut bit, &mut scratch) >= t {
            exceed += 1;
        }
    }
    Ok(finish(observed, exceed))
}
