//! Discrete Hardy–Littlewood maximal functions on lattices and the pointwise
//! inequalities built on them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{invalid, shape, Error, Result};
use crate::lattice::LatticeFunction;
use crate::measures::{
    euclid_dist, kde_density_norm, silverman_bandwidth, wasserstein, EmpiricalMeasure, KdeOptions, PointCloud,
};

/// `spacing · {1, 2, 4, …}` up to half the smallest lattice extent.
pub fn dyadic_radii(b: &LatticeFunction) -> Vec<f64> {
    let h = b.spacing();
    let half = (0..b.dim())
        .map(|k| 0.5 * (b.extents()[k] - 1) as f64 * h)
        .fold(f64::INFINITY, f64::min);
    let mut out = Vec::new();
    let mut r = h;
    while r <= half * (1.0 + 1e-12) {
        out.push(r);
        r *= 2.0;
    }
    out
}

/// `max(|b(x)|, max_{r ∈ radii} avg_{B(x,r)} |b|)` where the average runs over
/// all lattice points of the ball, those outside the box counting as zero.
pub fn maximal_function(b: &LatticeFunction, radii: &[f64]) -> Result<LatticeFunction> {
    maximal_of_magnitudes(b, &b.magnitudes(), radii)
}

fn maximal_of_magnitudes(b: &LatticeFunction, mags: &[f64], radii: &[f64]) -> Result<LatticeFunction> {
    if radii.is_empty() {
        return Err(invalid("maximal function needs at least one radius"));
    }
    if radii.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
        return Err(invalid("radii must be positive and finite"));
    }
    let out = if b.dim() == 1 {
        maximal_1d(b.spacing(), mags, radii)
    } else {
        maximal_direct(b, mags, radii)
    };
    b.with_samples(1, out)
}

fn maximal_1d(h: f64, mags: &[f64], radii: &[f64]) -> Vec<f64> {
    let n = mags.len();
    let mut prefix = vec![0.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + mags[i];
    }
    let reaches: Vec<usize> = radii.iter().map(|r| (r / h + 1e-9).floor() as usize).collect();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut best = mags[i];
            for &m in &reaches {
                let lo = i.saturating_sub(m);
                let hi = (i + m).min(n - 1);
                let avg = (prefix[hi + 1] - prefix[lo]) / (2 * m + 1) as f64;
                best = best.max(avg);
            }
            best
        })
        .collect()
}

fn ball_offsets(d: usize, reach: f64) -> Vec<Vec<isize>> {
    let m = reach.floor() as isize;
    let mut out = Vec::new();
    let mut cur = vec![-m; d];
    loop {
        let r2: f64 = cur.iter().map(|v| (*v as f64).powi(2)).sum();
        if r2 <= reach * reach * (1.0 + 1e-12) {
            out.push(cur.clone());
        }
        let mut k = 0;
        loop {
            if k == d {
                return out;
            }
            cur[k] += 1;
            if cur[k] <= m {
                break;
            }
            cur[k] = -m;
            k += 1;
        }
    }
}

fn maximal_direct(b: &LatticeFunction, mags: &[f64], radii: &[f64]) -> Vec<f64> {
    let d = b.dim();
    let balls: Vec<Vec<Vec<isize>>> = radii.iter().map(|r| ball_offsets(d, r / b.spacing())).collect();
    let extents = b.extents();
    let strides = b.strides();
    (0..b.node_count())
        .into_par_iter()
        .map(|flat| {
            let mut idx = vec![0usize; d];
            b.index(flat, &mut idx);
            let mut best = mags[flat];
            for ball in &balls {
                let mut acc = 0.0;
                'offsets: for off in ball {
                    let mut f = 0usize;
                    for k in 0..d {
                        let j = idx[k] as isize + off[k];
                        if j < 0 || j >= extents[k] as isize {
                            continue 'offsets;
                        }
                        f += j as usize * strides[k];
                    }
                    acc += mags[f];
                }
                best = best.max(acc / ball.len() as f64);
            }
            best
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairReport {
    /// Largest sampled ratio.
    pub worst_ratio: f64,
    /// Node indices attaining it.
    pub pair: Option<(usize, usize)>,
    /// Pairs that entered the maximum.
    pub pairs_used: usize,
}

fn sample_pairs(n: usize, count: usize, seed: u64) -> Vec<(usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .filter_map(|_| {
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n);
            (i != j).then_some((i, j))
        })
        .collect()
}

fn node_point(b: &LatticeFunction, flat: usize) -> Vec<f64> {
    let mut x = vec![0.0; b.dim()];
    b.node_coords(flat, &mut x);
    x
}

/// Worst sampled `|b(x) − b(y)| / (|x − y| (M Db(x) + M Db(y)))`, with the
/// maximal function over [`dyadic_radii`].
pub fn hajlasz_check(b: &LatticeFunction, pairs: usize, seed: u64) -> Result<PairReport> {
    if b.node_count() < 2 {
        return Err(shape("lattice has fewer than two nodes"));
    }
    let mdb = maximal_of_magnitudes(b, &b.jacobian_norm(), &dyadic_radii(b))?;
    let mdb = mdb.samples();
    let mut report = PairReport {
        worst_ratio: 0.0,
        pair: None,
        pairs_used: 0,
    };
    for (i, j) in sample_pairs(b.node_count(), pairs, seed) {
        let den = euclid_dist(&node_point(b, i), &node_point(b, j)) * (mdb[i] + mdb[j]);
        if den == 0.0 {
            continue;
        }
        let ratio = euclid_dist(b.value(i), b.value(j)) / den;
        report.pairs_used += 1;
        if ratio > report.worst_ratio || report.pair.is_none() {
            report.worst_ratio = ratio;
            report.pair = Some((i, j));
        }
    }
    Ok(report)
}

/// `g = (M |Db|^{p̃})^{1/p̃}` with the constant set to 1.
pub fn onesided_envelope(b: &LatticeFunction, p_tilde: f64) -> Result<LatticeFunction> {
    if !(p_tilde > b.dim() as f64 && p_tilde.is_finite()) {
        return Err(invalid(format!(
            "envelope exponent must exceed the dimension {}, got {p_tilde}",
            b.dim()
        )));
    }
    let powered: Vec<f64> = b.jacobian_norm().iter().map(|v| v.powf(p_tilde)).collect();
    let m = maximal_of_magnitudes(b, &powered, &dyadic_radii(b))?;
    let g = m.samples().iter().map(|v| v.powf(1.0 / p_tilde)).collect();
    m.with_samples(1, g)
}

/// Smallest `c` with `|b(x) − b(y)| ≤ c g(x) |x − y|` over sampled pairs.
pub fn onesided_constant(b: &LatticeFunction, g: &LatticeFunction, pairs: usize, seed: u64) -> Result<PairReport> {
    if g.node_count() != b.node_count() || g.components() != 1 {
        return Err(shape("envelope must be scalar on the same lattice"));
    }
    let mut report = PairReport {
        worst_ratio: 0.0,
        pair: None,
        pairs_used: 0,
    };
    for (i, j) in sample_pairs(b.node_count(), pairs, seed) {
        let num = euclid_dist(b.value(i), b.value(j));
        let den = g.samples()[i] * euclid_dist(&node_point(b, i), &node_point(b, j));
        let ratio = if num == 0.0 {
            0.0
        } else if den == 0.0 {
            f64::INFINITY
        } else {
            num / den
        };
        report.pairs_used += 1;
        if ratio > report.worst_ratio || report.pair.is_none() {
            report.worst_ratio = ratio;
            report.pair = Some((i, j));
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContrastReport {
    /// `max_x |b∗μ(x) − b∗ν(x)|` over the sampled nodes.
    pub lhs: f64,
    /// `‖b‖_{L^p} + ‖Db‖_{L^p}` on the lattice.
    pub sobolev_norm: f64,
    /// `‖μ‖_{L^q}` and `‖ν‖_{L^q}` of the kernel density estimates.
    pub density_mu: f64,
    pub density_nu: f64,
    /// `d_{r'}(μ, ν)`, `r' = r/(r−1)`.
    pub wasserstein: f64,
    pub rhs: f64,
    pub ratio: f64,
}

/// Largest number of lattice nodes at which the convolutions are compared.
pub const CONTRAST_NODES: usize = 4096;

fn lattice_lp(values: &[f64], cell: f64, p: f64) -> f64 {
    (values.iter().map(|v| v.abs().powf(p)).sum::<f64>() * cell).powf(1.0 / p)
}

fn convolve_at(b: &LatticeFunction, cloud: &PointCloud, x: &[f64], out: &mut [f64]) {
    let m = b.components();
    let mut z = vec![0.0; x.len()];
    let mut v = vec![0.0; m];
    out.iter_mut().for_each(|o| *o = 0.0);
    for p in cloud.iter() {
        for k in 0..x.len() {
            z[k] = x[k] - p[k];
        }
        b.interpolate(&z, &mut v);
        for c in 0..m {
            out[c] += v[c];
        }
    }
    let n = cloud.len() as f64;
    out.iter_mut().for_each(|o| *o /= n);
}

/// Measured pieces of `‖b∗(μ−ν)‖_∞ ≤ C ‖b‖_{W^{1,p}} (‖μ‖^{1/r}_{L^q} + ‖ν‖^{1/r}_{L^q}) d_{r'}(μ, ν)`.
pub fn convolution_contrast(
    b: &LatticeFunction,
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    exponents: (f64, f64, f64),
) -> Result<ContrastReport> {
    let (p, q, r) = exponents;
    if !(p >= 1.0 && q > 1.0 && r > 1.0) || !(p.is_finite() && q.is_finite() && r.is_finite()) {
        return Err(invalid("exponents need p >= 1, q > 1, r > 1, all finite"));
    }
    if r / p + 1.0 / q > 1.0 + 1e-12 {
        return Err(Error::Declaration(format!(
            "exponent relation r/p + 1/q <= 1 violated: {}",
            r / p + 1.0 / q
        )));
    }
    let (EmpiricalMeasure::Points(a), EmpiricalMeasure::Points(c)) = (mu, nu) else {
        return Err(invalid("convolution contrast needs point measures"));
    };
    if a.dim() != b.dim() || c.dim() != b.dim() {
        return Err(shape("measures and kernel live in different dimensions"));
    }

    let n = b.node_count();
    let stride = n.div_ceil(CONTRAST_NODES);
    let m = b.components();
    let lhs = (0..n)
        .into_par_iter()
        .step_by(stride)
        .map(|flat| {
            let x = node_point(b, flat);
            let (mut u, mut v) = (vec![0.0; m], vec![0.0; m]);
            convolve_at(b, a, &x, &mut u);
            convolve_at(b, c, &x, &mut v);
            euclid_dist(&u, &v)
        })
        .reduce(|| 0.0, f64::max);

    let cell = b.spacing().powi(b.dim() as i32);
    let sobolev_norm = lattice_lp(&b.magnitudes(), cell, p) + lattice_lp(&b.jacobian_norm(), cell, p);
    let opts = KdeOptions::default();
    let density_mu = kde_density_norm(mu, q, silverman_bandwidth(a)?, &opts)?;
    let density_nu = kde_density_norm(nu, q, silverman_bandwidth(c)?, &opts)?;
    let r_conj = r / (r - 1.0);
    let w = wasserstein(mu, nu, r_conj)?;
    let rhs = sobolev_norm * (density_mu.powf(1.0 / r) + density_nu.powf(1.0 / r)) * w;
    let ratio = if lhs == 0.0 {
        0.0
    } else if rhs == 0.0 {
        f64::INFINITY
    } else {
        lhs / rhs
    };
    Ok(ContrastReport {
        lhs,
        sobolev_norm,
        density_mu,
        density_nu,
        wasserstein: w,
        rhs,
        ratio,
    })
}
