use std::collections::HashMap;

use rayon::prelude::*;

use super::{EmpiricalMeasure, PointCloud};
use crate::error::{invalid, Result};

/// Evaluation lattice for [`kde_density_norm`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KdeOptions {
    /// Lattice step as a fraction of the bandwidth.
    pub resolution: f64,
    /// Padding around the atom bounding box, in bandwidths.
    pub padding: f64,
    /// Above this many atom-node pairs the estimate is computed by linear
    /// binning followed by a separable convolution.
    pub direct_limit: usize,
    pub max_nodes: usize,
}

impl Default for KdeOptions {
    fn default() -> Self {
        Self {
            resolution: 0.25,
            padding: 4.0,
            direct_limit: 20_000_000,
            max_nodes: 50_000_000,
        }
    }
}

/// Silverman's rule `σ̄ (4 / ((d+2) N))^{1/(d+4)}`, `σ̄` the mean coordinate
/// standard deviation.
pub fn silverman_bandwidth(cloud: &PointCloud) -> Result<f64> {
    let (n, d) = (cloud.len(), cloud.dim());
    if n < 2 {
        return Err(invalid("Silverman bandwidth needs at least two atoms"));
    }
    let mean = cloud.mean();
    let mut var = vec![0.0; d];
    for p in cloud.iter() {
        for k in 0..d {
            var[k] += (p[k] - mean[k]).powi(2);
        }
    }
    let sigma = var.iter().map(|v| (v / (n - 1) as f64).sqrt()).sum::<f64>() / d as f64;
    if !(sigma > 0.0) {
        return Err(invalid("atoms have zero spread; pass a bandwidth explicitly"));
    }
    let df = d as f64;
    Ok(sigma * (4.0 / ((df + 2.0) * n as f64)).powf(1.0 / (df + 4.0)))
}

fn point_cloud(mu: &EmpiricalMeasure) -> Result<&PointCloud> {
    match mu {
        EmpiricalMeasure::Points(c) => Ok(c),
        EmpiricalMeasure::Paths(_) => Err(invalid("density estimates need point atoms")),
    }
}

/// `L^q` norm of the Gaussian product-kernel density estimate on a lattice
/// covering the padded bounding box. `q = ∞` gives the lattice maximum.
pub fn kde_density_norm(mu: &EmpiricalMeasure, q: f64, bandwidth: f64, opts: &KdeOptions) -> Result<f64> {
    let cloud = point_cloud(mu)?;
    if !(q > 1.0) {
        return Err(invalid(format!("density norm exponent must exceed 1, got {q}")));
    }
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(invalid(format!("bandwidth must be positive, got {bandwidth}")));
    }
    let d = cloud.dim();
    let step = bandwidth * opts.resolution;
    let pad = bandwidth * opts.padding;
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for p in cloud.iter() {
        for k in 0..d {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let origin: Vec<f64> = lo.iter().map(|l| l - pad).collect();
    let extents: Vec<usize> = (0..d)
        .map(|k| ((hi[k] - lo[k] + 2.0 * pad) / step).ceil() as usize + 1)
        .collect();
    let total: usize = extents.iter().product();
    if total > opts.max_nodes {
        return Err(invalid(format!(
            "KDE lattice would need {total} nodes; raise the resolution or bandwidth"
        )));
    }

    let values = if cloud.len().saturating_mul(total) <= opts.direct_limit {
        kde_direct(cloud, &origin, &extents, step, bandwidth)
    } else {
        kde_binned(cloud, &origin, &extents, step, bandwidth)
    };

    if q.is_infinite() {
        return Ok(values.iter().cloned().fold(0.0, f64::max));
    }
    let cell = step.powi(d as i32);
    let acc: f64 = values.iter().map(|v| v.powf(q)).sum();
    Ok((acc * cell).powf(1.0 / q))
}

fn unravel(mut flat: usize, extents: &[usize], out: &mut [usize]) {
    for k in (0..extents.len()).rev() {
        out[k] = flat % extents[k];
        flat /= extents[k];
    }
}

fn kde_direct(cloud: &PointCloud, origin: &[f64], extents: &[usize], step: f64, bw: f64) -> Vec<f64> {
    let d = cloud.dim();
    let total: usize = extents.iter().product();
    let norm = ((2.0 * std::f64::consts::PI).sqrt() * bw).powi(d as i32) * cloud.len() as f64;
    (0..total)
        .into_par_iter()
        .map(|flat| {
            let mut idx = vec![0; d];
            unravel(flat, extents, &mut idx);
            let node: Vec<f64> = (0..d).map(|k| origin[k] + idx[k] as f64 * step).collect();
            let mut acc = 0.0;
            for p in cloud.iter() {
                let mut r2 = 0.0;
                for k in 0..d {
                    let z = (node[k] - p[k]) / bw;
                    r2 += z * z;
                }
                acc += (-0.5 * r2).exp();
            }
            acc / norm
        })
        .collect()
}

fn kde_binned(cloud: &PointCloud, origin: &[f64], extents: &[usize], step: f64, bw: f64) -> Vec<f64> {
    let d = cloud.dim();
    let total: usize = extents.iter().product();
    let mut strides = vec![1usize; d];
    for k in (0..d.saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * extents[k + 1];
    }
    let w_atom = 1.0 / cloud.len() as f64;
    let mut grid = vec![0.0; total];
    let mut base = vec![0usize; d];
    let mut frac = vec![0.0; d];
    for p in cloud.iter() {
        for k in 0..d {
            let u = (p[k] - origin[k]) / step;
            let i = (u.floor() as usize).min(extents[k] - 2);
            base[k] = i;
            frac[k] = u - i as f64;
        }
        for corner in 0..(1usize << d) {
            let mut w = w_atom;
            let mut flat = 0;
            for k in 0..d {
                let up = (corner >> k) & 1 == 1;
                w *= if up { frac[k] } else { 1.0 - frac[k] };
                flat += (base[k] + up as usize) * strides[k];
            }
            grid[flat] += w;
        }
    }

    let half = (4.0 * bw / step).ceil() as isize;
    let taps: Vec<f64> = (-half..=half)
        .map(|j| {
            let z = j as f64 * step / bw;
            (-0.5 * z * z).exp() / ((2.0 * std::f64::consts::PI).sqrt() * bw)
        })
        .collect();
    for k in 0..d {
        let len = extents[k];
        let stride = strides[k];
        let mut out = vec![0.0; total];
        out.par_iter_mut().enumerate().for_each(|(flat, o)| {
            let i = (flat / stride) % len;
            let line0 = flat - i * stride;
            let mut acc = 0.0;
            for (t, w) in taps.iter().enumerate() {
                let j = i as isize + t as isize - half;
                if j >= 0 && (j as usize) < len {
                    acc += w * grid[line0 + j as usize * stride];
                }
            }
            *o = acc;
        });
        grid = out;
    }
    grid
}

/// Max over occupied cells `floor(x / w)` of `(count / N) / w^d`.
pub fn histogram_sup_mass(mu: &EmpiricalMeasure, cell_width: f64) -> Result<f64> {
    let cloud = point_cloud(mu)?;
    if !(cell_width > 0.0 && cell_width.is_finite()) {
        return Err(invalid(format!("cell width must be positive, got {cell_width}")));
    }
    let mut counts: HashMap<Vec<i64>, usize> = HashMap::new();
    for p in cloud.iter() {
        let key = p.iter().map(|x| (x / cell_width).floor() as i64).collect();
        *counts.entry(key).or_default() += 1;
    }
    let max = counts.values().copied().max().unwrap_or(0);
    Ok(max as f64 / cloud.len() as f64 / cell_width.powi(cloud.dim() as i32))
}
