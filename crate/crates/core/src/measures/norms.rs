use super::{euclid, euclid_dist, EmpiricalMeasure, Path};
use crate::error::{invalid, Result};

/// Max over grid nodes of the Euclidean norm.
pub fn sup_norm(path: &Path) -> f64 {
    path.values()
        .chunks_exact(path.dim())
        .map(euclid)
        .fold(0.0, f64::max)
}

/// `((1/N) Σ ‖atom_i‖^p)^{1/p}`; path atoms are measured in sup-norm.
pub fn moment_norm(mu: &EmpiricalMeasure, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(invalid(format!("moment exponent must be >= 1, got {p}")));
    }
    let n = mu.len();
    let mut acc = 0.0;
    for i in 0..n {
        acc += mu.atom_norm(i).powf(p);
    }
    Ok((acc / n as f64).powf(1.0 / p))
}

/// Window maxima `F[k] = max_j Σ_{i=j}^{j+k-1} h_i` for `k = 0..=M`.
///
/// `F[k]` is the grid version of `f_h(k·dt)`.
pub fn modulus_table(h_norms: &[f64]) -> Vec<f64> {
    let m = h_norms.len();
    let mut prefix = Vec::with_capacity(m + 1);
    prefix.push(0.0);
    for (i, h) in h_norms.iter().enumerate() {
        prefix.push(prefix[i] + h);
    }
    let mut table = vec![0.0; m + 1];
    for (k, slot) in table.iter_mut().enumerate().skip(1) {
        let mut best = 0.0f64;
        for j in 0..=m - k {
            best = best.max(prefix[j + k] - prefix[j]);
        }
        *slot = best;
    }
    table
}

/// Grid modulus `f_h(δ)`: largest mass of `h` over a node-aligned window of
/// width at most `δ`.
pub fn h_modulus(dt: f64, h_norms: &[f64], delta: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(invalid(format!("delta must be positive, got {delta}")));
    }
    if !(dt > 0.0) {
        return Err(invalid("step size must be positive"));
    }
    check_rates(h_norms)?;
    let k = window_steps(dt, delta).min(h_norms.len());
    Ok(modulus_table(h_norms)[k])
}

pub(crate) fn window_steps(dt: f64, delta: f64) -> usize {
    // widths k·dt that equal delta up to rounding count as inside
    (delta / dt * (1.0 + 1e-9)).floor() as usize
}

fn check_rates(h_norms: &[f64]) -> Result<()> {
    if let Some(i) = h_norms.iter().position(|h| !(h.is_finite() && *h >= 0.0)) {
        return Err(invalid(format!("rate integral {i} is negative or non-finite")));
    }
    Ok(())
}

/// Result of [`h_seminorm`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Seminorm {
    Finite(f64),
    /// A nonzero increment between nodes `from` and `to` over a window where
    /// `h` carries no mass.
    Unbounded { from: usize, to: usize },
}

impl Seminorm {
    pub fn value(&self) -> f64 {
        match self {
            Seminorm::Finite(v) => *v,
            Seminorm::Unbounded { .. } => f64::INFINITY,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, Seminorm::Finite(_))
    }
}

/// `⟦x⟧_h = sup_{s≠t} |x_t − x_s| / f_h(|t−s|)` over grid nodes.
pub fn h_seminorm(path: &Path, h_norms: &[f64]) -> Result<Seminorm> {
    let m = path.grid().steps();
    if h_norms.len() != m {
        return Err(crate::error::shape(format!(
            "expected {m} per-step integrals, got {}",
            h_norms.len()
        )));
    }
    check_rates(h_norms)?;
    let table = modulus_table(h_norms);
    let mut best = 0.0f64;
    for s in 0..m {
        let xs = path.point(s);
        for t in s + 1..=m {
            let inc = euclid_dist(path.point(t), xs);
            if inc == 0.0 {
                continue;
            }
            let f = table[t - s];
            if f == 0.0 {
                return Ok(Seminorm::Unbounded { from: s, to: t });
            }
            best = best.max(inc / f);
        }
    }
    Ok(Seminorm::Finite(best))
}
