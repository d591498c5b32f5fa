use std::sync::Arc;

use crate::bounds::Modulus;
use crate::error::{invalid, shape, Error, Result};
use crate::lattice::LatticeFunction;

/// Interaction kernel `b: ℝ^d → ℝ^d` for drifts of the form `(b ∗ μ)(x)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Kernel {
    /// Samples with multilinear interpolation, zero outside the lattice box.
    Lattice(Arc<LatticeFunction>),
    /// `b(z) = A z`, `A` row-major `d×d`.
    Linear { dim: usize, matrix: Vec<f64> },
    /// `b(z) = s · f(|z|) · z/|z|`, `b(0) = 0`.
    OsgoodRadial { dim: usize, strength: f64, modulus: Modulus },
    /// `b(z) = −λ |z|^{γ−1} z`, `b(0) = 0`.
    Power { dim: usize, lambda: f64, gamma: f64 },
}

impl Kernel {
    pub fn lattice(lf: LatticeFunction) -> Result<Self> {
        if lf.components() != lf.dim() {
            return Err(shape("kernel lattice must map ℝ^d to ℝ^d"));
        }
        Ok(Kernel::Lattice(Arc::new(lf)))
    }

    pub fn linear(dim: usize, matrix: Vec<f64>) -> Result<Self> {
        if dim == 0 || matrix.len() != dim * dim {
            return Err(shape(format!("linear kernel needs a {dim}×{dim} matrix")));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(invalid("linear kernel entries must be finite"));
        }
        Ok(Kernel::Linear { dim, matrix })
    }

    /// Rotation generator `(−z₂, z₁)`.
    pub fn rotation() -> Self {
        Kernel::Linear {
            dim: 2,
            matrix: vec![0.0, -1.0, 1.0, 0.0],
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Kernel::Lattice(lf) => lf.dim(),
            Kernel::Linear { dim, .. } | Kernel::OsgoodRadial { dim, .. } | Kernel::Power { dim, .. } => *dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Kernel::Lattice(lf) if lf.components() != lf.dim() => {
                Err(shape("kernel lattice must map ℝ^d to ℝ^d"))
            }
            Kernel::Linear { dim, matrix } if matrix.len() != dim * dim => {
                Err(shape("linear kernel matrix has the wrong size"))
            }
            Kernel::OsgoodRadial { strength, modulus, .. } => {
                if !(strength.is_finite() && *strength >= 0.0) {
                    return Err(invalid("kernel strength must be nonnegative"));
                }
                modulus.validate()
            }
            Kernel::Power { lambda, gamma, .. } => {
                if !(*lambda > 0.0 && lambda.is_finite()) {
                    return Err(invalid("power kernel needs λ > 0"));
                }
                if !(0.0..1.0).contains(gamma) {
                    return Err(invalid("power kernel needs γ ∈ [0, 1)"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Writes `b(z)` into `out`.
    pub fn eval(&self, z: &[f64], out: &mut [f64]) {
        match self {
            Kernel::Lattice(lf) => lf.interpolate(z, out),
            Kernel::Linear { dim, matrix } => {
                for i in 0..*dim {
                    let row = &matrix[i * dim..(i + 1) * dim];
                    out[i] = row.iter().zip(z).map(|(a, b)| a * b).sum();
                }
            }
            Kernel::OsgoodRadial { strength, modulus, .. } => {
                let r = norm(z);
                if r == 0.0 {
                    out.iter_mut().for_each(|o| *o = 0.0);
                } else {
                    let s = strength * modulus.eval(r) / r;
                    out.iter_mut().zip(z).for_each(|(o, v)| *o = s * v);
                }
            }
            Kernel::Power { lambda, gamma, .. } => power(*lambda, *gamma, z, out),
        }
    }

    /// Evaluates through the canonical representative of `{z, −z}` so that
    /// `b(−z) = −b(z)` holds bit for bit.
    pub fn eval_odd(&self, z: &[f64], out: &mut [f64]) {
        match z.iter().find(|v| **v != 0.0) {
            None => out.iter_mut().for_each(|o| *o = 0.0),
            Some(v) if *v > 0.0 => self.eval(z, out),
            Some(_) => {
                let neg: Vec<f64> = z.iter().map(|v| -v).collect();
                self.eval(&neg, out);
                out.iter_mut().for_each(|o| *o = -*o);
            }
        }
    }

    /// Checks `b(−x) = −b(x)` on the sample lattice (or structurally).
    pub fn check_odd(&self, tol: f64) -> Result<()> {
        match self {
            Kernel::Lattice(lf) => {
                let d = lf.dim();
                for k in 0..d {
                    if (lf.origin()[k] + lf.upper(k)).abs() > 1e-12 * lf.spacing() {
                        return Err(Error::Declaration(
                            "odd kernel lattice must be symmetric about the origin".into(),
                        ));
                    }
                }
                let n = lf.node_count();
                let m = lf.components();
                let mut idx = vec![0; d];
                for flat in 0..n {
                    lf.index(flat, &mut idx);
                    let mirror: usize = (0..d).map(|k| (lf.extents()[k] - 1 - idx[k]) * lf.strides()[k]).sum();
                    let a = lf.value(flat);
                    let b = lf.value(mirror);
                    for c in 0..m {
                        if (a[c] + b[c]).abs() > tol {
                            return Err(Error::Declaration(format!(
                                "kernel is not odd at node {flat}: b(x) + b(−x) = {:e}",
                                a[c] + b[c]
                            )));
                        }
                    }
                }
                Ok(())
            }
            // A z, radial and power kernels are odd by construction
            _ => Ok(()),
        }
    }

    /// Declared Lipschitz constant, when the kernel has one in closed form.
    pub fn lipschitz(&self) -> Option<f64> {
        match self {
            Kernel::Linear { dim, matrix } => Some(operator_norm(*dim, matrix)),
            Kernel::OsgoodRadial {
                strength,
                modulus: Modulus::Linear { slope },
                ..
            } => Some(strength * slope),
            _ => None,
        }
    }

    /// `sup |div b|` when available in closed form.
    pub fn divergence_sup(&self) -> Option<f64> {
        match self {
            Kernel::Linear { dim, matrix } => Some((0..*dim).map(|i| matrix[i * dim + i]).sum::<f64>().abs()),
            _ => None,
        }
    }

    /// `c` with `|b(z)| ≤ c (1 + |z|)`.
    pub fn growth(&self) -> Option<f64> {
        match self {
            Kernel::Lattice(lf) => Some(lf.magnitudes().into_iter().fold(0.0, f64::max)),
            Kernel::Linear { dim, matrix } => Some(operator_norm(*dim, matrix)),
            Kernel::OsgoodRadial { strength, modulus, .. } => Some(strength * modulus.eval(1.0)),
            Kernel::Power { lambda, .. } => Some(*lambda),
        }
    }
}

fn power(lambda: f64, gamma: f64, z: &[f64], out: &mut [f64]) {
    let r = norm(z);
    if r == 0.0 {
        out.iter_mut().for_each(|o| *o = 0.0);
        return;
    }
    let s = -lambda * r.powf(gamma - 1.0);
    out.iter_mut().zip(z).for_each(|(o, v)| *o = s * v);
}

pub(crate) fn power_field(lambda: f64, gamma: f64, z: &[f64], out: &mut [f64]) {
    power(lambda, gamma, z, out)
}

pub(crate) fn norm(z: &[f64]) -> f64 {
    z.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Spectral norm by power iteration on `AᵀA`, rounded up slightly.
pub(crate) fn operator_norm(dim: usize, a: &[f64]) -> f64 {
    let frob = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    if frob == 0.0 {
        return 0.0;
    }
    let mut v: Vec<f64> = (0..dim).map(|i| 1.0 + i as f64 * 0.1).collect();
    let mut lambda = 0.0;
    for _ in 0..500 {
        let av: Vec<f64> = (0..dim).map(|i| (0..dim).map(|j| a[i * dim + j] * v[j]).sum()).collect();
        let atav: Vec<f64> = (0..dim).map(|j| (0..dim).map(|i| a[i * dim + j] * av[i]).sum()).collect();
        let n = norm(&atav);
        if n == 0.0 {
            break;
        }
        lambda = n / norm(&v);
        v = atav.iter().map(|x| x / n).collect();
    }
    (lambda.sqrt() * (1.0 + 1e-9)).min(frob)
}
