//! Drift families `B_t(x, μ)` with their declared constants.

mod approx;
mod kernel;
mod mollify;

pub use approx::{approximate_drift, cutoff, inf_convolution, lipschitz_approximate, InfConvolutionDrift};
pub use kernel::Kernel;
pub use mollify::mollify_kernel;

use std::sync::Arc;

use crate::bounds::Modulus;
use crate::error::{invalid, shape, Error, Result};
use crate::measures::{order_free_sum, EmpiricalMeasure, PointCloud, TimeGrid};

/// An `L¹_T` rate function stored by its per-step integrals.
#[derive(Debug, Clone, PartialEq)]
pub enum RateFn {
    Constant(f64),
    /// `∫_{t_k}^{t_{k+1}} |h|` for each step of the grid.
    PerStep(Vec<f64>),
}

impl RateFn {
    pub fn integrals(&self, grid: &TimeGrid) -> Result<Vec<f64>> {
        match self {
            RateFn::Constant(c) => {
                if !(c.is_finite() && *c >= 0.0) {
                    return Err(invalid(format!("rate must be finite and nonnegative, got {c}")));
                }
                Ok(grid.constant_integrals(*c))
            }
            RateFn::PerStep(v) => {
                if v.len() != grid.steps() {
                    return Err(shape(format!(
                        "rate has {} per-step integrals, grid has {} steps",
                        v.len(),
                        grid.steps()
                    )));
                }
                if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                    return Err(invalid("per-step rate integrals must be finite and nonnegative"));
                }
                Ok(v.clone())
            }
        }
    }

    pub fn l1(&self, grid: &TimeGrid) -> Result<f64> {
        Ok(self.integrals(grid)?.iter().sum())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DriftFamily {
    Zero,
    Lipschitz,
    Osgood,
    Monotone,
    Antisymmetric,
    LocalLipschitz,
    Convolutional,
    Approximated,
}

impl DriftFamily {
    pub fn name(&self) -> &'static str {
        match self {
            DriftFamily::Zero => "zero",
            DriftFamily::Lipschitz => "lipschitz",
            DriftFamily::Osgood => "osgood",
            DriftFamily::Monotone => "monotone",
            DriftFamily::Antisymmetric => "antisymmetric",
            DriftFamily::LocalLipschitz => "local_lipschitz",
            DriftFamily::Convolutional => "convolutional",
            DriftFamily::Approximated => "approximated",
        }
    }
}

/// Drift families. Interaction terms are exact atom averages, summed in
/// ascending value order so that relabelling atoms changes no bits.
#[derive(Debug, Clone, PartialEq)]
pub enum DriftSpec {
    Zero { dim: usize },
    /// `A x + C·mean(μ) + c₀` with declared Lipschitz rate `g` and growth rate `h`.
    LipschitzLinear {
        dim: usize,
        a: Vec<f64>,
        c: Vec<f64>,
        c0: Vec<f64>,
        g: RateFn,
        h: RateFn,
    },
    /// `κ (mean(μ) − x)`.
    MeanAttraction { dim: usize, kappa: f64 },
    /// `(b ∗ μ)(x)` with `|b(x) − b(y)| ≤ h f(|x − y|)`.
    OsgoodConvolution { kernel: Kernel, modulus: Modulus, h: RateFn },
    /// `−λ|x|^{γ−1}x + κ (mean(μ) − x)`.
    MonotonePower {
        dim: usize,
        lambda: f64,
        gamma: f64,
        interaction: f64,
    },
    /// `(b ∗ μ)(x)` with odd `b`, evaluated through [`Kernel::eval_odd`].
    /// `h` is the one-sided constant `⟨x−y, b(x)−b(y)⟩ ≤ 2h |x−y|²`.
    AntisymmetricInteraction { kernel: Kernel, h: Option<RateFn> },
    /// `(1/N) Σ_j b(x, x_j)` with `b_k(x, x') = c sin(z_k |z|^α)`, `z = x' − x`.
    LocalLipGrowth { dim: usize, c: f64, alpha: f64 },
    /// `(b ∗ μ)(x)` for a Sobolev-type kernel with declared exponents `(p, q, r)`
    /// and `sup |div b|`.
    ConvolutionKernel {
        kernel: Kernel,
        exponents: Option<(f64, f64, f64)>,
        divergence_bound: Option<f64>,
    },
    /// Output of [`approximate_drift`].
    Approximated(Arc<InfConvolutionDrift>),
}

impl DriftSpec {
    pub fn zero(dim: usize) -> Self {
        DriftSpec::Zero { dim }
    }

    pub fn mean_attraction(dim: usize, kappa: f64) -> Self {
        DriftSpec::MeanAttraction { dim, kappa }
    }

    /// Radial Osgood kernel `s f(|z|) ẑ` with its declared `h`: `2s` on the
    /// line, `3s` in higher dimension (from subadditivity and concavity of `f`).
    pub fn osgood_radial(dim: usize, strength: f64, modulus: Modulus) -> Self {
        let factor = if dim == 1 { 2.0 } else { 3.0 };
        DriftSpec::OsgoodConvolution {
            kernel: Kernel::OsgoodRadial {
                dim,
                strength,
                modulus: modulus.clone(),
            },
            modulus,
            h: RateFn::Constant(factor * strength),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DriftSpec::Zero { dim }
            | DriftSpec::LipschitzLinear { dim, .. }
            | DriftSpec::MeanAttraction { dim, .. }
            | DriftSpec::MonotonePower { dim, .. }
            | DriftSpec::LocalLipGrowth { dim, .. } => *dim,
            DriftSpec::OsgoodConvolution { kernel, .. }
            | DriftSpec::AntisymmetricInteraction { kernel, .. }
            | DriftSpec::ConvolutionKernel { kernel, .. } => kernel.dim(),
            DriftSpec::Approximated(a) => a.dim(),
        }
    }

    pub fn family(&self) -> DriftFamily {
        match self {
            DriftSpec::Zero { .. } => DriftFamily::Zero,
            DriftSpec::LipschitzLinear { .. } | DriftSpec::MeanAttraction { .. } => DriftFamily::Lipschitz,
            DriftSpec::OsgoodConvolution { .. } => DriftFamily::Osgood,
            DriftSpec::MonotonePower { .. } => DriftFamily::Monotone,
            DriftSpec::AntisymmetricInteraction { .. } => DriftFamily::Antisymmetric,
            DriftSpec::LocalLipGrowth { .. } => DriftFamily::LocalLipschitz,
            DriftSpec::ConvolutionKernel { .. } => DriftFamily::Convolutional,
            DriftSpec::Approximated(_) => DriftFamily::Approximated,
        }
    }

    /// True for drifts whose increments need step control near the origin.
    pub fn singular_at_origin(&self) -> bool {
        matches!(self, DriftSpec::MonotonePower { gamma, .. } if *gamma < 1.0)
    }

    /// Declaration-time checks on shapes and constants.
    pub fn validate(&self) -> Result<()> {
        let finite_nonneg = |v: f64, what: &str| -> Result<()> {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::Declaration(format!("{what} must be finite and nonnegative, got {v}")))
            }
        };
        if self.dim() == 0 {
            return Err(Error::Declaration("drift dimension must be positive".into()));
        }
        match self {
            DriftSpec::Zero { .. } => Ok(()),
            DriftSpec::LipschitzLinear { dim, a, c, c0, .. } => {
                if a.len() != dim * dim || c.len() != dim * dim || c0.len() != *dim {
                    return Err(shape("linear drift coefficients have the wrong size"));
                }
                if a.iter().chain(c).chain(c0).any(|v| !v.is_finite()) {
                    return Err(Error::Declaration("linear drift coefficients must be finite".into()));
                }
                Ok(())
            }
            DriftSpec::MeanAttraction { kappa, .. } => finite_nonneg(*kappa, "κ"),
            DriftSpec::OsgoodConvolution { kernel, modulus, .. } => {
                kernel.validate()?;
                modulus.validate()
            }
            DriftSpec::MonotonePower {
                lambda,
                gamma,
                interaction,
                ..
            } => {
                if !(*lambda > 0.0 && lambda.is_finite()) {
                    return Err(Error::Declaration(format!("λ must be positive, got {lambda}")));
                }
                if !(0.0..1.0).contains(gamma) {
                    return Err(Error::Declaration(format!("γ must lie in [0, 1), got {gamma}")));
                }
                finite_nonneg(*interaction, "interaction strength")
            }
            DriftSpec::AntisymmetricInteraction { kernel, .. } => {
                kernel.validate()?;
                kernel.check_odd(1e-12)
            }
            DriftSpec::LocalLipGrowth { c, alpha, .. } => {
                finite_nonneg(*c, "c")?;
                if !(*alpha > 0.0 && alpha.is_finite()) {
                    return Err(Error::Declaration(format!("α must be positive, got {alpha}")));
                }
                Ok(())
            }
            DriftSpec::ConvolutionKernel {
                kernel,
                exponents,
                divergence_bound,
            } => {
                kernel.validate()?;
                if let Some((p, q, r)) = exponents {
                    if !(*p >= 1.0 && *q >= 1.0 && *r >= 1.0) {
                        return Err(Error::Declaration("exponents (p, q, r) must be >= 1".into()));
                    }
                }
                if let Some(d) = divergence_bound {
                    finite_nonneg(*d, "divergence bound")?;
                    if let Some(exact) = kernel.divergence_sup() {
                        if exact > d * (1.0 + 1e-12) + 1e-12 {
                            return Err(Error::Declaration(format!(
                                "declared divergence bound {d} is below the kernel's {exact}"
                            )));
                        }
                    }
                }
                Ok(())
            }
            DriftSpec::Approximated(_) => Ok(()),
        }
    }

    /// Precomputes the per-measure quantities (mean, cloud distances) used by
    /// every evaluation against `mu`.
    pub fn prepare<'a>(&self, mu: &'a PointCloud) -> Result<PreparedMeasure<'a>> {
        if mu.dim() != self.dim() {
            return Err(shape(format!(
                "measure lives in ℝ^{}, drift in ℝ^{}",
                mu.dim(),
                self.dim()
            )));
        }
        let needs_mean = matches!(
            self,
            DriftSpec::LipschitzLinear { .. } | DriftSpec::MeanAttraction { .. } | DriftSpec::MonotonePower { .. }
        ) || self.linear_kernel().is_some();
        let mean = if needs_mean { mu.mean() } else { Vec::new() };
        let cloud_distances = match self {
            DriftSpec::Approximated(a) => Some(a.measure_distances(mu)?),
            _ => None,
        };
        Ok(PreparedMeasure {
            cloud: mu,
            mean,
            cloud_distances,
        })
    }

    fn linear_kernel(&self) -> Option<(usize, &[f64])> {
        match self {
            DriftSpec::OsgoodConvolution {
                kernel: Kernel::Linear { dim, matrix },
                ..
            }
            | DriftSpec::AntisymmetricInteraction {
                kernel: Kernel::Linear { dim, matrix },
                ..
            }
            | DriftSpec::ConvolutionKernel {
                kernel: Kernel::Linear { dim, matrix },
                ..
            } => Some((*dim, matrix)),
            _ => None,
        }
    }

    /// `B_t(x, μ)` written into `out`; `prep` must come from [`Self::prepare`].
    pub fn eval_into(&self, _t: f64, x: &[f64], prep: &PreparedMeasure<'_>, out: &mut [f64]) {
        let d = self.dim();
        let mu = prep.cloud;
        match self {
            DriftSpec::Zero { .. } => out.iter_mut().for_each(|o| *o = 0.0),
            DriftSpec::LipschitzLinear { a, c, c0, .. } => {
                for i in 0..d {
                    let mut acc = c0[i];
                    for j in 0..d {
                        acc += a[i * d + j] * x[j] + c[i * d + j] * prep.mean[j];
                    }
                    out[i] = acc;
                }
            }
            DriftSpec::MeanAttraction { kappa, .. } => {
                for i in 0..d {
                    out[i] = kappa * (prep.mean[i] - x[i]);
                }
            }
            DriftSpec::MonotonePower {
                lambda,
                gamma,
                interaction,
                ..
            } => {
                kernel::power_field(*lambda, *gamma, x, out);
                if *interaction != 0.0 {
                    for i in 0..d {
                        out[i] += interaction * (prep.mean[i] - x[i]);
                    }
                }
            }
            DriftSpec::LocalLipGrowth { c, alpha, .. } => {
                let n = mu.len();
                let mut terms = vec![0.0; d * n];
                let mut z = vec![0.0; d];
                for (j, p) in mu.iter().enumerate() {
                    for k in 0..d {
                        z[k] = p[k] - x[k];
                    }
                    let r = kernel::norm(&z).powf(*alpha);
                    for k in 0..d {
                        terms[k * n + j] = (z[k] * r).sin();
                    }
                }
                for (k, col) in terms.chunks_exact_mut(n).enumerate() {
                    out[k] = c * order_free_sum(col) / n as f64;
                }
            }
            DriftSpec::OsgoodConvolution { kernel, .. }
            | DriftSpec::AntisymmetricInteraction { kernel, .. }
            | DriftSpec::ConvolutionKernel { kernel, .. } => {
                if let Kernel::Linear { matrix, .. } = kernel {
                    // A ∗ μ (x) = A (x − mean)
                    for i in 0..d {
                        out[i] = (0..d).map(|j| matrix[i * d + j] * (x[j] - prep.mean[j])).sum();
                    }
                    return;
                }
                let odd = matches!(self, DriftSpec::AntisymmetricInteraction { .. });
                let n = mu.len();
                let mut terms = vec![0.0; d * n];
                let mut z = vec![0.0; d];
                let mut b = vec![0.0; d];
                for (j, p) in mu.iter().enumerate() {
                    for k in 0..d {
                        z[k] = x[k] - p[k];
                    }
                    if odd {
                        kernel.eval_odd(&z, &mut b);
                    } else {
                        kernel.eval(&z, &mut b);
                    }
                    for k in 0..d {
                        terms[k * n + j] = b[k];
                    }
                }
                for (k, col) in terms.chunks_exact_mut(n).enumerate() {
                    out[k] = order_free_sum(col) / n as f64;
                }
            }
            DriftSpec::Approximated(a) => a.eval_into(x, prep, out),
        }
    }
}

/// A measure together with the quantities every evaluation against it needs.
#[derive(Debug, Clone)]
pub struct PreparedMeasure<'a> {
    pub(crate) cloud: &'a PointCloud,
    pub(crate) mean: Vec<f64>,
    pub(crate) cloud_distances: Option<(Vec<f64>, f64)>,
}

impl PreparedMeasure<'_> {
    pub fn cloud(&self) -> &PointCloud {
        self.cloud
    }
}

/// `B_t(x, μ)`; non-finite results are reported as errors.
pub fn eval_drift(spec: &DriftSpec, t: f64, x: &[f64], mu: &EmpiricalMeasure) -> Result<Vec<f64>> {
    let cloud = match mu {
        EmpiricalMeasure::Points(c) => c,
        EmpiricalMeasure::Paths(_) => return Err(invalid("drifts act on point measures")),
    };
    if x.len() != spec.dim() {
        return Err(shape("evaluation point has the wrong dimension"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(invalid("evaluation point must be finite"));
    }
    let prep = spec.prepare(cloud)?;
    let mut out = vec![0.0; spec.dim()];
    spec.eval_into(t, x, &prep, &mut out);
    if out.iter().any(|v| !v.is_finite()) {
        return Err(invalid("drift evaluated to a non-finite value"));
    }
    Ok(out)
}

/// Declared constants of a drift on a given grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftConstants {
    pub family: DriftFamily,
    /// Lipschitz rate `g` (per-step integrals).
    pub g: Option<Vec<f64>>,
    /// Family rate `h`: linear growth for Lipschitz and locally Lipschitz
    /// drifts, the modulus weight for Osgood drifts, the one-sided constant for
    /// monotone and antisymmetric drifts.
    pub h: Option<Vec<f64>>,
    /// Linear growth rate, `|B(x, μ)| ≤ growth (1 + |x| + ‖μ‖₁)`.
    pub growth: Option<Vec<f64>>,
    pub modulus: Option<Modulus>,
    pub alpha: Option<f64>,
    pub exponents: Option<(f64, f64, f64)>,
    /// `‖div b‖_{L¹_T L^∞_x}`.
    pub divergence_l1: Option<f64>,
}

impl DriftConstants {
    pub fn g_l1(&self) -> Option<f64> {
        self.g.as_ref().map(|v| v.iter().sum())
    }

    pub fn h_l1(&self) -> Option<f64> {
        self.h.as_ref().map(|v| v.iter().sum())
    }

    pub fn growth_l1(&self) -> Option<f64> {
        self.growth.as_ref().map(|v| v.iter().sum())
    }

    pub fn require_g(&self) -> Result<Vec<f64>> {
        self.g.clone().ok_or(Error::MissingConstant {
            family: self.family.name(),
            constant: "g",
        })
    }

    pub fn require_h(&self) -> Result<Vec<f64>> {
        self.h.clone().ok_or(Error::MissingConstant {
            family: self.family.name(),
            constant: "h",
        })
    }

    pub fn require_growth(&self) -> Result<Vec<f64>> {
        self.growth.clone().ok_or(Error::MissingConstant {
            family: self.family.name(),
            constant: "growth",
        })
    }

    pub fn require_divergence(&self) -> Result<f64> {
        self.divergence_l1.ok_or(Error::MissingConstant {
            family: self.family.name(),
            constant: "divergence bound",
        })
    }
}

/// The declared constants of `spec` as per-step integrals on `grid`.
pub fn drift_constants(spec: &DriftSpec, grid: &TimeGrid) -> Result<DriftConstants> {
    spec.validate()?;
    let rate = |c: f64| Some(grid.constant_integrals(c));
    let mut k = DriftConstants {
        family: spec.family(),
        g: None,
        h: None,
        growth: None,
        modulus: None,
        alpha: None,
        exponents: None,
        divergence_l1: None,
    };
    match spec {
        DriftSpec::Zero { .. } => {
            k.g = rate(0.0);
            k.h = rate(0.0);
            k.growth = rate(0.0);
            k.divergence_l1 = Some(0.0);
        }
        DriftSpec::LipschitzLinear { g, h, .. } => {
            k.g = Some(g.integrals(grid)?);
            k.h = Some(h.integrals(grid)?);
            k.growth = k.h.clone();
        }
        DriftSpec::MeanAttraction { kappa, .. } => {
            k.g = rate(*kappa);
            k.h = rate(*kappa);
            k.growth = rate(*kappa);
        }
        DriftSpec::OsgoodConvolution { kernel, modulus, h } => {
            let hs = h.integrals(grid)?;
            if let Modulus::Linear { slope } = modulus {
                k.g = Some(hs.iter().map(|v| v * slope).collect());
            }
            k.h = Some(hs);
            k.growth = kernel.growth().and_then(rate);
            k.modulus = Some(modulus.clone());
        }
        DriftSpec::MonotonePower {
            lambda, interaction, ..
        } => {
            k.h = rate(*interaction);
            k.growth = rate(lambda + interaction);
        }
        DriftSpec::AntisymmetricInteraction { kernel, h } => {
            k.h = match h {
                Some(h) => Some(h.integrals(grid)?),
                None => match kernel {
                    Kernel::Power { .. } | Kernel::OsgoodRadial { .. } => None,
                    Kernel::Linear { dim, matrix } => rate(symmetric_top(*dim, matrix).max(0.0) / 2.0),
                    Kernel::Lattice(_) => None,
                },
            };
            if let Kernel::Power { .. } = kernel {
                // −∇ of the convex even potential λ|z|^{γ+1}/(γ+1)
                k.h = k.h.or_else(|| rate(0.0));
            }
            k.g = kernel.lipschitz().and_then(rate);
            k.growth = kernel.growth().and_then(rate);
        }
        DriftSpec::LocalLipGrowth { dim, c, alpha } => {
            // |∂_z sin(z_k|z|^α)| ≤ (1 + α)|z|^α and |z|^α ≤ 2^{max(α−1,0)}(|x|^α + |x'|^α)
            let lip = c * (1.0 + alpha) * 2f64.powf((alpha - 1.0).max(0.0));
            k.g = rate(lip);
            k.h = rate(c * (*dim as f64).sqrt());
            k.growth = k.h.clone();
            k.alpha = Some(*alpha);
        }
        DriftSpec::ConvolutionKernel {
            kernel,
            exponents,
            divergence_bound,
        } => {
            k.g = kernel.lipschitz().and_then(rate);
            k.growth = kernel.growth().and_then(rate);
            k.exponents = *exponents;
            k.divergence_l1 = divergence_bound.map(|d| d * grid.horizon());
        }
        DriftSpec::Approximated(a) => {
            k.g = rate(a.lipschitz_constant());
            k.h = Some(a.growth().integrals(grid)?);
            k.growth = k.h.clone();
        }
    }
    Ok(k)
}

fn symmetric_top(dim: usize, a: &[f64]) -> f64 {
    // largest eigenvalue of (A + Aᵀ)/2 via shifted power iteration
    let sym: Vec<f64> = (0..dim * dim)
        .map(|ij| {
            let (i, j) = (ij / dim, ij % dim);
            0.5 * (a[i * dim + j] + a[j * dim + i])
        })
        .collect();
    let shift = kernel::operator_norm(dim, &sym);
    let shifted: Vec<f64> = (0..dim * dim)
        .map(|ij| sym[ij] + if ij / dim == ij % dim { shift } else { 0.0 })
        .collect();
    let mut v: Vec<f64> = (0..dim).map(|i| 1.0 + 0.1 * i as f64).collect();
    let mut lambda = 0.0;
    for _ in 0..500 {
        let w: Vec<f64> = (0..dim).map(|i| (0..dim).map(|j| shifted[i * dim + j] * v[j]).sum()).collect();
        let n = kernel::norm(&w);
        if n == 0.0 {
            break;
        }
        lambda = n / kernel::norm(&v);
        v = w.iter().map(|x| x / n).collect();
    }
    lambda - shift
}
