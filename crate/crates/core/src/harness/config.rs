//! TOML experiment configuration. Unknown keys are rejected.

use std::path::{Path as FsPath, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bounds::Modulus;
use crate::drifts::{DriftSpec, Kernel, RateFn};
use crate::error::{Error, Result};
use crate::lattice::LatticeFunction;
use crate::measures::TimeGrid;
use crate::noise::{CustomDensity, InitialLaw, NoiseProcess, NoiseSpec};
use crate::solver::SolverConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    MflSweep,
    TanakaCheck,
    Stability,
    Density,
    BoundsTable,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::MflSweep => "mfl-sweep",
            ExperimentKind::TanakaCheck => "tanaka-check",
            ExperimentKind::Stability => "stability",
            ExperimentKind::Density => "density",
            ExperimentKind::BoundsTable => "bounds-table",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub horizon: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub picard_tol: Option<f64>,
    pub picard_max_iter: Option<usize>,
    pub weight_factor: Option<f64>,
    pub assignment_cap: Option<usize>,
    pub blow_up_cap: Option<f64>,
    pub distance_p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModulusConfig {
    OsgoodLog,
    Linear,
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelConfig {
    Rotation,
    Linear {
        dim: usize,
        matrix: Vec<f64>,
    },
    OsgoodRadial {
        dim: usize,
        strength: f64,
        modulus: ModulusConfig,
        slope: Option<f64>,
    },
    Power {
        dim: usize,
        lambda: f64,
        gamma: f64,
    },
    /// Lattice file in the text layout of [`LatticeFunction`].
    File {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriftConfig {
    Zero {
        dim: usize,
    },
    MeanAttraction {
        #[serde(default = "one")]
        dim: usize,
        kappa: f64,
    },
    LipschitzLinear {
        dim: usize,
        a: Vec<f64>,
        c: Vec<f64>,
        c0: Vec<f64>,
        g: f64,
        h: f64,
    },
    OsgoodRadial {
        #[serde(default = "one")]
        dim: usize,
        strength: f64,
        modulus: ModulusConfig,
        slope: Option<f64>,
        modulus_x: Option<Vec<f64>>,
        modulus_y: Option<Vec<f64>>,
    },
    MonotonePower {
        #[serde(default = "one")]
        dim: usize,
        lambda: f64,
        gamma: f64,
        #[serde(default)]
        interaction: f64,
    },
    Antisymmetric {
        kernel: KernelConfig,
        h: Option<f64>,
    },
    LocalLipGrowth {
        #[serde(default = "one")]
        dim: usize,
        c: f64,
        alpha: f64,
    },
    Convolution {
        kernel: KernelConfig,
        exponents: Option<[f64; 3]>,
        divergence_bound: Option<f64>,
    },
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialConfig {
    Point { x: Vec<f64> },
    Uniform { lo: Vec<f64>, hi: Vec<f64> },
    Gaussian { mean: Vec<f64>, variance: Vec<f64> },
    Density { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProcessConfig {
    Zero,
    Brownian { sigma: f64 },
    Fbm { hurst: f64, sigma: f64 },
    Ou { theta: f64, sigma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub initial: InitialConfig,
    pub process: ProcessConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub n: Vec<usize>,
    #[serde(default = "default_n_ref")]
    pub n_ref: usize,
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default = "default_ref_seed_a")]
    pub ref_seed_a: u64,
    #[serde(default = "default_ref_seed_b")]
    pub ref_seed_b: u64,
    /// Require the median of `d(L^N X, ref)` to decrease strictly along the schedule.
    #[serde(default)]
    pub require_decrease: bool,
}

fn default_n_ref() -> usize {
    4096
}

fn default_p() -> f64 {
    1.0
}

fn default_ref_seed_a() -> u64 {
    0x5EED_A000
}

fn default_ref_seed_b() -> u64 {
    0x5EED_B000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TanakaSection {
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilitySection {
    pub n: usize,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensitySection {
    pub n: usize,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_cell")]
    pub cell_width: f64,
    /// KDE bandwidth; Silverman's rule when absent.
    pub bandwidth: Option<f64>,
}

fn default_samples() -> usize {
    10
}

fn default_cell() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSection {
    #[serde(default = "default_moduli")]
    pub moduli: Vec<ModulusConfig>,
    #[serde(default)]
    pub kappa: Vec<f64>,
    #[serde(default)]
    pub r: Vec<f64>,
    #[serde(default)]
    pub g_l1: Vec<f64>,
    #[serde(default)]
    pub h_l1: Vec<f64>,
    #[serde(default)]
    pub y_sup: Vec<f64>,
    #[serde(default)]
    pub moment: Vec<f64>,
}

fn default_moduli() -> Vec<ModulusConfig> {
    vec![ModulusConfig::Linear, ModulusConfig::OsgoodLog]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "default_tanaka_factor")]
    pub tanaka_factor: f64,
    #[serde(default = "default_contraction")]
    pub contraction: f64,
    #[serde(default = "default_density_factor")]
    pub density_factor: f64,
}

fn default_tanaka_factor() -> f64 {
    10.0
}

fn default_contraction() -> f64 {
    0.6
}

fn default_density_factor() -> f64 {
    1.5
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            tanaka_factor: default_tanaka_factor(),
            contraction: default_contraction(),
            density_factor: default_density_factor(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub seeds: Vec<u64>,
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub solver: SolverSection,
    pub drift: Option<DriftConfig>,
    pub noise: Option<NoiseConfig>,
    pub sweep: Option<SweepSection>,
    pub tanaka: Option<TanakaSection>,
    pub stability: Option<StabilitySection>,
    pub density: Option<DensitySection>,
    pub bounds: Option<BoundsSection>,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Write input and solution ensembles next to the report.
    #[serde(default)]
    pub dump_ensembles: bool,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &FsPath) -> Result<(Self, String)> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg: ExperimentConfig = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.base_dir = path.parent().map(FsPath::to_path_buf).unwrap_or_default();
        cfg.validate()?;
        Ok((cfg, text))
    }

    fn need<'a, T>(&self, v: &'a Option<T>, what: &str) -> Result<&'a T> {
        v.as_ref()
            .ok_or_else(|| config_err(format!("{} needs a [{what}] section", self.experiment.name())))
    }

    pub fn validate(&self) -> Result<()> {
        use ExperimentKind::*;
        if self.experiment != BoundsTable {
            self.need(&self.grid, "grid")?;
            self.need(&self.drift, "drift")?;
            self.need(&self.noise, "noise")?;
            if self.seeds.is_empty() {
                return Err(config_err("seeds must be nonempty"));
            }
            self.solver_config()?.validate()?;
        }
        match self.experiment {
            MflSweep => {
                let s = self.need(&self.sweep, "sweep")?;
                if s.n.is_empty() || s.n.contains(&0) {
                    return Err(config_err("sweep.n must list positive sizes"));
                }
                if s.n.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(config_err("sweep.n must be strictly increasing"));
                }
                if s.n_ref <= *s.n.last().expect("nonempty") {
                    return Err(config_err("sweep.n_ref must exceed every N in the schedule"));
                }
                if !(s.p >= 1.0 && s.p.is_finite()) {
                    return Err(config_err("sweep.p must be a finite p >= 1"));
                }
            }
            TanakaCheck => {
                if self.need(&self.tanaka, "tanaka")?.n == 0 {
                    return Err(config_err("tanaka.n must be positive"));
                }
            }
            Stability => {
                let s = self.need(&self.stability, "stability")?;
                if s.n == 0 || !(s.delta >= 0.0 && s.delta.is_finite()) {
                    return Err(config_err("stability needs n > 0 and a finite delta >= 0"));
                }
            }
            Density => {
                let s = self.need(&self.density, "density")?;
                if s.n < 2 || s.samples == 0 || !(s.cell_width > 0.0) {
                    return Err(config_err("density needs n >= 2, samples >= 1 and cell_width > 0"));
                }
            }
            BoundsTable => {
                self.need(&self.bounds, "bounds")?;
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        let g = self.need(&self.grid, "grid")?;
        TimeGrid::new(g.horizon, g.steps)
    }

    pub fn solver_config(&self) -> Result<SolverConfig> {
        let mut c = SolverConfig::new(self.grid()?);
        let s = &self.solver;
        if let Some(v) = s.picard_tol {
            c.picard_tol = v;
        }
        if let Some(v) = s.picard_max_iter {
            c.picard_max_iter = v;
        }
        if let Some(v) = s.weight_factor {
            c.weight_factor = v;
        }
        if let Some(v) = s.assignment_cap {
            c.assignment_cap = v;
        }
        if let Some(v) = s.blow_up_cap {
            c.blow_up_cap = v;
        }
        if let Some(v) = s.distance_p {
            c.distance_p = v;
        }
        Ok(c)
    }

    fn resolve(&self, p: &FsPath) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    fn kernel(&self, k: &KernelConfig) -> Result<Kernel> {
        Ok(match k {
            KernelConfig::Rotation => Kernel::rotation(),
            KernelConfig::Linear { dim, matrix } => Kernel::linear(*dim, matrix.clone())?,
            KernelConfig::OsgoodRadial {
                dim,
                strength,
                modulus,
                slope,
            } => Kernel::OsgoodRadial {
                dim: *dim,
                strength: *strength,
                modulus: modulus_from(modulus, *slope, None, None)?,
            },
            KernelConfig::Power { dim, lambda, gamma } => Kernel::Power {
                dim: *dim,
                lambda: *lambda,
                gamma: *gamma,
            },
            KernelConfig::File { path } => Kernel::lattice(LatticeFunction::load(&self.resolve(path))?)?,
        })
    }

    pub fn drift_spec(&self) -> Result<DriftSpec> {
        let spec = match self.need(&self.drift, "drift")? {
            DriftConfig::Zero { dim } => DriftSpec::zero(*dim),
            DriftConfig::MeanAttraction { dim, kappa } => DriftSpec::mean_attraction(*dim, *kappa),
            DriftConfig::LipschitzLinear { dim, a, c, c0, g, h } => DriftSpec::LipschitzLinear {
                dim: *dim,
                a: a.clone(),
                c: c.clone(),
                c0: c0.clone(),
                g: RateFn::Constant(*g),
                h: RateFn::Constant(*h),
            },
            DriftConfig::OsgoodRadial {
                dim,
                strength,
                modulus,
                slope,
                modulus_x,
                modulus_y,
            } => DriftSpec::osgood_radial(
                *dim,
                *strength,
                modulus_from(modulus, *slope, modulus_x.clone(), modulus_y.clone())?,
            ),
            DriftConfig::MonotonePower {
                dim,
                lambda,
                gamma,
                interaction,
            } => DriftSpec::MonotonePower {
                dim: *dim,
                lambda: *lambda,
                gamma: *gamma,
                interaction: *interaction,
            },
            DriftConfig::Antisymmetric { kernel, h } => DriftSpec::AntisymmetricInteraction {
                kernel: self.kernel(kernel)?,
                h: h.map(RateFn::Constant),
            },
            DriftConfig::LocalLipGrowth { dim, c, alpha } => DriftSpec::LocalLipGrowth {
                dim: *dim,
                c: *c,
                alpha: *alpha,
            },
            DriftConfig::Convolution {
                kernel,
                exponents,
                divergence_bound,
            } => DriftSpec::ConvolutionKernel {
                kernel: self.kernel(kernel)?,
                exponents: exponents.map(|[p, q, r]| (p, q, r)),
                divergence_bound: *divergence_bound,
            },
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn noise_spec(&self) -> Result<NoiseSpec> {
        let n = self.need(&self.noise, "noise")?;
        let initial = match &n.initial {
            InitialConfig::Point { x } => InitialLaw::Point(x.clone()),
            InitialConfig::Uniform { lo, hi } => InitialLaw::Uniform {
                lo: lo.clone(),
                hi: hi.clone(),
            },
            InitialConfig::Gaussian { mean, variance } => InitialLaw::Gaussian {
                mean: mean.clone(),
                variance: variance.clone(),
            },
            InitialConfig::Density { path } => {
                InitialLaw::Density(CustomDensity::new(LatticeFunction::load(&self.resolve(path))?)?)
            }
        };
        let process = match &n.process {
            ProcessConfig::Zero => NoiseProcess::Zero,
            ProcessConfig::Brownian { sigma } => NoiseProcess::Brownian { sigma: *sigma },
            ProcessConfig::Fbm { hurst, sigma } => NoiseProcess::Fbm {
                hurst: *hurst,
                sigma: *sigma,
            },
            ProcessConfig::Ou { theta, sigma } => NoiseProcess::Ou {
                theta: *theta,
                sigma: *sigma,
            },
        };
        NoiseSpec::new(initial, process)
    }

    /// Replaces the seed list by `base, base + 1, …` of the same length.
    pub fn override_seeds(&mut self, base: u64) {
        let n = self.seeds.len().max(1);
        self.seeds = (0..n as u64).map(|i| base.wrapping_add(i)).collect();
    }
}

pub(crate) fn modulus_from(
    m: &ModulusConfig,
    slope: Option<f64>,
    xs: Option<Vec<f64>>,
    ys: Option<Vec<f64>>,
) -> Result<Modulus> {
    let out = match m {
        ModulusConfig::OsgoodLog => Modulus::OsgoodLog,
        ModulusConfig::Linear => Modulus::Linear {
            slope: slope.unwrap_or(1.0),
        },
        ModulusConfig::Sampled => Modulus::Sampled {
            xs: xs.ok_or_else(|| config_err("sampled modulus needs modulus_x"))?,
            ys: ys.ok_or_else(|| config_err("sampled modulus needs modulus_y"))?,
        },
    };
    out.validate()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SWEEP: &str = r#"
experiment = "mfl-sweep"
seeds = [1, 2, 3]

[grid]
horizon = 1.0
steps = 64

[drift]
family = "mean_attraction"
kappa = 1.0

[noise.initial]
law = "gaussian"
mean = [0.0]
variance = [1.0]

[noise.process]
kind = "brownian"
sigma = 1.0

[sweep]
n = [4, 8]
n_ref = 16
"#;

    #[test]
    fn parses_and_builds() {
        let cfg = ExperimentConfig::from_toml_str(SWEEP).unwrap();
        assert_eq!(cfg.experiment, ExperimentKind::MflSweep);
        assert_eq!(cfg.drift_spec().unwrap(), DriftSpec::mean_attraction(1, 1.0));
        assert_eq!(cfg.noise_spec().unwrap().dim(), 1);
        assert_eq!(cfg.solver_config().unwrap().picard_tol, 1e-8);
        assert_eq!(cfg.sweep.as_ref().unwrap().p, 1.0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = SWEEP.replace("kappa = 1.0", "kappa = 1.0\nkapa = 2.0");
        assert!(matches!(ExperimentConfig::from_toml_str(&bad), Err(Error::Config(_))));
        let bad = SWEEP.replace("n_ref = 16", "n_ref = 16\nextra = 1");
        assert!(ExperimentConfig::from_toml_str(&bad).is_err());
        let bad = format!("{SWEEP}\n[mystery]\nx = 1\n");
        assert!(ExperimentConfig::from_toml_str(&bad).is_err());
    }

    #[test]
    fn schedule_invariants() {
        let bad = SWEEP.replace("n = [4, 8]", "n = [8, 4]");
        assert!(ExperimentConfig::from_toml_str(&bad).is_err());
        let bad = SWEEP.replace("n_ref = 16", "n_ref = 8");
        assert!(ExperimentConfig::from_toml_str(&bad).is_err());
        let bad = SWEEP.replace("seeds = [1, 2, 3]", "seeds = []");
        assert!(ExperimentConfig::from_toml_str(&bad).is_err());
    }

    #[test]
    fn seed_override_keeps_count() {
        let mut cfg = ExperimentConfig::from_toml_str(SWEEP).unwrap();
        cfg.override_seeds(100);
        assert_eq!(cfg.seeds, vec![100, 101, 102]);
    }

    #[test]
    fn kernel_sections() {
        let text = r#"
experiment = "density"
seeds = [1]
[grid]
horizon = 1.0
steps = 8
[drift]
family = "convolution"
divergence_bound = 0.0
[drift.kernel]
kind = "rotation"
[noise.initial]
law = "uniform"
lo = [0.0, 0.0]
hi = [1.0, 1.0]
[noise.process]
kind = "zero"
[density]
n = 100
"#;
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        assert!(matches!(
            cfg.drift_spec().unwrap(),
            DriftSpec::ConvolutionKernel {
                kernel: Kernel::Linear { dim: 2, .. },
                ..
            }
        ));
    }
}
