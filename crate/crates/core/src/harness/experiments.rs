use std::time::Instant;

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::config::{modulus_from, ExperimentConfig, ExperimentKind};
use super::report::{num, opt, Check, ExperimentReport};
use crate::bounds::{
    apriori_report, bihari_m, lipschitz_stability_bound, lipschitz_stability_report, osgood_stability_bound,
    BoundReport,
};
use crate::drifts::{drift_constants, DriftConstants, DriftFamily, DriftSpec};
use crate::error::{Error, Result};
use crate::measures::{histogram_sup_mass, kde_density_norm, silverman_bandwidth, wasserstein_with_cap};
use crate::measures::{EmpiricalMeasure, Ensemble, KdeOptions, Path};
use crate::noise::{particle_rng, sample_paths};
use crate::solver::{solve_ddsde_picard, solve_particle_system, PicardDiagnostics, SolverConfig};

/// Runs the experiment named in the configuration.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    match cfg.experiment {
        ExperimentKind::MflSweep => run_mfl_sweep(cfg).map(ConvergenceReport::into_report),
        ExperimentKind::TanakaCheck => run_tanaka_check(cfg).map(TanakaReport::into_report),
        ExperimentKind::Stability => run_stability(cfg).map(StabilityReport::into_report),
        ExperimentKind::Density => run_density_propagation(cfg).map(DensityReport::into_report),
        ExperimentKind::BoundsTable => run_bounds_table(cfg).map(BoundsTable::into_report),
    }
}

/// Deterministic per-cell seed; keeps cell ensembles from being prefixes of
/// one another or of the references.
fn mix(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const SUBSAMPLE_TAG: u64 = 0x5B5A;
const PROXY_TAG: u64 = 0x9B0C;
const PERTURB_TAG: u64 = 0xD17A;

pub(crate) fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Theoretical right-hand side of the mean-field estimate, as a function of
/// the input distance.
#[derive(Debug, Clone)]
enum FamilyBound {
    Identity,
    Lipschitz(f64),
    Bihari { modulus: crate::bounds::Modulus, h_l1: f64 },
    None(&'static str),
}

impl FamilyBound {
    fn of(k: &DriftConstants) -> Self {
        match k.family {
            DriftFamily::Zero => FamilyBound::Identity,
            DriftFamily::Lipschitz | DriftFamily::Approximated => match k.g_l1() {
                Some(g) => FamilyBound::Lipschitz(g),
                None => FamilyBound::None("no Lipschitz rate"),
            },
            DriftFamily::Osgood => match (k.modulus.clone(), k.h_l1()) {
                (Some(modulus), Some(h_l1)) => FamilyBound::Bihari { modulus, h_l1 },
                _ => FamilyBound::None("no modulus"),
            },
            DriftFamily::Monotone | DriftFamily::Antisymmetric => FamilyBound::None("qualitative only"),
            DriftFamily::LocalLipschitz => FamilyBound::None("constant C not explicit"),
            DriftFamily::Convolutional => FamilyBound::None("constant C not explicit"),
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            FamilyBound::Identity => "identity",
            FamilyBound::Lipschitz(_) => "lipschitz",
            FamilyBound::Bihari { .. } => "bihari",
            FamilyBound::None(_) => "n/a",
        }
    }

    fn eval(&self, input_distance: f64) -> Result<Option<f64>> {
        Ok(match self {
            FamilyBound::Identity => Some(input_distance),
            FamilyBound::Lipschitz(g) => Some(lipschitz_stability_bound(*g) * input_distance),
            FamilyBound::Bihari { modulus, h_l1 } => {
                Some(osgood_stability_bound(modulus, *h_l1, input_distance)?.value)
            }
            FamilyBound::None(_) => None,
        })
    }
}

struct Setup {
    solver: SolverConfig,
    drift: DriftSpec,
    noise: crate::noise::NoiseSpec,
    constants: DriftConstants,
}

fn setup(cfg: &ExperimentConfig) -> Result<Setup> {
    let solver = cfg.solver_config()?;
    let drift = cfg.drift_spec()?;
    let noise = cfg.noise_spec()?;
    if noise.dim() != drift.dim() {
        return Err(Error::Config(format!(
            "noise dimension {} differs from drift dimension {}",
            noise.dim(),
            drift.dim()
        )));
    }
    let constants = drift_constants(&drift, &solver.grid)?;
    Ok(Setup {
        solver,
        drift,
        noise,
        constants,
    })
}

/// Mean over particles of the path sup-norm distance.
fn mean_sup_gap(a: &Ensemble, b: &Ensemble) -> f64 {
    let mut terms: Vec<f64> = a
        .members()
        .iter()
        .zip(b.members())
        .map(|(p, q)| path_sup_gap(p, q))
        .collect();
    terms.sort_by(f64::total_cmp);
    terms.iter().sum::<f64>() / terms.len() as f64
}

fn path_sup_gap(p: &Path, q: &Path) -> f64 {
    let d = p.dim();
    p.values()
        .chunks(d)
        .zip(q.values().chunks(d))
        .map(|(x, y)| x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

fn max_abs_gap(a: &Ensemble, b: &Ensemble) -> f64 {
    a.members()
        .iter()
        .zip(b.members())
        .flat_map(|(p, q)| p.values().iter().zip(q.values()).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub n: usize,
    pub seed: u64,
    pub d_x: f64,
    pub d_y: f64,
    pub bound: Option<f64>,
    pub wall_ms: f64,
    pub bound_kind: &'static str,
    pub ref_proxy: f64,
}

#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    pub ref_proxy: f64,
    /// `(N, median d_x, min d_x, max d_x)` over seeds.
    pub medians: Vec<(usize, f64, f64, f64)>,
    pub checks: Vec<Check>,
    pub references: Option<(Ensemble, Ensemble)>,
}

impl ConvergenceReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn into_report(self) -> ExperimentReport {
        let rows = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.n.to_string(),
                    r.seed.to_string(),
                    num(r.d_x),
                    num(r.d_y),
                    opt(r.bound),
                    format!("{:.3}", r.wall_ms),
                    r.bound_kind.to_string(),
                    num(r.ref_proxy),
                ]
            })
            .collect();
        let notes = self
            .medians
            .iter()
            .map(|(n, med, lo, hi)| (format!("median_d_x.{n}"), format!("{} [{}, {}]", num(*med), num(*lo), num(*hi))))
            .collect();
        ExperimentReport {
            kind: ExperimentKind::MflSweep,
            header: vec!["n", "seed", "d_x", "d_y", "bound", "wall_ms", "bound_kind", "ref_proxy"],
            rows,
            checks: self.checks,
            notes,
            dumps: self
                .references
                .map(|(a, b)| vec![("ref_inputs.bin".to_string(), a), ("ref_solution.bin".to_string(), b)])
                .unwrap_or_default(),
        }
    }
}

/// Empirical mean-field distances against a large reference system.
///
/// The reference law is the particle system at `N_ref`; each row compares the
/// `N`-particle law with an `N`-subsample of reference A (same indices for
/// inputs and solutions). The proxy for the reference error is the distance
/// between equal-size subsamples of two independent references A and B, at the
/// largest size the assignment cap admits.
pub fn run_mfl_sweep(cfg: &ExperimentConfig) -> Result<ConvergenceReport> {
    let s = setup(cfg)?;
    let sweep = cfg.sweep.as_ref().ok_or_else(|| Error::Config("missing [sweep]".into()))?;
    let (p, cap) = (sweep.p, s.solver.assignment_cap);
    if *sweep.n.last().expect("validated") > cap {
        return Err(Error::Config(format!("sweep size exceeds the assignment cap {cap}")));
    }
    let bound = FamilyBound::of(&s.constants);

    let reference = |seed: u64| -> Result<(Ensemble, Ensemble)> {
        let y = sample_paths(&s.noise, s.solver.grid, sweep.n_ref, seed)?;
        let x = solve_particle_system(&s.drift, &y, &s.solver)?;
        Ok((y, x))
    };
    let (ref_y, ref_x) = reference(sweep.ref_seed_a)?;
    let (_, ref_x_b) = reference(sweep.ref_seed_b)?;

    let m = sweep.n_ref.min(cap);
    let mut rng = particle_rng(mix(sweep.ref_seed_a ^ sweep.ref_seed_b, PROXY_TAG), 0);
    let ia = sample_indices(&mut rng, sweep.n_ref, m).into_vec();
    let ib = sample_indices(&mut rng, sweep.n_ref, m).into_vec();
    let ref_proxy = wasserstein_with_cap(
        &ref_x.select(&ia).to_measure(),
        &ref_x_b.select(&ib).to_measure(),
        p,
        cap,
    )?;

    let cells: Vec<(usize, u64)> = sweep
        .n
        .iter()
        .flat_map(|&n| cfg.seeds.iter().map(move |&seed| (n, seed)))
        .collect();
    let mut rows = cells
        .par_iter()
        .map(|&(n, seed)| -> Result<ConvergenceRow> {
            let start = Instant::now();
            let y = sample_paths(&s.noise, s.solver.grid, n, mix(seed, n as u64))?;
            let x = solve_particle_system(&s.drift, &y, &s.solver)?;
            let mut rng = particle_rng(mix(seed, SUBSAMPLE_TAG), n);
            let idx = sample_indices(&mut rng, sweep.n_ref, n).into_vec();
            let d_x = wasserstein_with_cap(&x.to_measure(), &ref_x.select(&idx).to_measure(), p, cap)?;
            let d_y = wasserstein_with_cap(&y.to_measure(), &ref_y.select(&idx).to_measure(), p, cap)?;
            Ok(ConvergenceRow {
                n,
                seed,
                d_x,
                d_y,
                bound: bound.eval(d_y)?,
                wall_ms: start.elapsed().as_secs_f64() * 1e3,
                bound_kind: bound.kind(),
                ref_proxy,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by_key(|r| (r.n, r.seed));

    let medians: Vec<(usize, f64, f64, f64)> = sweep
        .n
        .iter()
        .map(|&n| {
            let v: Vec<f64> = rows.iter().filter(|r| r.n == n).map(|r| r.d_x).collect();
            let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = v.iter().copied().fold(0.0, f64::max);
            (n, median(&v), lo, hi)
        })
        .collect();

    let mut checks = Vec::new();
    checks.push(Check::new(
        "distances_nonnegative",
        rows.iter().all(|r| r.d_x >= 0.0 && r.d_y >= 0.0),
        format!("{} rows", rows.len()),
    ));
    let bounded: Vec<&ConvergenceRow> = rows.iter().filter(|r| r.bound.is_some_and(f64::is_finite)).collect();
    let worst = bounded
        .iter()
        .map(|r| r.d_x - r.bound.unwrap_or(0.0))
        .fold(f64::NEG_INFINITY, f64::max);
    checks.push(match &bound {
        FamilyBound::None(why) => Check::new("bound", true, format!("n/a: {why}")),
        _ => Check::new(
            "bound",
            bounded.iter().all(|r| r.d_x <= r.bound.unwrap_or(0.0) + 2.0 * ref_proxy),
            format!(
                "max d_x - bound = {} against 2 x proxy = {}",
                num(worst),
                num(2.0 * ref_proxy)
            ),
        ),
    });
    if sweep.require_decrease {
        let decreasing = medians.windows(2).all(|w| w[1].1 < w[0].1);
        let seq: Vec<String> = medians.iter().map(|m| num(m.1)).collect();
        checks.push(Check::new("median_decreasing", decreasing, seq.join(" > ")));
    }
    Ok(ConvergenceReport {
        rows,
        ref_proxy,
        medians,
        checks,
        references: cfg.dump_ensembles.then_some((ref_y, ref_x)),
    })
}

#[derive(Debug, Clone)]
pub struct TanakaRow {
    pub seed: u64,
    pub gap: f64,
    pub diagnostics: PicardDiagnostics,
}

#[derive(Debug, Clone)]
pub struct TanakaReport {
    pub rows: Vec<TanakaRow>,
    pub max_gap: f64,
    pub tolerance: f64,
    pub max_ratio: f64,
    /// `log10(gap(tol) / gap(tol/10))`, when both gaps sit above rounding.
    pub tol_slope: Option<f64>,
    pub checks: Vec<Check>,
    pub dumps: Vec<(String, Ensemble)>,
}

impl TanakaReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn into_report(self) -> ExperimentReport {
        let rows = self
            .rows
            .iter()
            .map(|r| {
                let d = &r.diagnostics;
                vec![
                    r.seed.to_string(),
                    num(r.gap),
                    num(self.tolerance),
                    d.iterations.to_string(),
                    d.converged.to_string(),
                    opt(d.successive_distances.last().copied()),
                    num(d.contraction_ratios.iter().copied().fold(0.0, f64::max)),
                ]
            })
            .collect();
        ExperimentReport {
            kind: ExperimentKind::TanakaCheck,
            header: vec![
                "seed",
                "gap",
                "tolerance",
                "iterations",
                "converged",
                "last_distance",
                "max_ratio",
            ],
            rows,
            checks: self.checks,
            notes: vec![
                ("max_gap".into(), num(self.max_gap)),
                ("tol_slope".into(), opt(self.tol_slope)),
            ],
            dumps: self.dumps,
        }
    }
}

/// Coupled Euler against Picard on the same inputs.
pub fn run_tanaka_check(cfg: &ExperimentConfig) -> Result<TanakaReport> {
    let s = setup(cfg)?;
    let n = cfg.tanaka.as_ref().ok_or_else(|| Error::Config("missing [tanaka]".into()))?.n;
    let tol = s.solver.picard_tol;
    let tolerance = cfg.tolerances.tanaka_factor * tol;
    let mut rows = Vec::new();
    let mut dumps = Vec::new();
    let mut finer = Vec::new();
    for &seed in &cfg.seeds {
        let y = sample_paths(&s.noise, s.solver.grid, n, seed)?;
        let coupled = solve_particle_system(&s.drift, &y, &s.solver)?;
        let (picard, diagnostics) = solve_ddsde_picard(&s.drift, &y, &s.solver)?;
        let gap = max_abs_gap(&coupled, &picard);
        let mut tight = s.solver.clone();
        tight.picard_tol = tol / 10.0;
        let (picard_tight, _) = solve_ddsde_picard(&s.drift, &y, &tight)?;
        finer.push((gap, max_abs_gap(&coupled, &picard_tight)));
        if cfg.dump_ensembles {
            dumps.push((format!("inputs_{seed}.bin"), y));
            dumps.push((format!("coupled_{seed}.bin"), coupled));
            dumps.push((format!("picard_{seed}.bin"), picard));
        }
        rows.push(TanakaRow { seed, gap, diagnostics });
    }
    let max_gap = rows.iter().map(|r| r.gap).fold(0.0, f64::max);
    let max_ratio = rows
        .iter()
        .flat_map(|r| r.diagnostics.contraction_ratios.iter().copied())
        .fold(0.0, f64::max);
    const ROUNDING_FLOOR: f64 = 1e-13;
    let slopes: Vec<f64> = finer
        .iter()
        .filter(|(a, b)| *a > ROUNDING_FLOOR && *b > ROUNDING_FLOOR)
        .map(|(a, b)| (a / b).log10())
        .collect();
    let tol_slope = (!slopes.is_empty()).then(|| median(&slopes));

    let converged = rows.iter().all(|r| r.diagnostics.converged);
    let mut checks = vec![
        Check::new(
            "picard_converged",
            converged,
            format!(
                "iterations {:?}",
                rows.iter().map(|r| r.diagnostics.iterations).collect::<Vec<_>>()
            ),
        ),
        Check::new(
            "gap",
            converged && max_gap <= tolerance,
            format!("max gap {} <= {}", num(max_gap), num(tolerance)),
        ),
    ];
    if s.constants.g.is_some() {
        checks.push(Check::new(
            "contraction",
            max_ratio <= cfg.tolerances.contraction,
            format!("max ratio {} <= {}", num(max_ratio), num(cfg.tolerances.contraction)),
        ));
    }
    Ok(TanakaReport {
        rows,
        max_gap,
        tolerance,
        max_ratio,
        tol_slope,
        checks,
        dumps,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityRow {
    pub seed: u64,
    pub x_gap: f64,
    pub y_gap: f64,
    /// `x_gap / y_gap`; 0 when both vanish.
    pub ratio: f64,
}

#[derive(Debug, Clone)]
pub struct StabilityReport {
    pub rows: Vec<StabilityRow>,
    pub median_ratio: f64,
    pub median_x_gap: f64,
    pub median_y_gap: f64,
    /// Ratio bound (Lipschitz) or absolute bound on `E‖X¹−X²‖` (Osgood).
    pub theory: Option<f64>,
    pub theory_kind: &'static str,
    pub checks: Vec<Check>,
}

impl StabilityReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn into_report(self) -> ExperimentReport {
        let rows = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.seed.to_string(),
                    num(r.x_gap),
                    num(r.y_gap),
                    num(r.ratio),
                    opt(self.theory),
                    self.theory_kind.to_string(),
                ]
            })
            .collect();
        ExperimentReport {
            kind: ExperimentKind::Stability,
            header: vec!["seed", "x_gap", "y_gap", "ratio", "theory", "theory_kind"],
            rows,
            checks: self.checks,
            notes: vec![
                ("median_ratio".into(), num(self.median_ratio)),
                ("median_x_gap".into(), num(self.median_x_gap)),
            ],
            dumps: vec![],
        }
    }
}

/// `Y²ⁱ = Y¹ⁱ + δ uᵢ` with `uᵢ` a random unit vector per particle.
fn perturb(y: &Ensemble, delta: f64, seed: u64) -> Result<Ensemble> {
    let d = y.dim();
    let members = y
        .members()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut rng = particle_rng(mix(seed, PERTURB_TAG), i);
            let mut u: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
            u.iter_mut().for_each(|v| *v /= norm);
            let values = p
                .values()
                .chunks(d)
                .flat_map(|x| x.iter().zip(&u).map(|(a, b)| a + delta * b).collect::<Vec<_>>())
                .collect();
            Path::new(p.grid(), d, values)
        })
        .collect::<Result<Vec<_>>>()?;
    Ensemble::new(members, y.seed())
}

/// Coupled inputs through the particle system, against the family constant.
pub fn run_stability(cfg: &ExperimentConfig) -> Result<StabilityReport> {
    let s = setup(cfg)?;
    let st = cfg.stability.as_ref().ok_or_else(|| Error::Config("missing [stability]".into()))?;
    let rows = cfg
        .seeds
        .iter()
        .map(|&seed| -> Result<StabilityRow> {
            let y1 = sample_paths(&s.noise, s.solver.grid, st.n, seed)?;
            let y2 = perturb(&y1, st.delta, seed)?;
            let x1 = solve_particle_system(&s.drift, &y1, &s.solver)?;
            let x2 = solve_particle_system(&s.drift, &y2, &s.solver)?;
            let (x_gap, y_gap) = (mean_sup_gap(&x1, &x2), mean_sup_gap(&y1, &y2));
            let ratio = if x_gap == 0.0 && y_gap == 0.0 { 0.0 } else { x_gap / y_gap };
            Ok(StabilityRow {
                seed,
                x_gap,
                y_gap,
                ratio,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let ratios: Vec<f64> = rows.iter().map(|r| r.ratio).collect();
    let xs: Vec<f64> = rows.iter().map(|r| r.x_gap).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.y_gap).collect();
    let (median_ratio, median_x_gap, median_y_gap) = (median(&ratios), median(&xs), median(&ys));

    let mut checks = Vec::new();
    let exact = st.delta == 0.0;
    if exact {
        checks.push(Check::new(
            "exact_equality",
            xs.iter().all(|v| *v == 0.0),
            "delta = 0",
        ));
    }
    let bound = FamilyBound::of(&s.constants);
    let (theory, theory_kind) = match &bound {
        FamilyBound::Identity => (Some(1.0), "ratio"),
        FamilyBound::Lipschitz(g) => (Some(lipschitz_stability_bound(*g)), "ratio"),
        FamilyBound::Bihari { .. } => (bound.eval(median_y_gap)?, "absolute"),
        FamilyBound::None(_) => (None, "n/a"),
    };
    if !exact {
        checks.push(match (theory, theory_kind) {
            (Some(t), "ratio") => Check::new(
                "stability_ratio",
                median_ratio <= t,
                format!("median ratio {} <= {}", num(median_ratio), num(t)),
            ),
            (Some(t), _) => Check::new(
                "stability_bihari",
                median_x_gap <= t,
                format!("median E|X1-X2| {} <= M({}) = {}", num(median_x_gap), num(median_y_gap), num(t)),
            ),
            _ => Check::new("stability", true, format!("n/a; median ratio {}", num(median_ratio))),
        });
    }
    Ok(StabilityReport {
        rows,
        median_ratio,
        median_x_gap,
        median_y_gap,
        theory,
        theory_kind,
        checks,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityRow {
    pub seed: u64,
    pub time: f64,
    pub histogram: f64,
    pub kde: f64,
}

#[derive(Debug, Clone)]
pub struct DensityReport {
    pub rows: Vec<DensityRow>,
    pub rho_sup: f64,
    /// `exp(‖div b‖_{L¹L^∞})`.
    pub growth_factor: f64,
    pub lower: f64,
    pub upper: f64,
    pub checks: Vec<Check>,
}

impl DensityReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn into_report(self) -> ExperimentReport {
        let rows = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.seed.to_string(),
                    num(r.time),
                    num(r.histogram),
                    num(r.kde),
                    num(self.lower),
                    num(self.upper),
                ]
            })
            .collect();
        ExperimentReport {
            kind: ExperimentKind::Density,
            header: vec!["seed", "t", "histogram_sup", "kde_sup", "lower", "upper"],
            rows,
            checks: self.checks,
            notes: vec![
                ("rho_sup".into(), num(self.rho_sup)),
                ("growth_factor".into(), num(self.growth_factor)),
            ],
            dumps: vec![],
        }
    }
}

/// Sup-density of the particle system at evenly spaced times, between
/// `‖ρ‖ e^{−D}/c` and `c e^{D} ‖ρ‖`, `D = ‖div b‖_{L¹L^∞}` and `c` the
/// statistical tolerance.
pub fn run_density_propagation(cfg: &ExperimentConfig) -> Result<DensityReport> {
    let s = setup(cfg)?;
    let ds = cfg.density.as_ref().ok_or_else(|| Error::Config("missing [density]".into()))?;
    if !matches!(s.drift, DriftSpec::ConvolutionKernel { .. } | DriftSpec::Zero { .. }) {
        return Err(Error::Unsupported("density propagation needs a convolution drift".into()));
    }
    let div = s.constants.require_divergence()?;
    let rho_sup = s
        .noise
        .initial
        .density_sup()
        .ok_or_else(|| Error::Config("density propagation needs an initial law with a density".into()))?;
    let growth_factor = div.exp();
    let c = cfg.tolerances.density_factor;
    let (lower, upper) = (rho_sup / (c * growth_factor), c * growth_factor * rho_sup);

    let grid = s.solver.grid;
    let nodes: Vec<usize> = if ds.samples == 1 {
        vec![grid.steps()]
    } else {
        (0..ds.samples)
            .map(|j| ((j * grid.steps()) as f64 / (ds.samples - 1) as f64).round() as usize)
            .collect()
    };
    let mut rows = Vec::new();
    for &seed in &cfg.seeds {
        let y = sample_paths(&s.noise, grid, ds.n, seed)?;
        let x = solve_particle_system(&s.drift, &y, &s.solver)?;
        drop(y);
        for &k in &nodes {
            let mu = EmpiricalMeasure::Points(x.slice(k));
            let bw = match (ds.bandwidth, &mu) {
                (Some(b), _) => b,
                (None, EmpiricalMeasure::Points(c)) => silverman_bandwidth(c)?,
                _ => unreachable!("point measure"),
            };
            rows.push(DensityRow {
                seed,
                time: grid.time(k),
                histogram: histogram_sup_mass(&mu, ds.cell_width)?,
                kde: kde_density_norm(&mu, f64::INFINITY, bw, &KdeOptions::default())?,
            });
        }
    }
    let within = |v: f64| v >= lower && v <= upper;
    let range = |f: fn(&DensityRow) -> f64| {
        let v: Vec<f64> = rows.iter().map(f).collect();
        (
            v.iter().copied().fold(f64::INFINITY, f64::min),
            v.iter().copied().fold(0.0, f64::max),
        )
    };
    let (hlo, hhi) = range(|r| r.histogram);
    let (klo, khi) = range(|r| r.kde);
    let checks = vec![
        Check::new(
            "histogram_sup",
            rows.iter().all(|r| within(r.histogram)),
            format!("range [{}, {}] within [{}, {}]", num(hlo), num(hhi), num(lower), num(upper)),
        ),
        Check::new(
            "kde_sup",
            rows.iter().all(|r| within(r.kde)),
            format!("range [{}, {}] within [{}, {}]", num(klo), num(khi), num(lower), num(upper)),
        ),
    ];
    Ok(DensityReport {
        rows,
        rho_sup,
        growth_factor,
        lower,
        upper,
        checks,
    })
}

#[derive(Debug, Clone)]
pub struct BoundsTable {
    pub rows: Vec<BoundReport>,
    pub checks: Vec<Check>,
}

impl BoundsTable {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn into_report(self) -> ExperimentReport {
        let rows = self
            .rows
            .iter()
            .map(|r| {
                let inputs: Vec<String> = r.inputs.iter().map(|(k, v)| format!("{k}={}", num(*v))).collect();
                vec![
                    r.name.clone(),
                    r.method.name().to_string(),
                    inputs.join(";"),
                    num(r.value),
                    num(r.error_estimate),
                    r.reason.clone().unwrap_or_default(),
                ]
            })
            .collect();
        ExperimentReport {
            kind: ExperimentKind::BoundsTable,
            header: vec!["name", "method", "inputs", "value", "error_estimate", "reason"],
            rows,
            checks: self.checks,
            notes: vec![],
            dumps: vec![],
        }
    }
}

fn failed_report(name: &str, inputs: &[(&str, f64)], err: Error) -> BoundReport {
    BoundReport {
        name: name.into(),
        inputs: inputs.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        value: f64::INFINITY,
        method: crate::bounds::BoundMethod::Quadrature,
        error_estimate: f64::NAN,
        reason: Some(err.to_string()),
    }
}

/// `M(r)` per (modulus, κ) block, `e^{2‖g‖}` and the a priori constants over the
/// requested parameter lattices.
pub fn run_bounds_table(cfg: &ExperimentConfig) -> Result<BoundsTable> {
    let b = cfg.bounds.as_ref().ok_or_else(|| Error::Config("missing [bounds]".into()))?;
    let mut rows = Vec::new();
    let mut monotone = true;
    let mut zero_ok = true;
    let mut rs = b.r.clone();
    rs.sort_by(f64::total_cmp);
    for m in &b.moduli {
        let modulus = modulus_from(m, None, None, None)?;
        for &kappa in &b.kappa {
            let mut prev = f64::NEG_INFINITY;
            for &r in &rs {
                let row = bihari_m(&modulus, kappa, r)
                    .unwrap_or_else(|e| failed_report("bihari_m", &[("kappa", kappa), ("r", r)], e));
                if row.value.is_finite() {
                    monotone &= row.value >= prev;
                    prev = row.value;
                }
                if r == 0.0 {
                    zero_ok &= row.value == 0.0;
                }
                rows.push(row);
            }
        }
    }
    rows.extend(b.g_l1.iter().map(|&g| lipschitz_stability_report(g)));
    for &h in &b.h_l1 {
        for &y in &b.y_sup {
            for &mo in &b.moment {
                rows.push(apriori_report(h, y, mo));
            }
        }
    }
    let mut checks = vec![Check::new("monotone_in_r", monotone, "per (modulus, kappa) block")];
    if rs.contains(&0.0) {
        checks.push(Check::new("m_at_zero", zero_ok, "M(0) = 0"));
    }
    Ok(BoundsTable { rows, checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base(kind: &str, drift: &str, extra: &str) -> String {
        format!(
            r#"
experiment = "{kind}"
seeds = [1, 2, 3]
[grid]
horizon = 1.0
steps = 32
[drift]
{drift}
[noise.initial]
law = "gaussian"
mean = [0.0]
variance = [1.0]
[noise.process]
kind = "brownian"
sigma = 1.0
{extra}
"#
        )
    }

    const ZERO: &str = "family = \"zero\"\ndim = 1";
    const MEAN: &str = "family = \"mean_attraction\"\nkappa = 1.0";

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn zero_drift_sweep_has_equal_distances() {
        let text = base("mfl-sweep", ZERO, "[sweep]\nn = [4, 8]\nn_ref = 32");
        let cfg = ExperimentConfig::from_toml_str(&text).unwrap();
        let rep = run_mfl_sweep(&cfg).unwrap();
        assert_eq!(rep.rows.len(), 6);
        for r in &rep.rows {
            assert_eq!(r.d_x, r.d_y);
            assert_eq!(r.bound, Some(r.d_y));
        }
        assert!(rep.passed());
    }

    #[test]
    fn sweep_is_reproducible() {
        let text = base("mfl-sweep", MEAN, "[sweep]\nn = [4, 8]\nn_ref = 32");
        let cfg = ExperimentConfig::from_toml_str(&text).unwrap();
        let a = run_mfl_sweep(&cfg).unwrap();
        let b = run_mfl_sweep(&cfg).unwrap();
        for (r, s) in a.rows.iter().zip(&b.rows) {
            assert_eq!((r.d_x.to_bits(), r.d_y.to_bits()), (s.d_x.to_bits(), s.d_y.to_bits()));
        }
        let e2 = (2.0f64).exp();
        for r in &a.rows {
            assert_eq!(r.bound_kind, "lipschitz");
            assert!((r.bound.unwrap() - e2 * r.d_y).abs() <= 1e-12 * r.bound.unwrap());
        }
    }

    #[test]
    fn tanaka_zero_drift_gap_is_zero() {
        let text = base("tanaka-check", ZERO, "[tanaka]\nn = 8");
        let rep = run_tanaka_check(&ExperimentConfig::from_toml_str(&text).unwrap()).unwrap();
        assert_eq!(rep.max_gap, 0.0);
        assert!(rep.passed());
    }

    #[test]
    fn stability_with_zero_delta_is_exact() {
        let text = base("stability", MEAN, "[stability]\nn = 16\ndelta = 0.0");
        let rep = run_stability(&ExperimentConfig::from_toml_str(&text).unwrap()).unwrap();
        assert!(rep.rows.iter().all(|r| r.ratio == 0.0));
        assert!(rep.passed());
    }

    #[test]
    fn perturbation_has_length_delta() {
        let grid = crate::measures::TimeGrid::new(1.0, 4).unwrap();
        let noise = crate::noise::NoiseSpec::new(
            crate::noise::InitialLaw::Gaussian {
                mean: vec![0.0; 3],
                variance: vec![1.0; 3],
            },
            crate::noise::NoiseProcess::Brownian { sigma: 1.0 },
        )
        .unwrap();
        let y = sample_paths(&noise, grid, 10, 3).unwrap();
        let z = perturb(&y, 0.25, 3).unwrap();
        for (p, q) in y.members().iter().zip(z.members()) {
            assert!((path_sup_gap(p, q) - 0.25).abs() < 1e-14);
        }
    }

    #[test]
    fn bounds_table_rows() {
        let text = r#"
experiment = "bounds-table"
[bounds]
kappa = [2.0]
r = [1.0, 0.0, 1e-4]
g_l1 = [1.0]
h_l1 = [0.5]
y_sup = [1.0]
moment = [2.0]
"#;
        let t = run_bounds_table(&ExperimentConfig::from_toml_str(text).unwrap()).unwrap();
        assert!(t.passed());
        assert_eq!(t.rows.len(), 3 * 2 + 1 + 1);
        let e2 = (2.0f64).exp();
        // linear block, r sorted: 0, 1e-4, 1
        assert_eq!(t.rows[0].value, 0.0);
        assert!((t.rows[2].value - e2).abs() < 1e-6 * e2);
        assert_eq!(t.rows[6].value, e2);
    }
}
