use proptest::prelude::*;

use ddsde_core::bounds::{apriori_path_bound, seminorm_bound};
use ddsde_core::drifts::{drift_constants, DriftSpec, RateFn};
use ddsde_core::measures::{h_seminorm, moment_norm, sup_norm, Ensemble, Path, TimeGrid};
use ddsde_core::noise::{sample_paths, InitialLaw, NoiseProcess, NoiseSpec};
use ddsde_core::solver::{solve_ddsde_picard, solve_ddsde_picard_from, solve_particle_system, SolverConfig};

fn brownian(dim: usize, sigma: f64) -> NoiseSpec {
    NoiseSpec::new(
        InitialLaw::Gaussian {
            mean: vec![0.5; dim],
            variance: vec![1.0; dim],
        },
        NoiseProcess::Brownian { sigma },
    )
    .unwrap()
}

fn drift_strategy() -> impl Strategy<Value = DriftSpec> {
    prop_oneof![
        (0.0..3.0f64).prop_map(|k| DriftSpec::mean_attraction(2, k)),
        (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64).prop_map(|(a, c, c0)| {
            let rate = a.abs() + c.abs() + c0.abs();
            DriftSpec::LipschitzLinear {
                dim: 1,
                a: vec![a],
                c: vec![c],
                c0: vec![c0],
                g: RateFn::Constant(a.abs() + c.abs()),
                h: RateFn::Constant(rate),
            }
        }),
        (0.0..1.0f64).prop_map(|k| DriftSpec::MonotonePower {
            dim: 1,
            lambda: 0.5,
            gamma: 0.5,
            interaction: k,
        }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn apriori_and_seminorm_bounds_hold(drift in drift_strategy(), seed in 0u64..1000, sigma in 0.1..2.0f64) {
        let grid = TimeGrid::new(1.0, 64).unwrap();
        let y = sample_paths(&brownian(drift.dim(), sigma), grid, 24, seed).unwrap();
        let x = solve_particle_system(&drift, &y, &SolverConfig::new(grid)).unwrap();
        let k = drift_constants(&drift, &grid).unwrap();
        let growth = k.growth.clone().unwrap();
        let h_l1: f64 = growth.iter().sum();
        let m = moment_norm(&x.to_measure(), 1.0).unwrap();
        for (xi, yi) in x.members().iter().zip(y.members()) {
            let x_sup = sup_norm(xi);
            prop_assert!(x_sup <= 1.05 * apriori_path_bound(h_l1, sup_norm(yi), m));
            let z = xi.sub(yi).unwrap();
            let semi = h_seminorm(&z, &growth).unwrap();
            if h_l1 > 0.0 {
                prop_assert!(semi.value() <= 1.05 * seminorm_bound(x_sup, m));
            } else {
                prop_assert_eq!(semi.value(), 0.0);
            }
        }
    }

    #[test]
    fn monotone_picard_forgets_its_start(seed in 0u64..1000, shift in -4.0..4.0f64) {
        let grid = TimeGrid::new(1.0, 64).unwrap();
        let drift = DriftSpec::MonotonePower { dim: 1, lambda: 1.0, gamma: 0.5, interaction: 0.5 };
        let y = sample_paths(&brownian(1, 1.0), grid, 16, seed).unwrap();
        let mut cfg = SolverConfig::new(grid);
        cfg.picard_tol = 1e-11;
        cfg.picard_max_iter = 300;
        let start = Ensemble::new(
            y.members()
                .iter()
                .map(|p| Path::new(grid, 1, p.values().iter().map(|v| v + shift).collect()).unwrap())
                .collect(),
            seed,
        )
        .unwrap();
        let (a, da) = solve_ddsde_picard(&drift, &y, &cfg).unwrap();
        let (b, db) = solve_ddsde_picard_from(&drift, &y, start, &cfg).unwrap();
        prop_assert!(da.converged && db.converged);
        for (p, q) in a.members().iter().zip(b.members()) {
            prop_assert!(sup_norm(&p.sub(q).unwrap()) <= 1e-4);
        }
    }
}

#[test]
fn picard_fixed_point_is_the_particle_system() {
    let grid = TimeGrid::new(1.0, 128).unwrap();
    let drift = DriftSpec::LipschitzLinear {
        dim: 2,
        a: vec![-1.0, 0.5, -0.5, -1.0],
        c: vec![0.5, 0.0, 0.0, 0.5],
        c0: vec![0.1, -0.1],
        g: RateFn::Constant(2.0),
        h: RateFn::Constant(2.2),
    };
    let y = sample_paths(&brownian(2, 0.7), grid, 32, 4).unwrap();
    let mut cfg = SolverConfig::new(grid);
    cfg.picard_tol = 1e-12;
    let (p, diag) = solve_ddsde_picard(&drift, &y, &cfg).unwrap();
    assert!(diag.converged);
    let c = solve_particle_system(&drift, &y, &cfg).unwrap();
    // the stopping rule weights late times by e^{-4·2·t}
    let slack = 1e-12 * (8.0f64).exp() * 10.0;
    for (a, b) in p.members().iter().zip(c.members()) {
        assert!(sup_norm(&a.sub(b).unwrap()) < slack);
    }
}
