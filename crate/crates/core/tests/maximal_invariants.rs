use proptest::prelude::*;

use ddsde_core::lattice::LatticeFunction;
use ddsde_core::maximal::{dyadic_radii, maximal_function};

fn lattice(extents: Vec<usize>, values: Vec<f64>) -> LatticeFunction {
    let origin = vec![0.0; extents.len()];
    LatticeFunction::new(extents, origin, 0.125, 1, values).unwrap()
}

fn field() -> impl Strategy<Value = (Vec<usize>, Vec<f64>, Vec<f64>)> {
    prop_oneof![Just(vec![33usize]), Just(vec![9usize, 7])].prop_flat_map(|ext| {
        let n: usize = ext.iter().product();
        (
            Just(ext),
            prop::collection::vec(-3.0..3.0f64, n),
            prop::collection::vec(-3.0..3.0f64, n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn sublinear_and_homogeneous((ext, f, g) in field(), c in -4.0..4.0f64) {
        let radii = dyadic_radii(&lattice(ext.clone(), f.clone()));
        let mf = maximal_function(&lattice(ext.clone(), f.clone()), &radii).unwrap();
        let mg = maximal_function(&lattice(ext.clone(), g.clone()), &radii).unwrap();
        let sum: Vec<f64> = f.iter().zip(&g).map(|(a, b)| a + b).collect();
        let ms = maximal_function(&lattice(ext.clone(), sum), &radii).unwrap();
        for i in 0..f.len() {
            let rhs = mf.samples()[i] + mg.samples()[i];
            prop_assert!(ms.samples()[i] <= rhs + 1e-12 * (1.0 + rhs));
        }
        let scaled: Vec<f64> = f.iter().map(|v| c * v).collect();
        let mc = maximal_function(&lattice(ext, scaled), &radii).unwrap();
        for i in 0..f.len() {
            let want = c.abs() * mf.samples()[i];
            prop_assert!((mc.samples()[i] - want).abs() <= 1e-12 * (1.0 + want));
        }
    }

    #[test]
    fn more_radii_never_lower_the_supremum((ext, f, _g) in field(), extra in prop::collection::vec(0.1..1.0f64, 1..5)) {
        let b = lattice(ext, f);
        let coarse = dyadic_radii(&b);
        let mut fine = coarse.clone();
        fine.extend(extra);
        let a = maximal_function(&b, &coarse).unwrap();
        let c = maximal_function(&b, &fine).unwrap();
        for (x, y) in a.samples().iter().zip(c.samples()) {
            prop_assert!(y >= x);
        }
    }
}
