use proptest::prelude::*;
use slod_core::basis::{build_basis, BasisOptions, BasisParams};
use slod_core::mesh::{NestingMap, Patch, TensorGrid};
use slod_core::solvers::{solve_slod, FineSystem, RhsMode, SolveOptions};
use slod_core::source::{Source, SourceSpec};
use slod_core::velocity::VelocityField;

fn nesting(dim: usize, nc: usize, nf: usize) -> NestingMap {
    NestingMap::new(TensorGrid::new(dim, nc).unwrap(), TensorGrid::new(dim, nf).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn patches_are_clipped_index_neighbourhoods(
        dim in 1usize..=3,
        n in 2usize..=9,
        level in 1usize..=3,
        pick in any::<prop::sample::Index>(),
    ) {
        let nest = nesting(dim, n, n);
        let center = pick.index(nest.coarse().element_count());
        let patch = Patch::new_allowing_full(&nest, center, level).unwrap();
        let c = nest.coarse().element_multi(center);
        let expected: usize = (0..dim)
            .map(|a| c[a].min(level) + (n - 1 - c[a]).min(level) + 1)
            .product();
        prop_assert_eq!(patch.elements().len(), expected);
        prop_assert!(patch.elements().windows(2).all(|w| w[0] < w[1]));
        prop_assert!(patch.elements().contains(&center));
        let interior = (0..dim).all(|a| c[a] >= level && c[a] + level < n);
        if interior {
            prop_assert_eq!(expected, (2 * level + 1).pow(dim as u32));
        }
        prop_assert_eq!(patch.covers_domain(), expected == nest.coarse().element_count());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn slod_solution_is_linear_in_the_source(
        values in prop::collection::vec(-1.0f64..1.0, 16),
        scale in -3.0f64..3.0,
        angle in 0.0f64..std::f64::consts::TAU,
    ) {
        let nest = nesting(2, 4, 16);
        let b = VelocityField::constant(&[angle.cos(), angle.sin()]);
        let params = BasisParams { level: 1, ..Default::default() };
        let basis = build_basis(&nest, 0.1, &b, &params, &BasisOptions::default()).unwrap();
        let fine = FineSystem::new(*nest.fine(), 0.1, &b).unwrap();
        let f = |v: Vec<f64>| Source::from_spec(&SourceSpec::Table { cells: 4, values: v }, 2).unwrap();
        let opts = SolveOptions::default();
        let u = solve_slod(&basis, &fine, &f(values.clone()), RhsMode::Projected, &opts).unwrap();
        let scaled: Vec<f64> = values.iter().map(|v| scale * v).collect();
        let w = solve_slod(&basis, &fine, &f(scaled), RhsMode::Projected, &opts).unwrap();
        let norm = u.coefficients.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in u.coefficients.iter().zip(&w.coefficients) {
            prop_assert!((scale * a - b).abs() <= 1e-9 * norm.max(1e-300) * scale.abs().max(1.0));
        }
    }
}
