use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use treeauto::automata::{catalog, AutomatonSpec};
use treeauto::distmap::{DistMap, StateDistribution};
use treeauto::fixedpoints::find_fixed_points_2state;
use treeauto::offspring::{ChildDistribution, DEFAULT_EPS};
use treeauto::pivot::{mean_matrix, PivotOptions, TargetSets};
use treeauto::simulate::{
    compare_with_exact, estimate, estimate_on_shape, oracle_exact, root_colour_chi_square, sample_rst,
    StatKey, Tree,
};

fn top_root(spec: &AutomatonSpec, lambda: f64) -> StateDistribution {
    let dm = DistMap::new(spec, &ChildDistribution::poisson(lambda).unwrap(), DEFAULT_EPS).unwrap();
    find_fixed_points_2state(&dm, &Default::default()).unwrap().pop().unwrap().nu
}

fn specs() -> Vec<AutomatonSpec> {
    vec![catalog::at_least_two(), catalog::zero_ones(), catalog::one_of_each(), catalog::sum_capped()]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sampled_trees_are_consistent(which in 0usize..4, seed in any::<u64>(), depth in 0usize..5, lambda in 0.5f64..3.5) {
        let spec = &specs()[which];
        let k = spec.k();
        let nu = StateDistribution::uniform(k);
        let chi = ChildDistribution::poisson(lambda).unwrap();
        let s = sample_rst(spec, &chi, &nu, depth, seed).unwrap();
        s.check_compatible(spec).unwrap();
        s.check_pivotal_closure().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        s.replay_check(spec, &TargetSets::maximal(k), 100, &mut rng).unwrap();
        prop_assert_eq!(s.b_set[0], TargetSets::maximal(k).get(s.colour[0]));
        let again = sample_rst(spec, &chi, &nu, depth, seed).unwrap();
        prop_assert_eq!(&s.colour, &again.colour);
        prop_assert_eq!(&s.tree, &again.tree);
    }

    #[test]
    fn monotone_pivotal_children_share_colour(seed in any::<u64>()) {
        let spec = catalog::at_least_two();
        let nu = top_root(&spec, 4.0);
        let s = sample_rst(&spec, &ChildDistribution::poisson(4.0).unwrap(), &nu, 4, seed).unwrap();
        for v in 1..s.tree.len() {
            if s.pivotal(v) {
                prop_assert_eq!(s.colour[v], s.colour[s.tree.parent(v).unwrap()]);
            }
        }
    }
}

#[test]
fn root_colours_follow_the_fixed_point() {
    let spec = catalog::at_least_two();
    let nu = top_root(&spec, 4.0);
    let chi = ChildDistribution::poisson(4.0).unwrap();
    let s = estimate(&spec, &chi, &nu, 3, 100_000, 7).unwrap();
    let test = root_colour_chi_square(&s, &nu).unwrap();
    assert!(test.p_value >= 1e-3, "{test:?}");
    // a point that is not fixed is caught
    let wrong = StateDistribution::bernoulli(0.5).unwrap();
    let s = estimate(&spec, &chi, &wrong, 3, 20_000, 7).unwrap();
    assert!(root_colour_chi_square(&s, &wrong).unwrap().p_value < 1e-3);
}

#[test]
fn estimates_agree_with_exact_values() {
    let spec = catalog::one_of_each();
    let lambda = 2.0;
    let nu = top_root(&spec, lambda);
    let dm = DistMap::new(&spec, &ChildDistribution::poisson(lambda).unwrap(), DEFAULT_EPS).unwrap();
    let a = mean_matrix(&dm, &nu, &TargetSets::maximal(2), &PivotOptions::default()).unwrap();
    let s = estimate(&spec, dm.chi(), &nu, 4, 40_000, 11).unwrap();
    let cmp = compare_with_exact(&s, &nu, Some(&a));
    assert!(cmp.iter().any(|c| matches!(c.key, StatKey::MeanEntry { .. })));
    for c in cmp {
        if let Some(z) = c.z {
            assert!(z.abs() <= 4.0, "{} z = {z}", c.name);
        }
    }
}

#[test]
fn estimates_are_deterministic() {
    let spec = catalog::zero_ones();
    let nu = top_root(&spec, 2.0);
    let chi = ChildDistribution::poisson(2.0).unwrap();
    let a = estimate(&spec, &chi, &nu, 4, 2_000, 3).unwrap();
    let b = rayon::ThreadPoolBuilder::new()
        .num_threads(2)
        .build()
        .unwrap()
        .install(|| estimate(&spec, &chi, &nu, 4, 2_000, 3).unwrap());
    assert_eq!(a, b);
    assert_ne!(a, estimate(&spec, &chi, &nu, 4, 2_000, 4).unwrap());
}

#[test]
fn shape_estimates_agree_with_oracle() {
    for (spec, shape) in [
        (catalog::at_least_two(), "((,,),(,),(,,,))"),
        (catalog::one_of_each(), "((,),(,,),())"),
        (catalog::sum_capped(), "((,),(,,))"),
    ] {
        let tree = Tree::parse(shape).unwrap();
        let nu = StateDistribution::normalized((1..=spec.k()).map(|c| c as f64).collect()).unwrap();
        let exact = oracle_exact(&spec, &tree, 2, &nu).unwrap();
        let est = estimate_on_shape(&spec, &tree, 2, &nu, 40_000, 5).unwrap();
        for (c, &(m, se)) in est.root_colour.iter().enumerate() {
            let d = m - exact.root_distribution[c];
            assert!(d.abs() <= 4.0 * se || (se == 0.0 && d.abs() < 1e-12), "{shape} root {c}");
        }
        for (v, &(m, se)) in est.pivotal.iter().enumerate() {
            let d = m - exact.pivotal_probability[v];
            assert!(d.abs() <= 4.0 * se || (se == 0.0 && d.abs() < 1e-12), "{shape} vertex {v}");
        }
    }
}

#[test]
fn oracle_cap() {
    let star = Tree::from_child_counts(&{
        let mut c = vec![17];
        c.extend([0; 17]);
        c
    })
    .unwrap();
    let nu = StateDistribution::bernoulli(0.5).unwrap();
    assert!(oracle_exact(&catalog::at_least_two(), &star, 1, &nu).is_err());
    let star = Tree::parse("(,,,,,,,,,,)").unwrap();
    assert!(oracle_exact(&catalog::sum_capped(), &star, 1, &StateDistribution::uniform(3)).is_err());
}
