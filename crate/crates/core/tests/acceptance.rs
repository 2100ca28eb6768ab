//! End-to-end acceptance checks. Runs without the libtest harness so that
//! each criterion prints exactly one PASS/FAIL line.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Discrete, DiscreteCDF, Poisson};

use treeauto::automata::{catalog, AutomatonSpec};
use treeauto::distmap::{DistMap, StateDistribution};
use treeauto::fixedpoints::{critical_lambda, find_fixed_points_2state, FixedPointRecord, RootOptions};
use treeauto::offspring::{ChildDistribution, DEFAULT_EPS};
use treeauto::pivot::{
    classify, growth_rate_identity_check, mean_matrix, mask_of, PivotAnalysis, PivotOptions, Status,
    TargetSets,
};
use treeauto::simulate::{
    compare_with_exact, estimate, mark_pivotal, oracle_exact, propagate_colours, replay_b_set,
    root_colour_chi_square, shape_distribution, StatKey, Tree,
};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn poisson_map(spec: &AutomatonSpec, lambda: f64) -> DistMap {
    DistMap::new(spec, &ChildDistribution::poisson(lambda).unwrap(), DEFAULT_EPS).unwrap()
}

fn roots(dm: &DistMap) -> Vec<FixedPointRecord> {
    find_fixed_points_2state(dm, &RootOptions::default()).unwrap()
}

fn status_of(dm: &DistMap, r: &FixedPointRecord) -> Status {
    classify(dm, &r.nu, &PivotOptions::default()).unwrap().verdict.status
}

fn full_analysis(dm: &DistMap, nu: &StateDistribution) -> PivotAnalysis {
    mean_matrix(dm, nu, &TargetSets::maximal(2), &PivotOptions::default()).unwrap()
}

fn two_colour_automata() -> Vec<(&'static str, AutomatonSpec)> {
    vec![
        ("at-least-one", catalog::at_least_one()),
        ("at-least-two", catalog::at_least_two()),
        ("zero-ones", catalog::zero_ones()),
        ("one-of-each", catalog::one_of_each()),
    ]
}

fn criterion_1() -> Outcome {
    let l = critical_lambda(
        &catalog::at_least_two(),
        ChildDistribution::poisson,
        3.0,
        4.0,
        1e-4,
        &RootOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    check((l - 3.35).abs() <= 0.01, format!("λ_crit = {l:.5}"))?;
    Ok(format!("λ_crit = {l:.5}"))
}

fn criterion_2() -> Outcome {
    let spec = catalog::at_least_two();
    let lambdas = [2.0, 3.0, 3.3, 3.5, 4.0, 5.0];
    let counts: Vec<usize> = lambdas.iter().map(|&l| roots(&poisson_map(&spec, l)).len()).collect();
    check(counts == vec![1, 1, 1, 3, 3, 3], format!("root counts {counts:?}"))?;
    let dm = poisson_map(&spec, 4.0);
    let verdicts: Vec<Status> = roots(&dm).iter().map(|r| status_of(&dm, r)).collect();
    check(
        verdicts == vec![Status::Interpretable, Status::Rogue, Status::Interpretable],
        format!("verdicts at λ=4: {verdicts:?}"),
    )?;
    Ok(format!("counts {counts:?}; λ=4 verdicts 0/a/b = interpretable/rogue/interpretable"))
}

/// The unique fixed point of zero-ones, its verdict and growth rate.
fn zero_ones_at(lambda: f64) -> (Status, f64) {
    let dm = poisson_map(&catalog::zero_ones(), lambda);
    let rs = roots(&dm);
    assert_eq!(rs.len(), 1);
    let c = classify(&dm, &rs[0].nu, &PivotOptions::default()).unwrap();
    (c.verdict.status, c.verdict.spectral_radius)
}

fn criterion_3() -> Outcome {
    let (s_lo, rho_lo) = zero_ones_at(2.70);
    let (s_hi, rho_hi) = zero_ones_at(2.74);
    check(s_lo == Status::Interpretable, format!("λ=2.70 gives {s_lo}"))?;
    check(s_hi == Status::Rogue, format!("λ=2.74 gives {s_hi}"))?;
    check(rho_lo < 1.0 && rho_hi > 1.0, format!("ρ = {rho_lo}, {rho_hi}"))?;
    // flip location on a 0.02 grid
    let grid: Vec<f64> = (0..=25).map(|i| 2.5 + 0.02 * i as f64).collect();
    let flip = grid
        .windows(2)
        .find(|w| zero_ones_at(w[0]).0 == Status::Interpretable && zero_ones_at(w[1]).0 == Status::Rogue)
        .map(|w| w[1])
        .ok_or("no flip on the grid")?;
    check((flip - std::f64::consts::E).abs() <= 0.02, format!("flip at {flip}"))?;
    Ok(format!("ρ(2.70) = {rho_lo:.5}, ρ(2.74) = {rho_hi:.5}, flip at λ = {flip:.2}"))
}

fn any_rogue(spec: &AutomatonSpec, lambda: f64) -> bool {
    let dm = poisson_map(spec, lambda);
    roots(&dm).iter().any(|r| status_of(&dm, r) == Status::Rogue)
}

fn criterion_4() -> Outcome {
    let spec = catalog::one_of_each();
    let l0 = critical_lambda(&spec, ChildDistribution::poisson, 1.0, 2.0, 1e-4, &RootOptions::default())
        .map_err(|e| e.to_string())?;
    check((1.30..=1.40).contains(&l0), format!("λ0 = {l0}"))?;
    let (mut lo, mut hi) = (l0 + 0.05, 3.0);
    check(!any_rogue(&spec, lo) && any_rogue(&spec, hi), "no verdict flip in bracket")?;
    while hi - lo > 1e-4 {
        let mid = 0.5 * (lo + hi);
        if any_rogue(&spec, mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let l1 = 0.5 * (lo + hi);
    check((2.25..=2.35).contains(&l1), format!("λ1 = {l1}"))?;
    Ok(format!("λ0 = {l0:.4}, λ1 = {l1:.4}"))
}

fn criterion_5() -> Outcome {
    let mut checked = 0;
    let mut worst = [0.0f64; 4];
    for (name, spec) in two_colour_automata() {
        for lambda in [1.0, 2.0, 3.0, 4.0, 5.0] {
            let dm = poisson_map(&spec, lambda);
            for r in roots(&dm).iter().filter(|r| r.support_full) {
                let a = full_analysis(&dm, &r.nu);
                let m = a.colour_matrix().unwrap();
                let (n0, n1) = (r.nu[0], r.nu[1]);
                let d1 = (m[1][1] - m[0][0]).abs();
                let d2 = (n1 * n1 * m[1][0] - n0 * n0 * m[0][1]).abs();
                let closed = m[0][0] + n0 / n1 * m[0][1];
                let d3 = (a.spectral_radius - closed).abs() / closed.abs().max(f64::MIN_POSITIVE);
                let g1 = a.generation_mean(1);
                let d4 = (0..=10)
                    .map(|n| {
                        let g = a.generation_mean(n);
                        (g - g1.powi(n as i32)).abs() / g.abs().max(f64::MIN_POSITIVE)
                    })
                    .fold(0.0, f64::max);
                for (w, d) in worst.iter_mut().zip([d1, d2, d3, d4]) {
                    *w = w.max(d);
                }
                check(d1 <= 1e-9 && d2 <= 1e-9, format!("{name} λ={lambda}: m identities off by {d1:e}, {d2:e}"))?;
                check(d3 <= 1e-10, format!("{name} λ={lambda}: ρ vs closed form {d3:e}"))?;
                check(d4 <= 1e-8, format!("{name} λ={lambda}: generation means {d4:e}"))?;
                checked += 1;
            }
        }
    }
    check(checked > 0, "no full-support fixed points")?;
    Ok(format!(
        "{checked} fixed points; worst |m11-m00| {:.1e}, eq-M {:.1e}, ρ rel {:.1e}, ℓ_n rel {:.1e}",
        worst[0], worst[1], worst[2], worst[3]
    ))
}

fn criterion_6() -> Outcome {
    let spec = catalog::at_least_two();
    let (mut worst_rel, mut worst_zero) = (0.0f64, 0.0f64);
    for lambda in [3.5, 4.0, 5.0] {
        let dm = poisson_map(&spec, lambda);
        let rs = roots(&dm);
        check(rs.len() == 3, format!("λ={lambda}: {} roots", rs.len()))?;
        for r in &rs {
            let c = growth_rate_identity_check(&dm, &r.nu).map_err(|e| e.to_string())?;
            if r.support_full {
                check(c.relative_difference <= 1e-5, format!("λ={lambda} p={}: {c:?}", r.p()))?;
                worst_rel = worst_rel.max(c.relative_difference);
            } else {
                // p = 0: both sides vanish, the pivot tree is empty
                check(c.pass && c.spectral_radius == 0.0, format!("λ={lambda} p={}: {c:?}", r.p()))?;
                worst_zero = worst_zero.max(c.derivative.abs());
            }
        }
    }
    Ok(format!(
        "9 roots; interior worst relative difference {worst_rel:.1e}; at p = 0 ρ = 0 and |Ψ'| <= {worst_zero:.1e}"
    ))
}

fn criterion_7() -> Outcome {
    let spec = catalog::at_least_two();
    let chi = ChildDistribution::poisson(4.0).unwrap();
    let dm = poisson_map(&spec, 4.0);
    let top = roots(&dm).pop().unwrap();
    let analysis = full_analysis(&dm, &top.nu);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| estimate(&spec, &chi, &top.nu, 6, 100_000, 42).unwrap())
    };
    let summary = run(1);
    check(!summary.is_partial(), "budget exhausted")?;
    let cmp = compare_with_exact(&summary, &top.nu, Some(&analysis));
    let mut worst = 0.0f64;
    let mut n = 0;
    for c in &cmp {
        let reported = match c.key {
            StatKey::RootColour(_) | StatKey::MeanEntry { .. } => true,
            StatKey::PivotalAtLevel(l) => l <= 4,
            StatKey::SurvivalProxy(_) => false,
        };
        if !reported {
            continue;
        }
        let z = c.z.ok_or(format!("{}: no z-score", c.name))?;
        check(z.abs() <= 4.0, format!("{}: estimate {} exact {:?} z {z:.2}", c.name, c.estimate, c.exact))?;
        worst = worst.max(z.abs());
        n += 1;
    }
    let chi2 = root_colour_chi_square(&summary, &top.nu).map_err(|e| e.to_string())?;
    check(chi2.p_value >= 1e-3, format!("root colour χ² p = {}", chi2.p_value))?;
    check(run(3) == summary, "summary depends on the thread count")?;
    Ok(format!("{n} statistics, max |z| = {worst:.2}, χ² p = {:.3}, 1 and 3 threads identical", chi2.p_value))
}

/// Ψ for the many-roots automaton in closed form: with `μ = λp`,
/// `P[N1 ∈ {0, 6, 7}] + P[N1 ≥ 12]` for `N1 ~ Poisson(μ)`.
fn many_roots_closed(lambda: f64, p: f64) -> f64 {
    let mu = lambda * p;
    if mu == 0.0 {
        return 1.0;
    }
    let d = Poisson::new(mu).unwrap();
    d.pmf(0) + d.pmf(6) + d.pmf(7) + d.sf(11)
}

fn criterion_8() -> Outcome {
    let spec = catalog::many_roots();
    let mut report = Vec::new();
    for lambda in [17.0, 19.0, 21.0, 23.0, 25.0] {
        let solver = roots(&poisson_map(&spec, lambda)).len();
        let n = 1_000_000;
        let mut changes = 0;
        let mut prev = many_roots_closed(lambda, 0.0);
        for i in 1..=n {
            let p = i as f64 / n as f64;
            let g = many_roots_closed(lambda, p) - p;
            if (g > 0.0) != (prev > 0.0) || g == 0.0 {
                changes += 1;
            }
            prev = g;
        }
        check(solver == changes, format!("λ={lambda}: solver {solver}, grid {changes}"))?;
        report.push(format!("{lambda}:{solver}"));
    }
    Ok(format!("root counts {}", report.join(" ")))
}

fn random_tree(rng: &mut impl Rng, cap: usize) -> (Tree, usize) {
    loop {
        let depth = rng.random_range(1..=3);
        let mut counts = vec![];
        let mut level = vec![0usize];
        let mut v = 0;
        while v < level.len() {
            let m = if level[v] < depth { rng.random_range(0..=3u32) } else { 0 };
            counts.push(m);
            for _ in 0..m {
                level.push(level[v] + 1);
            }
            v += 1;
        }
        let frontier = level.iter().filter(|&&l| l == depth).count();
        if frontier <= cap {
            return (Tree::from_child_counts(&counts).unwrap(), depth);
        }
    }
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut specs = two_colour_automata().into_iter().map(|(_, s)| (s, 16usize)).collect::<Vec<_>>();
    specs.push((catalog::sum_capped(), 10));
    let mut worst_root = 0.0f64;
    let mut worst_piv = 0.0f64;
    let mut trees = 0;
    for (spec, cap) in &specs {
        let k = spec.k();
        for _ in 0..50 {
            let (tree, depth) = random_tree(&mut rng, *cap);
            let w: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
            let nu = StateDistribution::normalized(w).unwrap();
            let exact = oracle_exact(spec, &tree, depth, &nu).map_err(|e| e.to_string())?;
            let law = shape_distribution(spec, &tree, depth, &nu).map_err(|e| e.to_string())?;
            for c in 0..k {
                worst_root = worst_root.max((exact.root_distribution[c] - law[0][c]).abs());
            }
            for v in 0..tree.len() {
                worst_piv = worst_piv.max((exact.pivotal_probability[v] - exact.marked_probability[v]).abs());
            }
            check(exact.b_set_mismatches == 0, format!("B-set mismatch on {}", tree.to_newick()))?;
            trees += 1;
        }
    }
    check(worst_root <= 1e-12, format!("root distribution off by {worst_root:e}"))?;
    check(worst_piv <= 1e-12, format!("pivotal probability off by {worst_piv:e}"))?;
    Ok(format!("{trees} trees; worst root {worst_root:.1e}, pivotal {worst_piv:.1e}"))
}

fn criterion_10() -> Outcome {
    // at-least-two: R; R1 R2 R3; R11 R12 | R21 | R31 R32
    let spec = catalog::at_least_two();
    let t = Tree::parse("((,),(),(,))").unwrap();
    let mut colour = vec![0, 0, 0, 1, 1, 0, 0, 1, 1];
    let drawn = colour.clone();
    propagate_colours(&spec, &t, 2, &mut colour);
    check(colour == drawn, "fixture colours are not compatible")?;
    let target = TargetSets::maximal(2);
    let b = mark_pivotal(&spec, &t, &colour, &target);
    let bold: Vec<bool> = b.iter().map(|&m| m != 0).collect();
    let expect = [true, true, true, false, false, true, false, false, false];
    check(bold == expect, format!("bold flags {bold:?}"))?;
    for v in 0..t.len() {
        check(replay_b_set(&spec, &t, &colour, &target, v) == b[v], format!("replay differs at {v}"))?;
    }

    // sum-capped: R; R1 R2 R3; R21 | R31 R32, R1 a leaf
    let spec = catalog::sum_capped();
    let t = Tree::parse("(,(),(,))").unwrap();
    let mut colour = vec![2, 0, 1, 1, 1, 0, 1];
    let drawn = colour.clone();
    propagate_colours(&spec, &t, 2, &mut colour);
    check(colour == drawn, "fixture colours are not compatible")?;
    let target = TargetSets::maximal(3);
    let b = mark_pivotal(&spec, &t, &colour, &target);
    let m = mask_of;
    let expect = vec![m(&[0, 1]), 0, m(&[0]), m(&[0]), m(&[0]), 0, m(&[0])];
    check(b == expect, format!("B-sets {b:?}"))?;
    for v in 0..t.len() {
        check(replay_b_set(&spec, &t, &colour, &target, v) == b[v], format!("replay differs at {v}"))?;
    }
    Ok("9 bold flags and 7 B-sets reproduced".into())
}

/// Name, check and time limit in seconds.
type Criterion = (&'static str, fn() -> Outcome, u64);

fn main() {
    let criteria: [Criterion; 10] = [
        ("critical λ of at-least-two", criterion_1, 10),
        ("root counts and λ=4 verdicts", criterion_2, 30),
        ("zero-ones threshold at e", criterion_3, 10),
        ("one-of-each thresholds", criterion_4, 30),
        ("mean-matrix structure", criterion_5, 60),
        ("growth rate equals Ψ'", criterion_6, 10),
        ("Monte Carlo vs exact", criterion_7, 120),
        ("many-roots branch counts", criterion_8, 60),
        ("small-tree oracle", criterion_9, 30),
        ("worked tree fixtures", criterion_10, 1),
    ];
    let mut failed = 0;
    for (i, (name, f, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let took = start.elapsed();
        let outcome = match outcome {
            Ok(msg) if took > Duration::from_secs(*limit) => {
                Err(format!("{msg}; took {took:.1?}, limit {limit} s"))
            }
            other => other,
        };
        match outcome {
            Ok(msg) => println!("criterion {:>2} PASS {name} ({took:.2?}): {msg}", i + 1),
            Err(msg) => {
                failed += 1;
                println!("criterion {:>2} FAIL {name} ({took:.2?}): {msg}", i + 1);
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
