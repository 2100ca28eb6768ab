//! Monte Carlo random state trees and the exhaustive small-tree oracle.
//!
//! A random state tree of depth `n` is a Galton–Watson tree cut at level
//! `n` whose level-`n` vertices are coloured i.i.d. `ν` and whose other
//! vertices take the automaton's colour. When `ν` is a fixed point every
//! vertex is then marginally `ν`-distributed.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::automata::{AutomatonSpec, Colour};
use crate::distmap::StateDistribution;
use crate::error::{invalid, Error, Result};
use crate::offspring::{ChildDistribution, ChildSampler};
use crate::pivot::{child_b_set_unchecked, AugmentedType, ColourMask, PivotAnalysis, TargetSets};

/// Default per-tree vertex budget.
pub const DEFAULT_NODE_BUDGET: usize = 10_000_000;
/// Frontier size cap of [`oracle_exact`] with two colours.
pub const ORACLE_LEAF_CAP_TWO: usize = 16;
/// Frontier size cap of [`oracle_exact`] with three colours.
pub const ORACLE_LEAF_CAP_THREE: usize = 10;

const NO_PARENT: usize = usize::MAX;

/// Rooted ordered tree in breadth-first order: vertex 0 is the root and
/// the children of every vertex are contiguous and in increasing order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Tree {
    first_child: Vec<usize>,
    child_count: Vec<u32>,
    parent: Vec<usize>,
    level: Vec<u32>,
}

impl Tree {
    pub fn root_only() -> Self {
        let mut t = Self::default();
        t.reset();
        t
    }

    fn reset(&mut self) {
        self.first_child.clear();
        self.child_count.clear();
        self.parent.clear();
        self.level.clear();
        self.first_child.push(0);
        self.child_count.push(0);
        self.parent.push(NO_PARENT);
        self.level.push(0);
    }

    /// Appends `m` children to `v`; must be called for vertices in order.
    fn grow(&mut self, v: usize, m: u32) {
        // childless vertices keep first_child = 0 so equal shapes compare equal
        self.first_child[v] = if m == 0 { 0 } else { self.len() };
        self.child_count[v] = m;
        let lvl = self.level[v] + 1;
        for _ in 0..m {
            self.first_child.push(0);
            self.child_count.push(0);
            self.parent.push(v);
            self.level.push(lvl);
        }
    }

    /// Builds a tree from the child counts of its vertices in BFS order.
    pub fn from_child_counts(counts: &[u32]) -> Result<Self> {
        let mut t = Self::root_only();
        for (v, &m) in counts.iter().enumerate() {
            if v >= t.len() {
                return invalid("more child counts than vertices");
            }
            t.grow(v, m);
        }
        if counts.len() != t.len() {
            return invalid(format!("{} child counts for {} vertices", counts.len(), t.len()));
        }
        Ok(t)
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn children(&self, v: usize) -> Range<usize> {
        let s = self.first_child[v];
        s..s + self.child_count[v] as usize
    }

    pub fn child_count(&self, v: usize) -> u32 {
        self.child_count[v]
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        (self.parent[v] != NO_PARENT).then_some(self.parent[v])
    }

    pub fn level(&self, v: usize) -> usize {
        self.level[v] as usize
    }

    pub fn height(&self) -> usize {
        self.level.last().map_or(0, |&l| l as usize)
    }

    /// Vertices at level `depth`.
    pub fn frontier(&self, depth: usize) -> Vec<usize> {
        (0..self.len()).filter(|&v| self.level(v) == depth).collect()
    }

    /// Parses the Newick-like shape syntax: a vertex is `(c1,c2,...)` or
    /// empty (or `.`) for a childless vertex; a trailing `;` is optional.
    /// `"(,,)"` is a star with three leaves and `""` a lone root.
    pub fn parse(text: &str) -> Result<Self> {
        struct Node(Vec<Node>);
        fn node(b: &[u8], pos: &mut usize, depth: usize) -> Result<Node> {
            if depth > 10_000 {
                return invalid("tree nested too deeply");
            }
            skip_ws(b, pos);
            match b.get(*pos) {
                Some(b'(') => {
                    *pos += 1;
                    let mut kids = vec![node(b, pos, depth + 1)?];
                    loop {
                        skip_ws(b, pos);
                        match b.get(*pos) {
                            Some(b',') => {
                                *pos += 1;
                                kids.push(node(b, pos, depth + 1)?);
                            }
                            Some(b')') => {
                                *pos += 1;
                                return Ok(Node(kids));
                            }
                            _ => return invalid(format!("expected ',' or ')' at byte {}", *pos)),
                        }
                    }
                }
                Some(b'.') => {
                    *pos += 1;
                    Ok(Node(Vec::new()))
                }
                _ => Ok(Node(Vec::new())),
            }
        }
        fn skip_ws(b: &[u8], pos: &mut usize) {
            while b.get(*pos).is_some_and(|c| c.is_ascii_whitespace()) {
                *pos += 1;
            }
        }
        let b = text.as_bytes();
        let mut pos = 0;
        let root = node(b, &mut pos, 0)?;
        skip_ws(b, &mut pos);
        if b.get(pos) == Some(&b';') {
            pos += 1;
            skip_ws(b, &mut pos);
        }
        if pos != b.len() {
            return invalid(format!("unexpected input at byte {pos} of tree shape"));
        }
        let mut counts = Vec::new();
        let mut queue = std::collections::VecDeque::from([root]);
        while let Some(Node(kids)) = queue.pop_front() {
            counts.push(kids.len() as u32);
            queue.extend(kids);
        }
        Self::from_child_counts(&counts)
    }

    /// Inverse of [`parse`](Self::parse), with a trailing `;`.
    pub fn to_newick(&self) -> String {
        let mut out = self.write_newick(&|_| String::new());
        out.push(';');
        out
    }

    fn write_newick(&self, label: &dyn Fn(usize) -> String) -> String {
        fn rec(t: &Tree, v: usize, label: &dyn Fn(usize) -> String, out: &mut String) {
            if t.child_count(v) > 0 {
                out.push('(');
                for (i, u) in t.children(v).enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    rec(t, u, label, out);
                }
                out.push(')');
            }
            out.push_str(&label(v));
        }
        let mut out = String::new();
        rec(self, 0, label, &mut out);
        out
    }
}

/// Colour set label for dumps and statistic names: `0+1`, or `-` if empty.
pub fn mask_label(mask: ColourMask, labels: &[String]) -> String {
    if mask == 0 {
        return "-".into();
    }
    crate::pivot::mask_colours(mask)
        .into_iter()
        .map(|c| labels[c].as_str())
        .collect::<Vec<_>>()
        .join("+")
}

fn type_label(t: AugmentedType, labels: &[String]) -> String {
    format!("{}|{}", labels[t.colour], mask_label(t.b_set, labels))
}

fn child_counts_into(tree: &Tree, colour: &[Colour], v: usize, counts: &mut [u32]) {
    counts.iter_mut().for_each(|c| *c = 0);
    for u in tree.children(v) {
        counts[colour[u]] += 1;
    }
}

/// Fills in the colour of every vertex above level `depth` from its
/// children; childless vertices there get `A(0,...,0)`. Entries at level
/// `depth` are read, not written.
pub fn propagate_colours(spec: &AutomatonSpec, tree: &Tree, depth: usize, colour: &mut [Colour]) {
    let mut counts = vec![0u32; spec.k()];
    for v in (0..tree.len()).rev() {
        if tree.level(v) < depth {
            child_counts_into(tree, colour, v, &mut counts);
            colour[v] = spec.eval(&counts);
        }
    }
}

/// `B_v` for every vertex, top down, with the root's set given.
pub fn mark_pivotal_with_root(
    spec: &AutomatonSpec,
    tree: &Tree,
    colour: &[Colour],
    root_b: ColourMask,
) -> Vec<ColourMask> {
    let mut b = vec![0; tree.len()];
    b[0] = root_b;
    let mut counts = vec![0u32; spec.k()];
    for v in 0..tree.len() {
        if b[v] == 0 || tree.child_count(v) == 0 {
            continue;
        }
        child_counts_into(tree, colour, v, &mut counts);
        for u in tree.children(v) {
            b[u] = child_b_set_unchecked(spec, &counts, colour[u], b[v]);
        }
    }
    b
}

/// `B_v` for every vertex, starting from `A_{colour(root)}`.
pub fn mark_pivotal(
    spec: &AutomatonSpec,
    tree: &Tree,
    colour: &[Colour],
    target: &TargetSets,
) -> Vec<ColourMask> {
    mark_pivotal_with_root(spec, tree, colour, target.get(colour[0]))
}

/// Root colour after recolouring `v` to `gamma` and re-evaluating every
/// ancestor.
pub fn switched_root_colour(
    spec: &AutomatonSpec,
    tree: &Tree,
    colour: &[Colour],
    v: usize,
    gamma: Colour,
) -> Colour {
    let mut counts = vec![0u32; spec.k()];
    let (mut u, mut new) = (v, gamma);
    while let Some(p) = tree.parent(u) {
        child_counts_into(tree, colour, p, &mut counts);
        counts[colour[u]] -= 1;
        counts[new] += 1;
        new = spec.eval(&counts);
        u = p;
    }
    new
}

/// `B_v` by brute force: every switch of `v`, replayed to the root.
pub fn replay_b_set(
    spec: &AutomatonSpec,
    tree: &Tree,
    colour: &[Colour],
    target: &TargetSets,
    v: usize,
) -> ColourMask {
    let a = target.get(colour[0]);
    (0..spec.k())
        .filter(|&g| g != colour[v])
        .filter(|&g| a & (1 << switched_root_colour(spec, tree, colour, v, g)) != 0)
        .fold(0, |m, g| m | (1 << g))
}

/// A coloured random state tree with its pivot marks.
#[derive(Clone, Debug)]
pub struct ColouredTreeSample {
    pub tree: Tree,
    pub colour: Vec<Colour>,
    pub b_set: Vec<ColourMask>,
    pub depth: usize,
    pub seed: u64,
    pub index: u64,
}

impl ColouredTreeSample {
    pub fn pivotal(&self, v: usize) -> bool {
        self.b_set[v] != 0
    }

    /// Every vertex above the frontier has the automaton's colour.
    pub fn check_compatible(&self, spec: &AutomatonSpec) -> Result<()> {
        let mut counts = vec![0u32; spec.k()];
        for v in 0..self.tree.len() {
            if self.tree.level(v) < self.depth {
                child_counts_into(&self.tree, &self.colour, v, &mut counts);
                let expect = spec.eval(&counts);
                if self.colour[v] != expect {
                    return Err(Error::Internal(format!(
                        "vertex {v} has colour {} but its children give {expect}",
                        self.colour[v]
                    )));
                }
            }
        }
        Ok(())
    }

    /// Every pivotal vertex has a pivotal parent.
    pub fn check_pivotal_closure(&self) -> Result<()> {
        for v in 1..self.tree.len() {
            let p = self.tree.parent(v).expect("non-root");
            if self.pivotal(v) && !self.pivotal(p) {
                return Err(Error::Internal(format!("vertex {v} pivotal under non-pivotal {p}")));
            }
        }
        Ok(())
    }

    /// Replays `pairs` random switches and checks each against `B_v`:
    /// `γ ∈ B_v` iff the root moves into its target set. Returns the number
    /// of switches into `B_v` checked.
    pub fn replay_check(
        &self,
        spec: &AutomatonSpec,
        target: &TargetSets,
        pairs: usize,
        rng: &mut impl Rng,
    ) -> Result<usize> {
        let a = target.get(self.colour[0]);
        let pivotal: Vec<usize> = (0..self.tree.len()).filter(|&v| self.pivotal(v)).collect();
        let mut hits = 0;
        for i in 0..pairs {
            // alternate pivotal vertices with arbitrary ones
            let v = if i % 2 == 0 && !pivotal.is_empty() {
                pivotal[rng.random_range(0..pivotal.len())]
            } else {
                rng.random_range(0..self.tree.len())
            };
            let others: Vec<Colour> = (0..spec.k()).filter(|&g| g != self.colour[v]).collect();
            let g = others[rng.random_range(0..others.len())];
            let moved = a & (1 << switched_root_colour(spec, &self.tree, &self.colour, v, g)) != 0;
            let claimed = self.b_set[v] & (1 << g) != 0;
            if moved != claimed {
                return Err(Error::Internal(format!(
                    "switching vertex {v} to {g}: replay {moved}, B-set {claimed}"
                )));
            }
            hits += usize::from(claimed);
        }
        Ok(hits)
    }

    /// Newick-like dump with `colour|bset|pivotal` labels.
    pub fn to_newick(&self, labels: &[String]) -> String {
        let mut out = self.tree.write_newick(&|v| {
            format!(
                "{}|{}|{}",
                labels[self.colour[v]],
                mask_label(self.b_set[v], labels),
                u8::from(self.pivotal(v))
            )
        });
        out.push(';');
        out
    }

    /// Number of pivotal vertices at each level `0..=depth`.
    pub fn pivotal_by_level(&self) -> Vec<u32> {
        let mut out = vec![0; self.depth + 1];
        for v in 0..self.tree.len() {
            if self.pivotal(v) {
                out[self.tree.level(v)] += 1;
            }
        }
        out
    }
}

fn cdf_of(nu: &StateDistribution) -> Vec<f64> {
    nu.weights()
        .iter()
        .scan(0.0, |acc, &w| {
            *acc += w;
            Some(*acc)
        })
        .collect()
}

fn draw_colour(cdf: &[f64], rng: &mut impl Rng) -> Colour {
    let u: f64 = rng.random();
    cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1)
}

fn expected_size(chi: &ChildDistribution, depth: usize) -> f64 {
    let m = chi.mean();
    (0..=depth).map(|j| m.powi(j as i32)).sum()
}

/// Reusable sampling state.
struct Sampler<'a> {
    spec: &'a AutomatonSpec,
    sampler: ChildSampler,
    cdf: Vec<f64>,
    target: TargetSets,
    depth: usize,
    budget: usize,
    seed: u64,
}

impl Sampler<'_> {
    fn rng(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        rng
    }

    fn draw(&self, index: u64, tree: &mut Tree, colour: &mut Vec<Colour>) -> Result<()> {
        let mut rng = self.rng(index);
        tree.reset();
        let mut v = 0;
        while v < tree.len() {
            if tree.level(v) < self.depth {
                let m = self.sampler.sample(&mut rng);
                if tree.len() as u64 + m > self.budget as u64 {
                    return Err(Error::Resource(format!(
                        "sample {index} exceeded the budget of {} vertices",
                        self.budget
                    )));
                }
                tree.grow(v, m as u32);
            }
            v += 1;
        }
        colour.clear();
        colour.resize(tree.len(), 0);
        for v in 0..tree.len() {
            if tree.level(v) == self.depth {
                colour[v] = draw_colour(&self.cdf, &mut rng);
            }
        }
        propagate_colours(self.spec, tree, self.depth, colour);
        Ok(())
    }

    fn sample(&self, index: u64) -> Result<ColouredTreeSample> {
        let mut tree = Tree::root_only();
        let mut colour = Vec::new();
        self.draw(index, &mut tree, &mut colour)?;
        let b_set = mark_pivotal(self.spec, &tree, &colour, &self.target);
        Ok(ColouredTreeSample { tree, colour, b_set, depth: self.depth, seed: self.seed, index })
    }
}

fn make_sampler<'a>(
    spec: &'a AutomatonSpec,
    chi: &ChildDistribution,
    nu: &StateDistribution,
    depth: usize,
    seed: u64,
    budget: usize,
) -> Result<Sampler<'a>> {
    if nu.k() != spec.k() {
        return invalid("distribution and automaton disagree on the colours");
    }
    let expected = expected_size(chi, depth);
    if expected > budget as f64 {
        return Err(Error::Resource(format!(
            "expected tree size {expected:.3e} exceeds the budget of {budget} vertices"
        )));
    }
    Ok(Sampler {
        spec,
        sampler: chi.sampler(),
        cdf: cdf_of(nu),
        target: TargetSets::maximal(spec.k()),
        depth,
        budget,
        seed,
    })
}

/// Draws one random state tree of the given depth, deterministically in
/// `seed`, with maximal target sets at the root.
pub fn sample_rst(
    spec: &AutomatonSpec,
    chi: &ChildDistribution,
    nu: &StateDistribution,
    depth: usize,
    seed: u64,
) -> Result<ColouredTreeSample> {
    sample_rst_indexed(spec, chi, nu, depth, seed, 0, DEFAULT_NODE_BUDGET)
}

/// Sample number `index` of the stream keyed by `seed`.
pub fn sample_rst_indexed(
    spec: &AutomatonSpec,
    chi: &ChildDistribution,
    nu: &StateDistribution,
    depth: usize,
    seed: u64,
    index: u64,
    budget: usize,
) -> Result<ColouredTreeSample> {
    make_sampler(spec, chi, nu, depth, seed, budget)?.sample(index)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum StatKey {
    /// Indicator that the root has this colour.
    RootColour(Colour),
    /// Pivotal children of type `to` per pivotal vertex of type `from`,
    /// pooled over levels below the frontier.
    MeanEntry { from: AugmentedType, to: AugmentedType },
    /// Number of pivotal vertices at this level.
    PivotalAtLevel(usize),
    /// Indicator that some vertex at this level is pivotal. A proxy for
    /// survival of the pivot tree, which has no closed form.
    SurvivalProxy(usize),
}

impl StatKey {
    pub fn name(&self, labels: &[String]) -> String {
        match self {
            StatKey::RootColour(c) => format!("root_colour[{}]", labels[*c]),
            StatKey::MeanEntry { from, to } => {
                format!("m[{}->{}]", type_label(*from, labels), type_label(*to, labels))
            }
            StatKey::PivotalAtLevel(n) => format!("pivotal_level[{n}]"),
            StatKey::SurvivalProxy(n) => format!("survival_proxy[{n}]"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Statistic {
    pub key: StatKey,
    pub mean: f64,
    /// Sample standard deviation over `√samples`; delta method for the
    /// pooled ratio of [`StatKey::MeanEntry`].
    pub std_error: f64,
    /// Samples, or observed parents for [`StatKey::MeanEntry`].
    pub count: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationSummary {
    pub requested: u64,
    /// Samples that stayed within the node budget; all statistics use
    /// exactly these.
    pub completed: u64,
    pub depth: usize,
    pub seed: u64,
    pub root_colour_counts: Vec<u64>,
    pub statistics: Vec<Statistic>,
    pub labels: Vec<String>,
}

impl SimulationSummary {
    pub fn is_partial(&self) -> bool {
        self.completed < self.requested
    }

    pub fn get(&self, key: StatKey) -> Option<&Statistic> {
        self.statistics.iter().find(|s| s.key == key)
    }
}

/// Per-sample tallies.
#[derive(Clone, Debug, Default)]
struct Tally {
    root: Colour,
    levels: Vec<u32>,
    /// parent type -> (parents, child type -> children)
    parents: BTreeMap<AugmentedType, (u32, BTreeMap<AugmentedType, u32>)>,
}

fn tally(sample_tree: &Tree, colour: &[Colour], b: &[ColourMask], depth: usize) -> Tally {
    let mut t = Tally { root: colour[0], levels: vec![0; depth + 1], ..Default::default() };
    for v in 0..sample_tree.len() {
        if b[v] == 0 {
            continue;
        }
        t.levels[sample_tree.level(v)] += 1;
        if sample_tree.level(v) < depth {
            let ty = AugmentedType { colour: colour[v], b_set: b[v] };
            let entry = t.parents.entry(ty).or_default();
            entry.0 += 1;
            for u in sample_tree.children(v) {
                if b[u] != 0 {
                    *entry.1.entry(AugmentedType { colour: colour[u], b_set: b[u] }).or_default() += 1;
                }
            }
        }
    }
    t
}

fn mean_se(values: impl Iterator<Item = f64> + Clone, n: u64) -> (f64, f64) {
    let nf = n as f64;
    let mean = values.clone().sum::<f64>() / nf;
    if n < 2 {
        return (mean, f64::NAN);
    }
    let var = values.map(|x| (x - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    (mean, (var / nf).sqrt())
}

/// Samples `samples` random state trees (sample `i` uses stream `i` of
/// `seed`) and estimates root colour frequencies, pivot mean-matrix
/// entries, and pivotal generation sizes. Output does not depend on the
/// number of threads.
pub fn estimate(
    spec: &AutomatonSpec,
    chi: &ChildDistribution,
    nu: &StateDistribution,
    depth: usize,
    samples: u64,
    seed: u64,
) -> Result<SimulationSummary> {
    estimate_with_budget(spec, chi, nu, depth, samples, seed, DEFAULT_NODE_BUDGET)
}

pub fn estimate_with_budget(
    spec: &AutomatonSpec,
    chi: &ChildDistribution,
    nu: &StateDistribution,
    depth: usize,
    samples: u64,
    seed: u64,
    budget: usize,
) -> Result<SimulationSummary> {
    if samples == 0 {
        return invalid("need at least one sample");
    }
    let sampler = make_sampler(spec, chi, nu, depth, seed, budget)?;
    let tallies: Vec<Option<Tally>> = (0..samples)
        .into_par_iter()
        .map_init(
            || (Tree::root_only(), Vec::new()),
            |(tree, colour), i| {
                sampler.draw(i, tree, colour).ok()?;
                let b = mark_pivotal(spec, tree, colour, &sampler.target);
                Some(tally(tree, colour, &b, depth))
            },
        )
        .collect();
    let done: Vec<&Tally> = tallies.iter().flatten().collect();
    let n = done.len() as u64;
    let k = spec.k();
    let labels = spec.colours().labels().to_vec();
    let mut root_colour_counts = vec![0u64; k];
    for t in &done {
        root_colour_counts[t.root] += 1;
    }
    let mut statistics = Vec::new();
    if n > 0 {
        for c in 0..k {
            let (mean, std_error) =
                mean_se(done.iter().map(|t| f64::from(u8::from(t.root == c))), n);
            statistics.push(Statistic { key: StatKey::RootColour(c), mean, std_error, count: n });
        }
        let mut pairs: BTreeSet<(AugmentedType, AugmentedType)> = BTreeSet::new();
        let mut types: BTreeSet<AugmentedType> = BTreeSet::new();
        for t in &done {
            for (from, (_, kids)) in &t.parents {
                types.insert(*from);
                types.extend(kids.keys().copied());
            }
        }
        for t in &done {
            for from in t.parents.keys() {
                for to in &types {
                    pairs.insert((*from, *to));
                }
            }
        }
        for (from, to) in pairs {
            let xs: Vec<f64> = done
                .iter()
                .map(|t| t.parents.get(&from).map_or(0.0, |p| f64::from(p.0)))
                .collect();
            let ys: Vec<f64> = done
                .iter()
                .map(|t| {
                    t.parents
                        .get(&from)
                        .and_then(|p| p.1.get(&to))
                        .map_or(0.0, |&c| f64::from(c))
                })
                .collect();
            let (sx, sy) = (xs.iter().sum::<f64>(), ys.iter().sum::<f64>());
            let r = sy / sx;
            let xbar = sx / n as f64;
            let std_error = if n < 2 {
                f64::NAN
            } else {
                let s2 = xs.iter().zip(&ys).map(|(x, y)| (y - r * x).powi(2)).sum::<f64>()
                    / (n as f64 - 1.0);
                (s2 / n as f64).sqrt() / xbar
            };
            statistics.push(Statistic {
                key: StatKey::MeanEntry { from, to },
                mean: r,
                std_error,
                count: sx as u64,
            });
        }
        for lvl in 0..=depth {
            let (mean, std_error) = mean_se(done.iter().map(|t| f64::from(t.levels[lvl])), n);
            statistics.push(Statistic { key: StatKey::PivotalAtLevel(lvl), mean, std_error, count: n });
        }
        for lvl in 0..=depth {
            let (mean, std_error) =
                mean_se(done.iter().map(|t| f64::from(u8::from(t.levels[lvl] > 0))), n);
            statistics.push(Statistic { key: StatKey::SurvivalProxy(lvl), mean, std_error, count: n });
        }
    }
    Ok(SimulationSummary {
        requested: samples,
        completed: n,
        depth,
        seed,
        root_colour_counts,
        statistics,
        labels,
    })
}

/// One statistic set against its exact value.
#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub name: String,
    pub key: StatKey,
    pub exact: Option<f64>,
    pub estimate: f64,
    pub std_error: f64,
    /// `(estimate - exact) / std_error`; `None` without an exact value or
    /// a usable standard error.
    pub z: Option<f64>,
}

/// Pairs every statistic with its exact counterpart: root colours with
/// `nu`, the rest with `analysis` (same colours, maximal targets) when
/// one is available.
pub fn compare_with_exact(
    summary: &SimulationSummary,
    nu: &StateDistribution,
    analysis: Option<&PivotAnalysis>,
) -> Vec<Comparison> {
    summary
        .statistics
        .iter()
        .map(|s| {
            let exact = match s.key {
                StatKey::RootColour(c) => Some(nu[c]),
                StatKey::MeanEntry { from, to } => analysis.map(|a| a.entry(from, to)),
                StatKey::PivotalAtLevel(n) => analysis.map(|a| a.generation_mean(n)),
                StatKey::SurvivalProxy(_) => None,
            };
            let z = exact.and_then(|e| {
                let d = s.mean - e;
                if s.std_error > 0.0 {
                    Some(d / s.std_error)
                } else if s.std_error == 0.0 {
                    // a degenerate statistic is only consistent if exact
                    Some(if d.abs() <= 1e-12 { 0.0 } else { d.signum() * f64::INFINITY })
                } else {
                    None
                }
            });
            Comparison {
                name: s.key.name(&summary.labels),
                key: s.key,
                exact,
                estimate: s.mean,
                std_error: s.std_error,
                z,
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson goodness-of-fit of the root colour counts against `nu`.
pub fn root_colour_chi_square(summary: &SimulationSummary, nu: &StateDistribution) -> Result<ChiSquareTest> {
    let n = summary.completed as f64;
    let mut statistic = 0.0;
    let mut cells = 0;
    for (c, &obs) in summary.root_colour_counts.iter().enumerate() {
        let e = n * nu[c];
        if e > 0.0 {
            statistic += (obs as f64 - e).powi(2) / e;
            cells += 1;
        } else if obs > 0 {
            statistic = f64::INFINITY;
        }
    }
    if cells < 2 {
        return invalid("need at least two colours with positive mass");
    }
    let dof = cells - 1;
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::Internal(e.to_string()))?;
    let p_value = if statistic.is_finite() { 1.0 - dist.cdf(statistic) } else { 0.0 };
    Ok(ChiSquareTest { statistic, dof, p_value })
}

/// Exact quantities for one explicit tree shape.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleResult {
    pub root_distribution: Vec<f64>,
    /// `P[v pivotal]` from switch-and-replay on every colouring.
    pub pivotal_probability: Vec<f64>,
    /// `P[v pivotal]` from the top-down B-set recursion.
    pub marked_probability: Vec<f64>,
    /// Expected pivotal vertices per level `0..=depth`.
    pub expected_pivotal_by_level: Vec<f64>,
    /// (colouring, vertex) pairs where replay and recursion disagree on `B_v`.
    pub b_set_mismatches: u64,
}

fn oracle_leaf_cap(k: usize) -> usize {
    match k {
        2 => ORACLE_LEAF_CAP_TWO,
        3 => ORACLE_LEAF_CAP_THREE,
        _ => (16.0 * std::f64::consts::LN_2 / (k as f64).ln()).floor() as usize,
    }
}

fn check_shape(tree: &Tree, depth: usize) -> Result<()> {
    if tree.height() > depth {
        return invalid(format!("tree has height {} above depth {depth}", tree.height()));
    }
    Ok(())
}

/// Enumerates every colouring of the level-`depth` vertices, weighted by
/// `Πν`, with maximal target sets.
pub fn oracle_exact(
    spec: &AutomatonSpec,
    tree: &Tree,
    depth: usize,
    nu: &StateDistribution,
) -> Result<OracleResult> {
    let k = spec.k();
    if nu.k() != k {
        return invalid("distribution and automaton disagree on the colours");
    }
    check_shape(tree, depth)?;
    let frontier = tree.frontier(depth);
    let cap = oracle_leaf_cap(k);
    if frontier.len() > cap {
        return Err(Error::Resource(format!(
            "{} frontier vertices exceed the enumeration cap of {cap}",
            frontier.len()
        )));
    }
    let target = TargetSets::maximal(k);
    let n = tree.len();
    let mut out = OracleResult {
        root_distribution: vec![0.0; k],
        pivotal_probability: vec![0.0; n],
        marked_probability: vec![0.0; n],
        expected_pivotal_by_level: vec![0.0; depth + 1],
        b_set_mismatches: 0,
    };
    let mut digits = vec![0usize; frontier.len()];
    let mut colour = vec![0; n];
    loop {
        let mut w = 1.0;
        for (i, &v) in frontier.iter().enumerate() {
            colour[v] = digits[i];
            w *= nu[digits[i]];
        }
        if w > 0.0 {
            propagate_colours(spec, tree, depth, &mut colour);
            out.root_distribution[colour[0]] += w;
            let marked = mark_pivotal(spec, tree, &colour, &target);
            for v in 0..n {
                let replay = replay_b_set(spec, tree, &colour, &target, v);
                if replay != marked[v] {
                    out.b_set_mismatches += 1;
                }
                if replay != 0 {
                    out.pivotal_probability[v] += w;
                }
                if marked[v] != 0 {
                    out.marked_probability[v] += w;
                    out.expected_pivotal_by_level[tree.level(v)] += w;
                }
            }
        }
        let mut i = 0;
        loop {
            if i == digits.len() {
                return Ok(out);
            }
            digits[i] += 1;
            if digits[i] < k {
                break;
            }
            digits[i] = 0;
            i += 1;
        }
    }
}

/// Colour distribution of every vertex, computed bottom up: level-`depth`
/// vertices are `ν`, and a parent's law is the automaton applied to the
/// independent (not identically distributed) children.
pub fn shape_distribution(
    spec: &AutomatonSpec,
    tree: &Tree,
    depth: usize,
    nu: &StateDistribution,
) -> Result<Vec<Vec<f64>>> {
    let k = spec.k();
    if nu.k() != k {
        return invalid("distribution and automaton disagree on the colours");
    }
    check_shape(tree, depth)?;
    let mut law = vec![Vec::new(); tree.len()];
    for v in (0..tree.len()).rev() {
        if tree.level(v) == depth {
            law[v] = nu.weights().to_vec();
            continue;
        }
        let mut counts: HashMap<Vec<u32>, f64> = HashMap::from([(vec![0; k], 1.0)]);
        for u in tree.children(v) {
            let mut next: HashMap<Vec<u32>, f64> = HashMap::with_capacity(counts.len() * k);
            for (c, p) in &counts {
                for (col, &q) in law[u].iter().enumerate() {
                    if q > 0.0 {
                        let mut c2 = c.clone();
                        c2[col] += 1;
                        *next.entry(c2).or_insert(0.0) += p * q;
                    }
                }
            }
            counts = next;
        }
        let mut dist = vec![0.0; k];
        for (c, p) in &counts {
            dist[spec.eval(c)] += p;
        }
        law[v] = dist;
    }
    Ok(law)
}

/// Monte Carlo on a fixed shape: per-vertex pivotal frequencies and root
/// colour frequencies, each as (mean, standard error).
#[derive(Clone, Debug, PartialEq)]
pub struct ShapeEstimate {
    pub samples: u64,
    pub root_colour: Vec<(f64, f64)>,
    pub pivotal: Vec<(f64, f64)>,
}

pub fn estimate_on_shape(
    spec: &AutomatonSpec,
    tree: &Tree,
    depth: usize,
    nu: &StateDistribution,
    samples: u64,
    seed: u64,
) -> Result<ShapeEstimate> {
    let k = spec.k();
    if nu.k() != k || samples < 2 {
        return invalid("need matching colours and at least two samples");
    }
    check_shape(tree, depth)?;
    let frontier = tree.frontier(depth);
    let cdf = cdf_of(nu);
    let target = TargetSets::maximal(k);
    let draws: Vec<(Colour, Vec<bool>)> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i);
            let mut colour = vec![0; tree.len()];
            for &v in &frontier {
                colour[v] = draw_colour(&cdf, &mut rng);
            }
            propagate_colours(spec, tree, depth, &mut colour);
            let b = mark_pivotal(spec, tree, &colour, &target);
            (colour[0], b.iter().map(|&m| m != 0).collect())
        })
        .collect();
    let root_colour = (0..k)
        .map(|c| mean_se(draws.iter().map(|d| f64::from(u8::from(d.0 == c))), samples))
        .collect();
    let pivotal = (0..tree.len())
        .map(|v| mean_se(draws.iter().map(|d| f64::from(u8::from(d.1[v]))), samples))
        .collect();
    Ok(ShapeEstimate { samples, root_colour, pivotal })
}

impl fmt::Display for SimulationSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "samples {}/{} depth {} seed {}", self.completed, self.requested, self.depth, self.seed)?;
        for s in &self.statistics {
            writeln!(f, "{:<28} {:>14.8} ± {:.3e}", s.key.name(&self.labels), s.mean, s.std_error)?;
        }
        Ok(())
    }
}
