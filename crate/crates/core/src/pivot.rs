//! The pivot tree and the interpretable/rogue classification.
//!
//! A vertex is pivotal when switching its colour (and recolouring its
//! ancestors by the automaton) can move the root's colour into the
//! root's target set. `B_v` is the set of switch targets that do so. The
//! pivotal vertices form a multitype Galton–Watson tree whose types are
//! `(colour, B_v)`; its mean matrix decides the verdict: with two colours
//! a fixed point is interpretable iff the spectral radius is at most one,
//! and with more colours a subcritical pivot tree (maximal target sets)
//! suffices.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};

use crate::automata::{AutomatonSpec, Colour, DEFAULT_MONOTONE_BOUND};
use crate::distmap::{DistMap, StateDistribution, DEFAULT_DERIVATIVE_STEP};
use crate::error::{invalid, Error, Result};
use crate::fixedpoints::{DEFAULT_TOL, SUPPORT_THRESHOLD};

/// Subset of the colours as a bitmask; bit `c` set means colour `c` is in.
pub type ColourMask = u32;

/// Longest horizon for generation means.
pub const DEFAULT_GENERATIONS: usize = 20;
/// Default criticality band when the truncation deficit is negligible.
pub const DEFAULT_BAND: f64 = 1e-9;

pub fn mask_colours(mask: ColourMask) -> Vec<Colour> {
    (0..32).filter(|c| mask & (1 << c) != 0).collect()
}

pub fn mask_of(colours: &[Colour]) -> ColourMask {
    colours.iter().fold(0, |m, &c| m | (1 << c))
}

/// Formats a mask as `{0,1}` using colour labels, `∅` when empty.
pub fn format_mask(mask: ColourMask, labels: &[String]) -> String {
    if mask == 0 {
        return "∅".to_string();
    }
    let names: Vec<&str> = mask_colours(mask).into_iter().map(|c| labels[c].as_str()).collect();
    format!("{{{}}}", names.join(","))
}

/// Per root colour σ, the colours the root may be switched into.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TargetSets {
    sets: Vec<ColourMask>,
}

impl TargetSets {
    pub fn new(sets: Vec<ColourMask>) -> Result<Self> {
        let k = sets.len();
        if !(2..=16).contains(&k) {
            return invalid(format!("target sets for {k} colours"));
        }
        for (sigma, &a) in sets.iter().enumerate() {
            if a == 0 || a & (1 << sigma) != 0 || a >> k != 0 {
                return invalid(format!("target set for colour {sigma} must be nonempty and exclude it"));
            }
        }
        Ok(Self { sets })
    }

    /// `A_σ = Σ \ {σ}` for every σ.
    pub fn maximal(k: usize) -> Self {
        let all = (1u32 << k) - 1;
        Self { sets: (0..k).map(|s| all & !(1 << s)).collect() }
    }

    pub fn get(&self, sigma: Colour) -> ColourMask {
        self.sets[sigma]
    }

    pub fn k(&self) -> usize {
        self.sets.len()
    }

    pub fn is_maximal(&self) -> bool {
        *self == Self::maximal(self.k())
    }
}

/// Vertex type in the pivot tree: its colour and its switch set `B_v`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AugmentedType {
    pub colour: Colour,
    pub b_set: ColourMask,
}

impl AugmentedType {
    pub fn is_pivotal(&self) -> bool {
        self.b_set != 0
    }
}

/// `B` of a child of colour `child_colour`, given the parent's child
/// counts and the parent's own `B`.
pub fn child_b_set(
    spec: &AutomatonSpec,
    counts: &[u32],
    child_colour: Colour,
    parent_b: ColourMask,
) -> Result<ColourMask> {
    if counts.len() != spec.k() || child_colour >= spec.k() {
        return invalid("count vector or colour does not match the automaton");
    }
    if counts[child_colour] == 0 {
        return invalid(format!("no child of colour {child_colour}"));
    }
    Ok(child_b_set_unchecked(spec, counts, child_colour, parent_b))
}

pub(crate) fn child_b_set_unchecked(
    spec: &AutomatonSpec,
    counts: &[u32],
    child_colour: Colour,
    parent_b: ColourMask,
) -> ColourMask {
    if parent_b == 0 {
        return 0;
    }
    let mut b = 0;
    for gamma in (0..spec.k()).filter(|&g| g != child_colour) {
        if parent_b & (1 << spec.eval_switched(counts, child_colour, gamma)) != 0 {
            b |= 1 << gamma;
        }
    }
    b
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Criticality {
    Subcritical,
    Critical,
    Supercritical,
}

impl fmt::Display for Criticality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criticality::Subcritical => "subcritical",
            Criticality::Critical => "critical",
            Criticality::Supercritical => "supercritical",
        })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct PivotOptions {
    /// Largest residual `|Ψ(ν) - ν|` accepted as a fixed point.
    pub fixed_point_tol: f64,
    pub generations: usize,
}

impl Default for PivotOptions {
    fn default() -> Self {
        Self { fixed_point_tol: 10.0 * DEFAULT_TOL, generations: DEFAULT_GENERATIONS }
    }
}

/// Mean matrix of the pivot tree and everything derived from it.
#[derive(Clone, Debug)]
pub struct PivotAnalysis {
    pub nu: StateDistribution,
    pub target: TargetSets,
    /// Pivotal types reachable from the root types, sorted.
    pub types: Vec<AugmentedType>,
    /// `M[i][j]`: expected number of pivotal children of type `j` of a
    /// vertex of type `i`.
    pub mean_matrix: DMatrix<f64>,
    /// Distribution of the root's type over `types`.
    pub root_weights: Vec<f64>,
    pub spectral_radius: f64,
    pub criticality: Criticality,
    /// Half-width of the band around 1 classified as critical.
    pub band: f64,
    /// Offspring mass lost to truncation.
    pub deficit: f64,
    /// `E[ℓ_n(T_piv)]` for `n = 0..=generations`.
    pub generation_means: Vec<f64>,
}

impl PivotAnalysis {
    pub fn type_index(&self, t: AugmentedType) -> Option<usize> {
        self.types.iter().position(|&u| u == t)
    }

    /// `M` entry between two types, zero if either is absent.
    pub fn entry(&self, from: AugmentedType, to: AugmentedType) -> f64 {
        match (self.type_index(from), self.type_index(to)) {
            (Some(i), Some(j)) => self.mean_matrix[(i, j)],
            _ => 0.0,
        }
    }

    /// Two-colour mean matrix indexed by colour, `m[i][j]`.
    pub fn colour_matrix(&self) -> Option<[[f64; 2]; 2]> {
        if self.nu.k() != 2 {
            return None;
        }
        let t = |c: Colour| AugmentedType { colour: c, b_set: 1 << (1 - c) };
        let mut m = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                m[i][j] = self.entry(t(i), t(j));
            }
        }
        Some(m)
    }

    /// Expected number of pivotal vertices at depth `n`.
    pub fn generation_mean(&self, n: usize) -> f64 {
        generation_mean_of(&self.mean_matrix, &self.root_weights, n)
    }
}

fn generation_mean_of(m: &DMatrix<f64>, root: &[f64], n: usize) -> f64 {
    let mut v = DVector::from_column_slice(root).transpose();
    for _ in 0..n {
        v = &v * m;
    }
    v.sum()
}

fn criticality_band(deficit: f64) -> f64 {
    if deficit < 1e-10 {
        DEFAULT_BAND
    } else {
        100.0 * deficit
    }
}

/// Builds the pivot tree's mean matrix at the fixed point `nu`, which
/// must have full support.
pub fn mean_matrix(
    dm: &DistMap,
    nu: &StateDistribution,
    target: &TargetSets,
    opts: &PivotOptions,
) -> Result<PivotAnalysis> {
    build_analysis(dm, nu, target, opts, false)
}

/// With `boundary`, colours without mass are allowed: they never occur,
/// so only types of support colours appear, while switch targets still
/// range over every colour.
fn build_analysis(
    dm: &DistMap,
    nu: &StateDistribution,
    target: &TargetSets,
    opts: &PivotOptions,
    boundary: bool,
) -> Result<PivotAnalysis> {
    let k = dm.k();
    let spec = dm.spec();
    if nu.k() != k || target.k() != k {
        return invalid("distribution, target sets and automaton disagree on the colours");
    }
    let outside: Vec<Colour> = (0..k).filter(|&c| nu[c] <= SUPPORT_THRESHOLD).collect();
    if !outside.is_empty() && !boundary {
        return Err(Error::ShrinkRequired { colours: outside });
    }
    let present = |c: Colour| !outside.contains(&c);
    let residual = dm.psi(nu)?.residual(nu.weights());
    if residual > opts.fixed_point_tol {
        return Err(Error::NotFixedPoint { residual, limit: opts.fixed_point_tol });
    }

    let entries: Vec<(Vec<u32>, f64, Colour)> =
        dm.table()
            .weighted(nu.weights())
            .filter(|&(_, w, _)| w > 0.0)
            .map(|(c, w, s)| (c.to_vec(), w, s))
            .collect();

    let cap = (1usize << k) * k;
    let mut index: BTreeMap<AugmentedType, usize> = BTreeMap::new();
    let mut queue: Vec<AugmentedType> = Vec::new();
    let mut rows: Vec<BTreeMap<AugmentedType, f64>> = Vec::new();
    for sigma in (0..k).filter(|&c| present(c)) {
        let t = AugmentedType { colour: sigma, b_set: target.get(sigma) };
        index.insert(t, queue.len());
        queue.push(t);
    }
    let mut next = 0;
    while next < queue.len() {
        let t = queue[next];
        next += 1;
        let mut row: BTreeMap<AugmentedType, f64> = BTreeMap::new();
        for (counts, w, parent) in &entries {
            if *parent != t.colour {
                continue;
            }
            let w = w / nu[t.colour];
            for c in 0..k {
                if counts[c] == 0 {
                    continue;
                }
                let b = child_b_set_unchecked(spec, counts, c, t.b_set);
                if b == 0 {
                    continue;
                }
                let child = AugmentedType { colour: c, b_set: b };
                *row.entry(child).or_insert(0.0) += w * f64::from(counts[c]);
                if let std::collections::btree_map::Entry::Vacant(e) = index.entry(child) {
                    if queue.len() >= cap {
                        return Err(Error::Resource(format!("more than {cap} pivot types")));
                    }
                    e.insert(queue.len());
                    queue.push(child);
                }
            }
        }
        rows.push(row);
    }

    let mut types = queue.clone();
    types.sort();
    let pos = |t: &AugmentedType| types.binary_search(t).expect("known type");
    let n = types.len();
    let mut m = DMatrix::<f64>::zeros(n, n);
    for (t, row) in queue.iter().zip(&rows) {
        for (child, v) in row {
            m[(pos(t), pos(child))] = *v;
        }
    }
    let mut root_weights = vec![0.0; n];
    for sigma in (0..k).filter(|&c| present(c)) {
        root_weights[pos(&AugmentedType { colour: sigma, b_set: target.get(sigma) })] = nu[sigma];
    }

    let rho = spectral_radius(&m)?;
    let deficit = dm.deficit();
    let band = criticality_band(deficit);
    let criticality = if rho < 1.0 - band {
        Criticality::Subcritical
    } else if rho <= 1.0 + band {
        Criticality::Critical
    } else {
        Criticality::Supercritical
    };
    let generation_means = (0..=opts.generations)
        .map(|g| generation_mean_of(&m, &root_weights, g))
        .collect();
    Ok(PivotAnalysis {
        nu: nu.clone(),
        target: target.clone(),
        types,
        mean_matrix: m,
        root_weights,
        spectral_radius: rho,
        criticality,
        band,
        deficit,
        generation_means,
    })
}

/// Crude `ρ` from `‖M^(2^j)‖^(1/2^j)`, used to pick the power-iteration shift.
fn gelfand_estimate(m: &DMatrix<f64>) -> f64 {
    let mut p = m.clone();
    let mut log_scale = 0.0;
    let mut power = 1.0;
    for _ in 0..10 {
        let norm = p.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        if norm == 0.0 {
            return 0.0;
        }
        p /= norm;
        log_scale += norm.ln() / power;
        p = &p * &p;
        power *= 2.0;
    }
    let norm = p.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    if norm == 0.0 {
        return 0.0;
    }
    (log_scale + norm.ln() / power).exp()
}

/// Power iteration on `M + sI` from a positive start, stopping when the
/// Collatz–Wielandt bounds `min (Bx)_i/x_i <= ρ(B) <= max (Bx)_i/x_i` meet.
fn power_iteration(m: &DMatrix<f64>, shift: f64, start: DVector<f64>) -> Option<f64> {
    let n = m.nrows();
    let b = m + DMatrix::<f64>::identity(n, n) * shift;
    let mut x = start / 1.0;
    x /= x.sum();
    for _ in 0..20_000 {
        let y = &b * &x;
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for i in 0..n {
            let r = y[i] / x[i];
            lo = lo.min(r);
            hi = hi.max(r);
        }
        if hi - lo <= 1e-14 * hi {
            return Some(0.5 * (lo + hi) - shift);
        }
        let s = y.sum();
        if !(s > 0.0) || !s.is_finite() {
            return None;
        }
        x = y / s;
    }
    None
}

/// Spectral radius of a square nonnegative matrix.
///
/// Power iteration with restarts; reducible matrices whose bounds never
/// meet fall back to the Schur eigenvalues.
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    if m.nrows() != m.ncols() {
        return invalid(format!("matrix is {}x{}, not square", m.nrows(), m.ncols()));
    }
    if m.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return invalid("matrix has negative or non-finite entries");
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(0.0);
    }
    if n == 1 {
        return Ok(m[(0, 0)]);
    }
    let estimate = gelfand_estimate(m);
    if estimate == 0.0 {
        return Ok(0.0);
    }
    let shift = 0.5 * estimate;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed);
    let mut starts = vec![DVector::from_element(n, 1.0)];
    for _ in 0..3 {
        starts.push(DVector::from_fn(n, |_, _| rng.random_range(0.5..1.5)));
    }
    let best = starts
        .into_iter()
        .filter_map(|s| power_iteration(m, shift, s))
        .fold(None, |acc: Option<f64>, r| Some(acc.map_or(r, |a| a.max(r))));
    Ok(match best {
        Some(r) => r.max(0.0),
        None => m
            .clone()
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Interpretable,
    Rogue,
    /// Critical with three or more colours: interpretable provided the
    /// expected generation sizes stay bounded by one.
    InterpretableIfBounded,
    Unknown,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Interpretable => "interpretable",
            Status::Rogue => "rogue",
            Status::InterpretableIfBounded => "interpretable_if_bounded",
            Status::Unknown => "unknown",
        })
    }
}

/// Why a verdict was reached.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Justification {
    /// Single colour in the support: the constant classification works.
    ConstantColour,
    /// Two colours: interpretable iff the pivot tree is not supercritical.
    TwoColourCriterion,
    /// Three or more colours, subcritical pivot tree with maximal targets.
    SubcriticalMaximalTarget,
    /// Three or more colours, critical; depends on bounded generations.
    CriticalBoundedGenerations,
    /// Three or more colours, supercritical; no known criterion decides this case.
    SupercriticalUnresolved,
}

impl fmt::Display for Justification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Justification::ConstantColour => "single-colour support",
            Justification::TwoColourCriterion => "two-colour criterion",
            Justification::SubcriticalMaximalTarget => "subcritical pivot tree, maximal targets",
            Justification::CriticalBoundedGenerations => "critical pivot tree, bounded generations",
            Justification::SupercriticalUnresolved => "supercritical, undecided for 3+ colours",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Verdict {
    pub status: Status,
    pub justification: Justification,
    pub spectral_radius: f64,
    /// For the critical many-colour case: whether `E[ℓ_n] <= 1 + band`
    /// held over the second half of the computed horizon.
    pub bounded_generations: Option<bool>,
    pub notes: Vec<String>,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cmp = if self.spectral_radius > 1.0 { ">" } else if self.spectral_radius < 1.0 { "<" } else { "=" };
        write!(f, "{} ({}; ρ {cmp} 1)", self.status, self.justification)
    }
}

/// Interpretable/rogue verdict for an analysis built with maximal targets.
pub fn verdict(has_finite_log_moment: bool, analysis: &PivotAnalysis) -> Result<Verdict> {
    if !analysis.target.is_maximal() {
        return invalid("verdicts are only defined for maximal target sets");
    }
    let rho = analysis.spectral_radius;
    let band = analysis.band;
    let mut notes = Vec::new();
    let k = analysis.nu.k();
    let (status, justification, bounded) = if k == 2 {
        if !has_finite_log_moment {
            notes.push("offspring law lacks a finite log moment; criterion may not apply".into());
        }
        let s = if rho <= 1.0 + band { Status::Interpretable } else { Status::Rogue };
        (s, Justification::TwoColourCriterion, None)
    } else if rho < 1.0 - band {
        (Status::Interpretable, Justification::SubcriticalMaximalTarget, None)
    } else if rho <= 1.0 + band {
        let g = &analysis.generation_means;
        let ok = g[g.len() / 2..].iter().all(|&v| v <= 1.0 + band);
        notes.push(format!(
            "E[l_n] <= 1 checked for n in {}..={}: {}",
            g.len() / 2,
            g.len() - 1,
            if ok { "holds" } else { "fails" }
        ));
        (Status::InterpretableIfBounded, Justification::CriticalBoundedGenerations, Some(ok))
    } else {
        (Status::Unknown, Justification::SupercriticalUnresolved, None)
    };
    Ok(Verdict { status, justification, spectral_radius: rho, bounded_generations: bounded, notes })
}

/// Verdict for any fixed point, restricting the automaton to the support
/// of `nu` first when some colours carry no mass.
#[derive(Clone, Debug)]
pub struct Classification {
    /// Colours carrying mass, in the original indexing.
    pub support: Vec<Colour>,
    /// Pivot analysis on the support; `None` for a single-colour support.
    pub analysis: Option<PivotAnalysis>,
    pub verdict: Verdict,
}

pub fn classify(dm: &DistMap, nu: &StateDistribution, opts: &PivotOptions) -> Result<Classification> {
    let support = nu.support(SUPPORT_THRESHOLD);
    let log_moment = dm.chi().has_finite_log_moment();
    let residual = dm.psi(nu)?.residual(nu.weights());
    if residual > opts.fixed_point_tol {
        return Err(Error::NotFixedPoint { residual, limit: opts.fixed_point_tol });
    }
    if support.len() == 1 {
        return Ok(Classification {
            support,
            analysis: None,
            verdict: Verdict {
                status: Status::Interpretable,
                justification: Justification::ConstantColour,
                spectral_radius: 0.0,
                bounded_generations: None,
                notes: vec!["point mass: every tree gets the same colour".into()],
            },
        });
    }
    let analysis = if support.len() == dm.k() {
        mean_matrix(dm, nu, &TargetSets::maximal(dm.k()), opts)?
    } else {
        let restricted = dm.spec().restrict(&support, dm.table().max_children())?;
        let sub = DistMap::new(&restricted, dm.chi(), dm.eps())?;
        let sub_nu = StateDistribution::normalized(support.iter().map(|&c| nu[c]).collect())?;
        mean_matrix(&sub, &sub_nu, &TargetSets::maximal(support.len()), opts)?
    };
    let mut verdict = verdict(log_moment, &analysis)?;
    if support.len() < dm.k() {
        verdict.notes.push(format!("restricted to the {} colours in the support", support.len()));
    }
    Ok(Classification { support, analysis: Some(analysis), verdict })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IdentityCheck {
    pub spectral_radius: f64,
    pub derivative: f64,
    pub relative_difference: f64,
    pub pass: bool,
}

/// For monotone two-colour automata the pivot tree's growth rate equals
/// `Ψ'(p)` at the fixed point; compares the two independently computed
/// values. Boundary fixed points `p ∈ {0, 1}` are allowed: their pivot
/// tree has a single type. An absolute difference below 1e-9 (the
/// finite-difference error) also passes, since the relative difference
/// of two zeros is undefined.
pub fn growth_rate_identity_check(dm: &DistMap, nu: &StateDistribution) -> Result<IdentityCheck> {
    if dm.k() != 2 {
        return Err(Error::Unsupported("growth-rate identity needs 2 colours".into()));
    }
    let mono = dm.spec().is_monotone(DEFAULT_MONOTONE_BOUND)?;
    if !mono.monotone {
        return Err(Error::Unsupported(format!(
            "automaton is not monotone: {:?}",
            mono.counterexample
        )));
    }
    let p = nu[1];
    let analysis = build_analysis(dm, nu, &TargetSets::maximal(2), &PivotOptions::default(), true)?;
    let derivative = dm.scalar_derivative(p, DEFAULT_DERIVATIVE_STEP)?;
    let rho = analysis.spectral_radius;
    let diff = (rho - derivative).abs();
    let scale = derivative.abs().max(rho.abs());
    let relative_difference = if scale > 0.0 { diff / scale } else { 0.0 };
    Ok(IdentityCheck {
        spectral_radius: rho,
        derivative,
        relative_difference,
        pass: relative_difference <= 1e-5 || diff <= 1e-9,
    })
}
