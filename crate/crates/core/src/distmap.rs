//! The automaton distribution map Ψ.
//!
//! `Ψ(x)_σ` is the probability that a vertex gets colour σ when it has a
//! χ-distributed number of children coloured i.i.d. `x`. It is computed
//! by summing over child-count vectors rather than colour sequences,
//! with multinomial weights in log space, and truncating the number of
//! children at the point where the offspring tail drops below `eps`. The
//! truncated mass is reported as `deficit` and never renormalized away.

use crate::automata::{for_each_composition, AutomatonSpec, Colour};
use crate::error::{invalid, Error, Result};
use crate::offspring::ChildDistribution;
use statrs::function::factorial::ln_factorial;

/// Upper limit on the number of count vectors a table may hold.
pub const DEFAULT_COMPOSITION_BUDGET: usize = 5_000_000;

/// Default finite-difference step for [`DistMap::scalar_derivative`].
pub const DEFAULT_DERIVATIVE_STEP: f64 = 1e-6;

const SIMPLEX_TOL: f64 = 1e-12;

/// A probability vector over the colours.
#[derive(Clone, Debug, PartialEq)]
pub struct StateDistribution {
    weights: Vec<f64>,
}

impl StateDistribution {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.len() < 2 {
            return invalid("a state distribution needs at least two colours");
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return invalid(format!("weights {weights:?} are not nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return invalid(format!("weights sum to {total}, not 1"));
        }
        Ok(Self { weights })
    }

    /// Rescales nonnegative weights to sum to one.
    pub fn normalized(mut weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || weights.iter().any(|w| *w < 0.0) {
            return invalid("cannot normalize weights");
        }
        weights.iter_mut().for_each(|w| *w /= total);
        Self::new(weights)
    }

    /// `(1 - p, p)`.
    pub fn bernoulli(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return invalid(format!("probability {p} outside [0, 1]"));
        }
        Ok(Self { weights: vec![1.0 - p, p] })
    }

    pub fn point_mass(k: usize, c: Colour) -> Self {
        let mut weights = vec![0.0; k];
        weights[c] = 1.0;
        Self { weights }
    }

    pub fn uniform(k: usize) -> Self {
        Self { weights: vec![1.0 / k as f64; k] }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    /// Colours with weight above `threshold`.
    pub fn support(&self, threshold: f64) -> Vec<Colour> {
        (0..self.k()).filter(|&c| self.weights[c] > threshold).collect()
    }
}

impl std::ops::Index<Colour> for StateDistribution {
    type Output = f64;
    fn index(&self, c: Colour) -> &f64 {
        &self.weights[c]
    }
}

/// `Ψ(x)` together with the truncated probability mass.
#[derive(Clone, Debug, PartialEq)]
pub struct PsiValue {
    pub value: Vec<f64>,
    /// Mass of child counts beyond the truncation point; each component
    /// of `value` is within this of the exact one.
    pub deficit: f64,
}

impl PsiValue {
    /// Max-norm distance to `x`.
    pub fn residual(&self, x: &[f64]) -> f64 {
        self.value
            .iter()
            .zip(x)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Every child-count vector up to the truncation point, with its
/// log-weight `ln pmf(m) + ln multinomial(m; n)` and automaton output.
#[derive(Clone, Debug)]
pub struct CompositionTable {
    k: usize,
    max_children: u32,
    counts: Vec<u32>,
    ln_weight: Vec<f64>,
    colour: Vec<Colour>,
    deficit: f64,
}

/// Number of count vectors of length `k` with total at most `n`, i.e.
/// `C(n + k, k)`, saturating.
pub fn composition_count(k: usize, n: u64) -> u128 {
    let mut c: u128 = 1;
    for i in 1..=k as u128 {
        c = c.saturating_mul(n as u128 + i) / i;
    }
    c
}

impl CompositionTable {
    pub fn build(spec: &AutomatonSpec, chi: &ChildDistribution, eps: f64) -> Result<Self> {
        Self::build_with_budget(spec, chi, eps, DEFAULT_COMPOSITION_BUDGET)
    }

    pub fn build_with_budget(
        spec: &AutomatonSpec,
        chi: &ChildDistribution,
        eps: f64,
        budget: usize,
    ) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return invalid(format!("truncation tolerance {eps} must lie in (0, 1)"));
        }
        let k = spec.k();
        let n = chi.truncation_point(eps);
        let needed = composition_count(k, n);
        if needed > budget as u128 {
            return Err(Error::Resource(format!(
                "{needed} count vectors for {k} colours up to {n} children exceed the budget \
                 of {budget}; use a larger eps"
            )));
        }
        let needed = needed as usize;
        let mut counts = Vec::with_capacity(needed * k);
        let mut ln_weight = Vec::with_capacity(needed);
        let mut colour = Vec::with_capacity(needed);
        let mut mass = 0.0;
        let mut buf = vec![0u32; k];
        for m in 0..=n {
            let p = chi.pmf(m);
            mass += p;
            let ln_pm = p.ln() + ln_factorial(m);
            for_each_composition(k, m as u32, &mut buf, &mut |c| {
                let ln_denom: f64 = c.iter().map(|&ci| ln_factorial(u64::from(ci))).sum();
                counts.extend_from_slice(c);
                ln_weight.push(ln_pm - ln_denom);
                colour.push(spec.eval(c));
            });
        }
        Ok(Self {
            k,
            max_children: n as u32,
            counts,
            ln_weight,
            colour,
            deficit: (1.0 - mass).max(0.0).max(chi.tail_mass(n)),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn max_children(&self) -> u32 {
        self.max_children
    }

    pub fn len(&self) -> usize {
        self.colour.len()
    }

    pub fn is_empty(&self) -> bool {
        self.colour.is_empty()
    }

    pub fn deficit(&self) -> f64 {
        self.deficit
    }

    /// Iterates `(counts, probability under x, parent colour)` over every
    /// table entry with nonzero probability.
    pub fn weighted<'a>(&'a self, x: &[f64]) -> impl Iterator<Item = (&'a [u32], f64, Colour)> + 'a {
        let ln_x: Vec<f64> = x.iter().map(|v| v.ln()).collect();
        let k = self.k;
        (0..self.len()).filter_map(move |i| {
            let c = &self.counts[i * k..(i + 1) * k];
            let mut lw = self.ln_weight[i];
            for j in 0..k {
                if c[j] > 0 {
                    lw += f64::from(c[j]) * ln_x[j];
                }
            }
            let w = lw.exp();
            (w > 0.0).then_some((c, w, self.colour[i]))
        })
    }

    pub fn psi(&self, x: &[f64]) -> PsiValue {
        assert_eq!(x.len(), self.k, "distribution has the wrong number of colours");
        let mut value = vec![0.0; self.k];
        for (_, w, c) in self.weighted(x) {
            value[c] += w;
        }
        PsiValue { value, deficit: self.deficit }
    }
}

/// Ψ for a fixed automaton and offspring law, with the enumeration table
/// built once and reused across evaluations.
#[derive(Clone, Debug)]
pub struct DistMap {
    spec: AutomatonSpec,
    chi: ChildDistribution,
    eps: f64,
    table: CompositionTable,
}

impl DistMap {
    pub fn new(spec: &AutomatonSpec, chi: &ChildDistribution, eps: f64) -> Result<Self> {
        let table = CompositionTable::build(spec, chi, eps)?;
        Ok(Self { spec: spec.clone(), chi: chi.clone(), eps, table })
    }

    pub fn spec(&self) -> &AutomatonSpec {
        &self.spec
    }

    pub fn chi(&self) -> &ChildDistribution {
        &self.chi
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn table(&self) -> &CompositionTable {
        &self.table
    }

    pub fn k(&self) -> usize {
        self.spec.k()
    }

    pub fn deficit(&self) -> f64 {
        self.table.deficit
    }

    pub fn psi(&self, x: &StateDistribution) -> Result<PsiValue> {
        if x.k() != self.k() {
            return invalid(format!("distribution over {} colours, automaton has {}", x.k(), self.k()));
        }
        Ok(self.table.psi(x.weights()))
    }

    /// Two-colour shorthand: `Ψ(Bernoulli(p))_1`.
    pub fn psi_scalar(&self, p: f64) -> f64 {
        debug_assert_eq!(self.k(), 2);
        self.table.psi(&[1.0 - p, p]).value[1]
    }

    /// Derivative of `p ↦ Ψ(Bernoulli(p))_1`. Central differences in the
    /// interior; second-order one-sided differences when `p ± h` would
    /// leave `[0, 1]`.
    pub fn scalar_derivative(&self, p: f64, h: f64) -> Result<f64> {
        if self.k() != 2 {
            return Err(Error::Unsupported("scalar derivative needs 2 colours".into()));
        }
        if !(0.0..=1.0).contains(&p) || !(h > 0.0 && h < 0.25) {
            return invalid(format!("bad point {p} or step {h}"));
        }
        let f = |q: f64| self.psi_scalar(q);
        Ok(if p - h >= 0.0 && p + h <= 1.0 {
            (f(p + h) - f(p - h)) / (2.0 * h)
        } else if p - h < 0.0 {
            (-3.0 * f(p) + 4.0 * f(p + h) - f(p + 2.0 * h)) / (2.0 * h)
        } else {
            (3.0 * f(p) - 4.0 * f(p - h) + f(p - 2.0 * h)) / (2.0 * h)
        })
    }
}

/// One-shot Ψ evaluation.
pub fn psi(
    spec: &AutomatonSpec,
    chi: &ChildDistribution,
    x: &StateDistribution,
    eps: f64,
) -> Result<PsiValue> {
    DistMap::new(spec, chi, eps)?.psi(x)
}

/// One-shot scalar derivative, see [`DistMap::scalar_derivative`].
pub fn psi_scalar_derivative(
    spec: &AutomatonSpec,
    chi: &ChildDistribution,
    p: f64,
    h: f64,
) -> Result<f64> {
    if spec.k() != 2 {
        return Err(Error::Unsupported("scalar derivative needs 2 colours".into()));
    }
    DistMap::new(spec, chi, crate::offspring::DEFAULT_EPS)?.scalar_derivative(p, h)
}

/// Poisson probabilities `P[N = n]`, `n = 0..`, for `N ~ Poi(mu)`, extended
/// until the remaining tail is at most `eps`. Returns the table and the
/// tail mass left out.
pub fn poisson_table(mu: f64, eps: f64) -> (Vec<f64>, f64) {
    if mu == 0.0 {
        return (vec![1.0], 0.0);
    }
    let mut table = vec![(-mu).exp()];
    let mut cdf = table[0];
    let mut n = 0usize;
    while 1.0 - cdf > eps || (n as f64) < mu {
        n += 1;
        let next = table[n - 1] * mu / n as f64;
        table.push(next);
        cdf += next;
    }
    let tail = (1.0 - cdf).max(0.0);
    (table, tail)
}

/// Ψ for Poisson offspring via thinning: the numbers of children of each
/// colour are independent `Poi(λ x_c)`. Sums over the product of the
/// per-colour truncated ranges instead of over count vectors of a fixed
/// total.
pub fn psi_poisson_thinned(
    spec: &AutomatonSpec,
    chi: &ChildDistribution,
    x: &StateDistribution,
    eps: f64,
) -> Result<PsiValue> {
    let Some(lambda) = chi.poisson_rate() else {
        return Err(Error::Unsupported("thinning needs a Poisson offspring law".into()));
    };
    ThinnedPsi::new(spec, lambda, eps)?.psi(x.weights())
}

/// Reusable form of [`psi_poisson_thinned`] that caches automaton outputs
/// on the box of per-colour counts.
#[derive(Clone, Debug)]
pub struct ThinnedPsi {
    k: usize,
    lambda: f64,
    eps: f64,
    /// Per-colour count bound; a `Poi(λ)` tail beyond it is below `eps / k`.
    bound: usize,
    outputs: Vec<Colour>,
}

impl ThinnedPsi {
    pub fn new(spec: &AutomatonSpec, lambda: f64, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return invalid(format!("truncation tolerance {eps} must lie in (0, 1)"));
        }
        let k = spec.k();
        let (table, _) = poisson_table(lambda, eps / k as f64);
        let bound = table.len();
        let cells = (bound as u128).checked_pow(k as u32).unwrap_or(u128::MAX);
        if cells > DEFAULT_COMPOSITION_BUDGET as u128 {
            return Err(Error::Resource(format!("{cells} cells exceed the thinning budget")));
        }
        let mut outputs = Vec::with_capacity(cells as usize);
        let mut counts = vec![0u32; k];
        for cell in 0..cells as usize {
            let mut r = cell;
            for c in counts.iter_mut() {
                *c = (r % bound) as u32;
                r /= bound;
            }
            outputs.push(spec.eval(&counts));
        }
        Ok(Self { k, lambda, eps, bound, outputs })
    }

    pub fn psi(&self, x: &[f64]) -> Result<PsiValue> {
        if x.len() != self.k {
            return invalid("distribution has the wrong number of colours");
        }
        let mut deficit_keep = 1.0;
        let tables: Vec<Vec<f64>> = x
            .iter()
            .map(|&xi| {
                let (mut t, _) = poisson_table(self.lambda * xi, self.eps / self.k as f64);
                t.truncate(self.bound);
                deficit_keep *= t.iter().sum::<f64>();
                t
            })
            .collect();
        let mut value = vec![0.0; self.k];
        let mut idx = vec![0usize; self.k];
        let mut stride = vec![1usize; self.k];
        for c in 1..self.k {
            stride[c] = stride[c - 1] * self.bound;
        }
        // odometer over the product of the per-colour ranges
        loop {
            let mut w = 1.0;
            let mut cell = 0;
            for c in 0..self.k {
                w *= tables[c][idx[c]];
                cell += idx[c] * stride[c];
            }
            value[self.outputs[cell]] += w;
            let mut c = 0;
            loop {
                idx[c] += 1;
                if idx[c] < tables[c].len() {
                    break;
                }
                idx[c] = 0;
                c += 1;
                if c == self.k {
                    return Ok(PsiValue { value, deficit: (1.0 - deficit_keep).max(0.0) });
                }
            }
        }
    }

    /// Two-colour shorthand: `Ψ(Bernoulli(p))_1`.
    pub fn psi_scalar(&self, p: f64) -> f64 {
        self.psi(&[1.0 - p, p]).expect("two colours").value[1]
    }
}

/// Closed forms of Ψ for Poisson offspring, as cross-check references.
/// Each maps `(λ, x)` to `Ψ(Bernoulli(x))_1`.
pub mod reference {
    /// Parent is 1 iff some child is 1: `1 - e^{-λx}`.
    pub fn at_least_one(lambda: f64, x: f64) -> f64 {
        1.0 - (-lambda * x).exp()
    }

    /// `1 - e^{-λx} (1 + λx)`.
    pub fn at_least_two(lambda: f64, x: f64) -> f64 {
        1.0 - (-lambda * x).exp() * (1.0 + lambda * x)
    }

    /// `e^{-λx}`.
    pub fn zero_ones(lambda: f64, x: f64) -> f64 {
        (-lambda * x).exp()
    }

    /// `1 - e^{-λ(1-x)} - e^{-λx} + e^{-λ}`.
    pub fn one_of_each(lambda: f64, x: f64) -> f64 {
        1.0 - (-lambda * (1.0 - x)).exp() - (-lambda * x).exp() + (-lambda).exp()
    }
}
