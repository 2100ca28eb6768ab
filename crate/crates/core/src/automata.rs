//! Tree automata on a finite colour set.
//!
//! An automaton maps the vector of child-colour counts of a vertex to the
//! colour of that vertex. Rules are written in a small predicate language
//! over count atoms (`count(c) ∈ S`, `count(c) ≥ a`) combined with
//! `all`/`any`/`not`; the first matching rule wins and a default colour
//! covers everything else, so evaluation is total by construction.
//! Automata built from a Rust closure are also accepted; they share the
//! evaluation interface but cannot be serialized.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Index of a colour in its [`ColourSet`].
pub type Colour = usize;

/// Default child-count bound for [`AutomatonSpec::is_monotone`].
pub const DEFAULT_MONOTONE_BOUND: u32 = 200;

/// Ordered set of distinct colour names. Colour `i` is `labels[i]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ColourSet {
    labels: Vec<String>,
}

impl ColourSet {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.len() < 2 {
            return invalid(format!("need at least two colours, got {}", labels.len()));
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return invalid(format!("duplicate colour name {l:?}"));
            }
        }
        Ok(Self { labels })
    }

    /// Colours named `"0"`, `"1"`, ..., `"k-1"`.
    pub fn numbered(k: usize) -> Result<Self> {
        Self::new((0..k).map(|i| i.to_string()))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, c: Colour) -> &str {
        &self.labels[c]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, name: &str) -> Option<Colour> {
        self.labels.iter().position(|l| l == name)
    }
}

/// Boolean condition on a child-count vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Predicate {
    /// `count(colour)` is one of `values`.
    CountIn { colour: Colour, values: Vec<u64> },
    /// `count(colour) >= min`.
    CountAtLeast { colour: Colour, min: u64 },
    All(Vec<Predicate>),
    Any(Vec<Predicate>),
    Not(Box<Predicate>),
}

impl Predicate {
    pub fn count_in(colour: Colour, values: impl IntoIterator<Item = u64>) -> Self {
        let mut values: Vec<u64> = values.into_iter().collect();
        values.sort_unstable();
        values.dedup();
        Predicate::CountIn { colour, values }
    }

    pub fn count_at_least(colour: Colour, min: u64) -> Self {
        Predicate::CountAtLeast { colour, min }
    }

    pub fn matches(&self, counts: &[u32]) -> bool {
        match self {
            Predicate::CountIn { colour, values } => {
                values.binary_search(&u64::from(counts[*colour])).is_ok()
            }
            Predicate::CountAtLeast { colour, min } => u64::from(counts[*colour]) >= *min,
            Predicate::All(ps) => ps.iter().all(|p| p.matches(counts)),
            Predicate::Any(ps) => ps.iter().any(|p| p.matches(counts)),
            Predicate::Not(p) => !p.matches(counts),
        }
    }

    fn max_colour(&self) -> Colour {
        match self {
            Predicate::CountIn { colour, .. } | Predicate::CountAtLeast { colour, .. } => *colour,
            Predicate::All(ps) | Predicate::Any(ps) => {
                ps.iter().map(Predicate::max_colour).max().unwrap_or(0)
            }
            Predicate::Not(p) => p.max_colour(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rule {
    pub when: Predicate,
    pub then: Colour,
}

type RuleFn = dyn Fn(&[u32]) -> Colour + Send + Sync;

#[derive(Clone)]
enum RuleTable {
    Dsl { rules: Vec<Rule>, default: Colour },
    Custom(Arc<RuleFn>),
}

/// A tree automaton `A: N^k -> {0..k-1}`. Immutable once built.
#[derive(Clone)]
pub struct AutomatonSpec {
    colours: ColourSet,
    table: RuleTable,
}

impl fmt::Debug for AutomatonSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut d = f.debug_struct("AutomatonSpec");
        d.field("colours", &self.colours.labels);
        match &self.table {
            RuleTable::Dsl { rules, default } => {
                d.field("rules", rules).field("default", default);
            }
            RuleTable::Custom(_) => {
                d.field("rules", &"<custom>");
            }
        }
        d.finish()
    }
}

/// Result of a bounded monotonicity check.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Monotonicity {
    pub monotone: bool,
    /// Largest number of children examined.
    pub bound: u32,
    /// `(before, after)`: moving one child from colour 0 to colour 1 lowered
    /// the parent colour.
    pub counterexample: Option<(Vec<u32>, Vec<u32>)>,
}

impl AutomatonSpec {
    pub fn new(colours: ColourSet, rules: Vec<Rule>, default: Colour) -> Result<Self> {
        let k = colours.len();
        if default >= k {
            return invalid(format!("default colour {default} out of range for {k} colours"));
        }
        for (i, r) in rules.iter().enumerate() {
            if r.then >= k || r.when.max_colour() >= k {
                return invalid(format!("rule {i} refers to a colour outside 0..{k}"));
            }
        }
        Ok(Self {
            colours,
            table: RuleTable::Dsl { rules, default },
        })
    }

    /// Automaton given by an arbitrary function of the counts. The function
    /// must return a colour index below `colours.len()`.
    pub fn from_fn<F>(colours: ColourSet, rule: F) -> Self
    where
        F: Fn(&[u32]) -> Colour + Send + Sync + 'static,
    {
        Self {
            colours,
            table: RuleTable::Custom(Arc::new(rule)),
        }
    }

    pub fn colours(&self) -> &ColourSet {
        &self.colours
    }

    pub fn k(&self) -> usize {
        self.colours.len()
    }

    pub fn is_serializable(&self) -> bool {
        matches!(self.table, RuleTable::Dsl { .. })
    }

    pub fn evaluate(&self, counts: &[u32]) -> Result<Colour> {
        if counts.len() != self.k() {
            return invalid(format!(
                "count vector has length {}, automaton has {} colours",
                counts.len(),
                self.k()
            ));
        }
        Ok(self.eval(counts))
    }

    /// [`evaluate`](Self::evaluate) without the length check; panics on a
    /// malformed vector. Used in the enumeration loops.
    pub fn eval(&self, counts: &[u32]) -> Colour {
        let c = match &self.table {
            RuleTable::Dsl { rules, default } => rules
                .iter()
                .find(|r| r.when.matches(counts))
                .map_or(*default, |r| r.then),
            RuleTable::Custom(f) => f(counts),
        };
        assert!(c < self.k(), "automaton produced colour {c} out of range");
        c
    }

    /// Colour of a vertex with no children, `A(0,...,0)`.
    pub fn leaf_colour(&self) -> Colour {
        self.eval(&vec![0; self.k()])
    }

    /// Parent colour after one child of colour `from` is recoloured `to`.
    pub fn evaluate_switched(&self, counts: &[u32], from: Colour, to: Colour) -> Result<Colour> {
        let k = self.k();
        if counts.len() != k {
            return invalid(format!("count vector has length {}, expected {k}", counts.len()));
        }
        if from >= k || to >= k || from == to {
            return invalid(format!("bad switch {from} -> {to}"));
        }
        if counts[from] == 0 {
            return invalid(format!("no child of colour {from} to switch"));
        }
        Ok(self.eval_switched(counts, from, to))
    }

    pub(crate) fn eval_switched(&self, counts: &[u32], from: Colour, to: Colour) -> Colour {
        let mut c = counts.to_vec();
        c[from] -= 1;
        c[to] += 1;
        self.eval(&c)
    }

    /// Checks, for every count vector with at most `max_children` children,
    /// that raising one child from colour 0 to colour 1 never lowers the
    /// parent colour. Single-step moves generate the whole order, so this is
    /// monotonicity up to the bound. Two-colour automata only.
    pub fn is_monotone(&self, max_children: u32) -> Result<Monotonicity> {
        if self.k() != 2 {
            return Err(Error::Unsupported(format!(
                "monotonicity check needs 2 colours, automaton has {}",
                self.k()
            )));
        }
        if max_children == 0 {
            return invalid("max_children must be at least 1");
        }
        for total in 1..=max_children {
            for n1 in 0..total {
                let before = [total - n1, n1];
                let after = [total - n1 - 1, n1 + 1];
                if self.eval(&after) < self.eval(&before) {
                    return Ok(Monotonicity {
                        monotone: false,
                        bound: max_children,
                        counterexample: Some((before.to_vec(), after.to_vec())),
                    });
                }
            }
        }
        Ok(Monotonicity {
            monotone: true,
            bound: max_children,
            counterexample: None,
        })
    }

    /// The automaton seen on a subset of its colours. `keep` lists the
    /// retained colours in their new order; counts of dropped colours are
    /// taken to be zero. Fails if some count vector over the retained
    /// colours with at most `check_children` children maps outside `keep`.
    pub fn restrict(&self, keep: &[Colour], check_children: u32) -> Result<AutomatonSpec> {
        let k = self.k();
        if keep.len() < 2 || keep.iter().any(|&c| c >= k) {
            return invalid("restriction must keep at least two valid colours");
        }
        let colours = ColourSet::new(keep.iter().map(|&c| self.colours.label(c).to_string()))?;
        let mut back = vec![usize::MAX; k];
        for (i, &c) in keep.iter().enumerate() {
            back[c] = i;
        }
        let parent = self.clone();
        let keep_owned = keep.to_vec();
        let lift = move |counts: &[u32]| {
            let mut full = vec![0u32; k];
            for (i, &c) in keep_owned.iter().enumerate() {
                full[c] = counts[i];
            }
            parent.eval(&full)
        };
        // every reachable output must stay inside the kept colours
        let mut bad = None;
        for_each_composition_up_to(keep.len(), check_children, |counts| {
            if bad.is_none() && back[lift(counts)] == usize::MAX {
                bad = Some(counts.to_vec());
            }
        });
        if let Some(counts) = bad {
            return invalid(format!("restricted automaton leaves the kept colours at {counts:?}"));
        }
        Ok(AutomatonSpec::from_fn(colours, move |counts| back[lift(counts)]))
    }

    /// Parses the JSON document format.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: AutomatonDoc = serde_json::from_str(text)
            .map_err(|e| Error::InvalidInput(format!("automaton spec: {e}")))?;
        doc.compile()
    }

    pub fn to_doc(&self) -> Result<AutomatonDoc> {
        let RuleTable::Dsl { rules, default } = &self.table else {
            return Err(Error::Unsupported("closure automata cannot be serialized".into()));
        };
        let name = |c: Colour| self.colours.label(c).to_string();
        Ok(AutomatonDoc {
            states: self.colours.labels.clone(),
            rules: rules
                .iter()
                .map(|r| RuleDoc {
                    when: PredicateDoc::from_predicate(&r.when, &name),
                    then: name(r.then),
                })
                .collect(),
            default: name(*default),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(&self.to_doc()?)
            .map_err(|e| Error::Internal(format!("serializing automaton: {e}")))
    }
}

/// Calls `f` on every count vector of length `k` whose entries sum to at
/// most `max_total`, in order of increasing total.
pub(crate) fn for_each_composition_up_to(k: usize, max_total: u32, mut f: impl FnMut(&[u32])) {
    let mut buf = vec![0u32; k];
    for total in 0..=max_total {
        for_each_composition(k, total, &mut buf, &mut f);
    }
}

/// Calls `f` on every count vector of length `k` summing to `total`.
/// Order: lexicographic in the last coordinates, first coordinate takes
/// the remainder.
pub(crate) fn for_each_composition(
    k: usize,
    total: u32,
    buf: &mut [u32],
    f: &mut impl FnMut(&[u32]),
) {
    fn rec(i: usize, remaining: u32, buf: &mut [u32], f: &mut impl FnMut(&[u32])) {
        if i == 0 {
            buf[0] = remaining;
            f(buf);
            return;
        }
        for v in 0..=remaining {
            buf[i] = v;
            rec(i - 1, remaining - v, buf, f);
        }
    }
    rec(k - 1, total, buf, f);
}

// ---------------------------------------------------------------------------
// Document format

/// Serialized automaton: `{states, rules: [{when, then}], default}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AutomatonDoc {
    pub states: Vec<String>,
    #[serde(default)]
    pub rules: Vec<RuleDoc>,
    pub default: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleDoc {
    pub when: PredicateDoc,
    pub then: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PredicateDoc {
    CountIn {
        count: String,
        #[serde(rename = "in")]
        values: Vec<u64>,
    },
    CountGe {
        count: String,
        ge: u64,
    },
    All {
        all: Vec<PredicateDoc>,
    },
    Any {
        any: Vec<PredicateDoc>,
    },
    Not {
        not: Box<PredicateDoc>,
    },
}

impl PredicateDoc {
    fn from_predicate(p: &Predicate, name: &impl Fn(Colour) -> String) -> Self {
        match p {
            Predicate::CountIn { colour, values } => PredicateDoc::CountIn {
                count: name(*colour),
                values: values.clone(),
            },
            Predicate::CountAtLeast { colour, min } => PredicateDoc::CountGe {
                count: name(*colour),
                ge: *min,
            },
            Predicate::All(ps) => PredicateDoc::All {
                all: ps.iter().map(|q| Self::from_predicate(q, name)).collect(),
            },
            Predicate::Any(ps) => PredicateDoc::Any {
                any: ps.iter().map(|q| Self::from_predicate(q, name)).collect(),
            },
            Predicate::Not(q) => PredicateDoc::Not {
                not: Box::new(Self::from_predicate(q, name)),
            },
        }
    }

    fn compile(&self, colours: &ColourSet) -> Result<Predicate> {
        let lookup = |s: &str| {
            colours
                .index_of(s)
                .ok_or_else(|| Error::InvalidInput(format!("unknown state {s:?} in predicate")))
        };
        Ok(match self {
            PredicateDoc::CountIn { count, values } => {
                Predicate::count_in(lookup(count)?, values.iter().copied())
            }
            PredicateDoc::CountGe { count, ge } => Predicate::count_at_least(lookup(count)?, *ge),
            PredicateDoc::All { all } => Predicate::All(
                all.iter().map(|p| p.compile(colours)).collect::<Result<_>>()?,
            ),
            PredicateDoc::Any { any } => Predicate::Any(
                any.iter().map(|p| p.compile(colours)).collect::<Result<_>>()?,
            ),
            PredicateDoc::Not { not } => Predicate::Not(Box::new(not.compile(colours)?)),
        })
    }
}

impl AutomatonDoc {
    pub fn compile(&self) -> Result<AutomatonSpec> {
        let colours = ColourSet::new(self.states.iter().cloned())?;
        let state = |s: &str| {
            colours
                .index_of(s)
                .ok_or_else(|| Error::InvalidInput(format!("unknown state {s:?}")))
        };
        let rules = self
            .rules
            .iter()
            .map(|r| {
                Ok(Rule {
                    when: r.when.compile(&colours)?,
                    then: state(&r.then)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let default = state(&self.default)?;
        AutomatonSpec::new(colours, rules, default)
    }
}

/// The automata used throughout the examples and tests.
pub mod catalog {
    use super::*;

    fn two() -> ColourSet {
        ColourSet::numbered(2).expect("two colours")
    }

    /// Parent is 1 iff at least one child is 1 (plain survival).
    pub fn at_least_one() -> AutomatonSpec {
        let rules = vec![Rule { when: Predicate::count_at_least(1, 1), then: 1 }];
        AutomatonSpec::new(two(), rules, 0).expect("valid")
    }

    /// Parent is 1 iff at least two children are 1.
    pub fn at_least_two() -> AutomatonSpec {
        let rules = vec![Rule { when: Predicate::count_at_least(1, 2), then: 1 }];
        AutomatonSpec::new(two(), rules, 0).expect("valid")
    }

    /// Parent is 1 iff no child is 1.
    pub fn zero_ones() -> AutomatonSpec {
        let rules = vec![Rule { when: Predicate::count_in(1, [0]), then: 1 }];
        AutomatonSpec::new(two(), rules, 0).expect("valid")
    }

    /// Parent is 1 iff it has a child of each colour.
    pub fn one_of_each() -> AutomatonSpec {
        let rules = vec![Rule {
            when: Predicate::All(vec![
                Predicate::count_at_least(0, 1),
                Predicate::count_at_least(1, 1),
            ]),
            then: 1,
        }];
        AutomatonSpec::new(two(), rules, 0).expect("valid")
    }

    /// Parent is 1 iff the number of 1-children lies in {0, 6, 7} ∪ [12, ∞).
    pub fn many_roots() -> AutomatonSpec {
        let rules = vec![Rule {
            when: Predicate::Any(vec![
                Predicate::count_in(1, [0, 6, 7]),
                Predicate::count_at_least(1, 12),
            ]),
            then: 1,
        }];
        AutomatonSpec::new(two(), rules, 0).expect("valid")
    }

    /// Three colours; parent is the sum of its children's colours capped at 2.
    pub fn sum_capped() -> AutomatonSpec {
        let colours = ColourSet::numbered(3).expect("three colours");
        let rules = vec![
            Rule {
                when: Predicate::All(vec![Predicate::count_in(1, [0]), Predicate::count_in(2, [0])]),
                then: 0,
            },
            Rule {
                when: Predicate::All(vec![Predicate::count_in(1, [1]), Predicate::count_in(2, [0])]),
                then: 1,
            },
        ];
        AutomatonSpec::new(colours, rules, 2).expect("valid")
    }

    /// Three colours; parent is `(n1 + 2 n2) mod 3`. Not expressible in
    /// the rule language, so built from a closure.
    pub fn sum_mod_three() -> AutomatonSpec {
        let colours = ColourSet::numbered(3).expect("three colours");
        AutomatonSpec::from_fn(colours, |c| ((c[1] as usize) + 2 * (c[2] as usize)) % 3)
    }

    /// Looks up a catalog automaton by name.
    pub fn by_name(name: &str) -> Option<AutomatonSpec> {
        Some(match name {
            "at-least-one" => at_least_one(),
            "at-least-two" => at_least_two(),
            "zero-ones" => zero_ones(),
            "one-of-each" => one_of_each(),
            "many-roots" => many_roots(),
            "sum-capped" => sum_capped(),
            "sum-mod-three" => sum_mod_three(),
            _ => return None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::catalog::*;
    use super::*;

    #[test]
    fn at_least_two_rule() {
        let a = at_least_two();
        assert_eq!(a.evaluate(&[3, 1]).unwrap(), 0);
        assert_eq!(a.evaluate(&[0, 2]).unwrap(), 1);
        assert_eq!(a.leaf_colour(), 0);
    }

    #[test]
    fn leaf_colour_is_rule_at_zero() {
        for a in [at_least_two(), zero_ones(), one_of_each(), many_roots(), sum_capped()] {
            let zeros = vec![0; a.k()];
            assert_eq!(a.leaf_colour(), a.evaluate(&zeros).unwrap());
        }
        assert_eq!(zero_ones().leaf_colour(), 1);
        assert_eq!(many_roots().leaf_colour(), 1);
    }

    #[test]
    fn dimension_mismatch() {
        assert!(matches!(at_least_two().evaluate(&[1, 2, 3]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn switched_examples() {
        let a = at_least_two();
        assert_eq!(a.evaluate_switched(&[2, 1], 0, 1).unwrap(), 1);
        assert_eq!(a.evaluate_switched(&[3, 0], 0, 1).unwrap(), 0);
        assert_eq!(sum_capped().evaluate_switched(&[1, 2, 0], 1, 0).unwrap(), 1);
        assert!(a.evaluate_switched(&[0, 3], 0, 1).is_err());
    }

    #[test]
    fn switched_matches_edited_vector() {
        let a = sum_capped();
        for_each_composition_up_to(3, 20, |c| {
            for from in 0..3 {
                if c[from] == 0 {
                    continue;
                }
                for to in (0..3).filter(|&t| t != from) {
                    let mut edited = c.to_vec();
                    edited[from] -= 1;
                    edited[to] += 1;
                    assert_eq!(
                        a.evaluate_switched(c, from, to).unwrap(),
                        a.evaluate(&edited).unwrap()
                    );
                }
            }
        });
    }

    #[test]
    fn monotonicity_examples() {
        assert!(at_least_two().is_monotone(DEFAULT_MONOTONE_BOUND).unwrap().monotone);
        assert!(at_least_one().is_monotone(50).unwrap().monotone);
        let z = zero_ones().is_monotone(50).unwrap();
        assert_eq!(z.counterexample, Some((vec![1, 0], vec![0, 1])));
        let o = one_of_each().is_monotone(50).unwrap();
        assert_eq!(o.counterexample, Some((vec![1, 1], vec![0, 2])));
        assert!(!many_roots().is_monotone(50).unwrap().monotone);
        assert!(matches!(sum_capped().is_monotone(10), Err(Error::Unsupported(_))));
    }

    // Oracle: full partial order. n ⪯ m with equal totals means m can be
    // reached by raising colours, i.e. m1 >= n1.
    #[test]
    fn monotone_implies_order_preserving() {
        let n = 30u32;
        for a in [at_least_two(), at_least_one(), zero_ones(), one_of_each(), many_roots()] {
            let certified = a.is_monotone(n).unwrap().monotone;
            let mut order_ok = true;
            for total in 0..=n {
                for n1 in 0..=total {
                    for m1 in n1..=total {
                        if a.eval(&[total - n1, n1]) > a.eval(&[total - m1, m1]) {
                            order_ok = false;
                        }
                    }
                }
            }
            assert_eq!(certified, order_ok);
        }
    }

    #[test]
    fn monotone_pivotal_children_share_parent_colour() {
        let a = at_least_two();
        for_each_composition_up_to(2, 40, |c| {
            let parent = a.eval(c);
            for child in 0..2 {
                if c[child] > 0 && a.eval_switched(c, child, 1 - child) != parent {
                    assert_eq!(child, parent, "counts {c:?}");
                }
            }
        });
    }

    #[test]
    fn json_round_trip() {
        for a in [at_least_two(), one_of_each(), many_roots(), sum_capped()] {
            let text = a.to_json().unwrap();
            let b = AutomatonSpec::from_json(&text).unwrap();
            for_each_composition_up_to(a.k(), 15, |c| assert_eq!(a.eval(c), b.eval(c)));
        }
        assert!(sum_mod_three().to_json().is_err());
    }

    #[test]
    fn json_document_format() {
        let text = r#"{
            "states": ["dead", "alive"],
            "rules": [
                {"when": {"all": [{"count": "alive", "ge": 1}, {"not": {"count": "dead", "in": [0]}}]},
                 "then": "alive"}
            ],
            "default": "dead"
        }"#;
        let a = AutomatonSpec::from_json(text).unwrap();
        assert_eq!(a.evaluate(&[1, 1]).unwrap(), 1);
        assert_eq!(a.evaluate(&[0, 3]).unwrap(), 0);
        assert!(AutomatonSpec::from_json(r#"{"states": ["a", "b"], "default": "c"}"#).is_err());
        assert!(AutomatonSpec::from_json(r#"{"states": ["a"], "default": "a"}"#).is_err());
        assert!(AutomatonSpec::from_json("not json").is_err());
    }

    #[test]
    fn restriction_to_support() {
        let a = sum_capped();
        let r = a.restrict(&[0, 2], 30).unwrap();
        assert_eq!(r.colours().labels(), &["0".to_string(), "2".to_string()]);
        assert_eq!(r.eval(&[4, 0]), 0);
        assert_eq!(r.eval(&[4, 1]), 1);
        // keeping {0, 1} is not closed: two 1-children give 2
        assert!(a.restrict(&[0, 1], 30).is_err());
    }
}
