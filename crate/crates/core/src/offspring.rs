//! Offspring distributions for the Galton–Watson tree.
//!
//! Every distribution must give positive probability to two or more
//! children; anything else is rejected at construction.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Binomial, Distribution, Geometric, Poisson};
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_factorial;

use crate::error::{invalid, Error, Result};

/// Default truncation tolerance for exact enumerations.
pub const DEFAULT_EPS: f64 = 1e-12;

const FINITE_SUM_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub enum Family {
    Poisson { lambda: f64 },
    Binomial { n: u32, p: f64 },
    /// `P[m] = (1 - p)^m p` on `{0, 1, 2, ...}`.
    Geometric { p: f64 },
    /// `pmf[m]` is the probability of `m` children.
    Finite { pmf: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChildDistribution {
    family: Family,
}

impl ChildDistribution {
    pub fn new(family: Family) -> Result<Self> {
        match &family {
            Family::Poisson { lambda } => {
                if !(lambda.is_finite() && *lambda > 0.0) {
                    return invalid(format!("Poisson rate must be positive, got {lambda}"));
                }
            }
            Family::Binomial { n, p } => {
                if !(*p > 0.0 && *p <= 1.0) {
                    return invalid(format!("binomial p must lie in (0, 1], got {p}"));
                }
                if *n < 2 {
                    return invalid("binomial n < 2 never produces two children");
                }
            }
            Family::Geometric { p } => {
                if !(*p > 0.0 && *p < 1.0) {
                    return invalid(format!("geometric p must lie in (0, 1), got {p}"));
                }
            }
            Family::Finite { pmf } => {
                if pmf.iter().any(|&q| !(0.0..=1.0).contains(&q)) {
                    return invalid("finite pmf entries must lie in [0, 1]");
                }
                let total: f64 = pmf.iter().sum();
                if (total - 1.0).abs() > FINITE_SUM_TOL {
                    return invalid(format!("finite pmf sums to {total}, not 1"));
                }
                if pmf.iter().skip(2).all(|&q| q == 0.0) {
                    return invalid("distribution gives no mass to two or more children");
                }
            }
        }
        Ok(Self { family })
    }

    pub fn poisson(lambda: f64) -> Result<Self> {
        Self::new(Family::Poisson { lambda })
    }

    pub fn binomial(n: u32, p: f64) -> Result<Self> {
        Self::new(Family::Binomial { n, p })
    }

    pub fn geometric(p: f64) -> Result<Self> {
        Self::new(Family::Geometric { p })
    }

    pub fn finite(pmf: Vec<f64>) -> Result<Self> {
        Self::new(Family::Finite { pmf })
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn poisson_rate(&self) -> Option<f64> {
        match self.family {
            Family::Poisson { lambda } => Some(lambda),
            _ => None,
        }
    }

    /// Probability of exactly `m` children.
    pub fn pmf(&self, m: u64) -> f64 {
        match &self.family {
            Family::Poisson { lambda } => {
                (m as f64 * lambda.ln() - lambda - ln_factorial(m)).exp()
            }
            Family::Binomial { n, p } => {
                let n = u64::from(*n);
                if m > n {
                    return 0.0;
                }
                if *p == 1.0 {
                    return if m == n { 1.0 } else { 0.0 };
                }
                let ln_choose = ln_factorial(n) - ln_factorial(m) - ln_factorial(n - m);
                (ln_choose + m as f64 * p.ln() + (n - m) as f64 * (-p).ln_1p()).exp()
            }
            Family::Geometric { p } => ((m as f64) * (-p).ln_1p()).exp() * p,
            Family::Finite { pmf } => pmf.get(m as usize).copied().unwrap_or(0.0),
        }
    }

    /// Signed-argument form of [`pmf`](Self::pmf).
    pub fn pmf_checked(&self, m: i64) -> Result<f64> {
        if m < 0 {
            return invalid(format!("child count {m} is negative"));
        }
        Ok(self.pmf(m as u64))
    }

    /// Largest child count with positive probability, if bounded.
    pub fn support_max(&self) -> Option<u64> {
        match &self.family {
            Family::Binomial { n, .. } => Some(u64::from(*n)),
            Family::Finite { pmf } => pmf.iter().rposition(|&q| q > 0.0).map(|i| i as u64),
            _ => None,
        }
    }

    /// Smallest `N` whose tail mass `sum_{m > N} pmf(m)` is at most `eps`.
    /// Bounded families return their full support so enumerations over them
    /// are exact.
    pub fn truncation_point(&self, eps: f64) -> u64 {
        if let Some(max) = self.support_max() {
            return max;
        }
        let mut cdf = 0.0;
        let mut n = 0u64;
        loop {
            cdf += self.pmf(n);
            // cdf-based estimate first, then confirm with a direct tail sum
            if 1.0 - cdf <= 10.0 * eps + 1e-14 && self.tail_mass(n) <= eps {
                return n;
            }
            n += 1;
        }
    }

    /// `sum_{m > n} pmf(m)`, summed directly from the tail.
    pub fn tail_mass(&self, n: u64) -> f64 {
        if let Some(max) = self.support_max() {
            return ((n + 1)..=max).map(|m| self.pmf(m)).sum();
        }
        let mut total = 0.0;
        let mut m = n + 1;
        loop {
            let q = self.pmf(m);
            total += q;
            if q < 1e-300 || (q < total * 1e-17 && (m as f64) > self.mean()) {
                return total;
            }
            m += 1;
        }
    }

    pub fn mean(&self) -> f64 {
        match &self.family {
            Family::Poisson { lambda } => *lambda,
            Family::Binomial { n, p } => f64::from(*n) * p,
            Family::Geometric { p } => (1.0 - p) / p,
            Family::Finite { pmf } => pmf.iter().enumerate().map(|(m, q)| m as f64 * q).sum(),
        }
    }

    /// All built-in families have a finite logarithmic moment.
    pub fn has_finite_log_moment(&self) -> bool {
        true
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match &self.family {
            Family::Poisson { lambda } => {
                Poisson::new(*lambda).expect("validated rate").sample(rng) as u64
            }
            Family::Binomial { n, p } => {
                Binomial::new(u64::from(*n), *p).expect("validated").sample(rng)
            }
            Family::Geometric { p } => Geometric::new(*p).expect("validated").sample(rng),
            Family::Finite { pmf } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (m, q) in pmf.iter().enumerate() {
                    acc += q;
                    if u < acc {
                        return m as u64;
                    }
                }
                pmf.iter().rposition(|&q| q > 0.0).unwrap_or(0) as u64
            }
        }
    }

    /// Reusable sampler; constructing `rand_distr` samplers is not free.
    pub fn sampler(&self) -> ChildSampler {
        match &self.family {
            Family::Poisson { lambda } => {
                ChildSampler::Poisson(Poisson::new(*lambda).expect("validated rate"))
            }
            Family::Binomial { n, p } => {
                ChildSampler::Binomial(Binomial::new(u64::from(*n), *p).expect("validated"))
            }
            Family::Geometric { p } => ChildSampler::Geometric(Geometric::new(*p).expect("validated")),
            Family::Finite { pmf } => {
                let mut cdf = Vec::with_capacity(pmf.len());
                let mut acc = 0.0;
                for q in pmf {
                    acc += q;
                    cdf.push(acc);
                }
                ChildSampler::Table(cdf)
            }
        }
    }

    pub fn to_config(&self) -> DistributionConfig {
        match &self.family {
            Family::Poisson { lambda } => DistributionConfig::Poisson { lambda: *lambda },
            Family::Binomial { n, p } => DistributionConfig::Binomial { n: *n, p: *p },
            Family::Geometric { p } => DistributionConfig::Geometric { p: *p },
            Family::Finite { pmf } => DistributionConfig::Finite {
                pmf: pmf
                    .iter()
                    .enumerate()
                    .filter(|(_, &q)| q > 0.0)
                    .map(|(m, &q)| (m.to_string(), q))
                    .collect(),
            },
        }
    }
}

#[derive(Clone, Debug)]
pub enum ChildSampler {
    Poisson(Poisson<f64>),
    Binomial(Binomial),
    Geometric(Geometric),
    Table(Vec<f64>),
}

impl ChildSampler {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match self {
            ChildSampler::Poisson(d) => d.sample(rng) as u64,
            ChildSampler::Binomial(d) => d.sample(rng),
            ChildSampler::Geometric(d) => d.sample(rng),
            ChildSampler::Table(cdf) => {
                let u: f64 = rng.random();
                cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1) as u64
            }
        }
    }
}

/// Configuration form, e.g. `{"family": "poisson", "lambda": 4.0}` or
/// `{"family": "finite", "pmf": {"0": 0.1, "3": 0.9}}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum DistributionConfig {
    Poisson { lambda: f64 },
    Binomial { n: u32, p: f64 },
    Geometric { p: f64 },
    Finite { pmf: BTreeMap<String, f64> },
}

impl DistributionConfig {
    pub fn build(&self) -> Result<ChildDistribution> {
        match self {
            DistributionConfig::Poisson { lambda } => ChildDistribution::poisson(*lambda),
            DistributionConfig::Binomial { n, p } => ChildDistribution::binomial(*n, *p),
            DistributionConfig::Geometric { p } => ChildDistribution::geometric(*p),
            DistributionConfig::Finite { pmf } => {
                let mut table = Vec::new();
                for (key, &q) in pmf {
                    let m: usize = key.trim().parse().map_err(|_| {
                        Error::InvalidInput(format!("finite pmf key {key:?} is not a child count"))
                    })?;
                    if m >= table.len() {
                        table.resize(m + 1, 0.0);
                    }
                    table[m] += q;
                }
                ChildDistribution::finite(table)
            }
        }
    }

    /// Same family with its scalar parameter replaced: `lambda` for Poisson,
    /// `p` for binomial and geometric.
    pub fn with_parameter(&self, value: f64) -> Result<Self> {
        Ok(match self {
            DistributionConfig::Poisson { .. } => DistributionConfig::Poisson { lambda: value },
            DistributionConfig::Binomial { n, .. } => DistributionConfig::Binomial { n: *n, p: value },
            DistributionConfig::Geometric { .. } => DistributionConfig::Geometric { p: value },
            DistributionConfig::Finite { .. } => {
                return Err(Error::Unsupported("finite tables have no sweep parameter".into()))
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn families() -> Vec<ChildDistribution> {
        vec![
            ChildDistribution::poisson(0.3).unwrap(),
            ChildDistribution::poisson(4.0).unwrap(),
            ChildDistribution::poisson(25.0).unwrap(),
            ChildDistribution::binomial(5, 0.4).unwrap(),
            ChildDistribution::binomial(3, 1.0).unwrap(),
            ChildDistribution::geometric(0.2).unwrap(),
            ChildDistribution::geometric(0.7).unwrap(),
            ChildDistribution::finite(vec![0.1, 0.0, 0.0, 0.9]).unwrap(),
        ]
    }

    #[test]
    fn pmf_examples() {
        let p = ChildDistribution::poisson(4.0).unwrap();
        assert!((p.pmf(0) - (-4.0f64).exp()).abs() < 1e-16);
        assert!((p.pmf(0) - 0.0183156).abs() < 1e-7);
        // closed form e^{-λ} λ^m / m!
        let direct = (-4.0f64).exp() * 4f64.powi(7) / 5040.0;
        assert!((p.pmf(7) - direct).abs() < 1e-15);
        let point = ChildDistribution::finite(vec![0.0, 0.0, 1.0]).unwrap();
        assert_eq!(point.pmf(2), 1.0);
        let b = ChildDistribution::binomial(3, 0.5).unwrap();
        assert!((b.pmf(3) - 0.125).abs() < 1e-15);
        assert!(p.pmf_checked(-1).is_err());
    }

    #[test]
    fn rejects_degenerate() {
        assert!(ChildDistribution::finite(vec![1.0]).is_err());
        assert!(ChildDistribution::finite(vec![0.5, 0.5]).is_err());
        assert!(ChildDistribution::finite(vec![0.5, 0.4]).is_err());
        assert!(ChildDistribution::poisson(0.0).is_err());
        assert!(ChildDistribution::binomial(1, 0.5).is_err());
        assert!(ChildDistribution::geometric(1.0).is_err());
    }

    #[test]
    fn truncation_examples() {
        let f = ChildDistribution::finite(vec![0.1, 0.2, 0.3, 0.1, 0.1, 0.2]).unwrap();
        for eps in [1e-12, 0.1, 0.5] {
            assert_eq!(f.truncation_point(eps), 5);
        }
        let p = ChildDistribution::poisson(4.0).unwrap();
        let n = p.truncation_point(1e-12);
        // direct summation oracle
        let tail: f64 = (n + 1..200).map(|m| p.pmf(m)).sum();
        assert!(tail <= 1e-12, "tail {tail}");
        let tail_before: f64 = (n..200).map(|m| p.pmf(m)).sum();
        assert!(tail_before > 1e-12);
        assert!(p.truncation_point(0.5) < n);
    }

    #[test]
    fn mass_within_truncation() {
        for d in families() {
            let n = d.truncation_point(DEFAULT_EPS);
            let total: f64 = (0..=n).map(|m| d.pmf(m)).sum();
            assert!((total - 1.0).abs() <= 1e-12, "{d:?}: {total}");
            assert!((0..=n).all(|m| d.pmf(m) >= 0.0));
            assert!(d.has_finite_log_moment());
        }
    }

    #[test]
    fn config_round_trip() {
        let text = r#"{"family": "finite", "pmf": {"0": 0.1, "3": 0.9}}"#;
        let cfg: DistributionConfig = serde_json::from_str(text).unwrap();
        let d = cfg.build().unwrap();
        assert_eq!(d.pmf(3), 0.9);
        assert_eq!(d.to_config(), cfg);
        let cfg: DistributionConfig =
            serde_json::from_str(r#"{"family": "binomial", "n": 5, "p": 0.4}"#).unwrap();
        assert!((cfg.build().unwrap().pmf(0) - 0.6f64.powi(5)).abs() < 1e-15);
        let swept = DistributionConfig::Poisson { lambda: 1.0 }.with_parameter(3.5).unwrap();
        assert_eq!(swept.build().unwrap().poisson_rate(), Some(3.5));
        assert!(serde_json::from_str::<DistributionConfig>(r#"{"family": "cauchy"}"#).is_err());
    }

    #[test]
    fn sampler_matches_mean() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for d in families() {
            let s = d.sampler();
            let n = 20_000;
            let total: u64 = (0..n).map(|_| s.sample(&mut rng)).sum();
            let mean = total as f64 / n as f64;
            let sd = (d.mean() + d.mean().powi(2) * 5.0).sqrt() / (n as f64).sqrt();
            assert!((mean - d.mean()).abs() < 6.0 * sd + 1e-9, "{d:?}: {mean}");
        }
    }

    proptest! {
        #[test]
        fn truncation_monotone_in_eps(a in 1e-13f64..0.9, b in 1e-13f64..0.9, lambda in 0.1f64..30.0) {
            let d = ChildDistribution::poisson(lambda).unwrap();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(d.truncation_point(lo) >= d.truncation_point(hi));
        }
    }
}
