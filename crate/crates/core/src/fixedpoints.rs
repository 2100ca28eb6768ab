//! Fixed points of Ψ.
//!
//! With two colours the simplex is the interval `[0, 1]` and every fixed
//! point is a zero of `g(x) = Ψ(x) - x`: sign changes on a uniform grid are
//! bisected, and near-zero local extrema of `|g|` are refined by
//! golden-section search and marked tangential. With three or more
//! colours there is no bracketing; a multistart search is run and the
//! result is never claimed to be complete.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::automata::AutomatonSpec;
use crate::distmap::{DistMap, StateDistribution};
use crate::error::{Error, Result};
use crate::offspring::ChildDistribution;

pub const DEFAULT_GRID: usize = 10_000;
pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_TANGENCY: f64 = 1e-7;
/// Entries at or below this count as outside the support.
pub const SUPPORT_THRESHOLD: f64 = 1e-12;
/// Smallest root treated as nontrivial by [`critical_lambda`].
pub const ROOT_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Multiplicity {
    /// `g` changes sign through the root.
    Simple,
    /// `g` touches zero without changing sign.
    Tangential,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FixedPointRecord {
    pub nu: StateDistribution,
    /// `max_c |Ψ(ν)_c - ν_c|`.
    pub residual: f64,
    pub multiplicity: Multiplicity,
    pub support_full: bool,
}

impl FixedPointRecord {
    fn new(dm: &DistMap, nu: StateDistribution, multiplicity: Multiplicity) -> Result<Self> {
        let residual = dm.psi(&nu)?.residual(nu.weights());
        let support_full = nu.weights().iter().all(|&w| w > SUPPORT_THRESHOLD);
        Ok(Self { nu, residual, multiplicity, support_full })
    }

    /// Two-colour shorthand: the mass on colour 1.
    pub fn p(&self) -> f64 {
        self.nu[self.nu.k() - 1]
    }
}

#[derive(Clone, Copy, Debug)]
pub struct RootOptions {
    pub grid_size: usize,
    pub tol: f64,
    pub tangency: f64,
}

impl Default for RootOptions {
    fn default() -> Self {
        Self { grid_size: DEFAULT_GRID, tol: DEFAULT_TOL, tangency: DEFAULT_TANGENCY }
    }
}

fn bisect(g: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, mut ga: f64, tol: f64) -> f64 {
    let mut best = (f64::INFINITY, a);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        let gm = g(mid);
        if gm.abs() < best.0 {
            best = (gm.abs(), mid);
        }
        if gm.abs() <= tol || mid <= a || mid >= b {
            break;
        }
        if (gm > 0.0) == (ga > 0.0) {
            a = mid;
            ga = gm;
        } else {
            b = mid;
        }
    }
    best.1
}

fn golden_min(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() < 1e-15 {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        c
    } else {
        d
    }
}

/// All fixed points of a two-colour Ψ on `[0, 1]`, ascending in the mass
/// on colour 1.
pub fn find_fixed_points_2state(dm: &DistMap, opts: &RootOptions) -> Result<Vec<FixedPointRecord>> {
    if dm.k() != 2 {
        return Err(Error::Unsupported("bracketing search needs 2 colours".into()));
    }
    if opts.grid_size < 100 || !(opts.tol > 0.0) {
        return Err(Error::InvalidInput("grid_size must be >= 100 and tol > 0".into()));
    }
    let n = opts.grid_size;
    let tol = opts.tol;
    let g = |x: f64| dm.psi_scalar(x) - x;
    let xs: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
    let gs: Vec<f64> = xs.par_iter().map(|&x| g(x)).collect();

    let mut roots: Vec<(f64, Multiplicity)> = Vec::new();
    let on_grid = |i: usize| gs[i].abs() <= tol;
    for i in 0..=n {
        if on_grid(i) {
            let left = (i > 0).then(|| gs[i - 1]);
            let right = (i < n).then(|| gs[i + 1]);
            let crosses = match (left, right) {
                (Some(l), Some(r)) => (l > 0.0) != (r > 0.0),
                _ => true,
            };
            let m = if crosses { Multiplicity::Simple } else { Multiplicity::Tangential };
            roots.push((xs[i], m));
        }
    }
    for i in 0..n {
        if on_grid(i) || on_grid(i + 1) {
            continue;
        }
        if (gs[i] > 0.0) != (gs[i + 1] > 0.0) {
            roots.push((bisect(&g, xs[i], xs[i + 1], gs[i], tol), Multiplicity::Simple));
        }
    }
    for i in 1..n {
        let (l, c, r) = (gs[i - 1], gs[i], gs[i + 1]);
        let same_sign = (l > 0.0) == (c > 0.0) && (c > 0.0) == (r > 0.0);
        if c.abs() < opts.tangency
            && !on_grid(i)
            && same_sign
            && c.abs() <= l.abs()
            && c.abs() <= r.abs()
        {
            let x = golden_min(&|x: f64| g(x).abs(), xs[i - 1], xs[i + 1]);
            if g(x).abs() <= tol {
                roots.push((x, Multiplicity::Tangential));
            }
        }
    }
    if roots.is_empty() {
        return Err(Error::Internal(
            "no fixed point found, but a continuous self-map of [0, 1] always has one".into(),
        ));
    }
    roots.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, Multiplicity)> = Vec::new();
    for r in roots {
        match merged.last_mut() {
            Some(last) if (r.0 - last.0).abs() <= 10.0 * tol => {
                if g(r.0).abs() < g(last.0).abs() {
                    *last = r;
                }
            }
            _ => merged.push(r),
        }
    }
    merged
        .into_iter()
        .map(|(x, m)| FixedPointRecord::new(dm, StateDistribution::bernoulli(x)?, m))
        .collect()
}

#[derive(Clone, Copy, Debug)]
pub struct KStateOptions {
    /// Number of quasi-random starts, in addition to the vertices and the
    /// barycentre.
    pub starts: usize,
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for KStateOptions {
    fn default() -> Self {
        Self { starts: 32, damping: 0.5, tol: DEFAULT_TOL, max_iter: 2000 }
    }
}

#[derive(Clone, Debug)]
pub struct KStateResult {
    pub records: Vec<FixedPointRecord>,
    /// Always false: the search can miss fixed points.
    pub complete: bool,
    pub diagnostics: Vec<String>,
}

fn halton(index: usize, base: usize) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    let mut i = index;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// Quasi-random points of the simplex: Halton coordinates pushed through
/// `-ln u` and normalized (uniform on the simplex for uniform `u`).
fn simplex_starts(k: usize, count: usize) -> Vec<Vec<f64>> {
    const PRIMES: [usize; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    let mut out: Vec<Vec<f64>> = (0..k)
        .map(|c| {
            let mut v = vec![0.0; k];
            v[c] = 1.0;
            v
        })
        .collect();
    out.push(vec![1.0 / k as f64; k]);
    for i in 1..=count {
        let e: Vec<f64> = (0..k).map(|c| -halton(i, PRIMES[c % PRIMES.len()]).max(1e-12).ln()).collect();
        let s: f64 = e.iter().sum();
        out.push(e.into_iter().map(|v| v / s).collect());
    }
    out
}

fn project(x: &mut [f64]) {
    for v in x.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let s: f64 = x.iter().sum();
    x.iter_mut().for_each(|v| *v /= s);
}

fn residual_of(dm: &DistMap, x: &[f64]) -> f64 {
    dm.table().psi(x).residual(x)
}

fn damped_iteration(dm: &DistMap, start: &[f64], opts: &KStateOptions) -> Vec<f64> {
    let mut x = start.to_vec();
    for _ in 0..opts.max_iter {
        let psi = dm.table().psi(&x).value;
        let mut next: Vec<f64> = x
            .iter()
            .zip(&psi)
            .map(|(a, b)| (1.0 - opts.damping) * a + opts.damping * b)
            .collect();
        project(&mut next);
        let step = next.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        x = next;
        if step < opts.tol / 10.0 {
            break;
        }
    }
    x
}

/// Newton's method on the first `k - 1` coordinates. Damped iteration
/// cannot reach repelling fixed points; this can.
fn newton(dm: &DistMap, start: &[f64], tol: f64) -> Option<Vec<f64>> {
    let k = start.len();
    let d = k - 1;
    let lift = |y: &[f64]| {
        let mut x = y.to_vec();
        x.push(1.0 - y.iter().sum::<f64>());
        x
    };
    let inside = |x: &[f64]| x.iter().all(|&v| v >= -1e-12);
    let f = |y: &[f64]| -> DVector<f64> {
        let x = lift(y);
        let psi = dm.table().psi(&x).value;
        DVector::from_iterator(d, (0..d).map(|i| psi[i] - y[i]))
    };
    let mut y: Vec<f64> = start[..d].to_vec();
    let mut fy = f(&y);
    let mut prev = f64::INFINITY;
    for _ in 0..60 {
        let x = lift(&y);
        if inside(&x) {
            // keep polishing below `tol` while the residual still halves
            let r = residual_of(dm, &x);
            if r <= tol && (r <= 1e-15 || r > 0.5 * prev) {
                let mut x = x;
                project(&mut x);
                return Some(x);
            }
            prev = r;
        }
        let h = 1e-7;
        let mut jac = DMatrix::<f64>::zeros(d, d);
        for j in 0..d {
            let mut up = y.clone();
            let mut dn = y.clone();
            up[j] += h;
            dn[j] -= h;
            // stay in the simplex for the difference points
            let (fu, fd, width) = if !inside(&lift(&up)) {
                (f(&y), f(&dn), h)
            } else if !inside(&lift(&dn)) {
                (f(&up), f(&y), h)
            } else {
                (f(&up), f(&dn), 2.0 * h)
            };
            let col = (fu - fd) / width;
            jac.set_column(j, &col);
        }
        let step = jac.lu().solve(&(-&fy))?;
        let mut t = 1.0;
        let norm = fy.amax();
        loop {
            let cand: Vec<f64> = y.iter().zip(step.iter()).map(|(a, s)| a + t * s).collect();
            let xc = lift(&cand);
            if inside(&xc) {
                let fc = f(&cand);
                if fc.amax() < norm || t < 1e-3 {
                    y = cand;
                    fy = fc;
                    break;
                }
            }
            t *= 0.5;
            if t < 1e-8 {
                return None;
            }
        }
    }
    let x = lift(&y);
    (inside(&x) && residual_of(dm, &x) <= tol).then(|| {
        let mut x = x;
        project(&mut x);
        x
    })
}

/// Zeroes coordinates below [`ROOT_FLOOR`] when the result is still a
/// fixed point, so that boundary points report their true support.
fn snap_to_face(dm: &DistMap, x: Vec<f64>, tol: f64) -> Vec<f64> {
    if !x.iter().any(|&v| v > 0.0 && v < ROOT_FLOOR) {
        return x;
    }
    let mut y: Vec<f64> = x.iter().map(|&v| if v < ROOT_FLOOR { 0.0 } else { v }).collect();
    project(&mut y);
    if residual_of(dm, &y) <= tol.max(residual_of(dm, &x)) {
        y
    } else {
        x
    }
}

/// Multistart search for fixed points with any number of colours.
pub fn find_fixed_points_kstate(dm: &DistMap, opts: &KStateOptions) -> Result<KStateResult> {
    if opts.starts == 0 || !(opts.damping > 0.0 && opts.damping <= 1.0) || !(opts.tol > 0.0) {
        return Err(Error::InvalidInput("need starts >= 1, damping in (0, 1], tol > 0".into()));
    }
    let starts = simplex_starts(dm.k(), opts.starts);
    let found: Vec<Vec<Vec<f64>>> = starts
        .par_iter()
        .map(|s| {
            let mut hits = Vec::new();
            let x = damped_iteration(dm, s, opts);
            if let Some(x) = newton(dm, &x, opts.tol) {
                hits.push(x);
            } else if residual_of(dm, &x) <= opts.tol {
                hits.push(x);
            }
            if let Some(x) = newton(dm, s, opts.tol) {
                hits.push(x);
            }
            hits.into_iter().map(|x| snap_to_face(dm, x, opts.tol)).collect::<Vec<_>>()
        })
        .collect();
    let mut points: Vec<Vec<f64>> = Vec::new();
    for x in found.into_iter().flatten() {
        let dup = points
            .iter()
            .any(|p| p.iter().zip(&x).all(|(a, b)| (a - b).abs() <= 10.0 * opts.tol));
        if !dup {
            points.push(x);
        }
    }
    points.sort_by(|a, b| {
        a.iter()
            .rev()
            .zip(b.iter().rev())
            .map(|(u, v)| u.total_cmp(v))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut diagnostics = Vec::new();
    if points.is_empty() {
        diagnostics.push(format!("none of {} starts converged", starts.len()));
    }
    let records = points
        .into_iter()
        .map(|x| FixedPointRecord::new(dm, StateDistribution::new(x)?, Multiplicity::Simple))
        .collect::<Result<Vec<_>>>()?;
    Ok(KStateResult { records, complete: false, diagnostics })
}

/// Fixed points by whichever method suits the number of colours.
pub fn find_fixed_points(dm: &DistMap, tol: f64, grid_size: usize) -> Result<Vec<FixedPointRecord>> {
    if dm.k() == 2 {
        find_fixed_points_2state(dm, &RootOptions { grid_size, tol, ..Default::default() })
    } else {
        Ok(find_fixed_points_kstate(dm, &KStateOptions { tol, ..Default::default() })?.records)
    }
}

/// Bisects on the offspring parameter for the point where a fixed point
/// above [`ROOT_FLOOR`] appears or disappears. The caller asserts that
/// this happens once in `[lo, hi]`.
pub fn critical_lambda(
    spec: &AutomatonSpec,
    family: impl Fn(f64) -> Result<ChildDistribution>,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
    opts: &RootOptions,
) -> Result<f64> {
    if spec.k() != 2 {
        return Err(Error::Unsupported("critical parameter search needs 2 colours".into()));
    }
    if !(lo < hi) || !(tol > 0.0) {
        return Err(Error::InvalidInput("need lo < hi and tol > 0".into()));
    }
    let eps = (opts.tol / 10.0).min(crate::offspring::DEFAULT_EPS);
    let nontrivial = |lambda: f64| -> Result<bool> {
        let dm = DistMap::new(spec, &family(lambda)?, eps)?;
        Ok(find_fixed_points_2state(&dm, opts)?.iter().any(|r| r.p() > ROOT_FLOOR))
    };
    let at_lo = nontrivial(lo)?;
    if nontrivial(hi)? == at_lo {
        return Err(Error::Bracket(format!(
            "nontrivial fixed point {} at both {lo} and {hi}",
            if at_lo { "present" } else { "absent" }
        )));
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if nontrivial(mid)? == at_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
