//! Hausdorff lifting over finite sets and the Hausdorff-Kantorovich metric on
//! convex sets of distributions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Debug;

use num_traits::{One, Zero};

use crate::convex::ConvexSet;
use crate::lp::{minimize, LpOutcome};
use crate::space::{Coupling, Dist, FiniteMetricSpace, Metric, Point};
use crate::transport::kantorovich_with;
use crate::{Error, Result, Q};

/// `max_{a∈A} min_{b∈B} d(a,b)`.
pub fn directed_hausdorff<T, M: Metric<T> + ?Sized>(metric: &M, a: &[T], b: &[T]) -> Result<Q> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySet);
    }
    Ok(a.iter()
        .map(|x| b.iter().map(|y| metric.distance(x, y)).min().unwrap())
        .max()
        .unwrap())
}

pub fn hausdorff<T, M: Metric<T> + ?Sized>(metric: &M, a: &[T], b: &[T]) -> Result<Q> {
    Ok(directed_hausdorff(metric, a, b)?.max(directed_hausdorff(metric, b, a)?))
}

/// `HK(M)`: the metric on convex sets of distributions over a metric carrier.
pub struct HausdorffKantorovich<M>(pub M);

impl<T: Ord + Clone + Debug, M: Metric<T>> Metric<ConvexSet<T>> for HausdorffKantorovich<M> {
    fn distance(&self, s: &ConvexSet<T>, t: &ConvexSet<T>) -> Q {
        hk_with(&self.0, s, t)
    }
}

/// Nearest point of a convex set to a distribution.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Projection<T: Ord> {
    /// `min_{Θ ∈ T} K(Δ, Θ)`.
    pub value: Q,
    /// A minimiser `Θ`.
    pub target: Dist<T>,
    /// Coefficients expressing `target` over the base of the set.
    pub lambda: Vec<Q>,
    /// Optimal coupling of `Δ` and `target`.
    pub coupling: Coupling<T>,
}

/// Minimises `K(M)(Δ, Θ)` over `Θ ∈ cc(base(T))` exactly. The transport
/// plan and the mixing coefficients are solved jointly as one linear program.
pub fn project<T, M>(metric: &M, d: &Dist<T>, set: &ConvexSet<T>) -> Projection<T>
where
    T: Ord + Clone + Debug,
    M: Metric<T> + ?Sized,
{
    let base = set.base();
    if base.len() == 1 {
        let r = kantorovich_with(metric, d, &base[0]);
        return Projection { value: r.value, target: base[0].clone(), lambda: vec![Q::one()], coupling: r.witness };
    }
    let xs: Vec<&T> = d.support().collect();
    let us: Vec<&T> = set.support().into_iter().collect();
    let (m, k, nb) = (xs.len(), us.len(), base.len());
    // Variables: ω[i][j] at i*k + j, then λ.
    let nvar = m * k + nb;
    let mut c = vec![Q::zero(); nvar];
    for (i, x) in xs.iter().enumerate() {
        for (j, u) in us.iter().enumerate() {
            c[i * k + j] = metric.distance(x, u);
        }
    }
    let mut a = Vec::with_capacity(m + k + 1);
    let mut b = Vec::with_capacity(m + k + 1);
    for (i, x) in xs.iter().enumerate() {
        let mut row = vec![Q::zero(); nvar];
        for j in 0..k {
            row[i * k + j] = Q::one();
        }
        a.push(row);
        b.push(d.weight(x));
    }
    for (j, u) in us.iter().enumerate() {
        let mut row = vec![Q::zero(); nvar];
        for i in 0..m {
            row[i * k + j] = Q::one();
        }
        for (l, g) in base.iter().enumerate() {
            row[m * k + l] = -g.weight(u);
        }
        a.push(row);
        b.push(Q::zero());
    }
    let mut row = vec![Q::zero(); nvar];
    for l in 0..nb {
        row[m * k + l] = Q::one();
    }
    a.push(row);
    b.push(Q::one());
    let LpOutcome::Optimal { x, value } = minimize(&c, &a, &b) else {
        unreachable!("the projection program is feasible and bounded below by 0")
    };
    let lambda = x[m * k..].to_vec();
    let target = Dist::mix(lambda.iter().zip(base));
    let mut joint = BTreeMap::new();
    for i in 0..m {
        for j in 0..k {
            let w = &x[i * k + j];
            if !w.is_zero() {
                joint.insert((xs[i].clone(), us[j].clone()), w.clone());
            }
        }
    }
    Projection { value, target: target.clone(), lambda, coupling: Coupling::new_unchecked(joint, d.clone(), target) }
}

/// `sup_{Δ ∈ S} inf_{Θ ∈ T} K(M)(Δ,Θ)` over the convex closures. The map
/// `Δ ↦ inf_{Θ∈T} K(Δ,Θ)` is convex, so the supremum sits at a base
/// element; the infimum is a projection onto the whole closure of `T`.
pub fn hk_directed_with<T, M>(metric: &M, s: &ConvexSet<T>, t: &ConvexSet<T>) -> Q
where
    T: Ord + Clone + Debug,
    M: Metric<T> + ?Sized,
{
    s.base().iter().map(|d| project(metric, d, t).value).max().unwrap()
}

/// `HK(M)(S,T)`, the Hausdorff distance between the convex closures under the
/// Kantorovich lifting of `metric`.
pub fn hk_with<T, M>(metric: &M, s: &ConvexSet<T>, t: &ConvexSet<T>) -> Q
where
    T: Ord + Clone + Debug,
    M: Metric<T> + ?Sized,
{
    if s == t {
        return Q::zero();
    }
    hk_directed_with(metric, s, t).max(hk_directed_with(metric, t, s))
}

pub fn hk_distance(space: &FiniteMetricSpace, s: &ConvexSet<Point>, t: &ConvexSet<Point>) -> Result<Q> {
    space.check_set(s)?;
    space.check_set(t)?;
    Ok(hk_with(space, s, t))
}

/// `H(K(d))` evaluated on the two bases as finite sets, with no closure.
/// This is an upper bound for [`hk_distance`].
pub fn hk_over_bases(space: &FiniteMetricSpace, s: &ConvexSet<Point>, t: &ConvexSet<Point>) -> Result<Q> {
    space.check_set(s)?;
    space.check_set(t)?;
    hausdorff(&crate::transport::Kantorovich(space), s.base(), t.base())
}

/// Largest number of grid points per side accepted by [`hk_sampled`].
pub const SAMPLED_CAP: usize = 2000;

/// `H(K(d))` between the finite sets of grid mixtures `Σ (k_i/n)·Δ_i` of each
/// base. Grid 1 is the base-only computation.
pub fn hk_sampled(space: &FiniteMetricSpace, s: &ConvexSet<Point>, t: &ConvexSet<Point>, grid: usize) -> Result<Q> {
    space.check_set(s)?;
    space.check_set(t)?;
    if grid == 0 {
        return Err(Error::Format("grid denominator must be at least 1".into()));
    }
    let a = grid_points(s, grid)?;
    let b = grid_points(t, grid)?;
    hausdorff(&crate::transport::Kantorovich(space), &a, &b)
}

fn grid_points(s: &ConvexSet<Point>, n: usize) -> Result<Vec<Dist<Point>>> {
    let k = s.base().len();
    // Number of compositions of n into k nonnegative parts.
    let count = (1..k).fold(1u128, |acc, i| acc * (n + i) as u128 / i as u128);
    if count > SAMPLED_CAP as u128 {
        return Err(Error::TooLarge(format!("{count} grid points per side exceeds {SAMPLED_CAP}")));
    }
    let mut out = BTreeSet::new();
    let mut parts = vec![0usize; k];
    compositions(n, 0, &mut parts, &mut |parts| {
        let coeffs: Vec<Q> = parts.iter().map(|&p| Q::new((p as i64).into(), (n as i64).into())).collect();
        out.insert(Dist::mix(coeffs.iter().zip(s.base())));
    });
    Ok(out.into_iter().collect())
}

fn compositions(rest: usize, pos: usize, parts: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
    if pos + 1 == parts.len() {
        parts[pos] = rest;
        f(parts);
        return;
    }
    for v in 0..=rest {
        parts[pos] = v;
        compositions(rest - v, pos + 1, parts, f);
    }
}
