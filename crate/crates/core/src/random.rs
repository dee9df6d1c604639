//! Seeded generators for spaces, distributions, convex sets and terms. Used
//! by the law harnesses, the CLI and the tests; every generator is a pure
//! function of the random stream.

use num_traits::{One, Zero};
use rand::seq::{index::sample, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::convex::{unique_base, ConvexSet};
use crate::rat::q;
use crate::space::{Dist, FiniteMetricSpace, Point};
use crate::terms::Term;
use crate::Q;

pub type Rng8 = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng8 {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn labels(n: usize) -> Vec<String> {
    const NAMES: &[&str] = &["a", "b", "c", "d", "e", "f", "g", "h"];
    (0..n).map(|i| NAMES.get(i).map_or_else(|| format!("x{i}"), |s| s.to_string())).collect()
}

/// Shortest-path closure of a symmetric table of positive entries.
fn metric_closure(mut t: Vec<Vec<Q>>) -> Vec<Vec<Q>> {
    let n = t.len();
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = &t[i][k] + &t[k][j];
                if via < t[i][j] {
                    t[i][j] = via;
                }
            }
        }
    }
    t
}

/// Random table with entries in `{1/6, …, 6/6}`.
pub fn metric_table(rng: &mut Rng8, n: usize) -> Vec<Vec<Q>> {
    let mut t = vec![vec![Q::zero(); n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v = q(rng.gen_range(1..=6), 6);
            t[i][j] = v.clone();
            t[j][i] = v;
        }
    }
    metric_closure(t)
}

pub fn space(rng: &mut Rng8, n: usize) -> FiniteMetricSpace {
    FiniteMetricSpace::from_table(&labels(n), metric_table(rng, n)).expect("closure of positive entries is a metric")
}

/// Positive weights with small denominators summing to one.
pub fn weights(rng: &mut Rng8, n: usize) -> Vec<Q> {
    let raw: Vec<i64> = (0..n).map(|_| rng.gen_range(1..=4)).collect();
    let total: i64 = raw.iter().sum();
    raw.into_iter().map(|w| q(w, total)).collect()
}

/// Random distribution over a uniformly sized random subset of `pool`.
pub fn dist_over<T: Ord + Clone>(rng: &mut Rng8, pool: &[T], max_support: usize) -> Dist<T> {
    let k = rng.gen_range(1..=max_support.min(pool.len()));
    let idx = sample(rng, pool.len(), k);
    let w = weights(rng, k);
    Dist::from_weights(idx.iter().map(|i| pool[i].clone()).zip(w)).unwrap()
}

pub fn dist(rng: &mut Rng8, space: &FiniteMetricSpace, max_support: usize) -> Dist<Point> {
    let pool: Vec<Point> = space.points().collect();
    dist_over(rng, &pool, max_support)
}

/// Up to `max_gens` random generators; the result is their re-based closure.
pub fn generators_over<T: Ord + Clone>(rng: &mut Rng8, pool: &[T], max_gens: usize, max_support: usize) -> Vec<Dist<T>> {
    let k = rng.gen_range(1..=max_gens);
    (0..k).map(|_| dist_over(rng, pool, max_support)).collect()
}

pub fn convex_set_over<T: Ord + Clone>(rng: &mut Rng8, pool: &[T], max_gens: usize, max_support: usize) -> ConvexSet<T> {
    unique_base(generators_over(rng, pool, max_gens, max_support)).unwrap()
}

pub fn convex_set(rng: &mut Rng8, space: &FiniteMetricSpace, max_gens: usize, max_support: usize) -> ConvexSet<Point> {
    let pool: Vec<Point> = space.points().collect();
    convex_set_over(rng, &pool, max_gens, max_support)
}

pub fn probability(rng: &mut Rng8) -> Q {
    let d = rng.gen_range(2..=8);
    q(rng.gen_range(1..d), d)
}

/// Random term of at most the given depth over the space's labels.
pub fn term(rng: &mut Rng8, space: &FiniteMetricSpace, depth: usize) -> Term {
    if depth == 0 || rng.gen_bool(0.3) {
        return Term::Gen(space.labels().choose(rng).unwrap().clone());
    }
    let l = term(rng, space, depth - 1);
    let r = term(rng, space, depth - 1);
    if rng.gen_bool(0.5) {
        Term::oplus(l, r)
    } else {
        Term::plus(probability(rng), l, r)
    }
}

/// A random space `Y` and a surjective non-expansive map `f: X → Y`
/// (given as the image of each point).
pub fn non_expansive_map(rng: &mut Rng8, x: &FiniteMetricSpace) -> (FiniteMetricSpace, Vec<Point>) {
    let k = rng.gen_range(1..=x.len());
    let mut f: Vec<usize> = (0..x.len()).map(|i| if i < k { i } else { rng.gen_range(0..k) }).collect();
    f.shuffle(rng);
    let mut t = vec![vec![Q::zero(); k]; k];
    for i in 0..k {
        for j in 0..k {
            if i == j {
                continue;
            }
            let mut best = Q::one();
            for a in x.points() {
                for b in x.points() {
                    if f[a.0] == i && f[b.0] == j && x.d(a, b) < &best {
                        best = x.d(a, b).clone();
                    }
                }
            }
            t[i][j] = best;
        }
    }
    let y = FiniteMetricSpace::from_table(&labels(k), metric_closure(t)).unwrap();
    (y, f.into_iter().map(Point).collect())
}

/// Extends `x` by `extra` points, keeping the distances among the old points.
/// A new point sits at `max_k (d(·, anchor_k) + r_k)`, capped at 1, which keeps
/// the table a metric.
pub fn extend_space(rng: &mut Rng8, x: &FiniteMetricSpace, extra: usize) -> FiniteMetricSpace {
    let n = x.len();
    let mut t: Vec<Vec<Q>> = (0..n).map(|i| (0..n).map(|j| x.d(Point(i), Point(j)).clone()).collect()).collect();
    for _ in 0..extra {
        let m = t.len();
        let anchors: Vec<(usize, Q)> = (0..2).map(|_| (rng.gen_range(0..m), q(rng.gen_range(1..=6), 6))).collect();
        let profile: Vec<Q> = (0..m)
            .map(|i| anchors.iter().map(|(k, r)| &t[*k][i] + r).max().unwrap().min(Q::one()))
            .collect();
        for (row, v) in t.iter_mut().zip(&profile) {
            row.push(v.clone());
        }
        let mut last = profile;
        last.push(Q::zero());
        t.push(last);
    }
    FiniteMetricSpace::from_table(&labels(n + extra), t).unwrap()
}

/// Pointwise maximum of the space's metric and a fresh random metric.
pub fn dominating_table(rng: &mut Rng8, x: &FiniteMetricSpace) -> Vec<Vec<Q>> {
    let other = metric_table(rng, x.len());
    (0..x.len())
        .map(|i| (0..x.len()).map(|j| x.d(Point(i), Point(j)).clone().max(other[i][j].clone())).collect())
        .collect()
}

pub fn subset<T: Clone>(rng: &mut Rng8, pool: &[T], max: usize) -> Vec<T> {
    let k = rng.gen_range(1..=max.min(pool.len()));
    sample(rng, pool.len(), k).iter().map(|i| pool[i].clone()).collect()
}
