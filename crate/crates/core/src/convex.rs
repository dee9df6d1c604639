//! Finitely generated convex sets of distributions, stored by their unique
//! base, with convex union, weighted Minkowski sums and the monad structure.

use std::collections::BTreeSet;
use std::fmt::Debug;

use num_traits::{One, Zero};
use rand::Rng;

use crate::lp::feasible_point;
use crate::rat::{format_q, is_probability};
use crate::space::{Dist, FiniteMetricSpace, Point};
use crate::{Error, Result, Q};

/// Convex closure of finitely many distributions, represented by its unique
/// base (extreme points) in ascending [`Dist`] order. The derived order is the
/// lexicographic order on bases.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ConvexSet<T: Ord> {
    base: Vec<Dist<T>>,
}

/// An element of `𝒟𝒞(X)`.
pub type DistOverSets<T> = Dist<ConvexSet<T>>;
/// An element of `𝒞𝒞(X)`.
pub type SetOfSets<T> = ConvexSet<ConvexSet<T>>;

impl<T: Ord + Clone> ConvexSet<T> {
    /// `cc(gens)`, re-based.
    pub fn from_generators(gens: Vec<Dist<T>>) -> Result<Self> {
        unique_base(gens)
    }

    pub fn singleton(d: Dist<T>) -> Self {
        ConvexSet { base: vec![d] }
    }

    /// `η(x) = {δx}`.
    pub fn unit(x: T) -> Self {
        Self::singleton(Dist::dirac(x))
    }

    pub fn base(&self) -> &[Dist<T>] {
        &self.base
    }

    pub fn into_base(self) -> Vec<Dist<T>> {
        self.base
    }

    /// Every point in the support of some base element, ascending.
    pub fn support(&self) -> BTreeSet<&T> {
        self.base.iter().flat_map(|d| d.support()).collect()
    }

    pub fn contains(&self, d: &Dist<T>) -> bool {
        in_hull(d, &self.base).is_some()
    }
}

impl FiniteMetricSpace {
    pub fn check_set(&self, s: &ConvexSet<Point>) -> Result<()> {
        s.base().iter().try_for_each(|d| self.check_dist(d))
    }
}

/// Exact convex-hull membership. On success returns `λ ≥ 0` with `Σλ = 1`
/// and `Σ λ_i·gens_i = d`, one coefficient per generator.
pub fn in_hull<T: Ord + Clone>(d: &Dist<T>, gens: &[Dist<T>]) -> Option<Vec<Q>> {
    if gens.is_empty() {
        return None;
    }
    if let Some(i) = gens.iter().position(|g| g == d) {
        let mut lambda = vec![Q::zero(); gens.len()];
        lambda[i] = Q::one();
        return Some(lambda);
    }
    let coords: BTreeSet<&T> = gens.iter().flat_map(|g| g.support()).collect();
    if d.support().any(|x| !coords.contains(x)) {
        return None;
    }
    let mut a: Vec<Vec<Q>> = coords.iter().map(|x| gens.iter().map(|g| g.weight(x)).collect()).collect();
    let mut b: Vec<Q> = coords.iter().map(|x| d.weight(x)).collect();
    a.push(vec![Q::one(); gens.len()]);
    b.push(Q::one());
    feasible_point(&a, &b, gens.len())
}

/// Removes every generator lying in the hull of the other distinct generators
/// and sorts the survivors canonically.
pub fn unique_base<T: Ord + Clone>(gens: Vec<Dist<T>>) -> Result<ConvexSet<T>> {
    let distinct: Vec<Dist<T>> = gens.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
    if distinct.is_empty() {
        return Err(Error::EmptyInput);
    }
    if distinct.len() == 1 {
        return Ok(ConvexSet { base: distinct });
    }
    let mut keep = Vec::with_capacity(distinct.len());
    for (i, g) in distinct.iter().enumerate() {
        let others: Vec<Dist<T>> =
            distinct.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, o)| o.clone()).collect();
        if in_hull(g, &others).is_none() {
            keep.push(g.clone());
        }
    }
    Ok(ConvexSet { base: keep })
}

/// Weighted Minkowski sum `WMS(Σ p_i S_i) = { Σ p_i·Δ_i | Δ_i ∈ S_i }`.
pub fn wms<T: Ord + Clone>(phi: &DistOverSets<T>) -> ConvexSet<T> {
    unique_base(wms_generators(phi)).expect("a product of nonempty bases is nonempty")
}

/// All mixtures picking one base element per set in the support of `phi`.
fn wms_generators<T: Ord + Clone>(phi: &DistOverSets<T>) -> Vec<Dist<T>> {
    let parts: Vec<(&Q, &[Dist<T>])> = phi.iter().map(|(s, p)| (p, s.base())).collect();
    let mut out = Vec::new();
    let mut idx = vec![0usize; parts.len()];
    loop {
        out.push(Dist::mix(parts.iter().zip(&idx).map(|((p, b), &k)| (*p, &b[k]))));
        let mut pos = 0;
        loop {
            if pos == parts.len() {
                return out;
            }
            idx[pos] += 1;
            if idx[pos] < parts[pos].1.len() {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

/// Convex union `cc(S ∪ T)`.
pub fn oplus<T: Ord + Clone>(s: &ConvexSet<T>, t: &ConvexSet<T>) -> ConvexSet<T> {
    if s == t {
        return s.clone();
    }
    unique_base(s.base.iter().chain(&t.base).cloned().collect()).expect("nonempty")
}

/// `S +_p T = WMS(p S + (1−p) T)`.
pub fn plus_p<T: Ord + Clone>(p: &Q, s: &ConvexSet<T>, t: &ConvexSet<T>) -> Result<ConvexSet<T>> {
    if !is_probability(p) {
        return Err(Error::BadProbability(format_q(p)));
    }
    if s == t {
        return Ok(s.clone());
    }
    let phi = Dist::from_map_unchecked([(s.clone(), p.clone()), (t.clone(), Q::one() - p)].into_iter().collect());
    Ok(wms(&phi))
}

/// `𝒞f`: push every base element forward, then re-base.
pub fn functor_map<T: Ord + Clone, U: Ord + Clone>(f: impl Fn(&T) -> U, s: &ConvexSet<T>) -> ConvexSet<U> {
    unique_base(s.base.iter().map(|d| d.pushforward(&f)).collect()).expect("nonempty")
}

pub fn try_functor_map<T: Ord + Clone, U: Ord + Clone>(
    f: impl Fn(&T) -> Result<U>,
    s: &ConvexSet<T>,
) -> Result<ConvexSet<U>> {
    unique_base(s.base.iter().map(|d| d.try_pushforward(&f)).collect::<Result<_>>()?)
}

pub fn monad_unit<T: Ord + Clone>(x: T) -> ConvexSet<T> {
    ConvexSet::unit(x)
}

/// `μ(S)`: the closure of all `Σ Φ(T)·Δ_T` with `Φ ∈ base(S)`, `Δ_T ∈ base(T)`.
pub fn monad_mult<T: Ord + Clone>(ss: &SetOfSets<T>) -> ConvexSet<T> {
    unique_base(ss.base.iter().flat_map(wms_generators).collect()).expect("nonempty")
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LawReport {
    pub trials: usize,
    pub checks: usize,
    pub violations: Vec<String>,
}

impl LawReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Both unit laws and associativity of `μ` on random instances over random
/// spaces of at most four points.
pub fn check_monad_laws(seed: u64, trials: usize) -> LawReport {
    use crate::random;
    let mut rng = random::rng(seed);
    let mut report = LawReport { trials, ..Default::default() };
    for trial in 0..trials {
        let n = rng.gen_range(1..=4);
        let space = random::space(&mut rng, n);
        let s = random::convex_set(&mut rng, &space, 3, 3);

        let left = monad_mult(&ConvexSet::unit(s.clone()));
        if left != s {
            report.violations.push(format!("trial {trial}: μ∘η ≠ id on {s:?}"));
        }
        let right = monad_mult(&functor_map(|x: &Point| ConvexSet::unit(*x), &s));
        if right != s {
            report.violations.push(format!("trial {trial}: μ∘𝒞η ≠ id on {s:?}"));
        }

        let pool1: Vec<ConvexSet<Point>> = (0..3).map(|_| random::convex_set(&mut rng, &space, 2, 2)).collect();
        let pool2: Vec<SetOfSets<Point>> = (0..2).map(|_| random::convex_set_over(&mut rng, &pool1, 2, 2)).collect();
        let sss = random::convex_set_over(&mut rng, &pool2, 2, 2);
        let a = monad_mult(&functor_map(monad_mult, &sss));
        let b = monad_mult(&monad_mult(&sss));
        if a != b {
            report.violations.push(format!("trial {trial}: μ∘𝒞μ ≠ μ∘μ on {sss:?}"));
        }
        report.checks += 3;
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lifting::{hk_distance, hk_with, HausdorffKantorovich};
    use crate::rat::q;
    use crate::space::fixtures::{dist, pt, x3};
    use crate::transport::kantorovich_with;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;

    fn mid_ab(s: &FiniteMetricSpace) -> Dist<Point> {
        dist(s, &[("a", q(1, 2)), ("b", q(1, 2))])
    }

    #[test]
    fn hull_examples() {
        let s = x3();
        let (da, db, dc) = (s.dirac("a").unwrap(), s.dirac("b").unwrap(), s.dirac("c").unwrap());
        assert_eq!(in_hull(&da, std::slice::from_ref(&da)), Some(vec![Q::one()]));
        assert_eq!(in_hull(&mid_ab(&s), &[da.clone(), db.clone()]), Some(vec![q(1, 2), q(1, 2)]));
        assert_eq!(in_hull(&dc, &[da, db]), None);
    }

    #[test]
    fn unique_base_examples() {
        let s = x3();
        let (da, db, dc) = (s.dirac("a").unwrap(), s.dirac("b").unwrap(), s.dirac("c").unwrap());
        let b = unique_base(vec![da.clone(), db.clone(), mid_ab(&s)]).unwrap();
        assert_eq!(b.base(), &[da.clone(), db.clone()]);
        assert_eq!(unique_base(vec![da.clone()]).unwrap().base(), std::slice::from_ref(&da));
        assert_eq!(unique_base(vec![dc.clone(), db.clone(), da.clone()]).unwrap().base(), &[da, db, dc]);
        assert_eq!(unique_base::<Point>(vec![]), Err(Error::EmptyInput));
    }

    #[test]
    fn wms_examples() {
        let s = x3();
        let (da, db, dc) = (s.dirac("a").unwrap(), s.dirac("b").unwrap(), s.dirac("c").unwrap());
        let ab = ConvexSet::from_generators(vec![da.clone(), db.clone()]).unwrap();
        assert_eq!(wms(&Dist::dirac(ab.clone())), ab);
        let half = |x: ConvexSet<Point>, y: ConvexSet<Point>| {
            Dist::from_weights([(x, q(1, 2)), (y, q(1, 2))]).unwrap()
        };
        assert_eq!(
            wms(&half(ConvexSet::singleton(da.clone()), ConvexSet::singleton(db.clone()))),
            ConvexSet::singleton(mid_ab(&s))
        );
        let expected = ConvexSet::from_generators(vec![
            dist(&s, &[("a", q(1, 2)), ("c", q(1, 2))]),
            dist(&s, &[("b", q(1, 2)), ("c", q(1, 2))]),
        ])
        .unwrap();
        assert_eq!(wms(&half(ab, ConvexSet::singleton(dc))), expected);
    }

    #[test]
    fn oplus_and_plus_examples() {
        let s = x3();
        let (a, b, c) = (pt(&s, "a"), pt(&s, "b"), pt(&s, "c"));
        let (ua, ub, uc) = (ConvexSet::unit(a), ConvexSet::unit(b), ConvexSet::unit(c));
        let ab = oplus(&ua, &ub);
        assert_eq!(ab.base(), &[Dist::dirac(a), Dist::dirac(b)]);
        assert_eq!(oplus(&ab, &ab), ab);
        assert_eq!(oplus(&oplus(&ua, &ub), &uc), oplus(&ua, &oplus(&ub, &uc)));
        let half = q(1, 2);
        assert_eq!(plus_p(&half, &ab, &ab).unwrap(), ab);
        assert_eq!(plus_p(&half, &ua, &ub).unwrap(), ConvexSet::singleton(mid_ab(&s)));
        assert_eq!(
            plus_p(&half, &ab, &ua).unwrap().base(),
            &[Dist::dirac(a), mid_ab(&s)]
        );
        assert!(matches!(plus_p(&Q::one(), &ua, &ub), Err(Error::BadProbability(_))));
        assert!(matches!(plus_p(&Q::zero(), &ua, &ub), Err(Error::BadProbability(_))));
    }

    #[test]
    fn functor_and_monad_examples() {
        let s = x3();
        let (a, b, c) = (pt(&s, "a"), pt(&s, "b"), pt(&s, "c"));
        let ab = oplus(&ConvexSet::unit(a), &ConvexSet::unit(b));
        assert_eq!(functor_map(|x| *x, &ab), ab);
        assert_eq!(functor_map(|x| if *x == b { a } else { *x }, &ab), ConvexSet::unit(a));
        assert_eq!(functor_map(|_| c, &ab), ConvexSet::unit(c));
        assert_eq!(monad_unit(a).base(), &[Dist::dirac(a)]);
        assert_eq!(monad_mult(&ConvexSet::unit(ab.clone())), ab);
        assert_eq!(monad_mult(&functor_map(|x: &Point| ConvexSet::unit(*x), &ab)), ab);
        let ss = oplus(&ConvexSet::unit(ConvexSet::unit(a)), &ConvexSet::unit(ConvexSet::unit(b)));
        assert_eq!(monad_mult(&ss), ab);
        let err = try_functor_map(|x: &Point| if *x == a { Ok(*x) } else { Err(Error::UnknownPoint("z".into())) }, &ab);
        assert_eq!(err, Err(Error::UnknownPoint("z".into())));
    }

    #[test]
    fn associativity_on_a_hand_built_triple() {
        let s = x3();
        let (a, b, c) = (pt(&s, "a"), pt(&s, "b"), pt(&s, "c"));
        let s1 = oplus(&ConvexSet::unit(a), &ConvexSet::unit(b));
        let s2 = ConvexSet::unit(c);
        let ss1 = ConvexSet::singleton(Dist::from_weights([(s1.clone(), q(1, 3)), (s2.clone(), q(2, 3))]).unwrap());
        let ss2 = oplus(&ConvexSet::unit(s1), &ConvexSet::unit(s2));
        let sss = ConvexSet::from_generators(vec![
            Dist::from_weights([(ss1.clone(), q(1, 2)), (ss2.clone(), q(1, 2))]).unwrap(),
            Dist::dirac(ss2),
        ])
        .unwrap();
        let lhs = monad_mult(&functor_map(monad_mult, &sss));
        let rhs = monad_mult(&monad_mult(&sss));
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn monad_laws_harness() {
        let r = check_monad_laws(7, 60);
        assert!(r.passed(), "{:?}", r.violations);
        assert_eq!(r.checks, 180);
        let single = FiniteMetricSpace::new(&["x"], &[]).unwrap();
        let s = ConvexSet::unit(Point(0));
        assert_eq!(monad_mult(&ConvexSet::unit(s.clone())), s);
        assert_eq!(single.len(), 1);
    }

    #[test]
    fn unique_base_is_order_independent() {
        let mut rng = crate::random::rng(3);
        let space = crate::random::space(&mut rng, 4);
        for _ in 0..40 {
            let mut gens: Vec<_> = (0..5).map(|_| crate::random::dist(&mut rng, &space, 3)).collect();
            let s = crate::random::convex_set(&mut rng, &space, 3, 3);
            gens.extend(s.base().iter().cloned());
            let share = q(1, s.base().len() as i64);
            let m = Dist::mix(s.base().iter().map(|d| (&share, d)));
            gens.push(m);
            let reference = unique_base(gens.clone()).unwrap();
            gens.shuffle(&mut rng);
            assert_eq!(unique_base(gens).unwrap(), reference);
        }
    }

    fn arb_instance() -> impl Strategy<Value = (FiniteMetricSpace, Vec<ConvexSet<Point>>, Q)> {
        (any::<u64>(), 1usize..5, 1i64..10).prop_map(|(seed, n, num)| {
            let mut rng = crate::random::rng(seed);
            let space = crate::random::space(&mut rng, n);
            let sets = (0..4).map(|_| crate::random::convex_set(&mut rng, &space, 3, 3)).collect();
            (space, sets, q(num, 10))
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn canonical_form_is_idempotent((_space, sets, _p) in arb_instance()) {
            for s in &sets {
                prop_assert_eq!(&unique_base(s.base().to_vec()).unwrap(), s);
            }
        }

        #[test]
        fn convex_semilattice_axioms((_space, sets, p) in arb_instance(), qn in 1i64..10) {
            let (x, y, z) = (&sets[0], &sets[1], &sets[2]);
            let qq = q(qn, 10);
            prop_assert_eq!(oplus(&oplus(x, y), z), oplus(x, &oplus(y, z)));
            prop_assert_eq!(oplus(x, y), oplus(y, x));
            prop_assert_eq!(oplus(x, x), x.clone());
            let pq = &p * &qq;
            let inner = &p * (Q::one() - &qq) / (Q::one() - &pq);
            let lhs = plus_p(&p, &plus_p(&qq, x, y).unwrap(), z).unwrap();
            let rhs = plus_p(&pq, x, &plus_p(&inner, y, z).unwrap()).unwrap();
            prop_assert_eq!(lhs, rhs);
            prop_assert_eq!(plus_p(&p, x, y).unwrap(), plus_p(&(Q::one() - &p), y, x).unwrap());
            prop_assert_eq!(plus_p(&p, x, x).unwrap(), x.clone());
            let d_lhs = plus_p(&p, x, &oplus(y, z)).unwrap();
            let d_rhs = oplus(&plus_p(&p, x, y).unwrap(), &plus_p(&p, x, z).unwrap());
            prop_assert_eq!(d_lhs, d_rhs);
            let xy = oplus(x, y);
            prop_assert_eq!(oplus(&xy, &plus_p(&p, x, y).unwrap()), xy);
        }

        #[test]
        fn hk_is_convex_and_wms_non_expansive((space, sets, p) in arb_instance()) {
            let r = Q::one() - &p;
            let lhs = hk_distance(&space, &plus_p(&p, &sets[0], &sets[1]).unwrap(), &plus_p(&p, &sets[2], &sets[3]).unwrap()).unwrap();
            let rhs = &p * hk_distance(&space, &sets[0], &sets[2]).unwrap() + &r * hk_distance(&space, &sets[1], &sets[3]).unwrap();
            prop_assert!(lhs <= rhs);
            let phi = Dist::mix([(&p, &Dist::dirac(sets[0].clone())), (&r, &Dist::dirac(sets[1].clone()))]);
            let psi = Dist::mix([(&p, &Dist::dirac(sets[2].clone())), (&r, &Dist::dirac(sets[3].clone()))]);
            let outer = kantorovich_with(&HausdorffKantorovich(&space), &phi, &psi).value;
            prop_assert!(hk_distance(&space, &wms(&phi), &wms(&psi)).unwrap() <= outer);
        }

        #[test]
        fn convex_combinations_of_the_base_are_absorbed((_space, sets, _p) in arb_instance(), seed in any::<u64>()) {
            let mut rng = crate::random::rng(seed);
            let s = &sets[0];
            let weights = crate::random::weights(&mut rng, s.base().len());
            let m = Dist::mix(weights.iter().zip(s.base()));
            prop_assert_eq!(&oplus(s, &ConvexSet::singleton(m)), s);
        }

        #[test]
        fn functor_map_is_non_expansive(seed in any::<u64>()) {
            let mut rng = crate::random::rng(seed);
            let x = crate::random::space(&mut rng, 4);
            let (y, f) = crate::random::non_expansive_map(&mut rng, &x);
            let s = crate::random::convex_set(&mut rng, &x, 3, 3);
            let t = crate::random::convex_set(&mut rng, &x, 3, 3);
            let img = |c: &ConvexSet<Point>| functor_map(|p: &Point| f[p.0], c);
            prop_assert!(hk_with(&y, &img(&s), &img(&t)) <= hk_with(&x, &s, &t));
        }
    }
}
