//! Eilenberg-Moore algebras of the convex-set monad and quantitative convex
//! semilattices as function-backed structures, with the two functors between
//! them and sampled round-trip and law checks.

use std::fmt::Debug;
use std::sync::Arc;

use num_traits::One;
use rand::Rng;

use crate::convex::{functor_map, monad_mult, plus_p, unique_base, ConvexSet, LawReport, SetOfSets};
use crate::lifting::hk_with;
use crate::random::{self, Rng8};
use crate::space::{Dist, FiniteMetricSpace, Metric, Point};
use crate::terms::nu_generic;
use crate::Q;

pub type Structure<A> = Arc<dyn Fn(&ConvexSet<A>) -> A + Send + Sync>;
pub type BinOp<A> = Arc<dyn Fn(&A, &A) -> A + Send + Sync>;
pub type ProbOp<A> = Arc<dyn Fn(&Q, &A, &A) -> A + Send + Sync>;
pub type CarrierMetric<A> = Arc<dyn Fn(&A, &A) -> Q + Send + Sync>;

/// `α: 𝒞(A) → A` together with the metric on `A`.
#[derive(Clone)]
pub struct EMAlgebra<A: Ord> {
    pub alpha: Structure<A>,
    pub metric: CarrierMetric<A>,
}

#[derive(Clone)]
pub struct QuantConvexSemilattice<A: Ord> {
    pub oplus: BinOp<A>,
    pub plusp: ProbOp<A>,
    pub metric: CarrierMetric<A>,
}

impl<A: Ord> Metric<A> for EMAlgebra<A> {
    fn distance(&self, x: &A, y: &A) -> Q {
        (self.metric)(x, y)
    }
}

impl<A: Ord> Metric<A> for QuantConvexSemilattice<A> {
    fn distance(&self, x: &A, y: &A) -> Q {
        (self.metric)(x, y)
    }
}

/// `x ⊕ y = α(cc{δx, δy})`, `x +_p y = α({p·x + (1−p)·y})`.
pub fn functor_f<A: Ord + Clone + Send + Sync + 'static>(em: &EMAlgebra<A>) -> QuantConvexSemilattice<A> {
    let (a1, a2) = (em.alpha.clone(), em.alpha.clone());
    QuantConvexSemilattice {
        oplus: Arc::new(move |x: &A, y: &A| {
            a1(&unique_base(vec![Dist::dirac(x.clone()), Dist::dirac(y.clone())]).expect("nonempty"))
        }),
        plusp: Arc::new(move |p: &Q, x: &A, y: &A| {
            let d = Dist::mix([(p, &Dist::dirac(x.clone())), (&(Q::one() - p), &Dist::dirac(y.clone()))]);
            a2(&ConvexSet::singleton(d))
        }),
        metric: em.metric.clone(),
    }
}

/// `α(S) = ν(S)` interpreted in the algebra.
pub fn functor_g<A: Ord + Clone + Send + Sync + 'static>(qa: &QuantConvexSemilattice<A>) -> EMAlgebra<A> {
    let (oplus, plusp) = (qa.oplus.clone(), qa.plusp.clone());
    EMAlgebra {
        alpha: Arc::new(move |s: &ConvexSet<A>| {
            nu_generic(s).eval(&|x: &A| x.clone(), &|a: &A, b: &A| oplus(a, b), &|p: &Q, a: &A, b: &A| plusp(p, a, b))
        }),
        metric: qa.metric.clone(),
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RoundtripReport {
    pub samples: usize,
    /// Indices of the samples where the two sides differ.
    pub mismatches: Vec<usize>,
}

impl RoundtripReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Compares `G(F(em)).alpha` with `em.alpha` on each sample.
pub fn roundtrip_gf<A: Ord + Clone + Send + Sync + 'static>(em: &EMAlgebra<A>, samples: &[ConvexSet<A>]) -> RoundtripReport {
    let back = functor_g(&functor_f(em));
    RoundtripReport {
        samples: samples.len(),
        mismatches: (0..samples.len()).filter(|&i| (back.alpha)(&samples[i]) != (em.alpha)(&samples[i])).collect(),
    }
}

/// Compares both operations of `F(G(qa))` with those of `qa` on each
/// sampled `(p, x, y)`.
pub fn roundtrip_fg<A: Ord + Clone + Send + Sync + 'static>(
    qa: &QuantConvexSemilattice<A>,
    samples: &[(Q, A, A)],
) -> RoundtripReport {
    let back = functor_f(&functor_g(qa));
    let differs = |(p, x, y): &(Q, A, A)| (back.oplus)(x, y) != (qa.oplus)(x, y) || (back.plusp)(p, x, y) != (qa.plusp)(p, x, y);
    RoundtripReport { samples: samples.len(), mismatches: (0..samples.len()).filter(|&i| differs(&samples[i])).collect() }
}

/// Unit and multiplication laws and non-expansiveness of `α`.
pub fn check_em_laws<A: Ord + Clone + Debug>(
    em: &EMAlgebra<A>,
    points: &[A],
    pairs: &[(ConvexSet<A>, ConvexSet<A>)],
    nested: &[SetOfSets<A>],
) -> LawReport {
    let mut r = LawReport { trials: points.len() + pairs.len() + nested.len(), ..Default::default() };
    for x in points {
        r.checks += 1;
        if (em.alpha)(&ConvexSet::unit(x.clone())) != *x {
            r.violations.push(format!("unit law fails at {x:?}"));
        }
    }
    for ss in nested {
        r.checks += 1;
        let lhs = (em.alpha)(&functor_map(|s: &ConvexSet<A>| (em.alpha)(s), ss));
        if lhs != (em.alpha)(&monad_mult(ss)) {
            r.violations.push(format!("multiplication law fails at {ss:?}"));
        }
    }
    for (s, t) in pairs {
        r.checks += 1;
        let d = em.distance(&(em.alpha)(s), &(em.alpha)(t));
        if d > hk_with(em, s, t) {
            r.violations.push(format!("α expands the pair {s:?}, {t:?}"));
        }
    }
    r
}

/// The seven equations and the `(H)`/`(K)` bounds at sampled points. Each
/// sample is `(p, x, y, z, x′, y′)`.
pub fn check_qcs_laws<A: Ord + Clone + Debug>(qa: &QuantConvexSemilattice<A>, samples: &[(Q, Q, [A; 5])]) -> LawReport {
    let o = |a: &A, b: &A| (qa.oplus)(a, b);
    let pl = |p: &Q, a: &A, b: &A| (qa.plusp)(p, a, b);
    let mut r = LawReport { trials: samples.len(), ..Default::default() };
    for (k, (p, q, [x, y, z, x2, y2])) in samples.iter().enumerate() {
        let pq = p * q;
        let s = p * (Q::one() - q) / (Q::one() - &pq);
        let laws = [
            ("A", o(&o(x, y), z) == o(x, &o(y, z))),
            ("C", o(x, y) == o(y, x)),
            ("I", o(x, x) == *x),
            ("A_p", pl(p, &pl(q, x, y), z) == pl(&pq, x, &pl(&s, y, z))),
            ("C_p", pl(p, x, y) == pl(&(Q::one() - p), y, x)),
            ("I_p", pl(p, x, x) == *x),
            ("D", pl(p, x, &o(y, z)) == o(&pl(p, x, y), &pl(p, x, z))),
            ("convexity", o(x, y) == o(&o(x, y), &pl(p, x, y))),
        ];
        let (dx, dy) = (qa.distance(x, x2), qa.distance(y, y2));
        let h = qa.distance(&o(x, y), &o(x2, y2)) <= dx.clone().max(dy.clone());
        let kk = qa.distance(&pl(p, x, y), &pl(p, x2, y2)) <= p * &dx + (Q::one() - p) * &dy;
        for (name, ok) in laws.into_iter().chain([("H", h), ("K", kk)]) {
            r.checks += 1;
            if !ok {
                r.violations.push(format!("sample {k}: {name} fails"));
            }
        }
    }
    r
}

/// The free algebra `(𝒞(Y), μ)` metrised by `HK(d)`.
pub fn free_algebra(space: &FiniteMetricSpace) -> EMAlgebra<ConvexSet<Point>> {
    let space = Arc::new(space.clone());
    EMAlgebra {
        alpha: Arc::new(|ss: &SetOfSets<Point>| monad_mult(ss)),
        metric: Arc::new(move |s: &ConvexSet<Point>, t: &ConvexSet<Point>| hk_with(&*space, s, t)),
    }
}

/// Convex union and weighted Minkowski sum on `𝒞(Y)`.
pub fn free_semilattice(space: &FiniteMetricSpace) -> QuantConvexSemilattice<ConvexSet<Point>> {
    let space = Arc::new(space.clone());
    QuantConvexSemilattice {
        oplus: Arc::new(|s: &ConvexSet<Point>, t: &ConvexSet<Point>| crate::convex::oplus(s, t)),
        plusp: Arc::new(|p: &Q, s: &ConvexSet<Point>, t: &ConvexSet<Point>| plus_p(p, s, t).expect("p in (0,1)")),
        metric: Arc::new(move |s: &ConvexSet<Point>, t: &ConvexSet<Point>| hk_with(&*space, s, t)),
    }
}

/// Negative control: agrees with `μ` whenever every base element is a Dirac
/// or the base is a singleton (so `F` cannot tell the difference), and
/// otherwise keeps only the first base element.
pub fn corrupted_free_algebra(space: &FiniteMetricSpace) -> EMAlgebra<ConvexSet<Point>> {
    let mut em = free_algebra(space);
    em.alpha = Arc::new(|ss: &SetOfSets<Point>| {
        if ss.base().len() == 1 || ss.base().iter().all(Dist::is_dirac) {
            monad_mult(ss)
        } else {
            monad_mult(&ConvexSet::singleton(ss.base()[0].clone()))
        }
    });
    em
}

/// Upper expectation on `[0,1] ∩ ℚ`: `α(S) = max_{Δ∈S} Σ Δ(x)·x`.
pub fn upper_expectation() -> EMAlgebra<Q> {
    EMAlgebra {
        alpha: Arc::new(|s: &ConvexSet<Q>| {
            s.base().iter().map(|d| d.iter().map(|(x, w)| x * w).sum::<Q>()).max().expect("nonempty")
        }),
        metric: Arc::new(|x: &Q, y: &Q| num_traits::Signed::abs(&(x - y))),
    }
}

/// Deterministic samples for the free algebra over `space`.
pub struct FreeSamples {
    pub sets: Vec<ConvexSet<Point>>,
    pub nested: Vec<SetOfSets<Point>>,
    pub nested_pairs: Vec<(SetOfSets<Point>, SetOfSets<Point>)>,
    pub triples: Vec<(Q, Q, [ConvexSet<Point>; 5])>,
}

pub fn free_samples(space: &FiniteMetricSpace, seed: u64, n: usize) -> FreeSamples {
    let mut rng = random::rng(seed);
    let set = |rng: &mut Rng8| random::convex_set(rng, space, 2, 3);
    let nested = |rng: &mut Rng8| {
        let pool: Vec<ConvexSet<Point>> = (0..3).map(|_| set(rng)).collect();
        random::convex_set_over(rng, &pool, 2, 2)
    };
    let mut out = FreeSamples { sets: vec![], nested: vec![], nested_pairs: vec![], triples: vec![] };
    for _ in 0..n {
        out.sets.push(set(&mut rng));
        out.nested.push(nested(&mut rng));
        let (a, b) = (nested(&mut rng), nested(&mut rng));
        out.nested_pairs.push((a, b));
        let (p, q) = (random::probability(&mut rng), random::probability(&mut rng));
        out.triples.push((p, q, std::array::from_fn(|_| set(&mut rng))));
    }
    out
}

/// Deterministic samples for the upper-expectation algebra.
pub fn rational_samples(seed: u64, n: usize) -> (Vec<Q>, Vec<ConvexSet<Q>>, Vec<SetOfSets<Q>>, Vec<(Q, Q, [Q; 5])>) {
    let mut rng = random::rng(seed);
    let point = |rng: &mut Rng8| Q::new(rng.gen_range(0..=6).into(), 6.into());
    let pool: Vec<Q> = (0..=6).map(|k| Q::new(k.into(), 6.into())).collect();
    let mut points = Vec::new();
    let mut sets = Vec::new();
    let mut nested = Vec::new();
    let mut triples = Vec::new();
    for _ in 0..n {
        points.push(point(&mut rng));
        sets.push(random::convex_set_over(&mut rng, &pool, 3, 3));
        let inner: Vec<ConvexSet<Q>> = (0..3).map(|_| random::convex_set_over(&mut rng, &pool, 2, 2)).collect();
        nested.push(random::convex_set_over(&mut rng, &inner, 2, 2));
        let (p, q) = (random::probability(&mut rng), random::probability(&mut rng));
        triples.push((p, q, std::array::from_fn(|_| point(&mut rng))));
    }
    (points, sets, nested, triples)
}

/// Full presentation check on the free algebra over `space`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PresentationReport {
    pub gf: RoundtripReport,
    pub fg: RoundtripReport,
    pub em_laws: LawReport,
    pub qcs_laws: LawReport,
    /// Mismatches the corrupted structure map produces; must be nonzero.
    pub control_mismatches: usize,
}

impl PresentationReport {
    pub fn passed(&self) -> bool {
        self.gf.passed() && self.fg.passed() && self.em_laws.passed() && self.qcs_laws.passed() && self.control_mismatches > 0
    }
}

pub fn check_free_presentation(space: &FiniteMetricSpace, seed: u64, n: usize) -> PresentationReport {
    let em = free_algebra(space);
    let qa = free_semilattice(space);
    let s = free_samples(space, seed, n);
    let fg_samples: Vec<(Q, ConvexSet<Point>, ConvexSet<Point>)> =
        s.triples.iter().map(|(p, _, [x, y, ..])| (p.clone(), x.clone(), y.clone())).collect();
    let points: Vec<ConvexSet<Point>> = s.sets.clone();
    let control = corrupted_free_algebra(space);
    let control_mismatches = roundtrip_gf(&control, &s.nested).mismatches.len()
        + check_em_laws(&control, &points, &[], &sample_nested_sets(&s)).violations.len();
    PresentationReport {
        gf: roundtrip_gf(&em, &s.nested),
        fg: roundtrip_fg(&qa, &fg_samples),
        em_laws: check_em_laws(&functor_g(&qa), &points, &s.nested_pairs, &sample_nested_sets(&s)),
        qcs_laws: check_qcs_laws(&functor_f(&em), &s.triples),
        control_mismatches,
    }
}

/// Elements of `𝒞𝒞𝒞(Y)` built from the nested samples.
fn sample_nested_sets(s: &FreeSamples) -> Vec<ConvexSet<SetOfSets<Point>>> {
    let half = Q::new(1.into(), 2.into());
    s.nested
        .windows(2)
        .map(|w| {
            let (a, b) = (Dist::dirac(w[0].clone()), Dist::dirac(w[1].clone()));
            let mid = Dist::mix([(&half, &a), (&half, &b)]);
            unique_base(vec![a, mid]).expect("nonempty")
        })
        .collect()
}
