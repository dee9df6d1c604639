//! Quantitative deduction for convex semilattices: derivation trees, a rule
//! checker and builders that produce checkable derivations of
//! `ν(S) =_ε ν(T)` with `ε` the Hausdorff-Kantorovich distance.
//!
//! Everything is generic over the generator type. Constructions run on
//! `Term<Point>` and are relabelled for output.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Debug;
use std::sync::Arc;

use num_traits::{One, Zero};

use crate::convex::{in_hull, unique_base, ConvexSet};
use crate::lifting::{hk_distance, project};
use crate::rat::{format_q, in_unit_interval, is_probability};
use crate::space::{Dist, FiniteMetricSpace, Point};
use crate::terms::{complement, dist_term, fold_oplus, fold_plus, nu_generic, normalize_generic, resolve, Term};
use crate::transport::kantorovich;
use crate::{Error, Result, Q};

/// `left =_eps right`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct QuantEquation<G = String> {
    pub left: Term<G>,
    pub right: Term<G>,
    pub eps: Q,
}

impl<G> QuantEquation<G> {
    pub fn new(left: Term<G>, right: Term<G>, eps: Q) -> Self {
        QuantEquation { left, right, eps }
    }

    pub fn map_gens<H>(&self, f: &impl Fn(&G) -> H) -> QuantEquation<H> {
        QuantEquation { left: self.left.map_gens(f), right: self.right.map_gens(f), eps: self.eps.clone() }
    }

    pub fn try_map_gens<H>(&self, f: &impl Fn(&G) -> Result<H>) -> Result<QuantEquation<H>> {
        Ok(QuantEquation { left: self.left.try_map_gens(f)?, right: self.right.try_map_gens(f)?, eps: self.eps.clone() })
    }
}

/// The seven equations of convex semilattices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Axiom {
    A,
    C,
    I,
    Ap,
    Cp,
    Ip,
    D,
}

impl Axiom {
    pub const ALL: [Axiom; 7] = [Axiom::A, Axiom::C, Axiom::I, Axiom::Ap, Axiom::Cp, Axiom::Ip, Axiom::D];

    pub fn name(self) -> &'static str {
        match self {
            Axiom::A => "A",
            Axiom::C => "C",
            Axiom::I => "I",
            Axiom::Ap => "A_p",
            Axiom::Cp => "C_p",
            Axiom::Ip => "I_p",
            Axiom::D => "D",
        }
    }

    pub fn from_name(name: &str) -> Option<Axiom> {
        Axiom::ALL.into_iter().find(|a| a.name() == name)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Rule<G = String> {
    Refl,
    Symm,
    Triang,
    /// Weakening to any `ε′ ≥ ε`.
    Max,
    /// `(H)`: `⊕` congruence at `max(ε1, ε2)`.
    NExpOplus,
    /// `(K)`: `+_p` congruence at `p·ε1 + (1−p)·ε2`.
    NExpPlusP,
    Assum,
    Axiom(Axiom),
    /// The single premise is checked under `hyps`; the conclusion must be its
    /// image under `sigma`, and `sigma(hyps)` must lie in the ambient context.
    Subst { sigma: BTreeMap<G, Term<G>>, hyps: Vec<QuantEquation<G>> },
    /// Premises derive each lemma under the ambient context, then a final
    /// premise derives the conclusion under the lemmas alone.
    Cut { lemmas: Vec<QuantEquation<G>> },
}

impl<G> Rule<G> {
    pub fn name(&self) -> &'static str {
        match self {
            Rule::Refl => "Refl",
            Rule::Symm => "Symm",
            Rule::Triang => "Triang",
            Rule::Max => "Max",
            Rule::NExpOplus => "NExpOplus",
            Rule::NExpPlusP => "NExpPlusP",
            Rule::Assum => "Assum",
            Rule::Axiom(_) => "Axiom",
            Rule::Subst { .. } => "Subst",
            Rule::Cut { .. } => "Cut",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Derivation<G = String> {
    pub conclusion: QuantEquation<G>,
    pub rule: Rule<G>,
    pub premises: Vec<Derivation<G>>,
}

impl<G: Ord + Clone> Derivation<G> {
    pub fn left(&self) -> &Term<G> {
        &self.conclusion.left
    }

    pub fn right(&self) -> &Term<G> {
        &self.conclusion.right
    }

    pub fn eps(&self) -> &Q {
        &self.conclusion.eps
    }

    /// Number of rule nodes.
    pub fn size(&self) -> usize {
        1 + self.premises.iter().map(Derivation::size).sum::<usize>()
    }

    pub fn map_gens<H: Ord>(&self, f: &impl Fn(&G) -> H) -> Derivation<H> {
        let rule = match &self.rule {
            Rule::Refl => Rule::Refl,
            Rule::Symm => Rule::Symm,
            Rule::Triang => Rule::Triang,
            Rule::Max => Rule::Max,
            Rule::NExpOplus => Rule::NExpOplus,
            Rule::NExpPlusP => Rule::NExpPlusP,
            Rule::Assum => Rule::Assum,
            Rule::Axiom(a) => Rule::Axiom(*a),
            Rule::Subst { sigma, hyps } => Rule::Subst {
                sigma: sigma.iter().map(|(k, v)| (f(k), v.map_gens(f))).collect(),
                hyps: hyps.iter().map(|h| h.map_gens(f)).collect(),
            },
            Rule::Cut { lemmas } => Rule::Cut { lemmas: lemmas.iter().map(|h| h.map_gens(f)).collect() },
        };
        Derivation {
            conclusion: self.conclusion.map_gens(f),
            rule,
            premises: self.premises.iter().map(|p| p.map_gens(f)).collect(),
        }
    }

    fn node(left: Term<G>, right: Term<G>, eps: Q, rule: Rule<G>, premises: Vec<Derivation<G>>) -> Self {
        Derivation { conclusion: QuantEquation::new(left, right, eps), rule, premises }
    }

    fn is_refl(&self) -> bool {
        matches!(self.rule, Rule::Refl)
    }

    pub fn refl(t: Term<G>) -> Self {
        Self::node(t.clone(), t, Q::zero(), Rule::Refl, vec![])
    }

    pub fn assum(eq: QuantEquation<G>) -> Self {
        Derivation { conclusion: eq, rule: Rule::Assum, premises: vec![] }
    }

    pub fn axiom(ax: Axiom, left: Term<G>, right: Term<G>) -> Self {
        Self::node(left, right, Q::zero(), Rule::Axiom(ax), vec![])
    }

    pub fn symm(d: Self) -> Self {
        if d.is_refl() {
            return d;
        }
        let c = &d.conclusion;
        Self::node(c.right.clone(), c.left.clone(), c.eps.clone(), Rule::Symm, vec![d])
    }

    /// `(Triang)`; the sum is capped at 1. Refl sides are dropped.
    pub fn triang(d1: Self, d2: Self) -> Self {
        if d1.is_refl() {
            return d2;
        }
        if d2.is_refl() {
            return d1;
        }
        let eps = (d1.eps() + d2.eps()).min(Q::one());
        Self::node(d1.left().clone(), d2.right().clone(), eps, Rule::Triang, vec![d1, d2])
    }

    /// Balanced `(Triang)` tree over a chain of derivations.
    pub fn chain(mut ds: Vec<Self>) -> Option<Self> {
        ds.retain(|d| !d.is_refl());
        fn go<G: Ord + Clone>(mut ds: Vec<Derivation<G>>) -> Derivation<G> {
            if ds.len() == 1 {
                return ds.pop().unwrap();
            }
            let right = ds.split_off(ds.len() / 2);
            Derivation::triang(go(ds), go(right))
        }
        (!ds.is_empty()).then(|| go(ds))
    }

    pub fn max(d: Self, eps: Q) -> Self {
        if *d.eps() == eps {
            return d;
        }
        Self::node(d.left().clone(), d.right().clone(), eps, Rule::Max, vec![d])
    }

    pub fn nexp_oplus(d1: Self, d2: Self) -> Self {
        if d1.is_refl() && d2.is_refl() {
            return Self::refl(Term::oplus(d1.left().clone(), d2.left().clone()));
        }
        let eps = d1.eps().clone().max(d2.eps().clone());
        let l = Term::oplus(d1.left().clone(), d2.left().clone());
        let r = Term::oplus(d1.right().clone(), d2.right().clone());
        Self::node(l, r, eps, Rule::NExpOplus, vec![d1, d2])
    }

    pub fn nexp_plus(p: Q, d1: Self, d2: Self) -> Self {
        if d1.is_refl() && d2.is_refl() {
            return Self::refl(Term::plus(p, d1.left().clone(), d2.left().clone()));
        }
        let eps = &p * d1.eps() + complement(&p) * d2.eps();
        let l = Term::plus(p.clone(), d1.left().clone(), d2.left().clone());
        let r = Term::plus(p.clone(), d1.right().clone(), d2.right().clone());
        Self::node(l, r, eps, Rule::NExpPlusP, vec![d1, d2])
    }

    pub fn cut(lemmas: Vec<Self>, last: Self) -> Self {
        let conclusions = lemmas.iter().map(|d| d.conclusion.clone()).collect();
        let mut premises = lemmas;
        let conclusion = last.conclusion.clone();
        premises.push(last);
        Derivation { conclusion, rule: Rule::Cut { lemmas: conclusions }, premises }
    }

    pub fn subst(sigma: BTreeMap<G, Term<G>>, hyps: Vec<QuantEquation<G>>, d: Self) -> Self {
        let conclusion = apply_eq(&sigma, &d.conclusion);
        Derivation { conclusion, rule: Rule::Subst { sigma, hyps }, premises: vec![d] }
    }
}

fn apply<G: Ord + Clone>(sigma: &BTreeMap<G, Term<G>>, t: &Term<G>) -> Term<G> {
    t.substitute(&|g: &G| sigma.get(g).cloned().unwrap_or_else(|| Term::Gen(g.clone())))
}

fn apply_eq<G: Ord + Clone>(sigma: &BTreeMap<G, Term<G>>, e: &QuantEquation<G>) -> QuantEquation<G> {
    QuantEquation::new(apply(sigma, &e.left), apply(sigma, &e.right), e.eps.clone())
}

// ---------------------------------------------------------------------------
// Checker

/// One-directional instance test for an axiom; the checker tries both
/// orientations.
pub fn is_axiom_instance<G: PartialEq>(ax: Axiom, l: &Term<G>, r: &Term<G>) -> bool {
    use Term::*;
    match ax {
        Axiom::A => match (l, r) {
            (Oplus(xy, z), Oplus(x2, yz2)) => match (&**xy, &**yz2) {
                (Oplus(x, y), Oplus(y2, z2)) => x == x2 && y == y2 && z == z2,
                _ => false,
            },
            _ => false,
        },
        Axiom::C => match (l, r) {
            (Oplus(x, y), Oplus(y2, x2)) => x == x2 && y == y2,
            _ => false,
        },
        Axiom::I => match l {
            Oplus(x, y) => x == y && **x == *r,
            _ => false,
        },
        Axiom::Ap => match (l, r) {
            (PlusP(p, xy, z), PlusP(pq, x2, yz2)) => match (&**xy, &**yz2) {
                (PlusP(q, x, y), PlusP(s, y2, z2)) => {
                    let pq_expected = p * q;
                    let s_expected = p * complement(q) / complement(&pq_expected);
                    *pq == pq_expected && *s == s_expected && x == x2 && y == y2 && z == z2
                }
                _ => false,
            },
            _ => false,
        },
        Axiom::Cp => match (l, r) {
            (PlusP(p, x, y), PlusP(p2, y2, x2)) => *p2 == complement(p) && x == x2 && y == y2,
            _ => false,
        },
        Axiom::Ip => match l {
            PlusP(_, x, y) => x == y && **x == *r,
            _ => false,
        },
        Axiom::D => match (l, r) {
            (PlusP(p, x, yz), Oplus(xy, xz)) => match (&**yz, &**xy, &**xz) {
                (Oplus(y, z), PlusP(p1, x1, y1), PlusP(p2, x2, z1)) => {
                    p == p1 && p == p2 && x == x1 && x == x2 && y == y1 && z == z1
                }
                _ => false,
            },
            _ => false,
        },
    }
}

fn well_formed<G>(t: &Term<G>) -> bool {
    match t {
        Term::Gen(_) => true,
        Term::Oplus(l, r) => well_formed(l) && well_formed(r),
        Term::PlusP(p, l, r) => is_probability(p) && well_formed(l) && well_formed(r),
    }
}

/// Checks every node of `d` against the ambient hypotheses `gamma`. The error
/// names the path (premise indices from the root) of the first failing node.
pub fn check<G: Ord + Clone + Debug>(gamma: &[QuantEquation<G>], d: &Derivation<G>) -> Result<()> {
    let ctx: BTreeSet<QuantEquation<G>> = gamma.iter().cloned().collect();
    let mut path = Vec::new();
    check_node(&ctx, d, &mut path).map_err(|msg| Error::InvalidDerivation { path, msg })
}

fn check_node<G: Ord + Clone + Debug>(
    ctx: &BTreeSet<QuantEquation<G>>,
    d: &Derivation<G>,
    path: &mut Vec<usize>,
) -> std::result::Result<(), String> {
    let c = &d.conclusion;
    if !in_unit_interval(&c.eps) {
        return Err(format!("ε = {} outside [0,1]", format_q(&c.eps)));
    }
    if !well_formed(&c.left) || !well_formed(&c.right) {
        return Err("probability annotation outside (0,1)".into());
    }
    let arity = match &d.rule {
        Rule::Refl | Rule::Assum | Rule::Axiom(_) => 0,
        Rule::Symm | Rule::Max | Rule::Subst { .. } => 1,
        Rule::Triang | Rule::NExpOplus | Rule::NExpPlusP => 2,
        Rule::Cut { lemmas } => lemmas.len() + 1,
    };
    if d.premises.len() != arity {
        return Err(format!("{} expects {arity} premises, found {}", d.rule.name(), d.premises.len()));
    }
    let prem = |i: usize| &d.premises[i].conclusion;
    match &d.rule {
        Rule::Refl => {
            if c.left != c.right || !c.eps.is_zero() {
                return Err("Refl concludes t =_0 t only".into());
            }
        }
        Rule::Symm => {
            let p = prem(0);
            if p.left != c.right || p.right != c.left || p.eps != c.eps {
                return Err("Symm conclusion is not the mirrored premise".into());
            }
        }
        Rule::Triang => {
            let (p1, p2) = (prem(0), prem(1));
            if p1.left != c.left || p1.right != p2.left || p2.right != c.right {
                return Err("Triang premises do not chain to the conclusion".into());
            }
            let sum = (&p1.eps + &p2.eps).min(Q::one());
            if c.eps != sum {
                return Err(format!("Triang requires ε = {}, found {}", format_q(&sum), format_q(&c.eps)));
            }
        }
        Rule::Max => {
            let p = prem(0);
            if p.left != c.left || p.right != c.right {
                return Err("Max must keep both terms".into());
            }
            if c.eps < p.eps {
                return Err(format!("Max cannot lower ε from {} to {}", format_q(&p.eps), format_q(&c.eps)));
            }
        }
        Rule::NExpOplus => {
            let (Term::Oplus(l1, l2), Term::Oplus(r1, r2)) = (&c.left, &c.right) else {
                return Err("NExpOplus concludes an equation between two ⊕ terms".into());
            };
            let (p1, p2) = (prem(0), prem(1));
            if p1.left != **l1 || p1.right != **r1 || p2.left != **l2 || p2.right != **r2 {
                return Err("NExpOplus premises do not match the arguments".into());
            }
            let m = p1.eps.clone().max(p2.eps.clone());
            if c.eps != m {
                return Err(format!("NExpOplus requires ε = max = {}, found {}", format_q(&m), format_q(&c.eps)));
            }
        }
        Rule::NExpPlusP => {
            let (Term::PlusP(p, l1, l2), Term::PlusP(p2, r1, r2)) = (&c.left, &c.right) else {
                return Err("NExpPlusP concludes an equation between two +_p terms".into());
            };
            if p != p2 {
                return Err("NExpPlusP needs the same probability on both sides".into());
            }
            let (e1, e2) = (prem(0), prem(1));
            if e1.left != **l1 || e1.right != **r1 || e2.left != **l2 || e2.right != **r2 {
                return Err("NExpPlusP premises do not match the arguments".into());
            }
            let want = p * &e1.eps + complement(p) * &e2.eps;
            if c.eps != want {
                return Err(format!("NExpPlusP requires ε = {}, found {}", format_q(&want), format_q(&c.eps)));
            }
        }
        Rule::Assum => {
            if !ctx.contains(c) {
                return Err("Assum cites an equation outside the hypotheses".into());
            }
        }
        Rule::Axiom(ax) => {
            if !c.eps.is_zero() {
                return Err(format!("axiom {} holds at ε = 0 only", ax.name()));
            }
            if !is_axiom_instance(*ax, &c.left, &c.right) && !is_axiom_instance(*ax, &c.right, &c.left) {
                return Err(format!("not an instance of axiom {}", ax.name()));
            }
        }
        Rule::Subst { sigma, hyps } => {
            if apply_eq(sigma, prem(0)) != *c {
                return Err("Subst conclusion is not the substituted premise".into());
            }
            if let Some(h) = hyps.iter().find(|h| !ctx.contains(&apply_eq(sigma, h))) {
                return Err(format!("substituted hypothesis {:?} is not available", h));
            }
            let inner: BTreeSet<_> = hyps.iter().cloned().collect();
            path.push(0);
            check_node(&inner, &d.premises[0], path)?;
            path.pop();
            return Ok(());
        }
        Rule::Cut { lemmas } => {
            for (i, lemma) in lemmas.iter().enumerate() {
                if prem(i) != lemma {
                    return Err(format!("Cut premise {i} does not derive its lemma"));
                }
            }
            if *prem(lemmas.len()) != *c {
                return Err("Cut final premise does not derive the conclusion".into());
            }
            for (i, p) in d.premises[..lemmas.len()].iter().enumerate() {
                path.push(i);
                check_node(ctx, p, path)?;
                path.pop();
            }
            let inner: BTreeSet<_> = lemmas.iter().cloned().collect();
            path.push(lemmas.len());
            check_node(&inner, &d.premises[lemmas.len()], path)?;
            path.pop();
            return Ok(());
        }
    }
    for (i, p) in d.premises.iter().enumerate() {
        path.push(i);
        check_node(ctx, p, path)?;
        path.pop();
    }
    Ok(())
}

/// Checks a labelled derivation whose generators must all belong to `space`.
pub fn check_derivation(space: &FiniteMetricSpace, gamma: &[QuantEquation], d: &Derivation) -> Result<()> {
    let mut path = Vec::new();
    check_labels(space, d, &mut path)?;
    for h in gamma {
        h.try_map_gens(&|l: &String| space.point(l))?;
    }
    check(gamma, d)
}

fn check_labels(space: &FiniteMetricSpace, d: &Derivation, path: &mut Vec<usize>) -> Result<()> {
    let known = |t: &Term| resolve(space, t).is_ok();
    if !known(&d.conclusion.left) || !known(&d.conclusion.right) {
        return Err(Error::InvalidDerivation { path: path.clone(), msg: "term uses a label outside the space".into() });
    }
    for (i, p) in d.premises.iter().enumerate() {
        path.push(i);
        check_labels(space, p, path)?;
        path.pop();
    }
    Ok(())
}

/// `{x =_{d(x,y)} y}` for all ordered pairs of distinct points.
pub fn ground_hypotheses_generic(space: &FiniteMetricSpace) -> Vec<QuantEquation<Point>> {
    let mut out = Vec::new();
    for x in space.points() {
        for y in space.points() {
            if x != y {
                out.push(QuantEquation::new(Term::Gen(x), Term::Gen(y), space.d(x, y).clone()));
            }
        }
    }
    out
}

pub fn ground_hypotheses(space: &FiniteMetricSpace) -> Vec<QuantEquation> {
    ground_hypotheses_generic(space).iter().map(|h| label_eq(space, h)).collect()
}

fn label_eq(space: &FiniteMetricSpace, e: &QuantEquation<Point>) -> QuantEquation {
    e.map_gens(&|p: &Point| space.label(*p).to_string())
}

pub fn label_derivation(space: &FiniteMetricSpace, d: &Derivation<Point>) -> Derivation {
    d.map_gens(&|p: &Point| space.label(*p).to_string())
}

// ---------------------------------------------------------------------------
// Rewriting helpers

/// Accumulates a chain of `=_0` steps starting from a term.
struct Rewrite<G> {
    cur: Term<G>,
    steps: Vec<Derivation<G>>,
}

impl<G: Ord + Clone + Debug> Rewrite<G> {
    fn new(t: Term<G>) -> Self {
        Rewrite { cur: t, steps: Vec::new() }
    }

    fn push(&mut self, d: Derivation<G>) {
        debug_assert_eq!(d.left(), &self.cur);
        self.cur = d.right().clone();
        if !d.is_refl() {
            self.steps.push(d);
        }
    }

    /// Rewrites the subterm at `path` (0 = left child, 1 = right child).
    fn at(&mut self, path: &[u8], f: impl FnOnce(&Term<G>) -> Derivation<G>) {
        let d = at_path(&self.cur, path, f);
        self.push(d);
    }

    fn finish(self) -> Derivation<G> {
        let start = self.steps.first().map(|d| d.left().clone());
        Derivation::chain(self.steps).unwrap_or_else(|| Derivation::refl(start.unwrap_or(self.cur)))
    }
}

fn at_path<G: Ord + Clone + Debug>(
    t: &Term<G>,
    path: &[u8],
    f: impl FnOnce(&Term<G>) -> Derivation<G>,
) -> Derivation<G> {
    let Some((&dir, rest)) = path.split_first() else {
        return f(t);
    };
    match t {
        Term::Oplus(l, r) if dir == 0 => Derivation::nexp_oplus(at_path(l, rest, f), Derivation::refl((**r).clone())),
        Term::Oplus(l, r) => Derivation::nexp_oplus(Derivation::refl((**l).clone()), at_path(r, rest, f)),
        Term::PlusP(p, l, r) if dir == 0 => {
            Derivation::nexp_plus(p.clone(), at_path(l, rest, f), Derivation::refl((**r).clone()))
        }
        Term::PlusP(p, l, r) => Derivation::nexp_plus(p.clone(), Derivation::refl((**l).clone()), at_path(r, rest, f)),
        Term::Gen(_) => panic!("rewrite path runs past a generator"),
    }
}

fn spine(depth: usize) -> Vec<u8> {
    vec![0; depth]
}

fn children<G>(t: &Term<G>) -> (&Term<G>, &Term<G>) {
    match t {
        Term::Oplus(l, r) | Term::PlusP(_, l, r) => (l, r),
        Term::Gen(_) => panic!("generator has no children"),
    }
}

/// `(x +_q y) +_p z  →  x +_{pq} (y +_{p(1−q)/(1−pq)} z)`.
fn ap_forward<G: Ord + Clone + Debug>(t: &Term<G>) -> Derivation<G> {
    let Term::PlusP(p, xy, z) = t else { panic!("A_p expects (x+_q y)+_p z") };
    let Term::PlusP(q, x, y) = &**xy else { panic!("A_p expects (x+_q y)+_p z") };
    let pq = p * q;
    let s = p * complement(q) / complement(&pq);
    let r = Term::PlusP(pq, x.clone(), Arc::new(Term::PlusP(s, y.clone(), z.clone())));
    Derivation::axiom(Axiom::Ap, t.clone(), r)
}

/// `x +_a (y +_b z)  →  (x +_q y) +_p z` with `p = 1−(1−a)(1−b)`, `q = a/p`.
fn ap_backward<G: Ord + Clone + Debug>(t: &Term<G>) -> Derivation<G> {
    let Term::PlusP(a, x, yz) = t else { panic!("A_p expects x+_a (y+_b z)") };
    let Term::PlusP(b, y, z) = &**yz else { panic!("A_p expects x+_a (y+_b z)") };
    let p = Q::one() - complement(a) * complement(b);
    let q = a / &p;
    let r = Term::PlusP(p, Arc::new(Term::PlusP(q, x.clone(), y.clone())), z.clone());
    Derivation::axiom(Axiom::Ap, t.clone(), r)
}

fn cp<G: Ord + Clone + Debug>(t: &Term<G>) -> Derivation<G> {
    let Term::PlusP(p, x, y) = t else { panic!("C_p expects x +_p y") };
    Derivation::axiom(Axiom::Cp, t.clone(), Term::PlusP(complement(p), y.clone(), x.clone()))
}

fn ip<G: Ord + Clone + Debug>(t: &Term<G>) -> Derivation<G> {
    let (x, _) = children(t);
    Derivation::axiom(Axiom::Ip, t.clone(), x.clone())
}

/// `(x ⊕ y) ⊕ z  →  x ⊕ (y ⊕ z)`.
fn a_forward<G: Ord + Clone + Debug>(t: &Term<G>) -> Derivation<G> {
    let Term::Oplus(xy, z) = t else { panic!("A expects (x⊕y)⊕z") };
    let Term::Oplus(x, y) = &**xy else { panic!("A expects (x⊕y)⊕z") };
    Derivation::axiom(Axiom::A, t.clone(), Term::Oplus(x.clone(), Arc::new(Term::Oplus(y.clone(), z.clone()))))
}

fn a_backward<G: Ord + Clone + Debug>(t: &Term<G>) -> Derivation<G> {
    let Term::Oplus(x, yz) = t else { panic!("A expects x⊕(y⊕z)") };
    let Term::Oplus(y, z) = &**yz else { panic!("A expects x⊕(y⊕z)") };
    Derivation::axiom(Axiom::A, t.clone(), Term::Oplus(Arc::new(Term::Oplus(x.clone(), y.clone())), z.clone()))
}

fn c<G: Ord + Clone + Debug>(t: &Term<G>) -> Derivation<G> {
    let Term::Oplus(x, y) = t else { panic!("C expects x ⊕ y") };
    Derivation::axiom(Axiom::C, t.clone(), Term::Oplus(y.clone(), x.clone()))
}

fn i<G: Ord + Clone + Debug>(t: &Term<G>) -> Derivation<G> {
    let (x, _) = children(t);
    Derivation::axiom(Axiom::I, t.clone(), x.clone())
}

/// `x +_p (y ⊕ z)  →  (x +_p y) ⊕ (x +_p z)`.
fn d<G: Ord + Clone + Debug>(t: &Term<G>) -> Derivation<G> {
    let Term::PlusP(p, x, yz) = t else { panic!("D expects x +_p (y⊕z)") };
    let Term::Oplus(y, z) = &**yz else { panic!("D expects x +_p (y⊕z)") };
    let r = Term::oplus(Term::PlusP(p.clone(), x.clone(), y.clone()), Term::PlusP(p.clone(), x.clone(), z.clone()));
    Derivation::axiom(Axiom::D, t.clone(), r)
}

// ---------------------------------------------------------------------------
// Convex-algebra normal forms of ⊕-free terms

/// The distribution a `⊕`-free term denotes.
pub fn atom_dist<G: Ord + Clone>(t: &Term<G>) -> Dist<G> {
    match t {
        Term::Gen(g) => Dist::dirac(g.clone()),
        Term::PlusP(p, l, r) => {
            let (a, b) = (atom_dist(l), atom_dist(r));
            Dist::mix([(p, &a), (&complement(p), &b)])
        }
        Term::Oplus(..) => panic!("atom_dist on a term containing ⊕"),
    }
}

/// Positional items of a left `+` fold: generator and positive weight.
type Items<G> = Vec<(G, Q)>;

fn items_term<G: Clone>(items: &Items<G>) -> Term<G> {
    let v: Vec<(Term<G>, Q)> = items.iter().map(|(g, w)| (Term::Gen(g.clone()), w.clone())).collect();
    fold_plus(&v)
}

/// `t =_0 L` with `L` a left fold of generators.
fn ca_flatten<G: Ord + Clone + Debug>(t: &Term<G>) -> (Derivation<G>, Items<G>) {
    match t {
        Term::Gen(g) => (Derivation::refl(t.clone()), vec![(g.clone(), Q::one())]),
        Term::PlusP(p, l, r) => {
            let (dl, il) = ca_flatten(l);
            let (dr, ir) = ca_flatten(r);
            let mut rw = Rewrite::new(t.clone());
            rw.push(Derivation::nexp_plus(p.clone(), dl, dr));
            absorb_plus(&mut rw, &[], ir.len());
            let q = complement(p);
            let items: Items<G> =
                il.into_iter().map(|(g, w)| (g, w * p)).chain(ir.into_iter().map(|(g, w)| (g, w * &q))).collect();
            debug_assert_eq!(rw.cur, items_term(&items));
            (rw.finish(), items)
        }
        Term::Oplus(..) => panic!("ca_flatten on a term containing ⊕"),
    }
}

/// At `path`, rewrites `F +_p R` where `R` is a left fold of `n` generators
/// into a single left fold.
fn absorb_plus<G: Ord + Clone + Debug>(rw: &mut Rewrite<G>, path: &[u8], n: usize) {
    if n <= 1 {
        return;
    }
    rw.at(path, ap_backward);
    let mut inner = path.to_vec();
    inner.push(0);
    absorb_plus(rw, &inner, n - 1);
}

/// `t =_0 dist_term(Δ)` for a `⊕`-free `t` denoting `Δ`.
pub fn ca_normalize<G: Ord + Clone + Debug>(t: &Term<G>) -> Derivation<G> {
    let (flat, mut items) = ca_flatten(t);
    let mut rw = Rewrite::new(flat.right().clone());
    rw.steps.push(flat);
    let node_path = |n: usize, j: usize| spine(n - 1 - j);
    // Bubble sort by generator.
    loop {
        let n = items.len();
        let Some(k) = (0..n.saturating_sub(1)).find(|&k| items[k].0 > items[k + 1].0) else { break };
        let path = node_path(n, k + 1);
        if k == 0 {
            rw.at(&path, cp);
        } else {
            rw.at(&path, ap_forward);
            let mut right = path.clone();
            right.push(1);
            rw.at(&right, cp);
            rw.at(&path, ap_backward);
        }
        items.swap(k, k + 1);
        debug_assert_eq!(rw.cur, items_term(&items));
    }
    // Merge equal neighbours.
    loop {
        let n = items.len();
        let Some(k) = (0..n.saturating_sub(1)).find(|&k| items[k].0 == items[k + 1].0) else { break };
        let path = node_path(n, k + 1);
        if k == 0 {
            rw.at(&path, ip);
        } else {
            rw.at(&path, ap_forward);
            let mut right = path.clone();
            right.push(1);
            rw.at(&right, ip);
        }
        let (_, w) = items.remove(k + 1);
        items[k].1 += w;
        debug_assert_eq!(rw.cur, items_term(&items));
    }
    debug_assert_eq!(rw.cur, dist_term(&atom_dist(t)));
    rw.finish()
}

// ---------------------------------------------------------------------------
// Semilattice rearrangement

fn oplus_leaves<G: Clone>(t: &Term<G>, out: &mut Vec<Term<G>>) {
    match t {
        Term::Oplus(l, r) => {
            oplus_leaves(l, out);
            oplus_leaves(r, out);
        }
        _ => out.push(t.clone()),
    }
}

/// `t =_0 L` with `L` the left `⊕` fold of the leaves of `t` in order.
fn sl_flatten<G: Ord + Clone + Debug>(t: &Term<G>) -> (Derivation<G>, usize) {
    match t {
        Term::Oplus(l, r) => {
            let (dl, _) = sl_flatten(l);
            let (dr, nr) = sl_flatten(r);
            let mut rw = Rewrite::new(t.clone());
            rw.push(Derivation::nexp_oplus(dl, dr));
            absorb_oplus(&mut rw, &[], nr);
            let n = {
                let mut v = Vec::new();
                oplus_leaves(&rw.cur, &mut v);
                v.len()
            };
            (rw.finish(), n)
        }
        _ => (Derivation::refl(t.clone()), 1),
    }
}

fn absorb_oplus<G: Ord + Clone + Debug>(rw: &mut Rewrite<G>, path: &[u8], n: usize) {
    if n <= 1 {
        return;
    }
    rw.at(path, a_backward);
    let mut inner = path.to_vec();
    inner.push(0);
    absorb_oplus(rw, &inner, n - 1);
}

/// `t =_0 fold_⊕(sorted distinct leaves)`, ordering leaves by `key`.
fn sl_normalize<G, K, F>(t: &Term<G>, key: &F) -> Derivation<G>
where
    G: Ord + Clone + Debug,
    K: Ord,
    F: Fn(&Term<G>) -> K,
{
    let (flat, _) = sl_flatten(t);
    let mut rw = Rewrite::new(flat.right().clone());
    rw.steps.push(flat);
    let mut leaves = Vec::new();
    oplus_leaves(&rw.cur, &mut leaves);
    let mut keys: Vec<K> = leaves.iter().map(key).collect();
    let node_path = |n: usize, j: usize| spine(n - 1 - j);
    loop {
        let n = keys.len();
        let Some(k) = (0..n.saturating_sub(1)).find(|&k| keys[k] > keys[k + 1]) else { break };
        let path = node_path(n, k + 1);
        if k == 0 {
            rw.at(&path, c);
        } else {
            rw.at(&path, a_forward);
            let mut right = path.clone();
            right.push(1);
            rw.at(&right, c);
            rw.at(&path, a_backward);
        }
        keys.swap(k, k + 1);
    }
    loop {
        let n = keys.len();
        let Some(k) = (0..n.saturating_sub(1)).find(|&k| keys[k] == keys[k + 1]) else { break };
        let path = node_path(n, k + 1);
        if k == 0 {
            rw.at(&path, i);
        } else {
            rw.at(&path, a_forward);
            let mut right = path.clone();
            right.push(1);
            rw.at(&right, i);
        }
        keys.remove(k + 1);
    }
    rw.finish()
}

// ---------------------------------------------------------------------------
// Normal forms in the full theory

/// Distributes `+_p` over `⊕`: `t =_0 E` with every `+_p` node of `E`
/// `⊕`-free below it.
fn expand<G: Ord + Clone + Debug>(t: &Term<G>) -> Derivation<G> {
    match t {
        Term::Gen(_) => Derivation::refl(t.clone()),
        Term::Oplus(l, r) => Derivation::nexp_oplus(expand(l), expand(r)),
        Term::PlusP(p, l, r) => {
            let mut rw = Rewrite::new(t.clone());
            rw.push(Derivation::nexp_plus(p.clone(), expand(l), expand(r)));
            distribute(&mut rw, &[]);
            rw.finish()
        }
    }
}

/// At `path`, `A +_p B` with `A`, `B` already expanded.
fn distribute<G: Ord + Clone + Debug>(rw: &mut Rewrite<G>, path: &[u8]) {
    let node = subterm(&rw.cur, path).clone();
    let (a, b) = children(&node);
    let sub = |k: u8| {
        let mut v = path.to_vec();
        v.push(k);
        v
    };
    if matches!(b, Term::Oplus(..)) {
        rw.at(path, d);
        distribute(rw, &sub(0));
        distribute(rw, &sub(1));
    } else if matches!(a, Term::Oplus(..)) {
        rw.at(path, cp);
        rw.at(path, d);
        for k in 0..2 {
            rw.at(&sub(k), cp);
            distribute(rw, &sub(k));
        }
    }
}

fn subterm<'a, G>(t: &'a Term<G>, path: &[u8]) -> &'a Term<G> {
    path.iter().fold(t, |t, &k| {
        let (l, r) = children(t);
        if k == 0 {
            l
        } else {
            r
        }
    })
}

/// CA-normalises every `⊕`-free leaf of an expanded term.
fn normalize_atoms<G: Ord + Clone + Debug>(t: &Term<G>) -> Derivation<G> {
    match t {
        Term::Oplus(l, r) => Derivation::nexp_oplus(normalize_atoms(l), normalize_atoms(r)),
        _ => ca_normalize(t),
    }
}

fn atom_key<G: Ord + Clone>(t: &Term<G>) -> Dist<G> {
    atom_dist(t)
}

/// `t =_0 fold_⊕(dist_term(Δ_i))` over the sorted distinct atoms of the
/// expansion of `t`, which are returned too.
fn cs_form<G: Ord + Clone + Debug>(t: &Term<G>) -> (Derivation<G>, Vec<Dist<G>>) {
    let mut rw = Rewrite::new(t.clone());
    rw.push(expand(t));
    let e = rw.cur.clone();
    rw.push(normalize_atoms(&e));
    let e = rw.cur.clone();
    rw.push(sl_normalize(&e, &atom_key));
    let mut leaves = Vec::new();
    oplus_leaves(&rw.cur, &mut leaves);
    let atoms = leaves.iter().map(atom_dist).collect();
    (rw.finish(), atoms)
}

fn sl_equal<G: Ord + Clone + Debug>(a: &Term<G>, b: &Term<G>) -> Derivation<G> {
    let da = sl_normalize(a, &atom_key);
    let db = sl_normalize(b, &atom_key);
    debug_assert_eq!(da.right(), db.right());
    Derivation::triang(da, Derivation::symm(db))
}

/// `B ⊕ P =_0 B` for `B = fold_⊕(base)` and `P = dist_term(Δ)` with `Δ` in
/// the hull of `base`. Writing `Δ = Δ_i +_p R`, the set first absorbs `R`,
/// then `Δ` by the two-point lemma on `{Δ_i, R}`.
fn absorb_lemma<G: Ord + Clone + Debug>(base: &[Dist<G>], delta: &Dist<G>) -> Derivation<G> {
    let b = fold_oplus(&base.iter().map(dist_term).collect::<Vec<_>>());
    let p = dist_term(delta);
    let lambda = in_hull(delta, base).expect("absorbed atom lies in the hull of the base");
    let support: Vec<usize> = (0..base.len()).filter(|&k| !lambda[k].is_zero()).collect();
    let bp = Term::oplus(b.clone(), p.clone());
    if support.len() == 1 {
        return sl_equal(&bp, &b);
    }
    let i = support[0];
    let rest = complement(&lambda[i]);
    let pairs: Vec<(Q, Dist<G>)> = support[1..].iter().map(|&k| (&lambda[k] / &rest, base[k].clone())).collect();
    let r = Dist::combine(&pairs).expect("weights sum to one");
    let absorb_r = absorb_lemma(base, &r);
    let mut pair = vec![base[i].clone(), r.clone()];
    pair.sort();
    let two = absorb_by_expansion(&pair, delta);
    let pair_term = fold_oplus(&pair.iter().map(dist_term).collect::<Vec<_>>());
    let br = Term::oplus(b.clone(), dist_term(&r));

    let mut rw = Rewrite::new(bp);
    rw.push(Derivation::nexp_oplus(Derivation::symm(absorb_r.clone()), Derivation::refl(p.clone())));
    let cur = rw.cur.clone();
    rw.push(sl_equal(&cur, &Term::oplus(Term::oplus(pair_term, p), b.clone())));
    rw.push(Derivation::nexp_oplus(two, Derivation::refl(b)));
    let cur = rw.cur.clone();
    rw.push(sl_equal(&cur, &br));
    rw.push(absorb_r);
    rw.finish()
}

/// `B ⊕ P =_0 B` as in [`absorb_lemma`]: `B` is rewritten to the
/// `λ`-mixture of copies of itself, whose expansion contains `P` as a
/// summand. Exponential in the support of `λ`; used on two-point bases.
fn absorb_by_expansion<G: Ord + Clone + Debug>(base: &[Dist<G>], delta: &Dist<G>) -> Derivation<G> {
    let b = fold_oplus(&base.iter().map(dist_term).collect::<Vec<_>>());
    let p = dist_term(delta);
    let lambda = in_hull(delta, base).expect("absorbed atom lies in the hull of the base");
    let items: Vec<(Term<G>, Q)> = lambda.iter().filter(|w| !w.is_zero()).map(|w| (b.clone(), w.clone())).collect();
    let q = fold_plus(&items);
    let q_to_b = idempotent_fold(&q, items.len());
    let (q_to_e, atoms) = cs_form(&q);
    debug_assert!(atoms.contains(delta));
    let e = q_to_e.right().clone();
    let mut rw = Rewrite::new(Term::oplus(b.clone(), p.clone()));
    rw.push(Derivation::nexp_oplus(Derivation::symm(q_to_b.clone()), Derivation::refl(p.clone())));
    rw.push(Derivation::nexp_oplus(q_to_e.clone(), Derivation::refl(p)));
    let cur = rw.cur.clone();
    rw.push(sl_equal(&cur, &e));
    rw.push(Derivation::symm(q_to_e));
    rw.push(q_to_b);
    rw.finish()
}

/// `fold_+(B, …, B) =_0 B` by repeated `(I_p)`.
fn idempotent_fold<G: Ord + Clone + Debug>(t: &Term<G>, n: usize) -> Derivation<G> {
    if n <= 1 {
        return Derivation::refl(t.clone());
    }
    let Term::PlusP(p, inner, last) = t else { panic!("expected a +_p fold") };
    let mut rw = Rewrite::new(t.clone());
    rw.push(Derivation::nexp_plus(p.clone(), idempotent_fold(inner, n - 1), Derivation::refl((**last).clone())));
    let cur = rw.cur.clone();
    rw.push(ip(&cur));
    rw.finish()
}

/// `t =_0 ν(S)` where `S` is the convex set `t` denotes.
pub fn derive_normal_form_generic<G: Ord + Clone + Debug>(t: &Term<G>) -> Derivation<G> {
    let (d0, atoms) = cs_form(t);
    let set = unique_base(atoms.clone()).expect("a term has at least one atom");
    let base = set.base();
    if atoms == base {
        return d0;
    }
    let extra: Vec<&Dist<G>> = atoms.iter().filter(|a| !base.contains(a)).collect();
    let b = nu_generic(&set);
    // fold(B, P1, …, Pr) with B kept as one subterm.
    let mut regrouped = b.clone();
    for p in &extra {
        regrouped = Term::oplus(regrouped, dist_term(p));
    }
    let mut rw = Rewrite::new(t.clone());
    rw.push(d0);
    let cur = rw.cur.clone();
    rw.push(sl_equal(&cur, &regrouped));
    let n = extra.len();
    for (k, p) in extra.iter().enumerate() {
        // The innermost remaining `B ⊕ P_k` sits n−1−k steps down the spine.
        rw.at(&spine(n - 1 - k), |_| absorb_lemma(base, p));
    }
    debug_assert_eq!(rw.cur, b);
    rw.finish()
}

// ---------------------------------------------------------------------------
// Constructive derivations

/// `dist_term(Δ) =_{K(d)(Δ,Θ)} dist_term(Θ)` from the ground hypotheses.
pub fn derive_kantorovich_generic(space: &FiniteMetricSpace, left: &Dist<Point>, right: &Dist<Point>) -> Result<Derivation<Point>> {
    space.check_dist(left)?;
    space.check_dist(right)?;
    if left == right {
        return Ok(Derivation::refl(dist_term(left)));
    }
    let plan = kantorovich(space, left, right)?;
    let pairs: Vec<(&(Point, Point), &Q)> = plan.witness.joint().iter().collect();
    let lhs: Vec<(Term<Point>, Q)> = pairs.iter().map(|((x, _), w)| (Term::Gen(*x), (*w).clone())).collect();
    let rhs: Vec<(Term<Point>, Q)> = pairs.iter().map(|((_, y), w)| (Term::Gen(*y), (*w).clone())).collect();
    let leaf = |x: Point, y: Point| {
        if x == y {
            Derivation::refl(Term::Gen(x))
        } else {
            Derivation::assum(QuantEquation::new(Term::Gen(x), Term::Gen(y), space.d(x, y).clone()))
        }
    };
    let ((x0, y0), w0) = pairs[0];
    let mut acc = leaf(*x0, *y0);
    let mut total = w0.clone();
    for ((x, y), w) in &pairs[1..] {
        let next = &total + *w;
        acc = Derivation::nexp_plus(&total / &next, acc, leaf(*x, *y));
        total = next;
    }
    debug_assert_eq!(acc.left(), &fold_plus(&lhs));
    debug_assert_eq!(acc.right(), &fold_plus(&rhs));
    debug_assert_eq!(acc.eps(), &plan.value);
    let to_left = Derivation::symm(ca_normalize(acc.left()));
    let to_right = ca_normalize(acc.right());
    Ok(Derivation::chain(vec![to_left, acc, to_right]).expect("distinct distributions"))
}

/// `ν(S) =_{HK(d)(S,T)} ν(T)` from the ground hypotheses.
pub fn derive_hk_generic(space: &FiniteMetricSpace, s: &ConvexSet<Point>, t: &ConvexSet<Point>) -> Result<Derivation<Point>> {
    space.check_set(s)?;
    space.check_set(t)?;
    if s == t {
        return Ok(Derivation::refl(nu_generic(s)));
    }
    let h = hk_distance(space, s, t)?;
    let mut pairs: Vec<(Dist<Point>, Dist<Point>)> = Vec::new();
    for delta in s.base() {
        pairs.push((delta.clone(), project(space, delta, t).target));
    }
    for theta in t.base() {
        pairs.push((project(space, theta, s).target, theta.clone()));
    }
    let mut seen = BTreeSet::new();
    pairs.retain(|p| seen.insert(p.clone()));
    let mut parts = Vec::with_capacity(pairs.len());
    for (l, r) in &pairs {
        parts.push(Derivation::max(derive_kantorovich_generic(space, l, r)?, h.clone()));
    }
    let mut it = parts.into_iter();
    let first = it.next().expect("bases are nonempty");
    let middle = it.fold(first, Derivation::nexp_oplus);
    let to_left = Derivation::symm(derive_normal_form_generic(middle.left()));
    let to_right = derive_normal_form_generic(middle.right());
    debug_assert_eq!(to_left.left(), &nu_generic(s));
    debug_assert_eq!(to_right.right(), &nu_generic(t));
    Ok(Derivation::chain(vec![to_left, middle, to_right]).expect("distinct sets"))
}

pub fn derive_kantorovich(space: &FiniteMetricSpace, left: &Dist<Point>, right: &Dist<Point>) -> Result<Derivation> {
    Ok(label_derivation(space, &derive_kantorovich_generic(space, left, right)?))
}

pub fn derive_hk(space: &FiniteMetricSpace, s: &ConvexSet<Point>, t: &ConvexSet<Point>) -> Result<Derivation> {
    Ok(label_derivation(space, &derive_hk_generic(space, s, t)?))
}

/// `t =_0 ν(normalize(t))`.
pub fn derive_normal_form(space: &FiniteMetricSpace, t: &Term) -> Result<Derivation> {
    Ok(label_derivation(space, &derive_normal_form_generic(&resolve(space, t)?)))
}

/// The theory distance between two terms under the ground hypotheses of the
/// space, with a derivation attaining it.
pub fn tightest_derivable(space: &FiniteMetricSpace, t: &Term, s: &Term) -> Result<(Q, Derivation)> {
    let (tp, sp) = (resolve(space, t)?, resolve(space, s)?);
    if tp == sp {
        return Ok((Q::zero(), Derivation::refl(t.clone())));
    }
    let (nt, ns) = (normalize_generic(&tp), normalize_generic(&sp));
    let middle = derive_hk_generic(space, &nt, &ns)?;
    let d = Derivation::chain(vec![
        derive_normal_form_generic(&tp),
        middle,
        Derivation::symm(derive_normal_form_generic(&sp)),
    ])
    .unwrap_or_else(|| Derivation::refl(tp.clone()));
    // Distinct terms with the same normal form and zero distance chain to a
    // plain `=_0` derivation; otherwise the chain spans `t` to `s`.
    debug_assert_eq!((d.left(), d.right()), (&tp, &sp));
    Ok((d.eps().clone(), label_derivation(space, &d)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lifting::hk_distance;
    use crate::random;
    use crate::rat::q;
    use crate::space::fixtures::{dist, x3};
    use crate::terms::{normalize, nu, parse_term, term_distance};
    use proptest::prelude::*;

    fn t(s: &str) -> Term {
        parse_term(s).unwrap()
    }

    fn eq(l: &str, r: &str, e: Q) -> QuantEquation {
        QuantEquation::new(t(l), t(r), e)
    }

    fn gamma() -> Vec<QuantEquation> {
        ground_hypotheses(&x3())
    }

    #[test]
    fn refl_and_triang_examples() {
        let refl = Derivation::refl(t("a"));
        assert!(check(&[], &refl).is_ok());
        let hyps = vec![eq("a", "b", q(1, 4)), eq("b", "c", q(1, 4))];
        let d = Derivation::triang(Derivation::assum(hyps[0].clone()), Derivation::assum(hyps[1].clone()));
        assert_eq!(d.conclusion, eq("a", "c", q(1, 2)));
        assert!(check(&hyps, &d).is_ok());
        // The hypotheses are missing from the empty context.
        assert!(matches!(check(&[], &d), Err(Error::InvalidDerivation { path, .. }) if path == vec![0]));
    }

    #[test]
    fn k_node_with_max_instead_of_sum_is_rejected() {
        let hyps = vec![eq("a", "b", q(1, 2))];
        let good = Derivation::nexp_plus(q(1, 2), Derivation::assum(hyps[0].clone()), Derivation::refl(t("c")));
        assert_eq!(good.eps(), &q(1, 4));
        assert!(check(&hyps, &good).is_ok());
        let mut bad = good.clone();
        bad.conclusion.eps = q(1, 2);
        let err = check(&hyps, &bad).unwrap_err();
        assert!(matches!(err, Error::InvalidDerivation { ref path, .. } if path.is_empty()), "{err}");
    }

    #[test]
    fn max_is_non_strict_but_never_lowers() {
        let hyps = vec![eq("a", "b", q(1, 2))];
        let same = Derivation { conclusion: hyps[0].clone(), rule: Rule::Max, premises: vec![Derivation::assum(hyps[0].clone())] };
        assert!(check(&hyps, &same).is_ok());
        let mut lower = same.clone();
        lower.conclusion.eps = q(1, 3);
        assert!(check(&hyps, &lower).is_err());
    }

    #[test]
    fn triang_is_capped_at_one() {
        let hyps = vec![eq("a", "c", Q::one()), eq("c", "a", Q::one())];
        let d = Derivation::triang(Derivation::assum(hyps[0].clone()), Derivation::assum(hyps[1].clone()));
        assert_eq!(d.eps(), &Q::one());
        assert!(check(&hyps, &d).is_ok());
    }

    #[test]
    fn axiom_instances_in_both_orientations() {
        let cases = [
            (Axiom::A, "(oplus (oplus a b) c)", "(oplus a (oplus b c))"),
            (Axiom::C, "(oplus a b)", "(oplus b a)"),
            (Axiom::I, "(oplus a a)", "a"),
            (Axiom::Ap, "(p+ 1/2 (p+ 1/3 a b) c)", "(p+ 1/6 a (p+ 2/5 b c))"),
            (Axiom::Cp, "(p+ 1/3 a b)", "(p+ 2/3 b a)"),
            (Axiom::Ip, "(p+ 1/3 a a)", "a"),
            (Axiom::D, "(p+ 1/3 a (oplus b c))", "(oplus (p+ 1/3 a b) (p+ 1/3 a c))"),
        ];
        for (ax, l, r) in cases {
            assert!(check(&[], &Derivation::axiom(ax, t(l), t(r))).is_ok(), "{ax:?}");
            assert!(check(&[], &Derivation::axiom(ax, t(r), t(l))).is_ok(), "{ax:?} reversed");
            let other = Axiom::ALL.iter().find(|o| **o != ax && !is_axiom_instance(**o, &t(l), &t(r))).unwrap();
            assert!(check(&[], &Derivation::axiom(*other, t(l), t(r))).is_err());
        }
        assert!(check(&[], &Derivation::axiom(Axiom::Ap, t("(p+ 1/2 (p+ 1/3 a b) c)"), t("(p+ 1/6 a (p+ 1/2 b c))"))).is_err());
    }

    #[test]
    fn cut_and_subst_rules() {
        let ab = eq("a", "b", q(1, 2));
        let ba = eq("b", "a", q(1, 2));
        let inner = Derivation::symm(Derivation::assum(ab.clone()));
        let cut = Derivation::cut(vec![Derivation::assum(ab.clone())], inner.clone());
        assert!(check(&gamma(), &cut).is_ok());
        assert_eq!(cut.conclusion, ba);

        let sigma: BTreeMap<String, Term> = [("a".to_string(), t("b")), ("b".to_string(), t("c"))].into_iter().collect();
        let sub = Derivation::subst(sigma, vec![ab.clone()], inner);
        assert_eq!(sub.conclusion, eq("c", "b", q(1, 2)));
        assert!(check(&gamma(), &sub).is_ok());
        // σ(a =_{1/2} b) = (b =_{1/2} c) must be among the hypotheses.
        assert!(check(&[ab], &sub).is_err());
    }

    #[test]
    fn kantorovich_derivation_examples() {
        let s = x3();
        let (da, db) = (s.dirac("a").unwrap(), s.dirac("b").unwrap());
        let d = derive_kantorovich(&s, &da, &db).unwrap();
        assert_eq!(d.conclusion, eq("a", "b", q(1, 2)));
        assert!(check(&gamma(), &d).is_ok());

        let refl = derive_kantorovich(&s, &da, &da).unwrap();
        assert_eq!(refl.eps(), &Q::zero());

        let mid = dist(&s, &[("a", q(1, 2)), ("b", q(1, 2))]);
        let d = derive_kantorovich(&s, &mid, &da).unwrap();
        assert_eq!(d.conclusion, eq("(p+ 1/2 a b)", "a", q(1, 4)));
        assert!(check(&gamma(), &d).is_ok());
    }

    #[test]
    fn hk_derivation_examples() {
        let s = x3();
        let set = |src: &str| normalize(&s, &t(src)).unwrap();
        for (l, r, v) in [("a", "b", q(1, 2)), ("(oplus a b)", "(p+ 1/2 a b)", q(1, 4)), ("(oplus a b)", "(oplus b a)", Q::zero())] {
            let d = derive_hk(&s, &set(l), &set(r)).unwrap();
            assert_eq!(d.eps(), &v);
            assert_eq!(d.left(), &nu(&s, &set(l)));
            assert_eq!(d.right(), &nu(&s, &set(r)));
            assert!(check(&gamma(), &d).is_ok(), "{l} vs {r}");
        }
    }

    #[test]
    fn tightest_examples() {
        let s = x3();
        for (l, r, v) in [("a", "b", q(1, 2)), ("a", "a", Q::zero()), ("(oplus a b)", "a", q(1, 2))] {
            let (value, d) = tightest_derivable(&s, &t(l), &t(r)).unwrap();
            assert_eq!(value, v);
            assert_eq!(d.conclusion, eq(l, r, v));
            assert!(check(&gamma(), &d).is_ok());
        }
    }

    #[test]
    fn normal_form_derivation_for_distributivity() {
        let s = x3();
        let src = "(p+ 1/2 (oplus a b) (oplus c (p+ 1/3 b a)))";
        let d = derive_normal_form(&s, &t(src)).unwrap();
        assert_eq!(d.left(), &t(src));
        assert_eq!(d.right(), &nu(&s, &normalize(&s, &t(src)).unwrap()));
        assert!(d.eps().is_zero());
        assert!(check(&[], &d).is_ok());
    }

    #[test]
    fn absorbing_full_support_mixtures_stays_small() {
        let s = x3();
        let src = "(p+ 1/2 (oplus (oplus c c) (oplus a b)) (oplus b (p+ 1/4 c a)))";
        let d = derive_normal_form(&s, &t(src)).unwrap();
        assert_eq!(d.right(), &nu(&s, &normalize(&s, &t(src)).unwrap()));
        assert!(check(&[], &d).is_ok());
        assert!(d.size() < 5_000, "{} nodes", d.size());
    }

    #[test]
    fn medial_triangle_needs_the_closure_witnesses() {
        let s = x3();
        let mids = "(oplus (oplus (p+ 1/2 a b) (p+ 1/2 b c)) (p+ 1/2 a c))";
        let (v, d) = tightest_derivable(&s, &t(mids), &t("(oplus (oplus a b) c)")).unwrap();
        assert_eq!(v, q(1, 4));
        assert!(check(&gamma(), &d).is_ok());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn constructed_hk_derivations_check_and_are_tight(seed in any::<u64>()) {
            let mut r = random::rng(seed);
            let n = rand::Rng::gen_range(&mut r, 1..=4);
            let space = random::space(&mut r, n);
            let a = random::convex_set(&mut r, &space, 3, 3);
            let b = random::convex_set(&mut r, &space, 3, 3);
            let d = derive_hk(&space, &a, &b).unwrap();
            prop_assert!(check(&ground_hypotheses(&space), &d).is_ok());
            prop_assert_eq!(d.eps(), &hk_distance(&space, &a, &b).unwrap());
            prop_assert_eq!(d.left(), &nu(&space, &a));
            prop_assert_eq!(d.right(), &nu(&space, &b));
        }

        #[test]
        fn normal_form_derivations_check(seed in any::<u64>()) {
            let mut r = random::rng(seed);
            let space = random::space(&mut r, 3);
            let term = random::term(&mut r, &space, 3);
            let d = derive_normal_form(&space, &term).unwrap();
            prop_assert!(check(&[], &d).is_ok());
            prop_assert_eq!(d.right(), &nu(&space, &normalize(&space, &term).unwrap()));
        }

        #[test]
        fn kantorovich_derivations_cannot_beat_the_optimum(seed in any::<u64>()) {
            // Any chain through an intermediate distribution is valid and no
            // tighter than the direct value.
            let mut r = random::rng(seed);
            let space = random::space(&mut r, 4);
            let (x, y, z) = (random::dist(&mut r, &space, 3), random::dist(&mut r, &space, 3), random::dist(&mut r, &space, 3));
            let direct = derive_kantorovich_generic(&space, &x, &z).unwrap();
            let via = Derivation::triang(
                derive_kantorovich_generic(&space, &x, &y).unwrap(),
                derive_kantorovich_generic(&space, &y, &z).unwrap(),
            );
            prop_assert!(check(&ground_hypotheses_generic(&space), &via).is_ok());
            prop_assert!(via.eps() >= direct.eps());
            let lab = |d: &Derivation<Point>| label_derivation(&space, d);
            let dist_via = term_distance(&space, lab(&via).left(), lab(&via).right()).unwrap();
            prop_assert!(via.eps() >= &dist_via);
        }
    }
}
