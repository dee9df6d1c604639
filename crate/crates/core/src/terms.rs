//! Terms over `{⊕} ∪ {+_p}`: parsing, printing, normalisation to convex sets
//! and the canonical representative `ν`.

use std::fmt;
use std::sync::Arc;

use num_traits::One;

use crate::convex::{oplus, plus_p, ConvexSet};
use crate::lifting::hk_distance;
use crate::rat::{format_q, is_probability, parse_q};
use crate::space::{Dist, FiniteMetricSpace, Point};
use crate::{Error, Result, Q};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term<G = String> {
    Gen(G),
    Oplus(Arc<Term<G>>, Arc<Term<G>>),
    /// `l +_p r`, with `p` strictly between 0 and 1.
    PlusP(Q, Arc<Term<G>>, Arc<Term<G>>),
}

impl<G> Term<G> {
    pub fn oplus(l: Term<G>, r: Term<G>) -> Self {
        Term::Oplus(Arc::new(l), Arc::new(r))
    }

    pub fn plus(p: Q, l: Term<G>, r: Term<G>) -> Self {
        Term::PlusP(p, Arc::new(l), Arc::new(r))
    }

    pub fn map_gens<H>(&self, f: &impl Fn(&G) -> H) -> Term<H> {
        match self {
            Term::Gen(g) => Term::Gen(f(g)),
            Term::Oplus(l, r) => Term::oplus(l.map_gens(f), r.map_gens(f)),
            Term::PlusP(p, l, r) => Term::plus(p.clone(), l.map_gens(f), r.map_gens(f)),
        }
    }

    pub fn try_map_gens<H>(&self, f: &impl Fn(&G) -> Result<H>) -> Result<Term<H>> {
        Ok(match self {
            Term::Gen(g) => Term::Gen(f(g)?),
            Term::Oplus(l, r) => Term::oplus(l.try_map_gens(f)?, r.try_map_gens(f)?),
            Term::PlusP(p, l, r) => Term::plus(p.clone(), l.try_map_gens(f)?, r.try_map_gens(f)?),
        })
    }

    /// Replaces every generator by a term.
    pub fn substitute(&self, f: &impl Fn(&G) -> Term<G>) -> Term<G> {
        match self {
            Term::Gen(g) => f(g),
            Term::Oplus(l, r) => Term::oplus(l.substitute(f), r.substitute(f)),
            Term::PlusP(p, l, r) => Term::plus(p.clone(), l.substitute(f), r.substitute(f)),
        }
    }

    pub fn size(&self) -> usize {
        match self {
            Term::Gen(_) => 1,
            Term::Oplus(l, r) | Term::PlusP(_, l, r) => 1 + l.size() + r.size(),
        }
    }

    pub fn has_oplus(&self) -> bool {
        match self {
            Term::Gen(_) => false,
            Term::Oplus(..) => true,
            Term::PlusP(_, l, r) => l.has_oplus() || r.has_oplus(),
        }
    }

    /// Interprets the term in an algebra given by two operations.
    pub fn eval<A>(
        &self,
        gen: &impl Fn(&G) -> A,
        op_oplus: &impl Fn(&A, &A) -> A,
        op_plus: &impl Fn(&Q, &A, &A) -> A,
    ) -> A {
        match self {
            Term::Gen(g) => gen(g),
            Term::Oplus(l, r) => op_oplus(&l.eval(gen, op_oplus, op_plus), &r.eval(gen, op_oplus, op_plus)),
            Term::PlusP(p, l, r) => op_plus(p, &l.eval(gen, op_oplus, op_plus), &r.eval(gen, op_oplus, op_plus)),
        }
    }

    /// Writes the term as an s-expression with the given label printer.
    pub fn render(&self, label: &impl Fn(&G) -> String) -> String {
        let mut out = String::new();
        self.render_into(label, &mut out);
        out
    }

    fn render_into(&self, label: &impl Fn(&G) -> String, out: &mut String) {
        match self {
            Term::Gen(g) => out.push_str(&label(g)),
            Term::Oplus(l, r) => {
                out.push_str("(oplus ");
                l.render_into(label, out);
                out.push(' ');
                r.render_into(label, out);
                out.push(')');
            }
            Term::PlusP(p, l, r) => {
                out.push_str("(p+ ");
                out.push_str(&format_q(p));
                out.push(' ');
                l.render_into(label, out);
                out.push(' ');
                r.render_into(label, out);
                out.push(')');
            }
        }
    }
}

impl fmt::Display for Term<String> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(&|g: &String| g.clone()))
    }
}

/// Left-associated `⊕` fold of a nonempty list.
pub fn fold_oplus<G: Clone>(items: &[Term<G>]) -> Term<G> {
    let mut it = items.iter().cloned();
    let first = it.next().expect("nonempty fold");
    it.fold(first, Term::oplus)
}

/// Left-associated big `+` over weighted items. Weights need only be positive;
/// the step attaching item `k` uses probability `W_{k-1}/W_k` where `W_k` is
/// the running total, so only the ratios matter.
pub fn fold_plus<G: Clone>(items: &[(Term<G>, Q)]) -> Term<G> {
    let mut it = items.iter();
    let (first, w0) = it.next().expect("nonempty fold");
    let mut total = w0.clone();
    let mut acc = first.clone();
    for (t, w) in it {
        let next = &total + w;
        acc = Term::plus(&total / &next, acc, t.clone());
        total = next;
    }
    acc
}

/// `+_{x∈supp Δ} Δ(x) x` in canonical support order.
pub fn dist_term<T: Ord + Clone>(d: &Dist<T>) -> Term<T> {
    let items: Vec<(Term<T>, Q)> = d.iter().map(|(x, w)| (Term::Gen(x.clone()), w.clone())).collect();
    fold_plus(&items)
}

/// `ν(S) = ⊕_{Δ∈ub(S)} +_{x∈supp Δ} Δ(x) x`.
pub fn nu_generic<T: Ord + Clone>(s: &ConvexSet<T>) -> Term<T> {
    fold_oplus(&s.base().iter().map(dist_term).collect::<Vec<_>>())
}

pub fn nu(space: &FiniteMetricSpace, s: &ConvexSet<Point>) -> Term {
    nu_generic(s).map_gens(&|p: &Point| space.label(*p).to_string())
}

/// Interpretation in the free algebra over any carrier.
pub fn normalize_generic<T: Ord + Clone>(t: &Term<T>) -> ConvexSet<T> {
    t.eval(
        &|g: &T| ConvexSet::unit(g.clone()),
        &|a: &ConvexSet<T>, b: &ConvexSet<T>| oplus(a, b),
        &|p: &Q, a: &ConvexSet<T>, b: &ConvexSet<T>| plus_p(p, a, b).expect("parsed probabilities lie in (0,1)"),
    )
}

pub fn resolve(space: &FiniteMetricSpace, t: &Term) -> Result<Term<Point>> {
    t.try_map_gens(&|l: &String| space.point(l))
}

pub fn normalize(space: &FiniteMetricSpace, t: &Term) -> Result<ConvexSet<Point>> {
    Ok(normalize_generic(&resolve(space, t)?))
}

pub fn term_distance(space: &FiniteMetricSpace, t: &Term, s: &Term) -> Result<Q> {
    hk_distance(space, &normalize(space, t)?, &normalize(space, s)?)
}

pub fn term_equal_mod_theory(space: &FiniteMetricSpace, t: &Term, s: &Term) -> Result<bool> {
    Ok(normalize(space, t)? == normalize(space, s)?)
}

pub fn print_term(t: &Term) -> String {
    t.to_string()
}

pub fn parse_term(text: &str) -> Result<Term> {
    let mut p = Parser { src: text, pos: 0 };
    let t = p.term()?;
    p.skip_ws();
    if p.pos < text.len() {
        return Err(p.error("trailing input"));
    }
    Ok(t)
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, msg: &str) -> Error {
        Error::Syntax { pos: self.pos, msg: msg.to_string() }
    }

    fn skip_ws(&mut self) {
        let rest = &self.src[self.pos..];
        self.pos += rest.len() - rest.trim_start().len();
    }

    fn atom(&mut self) -> Result<(usize, &str)> {
        self.skip_ws();
        let start = self.pos;
        let rest = &self.src[start..];
        let len = rest.find(|c: char| c.is_whitespace() || c == '(' || c == ')').unwrap_or(rest.len());
        if len == 0 {
            return Err(self.error(if rest.is_empty() { "unexpected end of input" } else { "expected an atom" }));
        }
        self.pos += len;
        Ok((start, &self.src[start..start + len]))
    }

    fn expect_close(&mut self) -> Result<()> {
        self.skip_ws();
        if self.src[self.pos..].starts_with(')') {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error("expected ')'"))
        }
    }

    fn term(&mut self) -> Result<Term> {
        self.skip_ws();
        if !self.src[self.pos..].starts_with('(') {
            let (start, a) = self.atom()?;
            if a == "oplus" || a == "p+" {
                return Err(Error::Syntax { pos: start, msg: format!("operator {a} used as a generator") });
            }
            return Ok(Term::Gen(a.to_string()));
        }
        self.pos += 1;
        let (start, op) = self.atom()?;
        match op {
            "oplus" => {
                let l = self.term()?;
                let r = self.term()?;
                self.expect_close()?;
                Ok(Term::oplus(l, r))
            }
            "p+" => {
                let (ppos, ptext) = self.atom()?;
                let p = parse_q(ptext).map_err(|_| Error::Syntax { pos: ppos, msg: format!("bad probability {ptext:?}") })?;
                if !is_probability(&p) {
                    return Err(Error::BadProbability(ptext.to_string()));
                }
                let l = self.term()?;
                let r = self.term()?;
                self.expect_close()?;
                Ok(Term::plus(p, l, r))
            }
            _ => Err(Error::Syntax { pos: start, msg: format!("unknown operator {op:?}") }),
        }
    }
}

/// `1 − p`, used by the commutativity axiom.
pub(crate) fn complement(p: &Q) -> Q {
    Q::one() - p
}
