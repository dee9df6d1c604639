//! JSON encodings of spaces, distributions, convex sets, terms, equations and
//! derivations. Rationals travel as `"p/q"` or integer strings; object keys
//! come out sorted.

use std::collections::BTreeMap;

use serde_json::{json, Map, Value};

use crate::convex::{unique_base, ConvexSet, DistOverSets, SetOfSets};
use crate::deduction::{Axiom, Derivation, QuantEquation, Rule};
use crate::rat::{format_q, parse_q};
use crate::space::{Coupling, Dist, FiniteMetricSpace, Point};
use crate::terms::{parse_term, Term};
use crate::{Error, Result, Q};

fn bad(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

pub fn rational(v: &Value) -> Result<Q> {
    match v {
        Value::String(s) => parse_q(s),
        Value::Number(n) if n.is_i64() => Ok(Q::from_integer(n.as_i64().unwrap().into())),
        _ => Err(bad(format!("expected a rational string, found {v}"))),
    }
}

pub fn rational_json(x: &Q) -> Value {
    Value::String(format_q(x))
}

fn text(v: &Value) -> Result<&str> {
    v.as_str().ok_or_else(|| bad(format!("expected a string, found {v}")))
}

fn array(v: &Value) -> Result<&Vec<Value>> {
    v.as_array().ok_or_else(|| bad(format!("expected an array, found {v}")))
}

fn object(v: &Value) -> Result<&Map<String, Value>> {
    v.as_object().ok_or_else(|| bad(format!("expected an object, found {v}")))
}

fn field<'a>(v: &'a Value, key: &str) -> Result<&'a Value> {
    object(v)?.get(key).ok_or_else(|| bad(format!("missing field {key:?}")))
}

/// `{"points": [...], "dist": [[x, y, "p/q"], ...]}`.
pub fn space(v: &Value) -> Result<FiniteMetricSpace> {
    let points: Vec<String> = array(field(v, "points")?)?.iter().map(|p| text(p).map(str::to_string)).collect::<Result<_>>()?;
    let mut entries = Vec::new();
    for e in array(field(v, "dist")?)? {
        let e = array(e)?;
        if e.len() != 3 {
            return Err(bad("distance entries are [x, y, value] triples"));
        }
        entries.push((text(&e[0])?.to_string(), text(&e[1])?.to_string(), rational(&e[2])?));
    }
    FiniteMetricSpace::new(&points, &entries)
}

pub fn space_json(s: &FiniteMetricSpace) -> Value {
    let mut dist = Vec::new();
    for x in s.points() {
        for y in s.points().filter(|y| *y > x) {
            dist.push(json!([s.label(x), s.label(y), format_q(s.d(x, y))]));
        }
    }
    json!({ "points": s.labels(), "dist": dist })
}

/// `{"a": "1/2", "b": "1/2"}`.
pub fn dist(s: &FiniteMetricSpace, v: &Value) -> Result<Dist<Point>> {
    let mut items = Vec::new();
    for (k, w) in object(v)? {
        items.push((s.point(k)?, rational(w)?));
    }
    Dist::from_weights(items)
}

pub fn dist_json(s: &FiniteMetricSpace, d: &Dist<Point>) -> Value {
    Value::Object(d.iter().map(|(x, w)| (s.label(*x).to_string(), rational_json(w))).collect())
}

fn generators(v: &Value) -> Result<&Vec<Value>> {
    match v {
        Value::Array(a) => Ok(a),
        Value::Object(o) => array(o.get("generators").ok_or_else(|| bad("missing field \"generators\""))?),
        _ => Err(bad(format!("expected a generator list, found {v}"))),
    }
}

/// A list of distributions or `{"generators": [...]}`; re-based on load.
pub fn convex_set(s: &FiniteMetricSpace, v: &Value) -> Result<ConvexSet<Point>> {
    unique_base(generators(v)?.iter().map(|d| dist(s, d)).collect::<Result<_>>()?)
}

pub fn convex_set_json(s: &FiniteMetricSpace, set: &ConvexSet<Point>) -> Value {
    json!({ "generators": set.base().iter().map(|d| dist_json(s, d)).collect::<Vec<_>>() })
}

/// `[{"set": <convex set>, "weight": "p/q"}, ...]`.
pub fn dist_over_sets(s: &FiniteMetricSpace, v: &Value) -> Result<DistOverSets<Point>> {
    let mut items = Vec::new();
    for e in array(v)? {
        items.push((convex_set(s, field(e, "set")?)?, rational(field(e, "weight")?)?));
    }
    Dist::from_weights(items)
}

pub fn dist_over_sets_json(s: &FiniteMetricSpace, d: &DistOverSets<Point>) -> Value {
    Value::Array(d.iter().map(|(set, w)| json!({ "set": convex_set_json(s, set), "weight": rational_json(w) })).collect())
}

/// A list (or `{"generators": [...]}`) of distributions over convex sets.
pub fn set_of_sets(s: &FiniteMetricSpace, v: &Value) -> Result<SetOfSets<Point>> {
    unique_base(generators(v)?.iter().map(|d| dist_over_sets(s, d)).collect::<Result<_>>()?)
}

pub fn set_of_sets_json(s: &FiniteMetricSpace, ss: &SetOfSets<Point>) -> Value {
    json!({ "generators": ss.base().iter().map(|d| dist_over_sets_json(s, d)).collect::<Vec<_>>() })
}

/// `[[x, y, "w"], ...]` in canonical pair order.
pub fn coupling_json(s: &FiniteMetricSpace, c: &Coupling<Point>) -> Value {
    Value::Array(c.joint().iter().map(|((x, y), w)| json!([s.label(*x), s.label(*y), format_q(w)])).collect())
}

pub fn term(v: &Value) -> Result<Term> {
    parse_term(text(v)?)
}

pub fn term_json(t: &Term) -> Value {
    Value::String(t.to_string())
}

/// `{"l": term, "r": term, "eps": "p/q"}`.
pub fn equation(v: &Value) -> Result<QuantEquation> {
    Ok(QuantEquation::new(term(field(v, "l")?)?, term(field(v, "r")?)?, rational(field(v, "eps")?)?))
}

pub fn equation_json(e: &QuantEquation) -> Value {
    json!({ "l": term_json(&e.left), "r": term_json(&e.right), "eps": rational_json(&e.eps) })
}

pub fn equations(v: &Value) -> Result<Vec<QuantEquation>> {
    array(v)?.iter().map(equation).collect()
}

pub fn equations_json(es: &[QuantEquation]) -> Value {
    Value::Array(es.iter().map(equation_json).collect())
}

pub fn derivation(v: &Value) -> Result<Derivation> {
    let name = text(field(v, "rule")?)?;
    let rule = match name {
        "Refl" => Rule::Refl,
        "Symm" => Rule::Symm,
        "Triang" => Rule::Triang,
        "Max" => Rule::Max,
        "NExpOplus" => Rule::NExpOplus,
        "NExpPlusP" => Rule::NExpPlusP,
        "Assum" => Rule::Assum,
        "Axiom" => {
            let a = text(field(v, "axiom")?)?;
            Rule::Axiom(Axiom::from_name(a).ok_or_else(|| bad(format!("unknown axiom {a:?}")))?)
        }
        "Subst" => {
            let mut sigma = BTreeMap::new();
            for (k, t) in object(field(v, "sigma")?)? {
                sigma.insert(k.clone(), term(t)?);
            }
            Rule::Subst { sigma, hyps: equations(field(v, "hyps")?)? }
        }
        "Cut" => Rule::Cut { lemmas: equations(field(v, "lemmas")?)? },
        _ => return Err(bad(format!("unknown rule {name:?}"))),
    };
    let premises = match object(v)?.get("premises") {
        Some(p) => array(p)?.iter().map(derivation).collect::<Result<_>>()?,
        None => Vec::new(),
    };
    Ok(Derivation { conclusion: equation(field(v, "conclusion")?)?, rule, premises })
}

pub fn derivation_json(d: &Derivation) -> Value {
    let mut m = Map::new();
    m.insert("rule".into(), Value::String(d.rule.name().into()));
    m.insert("conclusion".into(), equation_json(&d.conclusion));
    m.insert("premises".into(), Value::Array(d.premises.iter().map(derivation_json).collect()));
    match &d.rule {
        Rule::Axiom(a) => {
            m.insert("axiom".into(), Value::String(a.name().into()));
        }
        Rule::Subst { sigma, hyps } => {
            m.insert("sigma".into(), Value::Object(sigma.iter().map(|(k, t)| (k.clone(), term_json(t))).collect()));
            m.insert("hyps".into(), equations_json(hyps));
        }
        Rule::Cut { lemmas } => {
            m.insert("lemmas".into(), equations_json(lemmas));
        }
        _ => {}
    }
    Value::Object(m)
}
