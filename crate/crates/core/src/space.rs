//! Finite metric spaces, finitely supported distributions and couplings.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use num_traits::{One, Signed, Zero};

use crate::rat::{format_q, in_unit_interval};
use crate::{Error, Result, Q};

/// Index of a point in its [`FiniteMetricSpace`]. The derived order is the
/// canonical point order (the order in which the space listed its labels).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Point(pub usize);

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Exact distance function on some carrier.
pub trait Metric<T: ?Sized> {
    fn distance(&self, x: &T, y: &T) -> Q;
}

impl<T: ?Sized, M: Metric<T> + ?Sized> Metric<T> for &M {
    fn distance(&self, x: &T, y: &T) -> Q {
        (**self).distance(x, y)
    }
}

/// Wraps a closure as a [`Metric`].
pub struct FnMetric<F>(pub F);

impl<T, F: Fn(&T, &T) -> Q> Metric<T> for FnMetric<F> {
    fn distance(&self, x: &T, y: &T) -> Q {
        (self.0)(x, y)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FiniteMetricSpace {
    labels: Vec<String>,
    index: HashMap<String, usize>,
    table: Vec<Vec<Q>>,
}

impl FiniteMetricSpace {
    /// Builds a space from its labels and a list of distance entries. Every
    /// unordered pair of distinct points must be listed at least once; repeated
    /// entries must agree. Diagonal entries may be listed and must be 0.
    pub fn new<S: AsRef<str>>(points: &[S], entries: &[(S, S, Q)]) -> Result<Self> {
        let labels: Vec<String> = points.iter().map(|s| s.as_ref().to_string()).collect();
        let index = index_labels(&labels)?;
        let n = labels.len();
        let mut table: Vec<Vec<Option<Q>>> = vec![vec![None; n]; n];
        for (x, y, v) in entries {
            let (x, y) = (x.as_ref(), y.as_ref());
            let i = *index.get(x).ok_or_else(|| Error::UnknownPoint(x.to_string()))?;
            let j = *index.get(y).ok_or_else(|| Error::UnknownPoint(y.to_string()))?;
            for (a, b) in [(i, j), (j, i)] {
                match &table[a][b] {
                    Some(old) if old != v => {
                        return Err(Error::MetricEntry(
                            x.to_string(),
                            y.to_string(),
                            format!("conflicting values {} and {}", format_q(old), format_q(v)),
                        ))
                    }
                    _ => table[a][b] = Some(v.clone()),
                }
            }
        }
        let mut full = vec![vec![Q::zero(); n]; n];
        for i in 0..n {
            for j in 0..n {
                match table[i][j].take() {
                    Some(v) => full[i][j] = v,
                    None if i == j => {}
                    None => {
                        return Err(Error::MetricEntry(
                            labels[i].clone(),
                            labels[j].clone(),
                            "missing".into(),
                        ))
                    }
                }
            }
        }
        Self::validated(labels, index, full)
    }

    /// Builds a space from a full square table in label order.
    pub fn from_table<S: AsRef<str>>(points: &[S], table: Vec<Vec<Q>>) -> Result<Self> {
        let labels: Vec<String> = points.iter().map(|s| s.as_ref().to_string()).collect();
        let index = index_labels(&labels)?;
        if table.len() != labels.len() || table.iter().any(|r| r.len() != labels.len()) {
            return Err(Error::Format("distance table is not square over the points".into()));
        }
        Self::validated(labels, index, table)
    }

    fn validated(labels: Vec<String>, index: HashMap<String, usize>, table: Vec<Vec<Q>>) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(Error::EmptySet);
        }
        for i in 0..n {
            for j in 0..n {
                let v = &table[i][j];
                if !in_unit_interval(v) {
                    return Err(Error::OutOfRange(labels[i].clone(), labels[j].clone(), format_q(v)));
                }
                if i == j && !v.is_zero() {
                    return Err(Error::MetricEntry(labels[i].clone(), labels[j].clone(), "nonzero self-distance".into()));
                }
                if i != j && v.is_zero() {
                    return Err(Error::MetricEntry(labels[i].clone(), labels[j].clone(), "distinct points at distance 0".into()));
                }
                if *v != table[j][i] {
                    return Err(Error::MetricEntry(labels[i].clone(), labels[j].clone(), "asymmetric".into()));
                }
            }
        }
        for x in 0..n {
            for y in x + 1..n {
                for z in 0..n {
                    if table[x][y] > &table[x][z] + &table[z][y] {
                        return Err(Error::AxiomViolation(labels[x].clone(), labels[y].clone(), labels[z].clone()));
                    }
                }
            }
        }
        Ok(FiniteMetricSpace { labels, index, table })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn points(&self) -> impl Iterator<Item = Point> {
        (0..self.labels.len()).map(Point)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, p: Point) -> &str {
        &self.labels[p.0]
    }

    pub fn point(&self, label: &str) -> Result<Point> {
        self.index.get(label).map(|&i| Point(i)).ok_or_else(|| Error::UnknownPoint(label.to_string()))
    }

    pub fn contains(&self, p: Point) -> bool {
        p.0 < self.labels.len()
    }

    pub fn d(&self, x: Point, y: Point) -> &Q {
        &self.table[x.0][y.0]
    }

    pub fn dirac(&self, label: &str) -> Result<Dist<Point>> {
        Ok(Dist::dirac(self.point(label)?))
    }

    /// `SpaceMismatch` unless every support point belongs to this space.
    pub fn check_dist(&self, d: &Dist<Point>) -> Result<()> {
        if d.support().all(|p| self.contains(*p)) {
            Ok(())
        } else {
            Err(Error::SpaceMismatch)
        }
    }
}

impl Metric<Point> for FiniteMetricSpace {
    fn distance(&self, x: &Point, y: &Point) -> Q {
        self.table[x.0][y.0].clone()
    }
}

fn index_labels(labels: &[String]) -> Result<HashMap<String, usize>> {
    let mut index = HashMap::new();
    for (i, l) in labels.iter().enumerate() {
        if index.insert(l.clone(), i).is_some() {
            return Err(Error::DuplicateLabel(l.clone()));
        }
    }
    Ok(index)
}

/// Finitely supported probability distribution. Zero weights are never
/// stored, so structural equality is semantic equality.
///
/// Ordering reads the weights as a dense vector in point order and compares
/// lexicographically, larger weight first: `δa < {a:1/2, b:1/2} < δb`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Dist<T: Ord> {
    w: BTreeMap<T, Q>,
}

impl<T: Ord> Ord for Dist<T> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        use std::cmp::Ordering;
        let (mut a, mut b) = (self.w.iter().peekable(), other.w.iter().peekable());
        loop {
            let step = match (a.peek(), b.peek()) {
                (None, None) => return Ordering::Equal,
                (Some(_), None) => Ordering::Less,
                (None, Some(_)) => Ordering::Greater,
                (Some((x, u)), Some((y, v))) => match x.cmp(y) {
                    Ordering::Less => Ordering::Less,
                    Ordering::Greater => Ordering::Greater,
                    Ordering::Equal => {
                        let c = v.cmp(u);
                        a.next();
                        b.next();
                        if c != Ordering::Equal {
                            return c;
                        }
                        continue;
                    }
                },
            };
            // The side holding the smaller point has positive weight where the
            // other has zero, so it sorts first.
            return step;
        }
    }
}

impl<T: Ord> PartialOrd for Dist<T> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Ord + Clone> Dist<T> {
    pub fn dirac(x: T) -> Self {
        let mut w = BTreeMap::new();
        w.insert(x, Q::one());
        Dist { w }
    }

    /// Accumulates repeated keys and drops zeros; weights must be nonnegative
    /// and sum to 1.
    pub fn from_weights<I: IntoIterator<Item = (T, Q)>>(items: I) -> Result<Self> {
        let mut w: BTreeMap<T, Q> = BTreeMap::new();
        let mut total = Q::zero();
        for (x, v) in items {
            if v.is_negative() {
                return Err(Error::WeightsNotNormalized(format!("negative weight {}", format_q(&v))));
            }
            total += &v;
            *w.entry(x).or_insert_with(Q::zero) += v;
        }
        if !total.is_one() {
            return Err(Error::WeightsNotNormalized(format!("weights sum to {}", format_q(&total))));
        }
        w.retain(|_, v| !v.is_zero());
        Ok(Dist { w })
    }

    /// Caller guarantees positive weights summing to one.
    pub(crate) fn from_map_unchecked(w: BTreeMap<T, Q>) -> Self {
        debug_assert!(w.values().all(|v| v.is_positive()));
        debug_assert!(w.values().fold(Q::zero(), |a, b| a + b).is_one());
        Dist { w }
    }

    /// Pointwise mixture `Σ p_i·Δ_i`.
    pub fn combine(pairs: &[(Q, Dist<T>)]) -> Result<Self> {
        let mut total = Q::zero();
        for (p, _) in pairs {
            if !p.is_positive() {
                return Err(Error::WeightsNotNormalized(format!("non-positive coefficient {}", format_q(p))));
            }
            total += p;
        }
        if !total.is_one() {
            return Err(Error::WeightsNotNormalized(format!("coefficients sum to {}", format_q(&total))));
        }
        Ok(Self::mix(pairs.iter().map(|(p, d)| (p, d))))
    }

    /// Mixture without validating the coefficients.
    pub(crate) fn mix<'a, I>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (&'a Q, &'a Dist<T>)>,
        T: 'a,
    {
        let mut w: BTreeMap<T, Q> = BTreeMap::new();
        for (p, d) in pairs {
            if p.is_zero() {
                continue;
            }
            for (x, v) in &d.w {
                *w.entry(x.clone()).or_insert_with(Q::zero) += p * v;
            }
        }
        w.retain(|_, v| !v.is_zero());
        Dist { w }
    }

    pub fn weight(&self, x: &T) -> Q {
        self.w.get(x).cloned().unwrap_or_else(Q::zero)
    }

    pub fn support(&self) -> impl Iterator<Item = &T> {
        self.w.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&T, &Q)> {
        self.w.iter()
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn is_dirac(&self) -> bool {
        self.w.len() == 1
    }

    /// `𝒟f`: mass of every preimage summed.
    pub fn pushforward<U: Ord + Clone>(&self, f: impl Fn(&T) -> U) -> Dist<U> {
        let mut w: BTreeMap<U, Q> = BTreeMap::new();
        for (x, v) in &self.w {
            *w.entry(f(x)).or_insert_with(Q::zero) += v;
        }
        Dist { w }
    }

    pub fn try_pushforward<U: Ord + Clone>(&self, f: impl Fn(&T) -> Result<U>) -> Result<Dist<U>> {
        let mut w: BTreeMap<U, Q> = BTreeMap::new();
        for (x, v) in &self.w {
            *w.entry(f(x)?).or_insert_with(Q::zero) += v;
        }
        Ok(Dist { w })
    }
}

/// Joint distribution on pairs whose marginals are `left` and `right`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Coupling<T: Ord> {
    joint: BTreeMap<(T, T), Q>,
    left: Dist<T>,
    right: Dist<T>,
}

impl<T: Ord + Clone + fmt::Debug> Coupling<T> {
    /// Accepts `joint` iff it is nonnegative with exact marginals `left` and `right`.
    pub fn new<I: IntoIterator<Item = ((T, T), Q)>>(joint: I, left: &Dist<T>, right: &Dist<T>) -> Result<Self> {
        let mut map: BTreeMap<(T, T), Q> = BTreeMap::new();
        for (k, v) in joint {
            if v.is_negative() {
                return Err(Error::WeightsNotNormalized(format!("negative coupling entry {}", format_q(&v))));
            }
            *map.entry(k).or_insert_with(Q::zero) += v;
        }
        map.retain(|_, v| !v.is_zero());
        let mut rows: BTreeMap<&T, Q> = BTreeMap::new();
        let mut cols: BTreeMap<&T, Q> = BTreeMap::new();
        for ((x, y), v) in &map {
            *rows.entry(x).or_insert_with(Q::zero) += v;
            *cols.entry(y).or_insert_with(Q::zero) += v;
        }
        for (side, marg, dist) in [("left", &rows, left), ("right", &cols, right)] {
            let keys: std::collections::BTreeSet<&T> = marg.keys().copied().chain(dist.support()).collect();
            for x in keys {
                let m = marg.get(x).cloned().unwrap_or_else(Q::zero);
                if m != dist.weight(x) {
                    return Err(Error::MarginalMismatch { side: side.into(), point: format!("{x:?}") });
                }
            }
        }
        Ok(Coupling { joint: map, left: left.clone(), right: right.clone() })
    }

    pub(crate) fn new_unchecked(joint: BTreeMap<(T, T), Q>, left: Dist<T>, right: Dist<T>) -> Self {
        Coupling { joint, left, right }
    }

    pub fn joint(&self) -> &BTreeMap<(T, T), Q> {
        &self.joint
    }

    pub fn left(&self) -> &Dist<T> {
        &self.left
    }

    pub fn right(&self) -> &Dist<T> {
        &self.right
    }

    /// `Σ ω(x,y)·d(x,y)`.
    pub fn cost<M: Metric<T> + ?Sized>(&self, metric: &M) -> Q {
        self.joint.iter().fold(Q::zero(), |acc, ((x, y), v)| acc + v * metric.distance(x, y))
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use crate::rat::q;

    /// d(a,b) = d(b,c) = 1/2, d(a,c) = 1.
    pub fn x3() -> FiniteMetricSpace {
        FiniteMetricSpace::new(
            &["a", "b", "c"],
            &[("a", "b", q(1, 2)), ("b", "c", q(1, 2)), ("a", "c", q(1, 1))],
        )
        .unwrap()
    }

    pub fn pt(s: &FiniteMetricSpace, l: &str) -> Point {
        s.point(l).unwrap()
    }

    pub fn dist(s: &FiniteMetricSpace, items: &[(&str, Q)]) -> Dist<Point> {
        Dist::from_weights(items.iter().map(|(l, v)| (pt(s, l), v.clone()))).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use crate::rat::q;
    use proptest::prelude::*;

    #[test]
    fn singleton_space_is_valid() {
        let s = FiniteMetricSpace::new(&["a"], &[("a", "a", Q::zero())]).unwrap();
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn x3_is_valid_and_triangle_violation_is_named() {
        let s = x3();
        assert_eq!(s.d(pt(&s, "a"), pt(&s, "c")), &q(1, 1));
        let bad = FiniteMetricSpace::new(
            &["a", "b", "c"],
            &[("a", "b", q(1, 4)), ("b", "c", q(1, 4)), ("a", "c", q(1, 1))],
        );
        assert_eq!(bad, Err(Error::AxiomViolation("a".into(), "c".into(), "b".into())));
    }

    #[test]
    fn table_errors() {
        let dup = FiniteMetricSpace::new(&["a", "a"], &[("a", "a", Q::zero())]);
        assert_eq!(dup, Err(Error::DuplicateLabel("a".into())));
        let big = FiniteMetricSpace::new(&["a", "b"], &[("a", "b", q(3, 2))]);
        assert!(matches!(big, Err(Error::OutOfRange(..))));
        let missing = FiniteMetricSpace::new(&["a", "b", "c"], &[("a", "b", q(1, 2))]);
        assert!(matches!(missing, Err(Error::MetricEntry(..))));
        let zero = FiniteMetricSpace::new(&["a", "b"], &[("a", "b", Q::zero())]);
        assert!(matches!(zero, Err(Error::MetricEntry(..))));
    }

    #[test]
    fn canonical_order_prefers_mass_on_early_points() {
        let s = x3();
        let da = s.dirac("a").unwrap();
        let db = s.dirac("b").unwrap();
        let mid = dist(&s, &[("a", q(1, 2)), ("b", q(1, 2))]);
        let ac = dist(&s, &[("a", q(1, 2)), ("c", q(1, 2))]);
        let mut v = vec![db.clone(), mid.clone(), ac.clone(), da.clone()];
        v.sort();
        assert_eq!(v, vec![da, mid, ac, db]);
    }

    #[test]
    fn dirac_points() {
        let s = x3();
        assert_eq!(s.dirac("a").unwrap(), Dist::dirac(pt(&s, "a")));
        assert_eq!(s.dirac("b").unwrap().weight(&pt(&s, "b")), Q::one());
        assert_eq!(s.dirac("z"), Err(Error::UnknownPoint("z".into())));
    }

    #[test]
    fn convex_combination_examples() {
        let s = x3();
        let da = s.dirac("a").unwrap();
        let db = s.dirac("b").unwrap();
        assert_eq!(Dist::combine(&[(Q::one(), da.clone())]).unwrap(), da);
        let mid = Dist::combine(&[(q(1, 2), da.clone()), (q(1, 2), db.clone())]).unwrap();
        assert_eq!(mid, dist(&s, &[("a", q(1, 2)), ("b", q(1, 2))]));
        let m2 = Dist::combine(&[(q(1, 2), mid), (q(1, 2), db.clone())]).unwrap();
        assert_eq!(m2, dist(&s, &[("a", q(1, 4)), ("b", q(3, 4))]));
        assert!(matches!(
            Dist::combine(&[(q(1, 2), da)]),
            Err(Error::WeightsNotNormalized(_))
        ));
    }

    #[test]
    fn pushforward_examples() {
        let s = x3();
        let (a, b, c) = (pt(&s, "a"), pt(&s, "b"), pt(&s, "c"));
        let mid = dist(&s, &[("a", q(1, 2)), ("b", q(1, 2))]);
        assert_eq!(mid.pushforward(|x| *x), mid);
        assert_eq!(mid.pushforward(|x| if *x == b { a } else { *x }), Dist::dirac(a));
        assert_eq!(mid.pushforward(|_| c), Dist::dirac(c));
    }

    #[test]
    fn coupling_examples() {
        let s = x3();
        let (a, b) = (pt(&s, "a"), pt(&s, "b"));
        let (da, db) = (Dist::dirac(a), Dist::dirac(b));
        let w = Coupling::new([((a, b), Q::one())], &da, &db).unwrap();
        assert_eq!(w.cost(&s), q(1, 2));
        let mid = dist(&s, &[("a", q(1, 2)), ("b", q(1, 2))]);
        let product = mid
            .iter()
            .flat_map(|(x, u)| mid.iter().map(move |(y, v)| ((*x, *y), u * v)))
            .collect::<Vec<_>>();
        assert!(Coupling::new(product, &mid, &mid).is_ok());
        let bad = Coupling::new([((a, a), Q::one())], &da, &db);
        assert_eq!(
            bad,
            Err(Error::MarginalMismatch { side: "right".into(), point: format!("{a:?}") })
        );
    }

    fn arb_dist(n: usize) -> impl Strategy<Value = Dist<Point>> {
        proptest::collection::vec(0u32..5, n).prop_filter_map("all zero", |ws| {
            let total: u32 = ws.iter().sum();
            if total == 0 {
                return None;
            }
            Some(
                Dist::from_weights(
                    ws.iter().enumerate().map(|(i, w)| (Point(i), q(*w as i64, total as i64))),
                )
                .unwrap(),
            )
        })
    }

    proptest! {
        #[test]
        fn combine_is_normalized_and_commutes_with_pushforward(
            d1 in arb_dist(4), d2 in arb_dist(4), num in 1i64..8, map in proptest::collection::vec(0usize..4, 4)
        ) {
            let p = q(num, 8);
            let one_minus = Q::one() - &p;
            let m = Dist::combine(&[(p.clone(), d1.clone()), (one_minus.clone(), d2.clone())]).unwrap();
            prop_assert!(m.iter().fold(Q::zero(), |a, (_, v)| a + v).is_one());
            let f = |x: &Point| Point(map[x.0]);
            let lhs = m.pushforward(f);
            let rhs = Dist::combine(&[(p, d1.pushforward(f)), (one_minus, d2.pushforward(f))]).unwrap();
            prop_assert_eq!(lhs, rhs);
        }
    }
}
