//! Exact Kantorovich distance via the transportation simplex.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Debug;

use num_traits::{Signed, Zero};

use crate::space::{Coupling, Dist, FiniteMetricSpace, Metric, Point};
use crate::{Error, Result, Q};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransportResult<T: Ord> {
    pub value: Q,
    pub witness: Coupling<T>,
}

/// `K(M)`: the Kantorovich lifting of a ground metric to distributions.
pub struct Kantorovich<M>(pub M);

impl<T: Ord + Clone + Debug, M: Metric<T>> Metric<Dist<T>> for Kantorovich<M> {
    fn distance(&self, x: &Dist<T>, y: &Dist<T>) -> Q {
        kantorovich_with(&self.0, x, y).value
    }
}

pub fn kantorovich(space: &FiniteMetricSpace, left: &Dist<Point>, right: &Dist<Point>) -> Result<TransportResult<Point>> {
    space.check_dist(left)?;
    space.check_dist(right)?;
    Ok(kantorovich_with(space, left, right))
}

pub fn transport_cost(space: &FiniteMetricSpace, coupling: &Coupling<Point>) -> Q {
    coupling.cost(space)
}

/// Optimal transport between `left` and `right` under any ground metric.
pub fn kantorovich_with<T, M>(metric: &M, left: &Dist<T>, right: &Dist<T>) -> TransportResult<T>
where
    T: Ord + Clone + Debug,
    M: Metric<T> + ?Sized,
{
    let xs: Vec<&T> = left.support().collect();
    let ys: Vec<&T> = right.support().collect();
    let supply: Vec<Q> = left.iter().map(|(_, v)| v.clone()).collect();
    let demand: Vec<Q> = right.iter().map(|(_, v)| v.clone()).collect();
    let cost: Vec<Vec<Q>> = xs.iter().map(|x| ys.iter().map(|y| metric.distance(x, y)).collect()).collect();
    let flow = transportation_simplex(&supply, &demand, &cost);
    let mut joint = BTreeMap::new();
    let mut value = Q::zero();
    for (i, row) in flow.iter().enumerate() {
        for (j, f) in row.iter().enumerate() {
            if f.is_positive() {
                value += f * &cost[i][j];
                joint.insert((xs[i].clone(), ys[j].clone()), f.clone());
            }
        }
    }
    TransportResult { value, witness: Coupling::new_unchecked(joint, left.clone(), right.clone()) }
}

/// Primal transportation simplex: north-west-corner start, spanning-tree
/// bases (degenerate cells allowed), Bland's smallest-index rule for both the
/// entering and the leaving cell. Supplies and demands must be positive with
/// equal totals. Returns the optimal flow matrix.
pub(crate) fn transportation_simplex(supply: &[Q], demand: &[Q], cost: &[Vec<Q>]) -> Vec<Vec<Q>> {
    let (m, n) = (supply.len(), demand.len());
    let mut flow = vec![vec![Q::zero(); n]; m];
    let mut basic = vec![vec![false; n]; m];
    let (mut ra, mut rb) = (supply.to_vec(), demand.to_vec());
    let (mut i, mut j) = (0, 0);
    loop {
        let x = if ra[i] < rb[j] { ra[i].clone() } else { rb[j].clone() };
        ra[i] -= &x;
        rb[j] -= &x;
        flow[i][j] = x;
        basic[i][j] = true;
        if i == m - 1 && j == n - 1 {
            break;
        }
        if i == m - 1 {
            j += 1;
        } else if j == n - 1 || ra[i].is_zero() {
            i += 1;
        } else {
            j += 1;
        }
    }

    loop {
        let (u, v) = potentials(&basic, cost);
        let entering = (0..m)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .find(|&(i, j)| !basic[i][j] && (&cost[i][j] - &u[i] - &v[j]).is_negative());
        let Some((ei, ej)) = entering else {
            return flow;
        };
        let path = tree_path(&basic, ei, ej);
        // path[0] touches column ej and carries a minus sign; signs alternate.
        let minus = path.iter().step_by(2);
        let theta = minus.clone().map(|&(a, b)| flow[a][b].clone()).min().expect("cycle has a minus cell");
        let leaving = *minus.filter(|&&(a, b)| flow[a][b] == theta).min_by_key(|&&(a, b)| a * n + b).unwrap();
        for (k, &(a, b)) in path.iter().enumerate() {
            if k % 2 == 0 {
                flow[a][b] -= &theta;
            } else {
                flow[a][b] += &theta;
            }
        }
        flow[ei][ej] = theta;
        basic[ei][ej] = true;
        basic[leaving.0][leaving.1] = false;
    }
}

fn potentials(basic: &[Vec<bool>], cost: &[Vec<Q>]) -> (Vec<Q>, Vec<Q>) {
    let (m, n) = (basic.len(), basic[0].len());
    let mut u: Vec<Option<Q>> = vec![None; m];
    let mut v: Vec<Option<Q>> = vec![None; n];
    u[0] = Some(Q::zero());
    let mut queue = VecDeque::from([(true, 0usize)]);
    while let Some((is_row, k)) = queue.pop_front() {
        if is_row {
            let uk = u[k].clone().unwrap();
            for j in 0..n {
                if basic[k][j] && v[j].is_none() {
                    v[j] = Some(&cost[k][j] - &uk);
                    queue.push_back((false, j));
                }
            }
        } else {
            let vk = v[k].clone().unwrap();
            for i in 0..m {
                if basic[i][k] && u[i].is_none() {
                    u[i] = Some(&cost[i][k] - &vk);
                    queue.push_back((true, i));
                }
            }
        }
    }
    (
        u.into_iter().map(|x| x.expect("basis spans all rows")).collect(),
        v.into_iter().map(|x| x.expect("basis spans all columns")).collect(),
    )
}

/// Cells on the basis-tree path from column `col` back to row `row`.
fn tree_path(basic: &[Vec<bool>], row: usize, col: usize) -> Vec<(usize, usize)> {
    let (m, n) = (basic.len(), basic[0].len());
    // Node ids: rows 0..m, columns m..m+n.
    let mut parent: Vec<Option<usize>> = vec![None; m + n];
    let mut seen = vec![false; m + n];
    seen[row] = true;
    let mut queue = VecDeque::from([row]);
    while let Some(node) = queue.pop_front() {
        if node == m + col {
            break;
        }
        let next: Vec<usize> = if node < m {
            (0..n).filter(|&j| basic[node][j]).map(|j| m + j).collect()
        } else {
            (0..m).filter(|&i| basic[i][node - m]).collect()
        };
        for nb in next {
            if !seen[nb] {
                seen[nb] = true;
                parent[nb] = Some(node);
                queue.push_back(nb);
            }
        }
    }
    let mut path = Vec::new();
    let mut node = m + col;
    while node != row {
        let p = parent[node].expect("basis tree is connected");
        path.push(if node < m { (node, p - m) } else { (p, node - m) });
        node = p;
    }
    path
}

/// Largest `|supp Δ| + |supp Θ|` accepted by [`kantorovich_bruteforce`].
pub const BRUTEFORCE_CAP: usize = 8;

/// Independent oracle: minimises over every coupling supported on a spanning
/// forest of the bipartite support graph, solving each forest exactly by leaf
/// elimination.
pub fn kantorovich_bruteforce(space: &FiniteMetricSpace, left: &Dist<Point>, right: &Dist<Point>) -> Result<Q> {
    space.check_dist(left)?;
    space.check_dist(right)?;
    let (m, n) = (left.len(), right.len());
    if m + n > BRUTEFORCE_CAP {
        return Err(Error::TooLarge(format!("combined support {} exceeds {}", m + n, BRUTEFORCE_CAP)));
    }
    let xs: Vec<Point> = left.support().copied().collect();
    let ys: Vec<Point> = right.support().copied().collect();
    let a: Vec<Q> = left.iter().map(|(_, v)| v.clone()).collect();
    let b: Vec<Q> = right.iter().map(|(_, v)| v.clone()).collect();
    let cells = m * n;
    let mut best: Option<Q> = None;
    for mask in 1u32..(1u32 << cells) {
        if mask.count_ones() as usize > m + n - 1 {
            continue;
        }
        let chosen: Vec<(usize, usize)> = (0..cells).filter(|k| mask & (1 << k) != 0).map(|k| (k / n, k % n)).collect();
        if !is_forest(&chosen, m, n) {
            continue;
        }
        if let Some(f) = solve_forest(&chosen, &a, &b) {
            let cost = chosen.iter().zip(&f).fold(Q::zero(), |acc, (&(i, j), w)| acc + w * space.d(xs[i], ys[j]));
            if best.as_ref().is_none_or(|bv| cost < *bv) {
                best = Some(cost);
            }
        }
    }
    Ok(best.expect("the north-west-corner support is always a feasible forest"))
}

fn is_forest(cells: &[(usize, usize)], m: usize, n: usize) -> bool {
    let mut parent: Vec<usize> = (0..m + n).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        p[x] = r;
        r
    }
    for &(i, j) in cells {
        let (ri, rj) = (find(&mut parent, i), find(&mut parent, m + j));
        if ri == rj {
            return false;
        }
        parent[ri] = rj;
    }
    true
}

fn solve_forest(cells: &[(usize, usize)], a: &[Q], b: &[Q]) -> Option<Vec<Q>> {
    let (mut ra, mut rb) = (a.to_vec(), b.to_vec());
    let mut flow: Vec<Option<Q>> = vec![None; cells.len()];
    let mut remaining = cells.len();
    while remaining > 0 {
        let mut progressed = false;
        for k in 0..cells.len() {
            if flow[k].is_some() {
                continue;
            }
            let (i, j) = cells[k];
            let row_deg = (0..cells.len()).filter(|&t| flow[t].is_none() && cells[t].0 == i).count();
            let col_deg = (0..cells.len()).filter(|&t| flow[t].is_none() && cells[t].1 == j).count();
            let f = if row_deg == 1 {
                ra[i].clone()
            } else if col_deg == 1 {
                rb[j].clone()
            } else {
                continue;
            };
            ra[i] -= &f;
            rb[j] -= &f;
            flow[k] = Some(f);
            remaining -= 1;
            progressed = true;
        }
        if !progressed {
            return None;
        }
    }
    let flow: Vec<Q> = flow.into_iter().map(Option::unwrap).collect();
    if flow.iter().any(|f| f.is_negative()) || ra.iter().chain(&rb).any(|r| !r.is_zero()) {
        return None;
    }
    Some(flow)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rat::q;
    use crate::space::fixtures::{dist, pt, x3};
    use num_traits::One;
    use proptest::prelude::*;

    #[test]
    fn examples_on_x3() {
        let s = x3();
        let (a, b) = (pt(&s, "a"), pt(&s, "b"));
        let r = kantorovich(&s, &Dist::dirac(a), &Dist::dirac(b)).unwrap();
        assert_eq!(r.value, q(1, 2));
        assert_eq!(r.witness.joint().iter().collect::<Vec<_>>(), vec![(&(a, b), &Q::one())]);
        let mid = dist(&s, &[("a", q(1, 2)), ("b", q(1, 2))]);
        assert_eq!(kantorovich(&s, &mid, &Dist::dirac(a)).unwrap().value, q(1, 4));
        let same = kantorovich(&s, &mid, &mid).unwrap();
        assert_eq!(same.value, Q::zero());
        assert!(same.witness.joint().keys().all(|(x, y)| x == y));
        let dc = s.dirac("c").unwrap();
        assert_eq!(kantorovich_bruteforce(&s, &mid, &dc).unwrap(), q(3, 4));
        assert_eq!(kantorovich(&s, &mid, &dc).unwrap().value, q(3, 4));
    }

    #[test]
    fn transport_cost_examples() {
        let s = x3();
        let (a, b, c) = (pt(&s, "a"), pt(&s, "b"), pt(&s, "c"));
        let left = dist(&s, &[("a", q(1, 2)), ("b", q(1, 2))]);
        let right = dist(&s, &[("b", q(1, 2)), ("c", q(1, 2))]);
        let w = Coupling::new([((a, b), q(1, 2)), ((b, c), q(1, 2))], &left, &right).unwrap();
        assert_eq!(transport_cost(&s, &w), q(1, 2));
        let diag = Coupling::new([((a, a), q(1, 2)), ((b, b), q(1, 2))], &left, &left).unwrap();
        assert_eq!(transport_cost(&s, &diag), Q::zero());
    }

    #[test]
    fn bruteforce_cap_and_space_mismatch() {
        let s = x3();
        let far = Dist::dirac(Point(7));
        assert_eq!(kantorovich(&s, &far, &far), Err(Error::SpaceMismatch));
        let big = FiniteMetricSpace::from_table(
            &["0", "1", "2", "3", "4"],
            (0..5).map(|i| (0..5).map(|j| if i == j { Q::zero() } else { Q::one() }).collect()).collect(),
        )
        .unwrap();
        let u = Dist::from_weights((0..5).map(|i| (Point(i), q(1, 5)))).unwrap();
        assert!(matches!(kantorovich_bruteforce(&big, &u, &u), Err(Error::TooLarge(_))));
    }

    /// Degenerate instance where every NW-corner step ties.
    #[test]
    fn degenerate_ties_terminate() {
        let supply = vec![q(1, 3), q(1, 3), q(1, 3)];
        let cost = vec![
            vec![q(1, 1), q(0, 1), q(1, 2)],
            vec![q(1, 2), q(1, 1), q(0, 1)],
            vec![q(0, 1), q(1, 2), q(1, 1)],
        ];
        let f = transportation_simplex(&supply, &supply, &cost);
        let total = f.iter().enumerate().fold(Q::zero(), |acc, (i, r)| {
            r.iter().enumerate().fold(acc, |a, (j, x)| a + x * &cost[i][j])
        });
        assert_eq!(total, Q::zero());
    }

    fn arb_space() -> impl Strategy<Value = FiniteMetricSpace> {
        (any::<u64>(), 1usize..5).prop_map(|(seed, n)| {
            let mut rng = crate::random::rng(seed);
            crate::random::space(&mut rng, n)
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn kantorovich_is_a_metric_matching_the_oracle(space in arb_space(), seed in any::<u64>()) {
            let mut rng = crate::random::rng(seed);
            let d1 = crate::random::dist(&mut rng, &space, 3);
            let d2 = crate::random::dist(&mut rng, &space, 3);
            let d3 = crate::random::dist(&mut rng, &space, 3);
            let k12 = kantorovich(&space, &d1, &d2).unwrap();
            prop_assert_eq!(&k12.value, &kantorovich_bruteforce(&space, &d1, &d2).unwrap());
            prop_assert_eq!(k12.witness.cost(&space), k12.value.clone());
            prop_assert!(Coupling::new(k12.witness.joint().clone(), &d1, &d2).is_ok());
            let k21 = kantorovich(&space, &d2, &d1).unwrap().value;
            prop_assert_eq!(&k12.value, &k21);
            prop_assert_eq!(k12.value.is_zero(), d1 == d2);
            let k13 = kantorovich(&space, &d1, &d3).unwrap().value;
            let k32 = kantorovich(&space, &d3, &d2).unwrap().value;
            prop_assert!(k12.value <= k13 + k32);
            prop_assert!(k12.value <= Q::one());
        }

        #[test]
        fn dirac_distance_is_ground_distance(space in arb_space(), i in 0usize..4, j in 0usize..4) {
            let (x, y) = (Point(i % space.len()), Point(j % space.len()));
            let k = kantorovich(&space, &Dist::dirac(x), &Dist::dirac(y)).unwrap().value;
            prop_assert_eq!(&k, space.d(x, y));
        }

        #[test]
        fn kantorovich_is_convex(space in arb_space(), seed in any::<u64>(), num in 1i64..12) {
            let mut rng = crate::random::rng(seed);
            let ds: Vec<_> = (0..4).map(|_| crate::random::dist(&mut rng, &space, 3)).collect();
            let p = q(num, 12);
            let r = Q::one() - &p;
            let l = Dist::combine(&[(p.clone(), ds[0].clone()), (r.clone(), ds[1].clone())]).unwrap();
            let t = Dist::combine(&[(p.clone(), ds[2].clone()), (r.clone(), ds[3].clone())]).unwrap();
            let lhs = kantorovich(&space, &l, &t).unwrap().value;
            let rhs = &p * kantorovich(&space, &ds[0], &ds[2]).unwrap().value
                + &r * kantorovich(&space, &ds[1], &ds[3]).unwrap().value;
            prop_assert!(lhs <= rhs);
        }

        #[test]
        fn pair_mixing_is_non_expansive(space in arb_space(), pts in proptest::collection::vec(0usize..4, 4), num in 1i64..12) {
            let ps: Vec<Point> = pts.iter().map(|i| Point(i % space.len())).collect();
            let p = q(num, 12);
            let r = Q::one() - &p;
            let mix = |x: Point, y: Point| Dist::combine(&[(p.clone(), Dist::dirac(x)), (r.clone(), Dist::dirac(y))]).unwrap();
            let lhs = kantorovich(&space, &mix(ps[0], ps[1]), &mix(ps[2], ps[3])).unwrap().value;
            let bound = std::cmp::max(space.d(ps[0], ps[2]).clone(), space.d(ps[1], ps[3]).clone());
            prop_assert!(lhs <= bound);
        }
    }

    #[test]
    fn generic_ground_metric() {
        // Transport between distributions over labels under a hand-written metric.
        let m = crate::space::FnMetric(|x: &u8, y: &u8| if x == y { Q::zero() } else { q(1, 3) });
        let l = Dist::from_weights([(1u8, q(1, 2)), (2u8, q(1, 2))]).unwrap();
        let r = Dist::dirac(1u8);
        assert_eq!(kantorovich_with(&m, &l, &r).value, q(1, 6));
    }
}
