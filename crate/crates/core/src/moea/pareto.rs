use std::cmp::Ordering;

use crate::error::{Error, Result};

/// A point in objective space: cost (minimised), satisfaction (maximised) and the
/// constraint violation count (0 for feasible solutions).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub f1: f64,
    pub f2: f64,
    pub violations: usize,
}

impl Point {
    pub fn feasible(f1: f64, f2: f64) -> Self {
        Point { f1, f2, violations: 0 }
    }
}

/// Pareto dominance on feasible points: no worse in both objectives, better in one.
pub fn dominates(a: &Point, b: &Point) -> bool {
    a.f1 <= b.f1 && a.f2 >= b.f2 && (a.f1 < b.f1 || a.f2 > b.f2)
}

/// Constrained dominance: feasible beats infeasible, fewer violations beat more, and
/// ordinary Pareto dominance decides between feasible points.
pub fn constrained_dominates(a: &Point, b: &Point) -> bool {
    match (a.violations, b.violations) {
        (0, 0) => dominates(a, b),
        (0, _) => true,
        (_, 0) => false,
        (va, vb) => va < vb,
    }
}

/// Non-dominated fronts as index lists, best first.
pub fn fast_nondominated_sort(points: &[Point]) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut dominated_by = vec![Vec::new(); n];
    let mut counts = vec![0usize; n];
    for i in 0..n {
        for j in (i + 1)..n {
            if constrained_dominates(&points[i], &points[j]) {
                dominated_by[i].push(j);
                counts[j] += 1;
            } else if constrained_dominates(&points[j], &points[i]) {
                dominated_by[j].push(i);
                counts[i] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| counts[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominated_by[i] {
                counts[j] -= 1;
                if counts[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
    }
    fronts
}

/// Crowding distance of each member of one front, in the order given.
///
/// Extreme points of either objective get infinity; an objective whose span is zero
/// contributes nothing.
pub fn crowding_distance(front: &[Point]) -> Vec<f64> {
    let n = front.len();
    let mut dist = vec![0.0; n];
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    let objectives: [fn(&Point) -> f64; 2] = [|p| p.f1, |p| p.f2];
    for key in objectives {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| key(&front[a]).total_cmp(&key(&front[b])).then(a.cmp(&b)));
        let (lo, hi) = (key(&front[order[0]]), key(&front[order[n - 1]]));
        dist[order[0]] = f64::INFINITY;
        dist[order[n - 1]] = f64::INFINITY;
        let span = hi - lo;
        if span <= 0.0 {
            continue;
        }
        for w in order.windows(3) {
            dist[w[1]] += (key(&front[w[2]]) - key(&front[w[0]])) / span;
        }
    }
    dist
}

/// Exact area dominated by `points` (cost minimised, satisfaction maximised) and bounded
/// by `reference = (f1_ref, f2_ref)`. Every point must satisfy `f1 <= f1_ref` and
/// `f2 >= f2_ref`.
pub fn hypervolume_2d(points: &[(f64, f64)], reference: (f64, f64)) -> Result<f64> {
    let (r1, r2) = reference;
    let mut mapped = Vec::with_capacity(points.len());
    for &(f1, f2) in points {
        if !(f1 <= r1 && f2 >= r2) || !f1.is_finite() || !f2.is_finite() {
            return Err(Error::Config(format!("point ({f1}, {f2}) lies outside the reference box ({r1}, {r2})")));
        }
        mapped.push((f1, -f2));
    }
    mapped.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut area = 0.0;
    let mut ceiling = -r2;
    for (x, y) in mapped {
        if y < ceiling {
            area += (r1 - x) * (ceiling - y);
            ceiling = y;
        }
    }
    Ok(area)
}

/// Indices of the mutually non-dominated feasible points, sorted by cost. Points with
/// identical objectives are kept once.
pub fn pareto_front(points: &[Point]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..points.len()).filter(|&i| points[i].violations == 0).collect();
    idx.sort_by(|&a, &b| {
        points[a].f1.total_cmp(&points[b].f1).then(points[b].f2.total_cmp(&points[a].f2)).then(a.cmp(&b))
    });
    let mut front: Vec<usize> = Vec::new();
    for i in idx {
        let p = &points[i];
        match front.last() {
            Some(&last) if points[last].f2 >= p.f2 => {}
            _ => front.push(i),
        }
    }
    front
}

/// Orders two candidates for survival: lower rank first, then larger crowding.
pub fn crowded_cmp(rank_a: usize, crowd_a: f64, rank_b: usize, crowd_b: f64) -> Ordering {
    rank_a.cmp(&rank_b).then(crowd_b.total_cmp(&crowd_a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pts(v: &[(f64, f64)]) -> Vec<Point> {
        v.iter().map(|&(a, b)| Point::feasible(a, b)).collect()
    }

    #[test]
    fn sort_example() {
        let p = pts(&[(1.0, 0.9), (2.0, 0.95), (2.0, 0.9), (3.0, 0.5)]);
        assert_eq!(fast_nondominated_sort(&p), vec![vec![0, 1], vec![2], vec![3]]);
        assert_eq!(fast_nondominated_sort(&pts(&[(1.0, 0.5); 4])), vec![vec![0, 1, 2, 3]]);
    }

    #[test]
    fn feasible_beats_infeasible() {
        let p = vec![Point { f1: 0.0, f2: 1.0, violations: 2 }, Point::feasible(100.0, 0.0), Point { f1: 50.0, f2: 0.0, violations: 1 }];
        assert_eq!(fast_nondominated_sort(&p), vec![vec![1], vec![2], vec![0]]);
    }

    #[test]
    fn crowding_examples() {
        let d = crowding_distance(&pts(&[(1.0, 0.9), (2.0, 0.8), (3.0, 0.7)]));
        assert_eq!(d[0], f64::INFINITY);
        assert!((d[1] - 2.0).abs() < 1e-12);
        assert_eq!(d[2], f64::INFINITY);
        assert_eq!(crowding_distance(&pts(&[(1.0, 0.5)])), vec![f64::INFINITY]);
        let flat = crowding_distance(&pts(&[(1.0, 0.5), (2.0, 0.5), (4.0, 0.5)]));
        assert!((flat[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hypervolume_two_boxes() {
        let hv = hypervolume_2d(&[(2.0, 0.5), (4.0, 0.9)], (5.0, 0.0)).unwrap();
        assert!((hv - 1.9).abs() < 1e-9);
        assert_eq!(hypervolume_2d(&[(5.0, 0.0)], (5.0, 0.0)).unwrap(), 0.0);
        assert_eq!(hypervolume_2d(&[], (5.0, 0.0)).unwrap(), 0.0);
        assert!(hypervolume_2d(&[(6.0, 0.5)], (5.0, 0.0)).is_err());
        assert!(hypervolume_2d(&[(1.0, -0.1)], (5.0, 0.0)).is_err());
    }

    #[test]
    fn hypervolume_matches_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let front: Vec<(f64, f64)> = (0..8).map(|_| (rng.gen_range(0.0..10.0), rng.gen_range(0.0..1.0))).collect();
            let exact = hypervolume_2d(&front, (10.0, 0.0)).unwrap();
            let samples = 200_000;
            let hits = (0..samples)
                .filter(|_| {
                    let (x, y) = (rng.gen_range(0.0..10.0), rng.gen_range(0.0..1.0));
                    front.iter().any(|&(a, b)| a <= x && b >= y)
                })
                .count();
            let mc = 10.0 * hits as f64 / samples as f64;
            assert!((mc - exact).abs() <= 0.01 * exact, "{mc} vs {exact}");
        }
    }

    #[test]
    fn pareto_front_filters_dominated_and_duplicates() {
        let p = pts(&[(3.0, 0.9), (1.0, 0.5), (2.0, 0.4), (1.0, 0.5), (3.0, 0.8)]);
        assert_eq!(pareto_front(&p), vec![1, 0]);
    }

    proptest! {
        #[test]
        fn adding_a_dominated_point_keeps_hypervolume(raw in prop::collection::vec((0.0f64..10.0, 0.0f64..1.0), 1..20), pick in 0usize..20, dx in 0.0f64..1.0, dy in 0.0f64..1.0) {
            let base = hypervolume_2d(&raw, (11.0, 0.0)).unwrap();
            let (f1, f2) = raw[pick % raw.len()];
            let mut more = raw.clone();
            more.push(((f1 + dx).min(11.0), (f2 - dy).max(0.0)));
            prop_assert!((hypervolume_2d(&more, (11.0, 0.0)).unwrap() - base).abs() < 1e-12);
        }

        #[test]
        fn sort_agrees_with_brute_force(raw in prop::collection::vec((0u8..20, 0u8..20, 0usize..3), 1..60)) {
            let p: Vec<Point> = raw.iter().map(|&(a, b, v)| Point { f1: a as f64, f2: b as f64 / 20.0, violations: v }).collect();
            let fronts = fast_nondominated_sort(&p);
            prop_assert_eq!(fronts, brute_force_fronts(&p));
        }
    }

    /// Peels fronts by checking every pair; the reference the fast sort is compared to.
    pub(crate) fn brute_force_fronts(p: &[Point]) -> Vec<Vec<usize>> {
        let mut left: Vec<usize> = (0..p.len()).collect();
        let mut fronts = Vec::new();
        while !left.is_empty() {
            let front: Vec<usize> =
                left.iter().copied().filter(|&i| !left.iter().any(|&j| constrained_dominates(&p[j], &p[i]))).collect();
            left.retain(|i| !front.contains(i));
            fronts.push(front);
        }
        fronts
    }
}
