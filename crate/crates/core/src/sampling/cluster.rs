use rand::Rng;

use super::{Result, SamplingError};
use crate::num::Real;
use crate::seed;

pub const MAX_LLOYD_ITERATIONS: usize = 100;

fn sq_dist<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

fn nearest<T: Real>(p: &[T], centers: &[Vec<T>]) -> usize {
    let mut best = 0;
    let mut best_d = sq_dist(p, &centers[0]);
    for (c, center) in centers.iter().enumerate().skip(1) {
        let d = sq_dist(p, center);
        if d < best_d {
            best = c;
            best_d = d;
        }
    }
    best
}

fn centroid<T: Real>(points: &[Vec<T>], members: impl Iterator<Item = usize>, dim: usize) -> Vec<T> {
    let mut sum = vec![T::zero(); dim];
    let mut n = 0usize;
    for i in members {
        for (s, &x) in sum.iter_mut().zip(&points[i]) {
            *s = *s + x;
        }
        n += 1;
    }
    if n > 0 {
        let n = T::from_usize_exact(n);
        for s in &mut sum {
            *s = *s / n;
        }
    }
    sum
}

/// Moves the point farthest from the largest cluster's centroid into each
/// empty cluster until none is empty.
fn repair_empty<T: Real>(points: &[Vec<T>], assignments: &mut [usize], k: usize, dim: usize) {
    loop {
        let mut sizes = vec![0usize; k];
        for &c in assignments.iter() {
            sizes[c] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else { return };
        let largest = (0..k).max_by(|&a, &b| sizes[a].cmp(&sizes[b]).then(b.cmp(&a))).unwrap_or(0);
        let center = centroid(points, (0..points.len()).filter(|&i| assignments[i] == largest), dim);
        let mut far = None;
        let mut far_d = T::neg_infinity();
        for i in (0..points.len()).filter(|&i| assignments[i] == largest) {
            let d = sq_dist(&points[i], &center);
            if d > far_d {
                far = Some(i);
                far_d = d;
            }
        }
        match far {
            Some(i) => assignments[i] = empty,
            None => return,
        }
    }
}

/// K-means over user embeddings: farthest-point seeding from a seeded random
/// first center, then Lloyd iterations until the assignment stops changing
/// or [`MAX_LLOYD_ITERATIONS`] is reached. Returns a cluster id in `0..k` per
/// row of `points`; every cluster is non-empty.
pub fn cluster_users<T: Real>(points: &[Vec<T>], k: usize, seed: u64) -> Result<Vec<usize>> {
    let n = points.len();
    if n == 0 {
        return Err(SamplingError::NoEligibleUsers);
    }
    if k == 0 || k > n {
        return Err(SamplingError::TooManyClusters { k, users: n });
    }
    let dim = points[0].len();
    let mut rng = seed::rng(seed);

    let first = rng.gen_range(0..n);
    let mut chosen = vec![false; n];
    chosen[first] = true;
    let mut centers = vec![points[first].clone()];
    let mut min_d: Vec<T> = points.iter().map(|p| sq_dist(p, &points[first])).collect();
    while centers.len() < k {
        let mut pick = None;
        for i in (0..n).filter(|&i| !chosen[i]) {
            if pick.is_none_or(|p: usize| min_d[i] > min_d[p]) {
                pick = Some(i);
            }
        }
        let Some(p) = pick else { break };
        chosen[p] = true;
        centers.push(points[p].clone());
        for (i, d) in min_d.iter_mut().enumerate() {
            let nd = sq_dist(&points[i], &points[p]);
            if nd < *d {
                *d = nd;
            }
        }
    }

    let mut assignments: Vec<usize> = points.iter().map(|p| nearest(p, &centers)).collect();
    repair_empty(points, &mut assignments, k, dim);
    for _ in 0..MAX_LLOYD_ITERATIONS {
        let centers: Vec<Vec<T>> =
            (0..k).map(|c| centroid(points, (0..n).filter(|&i| assignments[i] == c), dim)).collect();
        let mut next: Vec<usize> = points.iter().map(|p| nearest(p, &centers)).collect();
        repair_empty(points, &mut next, k, dim);
        if next == assignments {
            break;
        }
        assignments = next;
    }
    Ok(assignments)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_cluster() {
        let pts = vec![vec![0.0, 1.0], vec![5.0, 5.0], vec![-3.0, 2.0]];
        assert_eq!(cluster_users(&pts, 1, 4).unwrap(), vec![0, 0, 0]);
    }

    #[test]
    fn singletons_when_k_equals_n() {
        let pts: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let mut a = cluster_users(&pts, 6, 1).unwrap();
        a.sort_unstable();
        assert_eq!(a, vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn singletons_even_for_duplicate_points() {
        let pts = vec![vec![0.0f32; 3]; 4];
        let mut a = cluster_users(&pts, 4, 9).unwrap();
        a.sort_unstable();
        assert_eq!(a, vec![0, 1, 2, 3]);
    }

    #[test]
    fn separable_clouds() {
        let mut pts = Vec::new();
        for i in 0..20 {
            let jitter = (i as f64 * 0.37).sin() * 0.3;
            pts.push(vec![jitter, 0.1 * jitter]);
            pts.push(vec![10.0 + jitter, 10.0 - jitter]);
        }
        for seed in 0..10 {
            let a = cluster_users(&pts, 2, seed).unwrap();
            // exhaustive check: points from the same cloud share a label, the clouds differ
            for i in 0..pts.len() {
                for j in 0..pts.len() {
                    assert_eq!(a[i] == a[j], i % 2 == j % 2);
                }
            }
        }
    }

    #[test]
    fn too_many_clusters() {
        let pts = vec![vec![0.0], vec![1.0]];
        assert!(matches!(cluster_users(&pts, 3, 0), Err(SamplingError::TooManyClusters { k: 3, users: 2 })));
    }
}
