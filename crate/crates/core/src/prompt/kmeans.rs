//! Lloyd's K-Means with k-means++ seeding.
//!
//! Empty clusters are reseeded to the point farthest from its current center.
//! Several seeded restarts are run and the lowest-inertia solution is kept.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

pub const MAX_ITERATIONS: usize = 100;
pub const RESTARTS: usize = 8;

#[derive(Debug, Clone)]
pub struct KMeansResult {
    /// `[K, d]`
    pub centers: Tensor,
    pub assignment: Vec<usize>,
    pub inertia: f64,
    /// Inertia after each assignment step of the kept run.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
}

impl KMeansResult {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.centers.rows()];
        for &a in &self.assignment {
            sizes[a] += 1;
        }
        sizes
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn kmeans(points: &Tensor, k: usize, seed: u64) -> Result<KMeansResult> {
    let n = points.rows();
    if k == 0 {
        return Err(Error::Input("K must be at least 1".into()));
    }
    if n < k {
        return Err(Error::Input(format!("{n} points cannot form {k} clusters")));
    }
    let root = Rng::new(seed);
    let mut best: Option<KMeansResult> = None;
    for restart in 0..RESTARTS {
        let run = lloyd(points, k, &mut root.derive(restart as u64));
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn plus_plus_seed(points: &Tensor, k: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    let n = points.rows();
    let mut chosen = vec![rng.below(n)];
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(points.row(i), points.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.uniform() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if acc > target && w > 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            // all remaining mass is zero: duplicates only, take the first unused index
            (0..n).find(|i| !chosen.contains(i)).expect("n >= k")
        };
        chosen.push(next);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), points.row(next)));
        }
    }
    chosen.into_iter().map(|i| points.row(i).to_vec()).collect()
}

fn assign(points: &Tensor, centers: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let mut inertia = 0.0;
    let assignment = (0..points.rows())
        .map(|i| {
            let (best, dist) = centers
                .iter()
                .enumerate()
                .map(|(c, center)| (c, sq_dist(points.row(i), center)))
                .fold((0, f64::INFINITY), |acc, cur| if cur.1 < acc.1 { cur } else { acc });
            inertia += dist;
            best
        })
        .collect();
    (assignment, inertia)
}

fn means(points: &Tensor, assignment: &[usize], k: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let d = points.cols();
    let mut sums = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for (i, &a) in assignment.iter().enumerate() {
        counts[a] += 1;
        for (s, x) in sums[a].iter_mut().zip(points.row(i)) {
            *s += x;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        if c > 0 {
            for v in s.iter_mut() {
                *v /= c as f64;
            }
        }
    }
    (sums, counts)
}

fn lloyd(points: &Tensor, k: usize, rng: &mut Rng) -> KMeansResult {
    let mut centers = plus_plus_seed(points, k, rng);
    let mut history = Vec::new();
    let mut previous: Option<Vec<usize>> = None;
    let mut iterations = 0;
    let (assignment, inertia) = loop {
        let (assignment, inertia) = assign(points, &centers);
        history.push(inertia);
        iterations += 1;
        if previous.as_ref() == Some(&assignment) {
            break (assignment, inertia);
        }
        let (mut next, counts) = means(points, &assignment, k);
        if iterations >= MAX_ITERATIONS {
            // centers must be the means of the final assignment
            centers = next;
            let inertia = (0..points.rows())
                .map(|i| sq_dist(points.row(i), &centers[assignment[i]]))
                .sum();
            history.push(inertia);
            break (assignment, inertia);
        }
        let mut taken: Vec<usize> = Vec::new();
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..points.rows())
                    .filter(|i| !taken.contains(i))
                    .max_by(|&a, &b| {
                        let da = sq_dist(points.row(a), &next[assignment[a]]);
                        let db = sq_dist(points.row(b), &next[assignment[b]]);
                        da.total_cmp(&db).then(b.cmp(&a))
                    })
                    .expect("n >= k");
                taken.push(far);
                next[c] = points.row(far).to_vec();
            }
        }
        centers = next;
        previous = Some(assignment);
    };
    KMeansResult {
        centers: Tensor::from_parts(vec![k, points.cols()], centers.concat()),
        assignment,
        inertia,
        inertia_history: history,
        iterations,
    }
}
