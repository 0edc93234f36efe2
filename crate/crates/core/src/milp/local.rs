use std::time::Instant;

use rand::Rng as _;
use rayon::prelude::*;

use super::{Backend, Solution, SolveMeta, TourProblem};
use crate::arcs::ArcSpace;
use crate::error::Result;
use crate::rng::{self, Rng};
use crate::tour::Tour;

#[derive(Debug, Clone, PartialEq)]
pub struct LocalSearchConfig {
    pub restarts: usize,
    pub seed: u64,
    /// Improvement passes per restart before giving up on convergence.
    pub max_passes: usize,
}

impl Default for LocalSearchConfig {
    fn default() -> Self {
        Self {
            restarts: 8,
            seed: 0,
            max_passes: 1000,
        }
    }
}

/// Nearest-neighbour construction under `arc_hint`. Restart 0 is the plain
/// greedy tour from the depot; later restarts start at a random node and
/// sometimes take the second-nearest candidate.
fn construct<P: TourProblem + ?Sized>(problem: &P, restart: usize, rng: &mut Rng) -> Vec<usize> {
    let n = problem.n_nodes();
    let space = ArcSpace::new(n);
    let randomized = restart > 0;
    let start = if randomized { rng.random_range(0..n) } else { 0 };
    let mut visited = vec![false; n];
    let mut order = vec![start];
    visited[start] = true;
    let mut current = start;
    while order.len() < n {
        let mut candidates: Vec<(f64, usize)> = (0..n)
            .filter(|&j| !visited[j])
            .map(|j| (problem.arc_hint(space.index(current, j)), j))
            .collect();
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let pick = if randomized && candidates.len() > 1 && rng.random_bool(0.3) { 1 } else { 0 };
        current = candidates[pick].1;
        visited[current] = true;
        order.push(current);
    }
    let at = order.iter().position(|&v| v == 0).expect("depot is visited");
    order.rotate_left(at);
    order
}

/// First-improvement 2-opt: reverses `perm[i..=j]` whenever the full tour
/// objective strictly improves. Reversal flips the direction of the inner
/// arcs, so every move is re-scored by the problem's own objective.
fn two_opt<P: TourProblem + ?Sized>(problem: &P, mut perm: Vec<usize>, max_passes: usize, evals: &mut u64) -> (f64, Vec<usize>) {
    let n = perm.len();
    let score = |p: &[usize], evals: &mut u64| {
        *evals += 1;
        problem.tour_cost(&Tour::from_permutation(p.to_vec()).expect("2-opt keeps a valid permutation"))
    };
    let mut best = score(&perm, evals);
    for _ in 0..max_passes {
        let mut improved = false;
        'scan: for i in 1..n - 1 {
            for j in i + 1..n {
                perm[i..=j].reverse();
                let cost = score(&perm, evals);
                if cost < best - 1e-12 * best.abs().max(1.0) {
                    best = cost;
                    improved = true;
                    break 'scan;
                }
                perm[i..=j].reverse();
            }
        }
        if !improved {
            break;
        }
    }
    (best, perm)
}

/// Best of `restarts` 2-opt local optima; deterministic under `seed`.
pub fn solve_local_search<P: TourProblem + ?Sized>(problem: &P, cfg: &LocalSearchConfig) -> Result<Solution> {
    let started = Instant::now();
    let runs: Vec<(f64, Vec<usize>, u64)> = (0..cfg.restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let mut stream = rng::substream(cfg.seed, r as u64);
            let start = construct(problem, r, &mut stream);
            let mut evals = 0;
            let (cost, perm) = two_opt(problem, start, cfg.max_passes, &mut evals);
            (cost, perm, evals)
        })
        .collect();
    let evaluations = runs.iter().map(|r| r.2).sum();
    let (objective, perm, _) = runs
        .into_iter()
        .reduce(|best, r| {
            let better = r.0 < best.0 || (r.0 == best.0 && r.1 < best.1);
            if better {
                r
            } else {
                best
            }
        })
        .expect("at least one restart");
    let tour = Tour::from_permutation(perm)?;
    let assignment = problem.witness(&tour);
    Ok(Solution {
        tour,
        objective,
        assignment,
        meta: SolveMeta {
            backend: Backend::LocalSearch,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
            evaluations,
        },
    })
}
