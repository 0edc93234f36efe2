use std::time::Instant;

use rayon::prelude::*;

use super::{Backend, Solution, SolveMeta, TourProblem};
use crate::error::{Error, Result};
use crate::tour::{next_permutation, Tour};

/// Largest node count enumerated by default: 9! = 362,880 tours.
pub const DEFAULT_ENUMERATION_CAP: usize = 10;

/// Exact optimum over every depot-rooted directed tour.
///
/// Tours are split into blocks by their first two customers and each block
/// is scanned in lexicographic order; blocks are merged in order keeping the
/// first strict minimum, so ties resolve to the lexicographically smallest
/// permutation for any thread count.
pub fn solve_enumeration<P: TourProblem + ?Sized>(problem: &P, cap: usize) -> Result<Solution> {
    let n = problem.n_nodes();
    if n > cap {
        return Err(Error::EnumerationCap { nodes: n, cap });
    }
    if n < 2 {
        return Err(Error::InvalidTour("enumeration needs at least 2 nodes".into()));
    }
    let started = Instant::now();
    let prefixes: Vec<Vec<usize>> = if n >= 4 {
        (1..n)
            .flat_map(|a| (1..n).filter(move |&b| b != a).map(move |b| vec![0, a, b]))
            .collect()
    } else {
        vec![vec![0]]
    };
    let blocks: Vec<(f64, Vec<usize>, u64)> = prefixes
        .into_par_iter()
        .map(|prefix| {
            let mut perm = prefix.clone();
            perm.extend((1..n).filter(|v| !prefix.contains(v)));
            let fixed = prefix.len();
            let mut best = (f64::INFINITY, perm.clone());
            let mut count = 0u64;
            loop {
                let tour = Tour::from_permutation(perm.clone()).expect("enumerated permutation is valid");
                let cost = problem.tour_cost(&tour);
                count += 1;
                if cost < best.0 {
                    best = (cost, perm.clone());
                }
                if !next_permutation(&mut perm[fixed..]) {
                    break;
                }
            }
            (best.0, best.1, count)
        })
        .collect();
    let evaluations = blocks.iter().map(|b| b.2).sum();
    let (objective, perm, _) = blocks
        .into_iter()
        .reduce(|best, b| if b.0 < best.0 { b } else { best })
        .expect("at least one block");
    if !objective.is_finite() {
        return Err(Error::Runtime(format!("tour objective is {objective}")));
    }
    let tour = Tour::from_permutation(perm)?;
    let assignment = problem.witness(&tour);
    Ok(Solution {
        tour,
        objective,
        assignment,
        meta: SolveMeta {
            backend: Backend::Enumeration,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
            evaluations,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::testing::MatrixTsp;
    use crate::milp::{check_witness, objectives_match};
    use crate::tour::enumerate;

    #[test]
    fn four_node_hand_example() {
        // 1-2-3-4-1 costs 1+1+1+1; every other tour uses a 9.
        let m: [&[f64]; 4] = [
            &[0.0, 1.0, 9.0, 9.0],
            &[9.0, 0.0, 1.0, 9.0],
            &[9.0, 9.0, 0.0, 1.0],
            &[1.0, 9.0, 9.0, 0.0],
        ];
        let p = MatrixTsp::from_matrix(&m);
        let sol = solve_enumeration(&p, 10).unwrap();
        assert_eq!(sol.tour.to_id_string(), "1-2-3-4");
        assert_eq!(sol.objective, 4.0);
        assert_eq!(sol.meta.evaluations, 6);
    }

    #[test]
    fn equal_costs_pick_lexicographically_first() {
        for n in 3..=7 {
            let p = MatrixTsp::new(n, vec![2.5; n * (n - 1)]);
            let sol = solve_enumeration(&p, 10).unwrap();
            assert_eq!(sol.tour.perm(), (0..n).collect::<Vec<_>>().as_slice());
            assert_eq!(sol.objective, 2.5 * n as f64);
        }
    }

    #[test]
    fn agrees_with_plain_loop() {
        use rand::Rng as _;
        let mut r = crate::rng::seeded(4);
        for n in 3..=7 {
            let costs: Vec<f64> = (0..n * (n - 1)).map(|_| r.random_range(0.0..10.0)).collect();
            let p = MatrixTsp::new(n, costs);
            let sol = solve_enumeration(&p, 10).unwrap();
            let mut best = (f64::INFINITY, Vec::new());
            for t in enumerate(n) {
                let c = p.tour_cost(&t);
                if c < best.0 {
                    best = (c, t.perm().to_vec());
                }
            }
            assert_eq!(sol.objective, best.0);
            assert_eq!(sol.tour.perm(), best.1.as_slice());
            let rep = check_witness(p.model(), &sol.assignment).unwrap();
            assert!(rep.feasible && objectives_match(rep.objective, sol.objective, 1e-9));
        }
    }

    #[test]
    fn refuses_above_cap() {
        let p = MatrixTsp::new(5, vec![1.0; 20]);
        assert!(matches!(solve_enumeration(&p, 4), Err(Error::EnumerationCap { nodes: 5, cap: 4 })));
    }
}
