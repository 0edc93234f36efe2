//! Solver-agnostic MILP models and the backends that solve or export them.
//!
//! A [`MilpModel`] is a plain list of bounded variables, linear rows and a
//! linear minimization objective. Tour-structured models additionally
//! implement [`TourProblem`], which lets the exact enumerator and the 2-opt
//! search work on tours directly and map every tour back to a full
//! assignment that [`check_witness`] can certify.

mod enumerate;
mod local;
mod lp;
mod model;

pub use enumerate::{solve_enumeration, DEFAULT_ENUMERATION_CAP};
pub use local::{solve_local_search, LocalSearchConfig};
pub use lp::{export_lp, read_lp, read_lp_file, write_lp};
pub use model::{
    check_witness, model_census, Census, ConstraintFamily, LinearConstraint, MilpModel, Sense, VarKind, VarTag,
    Variable, WitnessReport, FEASIBILITY_TOL,
};

use crate::tour::Tour;

/// Which backend produced a solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Enumeration,
    LocalSearch,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SolveMeta {
    pub backend: Backend,
    pub wall_ms: f64,
    /// Tour objective evaluations performed.
    pub evaluations: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub tour: Tour,
    pub objective: f64,
    /// Full variable assignment, indexed like `model.variables()`.
    pub assignment: Vec<f64>,
    pub meta: SolveMeta,
}

/// A model whose feasible points are exactly the directed tours (plus
/// dependent variables), with a cheap exact objective per tour.
pub trait TourProblem: Sync {
    fn model(&self) -> &MilpModel;

    fn n_nodes(&self) -> usize;

    /// Model objective at the best completion of `tour`.
    fn tour_cost(&self, tour: &Tour) -> f64;

    /// Arc cost used to seed constructive heuristics.
    fn arc_hint(&self, arc: usize) -> f64;

    /// Full assignment realizing `tour` with objective `tour_cost(tour)`.
    fn witness(&self, tour: &Tour) -> Vec<f64>;
}

/// Relative-or-absolute comparison used for objective values.
pub fn objectives_match(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * 1f64.max(a.abs()).max(b.abs())
}

#[cfg(test)]
pub(crate) mod testing {
    use super::{MilpModel, TourProblem};
    use crate::arcs::ArcSpace;
    use crate::tour::Tour;

    /// Plain directed TSP over an arc cost vector; the model holds only `x`.
    pub struct MatrixTsp {
        pub n: usize,
        pub costs: Vec<f64>,
        model: MilpModel,
    }

    impl MatrixTsp {
        pub fn new(n: usize, costs: Vec<f64>) -> Self {
            let mut model = MilpModel::new("matrix");
            for (a, i, j) in ArcSpace::new(n).iter() {
                let v = model.add_binary(format!("x_{}_{}", i + 1, j + 1));
                model.add_objective_term(v, costs[a]);
            }
            Self { n, costs, model }
        }

        /// Costs from a dense `n × n` matrix (diagonal ignored).
        pub fn from_matrix(m: &[&[f64]]) -> Self {
            let n = m.len();
            let costs = ArcSpace::new(n).iter().map(|(_, i, j)| m[i][j]).collect();
            Self::new(n, costs)
        }
    }

    impl TourProblem for MatrixTsp {
        fn model(&self) -> &MilpModel {
            &self.model
        }

        fn n_nodes(&self) -> usize {
            self.n
        }

        fn tour_cost(&self, tour: &Tour) -> f64 {
            tour.arcs().iter().map(|&a| self.costs[a]).sum()
        }

        fn arc_hint(&self, arc: usize) -> f64 {
            self.costs[arc]
        }

        fn witness(&self, tour: &Tour) -> Vec<f64> {
            tour.incidence()
        }
    }
}
