//! Concrete MILP models for the deterministic equivalent (DE), the
//! surrogate model with an embedded ReLU network, and the deterministic
//! approximation (DA).
//!
//! All three share the flow-based tour block: binaries `x_i_j`, flows
//! `phi_i_j ∈ [0, N]`, degree rows, flow balance, the source row and the
//! linking rows `phi ≤ N·x`. Names use 1-based node ids.

use crate::arcs::ArcSpace;
use crate::error::{Error, Result};
use crate::instance::{CostTables, Instance};
use crate::milp::{MilpModel, Sense, TourProblem};
use crate::neural::{Input, Network};
use crate::recourse::arcs_expected_recourse;
use crate::tour::Tour;

/// Relative outward widening applied to interval bounds.
const BOUND_SLACK: f64 = 1e-9;

/// Indices of the tour block inside a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TourBlock {
    pub n: usize,
    /// `x` of arc `a` is variable `x0 + a`.
    pub x0: usize,
    /// `phi` of arc `a` is variable `phi0 + a`.
    pub phi0: usize,
}

impl TourBlock {
    fn add(model: &mut MilpModel, n: usize, objective: &[f64]) -> Self {
        let space = ArcSpace::new(n);
        let x0 = model.variables().len();
        for (a, i, j) in space.iter() {
            let v = model.add_binary(format!("x_{}_{}", i + 1, j + 1));
            if objective[a] != 0.0 {
                model.add_objective_term(v, objective[a]);
            }
        }
        let phi0 = model.variables().len();
        for (_, i, j) in space.iter() {
            model.add_continuous(format!("phi_{}_{}", i + 1, j + 1), 0.0, n as f64);
        }
        for i in 0..n {
            let terms = space.outgoing(i).map(|a| (x0 + a, 1.0)).collect();
            model.add_constraint(format!("out_{}", i + 1), terms, Sense::Eq, 1.0);
        }
        for j in 0..n {
            let terms = space.incoming(j).map(|a| (x0 + a, 1.0)).collect();
            model.add_constraint(format!("in_{}", j + 1), terms, Sense::Eq, 1.0);
        }
        for j in 0..n {
            let mut terms: Vec<(usize, f64)> = space.incoming(j).map(|a| (phi0 + a, 1.0)).collect();
            if j > 0 {
                terms.extend(space.outgoing(j).map(|a| (phi0 + a, -1.0)));
            }
            model.add_constraint(format!("flow_{}", j + 1), terms, Sense::Eq, 1.0);
        }
        let terms = space.outgoing(0).map(|a| (phi0 + a, 1.0)).collect();
        model.add_constraint("source", terms, Sense::Eq, n as f64);
        for (a, i, j) in space.iter() {
            model.add_constraint(
                format!("link_{}_{}", i + 1, j + 1),
                vec![(phi0 + a, 1.0), (x0 + a, -(n as f64))],
                Sense::Le,
                0.0,
            );
        }
        Self { n, x0, phi0 }
    }

    /// Writes `x` and the constructive flow (`N − t` on the t-th arc) into `values`.
    pub fn fill_witness(&self, tour: &Tour, values: &mut [f64]) {
        let space = ArcSpace::new(self.n);
        let perm = tour.perm();
        for t in 0..self.n {
            let a = space.index(perm[t], perm[(t + 1) % self.n]);
            values[self.x0 + a] = 1.0;
            values[self.phi0 + a] = (self.n - t) as f64;
        }
    }
}

/// Sum of `costs[a]` over the (sorted) tour arcs.
fn arc_sum(arcs: &[usize], costs: &[f64]) -> f64 {
    arcs.iter().map(|&a| costs[a]).sum()
}

fn check_dims(inst: &Instance, costs: &CostTables) -> Result<()> {
    if inst.n_nodes() != costs.n_nodes() {
        return Err(Error::Dimension {
            expected: inst.n_nodes(),
            actual: costs.n_nodes(),
        });
    }
    if inst.paths_per_arc() != costs.n_paths() {
        return Err(Error::Dimension {
            expected: inst.paths_per_arc(),
            actual: costs.n_paths(),
        });
    }
    Ok(())
}

/// Deterministic equivalent with one path-choice binary per (arc, path, scenario).
#[derive(Debug, Clone)]
pub struct DeFormulation<'a> {
    model: MilpModel,
    costs: &'a CostTables,
    block: TourBlock,
    y0: usize,
}

pub fn build_de<'a>(inst: &Instance, costs: &'a CostTables) -> Result<DeFormulation<'a>> {
    check_dims(inst, costs)?;
    let n = inst.n_nodes();
    let mut model = MilpModel::new(format!("{}-de", inst.name()));
    let block = TourBlock::add(&mut model, n, costs.c_bar());
    let y0 = model.variables().len();
    let (np, ns) = (costs.n_paths(), costs.n_scenarios());
    for (a, i, j) in costs.arcs().iter() {
        for s in 0..ns {
            let mut row = Vec::with_capacity(np + 1);
            for p in 0..np {
                let v = model.add_binary(format!("y_{}_{}_p{}_s{}", i + 1, j + 1, p + 1, s + 1));
                debug_assert_eq!(v, y0 + (a * ns + s) * np + p);
                let w = costs.probability(s) * costs.delta(a, s, p);
                if w != 0.0 {
                    model.add_objective_term(v, w);
                }
                row.push((v, 1.0));
            }
            row.push((block.x0 + a, -1.0));
            model.add_constraint(format!("path_{}_{}_s{}", i + 1, j + 1, s + 1), row, Sense::Eq, 0.0);
        }
    }
    Ok(DeFormulation { model, costs, block, y0 })
}

impl DeFormulation<'_> {
    pub fn block(&self) -> TourBlock {
        self.block
    }

    pub fn costs(&self) -> &CostTables {
        self.costs
    }
}

impl TourProblem for DeFormulation<'_> {
    fn model(&self) -> &MilpModel {
        &self.model
    }

    fn n_nodes(&self) -> usize {
        self.block.n
    }

    /// `c̄ᵀx + Σ_s π_s Q(x, ξ_s)`, evaluated scenario by scenario.
    fn tour_cost(&self, tour: &Tour) -> f64 {
        arc_sum(tour.arcs(), self.costs.c_bar()) + arcs_expected_recourse(tour.arcs(), self.costs)
    }

    fn arc_hint(&self, arc: usize) -> f64 {
        self.costs.adaptive_arc_cost(arc)
    }

    fn witness(&self, tour: &Tour) -> Vec<f64> {
        let mut values = vec![0.0; self.model.variables().len()];
        self.block.fill_witness(tour, &mut values);
        let (np, ns) = (self.costs.n_paths(), self.costs.n_scenarios());
        for &a in tour.arcs() {
            for s in 0..ns {
                let p = self.costs.best_path(a, s).0;
                values[self.y0 + (a * ns + s) * np + p] = 1.0;
            }
        }
        values
    }
}

/// Tour model with the network's forward pass embedded as big-M ReLU rows.
#[derive(Debug, Clone)]
pub struct SurrogateFormulation<'a> {
    model: MilpModel,
    costs: &'a CostTables,
    net: &'a Network,
    block: TourBlock,
    /// Pre-activation bounds `[L, U]` per hidden layer and neuron.
    bounds: Vec<Vec<(f64, f64)>>,
    /// First `hp` variable of each hidden layer; `hn` and `z` follow in blocks.
    layer_vars: Vec<usize>,
    yhat: usize,
}

fn widen(lo: f64, hi: f64) -> (f64, f64) {
    (lo - BOUND_SLACK * (1.0 + lo.abs()), hi + BOUND_SLACK * (1.0 + hi.abs()))
}

/// Interval propagation of the hidden pre-activations over `x ∈ [0, 1]^d`.
pub fn interval_bounds(net: &Network) -> Result<Vec<Vec<(f64, f64)>>> {
    let layers = net.layers();
    let mut input_hi = vec![1.0; net.input_dim()];
    let mut out = Vec::with_capacity(layers.len() - 1);
    for layer in &layers[..layers.len() - 1] {
        let mut bounds = Vec::with_capacity(layer.outputs());
        for j in 0..layer.outputs() {
            let mut lo = layer.bias()[j];
            let mut hi = layer.bias()[j];
            for (w, &u) in layer.row(j).iter().zip(&input_hi) {
                if *w < 0.0 {
                    lo += w * u;
                } else {
                    hi += w * u;
                }
            }
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::Runtime(format!("non-finite pre-activation bound for neuron {j}")));
            }
            bounds.push(widen(lo, hi));
        }
        input_hi = bounds.iter().map(|b| b.1.max(0.0)).collect();
        out.push(bounds);
    }
    Ok(out)
}

pub fn build_surrogate<'a>(inst: &Instance, costs: &'a CostTables, net: &'a Network) -> Result<SurrogateFormulation<'a>> {
    check_dims(inst, costs)?;
    let n = inst.n_nodes();
    let space = ArcSpace::new(n);
    if net.input_dim() != space.len() {
        return Err(Error::Dimension {
            expected: space.len(),
            actual: net.input_dim(),
        });
    }
    let bounds = interval_bounds(net)?;
    let mut model = MilpModel::new(format!("{}-surrogate", inst.name()));
    let block = TourBlock::add(&mut model, n, costs.c_bar());
    let layers = net.layers();
    let mut layer_vars = Vec::with_capacity(bounds.len());
    let mut prev: Vec<usize> = (0..space.len()).map(|a| block.x0 + a).collect();
    for (l, layer_bounds) in bounds.iter().enumerate() {
        let tag = l + 1;
        let width = layer_bounds.len();
        let hp0 = model.variables().len();
        for (j, &(_, hi)) in layer_bounds.iter().enumerate() {
            model.add_continuous(format!("hp_l{tag}_n{}", j + 1), 0.0, hi.max(0.0));
        }
        for (j, &(lo, _)) in layer_bounds.iter().enumerate() {
            model.add_continuous(format!("hn_l{tag}_n{}", j + 1), 0.0, (-lo).max(0.0));
        }
        for j in 0..width {
            model.add_binary(format!("z_l{tag}_n{}", j + 1));
        }
        let (hn0, z0) = (hp0 + width, hp0 + 2 * width);
        let layer = &layers[l];
        for j in 0..width {
            let mut terms: Vec<(usize, f64)> = layer
                .row(j)
                .iter()
                .zip(&prev)
                .filter(|(w, _)| **w != 0.0)
                .map(|(&w, &v)| (v, w))
                .collect();
            terms.push((hp0 + j, -1.0));
            terms.push((hn0 + j, 1.0));
            model.add_constraint(format!("neuron_l{tag}_n{}", j + 1), terms, Sense::Eq, -layer.bias()[j]);
        }
        for (j, &(lo, hi)) in layer_bounds.iter().enumerate() {
            let u = hi.max(0.0);
            model.add_constraint(
                format!("act_l{tag}_n{}", j + 1),
                vec![(hp0 + j, 1.0), (z0 + j, u)],
                Sense::Le,
                u,
            );
            let m = (-lo).max(0.0);
            model.add_constraint(
                format!("inact_l{tag}_n{}", j + 1),
                vec![(hn0 + j, 1.0), (z0 + j, -m)],
                Sense::Le,
                0.0,
            );
        }
        layer_vars.push(hp0);
        prev = (hp0..hp0 + width).collect();
    }
    let (w, b) = net.folded_output();
    let yhat = model.add_continuous("yhat", f64::NEG_INFINITY, f64::INFINITY);
    let mut terms: Vec<(usize, f64)> = w.iter().zip(&prev).filter(|(w, _)| **w != 0.0).map(|(&w, &v)| (v, w)).collect();
    terms.push((yhat, -1.0));
    model.add_constraint("output", terms, Sense::Eq, -b);
    model.add_objective_term(yhat, 1.0);
    Ok(SurrogateFormulation {
        model,
        costs,
        net,
        block,
        bounds,
        layer_vars,
        yhat,
    })
}

impl SurrogateFormulation<'_> {
    pub fn block(&self) -> TourBlock {
        self.block
    }

    pub fn bounds(&self) -> &[Vec<(f64, f64)>] {
        &self.bounds
    }

    pub fn network(&self) -> &Network {
        self.net
    }
}

impl TourProblem for SurrogateFormulation<'_> {
    fn model(&self) -> &MilpModel {
        &self.model
    }

    fn n_nodes(&self) -> usize {
        self.block.n
    }

    /// `c̄ᵀx + forward(net, x)`.
    fn tour_cost(&self, tour: &Tour) -> f64 {
        arc_sum(tour.arcs(), self.costs.c_bar()) + self.net.forward_active(tour.arcs())
    }

    fn arc_hint(&self, arc: usize) -> f64 {
        self.costs.c_bar()[arc]
    }

    /// Forward-pass witness; `z = 1` when the pre-activation is `≤ 0`.
    fn witness(&self, tour: &Tour) -> Vec<f64> {
        let mut values = vec![0.0; self.model.variables().len()];
        self.block.fill_witness(tour, &mut values);
        let pre = self.net.pre_activations(Input::Active(tour.arcs()));
        for (l, &hp0) in self.layer_vars.iter().enumerate() {
            let width = pre[l].len();
            for (j, &p) in pre[l].iter().enumerate() {
                values[hp0 + j] = p.max(0.0);
                values[hp0 + width + j] = (-p).max(0.0);
                values[hp0 + 2 * width + j] = if p <= 0.0 { 1.0 } else { 0.0 };
            }
        }
        let last = &pre[pre.len() - 2];
        let (w, b) = self.net.folded_output();
        values[self.yhat] = w.iter().zip(last).map(|(w, p)| w * p.max(0.0)).sum::<f64>() + b;
        values
    }
}

/// Deterministic TSP over `c_DA = c̄ + min_p Σ_s π_s Δ`.
#[derive(Debug, Clone)]
pub struct DaFormulation {
    model: MilpModel,
    block: TourBlock,
    arc_costs: Vec<f64>,
    paths: Vec<usize>,
}

pub fn build_da(inst: &Instance, costs: &CostTables) -> Result<DaFormulation> {
    check_dims(inst, costs)?;
    let n = inst.n_nodes();
    let (paths, arc_costs): (Vec<usize>, Vec<f64>) = (0..costs.arcs().len())
        .map(|a| {
            let (p, dev) = costs.min_expected_deviation(a);
            (p, costs.c_bar()[a] + dev)
        })
        .unzip();
    let mut model = MilpModel::new(format!("{}-da", inst.name()));
    let block = TourBlock::add(&mut model, n, &arc_costs);
    Ok(DaFormulation {
        model,
        block,
        arc_costs,
        paths,
    })
}

impl DaFormulation {
    pub fn block(&self) -> TourBlock {
        self.block
    }

    /// `c_DA` per arc, canonical arc order.
    pub fn arc_costs(&self) -> &[f64] {
        &self.arc_costs
    }

    /// Path fixed in advance on every arc (best by expectation).
    pub fn paths(&self) -> &[usize] {
        &self.paths
    }
}

impl TourProblem for DaFormulation {
    fn model(&self) -> &MilpModel {
        &self.model
    }

    fn n_nodes(&self) -> usize {
        self.block.n
    }

    fn tour_cost(&self, tour: &Tour) -> f64 {
        arc_sum(tour.arcs(), &self.arc_costs)
    }

    fn arc_hint(&self, arc: usize) -> f64 {
        self.arc_costs[arc]
    }

    fn witness(&self, tour: &Tour) -> Vec<f64> {
        let mut values = vec![0.0; self.model.variables().len()];
        self.block.fill_witness(tour, &mut values);
        values
    }
}
