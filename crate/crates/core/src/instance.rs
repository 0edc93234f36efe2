//! The multi-path stochastic network and its cost tables.
//!
//! An [`Instance`] is a complete directed graph over planar nodes (node id 1
//! is the depot). Every ordered arc offers the same number of alternative
//! paths, and every path records one velocity per base scenario. Travel time
//! on a path is the Euclidean arc length divided by its velocity.

use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::arcs::ArcSpace;
use crate::error::{read_to_string, write_string, Error, Result};
use crate::provenance::Provenance;
use crate::rng;
use crate::scenario::{ScenarioLabel, ScenarioSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: u32,
    pub x: f64,
    pub y: f64,
    /// Free-form class label ("center", "suburban"); carried through, never used by the model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    name: String,
    nodes: Vec<Node>,
    paths_per_arc: usize,
    base_scenarios: usize,
    probabilities: Option<Vec<f64>>,
    /// `[arc][path][scenario]`
    velocities: Vec<f64>,
    distances: Vec<f64>,
    provenance: Option<Provenance>,
}

#[derive(Serialize, Deserialize)]
struct InstanceFile {
    name: String,
    nodes: Vec<Node>,
    paths_per_arc: usize,
    base_scenarios: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    probabilities: Option<Vec<f64>>,
    velocities: Map<String, Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<Provenance>,
}

pub(crate) fn arc_key(nodes: &[Node], from: usize, to: usize) -> String {
    format!("{}-{}", nodes[from].id, nodes[to].id)
}

/// Parses `{"i-j": [[v_p1_s1, ...], ...]}` into a dense `[arc][path][scenario]` table.
pub(crate) fn parse_arc_table(
    nodes: &[Node],
    map: &Map<String, Value>,
    paths: usize,
    scenarios: usize,
    field: &str,
) -> Result<Vec<f64>> {
    let space = ArcSpace::new(nodes.len());
    if map.len() != space.len() {
        return Err(Error::validation(
            field,
            format!("expected {} arcs, found {}", space.len(), map.len()),
        ));
    }
    let mut out = vec![0.0; space.len() * paths * scenarios];
    for (a, i, j) in space.iter() {
        let key = arc_key(nodes, i, j);
        let entry = map
            .get(&key)
            .ok_or_else(|| Error::validation(field, format!("missing arc {key}")))?;
        let rows: Vec<Vec<f64>> = serde_json::from_value(entry.clone())
            .map_err(|e| Error::Parse(format!("{field}[{key}]: {e}")))?;
        if rows.len() != paths {
            return Err(Error::validation(
                field,
                format!("arc {key} lists {} paths, expected {paths}", rows.len()),
            ));
        }
        for (p, row) in rows.iter().enumerate() {
            if row.len() != scenarios {
                return Err(Error::validation(
                    field,
                    format!(
                        "arc {key} path {} lists {} scenarios, expected {scenarios}",
                        p + 1,
                        row.len()
                    ),
                ));
            }
            for (s, &v) in row.iter().enumerate() {
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::validation(
                        field,
                        format!("arc {key} path {} scenario {}: velocity {v} must be positive", p + 1, s + 1),
                    ));
                }
                out[(a * paths + p) * scenarios + s] = v;
            }
        }
    }
    Ok(out)
}

pub(crate) fn write_arc_table(
    nodes: &[Node],
    table: impl Fn(usize, usize, usize) -> f64,
    paths: usize,
    scenarios: usize,
) -> Map<String, Value> {
    let space = ArcSpace::new(nodes.len());
    let mut map = Map::new();
    for (a, i, j) in space.iter() {
        let rows: Vec<Vec<f64>> = (0..paths)
            .map(|p| (0..scenarios).map(|s| table(a, p, s)).collect())
            .collect();
        map.insert(arc_key(nodes, i, j), serde_json::to_value(rows).expect("finite floats"));
    }
    map
}

fn validate_nodes(nodes: &[Node]) -> Result<()> {
    if nodes.len() < 3 {
        return Err(Error::validation("nodes", "at least 3 nodes are required"));
    }
    for (k, node) in nodes.iter().enumerate() {
        if node.id as usize != k + 1 {
            let msg = if k == 0 {
                "missing depot: the first node must have id 1".to_string()
            } else {
                format!("node ids must be 1..{} in order, found {} at position {}", nodes.len(), node.id, k + 1)
            };
            return Err(Error::validation("nodes", msg));
        }
        if !(node.x.is_finite() && node.y.is_finite()) {
            return Err(Error::validation("nodes", format!("node {} has non-finite coordinates", node.id)));
        }
    }
    Ok(())
}

pub(crate) fn validate_probabilities(probs: &[f64], field: &str) -> Result<()> {
    if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::validation(field, "probabilities must be finite and non-negative"));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-12 * probs.len().max(1) as f64 {
        return Err(Error::validation(field, format!("probabilities sum to {total}, not 1")));
    }
    Ok(())
}

impl Instance {
    /// Builds and validates an instance. `velocities` is laid out `[arc][path][scenario]`
    /// in canonical arc order.
    pub fn new(
        name: impl Into<String>,
        nodes: Vec<Node>,
        paths_per_arc: usize,
        base_scenarios: usize,
        velocities: Vec<f64>,
        probabilities: Option<Vec<f64>>,
    ) -> Result<Self> {
        validate_nodes(&nodes)?;
        if paths_per_arc == 0 {
            return Err(Error::validation("paths_per_arc", "must be at least 1"));
        }
        if base_scenarios == 0 {
            return Err(Error::validation("base_scenarios", "must be at least 1"));
        }
        let space = ArcSpace::new(nodes.len());
        let expected = space.len() * paths_per_arc * base_scenarios;
        if velocities.len() != expected {
            return Err(Error::Dimension {
                expected,
                actual: velocities.len(),
            });
        }
        if let Some(v) = velocities.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::validation("velocities", format!("velocity {v} must be positive")));
        }
        if let Some(p) = &probabilities {
            if p.len() != base_scenarios {
                return Err(Error::validation(
                    "probabilities",
                    format!("expected {base_scenarios} entries, got {}", p.len()),
                ));
            }
            validate_probabilities(p, "probabilities")?;
        }
        let distances = space
            .iter()
            .map(|(_, i, j)| (nodes[i].x - nodes[j].x).hypot(nodes[i].y - nodes[j].y))
            .collect();
        Ok(Self {
            name: name.into(),
            nodes,
            paths_per_arc,
            base_scenarios,
            probabilities,
            velocities,
            distances,
            provenance: None,
        })
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = Some(provenance);
        self
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: InstanceFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        validate_nodes(&file.nodes)?;
        let velocities = parse_arc_table(
            &file.nodes,
            &file.velocities,
            file.paths_per_arc,
            file.base_scenarios,
            "velocities",
        )?;
        let mut inst = Self::new(
            file.name,
            file.nodes,
            file.paths_per_arc,
            file.base_scenarios,
            velocities,
            file.probabilities,
        )?;
        inst.provenance = file.provenance;
        Ok(inst)
    }

    pub fn to_json(&self) -> String {
        let file = InstanceFile {
            name: self.name.clone(),
            nodes: self.nodes.clone(),
            paths_per_arc: self.paths_per_arc,
            base_scenarios: self.base_scenarios,
            probabilities: self.probabilities.clone(),
            velocities: write_arc_table(
                &self.nodes,
                |a, p, s| self.velocity(a, p, s),
                self.paths_per_arc,
                self.base_scenarios,
            ),
            provenance: self.provenance.clone(),
        };
        let mut text = serde_json::to_string_pretty(&file).expect("instance serializes");
        text.push('\n');
        text
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&read_to_string(path.as_ref())?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_string(path.as_ref(), &self.to_json())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn arcs(&self) -> ArcSpace {
        ArcSpace::new(self.nodes.len())
    }

    pub fn paths_per_arc(&self) -> usize {
        self.paths_per_arc
    }

    pub fn base_scenarios(&self) -> usize {
        self.base_scenarios
    }

    pub fn provenance(&self) -> Option<&Provenance> {
        self.provenance.as_ref()
    }

    /// Euclidean length of arc `arc`.
    pub fn distance(&self, arc: usize) -> f64 {
        self.distances[arc]
    }

    pub fn velocity(&self, arc: usize, path: usize, scenario: usize) -> f64 {
        self.velocities[(arc * self.paths_per_arc + path) * self.base_scenarios + scenario]
    }

    /// Base-scenario velocities of one `(arc, path)`.
    pub fn base_velocities(&self, arc: usize, path: usize) -> &[f64] {
        let start = (arc * self.paths_per_arc + path) * self.base_scenarios;
        &self.velocities[start..start + self.base_scenarios]
    }

    /// The base scenarios as a scenario set (uniform unless the file gives weights).
    pub fn base_scenario_set(&self) -> ScenarioSet {
        let arcs = self.arcs().len();
        let paths = self.paths_per_arc;
        let mut table = vec![0.0; self.base_scenarios * arcs * paths];
        for s in 0..self.base_scenarios {
            for a in 0..arcs {
                for p in 0..paths {
                    table[(s * arcs + a) * paths + p] = self.velocity(a, p, s);
                }
            }
        }
        let probs = self
            .probabilities
            .clone()
            .unwrap_or_else(|| vec![1.0 / self.base_scenarios as f64; self.base_scenarios]);
        ScenarioSet::from_parts(
            ScenarioLabel::Base,
            self.n_nodes(),
            paths,
            (0..self.base_scenarios as u64).collect(),
            probs,
            table,
        )
        .expect("base scenarios satisfy the set invariants")
    }
}

/// Parameters of the synthetic instance generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticParams {
    pub nodes: usize,
    pub paths: usize,
    pub base_scenarios: usize,
    pub v_min: f64,
    pub v_max: f64,
    /// Side length of the square the nodes are scattered in.
    pub extent: f64,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        Self {
            nodes: 10,
            paths: 3,
            base_scenarios: 20,
            v_min: 5.0,
            v_max: 15.0,
            extent: 100.0,
        }
    }
}

/// Random instance: nodes uniform in a square, velocities i.i.d. uniform in
/// `[v_min, v_max]` per `(arc, path, scenario)`. Nodes inside the central
/// half of the square are tagged "center", the rest "suburban".
pub fn synthetic(name: &str, params: &SyntheticParams, seed: u64) -> Result<Instance> {
    if !(params.v_min > 0.0 && params.v_max >= params.v_min && params.v_max.is_finite()) {
        return Err(Error::validation("velocity range", "need 0 < v_min <= v_max"));
    }
    if !(params.extent > 0.0 && params.extent.is_finite()) {
        return Err(Error::validation("extent", "must be positive"));
    }
    let mut coords = rng::substream(seed, 0);
    let lo = params.extent * 0.25;
    let hi = params.extent * 0.75;
    let nodes: Vec<Node> = (0..params.nodes)
        .map(|k| {
            let x = coords.random::<f64>() * params.extent;
            let y = coords.random::<f64>() * params.extent;
            let central = (lo..=hi).contains(&x) && (lo..=hi).contains(&y);
            Node {
                id: k as u32 + 1,
                x,
                y,
                tag: Some(if central { "center" } else { "suburban" }.to_string()),
            }
        })
        .collect();
    let arcs = ArcSpace::new(params.nodes).len();
    let mut speeds = rng::substream(seed, 1);
    let velocities = (0..arcs * params.paths * params.base_scenarios)
        .map(|_| {
            if params.v_max > params.v_min {
                speeds.random_range(params.v_min..params.v_max)
            } else {
                params.v_min
            }
        })
        .collect();
    Instance::new(name, nodes, params.paths, params.base_scenarios, velocities, None)
}

/// How the expected first-stage arc time `c̄` is formed from the scenario velocities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FirstStageRule {
    /// `c̄ = E_s[ d / E_p[v] ]`: distance over the path-averaged velocity,
    /// averaged over scenarios.
    #[default]
    HarmonicVelocity,
    /// `c̄ = E_s[ E_p[ d / v ] ]`: the plain mean travel time. Under this rule
    /// the scenario-weighted path-average deviation is exactly zero.
    MeanTravelTime,
}

/// First-stage costs `c̄` per arc and deviations `Δ` per `(arc, scenario, path)`
/// for one scenario set.
#[derive(Debug, Clone, PartialEq)]
pub struct CostTables {
    n_nodes: usize,
    n_paths: usize,
    n_scenarios: usize,
    c_bar: Vec<f64>,
    /// `[arc][scenario][path]`
    delta: Vec<f64>,
    probabilities: Vec<f64>,
    scenario_ids: Vec<u64>,
}

fn check_compatible(inst: &Instance, scen: &ScenarioSet) -> Result<()> {
    if scen.n_nodes() != inst.n_nodes() {
        return Err(Error::Dimension {
            expected: inst.n_nodes(),
            actual: scen.n_nodes(),
        });
    }
    if scen.n_paths() != inst.paths_per_arc() {
        return Err(Error::Dimension {
            expected: inst.paths_per_arc(),
            actual: scen.n_paths(),
        });
    }
    Ok(())
}

/// First-stage costs and deviations of `scen` (default first-stage rule).
pub fn compute_costs(inst: &Instance, scen: &ScenarioSet) -> Result<CostTables> {
    compute_costs_with_rule(inst, scen, FirstStageRule::default())
}

pub fn compute_costs_with_rule(inst: &Instance, scen: &ScenarioSet, rule: FirstStageRule) -> Result<CostTables> {
    check_compatible(inst, scen)?;
    let arcs = inst.arcs().len();
    let paths = inst.paths_per_arc();
    let c_bar = (0..arcs)
        .map(|a| {
            let d = inst.distance(a);
            (0..scen.len())
                .map(|s| {
                    let vs = scen.velocities(s, a);
                    let per_scenario = match rule {
                        FirstStageRule::HarmonicVelocity => d / (vs.iter().sum::<f64>() / paths as f64),
                        FirstStageRule::MeanTravelTime => vs.iter().map(|v| d / v).sum::<f64>() / paths as f64,
                    };
                    scen.probability(s) * per_scenario
                })
                .sum()
        })
        .collect();
    with_first_stage(inst, c_bar, scen)
}

/// Deviations of `scen` measured against a given first-stage cost vector.
///
/// Used to evaluate a tour on an out-of-sample pool while keeping the
/// first-stage costs of the set it was optimized on.
pub fn with_first_stage(inst: &Instance, c_bar: Vec<f64>, scen: &ScenarioSet) -> Result<CostTables> {
    check_compatible(inst, scen)?;
    let arcs = inst.arcs().len();
    if c_bar.len() != arcs {
        return Err(Error::Dimension {
            expected: arcs,
            actual: c_bar.len(),
        });
    }
    let paths = inst.paths_per_arc();
    let n_scen = scen.len();
    let mut delta = vec![0.0; arcs * n_scen * paths];
    for a in 0..arcs {
        let d = inst.distance(a);
        for s in 0..n_scen {
            let vs = scen.velocities(s, a);
            for p in 0..paths {
                delta[(a * n_scen + s) * paths + p] = d / vs[p] - c_bar[a];
            }
        }
    }
    Ok(CostTables {
        n_nodes: inst.n_nodes(),
        n_paths: paths,
        n_scenarios: n_scen,
        c_bar,
        delta,
        probabilities: scen.probabilities().to_vec(),
        scenario_ids: scen.ids().to_vec(),
    })
}

impl CostTables {
    /// Builds tables directly from `c̄` and `Δ` (`[arc][scenario][path]`).
    pub fn from_raw(
        n_nodes: usize,
        n_paths: usize,
        c_bar: Vec<f64>,
        delta: Vec<f64>,
        probabilities: Vec<f64>,
    ) -> Result<Self> {
        let arcs = ArcSpace::new(n_nodes).len();
        let n_scen = probabilities.len();
        if c_bar.len() != arcs {
            return Err(Error::Dimension {
                expected: arcs,
                actual: c_bar.len(),
            });
        }
        if delta.len() != arcs * n_scen * n_paths {
            return Err(Error::Dimension {
                expected: arcs * n_scen * n_paths,
                actual: delta.len(),
            });
        }
        validate_probabilities(&probabilities, "probabilities")?;
        if c_bar.iter().chain(&delta).any(|v| !v.is_finite()) {
            return Err(Error::validation("costs", "all entries must be finite"));
        }
        Ok(Self {
            n_nodes,
            n_paths,
            n_scenarios: n_scen,
            c_bar,
            delta,
            probabilities,
            scenario_ids: (0..n_scen as u64).collect(),
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn arcs(&self) -> ArcSpace {
        ArcSpace::new(self.n_nodes)
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn n_scenarios(&self) -> usize {
        self.n_scenarios
    }

    pub fn c_bar(&self) -> &[f64] {
        &self.c_bar
    }

    pub fn probability(&self, s: usize) -> f64 {
        self.probabilities[s]
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn scenario_ids(&self) -> &[u64] {
        &self.scenario_ids
    }

    pub fn delta(&self, arc: usize, s: usize, path: usize) -> f64 {
        self.delta[(arc * self.n_scenarios + s) * self.n_paths + path]
    }

    /// Deviations of all paths of `arc` under scenario `s`.
    #[inline]
    pub fn deltas(&self, arc: usize, s: usize) -> &[f64] {
        let start = (arc * self.n_scenarios + s) * self.n_paths;
        &self.delta[start..start + self.n_paths]
    }

    /// Cheapest path of `arc` under scenario `s`; ties go to the lowest index.
    #[inline]
    pub fn best_path(&self, arc: usize, s: usize) -> (usize, f64) {
        let ds = self.deltas(arc, s);
        let mut best = (0, ds[0]);
        for (p, &d) in ds.iter().enumerate().skip(1) {
            if d < best.1 {
                best = (p, d);
            }
        }
        best
    }

    /// Expected adaptive arc cost `c̄ + Σ_s π_s min_p Δ`.
    pub fn adaptive_arc_cost(&self, arc: usize) -> f64 {
        self.c_bar[arc] + self.expected_min_deviation(arc)
    }

    /// `Σ_s π_s min_p Δ` for one arc.
    pub fn expected_min_deviation(&self, arc: usize) -> f64 {
        (0..self.n_scenarios)
            .map(|s| self.probabilities[s] * self.best_path(arc, s).1)
            .sum()
    }

    /// `min_p Σ_s π_s Δ` for one arc, with the minimizing path (lowest index on ties).
    pub fn min_expected_deviation(&self, arc: usize) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for p in 0..self.n_paths {
            let mean: f64 = (0..self.n_scenarios)
                .map(|s| self.probabilities[s] * self.delta(arc, s, p))
                .sum();
            if mean < best.1 {
                best = (p, mean);
            }
        }
        best
    }
}
