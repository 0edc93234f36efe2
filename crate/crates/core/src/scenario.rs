//! Scenario pools: weighted travel-velocity realizations over every `(arc, path)`.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::arcs::ArcSpace;
use crate::error::{read_to_string, write_string, Error, Result};
use crate::instance::{parse_arc_table, validate_probabilities, write_arc_table, Instance, Node};
use crate::provenance::{sha256_hex, Provenance};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioLabel {
    Train,
    OutOfSample,
    Base,
    Custom,
}

/// How expanded scenarios are drawn from the base scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpansionMode {
    /// Each `(arc, path)` resamples its own base velocities independently.
    #[default]
    Independent,
    /// Each expanded scenario copies one whole base scenario (keeps cross-arc correlation).
    Rowwise,
}

impl std::str::FromStr for ExpansionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "independent" => Ok(Self::Independent),
            "rowwise" => Ok(Self::Rowwise),
            other => Err(Error::validation("mode", format!("unknown expansion mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PoolOrigin {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_instance: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<ExpansionMode>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet {
    label: ScenarioLabel,
    n_nodes: usize,
    n_paths: usize,
    /// Scenario identities; stable across partitioning and subsampling.
    ids: Vec<u64>,
    probabilities: Vec<f64>,
    /// `[scenario][arc][path]`
    velocities: Vec<f64>,
    origin: PoolOrigin,
    provenance: Option<Provenance>,
}

#[derive(Serialize, Deserialize)]
struct ScenarioFile {
    label: ScenarioLabel,
    #[serde(flatten)]
    origin: PoolOrigin,
    nodes: usize,
    paths_per_arc: usize,
    scenarios: usize,
    ids: Vec<u64>,
    probabilities: Vec<f64>,
    velocities: Map<String, Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<Provenance>,
}

fn numbered_nodes(n: usize) -> Vec<Node> {
    (0..n)
        .map(|k| Node {
            id: k as u32 + 1,
            x: 0.0,
            y: 0.0,
            tag: None,
        })
        .collect()
}

impl ScenarioSet {
    pub fn from_parts(
        label: ScenarioLabel,
        n_nodes: usize,
        n_paths: usize,
        ids: Vec<u64>,
        probabilities: Vec<f64>,
        velocities: Vec<f64>,
    ) -> Result<Self> {
        let count = ids.len();
        if count == 0 {
            return Err(Error::validation("scenarios", "a scenario set needs at least one scenario"));
        }
        if probabilities.len() != count {
            return Err(Error::validation(
                "probabilities",
                format!("expected {count} entries, got {}", probabilities.len()),
            ));
        }
        validate_probabilities(&probabilities, "probabilities")?;
        let expected = count * ArcSpace::new(n_nodes).len() * n_paths;
        if velocities.len() != expected {
            return Err(Error::Dimension {
                expected,
                actual: velocities.len(),
            });
        }
        if let Some(v) = velocities.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::validation("velocities", format!("velocity {v} must be positive")));
        }
        let unique: HashSet<_> = ids.iter().collect();
        if unique.len() != count {
            return Err(Error::validation("ids", "scenario ids must be unique"));
        }
        Ok(Self {
            label,
            n_nodes,
            n_paths,
            ids,
            probabilities,
            velocities,
            origin: PoolOrigin::default(),
            provenance: None,
        })
    }

    pub fn with_origin(mut self, origin: PoolOrigin) -> Self {
        self.origin = origin;
        self
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = Some(provenance);
        self
    }

    pub fn label(&self) -> ScenarioLabel {
        self.label
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn probability(&self, s: usize) -> f64 {
        self.probabilities[s]
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn origin(&self) -> &PoolOrigin {
        &self.origin
    }

    /// Path velocities of `arc` in scenario `s`.
    #[inline]
    pub fn velocities(&self, s: usize, arc: usize) -> &[f64] {
        let arcs = ArcSpace::new(self.n_nodes).len();
        let start = (s * arcs + arc) * self.n_paths;
        &self.velocities[start..start + self.n_paths]
    }

    /// Stable digest of the identities and contents, used to prove two arms saw the same pool.
    pub fn identity_hash(&self) -> String {
        let mut bytes = Vec::with_capacity(self.ids.len() * 8 + self.velocities.len() * 8);
        for id in &self.ids {
            bytes.extend_from_slice(&id.to_le_bytes());
        }
        for v in &self.velocities {
            bytes.extend_from_slice(&v.to_bits().to_le_bytes());
        }
        sha256_hex(&bytes)[..16].to_string()
    }

    fn select(&self, label: ScenarioLabel, positions: &[usize]) -> ScenarioSet {
        let block = ArcSpace::new(self.n_nodes).len() * self.n_paths;
        let mut velocities = Vec::with_capacity(positions.len() * block);
        for &s in positions {
            velocities.extend_from_slice(&self.velocities[s * block..(s + 1) * block]);
        }
        ScenarioSet {
            label,
            n_nodes: self.n_nodes,
            n_paths: self.n_paths,
            ids: positions.iter().map(|&s| self.ids[s]).collect(),
            probabilities: vec![1.0 / positions.len() as f64; positions.len()],
            velocities,
            origin: self.origin.clone(),
            provenance: None,
        }
    }

    /// `count` scenarios drawn without replacement, re-weighted uniformly.
    /// Returns the set unchanged when `count` equals its size.
    pub fn subsample(&self, count: usize, seed: u64) -> Result<ScenarioSet> {
        if count == 0 || count > self.len() {
            return Err(Error::Size(format!(
                "cannot draw {count} scenarios from a set of {}",
                self.len()
            )));
        }
        if count == self.len() {
            return Ok(self.clone());
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut rng::seeded(seed));
        let mut chosen = order[..count].to_vec();
        chosen.sort_unstable();
        Ok(self.select(self.label, &chosen))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ScenarioFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if file.ids.len() != file.scenarios {
            return Err(Error::validation(
                "ids",
                format!("expected {} ids, got {}", file.scenarios, file.ids.len()),
            ));
        }
        let nodes = numbered_nodes(file.nodes);
        let per_arc = parse_arc_table(&nodes, &file.velocities, file.paths_per_arc, file.scenarios, "velocities")?;
        let arcs = ArcSpace::new(file.nodes).len();
        let paths = file.paths_per_arc;
        let mut table = vec![0.0; per_arc.len()];
        for a in 0..arcs {
            for p in 0..paths {
                for s in 0..file.scenarios {
                    table[(s * arcs + a) * paths + p] = per_arc[(a * paths + p) * file.scenarios + s];
                }
            }
        }
        let mut set = Self::from_parts(file.label, file.nodes, paths, file.ids, file.probabilities, table)?;
        set.origin = file.origin;
        set.provenance = file.provenance;
        Ok(set)
    }

    pub fn to_json(&self) -> String {
        let nodes = numbered_nodes(self.n_nodes);
        let file = ScenarioFile {
            label: self.label,
            origin: self.origin.clone(),
            nodes: self.n_nodes,
            paths_per_arc: self.n_paths,
            scenarios: self.len(),
            ids: self.ids.clone(),
            probabilities: self.probabilities.clone(),
            velocities: write_arc_table(&nodes, |a, p, s| self.velocities(s, a)[p], self.n_paths, self.len()),
            provenance: self.provenance.clone(),
        };
        let mut text = serde_json::to_string_pretty(&file).expect("scenario set serializes");
        text.push('\n');
        text
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&read_to_string(path.as_ref())?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_string(path.as_ref(), &self.to_json())
    }
}

/// Expands the base scenarios of `inst` into `target_count` equiprobable
/// scenarios by resampling the empirical velocity distribution.
///
/// In [`ExpansionMode::Independent`] the pair `(arc, path)` draws from
/// substream `arc * paths + path`, so the result does not depend on how the
/// pairs are scheduled across threads.
pub fn expand(inst: &Instance, target_count: usize, seed: u64, mode: ExpansionMode) -> Result<ScenarioSet> {
    if target_count == 0 {
        return Err(Error::Size("target_count must be at least 1".into()));
    }
    let arcs = inst.arcs().len();
    let paths = inst.paths_per_arc();
    let base = inst.base_scenarios();
    let mut table = vec![0.0; target_count * arcs * paths];
    match mode {
        ExpansionMode::Independent => {
            let columns: Vec<Vec<f64>> = (0..arcs * paths)
                .into_par_iter()
                .map(|pair| {
                    let (a, p) = (pair / paths, pair % paths);
                    let observed = inst.base_velocities(a, p);
                    let mut stream = rng::substream(seed, pair as u64);
                    (0..target_count).map(|_| observed[stream.random_range(0..base)]).collect()
                })
                .collect();
            for (pair, column) in columns.iter().enumerate() {
                for (s, &v) in column.iter().enumerate() {
                    table[s * arcs * paths + pair] = v;
                }
            }
        }
        ExpansionMode::Rowwise => {
            let mut stream = rng::substream(seed, u64::MAX);
            for s in 0..target_count {
                let row = stream.random_range(0..base);
                for a in 0..arcs {
                    for p in 0..paths {
                        table[(s * arcs + a) * paths + p] = inst.velocity(a, p, row);
                    }
                }
            }
        }
    }
    let set = ScenarioSet::from_parts(
        ScenarioLabel::Custom,
        inst.n_nodes(),
        paths,
        (0..target_count as u64).collect(),
        vec![1.0 / target_count as f64; target_count],
        table,
    )?;
    Ok(set.with_origin(PoolOrigin {
        source_instance: Some(inst.name().to_string()),
        seed: Some(seed),
        mode: Some(mode),
    }))
}

/// Random split without replacement into `(train, out_of_sample)`, both uniform.
pub fn partition(pool: &ScenarioSet, train_count: usize, seed: u64) -> Result<(ScenarioSet, ScenarioSet)> {
    if train_count == 0 || train_count >= pool.len() {
        return Err(Error::Size(format!(
            "train_count must be in 1..{}, got {train_count}",
            pool.len()
        )));
    }
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.shuffle(&mut rng::seeded(seed));
    let (train, oos) = order.split_at_mut(train_count);
    train.sort_unstable();
    oos.sort_unstable();
    Ok((
        pool.select(ScenarioLabel::Train, train),
        pool.select(ScenarioLabel::OutOfSample, oos),
    ))
}
