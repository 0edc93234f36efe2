//! The second-stage recourse function and `(tour, expected recourse)` datasets.
//!
//! Once a scenario is revealed, the second stage picks exactly one path per
//! tour arc. Nothing couples path choices across arcs, so the optimum is the
//! per-arc minimum deviation, and no assignment problem is ever formed.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{read_to_string, write_string, Error, Result};
use crate::instance::CostTables;
use crate::tour::{self, Tour};

/// `Q(x, ξ_s) = Σ_{(i,j) ∈ tour} min_p Δ_ij^ps`.
pub fn recourse_value(tour: &Tour, costs: &CostTables, s: usize) -> f64 {
    arcs_recourse(tour.arcs(), costs, s)
}

#[inline]
pub(crate) fn arcs_recourse(arcs: &[usize], costs: &CostTables, s: usize) -> f64 {
    arcs.iter().map(|&a| costs.best_path(a, s).1).sum()
}

/// Path chosen on every tour arc (in `tour.arcs()` order) under scenario `s`.
pub fn path_choices(tour: &Tour, costs: &CostTables, s: usize) -> Vec<usize> {
    tour.arcs().iter().map(|&a| costs.best_path(a, s).0).collect()
}

/// `Q̄(x) = Σ_s π_s Q(x, ξ_s)` over the scenarios the tables were built from.
pub fn expected_recourse(tour: &Tour, costs: &CostTables) -> f64 {
    arcs_expected_recourse(tour.arcs(), costs)
}

pub(crate) fn arcs_expected_recourse(arcs: &[usize], costs: &CostTables) -> f64 {
    (0..costs.n_scenarios())
        .map(|s| costs.probability(s) * arcs_recourse(arcs, costs, s))
        .sum()
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DatasetProvenance {
    pub instance: String,
    pub scenario_set: String,
    pub seed: u64,
    /// Any further `# key=value` lines (tool version, input digests).
    pub extra: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub tour: Tour,
    pub q_bar: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n_nodes: usize,
    records: Vec<Record>,
    provenance: DatasetProvenance,
}

impl Dataset {
    pub fn new(n_nodes: usize, records: Vec<Record>, provenance: DatasetProvenance) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::validation("records", "a dataset needs at least one record"));
        }
        for (k, r) in records.iter().enumerate() {
            if r.tour.n() != n_nodes {
                return Err(Error::validation("perm", format!("record {k} has {} nodes, expected {n_nodes}", r.tour.n())));
            }
            if !r.q_bar.is_finite() {
                return Err(Error::validation("q_bar", format!("record {k} is not finite")));
            }
        }
        Ok(Self {
            n_nodes,
            records,
            provenance,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn provenance(&self) -> &DatasetProvenance {
        &self.provenance
    }

    /// Splits off the last `ceil(fraction * len)` records after a seeded shuffle.
    pub fn split(&self, holdout_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(0.0..1.0).contains(&holdout_fraction) || holdout_fraction == 0.0 {
            return Err(Error::validation("holdout_fraction", "must lie in (0, 1)"));
        }
        let held = ((self.len() as f64) * holdout_fraction).ceil() as usize;
        if held == 0 || held >= self.len() {
            return Err(Error::Size(format!("cannot hold out {held} of {} records", self.len())));
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        use rand::seq::SliceRandom;
        order.shuffle(&mut crate::rng::seeded(seed));
        let pick = |idx: &[usize]| Dataset {
            n_nodes: self.n_nodes,
            records: idx.iter().map(|&k| self.records[k].clone()).collect(),
            provenance: self.provenance.clone(),
        };
        let (keep, hold) = order.split_at(self.len() - held);
        Ok((pick(keep), pick(hold)))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let p = &self.provenance;
        writeln!(out, "# instance={}", p.instance).unwrap();
        writeln!(out, "# scenario_set={}", p.scenario_set).unwrap();
        writeln!(out, "# seed={}", p.seed).unwrap();
        writeln!(out, "# k={}", self.len()).unwrap();
        for line in &p.extra {
            writeln!(out, "{line}").unwrap();
        }
        out.push_str("perm,q_bar\n");
        for r in &self.records {
            writeln!(out, "{},{}", r.tour, r.q_bar).unwrap();
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut provenance = DatasetProvenance::default();
        let mut records = Vec::new();
        let mut header_seen = false;
        let mut declared_k = None;
        for (lineno, line) in text.lines().enumerate() {
            if let Some(comment) = line.strip_prefix('#') {
                let body = comment.trim();
                match body.split_once('=') {
                    Some(("instance", v)) => provenance.instance = v.to_string(),
                    Some(("scenario_set", v)) => provenance.scenario_set = v.to_string(),
                    Some(("seed", v)) => {
                        provenance.seed = v.parse().map_err(|_| Error::Parse(format!("line {}: bad seed", lineno + 1)))?
                    }
                    Some(("k", v)) => {
                        declared_k = Some(v.parse::<usize>().map_err(|_| Error::Parse(format!("line {}: bad k", lineno + 1)))?)
                    }
                    _ => provenance.extra.push(line.to_string()),
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            if !header_seen {
                if line.trim() != "perm,q_bar" {
                    return Err(Error::Parse(format!("line {}: expected header `perm,q_bar`", lineno + 1)));
                }
                header_seen = true;
                continue;
            }
            let (perm, q) = line
                .split_once(',')
                .ok_or_else(|| Error::Parse(format!("line {}: expected two columns", lineno + 1)))?;
            let q_bar = q
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("line {}: bad q_bar `{q}`", lineno + 1)))?;
            records.push(Record {
                tour: Tour::parse(perm)?,
                q_bar,
            });
        }
        if let Some(k) = declared_k {
            if k != records.len() {
                return Err(Error::validation("k", format!("header declares {k} records, file has {}", records.len())));
            }
        }
        let n = records.first().map(|r| r.tour.n()).unwrap_or(0);
        Self::new(n, records, provenance)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv(&read_to_string(path.as_ref())?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_string(path.as_ref(), &self.to_csv())
    }
}

/// `k` uniformly sampled tours labelled with their expected recourse.
///
/// Tour `j` comes from substream `j` of `seed`, so the dataset is identical
/// for any number of worker threads.
pub fn generate_dataset(costs: &CostTables, k: usize, seed: u64, provenance: DatasetProvenance) -> Result<Dataset> {
    if k == 0 {
        return Err(Error::Size("K must be at least 1".into()));
    }
    let n = costs.n_nodes();
    let records = (0..k)
        .into_par_iter()
        .map(|j| {
            let tour = tour::sample_one(n, seed, j as u64);
            let q_bar = expected_recourse(&tour, costs);
            Record { tour, q_bar }
        })
        .collect();
    let provenance = DatasetProvenance { seed, ..provenance };
    Dataset::new(n, records, provenance)
}
