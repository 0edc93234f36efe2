//! Directed Hamiltonian tours in two encodings: a depot-rooted node
//! permutation and a binary edge-incidence vector over the ordered arcs.

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::arcs::ArcSpace;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Tour {
    /// 0-based node indices, `perm[0] == 0` (the depot).
    perm: Vec<usize>,
    /// Incidence support: the tour's arc indices in ascending order.
    arcs: Vec<usize>,
}

impl Tour {
    /// Builds a tour from a 0-based, depot-first permutation.
    pub fn from_permutation(perm: Vec<usize>) -> Result<Self> {
        let n = perm.len();
        if n < 2 {
            return Err(Error::InvalidTour("a tour needs at least 2 nodes".into()));
        }
        if perm[0] != 0 {
            return Err(Error::InvalidTour(format!("tour must start at the depot, starts at node {}", perm[0] + 1)));
        }
        let mut seen = vec![false; n];
        for &v in &perm {
            if v >= n {
                return Err(Error::InvalidTour(format!("node {} out of range 1..{n}", v + 1)));
            }
            if std::mem::replace(&mut seen[v], true) {
                return Err(Error::InvalidTour(format!("node {} visited twice", v + 1)));
            }
        }
        let arcs = tour_arcs(&perm);
        Ok(Self { perm, arcs })
    }

    /// Builds a tour from 1-based node ids.
    pub fn from_ids(ids: &[u32]) -> Result<Self> {
        if ids.contains(&0) {
            return Err(Error::InvalidTour("node ids start at 1".into()));
        }
        Self::from_permutation(ids.iter().map(|&id| id as usize - 1).collect())
    }

    /// Parses `"1-4-2-3"`.
    pub fn parse(text: &str) -> Result<Self> {
        let ids = text
            .trim()
            .split('-')
            .map(|t| t.parse::<u32>().map_err(|_| Error::Parse(format!("bad node id `{t}` in tour `{text}`"))))
            .collect::<Result<Vec<_>>>()?;
        Self::from_ids(&ids)
    }

    /// Recovers the tour from an incidence vector; rejects subtours.
    pub fn from_incidence(n: usize, incidence: &[f64]) -> Result<Self> {
        Self::from_permutation(to_permutation(n, incidence)?)
    }

    pub fn n(&self) -> usize {
        self.perm.len()
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    /// Arc indices with `x_ij = 1`, ascending.
    pub fn arcs(&self) -> &[usize] {
        &self.arcs
    }

    pub fn incidence(&self) -> Vec<f64> {
        let mut x = vec![0.0; ArcSpace::new(self.n()).len()];
        for &a in &self.arcs {
            x[a] = 1.0;
        }
        x
    }

    pub fn ids(&self) -> Vec<u32> {
        self.perm.iter().map(|&v| v as u32 + 1).collect()
    }

    /// `"1-4-2-3"`
    pub fn to_id_string(&self) -> String {
        self.perm.iter().map(|v| (v + 1).to_string()).collect::<Vec<_>>().join("-")
    }
}

impl std::fmt::Display for Tour {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.to_id_string())
    }
}

/// Sorted arc indices of the directed cycle `perm[0] -> perm[1] -> ... -> perm[0]`.
pub fn tour_arcs(perm: &[usize]) -> Vec<usize> {
    let space = ArcSpace::new(perm.len());
    let mut arcs: Vec<usize> = (0..perm.len())
        .map(|t| space.index(perm[t], perm[(t + 1) % perm.len()]))
        .collect();
    arcs.sort_unstable();
    arcs
}

/// Depot-rooted permutation encoded by a binary incidence vector.
pub fn to_permutation(n: usize, incidence: &[f64]) -> Result<Vec<usize>> {
    let space = ArcSpace::new(n);
    if incidence.len() != space.len() {
        return Err(Error::Dimension {
            expected: space.len(),
            actual: incidence.len(),
        });
    }
    let mut successor = vec![usize::MAX; n];
    let mut in_degree = vec![0usize; n];
    for (a, i, j) in space.iter() {
        let x = incidence[a];
        if (x - 1.0).abs() <= 1e-6 {
            if successor[i] != usize::MAX {
                return Err(Error::InvalidTour(format!("node {} has out-degree above 1", i + 1)));
            }
            successor[i] = j;
            in_degree[j] += 1;
        } else if x.abs() > 1e-6 {
            return Err(Error::InvalidTour(format!("incidence entry {x} is not binary")));
        }
    }
    if let Some(v) = successor.iter().position(|&s| s == usize::MAX) {
        return Err(Error::InvalidTour(format!("node {} has out-degree 0", v + 1)));
    }
    if let Some(v) = in_degree.iter().position(|&d| d != 1) {
        return Err(Error::InvalidTour(format!("node {} has in-degree {}", v + 1, in_degree[v])));
    }
    let mut perm = Vec::with_capacity(n);
    let mut v = 0;
    loop {
        perm.push(v);
        v = successor[v];
        if v == 0 {
            break;
        }
        if perm.len() > n {
            unreachable!("degree checks bound the walk");
        }
    }
    if perm.len() != n {
        return Err(Error::InvalidTour(format!(
            "subtour detected: the depot cycle covers {} of {n} nodes",
            perm.len()
        )));
    }
    Ok(perm)
}

/// `count` tours, uniform over depot-rooted directed tours. Tour `k` shuffles
/// the customers with substream `k` of `seed`.
pub fn sample_uniform(n_nodes: usize, count: usize, seed: u64) -> Vec<Tour> {
    (0..count)
        .into_par_iter()
        .map(|k| sample_one(n_nodes, seed, k as u64))
        .collect()
}

pub(crate) fn sample_one(n_nodes: usize, seed: u64, stream: u64) -> Tour {
    let mut perm: Vec<usize> = (0..n_nodes).collect();
    perm[1..].shuffle(&mut rng::substream(seed, stream));
    Tour::from_permutation(perm).expect("shuffled permutation is valid")
}

/// Advances `items` to the next lexicographic permutation; false after the last.
pub fn next_permutation(items: &mut [usize]) -> bool {
    if items.len() < 2 {
        return false;
    }
    let mut i = items.len() - 1;
    while i > 0 && items[i - 1] >= items[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = items.len() - 1;
    while items[j] <= items[i - 1] {
        j -= 1;
    }
    items.swap(i - 1, j);
    items[i..].reverse();
    true
}

/// Every depot-rooted directed tour on `n` nodes in lexicographic order.
pub fn enumerate(n: usize) -> Vec<Tour> {
    let mut perm: Vec<usize> = (0..n).collect();
    let mut out = Vec::new();
    loop {
        out.push(Tour::from_permutation(perm.clone()).expect("valid permutation"));
        if !next_permutation(&mut perm[1..]) {
            break;
        }
    }
    out
}
