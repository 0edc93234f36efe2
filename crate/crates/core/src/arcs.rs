//! Indexing of the ordered arcs of a complete directed graph.
//!
//! Arcs `(i, j)` with `i != j` over nodes `0..n` are numbered row-major with
//! the diagonal removed: `index = i * (n - 1) + (j - [j > i])`. This order is
//! the canonical order for incidence vectors, cost tables and model rows.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArcSpace {
    n: usize,
}

impl ArcSpace {
    pub fn new(n: usize) -> Self {
        Self { n }
    }

    pub fn nodes(&self) -> usize {
        self.n
    }

    /// Number of ordered arcs, `n (n - 1)`.
    pub fn len(&self) -> usize {
        self.n * self.n.saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, from: usize, to: usize) -> usize {
        debug_assert!(from != to && from < self.n && to < self.n);
        from * (self.n - 1) + if to > from { to - 1 } else { to }
    }

    #[inline]
    pub fn endpoints(&self, arc: usize) -> (usize, usize) {
        let from = arc / (self.n - 1);
        let r = arc % (self.n - 1);
        let to = if r >= from { r + 1 } else { r };
        (from, to)
    }

    /// All arcs in canonical order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        (0..self.len()).map(move |a| {
            let (i, j) = self.endpoints(a);
            (a, i, j)
        })
    }

    /// Arcs leaving `node`, in canonical order.
    pub fn outgoing(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&j| j != node).map(move |j| self.index(node, j))
    }

    /// Arcs entering `node`, in canonical order.
    pub fn incoming(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&i| i != node).map(move |i| self.index(i, node))
    }
}
