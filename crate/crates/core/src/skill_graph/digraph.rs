/// Compressed adjacency over a plain weighted digraph, in both directions.
///
/// Node ids are dense `usize` indices. Parallel edges are kept.
#[derive(Debug, Clone, PartialEq)]
pub struct Digraph {
    n: usize,
    fwd_offsets: Vec<usize>,
    fwd: Vec<(u32, f64)>,
    rev_offsets: Vec<usize>,
    rev: Vec<(u32, f64)>,
}

impl Digraph {
    pub fn new<I: IntoIterator<Item = (usize, usize, f64)>>(n: usize, edges: I) -> Self {
        let edges: Vec<(usize, usize, f64)> = edges.into_iter().collect();
        let csr = |key: fn(&(usize, usize, f64)) -> (usize, usize)| {
            let mut offsets = vec![0usize; n + 1];
            for e in &edges {
                offsets[key(e).0 + 1] += 1;
            }
            for i in 0..n {
                offsets[i + 1] += offsets[i];
            }
            let mut fill = offsets.clone();
            let mut adj = vec![(0u32, 0.0); edges.len()];
            for e in &edges {
                let (a, b) = key(e);
                adj[fill[a]] = (b as u32, e.2);
                fill[a] += 1;
            }
            (offsets, adj)
        };
        let (fwd_offsets, fwd) = csr(|e| (e.0, e.1));
        let (rev_offsets, rev) = csr(|e| (e.1, e.0));
        Digraph {
            n,
            fwd_offsets,
            fwd,
            rev_offsets,
            rev,
        }
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.fwd.len()
    }

    /// `(to, weight)` pairs leaving `u`.
    pub fn successors(&self, u: usize) -> &[(u32, f64)] {
        &self.fwd[self.fwd_offsets[u]..self.fwd_offsets[u + 1]]
    }

    /// `(from, weight)` pairs entering `v`.
    pub fn predecessors(&self, v: usize) -> &[(u32, f64)] {
        &self.rev[self.rev_offsets[v]..self.rev_offsets[v + 1]]
    }

    /// Smallest weight among parallel edges `u -> v`.
    pub fn weight(&self, u: usize, v: usize) -> Option<f64> {
        self.successors(u)
            .iter()
            .filter(|(to, _)| *to as usize == v)
            .map(|(_, w)| *w)
            .min_by(f64::total_cmp)
    }
}
