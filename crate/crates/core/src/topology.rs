use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Rooted tree over nodes `0..n`, validated on construction.
///
/// Edges are indexed by their child: non-root nodes in ascending order.
/// Child lists are ascending as well.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Topology {
    parent: Vec<Option<usize>>,
    root: usize,
    children: Vec<Vec<usize>>,
    preorder: Vec<usize>,
    edges: Vec<(usize, usize)>,
    edge_of: Vec<Option<usize>>,
}

impl Topology {
    pub fn from_parents(parent: Vec<Option<usize>>) -> Result<Self> {
        let n = parent.len();
        if n == 0 {
            return Err(Error::Structure("tree has no nodes".into()));
        }
        let roots: Vec<usize> = (0..n).filter(|&v| parent[v].is_none()).collect();
        let root = match roots.as_slice() {
            [r] => *r,
            [] => return Err(Error::Structure("no root node".into())),
            many => {
                return Err(Error::Structure(format!(
                    "{} root nodes (e.g. {} and {})",
                    many.len(),
                    many[0],
                    many[1]
                )))
            }
        };
        let mut children = vec![Vec::new(); n];
        for (v, p) in parent.iter().enumerate() {
            if let Some(p) = *p {
                if p >= n {
                    return Err(Error::Structure(format!(
                        "node {v} has parent {p}, but the tree has {n} nodes"
                    )));
                }
                if p == v {
                    return Err(Error::Structure(format!("node {v} is its own parent")));
                }
                children[p].push(v);
            }
        }

        let mut preorder = Vec::with_capacity(n);
        let mut stack = vec![root];
        while let Some(v) = stack.pop() {
            preorder.push(v);
            stack.extend(children[v].iter().rev());
        }
        if preorder.len() != n {
            return Err(Error::Structure(format!(
                "only {} of {n} nodes are reachable from root {root} (cycle present)",
                preorder.len()
            )));
        }

        let mut edges = Vec::with_capacity(n - 1);
        let mut edge_of = vec![None; n];
        for (v, p) in parent.iter().enumerate() {
            if let Some(p) = *p {
                edge_of[v] = Some(edges.len());
                edges.push((p, v));
            }
        }

        Ok(Topology {
            parent,
            root,
            children,
            preorder,
            edges,
            edge_of,
        })
    }

    /// Roots an undirected edge list at `root`.
    pub fn from_undirected(n: usize, edges: &[(usize, usize)], root: usize) -> Result<Self> {
        if root >= n {
            return Err(Error::Structure(format!("root {root} out of {n} nodes")));
        }
        if edges.len() + 1 != n {
            return Err(Error::Structure(format!(
                "{} edges cannot form a tree on {n} nodes",
                edges.len()
            )));
        }
        let mut adj = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::Structure(format!("edge ({a}, {b}) out of range")));
            }
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut parent = vec![None; n];
        let mut seen = vec![false; n];
        seen[root] = true;
        let mut queue = VecDeque::from([root]);
        while let Some(v) = queue.pop_front() {
            for &u in &adj[v] {
                if !seen[u] {
                    seen[u] = true;
                    parent[u] = Some(v);
                    queue.push_back(u);
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Structure("edge list is disconnected".into()));
        }
        Self::from_parents(parent)
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        self.parent[v]
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parent
    }

    pub fn children(&self, v: usize) -> &[usize] {
        &self.children[v]
    }

    /// Root-first order in which every parent precedes its children.
    pub fn preorder(&self) -> &[usize] {
        &self.preorder
    }

    /// `(parent, child)` pairs, indexed by edge id.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Id of the edge joining `v` to its parent.
    pub fn edge_to_parent(&self, v: usize) -> Option<usize> {
        self.edge_of[v]
    }

    /// Undirected neighbors of `v` in ascending index order.
    pub fn neighbors(&self, v: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self.children[v].clone();
        if let Some(p) = self.parent[v] {
            let pos = out.partition_point(|&c| c < p);
            out.insert(pos, p);
        }
        out
    }

    pub fn neighbor_lists(&self) -> Vec<Vec<usize>> {
        (0..self.len()).map(|v| self.neighbors(v)).collect()
    }

    /// Distance in edges between every pair of nodes from `source`.
    pub fn distances_from(&self, source: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.len()];
        dist[source] = 0;
        let mut queue = VecDeque::from([source]);
        while let Some(v) = queue.pop_front() {
            for u in self.neighbors(v) {
                if dist[u] == usize::MAX {
                    dist[u] = dist[v] + 1;
                    queue.push_back(u);
                }
            }
        }
        dist
    }

    /// The same undirected tree rooted at `root`.
    pub fn rerooted(&self, root: usize) -> Result<Topology> {
        let undirected: Vec<(usize, usize)> = self.edges.clone();
        Topology::from_undirected(self.len(), &undirected, root)
    }
}
