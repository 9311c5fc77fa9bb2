//! Directed cell graphs with an absorbing sink, shared by the Euclidean and
//! projective coverings.

use std::collections::VecDeque;

use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Digraph {
    succ: Vec<Vec<u32>>,
    pred: Vec<Vec<u32>>,
    sink: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

impl Digraph {
    /// Successor lists are sorted and deduplicated here.
    pub fn from_successors(mut succ: Vec<Vec<u32>>, sink: Vec<bool>) -> Self {
        assert_eq!(succ.len(), sink.len());
        let mut pred = vec![Vec::new(); succ.len()];
        for (i, list) in succ.iter_mut().enumerate() {
            list.sort_unstable();
            list.dedup();
            for &j in list.iter() {
                pred[j as usize].push(i as u32);
            }
        }
        Self { succ, pred, sink }
    }

    pub fn len(&self) -> usize {
        self.succ.len()
    }

    pub fn is_empty(&self) -> bool {
        self.succ.is_empty()
    }

    pub fn successors(&self, i: usize) -> &[u32] {
        &self.succ[i]
    }

    pub fn predecessors(&self, i: usize) -> &[u32] {
        &self.pred[i]
    }

    pub fn reaches_sink(&self, i: usize) -> bool {
        self.sink[i]
    }

    pub fn edge_count(&self) -> usize {
        self.succ.iter().map(Vec::len).sum()
    }

    /// Membership mask of the closure of `from`. With `strict`, only cells
    /// reached by at least one edge are included.
    pub fn reach(&self, from: &[usize], direction: Direction, strict: bool) -> Vec<bool> {
        let adj = match direction {
            Direction::Forward => &self.succ,
            Direction::Backward => &self.pred,
        };
        let mut seen = vec![false; self.len()];
        let mut queue = VecDeque::new();
        for &s in from {
            if strict {
                for &j in &adj[s] {
                    if !seen[j as usize] {
                        seen[j as usize] = true;
                        queue.push_back(j as usize);
                    }
                }
            } else if !seen[s] {
                seen[s] = true;
                queue.push_back(s);
            }
        }
        while let Some(i) = queue.pop_front() {
            for &j in &adj[i] {
                if !seen[j as usize] {
                    seen[j as usize] = true;
                    queue.push_back(j as usize);
                }
            }
        }
        seen
    }

    /// Strongly connected components with at least one internal edge, each
    /// sorted, ordered by size descending then by smallest member.
    pub fn recurrent_components(&self) -> Vec<Vec<usize>> {
        let mut g = DiGraph::<(), ()>::with_capacity(self.len(), self.edge_count());
        for _ in 0..self.len() {
            g.add_node(());
        }
        for (i, list) in self.succ.iter().enumerate() {
            for &j in list {
                g.add_edge(NodeIndex::new(i), NodeIndex::new(j as usize), ());
            }
        }
        let mut comps: Vec<Vec<usize>> = tarjan_scc(&g)
            .into_iter()
            .map(|c| {
                let mut v: Vec<usize> = c.into_iter().map(|n| n.index()).collect();
                v.sort_unstable();
                v
            })
            .filter(|c| c.len() > 1 || self.succ[c[0]].binary_search(&(c[0] as u32)).is_ok())
            .collect();
        comps.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
        comps
    }
}
