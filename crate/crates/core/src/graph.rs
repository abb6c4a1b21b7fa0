//! Layered pointed graphs: the combinatorial form of a quotient space map.
//!
//! Nodes at fiber `t` are the non-collapsed cells of `N_t \ L_t`; the base
//! point is implicit and absorbing. A `PointedGraph` is itself a layered
//! system, so pairs of node sets inside it have quotient graphs of their
//! own. That closure under quotienting is what the shift-equivalence
//! constructions iterate on.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A layered multivalued dynamical system over abstract node ids. `step`
/// returns the in-system targets on fiber `t+1` plus a flag for "leaves the
/// system" (outer cell / base point / complement).
pub trait LayeredSystem {
    fn t_range(&self) -> (i64, i64);
    fn step(&self, t: i64, node: u32) -> (Vec<u32>, bool);
    /// Combinatorial interior of a node subset at one fiber. Grid-backed
    /// systems use the grid interior; quotient graphs have no geometry and
    /// return the set itself.
    fn interior_within(&self, t: i64, set: &[u32]) -> Vec<u32>;
}

/// One fiber of a pointed graph: sorted node ids, per-node edge lists into
/// the next fiber, and per-node base-point edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphFiber {
    pub nodes: Vec<u32>,
    pub edges: Vec<Vec<u32>>,
    pub to_star: Vec<bool>,
}

impl GraphFiber {
    pub fn position(&self, node: u32) -> Option<usize> {
        self.nodes.binary_search(&node).ok()
    }
}

/// Per-fiber quotient graph with an absorbing base point. Edges exist for
/// every fiber except the last; the base point always maps to itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointedGraph {
    pub t_lo: i64,
    pub fibers: Vec<GraphFiber>,
}

impl PointedGraph {
    pub fn t_range(&self) -> (i64, i64) {
        (self.t_lo, self.t_lo + self.fibers.len() as i64 - 1)
    }

    pub fn fiber(&self, t: i64) -> Option<&GraphFiber> {
        let i = t - self.t_lo;
        if i < 0 {
            return None;
        }
        self.fibers.get(i as usize)
    }

    pub fn nodes(&self, t: i64) -> Option<&[u32]> {
        self.fiber(t).map(|f| f.nodes.as_slice())
    }

    /// Edge targets and base-point flag of one node, when it exists and has
    /// outgoing data (last fiber has none).
    pub fn edges(&self, t: i64, node: u32) -> Option<(&[u32], bool)> {
        let f = self.fiber(t)?;
        let pos = f.position(node)?;
        if pos >= f.edges.len() {
            return None;
        }
        Some((&f.edges[pos], f.to_star[pos]))
    }

    /// Least `m` such that every length-`m` path from `start` (at fiber `t`)
    /// is absorbed at the base point, or `None` when the window ends first.
    pub fn absorption_time(&self, t: i64, start: &[u32]) -> Option<usize> {
        let (_, t_hi) = self.t_range();
        let mut survivors: Vec<u32> = start
            .iter()
            .copied()
            .filter(|&n| self.fiber(t).map_or(false, |f| f.position(n).is_some()))
            .collect();
        let mut m = 0usize;
        let mut cur_t = t;
        loop {
            if survivors.is_empty() {
                return Some(m);
            }
            if cur_t >= t_hi {
                return None;
            }
            let f = self.fiber(cur_t)?;
            let mut next: Vec<u32> = Vec::new();
            for &n in &survivors {
                let pos = f.position(n)?;
                next.extend_from_slice(&f.edges[pos]);
            }
            next.sort_unstable();
            next.dedup();
            survivors = next;
            cur_t += 1;
            m += 1;
        }
    }

    /// Relational power: node set reached from `start` after `m` steps
    /// (discarding absorbed paths), plus whether any path got absorbed.
    pub fn power(&self, t: i64, start: &[u32], m: usize) -> Option<(Vec<u32>, bool)> {
        let (_, t_hi) = self.t_range();
        if t + m as i64 > t_hi {
            return None;
        }
        let mut cur: Vec<u32> = start.to_vec();
        let mut star = false;
        for step in 0..m {
            let f = self.fiber(t + step as i64)?;
            let mut next = Vec::new();
            for &n in &cur {
                let pos = f.position(n)?;
                next.extend_from_slice(&f.edges[pos]);
                star |= f.to_star[pos];
            }
            next.sort_unstable();
            next.dedup();
            cur = next;
        }
        Some((cur, star))
    }
}

impl LayeredSystem for PointedGraph {
    fn t_range(&self) -> (i64, i64) {
        PointedGraph::t_range(self)
    }

    fn step(&self, t: i64, node: u32) -> (Vec<u32>, bool) {
        match self.edges(t, node) {
            Some((targets, star)) => (targets.to_vec(), star),
            None => (Vec::new(), false),
        }
    }

    fn interior_within(&self, _t: i64, set: &[u32]) -> Vec<u32> {
        set.to_vec()
    }
}

fn sorted_contains(set: &[u32], x: u32) -> bool {
    set.binary_search(&x).is_ok()
}

/// Quotient graph of the pair `(A, A0)` inside `sys`: nodes are `A \ A0`,
/// and a step to anything outside `A \ A0` (or out of the system) collapses
/// to the base point.
pub fn quotient_graph(
    sys: &impl LayeredSystem,
    t_lo: i64,
    a: &[Vec<u32>],
    a0: &[Vec<u32>],
) -> Result<PointedGraph> {
    if a.len() != a0.len() {
        return Err(Error::Config("pair fiber counts differ".into()));
    }
    let n_fibers = a.len();
    let node_sets: Vec<Vec<u32>> = a
        .iter()
        .zip(a0)
        .map(|(av, a0v)| {
            let mut v: Vec<u32> =
                av.iter().copied().filter(|x| !sorted_contains(a0v, *x)).collect();
            v.sort_unstable();
            v.dedup();
            v
        })
        .collect();
    let mut fibers = Vec::with_capacity(n_fibers);
    for i in 0..n_fibers {
        let t = t_lo + i as i64;
        let nodes = node_sets[i].clone();
        let (edges, to_star) = if i + 1 < n_fibers {
            let next = &node_sets[i + 1];
            let mut edges = Vec::with_capacity(nodes.len());
            let mut to_star = Vec::with_capacity(nodes.len());
            for &n in &nodes {
                let (targets, exits) = sys.step(t, n);
                let mut inside: Vec<u32> = Vec::new();
                let mut star = exits;
                for tgt in targets {
                    if sorted_contains(next, tgt) {
                        inside.push(tgt);
                    } else {
                        star = true;
                    }
                }
                inside.sort_unstable();
                inside.dedup();
                edges.push(inside);
                to_star.push(star);
            }
            (edges, to_star)
        } else {
            (Vec::new(), Vec::new())
        };
        fibers.push(GraphFiber { nodes, edges, to_star });
    }
    Ok(PointedGraph { t_lo, fibers })
}
