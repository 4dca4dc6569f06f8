//! Index-based adjacency and reachability over a scenario graph.

use std::collections::{BTreeMap, VecDeque};

use crate::model::{NodeId, ScenarioGraph};

pub(crate) struct Topology {
    pub ids: Vec<NodeId>,
    pub succ: Vec<Vec<usize>>,
    pub pred: Vec<Vec<usize>>,
}

impl Topology {
    pub fn new(graph: &ScenarioGraph) -> Self {
        let ids: Vec<NodeId> = graph.nodes().iter().map(|n| n.id.clone()).collect();
        let index: BTreeMap<NodeId, usize> =
            ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
        let mut succ = vec![Vec::new(); ids.len()];
        let mut pred = vec![Vec::new(); ids.len()];
        for e in graph.edges() {
            let (Some(&a), Some(&b)) = (index.get(&e.from.node), index.get(&e.to.node)) else {
                continue;
            };
            if !succ[a].contains(&b) {
                succ[a].push(b);
                pred[b].push(a);
            }
        }
        for list in succ.iter_mut().chain(pred.iter_mut()) {
            list.sort_unstable();
        }
        Topology {
            ids,
            succ,
            pred,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    /// Nodes reachable from `seeds` (seeds included), following edges
    /// forward or backward.
    pub fn reach(&self, seeds: &[usize], backward: bool) -> Vec<bool> {
        self.reach_avoiding(seeds, backward, None)
    }

    pub fn reach_avoiding(&self, seeds: &[usize], backward: bool, avoid: Option<usize>) -> Vec<bool> {
        let adj = if backward { &self.pred } else { &self.succ };
        let mut seen = vec![false; self.len()];
        let mut queue: VecDeque<usize> = seeds.iter().copied().collect();
        while let Some(v) = queue.pop_front() {
            if seen[v] || Some(v) == avoid {
                continue;
            }
            seen[v] = true;
            queue.extend(adj[v].iter().copied());
        }
        seen
    }

    /// `descendants[v][w]`: w reachable from v by a non-empty path.
    pub fn strict_descendants(&self) -> Vec<Vec<bool>> {
        (0..self.len())
            .map(|v| self.reach(&self.succ[v], false))
            .collect()
    }

    /// Kahn order; `None` when the graph has a cycle.
    pub fn topo_order(&self) -> Option<Vec<usize>> {
        let mut indeg: Vec<usize> = self.pred.iter().map(Vec::len).collect();
        let mut ready: std::collections::BTreeSet<usize> =
            (0..self.len()).filter(|&v| indeg[v] == 0).collect();
        let mut order = Vec::with_capacity(self.len());
        while let Some(v) = ready.pop_first() {
            order.push(v);
            for &w in &self.succ[v] {
                indeg[w] -= 1;
                if indeg[w] == 0 {
                    ready.insert(w);
                }
            }
        }
        (order.len() == self.len()).then_some(order)
    }
}
