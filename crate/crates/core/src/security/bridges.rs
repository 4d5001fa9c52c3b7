//! Bridge detection on the bus-branch multigraph (Tarjan low-link).

use crate::grid::GridCase;

/// Ids of in-service branches whose removal disconnects the network.
/// Parallel branches between the same pair of buses are never bridges.
pub fn bridge_branches(case: &GridCase) -> Vec<u32> {
    let index = case.bus_index();
    let n = case.buses.len();
    let edges: Vec<(usize, usize, u32)> = case
        .branches
        .iter()
        .filter(|b| b.in_service)
        .map(|b| (index[&b.from_bus], index[&b.to_bus], b.id))
        .collect();
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (e, &(f, t, _)) in edges.iter().enumerate() {
        adj[f].push((t, e));
        adj[t].push((f, e));
    }

    let mut disc = vec![usize::MAX; n];
    let mut low = vec![0; n];
    let mut timer = 0;
    let mut bridges = Vec::new();

    for root in 0..n {
        if disc[root] != usize::MAX {
            continue;
        }
        // Explicit stack of (vertex, edge used to enter it, next neighbour cursor).
        let mut stack: Vec<(usize, Option<usize>, usize)> = vec![(root, None, 0)];
        disc[root] = timer;
        low[root] = timer;
        timer += 1;
        while let Some(&mut (u, via, ref mut cursor)) = stack.last_mut() {
            if *cursor < adj[u].len() {
                let (w, e) = adj[u][*cursor];
                *cursor += 1;
                if Some(e) == via {
                    continue;
                }
                if disc[w] == usize::MAX {
                    disc[w] = timer;
                    low[w] = timer;
                    timer += 1;
                    stack.push((w, Some(e), 0));
                } else {
                    low[u] = low[u].min(disc[w]);
                }
            } else {
                stack.pop();
                if let Some(&(parent, _, _)) = stack.last() {
                    low[parent] = low[parent].min(low[u]);
                    if low[u] > disc[parent] {
                        bridges.push(edges[via.expect("non-root has entry edge")].2);
                    }
                }
            }
        }
    }
    bridges.sort_unstable();
    bridges
}
