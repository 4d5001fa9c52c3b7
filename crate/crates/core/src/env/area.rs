use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridCase;
use crate::security::RewardBreakdown;

/// Loads proposed as a load-control group around overloaded branches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaProposal {
    pub overloaded_branches: Vec<u32>,
    /// Buses within the hop radius, sorted.
    pub buses: Vec<u32>,
    /// Loads at those buses, in case order.
    pub loads: Vec<u32>,
    /// Largest load of the proposal; first in case order on ties.
    pub swing: Option<u32>,
}

impl AreaProposal {
    pub fn is_empty(&self) -> bool {
        self.loads.is_empty()
    }
}

/// Collects the loads at buses within `hop_radius` in-service hops of either
/// end of any branch that is overloaded in the base case or a contingency.
pub fn detect_overload_area(case: &GridCase, breakdown: &RewardBreakdown, hop_radius: usize) -> AreaProposal {
    let overloaded = breakdown.overloaded_branches();
    let index = case.bus_index();
    let n = case.buses.len();
    let mut adj = vec![Vec::new(); n];
    for br in case.branches.iter().filter(|b| b.in_service) {
        if let (Some(&f), Some(&t)) = (index.get(&br.from_bus), index.get(&br.to_bus)) {
            adj[f].push(t);
            adj[t].push(f);
        }
    }
    let mut dist = vec![usize::MAX; n];
    let mut queue = VecDeque::new();
    for br in overloaded.iter().filter_map(|&id| case.branch(id)) {
        for bus in [br.from_bus, br.to_bus] {
            if let Some(&i) = index.get(&bus) {
                if dist[i] != 0 {
                    dist[i] = 0;
                    queue.push_back(i);
                }
            }
        }
    }
    while let Some(u) = queue.pop_front() {
        if dist[u] >= hop_radius {
            continue;
        }
        for &v in &adj[u] {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    let mut buses: Vec<u32> = case
        .buses
        .iter()
        .zip(&dist)
        .filter(|(_, &d)| d <= hop_radius)
        .map(|(b, _)| b.id)
        .collect();
    buses.sort_unstable();
    let members: Vec<_> = case
        .loads
        .iter()
        .filter(|l| buses.binary_search(&l.bus_id).is_ok())
        .collect();
    let swing = members
        .iter()
        .fold(None::<&crate::grid::Load>, |best, l| match best {
            Some(b) if b.p_mw >= l.p_mw => Some(b),
            _ => Some(l),
        })
        .map(|l| l.id);
    AreaProposal {
        overloaded_branches: overloaded,
        buses,
        loads: members.iter().map(|l| l.id).collect(),
        swing,
    }
}

/// Copy of `case` where exactly the proposed loads form `group`, with the
/// proposal's swing load marked.
pub fn assign_group(case: &GridCase, proposal: &AreaProposal, group: u32) -> Result<GridCase> {
    let swing = proposal
        .swing
        .ok_or_else(|| Error::Config("overload area contains no loads".into()))?;
    if proposal.loads.len() < 2 {
        return Err(Error::Config("overload area needs at least two loads".into()));
    }
    let mut out = case.clone();
    for l in &mut out.loads {
        if proposal.loads.contains(&l.id) {
            l.group = Some(group);
            l.swing = l.id == swing;
        } else if l.group == Some(group) {
            l.group = None;
            l.swing = false;
        }
    }
    out.validate()?;
    Ok(out)
}
