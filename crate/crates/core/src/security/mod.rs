//! N-1 contingency screening and the line-overload reward.
//!
//! A line contributes `max(0, max(|P_from|, |P_to|) − b·P_limit)` MW of
//! excess. The base term sums excess over all monitored lines of the intact
//! network; the contingency term repeats the sum over the remaining lines
//! for every screenable single-branch outage. Both are scaled by `−a`, so a
//! fully secure grid scores exactly zero and anything else is negative.

mod bridges;
mod report;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridCase;
use crate::power_flow::{solve, PowerFlowSolution, SolverSettings};

pub use bridges::bridge_branches;
pub use report::write_contingency_report;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConfig {
    /// Reward per MW of overload.
    pub a: f64,
    /// Fraction of `p_limit` at which a line starts to count as overloaded.
    pub b: f64,
    /// Charged for every power flow that fails to converge.
    pub divergence_penalty: f64,
    /// Branch ids to monitor; the case's study zone when absent.
    pub monitored_branches: Option<Vec<u32>>,
    /// Worker threads for the contingency sweep; 0 or 1 runs sequentially.
    pub workers: usize,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            a: 1.0 / 3500.0,
            b: 0.9,
            divergence_penalty: 1.0,
            monitored_branches: None,
            workers: 0,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0) {
            return Err(Error::Config("reward scalar a must be positive".into()));
        }
        if !(self.b > 0.0 && self.b <= 1.0) {
            return Err(Error::Config("capacity ratio b must lie in (0, 1]".into()));
        }
        if !(self.divergence_penalty >= 0.0) {
            return Err(Error::Config("divergence_penalty must be non-negative".into()));
        }
        Ok(())
    }

    /// Monitored branch ids in case order.
    pub fn monitored(&self, case: &GridCase) -> Vec<u32> {
        match &self.monitored_branches {
            Some(ids) => case
                .branches
                .iter()
                .filter(|b| ids.contains(&b.id))
                .map(|b| b.id)
                .collect(),
            None => case.monitored_branch_ids(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contingency {
    pub branch_id: u32,
    /// False when removing the branch islands part of the network.
    pub screenable: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ContingencyList {
    pub entries: Vec<Contingency>,
}

impl ContingencyList {
    pub fn screenable(&self) -> impl Iterator<Item = u32> + '_ {
        self.entries.iter().filter(|c| c.screenable).map(|c| c.branch_id)
    }
}

/// One single-branch outage per in-service monitored branch. Bridges are
/// kept in the list but marked non-screenable.
pub fn build_contingency_list(case: &GridCase, config: &RewardConfig) -> ContingencyList {
    let bridges = bridge_branches(case);
    let entries = config
        .monitored(case)
        .into_iter()
        .filter(|id| case.branch(*id).is_some_and(|b| b.in_service))
        .map(|branch_id| Contingency {
            branch_id,
            screenable: bridges.binary_search(&branch_id).is_err(),
        })
        .collect();
    ContingencyList { entries }
}

/// Per-unit amount by which the larger end flow exceeds `b · p_limit`,
/// clamped at zero.
pub fn line_excess(p_from: f64, p_to: f64, p_limit: f64, b: f64) -> f64 {
    (p_from.abs().max(p_to.abs()) - b * p_limit).max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineExcess {
    pub branch_id: u32,
    pub excess_mw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContingencyOutcome {
    /// The outaged branch.
    pub branch_id: u32,
    pub converged: bool,
    /// Positive excesses on the remaining monitored lines.
    pub excesses: Vec<LineExcess>,
    pub contribution: f64,
}

impl ContingencyOutcome {
    pub fn worst(&self) -> Option<&LineExcess> {
        self.excesses
            .iter()
            .fold(None, |best: Option<&LineExcess>, e| match best {
                Some(b) if b.excess_mw >= e.excess_mw => Some(b),
                _ => Some(e),
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_total: f64,
    pub r_base: f64,
    pub r_con: f64,
    pub base_converged: bool,
    pub base_excess: Vec<LineExcess>,
    pub contingencies: Vec<ContingencyOutcome>,
    pub any_violation: bool,
    pub diverged_contingencies: Vec<u32>,
}

impl RewardBreakdown {
    pub fn is_secure(&self) -> bool {
        !self.any_violation
    }

    /// Branch ids with positive excess in the base case or any contingency,
    /// sorted and deduplicated.
    pub fn overloaded_branches(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self
            .base_excess
            .iter()
            .chain(self.contingencies.iter().flat_map(|c| &c.excesses))
            .map(|e| e.branch_id)
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

/// Positive excesses in MW over `monitored`, skipping `outage`.
fn excesses(
    case: &GridCase,
    solution: &PowerFlowSolution,
    monitored: &[u32],
    b: f64,
    outage: Option<u32>,
) -> Vec<LineExcess> {
    let base = case.base_mva;
    monitored
        .iter()
        .filter(|&&id| Some(id) != outage)
        .filter_map(|&id| {
            let k = case.branch_position(id)?;
            let br = &case.branches[k];
            let e = line_excess(
                solution.branch_p_from[k],
                solution.branch_p_to[k],
                br.p_limit_mw / base,
                b,
            );
            (e > 0.0).then_some(LineExcess {
                branch_id: id,
                excess_mw: e * base,
            })
        })
        .collect()
}

fn penalty(a: f64, excess: &[LineExcess]) -> f64 {
    -a * excess.iter().map(|e| e.excess_mw).sum::<f64>()
}

/// Base-case term: `−a · Σ excess` over monitored lines, or
/// `−divergence_penalty` when the solve did not converge.
pub fn base_reward(case: &GridCase, solution: &PowerFlowSolution, config: &RewardConfig) -> f64 {
    if !solution.converged {
        return -config.divergence_penalty;
    }
    penalty(config.a, &excesses(case, solution, &config.monitored(case), config.b, None))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContingencySweep {
    pub r_con: f64,
    /// One entry per screenable contingency, in list order.
    pub outcomes: Vec<ContingencyOutcome>,
}

fn screen_one(
    case: &GridCase,
    branch_id: u32,
    monitored: &[u32],
    config: &RewardConfig,
    settings: &SolverSettings,
) -> Result<ContingencyOutcome> {
    let outaged = case.with_outage(branch_id);
    let solution = solve(&outaged, settings)?;
    if !solution.converged {
        return Ok(ContingencyOutcome {
            branch_id,
            converged: false,
            excesses: Vec::new(),
            contribution: -config.divergence_penalty,
        });
    }
    let excess = excesses(&outaged, &solution, monitored, config.b, Some(branch_id));
    Ok(ContingencyOutcome {
        branch_id,
        converged: true,
        contribution: penalty(config.a, &excess),
        excesses: excess,
    })
}

/// Re-solves every screenable outage and sums the per-outage penalties in
/// list order, so parallel and sequential sweeps agree bit for bit.
pub fn contingency_reward(
    case: &GridCase,
    list: &ContingencyList,
    config: &RewardConfig,
    settings: &SolverSettings,
) -> Result<ContingencySweep> {
    let monitored = config.monitored(case);
    let ids: Vec<u32> = list.screenable().collect();
    let run = |id: &u32| screen_one(case, *id, &monitored, config, settings);

    let outcomes: Vec<ContingencyOutcome> = if config.workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| Error::Config(format!("cannot start sweep workers: {e}")))?;
        pool.install(|| ids.par_iter().map(run).collect::<Result<_>>())?
    } else {
        ids.iter().map(run).collect::<Result<_>>()?
    };
    let r_con = outcomes.iter().map(|o| o.contribution).sum();
    Ok(ContingencySweep { r_con, outcomes })
}

/// Full reward for a case: base term plus contingency term.
///
/// When the intact network itself fails to converge the contingency sweep
/// is skipped and the reward is `−divergence_penalty`.
pub fn total_reward(
    case: &GridCase,
    config: &RewardConfig,
    settings: &SolverSettings,
) -> Result<RewardBreakdown> {
    let list = build_contingency_list(case, config);
    total_reward_with(case, &list, config, settings)
}

/// [`total_reward`] with a precomputed contingency list.
pub fn total_reward_with(
    case: &GridCase,
    list: &ContingencyList,
    config: &RewardConfig,
    settings: &SolverSettings,
) -> Result<RewardBreakdown> {
    let solution = solve(case, settings)?;
    breakdown_from_solution(case, &solution, list, config, settings)
}

/// Reward for an already solved case.
pub fn breakdown_from_solution(
    case: &GridCase,
    solution: &PowerFlowSolution,
    list: &ContingencyList,
    config: &RewardConfig,
    settings: &SolverSettings,
) -> Result<RewardBreakdown> {
    if !solution.converged {
        let r_base = -config.divergence_penalty;
        return Ok(RewardBreakdown {
            r_total: r_base,
            r_base,
            r_con: 0.0,
            base_converged: false,
            base_excess: Vec::new(),
            contingencies: Vec::new(),
            any_violation: true,
            diverged_contingencies: Vec::new(),
        });
    }
    let base_excess = excesses(case, solution, &config.monitored(case), config.b, None);
    let r_base = penalty(config.a, &base_excess);
    let sweep = contingency_reward(case, list, config, settings)?;
    let diverged: Vec<u32> = sweep
        .outcomes
        .iter()
        .filter(|o| !o.converged)
        .map(|o| o.branch_id)
        .collect();
    let any_violation = !base_excess.is_empty()
        || !diverged.is_empty()
        || sweep.outcomes.iter().any(|o| !o.excesses.is_empty());
    Ok(RewardBreakdown {
        r_total: r_base + sweep.r_con,
        r_base,
        r_con: sweep.r_con,
        base_converged: true,
        base_excess,
        contingencies: sweep.outcomes,
        any_violation,
        diverged_contingencies: diverged,
    })
}
