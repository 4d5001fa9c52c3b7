use serde::Serialize;

use super::PowerFlowSolution;
use crate::error::{Error, Result};
use crate::grid::{BusKind, GridCase};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Element {
    Bus(u32),
    Generator(u32),
    Branch(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Quantity {
    VoltageMagnitude,
    GeneratorActive,
    GeneratorReactive,
    /// `√(P² + Q²)` at the worse end against `s_max`.
    BranchApparent,
    /// `max(|P_from|, |P_to|)` against `p_limit`.
    BranchActive,
}

/// One operating-limit breach; all values per-unit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub element: Element,
    pub quantity: Quantity,
    pub value: f64,
    /// The bound that was crossed (lower bound for under-limit breaches).
    pub bound: f64,
    /// Distance past the bound, always positive.
    pub excess: f64,
}

fn check_range(
    out: &mut Vec<Violation>,
    element: Element,
    quantity: Quantity,
    value: f64,
    lo: f64,
    hi: f64,
) {
    if value < lo {
        out.push(Violation { element, quantity, value, bound: lo, excess: lo - value });
    } else if value > hi {
        out.push(Violation { element, quantity, value, bound: hi, excess: value - hi });
    }
}

/// Lists every voltage, generator and branch limit breached by a converged
/// solution.
pub fn check_limits(case: &GridCase, solution: &PowerFlowSolution) -> Result<Vec<Violation>> {
    if !solution.converged {
        return Err(Error::NotConverged);
    }
    let base = case.base_mva;
    let mut out = Vec::new();

    for (i, bus) in case.buses.iter().enumerate() {
        check_range(
            &mut out,
            Element::Bus(bus.id),
            Quantity::VoltageMagnitude,
            solution.v_mag[i],
            bus.v_min,
            bus.v_max,
        );
    }

    for (i, bus) in case.buses.iter().enumerate() {
        let gens: Vec<_> = case.generators.iter().filter(|g| g.bus_id == bus.id).collect();
        if gens.is_empty() {
            continue;
        }
        let (p_load, q_load) = case
            .loads
            .iter()
            .filter(|l| l.bus_id == bus.id)
            .fold((0.0, 0.0), |(p, q), l| (p + l.p_mw / base, q + l.q_mvar / base));
        // Outputs the solver decides are shared evenly between the bus's units.
        let share = gens.len() as f64;
        let p_free = bus.kind == BusKind::Slack;
        let q_free = bus.kind != BusKind::Pq;
        for g in gens {
            let p = if p_free { (solution.p_inj[i] + p_load) / share } else { g.p_mw / base };
            let q = if q_free { (solution.q_inj[i] + q_load) / share } else { g.q_mvar / base };
            check_range(
                &mut out,
                Element::Generator(g.id),
                Quantity::GeneratorActive,
                p,
                g.p_min_mw / base,
                g.p_max_mw / base,
            );
            check_range(
                &mut out,
                Element::Generator(g.id),
                Quantity::GeneratorReactive,
                q,
                g.q_min_mvar / base,
                g.q_max_mvar / base,
            );
        }
    }

    for (k, br) in case.branches.iter().enumerate() {
        if !br.in_service {
            continue;
        }
        let s_from = solution.branch_p_from[k].hypot(solution.branch_q_from[k]);
        let s_to = solution.branch_p_to[k].hypot(solution.branch_q_to[k]);
        let s = s_from.max(s_to);
        let s_max = br.s_max_mva / base;
        if s > s_max {
            out.push(Violation {
                element: Element::Branch(br.id),
                quantity: Quantity::BranchApparent,
                value: s,
                bound: s_max,
                excess: s - s_max,
            });
        }
        let p = solution.branch_loading(k);
        let p_limit = br.p_limit_mw / base;
        if p > p_limit {
            out.push(Violation {
                element: Element::Branch(br.id),
                quantity: Quantity::BranchActive,
                value: p,
                bound: p_limit,
                excess: p - p_limit,
            });
        }
    }
    Ok(out)
}
