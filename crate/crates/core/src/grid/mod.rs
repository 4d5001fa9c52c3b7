//! Electrical data model for a bus-branch transmission case.
//!
//! Quantities are held in the same units as the case file: active and
//! reactive powers in MW / MVAr, angles in degrees, and impedances,
//! admittances and voltage magnitudes in per-unit on `base_mva`. The power
//! flow solver converts to per-unit radians when it assembles its inputs,
//! which keeps `load_case(save_case(c)) == c` exact.

mod control;
mod io;

use std::collections::{HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use control::{apply_generator_setpoints, apply_load_group};
pub use io::{load_case, parse_case, save_case, to_canonical_string, CASE_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Slack,
    Pv,
    Pq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bus {
    pub id: u32,
    pub kind: BusKind,
    /// Voltage magnitude (setpoint for slack and PV buses, initial guess otherwise).
    pub v_mag: f64,
    pub v_ang_deg: f64,
    pub v_min: f64,
    pub v_max: f64,
    /// Shunt conductance, per-unit at 1.0 pu voltage.
    #[serde(default)]
    pub g_sh: f64,
    /// Shunt susceptance, per-unit at 1.0 pu voltage.
    #[serde(default)]
    pub b_sh: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zone: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Generator {
    pub id: u32,
    pub bus_id: u32,
    pub p_mw: f64,
    pub q_mvar: f64,
    pub p_min_mw: f64,
    pub p_max_mw: f64,
    pub q_min_mvar: f64,
    pub q_max_mvar: f64,
    /// Member of the generator-control action space.
    #[serde(default)]
    pub controllable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Load {
    pub id: u32,
    pub bus_id: u32,
    pub p_mw: f64,
    pub q_mvar: f64,
    /// Load-control group tag.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<u32>,
    /// Balancing load of its group.
    #[serde(default)]
    pub swing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Branch {
    pub id: u32,
    pub from_bus: u32,
    pub to_bus: u32,
    pub r: f64,
    pub x: f64,
    /// Total line charging susceptance.
    #[serde(default)]
    pub b_ch: f64,
    /// Off-nominal turns ratio on the from side.
    #[serde(default = "unit_tap")]
    pub tap: f64,
    pub p_limit_mw: f64,
    pub s_max_mva: f64,
    #[serde(default = "in_service_default")]
    pub in_service: bool,
}

fn unit_tap() -> f64 {
    1.0
}

fn in_service_default() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCase {
    pub base_mva: f64,
    /// Restricts monitored branches and observed buses to one zone.
    pub study_zone: Option<u32>,
    pub buses: Vec<Bus>,
    pub generators: Vec<Generator>,
    pub loads: Vec<Load>,
    pub branches: Vec<Branch>,
}

impl GridCase {
    pub fn bus_index(&self) -> HashMap<u32, usize> {
        self.buses
            .iter()
            .enumerate()
            .map(|(i, b)| (b.id, i))
            .collect()
    }

    pub fn bus(&self, id: u32) -> Option<&Bus> {
        self.buses.iter().find(|b| b.id == id)
    }

    pub fn branch(&self, id: u32) -> Option<&Branch> {
        self.branches.iter().find(|b| b.id == id)
    }

    pub fn branch_position(&self, id: u32) -> Option<usize> {
        self.branches.iter().position(|b| b.id == id)
    }

    pub fn slack_index(&self) -> Option<usize> {
        self.buses.iter().position(|b| b.kind == BusKind::Slack)
    }

    pub fn controllable_generators(&self) -> impl Iterator<Item = &Generator> {
        self.generators.iter().filter(|g| g.controllable)
    }

    /// Ids of loads in `group`, swing included, in case order.
    pub fn group_loads(&self, group: u32) -> impl Iterator<Item = &Load> {
        self.loads.iter().filter(move |l| l.group == Some(group))
    }

    pub fn in_zone(&self, bus_id: u32) -> bool {
        match self.study_zone {
            None => true,
            Some(z) => self.bus(bus_id).and_then(|b| b.zone) == Some(z),
        }
    }

    /// In-service branches with both ends inside the study zone.
    pub fn monitored_branch_ids(&self) -> Vec<u32> {
        self.branches
            .iter()
            .filter(|br| br.in_service && self.in_zone(br.from_bus) && self.in_zone(br.to_bus))
            .map(|br| br.id)
            .collect()
    }

    pub fn monitored_bus_ids(&self) -> Vec<u32> {
        self.buses
            .iter()
            .filter(|b| self.in_zone(b.id))
            .map(|b| b.id)
            .collect()
    }

    /// Buses not reachable from the slack bus over in-service branches,
    /// optionally pretending `outage` is out of service.
    pub fn unreachable_buses(&self, outage: Option<u32>) -> Vec<u32> {
        let index = self.bus_index();
        let n = self.buses.len();
        let mut adj = vec![Vec::new(); n];
        for br in &self.branches {
            if !br.in_service || Some(br.id) == outage {
                continue;
            }
            if let (Some(&f), Some(&t)) = (index.get(&br.from_bus), index.get(&br.to_bus)) {
                adj[f].push(t);
                adj[t].push(f);
            }
        }
        let start = self.slack_index().unwrap_or(0);
        let mut seen = vec![false; n];
        let mut queue = VecDeque::new();
        if n > 0 {
            seen[start] = true;
            queue.push_back(start);
        }
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        self.buses
            .iter()
            .zip(seen)
            .filter(|(_, s)| !s)
            .map(|(b, _)| b.id)
            .collect()
    }

    /// Copy of the case with one branch switched out.
    pub fn with_outage(&self, branch_id: u32) -> GridCase {
        let mut out = self.clone();
        for br in out.branches.iter_mut().filter(|b| b.id == branch_id) {
            br.in_service = false;
        }
        out
    }

    /// Checks every data-model invariant.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Validation(msg));

        if !(self.base_mva.is_finite() && self.base_mva > 0.0) {
            return fail(format!("base_mva must be positive, got {}", self.base_mva));
        }
        if self.buses.is_empty() {
            return fail("case has no buses".into());
        }

        let mut bus_ids = HashSet::new();
        for b in &self.buses {
            if !bus_ids.insert(b.id) {
                return fail(format!("duplicate bus id {}", b.id));
            }
            let nums = [b.v_mag, b.v_ang_deg, b.v_min, b.v_max, b.g_sh, b.b_sh];
            if nums.iter().any(|v| !v.is_finite()) {
                return fail(format!("bus {} has a non-finite field", b.id));
            }
            if b.v_mag <= 0.0 {
                return fail(format!("bus {}: v_mag must be positive", b.id));
            }
            if b.v_min >= b.v_max {
                return fail(format!("bus {}: v_min must be below v_max", b.id));
            }
        }
        let slack_count = self
            .buses
            .iter()
            .filter(|b| b.kind == BusKind::Slack)
            .count();
        if slack_count != 1 {
            return fail(format!("expected exactly one slack bus, found {slack_count}"));
        }

        let mut gen_ids = HashSet::new();
        for g in &self.generators {
            if !gen_ids.insert(g.id) {
                return fail(format!("duplicate generator id {}", g.id));
            }
            if !bus_ids.contains(&g.bus_id) {
                return fail(format!("generator {} references unknown bus {}", g.id, g.bus_id));
            }
            let nums = [
                g.p_mw,
                g.q_mvar,
                g.p_min_mw,
                g.p_max_mw,
                g.q_min_mvar,
                g.q_max_mvar,
            ];
            if nums.iter().any(|v| !v.is_finite()) {
                return fail(format!("generator {} has a non-finite field", g.id));
            }
            if g.p_min_mw > g.p_max_mw {
                return fail(format!("generator {}: p_min above p_max", g.id));
            }
            if g.q_min_mvar > g.q_max_mvar {
                return fail(format!("generator {}: q_min above q_max", g.id));
            }
        }

        let mut load_ids = HashSet::new();
        let mut swings: HashMap<u32, usize> = HashMap::new();
        for l in &self.loads {
            if !load_ids.insert(l.id) {
                return fail(format!("duplicate load id {}", l.id));
            }
            if !bus_ids.contains(&l.bus_id) {
                return fail(format!("load {} references unknown bus {}", l.id, l.bus_id));
            }
            if !(l.p_mw.is_finite() && l.q_mvar.is_finite()) {
                return fail(format!("load {} has a non-finite field", l.id));
            }
            if l.p_mw < 0.0 {
                return fail(format!("load {}: negative active demand", l.id));
            }
            if l.swing {
                let Some(group) = l.group else {
                    return fail(format!("load {} is a swing load without a group", l.id));
                };
                let count = swings.entry(group).or_default();
                *count += 1;
                if *count > 1 {
                    return fail(format!("group {group} has more than one swing load"));
                }
            }
        }

        let mut branch_ids = HashSet::new();
        for br in &self.branches {
            if !branch_ids.insert(br.id) {
                return fail(format!("duplicate branch id {}", br.id));
            }
            for end in [br.from_bus, br.to_bus] {
                if !bus_ids.contains(&end) {
                    return fail(format!("branch {} references unknown bus {end}", br.id));
                }
            }
            if br.from_bus == br.to_bus {
                return fail(format!("branch {} connects bus {} to itself", br.id, br.from_bus));
            }
            let nums = [br.r, br.x, br.b_ch, br.tap, br.p_limit_mw, br.s_max_mva];
            if nums.iter().any(|v| !v.is_finite()) {
                return fail(format!("branch {} has a non-finite field", br.id));
            }
            if br.x == 0.0 {
                return fail(format!("branch {}: reactance must be non-zero", br.id));
            }
            if br.tap <= 0.0 {
                return fail(format!("branch {}: tap must be positive", br.id));
            }
            if br.p_limit_mw <= 0.0 {
                return fail(format!("branch {}: p_limit must be positive", br.id));
            }
            if br.s_max_mva <= 0.0 {
                return fail(format!("branch {}: s_max must be positive", br.id));
            }
        }

        let islanded = self.unreachable_buses(None);
        if !islanded.is_empty() {
            return fail(format!("case is not connected; unreachable buses {islanded:?}"));
        }
        Ok(())
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn two_bus() -> GridCase {
        GridCase {
            base_mva: 100.0,
            study_zone: None,
            buses: vec![
                Bus {
                    id: 1,
                    kind: BusKind::Slack,
                    v_mag: 1.0,
                    v_ang_deg: 0.0,
                    v_min: 0.9,
                    v_max: 1.1,
                    g_sh: 0.0,
                    b_sh: 0.0,
                    zone: None,
                },
                Bus {
                    id: 2,
                    kind: BusKind::Pq,
                    v_mag: 1.0,
                    v_ang_deg: 0.0,
                    v_min: 0.9,
                    v_max: 1.1,
                    g_sh: 0.0,
                    b_sh: 0.0,
                    zone: None,
                },
            ],
            generators: vec![Generator {
                id: 1,
                bus_id: 1,
                p_mw: 0.0,
                q_mvar: 0.0,
                p_min_mw: 0.0,
                p_max_mw: 200.0,
                q_min_mvar: -100.0,
                q_max_mvar: 100.0,
                controllable: false,
            }],
            loads: vec![Load {
                id: 1,
                bus_id: 2,
                p_mw: 50.0,
                q_mvar: 20.0,
                group: None,
                swing: false,
            }],
            branches: vec![Branch {
                id: 1,
                from_bus: 1,
                to_bus: 2,
                r: 0.0,
                x: 0.1,
                b_ch: 0.0,
                tap: 1.0,
                p_limit_mw: 100.0,
                s_max_mva: 120.0,
                in_service: true,
            }],
        }
    }

    #[test]
    fn two_bus_is_valid() {
        two_bus().validate().unwrap();
    }

    #[test]
    fn duplicate_bus_rejected() {
        let mut c = two_bus();
        c.buses[1].id = 1;
        assert!(matches!(c.validate(), Err(Error::Validation(m)) if m.contains("duplicate bus")));
    }

    #[test]
    fn two_slacks_rejected() {
        let mut c = two_bus();
        c.buses[1].kind = BusKind::Slack;
        assert!(matches!(c.validate(), Err(Error::Validation(m)) if m.contains("slack")));
    }

    #[test]
    fn bad_branch_rejected() {
        let mut c = two_bus();
        c.branches[0].to_bus = 1;
        assert!(c.validate().is_err());
        let mut c = two_bus();
        c.branches[0].x = 0.0;
        assert!(c.validate().is_err());
        let mut c = two_bus();
        c.branches[0].p_limit_mw = 0.0;
        assert!(c.validate().is_err());
        let mut c = two_bus();
        c.branches[0].to_bus = 7;
        assert!(c.validate().is_err());
    }

    #[test]
    fn disconnected_case_rejected() {
        let mut c = two_bus();
        c.branches[0].in_service = false;
        assert!(matches!(c.validate(), Err(Error::Validation(m)) if m.contains("not connected")));
    }

    #[test]
    fn two_swings_in_group_rejected() {
        let mut c = two_bus();
        let mut l = c.loads[0].clone();
        c.loads[0].group = Some(3);
        c.loads[0].swing = true;
        l.id = 2;
        l.group = Some(3);
        l.swing = true;
        c.loads.push(l);
        assert!(matches!(c.validate(), Err(Error::Validation(m)) if m.contains("swing")));
    }

    #[test]
    fn voltage_bounds_checked() {
        let mut c = two_bus();
        c.buses[0].v_min = 1.2;
        assert!(c.validate().is_err());
        let mut c = two_bus();
        c.buses[0].v_mag = 0.0;
        assert!(c.validate().is_err());
    }
}
