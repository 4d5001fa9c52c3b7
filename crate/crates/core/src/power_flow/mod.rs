//! AC power flow: Newton-Raphson in polar form, a Gauss-Seidel reference
//! solver, branch flows and operating-limit checks.

mod gauss_seidel;
mod limits;
pub mod newton;
mod ybus;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BusKind, GridCase};

pub use gauss_seidel::gauss_seidel_reference;
pub use limits::{check_limits, Element, Quantity, Violation};
pub use ybus::{build_ybus, AdmittanceMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSettings {
    /// Largest accepted per-unit power mismatch.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Start PQ buses at 1.0∠0 and PV buses at their setpoint∠0 instead of
    /// the voltages stored in the case.
    pub flat_start: bool,
    /// Switch PV buses to PQ when their reactive output leaves its limits.
    pub enforce_q_limits: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_iterations: 20,
            flat_start: true,
            enforce_q_limits: false,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::Config("solver tolerance must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("solver max_iterations must be at least 1".into()));
        }
        Ok(())
    }
}

/// Converged (or last-iterate) bus voltages and branch flows, per-unit,
/// indexed in case order. Out-of-service branches carry zero flow.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerFlowSolution {
    pub converged: bool,
    pub iterations: usize,
    pub max_mismatch: f64,
    pub v_mag: Vec<f64>,
    /// Radians.
    pub v_ang: Vec<f64>,
    /// Net complex injection at each bus.
    pub p_inj: Vec<f64>,
    pub q_inj: Vec<f64>,
    pub branch_p_from: Vec<f64>,
    pub branch_p_to: Vec<f64>,
    pub branch_q_from: Vec<f64>,
    pub branch_q_to: Vec<f64>,
}

impl PowerFlowSolution {
    pub fn voltages(&self) -> Vec<Complex64> {
        self.v_mag
            .iter()
            .zip(&self.v_ang)
            .map(|(&m, &a)| Complex64::from_polar(m, a))
            .collect()
    }

    /// `max(|P_from|, |P_to|)` for branch position `k`.
    pub fn branch_loading(&self, k: usize) -> f64 {
        self.branch_p_from[k].abs().max(self.branch_p_to[k].abs())
    }

    pub fn total_losses(&self) -> f64 {
        self.branch_p_from
            .iter()
            .zip(&self.branch_p_to)
            .map(|(f, t)| f + t)
            .sum()
    }
}

/// Solver inputs derived from a case: admittance matrix, scheduled
/// injections and bus classification.
#[derive(Debug, Clone)]
pub struct Network {
    pub ybus: AdmittanceMatrix,
    /// Scheduled net injection (generation minus load), per-unit.
    pub s_sched: Vec<Complex64>,
    pub v0: Vec<Complex64>,
    pub slack: usize,
    pub pv: Vec<usize>,
    pub pq: Vec<usize>,
}

impl Network {
    pub fn new(case: &GridCase, settings: &SolverSettings) -> Result<Self> {
        let unreachable = case.unreachable_buses(None);
        if !unreachable.is_empty() {
            return Err(Error::Islanded(unreachable));
        }
        let ybus = build_ybus(case)?;
        let index = case.bus_index();
        let base = case.base_mva;
        let n = case.buses.len();

        let mut s_sched = vec![Complex64::new(0.0, 0.0); n];
        for g in &case.generators {
            s_sched[index[&g.bus_id]] += Complex64::new(g.p_mw, g.q_mvar) / base;
        }
        for l in &case.loads {
            s_sched[index[&l.bus_id]] -= Complex64::new(l.p_mw, l.q_mvar) / base;
        }

        let mut slack = None;
        let mut pv = Vec::new();
        let mut pq = Vec::new();
        let mut v0 = Vec::with_capacity(n);
        for (i, bus) in case.buses.iter().enumerate() {
            let stored = Complex64::from_polar(bus.v_mag, bus.v_ang_deg.to_radians());
            match bus.kind {
                BusKind::Slack => {
                    slack = Some(i);
                    v0.push(stored);
                }
                BusKind::Pv => {
                    pv.push(i);
                    v0.push(if settings.flat_start {
                        Complex64::new(bus.v_mag, 0.0)
                    } else {
                        stored
                    });
                }
                BusKind::Pq => {
                    pq.push(i);
                    v0.push(if settings.flat_start {
                        Complex64::new(1.0, 0.0)
                    } else {
                        stored
                    });
                }
            }
        }
        let slack = slack.ok_or_else(|| Error::Validation("case has no slack bus".into()))?;
        Ok(Self {
            ybus,
            s_sched,
            v0,
            slack,
            pv,
            pq,
        })
    }
}

/// Solves the nodal power balance by Newton-Raphson.
///
/// Non-convergence is reported through `converged = false`, not as an
/// error. An islanded network or a zero-impedance branch is an error.
pub fn solve(case: &GridCase, settings: &SolverSettings) -> Result<PowerFlowSolution> {
    let mut net = Network::new(case, settings)?;
    let mut outcome = newton::newton_raphson(&net, settings.tolerance, settings.max_iterations);

    if settings.enforce_q_limits {
        let mut total_iterations = outcome.iterations;
        for _ in 0..case.buses.len() {
            if !outcome.converged || !switch_violating_pv_buses(case, &mut net, &outcome.v) {
                break;
            }
            net.v0 = outcome.v.clone();
            outcome = newton::newton_raphson(&net, settings.tolerance, settings.max_iterations);
            total_iterations += outcome.iterations;
        }
        outcome.iterations = total_iterations;
    }

    Ok(finish(case, &net.ybus, outcome))
}

/// Fixes PV buses whose generators exceed their reactive limits at the
/// limit and reclassifies them as PQ. Returns whether anything switched.
fn switch_violating_pv_buses(case: &GridCase, net: &mut Network, v: &[Complex64]) -> bool {
    let base = case.base_mva;
    let current = net.ybus.mul_vec(v);
    let mut switched = false;
    let mut still_pv = Vec::with_capacity(net.pv.len());
    for &i in &net.pv {
        let bus_id = case.buses[i].id;
        let gens: Vec<_> = case.generators.iter().filter(|g| g.bus_id == bus_id).collect();
        let q_min: f64 = gens.iter().map(|g| g.q_min_mvar).sum::<f64>() / base;
        let q_max: f64 = gens.iter().map(|g| g.q_max_mvar).sum::<f64>() / base;
        let q_load: f64 = case
            .loads
            .iter()
            .filter(|l| l.bus_id == bus_id)
            .map(|l| l.q_mvar)
            .sum::<f64>()
            / base;
        let q_gen = (v[i] * current[i].conj()).im + q_load;
        let fixed = if q_gen > q_max {
            Some(q_max)
        } else if q_gen < q_min {
            Some(q_min)
        } else {
            None
        };
        match fixed {
            Some(q) => {
                net.s_sched[i].im = q - q_load;
                net.pq.push(i);
                switched = true;
            }
            None => still_pv.push(i),
        }
    }
    net.pv = still_pv;
    net.pq.sort_unstable();
    switched
}

pub(crate) struct RawOutcome {
    pub converged: bool,
    pub iterations: usize,
    pub max_mismatch: f64,
    pub v: Vec<Complex64>,
}

pub(crate) fn finish(case: &GridCase, ybus: &AdmittanceMatrix, raw: RawOutcome) -> PowerFlowSolution {
    let v = raw.v;
    let current = ybus.mul_vec(&v);
    let s_inj: Vec<Complex64> = v.iter().zip(&current).map(|(v, i)| v * i.conj()).collect();
    let index = case.bus_index();
    let m = case.branches.len();
    let mut p_from = vec![0.0; m];
    let mut p_to = vec![0.0; m];
    let mut q_from = vec![0.0; m];
    let mut q_to = vec![0.0; m];
    for (k, br) in case.branches.iter().enumerate() {
        if !br.in_service {
            continue;
        }
        let [yff, yft, ytf, ytt] =
            ybus::branch_admittances(br).expect("admittance checked during assembly");
        let vf = v[index[&br.from_bus]];
        let vt = v[index[&br.to_bus]];
        let sf = vf * (yff * vf + yft * vt).conj();
        let st = vt * (ytf * vf + ytt * vt).conj();
        p_from[k] = sf.re;
        q_from[k] = sf.im;
        p_to[k] = st.re;
        q_to[k] = st.im;
    }
    PowerFlowSolution {
        converged: raw.converged,
        iterations: raw.iterations,
        max_mismatch: raw.max_mismatch,
        v_mag: v.iter().map(|v| v.norm()).collect(),
        v_ang: v.iter().map(|v| v.arg()).collect(),
        p_inj: s_inj.iter().map(|s| s.re).collect(),
        q_inj: s_inj.iter().map(|s| s.im).collect(),
        branch_p_from: p_from,
        branch_p_to: p_to,
        branch_q_from: q_from,
        branch_q_to: q_to,
    }
}
