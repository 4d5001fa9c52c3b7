//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::path::PathBuf;

use gridrl::grid::{apply_generator_setpoints, load_case, BusKind, GridCase};
use gridrl::power_flow::newton::{jacobian, mismatch};
use gridrl::power_flow::{solve, Network, SolverSettings};
use gridrl::sac::{AgentCheckpoint, FeedForwardNet, ReplayBuffer, SacAgent, SacConfig, Transition, UpdateOutcome};
use gridrl::security::RewardConfig;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn repo(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

pub fn bundled(name: &str) -> GridCase {
    load_case(repo(&format!("cases/{name}.json"))).unwrap()
}

/// Dense bus admittance matrix from the π model with a from-side tap.
pub fn ybus_oracle(case: &GridCase) -> Vec<Vec<Complex64>> {
    let n = case.buses.len();
    let idx = |id: u32| case.buses.iter().position(|b| b.id == id).unwrap();
    let mut y = vec![vec![Complex64::new(0.0, 0.0); n]; n];
    for br in case.branches.iter().filter(|b| b.in_service) {
        let (f, t) = (idx(br.from_bus), idx(br.to_bus));
        let ys = Complex64::new(1.0, 0.0) / Complex64::new(br.r, br.x);
        let half = Complex64::new(0.0, br.b_ch / 2.0);
        y[f][f] += (ys + half) / (br.tap * br.tap);
        y[t][t] += ys + half;
        y[f][t] -= ys / br.tap;
        y[t][f] -= ys / br.tap;
    }
    for (i, b) in case.buses.iter().enumerate() {
        y[i][i] += Complex64::new(b.g_sh, b.b_sh);
    }
    y
}

/// Scheduled per-unit injection at each bus.
pub fn scheduled(case: &GridCase) -> Vec<Complex64> {
    case.buses
        .iter()
        .map(|b| {
            let g: Complex64 = case
                .generators
                .iter()
                .filter(|g| g.bus_id == b.id)
                .map(|g| Complex64::new(g.p_mw, g.q_mvar))
                .sum();
            let l: Complex64 = case
                .loads
                .iter()
                .filter(|l| l.bus_id == b.id)
                .map(|l| Complex64::new(l.p_mw, l.q_mvar))
                .sum();
            (g - l) / case.base_mva
        })
        .collect()
}

/// Gauss-Seidel fixed point from a flat start. `None` when it fails to
/// reach `tol` (largest voltage update) within `max_sweeps`.
pub fn gauss_seidel(case: &GridCase, tol: f64, max_sweeps: usize) -> Option<Vec<Complex64>> {
    let y = ybus_oracle(case);
    let s = scheduled(case);
    let n = case.buses.len();
    let mut v: Vec<Complex64> = case
        .buses
        .iter()
        .map(|b| match b.kind {
            BusKind::Slack => Complex64::from_polar(b.v_mag, b.v_ang_deg.to_radians()),
            BusKind::Pv => Complex64::new(b.v_mag, 0.0),
            BusKind::Pq => Complex64::new(1.0, 0.0),
        })
        .collect();
    for _ in 0..max_sweeps {
        let mut largest: f64 = 0.0;
        for i in 0..n {
            let kind = case.buses[i].kind;
            if kind == BusKind::Slack {
                continue;
            }
            let yv: Complex64 = (0..n).map(|k| y[i][k] * v[k]).sum();
            let mut si = s[i];
            if kind == BusKind::Pv {
                si.im = (v[i] * yv.conj()).im;
            }
            let others = yv - y[i][i] * v[i];
            let mut next = ((si / v[i]).conj() - others) / y[i][i];
            if kind == BusKind::Pv {
                next = next * (case.buses[i].v_mag / next.norm());
            }
            largest = largest.max((next - v[i]).norm());
            v[i] = next;
        }
        if !largest.is_finite() {
            return None;
        }
        if largest < tol {
            return Some(v);
        }
    }
    None
}

/// Receiving-end voltage of a lossless line with reactance `x` fed at 1 pu
/// and loaded with `p + jq`: the high-voltage root of
/// `u² + (2qx − 1)u + x²(p² + q²) = 0` in `u = |V₂|²`.
pub fn two_bus_closed_form(p: f64, q: f64, x: f64) -> f64 {
    let b = 1.0 - 2.0 * q * x;
    let disc = b * b - 4.0 * x * x * (p * p + q * q);
    ((b + disc.sqrt()) / 2.0).sqrt()
}

/// Per-unit active flows at both ends of every branch for voltages `v`.
pub fn branch_flows(case: &GridCase, v: &[Complex64]) -> Vec<(f64, f64)> {
    let idx = |id: u32| case.buses.iter().position(|b| b.id == id).unwrap();
    case.branches
        .iter()
        .map(|br| {
            if !br.in_service {
                return (0.0, 0.0);
            }
            let (vf, vt) = (v[idx(br.from_bus)], v[idx(br.to_bus)]);
            let ys = Complex64::new(1.0, 0.0) / Complex64::new(br.r, br.x);
            let half = Complex64::new(0.0, br.b_ch / 2.0);
            let i_f = (ys + half) / (br.tap * br.tap) * vf - ys / br.tap * vt;
            let i_t = (ys + half) * vt - ys / br.tap * vf;
            ((vf * i_f.conj()).re, (vt * i_t.conj()).re)
        })
        .collect()
}

/// Total MW above `b · p_limit` over the monitored lines other than `skip`.
fn excess_mw(case: &GridCase, v: &[Complex64], monitored: &[u32], b: f64, skip: Option<u32>) -> f64 {
    let flows = branch_flows(case, v);
    case.branches
        .iter()
        .zip(flows)
        .filter(|(br, _)| monitored.contains(&br.id) && Some(br.id) != skip)
        .map(|(br, (pf, pt))| {
            let mw = pf.abs().max(pt.abs()) * case.base_mva;
            (mw - b * br.p_limit_mw).max(0.0)
        })
        .sum()
}

/// Contingency term by re-solving every outage that keeps the network
/// connected and pricing overloads from the oracle's own flow equations.
pub fn brute_force_r_con(case: &GridCase, a: f64, b: f64, divergence_penalty: f64) -> f64 {
    let monitored = case.monitored_branch_ids();
    let mut total = 0.0;
    for &id in &monitored {
        let outaged = case.with_outage(id);
        if !outaged.unreachable_buses(None).is_empty() {
            continue;
        }
        let sol = solve(&outaged, &SolverSettings::default()).unwrap();
        if !sol.converged {
            total -= divergence_penalty;
            continue;
        }
        total -= a * excess_mw(&outaged, &sol.voltages(), &monitored, b, Some(id));
    }
    total
}

/// Base-case term from the oracle's own flow equations.
pub fn brute_force_r_base(case: &GridCase, a: f64, b: f64) -> f64 {
    let sol = solve(case, &SolverSettings::default()).unwrap();
    assert!(sol.converged);
    -a * excess_mw(case, &sol.voltages(), &case.monitored_branch_ids(), b, None)
}

/// Largest deviation between the analytic Jacobian and central differences
/// of the mismatch, relative to the largest Jacobian entry.
pub fn jacobian_fd_error(net: &Network, v: &[Complex64]) -> f64 {
    let analytic = jacobian(&net.ybus, v, &net.pv, &net.pq);
    let angle: Vec<usize> = net.pv.iter().chain(&net.pq).copied().collect();
    let h = 1e-6;
    let eval = |v: &[Complex64]| mismatch(&net.ybus, v, &net.s_sched, &net.pv, &net.pq);
    let perturb = |col: usize, d: f64| {
        let mut p = v.to_vec();
        if col < angle.len() {
            let i = angle[col];
            p[i] *= Complex64::from_polar(1.0, d);
        } else {
            let i = net.pq[col - angle.len()];
            p[i] = Complex64::from_polar(p[i].norm() + d, p[i].arg());
        }
        p
    };
    let scale = analytic.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut worst = 0.0f64;
    for col in 0..analytic.ncols() {
        let up = eval(&perturb(col, h));
        let down = eval(&perturb(col, -h));
        for row in 0..analytic.nrows() {
            let fd = (up[row] - down[row]) / (2.0 * h);
            worst = worst.max((fd - analytic[(row, col)]).abs() / scale);
        }
    }
    worst
}

/// Central differences of `f` at the parameters of `net`, step `h`.
pub fn fd_gradient(net: &FeedForwardNet, h: f64, f: impl Fn(&FeedForwardNet) -> f64) -> Vec<f64> {
    let mut probe = net.clone();
    (0..net.num_params())
        .map(|k| {
            let x = net.params()[k];
            probe.params_mut()[k] = x + h;
            let up = f(&probe);
            probe.params_mut()[k] = x - h;
            let down = f(&probe);
            probe.params_mut()[k] = x;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest elementwise `|a − b| / max(|a|, |b|, floor)`.
pub fn max_relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Generator setpoints on a `levels`-point grid over every controllable
/// generator's range, in odometer order.
pub fn generator_lattice(case: &GridCase, levels: usize) -> Vec<Vec<f64>> {
    let gens: Vec<_> = case.controllable_generators().collect();
    let total = levels.pow(gens.len() as u32);
    (0..total)
        .map(|mut code| {
            gens.iter()
                .map(|g| {
                    let k = code % levels;
                    code /= levels;
                    g.p_min_mw + (g.p_max_mw - g.p_min_mw) * k as f64 / (levels - 1) as f64
                })
                .collect()
        })
        .collect()
}

/// Lattice points whose case is fully N-1 secure, judged by the
/// brute-force outage oracle.
pub fn secure_lattice_points(case: &GridCase, levels: usize) -> Vec<Vec<f64>> {
    let reward = RewardConfig::default();
    let settings = SolverSettings::default();
    generator_lattice(case, levels)
        .into_iter()
        .filter(|p| {
            let c = apply_generator_setpoints(case, p).unwrap();
            let sol = solve(&c, &settings).unwrap();
            sol.converged
                && excess_mw(&c, &sol.voltages(), &c.monitored_branch_ids(), reward.b, None) == 0.0
                && brute_force_r_con(&c, reward.a, reward.b, 1.0) == 0.0
        })
        .collect()
}

/// The 3-bus ring with a fourth bus fed from buses 2 and 3: five branches,
/// no bridges.
pub fn four_bus_mesh() -> GridCase {
    let mut case = bundled("ring3");
    let mut bus = case.buses[2].clone();
    bus.id = 4;
    case.buses.push(bus);
    let mut load = case.loads[0].clone();
    load.id = 3;
    load.bus_id = 4;
    load.p_mw = 30.0;
    case.loads.push(load);
    for (id, from) in [(4, 2), (5, 3)] {
        let mut br = case.branches[0].clone();
        br.id = id;
        br.from_bus = from;
        br.to_bus = 4;
        case.branches.push(br);
    }
    case.validate().unwrap();
    case
}

/// The 3-bus ring with a radial spur to a fourth bus; branch 4 is a bridge.
pub fn ring_with_spur() -> GridCase {
    let mut case = four_bus_mesh();
    case.branches.pop();
    case
}

/// `base` with random loads, controllable generation and line limits.
pub fn random_variant<R: rand::Rng>(base: &GridCase, rng: &mut R) -> GridCase {
    let mut case = base.clone();
    for l in &mut case.loads {
        l.p_mw = rng.random_range(10.0..90.0);
        l.q_mvar = rng.random_range(0.0..20.0);
    }
    for g in case.generators.iter_mut().filter(|g| g.controllable) {
        g.p_mw = rng.random_range(g.p_min_mw..g.p_max_mw);
    }
    for br in &mut case.branches {
        br.p_limit_mw = rng.random_range(50.0..200.0);
    }
    case
}

/// Single-state bandit with reward `−(a − optimum)²`, with the policy's
/// mean head biased to `initial_mean` before training. Returns the
/// deterministic action before and after `updates` gradient updates.
pub fn bandit(seed: u64, optimum: f64, initial_mean: f64, updates: usize) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = SacConfig {
        alpha: 0.01,
        lr_policy: 1e-3,
        lr_q: 1e-3,
        lr_value: 1e-3,
        hidden: vec![32, 32],
        buffer_capacity: 10_000,
        seed,
        ..Default::default()
    };
    let agent = SacAgent::new(1, 1, cfg, &mut rng).unwrap();
    let mut ckpt = AgentCheckpoint::from_agent(&agent, ());
    // output biases close the parameter vector as [mean; log-std]
    let n = ckpt.policy.num_params();
    ckpt.policy.params_mut()[n - 2] = initial_mean;
    let mut agent = ckpt.to_agent().unwrap();
    let state = [1.0];
    let before = agent.act(&state, true, &mut rng).unwrap()[0];
    let mut buf = ReplayBuffer::new(10_000);
    let mut done = 0;
    while done < updates {
        let a = agent.act(&state, false, &mut rng).unwrap();
        buf.push(Transition {
            state: state.to_vec(),
            reward: -(a[0] - optimum).powi(2),
            action: a,
            next_state: state.to_vec(),
            done: true,
        });
        if let UpdateOutcome::Updated(_) = agent.update(&buf, &mut rng).unwrap() {
            done += 1;
        }
    }
    (before, agent.act(&state, true, &mut rng).unwrap()[0])
}
