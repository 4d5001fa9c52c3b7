use num_complex::Complex64;

use super::{finish, newton::mismatch, Network, PowerFlowSolution, RawOutcome, SolverSettings};
use crate::error::Result;
use crate::grid::GridCase;

/// Classic complex fixed-point power flow, kept as an independent check on
/// [`super::solve`]. Starts flat; PV buses recompute their reactive
/// injection each sweep and are pulled back to their magnitude setpoint.
pub fn gauss_seidel_reference(
    case: &GridCase,
    tolerance: f64,
    max_iterations: usize,
) -> Result<PowerFlowSolution> {
    let net = Network::new(case, &SolverSettings::default())?;
    let y = &net.ybus;
    let n = y.n();
    let mut v = net.v0.clone();
    let mut s = net.s_sched.clone();
    let setpoint: Vec<f64> = v.iter().map(|v| v.norm()).collect();
    let mut is_pv = vec![false; n];
    for &i in &net.pv {
        is_pv[i] = true;
    }

    let mut norm = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iterations {
        let f = mismatch(y, &v, &s, &net.pv, &net.pq);
        norm = f.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if norm <= tolerance || !norm.is_finite() {
            break;
        }
        iterations += 1;
        for i in 0..n {
            if i == net.slack {
                continue;
            }
            let row = y.row(i);
            let others: Complex64 = (0..n).filter(|&k| k != i).map(|k| row[k] * v[k]).sum();
            if is_pv[i] {
                s[i].im = (v[i] * (others + row[i] * v[i]).conj()).im;
            }
            let mut vi = ((s[i] / v[i]).conj() - others) / row[i];
            if is_pv[i] {
                vi = vi * (setpoint[i] / vi.norm());
            }
            v[i] = vi;
        }
    }

    Ok(finish(
        case,
        y,
        RawOutcome {
            converged: norm <= tolerance,
            iterations,
            max_mismatch: norm,
            v,
        },
    ))
}
