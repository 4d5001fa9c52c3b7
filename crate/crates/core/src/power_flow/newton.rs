//! Polar Newton-Raphson iteration.
//!
//! Unknowns are ordered `[θ(pv ∪ pq); |V|(pq)]`, equations
//! `[ΔP(pv ∪ pq); ΔQ(pq)]`, where `pv ∪ pq` is the PV list followed by the
//! PQ list.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::{AdmittanceMatrix, Network, RawOutcome};

/// Stacked mismatch vector `[Re(V·conj(YV) − S); Im(...)]`.
pub fn mismatch(
    ybus: &AdmittanceMatrix,
    v: &[Complex64],
    s_sched: &[Complex64],
    pv: &[usize],
    pq: &[usize],
) -> Vec<f64> {
    let current = ybus.mul_vec(v);
    let mis: Vec<Complex64> = v
        .iter()
        .zip(&current)
        .zip(s_sched)
        .map(|((v, i), s)| v * i.conj() - s)
        .collect();
    pv.iter()
        .chain(pq)
        .map(|&i| mis[i].re)
        .chain(pq.iter().map(|&i| mis[i].im))
        .collect()
}

/// Analytic Jacobian of [`mismatch`] with respect to `[θ(pv ∪ pq); |V|(pq)]`.
pub fn jacobian(ybus: &AdmittanceMatrix, v: &[Complex64], pv: &[usize], pq: &[usize]) -> DMatrix<f64> {
    let current = ybus.mul_vec(v);
    let angle_buses: Vec<usize> = pv.iter().chain(pq).copied().collect();
    let na = angle_buses.len();
    let dim = na + pq.len();
    let j = Complex64::new(0.0, 1.0);

    // dS_i/dθ_k and dS_i/d|V|_k
    let ds_dva = |i: usize, k: usize| {
        let diag = if i == k { current[i] } else { Complex64::new(0.0, 0.0) };
        j * v[i] * (diag - ybus.get(i, k) * v[k]).conj()
    };
    let ds_dvm = |i: usize, k: usize| {
        let unit_k = v[k] / v[k].norm();
        let mut d = v[i] * (ybus.get(i, k) * unit_k).conj();
        if i == k {
            d += current[i].conj() * unit_k;
        }
        d
    };

    let mut jac = DMatrix::zeros(dim, dim);
    for (r, &i) in angle_buses.iter().enumerate() {
        for (c, &k) in angle_buses.iter().enumerate() {
            jac[(r, c)] = ds_dva(i, k).re;
        }
        for (c, &k) in pq.iter().enumerate() {
            jac[(r, na + c)] = ds_dvm(i, k).re;
        }
    }
    for (r, &i) in pq.iter().enumerate() {
        for (c, &k) in angle_buses.iter().enumerate() {
            jac[(na + r, c)] = ds_dva(i, k).im;
        }
        for (c, &k) in pq.iter().enumerate() {
            jac[(na + r, na + c)] = ds_dvm(i, k).im;
        }
    }
    jac
}

fn inf_norm(f: &[f64]) -> f64 {
    f.iter().fold(0.0, |m, x| if x.is_nan() { f64::NAN } else { m.max(x.abs()) })
}

pub(crate) fn newton_raphson(net: &Network, tolerance: f64, max_iterations: usize) -> RawOutcome {
    let mut vm: Vec<f64> = net.v0.iter().map(|v| v.norm()).collect();
    let mut va: Vec<f64> = net.v0.iter().map(|v| v.arg()).collect();
    let mut v = net.v0.clone();
    let angle_buses: Vec<usize> = net.pv.iter().chain(&net.pq).copied().collect();

    let mut f = mismatch(&net.ybus, &v, &net.s_sched, &net.pv, &net.pq);
    let mut norm = inf_norm(&f);
    let mut iterations = 0;

    while !(norm <= tolerance) && iterations < max_iterations && norm.is_finite() {
        iterations += 1;
        let jac = jacobian(&net.ybus, &v, &net.pv, &net.pq);
        let rhs = DVector::from_iterator(f.len(), f.iter().map(|x| -x));
        let Some(dx) = jac.lu().solve(&rhs) else {
            break;
        };
        for (k, &i) in angle_buses.iter().enumerate() {
            va[i] += dx[k];
        }
        for (k, &i) in net.pq.iter().enumerate() {
            vm[i] += dx[angle_buses.len() + k];
        }
        for i in 0..v.len() {
            v[i] = Complex64::from_polar(vm[i], va[i]);
        }
        f = mismatch(&net.ybus, &v, &net.s_sched, &net.pv, &net.pq);
        norm = inf_norm(&f);
    }

    RawOutcome {
        converged: norm <= tolerance,
        iterations,
        max_mismatch: norm,
        v,
    }
}
