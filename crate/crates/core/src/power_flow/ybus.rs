use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{Branch, GridCase};

/// Dense bus admittance matrix, row-major, in case bus order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmittanceMatrix {
    n: usize,
    data: Vec<Complex64>,
}

impl AdmittanceMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![Complex64::new(0.0, 0.0); n * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.n + j]
    }

    #[inline]
    fn add(&mut self, i: usize, j: usize, y: Complex64) {
        self.data[i * self.n + j] += y;
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// Injected currents `Y·V`.
    pub fn mul_vec(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(v.len(), self.n);
        (0..self.n)
            .map(|i| self.row(i).iter().zip(v).map(|(y, v)| y * v).sum())
            .collect()
    }
}

/// The four pi-model entries `(y_ff, y_ft, y_tf, y_tt)` of a branch.
pub(crate) fn branch_admittances(br: &Branch) -> Result<[Complex64; 4]> {
    let z = Complex64::new(br.r, br.x);
    if z.norm_sqr() == 0.0 {
        return Err(Error::SingularBranch(br.id));
    }
    let ys = z.inv();
    let half_charging = Complex64::new(0.0, br.b_ch / 2.0);
    let tap = br.tap;
    Ok([
        (ys + half_charging) / (tap * tap),
        -ys / tap,
        -ys / tap,
        ys + half_charging,
    ])
}

/// Assembles the admittance matrix from in-service branches and bus shunts.
pub fn build_ybus(case: &GridCase) -> Result<AdmittanceMatrix> {
    let index = case.bus_index();
    let mut y = AdmittanceMatrix::zeros(case.buses.len());
    for br in case.branches.iter().filter(|b| b.in_service) {
        let f = index[&br.from_bus];
        let t = index[&br.to_bus];
        let [yff, yft, ytf, ytt] = branch_admittances(br)?;
        y.add(f, f, yff);
        y.add(f, t, yft);
        y.add(t, f, ytf);
        y.add(t, t, ytt);
    }
    for (i, bus) in case.buses.iter().enumerate() {
        y.add(i, i, Complex64::new(bus.g_sh, bus.b_sh));
    }
    Ok(y)
}
