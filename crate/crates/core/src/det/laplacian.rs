use crate::lattice::CircleLattice;

/// `D (v[k+1] - 2 v[k] + v[k-1]) / h^2` with periodic indices.
pub fn discrete_laplacian(v: &[f64], lattice: &CircleLattice) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    discrete_laplacian_into(v, lattice, &mut out);
    out
}

pub(crate) fn discrete_laplacian_into(v: &[f64], lattice: &CircleLattice, out: &mut [f64]) {
    second_difference_into(v, out);
    let s = lattice.stiffness();
    for o in out.iter_mut() {
        *o *= s;
    }
}

/// Unscaled periodic second difference `v[k+1] - 2 v[k] + v[k-1]`.
pub(crate) fn second_difference_into(v: &[f64], out: &mut [f64]) {
    let n = v.len();
    debug_assert_eq!(out.len(), n);
    match n {
        0 => {}
        1 => out[0] = 0.0,
        _ => {
            out[0] = v[1] - 2.0 * v[0] + v[n - 1];
            for k in 1..n - 1 {
                out[k] = v[k + 1] - 2.0 * v[k] + v[k - 1];
            }
            out[n - 1] = v[0] - 2.0 * v[n - 1] + v[n - 2];
        }
    }
}

/// Solves `(I - c * Delta) x = r` where `Delta` is the periodic second
/// difference, i.e. the circulant tridiagonal matrix with `1 + 2c` on the
/// diagonal and `-c` off it (corners included).
///
/// Sherman-Morrison on top of the Thomas algorithm; O(n) per solve with
/// reusable scratch space.
#[derive(Debug, Clone, Default)]
pub struct CirculantSolver {
    gam: Vec<f64>,
    y: Vec<f64>,
    z: Vec<f64>,
    u: Vec<f64>,
}

impl CirculantSolver {
    pub fn new(n: usize) -> Self {
        Self {
            gam: vec![0.0; n],
            y: vec![0.0; n],
            z: vec![0.0; n],
            u: vec![0.0; n],
        }
    }

    pub fn solve(&mut self, c: f64, r: &[f64], x: &mut [f64]) {
        let n = r.len();
        debug_assert!(c >= 0.0);
        match n {
            0 => return,
            1 => {
                x[0] = r[0];
                return;
            }
            2 => {
                // both neighbours are the same compartment
                let (d, o) = (1.0 + 2.0 * c, -2.0 * c);
                let det = d * d - o * o;
                x[0] = (d * r[0] - o * r[1]) / det;
                x[1] = (d * r[1] - o * r[0]) / det;
                return;
            }
            _ => {}
        }
        if c == 0.0 {
            x.copy_from_slice(r);
            return;
        }
        if self.gam.len() != n {
            *self = Self::new(n);
        }
        let b = 1.0 + 2.0 * c;
        let a = -c;
        let gamma = -b;
        // T = A - u v^T with u = (gamma, 0, .., 0, a), v = (1, 0, .., 0, a / gamma)
        let first = b - gamma;
        let last = b - a * a / gamma;
        self.u.fill(0.0);
        self.u[0] = gamma;
        self.u[n - 1] = a;
        thomas(a, b, first, last, r, &mut self.gam, &mut self.y);
        thomas(a, b, first, last, &self.u, &mut self.gam, &mut self.z);
        let vy = self.y[0] + self.y[n - 1] * a / gamma;
        let vz = self.z[0] + self.z[n - 1] * a / gamma;
        let factor = vy / (1.0 + vz);
        for ((xi, yi), zi) in x.iter_mut().zip(&self.y).zip(&self.z) {
            *xi = yi - factor * zi;
        }
    }
}

/// Constant off-diagonal `a`, interior diagonal `b`, modified end diagonals.
fn thomas(a: f64, b: f64, first: f64, last: f64, r: &[f64], gam: &mut [f64], x: &mut [f64]) {
    let n = r.len();
    let mut bet = first;
    x[0] = r[0] / bet;
    for j in 1..n {
        gam[j] = a / bet;
        let diag = if j == n - 1 { last } else { b };
        bet = diag - a * gam[j];
        x[j] = (r[j] - a * x[j - 1]) / bet;
    }
    for j in (0..n - 1).rev() {
        let next = x[j + 1];
        x[j] -= gam[j + 1] * next;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lat(n: usize, l: f64, d: f64) -> CircleLattice {
        CircleLattice::new(n, l, d).unwrap()
    }

    #[test]
    fn stencil_values() {
        assert_eq!(
            discrete_laplacian(&[1.0, 0.0, 0.0, 0.0], &lat(4, 4.0, 1.0)),
            vec![-2.0, 1.0, 0.0, 1.0]
        );
        assert!(discrete_laplacian(&[3.5; 9], &lat(9, 2.0, 0.7))
            .iter()
            .all(|&x| x == 0.0));
    }

    #[test]
    fn cosine_is_an_eigenvector() {
        let (n, l, d) = (32, 3.0, 0.8);
        let la = lat(n, l, d);
        let h = la.h();
        let v: Vec<f64> = (0..n)
            .map(|k| (2.0 * std::f64::consts::PI * k as f64 / n as f64).cos())
            .collect();
        let eig = -(2.0 - 2.0 * (2.0 * std::f64::consts::PI * h / l).cos()) * d / (h * h);
        let out = discrete_laplacian(&v, &la);
        for (o, vi) in out.iter().zip(&v) {
            assert!((o - eig * vi).abs() < 1e-10);
        }
    }

    fn apply(c: f64, x: &[f64]) -> Vec<f64> {
        let mut d2 = vec![0.0; x.len()];
        second_difference_into(x, &mut d2);
        x.iter().zip(&d2).map(|(xi, di)| xi - c * di).collect()
    }

    proptest! {
        #[test]
        fn solver_inverts_the_operator(
            r in proptest::collection::vec(-10.0f64..10.0, 1..60),
            c in 0.0f64..500.0,
        ) {
            let mut solver = CirculantSolver::new(r.len());
            let mut x = vec![0.0; r.len()];
            solver.solve(c, &r, &mut x);
            let back = apply(c, &x);
            for (b, ri) in back.iter().zip(&r) {
                prop_assert!((b - ri).abs() < 1e-9 * (1.0 + c));
            }
        }

        #[test]
        fn laplacian_conserves_sum(v in proptest::collection::vec(-5.0f64..5.0, 2..80)) {
            let out = discrete_laplacian(&v, &lat(v.len(), 2.0, 1.3));
            let norm = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let s: f64 = out.iter().sum();
            prop_assert!(s.abs() <= 1e-10 * v.len() as f64 * norm);
        }
    }
}
