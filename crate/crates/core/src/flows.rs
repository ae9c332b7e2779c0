//! Discrete flows on the torus connecting the Dirac mass at the origin to the
//! block kernel `q^l`, their divergence, the divergence formula and energies.
//!
//! The flow is built by mass transport through a chain of product measures
//! `delta_0 = u_1 -> u_2 -> u_4 -> ... -> u_M -> q^l`, where `u_m` is uniform on
//! `{0..m-1}^d` and `M` is the largest power of two not above `l`. Each link
//! changes one coordinate factor at a time. Along an axis, the one-dimensional
//! flow is the cumulative surplus `Phi(t) = sum_{s <= t} (a(s) - b(s))`,
//! weighted by the product of the other coordinate factors. Every link moves
//! mass by at most its own scale, so the energy is dominated by the short
//! scales and grows like `g_d(l)`. A single sweep from `delta_0` straight to
//! `q^l` would instead cost order `l` in every dimension.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::block_kernels;
use crate::lattice::Torus;
use crate::theory::g_d;

/// An antisymmetric bond function: `values[axis * n^d + x] = phi(x, x + e_axis)`,
/// and `phi(x + e_axis, x)` is its negative.
#[derive(Clone, Debug, PartialEq)]
pub struct Flow {
    torus: Torus,
    values: Vec<f64>,
}

impl Flow {
    pub fn zero(torus: Torus) -> Self {
        Self { values: vec![0.0; torus.edge_count()], torus }
    }

    pub fn torus(&self) -> &Torus {
        &self.torus
    }

    /// `phi(x, x + e_axis)`.
    pub fn forward(&self, x: usize, axis: usize) -> f64 {
        self.values[axis * self.torus.sites() + x]
    }

    /// `phi(x, y)` for nearest neighbours, `0` otherwise.
    pub fn value(&self, x: usize, y: usize) -> f64 {
        for axis in 0..self.torus.dim() {
            if self.torus.step(x, axis, 1) == y {
                return self.forward(x, axis);
            }
            if self.torus.step(x, axis, -1) == y {
                return -self.forward(y, axis);
            }
        }
        0.0
    }

    pub fn bonds(&self) -> &[f64] {
        &self.values
    }

    /// Net outflow `sum_{y ~ x} phi(x, y)` at every site.
    pub fn divergence(&self) -> Vec<f64> {
        let t = &self.torus;
        (0..t.sites())
            .map(|x| (0..t.dim()).map(|a| self.forward(x, a) - self.forward(t.step(x, a, -1), a)).sum())
            .collect()
    }

    /// `sum_{x ~ y} phi(x, y)^2` over unordered bonds.
    pub fn energy(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    /// True when `phi(x, .)` vanishes for every `x` outside `{0..side-1}^d`.
    pub fn supported_in_cube(&self, side: usize) -> bool {
        let t = &self.torus;
        let inside = |x: usize| (0..t.dim()).all(|a| t.coord(x, a) < side);
        (0..t.sites()).all(|x| {
            inside(x)
                || (0..t.dim()).all(|a| self.forward(x, a) == 0.0 && self.forward(t.step(x, a, -1), a) == 0.0)
        })
    }
}

/// `delta_0 - q^l` as a site function.
pub fn source_minus_kernel(torus: &Torus, ell: usize) -> Result<Vec<f64>> {
    let k = block_kernels(ell, torus.n(), torus.dim())?;
    let mut out = vec![0.0; torus.sites()];
    let side = k.q1.len();
    for (i, w) in k.q_table().into_iter().enumerate() {
        let mut r = i;
        let mut coords = [0i64; 3];
        for c in coords.iter_mut().take(torus.dim()) {
            *c = (r % side) as i64;
            r /= side;
        }
        out[torus.index(&coords[..torus.dim()]).linear()] -= w;
    }
    out[0] += 1.0;
    Ok(out)
}

/// Uniform law on `{0..m-1}` as a vector of length `len`.
fn uniform(m: usize, len: usize) -> Vec<f64> {
    (0..len).map(|j| if j < m { 1.0 / m as f64 } else { 0.0 }).collect()
}

/// Flow connecting `delta_0` to `q^l`; needs `2l - 1 < n/2`.
pub fn build_flow(ell: usize, n: usize, d: usize) -> Result<Flow> {
    if ell == 0 || 2 * (2 * ell - 1) >= n {
        return Err(Error::Size(format!("flow of scale l = {ell} needs 2l - 1 < n/2, n = {n}")));
    }
    let torus = Torus::new(n, d)?;
    let kernels = block_kernels(ell, n, d)?;
    let len = kernels.q1.len();
    let mut chain = vec![uniform(1, len)];
    let mut m = 2;
    while m <= ell {
        chain.push(uniform(m, len));
        m *= 2;
    }
    chain.push(kernels.q1.clone());
    let mut flow = Flow::zero(torus);
    for link in chain.windows(2) {
        transport_product(&mut flow, &link[0], &link[1]);
    }
    Ok(flow)
}

/// Adds the flow taking `a^{(x)d}` to `b^{(x)d}` one axis at a time.
fn transport_product(flow: &mut Flow, a: &[f64], b: &[f64]) {
    let t = flow.torus;
    let d = t.dim();
    let len = a.len();
    // cumulative surplus on the path 0 -> 1 -> ... -> len-1
    let mut phi = vec![0.0; len];
    let mut acc = 0.0;
    for j in 0..len {
        acc += a[j] - b[j];
        phi[j] = acc;
    }
    // both laws have unit mass, so the last surplus is zero up to rounding
    phi[len - 1] = 0.0;
    for axis in 0..d {
        // axes before `axis` already carry b, axes after still carry a
        let cells = len.pow(d as u32);
        for cell in 0..cells {
            let mut r = cell;
            let mut coords = [0usize; 3];
            for c in coords.iter_mut().take(d) {
                *c = r % len;
                r /= len;
            }
            let t_axis = coords[axis];
            if phi[t_axis] == 0.0 {
                continue;
            }
            let weight: f64 = (0..d)
                .filter(|&i| i != axis)
                .map(|i| if i < axis { b[coords[i]] } else { a[coords[i]] })
                .product();
            if weight == 0.0 {
                continue;
            }
            let signed: Vec<i64> = coords[..d].iter().map(|&c| c as i64).collect();
            let x = t.index(&signed).linear();
            flow.values[axis * t.sites() + x] += weight * phi[t_axis];
        }
    }
}

/// `sum_x g(x) (p(x) - q(x))` and `sum_{x~y} phi(x, y) (g(x) - g(y))`.
pub fn divergence_formula_sides(flow: &Flow, p: &[f64], q: &[f64], g: &[f64]) -> (f64, f64) {
    let t = flow.torus;
    let lhs = g.iter().zip(p).zip(q).map(|((gx, px), qx)| gx * (px - qx)).sum();
    let mut rhs = 0.0;
    for axis in 0..t.dim() {
        for x in 0..t.sites() {
            rhs += flow.forward(x, axis) * (g[x] - g[t.step(x, axis, 1)]);
        }
    }
    (lhs, rhs)
}

/// The divergence formula to `1e-10`.
pub fn divergence_formula_check(flow: &Flow, p: &[f64], q: &[f64], g: &[f64]) -> bool {
    let (lhs, rhs) = divergence_formula_sides(flow, p, q, g);
    (lhs - rhs).abs() <= 1e-10
}

/// Minimal energy among flows supported on the cube `{0..2l-2}^d` with the
/// same divergence: `phi = u(x) - u(y)` where `u` solves the graph Laplacian
/// of the cube by conjugate gradients.
pub fn min_energy(ell: usize, d: usize) -> f64 {
    let side = 2 * ell - 1;
    let cells = side.pow(d as u32);
    if cells == 1 {
        return 0.0;
    }
    let q = block_kernels(ell, 4 * side, d).expect("kernel fits").q_table();
    let mut rhs: Vec<f64> = q.iter().map(|w| -w).collect();
    rhs[0] += 1.0;
    let stride: Vec<usize> = (0..d).map(|a| side.pow(a as u32)).collect();
    let laplace = |u: &[f64], out: &mut [f64]| {
        for (c, o) in out.iter_mut().enumerate() {
            let mut v = 0.0;
            for (a, &s) in stride.iter().enumerate() {
                let coord = (c / s) % side;
                let _ = a;
                if coord + 1 < side {
                    v += u[c] - u[c + s];
                }
                if coord > 0 {
                    v += u[c] - u[c - s];
                }
            }
            *o = v;
        }
    };
    let mut u = vec![0.0; cells];
    let mut r = rhs.clone();
    let mut p = r.clone();
    let mut ap = vec![0.0; cells];
    let mut rr: f64 = r.iter().map(|v| v * v).sum();
    for _ in 0..10 * cells {
        if rr.sqrt() < 1e-13 {
            break;
        }
        laplace(&p, &mut ap);
        let alpha = rr / p.iter().zip(&ap).map(|(a, b)| a * b).sum::<f64>();
        for i in 0..cells {
            u[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let next: f64 = r.iter().map(|v| v * v).sum();
        let beta = next / rr;
        rr = next;
        for i in 0..cells {
            p[i] = r[i] + beta * p[i];
        }
    }
    // energy of the potential flow is <u, L u> = <u, rhs>
    u.iter().zip(&rhs).map(|(a, b)| a * b).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyRow {
    pub d: usize,
    pub ell: usize,
    pub energy: f64,
    pub ratio: f64,
    pub min_energy: f64,
    pub divergence_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyScaling {
    pub rows: Vec<EnergyRow>,
    /// `max / min` of `E(l) / g_d(l)` over the grid points with `l >= 2`.
    pub ratio_spread: f64,
    pub sup_ratio: f64,
}

impl EnergyScaling {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("d,ell,energy,energy_over_g_d,min_energy,divergence_residual\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{:.12e},{:.12e},{:.12e},{:.3e}\n",
                r.d, r.ell, r.energy, r.ratio, r.min_energy, r.divergence_residual
            ));
        }
        out
    }
}

/// Smallest torus on which a flow of scale `l` fits.
pub fn torus_size_for(ell: usize) -> usize {
    2 * (2 * ell - 1) + 1
}

/// Energies `E(l)` and `E(l) / g_d(l)` over a grid.
pub fn energy_scaling(ells: &[usize], d: usize) -> Result<EnergyScaling> {
    let mut rows = Vec::new();
    for &ell in ells {
        let n = torus_size_for(ell);
        let flow = build_flow(ell, n, d)?;
        let target = source_minus_kernel(flow.torus(), ell)?;
        let residual = flow.divergence().iter().zip(&target).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let energy = flow.energy();
        // g_d(1) is 0 in d = 2; the ratio is only meaningful from l = 2 on
        let ratio = if ell >= 2 { energy / g_d(ell, d) } else { f64::NAN };
        rows.push(EnergyRow { d, ell, energy, ratio, min_energy: min_energy(ell, d), divergence_residual: residual });
    }
    let ratios: Vec<f64> = rows.iter().filter(|r| r.ell >= 2).map(|r| r.ratio).collect();
    let max = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(EnergyScaling { rows, ratio_spread: max / min, sup_ratio: max })
}
