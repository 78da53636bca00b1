//! Equations of motion for both storage layouts.
//!
//! Writing the interaction as `sum_mu g_mu O^mu_i Obar^mu_j` and the
//! Hamiltonian as `sum_i h_i + sum_{i<j} V_ij`:
//!
//! * `d rho_i/dt = -i [h_i, rho_i] - i sum_mu g_mu [O_i, M_i]` with
//!   `M_i = sum_k J D_ik Tr_k(Obar_k rho_ik)`. Exact.
//! * `d rho_ij/dt = -i [h_i + h_j + V_ij, rho_ij] - i sum_mu g_mu (X + Y)`, where
//!   the third-site traces are evaluated on the closed three-site matrix
//!   `rho_ij x rho_k + rho_ik x rho_j + rho_jk x rho_i - 2 rho_i x rho_j x rho_k`.
//!
//! For site i of the pair (j mirrors it):
//! `X = c [O_i x 1, rho_ij] + [O_i, M_i - J D_ij Q_{i;j}] x rho_j
//!      + [O_i, rho_i] x (W_ij - 2 c rho_j)`
//! with `c = sum_{k != i,j} J D_ik <Obar_k>`, `Q_{i;k} = Tr_k(Obar_k rho_ik)` and
//! `W_ij = sum_{k != i,j} J D_ik Q_{j;k}`.

use num_complex::Complex64 as C;
use rayon::prelude::*;

use super::kernel::{self, Sparse, I, ZERO};
use super::{LocalOps, TceSystem};

/// Per-channel inputs of the pair equation.
struct Side {
    c: [C; 3],
    a: [Vec<C>; 3],
    b: [Vec<C>; 3],
}

fn single_rhs(lo: &LocalOps, rho: &[C], m: &[Vec<C>; 3], out: &mut [C]) {
    let d = lo.d;
    for r in 0..d {
        for c in 0..d {
            out[r * d + c] = -I * (lo.h[r] - lo.h[c]) * rho[r * d + c];
        }
    }
    for mu in 0..3 {
        let cm = kernel::comm(&lo.o[mu], &m[mu], d);
        let f = -I * lo.g[mu];
        for (o, v) in out.iter_mut().zip(cm) {
            *o += f * v;
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn pair_rhs(lo: &LocalOps, jd: f64, p: &[C], rho_i: &[C], rho_j: &[C], x: &Side, y: &Side, out: &mut [C]) {
    let d = lo.d;
    let d2 = d * d;
    for r in 0..d2 {
        let hr = lo.h[r / d] + lo.h[r % d];
        for c in 0..d2 {
            let hc = lo.h[c / d] + lo.h[c % d];
            out[r * d2 + c] = (hr - hc) * p[r * d2 + c];
        }
    }
    if jd != 0.0 {
        for mu in 0..3 {
            kernel::add_comm_product(out, &lo.o[mu], &lo.obar[mu], p, d, C::new(jd * lo.g[mu], 0.0));
        }
    }
    let mut zx = Sparse::default();
    let mut zy = Sparse::default();
    let mut lx = vec![ZERO; d2];
    let mut ly = vec![ZERO; d2];
    for mu in 0..3 {
        let g = C::new(lo.g[mu], 0.0);
        zx.extend(&lo.o[mu].scaled(g * x.c[mu]));
        zy.extend(&lo.o[mu].scaled(g * y.c[mu]));
        for (l, v) in lx.iter_mut().zip(kernel::comm(&lo.o[mu], &x.a[mu], d)) {
            *l += g * v;
        }
        for (l, v) in ly.iter_mut().zip(kernel::comm(&lo.o[mu], &y.a[mu], d)) {
            *l += g * v;
        }
        let ci = kernel::comm(&lo.o[mu], rho_i, d);
        let cj = kernel::comm(&lo.o[mu], rho_j, d);
        kernel::add_kron(out, &ci, &x.b[mu], d, g);
        kernel::add_kron(out, &y.b[mu], &cj, d, g);
    }
    kernel::add_comm_first(out, &zx, p, d);
    kernel::add_comm_second(out, &zy, p, d);
    kernel::add_kron(out, &lx, rho_j, d, C::new(1.0, 0.0));
    kernel::add_kron(out, rho_i, &ly, d, C::new(1.0, 0.0));
    for v in out.iter_mut() {
        *v *= -I;
    }
}

fn axpy(acc: &mut [C], s: f64, x: &[C]) {
    for (a, v) in acc.iter_mut().zip(x) {
        *a += s * v;
    }
}

fn side(c: [C; 3], a: [Vec<C>; 3], b: [Vec<C>; 3]) -> Side {
    Side { c, a, b }
}

pub(super) fn translation(sys: &TceSystem, jd: &[f64], data: &[C], out: &mut [C]) {
    let lay = &sys.layout;
    let lo = &sys.local;
    let d = lo.d;
    let d2 = d * d;
    let d4 = d2 * d2;
    let n = lay.n_sites();
    let rho = &data[..d2];
    let pair = |c: usize| &data[d2 + c * d4..d2 + (c + 1) * d4];

    let obar: [C; 3] = std::array::from_fn(|mu| kernel::expect(&lo.obar[mu], rho, d));
    let jsum: f64 = jd.iter().sum();
    // Qf[mu][r] = Tr_2(Obar P(r)), zero at r = 0
    let qf: [Vec<Vec<C>>; 3] = std::array::from_fn(|mu| {
        (0..n)
            .map(|r| {
                if r == 0 {
                    return vec![ZERO; d2];
                }
                let (c, swapped) = lay.class_of[r];
                if swapped {
                    kernel::trace_first(pair(c), &lo.obar[mu], d)
                } else {
                    kernel::trace_second(pair(c), &lo.obar[mu], d)
                }
            })
            .collect()
    });
    let m: [Vec<C>; 3] = std::array::from_fn(|mu| {
        let mut acc = vec![ZERO; d2];
        for r in 1..n {
            if jd[r] != 0.0 {
                axpy(&mut acc, jd[r], &qf[mu][r]);
            }
        }
        acc
    });
    single_rhs(lo, rho, &m, &mut out[..d2]);

    let phi: [C; 3] = std::array::from_fn(|mu| jsum * obar[mu]);
    out[d2..].par_chunks_mut(d4).enumerate().for_each(|(c, dp)| {
        let r = lay.classes[c];
        let mr = lay.sub_displacement(0, r);
        let jr = jd[r];
        let cc: [C; 3] = std::array::from_fn(|mu| phi[mu] - jr * obar[mu]);
        // C1(r) = sum_k J D(k + r) Qf(k), C2(r) = sum_k J D(k - r) Qf(k)
        let conv = |mu: usize, plus: bool| {
            let mut acc = vec![ZERO; d2];
            for k in 1..n {
                let w = if plus { jd[lay.add_displacement(k, r)] } else { jd[lay.sub_displacement(k, r)] };
                if w != 0.0 {
                    axpy(&mut acc, w, &qf[mu][k]);
                }
            }
            acc
        };
        let xs = side(
            cc,
            std::array::from_fn(|mu| sub_scaled(&m[mu], jr, &qf[mu][r])),
            std::array::from_fn(|mu| sub_scaled(&conv(mu, true), 2.0, &scale(rho, cc[mu]))),
        );
        let ys = side(
            cc,
            std::array::from_fn(|mu| sub_scaled(&m[mu], jr, &qf[mu][mr])),
            std::array::from_fn(|mu| sub_scaled(&conv(mu, false), 2.0, &scale(rho, cc[mu]))),
        );
        pair_rhs(lo, jr, pair(c), rho, rho, &xs, &ys, dp);
    });
}

fn scale(x: &[C], s: C) -> Vec<C> {
    x.iter().map(|v| v * s).collect()
}

/// `a - s b`.
fn sub_scaled(a: &[C], s: f64, b: &[C]) -> Vec<C> {
    a.iter().zip(b).map(|(x, y)| x - s * y).collect()
}

pub(super) fn full(sys: &TceSystem, jd: &[f64], data: &[C], out: &mut [C]) {
    let lay = &sys.layout;
    let lo = &sys.local;
    let d = lo.d;
    let d2 = d * d;
    let d4 = d2 * d2;
    let n = lay.n_sites();
    let single = |i: usize| &data[i * d2..(i + 1) * d2];
    let poff = n * d2;
    let pair = |k: usize| &data[poff + k * d4..poff + (k + 1) * d4];

    let obar: Vec<[C; 3]> = (0..n)
        .map(|i| std::array::from_fn(|mu| kernel::expect(&lo.obar[mu], single(i), d)))
        .collect();
    let phi: Vec<[C; 3]> = (0..n)
        .map(|i| {
            std::array::from_fn(|mu| (0..n).map(|k| jd[i * n + k] * obar[k][mu]).sum::<C>())
        })
        .collect();
    // q[mu][i * n + k] = Tr_k(Obar_k rho_ik) on site i
    let q: [Vec<Vec<C>>; 3] = std::array::from_fn(|mu| {
        (0..n * n)
            .map(|ik| {
                let (i, k) = (ik / n, ik % n);
                if i == k {
                    vec![ZERO; d2]
                } else if i < k {
                    kernel::trace_second(pair(lay.pair_index(i, k)), &lo.obar[mu], d)
                } else {
                    kernel::trace_first(pair(lay.pair_index(k, i)), &lo.obar[mu], d)
                }
            })
            .collect()
    });
    let m: Vec<[Vec<C>; 3]> = (0..n)
        .map(|i| {
            std::array::from_fn(|mu| {
                let mut acc = vec![ZERO; d2];
                for k in 0..n {
                    if jd[i * n + k] != 0.0 {
                        axpy(&mut acc, jd[i * n + k], &q[mu][i * n + k]);
                    }
                }
                acc
            })
        })
        .collect();
    for i in 0..n {
        single_rhs(lo, single(i), &m[i], &mut out[i * d2..(i + 1) * d2]);
    }
    // W[mu][i * n + j] = sum_k J D_ik Q_{j;k}
    let w = |mu: usize, i: usize, j: usize| {
        let mut acc = vec![ZERO; d2];
        for k in 0..n {
            let c = jd[i * n + k];
            if c != 0.0 && k != j {
                axpy(&mut acc, c, &q[mu][j * n + k]);
            }
        }
        acc
    };
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
    out[poff..].par_chunks_mut(d4).zip(pairs.par_iter()).for_each(|(dp, &(i, j))| {
        let jij = jd[i * n + j];
        let cx: [C; 3] = std::array::from_fn(|mu| phi[i][mu] - jij * obar[j][mu]);
        let cy: [C; 3] = std::array::from_fn(|mu| phi[j][mu] - jij * obar[i][mu]);
        let xs = side(
            cx,
            std::array::from_fn(|mu| sub_scaled(&m[i][mu], jij, &q[mu][i * n + j])),
            std::array::from_fn(|mu| sub_scaled(&w(mu, i, j), 2.0, &scale(single(j), cx[mu]))),
        );
        let ys = side(
            cy,
            std::array::from_fn(|mu| sub_scaled(&m[j][mu], jij, &q[mu][j * n + i])),
            std::array::from_fn(|mu| sub_scaled(&w(mu, j, i), 2.0, &scale(single(i), cy[mu]))),
        );
        pair_rhs(lo, jij, pair(lay.pair_index(i, j)), single(i), single(j), &xs, &ys, dp);
    });
}
