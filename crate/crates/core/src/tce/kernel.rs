//! Dense and sparse kernels on one-site (d x d) and two-site (d^2 x d^2)
//! matrices stored row-major in flat slices. A two-site row index is
//! `a * d + b` with `a` on the first site.

use num_complex::Complex64 as C;

pub const ZERO: C = C { re: 0.0, im: 0.0 };
pub const I: C = C { re: 0.0, im: 1.0 };

/// Sparse local operator: `(row, col, value)` triples.
#[derive(Debug, Clone, Default)]
pub struct Sparse {
    pub entries: Vec<(usize, usize, C)>,
}

impl Sparse {
    pub fn scaled(&self, s: C) -> Sparse {
        Sparse { entries: self.entries.iter().map(|&(r, c, v)| (r, c, v * s)).collect() }
    }

    pub fn extend(&mut self, other: &Sparse) {
        self.entries.extend_from_slice(&other.entries);
    }

    pub fn dense(&self, d: usize) -> Vec<C> {
        let mut m = vec![ZERO; d * d];
        for &(r, c, v) in &self.entries {
            m[r * d + c] += v;
        }
        m
    }
}

/// `Tr(O rho)`.
pub fn expect(o: &Sparse, rho: &[C], d: usize) -> C {
    o.entries.iter().map(|&(r, c, v)| v * rho[c * d + r]).sum()
}

/// `[O, X]` for a d x d dense `X`.
pub fn comm(o: &Sparse, x: &[C], d: usize) -> Vec<C> {
    let mut out = vec![ZERO; d * d];
    for &(a, c, v) in &o.entries {
        // O X: row a += v * row c of X
        for e in 0..d {
            out[a * d + e] += v * x[c * d + e];
        }
        // X O: column c += v * column a of X
        for r in 0..d {
            out[r * d + c] -= v * x[r * d + a];
        }
    }
    out
}

/// `Tr_2((1 x B) P)`, an operator on the first site.
pub fn trace_second(p: &[C], b: &Sparse, d: usize) -> Vec<C> {
    let d2 = d * d;
    let mut q = vec![ZERO; d * d];
    for &(r, e, v) in &b.entries {
        for a in 0..d {
            for c in 0..d {
                q[a * d + c] += v * p[(a * d + e) * d2 + c * d + r];
            }
        }
    }
    q
}

/// `Tr_1((B x 1) P)`, an operator on the second site.
pub fn trace_first(p: &[C], b: &Sparse, d: usize) -> Vec<C> {
    let d2 = d * d;
    let mut q = vec![ZERO; d * d];
    for &(r, c, v) in &b.entries {
        for x in 0..d {
            for y in 0..d {
                q[x * d + y] += v * p[(c * d + x) * d2 + r * d + y];
            }
        }
    }
    q
}

/// `Tr((A x B) P)` for dense A, B.
pub fn expect_pair(a: &[C], b: &[C], p: &[C], d: usize) -> C {
    let d2 = d * d;
    let mut acc = ZERO;
    for r1 in 0..d {
        for c1 in 0..d {
            let av = a[c1 * d + r1];
            if av == ZERO {
                continue;
            }
            for r2 in 0..d {
                for c2 in 0..d {
                    let bv = b[c2 * d + r2];
                    if bv != ZERO {
                        acc += av * bv * p[(r1 * d + r2) * d2 + c1 * d + c2];
                    }
                }
            }
        }
    }
    acc
}

/// Trace of a d x d or d^2 x d^2 matrix.
pub fn trace(m: &[C], n: usize) -> C {
    (0..n).map(|k| m[k * n + k]).sum()
}

/// Two-site matrix with the sites exchanged.
pub fn swap(p: &[C], d: usize) -> Vec<C> {
    let d2 = d * d;
    let mut out = vec![ZERO; d2 * d2];
    for a in 0..d {
        for b in 0..d {
            for c in 0..d {
                for e in 0..d {
                    out[(b * d + a) * d2 + e * d + c] = p[(a * d + b) * d2 + c * d + e];
                }
            }
        }
    }
    out
}

pub fn kron(a: &[C], b: &[C], d: usize) -> Vec<C> {
    let mut out = vec![ZERO; d.pow(4)];
    add_kron(&mut out, a, b, d, C::new(1.0, 0.0));
    out
}

/// `out += s (A x B)`.
pub fn add_kron(out: &mut [C], a: &[C], b: &[C], d: usize, s: C) {
    let d2 = d * d;
    for r1 in 0..d {
        for c1 in 0..d {
            let av = s * a[r1 * d + c1];
            if av == ZERO {
                continue;
            }
            for r2 in 0..d {
                let row = (r1 * d + r2) * d2 + c1 * d;
                let brow = &b[r2 * d..r2 * d + d];
                for (o, bv) in out[row..row + d].iter_mut().zip(brow) {
                    *o += av * bv;
                }
            }
        }
    }
}

/// `out += [Z x 1, P]`.
pub fn add_comm_first(out: &mut [C], z: &Sparse, p: &[C], d: usize) {
    let d2 = d * d;
    for &(a, c, v) in &z.entries {
        for b in 0..d {
            let ro = (a * d + b) * d2;
            let ri = (c * d + b) * d2;
            for x in 0..d2 {
                out[ro + x] += v * p[ri + x];
            }
        }
        for y in 0..d2 {
            let base = y * d2;
            for b in 0..d {
                out[base + c * d + b] -= v * p[base + a * d + b];
            }
        }
    }
}

/// `out += [1 x Z, P]`.
pub fn add_comm_second(out: &mut [C], z: &Sparse, p: &[C], d: usize) {
    let d2 = d * d;
    for &(b, e, v) in &z.entries {
        for a in 0..d {
            let ro = (a * d + b) * d2;
            let ri = (a * d + e) * d2;
            for x in 0..d2 {
                out[ro + x] += v * p[ri + x];
            }
        }
        for y in 0..d2 {
            let base = y * d2;
            for a in 0..d {
                out[base + a * d + e] -= v * p[base + a * d + b];
            }
        }
    }
}

/// `out += s [X x Y, P]` for sparse X, Y.
pub fn add_comm_product(out: &mut [C], x: &Sparse, y: &Sparse, p: &[C], d: usize, s: C) {
    let d2 = d * d;
    for &(a, c, v) in &x.entries {
        for &(b, e, w) in &y.entries {
            let f = s * v * w;
            let ro = (a * d + b) * d2;
            let ri = (c * d + e) * d2;
            for k in 0..d2 {
                out[ro + k] += f * p[ri + k];
            }
            let (cin, cout) = (a * d + b, c * d + e);
            for r in 0..d2 {
                out[r * d2 + cout] -= f * p[r * d2 + cin];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_mul(a: &[C], b: &[C], n: usize) -> Vec<C> {
        let mut out = vec![ZERO; n * n];
        for r in 0..n {
            for k in 0..n {
                for c in 0..n {
                    out[r * n + c] += a[r * n + k] * b[k * n + c];
                }
            }
        }
        out
    }

    fn sample(n: usize, seed: f64) -> Vec<C> {
        (0..n * n)
            .map(|k| C::new((k as f64 * 0.37 + seed).sin(), (k as f64 * 0.61 - seed).cos()))
            .collect()
    }

    fn sparse_sample(d: usize, seed: f64) -> Sparse {
        let mut s = Sparse::default();
        for k in 0..d {
            s.entries.push((k, (k * 3 + 1) % d, C::new(seed + k as f64, 0.5 - k as f64)));
        }
        s
    }

    fn max_diff(a: &[C], b: &[C]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    fn ident(d: usize) -> Vec<C> {
        let mut m = vec![ZERO; d * d];
        for k in 0..d {
            m[k * d + k] = C::new(1.0, 0.0);
        }
        m
    }

    #[test]
    fn commutators_match_dense_products() {
        let d = 3;
        let p = sample(d * d, 0.2);
        let z = sparse_sample(d, 0.7);
        let w = sparse_sample(d, -1.1);
        let zd = z.dense(d);
        let wd = w.dense(d);
        let id = ident(d);
        for (which, big) in [(0, kron(&zd, &id, d)), (1, kron(&id, &zd, d)), (2, kron(&zd, &wd, d))] {
            let mut out = vec![ZERO; d.pow(4)];
            match which {
                0 => add_comm_first(&mut out, &z, &p, d),
                1 => add_comm_second(&mut out, &z, &p, d),
                _ => add_comm_product(&mut out, &z, &w, &p, d, C::new(1.0, 0.0)),
            }
            let l = dense_mul(&big, &p, d * d);
            let r = dense_mul(&p, &big, d * d);
            let expect: Vec<C> = l.iter().zip(&r).map(|(a, b)| a - b).collect();
            assert!(max_diff(&out, &expect) < 1e-12, "case {which}");
        }
        let x = sample(d, 0.3);
        let l = dense_mul(&zd, &x, d);
        let r = dense_mul(&x, &zd, d);
        let expect: Vec<C> = l.iter().zip(&r).map(|(a, b)| a - b).collect();
        assert!(max_diff(&comm(&z, &x, d), &expect) < 1e-12);
    }

    #[test]
    fn partial_traces_and_swap() {
        let d = 3;
        let a = sample(d, 0.1);
        let b = sample(d, 0.9);
        let p = kron(&a, &b, d);
        let o = sparse_sample(d, 0.4);
        let od = o.dense(d);
        let tb = trace(&dense_mul(&od, &b, d), d);
        let ta = trace(&dense_mul(&od, &a, d), d);
        let q2 = trace_second(&p, &o, d);
        let q1 = trace_first(&p, &o, d);
        let e2: Vec<C> = a.iter().map(|v| v * tb).collect();
        let e1: Vec<C> = b.iter().map(|v| v * ta).collect();
        assert!(max_diff(&q2, &e2) < 1e-12);
        assert!(max_diff(&q1, &e1) < 1e-12);
        assert!(max_diff(&swap(&p, d), &kron(&b, &a, d)) < 1e-15);
        assert!((expect(&o, &a, d) - ta).norm() < 1e-12);
        let id = ident(d);
        let e = expect_pair(&od, &id, &p, d);
        assert!((e - ta * trace(&b, d)).norm() < 1e-12);
    }
}
