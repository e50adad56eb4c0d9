//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use fdlm::mesh::{AffineMap, Triangulation};

pub type P = [f64; 2];

/// 5-point Gauss–Legendre on [0, 1].
const GL5: [(f64, f64); 5] = [
    (0.046910077030668004, 0.11846344252809454),
    (0.23076534494715845, 0.23931433524968324),
    (0.5, 0.28444444444444444),
    (0.76923465505284155, 0.23931433524968324),
    (0.95308992296933200, 0.11846344252809454),
];

pub fn area(t: &[P; 3]) -> f64 {
    0.5 * ((t[1][0] - t[0][0]) * (t[2][1] - t[0][1]) - (t[2][0] - t[0][0]) * (t[1][1] - t[0][1]))
}

/// Collapsed-square tensor Gauss rule, exact for polynomials of degree ≤ 8.
pub fn integrate<F: FnMut(P) -> f64>(t: &[P; 3], mut f: F) -> f64 {
    let a = area(t).abs();
    let mut s = 0.0;
    for &(u, wu) in &GL5 {
        for &(v, wv) in &GL5 {
            let (xi, eta) = (u, v * (1.0 - u));
            let p = [
                t[0][0] + xi * (t[1][0] - t[0][0]) + eta * (t[2][0] - t[0][0]),
                t[0][1] + xi * (t[1][1] - t[0][1]) + eta * (t[2][1] - t[0][1]),
            ];
            s += wu * wv * (1.0 - u) * f(p);
        }
    }
    2.0 * a * s
}

/// Barycentric coordinates by Cramer's rule.
pub fn bary(t: &[P; 3], p: P) -> [f64; 3] {
    let d = 2.0 * area(t);
    let l1 = ((p[0] - t[0][0]) * (t[2][1] - t[0][1]) - (t[2][0] - t[0][0]) * (p[1] - t[0][1])) / d;
    let l2 = ((t[1][0] - t[0][0]) * (p[1] - t[0][1]) - (p[0] - t[0][0]) * (t[1][1] - t[0][1])) / d;
    [1.0 - l1 - l2, l1, l2]
}

/// Gradients of the barycentric coordinates.
pub fn bary_grads(t: &[P; 3]) -> [P; 3] {
    let d = 2.0 * area(t);
    let g1 = [(t[2][1] - t[0][1]) / d, -(t[2][0] - t[0][0]) / d];
    let g2 = [-(t[1][1] - t[0][1]) / d, (t[1][0] - t[0][0]) / d];
    [[-g1[0] - g2[0], -g1[1] - g2[1]], g1, g2]
}

/// Part of a convex polygon with `n·x ≤ c`.
pub fn keep_below(poly: &[P], n: P, c: f64) -> Vec<P> {
    let side = |p: &P| n[0] * p[0] + n[1] * p[1] - c;
    let mut out = Vec::new();
    for i in 0..poly.len() {
        let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
        let (sa, sb) = (side(&a), side(&b));
        if sa <= 0.0 {
            out.push(a);
        }
        if (sa < 0.0 && sb > 0.0) || (sa > 0.0 && sb < 0.0) {
            let t = sa / (sa - sb);
            out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
        }
    }
    out
}

pub fn poly_area(p: &[P]) -> f64 {
    let mut s = 0.0;
    for i in 0..p.len() {
        let (a, b) = (p[i], p[(i + 1) % p.len()]);
        s += a[0] * b[1] - b[0] * a[1];
    }
    0.5 * s
}

fn split(pieces: Vec<Vec<P>>, n: P, c: f64) -> Vec<Vec<P>> {
    let mut out = Vec::new();
    for p in pieces {
        for q in [keep_below(&p, n, c), keep_below(&p, [-n[0], -n[1]], -c)] {
            if q.len() >= 3 && poly_area(&q).abs() > 1e-16 {
                out.push(q);
            }
        }
    }
    out
}

/// Splits a triangle along the lines `x = x0 + k h`, `y = y0 + k h` and
/// `y − x = y0 − x0 + k h` and fans the pieces into triangles.
pub fn split_by_grid(t: &[P; 3], x0: f64, y0: f64, h: f64) -> Vec<[P; 3]> {
    let mut ccw = *t;
    if area(&ccw) < 0.0 {
        ccw.swap(1, 2);
    }
    let mut pieces = vec![ccw.to_vec()];
    let lo = |k: usize| t.iter().map(|p| p[k]).fold(f64::INFINITY, f64::min);
    let hi = |k: usize| t.iter().map(|p| p[k]).fold(f64::NEG_INFINITY, f64::max);
    for (k, o) in [(0, x0), (1, y0)] {
        let (a, b) = (((lo(k) - o) / h).floor() as i64, ((hi(k) - o) / h).ceil() as i64);
        for m in a..=b {
            let mut n = [0.0; 2];
            n[k] = 1.0;
            pieces = split(pieces, n, o + m as f64 * h);
        }
    }
    let d: Vec<f64> = t.iter().map(|p| p[1] - p[0]).collect();
    let dmin = d.iter().copied().fold(f64::INFINITY, f64::min);
    let dmax = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let off = y0 - x0;
    for m in ((dmin - off) / h).floor() as i64..=((dmax - off) / h).ceil() as i64 {
        pieces = split(pieces, [-1.0, 1.0], off + m as f64 * h);
    }
    let mut out = Vec::new();
    for p in pieces {
        for i in 1..p.len() - 1 {
            out.push([p[0], p[i], p[i + 1]]);
        }
    }
    out
}

/// Point location on a uniform right-oriented grid mesh, built from the
/// triangle list only.
pub struct GridLocator {
    x0: f64,
    y0: f64,
    h: f64,
    n: usize,
    table: Vec<[usize; 2]>,
}

impl GridLocator {
    pub fn new(mesh: &Triangulation) -> Self {
        let n = mesh.n_cells_per_side;
        let (x0, y0) = (mesh.domain.min.x, mesh.domain.min.y);
        let h = (mesh.domain.max.x - x0) / n as f64;
        let mut table = vec![[usize::MAX; 2]; n * n];
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let c = tri.iter().fold([0.0, 0.0], |a, &v| {
                [a[0] + mesh.vertices[v].x / 3.0, a[1] + mesh.vertices[v].y / 3.0]
            });
            let (lx, ly) = ((c[0] - x0) / h, (c[1] - y0) / h);
            let (i, j) = (lx.floor() as usize, ly.floor() as usize);
            let upper = (ly - j as f64) > (lx - i as f64);
            table[j * n + i][upper as usize] = t;
        }
        GridLocator { x0, y0, h, n, table }
    }

    pub fn spacing(&self) -> (f64, f64, f64) {
        (self.x0, self.y0, self.h)
    }

    /// Owner of an interior point of some fluid triangle.
    pub fn owner(&self, p: P) -> usize {
        let (lx, ly) = ((p[0] - self.x0) / self.h, (p[1] - self.y0) / self.h);
        let i = (lx.floor() as usize).min(self.n - 1);
        let j = (ly.floor() as usize).min(self.n - 1);
        let upper = (ly - j as f64) > (lx - i as f64);
        self.table[j * self.n + i][upper as usize]
    }
}

pub fn tri(mesh: &Triangulation, t: usize) -> [P; 3] {
    mesh.triangles[t].map(|v| [mesh.vertices[v].x, mesh.vertices[v].y])
}

fn apply(m: &AffineMap, s: P) -> P {
    [
        m.matrix[0][0] * s[0] + m.matrix[0][1] * s[1] + m.offset.x,
        m.matrix[1][0] * s[0] + m.matrix[1][1] * s[1] + m.offset.y,
    ]
}

/// `Σ_c ∫_B μ_c v_c(X̄(s)) ds` (plus `∫_B ∇μ_c · ∇(v_c ∘ X̄)` when `h1`),
/// computed on the pieces of every mapped solid element cut by the fluid
/// grid lines. Coefficient vectors use the interleaved two-component layout.
pub fn coupling_oracle(
    solid: &Triangulation,
    fluid: &Triangulation,
    xbar: &AffineMap,
    mu: &[f64],
    v: &[f64],
    h1: bool,
) -> f64 {
    let loc = GridLocator::new(fluid);
    let (x0, y0, h) = loc.spacing();
    let m = xbar.matrix;
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let inv = |x: P| {
        let d = [x[0] - xbar.offset.x, x[1] - xbar.offset.y];
        [(m[1][1] * d[0] - m[0][1] * d[1]) / det, (-m[1][0] * d[0] + m[0][0] * d[1]) / det]
    };
    let mut total = 0.0;
    for t in 0..solid.n_triangles() {
        let st = tri(solid, t);
        let sv = solid.triangles[t];
        let xt = st.map(|s| apply(xbar, s));
        let gs = bary_grads(&st);
        for piece in split_by_grid(&xt, x0, y0, h) {
            let c = [(piece[0][0] + piece[1][0] + piece[2][0]) / 3.0, (piece[0][1] + piece[1][1] + piece[2][1]) / 3.0];
            let f = loc.owner(c);
            let ft = tri(fluid, f);
            let fv = fluid.triangles[f];
            let gf = bary_grads(&ft);
            for comp in 0..2 {
                total += integrate(&piece, |x| {
                    let ls = bary(&st, inv(x));
                    let lf = bary(&ft, x);
                    let muv: f64 = (0..3).map(|a| ls[a] * mu[2 * sv[a] + comp]).sum();
                    let vv: f64 = (0..3).map(|b| lf[b] * v[2 * fv[b] + comp]).sum();
                    muv * vv
                }) / det.abs();
                if h1 {
                    let mut gmu = [0.0; 2];
                    let mut gv = [0.0; 2];
                    for a in 0..3 {
                        for k in 0..2 {
                            gmu[k] += gs[a][k] * mu[2 * sv[a] + comp];
                            gv[k] += gf[a][k] * v[2 * fv[a] + comp];
                        }
                    }
                    // ∇_s(v ∘ X̄) = Jᵀ ∇_x v
                    let pulled = [m[0][0] * gv[0] + m[1][0] * gv[1], m[0][1] * gv[0] + m[1][1] * gv[1]];
                    total += area(&piece).abs() / det.abs() * (gmu[0] * pulled[0] + gmu[1] * pulled[1]);
                }
            }
        }
    }
    total
}
