//! Brute-force references for tiny networks, written against a hand-built
//! admittance matrix rather than the library's formulation.
//!
//! Bus 0 is the slack at `1 + 0j`; every other bus is a constant-power load.
//! The infeasibility current at bus `i` is minus its KCL mismatch, so
//! `|I_i| = |Σ_j Y_ij V_j + conj(S_i) / conj(V_i)|`.

use num_complex::Complex64;

#[derive(Debug, Clone)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
}

#[derive(Debug, Clone)]
pub struct SmallNet {
    /// Per-unit demand per bus; entry 0 (slack) is ignored.
    pub loads: Vec<Complex64>,
    pub lines: Vec<Line>,
}

pub const BASE_MVA: f64 = 100.0;

impl SmallNet {
    pub fn n(&self) -> usize {
        self.loads.len()
    }

    pub fn ybus(&self) -> Vec<Vec<Complex64>> {
        let n = self.n();
        let mut y = vec![vec![Complex64::new(0.0, 0.0); n]; n];
        for l in &self.lines {
            let ys = Complex64::new(l.r, l.x).inv();
            y[l.from][l.from] += ys;
            y[l.to][l.to] += ys;
            y[l.from][l.to] -= ys;
            y[l.to][l.from] -= ys;
        }
        y
    }

    /// KCL mismatch at bus `i` for full voltage vector `v`.
    pub fn mismatch(&self, y: &[Vec<Complex64>], v: &[Complex64], i: usize) -> Complex64 {
        let mut cur: Complex64 = (0..self.n()).map(|j| y[i][j] * v[j]).sum();
        cur += self.loads[i].conj() / v[i].conj();
        cur
    }

    pub fn to_matpower(&self) -> String {
        let mut s = String::from(
            "function mpc = synthetic\nmpc.version = '2';\nmpc.baseMVA = 100;\nmpc.bus = [\n",
        );
        for (i, d) in self.loads.iter().enumerate() {
            let kind = if i == 0 { 3 } else { 1 };
            s += &format!(
                "\t{}\t{kind}\t{}\t{}\t0\t0\t1\t1\t0\t100\t1\t1.1\t0.9;\n",
                i + 1,
                d.re * BASE_MVA,
                d.im * BASE_MVA
            );
        }
        s += "];\nmpc.gen = [\n\t1\t0\t0\t999\t-999\t1\t100\t1\t999\t0;\n];\nmpc.branch = [\n";
        for l in &self.lines {
            s += &format!(
                "\t{}\t{}\t{}\t{}\t0\t0\t0\t0\t0\t0\t1\t-360\t360;\n",
                l.from + 1,
                l.to + 1,
                l.r,
                l.x
            );
        }
        s += "];\n";
        s
    }
}

/// Slack plus one load bus behind a single line.
pub fn two_bus(p: f64, q: f64) -> SmallNet {
    SmallNet {
        loads: vec![Complex64::new(0.0, 0.0), Complex64::new(p, q)],
        lines: vec![Line {
            from: 0,
            to: 1,
            r: 0.02,
            x: 0.2,
        }],
    }
}

/// Meshed three-bus network; bus 2 carries the heavy load.
pub fn three_bus(p2: f64, p3: f64) -> SmallNet {
    SmallNet {
        loads: vec![
            Complex64::new(0.0, 0.0),
            Complex64::new(p2, 0.3 * p2),
            Complex64::new(p3, 0.3 * p3),
        ],
        lines: vec![
            Line {
                from: 0,
                to: 1,
                r: 0.01,
                x: 0.1,
            },
            Line {
                from: 1,
                to: 2,
                r: 0.02,
                x: 0.2,
            },
            Line {
                from: 0,
                to: 2,
                r: 0.05,
                x: 0.5,
            },
        ],
    }
}

/// Minimizes `f` on a box by a uniform grid, then repeatedly re-grids a
/// box of two cells around the incumbent.
pub fn grid_min(
    f: impl Fn(&[f64]) -> f64,
    lo: &[f64],
    hi: &[f64],
    points: usize,
    zooms: usize,
) -> (f64, Vec<f64>) {
    let d = lo.len();
    let (mut lo, mut hi) = (lo.to_vec(), hi.to_vec());
    let mut best = (f64::INFINITY, lo.clone());
    let mut p = vec![0.0; d];
    for _ in 0..=zooms {
        let total = points.pow(d as u32);
        for idx in 0..total {
            let mut rest = idx;
            for k in 0..d {
                let step = (hi[k] - lo[k]) / (points - 1) as f64;
                p[k] = lo[k] + step * (rest % points) as f64;
                rest /= points;
            }
            let v = f(&p);
            if v < best.0 {
                best = (v, p.clone());
            }
        }
        for k in 0..d {
            let cell = (hi[k] - lo[k]) / (points - 1) as f64;
            lo[k] = best.1[k] - 2.0 * cell;
            hi[k] = best.1[k] + 2.0 * cell;
        }
    }
    best
}

fn voltages(rest: &[f64]) -> Vec<Complex64> {
    let mut v = vec![Complex64::new(1.0, 0.0)];
    v.extend(rest.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])));
    v
}

fn box_for(n_free: usize) -> (Vec<f64>, Vec<f64>) {
    let lo = [0.2, -1.2].repeat(n_free);
    let hi = [1.3, 0.3].repeat(n_free);
    (lo, hi)
}

/// `min ½ Σ |I_i|²` over all non-slack voltages.
pub fn l2_objective(net: &SmallNet) -> f64 {
    let y = net.ybus();
    let m = net.n() - 1;
    let f = |p: &[f64]| {
        let v = voltages(p);
        (1..net.n())
            .map(|i| 0.5 * net.mismatch(&y, &v, i).norm_sqr())
            .sum()
    };
    let (lo, hi) = box_for(m);
    let points = if m == 1 { 201 } else { 25 };
    grid_min(f, &lo, &hi, points, 30).0
}

/// `min ½|I_b|² + c (|Re I_b| + |Im I_b|)` with every other current zero.
///
/// Only defined for two- and three-bus networks. On three buses the other
/// load bus `o` is gridded and `V_b` follows linearly from KCL at `o`.
pub fn single_support_objective(net: &SmallNet, b: usize, c: f64) -> f64 {
    let y = net.ybus();
    let cost = |i: Complex64| 0.5 * i.norm_sqr() + c * (i.re.abs() + i.im.abs());
    match net.n() {
        2 => {
            let f = |p: &[f64]| cost(net.mismatch(&y, &voltages(p), 1));
            grid_min(f, &[0.2, -1.2], &[1.3, 0.3], 201, 30).0
        }
        3 => {
            let o = 3 - b;
            let f = |p: &[f64]| {
                let vo = Complex64::new(p[0], p[1]);
                if vo.norm() < 1e-3 {
                    return f64::INFINITY;
                }
                let v1 = Complex64::new(1.0, 0.0);
                let known = y[o][0] * v1 + y[o][o] * vo + net.loads[o].conj() / vo.conj();
                let vb = -known / y[o][b];
                if vb.norm() < 1e-3 {
                    return f64::INFINITY;
                }
                let mut v = vec![v1, Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)];
                v[o] = vo;
                v[b] = vb;
                cost(net.mismatch(&y, &v, b))
            };
            grid_min(f, &[0.2, -1.2], &[1.3, 0.3], 201, 30).0
        }
        n => panic!("single-support oracle covers 2 or 3 buses, got {n}"),
    }
}
