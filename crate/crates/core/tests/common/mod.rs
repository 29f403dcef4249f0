#![allow(dead_code)]

use std::path::PathBuf;

use num_complex::Complex64;
use pdpf::feeder::{Bases, Branch, Feeder, Node, NodeKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

pub fn node(id: u32, p: f64, q: f64, kind: NodeKind) -> Node {
    Node { id, base_load_p: p, base_load_q: q, kind }
}

/// Slack 0 feeding node 1 through `z` (p.u.), load `s` (p.u.) on a
/// 1000 kVA base.
pub fn two_bus(z: Complex64, s: Complex64) -> Feeder {
    Feeder::new(
        vec![node(0, 0.0, 0.0, NodeKind::Slack), node(1, s.re * 1000.0, s.im * 1000.0, NodeKind::Residential)],
        vec![Branch { from: 0, to: 1, impedance: z }],
        Complex64::new(1.0, 0.0),
        Bases { s_kva: 1000.0, v_kv: 12.47 },
    )
    .unwrap()
}

/// Closed-form receiving-end voltage of a single line with a
/// constant-power load and a real sending voltage `v0`.
///
/// `|V|⁴ + (2(RP + XQ) − V0²)|V|² + |z|²|S|² = 0` gives `|V|`; the angle
/// follows from `V0·V̄ = |V|² + z·S̄`.
pub fn two_bus_voltage(v0: f64, z: Complex64, s: Complex64) -> Complex64 {
    let b = 2.0 * (z.re * s.re + z.im * s.im) - v0 * v0;
    let c = z.norm_sqr() * s.norm_sqr();
    let m2 = (-b + (b * b - 4.0 * c).sqrt()) / 2.0;
    (Complex64::new(m2, 0.0) + z.conj() * s) / v0
}

/// Random radial feeder with `n` nodes; node ids are shuffled labels.
pub fn random_feeder(n: usize, seed: u64) -> Feeder {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids: Vec<u32> = (0..n as u32).map(|i| 1000 + 7 * i).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        ids.swap(i, j);
    }
    let mut nodes = vec![node(ids[0], 0.0, 0.0, NodeKind::Slack)];
    let mut branches = Vec::new();
    for (k, &id) in ids.iter().enumerate().skip(1) {
        let p = rng.random_range(0.0..20.0);
        nodes.push(node(id, p, p * rng.random_range(0.0..0.6), NodeKind::Residential));
        let parent = if rng.random::<f64>() < 0.6 { k - 1 } else { rng.random_range(0..k) };
        let z = Complex64::new(rng.random_range(0.002..0.02), rng.random_range(0.002..0.02));
        branches.push(Branch { from: parent, to: k, impedance: z });
    }
    Feeder::new(nodes, branches, Complex64::new(1.0, 0.0), Bases { s_kva: 10_000.0, v_kv: 12.47 }).unwrap()
}

/// Uniform chain 0-1-…-(n−1) with equal loads.
pub fn chain(n: usize, p_kw: f64, z: Complex64) -> Feeder {
    let mut nodes = vec![node(0, 0.0, 0.0, NodeKind::Slack)];
    let mut branches = Vec::new();
    for k in 1..n {
        nodes.push(node(k as u32, p_kw, 0.3 * p_kw, NodeKind::Residential));
        branches.push(Branch { from: k - 1, to: k, impedance: z });
    }
    Feeder::new(nodes, branches, Complex64::new(1.0, 0.0), Bases { s_kva: 1000.0, v_kv: 12.47 }).unwrap()
}

pub fn normal_pdf(x: f64, mu: f64, sigma: f64) -> f64 {
    let u = (x - mu) / sigma;
    (-0.5 * u * u).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

/// Composite Simpson rule on `[a, b]` with `n` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// Spearman rank correlation without tie handling.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let rank = |v: &[f64]| {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        for (k, &i) in idx.iter().enumerate() {
            r[i] = k as f64;
        }
        r
    };
    let (rx, ry) = (rank(x), rank(y));
    let n = x.len() as f64;
    let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b) * (a - b)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}
