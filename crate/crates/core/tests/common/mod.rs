#![allow(dead_code)]

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rand::Rng;
use semeq::rng;

pub fn random_points(rows: usize, n: usize, seed: u64) -> Array2<Complex64> {
    let mut r = rng::stream(seed, &[rng::tag("test-points")]);
    Array2::from_shape_fn((rows, n), |_| {
        Complex64::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0))
    })
}

pub fn random_simplex(len: usize, r: &mut rng::StreamRng) -> Array1<f64> {
    let raw: Vec<f64> = (0..len).map(|_| r.random_range(0.05..1.0)).collect();
    let s: f64 = raw.iter().sum();
    let mut v: Array1<f64> = raw.into_iter().map(|x| x / s).collect();
    // Make the total exactly one by dumping rounding error into the last entry.
    let head: f64 = v.iter().take(len - 1).sum();
    v[len - 1] = 1.0 - head;
    v
}

/// Minimum of ⟨γ, D⟩ over all vertices of the transport polytope, found by
/// enumerating every (n1 + n2 − 1)-arc spanning tree of the bipartite graph,
/// solving its flows by leaf elimination and keeping the nonnegative ones.
pub fn brute_force_ot_cost(d: &Array2<f64>, mu: &Array1<f64>, nu: &Array1<f64>) -> f64 {
    let (n1, n2) = d.dim();
    let arcs: Vec<(usize, usize)> = (0..n1).flat_map(|i| (0..n2).map(move |j| (i, j))).collect();
    let k = n1 + n2 - 1;
    let mut best = f64::INFINITY;
    let mut chosen = Vec::with_capacity(k);
    enumerate(&arcs, 0, k, &mut chosen, &mut |tree| {
        if let Some(flows) = tree_flows(tree, n1, n2, mu, nu) {
            if flows.iter().all(|&f| f >= -1e-12) {
                let c: f64 = tree
                    .iter()
                    .zip(&flows)
                    .map(|(&(i, j), f)| d[[i, j]] * f)
                    .sum();
                best = best.min(c);
            }
        }
    });
    best
}

fn enumerate(
    arcs: &[(usize, usize)],
    start: usize,
    left: usize,
    chosen: &mut Vec<(usize, usize)>,
    visit: &mut dyn FnMut(&[(usize, usize)]),
) {
    if left == 0 {
        visit(chosen);
        return;
    }
    for idx in start..=arcs.len() - left {
        chosen.push(arcs[idx]);
        enumerate(arcs, idx + 1, left - 1, chosen, visit);
        chosen.pop();
    }
}

/// Flows on a spanning tree meeting the supplies; None if the arc set is not
/// a spanning tree.
fn tree_flows(
    tree: &[(usize, usize)],
    n1: usize,
    n2: usize,
    mu: &Array1<f64>,
    nu: &Array1<f64>,
) -> Option<Vec<f64>> {
    let nodes = n1 + n2;
    let mut residual: Vec<f64> = mu.iter().cloned().chain(nu.iter().cloned()).collect();
    let mut degree = vec![0usize; nodes];
    for &(i, j) in tree {
        degree[i] += 1;
        degree[n1 + j] += 1;
    }
    let mut flows = vec![f64::NAN; tree.len()];
    let mut done = vec![false; tree.len()];
    for _ in 0..tree.len() {
        // Find an unsolved arc touching a leaf.
        let mut found = None;
        for (a, &(i, j)) in tree.iter().enumerate() {
            if done[a] {
                continue;
            }
            if degree[i] == 1 {
                found = Some((a, i));
                break;
            }
            if degree[n1 + j] == 1 {
                found = Some((a, n1 + j));
                break;
            }
        }
        let (a, leaf) = found?;
        let (i, j) = tree[a];
        let other = if leaf == i { n1 + j } else { i };
        let f = residual[leaf];
        flows[a] = f;
        residual[other] -= f;
        residual[leaf] = 0.0;
        degree[i] -= 1;
        degree[n1 + j] -= 1;
        done[a] = true;
    }
    Some(flows)
}

/// Relative error ‖g_fd − g‖ / ‖g‖ between the analytic gradient of the
/// learned-equalizer loss and central differences (step 1e-5), on a batch
/// from the digit/parity fixture at a generic map.
pub fn linear_eq_fd_relative_error(seed: u64) -> f64 {
    use semeq::baselines::linear_eq_loss_grad;
    use semeq::ot::LinearMap;

    let sc = semeq::fixtures::digit_parity();
    let (src, tgt) = sc.languages(seed).unwrap();
    let centroids: Vec<Vec<Complex64>> = tgt
        .atoms()
        .iter()
        .map(|a| a.centroid.values().to_vec())
        .collect();
    let per = 5;
    let mut xs = Array2::<Complex64>::zeros((10 * per, 2));
    let mut labels = Vec::new();
    for i in 0..10 {
        for (r, row) in src
            .sample_points(i, per, seed + 1)
            .unwrap()
            .outer_iter()
            .enumerate()
        {
            xs.row_mut(i * per + r).assign(&row);
            labels.push(sc.kmap.get(i));
        }
    }
    let mut r = rng::stream(seed, &[rng::tag("fd-map")]);
    let mut z = || Complex64::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0));
    let map = LinearMap::new(
        Array2::from_shape_fn((2, 2), |(i, j)| {
            if i == j {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        }) + Array2::from_shape_fn((2, 2), |_| z() * 0.4),
        Array1::from_shape_fn(2, |_| z() * 0.3),
    )
    .unwrap();
    let (_, ga, gb) = linear_eq_loss_grad(&map, &xs, &labels, &centroids);
    let h = 1e-5;
    let loss = |m: &LinearMap| linear_eq_loss_grad(m, &xs, &labels, &centroids).0;
    let mut diff = 0.0;
    let mut norm = 0.0;
    let mut probe = |analytic: f64, bump: &dyn Fn(&mut LinearMap, f64)| {
        let mut plus = map.clone();
        bump(&mut plus, h);
        let mut minus = map.clone();
        bump(&mut minus, -h);
        let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
        diff += (fd - analytic).powi(2);
        norm += analytic * analytic;
    };
    for i in 0..2 {
        for j in 0..2 {
            probe(ga[[i, j]].re, &|m, e| m.a[[i, j]].re += e);
            probe(ga[[i, j]].im, &|m, e| m.a[[i, j]].im += e);
        }
        probe(gb[i].re, &|m, e| m.b[i].re += e);
        probe(gb[i].im, &|m, e| m.b[i].im += e);
    }
    (diff / norm).sqrt()
}
