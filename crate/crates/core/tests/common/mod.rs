//! Oracles shared by the integration test targets.
#![allow(dead_code)]

use beamloc_core::geometry::distance;
use beamloc_core::neural::{backward, huber, QNetwork};
use beamloc_core::seed::rng_from;
use rand::Rng;

/// Closed-form 3×3 solve via the adjugate.
pub fn solve3(a: [[f64; 3]; 3], b: [f64; 3]) -> [f64; 3] {
    let det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
    let mut adj = [[0.0; 3]; 3];
    for (i, row) in adj.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            // cofactor C_ji
            let r: Vec<usize> = (0..3).filter(|&k| k != j).collect();
            let c: Vec<usize> = (0..3).filter(|&k| k != i).collect();
            let minor = a[r[0]][c[0]] * a[r[1]][c[1]] - a[r[0]][c[1]] * a[r[1]][c[0]];
            *v = if (i + j) % 2 == 0 { minor } else { -minor };
        }
    }
    let mut x = [0.0; 3];
    for i in 0..3 {
        x[i] = (0..3).map(|k| adj[i][k] * b[k]).sum::<f64>() / det;
    }
    x
}

/// Update from scalar loops over the explicit `H̃`, `W` and `δz`.
pub fn oracle_update(z: &[f64], centers: &[[f64; 2]], w: &[f64], x0: [f64; 2], b0: f64) -> [f64; 3] {
    let mut a = [[0.0; 3]; 3];
    let mut rhs = [0.0; 3];
    for i in 0..z.len() {
        let dx = x0[0] - centers[i][0];
        let dy = x0[1] - centers[i][1];
        let r = (dx * dx + dy * dy).sqrt();
        let h = [dx / r, dy / r, 1.0];
        let dz = z[i] - r - b0;
        for p in 0..3 {
            rhs[p] += w[i] * h[p] * dz;
            for q in 0..3 {
                a[p][q] += w[i] * h[p] * h[q];
            }
        }
    }
    solve3(a, rhs)
}

pub fn random_instance(seed: u64) -> (Vec<f64>, Vec<[f64; 2]>, Vec<f64>, [f64; 2], f64) {
    let mut rng = rng_from(seed);
    let m = rng.random_range(4..=12);
    let centers: Vec<[f64; 2]> = (0..m)
        .map(|_| [rng.random_range(0.0..1000.0), rng.random_range(0.0..1000.0)])
        .collect();
    let x0 = [rng.random_range(100.0..900.0), rng.random_range(100.0..900.0)];
    let z: Vec<f64> = centers
        .iter()
        .map(|c| distance(&x0, c) + rng.random_range(-80.0..80.0))
        .collect();
    let w: Vec<f64> = (0..m).map(|_| rng.random_range(0.05..1.0)).collect();
    let b0 = rng.random_range(-50.0..50.0);
    (z, centers, w, x0, b0)
}

pub fn loop_forward(net: &QNetwork, x: &[f64]) -> Vec<f64> {
    let mut a = x.to_vec();
    let n = net.layers.len();
    for (l, layer) in net.layers.iter().enumerate() {
        let mut out = vec![0.0; layer.outputs];
        for o in 0..layer.outputs {
            let mut s = layer.biases[o];
            for i in 0..layer.inputs {
                s += layer.weights[o * layer.inputs + i] * a[i];
            }
            out[o] = if l + 1 < n { s.max(0.0) } else { s };
        }
        a = out;
    }
    a
}

pub fn loss_of(net: &QNetwork, states: &[Vec<f64>], actions: &[usize], targets: &[f64]) -> f64 {
    states
        .iter()
        .zip(actions)
        .zip(targets)
        .map(|((s, &a), &y)| huber(loop_forward(net, s)[a] - y))
        .sum::<f64>()
        / states.len() as f64
}

pub fn random_batch(seed: u64, f: usize, n_act: usize, b: usize) -> (Vec<Vec<f64>>, Vec<usize>, Vec<f64>) {
    let mut rng = rng_from(seed);
    let states = (0..b).map(|_| (0..f).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let actions = (0..b).map(|_| rng.random_range(0..n_act)).collect();
    let targets = (0..b).map(|_| rng.random_range(-3.0..3.0)).collect();
    (states, actions, targets)
}

/// Every parameter's analytic gradient against a central difference.
pub fn check_gradients(seed: u64, batch: usize) {
    let mut net = QNetwork::new(&[6, 8, 8, 4], &mut rng_from(seed)).unwrap();
    // non-zero biases so ReLU kinks sit away from the probe points
    let mut rng = rng_from(seed ^ 0xB1A5);
    for l in &mut net.layers {
        l.biases.iter_mut().for_each(|b| *b = rng.random_range(-0.3..0.3));
    }
    let (s, a, y) = random_batch(seed + 1, 6, 4, batch);
    let (grads, loss) = backward(&net, &s, &a, &y).unwrap();
    assert!((loss - loss_of(&net, &s, &a, &y)).abs() < 1e-12);
    let analytic: Vec<f64> = grads.params().copied().collect();
    let h = 1e-6;
    for (k, g) in analytic.iter().enumerate() {
        let mut plus = net.clone();
        *plus.params_mut().nth(k).unwrap() += h;
        let mut minus = net.clone();
        *minus.params_mut().nth(k).unwrap() -= h;
        let fd = (loss_of(&plus, &s, &a, &y) - loss_of(&minus, &s, &a, &y)) / (2.0 * h);
        let scale = g.abs().max(fd.abs());
        if scale < 1e-7 {
            continue;
        }
        assert!((g - fd).abs() <= 1e-4 * scale, "seed {seed} param {k}: {g} vs {fd}");
    }
}
