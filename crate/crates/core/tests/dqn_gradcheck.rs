//! Central-finite-difference check of the analytic TD-loss gradients, tensor
//! by tensor, on a small network.

use beamshare_core::dqn::{init_network, td_gradients, td_loss, Arch, QNetwork, Transition};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ARCH: Arch = Arch { input_dim: 3, hidden: (5, 4), output_dim: 2 };
const GAMMA: f64 = 0.95;
const PERTURBATION: f64 = 1e-3;
const REL_TOL: f64 = 1e-4;

fn random_batch(seed: u64, n: usize) -> Vec<Transition> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| Transition {
            state: (0..ARCH.input_dim).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect(),
            action: rng.gen_range(0..ARCH.output_dim),
            reward: rng.gen::<f64>() - 0.3,
            next_state: (0..ARCH.input_dim).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect(),
            done: i % 3 == 0,
        })
        .collect()
}

/// Test-side re-implementation of the forward pre-activations, used to verify
/// that no ReLU input sits near its kink (where a central difference across
/// the kink would be meaningless).
fn min_abs_preactivation(net: &QNetwork, batch: &[Transition]) -> f64 {
    let dims = net.arch().layer_dims();
    let mut min_abs = f64::INFINITY;
    for t in batch {
        let mut x = t.state.clone();
        for (layer, &(in_dim, out_dim)) in dims.iter().enumerate().take(2) {
            let w = net.weights(layer);
            let b = net.biases(layer);
            let mut z = vec![0.0f64; out_dim];
            for (o, zo) in z.iter_mut().enumerate() {
                *zo = b[o] as f64;
                for i in 0..in_dim {
                    *zo += w[o * in_dim + i] as f64 * x[i];
                }
                min_abs = min_abs.min(zo.abs());
            }
            x = z.into_iter().map(|v| v.max(0.0)).collect();
        }
    }
    min_abs
}

fn find_safe_setup() -> (QNetwork, QNetwork, Vec<Transition>) {
    // Pick the first seed whose pre-activations stay clear of the ReLU kink
    // by more than the perturbation can move them.
    for seed in 0..200u64 {
        let net = init_network(ARCH, seed).unwrap();
        let target = init_network(ARCH, seed.wrapping_add(1000)).unwrap();
        let batch = random_batch(seed.wrapping_add(2000), 4);
        if min_abs_preactivation(&net, &batch) > 0.02 {
            return (net, target, batch);
        }
    }
    panic!("no kink-safe seed found");
}

fn finite_difference(
    net: &QNetwork,
    target: &QNetwork,
    batch: &[Transition],
    layer: usize,
    idx: usize,
    is_bias: bool,
) -> f64 {
    let read = |n: &QNetwork| {
        if is_bias {
            n.biases(layer)[idx]
        } else {
            n.weights(layer)[idx]
        }
    };
    let write = |n: &mut QNetwork, v: f32| {
        if is_bias {
            n.set_bias(layer, idx, v);
        } else {
            n.set_weight(layer, idx, v);
        }
    };

    let base = read(net) as f64;
    let mut plus = net.clone();
    write(&mut plus, (base + PERTURBATION) as f32);
    let mut minus = net.clone();
    write(&mut minus, (base - PERTURBATION) as f32);
    // Use the realized f32 spacing, not 2h, to cancel quantization.
    let spacing = read(&plus) as f64 - read(&minus) as f64;
    let loss_plus = td_loss(&plus, target, batch, GAMMA).unwrap();
    let loss_minus = td_loss(&minus, target, batch, GAMMA).unwrap();
    (loss_plus - loss_minus) / spacing
}

#[test]
fn analytic_gradients_match_central_differences_everywhere() {
    let (net, target, batch) = find_safe_setup();
    let (_, grads) = td_gradients(&net, &target, &batch, GAMMA).unwrap();

    let mut checked = 0usize;
    let mut nontrivial = 0usize;
    for (layer, lg) in grads.layers.iter().enumerate() {
        for (kind, values) in [("w", &lg.dw), ("b", &lg.db)] {
            for (idx, &analytic) in values.iter().enumerate() {
                let fd = finite_difference(&net, &target, &batch, layer, idx, kind == "b");
                let denom = analytic.abs().max(fd.abs());
                checked += 1;
                if denom < 1e-10 {
                    continue; // both effectively zero (dead ReLU path)
                }
                nontrivial += 1;
                let rel = (analytic - fd).abs() / denom;
                assert!(
                    rel < REL_TOL,
                    "layer {layer} {kind}[{idx}]: analytic {analytic} vs fd {fd} (rel {rel})"
                );
            }
        }
    }
    assert_eq!(checked, ARCH.param_count());
    // The check must exercise real gradients, not a sea of zeros.
    assert!(
        nontrivial * 2 >= checked,
        "only {nontrivial}/{checked} parameters had non-zero gradients"
    );
}

#[test]
fn loss_decreases_along_negative_gradient() {
    let (net, target, batch) = find_safe_setup();
    let (loss, grads) = td_gradients(&net, &target, &batch, GAMMA).unwrap();

    let mut stepped = net.clone();
    let lr = 1e-3;
    for (layer, lg) in grads.layers.iter().enumerate() {
        for (idx, g) in lg.dw.iter().enumerate() {
            let w = stepped.weights(layer)[idx];
            stepped.set_weight(layer, idx, (w as f64 - lr * g) as f32);
        }
        for (idx, g) in lg.db.iter().enumerate() {
            let b = stepped.biases(layer)[idx];
            stepped.set_bias(layer, idx, (b as f64 - lr * g) as f32);
        }
    }
    let after = td_loss(&stepped, &target, &batch, GAMMA).unwrap();
    assert!(after < loss, "loss {loss} -> {after}");
}
