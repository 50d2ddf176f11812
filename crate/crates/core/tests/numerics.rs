//! Gradient and optimizer verification against independent oracles:
//! straight-line forward re-implementations, central finite differences, and
//! a hand-run Adam recursion.

use std::rc::Rc;

use ecloth::gnn::{build_graph, GnnModel, GraphData, ModelConfig, Variant};
use ecloth::tensornet::{
    adam_step, forward, AdamState, ArcIndex, Checkpoint, Gradients, Mlp, ParamSet, Tape, Tensor,
    ValueId,
};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FD_H: f64 = 1e-6;
const REL_TOL: f64 = 1e-5;
const ABS_FLOOR: f64 = 1e-7;

fn random_tensor<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Tensor {
    Tensor::new(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

/// Central finite differences over every parameter scalar of `params`.
fn finite_diff_grads(params: &mut ParamSet, eval: &mut dyn FnMut(&ParamSet) -> f64) -> Vec<Vec<f64>> {
    let ids: Vec<_> = params.ids().collect();
    let mut out = Vec::new();
    for id in ids {
        let len = params.get(id).len();
        let mut g = Vec::with_capacity(len);
        for j in 0..len {
            let orig = params.get(id).data()[j];
            params.get_mut(id).data_mut()[j] = orig + FD_H;
            let plus = eval(params);
            params.get_mut(id).data_mut()[j] = orig - FD_H;
            let minus = eval(params);
            params.get_mut(id).data_mut()[j] = orig;
            g.push((plus - minus) / (2.0 * FD_H));
        }
        out.push(g);
    }
    out
}

fn assert_grads_match(params: &ParamSet, analytic: &Gradients, numeric: &[Vec<f64>]) {
    for (i, id) in params.ids().enumerate() {
        let a = analytic.get(id);
        for (j, &fd) in numeric[i].iter().enumerate() {
            let an = a.map(|t| t.data()[j]).unwrap_or(0.0);
            let err = (an - fd).abs();
            let scale = an.abs().max(fd.abs());
            assert!(
                err <= ABS_FLOOR + REL_TOL * scale,
                "param {} [{}]: analytic {an} vs finite-diff {fd}",
                params.name(id),
                j
            );
        }
    }
}

#[test]
fn mlp_forward_matches_straight_line_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut params = ParamSet::new();
    let mlp = Mlp::new(&mut params, "m", &[4, 5, 3], true, &mut rng);
    let x = random_tensor(&mut rng, 7, 4);
    let got = forward(&params, &mlp, &x).unwrap();

    let (w0, b0) = mlp.layer_params(0);
    let (gain, beta) = mlp.norm_params(0).unwrap();
    let (w1, b1) = mlp.layer_params(1);
    let (w0, b0) = (params.get(w0), params.get(b0));
    let (w1, b1) = (params.get(w1), params.get(b1));
    let (gain, beta) = (params.get(gain), params.get(beta));
    for r in 0..7 {
        let xr = x.row_slice(r);
        let mut h: Vec<f64> = (0..5)
            .map(|o| b0.data()[o] + (0..4).map(|k| xr[k] * w0.get(o, k)).sum::<f64>())
            .collect();
        let mean = h.iter().sum::<f64>() / 5.0;
        let var = h.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 5.0;
        let inv = 1.0 / (var + 1e-5).sqrt();
        for (j, v) in h.iter_mut().enumerate() {
            *v = ((*v - mean) * inv * gain.data()[j] + beta.data()[j]).max(0.0);
        }
        for o in 0..3 {
            let expect = b1.data()[o] + (0..5).map(|k| h[k] * w1.get(o, k)).sum::<f64>();
            assert!((got.get(r, o) - expect).abs() < 1e-12);
        }
    }
}

#[test]
fn identity_layer_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut params = ParamSet::new();
    let mlp = Mlp::new(&mut params, "id", &[2, 2], false, &mut rng);
    let (w, b) = mlp.layer_params(0);
    *params.get_mut(w) = Tensor::new(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    *params.get_mut(b) = Tensor::zeros(1, 2);
    let y = forward(&params, &mlp, &Tensor::row(&[1.0, 2.0])).unwrap();
    assert_eq!(y.data(), &[1.0, 2.0]);
}

#[test]
fn affine_final_layer_has_no_activation() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut params = ParamSet::new();
    let mlp = Mlp::new(&mut params, "aff", &[2, 1], false, &mut rng);
    let (w, b) = mlp.layer_params(0);
    *params.get_mut(w) = Tensor::new(1, 2, vec![1.0, -1.0]).unwrap();
    *params.get_mut(b) = Tensor::zeros(1, 1);
    let y = forward(&params, &mlp, &Tensor::row(&[3.0, 5.0])).unwrap();
    assert_eq!(y.data(), &[-2.0]);
}

#[test]
fn forward_shape_mismatch_reports_both_shapes() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut params = ParamSet::new();
    let mlp = Mlp::new(&mut params, "m", &[4, 3], false, &mut rng);
    let err = forward(&params, &mlp, &Tensor::row(&[1.0, 2.0])).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("(1, 2)") && msg.contains("(3, 4)"), "{msg}");
}

#[test]
fn linear_map_gradient_is_outer_product() {
    // loss = sum(W x + b) with x fixed: ∂loss/∂W[o][k] = x[k], ∂loss/∂b = 1.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut params = ParamSet::new();
    let w = params.add("w", random_tensor(&mut rng, 3, 4));
    let b = params.add("b", Tensor::zeros(1, 3));
    let x = Tensor::row(&[0.5, -1.5, 2.0, 0.25]);
    let mut tape = Tape::new(&params);
    let xid = tape.leaf(x.clone());
    let y = tape.linear(xid, w, b).unwrap();
    let loss = tape.sum_all(y);
    let grads = tape.backward(loss).unwrap();
    let gw = grads.get(w).unwrap();
    for o in 0..3 {
        for k in 0..4 {
            assert!((gw.get(o, k) - x.data()[k]).abs() < 1e-12);
        }
    }
    assert!(grads.get(b).unwrap().data().iter().all(|v| (v - 1.0).abs() < 1e-12));
}

#[test]
fn relu_at_zero_uses_zero_subgradient() {
    let mut params = ParamSet::new();
    let w = params.add("w", Tensor::new(1, 1, vec![0.0]).unwrap());
    let b = params.add("b", Tensor::zeros(1, 1));
    let mut tape = Tape::new(&params);
    let x = tape.leaf(Tensor::row(&[1.0]));
    let pre = tape.linear(x, w, b).unwrap(); // exactly 0
    let y = tape.relu(pre);
    let loss = tape.sum_all(y);
    let grads = tape.backward(loss).unwrap();
    assert_eq!(grads.get(w).unwrap().data()[0], 0.0);
}

#[test]
fn every_layer_type_matches_finite_differences() {
    // One composition touching linear, layer_norm, relu, gather, concat,
    // scale, message_preact, scatter_add, segment_mean and mse, over a
    // 20-sample random-input suite.
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _trial in 0..20 {
        let mut params = ParamSet::new();
        let w0 = params.add("w0", random_tensor(&mut rng, 4, 3));
        let b0 = params.add("b0", random_tensor(&mut rng, 1, 4));
        let gain = params.add("gain", random_tensor(&mut rng, 1, 4));
        let beta = params.add("beta", random_tensor(&mut rng, 1, 4));
        let wm = params.add("wm", random_tensor(&mut rng, 4, 10)); // 4+4+2
        let bm = params.add("bm", random_tensor(&mut rng, 1, 4));
        let w1 = params.add("w1", random_tensor(&mut rng, 2, 8));
        let b1 = params.add("b1", random_tensor(&mut rng, 1, 2));

        let x = random_tensor(&mut rng, 5, 3);
        let c = random_tensor(&mut rng, 1, 2);
        let arcs = Rc::new(ArcIndex {
            src: vec![0, 1, 2, 3, 4, 0],
            dst: vec![1, 0, 3, 2, 0, 4],
            graph: vec![0; 6],
        });
        let target = random_tensor(&mut rng, 1, 2);

        let record = |tape: &mut Tape| -> ValueId {
            let xid = tape.leaf(x.clone());
            let cid = tape.leaf(c.clone());
            let h = tape.linear(xid, w0, b0).unwrap();
            let h = tape.layer_norm(h, gain, beta).unwrap();
            let h = tape.relu(h);
            let m = tape.message_preact(h, cid, wm, bm, arcs.clone()).unwrap();
            let agg = tape.scatter_add_rows(m, Rc::new(arcs.dst.clone()), 5);
            let picked = tape.gather_rows(agg, Rc::new(vec![0, 2, 4]));
            let both = tape.concat_cols(&[picked, picked]).unwrap();
            let half = tape.scale(both, 0.5);
            let y = tape.linear(half, w1, b1).unwrap();
            let pooled = tape.segment_mean_rows(y, Rc::new(vec![0, 0, 0]), 1);
            tape.mse(pooled, target.clone()).unwrap()
        };

        let numeric = finite_diff_grads(&mut params, &mut |p| {
            let mut tape = Tape::new(p);
            let loss = record(&mut tape);
            tape.value(loss).scalar()
        });

        let mut tape = Tape::new(&params);
        let loss = record(&mut tape);
        let analytic = tape.backward(loss).unwrap();
        drop(tape);
        assert_grads_match(&params, &analytic, &numeric);
    }
}

#[test]
fn message_preact_matches_gather_concat_linear() {
    // Independent composition of plain ops must agree with the fused op.
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut params = ParamSet::new();
    let w = params.add("w", random_tensor(&mut rng, 6, 11)); // 4+4+3
    let b = params.add("b", random_tensor(&mut rng, 1, 6));
    let h = random_tensor(&mut rng, 5, 4);
    let c = random_tensor(&mut rng, 2, 3);
    let arcs = Rc::new(ArcIndex {
        src: vec![0, 4, 2, 1],
        dst: vec![1, 3, 0, 2],
        graph: vec![0, 1, 1, 0],
    });
    let mut tape = Tape::new(&params);
    let hid = tape.leaf(h);
    let cid = tape.leaf(c);
    let fused = tape.message_preact(hid, cid, w, b, arcs.clone()).unwrap();
    let hd = tape.gather_rows(hid, Rc::new(arcs.dst.clone()));
    let hs = tape.gather_rows(hid, Rc::new(arcs.src.clone()));
    let cg = tape.gather_rows(cid, Rc::new(arcs.graph.clone()));
    let cat = tape.concat_cols(&[hd, hs, cg]).unwrap();
    let plain = tape.linear(cat, w, b).unwrap();
    for (a, b) in tape
        .value(fused)
        .data()
        .iter()
        .zip(tape.value(plain).data().iter())
    {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn full_gnn_loss_gradient_on_micro_mesh() {
    // 3×3 mesh, context dimension 2: reverse mode vs central differences at
    // 1e-5 relative on every parameter of the full model loss.
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut model = GnnModel::new(ModelConfig::new(Variant::Ec(2), 0.18), 42);
    let positions: Vec<[f64; 3]> = (0..9)
        .map(|i| {
            [
                (i % 3) as f64 * 0.09 + rng.gen_range(-0.01..0.01),
                rng.gen_range(-0.01..0.01),
                -((i / 3) as f64) * 0.09 + rng.gen_range(-0.01..0.01),
            ]
        })
        .collect();
    let graph = build_graph(
        &GraphData {
            positions: &positions,
            action: [0.0, 0.0, 0.0036],
        },
        3,
        3,
        &[0.8, 1.3],
        0.18,
    )
    .unwrap();
    let target_dpos = random_tensor(&mut rng, 9, 3);
    let target_force = random_tensor(&mut rng, 1, 1);

    let (_, analytic) = model
        .loss_and_grads(&[&graph], &target_dpos, &target_force)
        .unwrap();

    // In-place perturbation: loss_value reads the same parameter set.
    let ids: Vec<_> = model.params.ids().collect();
    let mut numeric = Vec::new();
    for id in ids {
        let len = model.params.get(id).len();
        let mut g = Vec::with_capacity(len);
        for j in 0..len {
            let orig = model.params.get(id).data()[j];
            model.params.get_mut(id).data_mut()[j] = orig + FD_H;
            let plus = model
                .loss_value(&[&graph], &target_dpos, &target_force)
                .unwrap();
            model.params.get_mut(id).data_mut()[j] = orig - FD_H;
            let minus = model
                .loss_value(&[&graph], &target_dpos, &target_force)
                .unwrap();
            model.params.get_mut(id).data_mut()[j] = orig;
            g.push((plus - minus) / (2.0 * FD_H));
        }
        numeric.push(g);
    }
    assert_grads_match(&model.params, &analytic, &numeric);
}

#[test]
fn backward_without_forward_errors() {
    let params = ParamSet::new();
    let tape = Tape::new(&params);
    assert!(tape.backward(ValueId(0)).is_err());
}

#[test]
fn backward_rejects_non_scalar_loss() {
    let params = ParamSet::new();
    let mut tape = Tape::new(&params);
    let x = tape.leaf(Tensor::row(&[1.0, 2.0]));
    assert!(tape.backward(x).is_err());
}

#[test]
fn layer_norm_examples() {
    let mut params = ParamSet::new();
    let gain3 = params.add("g3", Tensor::new(1, 3, vec![1.0; 3]).unwrap());
    let beta3 = params.add("b3", Tensor::zeros(1, 3));
    let gain2 = params.add("g2", Tensor::new(1, 2, vec![1.0; 2]).unwrap());
    let beta2 = params.add("b2", Tensor::zeros(1, 2));

    let mut tape = Tape::new(&params);
    let x = tape.leaf(Tensor::row(&[1.0, 1.0, 1.0]));
    let y = tape.layer_norm(x, gain3, beta3).unwrap();
    assert_eq!(tape.value(y).data(), &[0.0, 0.0, 0.0]);

    let x = tape.leaf(Tensor::row(&[-1.0, 1.0]));
    let y = tape.layer_norm(x, gain2, beta2).unwrap();
    // Direct formula: (±1 − 0)/sqrt(1 + 1e-5).
    let expect = 1.0 / (1.0f64 + 1e-5).sqrt();
    assert!((tape.value(y).data()[1] - expect).abs() < 1e-15);
    assert!((tape.value(y).data()[0] + expect).abs() < 1e-15);

    // Shift invariance.
    let x = tape.leaf(Tensor::row(&[0.3, -0.7]));
    let xs = tape.leaf(Tensor::row(&[0.3 + 5.0, -0.7 + 5.0]));
    let y = tape.layer_norm(x, gain2, beta2).unwrap();
    let ys = tape.layer_norm(xs, gain2, beta2).unwrap();
    for (a, b) in tape.value(y).data().iter().zip(tape.value(ys).data().iter()) {
        assert!((a - b).abs() < 1e-9);
    }
}

fn grads_for(params: &ParamSet, entries: &[(usize, Tensor)]) -> Gradients {
    let mut slots: Vec<Option<Tensor>> = (0..params.len()).map(|_| None).collect();
    for (idx, t) in entries {
        slots[*idx] = Some(t.clone());
    }
    Gradients::from_slots(slots)
}

#[test]
fn adam_first_step_magnitude_is_lr() {
    let mut params = ParamSet::new();
    let w = params.add("w", Tensor::row(&[0.2, -0.4, 1.0]));
    let mut adam = AdamState::new(&params, 3e-4);
    let grads = grads_for(&params, &[(w.index(), Tensor::row(&[1.0, 1.0, 1.0]))]);
    let before: Vec<f64> = params.get(w).data().to_vec();
    adam_step(&mut params, &grads, &mut adam).unwrap();
    for (a, b) in params.get(w).data().iter().zip(before.iter()) {
        // First step: −lr·g/(|g| + ε) ≈ −lr·sign(g); g = 1 here.
        assert!(((b - a).abs() - 3e-4).abs() < 1e-6);
        assert!(a < b);
    }
    assert_eq!(adam.step_count, 1);
}

#[test]
fn adam_zero_gradient_leaves_params() {
    let mut params = ParamSet::new();
    let w = params.add("w", Tensor::row(&[0.5, -0.5]));
    let mut adam = AdamState::new(&params, 0.1);
    let grads = grads_for(&params, &[(w.index(), Tensor::row(&[0.0, 0.0]))]);
    let before = params.get(w).clone();
    adam_step(&mut params, &grads, &mut adam).unwrap();
    assert_eq!(params.get(w).data(), before.data());
}

#[test]
fn adam_matches_scalar_recursion_oracle() {
    // 100 steps on f(w) = (w − 3)², lr = 0.1, w₀ = 0; the oracle runs the
    // textbook update independently.
    let mut params = ParamSet::new();
    let w = params.add("w", Tensor::row(&[0.0]));
    let mut adam = AdamState::new(&params, 0.1);

    let (mut m, mut v, mut w_ref) = (0.0f64, 0.0f64, 0.0f64);
    for t in 1..=100 {
        let wv = params.get(w).data()[0];
        let grads = grads_for(&params, &[(w.index(), Tensor::row(&[2.0 * (wv - 3.0)]))]);
        adam_step(&mut params, &grads, &mut adam).unwrap();

        let g_ref = 2.0 * (w_ref - 3.0);
        m = 0.9 * m + 0.1 * g_ref;
        v = 0.999 * v + 0.001 * g_ref * g_ref;
        let mhat = m / (1.0 - 0.9f64.powi(t));
        let vhat = v / (1.0 - 0.999f64.powi(t));
        w_ref -= 0.1 * mhat / (vhat.sqrt() + 1e-8);
        assert!(
            (params.get(w).data()[0] - w_ref).abs() < 1e-12,
            "step {t}: {} vs oracle {w_ref}",
            params.get(w).data()[0]
        );
    }
    assert!((params.get(w).data()[0] - 3.0).abs() < 0.5);
}

#[test]
fn non_finite_gradients_skip_update() {
    let mut params = ParamSet::new();
    let w = params.add("w", Tensor::row(&[1.0]));
    let mut adam = AdamState::new(&params, 0.1);
    let grads = grads_for(&params, &[(w.index(), Tensor::row(&[f64::NAN]))]);
    let before = params.get(w).clone();
    assert!(adam_step(&mut params, &grads, &mut adam).is_err());
    assert_eq!(params.get(w).data(), before.data());
    assert_eq!(adam.step_count, 0);
}

#[test]
fn checkpoint_round_trip_is_bitwise() {
    let mut model = GnnModel::new(ModelConfig::new(Variant::Ec(1), 0.18), 9);
    let ids: Vec<_> = model.params.ids().collect();
    for id in ids {
        for v in model.params.get_mut(id).data_mut() {
            *v = (*v + 0.12345).sin();
        }
    }
    let ckpt = model.to_checkpoint(None);
    let json = serde_json::to_string(&ckpt).unwrap();
    let parsed: Checkpoint = serde_json::from_str(&json).unwrap();
    let restored = GnnModel::from_checkpoint(&parsed).unwrap();

    let positions: Vec<[f64; 3]> = (0..9)
        .map(|i| [(i % 3) as f64 * 0.09, 0.0, -((i / 3) as f64) * 0.09])
        .collect();
    let graph = build_graph(
        &GraphData {
            positions: &positions,
            action: [0.0, 0.0, 0.001],
        },
        3,
        3,
        &[1.0],
        0.18,
    )
    .unwrap();
    let a = model.predict(&graph).unwrap();
    let b = restored.predict(&graph).unwrap();
    assert_eq!(a.force.to_bits(), b.force.to_bits());
    for (x, y) in a.delta_positions.iter().zip(b.delta_positions.iter()) {
        for k in 0..3 {
            assert_eq!(x[k].to_bits(), y[k].to_bits());
        }
    }
}

#[test]
fn model_init_is_deterministic() {
    let a = GnnModel::new(ModelConfig::new(Variant::Baseline, 0.18), 7);
    let b = GnnModel::new(ModelConfig::new(Variant::Baseline, 0.18), 7);
    for (ia, ib) in a.params.ids().zip(b.params.ids()) {
        assert_eq!(a.params.get(ia).data(), b.params.get(ib).data());
    }
}
