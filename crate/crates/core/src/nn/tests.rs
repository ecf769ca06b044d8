use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::error::Error;

fn rand_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor<f64> {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn bn_ids(store: &mut ParamStore<f64>, d: usize) -> BatchNormIds {
    let n = store.len();
    BatchNormIds {
        gamma: store.add(format!("g{n}"), Tensor::filled(&[1, d], 1.3), true).unwrap(),
        beta: store.add(format!("b{n}"), Tensor::filled(&[1, d], -0.2), true).unwrap(),
        running_mean: store.add(format!("rm{n}"), Tensor::zeros(&[1, d]), false).unwrap(),
        running_var: store.add(format!("rv{n}"), Tensor::filled(&[1, d], 1.0), false).unwrap(),
    }
}

/// A small network exercising every op, reduced to a scalar by a fixed random projection.
struct Net {
    w1: ParamId,
    b1: ParamId,
    wq: ParamId,
    wk: ParamId,
    wv: ParamId,
    bn: BatchNormIds,
    wc: ParamId,
    x: Tensor<f64>,
}

fn net(seed: u64) -> (ParamStore<f64>, Net) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = ParamStore::new();
    let w1 = s.add_uniform("w1", &[8, 3], 3, &mut rng).unwrap();
    let b1 = s.add_uniform("b1", &[1, 8], 3, &mut rng).unwrap();
    let wq = s.add_uniform("wq", &[8, 8], 8, &mut rng).unwrap();
    let wk = s.add_uniform("wk", &[8, 8], 8, &mut rng).unwrap();
    let wv = s.add_uniform("wv", &[8, 8], 8, &mut rng).unwrap();
    let bn = bn_ids(&mut s, 8);
    let wc = s.add_uniform("wc", &[8, 24], 24, &mut rng).unwrap();
    let x = rand_tensor(&mut rng, 6, 3);
    (s, Net { w1, b1, wq, wk, wv, bn, wc, x })
}

fn forward(store: &ParamStore<f64>, n: &Net, mode: NormMode) -> crate::Result<Probe<f64>> {
    let mut t = Tape::new(store);
    let x = t.input(n.x.clone(), false);
    let h = t.dense(x, n.w1, Some(n.b1))?;
    let h = t.relu(h)?;
    let q = t.dense(h, n.wq, None)?;
    let k = t.dense(h, n.wk, None)?;
    let v = t.dense(h, n.wv, None)?;
    let a = t.attention(q, k, v, 2, 3, 3, None)?;
    let h2 = t.add(h, a)?;
    let h2 = t.batch_norm(h2, n.bn, mode)?;
    let g = t.mean_rows(h2, 3)?;
    let cur = t.gather_rows(h2, &[1, 4])?;
    let cur = t.concat_rows(&[cur, g])?;
    let cur = t.gather_rows(cur, &[0, 3])?;
    let ctx = t.concat_cols(&[g, cur, g])?;
    let ctx = t.dense(ctx, n.wc, None)?;
    let c = t.gather_rows(ctx, &[0])?;
    let compat = t.matmul_t(c, h2)?;
    let compat = t.tanh(compat)?;
    let compat = t.scale(compat, 3.0)?;
    let mask = [false, true, false, false, false, true];
    let lp = t.masked_log_softmax(compat, &mask, -999999.0)?;
    let p0 = t.pick(lp, 2)?;
    let p1 = t.pick(lp, 3)?;
    let out = t.sum(&[p0, p1])?;
    let value = t.value(out).data()[0];
    let back = t.backward(&[(out, Tensor::scalar(1.0))])?;
    Ok(Probe { value, grads: back.params, region: t.region() })
}

#[test]
fn every_op_passes_grad_check() {
    for mode in [NormMode::Train, NormMode::Infer] {
        let (mut store, n) = net(11);
        let cfg = GradCheckConfig { n_params: 200, step: 1e-5, tolerance: 1e-6, floor: 1e-4 };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let report = grad_check(&mut store, &cfg, &mut rng, |s| forward(s, &n, mode)).unwrap();
        let mut worst = report.entries.clone();
        worst.sort_by(|a, b| b.relative_error.total_cmp(&a.relative_error));
        assert!(report.passed, "{mode:?}: {:?}", &worst[..5]);
    }
}

#[test]
fn sign_flipped_backward_is_caught() {
    let (mut store, n) = net(5);
    let cfg = GradCheckConfig { n_params: 50, ..GradCheckConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let report = grad_check(&mut store, &cfg, &mut rng, |s| {
        let mut p = forward(s, &n, NormMode::Train)?;
        p.grads.scale(-1.0);
        Ok(p)
    })
    .unwrap();
    assert!(!report.passed);
}

#[test]
fn linear_sum_grad_check_in_f32() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut s = ParamStore::<f32>::new();
    let w = s.add_uniform("w", &[5, 4], 4, &mut rng).unwrap();
    let b = s.add_uniform("b", &[1, 5], 4, &mut rng).unwrap();
    let x = Tensor::matrix(3, 4, (0..12).map(|i| (i as f32 * 0.37).sin()).collect()).unwrap();
    let report = grad_check(&mut s, &GradCheckConfig::default(), &mut rng, |st| {
        let mut t = Tape::new(st);
        let xi = t.input(x.clone(), false);
        let y = t.dense(xi, w, Some(b))?;
        let total = t.sum(&[y])?;
        let v = t.value(total).data()[0];
        Ok(Probe { value: v, grads: t.backward(&[(total, Tensor::scalar(1.0))])?.params, region: 0 })
    })
    .unwrap();
    assert!(report.passed, "max rel err {}", report.max_relative_error);
}

#[test]
fn bias_gradient_of_sum_is_ones() {
    let mut s = ParamStore::<f64>::new();
    let w = s.add("w", Tensor::matrix(2, 2, vec![1.0, 1.0, 0.0, 1.0]).unwrap(), true).unwrap();
    let b = s.add("b", Tensor::row(vec![0.0, 0.0]), true).unwrap();
    let mut t = Tape::new(&s);
    let x = t.input(Tensor::matrix(3, 2, vec![1.0, 2.0, 0.5, 0.5, -1.0, 0.0]).unwrap(), true);
    let y = t.dense(x, w, Some(b)).unwrap();
    let total = t.sum(&[y]).unwrap();
    let back = t.backward(&[(total, Tensor::scalar(1.0))]).unwrap();
    assert_eq!(back.params.get(b).unwrap().data(), &[3.0, 3.0]);
    assert_eq!(back.node(x).unwrap().data(), &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
}

#[test]
fn batch_norm_examples() {
    let mut s = ParamStore::<f64>::new();
    let ids = BatchNormIds {
        gamma: s.add("g", Tensor::scalar(1.0), true).unwrap(),
        beta: s.add("b", Tensor::scalar(0.0), true).unwrap(),
        running_mean: s.add("rm", Tensor::scalar(0.0), false).unwrap(),
        running_var: s.add("rv", Tensor::scalar(1.0), false).unwrap(),
    };
    let mut t = Tape::new(&s);
    let x = t.input(Tensor::matrix(2, 1, vec![1.0, 3.0]).unwrap(), false);
    let y = t.batch_norm(x, ids, NormMode::Train).unwrap();
    let out = t.value(y).data().to_vec();
    assert!((out[0] + 1.0).abs() < 1e-4 && (out[1] - 1.0).abs() < 1e-4, "{out:?}");
    let updates = t.take_stat_updates();
    drop(t);
    s.apply_updates(updates);
    // mean 2, unbiased variance 2
    assert!((s.value(ids.running_mean).data()[0] - 0.2).abs() < 1e-12);
    assert!((s.value(ids.running_var).data()[0] - (0.9 + 0.2)).abs() < 1e-12);

    let single = {
        let mut t = Tape::new(&s);
        let x = t.input(Tensor::scalar(1.0), false);
        t.batch_norm(x, ids, NormMode::Train).map(|_| ())
    };
    assert!(matches!(single, Err(Error::BatchTooSmall(1))));

    s.value_mut(ids.gamma).data_mut()[0] = 0.0;
    s.value_mut(ids.beta).data_mut()[0] = 0.7;
    let mut t = Tape::new(&s);
    let x = t.input(Tensor::matrix(3, 1, vec![1.0, 5.0, -2.0]).unwrap(), false);
    let y = t.batch_norm(x, ids, NormMode::Train).unwrap();
    assert!(t.value(y).data().iter().all(|&v| v == 0.7));
    let a = t.batch_norm(x, ids, NormMode::Infer).unwrap();
    let b = t.batch_norm(x, ids, NormMode::Infer).unwrap();
    assert_eq!(t.value(a), t.value(b));
}

#[test]
fn batch_norm_train_output_is_standardised() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut s = ParamStore::<f32>::new();
    let d = 16;
    let ids = BatchNormIds {
        gamma: s.add("g", Tensor::filled(&[1, d], 1.0), true).unwrap(),
        beta: s.add("b", Tensor::zeros(&[1, d]), true).unwrap(),
        running_mean: s.add("rm", Tensor::zeros(&[1, d]), false).unwrap(),
        running_var: s.add("rv", Tensor::filled(&[1, d], 1.0), false).unwrap(),
    };
    let n = 200;
    let data = (0..n * d).map(|i| rng.gen_range(-3.0f32..5.0) * (1 + i % d) as f32).collect();
    let mut t = Tape::new(&s);
    let x = t.input(Tensor::matrix(n, d, data).unwrap(), false);
    let y = t.batch_norm(x, ids, NormMode::Train).unwrap();
    let yv = t.value(y);
    for c in 0..d {
        let col: Vec<f64> = (0..n).map(|r| yv.row_slice(r)[c] as f64).collect();
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 1e-4, "mean {mean}");
        assert!((var - 1.0).abs() < 1e-3, "var {var}");
    }
}

#[test]
fn attention_examples() {
    let s = ParamStore::<f64>::new();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut t = Tape::new(&s);
    let q = t.input(Tensor::zeros(&[2, 8]), false);
    let k = t.input(rand_tensor(&mut rng, 5, 8), false);
    let vt = rand_tensor(&mut rng, 5, 8);
    let v = t.input(vt.clone(), false);
    let a = t.attention(q, k, v, 4, 2, 5, None).unwrap();
    for r in 0..2 {
        for c in 0..8 {
            let mean = (0..5).map(|j| vt.row_slice(j)[c]).sum::<f64>() / 5.0;
            assert!((t.value(a).row_slice(r)[c] - mean).abs() < 1e-12);
        }
    }
    let q1 = t.input(rand_tensor(&mut rng, 1, 8), false);
    let k1 = t.input(rand_tensor(&mut rng, 1, 8), false);
    let v1 = t.input(rand_tensor(&mut rng, 1, 8), false);
    let a1 = t.attention(q1, k1, v1, 2, 1, 1, None).unwrap();
    assert_eq!(t.value(a1), t.value(v1));
    let masked = t.attention(q, k, v, 4, 2, 5, Some(&[true, false, true, true, true])).unwrap();
    for r in 0..2 {
        assert_eq!(t.value(masked).row_slice(r), vt.row_slice(1));
    }
    assert!(matches!(t.attention(q, k, v, 4, 2, 5, Some(&[true; 5])), Err(Error::AllMasked)));
    assert!(t.attention(q, k, v, 3, 2, 5, None).is_err());
}

#[test]
fn masked_log_softmax_is_normalised() {
    let s = ParamStore::<f32>::new();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let n = rng.gen_range(2..30);
        let logits: Vec<f32> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let mut mask: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
        mask[rng.gen_range(0..n)] = false;
        let mut t = Tape::new(&s);
        let x = t.input(Tensor::row(logits), false);
        let lp = t.masked_log_softmax(x, &mask, -999999.0).unwrap();
        let p: Vec<f32> = t.value(lp).data().iter().map(|v| v.exp()).collect();
        assert!((p.iter().sum::<f32>() - 1.0).abs() < 1e-5);
        for (pi, &m) in p.iter().zip(&mask) {
            assert!(*pi >= 0.0);
            if m {
                assert!(*pi < 1e-6);
            }
        }
    }
}
