//! Finite-difference verification of every tape op.

use std::sync::Arc;

use ndarray::{arr2, Array2};
use rand::Rng;

use super::*;
use crate::rng::substream;

fn rand_arr(shape: (usize, usize), tag: u64) -> Array2<f64> {
    let mut rng = substream(99, &[tag]);
    let mut a = Array2::zeros(shape);
    for v in a.iter_mut() {
        *v = rng.random::<f64>() * 2.0 - 1.0;
    }
    a
}

/// Checks d(loss)/d(param) for every element of every parameter against
/// central differences. `build` maps bound params to a scalar loss var.
fn check_all(
    store: &mut ParamStore<f64>,
    build: impl Fn(&mut Tape<f64>, &Bound) -> Var,
) {
    // analytic
    let mut tape = Tape::new();
    let bound = store.bind(&mut tape);
    let loss = build(&mut tape, &bound);
    assert_eq!(tape.shape(loss), (1, 1));
    let mut grads = tape.backward(loss);
    let analytic: Vec<Array2<f64>> = (0..store.len())
        .map(|i| {
            grads
                .take(bound.var(ParamId(i)))
                .unwrap_or_else(|| Array2::zeros(store.value(ParamId(i)).dim()))
        })
        .collect();

    // numeric
    for i in 0..store.len() {
        let id = ParamId(i);
        let n = store.value(id).len();
        for flat in 0..n {
            let fd = central_diff(store, id, flat, 1e-6, |s| {
                let mut t = Tape::new();
                let b = s.bind(&mut t);
                let l = build(&mut t, &b);
                t.scalar(l)
            });
            let ad = analytic[i].as_slice().unwrap()[flat];
            let err = relative_error(fd, ad);
            assert!(
                err < 1e-6,
                "param {} elem {}: fd={fd} ad={ad} rel_err={err}",
                store.name(id),
                flat
            );
        }
    }
}

#[test]
fn grad_add_sub_mul_scale() {
    let mut store = ParamStore::new();
    store.add("a", rand_arr((3, 4), 1));
    store.add("b", rand_arr((3, 4), 2));
    let w = rand_arr((3, 4), 3);
    check_all(&mut store, |t, b| {
        let a = b.var(ParamId(0));
        let bb = b.var(ParamId(1));
        let s = t.add(a, bb);
        let d = t.sub(s, a);
        let m = t.mul_elem(d, s);
        let sc = t.scale(m, 0.7);
        let wc = t.constant(w.clone());
        let mm = t.mul_elem(sc, wc);
        t.sum_all(mm)
    });
}

#[test]
fn grad_matmul_both_orientations() {
    let mut store = ParamStore::new();
    store.add("a", rand_arr((3, 5), 4));
    store.add("b", rand_arr((5, 2), 5));
    store.add("c", rand_arr((4, 5), 6));
    check_all(&mut store, |t, b| {
        let a = b.var(ParamId(0));
        let bb = b.var(ParamId(1));
        let c = b.var(ParamId(2));
        let ab = t.matmul(a, bb); // 3x2
        let ac = t.matmul_tb(a, c); // 3x4
        let s1 = t.sum_all(ab);
        let s2 = t.sum_all(ac);
        let s2w = t.scale(s2, 0.3);
        t.add(s1, s2w)
    });
}

#[test]
fn grad_row_broadcast_ops() {
    let mut store = ParamStore::new();
    store.add("x", rand_arr((4, 3), 7));
    store.add("r", rand_arr((1, 3), 8));
    let w = rand_arr((4, 3), 9);
    check_all(&mut store, |t, b| {
        let x = b.var(ParamId(0));
        let r = b.var(ParamId(1));
        let a = t.add_row(x, r);
        let br = t.broadcast_row(r, 4);
        let m = t.mul_elem(a, br);
        let wc = t.constant(w.clone());
        let mw = t.mul_elem(m, wc);
        t.sum_all(mw)
    });
}

#[test]
fn grad_gelu() {
    let mut store = ParamStore::new();
    store.add("x", rand_arr((3, 3), 10));
    let w = rand_arr((3, 3), 11);
    check_all(&mut store, |t, b| {
        let x = b.var(ParamId(0));
        let g = t.gelu(x);
        let wc = t.constant(w.clone());
        let gw = t.mul_elem(g, wc);
        t.sum_all(gw)
    });
}

#[test]
fn grad_layer_norm() {
    let mut store = ParamStore::new();
    store.add("x", rand_arr((4, 6), 12));
    store.add("g", rand_arr((1, 6), 13));
    store.add("b", rand_arr((1, 6), 14));
    let w = rand_arr((4, 6), 15);
    check_all(&mut store, |t, bd| {
        let x = bd.var(ParamId(0));
        let g = bd.var(ParamId(1));
        let b = bd.var(ParamId(2));
        let y = t.layer_norm(x, g, b);
        let wc = t.constant(w.clone());
        let yw = t.mul_elem(y, wc);
        t.sum_all(yw)
    });
}

#[test]
fn grad_softmax_rows() {
    let mut store = ParamStore::new();
    store.add("x", rand_arr((3, 5), 16));
    let w = rand_arr((3, 5), 17);
    check_all(&mut store, |t, b| {
        let x = b.var(ParamId(0));
        let y = t.softmax_rows(x);
        let wc = t.constant(w.clone());
        let yw = t.mul_elem(y, wc);
        t.sum_all(yw)
    });
}

#[test]
fn grad_const_mats_and_slices() {
    let mut store = ParamStore::new();
    store.add("x", rand_arr((4, 6), 18));
    let c = Arc::new(rand_arr((4, 6), 19));
    let m = Arc::new(rand_arr((4, 6), 20));
    check_all(&mut store, move |t, b| {
        let x = b.var(ParamId(0));
        let a = t.add_const(x, c.clone());
        let mm = t.mul_const(a, m.clone());
        let top = t.slice_rows(mm, 1, 2);
        let left = t.slice_cols(top, 2, 3);
        t.sum_all(left)
    });
}

#[test]
fn grad_gather_concat() {
    let mut store = ParamStore::new();
    store.add("table", rand_arr((5, 3), 21));
    store.add("y", rand_arr((4, 3), 22));
    let idx = Arc::new(vec![2usize, 0, 2, 4]);
    let w = rand_arr((8, 6), 23);
    check_all(&mut store, move |t, b| {
        let table = b.var(ParamId(0));
        let y = b.var(ParamId(1));
        let g = t.gather_rows(table, idx.clone());
        let rows = t.concat_rows(g, y); // 8x3
        let cols = t.concat_cols(rows, rows); // 8x6
        let wc = t.constant(w.clone());
        let cw = t.mul_elem(cols, wc);
        t.sum_all(cw)
    });
}

#[test]
fn grad_rope() {
    let mut store = ParamStore::new();
    store.add("x", rand_arr((3, 8), 24)); // 2 heads of dim 4
    let n = 3;
    let planes = 2;
    let mut cos = Array2::zeros((n, planes));
    let mut sin = Array2::zeros((n, planes));
    let mut rng = substream(3, &[25]);
    for i in 0..n {
        for p in 0..planes {
            let ang: f64 = rng.random::<f64>() * 3.0;
            cos[[i, p]] = ang.cos();
            sin[[i, p]] = ang.sin();
        }
    }
    let cos = Arc::new(cos);
    let sin = Arc::new(sin);
    let w = rand_arr((3, 8), 26);
    check_all(&mut store, move |t, b| {
        let x = b.var(ParamId(0));
        let y = t.rope(x, 4, cos.clone(), sin.clone());
        let wc = t.constant(w.clone());
        let yw = t.mul_elem(y, wc);
        t.sum_all(yw)
    });
}

#[test]
fn grad_conv1d_strided_dilated() {
    for spec in [
        ConvSpec { kernel: 3, stride: 1, pad: 1, dilation: 1 },
        ConvSpec { kernel: 4, stride: 2, pad: 1, dilation: 1 },
        ConvSpec { kernel: 3, stride: 1, pad: 2, dilation: 2 },
    ] {
        let mut store = ParamStore::new();
        store.add("x", rand_arr((8, 3), 27));
        store.add("w", rand_arr((spec.kernel * 3, 2), 28));
        store.add("b", rand_arr((1, 2), 29));
        let t_out = spec.out_len(8);
        let w = rand_arr((t_out, 2), 30);
        check_all(&mut store, move |t, bd| {
            let x = bd.var(ParamId(0));
            let wv = bd.var(ParamId(1));
            let b = bd.var(ParamId(2));
            let y = t.conv1d(x, wv, b, spec);
            let wc = t.constant(w.clone());
            let yw = t.mul_elem(y, wc);
            t.sum_all(yw)
        });
    }
}

#[test]
fn grad_upsample2x() {
    let mut store = ParamStore::new();
    store.add("x", rand_arr((4, 3), 31));
    let w = rand_arr((8, 3), 32);
    check_all(&mut store, move |t, b| {
        let x = b.var(ParamId(0));
        let y = t.upsample2x_rows(x);
        let wc = t.constant(w.clone());
        let yw = t.mul_elem(y, wc);
        t.sum_all(yw)
    });
}

#[test]
fn grad_cross_entropy_rows() {
    let mut store = ParamStore::new();
    store.add("logits", rand_arr((5, 7), 33));
    let targets = Arc::new(vec![3usize, 0, 6, 2, 5]);
    let mask = Arc::new(vec![true, false, true, true, false]);
    check_all(&mut store, move |t, b| {
        let l = b.var(ParamId(0));
        t.cross_entropy_rows(l, targets.clone(), mask.clone())
    });
}

#[test]
fn grad_straight_through_and_detach() {
    let mut store = ParamStore::new();
    store.add("x", rand_arr((3, 3), 34));
    let target = rand_arr((3, 3), 35);
    let w = rand_arr((3, 3), 36);
    // loss = sum(w * ST(x -> target)) + sum(detach(x) * x)
    check_all(&mut store, move |t, b| {
        let x = b.var(ParamId(0));
        let st = t.straight_through(x, target.clone());
        let wc = t.constant(w.clone());
        let a = t.mul_elem(st, wc);
        let s1 = t.sum_all(a);
        let det = t.detach(x);
        let m = t.mul_elem(det, x);
        let s2 = t.sum_all(m);
        t.add(s1, s2)
    });
}

#[test]
fn straight_through_forwards_value_not_input() {
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(arr2(&[[1.0, 2.0]]));
    let st = tape.straight_through(x, arr2(&[[5.0, 9.0]]));
    assert_eq!(tape.data(st), &arr2(&[[5.0, 9.0]]));
}

#[test]
fn detach_blocks_gradient() {
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(arr2(&[[2.0]]));
    let d = tape.detach(x);
    let y = tape.mul_elem(d, d);
    let loss = tape.sum_all(y);
    let mut grads = tape.backward(loss);
    assert!(grads.take(x).is_none());
}

#[test]
fn masked_mse_matches_hand_value() {
    let mut tape = Tape::<f64>::new();
    let a = tape.leaf(arr2(&[[1.0, 2.0], [3.0, 4.0]]));
    let b = tape.constant(arr2(&[[0.0, 2.0], [3.0, 1.0]]));
    let mask = Arc::new(arr2(&[[1.0, 1.0], [1.0, 0.0]]));
    let l = tape.masked_mse(a, b, mask, 3);
    // diffs: 1,0,0,(masked) -> (1 + 0 + 0)/3
    assert!((tape.scalar(l) - 1.0 / 3.0).abs() < 1e-12);
}

#[test]
fn conv_out_len_matches_shapes() {
    let spec = ConvSpec { kernel: 4, stride: 2, pad: 1, dilation: 1 };
    assert_eq!(spec.out_len(192), 96);
    assert_eq!(spec.out_len(96), 48);
    let spec2 = ConvSpec { kernel: 3, stride: 1, pad: 2, dilation: 2 };
    assert_eq!(spec2.out_len(48), 48);
}
