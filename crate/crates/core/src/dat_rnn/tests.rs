use super::*;
use crate::gradcheck::check_gradients;
use crate::params::Parameters;
use ndarray::{arr2, Array1};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn rand2(dim: (usize, usize), r: &mut ChaCha8Rng) -> Array2<f64> {
    crate::params::uniform(dim, 1.0, r)
}

fn rand3(dim: (usize, usize, usize), r: &mut ChaCha8Rng) -> Array3<f64> {
    crate::params::uniform(dim, 1.0, r)
}

fn weighted<D: ndarray::Dimension>(y: &ndarray::Array<f64, D>, w: &ndarray::Array<f64, D>) -> f64 {
    (y * w).sum()
}

#[test]
fn segment_exact_tiling() {
    let x = Array3::from_shape_fn((1, 2, 8), |(_, d, t)| (10 * d + t) as f64);
    let c = segment(&x, 4).unwrap();
    assert_eq!(c.n_chunks(), 3);
    assert_eq!(c.pad_frames, 0);
    for (k, start) in [0, 2, 4].into_iter().enumerate() {
        for j in 0..4 {
            assert_eq!(c.data[[0, 1, k, j]], (10 + start + j) as f64);
        }
    }
}

#[test]
fn segment_pads_to_tile() {
    let x = Array3::ones((2, 3, 7));
    let c = segment(&x, 4).unwrap();
    assert_eq!(c.n_chunks(), 3);
    assert_eq!(c.pad_frames, 1);
    assert_eq!(c.data[[0, 0, 2, 3]], 0.0);
    assert_eq!(chunk_layout(1, 32), (1, 31));
}

#[test]
fn segment_merge_round_trip() {
    let mut r = rng(1);
    for (t, p) in [(1, 2), (5, 4), (7, 4), (32, 32), (33, 32), (100, 8), (3, 6)] {
        let x = rand3((2, 3, t), &mut r);
        let c = segment(&x, p).unwrap();
        assert!(c.pad_frames < p);
        let y = merge(&c).unwrap();
        assert_eq!(y.dim(), x.dim());
        assert!((&y - &x).mapv(f64::abs).fold(0.0, |a: f64, b| a.max(*b)) <= 1e-12);
    }
    let single = rand3((1, 2, 4), &mut r);
    assert_eq!(merge(&segment(&single, 4).unwrap()).unwrap(), single);
    let z = segment(&Array3::zeros((1, 2, 9)), 4).unwrap();
    assert!(merge(&z).unwrap().iter().all(|v| *v == 0.0));
}

#[test]
fn segment_errors() {
    let x = Array3::ones((1, 1, 5));
    assert!(segment(&x, 0).is_err());
    assert!(segment(&x, 3).is_err());
    assert!(segment(&Array3::zeros((1, 1, 0)), 4).is_err());
    let mut c = segment(&x, 4).unwrap();
    c.hop = 3;
    assert!(merge(&c).is_err());
}

#[test]
fn chunk_adjoints() {
    let mut r = rng(2);
    let x = rand3((1, 2, 7), &mut r);
    let c = segment(&x, 4).unwrap();
    let w = crate::params::uniform(c.data.dim(), 1.0, &mut r);
    let lhs = (&c.data * &w).sum();
    let rhs = (&x * &chunk::segment_backward(&c.with_data(w.clone())).unwrap()).sum();
    assert!((lhs - rhs).abs() < 1e-12);

    let cw = c.with_data(w);
    let y = merge(&cw).unwrap();
    let dy = rand3(y.dim(), &mut r);
    let lhs = (&y * &dy).sum();
    let rhs = (&cw.data * &chunk::merge_backward(&dy, &cw).unwrap().data).sum();
    assert!((lhs - rhs).abs() < 1e-12);
}

#[test]
fn attention_single_step() {
    let k = arr2(&[[0.3, -1.2, 0.5]]);
    let q = arr2(&[[2.0, 0.1, -0.4]]);
    for causal in [false, true] {
        let a = attention(&k, &q, causal).unwrap();
        assert_eq!(a.weights, arr2(&[[1.0]]));
        assert!((&a.context - &k).iter().all(|v| v.abs() < 1e-15));
    }
}

#[test]
fn attention_identical_causal_is_uniform_over_past() {
    let k = Array2::from_elem((5, 3), 0.7);
    let a = attention(&k, &k, true).unwrap();
    for i in 0..5 {
        for j in 0..5 {
            let expect = if j <= i { 1.0 / (i + 1) as f64 } else { 0.0 };
            assert!((a.weights[[i, j]] - expect).abs() < 1e-12);
        }
    }
}

#[test]
fn attention_matches_softmax_by_hand() {
    let k = arr2(&[[0.2, -0.5], [1.0, 0.3], [-0.7, 0.8]]);
    let q = arr2(&[[0.4, 0.1], [-0.3, 0.9], [0.6, -0.2]]);
    for causal in [false, true] {
        let a = attention(&k, &q, causal).unwrap();
        for i in 0..3 {
            let n = if causal { i + 1 } else { 3 };
            let scores: Vec<f64> = (0..n)
                .map(|j| (q[[i, 0]] * k[[j, 0]] + q[[i, 1]] * k[[j, 1]]) / 2f64.sqrt())
                .collect();
            let z: f64 = scores.iter().map(|s| s.exp()).sum();
            let mut ctx = [0.0; 2];
            for j in 0..3 {
                let w = if j < n { scores[j].exp() / z } else { 0.0 };
                assert!((a.weights[[i, j]] - w).abs() <= 1e-12);
                ctx[0] += w * k[[j, 0]];
                ctx[1] += w * k[[j, 1]];
            }
            assert!((a.context[[i, 0]] - ctx[0]).abs() <= 1e-12);
            assert!((a.context[[i, 1]] - ctx[1]).abs() <= 1e-12);
        }
    }
}

#[test]
fn attention_rows_are_distributions() {
    let mut r = rng(3);
    let k = rand2((9, 4), &mut r) * 5.0;
    let q = rand2((9, 4), &mut r) * 5.0;
    for causal in [false, true] {
        let a = attention(&k, &q, causal).unwrap();
        for (i, row) in a.weights.outer_iter().enumerate() {
            assert!((row.sum() - 1.0).abs() <= 1e-12);
            assert!(row.iter().all(|v| *v >= 0.0));
            if causal {
                assert!(row.iter().skip(i + 1).all(|v| *v == 0.0));
            }
        }
    }
    assert!(attention(&k, &rand2((9, 3), &mut r), false).is_err());
}

#[test]
fn attention_gradients() {
    let mut r = rng(4);
    for causal in [false, true] {
        let kq = rand2((10, 3), &mut r);
        let w = rand2((5, 3), &mut r);
        let loss = |kq: &Array2<f64>| {
            let k = kq.slice(s![..5, ..]).to_owned();
            let q = kq.slice(s![5.., ..]).to_owned();
            weighted(&attention(&k, &q, causal).unwrap().context, &w)
        };
        let k = kq.slice(s![..5, ..]).to_owned();
        let q = kq.slice(s![5.., ..]).to_owned();
        let out = attention(&k, &q, causal).unwrap();
        let (dk, dq) = attention_backward(&k, &q, &out, &w);
        let grad = ndarray::concatenate![ndarray::Axis(0), dk, dq];
        let empty = Array1::<f64>::zeros(0);
        let rep = check_gradients(&empty, &kq, &empty, &grad, 1e-5, |_, x| loss(x));
        assert!(rep.passes(1e-4), "{rep:?}");
    }
}

#[test]
fn lstm_matches_scalar_recurrence() {
    let mut r = rng(5);
    let mut l = Lstm::new(1, 1, &mut r);
    l.w_ih = arr2(&[[0.5], [-0.3], [0.8], [0.2]]);
    l.w_hh = arr2(&[[0.1], [0.4], [-0.6], [0.7]]);
    l.b = Array1::from(vec![0.0, 1.0, 0.1, -0.2]);
    let xs = [1.0, -0.5, 2.0];
    let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
    let (mut h, mut c) = (0.0, 0.0);
    let mut expect = vec![];
    for x in xs {
        let i = sig(0.5 * x + 0.1 * h);
        let f = sig(-0.3 * x + 0.4 * h + 1.0);
        let g = (0.8 * x - 0.6 * h + 0.1).tanh();
        let o = sig(0.2 * x + 0.7 * h - 0.2);
        c = f * c + i * g;
        h = o * c.tanh();
        expect.push(h);
    }
    let (out, _) = l.forward(&Array2::from_shape_vec((3, 1), xs.to_vec()).unwrap());
    for t in 0..3 {
        assert!((out[[t, 0]] - expect[t]).abs() < 1e-14);
    }
    assert_eq!(lstm_param_count(1, 1), l.num_params());
}

#[test]
fn lstm_gradients() {
    let mut r = rng(6);
    let l = Lstm::new(3, 4, &mut r);
    let x = rand2((5, 3), &mut r);
    let (y, cache) = l.forward(&x);
    let w = rand2(y.dim(), &mut r);
    let mut g = l.zeros_like();
    let dx = l.backward(&cache, &w, &mut g);
    let rep = check_gradients(&l, &x, &g, &dx, 1e-5, |p, x| weighted(&p.forward(x).0, &w));
    assert!(rep.passes(1e-4), "{rep:?}");
}

#[test]
fn linear_and_layer_norm_gradients() {
    let mut r = rng(7);
    let lin = Linear::new(4, 3, &mut r);
    let x = rand2((5, 4), &mut r);
    let w = rand2((5, 3), &mut r);
    let mut g = lin.zeros_like();
    let dx = lin.backward(&x, &w, &mut g);
    let rep = check_gradients(&lin, &x, &g, &dx, 1e-5, |p, x| weighted(&p.forward(x), &w));
    assert!(rep.passes(1e-4), "{rep:?}");

    let mut ln = LayerNorm::new(4);
    ln.gamma = Array1::from(vec![1.0, 2.0, -0.5, 0.3]);
    ln.beta = Array1::from(vec![0.1, 0.0, 0.2, -0.1]);
    let w = rand2((5, 4), &mut r);
    let (_, cache) = ln.forward(&x);
    let mut g = ln.zeros_like();
    let dx = ln.backward(&cache, &w, &mut g);
    let rep = check_gradients(&ln, &x, &g, &dx, 1e-5, |p, x| weighted(&p.forward(x).0, &w));
    assert!(rep.passes(1e-4), "{rep:?}");
}

#[test]
fn encode_shapes_and_zero_input() {
    let mut r = rng(8);
    let mut p = AttentionPath::new(4, 3, true, false, MaskTarget::Input, &mut r);
    let e = p.encode(&rand2((1, 4), &mut r));
    assert_eq!(e.keys.dim(), (1, 4));
    assert_eq!(e.queries.dim(), (1, 4));

    p.rnn_fwd.b.fill(0.0);
    p.rnn_bwd.as_mut().unwrap().b.fill(0.0);
    p.proj.b.fill(0.0);
    p.ln.beta = Array1::from(vec![0.5, -0.5, 1.0, 0.0]);
    let e = p.encode(&Array2::zeros((3, 4)));
    assert!(e.recurrent.iter().all(|v| *v == 0.0));
    for row in e.keys.outer_iter() {
        let expect = p.key.forward(&p.ln.beta.clone().insert_axis(ndarray::Axis(0)));
        assert!((&row - &expect.row(0)).iter().all(|v| v.abs() < 1e-12));
    }
}

#[test]
fn mask_saturation_and_bounds() {
    let mut r = rng(9);
    let c = rand2((4, 3), &mut r);
    let q = rand2((4, 3), &mut r);
    let x = rand2((4, 3), &mut r);
    let mut head = Linear::zeros(6, 3);
    head.b.fill(60.0);
    let (y, m, _) = mask_and_enhance(&c, &q, &x, &x, &head);
    assert!((&y - &(&x * 2.0)).iter().all(|v| v.abs() < 1e-12));
    assert!(m.iter().all(|v| (*v - 1.0).abs() < 1e-12));
    head.b.fill(-60.0);
    let (y, _, _) = mask_and_enhance(&c, &q, &x, &x, &head);
    assert!((&y - &x).iter().all(|v| v.abs() < 1e-12));

    let head = Linear::new(6, 3, &mut r);
    let x = rand2((4, 3), &mut r) * 10.0;
    let (y, m, _) = mask_and_enhance(&(c * 10.0), &q, &x, &x, &head);
    assert!(m.iter().all(|v| (0.0..=1.0).contains(v)));
    for (a, b) in y.iter().zip(x.iter()) {
        assert!(a.abs() <= 2.0 * b.abs() + 1e-12);
    }
}

fn path_gradcheck(p: &AttentionPath, x: &Array2<f64>, r: &mut ChaCha8Rng) {
    let (y, cache) = p.forward(x).unwrap();
    let w = rand2(y.dim(), r);
    let mut g = p.zeros_like();
    let dx = p.backward(x, &cache, &w, &mut g);
    let rep = check_gradients(p, x, &g, &dx, 1e-5, |p, x| weighted(&p.forward(x).unwrap().0, &w));
    assert!(rep.passes(1e-4), "{rep:?}");
}

#[test]
fn path_gradients() {
    let mut r = rng(10);
    for (bi, causal, target) in [
        (true, false, MaskTarget::Input),
        (false, true, MaskTarget::Input),
        (true, false, MaskTarget::Recurrent),
    ] {
        let p = AttentionPath::new(3, 2, bi, causal, target, &mut r);
        let x = rand2((4, 3), &mut r);
        path_gradcheck(&p, &x, &mut r);
    }
}

#[test]
fn inter_path_is_causal() {
    let mut r = rng(11);
    let p = AttentionPath::new(4, 3, false, true, MaskTarget::Input, &mut r);
    let x = rand2((6, 4), &mut r);
    let (y, _) = p.forward(&x).unwrap();
    for j in 0..6 {
        let mut xp = x.clone();
        xp.row_mut(j).mapv_inplace(|v| v + 1.0);
        let (yp, _) = p.forward(&xp).unwrap();
        for k in 0..j {
            assert_eq!(yp.row(k), y.row(k), "step {k} changed by step {j}");
        }
        assert_ne!(yp.row(j), y.row(j));
    }
}

#[test]
fn intra_pass_treats_chunks_independently() {
    let mut r = rng(12);
    let block = DatRnnBlock::new(3, 2, 4, MaskTarget::Input, &mut r);
    let data = crate::params::uniform((2, 3, 4, 4), 1.0, &mut r);
    let perm = [2, 0, 3, 1];
    let permuted = Array4::from_shape_fn(data.dim(), |(b, d, c, p)| data[[b, d, perm[c], p]]);
    let (out, _) = block.intra_pass(&data).unwrap();
    let (outp, _) = block.intra_pass(&permuted).unwrap();
    let unpermuted = {
        let mut u = Array4::zeros(outp.dim());
        for (c, &src) in perm.iter().enumerate() {
            u.slice_mut(s![.., .., src, ..]).assign(&outp.slice(s![.., .., c, ..]));
        }
        u
    };
    assert!((&out - &unpermuted).iter().all(|v| v.abs() <= 1e-14));
}

#[test]
fn block_shapes() {
    let mut r = rng(13);
    let block = DatRnnBlock::new(4, 3, 8, MaskTarget::Input, &mut r);
    for t in [1, 5, 8, 13, 40] {
        let x = rand3((2, 4, t), &mut r);
        let y = block.forward(&x).unwrap();
        assert_eq!(y.dim(), x.dim());
        assert!(y.iter().all(|v| v.is_finite()));
    }
    assert!(block.forward(&rand3((1, 3, 5), &mut r)).is_err());
    assert!(block.forward(&Array3::zeros((1, 4, 0))).is_err());
}

#[test]
fn block_gradients() {
    for target in [MaskTarget::Input, MaskTarget::Recurrent] {
        let mut r = rng(14);
        let block = DatRnnBlock::new(3, 2, 4, target, &mut r);
        let x = rand3((2, 3, 7), &mut r);
        let (y, cache) = block.forward_cached(&x).unwrap();
        let w = rand3(y.dim(), &mut r);
        let mut g = block.zeros_like();
        let dx = block.backward(&cache, &w, &mut g).unwrap();
        let rep = check_gradients(&block, &x, &g, &dx, 1e-5, |p, x| weighted(&p.forward(x).unwrap(), &w));
        assert!(rep.passes(1e-4), "{target:?}: {rep:?}");
    }
}

/// Independent scalar re-implementation of one block, written with plain
/// vectors and explicit loops.
mod straight_line {
    use super::*;

    type Seq = Vec<Vec<f64>>;

    fn sig(v: f64) -> f64 {
        1.0 / (1.0 + (-v).exp())
    }

    fn affine(w: &Array2<f64>, b: &Array1<f64>, x: &[f64]) -> Vec<f64> {
        (0..w.nrows())
            .map(|o| b[o] + (0..w.ncols()).map(|i| w[[o, i]] * x[i]).sum::<f64>())
            .collect()
    }

    fn layer_norm(ln: &LayerNorm, x: &[f64]) -> Vec<f64> {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        let v = x.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / n;
        let s = (v + 1e-8).sqrt();
        (0..x.len())
            .map(|i| ln.gamma[i] * (x[i] - m) / s + ln.beta[i])
            .collect()
    }

    fn lstm(l: &Lstm, xs: &Seq) -> Seq {
        let hd = l.hidden();
        let (mut h, mut c) = (vec![0.0; hd], vec![0.0; hd]);
        let mut out = vec![];
        for x in xs {
            let mut z = affine(&l.w_ih, &l.b, x);
            for (r, zr) in z.iter_mut().enumerate() {
                *zr += (0..hd).map(|k| l.w_hh[[r, k]] * h[k]).sum::<f64>();
            }
            for k in 0..hd {
                let i = sig(z[k]);
                let f = sig(z[hd + k]);
                let g = z[2 * hd + k].tanh();
                let o = sig(z[3 * hd + k]);
                c[k] = f * c[k] + i * g;
                h[k] = o * c[k].tanh();
            }
            out.push(h.clone());
        }
        out
    }

    fn path(p: &AttentionPath, xs: &Seq) -> Seq {
        let n = xs.len();
        let d = xs[0].len();
        let fwd = lstm(&p.rnn_fwd, xs);
        let rnn: Seq = match &p.rnn_bwd {
            Some(l) => {
                let rev: Seq = xs.iter().rev().cloned().collect();
                let b = lstm(l, &rev);
                (0..n)
                    .map(|t| [fwd[t].clone(), b[n - 1 - t].clone()].concat())
                    .collect()
            }
            None => fwd,
        };
        let rec: Seq = rnn.iter().map(|v| affine(&p.proj.w, &p.proj.b, v)).collect();
        let nrm: Seq = rec.iter().map(|v| layer_norm(&p.ln, v)).collect();
        let hk: Seq = nrm.iter().map(|v| affine(&p.key.w, &p.key.b, v)).collect();
        let hq: Seq = nrm.iter().map(|v| affine(&p.query.w, &p.query.b, v)).collect();
        (0..n)
            .map(|k| {
                let lim = if p.causal { k + 1 } else { n };
                let sc: Vec<f64> = (0..lim)
                    .map(|j| (0..d).map(|i| hk[j][i] * hq[k][i]).sum::<f64>() / (d as f64).sqrt())
                    .collect();
                let mx = sc.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = sc.iter().map(|s| (s - mx).exp()).sum();
                let mut ctx = vec![0.0; d];
                for j in 0..lim {
                    let w = (sc[j] - mx).exp() / z;
                    for i in 0..d {
                        ctx[i] += w * hk[j][i];
                    }
                }
                let m: Vec<f64> = affine(&p.mask.w, &p.mask.b, &[ctx, hq[k].clone()].concat())
                    .into_iter()
                    .map(sig)
                    .collect();
                let target = match p.mask_target {
                    MaskTarget::Input => &xs[k],
                    MaskTarget::Recurrent => &rec[k],
                };
                (0..d).map(|i| target[i] * m[i] + xs[k][i]).collect()
            })
            .collect()
    }

    /// `x[d][t]` for a single batch item.
    pub fn block(b: &DatRnnBlock, x: &Seq) -> Seq {
        let d = x.len();
        let t = x[0].len();
        let p = b.chunk_len;
        let hop = p / 2;
        let frames: Seq = (0..t)
            .map(|ti| layer_norm(&b.pre_ln, &(0..d).map(|di| x[di][ti]).collect::<Vec<_>>()))
            .collect();
        let mut n = 1;
        while (n - 1) * hop + p < t {
            n += 1;
        }
        let padded = (n - 1) * hop + p;
        let frame = |ti: usize| if ti < t { frames[ti].clone() } else { vec![0.0; d] };
        // chunks[c][j] is a feature vector
        let chunks: Vec<Seq> = (0..n).map(|c| (0..p).map(|j| frame(c * hop + j)).collect()).collect();
        let intra: Vec<Seq> = chunks.iter().map(|ch| path(&b.intra, ch)).collect();
        let mut inter = intra.clone();
        for j in 0..p {
            let seq: Seq = (0..n).map(|c| intra[c][j].clone()).collect();
            for (c, v) in path(&b.inter, &seq).into_iter().enumerate() {
                inter[c][j] = v;
            }
        }
        let mut acc = vec![vec![0.0; padded]; d];
        let mut cnt = vec![0.0; padded];
        for c in 0..n {
            for j in 0..p {
                cnt[c * hop + j] += 1.0;
                for di in 0..d {
                    acc[di][c * hop + j] += inter[c][j][di];
                }
            }
        }
        (0..d)
            .map(|di| (0..t).map(|ti| acc[di][ti] / cnt[ti]).collect())
            .collect()
    }
}

#[test]
fn block_matches_straight_line_oracle() {
    for (t, target) in [
        (6, MaskTarget::Input),
        (7, MaskTarget::Recurrent),
        (3, MaskTarget::Input),
    ] {
        let mut r = rng(15 + t as u64);
        let block = DatRnnBlock::new(4, 3, 4, target, &mut r);
        let x = rand3((1, 4, t), &mut r);
        let y = block.forward(&x).unwrap();
        let xs: Vec<Vec<f64>> = (0..4).map(|d| (0..t).map(|ti| x[[0, d, ti]]).collect()).collect();
        let expect = straight_line::block(&block, &xs);
        for d in 0..4 {
            for ti in 0..t {
                assert!((y[[0, d, ti]] - expect[d][ti]).abs() <= 1e-10);
            }
        }
    }
}

#[test]
fn mask_and_enhance_gradients() {
    let mut r = rng(21);
    let (n, d) = (4, 3);
    let head = Linear::new(2 * d, d, &mut r);
    // context, queries, target and residual stacked along rows
    let x = rand2((4 * n, d), &mut r);
    let part = |x: &Array2<f64>, i: usize| x.slice(s![i * n..(i + 1) * n, ..]).to_owned();
    let w = rand2((n, d), &mut r);
    let run = |h: &Linear, x: &Array2<f64>| mask_and_enhance(&part(x, 0), &part(x, 1), &part(x, 2), &part(x, 3), h);
    let (_, m, mask_in) = run(&head, &x);
    let mut g = head.zeros_like();
    let mg = mask_and_enhance_backward(&mask_in, &m, &part(&x, 2), &w, &head, &mut g);
    let dx = ndarray::concatenate![ndarray::Axis(0), mg.context, mg.queries, mg.target, mg.residual];
    let rep = check_gradients(&head, &x, &g, &dx, 1e-5, |h, x| weighted(&run(h, x).0, &w));
    assert!(rep.passes(1e-4), "{rep:?}");
}
