//! Dense, recurrent and attention layers built on the tape.
//!
//! Every layer reads its parameters by name prefix, so a policy is a
//! [`ParamSet`] plus a handful of prefixes.

use rand::Rng;

use super::params::ParamSet;
use super::tape::{Tape, Var};

pub fn add_linear<R: Rng>(ps: &mut ParamSet, prefix: &str, d_in: usize, d_out: usize, rng: &mut R) {
    ps.add_uniform(&format!("{prefix}.w"), d_in, d_out, d_in, rng);
    ps.add_uniform(&format!("{prefix}.b"), 1, d_out, d_in, rng);
}

/// `x·W + b` for an `r × d_in` input.
pub fn linear(tape: &mut Tape, x: Var, prefix: &str) -> Var {
    let w = tape.param(&format!("{prefix}.w"));
    let b = tape.param(&format!("{prefix}.b"));
    let y = tape.matmul(x, w);
    tape.add_bias(y, b)
}

/// Layers `{prefix}.0 … {prefix}.{k−1}` mapping `dims[0] → … → dims[k]`.
pub fn add_mlp<R: Rng>(ps: &mut ParamSet, prefix: &str, dims: &[usize], rng: &mut R) {
    for (i, w) in dims.windows(2).enumerate() {
        add_linear(ps, &format!("{prefix}.{i}"), w[0], w[1], rng);
    }
}

/// Tanh between layers, linear output.
pub fn mlp(tape: &mut Tape, x: Var, prefix: &str) -> Var {
    let mut h = x;
    let mut i = 0;
    while tape.params().index_of(&format!("{prefix}.{i}.w")).is_some() {
        if i > 0 {
            h = tape.tanh(h);
        }
        h = linear(tape, h, &format!("{prefix}.{i}"));
        i += 1;
    }
    assert!(i > 0, "no layers under {prefix}");
    h
}

pub fn add_lstm<R: Rng>(ps: &mut ParamSet, prefix: &str, d_in: usize, hidden: usize, rng: &mut R) {
    let fan_in = d_in + hidden;
    ps.add_uniform(&format!("{prefix}.wx"), d_in, 4 * hidden, fan_in, rng);
    ps.add_uniform(&format!("{prefix}.wh"), hidden, 4 * hidden, fan_in, rng);
    ps.add_uniform(&format!("{prefix}.b"), 1, 4 * hidden, fan_in, rng);
}

#[derive(Clone, Copy, Debug)]
pub struct LstmState {
    pub h: Var,
    pub c: Var,
}

pub fn lstm_hidden(tape: &Tape, prefix: &str) -> usize {
    tape.params().spec(&format!("{prefix}.wh")).expect("lstm parameters").rows
}

pub fn lstm_zero_state(tape: &mut Tape, hidden: usize) -> LstmState {
    let z = super::Tensor2::zeros(1, hidden);
    LstmState { h: tape.constant(z.clone()), c: tape.constant(z) }
}

/// One step given the input's pre-multiplied gate contribution `x·Wx`.
fn lstm_gates(tape: &mut Tape, xw: Var, s: LstmState, prefix: &str) -> LstmState {
    let hd = lstm_hidden(tape, prefix);
    let wh = tape.param(&format!("{prefix}.wh"));
    let b = tape.param(&format!("{prefix}.b"));
    let hw = tape.matmul(s.h, wh);
    let z = tape.add(xw, hw);
    let z = tape.add_bias(z, b);
    let zi = tape.slice_cols(z, 0, hd);
    let zf = tape.slice_cols(z, hd, hd);
    let zg = tape.slice_cols(z, 2 * hd, hd);
    let zo = tape.slice_cols(z, 3 * hd, hd);
    let i = tape.sigmoid(zi);
    let f = tape.sigmoid(zf);
    let g = tape.tanh(zg);
    let o = tape.sigmoid(zo);
    let fc = tape.mul(f, s.c);
    let ig = tape.mul(i, g);
    let c = tape.add(fc, ig);
    let tc = tape.tanh(c);
    let h = tape.mul(o, tc);
    LstmState { h, c }
}

/// One LSTM step on a `1 × d_in` input.
pub fn lstm_cell(tape: &mut Tape, x: Var, s: LstmState, prefix: &str) -> LstmState {
    let wx = tape.param(&format!("{prefix}.wx"));
    let xw = tape.matmul(x, wx);
    lstm_gates(tape, xw, s, prefix)
}

/// Run the LSTM over the rows of `x` (`N × d_in`) from the zero state.
/// Returns the `N × h` hidden states and the final state.
pub fn lstm_encode(tape: &mut Tape, x: Var, prefix: &str) -> (Var, LstmState) {
    let n = tape.value(x).rows;
    assert!(n >= 1, "lstm_encode needs at least one row");
    let hd = lstm_hidden(tape, prefix);
    let wx = tape.param(&format!("{prefix}.wx"));
    let xw_all = tape.matmul(x, wx);
    let mut s = lstm_zero_state(tape, hd);
    let mut hs = Vec::with_capacity(n);
    for t in 0..n {
        let xw = tape.row(xw_all, t);
        s = lstm_gates(tape, xw, s, prefix);
        hs.push(s.h);
    }
    (tape.concat_rows(&hs), s)
}

pub fn add_mha<R: Rng>(ps: &mut ParamSet, prefix: &str, d_in: usize, d_model: usize, rng: &mut R) {
    ps.add_uniform(&format!("{prefix}.wq"), d_in, d_model, d_in, rng);
    ps.add_uniform(&format!("{prefix}.wk"), d_in, d_model, d_in, rng);
    ps.add_uniform(&format!("{prefix}.wv"), d_in, d_model, d_in, rng);
    add_linear(ps, &format!("{prefix}.o"), d_model, d_model, rng);
}

/// Multi-head scaled dot-product self-attention over the rows of `x`
/// with no positional information, so the map is permutation-equivariant.
pub fn mha_encode(tape: &mut Tape, x: Var, prefix: &str, heads: usize) -> Var {
    assert!(tape.value(x).rows >= 1, "mha_encode needs at least one row");
    let wq = tape.param(&format!("{prefix}.wq"));
    let wk = tape.param(&format!("{prefix}.wk"));
    let wv = tape.param(&format!("{prefix}.wv"));
    let q = tape.matmul(x, wq);
    let k = tape.matmul(x, wk);
    let v = tape.matmul(x, wv);
    let d_model = tape.value(q).cols;
    assert_eq!(d_model % heads, 0, "model width must divide into heads");
    let dk = d_model / heads;
    let scale = 1.0 / (dk as f64).sqrt();
    let mut outs = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = tape.slice_cols(q, h * dk, dk);
        let kh = tape.slice_cols(k, h * dk, dk);
        let vh = tape.slice_cols(v, h * dk, dk);
        let kt = tape.transpose(kh);
        let u = tape.matmul(qh, kt);
        let u = tape.scale(u, scale);
        let w = tape.softmax_rows(u);
        outs.push(tape.matmul(w, vh));
    }
    let cat = tape.concat_cols(&outs);
    linear(tape, cat, &format!("{prefix}.o"))
}

#[cfg(test)]
mod tests {
    use super::super::Tensor2;
    use super::*;
    use rand::SeedableRng;

    fn random_input(rng: &mut impl Rng, rows: usize, cols: usize) -> Tensor2 {
        Tensor2::new(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    /// Straightforward loops over the same parameters.
    fn naive_mha(ps: &ParamSet, x: &Tensor2, heads: usize) -> Vec<Vec<f64>> {
        let get = |name: &str| {
            let s = ps.spec(name).unwrap();
            let d = ps.slice(ps.index_of(name).unwrap());
            (s.rows, s.cols, d.to_vec())
        };
        let proj = |name: &str| {
            let (r, c, w) = get(name);
            (0..x.rows)
                .map(|i| (0..c).map(|j| (0..r).map(|k| x.get(i, k) * w[k * c + j]).sum()).collect())
                .collect::<Vec<Vec<f64>>>()
        };
        let (q, k, v) = (proj("m.wq"), proj("m.wk"), proj("m.wv"));
        let dm = q[0].len();
        let dk = dm / heads;
        let mut cat = vec![vec![0.0; dm]; x.rows];
        for h in 0..heads {
            for i in 0..x.rows {
                let scores: Vec<f64> = (0..x.rows)
                    .map(|j| (0..dk).map(|t| q[i][h * dk + t] * k[j][h * dk + t]).sum::<f64>() / (dk as f64).sqrt())
                    .collect();
                let mx = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = scores.iter().map(|s| (s - mx).exp()).sum();
                for j in 0..x.rows {
                    let w = (scores[j] - mx).exp() / z;
                    for t in 0..dk {
                        cat[i][h * dk + t] += w * v[j][h * dk + t];
                    }
                }
            }
        }
        let (_, c, wo) = get("m.o.w");
        let (_, _, bo) = get("m.o.b");
        cat.iter()
            .map(|row| (0..c).map(|j| bo[j] + (0..dm).map(|t| row[t] * wo[t * c + j]).sum::<f64>()).collect())
            .collect()
    }

    #[test]
    fn attention_matches_naive_loops() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut ps = ParamSet::new();
        add_mha(&mut ps, "m", 4, 4, &mut rng);
        let x = random_input(&mut rng, 3, 4);
        let mut tape = Tape::new(&ps);
        let xv = tape.constant(x.clone());
        let y = mha_encode(&mut tape, xv, "m", 2);
        let want = naive_mha(&ps, &x, 2);
        let got = tape.value(y);
        for i in 0..3 {
            for j in 0..4 {
                assert!((got.get(i, j) - want[i][j]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn attention_single_row_is_projected_value() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let mut ps = ParamSet::new();
        add_mha(&mut ps, "m", 3, 4, &mut rng);
        let x = random_input(&mut rng, 1, 3);
        let mut tape = Tape::new(&ps);
        let xv = tape.constant(x);
        let y = mha_encode(&mut tape, xv, "m", 2);
        let wv = tape.param("m.wv");
        let v = tape.matmul(xv, wv);
        let p = linear(&mut tape, v, "m.o");
        for (a, b) in tape.value(y).data.iter().zip(&tape.value(p).data) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn attention_is_permutation_equivariant() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut ps = ParamSet::new();
        add_mha(&mut ps, "m", 5, 8, &mut rng);
        for _ in 0..20 {
            let n = rng.random_range(1..8);
            let x = random_input(&mut rng, n, 5);
            let mut perm: Vec<usize> = (0..n).collect();
            rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
            let xp = Tensor2::from_rows(&perm.iter().map(|&i| x.row(i).to_vec()).collect::<Vec<_>>());
            let mut tape = Tape::new(&ps);
            let a = tape.constant(x);
            let b = tape.constant(xp);
            let ya = mha_encode(&mut tape, a, "m", 4);
            let yb = mha_encode(&mut tape, b, "m", 4);
            for (r, &i) in perm.iter().enumerate() {
                for (p, q) in tape.value(yb).row(r).iter().zip(tape.value(ya).row(i)) {
                    assert!((p - q).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn zero_lstm_has_zero_states() {
        let mut ps = ParamSet::new();
        ps.add_values("l.wx", 3, 8, vec![0.0; 24]);
        ps.add_values("l.wh", 2, 8, vec![0.0; 16]);
        ps.add_values("l.b", 1, 8, vec![0.0; 8]);
        let mut tape = Tape::new(&ps);
        let x = tape.constant(Tensor2::new(2, 3, vec![1.0, -2.0, 3.0, 0.5, 0.5, 0.5]));
        let (hs, last) = lstm_encode(&mut tape, x, "l");
        assert!(tape.value(hs).data.iter().all(|v| *v == 0.0));
        assert!(tape.value(last.c).data.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn lstm_is_causal() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let mut ps = ParamSet::new();
        add_lstm(&mut ps, "l", 3, 5, &mut rng);
        let x2 = random_input(&mut rng, 2, 3);
        let x1 = Tensor2::from_rows(&[x2.row(0).to_vec()]);
        let mut tape = Tape::new(&ps);
        let a = tape.constant(x1);
        let b = tape.constant(x2);
        let (ha, _) = lstm_encode(&mut tape, a, "l");
        let (hb, _) = lstm_encode(&mut tape, b, "l");
        assert_eq!(tape.value(ha).row(0), tape.value(hb).row(0));
    }
}
