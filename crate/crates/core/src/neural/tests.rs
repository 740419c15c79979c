use super::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn input(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor2 {
    Tensor2::new(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect())
}

/// `Σ w ⊙ y` with fixed random weights, so every output entry matters.
fn weighted_sum(tape: &mut Tape, y: Var, seed: u64) -> Var {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
    let t = tape.value(y);
    let (r, c) = (t.rows, t.cols);
    let w = tape.constant(input(&mut rng, r, c));
    let p = tape.mul(y, w);
    tape.sum(p)
}

#[test]
fn linear_squared_loss_is_exact() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ps = ParamSet::new();
        add_linear(&mut ps, "f", 4, 3, &mut rng);
        let x = input(&mut rng, 5, 4);
        let target = input(&mut rng, 5, 3);
        let r = grad_check(&ps, 1e-5, |t| {
            let xv = t.constant(x.clone());
            let y = linear(t, xv, "f");
            let tv = t.constant(target.clone());
            let d = t.sub(y, tv);
            let s = t.square(d);
            t.sum(s)
        });
        assert!(r.max_rel_err < 1e-7, "seed {seed}: {r:?}");
    }
}

#[test]
fn lstm_gradients() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ps = ParamSet::new();
        add_lstm(&mut ps, "l", 3, 4, &mut rng);
        let x = input(&mut rng, 2, 3);
        let r = grad_check(&ps, 1e-5, |t| {
            let xv = t.constant(x.clone());
            let (hs, last) = lstm_encode(t, xv, "l");
            let a = weighted_sum(t, hs, seed);
            let b = weighted_sum(t, last.c, seed + 1);
            t.add(a, b)
        });
        assert!(r.max_rel_err < 1e-4, "seed {seed}: {r:?}");
    }
}

#[test]
fn attention_gradients() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ps = ParamSet::new();
        add_mha(&mut ps, "m", 3, 4, &mut rng);
        let x = input(&mut rng, 4, 3);
        let r = grad_check(&ps, 1e-5, |t| {
            let xv = t.constant(x.clone());
            let y = mha_encode(t, xv, "m", 2);
            weighted_sum(t, y, seed)
        });
        assert!(r.max_rel_err < 1e-4, "seed {seed}: {r:?}");
    }
}

#[test]
fn mlp_and_pooling_gradients() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ps = ParamSet::new();
        add_mlp(&mut ps, "v", &[3, 5, 1], &mut rng);
        let x = input(&mut rng, 4, 3);
        let r = grad_check(&ps, 1e-5, |t| {
            let xv = t.constant(x.clone());
            let pooled = t.mean_rows(xv);
            let y = mlp(t, pooled, "v");
            let s = t.softplus(y);
            t.square(s)
        });
        assert!(r.max_rel_err < 1e-4, "seed {seed}: {r:?}");
    }
}

#[test]
fn remaining_ops_gradients() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ps = ParamSet::new();
        ps.add_uniform("a", 3, 4, 1, &mut rng);
        ps.add_uniform("b", 1, 4, 1, &mut rng);
        let mask = [false, true, false, false];
        let r = grad_check(&ps, 1e-5, |t| {
            let a = t.param("a");
            let b = t.param("b");
            let ab = t.add_bias(a, b);
            let tr = t.transpose(ab);
            let sm = t.softmax_rows(tr);
            let s1 = weighted_sum(t, sm, seed);
            let row = t.row(a, 1);
            let prod = t.mul(row, b);
            let ls = t.log_softmax_masked(prod, &mask);
            let p0 = t.pick(ls, 2);
            let cat = t.concat_cols(&[b, row]);
            let ex = t.exp(cat);
            let sg = t.sigmoid(ex);
            let s2 = weighted_sum(t, sg, seed + 7);
            let rows = t.concat_rows(&[b, row]);
            let bc = t.broadcast(p0, 2, 4);
            let mixed = t.sub(rows, bc);
            let s3 = weighted_sum(t, mixed, seed + 9);
            let pos = t.affine(s2, 1.0, 10.0);
            let lg = t.log(pos);
            let x = t.add(s1, p0);
            let x = t.add(x, lg);
            t.add(x, s3)
        });
        assert!(r.max_rel_err < 1e-4, "seed {seed}: {r:?}");
    }
}

#[test]
fn tanh_gaussian_log_prob_gradient() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ps = ParamSet::new();
        ps.add_values("mu", 1, 1, vec![rng.random_range(-2.0..2.0)]);
        ps.add_values("s", 1, 1, vec![rng.random_range(-1.0..1.0)]);
        let k = rng.random_range(0.01..0.99);
        let r = grad_check(&ps, 1e-5, |t| {
            let mu = t.param("mu");
            let s = t.param("s");
            let sp = t.softplus(s);
            let sigma = t.affine(sp, 1.0, SIGMA_FLOOR);
            TanhGaussian::log_prob_on(t, mu, sigma, k)
        });
        assert!(r.max_rel_err < 1e-4, "seed {seed}: {r:?}");
        let mu = ps.data[0];
        let sigma = softplus(ps.data[1]) + SIGMA_FLOOR;
        let mut t = Tape::new(&ps);
        let (m, s) = (t.scalar_const(mu), t.scalar_const(sigma));
        let lp = TanhGaussian::log_prob_on(&mut t, m, s, k);
        let want = TanhGaussian::new(mu, sigma).unwrap().log_prob(k);
        assert!((t.scalar(lp) - want).abs() < 1e-12);
    }
}

#[test]
fn zero_reward_loss_has_zero_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut ps = ParamSet::new();
    add_linear(&mut ps, "f", 2, 2, &mut rng);
    let mut t = Tape::new(&ps);
    let x = t.constant(input(&mut rng, 1, 2));
    let y = linear(&mut t, x, "f");
    let s = t.sum(y);
    let z = t.scale(s, 0.0);
    t.backward(z);
    assert!(t.param_grads().iter().all(|g| *g == 0.0));
}

#[test]
fn tanh_gaussian_limits() {
    let d = TanhGaussian::new(0.0, SIGMA_FLOOR).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        assert!((d.sample(&mut rng).0 - 0.5).abs() < 1e-3);
    }
    let hi = TanhGaussian::new(50.0, 1.0).unwrap();
    assert_eq!(hi.sample(&mut rng).0, K_MAX);
    assert_eq!(hi.mode(), K_MAX);
    assert!(TanhGaussian::new(0.0, 0.0).is_err());
    for k in [K_MIN, 0.3, K_MAX] {
        assert!(TanhGaussian::new(0.7, 0.5).unwrap().log_prob(k).is_finite());
    }
}

#[test]
fn tanh_gaussian_density_integrates_to_one() {
    for (mu, sigma) in [(0.0, 1.0), (0.3, 0.5), (-1.0, 0.8), (1.5, 0.3)] {
        let d = TanhGaussian::new(mu, sigma).unwrap();
        let n = 100_000;
        let h = 1.0 / n as f64;
        let total: f64 = (0..n).map(|i| d.log_prob((i as f64 + 0.5) * h).exp() * h).sum();
        assert!((total - 1.0).abs() < 1e-3, "({mu}, {sigma}): {total}");
    }
}

#[test]
fn sample_log_prob_matches_density() {
    let d = TanhGaussian::new(0.2, 0.7).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let (k, lp) = d.sample(&mut rng);
        assert!((K_MIN..=K_MAX).contains(&k));
        assert_eq!(lp, d.log_prob(k));
    }
}
