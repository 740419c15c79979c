//! A small differentiable kernel: a tape of matrix operations with
//! hand-written backward rules, dense/LSTM/attention layers, the squashed
//! Gaussian used for ratios, and a finite-difference gradient checker.

mod layers;
mod params;
mod tape;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub use layers::{
    add_linear, add_lstm, add_mha, add_mlp, linear, lstm_cell, lstm_encode, lstm_hidden, lstm_zero_state,
    mha_encode, mlp, LstmState,
};
pub use params::{ParamSet, ParamSpec};
pub use tape::{sigmoid, softplus, Tape, Var};

use crate::error::{Error, Result};

/// Row-major dense matrix with an optional gradient buffer of equal shape.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor2 {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
    pub grad: Option<Vec<f64>>,
}

impl Tensor2 {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "tensor data does not match its shape");
        Self { rows, cols, data, grad: None }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::new(rows, cols, vec![0.0; rows * cols])
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

pub const SIGMA_FLOOR: f64 = 1e-4;
pub const K_MIN: f64 = 1e-6;
pub const K_MAX: f64 = 1.0 - 1e-6;

/// `k = 0.5·tanh(K) + 0.5` with `K ~ N(mu, sigma)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TanhGaussian {
    pub mu: f64,
    pub sigma: f64,
}

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

impl TanhGaussian {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        if !mu.is_finite() || !sigma.is_finite() || sigma < SIGMA_FLOOR {
            return Err(Error::Parameter(format!("tanh-Gaussian needs finite mu and sigma ≥ {SIGMA_FLOOR}, got ({mu}, {sigma})")));
        }
        Ok(Self { mu, sigma })
    }

    pub fn squash(big_k: f64) -> f64 {
        (0.5 * big_k.tanh() + 0.5).clamp(K_MIN, K_MAX)
    }

    pub fn unsquash(k: f64) -> f64 {
        (2.0 * k - 1.0).atanh()
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> (f64, f64) {
        let eps: f64 = StandardNormal.sample(rng);
        let k = Self::squash(self.mu + self.sigma * eps);
        (k, self.log_prob(k))
    }

    /// The image of the Gaussian mean.
    pub fn mode(&self) -> f64 {
        Self::squash(self.mu)
    }

    /// Density of `k` including the change of variables `dk/dK = 2k(1−k)`.
    pub fn log_prob(&self, k: f64) -> f64 {
        let big_k = Self::unsquash(k);
        let z = (big_k - self.mu) / self.sigma;
        -0.5 * z * z - self.sigma.ln() - LN_SQRT_2PI - (2.0 * k * (1.0 - k)).ln()
    }

    /// The same log-density with `mu` and `sigma` on a tape.
    pub fn log_prob_on(tape: &mut Tape, mu: Var, sigma: Var, k: f64) -> Var {
        let big_k = Self::unsquash(k);
        let diff = tape.affine(mu, -1.0, big_k);
        let log_sigma = tape.log(sigma);
        let inv = tape.affine(log_sigma, -1.0, 0.0);
        let inv = tape.exp(inv);
        let z = tape.mul(diff, inv);
        let z2 = tape.square(z);
        let a = tape.affine(z2, -0.5, -LN_SQRT_2PI - (2.0 * k * (1.0 - k)).ln());
        tape.sub(a, log_sigma)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst: Option<String>,
    pub checked: usize,
}

/// Relative error with a small floor on the denominator so that gradients
/// that are zero up to round-off compare as equal.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Compare tape gradients of the scalar built by `f` with central
/// differences of step `eps` on every parameter entry.
pub fn grad_check<F>(params: &ParamSet, eps: f64, f: F) -> GradCheckReport
where
    F: Fn(&mut Tape) -> Var,
{
    let mut tape = Tape::new(params);
    let loss = f(&mut tape);
    tape.backward(loss);
    let analytic = tape.param_grads();
    drop(tape);
    let eval = |p: &ParamSet| {
        let mut t = Tape::new(p);
        let l = f(&mut t);
        t.scalar(l)
    };
    let mut report = GradCheckReport { max_rel_err: 0.0, worst: None, checked: 0 };
    let mut p = params.clone();
    for spec in params.specs() {
        for k in 0..spec.rows * spec.cols {
            let i = spec.offset + k;
            let orig = p.data[i];
            p.data[i] = orig + eps;
            let up = eval(&p);
            p.data[i] = orig - eps;
            let down = eval(&p);
            p.data[i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let e = rel_err(analytic[i], numeric);
            report.checked += 1;
            if e > report.max_rel_err || report.worst.is_none() {
                report.max_rel_err = report.max_rel_err.max(e);
                if e >= report.max_rel_err {
                    report.worst = Some(format!("{}[{k}]", spec.name));
                }
            }
        }
    }
    report
}

#[cfg(test)]
mod tests;
