//! Finite-difference checks of every differentiable component the
//! trainers rely on, at several random parameter draws.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{feature_matrix, forward, value_on, ActMode, Plan, Policy, PolicyConfig, Variant, VALUE_INPUTS};
use crate::cutgen::{CutFeatures, N_FEATURES};
use crate::error::Result;
use crate::neural::{
    add_lstm, add_mha, grad_check, lstm_encode, mha_encode, ParamSet, Tape, TanhGaussian, Tensor2, Var, SIGMA_FLOOR,
};
use crate::rng;

pub const COMPONENTS: [&str; 6] =
    ["lstm_encoder", "attention_encoder", "pointer_decoder_hem", "pointer_decoder_hempp", "tanh_gaussian", "value_network"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckRow {
    pub component: String,
    pub seed: u64,
    pub max_rel_err: f64,
    pub checked: usize,
    pub worst: Option<String>,
}

fn input<R: Rng>(r: &mut R, rows: usize, cols: usize) -> Tensor2 {
    Tensor2::new(rows, cols, (0..rows * cols).map(|_| r.random_range(-1.0..1.0)).collect())
}

/// `Σ w ⊙ y` with fixed random `w`, so every output entry carries gradient.
fn weighted_sum<R: Rng>(tape: &mut Tape, y: Var, r: &mut R) -> Var {
    let (rows, cols) = (tape.value(y).rows, tape.value(y).cols);
    let w = tape.constant(input(r, rows, cols));
    let p = tape.mul(y, w);
    tape.sum(p)
}

fn random_features<R: Rng>(r: &mut R, n: usize) -> Vec<CutFeatures> {
    (0..n)
        .map(|_| {
            let mut f = [0.0; N_FEATURES];
            f.iter_mut().for_each(|v| *v = r.random_range(-2.0..2.0));
            CutFeatures { f }
        })
        .collect()
}

/// Check one component at one seed.
pub fn check_component(component: &str, seed: u64) -> Result<GradCheckRow> {
    let mut r = rng::stream(seed, component, 0);
    let report = match component {
        "lstm_encoder" => {
            let mut ps = ParamSet::new();
            add_lstm(&mut ps, "l", 3, 4, &mut r);
            let x = input(&mut r, 3, 3);
            let mut wr = rng::stream(seed, "weights", 0);
            let (w1, w2) = (input(&mut wr, 3, 4), input(&mut wr, 1, 4));
            grad_check(&ps, 1e-5, |t| {
                let xv = t.constant(x.clone());
                let (hs, last) = lstm_encode(t, xv, "l");
                let (a, b) = (t.constant(w1.clone()), t.constant(w2.clone()));
                let pa = t.mul(hs, a);
                let pb = t.mul(last.c, b);
                let (sa, sb) = (t.sum(pa), t.sum(pb));
                t.add(sa, sb)
            })
        }
        "attention_encoder" => {
            let mut ps = ParamSet::new();
            add_mha(&mut ps, "m", 3, 4, &mut r);
            let x = input(&mut r, 4, 3);
            let seed_w = r.random::<u64>();
            grad_check(&ps, 1e-5, |t| {
                let xv = t.constant(x.clone());
                let y = mha_encode(t, xv, "m", 2);
                weighted_sum(t, y, &mut rng::rng(seed_w))
            })
        }
        "pointer_decoder_hem" | "pointer_decoder_hempp" => {
            let variant = if component.ends_with("hempp") { Variant::HemPp } else { Variant::Hem };
            let p = Policy::new(PolicyConfig { variant, hidden: 4, heads: 2, ..Default::default() }, seed)?;
            let n = r.random_range(2..6);
            let feats = random_features(&mut r, n);
            let (action, _) = p.act_features(&feats, ActMode::Sample, seed)?;
            let x = feature_matrix(&feats);
            // a contract error would surface here, before differentiation
            forward::<rng::Rng>(&mut Tape::new(&p.params), &p.config, &x, Plan::Given(&action))?;
            grad_check(&p.params, 1e-5, |t| {
                let f = forward::<rng::Rng>(t, &p.config, &x, Plan::Given(&action)).expect("checked above");
                t.add(f.logp_h, f.logp_l)
            })
        }
        "tanh_gaussian" => {
            let mut ps = ParamSet::new();
            ps.add_values("mu", 1, 1, vec![r.random_range(-2.0..2.0)]);
            ps.add_values("s", 1, 1, vec![r.random_range(-1.0..1.0)]);
            let k = r.random_range(0.01..0.99);
            grad_check(&ps, 1e-5, |t| {
                let mu = t.param("mu");
                let s = t.param("s");
                let sp = t.softplus(s);
                let sigma = t.affine(sp, 1.0, SIGMA_FLOOR);
                TanhGaussian::log_prob_on(t, mu, sigma, k)
            })
        }
        "value_network" => {
            let p = Policy::new(PolicyConfig { hidden: 4, heads: 2, ..Default::default() }, seed)?;
            let inputs: Vec<f64> = (0..VALUE_INPUTS).map(|_| r.random_range(-1.0..1.0)).collect();
            let target = r.random_range(-1.0..1.0);
            let v_only = p.params.block_mask("v.");
            let mut sub = ParamSet::new();
            for spec in p.params.specs().iter().filter(|s| v_only[s.offset]) {
                let len = spec.rows * spec.cols;
                sub.add_values(&spec.name, spec.rows, spec.cols, p.params.data[spec.offset..spec.offset + len].to_vec());
            }
            grad_check(&sub, 1e-5, |t| {
                let v = value_on(t, &inputs);
                let d = t.affine(v, 1.0, -target);
                t.square(d)
            })
        }
        other => return Err(crate::error::Error::Parameter(format!("unknown component {other}"))),
    };
    Ok(GradCheckRow {
        component: component.to_string(),
        seed,
        max_rel_err: report.max_rel_err,
        checked: report.checked,
        worst: report.worst,
    })
}

/// Every component at seeds `0..seeds`.
pub fn grad_check_suite(seeds: u64) -> Result<Vec<GradCheckRow>> {
    let mut out = Vec::new();
    for c in COMPONENTS {
        for s in 0..seeds {
            out.push(check_component(c, s)?);
        }
    }
    Ok(out)
}

pub fn rows_csv(rows: &[GradCheckRow]) -> String {
    let mut s = String::from("component,seed,max_rel_err,checked,worst\n");
    for r in rows {
        s += &format!("{},{},{},{},{}\n", r.component, r.seed, r.max_rel_err, r.checked, r.worst.as_deref().unwrap_or(""));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_component_passes_at_a_few_seeds() {
        for c in COMPONENTS {
            for s in 0..3 {
                let row = check_component(c, s).unwrap();
                assert!(row.checked > 0);
                assert!(row.max_rel_err < 1e-4, "{row:?}");
            }
        }
    }
}
