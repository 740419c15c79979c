use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation (`n − 1`); 0 for fewer than two values.
pub fn stdev(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// One-sided paired t-test of `H1: mean(a − b) > 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedTest {
    pub n: usize,
    pub mean_diff: f64,
    pub t: f64,
    pub p_value: f64,
}

pub fn paired_t_greater(a: &[f64], b: &[f64]) -> Result<PairedTest> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::Parameter(format!("paired test needs two equal samples of size ≥ 2, got {} and {}", a.len(), b.len())));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len();
    let md = mean(&d);
    let sd = stdev(&d);
    let (t, p) = if sd == 0.0 {
        // degenerate: every difference is the same
        let p = if md > 0.0 {
            0.0
        } else if md < 0.0 {
            1.0
        } else {
            0.5
        };
        (md.signum() * f64::INFINITY, p)
    } else {
        let t = md / (sd / (n as f64).sqrt());
        let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).map_err(|e| Error::Parameter(e.to_string()))?;
        (t, dist.sf(t))
    };
    Ok(PairedTest { n, mean_diff: md, t, p_value: p })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments() {
        assert_eq!(mean(&[1.0, 2.0, 6.0]), 3.0);
        assert!((stdev(&[1.0, 2.0, 6.0]) - 7.0f64.sqrt()).abs() < 1e-12);
        assert_eq!(stdev(&[4.0]), 0.0);
    }

    #[test]
    fn t_test_matches_a_hand_computation() {
        // d = [1, 2, 3]: mean 2, sd 1, t = 2√3; P(T₂ > 2√3) = 0.0371...
        let r = paired_t_greater(&[2.0, 4.0, 6.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!((r.t - 2.0 * 3f64.sqrt()).abs() < 1e-12);
        // closed form for two degrees of freedom: sf(t) = (1 − t/√(t²+2))/2
        let want = 0.5 * (1.0 - r.t / (r.t * r.t + 2.0).sqrt());
        assert!((r.p_value - want).abs() < 1e-10);
        let rev = paired_t_greater(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap();
        assert!((rev.p_value - (1.0 - want)).abs() < 1e-10);
    }

    #[test]
    fn degenerate_differences() {
        assert_eq!(paired_t_greater(&[2.0, 3.0], &[1.0, 2.0]).unwrap().p_value, 0.0);
        assert_eq!(paired_t_greater(&[1.0, 2.0], &[1.0, 2.0]).unwrap().p_value, 0.5);
        assert!(paired_t_greater(&[1.0], &[0.0]).is_err());
    }
}
