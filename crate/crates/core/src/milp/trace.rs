use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TRACE_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundEvent {
    pub work_units: f64,
    pub primal: f64,
    pub dual: f64,
}

/// Global primal/dual bounds over the work-unit clock (LP solves performed).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundTrace {
    events: Vec<BoundEvent>,
}

impl BoundTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn events(&self) -> &[BoundEvent] {
        &self.events
    }

    pub fn last(&self) -> Option<&BoundEvent> {
        self.events.last()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Append an event, enforcing clock and bound monotonicity.
    pub fn push(&mut self, work_units: f64, primal: f64, dual: f64) -> Result<()> {
        if let Some(prev) = self.events.last() {
            if work_units < prev.work_units {
                return Err(Error::InvariantViolation(format!(
                    "work units went backwards: {} -> {work_units}",
                    prev.work_units
                )));
            }
            if dual < prev.dual - TRACE_TOL {
                return Err(Error::InvariantViolation(format!(
                    "dual bound decreased: {} -> {dual}",
                    prev.dual
                )));
            }
        }
        if primal < dual - TRACE_TOL {
            return Err(Error::InvariantViolation(format!(
                "primal {primal} below dual {dual}"
            )));
        }
        self.events.push(BoundEvent { work_units, primal, dual });
        Ok(())
    }

    /// Concatenate `other` after `self`, shifting its clock by `offset`.
    pub fn concat(&self, other: &BoundTrace, offset: f64) -> Result<BoundTrace> {
        let mut out = self.clone();
        for e in &other.events {
            out.push(e.work_units + offset, e.primal, e.dual)?;
        }
        Ok(out)
    }
}

/// Area between the primal and dual step curves from the first event up to
/// `horizon`. Bounds are held constant between events and after the last one.
pub fn pd_integral(trace: &BoundTrace, horizon: f64) -> Result<f64> {
    let events = trace.events();
    let Some(last) = events.last() else {
        return Err(Error::InvariantViolation("empty bound trace".into()));
    };
    if horizon < last.work_units {
        return Err(Error::InvariantViolation(format!(
            "horizon {horizon} precedes last event at {}",
            last.work_units
        )));
    }
    let mut area = 0.0;
    for (i, e) in events.iter().enumerate() {
        if e.primal < e.dual - TRACE_TOL {
            return Err(Error::InvariantViolation(format!(
                "primal {} below dual {} at event {i}",
                e.primal, e.dual
            )));
        }
        let until = events.get(i + 1).map_or(horizon, |next| next.work_units);
        area += (e.primal - e.dual).max(0.0) * (until - e.work_units);
    }
    Ok(area)
}

/// Relative improvement `(M(NoCuts) − M(method)) / M(NoCuts)`.
pub fn improvement_metric(m_nocuts: f64, m_method: f64) -> Result<f64> {
    if m_nocuts == 0.0 {
        return Err(Error::UndefinedMetric);
    }
    Ok((m_nocuts - m_method) / m_nocuts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn trace(events: &[(f64, f64, f64)]) -> BoundTrace {
        let mut t = BoundTrace::new();
        for &(w, p, d) in events {
            t.push(w, p, d).unwrap();
        }
        t
    }

    #[test]
    fn rectangle_and_two_rectangles() {
        assert_eq!(pd_integral(&trace(&[(0.0, 10.0, 4.0)]), 5.0).unwrap(), 30.0);
        let t = trace(&[(0.0, 10.0, 4.0), (2.0, 10.0, 8.0)]);
        assert_eq!(pd_integral(&t, 5.0).unwrap(), 18.0);
    }

    #[test]
    fn matches_unit_step_riemann_sum() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let mut w = 0u32;
            let mut dual = rng.random_range(-5.0..0.0);
            let mut t = BoundTrace::new();
            let mut pts = Vec::new();
            for _ in 0..10 {
                dual += rng.random_range(0.0..1.0);
                let primal = dual + rng.random_range(0.0..4.0);
                t.push(w as f64, primal, dual).unwrap();
                pts.push((w, primal, dual));
                w += rng.random_range(0..4);
            }
            let horizon = w + 3;
            // oracle: walk the clock one unit at a time
            let mut riemann = 0.0;
            for unit in pts[0].0..horizon {
                let (_, p, d) = pts.iter().rev().find(|e| e.0 <= unit).unwrap();
                riemann += p - d;
            }
            let got = pd_integral(&t, horizon as f64).unwrap();
            assert!((got - riemann).abs() < 1e-9, "{got} vs {riemann}");
        }
    }

    #[test]
    fn rejects_crossed_bounds_and_bad_horizon() {
        let mut t = BoundTrace::new();
        assert!(t.push(0.0, 1.0, 2.0).is_err());
        t.push(0.0, 3.0, 1.0).unwrap();
        assert!(t.push(1.0, 3.0, 0.0).is_err());
        assert!(t.push(-1.0, 3.0, 2.0).is_err());
        t.push(2.0, 3.0, 2.0).unwrap();
        assert!(pd_integral(&t, 1.0).is_err());
        assert!(pd_integral(&BoundTrace::new(), 1.0).is_err());
    }

    #[test]
    fn improvement_examples() {
        assert!((improvement_metric(100.0, 80.0).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(improvement_metric(100.0, 100.0).unwrap(), 0.0);
        let im = improvement_metric(56.99, 37.92).unwrap();
        assert!((im - 0.334620).abs() < 1e-6, "{im}");
        assert!(matches!(improvement_metric(0.0, 1.0), Err(Error::UndefinedMetric)));
    }

    fn arb_trace() -> impl Strategy<Value = BoundTrace> {
        prop::collection::vec((0u8..4, 0.0f64..1.0, 0.0f64..3.0), 1..8).prop_map(|steps| {
            let mut t = BoundTrace::new();
            let (mut w, mut d) = (0.0, 0.0);
            for (dw, dd, gap) in steps {
                w += f64::from(dw);
                d += dd;
                t.push(w, d + gap, d).unwrap();
            }
            t
        })
    }

    proptest! {
        #[test]
        fn additive_over_concatenation(a in arb_trace(), b in arb_trace(), gap in 0.0f64..3.0) {
            let a_end = a.last().unwrap().work_units;
            let shift = a_end + gap;
            let b_last = b.last().unwrap();
            let a_last = a.last().unwrap();
            // keep the dual monotone across the seam
            let lift = (a_last.dual - b.events()[0].dual).max(0.0);
            let mut b2 = BoundTrace::new();
            for e in b.events() {
                b2.push(e.work_units, e.primal + lift, e.dual + lift).unwrap();
            }
            let joined = a.concat(&b2, shift).unwrap();
            let horizon = shift + b_last.work_units + 1.0;
            let whole = pd_integral(&joined, horizon).unwrap();
            let parts = pd_integral(&a, shift + b2.events()[0].work_units).unwrap()
                + pd_integral(&b2, horizon - shift).unwrap();
            prop_assert!((whole - parts).abs() < 1e-9);
        }

        #[test]
        fn monotone_in_horizon(a in arb_trace(), extra in 0.0f64..5.0) {
            let h = a.last().unwrap().work_units;
            prop_assert!(pd_integral(&a, h + extra).unwrap() >= pd_integral(&a, h).unwrap() - 1e-12);
        }
    }
}
