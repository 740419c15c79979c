//! Cut-category order rules read off a policy's selections, and the
//! reprioritized composite heuristic built from them.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cutgen::Category;
use crate::env::{CutSelState, HierAction};
use crate::error::{Error, Result};
use crate::policy::{heuristic_act, Heuristic, Selector};
use crate::rng;

const POSITIONS: usize = 3;

/// `counts[p][c]`: how often category `c` (in [`Category::ALL`] order) sat at
/// selection position `p + 1`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CategoryCounters {
    pub counts: [[usize; 4]; POSITIONS],
}

fn cat_index(c: Category) -> usize {
    Category::ALL.iter().position(|&x| x == c).expect("listed category")
}

impl CategoryCounters {
    pub fn record(&mut self, cats: &[Category]) {
        for (p, &c) in cats.iter().take(POSITIONS).enumerate() {
            self.counts[p][cat_index(c)] += 1;
        }
    }

    pub fn merge(mut self, other: Self) -> Self {
        for p in 0..POSITIONS {
            for c in 0..4 {
                self.counts[p][c] += other.counts[p][c];
            }
        }
        self
    }

    /// Most frequent category at a position; the earlier category wins ties.
    /// `None` when nothing was recorded there.
    pub fn argmax(&self, position: usize) -> Option<Category> {
        let row = &self.counts[position];
        let mut best: Option<usize> = None;
        for (i, &v) in row.iter().enumerate() {
            if v > 0 && best.is_none_or(|b| v > row[b]) {
                best = Some(i);
            }
        }
        best.map(|i| Category::ALL[i])
    }

    pub fn is_empty(&self) -> bool {
        self.counts.iter().all(|r| r.iter().all(|&v| v == 0))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrderRule {
    pub top1: Option<Category>,
    pub top2: Option<Category>,
    pub top3: Option<Category>,
    /// `"C1"`..`"C3"` → category name → count.
    pub counts: BTreeMap<String, BTreeMap<String, usize>>,
}

impl OrderRule {
    pub fn from_counters(c: &CategoryCounters) -> Result<Self> {
        if c.is_empty() {
            return Err(Error::EmptyRule);
        }
        let counts = (0..POSITIONS)
            .map(|p| {
                let inner = Category::ALL.iter().map(|&cat| (cat.name().to_string(), c.counts[p][cat_index(cat)])).collect();
                (format!("C{}", p + 1), inner)
            })
            .collect();
        Ok(Self { top1: c.argmax(0), top2: c.argmax(1), top3: c.argmax(2), counts })
    }

    pub fn tops(&self) -> [Option<Category>; POSITIONS] {
        [self.top1, self.top2, self.top3]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("rule serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Categories of one root selection, in selection order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionLog {
    pub instance: usize,
    pub categories: Vec<Category>,
}

/// Run the selector once on every root and count the categories at the
/// first three positions. Returns the rule and the per-instance logs.
pub fn extract_order_rules(
    selector: &dyn Selector,
    roots: &[Arc<CutSelState>],
    seed: u64,
) -> Result<(OrderRule, Vec<SelectionLog>)> {
    let logs: Vec<SelectionLog> = roots
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let a = selector.select(s, rng::derive(seed, "rules", i as u64))?;
            Ok(SelectionLog { instance: i, categories: a.order.iter().map(|&j| s.candidates[j].category).collect() })
        })
        .collect::<Result<_>>()?;
    let counters = logs
        .par_iter()
        .map(|l| {
            let mut c = CategoryCounters::default();
            c.record(&l.categories);
            c
        })
        .reduce(CategoryCounters::default, CategoryCounters::merge);
    Ok((OrderRule::from_counters(&counters)?, logs))
}

/// Group rank of a category under a rule: the first matching position,
/// or past the end for the remainder.
fn group(rule: &OrderRule, c: Category) -> usize {
    rule.tops().iter().position(|t| *t == Some(c)).unwrap_or(POSITIONS)
}

/// Reorder an action's cuts by rule group, keeping the original order
/// within each group.
pub fn reorder(rule: &OrderRule, state: &CutSelState, action: &HierAction) -> HierAction {
    let mut order = action.order.clone();
    order.sort_by_key(|&i| group(rule, state.candidates[i].category));
    HierAction { ratio: action.ratio, order }
}

/// The composite heuristic's selection, reordered by the rule.
pub fn default_plus(rule: &OrderRule, state: &CutSelState, ratio: f64) -> HierAction {
    reorder(rule, state, &heuristic_act(state, Heuristic::DefaultLike { ratio }, 0))
}

/// [`default_plus`] as a selector.
#[derive(Clone, Debug)]
pub struct DefaultPlus {
    pub rule: OrderRule,
    pub ratio: f64,
}

impl Selector for DefaultPlus {
    fn select(&self, state: &CutSelState, _seed: u64) -> Result<HierAction> {
        Ok(default_plus(&self.rule, state, self.ratio))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cutgen::Cut;
    use crate::env::EnvConfig;
    use crate::milp::{MilpInstance, Row};
    use Category::*;

    fn counters(logs: &[&[Category]]) -> CategoryCounters {
        let mut c = CategoryCounters::default();
        for l in logs {
            c.record(l);
        }
        c
    }

    #[test]
    fn single_selection() {
        let r = OrderRule::from_counters(&counters(&[&[GomoryFrac, KnapsackCover, GomoryFrac]])).unwrap();
        assert_eq!(r.tops(), [Some(GomoryFrac), Some(KnapsackCover), Some(GomoryFrac)]);
    }

    #[test]
    fn ties_go_to_the_earlier_category() {
        let r = OrderRule::from_counters(&counters(&[
            &[GomoryFrac, KnapsackCover, GomoryFrac],
            &[KnapsackCover, KnapsackCover, GomoryFrac],
        ]))
        .unwrap();
        assert_eq!(r.tops(), [Some(GomoryFrac), Some(KnapsackCover), Some(GomoryFrac)]);
        assert_eq!(r.counts["C1"]["KnapsackCover"], 1);
    }

    #[test]
    fn short_selections_fill_what_they_can() {
        let r = OrderRule::from_counters(&counters(&[&[Decoy], &[]])).unwrap();
        assert_eq!(r.tops(), [Some(Decoy), None, None]);
        assert!(matches!(OrderRule::from_counters(&counters(&[&[], &[]])), Err(Error::EmptyRule)));
    }

    #[test]
    fn rule_json_round_trip() {
        let r = OrderRule::from_counters(&counters(&[&[LexTheory, Decoy]])).unwrap();
        assert_eq!(OrderRule::from_json(&r.to_json()).unwrap(), r);
        assert!(r.to_json().contains("\"top1\": \"LexTheory\""));
    }

    fn mixed_state() -> CutSelState {
        let inst = Arc::new(
            MilpInstance::new(
                vec![-1.0, -1.0],
                vec![Row::new(vec![3.0, 2.0], 6.0), Row::new(vec![-3.0, 2.0], 0.0)],
                vec![0, 1],
                vec![0.0; 2],
                vec![3.0; 2],
            )
            .unwrap(),
        );
        let cats = [GomoryFrac, KnapsackCover, GomoryFrac, KnapsackCover, GomoryFrac];
        let cuts = cats
            .iter()
            .enumerate()
            .map(|(i, &c)| Cut::new(vec![1.0, 0.5 + i as f64 * 0.1], 2.0 + 0.05 * i as f64, c, 0).unwrap())
            .collect();
        CutSelState::with_candidates(inst, cuts, &EnvConfig::default()).unwrap()
    }

    #[test]
    fn covers_first_under_a_cover_rule() {
        let s = mixed_state();
        let rule = OrderRule::from_counters(&counters(&[&[KnapsackCover, GomoryFrac, KnapsackCover]])).unwrap();
        let base = heuristic_act(&s, Heuristic::DefaultLike { ratio: 1.0 }, 0);
        let plus = default_plus(&rule, &s, 1.0);
        let mut a = base.order.clone();
        let mut b = plus.order.clone();
        a.sort_unstable();
        b.sort_unstable();
        assert_eq!(a, b);
        let groups: Vec<usize> = plus.order.iter().map(|&i| group(&rule, s.candidates[i].category)).collect();
        assert!(groups.windows(2).all(|w| w[0] <= w[1]));
        // stable within groups
        for g in 0..=POSITIONS {
            let from_base: Vec<usize> =
                base.order.iter().copied().filter(|&i| group(&rule, s.candidates[i].category) == g).collect();
            let from_plus: Vec<usize> =
                plus.order.iter().copied().filter(|&i| group(&rule, s.candidates[i].category) == g).collect();
            assert_eq!(from_base, from_plus);
        }
    }

    #[test]
    fn absent_categories_leave_the_order_alone() {
        let s = mixed_state();
        let rule = OrderRule::from_counters(&counters(&[&[Decoy, LexTheory]])).unwrap();
        let base = heuristic_act(&s, Heuristic::DefaultLike { ratio: 0.6 }, 0);
        assert_eq!(default_plus(&rule, &s, 0.6), base);
    }

    #[test]
    fn extraction_matches_a_recount() {
        let roots: Vec<_> = (0..4).map(|_| Arc::new(mixed_state())).collect();
        let sel = Heuristic::Random { ratio: 0.8 };
        let (rule, logs) = extract_order_rules(&sel, &roots, 3).unwrap();
        let mut manual = BTreeMap::<(usize, Category), usize>::new();
        for l in &logs {
            for (p, c) in l.categories.iter().take(3).enumerate() {
                *manual.entry((p, *c)).or_default() += 1;
            }
        }
        for p in 0..3 {
            for c in Category::ALL {
                let got = rule.counts[&format!("C{}", p + 1)][c.name()];
                assert_eq!(got, manual.get(&(p, c)).copied().unwrap_or(0));
            }
        }
        assert_eq!(extract_order_rules(&sel, &roots, 3).unwrap().0, rule);
    }
}
