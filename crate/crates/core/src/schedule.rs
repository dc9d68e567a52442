//! Edit-distance budgets: how many words the optimizer may change per step.
//!
//! The budget plays the part of a learning rate. Decay curves run from
//! `c_max` at the first step down to `floor_fraction · c_max` at the last
//! planned step; an optional linear warmup scales the first
//! `max(1, ⌈warmup_fraction · T⌉)` steps by `(t + 1) / W`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_FLOOR_FRACTION: f64 = 0.2;
pub const DEFAULT_WARMUP_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    #[default]
    None,
    Fixed,
    LinearDecay,
    CosineDecay,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EditBudgetSchedule {
    pub kind: ScheduleKind,
    pub c_max: u32,
    pub floor_fraction: f64,
    pub warmup: bool,
    pub warmup_fraction: f64,
    /// Planned number of optimization steps.
    pub horizon: u32,
}

impl EditBudgetSchedule {
    pub fn new(kind: ScheduleKind, c_max: u32, horizon: u32) -> Result<Self> {
        let s = Self {
            kind,
            c_max,
            floor_fraction: DEFAULT_FLOOR_FRACTION,
            warmup: false,
            warmup_fraction: DEFAULT_WARMUP_FRACTION,
            horizon,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn with_warmup(mut self, warmup: bool) -> Self {
        self.warmup = warmup;
        self
    }

    pub fn with_floor_fraction(mut self, f: f64) -> Self {
        self.floor_fraction = f;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.c_max < 1 {
            return Err(Error::InvalidSchedule("c_max must be at least 1".into()));
        }
        if !(self.floor_fraction > 0.0 && self.floor_fraction <= 1.0) {
            return Err(Error::InvalidSchedule(format!(
                "floor_fraction {} not in (0, 1]",
                self.floor_fraction
            )));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(Error::InvalidSchedule(format!(
                "warmup_fraction {} not in [0, 1)",
                self.warmup_fraction
            )));
        }
        if self.horizon < 1 {
            return Err(Error::InvalidSchedule("horizon must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of warmup steps `W`.
    pub fn warmup_steps(&self) -> u32 {
        // Tolerance keeps e.g. 0.05 × 60 from ceiling to 4.
        let w = (self.warmup_fraction * f64::from(self.horizon) - 1e-9).ceil();
        (w.max(0.0) as u32).max(1)
    }

    /// The word budget at step `t`, or `None` when unconstrained.
    pub fn constraint_at(&self, t: u32) -> Result<Option<u32>> {
        if t >= self.horizon {
            return Err(Error::StepOutOfRange { step: t, horizon: self.horizon });
        }
        let c_max = f64::from(self.c_max);
        let c_end = self.floor_fraction * c_max;
        let progress = if self.horizon > 1 {
            f64::from(t) / f64::from(self.horizon - 1)
        } else {
            0.0
        };
        let mut value = match self.kind {
            ScheduleKind::None => return Ok(None),
            ScheduleKind::Fixed => c_max,
            ScheduleKind::LinearDecay => c_max - (c_max - c_end) * progress,
            ScheduleKind::CosineDecay => c_end + (c_max - c_end) * 0.5 * (1.0 + (PI * progress).cos()),
        };
        if self.warmup {
            let w = self.warmup_steps();
            if t < w {
                value *= f64::from(t + 1) / f64::from(w);
            }
        }
        Ok(Some((value.round() as u32).max(1)))
    }

    /// The whole curve, one entry per step.
    pub fn curve(&self) -> Result<Vec<Option<u32>>> {
        (0..self.horizon).map(|t| self.constraint_at(t)).collect()
    }
}

/// Levenshtein distance over whitespace-separated words.
pub fn word_edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<&str> = a.split_whitespace().collect();
    let b: Vec<&str> = b.split_whitespace().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sched(kind: ScheduleKind, c_max: u32, horizon: u32) -> EditBudgetSchedule {
        EditBudgetSchedule::new(kind, c_max, horizon).unwrap()
    }

    #[test]
    fn cosine_examples() {
        let s = sched(ScheduleKind::CosineDecay, 50, 10);
        assert_eq!(s.constraint_at(0).unwrap(), Some(50));
        assert_eq!(s.constraint_at(9).unwrap(), Some(10));
        assert_eq!(sched(ScheduleKind::CosineDecay, 50, 11).constraint_at(5).unwrap(), Some(30));
    }

    #[test]
    fn fixed_with_warmup() {
        let s = sched(ScheduleKind::Fixed, 50, 100).with_warmup(true);
        assert_eq!(s.warmup_steps(), 5);
        assert_eq!(s.constraint_at(0).unwrap(), Some(10));
        assert_eq!(s.constraint_at(4).unwrap(), Some(50));
        assert_eq!(s.constraint_at(5).unwrap(), Some(50));
    }

    #[test]
    fn linear_midpoint() {
        // 50 - 40 * 5/10 = 30
        assert_eq!(sched(ScheduleKind::LinearDecay, 50, 11).constraint_at(5).unwrap(), Some(30));
    }

    #[test]
    fn none_is_unconstrained() {
        assert_eq!(sched(ScheduleKind::None, 50, 10).constraint_at(3).unwrap(), None);
    }

    #[test]
    fn single_step_horizon() {
        assert_eq!(sched(ScheduleKind::CosineDecay, 7, 1).constraint_at(0).unwrap(), Some(7));
    }

    #[test]
    fn clamped_to_one() {
        assert_eq!(sched(ScheduleKind::CosineDecay, 1, 5).constraint_at(4).unwrap(), Some(1));
    }

    #[test]
    fn out_of_range_and_invalid() {
        let s = sched(ScheduleKind::Fixed, 5, 3);
        assert!(matches!(s.constraint_at(3), Err(Error::StepOutOfRange { step: 3, horizon: 3 })));
        assert!(EditBudgetSchedule::new(ScheduleKind::Fixed, 0, 3).is_err());
        assert!(s.with_floor_fraction(0.0).validate().is_err());
        assert!(EditBudgetSchedule::new(ScheduleKind::Fixed, 3, 0).is_err());
    }

    #[test]
    fn edit_distance_examples() {
        assert_eq!(word_edit_distance("let us think", "let us reason"), 1);
        assert_eq!(word_edit_distance("a b c", "a b c"), 0);
        assert_eq!(word_edit_distance("", "x y"), 2);
        assert_eq!(word_edit_distance("a  b", "a b"), 0);
    }

    proptest! {
        #[test]
        fn decay_nonincreasing(c_max in 1u32..300, horizon in 1u32..400, cosine in any::<bool>()) {
            let kind = if cosine { ScheduleKind::CosineDecay } else { ScheduleKind::LinearDecay };
            let curve = sched(kind, c_max, horizon).curve().unwrap();
            for w in curve.windows(2) {
                prop_assert!(w[0] >= w[1]);
            }
        }

        #[test]
        fn warmup_ramps_up(c_max in 1u32..300, horizon in 1u32..400, cosine in any::<bool>()) {
            let kind = if cosine { ScheduleKind::CosineDecay } else { ScheduleKind::LinearDecay };
            let plain = sched(kind, c_max, horizon);
            let warm = plain.with_warmup(true);
            let w = warm.warmup_steps();
            let curve = warm.curve().unwrap();
            for t in 1..w as usize {
                prop_assert!(curve[t - 1] <= curve[t]);
            }
            prop_assert_eq!(warm.constraint_at(w - 1).unwrap(), plain.constraint_at(w - 1).unwrap());
        }
    }
}
