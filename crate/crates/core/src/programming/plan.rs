//! Device-selection plans: which device of each polarity receives pulses.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::crossbar::{CellMode, CrossbarCore};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Slot {
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarity {
    Pos,
    Neg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum FixedAction {
    #[default]
    None,
    Reset,
    Set,
}

/// Which two-device rule classified a polarity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PlanRule {
    /// Single-device mode: slot A programmable, slot B absent.
    Single,
    /// Weight fits on one device: program the higher-capacity one, RESET the other.
    Fits,
    /// Weight needs both devices: SET the higher-capacity one, program the other.
    Split,
    /// Weight exceeds both capacities: both SET, nothing programmed.
    Unprogrammable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarityPlan {
    pub programmable: Option<Slot>,
    /// One-off action per slot (index 0 = A, 1 = B) applied before programming.
    pub fixed: [FixedAction; 2],
    /// Conductance the programmable device should hold (µS), ignoring drift.
    pub device_target: f64,
    pub rule: PlanRule,
}

impl PolarityPlan {
    pub const INACTIVE: PolarityPlan = PolarityPlan {
        programmable: None,
        fixed: [FixedAction::None; 2],
        device_target: 0.0,
        rule: PlanRule::Single,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellPlan {
    pub pos: PolarityPlan,
    pub neg: PolarityPlan,
}

impl CellPlan {
    pub fn polarity(&self, p: Polarity) -> &PolarityPlan {
        match p {
            Polarity::Pos => &self.pos,
            Polarity::Neg => &self.neg,
        }
    }

    pub fn polarity_mut(&mut self, p: Polarity) -> &mut PolarityPlan {
        match p {
            Polarity::Pos => &mut self.pos,
            Polarity::Neg => &mut self.neg,
        }
    }

    /// True if at least one polarity accepts pulses.
    pub fn is_active(&self) -> bool {
        self.pos.programmable.is_some() || self.neg.programmable.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceSelectionPlan {
    pub rows: usize,
    pub cols: usize,
    pub cells: Vec<CellPlan>,
}

impl DeviceSelectionPlan {
    pub fn cell(&self, i: usize, j: usize) -> &CellPlan {
        &self.cells[i * self.cols + j]
    }

    pub fn cell_mut(&mut self, i: usize, j: usize) -> &mut CellPlan {
        &mut self.cells[i * self.cols + j]
    }

    /// Constant single-device plan; per-device targets follow `target` if given.
    pub fn single_device(rows: usize, cols: usize, target: Option<(ArrayView2<f64>, f64)>) -> Self {
        let mut cells = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                let w = target.map(|(t, scale)| t[(i, j)] * scale).unwrap_or(0.0);
                let mk = |g: f64| PolarityPlan {
                    programmable: Some(Slot::A),
                    fixed: [FixedAction::None; 2],
                    device_target: g,
                    rule: PlanRule::Single,
                };
                cells.push(CellPlan { pos: mk(w.max(0.0)), neg: mk((-w).max(0.0)) });
            }
        }
        DeviceSelectionPlan { rows, cols, cells }
    }

    /// Plan matching the core's cell mode.
    pub fn for_core(core: &CrossbarCore, target: ArrayView2<f64>) -> Result<Self> {
        check_shape(core, target)?;
        match core.mode() {
            CellMode::Single => Ok(Self::single_device(core.rows(), core.cols(), Some((target, core.weight_scale())))),
            CellMode::Two => plan_two_device(core, target),
        }
    }

    /// Cells with a polarity the planner could not fit.
    pub fn unprogrammable(&self) -> Vec<(usize, usize)> {
        let mut out = vec![];
        for i in 0..self.rows {
            for j in 0..self.cols {
                let c = self.cell(i, j);
                if c.pos.rule == PlanRule::Unprogrammable || c.neg.rule == PlanRule::Unprogrammable {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

fn check_shape(core: &CrossbarCore, target: ArrayView2<f64>) -> Result<()> {
    if target.dim() != (core.rows(), core.cols()) {
        return Err(Error::Shape {
            expected: format!("{}x{}", core.rows(), core.cols()),
            got: format!("{}x{}", target.nrows(), target.ncols()),
        });
    }
    if target.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("target matrix"));
    }
    Ok(())
}

/// Classify one polarity of a two-device cell given the magnitude `w` (µS) it must carry.
pub fn classify_polarity(w: f64, cap_a: f64, cap_b: f64) -> PolarityPlan {
    // Ties go to slot A.
    let (high, low) = if cap_a >= cap_b { (Slot::A, Slot::B) } else { (Slot::B, Slot::A) };
    let (cap_high, cap_low) = if cap_a >= cap_b { (cap_a, cap_b) } else { (cap_b, cap_a) };
    let mut fixed = [FixedAction::None; 2];
    let idx = |s: Slot| match s {
        Slot::A => 0,
        Slot::B => 1,
    };
    if w <= cap_high {
        fixed[idx(low)] = FixedAction::Reset;
        PolarityPlan { programmable: Some(high), fixed, device_target: w, rule: PlanRule::Fits }
    } else if w > cap_high + cap_low {
        fixed = [FixedAction::Set; 2];
        PolarityPlan { programmable: None, fixed, device_target: 0.0, rule: PlanRule::Unprogrammable }
    } else {
        fixed[idx(high)] = FixedAction::Set;
        PolarityPlan { programmable: Some(low), fixed, device_target: w - cap_high, rule: PlanRule::Split }
    }
}

/// Two-device-per-polarity selection. Device capacities are read as known metadata.
pub fn plan_two_device(core: &CrossbarCore, target: ArrayView2<f64>) -> Result<DeviceSelectionPlan> {
    check_shape(core, target)?;
    if core.mode() != CellMode::Two {
        return Err(crate::error::invalid("mode", "two-device planning needs a two-device core"));
    }
    let scale = core.weight_scale();
    let mut cells = Vec::with_capacity(core.rows() * core.cols());
    for i in 0..core.rows() {
        for j in 0..core.cols() {
            let w = target[(i, j)] * scale;
            let c = core.cell(i, j);
            cells.push(CellPlan {
                pos: classify_polarity(w.max(0.0), c.plus_a.set_cap, c.plus_b.set_cap),
                neg: classify_polarity((-w).max(0.0), c.minus_a.set_cap, c.minus_b.set_cap),
            });
        }
    }
    Ok(DeviceSelectionPlan { rows: core.rows(), cols: core.cols(), cells })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fits_on_high_capacity_device() {
        let p = classify_polarity(0.5 * 20.0, 18.0, 20.0);
        assert_eq!(p.rule, PlanRule::Fits);
        assert_eq!(p.programmable, Some(Slot::B));
        assert_eq!(p.fixed, [FixedAction::Reset, FixedAction::None]);
        assert_eq!(p.device_target, 10.0);
    }

    #[test]
    fn too_large_leaves_both_set() {
        let p = classify_polarity(1.5 * (18.0 + 20.0), 18.0, 20.0);
        assert_eq!(p.rule, PlanRule::Unprogrammable);
        assert_eq!(p.programmable, None);
        assert_eq!(p.fixed, [FixedAction::Set, FixedAction::Set]);
    }

    #[test]
    fn split_programs_low_capacity_device() {
        let p = classify_polarity(20.0 + 0.5 * 18.0, 18.0, 20.0);
        assert_eq!(p.rule, PlanRule::Split);
        assert_eq!(p.programmable, Some(Slot::A));
        assert_eq!(p.fixed, [FixedAction::None, FixedAction::Set]);
        assert!((p.device_target - 9.0).abs() < 1e-12);
    }

    #[test]
    fn equal_capacities_prefer_slot_a() {
        let p = classify_polarity(5.0, 20.0, 20.0);
        assert_eq!(p.programmable, Some(Slot::A));
        let p = classify_polarity(30.0, 20.0, 20.0);
        assert_eq!(p.programmable, Some(Slot::B));
    }

    proptest! {
        #[test]
        fn classification_is_total(w in 0.0f64..100.0, a in 0.1f64..25.0, b in 0.1f64..25.0) {
            let p = classify_polarity(w, a, b);
            let expect = if w <= a.max(b) { PlanRule::Fits } else if w > a + b { PlanRule::Unprogrammable } else { PlanRule::Split };
            prop_assert_eq!(p.rule, expect);
            prop_assert_eq!(p.programmable.is_none(), p.rule == PlanRule::Unprogrammable);
            if let Some(s) = p.programmable {
                let cap = if s == Slot::A { a } else { b };
                prop_assert!(p.device_target >= 0.0 && p.device_target <= cap + 1e-12);
            }
        }
    }
}
