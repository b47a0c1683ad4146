//! Activity placements and battery actions, and the schedule JSON file.

use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{Instance, SLOTS_PER_DAY};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub enum BatteryAction {
    Discharge,
    Hold,
    Charge,
}

impl BatteryAction {
    pub const ALL: [BatteryAction; 3] = [
        BatteryAction::Hold,
        BatteryAction::Charge,
        BatteryAction::Discharge,
    ];

    /// SoC lattice change in steps of `0.25 * max_power_kw`.
    pub fn soc_delta(self) -> i64 {
        i8::from(self) as i64
    }
}

impl From<BatteryAction> for i8 {
    fn from(a: BatteryAction) -> i8 {
        match a {
            BatteryAction::Discharge => -1,
            BatteryAction::Hold => 0,
            BatteryAction::Charge => 1,
        }
    }
}

impl TryFrom<i8> for BatteryAction {
    type Error = String;

    fn try_from(v: i8) -> std::result::Result<Self, String> {
        match v {
            -1 => Ok(BatteryAction::Discharge),
            0 => Ok(BatteryAction::Hold),
            1 => Ok(BatteryAction::Charge),
            other => Err(format!("battery action must be -1, 0 or 1, got {other}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RecurringAssignment {
    pub id: u32,
    pub weekday: usize,
    pub start_slot_of_day: usize,
    pub rooms: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OnceOffAssignment {
    pub id: u32,
    /// Absolute slot. Kept as the last placement when not scheduled.
    pub start_slot: usize,
    pub rooms: Vec<usize>,
    pub scheduled: bool,
}

/// Assignments are stored in the instance's order: `recurring[j]` belongs to
/// `instance.recurring()[j]` and likewise for once-off activities. An empty
/// `battery_actions` (or an empty inner list) means the battery holds.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Schedule {
    pub recurring: Vec<RecurringAssignment>,
    pub once_off: Vec<OnceOffAssignment>,
    #[serde(default)]
    pub battery_actions: Vec<Vec<BatteryAction>>,
}

impl Schedule {
    pub fn read_json(path: &Path, instance: &Instance) -> Result<Schedule> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let raw: Schedule = serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            source: e,
        })?;
        raw.aligned_to(instance)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            source: e,
        })?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Reorders assignments into instance order and checks that every
    /// activity appears exactly once with in-range placements.
    pub fn aligned_to(mut self, instance: &Instance) -> Result<Schedule> {
        let fail = |m: String| Err(Error::Validation(m));
        let h = &instance.horizon;
        if self.recurring.len() != instance.recurring().len()
            || self.once_off.len() != instance.once_off().len()
        {
            return fail("schedule does not list every activity exactly once".into());
        }
        let mut recurring = Vec::with_capacity(self.recurring.len());
        for &k in instance.recurring() {
            let id = instance.activities[k].id;
            let Some(pos) = self.recurring.iter().position(|r| r.id == id) else {
                return fail(format!("recurring activity {id} missing from schedule"));
            };
            let r = self.recurring.swap_remove(pos);
            let dur = instance.activities[k].duration_slots;
            if r.weekday >= crate::instance::WORKING_WEEKDAYS
                || r.start_slot_of_day + dur > SLOTS_PER_DAY
            {
                return fail(format!("recurring activity {id} placed outside the week"));
            }
            recurring.push(r);
        }
        let mut once_off = Vec::with_capacity(self.once_off.len());
        for &k in instance.once_off() {
            let id = instance.activities[k].id;
            let Some(pos) = self.once_off.iter().position(|o| o.id == id) else {
                return fail(format!("once-off activity {id} missing from schedule"));
            };
            let o = self.once_off.swap_remove(pos);
            if o.scheduled && o.start_slot + instance.activities[k].duration_slots > h.n_slots {
                return fail(format!("once-off activity {id} runs past the horizon"));
            }
            once_off.push(o);
        }
        if !self.battery_actions.is_empty() {
            if self.battery_actions.len() != instance.batteries.len() {
                return fail("battery_actions must have one list per battery".into());
            }
            if self
                .battery_actions
                .iter()
                .any(|a| !a.is_empty() && a.len() != h.n_slots)
            {
                return fail("battery action list length differs from the horizon".into());
            }
        }
        Ok(Schedule {
            recurring,
            once_off,
            battery_actions: self.battery_actions,
        })
    }

    /// The action of battery `b` at slot `t`.
    pub fn battery_action(&self, b: usize, t: usize) -> BatteryAction {
        self.battery_actions
            .get(b)
            .and_then(|a| a.get(t))
            .copied()
            .unwrap_or(BatteryAction::Hold)
    }

    pub fn without_batteries(&self) -> Schedule {
        Schedule {
            recurring: self.recurring.clone(),
            once_off: self.once_off.clone(),
            battery_actions: Vec::new(),
        }
    }

    /// Whether activity `k` occurs (recurring always; once-off when
    /// scheduled).
    pub fn is_active(&self, instance: &Instance, k: usize) -> bool {
        instance.activities[k].is_recurring()
            || self.once_off[instance.position_in_kind(k)].scheduled
    }

    /// The precedence day of activity `k`: first weekly occurrence for a
    /// recurring activity, start day for a once-off one.
    pub fn day_of(&self, instance: &Instance, k: usize) -> usize {
        let pos = instance.position_in_kind(k);
        if instance.activities[k].is_recurring() {
            instance
                .horizon
                .recurring_first_day(self.recurring[pos].weekday)
        } else {
            self.once_off[pos].start_slot / SLOTS_PER_DAY
        }
    }

    pub fn rooms_of(&self, instance: &Instance, k: usize) -> &[usize] {
        let pos = instance.position_in_kind(k);
        if instance.activities[k].is_recurring() {
            &self.recurring[pos].rooms
        } else {
            &self.once_off[pos].rooms
        }
    }

    /// Slot ranges occupied by activity `k`; empty for an unscheduled
    /// once-off activity.
    pub fn occupied_ranges(&self, instance: &Instance, k: usize) -> Vec<Range<usize>> {
        let dur = instance.activities[k].duration_slots;
        let pos = instance.position_in_kind(k);
        if instance.activities[k].is_recurring() {
            let r = &self.recurring[pos];
            recurring_ranges(instance, r.weekday, r.start_slot_of_day, dur).to_vec()
        } else {
            let o = &self.once_off[pos];
            if o.scheduled {
                vec![o.start_slot..o.start_slot + dur]
            } else {
                Vec::new()
            }
        }
    }

    /// `o_i` of the cost: true unless every occupied slot lies in working
    /// hours on a working day.
    pub fn outside_working_hours(&self, instance: &Instance, pos: usize) -> bool {
        let k = instance.once_off()[pos];
        once_off_outside_working_hours(
            instance,
            self.once_off[pos].start_slot,
            instance.activities[k].duration_slots,
        )
    }
}

pub fn recurring_ranges(
    instance: &Instance,
    weekday: usize,
    start_slot_of_day: usize,
    duration: usize,
) -> [Range<usize>; 4] {
    instance.horizon.recurring_days(weekday).map(|d| {
        let s = d * SLOTS_PER_DAY + start_slot_of_day;
        s..s + duration
    })
}

pub fn once_off_outside_working_hours(instance: &Instance, start: usize, duration: usize) -> bool {
    (start..start + duration).any(|t| !instance.horizon.is_working_slot(t))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn battery_action_json_is_integer() {
        let v = vec![BatteryAction::Discharge, BatteryAction::Hold, BatteryAction::Charge];
        assert_eq!(serde_json::to_string(&v).unwrap(), "[-1,0,1]");
        let back: Vec<BatteryAction> = serde_json::from_str("[1,-1,0]").unwrap();
        assert_eq!(
            back,
            vec![BatteryAction::Charge, BatteryAction::Discharge, BatteryAction::Hold]
        );
        assert!(serde_json::from_str::<Vec<BatteryAction>>("[2]").is_err());
    }

    #[test]
    fn schedule_json_shape() {
        let s = Schedule {
            recurring: vec![RecurringAssignment {
                id: 3,
                weekday: 1,
                start_slot_of_day: 40,
                rooms: vec![0, 2],
            }],
            once_off: vec![OnceOffAssignment {
                id: 9,
                start_slot: 500,
                rooms: vec![1],
                scheduled: true,
            }],
            battery_actions: vec![vec![BatteryAction::Charge]],
        };
        let v: serde_json::Value = serde_json::to_value(&s).unwrap();
        assert_eq!(v["recurring"][0]["start_slot_of_day"], 40);
        assert_eq!(v["once_off"][0]["scheduled"], true);
        assert_eq!(v["battery_actions"][0][0], 1);
    }
}
