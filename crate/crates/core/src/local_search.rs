//! One-activity-at-a-time improvement of a feasible schedule.
//!
//! Activities are visited recurring first, each class by ascending
//! precedence level. Every visit enumerates alternative (day, start) moves
//! for that activity and adopts the cheapest one if it beats the incumbent.
//! The first pass only tries days that keep every precedence chain
//! placeable and leave successors untouched; the second pass tries any day
//! after the activity's predecessors and lets successors be pushed (or
//! dropped, for once-off ones) by the precedence repair.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decode::{enforce_one, once_off_contribution_at, prune_once_off, select_kept, Evaluator};
use crate::instance::{Instance, SLOTS_PER_DAY, WORKING_WEEKDAYS};
use crate::objective::{energy_cost, peak_cost, peak_kw, total_load, CostBreakdown};
use crate::rooms::Occupancy;
use crate::schedule::{once_off_outside_working_hours, recurring_ranges, Schedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Improve the schedule as given.
    Keep,
    /// Unschedule the optional once-off activities first.
    Drop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    RecommendedDays,
    AllTimes,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Move {
    Recurring { weekday: usize, start_slot_of_day: usize },
    OnceOff { start_slot: usize },
}

/// Outcome of scanning one activity's candidate moves.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeChoice {
    /// Index of the adopted candidate; `None` keeps the current placement.
    pub index: Option<usize>,
    pub schedule: Schedule,
    pub cost: CostBreakdown,
}

fn build_occupancy(instance: &Instance, schedule: &Schedule, skip: usize) -> Occupancy {
    let mut occ = Occupancy::new(instance.horizon.n_slots, instance.total_rooms());
    for k in 0..instance.activities.len() {
        if k == skip || !schedule.is_active(instance, k) {
            continue;
        }
        let ranges = schedule.occupied_ranges(instance, k);
        occ.occupy(&ranges, schedule.rooms_of(instance, k));
    }
    occ
}

fn descendants_in_level_order(ev: &Evaluator<'_>, k: usize) -> Vec<usize> {
    let n = ev.instance.activities.len();
    let mut reach = vec![false; n];
    let mut stack = ev.instance.succs(k).to_vec();
    while let Some(s) = stack.pop() {
        if !std::mem::replace(&mut reach[s], true) {
            stack.extend_from_slice(ev.instance.succs(s));
        }
    }
    ev.info.by_level.iter().copied().filter(|&s| reach[s]).collect()
}

/// Applies `mv` to activity `k` and repairs the consequences: rooms for the
/// moved activity at exactly the new time (other activities keep theirs),
/// precedence pushes of its successors, then once-off pruning. `None` when
/// the move cannot be made feasible.
pub fn apply_move(
    ev: &Evaluator<'_>,
    schedule: &Schedule,
    occ_without_k: &Occupancy,
    k: usize,
    mv: Move,
) -> Option<Schedule> {
    let instance = ev.instance;
    let a = &instance.activities[k];
    let pos = instance.position_in_kind(k);
    let mut next = schedule.clone();
    let new_ranges = match mv {
        Move::Recurring {
            weekday,
            start_slot_of_day,
        } => {
            let r = &mut next.recurring[pos];
            r.weekday = weekday;
            r.start_slot_of_day = start_slot_of_day;
            recurring_ranges(instance, weekday, start_slot_of_day, a.duration_slots).to_vec()
        }
        Move::OnceOff { start_slot } => {
            let o = &mut next.once_off[pos];
            o.start_slot = start_slot;
            o.scheduled = true;
            vec![start_slot..start_slot + a.duration_slots]
        }
    };
    let rooms = occ_without_k.find_rooms(&new_ranges, a.n_rooms)?;
    match mv {
        Move::Recurring { .. } => next.recurring[pos].rooms = rooms.clone(),
        Move::OnceOff { .. } => next.once_off[pos].rooms = rooms.clone(),
    }

    let mut changed = Vec::new();
    for s in descendants_in_level_order(ev, k) {
        let before = (
            schedule.is_active(instance, s),
            schedule.day_of(instance, s),
        );
        if !enforce_one(instance, &mut next, s) {
            return None;
        }
        if (next.is_active(instance, s), next.day_of(instance, s)) != before {
            changed.push(s);
        }
    }
    if !changed.is_empty() {
        let mut occ = occ_without_k.clone();
        occ.occupy(&new_ranges, &rooms);
        for &s in &changed {
            let old_ranges = schedule.occupied_ranges(instance, s);
            occ.release(&old_ranges, schedule.rooms_of(instance, s));
        }
        for &s in &changed {
            if !next.is_active(instance, s) {
                continue;
            }
            let ranges = next.occupied_ranges(instance, s);
            let rooms = occ.find_rooms(&ranges, instance.activities[s].n_rooms)?;
            occ.occupy(&ranges, &rooms);
            let spos = instance.position_in_kind(s);
            if instance.activities[s].is_recurring() {
                next.recurring[spos].rooms = rooms;
            } else {
                next.once_off[spos].rooms = rooms;
            }
        }
    }

    prune_once_off(instance, &ev.prune, &mut next);
    Some(next)
}

/// Candidate moves for activity `k`, ordered by (day, start). The current
/// placement is not included.
pub fn candidate_moves(ev: &Evaluator<'_>, schedule: &Schedule, k: usize, phase: Phase) -> Vec<Move> {
    let instance = ev.instance;
    let h = &instance.horizon;
    let a = &instance.activities[k];
    let pos = instance.position_in_kind(k);

    let mut pred_day: Option<usize> = None;
    for &p in instance.preds(k) {
        if !schedule.is_active(instance, p) {
            return Vec::new();
        }
        let d = schedule.day_of(instance, p);
        pred_day = Some(pred_day.map_or(d, |x: usize| x.max(d)));
    }
    let after_preds = |day: usize| pred_day.map_or(true, |p| day > p);
    let before_succs = |day: usize| {
        instance
            .succs(k)
            .iter()
            .filter(|&&s| schedule.is_active(instance, s))
            .all(|&s| day < schedule.day_of(instance, s))
    };

    let mut moves = Vec::new();
    if a.is_recurring() {
        let current = &schedule.recurring[pos];
        let weekdays: Vec<usize> = match phase {
            Phase::RecommendedDays => ev.info.allowed_weekdays(k),
            Phase::AllTimes => (0..WORKING_WEEKDAYS).collect(),
        };
        for w in weekdays {
            let day = h.recurring_first_day(w);
            if !after_preds(day) || (phase == Phase::RecommendedDays && !before_succs(day)) {
                continue;
            }
            for s in h.working_start_slot_of_day..=h.working_end_slot_of_day - a.duration_slots {
                if w == current.weekday && s == current.start_slot_of_day {
                    continue;
                }
                moves.push(Move::Recurring {
                    weekday: w,
                    start_slot_of_day: s,
                });
            }
        }
    } else {
        let current = &schedule.once_off[pos];
        let last_day = match phase {
            Phase::RecommendedDays => match h.last_day().checked_sub(ev.info.level_after[k]) {
                Some(d) => d,
                None => return Vec::new(),
            },
            Phase::AllTimes => h.last_day(),
        };
        for day in 0..=last_day {
            if !after_preds(day) || (phase == Phase::RecommendedDays && !before_succs(day)) {
                continue;
            }
            let first = day * SLOTS_PER_DAY;
            let end = (first + SLOTS_PER_DAY).min(h.n_slots - a.duration_slots + 1);
            for start in first..end {
                if current.scheduled && start == current.start_slot {
                    continue;
                }
                moves.push(Move::OnceOff { start_slot: start });
            }
        }
    }
    moves
}

/// Costs moves of an activity without successors directly from loads and
/// once-off contributions, without building the moved schedule.
struct LeafScan {
    load_without_k: Vec<f64>,
    contribution: Vec<f64>,
    scheduled: Vec<bool>,
}

impl LeafScan {
    fn new(ev: &Evaluator<'_>, schedule: &Schedule, k: usize) -> Self {
        let instance = ev.instance;
        let mut load = total_load(instance, &ev.base_load, schedule);
        let p = instance.activities[k].power_kw;
        for r in schedule.occupied_ranges(instance, k) {
            for l in &mut load[r] {
                *l -= p;
            }
        }
        let scheduled: Vec<bool> = schedule.once_off.iter().map(|o| o.scheduled).collect();
        let contribution = (0..scheduled.len())
            .map(|pos| {
                if scheduled[pos] {
                    once_off_contribution_at(instance, pos, schedule.once_off[pos].start_slot)
                } else {
                    0.0
                }
            })
            .collect();
        LeafScan {
            load_without_k: load,
            contribution,
            scheduled,
        }
    }

    fn cost(&self, ev: &Evaluator<'_>, schedule: &Schedule, occ: &Occupancy, k: usize, mv: Move) -> Option<f64> {
        let instance = ev.instance;
        let a = &instance.activities[k];
        let (ranges, k_start) = match mv {
            Move::Recurring {
                weekday,
                start_slot_of_day,
            } => (
                recurring_ranges(instance, weekday, start_slot_of_day, a.duration_slots).to_vec(),
                None,
            ),
            Move::OnceOff { start_slot } => (vec![start_slot..start_slot + a.duration_slots], Some(start_slot)),
        };
        occ.find_rooms(&ranges, a.n_rooms)?;

        let k_pos = k_start.map(|_| instance.position_in_kind(k));
        let mut contribution = self.contribution.clone();
        let mut scheduled = self.scheduled.clone();
        if let (Some(pos), Some(start)) = (k_pos, k_start) {
            contribution[pos] = once_off_contribution_at(instance, pos, start);
            scheduled[pos] = true;
        }
        let kept = select_kept(&ev.prune, &contribution, &scheduled);

        let mut load = self.load_without_k.clone();
        if k_pos.map_or(true, |pos| kept[pos]) {
            for r in ranges {
                for l in &mut load[r] {
                    *l += a.power_kw;
                }
            }
        }
        let mut reward = 0.0;
        for (pos, &j) in instance.once_off().iter().enumerate() {
            if !scheduled[pos] {
                continue;
            }
            let oa = &instance.activities[j];
            let start = if Some(pos) == k_pos { k_start.unwrap() } else { schedule.once_off[pos].start_slot };
            if !kept[pos] {
                if Some(pos) != k_pos {
                    for l in &mut load[start..start + oa.duration_slots] {
                        *l -= oa.power_kw;
                    }
                }
                continue;
            }
            reward += oa.value;
            if once_off_outside_working_hours(instance, start, oa.duration_slots) {
                reward -= oa.penalty;
            }
        }
        let peak = peak_kw(&load);
        Some(energy_cost(&load, &instance.price.values) + peak_cost(peak) - reward)
    }
}

/// Costs closer than this (relative) are treated as equal.
fn tolerance(cost: f64) -> f64 {
    1e-9 * cost.abs().max(1.0)
}

/// The cheapest of `candidates` for activity `k`, adopted only when strictly
/// cheaper than `current_cost`. Ties go to the earliest candidate.
pub fn evaluate_time_candidates(
    ev: &Evaluator<'_>,
    schedule: &Schedule,
    current_cost: f64,
    k: usize,
    candidates: &[Move],
) -> TimeChoice {
    let occ = build_occupancy(ev.instance, schedule, k);
    let leaf = ev.instance.succs(k).is_empty().then(|| LeafScan::new(ev, schedule, k));
    let costs: Vec<Option<f64>> = candidates
        .par_iter()
        .map(|&mv| match &leaf {
            Some(scan) => scan.cost(ev, schedule, &occ, k, mv),
            None => apply_move(ev, schedule, &occ, k, mv).map(|s| ev.cost(&s).total),
        })
        .collect();
    let min = costs.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    if min < current_cost - tolerance(current_cost) {
        let i = costs
            .iter()
            .position(|c| c.is_some_and(|c| c <= min + tolerance(min)))
            .expect("the minimum is attained");
        let moved = apply_move(ev, schedule, &occ, k, candidates[i]).expect("candidate is feasible");
        let cost = ev.cost(&moved);
        if cost.total < current_cost - tolerance(current_cost) {
            return TimeChoice {
                index: Some(i),
                schedule: moved,
                cost,
            };
        }
    }
    TimeChoice {
        index: None,
        schedule: schedule.clone(),
        cost: ev.cost(schedule),
    }
}

/// Visit order: recurring activities by (level, id), then once-off ones.
pub fn visit_order(ev: &Evaluator<'_>) -> Vec<usize> {
    let instance = ev.instance;
    let mut order: Vec<usize> = ev
        .info
        .by_level
        .iter()
        .copied()
        .filter(|&k| instance.activities[k].is_recurring())
        .collect();
    order.extend(
        ev.info
            .by_level
            .iter()
            .copied()
            .filter(|&k| !instance.activities[k].is_recurring()),
    );
    order
}

/// Removes every once-off activity that no recurring activity depends on.
pub fn drop_once_off(ev: &Evaluator<'_>, schedule: &Schedule) -> Schedule {
    let mut s = schedule.clone();
    for (pos, o) in s.once_off.iter_mut().enumerate() {
        if !ev.prune.forced[pos] {
            o.scheduled = false;
            o.rooms.clear();
        }
    }
    s
}

/// Two passes of single-activity moves. The result never costs more than
/// `base`.
pub fn improve_schedule(ev: &Evaluator<'_>, base: &Schedule, variant: Variant) -> Schedule {
    let base_cost = ev.cost(base).total;
    let mut current = match variant {
        Variant::Keep => base.clone(),
        Variant::Drop => drop_once_off(ev, base),
    };
    let mut cost = ev.cost(&current).total;
    let order = visit_order(ev);
    for phase in [Phase::RecommendedDays, Phase::AllTimes] {
        for &k in &order {
            let moves = candidate_moves(ev, &current, k, phase);
            if moves.is_empty() {
                continue;
            }
            let choice = evaluate_time_candidates(ev, &current, cost, k, &moves);
            if choice.index.is_some() {
                current = choice.schedule;
                cost = choice.cost.total;
            }
        }
    }
    if cost > base_cost {
        base.clone()
    } else {
        current
    }
}
