//! Genome decoding and the repair chain that turns any genome into either a
//! feasible schedule or the infeasibility sentinel.
//!
//! The chain is: map genes to placements, enforce precedence by pushing
//! activities to the day after their latest predecessor, assign rooms
//! (shifting times within the day when rooms are short), prune once-off
//! activities that do not pay for themselves, then cost the result.

use crate::error::{Error, Result};
use crate::instance::{Instance, SLOTS_PER_DAY, WORKING_WEEKDAYS};
use crate::objective::{self, CostBreakdown, SLOT_HOURS};
use crate::precedence::{compute_levels, PrecedenceInfo};
use crate::rooms::Occupancy;
use crate::schedule::{
    once_off_outside_working_hours, recurring_ranges, OnceOffAssignment, RecurringAssignment,
    Schedule,
};
use crate::series::SeriesFrame;

/// Cost assigned to genomes whose repair fails.
pub const INFEASIBLE_COST: f64 = 200_000.0;

/// `clamp(floor(gene), 0, n_options - 1)`; NaN maps to 0.
pub fn gene_index(gene: f64, n_options: usize) -> usize {
    debug_assert!(n_options > 0);
    if gene.is_nan() || gene < 1.0 {
        return 0;
    }
    let idx = gene.floor();
    if idx >= (n_options - 1) as f64 {
        n_options - 1
    } else {
        idx as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecurringGenes {
    pub activity: usize,
    pub weekdays: Vec<usize>,
    pub n_times: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OnceOffGenes {
    pub activity: usize,
    pub n_starts: usize,
}

/// Gene order: `(day, time)` for each recurring activity in instance order,
/// then one start gene per once-off activity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenomeLayout {
    pub recurring: Vec<RecurringGenes>,
    pub once_off: Vec<OnceOffGenes>,
}

/// Decoded option indices for one activity. For once-off activities
/// `day_index` is 0 and `time_index` is the absolute start slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GeneChoice {
    pub id: u32,
    pub day_index: usize,
    pub time_index: usize,
}

impl GenomeLayout {
    pub fn new(instance: &Instance, info: &PrecedenceInfo) -> Result<Self> {
        let h = &instance.horizon;
        let mut recurring = Vec::with_capacity(instance.recurring().len());
        for &k in instance.recurring() {
            let a = &instance.activities[k];
            let weekdays = info.allowed_weekdays(k);
            if weekdays.is_empty() {
                return Err(Error::Unschedulable {
                    id: a.id,
                    reason: format!(
                        "precedence level {} plus level-after {} leaves no weekday",
                        info.level[k], info.level_after[k]
                    ),
                });
            }
            if a.duration_slots > h.working_slots_per_day() {
                return Err(Error::Unschedulable {
                    id: a.id,
                    reason: "longer than the working day".into(),
                });
            }
            recurring.push(RecurringGenes {
                activity: k,
                weekdays,
                n_times: h.working_slots_per_day() - a.duration_slots + 1,
            });
        }
        let mut once_off = Vec::with_capacity(instance.once_off().len());
        for &k in instance.once_off() {
            let a = &instance.activities[k];
            if a.duration_slots > h.n_slots {
                return Err(Error::Unschedulable {
                    id: a.id,
                    reason: "longer than the horizon".into(),
                });
            }
            once_off.push(OnceOffGenes {
                activity: k,
                n_starts: h.n_slots - a.duration_slots + 1,
            });
        }
        Ok(GenomeLayout {
            recurring,
            once_off,
        })
    }

    pub fn len(&self) -> usize {
        2 * self.recurring.len() + self.once_off.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of options each gene indexes, in gene order.
    pub fn option_counts(&self) -> Vec<usize> {
        let mut counts = Vec::with_capacity(self.len());
        for r in &self.recurring {
            counts.push(r.weekdays.len());
            counts.push(r.n_times);
        }
        counts.extend(self.once_off.iter().map(|o| o.n_starts));
        counts
    }

    pub fn genome_to_candidate(&self, instance: &Instance, genome: &[f64]) -> Vec<GeneChoice> {
        assert_eq!(genome.len(), self.len(), "genome length does not match layout");
        let mut out = Vec::with_capacity(self.recurring.len() + self.once_off.len());
        for (j, r) in self.recurring.iter().enumerate() {
            out.push(GeneChoice {
                id: instance.activities[r.activity].id,
                day_index: gene_index(genome[2 * j], r.weekdays.len()),
                time_index: gene_index(genome[2 * j + 1], r.n_times),
            });
        }
        let offset = 2 * self.recurring.len();
        for (j, o) in self.once_off.iter().enumerate() {
            out.push(GeneChoice {
                id: instance.activities[o.activity].id,
                day_index: 0,
                time_index: gene_index(genome[offset + j], o.n_starts),
            });
        }
        out
    }

    /// Placements straight from the genes: no rooms, every once-off
    /// scheduled.
    pub fn draft(&self, instance: &Instance, genome: &[f64]) -> Schedule {
        let choices = self.genome_to_candidate(instance, genome);
        let ws = instance.horizon.working_start_slot_of_day;
        let (rec, once) = choices.split_at(self.recurring.len());
        Schedule {
            recurring: rec
                .iter()
                .zip(&self.recurring)
                .map(|(c, g)| RecurringAssignment {
                    id: c.id,
                    weekday: g.weekdays[c.day_index],
                    start_slot_of_day: ws + c.time_index,
                    rooms: Vec::new(),
                })
                .collect(),
            once_off: once
                .iter()
                .map(|c| OnceOffAssignment {
                    id: c.id,
                    start_slot: c.time_index,
                    rooms: Vec::new(),
                    scheduled: true,
                })
                .collect(),
            battery_actions: Vec::new(),
        }
    }
}

/// Pushes activities, in ascending precedence level, to the day after their
/// latest predecessor when needed, keeping the time of day. A once-off
/// activity pushed past the horizon, or whose once-off predecessor is not
/// scheduled, is dropped. Returns false when a recurring activity cannot be
/// satisfied.
pub fn enforce_precedence(instance: &Instance, info: &PrecedenceInfo, schedule: &mut Schedule) -> bool {
    for &k in &info.by_level {
        if !enforce_one(instance, schedule, k) {
            return false;
        }
    }
    true
}

/// Applies the precedence push to activity `k` alone.
pub(crate) fn enforce_one(instance: &Instance, schedule: &mut Schedule, k: usize) -> bool {
    let h = &instance.horizon;
    let a = &instance.activities[k];
    let pos = instance.position_in_kind(k);
    if !a.is_recurring() && !schedule.once_off[pos].scheduled {
        return true;
    }
    let mut latest: Option<usize> = None;
    for &p in instance.preds(k) {
        if !schedule.is_active(instance, p) {
            if a.is_recurring() {
                return false;
            }
            let o = &mut schedule.once_off[pos];
            o.scheduled = false;
            o.rooms.clear();
            return true;
        }
        let d = schedule.day_of(instance, p);
        latest = Some(latest.map_or(d, |l: usize| l.max(d)));
    }
    let Some(latest) = latest else { return true };
    if latest < schedule.day_of(instance, k) {
        return true;
    }
    let new_day = latest + 1;
    if a.is_recurring() {
        let weekday = new_day - h.first_monday_day_index;
        if weekday >= WORKING_WEEKDAYS {
            return false;
        }
        schedule.recurring[pos].weekday = weekday;
    } else {
        let o = &mut schedule.once_off[pos];
        let start = new_day * SLOTS_PER_DAY + o.start_slot % SLOTS_PER_DAY;
        if new_day > h.last_day() || start + a.duration_slots > h.n_slots {
            o.scheduled = false;
            o.rooms.clear();
        } else {
            o.start_slot = start;
        }
    }
    true
}

/// Room assignment order: recurring before once-off, then by
/// `duration * n_rooms` descending, ties by ascending id.
pub fn room_order(instance: &Instance) -> Vec<usize> {
    let mut order: Vec<usize> = (0..instance.activities.len()).collect();
    order.sort_by_key(|&k| {
        let a = &instance.activities[k];
        (
            !a.is_recurring(),
            std::cmp::Reverse(a.duration_slots * a.n_rooms),
            a.id,
        )
    });
    order
}

/// Start candidates ordered by distance from `original`, earlier first on
/// ties, within `[lo, hi]`.
pub(crate) fn starts_by_distance(original: usize, lo: usize, hi: usize) -> impl Iterator<Item = usize> {
    let span = hi.saturating_sub(lo) + 1;
    (0..=span).flat_map(move |d| {
        let below = original.checked_sub(d).filter(|&s| s >= lo && s <= hi);
        let above = if d == 0 {
            None
        } else {
            Some(original + d).filter(|&s| s >= lo && s <= hi)
        };
        below.into_iter().chain(above)
    })
}

/// Assigns the lowest-id free rooms to every active activity, shifting an
/// activity's start within its day when rooms are short. Returns false when
/// some activity fits nowhere on its day.
pub fn assign_rooms(instance: &Instance, schedule: &mut Schedule) -> bool {
    let order = room_order(instance);
    assign_rooms_in_order(instance, schedule, &order)
}

pub(crate) fn assign_rooms_in_order(instance: &Instance, schedule: &mut Schedule, order: &[usize]) -> bool {
    let h = &instance.horizon;
    let mut occ = Occupancy::new(h.n_slots, instance.total_rooms());
    for &k in order {
        let a = &instance.activities[k];
        let pos = instance.position_in_kind(k);
        let dur = a.duration_slots;
        if a.is_recurring() {
            let r = &schedule.recurring[pos];
            let (weekday, original) = (r.weekday, r.start_slot_of_day);
            let lo = h.working_start_slot_of_day;
            let hi = h.working_end_slot_of_day - dur;
            let found = starts_by_distance(original, lo, hi).find_map(|s| {
                let ranges = recurring_ranges(instance, weekday, s, dur);
                occ.find_rooms(&ranges, a.n_rooms).map(|rooms| (s, ranges, rooms))
            });
            let Some((s, ranges, rooms)) = found else { return false };
            occ.occupy(&ranges, &rooms);
            let r = &mut schedule.recurring[pos];
            r.start_slot_of_day = s;
            r.rooms = rooms;
        } else {
            let o = &schedule.once_off[pos];
            if !o.scheduled {
                continue;
            }
            let day_start = (o.start_slot / SLOTS_PER_DAY) * SLOTS_PER_DAY;
            let hi = (day_start + SLOTS_PER_DAY - 1).min(h.n_slots - dur);
            let found = starts_by_distance(o.start_slot, day_start, hi).find_map(|s| {
                let range = [s..s + dur];
                occ.find_rooms(&range, a.n_rooms).map(|rooms| (s, rooms))
            });
            let Some((s, rooms)) = found else { return false };
            occ.occupy(&[s..s + dur], &rooms);
            let o = &mut schedule.once_off[pos];
            o.start_slot = s;
            o.rooms = rooms;
        }
    }
    true
}

/// Once-off ancestry used by pruning.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PruneContext {
    /// Per once-off position: positions of its transitive once-off ancestors.
    pub ancestors: Vec<Vec<usize>>,
    /// Once-off activities some recurring activity depends on; never pruned.
    pub forced: Vec<bool>,
}

impl PruneContext {
    pub fn new(instance: &Instance) -> Self {
        let once_off_ancestors = |k: usize| -> Vec<usize> {
            let mut seen = vec![false; instance.activities.len()];
            let mut stack: Vec<usize> = instance.preds(k).to_vec();
            let mut out = Vec::new();
            while let Some(p) = stack.pop() {
                if std::mem::replace(&mut seen[p], true) {
                    continue;
                }
                if !instance.activities[p].is_recurring() {
                    out.push(instance.position_in_kind(p));
                }
                stack.extend_from_slice(instance.preds(p));
            }
            out.sort_unstable();
            out
        };
        let ancestors = instance.once_off().iter().map(|&k| once_off_ancestors(k)).collect();
        let mut forced = vec![false; instance.once_off().len()];
        for &k in instance.recurring() {
            for pos in once_off_ancestors(k) {
                forced[pos] = true;
            }
        }
        PruneContext { ancestors, forced }
    }
}

fn once_off_energy_at(instance: &Instance, pos: usize, start: usize) -> f64 {
    let k = instance.once_off()[pos];
    let a = &instance.activities[k];
    instance.price.values[start..start + a.duration_slots]
        .iter()
        .map(|e| SLOT_HOURS * a.power_kw * e / 1000.0)
        .sum()
}

/// Stand-alone contribution of a scheduled once-off activity to the cost,
/// excluding the peak term: energy - value + o * penalty.
pub fn once_off_contribution(instance: &Instance, schedule: &Schedule, pos: usize) -> f64 {
    once_off_contribution_at(instance, pos, schedule.once_off[pos].start_slot)
}

pub(crate) fn once_off_contribution_at(instance: &Instance, pos: usize, start: usize) -> f64 {
    let a = &instance.activities[instance.once_off()[pos]];
    let penalty = if once_off_outside_working_hours(instance, start, a.duration_slots) {
        a.penalty
    } else {
        0.0
    };
    once_off_energy_at(instance, pos, start) - a.value + penalty
}

/// Benefit of keeping once-off `pos` given the already-kept set: its own
/// contribution plus that of every not-yet-kept ancestor.
pub fn benefit(
    ctx: &PruneContext,
    contribution: &[f64],
    kept: &[bool],
    pos: usize,
) -> f64 {
    contribution[pos]
        + ctx.ancestors[pos]
            .iter()
            .filter(|&&a| !kept[a])
            .map(|&a| contribution[a])
            .sum::<f64>()
}

/// Repeatedly keeps the once-off activity with the most negative benefit
/// (with its ancestors) and drops the rest once no benefit is negative.
/// Returns the kept flags per once-off position.
pub fn prune_once_off(instance: &Instance, ctx: &PruneContext, schedule: &mut Schedule) -> Vec<bool> {
    let n = instance.once_off().len();
    let scheduled: Vec<bool> = schedule.once_off.iter().map(|o| o.scheduled).collect();
    let contribution: Vec<f64> = (0..n)
        .map(|pos| {
            if scheduled[pos] {
                once_off_contribution(instance, schedule, pos)
            } else {
                0.0
            }
        })
        .collect();
    let kept = select_kept(ctx, &contribution, &scheduled);
    for (pos, o) in schedule.once_off.iter_mut().enumerate() {
        if o.scheduled && !kept[pos] {
            o.scheduled = false;
            o.rooms.clear();
        }
    }
    kept
}

/// The selection step of [`prune_once_off`] on precomputed contributions.
pub(crate) fn select_kept(ctx: &PruneContext, contribution: &[f64], scheduled: &[bool]) -> Vec<bool> {
    let n = scheduled.len();
    let mut kept: Vec<bool> = (0..n).map(|pos| ctx.forced[pos] && scheduled[pos]).collect();
    loop {
        let mut best: Option<(usize, f64)> = None;
        for pos in 0..n {
            if kept[pos] || !scheduled[pos] {
                continue;
            }
            let b = benefit(ctx, contribution, &kept, pos);
            if best.map_or(true, |(_, bb)| b < bb) {
                best = Some((pos, b));
            }
        }
        match best {
            Some((pos, b)) if b < 0.0 => {
                kept[pos] = true;
                for &a in &ctx.ancestors[pos] {
                    kept[a] = true;
                }
            }
            _ => break,
        }
    }
    kept
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluatedIndividual {
    pub genome: Vec<f64>,
    /// `None` when repair failed.
    pub schedule: Option<Schedule>,
    /// [`INFEASIBLE_COST`] exactly when `schedule` is `None`.
    pub cost: f64,
    pub breakdown: Option<CostBreakdown>,
}

impl EvaluatedIndividual {
    pub fn is_feasible(&self) -> bool {
        self.schedule.is_some()
    }
}

/// Everything needed to evaluate genomes of one instance against one base
/// load. Immutable and shareable across threads.
#[derive(Debug, Clone)]
pub struct Evaluator<'a> {
    pub instance: &'a Instance,
    pub info: PrecedenceInfo,
    pub layout: GenomeLayout,
    pub prune: PruneContext,
    pub base_load: Vec<f64>,
    room_order: Vec<usize>,
}

impl<'a> Evaluator<'a> {
    pub fn new(instance: &'a Instance, base_load: &SeriesFrame) -> Result<Self> {
        let info = compute_levels(instance)?;
        Self::with_info(instance, info, base_load)
    }

    pub fn with_info(instance: &'a Instance, info: PrecedenceInfo, base_load: &SeriesFrame) -> Result<Self> {
        if base_load.len() != instance.horizon.n_slots {
            return Err(Error::Validation(format!(
                "base load has {} values, horizon has {} slots",
                base_load.len(),
                instance.horizon.n_slots
            )));
        }
        let layout = GenomeLayout::new(instance, &info)?;
        Ok(Evaluator {
            instance,
            layout,
            prune: PruneContext::new(instance),
            base_load: base_load.values.clone(),
            room_order: room_order(instance),
            info,
        })
    }

    /// Precedence, rooms and pruning applied to a draft schedule.
    pub fn repair(&self, mut schedule: Schedule) -> Option<Schedule> {
        if !enforce_precedence(self.instance, &self.info, &mut schedule) {
            return None;
        }
        if !assign_rooms_in_order(self.instance, &mut schedule, &self.room_order) {
            return None;
        }
        prune_once_off(self.instance, &self.prune, &mut schedule);
        Some(schedule)
    }

    pub fn cost(&self, schedule: &Schedule) -> CostBreakdown {
        objective::evaluate(self.instance, &self.base_load, schedule)
    }

    pub fn evaluate(&self, genome: &[f64]) -> EvaluatedIndividual {
        let draft = self.layout.draft(self.instance, genome);
        match self.repair(draft) {
            Some(schedule) => {
                let breakdown = self.cost(&schedule);
                EvaluatedIndividual {
                    genome: genome.to_vec(),
                    cost: breakdown.total,
                    schedule: Some(schedule),
                    breakdown: Some(breakdown),
                }
            }
            None => EvaluatedIndividual {
                genome: genome.to_vec(),
                schedule: None,
                cost: INFEASIBLE_COST,
                breakdown: None,
            },
        }
    }
}

pub fn decode_and_repair(
    instance: &Instance,
    info: &PrecedenceInfo,
    genome: &[f64],
    load_forecast: &SeriesFrame,
) -> Result<EvaluatedIndividual> {
    let evaluator = Evaluator::with_info(instance, info.clone(), load_forecast)?;
    Ok(evaluator.evaluate(genome))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gene_index_floors_and_clamps() {
        assert_eq!(gene_index(2.7, 5), 2);
        assert_eq!(gene_index(-3.1, 5), 0);
        assert_eq!(gene_index(99.0, 5), 4);
        assert_eq!(gene_index(4.0, 5), 4);
        assert_eq!(gene_index(f64::NAN, 5), 0);
        assert_eq!(gene_index(f64::INFINITY, 5), 4);
        assert_eq!(gene_index(0.3, 1), 0);
    }

    #[test]
    fn starts_are_tried_nearest_first_earlier_on_ties() {
        let got: Vec<usize> = starts_by_distance(5, 3, 8).collect();
        assert_eq!(got, vec![5, 4, 6, 3, 7, 8]);
        let got: Vec<usize> = starts_by_distance(0, 0, 2).collect();
        assert_eq!(got, vec![0, 1, 2]);
    }
}
