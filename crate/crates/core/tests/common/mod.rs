//! Independent reference implementations and fixtures shared by the
//! integration tests. Nothing here calls into the code under test except
//! for constructing inputs.

#![allow(dead_code)]

use chrono::NaiveDate;
use rand::Rng;

use evosched::instance::{Activity, ActivityKind, Battery, Building, Horizon};
use evosched::schedule::{BatteryAction, OnceOffAssignment, RecurringAssignment};
use evosched::{Instance, Schedule, SeriesFrame};

pub const DAY: usize = 96;

/// Horizon starting on the weekday of 2020-11-01 (a Sunday) with the first
/// Monday on day 1, or on a Monday when `monday_start`.
pub fn horizon(days: usize, monday_start: bool) -> Horizon {
    Horizon {
        n_slots: days * DAY,
        first_weekday: if monday_start { 0 } else { 6 },
        working_start_slot_of_day: 36,
        working_end_slot_of_day: 68,
        first_monday_day_index: if monday_start { 0 } else { 1 },
    }
}

pub fn series(monday_start: bool, values: Vec<f64>) -> SeriesFrame {
    let date = if monday_start {
        NaiveDate::from_ymd_opt(2020, 11, 2)
    } else {
        NaiveDate::from_ymd_opt(2020, 11, 1)
    };
    SeriesFrame::new(date.unwrap().and_hms_opt(0, 0, 0).unwrap(), values).unwrap()
}

pub fn recurring(id: u32, power_kw: f64, duration_slots: usize, n_rooms: usize, preds: Vec<u32>) -> Activity {
    Activity {
        id,
        kind: ActivityKind::Recurring,
        power_kw,
        duration_slots,
        n_rooms,
        value: 0.0,
        penalty: 0.0,
        precedences: preds,
    }
}

#[allow(clippy::too_many_arguments)]
pub fn once_off(
    id: u32,
    power_kw: f64,
    duration_slots: usize,
    n_rooms: usize,
    value: f64,
    penalty: f64,
    preds: Vec<u32>,
) -> Activity {
    Activity {
        id,
        kind: ActivityKind::OnceOff,
        power_kw,
        duration_slots,
        n_rooms,
        value,
        penalty,
        precedences: preds,
    }
}

/// Instance on a flat price and load.
pub fn flat_instance(
    days: usize,
    monday_start: bool,
    rooms: usize,
    batteries: Vec<Battery>,
    activities: Vec<Activity>,
    price: f64,
    load: f64,
) -> Instance {
    let n = days * DAY;
    Instance::new(
        horizon(days, monday_start),
        vec![Building { id: 0, n_rooms: rooms }],
        batteries,
        activities,
        series(monday_start, vec![price; n]),
        series(monday_start, vec![load; n]),
    )
    .unwrap()
}

/// Random instance on a 30-day horizon with the given activity counts,
/// random series and no precedence edges unless `edges`.
pub fn random_instance<R: Rng>(
    rng: &mut R,
    n_recurring: usize,
    n_once_off: usize,
    rooms: usize,
    edges: bool,
) -> Instance {
    let days = 30;
    let n = days * DAY;
    let mut activities = Vec::new();
    let mut depth = vec![0usize; n_recurring + n_once_off];
    for i in 0..n_recurring + n_once_off {
        let id = i as u32;
        let mut preds = Vec::new();
        if edges && i > 0 && rng.gen_bool(0.4) {
            let j = rng.gen_range(0..i);
            // Only once-off successors may follow once-off predecessors;
            // chains stay short enough to fit in a working week.
            if (j < n_recurring || i >= n_recurring) && depth[j] < 3 {
                preds.push(j as u32);
                depth[i] = depth[j] + 1;
            }
        }
        let dur = rng.gen_range(1..=6);
        let n_rooms = rng.gen_range(1..=2);
        let power = rng.gen_range(0.0..60.0);
        if i < n_recurring {
            activities.push(recurring(id, power, dur, n_rooms, preds));
        } else {
            let value = rng.gen_range(0.0..200.0);
            let penalty = rng.gen_range(0.0..200.0);
            activities.push(once_off(id, power, dur, n_rooms, value, penalty, preds));
        }
    }
    let price: Vec<f64> = (0..n).map(|_| rng.gen_range(-20.0..120.0)).collect();
    let load: Vec<f64> = (0..n).map(|_| rng.gen_range(100.0..400.0)).collect();
    let batteries = vec![Battery {
        id: 0,
        capacity_kwh: 50.0,
        max_power_kw: 40.0,
        efficiency: 0.9,
    }];
    Instance::new(
        horizon(days, false),
        vec![Building { id: 0, n_rooms: rooms }],
        batteries,
        activities,
        series(false, price),
        series(false, load),
    )
    .unwrap()
}

/// A random structurally valid schedule; rooms and precedence are ignored.
pub fn random_schedule<R: Rng>(rng: &mut R, instance: &Instance, with_batteries: bool) -> Schedule {
    let mut s = Schedule::default();
    for &k in instance.recurring() {
        let a = &instance.activities[k];
        s.recurring.push(RecurringAssignment {
            id: a.id,
            weekday: rng.gen_range(0..5),
            start_slot_of_day: rng.gen_range(0..=DAY - a.duration_slots),
            rooms: vec![],
        });
    }
    for &k in instance.once_off() {
        let a = &instance.activities[k];
        s.once_off.push(OnceOffAssignment {
            id: a.id,
            start_slot: rng.gen_range(0..=instance.horizon.n_slots - a.duration_slots),
            rooms: vec![],
            scheduled: rng.gen_bool(0.7),
        });
    }
    if with_batteries {
        s.battery_actions = instance
            .batteries
            .iter()
            .map(|_| {
                (0..instance.horizon.n_slots)
                    .map(|_| [BatteryAction::Discharge, BatteryAction::Hold, BatteryAction::Charge][rng.gen_range(0..3)])
                    .collect()
            })
            .collect();
    }
    s
}

/// Slot-by-slot load: for every slot, ask every activity whether it runs.
pub fn naive_load(instance: &Instance, base: &[f64], schedule: &Schedule) -> Vec<f64> {
    let h = &instance.horizon;
    let mut out = Vec::with_capacity(h.n_slots);
    for t in 0..h.n_slots {
        let day = t / DAY;
        let sod = t % DAY;
        let mut l = base[t];
        for r in &schedule.recurring {
            let a = instance.activities.iter().find(|a| a.id == r.id).unwrap();
            let week_offset = day as i64 - (h.first_monday_day_index + r.weekday) as i64;
            let on_day = week_offset >= 0 && week_offset % 7 == 0 && week_offset / 7 < 4;
            if on_day && sod >= r.start_slot_of_day && sod < r.start_slot_of_day + a.duration_slots {
                l += a.power_kw;
            }
        }
        for o in &schedule.once_off {
            let a = instance.activities.iter().find(|a| a.id == o.id).unwrap();
            if o.scheduled && t >= o.start_slot && t < o.start_slot + a.duration_slots {
                l += a.power_kw;
            }
        }
        for (b, actions) in schedule.battery_actions.iter().enumerate() {
            let battery = &instance.batteries[b];
            match actions.get(t) {
                Some(BatteryAction::Charge) => l += battery.max_power_kw,
                Some(BatteryAction::Discharge) => l -= battery.max_power_kw * battery.efficiency.sqrt(),
                _ => {}
            }
        }
        out.push(l);
    }
    out
}

/// Whether slot `t` is inside working hours on a Monday to Friday.
pub fn naive_working(instance: &Instance, t: usize) -> bool {
    let h = &instance.horizon;
    let weekday = (h.first_weekday + t / DAY) % 7;
    let sod = t % DAY;
    weekday < 5 && sod >= 36 && sod < 68
}

/// The schedule cost written out term by term.
pub fn naive_cost(instance: &Instance, load: &[f64], schedule: &Schedule) -> f64 {
    let price = &instance.price.values;
    let mut energy = 0.0;
    let mut peak = f64::NEG_INFINITY;
    for t in 0..load.len() {
        energy += load[t] / 4.0 * price[t] / 1000.0;
        if load[t] > peak {
            peak = load[t];
        }
    }
    let mut reward = 0.0;
    for o in &schedule.once_off {
        if !o.scheduled {
            continue;
        }
        let a = instance.activities.iter().find(|a| a.id == o.id).unwrap();
        let inside = (o.start_slot..o.start_slot + a.duration_slots).all(|t| naive_working(instance, t));
        reward += a.value - if inside { 0.0 } else { a.penalty };
    }
    energy + 0.005 * peak * peak - reward
}

pub fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

fn dispatch_cost(load: &[f64], price: &[f64]) -> f64 {
    let mut energy = 0.0;
    let mut peak = f64::NEG_INFINITY;
    for t in 0..load.len() {
        energy += 0.25 * load[t] * price[t] / 1000.0;
        peak = peak.max(load[t]);
    }
    energy + 0.005 * peak * peak
}

/// Cheapest joint action sequence over all `3^(B*T)` sequences, with the
/// SoC counted in whole charge steps starting from empty.
pub fn exhaustive_dispatch(batteries: &[Battery], load: &[f64], price: &[f64]) -> (f64, Vec<Vec<i8>>) {
    let t_len = load.len();
    let nb = batteries.len();
    let steps: Vec<i64> = batteries
        .iter()
        .map(|b| (b.capacity_kwh / (0.25 * b.max_power_kw) + 1e-9).floor() as i64)
        .collect();
    let mut best = (f64::INFINITY, vec![]);
    let mut seq = vec![vec![0i8; t_len]; nb];
    fn rec(
        t: usize,
        b: usize,
        soc: &mut Vec<i64>,
        seq: &mut Vec<Vec<i8>>,
        ctx: (&[Battery], &[i64], &[f64], &[f64]),
        best: &mut (f64, Vec<Vec<i8>>),
    ) {
        let (batteries, steps, load, price) = ctx;
        let nb = batteries.len();
        if t == load.len() {
            let l: Vec<f64> = (0..load.len())
                .map(|s| {
                    load[s]
                        + (0..nb)
                            .map(|j| match seq[j][s] {
                                1 => batteries[j].max_power_kw,
                                -1 => -batteries[j].max_power_kw * batteries[j].efficiency.sqrt(),
                                _ => 0.0,
                            })
                            .sum::<f64>()
                })
                .collect();
            let c = dispatch_cost(&l, price);
            if c < best.0 {
                *best = (c, seq.clone());
            }
            return;
        }
        if b == nb {
            rec(t + 1, 0, soc, seq, ctx, best);
            return;
        }
        for a in [-1i8, 0, 1] {
            let next = soc[b] + a as i64;
            if next < 0 || next > steps[b] {
                continue;
            }
            soc[b] = next;
            seq[b][t] = a;
            rec(t, b + 1, soc, seq, ctx, best);
            soc[b] -= a as i64;
        }
        seq[b][t] = 0;
    }
    let mut soc = vec![0i64; nb];
    rec(0, 0, &mut soc, &mut seq, (batteries, &steps, load, price), &mut best);
    best
}

pub fn actions_to_i8(actions: &[BatteryAction]) -> Vec<i8> {
    actions.iter().map(|&a| i8::from(a)).collect()
}

pub fn battery_cost(batteries: &[Battery], load: &[f64], price: &[f64], actions: &[Vec<BatteryAction>]) -> f64 {
    let l: Vec<f64> = (0..load.len())
        .map(|t| {
            load[t]
                + batteries
                    .iter()
                    .zip(actions)
                    .map(|(b, a)| match a[t] {
                        BatteryAction::Charge => b.max_power_kw,
                        BatteryAction::Discharge => -b.max_power_kw * b.efficiency.sqrt(),
                        BatteryAction::Hold => 0.0,
                    })
                    .sum::<f64>()
        })
        .collect();
    dispatch_cost(&l, price)
}

pub fn random_battery<R: Rng>(rng: &mut R, id: u32) -> Battery {
    let p = rng.gen_range(5.0..60.0);
    Battery {
        id,
        capacity_kwh: 0.25 * p * rng.gen_range(1..=4) as f64,
        max_power_kw: p,
        efficiency: rng.gen_range(0.5..=1.0),
    }
}

/// Greedy once-off selection written from its definition: keep the most
/// negative benefit (own contribution plus not-yet-kept once-off
/// ancestors), repeat until none is negative. Forced ids start kept.
pub fn naive_prune(instance: &Instance, schedule: &Schedule, forced: &[u32]) -> Vec<u32> {
    let contribution = |id: u32| -> f64 {
        let o = schedule.once_off.iter().find(|o| o.id == id).unwrap();
        let a = instance.activities.iter().find(|a| a.id == id).unwrap();
        let mut c = 0.0;
        let mut outside = false;
        for t in o.start_slot..o.start_slot + a.duration_slots {
            c += 0.25 * a.power_kw * instance.price.values[t] / 1000.0;
            outside |= !naive_working(instance, t);
        }
        c - a.value + if outside { a.penalty } else { 0.0 }
    };
    let is_once_off = |id: u32| instance.activities.iter().any(|a| a.id == id && a.kind == ActivityKind::OnceOff);
    let ancestors = |id: u32| -> Vec<u32> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(x) = stack.pop() {
            let a = instance.activities.iter().find(|a| a.id == x).unwrap();
            for &p in &a.precedences {
                if !out.contains(&p) {
                    out.push(p);
                    stack.push(p);
                }
            }
        }
        out.retain(|&p| is_once_off(p));
        out
    };
    let scheduled: Vec<u32> = schedule.once_off.iter().filter(|o| o.scheduled).map(|o| o.id).collect();
    let mut kept: Vec<u32> = forced.iter().copied().filter(|id| scheduled.contains(id)).collect();
    loop {
        let mut best: Option<(u32, f64)> = None;
        for &id in &scheduled {
            if kept.contains(&id) {
                continue;
            }
            let b = contribution(id)
                + ancestors(id)
                    .into_iter()
                    .filter(|p| !kept.contains(p))
                    .map(contribution)
                    .sum::<f64>();
            if best.map_or(true, |(_, bb)| b < bb) {
                best = Some((id, b));
            }
        }
        match best {
            Some((id, b)) if b < 0.0 => {
                kept.push(id);
                for p in ancestors(id) {
                    if !kept.contains(&p) {
                        kept.push(p);
                    }
                }
            }
            _ => break,
        }
    }
    kept.sort_unstable();
    kept
}

fn slot_ranges(instance: &Instance, schedule: &Schedule, id: u32) -> Vec<std::ops::Range<usize>> {
    let a = instance.activities.iter().find(|a| a.id == id).unwrap();
    if let Some(r) = schedule.recurring.iter().find(|r| r.id == id) {
        let first = instance.horizon.first_monday_day_index + r.weekday;
        return (0..4)
            .map(|j| {
                let s = (first + 7 * j) * DAY + r.start_slot_of_day;
                s..s + a.duration_slots
            })
            .collect();
    }
    let o = schedule.once_off.iter().find(|o| o.id == id).unwrap();
    if o.scheduled {
        vec![o.start_slot..o.start_slot + a.duration_slots]
    } else {
        vec![]
    }
}

/// Placement of one activity: `(weekday, start_slot_of_day)` for recurring
/// activities, `(0, start_slot)` for once-off ones.
pub type Placement = (usize, usize);

/// Moves activity `id` to `placement`, takes the lowest free rooms and
/// re-runs the reference pruning. Only valid without precedence edges.
pub fn naive_move(instance: &Instance, schedule: &Schedule, id: u32, placement: Placement) -> Option<Schedule> {
    let mut s = schedule.clone();
    if let Some(r) = s.recurring.iter_mut().find(|r| r.id == id) {
        r.weekday = placement.0;
        r.start_slot_of_day = placement.1;
    } else {
        let o = s.once_off.iter_mut().find(|o| o.id == id).unwrap();
        o.start_slot = placement.1;
        o.scheduled = true;
    }
    let mine = slot_ranges(instance, &s, id);
    let overlaps = |a: &[std::ops::Range<usize>], b: &[std::ops::Range<usize>]| {
        a.iter().any(|x| b.iter().any(|y| x.start < y.end && y.start < x.end))
    };
    let mut free = Vec::new();
    for room in 0..instance.total_rooms() {
        let busy = instance.activities.iter().filter(|a| a.id != id).any(|a| {
            let rooms: &[usize] = match s.recurring.iter().find(|r| r.id == a.id) {
                Some(r) => &r.rooms,
                None => &s.once_off.iter().find(|o| o.id == a.id).unwrap().rooms,
            };
            rooms.contains(&room) && overlaps(&slot_ranges(instance, &s, a.id), &mine)
        });
        if !busy {
            free.push(room);
        }
    }
    let need = instance.activities.iter().find(|a| a.id == id).unwrap().n_rooms;
    if free.len() < need {
        return None;
    }
    free.truncate(need);
    if let Some(r) = s.recurring.iter_mut().find(|r| r.id == id) {
        r.rooms = free;
    } else {
        s.once_off.iter_mut().find(|o| o.id == id).unwrap().rooms = free;
    }
    let kept = naive_prune(instance, &s, &[]);
    for o in &mut s.once_off {
        if o.scheduled && !kept.contains(&o.id) {
            o.scheduled = false;
            o.rooms.clear();
        }
    }
    Some(s)
}

/// Every placement of activity `id` other than its current one.
pub fn all_placements(instance: &Instance, schedule: &Schedule, id: u32) -> Vec<Placement> {
    let a = instance.activities.iter().find(|a| a.id == id).unwrap();
    if let Some(r) = schedule.recurring.iter().find(|r| r.id == id) {
        let mut out = Vec::new();
        for w in 0..5 {
            for s in 36..=68 - a.duration_slots {
                if (w, s) != (r.weekday, r.start_slot_of_day) {
                    out.push((w, s));
                }
            }
        }
        return out;
    }
    let o = schedule.once_off.iter().find(|o| o.id == id).unwrap();
    (0..=instance.horizon.n_slots - a.duration_slots)
        .filter(|&t| !(o.scheduled && t == o.start_slot))
        .map(|t| (0, t))
        .collect()
}

/// Cheapest cost over every single move of activity `id`, by rebuilding
/// and re-costing each moved schedule from scratch.
pub fn naive_best_move(instance: &Instance, base: &[f64], schedule: &Schedule, id: u32) -> Option<f64> {
    all_placements(instance, schedule, id)
        .into_iter()
        .filter_map(|p| naive_move(instance, schedule, id, p))
        .map(|s| naive_cost(instance, &naive_load(instance, base, &s), &s))
        .min_by(f64::total_cmp)
}
