//! Battery dispatch against a fixed activity schedule.
//!
//! Each battery acts at full power or not at all. Its state of charge lives
//! on a lattice of `0.25 * max_power_kw` kWh steps starting from empty.
//! Grid-side convention: charging adds `max_power_kw` to the load for the
//! slot, discharging subtracts `max_power_kw * sqrt(efficiency)`; the stored
//! energy moves by exactly one lattice step either way.
//!
//! A single battery is solved exactly. The peak of any plan is one of the
//! per-slot values `residual_t + effect(action)`, so for each such candidate
//! cap a dynamic program over (slot, SoC, cap-reached) finds the cheapest
//! energy among plans whose peak equals the cap. Several batteries are
//! handled by coordinate descent over single-battery best responses.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::instance::{Battery, Instance};
use crate::objective::{energy_cost, peak_cost, peak_kw, SLOT_HOURS};
use crate::schedule::BatteryAction;
use crate::series::SeriesFrame;

pub const MAX_COORDINATE_ROUNDS: usize = 10;
pub const BRUTE_FORCE_MAX_SLOTS: usize = 7;

/// Change in grid load (kW) caused by `action`.
pub fn grid_effect_kw(battery: &Battery, action: BatteryAction) -> f64 {
    match action {
        BatteryAction::Charge => battery.max_power_kw,
        BatteryAction::Hold => 0.0,
        BatteryAction::Discharge => -battery.max_power_kw * battery.efficiency.sqrt(),
    }
}

/// Energy plus peak cost of a load; the once-off reward does not depend on
/// the batteries.
pub fn dispatch_cost(load: &[f64], price: &[f64]) -> f64 {
    energy_cost(load, price) + peak_cost(peak_kw(load))
}

/// State of charge (kWh) after each slot, or `None` if some action leaves
/// the lattice.
pub fn soc_trajectory(battery: &Battery, actions: &[BatteryAction]) -> Option<Vec<f64>> {
    let levels = battery.soc_levels() as i64;
    let mut s = 0i64;
    let mut out = Vec::with_capacity(actions.len());
    for &a in actions {
        s += a.soc_delta();
        if s < 0 || s > levels {
            return None;
        }
        out.push(s as f64 * battery.step_kwh());
    }
    Some(out)
}

pub fn apply_actions(load: &[f64], battery: &Battery, actions: &[BatteryAction]) -> Vec<f64> {
    load.iter()
        .zip(actions)
        .map(|(&l, &a)| l + grid_effect_kw(battery, a))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DispatchPlan {
    /// Per battery, one action per slot.
    pub actions: Vec<Vec<BatteryAction>>,
    /// Per battery, SoC in kWh after each slot.
    pub soc: Vec<Vec<f64>>,
    pub resulting_load: SeriesFrame,
    /// Energy plus peak cost of `resulting_load`.
    pub cost: f64,
}

const ACTIONS: [BatteryAction; 3] = BatteryAction::ALL;

struct CappedDp<'a> {
    battery: &'a Battery,
    residual: &'a [f64],
    price: &'a [f64],
    levels: usize,
}

impl CappedDp<'_> {
    /// Minimum energy cost over plans whose loads never exceed `cap` and hit
    /// it at least once (or any plan when `cap` is `None`). With `record`
    /// the minimising actions are returned too.
    fn solve(&self, cap: Option<f64>, record: bool) -> Option<(f64, Option<Vec<BatteryAction>>)> {
        let n_soc = self.levels + 1;
        let flags = if cap.is_some() { 2 } else { 1 };
        let width = n_soc * flags;
        let idx = |s: usize, f: usize| s * flags + f;
        let mut cur = vec![f64::INFINITY; width];
        let mut next = vec![f64::INFINITY; width];
        cur[idx(0, 0)] = 0.0;
        let mut back: Vec<u8> = if record {
            vec![u8::MAX; self.residual.len() * width]
        } else {
            Vec::new()
        };
        let effects = ACTIONS.map(|a| grid_effect_kw(self.battery, a));

        for (t, (&r, &e)) in self.residual.iter().zip(self.price).enumerate() {
            next.fill(f64::INFINITY);
            let loads = effects.map(|d| r + d);
            for s in 0..n_soc {
                for f in 0..flags {
                    let v = cur[idx(s, f)];
                    if v == f64::INFINITY {
                        continue;
                    }
                    for (ai, &a) in ACTIONS.iter().enumerate() {
                        let ns = s as i64 + a.soc_delta();
                        if ns < 0 || ns as usize >= n_soc {
                            continue;
                        }
                        let load = loads[ai];
                        let nf = match cap {
                            Some(c) if load > c => continue,
                            Some(c) => f | usize::from(load == c),
                            None => 0,
                        };
                        let nv = v + SLOT_HOURS * load * e / 1000.0;
                        let j = idx(ns as usize, nf);
                        if nv < next[j] {
                            next[j] = nv;
                            if record {
                                back[t * width + j] = (ai as u8) | ((f as u8) << 2);
                            }
                        }
                    }
                }
            }
            std::mem::swap(&mut cur, &mut next);
        }

        let final_flag = flags - 1;
        let (best_s, best_v) = (0..n_soc)
            .map(|s| (s, cur[idx(s, final_flag)]))
            .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
        if best_v == f64::INFINITY {
            return None;
        }
        if !record {
            return Some((best_v, None));
        }
        let mut actions = vec![BatteryAction::Hold; self.residual.len()];
        let (mut s, mut f) = (best_s, final_flag);
        for t in (0..self.residual.len()).rev() {
            let code = back[t * width + idx(s, f)];
            let a = ACTIONS[(code & 3) as usize];
            actions[t] = a;
            s = (s as i64 - a.soc_delta()) as usize;
            f = (code >> 2) as usize;
        }
        Some((best_v, Some(actions)))
    }
}

/// Exact cheapest action sequence for one battery against `residual`
/// (the load with everything else already applied).
pub fn single_battery_best_response(
    battery: &Battery,
    residual: &[f64],
    price: &[f64],
) -> Vec<BatteryAction> {
    assert_eq!(residual.len(), price.len(), "residual and price lengths differ");
    let hold = vec![BatteryAction::Hold; residual.len()];
    let levels = battery.soc_levels();
    if levels == 0 || residual.is_empty() {
        return hold;
    }
    let dp = CappedDp {
        battery,
        residual,
        price,
        levels,
    };

    let hold_peak = peak_kw(residual);
    let mut best_cost = energy_cost(residual, price) + peak_cost(hold_peak);
    let mut best_cap: Option<f64> = None;

    let Some((energy_floor, _)) = dp.solve(None, false) else {
        return hold;
    };
    // Every slot's load is at least residual - discharge.
    let discharge = grid_effect_kw(battery, BatteryAction::Discharge);
    let cap_floor = residual.iter().map(|r| r + discharge).fold(f64::NEG_INFINITY, f64::max);
    let mut caps: Vec<f64> = residual
        .iter()
        .flat_map(|&r| ACTIONS.map(|a| r + grid_effect_kw(battery, a)))
        .filter(|&c| c >= cap_floor)
        .collect();
    caps.sort_by(|a, b| a.abs().total_cmp(&b.abs()).then(a.total_cmp(b)));
    caps.dedup();

    // Caps are visited by increasing peak cost, so the first cap whose bound
    // cannot beat the incumbent ends the search. Batches run in parallel.
    const BATCH: usize = 64;
    for chunk in caps.chunks(BATCH) {
        if energy_floor + peak_cost(chunk[0]) >= best_cost {
            break;
        }
        let results: Vec<Option<f64>> = chunk
            .par_iter()
            .map(|&c| {
                if energy_floor + peak_cost(c) >= best_cost {
                    return None;
                }
                dp.solve(Some(c), false).map(|(e, _)| e + peak_cost(c))
            })
            .collect();
        for (&c, r) in chunk.iter().zip(results) {
            if let Some(cost) = r {
                if cost < best_cost {
                    best_cost = cost;
                    best_cap = Some(c);
                }
            }
        }
    }

    match best_cap {
        Some(c) => dp
            .solve(Some(c), true)
            .and_then(|(_, a)| a)
            .unwrap_or(hold),
        None => hold,
    }
}

fn plan_from_actions(
    instance_batteries: &[Battery],
    activity_load: &SeriesFrame,
    price: &[f64],
    actions: Vec<Vec<BatteryAction>>,
) -> DispatchPlan {
    let mut load = activity_load.values.clone();
    let mut soc = Vec::with_capacity(actions.len());
    for (battery, a) in instance_batteries.iter().zip(&actions) {
        load = apply_actions(&load, battery, a);
        soc.push(soc_trajectory(battery, a).expect("dispatch produced an off-lattice plan"));
    }
    DispatchPlan {
        cost: dispatch_cost(&load, price),
        actions,
        soc,
        resulting_load: activity_load.with_values(load),
    }
}

/// Coordinate descent over the instance's batteries. Starts from the best
/// single-battery plan (others holding), then re-optimises each battery
/// against the others until a round brings no gain or the round limit.
pub fn optimize_dispatch(instance: &Instance, activity_load: &SeriesFrame) -> DispatchPlan {
    dispatch_batteries(&instance.batteries, activity_load, &instance.price.values)
}

pub fn dispatch_batteries(batteries: &[Battery], activity_load: &SeriesFrame, price: &[f64]) -> DispatchPlan {
    let n = activity_load.len();
    let load = &activity_load.values;
    let hold = vec![BatteryAction::Hold; n];
    let mut actions = vec![hold.clone(); batteries.len()];
    let mut best = dispatch_cost(load, price);

    let mut effects: Vec<Vec<f64>> = vec![vec![0.0; n]; batteries.len()];
    let effect_of = |b: &Battery, a: &[BatteryAction]| -> Vec<f64> {
        a.iter().map(|&x| grid_effect_kw(b, x)).collect()
    };

    let mut start: Option<(usize, Vec<BatteryAction>, f64)> = None;
    for (b, battery) in batteries.iter().enumerate() {
        let a = single_battery_best_response(battery, load, price);
        let cost = dispatch_cost(&apply_actions(load, battery, &a), price);
        if cost < best && start.as_ref().map_or(true, |s| cost < s.2) {
            start = Some((b, a, cost));
        }
    }
    if let Some((b, a, cost)) = start {
        effects[b] = effect_of(&batteries[b], &a);
        actions[b] = a;
        best = cost;
    }

    if batteries.len() > 1 {
        for _ in 0..MAX_COORDINATE_ROUNDS {
            let mut improved = false;
            for (b, battery) in batteries.iter().enumerate() {
                let residual: Vec<f64> = (0..n)
                    .map(|t| {
                        load[t]
                            + effects
                                .iter()
                                .enumerate()
                                .filter(|&(j, _)| j != b)
                                .map(|(_, e)| e[t])
                                .sum::<f64>()
                    })
                    .collect();
                let a = single_battery_best_response(battery, &residual, price);
                let cost = dispatch_cost(&apply_actions(&residual, battery, &a), price);
                if cost < best {
                    best = cost;
                    effects[b] = effect_of(battery, &a);
                    actions[b] = a;
                    improved = true;
                }
            }
            if !improved {
                break;
            }
        }
    }

    plan_from_actions(batteries, activity_load, price, actions)
}

/// Exhaustive joint enumeration; the verification oracle for short
/// horizons. Returns the optimal actions and their energy plus peak cost.
pub fn brute_force_dispatch(
    batteries: &[Battery],
    load: &[f64],
    price: &[f64],
) -> Result<(Vec<Vec<BatteryAction>>, f64)> {
    let t_len = load.len();
    if t_len > BRUTE_FORCE_MAX_SLOTS {
        return Err(Error::OracleTooLarge(format!(
            "{t_len} slots exceeds the limit of {BRUTE_FORCE_MAX_SLOTS}"
        )));
    }
    let nb = batteries.len();
    let total = 3usize.pow((nb * t_len) as u32);
    let mut best_cost = f64::INFINITY;
    let mut best_code = 0usize;
    let mut soc = vec![0i64; nb];
    let mut slot_load = vec![0.0; t_len];
    'outer: for code in 0..total {
        soc.iter_mut().for_each(|s| *s = 0);
        let mut c = code;
        for t in 0..t_len {
            slot_load[t] = load[t];
            for (b, battery) in batteries.iter().enumerate() {
                let a = [BatteryAction::Discharge, BatteryAction::Hold, BatteryAction::Charge][c % 3];
                c /= 3;
                soc[b] += a.soc_delta();
                if soc[b] < 0 || soc[b] > battery.soc_levels() as i64 {
                    continue 'outer;
                }
                slot_load[t] += grid_effect_kw(battery, a);
            }
        }
        let mut energy = 0.0;
        let mut peak = f64::NEG_INFINITY;
        for t in 0..t_len {
            energy += 0.25 * slot_load[t] * price[t] / 1000.0;
            peak = peak.max(slot_load[t]);
        }
        let cost = energy + 0.005 * peak * peak;
        if cost < best_cost {
            best_cost = cost;
            best_code = code;
        }
    }
    let mut actions = vec![Vec::with_capacity(t_len); nb];
    let mut c = best_code;
    for _ in 0..t_len {
        for a in actions.iter_mut() {
            a.push([BatteryAction::Discharge, BatteryAction::Hold, BatteryAction::Charge][c % 3]);
            c /= 3;
        }
    }
    Ok((actions, best_cost))
}
