//! Schedule cost and forecast-error metrics.
//!
//! The cost of a schedule with total load `l_t` (kW) and price `e_t`
//! ($/MWh) over the horizon is
//!
//! ```text
//! O = sum_t 0.25 * l_t * e_t / 1000  +  0.005 * (max_t l_t)^2
//!     - sum_i d_i * (value_i - o_i * penalty_i)
//! ```
//!
//! where the last sum runs over once-off activities, `d_i` marks a scheduled
//! activity and `o_i` one that leaves working hours.

use serde::{Deserialize, Serialize};

use crate::battery::grid_effect_kw;
use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::schedule::{recurring_ranges, Schedule};
use crate::series::SeriesFrame;

pub const SLOT_HOURS: f64 = 0.25;
pub const PEAK_TARIFF: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub energy_cost: f64,
    pub peak_cost: f64,
    pub once_off_reward: f64,
    pub total: f64,
    pub peak_kw: f64,
}

/// `l_t` for the given base load: base plus running activities plus battery
/// grid effects.
pub fn total_load(instance: &Instance, base_load: &[f64], schedule: &Schedule) -> Vec<f64> {
    let mut load = base_load.to_vec();
    add_activity_load(instance, schedule, &mut load);
    for (b, battery) in instance.batteries.iter().enumerate() {
        if let Some(actions) = schedule.battery_actions.get(b) {
            for (l, &a) in load.iter_mut().zip(actions) {
                *l += grid_effect_kw(battery, a);
            }
        }
    }
    load
}

pub(crate) fn add_activity_load(instance: &Instance, schedule: &Schedule, load: &mut [f64]) {
    for (k, a) in instance.activities.iter().enumerate() {
        if a.power_kw == 0.0 {
            continue;
        }
        let pos = instance.position_in_kind(k);
        if a.is_recurring() {
            let r = &schedule.recurring[pos];
            for range in recurring_ranges(instance, r.weekday, r.start_slot_of_day, a.duration_slots) {
                for l in &mut load[range] {
                    *l += a.power_kw;
                }
            }
        } else {
            let o = &schedule.once_off[pos];
            if o.scheduled {
                for l in &mut load[o.start_slot..o.start_slot + a.duration_slots] {
                    *l += a.power_kw;
                }
            }
        }
    }
}

pub fn total_load_series(instance: &Instance, schedule: &Schedule) -> SeriesFrame {
    instance
        .base_load
        .with_values(total_load(instance, &instance.base_load.values, schedule))
}

pub fn energy_cost(load: &[f64], price: &[f64]) -> f64 {
    let n = load.len().min(price.len());
    let (load, price) = (&load[..n], &price[..n]);
    let mut acc = [0.0; 4];
    let mut l4 = load.chunks_exact(4);
    let mut e4 = price.chunks_exact(4);
    for (l, e) in (&mut l4).zip(&mut e4) {
        for i in 0..4 {
            acc[i] += l[i] * e[i];
        }
    }
    let tail: f64 = l4.remainder().iter().zip(e4.remainder()).map(|(l, e)| l * e).sum();
    SLOT_HOURS * ((acc[0] + acc[1]) + (acc[2] + acc[3]) + tail) / 1000.0
}

/// Peak of the load; `-inf` for an empty series.
pub fn peak_kw(load: &[f64]) -> f64 {
    let mut acc = [f64::NEG_INFINITY; 4];
    let mut l4 = load.chunks_exact(4);
    for l in &mut l4 {
        for i in 0..4 {
            acc[i] = if l[i] > acc[i] { l[i] } else { acc[i] };
        }
    }
    l4.remainder()
        .iter()
        .copied()
        .chain(acc)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// The square is charged even when the peak is negative.
pub fn peak_cost(peak_kw: f64) -> f64 {
    PEAK_TARIFF * peak_kw * peak_kw
}

pub fn once_off_reward(instance: &Instance, schedule: &Schedule) -> f64 {
    instance
        .once_off()
        .iter()
        .enumerate()
        .filter(|&(pos, _)| schedule.once_off[pos].scheduled)
        .map(|(pos, &k)| {
            let a = &instance.activities[k];
            if schedule.outside_working_hours(instance, pos) {
                a.value - a.penalty
            } else {
                a.value
            }
        })
        .sum()
}

pub fn schedule_cost(instance: &Instance, schedule: &Schedule, load: &SeriesFrame) -> CostBreakdown {
    cost_of_load(instance, schedule, &load.values)
}

pub fn cost_of_load(instance: &Instance, schedule: &Schedule, load: &[f64]) -> CostBreakdown {
    let energy = energy_cost(load, &instance.price.values);
    let peak = if load.is_empty() { 0.0 } else { peak_kw(load) };
    let peak_cost = peak_cost(peak);
    let reward = once_off_reward(instance, schedule);
    CostBreakdown {
        energy_cost: energy,
        peak_cost,
        once_off_reward: reward,
        total: energy + peak_cost - reward,
        peak_kw: peak,
    }
}

/// Total load and cost of `schedule` against `base_load`.
pub fn evaluate(instance: &Instance, base_load: &[f64], schedule: &Schedule) -> CostBreakdown {
    let load = total_load(instance, base_load, schedule);
    cost_of_load(instance, schedule, &load)
}

/// Mean absolute scaled error of `forecast` against `actual`, scaled by the
/// in-sample seasonal-naive error of `training` with period `season`.
pub fn mase(forecast: &[f64], actual: &[f64], training: &[f64], season: usize) -> Result<f64> {
    if forecast.len() != actual.len() || forecast.is_empty() {
        return Err(Error::Mase(format!(
            "forecast ({}) and actual ({}) must have the same non-zero length",
            forecast.len(),
            actual.len()
        )));
    }
    if season == 0 || training.len() <= season {
        return Err(Error::Mase(format!(
            "training length {} must exceed the season length {season}",
            training.len()
        )));
    }
    let h = forecast.len() as f64;
    let m = training.len();
    let numerator: f64 = forecast.iter().zip(actual).map(|(f, y)| (f - y).abs()).sum();
    let seasonal: f64 = (season..m)
        .map(|k| (training[k] - training[k - season]).abs())
        .sum();
    let denominator = h / (m - season) as f64 * seasonal;
    if denominator == 0.0 {
        return Err(Error::Mase(
            "training series has zero seasonal differences".into(),
        ));
    }
    Ok(numerator / denominator)
}

pub fn mase_series(
    forecast: &SeriesFrame,
    actual: &SeriesFrame,
    training: &SeriesFrame,
    season: usize,
) -> Result<f64> {
    mase(&forecast.values, &actual.values, &training.values, season)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_case_single_slot() {
        let energy = energy_cost(&[100.0], &[50.0]);
        assert_eq!(energy, 1.25);
        assert_eq!(peak_cost(100.0), 50.0);
        assert_eq!(energy + peak_cost(100.0), 51.25);
    }

    #[test]
    fn negative_peak_is_still_squared() {
        assert_eq!(peak_cost(-20.0), 2.0);
    }

    #[test]
    fn mase_cases() {
        let y = [3.0, 5.0, 4.0];
        let train = [1.0, 2.0, 4.0, 3.0];
        assert_eq!(mase(&y, &y, &train, 1).unwrap(), 0.0);

        let err = mase(&[2.0, 1.0], &[1.0, 2.0], &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0], 2).unwrap_err();
        assert!(matches!(err, Error::Mase(_)));

        assert!(mase(&[1.0], &[1.0, 2.0], &train, 1).is_err());
        assert!(mase(&[1.0], &[1.0], &train, 4).is_err());
    }

    #[test]
    fn mase_hand_value() {
        // in-sample diffs |2-1|,|4-2|,|3-4| = 4 over M-S = 3; h = 2
        // denominator = 2/3 * 4; numerator = 1 + 3
        let m = mase(&[0.0, 0.0], &[1.0, -3.0], &[1.0, 2.0, 4.0, 3.0], 1).unwrap();
        assert!((m - 4.0 / (8.0 / 3.0)).abs() < 1e-12);
    }
}
