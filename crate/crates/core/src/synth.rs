//! Seeded synthetic instances shaped like a November month on a campus.

use chrono::{Datelike, NaiveDate, Timelike};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;

use crate::instance::{
    Activity, ActivityKind, Battery, Building, Horizon, Instance, SizeClass, SLOTS_PER_DAY,
};
use crate::series::SeriesFrame;

const DAYS: usize = 30;
const MAX_TIER: usize = 4;

/// Generates an instance of the given size. The same `(size, seed)` always
/// yields the same instance.
pub fn generate_synthetic_instance(size: SizeClass, seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0000_0000 ^ size as u64);
    let (n_recurring, n_once_off) = size.activity_counts();
    let scale = (n_recurring as f64 / 50.0).max(1.0);

    let start = NaiveDate::from_ymd_opt(2020, 11, 1)
        .expect("valid date")
        .and_hms_opt(0, 0, 0)
        .expect("valid time");
    let first_weekday = start.weekday().num_days_from_monday() as usize;
    let horizon = Horizon {
        n_slots: DAYS * SLOTS_PER_DAY,
        first_weekday,
        working_start_slot_of_day: 36,
        working_end_slot_of_day: 68,
        first_monday_day_index: (7 - first_weekday) % 7,
    };

    let n_buildings = if size == SizeClass::Small { 4 } else { 8 };
    let target_rooms = (14.0 * scale) as usize;
    let mut buildings: Vec<Building> = (0..n_buildings)
        .map(|id| Building {
            id: id as u32,
            n_rooms: target_rooms / n_buildings,
        })
        .collect();
    for b in buildings.iter_mut().take(target_rooms % n_buildings) {
        b.n_rooms += 1;
    }

    let batteries = (0..2)
        .map(|id| {
            let max_power_kw = 25.0 * rng.gen_range(2..=6) as f64 * scale.sqrt();
            Battery {
                id: id as u32,
                capacity_kwh: rng.gen_range(8..=24) as f64 * 0.25 * max_power_kw,
                max_power_kw,
                efficiency: rng.gen_range(0.85..0.97),
            }
        })
        .collect();

    let n = n_recurring + n_once_off;
    let kinds: Vec<ActivityKind> = (0..n)
        .map(|i| if i < n_recurring { ActivityKind::Recurring } else { ActivityKind::OnceOff })
        .collect();
    let tier: Vec<usize> = (0..n)
        .map(|_| {
            let u: f64 = rng.gen();
            match u {
                u if u < 0.55 => 0,
                u if u < 0.75 => 1,
                u if u < 0.88 => 2,
                u if u < 0.96 => 3,
                _ => MAX_TIER,
            }
        })
        .collect();

    let mut activities = Vec::with_capacity(n);
    for i in 0..n {
        let recurring = kinds[i] == ActivityKind::Recurring;
        let mut precedences = Vec::new();
        if tier[i] > 0 {
            // Edges only run to a strictly lower tier, and never from a
            // once-off activity to a recurring one.
            let pool: Vec<usize> = (0..n)
                .filter(|&j| {
                    tier[j] < tier[i] && !(kinds[j] == ActivityKind::OnceOff && recurring)
                })
                .collect();
            if !pool.is_empty() {
                let k = rng.gen_range(1..=2).min(pool.len());
                let at_chain_depth: Vec<usize> =
                    pool.iter().copied().filter(|&j| tier[j] + 1 == tier[i]).collect();
                if !at_chain_depth.is_empty() {
                    precedences.push(at_chain_depth[rng.gen_range(0..at_chain_depth.len())] as u32);
                }
                while precedences.len() < k {
                    let j = pool[rng.gen_range(0..pool.len())] as u32;
                    if !precedences.contains(&j) {
                        precedences.push(j);
                    }
                }
                precedences.sort_unstable();
            }
        }
        let duration_slots = if recurring { rng.gen_range(2..=8) } else { rng.gen_range(2..=12) };
        let n_rooms = rng.gen_range(1..=3);
        let power_kw = (rng.gen_range(5.0..25.0) * n_rooms as f64 * 10.0).round() / 10.0;
        let (value, penalty) = if recurring {
            (0.0, 0.0)
        } else {
            let value: f64 = (rng.gen_range(80.0..600.0_f64)).round();
            let penalty = (value * rng.gen_range(0.6..1.6_f64)).round();
            (value, penalty)
        };
        activities.push(Activity {
            id: i as u32,
            kind: kinds[i],
            power_kw,
            duration_slots,
            n_rooms,
            value,
            penalty,
            precedences,
        });
    }

    let (price, base_load) = series(&mut rng, start, &horizon, scale);
    Instance::new(horizon, buildings, batteries, activities, price, base_load)
        .expect("generated instances satisfy every invariant")
}

fn series(
    rng: &mut ChaCha8Rng,
    start: chrono::NaiveDateTime,
    horizon: &Horizon,
    scale: f64,
) -> (SeriesFrame, SeriesFrame) {
    let price_noise = Normal::new(0.0, 12.0).expect("valid normal");
    let load_noise = Normal::new(0.0, 15.0 * scale.sqrt()).expect("valid normal");
    let mut price = Vec::with_capacity(horizon.n_slots);
    let mut load = Vec::with_capacity(horizon.n_slots);
    let mut price_walk = 0.0;
    let mut load_walk = 0.0;
    for t in 0..horizon.n_slots {
        let ts = start + chrono::Duration::minutes(15 * t as i64);
        let hour = ts.hour() as f64 + ts.minute() as f64 / 60.0;
        let weekday = horizon.weekday_of_day(t / SLOTS_PER_DAY);
        let weekend = weekday >= 5;
        let tau = std::f64::consts::TAU;

        // Morning and evening price peaks with a solar dip at midday.
        let daily = 18.0 * (-(hour - 8.0).powi(2) / 4.0).exp() + 28.0 * (-(hour - 18.5).powi(2) / 5.0).exp()
            - 22.0 * (-(hour - 13.0).powi(2) / 6.0).exp();
        price_walk = 0.97 * price_walk + rng.sample(price_noise) * 0.3;
        let p = 55.0 + daily + if weekend { -8.0 } else { 0.0 } + price_walk + 0.5 * rng.sample(price_noise);
        price.push((p * 100.0).round() / 100.0);

        // Occupancy-driven load, lower at weekends, minus a solar bell.
        let occupancy = if weekend {
            0.15
        } else {
            (1.0 / (1.0 + (-(hour - 7.5) * 2.0).exp())) * (1.0 / (1.0 + ((hour - 18.0) * 1.5).exp()))
        };
        let solar = 120.0 * (tau * (hour - 6.0) / 24.0).sin().max(0.0).powi(2);
        load_walk = 0.98 * load_walk + rng.sample(load_noise) * 0.2;
        let l = scale * (330.0 + 320.0 * occupancy - solar * 0.6) + load_walk + 0.5 * rng.sample(load_noise);
        load.push((l * 100.0).round() / 100.0);
    }
    (
        SeriesFrame::new(start, price).expect("finite prices"),
        SeriesFrame::new(start, load).expect("finite loads"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::precedence::compute_levels;

    #[test]
    fn counts_and_depth() {
        for (size, seed) in [(SizeClass::Small, 1), (SizeClass::Large, 7)] {
            let inst = generate_synthetic_instance(size, seed);
            assert_eq!(inst.size_class(), Some(size));
            let info = compute_levels(&inst).unwrap();
            assert!(info.level.iter().all(|&l| l <= MAX_TIER));
            for &k in inst.recurring() {
                assert!(!info.allowed_weekdays(k).is_empty());
            }
            for b in &inst.batteries {
                let k = b.capacity_kwh / (0.25 * b.max_power_kw);
                assert!((k - k.round()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn deterministic() {
        let a = generate_synthetic_instance(SizeClass::Small, 1);
        let b = generate_synthetic_instance(SizeClass::Small, 1);
        assert_eq!(a, b);
        let c = generate_synthetic_instance(SizeClass::Small, 2);
        assert_ne!(a, c);
    }
}
