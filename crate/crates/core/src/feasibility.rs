//! Stand-alone feasibility check of a schedule against an instance.
//!
//! Recomputes everything from the raw instance data instead of going
//! through the repair code, so it can be used to test that code.

use crate::instance::{ActivityKind, Instance, SLOTS_PER_DAY, WORKING_WEEKDAYS};
use crate::schedule::{BatteryAction, Schedule};

/// `Ok(())` if `schedule` satisfies every hard constraint, otherwise a
/// description of the first violation found.
pub fn check_schedule(instance: &Instance, schedule: &Schedule) -> Result<(), String> {
    let h = &instance.horizon;
    let total_rooms: usize = instance.buildings.iter().map(|b| b.n_rooms).sum();
    let mut occupant: Vec<Vec<Option<u32>>> = vec![vec![None; total_rooms]; h.n_slots];
    let mut day: Vec<Option<usize>> = vec![None; instance.activities.len()];

    let recurring: Vec<_> = instance
        .activities
        .iter()
        .filter(|a| a.kind == ActivityKind::Recurring)
        .collect();
    let once_off: Vec<_> = instance
        .activities
        .iter()
        .filter(|a| a.kind == ActivityKind::OnceOff)
        .collect();
    if schedule.recurring.len() != recurring.len() || schedule.once_off.len() != once_off.len() {
        return Err("schedule does not cover the instance's activities".into());
    }

    let mut place = |id: u32, rooms: &[usize], n_rooms: usize, slots: Vec<usize>| {
        if rooms.len() != n_rooms {
            return Err(format!("activity {id}: {} rooms, needs {n_rooms}", rooms.len()));
        }
        for (i, &r) in rooms.iter().enumerate() {
            if r >= total_rooms {
                return Err(format!("activity {id}: room {r} does not exist"));
            }
            if rooms[..i].contains(&r) {
                return Err(format!("activity {id}: room {r} listed twice"));
            }
        }
        for t in slots {
            if t >= h.n_slots {
                return Err(format!("activity {id}: slot {t} beyond the horizon"));
            }
            for &r in rooms {
                if let Some(other) = occupant[t][r] {
                    return Err(format!("activities {other} and {id} share room {r} at slot {t}"));
                }
                occupant[t][r] = Some(id);
            }
        }
        Ok(())
    };

    for (a, r) in recurring.iter().zip(&schedule.recurring) {
        if r.id != a.id {
            return Err(format!("recurring assignment {} out of order", r.id));
        }
        if r.weekday >= WORKING_WEEKDAYS {
            return Err(format!("activity {}: weekday {} is not a working day", a.id, r.weekday));
        }
        if r.start_slot_of_day < h.working_start_slot_of_day
            || r.start_slot_of_day + a.duration_slots > h.working_end_slot_of_day
        {
            return Err(format!("activity {}: outside working hours", a.id));
        }
        let first = h.first_monday_day_index + r.weekday;
        let mut slots = Vec::new();
        for week in 0..4 {
            let d = first + 7 * week;
            if (h.first_weekday + d) % 7 != r.weekday {
                return Err(format!("activity {}: occurrence on the wrong weekday", a.id));
            }
            let s = d * SLOTS_PER_DAY + r.start_slot_of_day;
            slots.extend(s..s + a.duration_slots);
        }
        place(a.id, &r.rooms, a.n_rooms, slots)?;
        day[instance.index_of(a.id).unwrap()] = Some(first);
    }

    for (a, o) in once_off.iter().zip(&schedule.once_off) {
        if o.id != a.id {
            return Err(format!("once-off assignment {} out of order", o.id));
        }
        if !o.scheduled {
            if !o.rooms.is_empty() {
                return Err(format!("activity {}: unscheduled but holds rooms", a.id));
            }
            continue;
        }
        if o.start_slot + a.duration_slots > h.n_slots {
            return Err(format!("activity {}: runs past the horizon", a.id));
        }
        place(
            a.id,
            &o.rooms,
            a.n_rooms,
            (o.start_slot..o.start_slot + a.duration_slots).collect(),
        )?;
        day[instance.index_of(a.id).unwrap()] = Some(o.start_slot / SLOTS_PER_DAY);
    }

    for (k, a) in instance.activities.iter().enumerate() {
        let Some(d) = day[k] else { continue };
        for p in &a.precedences {
            match day[instance.index_of(*p).unwrap()] {
                None => return Err(format!("activity {}: predecessor {p} not scheduled", a.id)),
                Some(pd) if pd >= d => {
                    return Err(format!("activity {}: predecessor {p} is not a day earlier", a.id))
                }
                _ => {}
            }
        }
    }

    if !schedule.battery_actions.is_empty() {
        if schedule.battery_actions.len() != instance.batteries.len() {
            return Err("one action list per battery expected".into());
        }
        for (b, actions) in instance.batteries.iter().zip(&schedule.battery_actions) {
            if actions.is_empty() {
                continue;
            }
            if actions.len() != h.n_slots {
                return Err(format!("battery {}: {} actions for {} slots", b.id, actions.len(), h.n_slots));
            }
            let step = 0.25 * b.max_power_kw;
            let mut soc = 0.0;
            for (t, a) in actions.iter().enumerate() {
                soc += match a {
                    BatteryAction::Charge => step,
                    BatteryAction::Hold => 0.0,
                    BatteryAction::Discharge => -step,
                };
                if soc < -1e-9 || soc > b.capacity_kwh + 1e-9 {
                    return Err(format!("battery {}: state of charge {soc} out of range at slot {t}", b.id));
                }
            }
        }
    }
    Ok(())
}
