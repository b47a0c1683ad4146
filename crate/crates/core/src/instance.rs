//! Problem data model: horizon calendar, buildings, batteries, activities and
//! the price/base-load series, plus the JSON instance file format.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use chrono::{Datelike, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::precedence;
use crate::series::SeriesFrame;

pub const SLOTS_PER_DAY: usize = 96;
pub const WORKING_WEEKDAYS: usize = 5;
pub const RECURRING_WEEKS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Horizon {
    pub n_slots: usize,
    /// Weekday of slot 0, Monday = 0.
    pub first_weekday: usize,
    pub working_start_slot_of_day: usize,
    pub working_end_slot_of_day: usize,
    pub first_monday_day_index: usize,
}

impl Horizon {
    pub fn slots_per_day(&self) -> usize {
        SLOTS_PER_DAY
    }

    pub fn n_days(&self) -> usize {
        self.n_slots / SLOTS_PER_DAY
    }

    pub fn day_of_slot(&self, slot: usize) -> usize {
        slot / SLOTS_PER_DAY
    }

    pub fn slot_of_day(&self, slot: usize) -> usize {
        slot % SLOTS_PER_DAY
    }

    pub fn weekday_of_day(&self, day: usize) -> usize {
        (self.first_weekday + day) % 7
    }

    pub fn is_working_day(&self, day: usize) -> bool {
        self.weekday_of_day(day) < WORKING_WEEKDAYS
    }

    /// Working day and inside `[working_start, working_end)`.
    pub fn is_working_slot(&self, slot: usize) -> bool {
        let sod = self.slot_of_day(slot);
        self.is_working_day(self.day_of_slot(slot))
            && sod >= self.working_start_slot_of_day
            && sod < self.working_end_slot_of_day
    }

    pub fn working_slots_per_day(&self) -> usize {
        self.working_end_slot_of_day - self.working_start_slot_of_day
    }

    /// Day index of the first weekly occurrence of a recurring activity.
    pub fn recurring_first_day(&self, weekday: usize) -> usize {
        self.first_monday_day_index + weekday
    }

    pub fn recurring_days(&self, weekday: usize) -> [usize; RECURRING_WEEKS] {
        let d = self.recurring_first_day(weekday);
        [d, d + 7, d + 14, d + 21]
    }

    pub fn last_day(&self) -> usize {
        self.n_days() - 1
    }

    fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Validation(m));
        if self.n_slots == 0 || self.n_slots % SLOTS_PER_DAY != 0 {
            return fail(format!(
                "horizon n_slots = {} must be positive and divisible by {SLOTS_PER_DAY}",
                self.n_slots
            ));
        }
        if self.working_start_slot_of_day >= self.working_end_slot_of_day
            || self.working_end_slot_of_day > SLOTS_PER_DAY
        {
            return fail(format!(
                "working hours [{}, {}) are not a non-empty window of the day",
                self.working_start_slot_of_day, self.working_end_slot_of_day
            ));
        }
        if self.first_weekday >= 7 || self.first_monday_day_index >= 7 {
            return fail("first_weekday and first_monday_day_index must be < 7".into());
        }
        if (self.first_weekday + self.first_monday_day_index) % 7 != 0 {
            return fail(format!(
                "first_monday_day_index {} is inconsistent with first_weekday {}",
                self.first_monday_day_index, self.first_weekday
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Building {
    pub id: u32,
    pub n_rooms: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Battery {
    pub id: u32,
    pub capacity_kwh: f64,
    pub max_power_kw: f64,
    pub efficiency: f64,
}

impl Battery {
    /// Energy moved in or out of storage by one full-power slot.
    pub fn step_kwh(&self) -> f64 {
        0.25 * self.max_power_kw
    }

    /// Number of full-power charge steps that fit in the capacity.
    pub fn soc_levels(&self) -> usize {
        // Tolerate capacities written as k * step with rounding noise.
        (self.capacity_kwh / self.step_kwh() + 1e-9).floor() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivityKind {
    Recurring,
    OnceOff,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Activity {
    pub id: u32,
    pub kind: ActivityKind,
    /// Total draw while running, not per room.
    pub power_kw: f64,
    pub duration_slots: usize,
    pub n_rooms: usize,
    #[serde(default)]
    pub value: f64,
    #[serde(default)]
    pub penalty: f64,
    /// Activities that must occur at least one day earlier.
    #[serde(default)]
    pub precedences: Vec<u32>,
}

impl Activity {
    pub fn is_recurring(&self) -> bool {
        self.kind == ActivityKind::Recurring
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeClass {
    Small,
    Large,
}

impl SizeClass {
    pub fn activity_counts(self) -> (usize, usize) {
        match self {
            SizeClass::Small => (50, 20),
            SizeClass::Large => (200, 100),
        }
    }
}

impl std::str::FromStr for SizeClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "small" => Ok(SizeClass::Small),
            "large" => Ok(SizeClass::Large),
            other => Err(Error::Config(format!("unknown instance size `{other}`"))),
        }
    }
}

/// A validated problem instance. Construct through [`Instance::new`] or
/// [`parse_instance`]; the derived indices are kept consistent with
/// `activities`.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub horizon: Horizon,
    pub buildings: Vec<Building>,
    pub batteries: Vec<Battery>,
    pub activities: Vec<Activity>,
    /// Electricity price per slot, $/MWh.
    pub price: SeriesFrame,
    /// Building consumption minus solar per slot, kW.
    pub base_load: SeriesFrame,
    index_of: HashMap<u32, usize>,
    recurring: Vec<usize>,
    once_off: Vec<usize>,
    kind_pos: Vec<usize>,
    preds: Vec<Vec<usize>>,
    succs: Vec<Vec<usize>>,
    total_rooms: usize,
}

impl Instance {
    pub fn new(
        horizon: Horizon,
        mut buildings: Vec<Building>,
        batteries: Vec<Battery>,
        activities: Vec<Activity>,
        price: SeriesFrame,
        base_load: SeriesFrame,
    ) -> Result<Self> {
        let fail = |m: String| Err(Error::Validation(m));
        horizon.validate()?;

        buildings.sort_by_key(|b| b.id);
        if buildings.windows(2).any(|w| w[0].id == w[1].id) {
            return fail("duplicate building id".into());
        }

        let mut battery_ids = HashSet::new();
        for b in &batteries {
            if !battery_ids.insert(b.id) {
                return fail(format!("duplicate battery id {}", b.id));
            }
            if !(b.capacity_kwh.is_finite() && b.capacity_kwh > 0.0) {
                return fail(format!("battery {}: capacity_kwh must be > 0", b.id));
            }
            if !(b.max_power_kw.is_finite() && b.max_power_kw > 0.0) {
                return fail(format!("battery {}: max_power_kw must be > 0", b.id));
            }
            if !(b.efficiency > 0.0 && b.efficiency <= 1.0) {
                return fail(format!("battery {}: efficiency must be in (0, 1]", b.id));
            }
        }

        let mut index_of = HashMap::with_capacity(activities.len());
        for (k, a) in activities.iter().enumerate() {
            if index_of.insert(a.id, k).is_some() {
                return fail(format!("duplicate activity id {}", a.id));
            }
            if a.duration_slots == 0 {
                return fail(format!("activity {}: duration_slots must be >= 1", a.id));
            }
            if a.n_rooms == 0 {
                return fail(format!("activity {}: n_rooms must be >= 1", a.id));
            }
            if !(a.power_kw.is_finite() && a.power_kw >= 0.0) {
                return fail(format!("activity {}: power_kw must be >= 0", a.id));
            }
            if !(a.value.is_finite() && a.value >= 0.0 && a.penalty.is_finite() && a.penalty >= 0.0)
            {
                return fail(format!("activity {}: value and penalty must be >= 0", a.id));
            }
        }

        let mut preds = vec![Vec::new(); activities.len()];
        let mut succs = vec![Vec::new(); activities.len()];
        for (k, a) in activities.iter().enumerate() {
            for p in &a.precedences {
                let Some(&pk) = index_of.get(p) else {
                    return fail(format!("activity {}: unknown precedence id {p}", a.id));
                };
                if pk == k {
                    return Err(Error::PrecedenceCycle(a.id));
                }
                if !preds[k].contains(&pk) {
                    preds[k].push(pk);
                    succs[pk].push(k);
                }
            }
        }
        for list in preds.iter_mut().chain(succs.iter_mut()) {
            list.sort_unstable();
        }
        if let Err(k) = precedence::topological_order(&preds, &succs) {
            return Err(Error::PrecedenceCycle(activities[k].id));
        }

        let recurring: Vec<usize> = (0..activities.len())
            .filter(|&k| activities[k].is_recurring())
            .collect();
        let once_off: Vec<usize> = (0..activities.len())
            .filter(|&k| !activities[k].is_recurring())
            .collect();
        if !recurring.is_empty()
            && horizon.recurring_first_day(WORKING_WEEKDAYS - 1) + 7 * (RECURRING_WEEKS - 1)
                >= horizon.n_days()
        {
            return fail(format!(
                "horizon of {} days cannot hold {RECURRING_WEEKS} weeks of recurring activities \
                 from day {}",
                horizon.n_days(),
                horizon.first_monday_day_index
            ));
        }

        for (name, series) in [("price", &price), ("base_load", &base_load)] {
            series.validate()?;
            if series.len() != horizon.n_slots {
                return fail(format!(
                    "{name} series has {} values, horizon has {} slots",
                    series.len(),
                    horizon.n_slots
                ));
            }
        }
        if price.start != base_load.start {
            return fail("price and base_load series start at different timestamps".into());
        }
        if price.start.time().num_seconds_from_midnight() != 0 {
            return fail("series must start at midnight".into());
        }
        let start_weekday = price.start.weekday().num_days_from_monday() as usize;
        if start_weekday != horizon.first_weekday {
            return fail(format!(
                "series start is weekday {start_weekday}, horizon first_weekday is {}",
                horizon.first_weekday
            ));
        }

        let mut kind_pos = vec![0; activities.len()];
        for list in [&recurring, &once_off] {
            for (pos, &k) in list.iter().enumerate() {
                kind_pos[k] = pos;
            }
        }

        let total_rooms = buildings.iter().map(|b| b.n_rooms).sum();
        Ok(Instance {
            horizon,
            buildings,
            batteries,
            activities,
            price,
            base_load,
            index_of,
            recurring,
            once_off,
            kind_pos,
            preds,
            succs,
            total_rooms,
        })
    }

    /// Copy of this instance with a different base-load series (e.g. a
    /// forecast or the realised load).
    pub fn with_base_load(&self, base_load: SeriesFrame) -> Result<Instance> {
        Instance::new(
            self.horizon,
            self.buildings.clone(),
            self.batteries.clone(),
            self.activities.clone(),
            self.price.clone(),
            base_load,
        )
    }

    pub fn index_of(&self, id: u32) -> Option<usize> {
        self.index_of.get(&id).copied()
    }

    /// Indices into `activities` of the recurring activities, in file order.
    pub fn recurring(&self) -> &[usize] {
        &self.recurring
    }

    pub fn once_off(&self) -> &[usize] {
        &self.once_off
    }

    /// Position of activity `k` within `recurring()` or `once_off()`.
    pub fn position_in_kind(&self, k: usize) -> usize {
        self.kind_pos[k]
    }

    /// Direct predecessors of activity `k`, as activity indices.
    pub fn preds(&self, k: usize) -> &[usize] {
        &self.preds[k]
    }

    pub fn succs(&self, k: usize) -> &[usize] {
        &self.succs[k]
    }

    pub(crate) fn pred_lists(&self) -> &[Vec<usize>] {
        &self.preds
    }

    pub(crate) fn succ_lists(&self) -> &[Vec<usize>] {
        &self.succs
    }

    /// Rooms form one global pool numbered by building id order.
    pub fn total_rooms(&self) -> usize {
        self.total_rooms
    }

    pub fn size_class(&self) -> Option<SizeClass> {
        match (self.recurring.len(), self.once_off.len()) {
            (50, 20) => Some(SizeClass::Small),
            (200, 100) => Some(SizeClass::Large),
            _ => None,
        }
    }

    /// Writes the instance JSON plus `<stem>_price.csv` and
    /// `<stem>_base_load.csv` next to it.
    pub fn write(&self, json_path: &Path) -> Result<()> {
        let stem = json_path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("instance")
            .to_string();
        let dir = json_path.parent().unwrap_or(Path::new(""));
        let price_name = format!("{stem}_price.csv");
        let load_name = format!("{stem}_base_load.csv");
        self.price.write_csv(&dir.join(&price_name))?;
        self.base_load.write_csv(&dir.join(&load_name))?;
        let file = InstanceFile {
            horizon: self.horizon,
            buildings: self.buildings.clone(),
            batteries: self.batteries.clone(),
            activities: self.activities.clone(),
            price_csv: price_name,
            base_load_csv: load_name,
        };
        let text = serde_json::to_string_pretty(&file).map_err(|e| Error::Json {
            path: json_path.to_path_buf(),
            source: e,
        })?;
        std::fs::write(json_path, text).map_err(|e| Error::io(json_path, e))
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    horizon: Horizon,
    buildings: Vec<Building>,
    batteries: Vec<Battery>,
    activities: Vec<Activity>,
    /// Relative paths resolve against the JSON file's directory.
    price_csv: String,
    base_load_csv: String,
}

pub fn parse_instance(path: &Path) -> Result<Instance> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: InstanceFile = serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    let dir = path.parent().unwrap_or(Path::new(""));
    let resolve = |p: &str| -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            dir.join(p)
        }
    };
    let price = SeriesFrame::read_csv(&resolve(&file.price_csv))?;
    let base_load = SeriesFrame::read_csv(&resolve(&file.base_load_csv))?;
    Instance::new(
        file.horizon,
        file.buildings,
        file.batteries,
        file.activities,
        price,
        base_load,
    )
}
