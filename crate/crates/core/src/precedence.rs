//! Precedence levels over the activity DAG.
//!
//! An edge `p -> a` means `p` must occur at least one calendar day before
//! `a`. The level of an activity is the length of the longest predecessor
//! chain ending at it (the minimum number of days that must precede it);
//! the level-after is the longest successor chain starting at it.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::instance::{Instance, WORKING_WEEKDAYS};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrecedenceInfo {
    ids: Vec<u32>,
    /// Indexed like `Instance::activities`.
    pub level: Vec<usize>,
    pub level_after: Vec<usize>,
    /// Activity indices sorted by ascending level, ties by ascending id.
    pub by_level: Vec<usize>,
}

impl PrecedenceInfo {
    pub fn level_of(&self, id: u32) -> Option<usize> {
        self.ids.iter().position(|&x| x == id).map(|k| self.level[k])
    }

    pub fn level_after_of(&self, id: u32) -> Option<usize> {
        self.ids
            .iter()
            .position(|&x| x == id)
            .map(|k| self.level_after[k])
    }

    /// Weekdays (Monday = 0) on which recurring activity `k` can be placed
    /// without making some precedence chain through it unplaceable.
    pub fn allowed_weekdays(&self, k: usize) -> Vec<usize> {
        weekday_window(self.level[k], self.level_after[k])
    }
}

/// `{x, x+1, ..., 4-y}`: the working week with the first `x` and last `y`
/// days removed. Empty when `x + y > 4`.
pub fn weekday_window(level: usize, level_after: usize) -> Vec<usize> {
    if level + level_after >= WORKING_WEEKDAYS {
        return Vec::new();
    }
    (level..WORKING_WEEKDAYS - level_after).collect()
}

/// Kahn's algorithm; ties resolved by smallest index. On a cycle returns
/// `Err` with one node that lies on or behind it.
pub fn topological_order(
    preds: &[Vec<usize>],
    succs: &[Vec<usize>],
) -> std::result::Result<Vec<usize>, usize> {
    let n = preds.len();
    let mut indegree: Vec<usize> = preds.iter().map(Vec::len).collect();
    let mut queue: VecDeque<usize> = (0..n).filter(|&k| indegree[k] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(k) = queue.pop_front() {
        order.push(k);
        for &s in &succs[k] {
            indegree[s] -= 1;
            if indegree[s] == 0 {
                queue.push_back(s);
            }
        }
    }
    if order.len() == n {
        Ok(order)
    } else {
        Err((0..n).find(|&k| indegree[k] > 0).unwrap_or(0))
    }
}

pub fn compute_levels(instance: &Instance) -> Result<PrecedenceInfo> {
    let preds = instance.pred_lists();
    let succs = instance.succ_lists();
    let order = topological_order(preds, succs)
        .map_err(|k| Error::PrecedenceCycle(instance.activities[k].id))?;

    let n = preds.len();
    let mut level = vec![0usize; n];
    for &k in &order {
        level[k] = preds[k].iter().map(|&p| level[p] + 1).max().unwrap_or(0);
    }
    let mut level_after = vec![0usize; n];
    for &k in order.iter().rev() {
        level_after[k] = succs[k]
            .iter()
            .map(|&s| level_after[s] + 1)
            .max()
            .unwrap_or(0);
    }

    let ids: Vec<u32> = instance.activities.iter().map(|a| a.id).collect();
    let mut by_level: Vec<usize> = (0..n).collect();
    by_level.sort_by_key(|&k| (level[k], ids[k]));
    Ok(PrecedenceInfo {
        ids,
        level,
        level_after,
        by_level,
    })
}
