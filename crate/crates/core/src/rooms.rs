//! Per-slot room occupancy over the global room pool.

use std::ops::Range;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Occupancy {
    n_rooms: usize,
    words: usize,
    bits: Vec<u64>,
}

impl Occupancy {
    pub fn new(n_slots: usize, n_rooms: usize) -> Self {
        let words = n_rooms.div_ceil(64).max(1);
        Occupancy {
            n_rooms,
            words,
            bits: vec![0; n_slots * words],
        }
    }

    pub fn n_rooms(&self) -> usize {
        self.n_rooms
    }

    fn row(&self, slot: usize) -> &[u64] {
        &self.bits[slot * self.words..(slot + 1) * self.words]
    }

    /// Lowest-id `count` rooms free over every slot of `ranges`.
    pub fn find_rooms(&self, ranges: &[Range<usize>], count: usize) -> Option<Vec<usize>> {
        if count > self.n_rooms {
            return None;
        }
        let mut busy = vec![0u64; self.words];
        for range in ranges {
            for slot in range.clone() {
                for (b, w) in busy.iter_mut().zip(self.row(slot)) {
                    *b |= w;
                }
            }
        }
        let mut rooms = Vec::with_capacity(count);
        for (wi, &b) in busy.iter().enumerate() {
            let mut free = !b;
            while free != 0 && rooms.len() < count {
                let bit = free.trailing_zeros() as usize;
                let room = wi * 64 + bit;
                if room >= self.n_rooms {
                    return None;
                }
                rooms.push(room);
                free &= free - 1;
            }
            if rooms.len() == count {
                return Some(rooms);
            }
        }
        None
    }

    pub fn occupy(&mut self, ranges: &[Range<usize>], rooms: &[usize]) {
        self.set(ranges, rooms, true);
    }

    pub fn release(&mut self, ranges: &[Range<usize>], rooms: &[usize]) {
        self.set(ranges, rooms, false);
    }

    fn set(&mut self, ranges: &[Range<usize>], rooms: &[usize], on: bool) {
        for range in ranges {
            for slot in range.clone() {
                let base = slot * self.words;
                for &r in rooms {
                    let w = &mut self.bits[base + r / 64];
                    if on {
                        *w |= 1 << (r % 64);
                    } else {
                        *w &= !(1 << (r % 64));
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn picks_lowest_free_rooms() {
        let mut occ = Occupancy::new(4, 3);
        assert_eq!(occ.find_rooms(&[0..2], 2), Some(vec![0, 1]));
        occ.occupy(&[1..2], &[0]);
        assert_eq!(occ.find_rooms(&[0..2], 2), Some(vec![1, 2]));
        assert_eq!(occ.find_rooms(&[0..2], 3), None);
        assert_eq!(occ.find_rooms(&[2..4], 3), Some(vec![0, 1, 2]));
        occ.release(&[1..2], &[0]);
        assert_eq!(occ.find_rooms(&[0..4], 3), Some(vec![0, 1, 2]));
    }

    #[test]
    fn spans_multiple_words() {
        let mut occ = Occupancy::new(1, 130);
        let all: Vec<usize> = (0..128).collect();
        occ.occupy(&[0..1], &all);
        assert_eq!(occ.find_rooms(&[0..1], 2), Some(vec![128, 129]));
        assert_eq!(occ.find_rooms(&[0..1], 3), None);
        assert_eq!(Occupancy::new(1, 0).find_rooms(&[0..1], 1), None);
    }
}
