use serde::{Deserialize, Serialize};

/// Finite union of closed intervals, kept sorted and disjoint.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IntervalSet {
    intervals: Vec<(f64, f64)>,
}

impl IntervalSet {
    pub fn empty() -> Self {
        IntervalSet::default()
    }

    pub fn point(x: f64) -> Self {
        Self::new(vec![(x, x)])
    }

    pub fn interval(lo: f64, hi: f64) -> Self {
        Self::new(vec![(lo, hi)])
    }

    /// Normalizes arbitrary intervals: reorders endpoints, sorts and merges overlaps.
    pub fn new(mut raw: Vec<(f64, f64)>) -> Self {
        raw.retain(|(a, b)| a.is_finite() && b.is_finite());
        for iv in raw.iter_mut() {
            if iv.0 > iv.1 {
                *iv = (iv.1, iv.0);
            }
        }
        raw.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut out: Vec<(f64, f64)> = Vec::with_capacity(raw.len());
        for (a, b) in raw {
            match out.last_mut() {
                Some(last) if a <= last.1 => last.1 = last.1.max(b),
                _ => out.push((a, b)),
            }
        }
        IntervalSet { intervals: out }
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn measure(&self) -> f64 {
        self.intervals.iter().map(|(a, b)| b - a).sum()
    }

    pub fn bounds(&self) -> Option<(f64, f64)> {
        Some((self.intervals.first()?.0, self.intervals.last()?.1))
    }

    pub fn contains(&self, x: f64) -> bool {
        self.intervals.iter().any(|&(a, b)| a <= x && x <= b)
    }

    /// Distance from `x` to the set (`∞` when empty).
    pub fn distance_to(&self, x: f64) -> f64 {
        self.intervals
            .iter()
            .map(|&(a, b)| if x < a { a - x } else if x > b { x - b } else { 0.0 })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn union(&self, other: &Self) -> Self {
        Self::new(self.intervals.iter().chain(&other.intervals).copied().collect())
    }

    pub fn intersect(&self, lo: f64, hi: f64) -> Self {
        Self::new(
            self.intervals
                .iter()
                .filter_map(|&(a, b)| {
                    let (a, b) = (a.max(lo), b.min(hi));
                    (a <= b).then_some((a, b))
                })
                .collect(),
        )
    }

    /// `[lo, hi]` minus the set (as closures of the gaps; degenerate gaps dropped).
    pub fn complement_within(&self, lo: f64, hi: f64) -> Self {
        let mut out = Vec::new();
        let mut cursor = lo;
        for &(a, b) in &self.intervals {
            if b < lo || a > hi {
                continue;
            }
            if a > cursor {
                out.push((cursor, a.min(hi)));
            }
            cursor = cursor.max(b);
        }
        if cursor < hi {
            out.push((cursor, hi));
        }
        Self::new(out)
    }

    /// Enlarges each interval by `delta` on both sides.
    pub fn fatten(&self, delta: f64) -> Self {
        Self::new(self.intervals.iter().map(|&(a, b)| (a - delta, b + delta)).collect())
    }

    /// Every interval of `self` lies inside some interval of `other`, up to `tol`.
    pub fn is_subset_of(&self, other: &Self, tol: f64) -> bool {
        self.intervals
            .iter()
            .all(|&(a, b)| other.intervals.iter().any(|&(c, d)| c - tol <= a && b <= d + tol))
    }

    /// The widest interval, if any.
    pub fn widest(&self) -> Option<(f64, f64)> {
        self.intervals.iter().copied().max_by(|x, y| (x.1 - x.0).total_cmp(&(y.1 - y.0)))
    }
}
