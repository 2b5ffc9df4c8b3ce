use serde::{Deserialize, Serialize};

/// One closed piece `[lo, hi]`; `lo` may be `-inf` and `hi` may be `+inf`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub lo: f64,
    pub hi: f64,
}

impl Piece {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }
}

/// A union of disjoint closed intervals on the real line at miscoverage `delta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionInterval {
    pieces: Vec<Piece>,
    pub delta: f64,
}

impl PredictionInterval {
    /// Sorts and merges overlapping or touching pieces.
    pub fn new(mut pieces: Vec<Piece>, delta: f64) -> Self {
        pieces.retain(|p| p.lo <= p.hi);
        pieces.sort_by(|a, b| a.lo.total_cmp(&b.lo));
        let mut merged: Vec<Piece> = Vec::with_capacity(pieces.len());
        for p in pieces {
            match merged.last_mut() {
                Some(last) if p.lo <= last.hi => last.hi = last.hi.max(p.hi),
                _ => merged.push(p),
            }
        }
        PredictionInterval { pieces: merged, delta }
    }

    pub fn empty(delta: f64) -> Self {
        PredictionInterval {
            pieces: Vec::new(),
            delta,
        }
    }

    pub fn single(lo: f64, hi: f64, delta: f64) -> Self {
        Self::new(vec![Piece { lo, hi }], delta)
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn total_width(&self) -> f64 {
        self.pieces.iter().map(Piece::width).sum()
    }

    pub fn is_unbounded(&self) -> bool {
        self.pieces
            .iter()
            .any(|p| p.lo == f64::NEG_INFINITY || p.hi == f64::INFINITY)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.pieces.iter().any(|p| p.contains(x))
    }

    /// Lowest and highest finite-or-infinite endpoints.
    pub fn hull(&self) -> Option<Piece> {
        Some(Piece {
            lo: self.pieces.first()?.lo,
            hi: self.pieces.last()?.hi,
        })
    }

    /// Intersection with `[lo, hi]`.
    pub fn clip(&self, lo: f64, hi: f64) -> Self {
        let pieces = self
            .pieces
            .iter()
            .filter_map(|p| {
                let a = p.lo.max(lo);
                let b = p.hi.min(hi);
                (a <= b).then_some(Piece { lo: a, hi: b })
            })
            .collect();
        PredictionInterval {
            pieces,
            delta: self.delta,
        }
    }

    /// Every piece of `self` lies inside some piece of `other`.
    pub fn is_subset_of(&self, other: &PredictionInterval, tol: f64) -> bool {
        self.pieces.iter().all(|p| {
            other
                .pieces
                .iter()
                .any(|q| p.lo >= q.lo - tol && p.hi <= q.hi + tol)
        })
    }

    /// Same interval shifted by `c`.
    pub fn shifted(&self, c: f64) -> Self {
        PredictionInterval {
            pieces: self
                .pieces
                .iter()
                .map(|p| Piece {
                    lo: p.lo + c,
                    hi: p.hi + c,
                })
                .collect(),
            delta: self.delta,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merges_and_measures() {
        let pi = PredictionInterval::new(
            vec![
                Piece { lo: 2.0, hi: 3.0 },
                Piece { lo: 0.0, hi: 1.0 },
                Piece { lo: 0.5, hi: 1.5 },
            ],
            0.1,
        );
        assert_eq!(pi.pieces().len(), 2);
        assert!((pi.total_width() - 2.5).abs() < 1e-15);
        assert!(pi.contains(1.5) && pi.contains(2.0) && !pi.contains(1.75));
    }

    #[test]
    fn clipping_unbounded() {
        let pi = PredictionInterval::new(
            vec![
                Piece { lo: f64::NEG_INFINITY, hi: -1.0 },
                Piece { lo: 1.0, hi: f64::INFINITY },
            ],
            0.1,
        );
        assert!(pi.is_unbounded());
        let c = pi.clip(-2.0, 3.0);
        assert!(!c.is_unbounded());
        assert!((c.total_width() - 3.0).abs() < 1e-15);
    }
}
