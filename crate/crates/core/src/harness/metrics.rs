//! Coverage of the ball's reachable space and per-trial summaries.

use crate::imgep::ExplorationHistory;
use crate::sim::Point;

pub const GRID_CELLS: usize = 30;

/// 30×30 grid over the ball's `[-1, 1]²` position space.
#[derive(Clone, Debug, PartialEq)]
pub struct CoverageGrid {
    cells: Vec<bool>,
    visited: usize,
}

impl Default for CoverageGrid {
    fn default() -> Self {
        Self { cells: vec![false; GRID_CELLS * GRID_CELLS], visited: 0 }
    }
}

pub fn cell_index(v: f64) -> usize {
    let i = ((v + 1.0) / 2.0 * GRID_CELLS as f64).floor();
    i.clamp(0.0, (GRID_CELLS - 1) as f64) as usize
}

impl CoverageGrid {
    pub fn new() -> Self {
        Self::default()
    }

    /// Marks the cell containing `p`; returns whether it was new.
    pub fn add(&mut self, p: Point) -> bool {
        let idx = cell_index(p[1]) * GRID_CELLS + cell_index(p[0]);
        let fresh = !self.cells[idx];
        if fresh {
            self.cells[idx] = true;
            self.visited += 1;
        }
        fresh
    }

    pub fn visited(&self) -> usize {
        self.visited
    }

    pub fn ratio(&self) -> f64 {
        self.visited as f64 / (GRID_CELLS * GRID_CELLS) as f64
    }

    pub fn is_visited(&self, col: usize, row: usize) -> bool {
        self.cells[row * GRID_CELLS + col]
    }
}

/// Cumulative covered fraction after each of `points`.
pub fn ratio_series<I: IntoIterator<Item = Point>>(points: I) -> Vec<f64> {
    let mut grid = CoverageGrid::new();
    points
        .into_iter()
        .map(|p| {
            grid.add(p);
            grid.ratio()
        })
        .collect()
}

/// Fraction of the grid reached by episode-final ball positions, after each
/// episode. The distractor is ignored.
pub fn exploration_ratio(history: &ExplorationHistory) -> Vec<f64> {
    ratio_series(history.records.iter().map(|r| r.ball()))
}

pub fn grasp_count(history: &ExplorationHistory) -> usize {
    history.records.iter().filter(|r| r.grasped).count()
}

/// Interest of every module after each episode, one series per module.
pub fn interest_series(history: &ExplorationHistory) -> Vec<Vec<f64>> {
    (0..history.modules.len()).map(|k| history.records.iter().map(|r| r.upsilon[k]).collect()).collect()
}

/// Per-index mean and sample standard deviation across equally long series.
pub fn mean_std(series: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = series.len();
    let len = series.iter().map(Vec::len).min().unwrap_or(0);
    let mut mean = vec![0.0; len];
    let mut std = vec![0.0; len];
    if n == 0 {
        return (mean, std);
    }
    for i in 0..len {
        let m = series.iter().map(|s| s[i]).sum::<f64>() / n as f64;
        mean[i] = m;
        if n > 1 {
            std[i] = (series.iter().map(|s| (s[i] - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        }
    }
    (mean, std)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn still_ball_covers_one_cell() {
        let s = ratio_series(std::iter::repeat_n([0.6, 0.6], 20));
        assert!(s.iter().all(|r| *r == 1.0 / 900.0));
    }

    #[test]
    fn distinct_cells_count() {
        let pts: Vec<Point> = (0..7).map(|i| [-0.95 + 0.25 * i as f64, 0.1]).collect();
        let s = ratio_series(pts.clone());
        assert_eq!(*s.last().unwrap(), 7.0 / 900.0);
        assert_eq!(ratio_series(pts.iter().chain(pts.iter()).copied()).last(), Some(&(7.0 / 900.0)));
    }

    #[test]
    fn edges_are_clamped() {
        assert_eq!(cell_index(-1.0), 0);
        assert_eq!(cell_index(1.0), 29);
        assert_eq!(cell_index(0.0), 15);
        assert_eq!(cell_index(-1.0 + 2.0 / 30.0 + 1e-9), 1);
        assert_eq!(cell_index(-1.0 + 2.0 / 30.0 - 1e-9), 0);
    }

    #[test]
    fn median_and_spread() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        let (m, s) = mean_std(&[vec![1.0, 2.0], vec![3.0, 2.0]]);
        assert_eq!(m, vec![2.0, 2.0]);
        assert!((s[0] - 2f64.sqrt()).abs() < 1e-12 && s[1] == 0.0);
    }

    proptest! {
        #[test]
        fn ratio_is_monotone_and_bounded(pts in prop::collection::vec((-1.0f64..=1.0, -1.0f64..=1.0), 1..400)) {
            let s = ratio_series(pts.iter().map(|(x, y)| [*x, *y]));
            prop_assert_eq!(s.len(), pts.len());
            for w in s.windows(2) {
                prop_assert!(w[1] >= w[0]);
            }
            prop_assert!(s.iter().all(|r| *r > 0.0 && *r <= 1.0));
        }
    }
}
