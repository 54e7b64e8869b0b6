//! Shared domain types and the global time-grid conventions.
//!
//! Every timestamp snaps to a grid anchored at `t = 0` with spacing
//! [`FrameConfig::dt`], so fragments seen by different cameras share frame
//! indices. Positions are in feet, times in seconds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default frame period: 25 Hz.
pub const DEFAULT_DT: f64 = 0.04;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameConfig {
    pub dt: f64,
}

impl Default for FrameConfig {
    fn default() -> Self {
        Self { dt: DEFAULT_DT }
    }
}

impl FrameConfig {
    pub fn new(dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Config(format!("frame period must be positive, got {dt}")));
        }
        Ok(Self { dt })
    }

    /// Global grid index of a timestamp.
    pub fn frame_index(&self, t: f64) -> i64 {
        (t / self.dt).round() as i64
    }

    pub fn frame_time(&self, index: i64) -> f64 {
        index as f64 * self.dt
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(t: f64, x: f64, y: f64) -> Self {
        Self { t, x, y }
    }
}

/// Travel direction along the roadway x-axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum Direction {
    #[default]
    Forward,
    Backward,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        }
    }

    pub fn from_sign(sign: i64) -> Option<Self> {
        match sign {
            1 => Some(Direction::Forward),
            -1 => Some(Direction::Backward),
            _ => None,
        }
    }

    pub fn as_i8(self) -> i8 {
        match self {
            Direction::Forward => 1,
            Direction::Backward => -1,
        }
    }
}

/// A time-ordered run of positions produced by upstream tracking.
#[derive(Debug, Clone, PartialEq)]
pub struct Fragment {
    pub id: String,
    pub points: Vec<Point>,
    pub length: f64,
    pub width: f64,
    pub direction: Direction,
    /// Source ground-truth id, when known (benchmark provenance).
    pub gt_id: Option<String>,
}

impl Fragment {
    /// Builds a fragment, checking the structural invariants: nonempty,
    /// strictly increasing finite timestamps, finite positions, positive
    /// dimensions.
    pub fn new(
        id: impl Into<String>,
        points: Vec<Point>,
        length: f64,
        width: f64,
        direction: Direction,
    ) -> Result<Self> {
        let id = id.into();
        let invalid = |reason: String| Error::InvalidFragment { id: id.clone(), reason };
        if points.is_empty() {
            return Err(invalid("no points".into()));
        }
        if !(length > 0.0 && width > 0.0) {
            return Err(invalid(format!("dimensions must be positive ({length} x {width})")));
        }
        for (k, p) in points.iter().enumerate() {
            if !(p.t.is_finite() && p.x.is_finite() && p.y.is_finite()) || p.t < 0.0 {
                return Err(invalid(format!("point {k} is not finite or has negative time")));
            }
            if k > 0 && p.t <= points[k - 1].t {
                return Err(invalid(format!("timestamps not strictly increasing at point {k}")));
            }
        }
        Ok(Self { id, points, length, width, direction, gt_id: None })
    }

    pub fn with_gt_id(mut self, gt_id: impl Into<String>) -> Self {
        self.gt_id = Some(gt_id.into());
        self
    }

    pub fn t_start(&self) -> f64 {
        self.points[0].t
    }

    pub fn t_end(&self) -> f64 {
        self.points[self.points.len() - 1].t
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Checks that every timestamp gap is an integer multiple of the frame
    /// period, within a quarter frame.
    pub fn check_frame_aligned(&self, frame: &FrameConfig) -> Result<()> {
        for w in self.points.windows(2) {
            let steps = (w[1].t - w[0].t) / frame.dt;
            if (steps - steps.round()).abs() > 0.25 || steps.round() < 1.0 {
                return Err(Error::InvalidFragment {
                    id: self.id.clone(),
                    reason: format!("gap {} s is not a multiple of {} s", w[1].t - w[0].t, frame.dt),
                });
            }
        }
        Ok(())
    }
}

/// A reconciled per-vehicle trajectory on a uniform grid.
///
/// Derivative series shrink by one sample per order: `vx` has `N-1`
/// entries, `ax` `N-2`, `jx` `N-3`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub id: String,
    pub fragment_ids: Vec<String>,
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub vx: Vec<f64>,
    pub vy: Vec<f64>,
    pub ax: Vec<f64>,
    pub ay: Vec<f64>,
    pub jx: Vec<f64>,
    pub jy: Vec<f64>,
    pub theta: Vec<f64>,
    /// Recovered outliers on observed indices.
    pub ex: Vec<f64>,
    pub ey: Vec<f64>,
    pub length: f64,
    pub width: f64,
    pub direction: Direction,
    /// False when the grid was too short to solve and positions were passed
    /// through.
    pub solved: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn t_start(&self) -> f64 {
        self.t.first().copied().unwrap_or(f64::NAN)
    }
}

/// Positions sampled on the global grid between the first and last input
/// timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSeries {
    /// Global index of the first grid sample.
    pub start_index: i64,
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub observed: Vec<bool>,
}

impl GridSeries {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Grid positions of observed samples, increasing.
    pub fn observed_indices(&self) -> Vec<usize> {
        self.observed.iter().enumerate().filter(|(_, &o)| o).map(|(i, _)| i).collect()
    }
}

/// Snaps time-ordered points onto the global grid.
///
/// Unfilled grid entries keep position `NaN` and are flagged unobserved.
pub fn resample_to_grid(points: &[Point], dt: f64) -> Result<GridSeries> {
    let frame = FrameConfig::new(dt)?;
    if points.is_empty() {
        return Ok(GridSeries { start_index: 0, t: vec![], x: vec![], y: vec![], observed: vec![] });
    }
    let first = frame.frame_index(points[0].t);
    let last = frame.frame_index(points[points.len() - 1].t);
    if last < first {
        return Err(Error::InvalidProblem("points are not time-ordered".into()));
    }
    let n = (last - first + 1) as usize;
    let mut grid = GridSeries {
        start_index: first,
        t: (0..n).map(|i| frame.frame_time(first + i as i64)).collect(),
        x: vec![f64::NAN; n],
        y: vec![f64::NAN; n],
        observed: vec![false; n],
    };
    for p in points {
        let index = frame.frame_index(p.t);
        let slot = index - first;
        if slot < 0 || slot >= n as i64 {
            return Err(Error::InvalidProblem("points are not time-ordered".into()));
        }
        let slot = slot as usize;
        if grid.observed[slot] {
            return Err(Error::DuplicateFrame { t: p.t, index });
        }
        grid.observed[slot] = true;
        grid.x[slot] = p.x;
        grid.y[slot] = p.y;
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(ts: &[f64]) -> Vec<Point> {
        ts.iter().enumerate().map(|(i, &t)| Point::new(t, i as f64, -(i as f64))).collect()
    }

    #[test]
    fn uniform_points_fill_grid() {
        let g = resample_to_grid(&pts(&[0.0, 0.04, 0.08]), 0.04).unwrap();
        assert_eq!(g.len(), 3);
        assert!(g.observed.iter().all(|&o| o));
    }

    #[test]
    fn gap_leaves_unobserved_frames() {
        let g = resample_to_grid(&pts(&[0.0, 0.12]), 0.04).unwrap();
        assert_eq!(g.observed, vec![true, false, false, true]);
        assert!(g.x[1].is_nan());
    }

    #[test]
    fn nearest_index_snapping() {
        assert!(resample_to_grid(&pts(&[0.0, 0.039]), 0.04).is_ok());
        let err = resample_to_grid(&pts(&[0.0, 0.01]), 0.04).unwrap_err();
        assert!(err.to_string().contains("duplicate frame"));
    }

    #[test]
    fn grid_is_globally_anchored() {
        let g = resample_to_grid(&pts(&[1.0, 1.08]), 0.04).unwrap();
        assert_eq!(g.start_index, 25);
        assert!((g.t[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fragment_rejects_bad_input() {
        assert!(Fragment::new("a", vec![], 15.0, 6.0, Direction::Forward).is_err());
        let back = vec![Point::new(1.0, 0.0, 0.0), Point::new(0.5, 1.0, 0.0)];
        assert!(Fragment::new("a", back, 15.0, 6.0, Direction::Forward).is_err());
        let ok = vec![Point::new(0.0, 0.0, 0.0)];
        assert!(Fragment::new("a", ok.clone(), 0.0, 6.0, Direction::Forward).is_err());
        assert!(Fragment::new("a", ok, 15.0, 6.0, Direction::Forward).is_ok());
    }

    #[test]
    fn frame_alignment_check() {
        let f = Fragment::new("a", pts(&[0.0, 0.08, 0.12]), 15.0, 6.0, Direction::Forward).unwrap();
        assert!(f.check_frame_aligned(&FrameConfig::default()).is_ok());
        let f = Fragment::new("a", pts(&[0.0, 0.06]), 15.0, 6.0, Direction::Forward).unwrap();
        assert!(f.check_frame_aligned(&FrameConfig::default()).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn observed_entries_read_back(
                steps in proptest::collection::vec(1u32..6, 1..40),
                start in 0u32..1000,
                xs in proptest::collection::vec(-1e4f64..1e4, 40),
            ) {
                let dt = 0.04;
                let mut idx = start as i64;
                let mut points = vec![Point::new(idx as f64 * dt, xs[0], 1.0)];
                for (k, s) in steps.iter().enumerate() {
                    idx += *s as i64;
                    points.push(Point::new(idx as f64 * dt, xs[k + 1], -2.0));
                }
                let g = resample_to_grid(&points, dt).unwrap();
                let expected_len =
                    ((points.last().unwrap().t - points[0].t) / dt).round() as usize + 1;
                prop_assert_eq!(g.len(), expected_len);
                let observed = g.observed_indices();
                prop_assert_eq!(observed.len(), points.len());
                for (slot, p) in observed.iter().zip(&points) {
                    prop_assert_eq!(g.x[*slot], p.x);
                    prop_assert_eq!(g.y[*slot], p.y);
                }
            }
        }
    }
}
