//! Observation on `(0, T) × E` with `E` a finite union of closed intervals.
//!
//! Noise is complex Gaussian: real and imaginary parts are independent
//! `N(0, 1/2)`, drawn from ChaCha8 seeded with `seed_from_u64(seed)` in
//! row-major (time, node) order and scaled by `noise_level · max|y|`.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::forward::{SpaceTimeField, TimeGrid};
use crate::spectral::Grid1D;
use crate::{Error, Result, C64};

/// Slack for deciding whether a node lies on an interval endpoint.
const ENDPOINT_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationMask {
    intervals: Vec<(f64, f64)>,
    /// 0-based indices into the interior state vector.
    indices: Vec<usize>,
    measure: f64,
    grid: Grid1D,
}

impl ObservationMask {
    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// Node numbers `j` (1-based, `x_j = j·h`).
    pub fn node_numbers(&self) -> Vec<usize> {
        self.indices.iter().map(|i| i + 1).collect()
    }

    pub fn measure(&self) -> f64 {
        self.measure
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn restrict(&self, row: &[C64]) -> Vec<C64> {
        self.indices.iter().map(|&i| row[i]).collect()
    }

    /// Discrete `L²(E)` norm with the interior weight `h`.
    pub fn norm(&self, restricted: &[C64]) -> f64 {
        (restricted.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.spacing()).sqrt()
    }
}

/// Nodes `x_j` with `lo ≤ x_j ≤ hi` for some interval.
pub fn make_mask(intervals: &[(f64, f64)], grid: &Grid1D) -> Result<ObservationMask> {
    if intervals.is_empty() {
        return Err(Error::EmptyMask);
    }
    let l = grid.length();
    for &(lo, hi) in intervals {
        if !(lo >= 0.0 && lo < hi && hi <= l) {
            return Err(Error::invalid("mask", format!("interval ({lo}, {hi}) not inside [0, {l}] with lo < hi")));
        }
    }
    let mut sorted = intervals.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    for w in sorted.windows(2) {
        if w[1].0 <= w[0].1 {
            return Err(Error::OverlappingIntervals(w[0].0, w[0].1, w[1].0, w[1].1));
        }
    }
    let slack = ENDPOINT_SLACK * l;
    let indices: Vec<usize> = (0..grid.len())
        .filter(|&i| {
            let x = grid.node(i);
            sorted.iter().any(|&(lo, hi)| x >= lo - slack && x <= hi + slack)
        })
        .collect();
    if indices.is_empty() {
        return Err(Error::EmptyMask);
    }
    Ok(ObservationMask {
        measure: sorted.iter().map(|(lo, hi)| hi - lo).sum(),
        intervals: sorted,
        indices,
        grid: *grid,
    })
}

/// Field restricted to the mask, possibly with noise. Row `k` is `t_{k+1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedData {
    values: Vec<Vec<C64>>,
    mask: ObservationMask,
    time: TimeGrid,
    noise_level: f64,
    seed: u64,
}

impl ObservedData {
    /// Wrap externally supplied measurements.
    pub fn new(values: Vec<Vec<C64>>, mask: ObservationMask, time: TimeGrid, noise_level: f64, seed: u64) -> Result<Self> {
        Error::check_len("observed time rows", time.len(), values.len())?;
        for row in &values {
            Error::check_len("observed columns", mask.len(), row.len())?;
        }
        if values.iter().flatten().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::NonFinite {
                context: "observed data".into(),
            });
        }
        Ok(Self {
            values,
            mask,
            time,
            noise_level,
            seed,
        })
    }

    pub fn values(&self) -> &[Vec<C64>] {
        &self.values
    }

    pub fn mask(&self) -> &ObservationMask {
        &self.mask
    }

    pub fn time(&self) -> &TimeGrid {
        &self.time
    }

    pub fn noise_level(&self) -> f64 {
        self.noise_level
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Row-major `(time, node)` flattening.
    pub fn flatten(&self) -> Vec<C64> {
        self.values.iter().flatten().copied().collect()
    }

    /// `Σ_i Δt ‖d(t_i)‖²_{L²(E),h}`.
    pub fn norm_sq(&self) -> f64 {
        let w = self.time.dt() * self.mask.grid().spacing();
        self.values.iter().flatten().map(|v| v.norm_sqr()).sum::<f64>() * w
    }

    /// CSV with header `t,x,re,im`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,x,re,im\n");
        let grid = self.mask.grid();
        for (k, row) in self.values.iter().enumerate() {
            let t = self.time.time(k);
            for (&i, v) in self.mask.indices().iter().zip(row) {
                let _ = writeln!(out, "{t:?},{:?},{:?},{:?}", grid.node(i), v.re, v.im);
            }
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "time": self.time,
            "grid": self.mask.grid(),
            "intervals": self.mask.intervals(),
            "nodes": self.mask.node_numbers(),
            "noise_level": self.noise_level,
            "seed": self.seed,
            "values": self.values.iter().flatten().flat_map(|v| [v.re, v.im]).collect::<Vec<f64>>(),
        })
    }
}

/// Restrict `field` to `mask` and add noise of relative size `noise_level`.
pub fn observe(field: &SpaceTimeField, mask: &ObservationMask, noise_level: f64, seed: u64) -> Result<ObservedData> {
    if field.grid() != mask.grid() {
        return Err(Error::invalid("mask", "mask and field were built on different grids"));
    }
    if !(noise_level >= 0.0 && noise_level.is_finite()) {
        return Err(Error::invalid("noise_level", format!("{noise_level} must be >= 0")));
    }
    let mut values: Vec<Vec<C64>> = field.values().iter().map(|row| mask.restrict(row)).collect();
    if noise_level > 0.0 {
        let scale = noise_level * field.max_abs() * std::f64::consts::FRAC_1_SQRT_2;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in values.iter_mut().flatten() {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            *v += C64::new(re, im) * scale;
        }
    }
    ObservedData::new(values, mask.clone(), *field.time(), noise_level, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid9() -> Grid1D {
        Grid1D::new(1.0, 9).unwrap()
    }

    #[test]
    fn mask_examples() {
        let g = grid9();
        let m = make_mask(&[(0.2, 0.4)], &g).unwrap();
        assert_eq!(m.node_numbers(), vec![2, 3, 4]);
        assert!((m.measure() - 0.2).abs() < 1e-15);
        let full = make_mask(&[(0.0, 1.0)], &g).unwrap();
        assert_eq!(full.len(), 9);
        assert_eq!(full.measure(), 1.0);
        assert_eq!(make_mask(&[(0.21, 0.29)], &g).unwrap_err(), Error::EmptyMask);
        assert!(matches!(make_mask(&[(0.1, 0.5), (0.4, 0.6)], &g), Err(Error::OverlappingIntervals(..))));
        assert!(make_mask(&[(0.5, 0.4)], &g).is_err());
        assert!(make_mask(&[(0.5, 1.2)], &g).is_err());
    }

    #[test]
    fn noiseless_observation_selects_columns() {
        let g = grid9();
        let tg = TimeGrid::new(1.0, 3).unwrap();
        let values: Vec<Vec<C64>> = (0..3).map(|k| (0..9).map(|j| C64::new(k as f64, j as f64)).collect()).collect();
        let field = SpaceTimeField::new(tg, g, vec![C64::new(0.0, 0.0); 9], values).unwrap();
        let m = make_mask(&[(0.2, 0.4), (0.75, 0.85)], &g).unwrap();
        let d = observe(&field, &m, 0.0, 1).unwrap();
        assert_eq!(d.values()[2], vec![C64::new(2.0, 1.0), C64::new(2.0, 2.0), C64::new(2.0, 3.0), C64::new(2.0, 7.0)]);
        let zero = observe(&SpaceTimeField::zeros(tg, g), &m, 0.0, 1).unwrap();
        assert!(zero.flatten().iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn noise_is_seeded() {
        let g = grid9();
        let tg = TimeGrid::new(1.0, 4).unwrap();
        let values = vec![vec![C64::new(1.0, 0.0); 9]; 4];
        let field = SpaceTimeField::new(tg, g, vec![C64::new(0.0, 0.0); 9], values).unwrap();
        let m = make_mask(&[(0.0, 1.0)], &g).unwrap();
        let a = observe(&field, &m, 0.01, 42).unwrap();
        let b = observe(&field, &m, 0.01, 42).unwrap();
        let c = observe(&field, &m, 0.01, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.values(), c.values());
        let dev = a.flatten().iter().map(|v| (v - 1.0).norm()).fold(0.0, f64::max);
        assert!(dev > 0.0 && dev < 0.1);
    }
}
