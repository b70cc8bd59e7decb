use serde::{Deserialize, Serialize};

use crate::error::{config, Result};

/// Evenly spaced nodes on `[min, max]`, both endpoints included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, count: usize) -> Result<Self> {
        if !(min.is_finite() && max.is_finite()) || min >= max {
            return config(format!("axis bounds must satisfy min < max, got [{min}, {max}]"));
        }
        if count < 2 {
            return config(format!("axis needs at least 2 nodes, got {count}"));
        }
        Ok(Self { min, max, count })
    }

    pub fn step(&self) -> f64 {
        (self.max - self.min) / (self.count - 1) as f64
    }

    pub fn coord(&self, i: usize) -> f64 {
        if i + 1 == self.count {
            self.max
        } else {
            self.min + i as f64 * self.step()
        }
    }

    /// Index of the nearest node. Out-of-range values clamp to the end nodes;
    /// exact midpoints go to the lower index.
    pub fn nearest(&self, x: f64) -> usize {
        let t = (x - self.min) / self.step();
        if !(t > 0.0) {
            return 0;
        }
        let i = (t - 0.5).ceil();
        if i >= (self.count - 1) as f64 {
            self.count - 1
        } else {
            i as usize
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.min && x <= self.max
    }
}

/// Rectangular state discretization, stored row-major with the last axis
/// varying fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateGrid {
    axes: Vec<Axis>,
}

impl StateGrid {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() {
            return config("state grid needs at least one axis");
        }
        for a in &axes {
            Axis::new(a.min, a.max, a.count)?;
        }
        Ok(Self { axes })
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.count).product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        debug_assert_eq!(multi.len(), self.axes.len());
        multi
            .iter()
            .zip(&self.axes)
            .fold(0, |acc, (&i, a)| acc * a.count + i)
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut out = vec![0; self.axes.len()];
        for (slot, a) in out.iter_mut().zip(&self.axes).rev() {
            *slot = flat % a.count;
            flat /= a.count;
        }
        out
    }

    pub fn coords(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .into_iter()
            .zip(&self.axes)
            .map(|(i, a)| a.coord(i))
            .collect()
    }

    /// Nearest node in normalized axis units. On a rectangular grid this is
    /// the per-axis nearest node.
    pub fn snap(&self, x: &[f64]) -> usize {
        let multi: Vec<usize> = x.iter().zip(&self.axes).map(|(&v, a)| a.nearest(v)).collect();
        self.flat_index(&multi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlGrid {
    /// Tensor grid of evenly spaced controls.
    Axes(Vec<Axis>),
    /// Explicit control vectors.
    List(Vec<Vec<f64>>),
}

impl ControlGrid {
    pub fn uniform(min: f64, max: f64, count: usize) -> Result<Self> {
        if count == 1 {
            if !(min.is_finite() && max.is_finite()) || min > max {
                return config("control bounds must satisfy min <= max");
            }
            return Ok(Self::List(vec![vec![(min + max) / 2.0]]));
        }
        Ok(Self::Axes(vec![Axis::new(min, max, count)?]))
    }

    pub fn list(controls: Vec<Vec<f64>>) -> Result<Self> {
        if controls.is_empty() {
            return config("control list is empty");
        }
        let dim = controls[0].len();
        if controls.iter().any(|c| c.len() != dim || c.iter().any(|v| !v.is_finite())) {
            return config("control vectors must be finite and share one dimension");
        }
        Ok(Self::List(controls))
    }

    pub fn controls(&self) -> Vec<Vec<f64>> {
        match self {
            Self::List(c) => c.clone(),
            Self::Axes(axes) => {
                let grid = StateGrid { axes: axes.clone() };
                (0..grid.len()).map(|i| grid.coords(i)).collect()
            }
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Self::List(c) => c.len(),
            Self::Axes(axes) => axes.iter().map(|a| a.count).product(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::List(c) => c.first().map_or(0, Vec::len),
            Self::Axes(axes) => axes.len(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_rejects_degenerate_bounds() {
        assert!(Axis::new(1.0, 1.0, 5).is_err());
        assert!(Axis::new(0.0, 1.0, 1).is_err());
        assert!(Axis::new(f64::NAN, 1.0, 3).is_err());
    }

    #[test]
    fn endpoints_are_exact() {
        let a = Axis::new(-5.0, 7.0, 301).unwrap();
        assert_eq!(a.coord(0), -5.0);
        assert_eq!(a.coord(300), 7.0);
        assert_eq!(a.nearest(0.0), 125);
    }

    #[test]
    fn midpoint_ties_go_low() {
        let a = Axis::new(0.0, 1.0, 3).unwrap();
        assert_eq!(a.nearest(0.25), 0);
        assert_eq!(a.nearest(0.2500001), 1);
        assert_eq!(a.nearest(-3.0), 0);
        assert_eq!(a.nearest(9.0), 2);
    }

    #[test]
    fn row_major_last_axis_fastest() {
        let g = StateGrid::new(vec![Axis::new(0.0, 1.0, 2).unwrap(), Axis::new(0.0, 2.0, 3).unwrap()])
            .unwrap();
        assert_eq!(g.len(), 6);
        assert_eq!(g.coords(1), vec![0.0, 1.0]);
        assert_eq!(g.coords(3), vec![1.0, 0.0]);
        assert_eq!(g.multi_index(5), vec![1, 2]);
    }

    #[test]
    fn eleven_controls_include_zero() {
        let cg = ControlGrid::uniform(-1.0, 1.0, 11).unwrap();
        let c = cg.controls();
        assert_eq!(c.len(), 11);
        assert!(c.iter().any(|u| u[0].abs() < 1e-15));
        assert_eq!(c[0], vec![-1.0]);
        assert_eq!(c[10], vec![1.0]);
    }

    #[test]
    fn empty_control_list_is_rejected() {
        assert!(ControlGrid::list(vec![]).is_err());
    }
}
