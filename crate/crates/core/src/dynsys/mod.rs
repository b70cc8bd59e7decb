//! Dynamical systems, reward scenarios and their discretization into finite
//! deterministic transition tables.
//!
//! Every table carries one extra absorbing sink state. Failure states jump to
//! the sink under every control, so time after failure is accounted for
//! without leaving the finite state space.

mod grid;
mod reward;
mod system;

pub use grid::{Axis, ControlGrid, StateGrid};
pub use reward::RewardSpec;
pub use system::{System, SystemSpec};

use rayon::prelude::*;

use crate::error::{config, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionTable {
    n_controls: usize,
    next: Vec<usize>,
    reward: Vec<f64>,
    failure: Vec<bool>,
    dt: f64,
    grid: Option<StateGrid>,
}

impl TransitionTable {
    /// Builds a table from flat `state * n_controls + control` arrays. The
    /// last state is the sink.
    pub fn from_parts(
        n_controls: usize,
        next: Vec<usize>,
        reward: Vec<f64>,
        failure: Vec<bool>,
        dt: f64,
        grid: Option<StateGrid>,
    ) -> Result<Self> {
        let n = failure.len();
        if n == 0 || n_controls == 0 {
            return config("table needs at least the sink state and one control");
        }
        if next.len() != n * n_controls || reward.len() != n * n_controls {
            return config("transition arrays do not match state and control counts");
        }
        if let Some(g) = &grid {
            if g.len() + 1 != n {
                return config("grid size does not match the table");
            }
        }
        let sink = n - 1;
        if failure[sink] {
            return Err(Error::Invariant("the sink must not be a failure state".into()));
        }
        for s in 0..n {
            for a in 0..n_controls {
                let k = s * n_controls + a;
                if next[k] >= n {
                    return Err(Error::Invariant(format!("successor {} out of range", next[k])));
                }
                if !reward[k].is_finite() {
                    return Err(Error::Invariant(format!("non-finite reward at ({s}, {a})")));
                }
                if (failure[s] || s == sink) && (next[k] != sink || reward[k] != 0.0) {
                    return Err(Error::Invariant(format!(
                        "state {s} must map to the sink with zero reward"
                    )));
                }
            }
        }
        Ok(Self { n_controls, next, reward, failure, dt, grid })
    }

    /// Number of states, sink included.
    pub fn n_states(&self) -> usize {
        self.failure.len()
    }

    pub fn n_controls(&self) -> usize {
        self.n_controls
    }

    pub fn sink(&self) -> usize {
        self.failure.len() - 1
    }

    #[inline]
    pub fn next(&self, s: usize, a: usize) -> usize {
        self.next[s * self.n_controls + a]
    }

    #[inline]
    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_controls + a]
    }

    #[inline]
    pub fn is_failure(&self, s: usize) -> bool {
        self.failure[s]
    }

    pub fn failure_mask(&self) -> &[bool] {
        &self.failure
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn grid(&self) -> Option<&StateGrid> {
        self.grid.as_ref()
    }

    pub fn max_abs_reward(&self) -> f64 {
        self.reward.iter().fold(0.0, |m, r| m.max(r.abs()))
    }
}

/// Discretizes `spec` on `sg x cg`: one hold period from every node under
/// every control, successor snapped to the nearest node.
///
/// Successor states are clamped into the grid box before snapping. A flow
/// that touches the failure set at a substep boundary is stopped there and
/// its successor is a failure node.
pub fn discretize(
    spec: &SystemSpec,
    sg: &StateGrid,
    cg: &ControlGrid,
    rs: &RewardSpec,
) -> Result<TransitionTable> {
    spec.validate()?;
    if matches!(spec.system, System::TwoState) {
        return config("the two-state example is built by two_state_mdp()");
    }
    if sg.dim() != spec.state_dim() {
        return config(format!(
            "state grid has {} axes, system has {} states",
            sg.dim(),
            spec.state_dim()
        ));
    }
    if cg.is_empty() || cg.dim() != 1 {
        return config("systems take a single scalar control");
    }
    let target = match rs {
        RewardSpec::Parsimonious { target } => {
            if target.len() != sg.dim() {
                return config("parsimonious target dimension mismatch");
            }
            Some(sg.snap(target))
        }
        RewardSpec::NegativeProxy { .. } if sg.dim() < 2 => {
            return config("negative-proxy reward needs a velocity axis");
        }
        RewardSpec::Shelf { tau } if !matches!(spec.system, System::Shelf { .. }) || *tau <= 0.0 => {
            return config("shelf reward needs the shelf system and tau > 0");
        }
        _ => None,
    };

    let controls = cg.controls();
    let nc = controls.len();
    let n_nodes = sg.len();
    let sink = n_nodes;
    let failure: Vec<bool> = (0..n_nodes)
        .map(|i| spec.is_failure(&sg.coords(i)))
        .chain(std::iter::once(false))
        .collect();

    let rows: Vec<Result<(Vec<usize>, Vec<f64>)>> = (0..n_nodes)
        .into_par_iter()
        .map(|i| {
            if failure[i] {
                return Ok((vec![sink; nc], vec![0.0; nc]));
            }
            let x = sg.coords(i);
            let mut next = Vec::with_capacity(nc);
            let mut reward = Vec::with_capacity(nc);
            for u in &controls {
                let (mut y, failed) = spec.integrate_hold(&x, u, true)?;
                for (v, axis) in y.iter_mut().zip(sg.axes()) {
                    *v = v.clamp(axis.min, axis.max);
                }
                let mut j = sg.snap(&y);
                if failed && !failure[j] {
                    j = nearest_failure_along_first_axis(sg, &failure, j).ok_or_else(|| {
                        Error::Invariant(format!("no failure node near {y:?}"))
                    })?;
                }
                next.push(j);
                reward.push(rs.evaluate(spec, &x, u, Some(i) == target));
            }
            Ok((next, reward))
        })
        .collect();

    let mut next = Vec::with_capacity((n_nodes + 1) * nc);
    let mut reward = Vec::with_capacity((n_nodes + 1) * nc);
    for row in rows {
        let (n, r) = row?;
        next.extend(n);
        reward.extend(r);
    }
    next.extend(std::iter::repeat_n(sink, nc));
    reward.extend(std::iter::repeat_n(0.0, nc));
    TransitionTable::from_parts(nc, next, reward, failure, spec.dt, Some(sg.clone()))
}

fn nearest_failure_along_first_axis(sg: &StateGrid, failure: &[bool], j: usize) -> Option<usize> {
    let mut multi = sg.multi_index(j);
    let origin = multi[0];
    let count = sg.axes()[0].count;
    for d in 1..count {
        for cand in [origin.checked_sub(d), Some(origin + d).filter(|&c| c < count)]
            .into_iter()
            .flatten()
        {
            multi[0] = cand;
            let k = sg.flat_index(&multi);
            if failure[k] {
                return Some(k);
            }
        }
    }
    None
}

/// The three-node example `{x1, x2, sink}`: `u1` keeps `x1` in place with
/// reward 0, `u2` moves it to the failure state `x2` with reward 1.
pub fn two_state_mdp() -> TransitionTable {
    TransitionTable::from_parts(
        2,
        vec![0, 1, 2, 2, 2, 2],
        vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
        vec![false, true, false],
        1.0,
        None,
    )
    .expect("two-state table is well formed")
}

/// Satellite grid on `[0, 16] x [-5, 7]`.
pub fn satellite_grid(n1: usize, n2: usize) -> Result<StateGrid> {
    StateGrid::new(vec![Axis::new(0.0, 16.0, n1)?, Axis::new(-5.0, 7.0, n2)?])
}
