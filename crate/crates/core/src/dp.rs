//! Penalized and constrained value iteration, greedy policies and rollouts.
//!
//! The penalized problem replaces the reward by `r - p * [x in X_F]`: the
//! penalty is a function of the visited state. With [`FailureCharge::Once`]
//! it is paid on the single step spent in the failure set before the sink
//! takes over. With [`FailureCharge::Persistent`] the failure set is treated
//! as absorbing and the penalty is paid on every step from failure onwards,
//! which the solver folds into a single charge of `p / (1 - gamma)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynsys::TransitionTable;
use crate::error::{config, Error, Result};
use crate::viability::KernelResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailureCharge {
    Once,
    Persistent,
}

impl FailureCharge {
    /// Discounted cost paid on the step that enters the failure set.
    pub fn effective(self, penalty: f64, gamma: f64) -> f64 {
        match self {
            Self::Once => penalty,
            Self::Persistent => penalty / (1.0 - gamma),
        }
    }

    /// Inverse of [`effective`](Self::effective).
    pub fn penalty_for(self, effective: f64, gamma: f64) -> f64 {
        match self {
            Self::Once => effective,
            Self::Persistent => effective * (1.0 - gamma),
        }
    }
}

impl std::str::FromStr for FailureCharge {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "once" => Ok(Self::Once),
            "persistent" => Ok(Self::Persistent),
            other => config(format!("unknown failure charge '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Penalty {
    pub value: f64,
    pub charge: FailureCharge,
}

impl Penalty {
    pub fn once(value: f64) -> Self {
        Self { value, charge: FailureCharge::Once }
    }

    pub fn persistent(value: f64) -> Self {
        Self { value, charge: FailureCharge::Persistent }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub gamma: f64,
    /// Sup-norm residual at which the iteration stops.
    pub tol: f64,
    pub max_iter: usize,
}

impl SolverSettings {
    pub fn new(gamma: f64) -> Self {
        Self { gamma, tol: 1e-9, max_iter: 10_000 }
    }

    fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return config(format!("gamma must lie in (0, 1), got {}", self.gamma));
        }
        if !(self.tol > 0.0) {
            return config(format!("tolerance must be positive, got {}", self.tol));
        }
        if self.max_iter == 0 {
            return config("max_iter must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValueField {
    /// Per-state values; `NaN` outside the solved domain (constrained fields
    /// are only defined on the viability kernel).
    pub values: Vec<f64>,
    pub gamma: f64,
    pub penalty: f64,
    pub charge: FailureCharge,
    pub tolerance: f64,
    pub iterations: usize,
    pub final_residual: f64,
    pub converged: bool,
    /// Residual after every sweep.
    #[serde(skip)]
    pub residuals: Vec<f64>,
}

impl ValueField {
    pub fn get(&self, s: usize) -> Option<f64> {
        let v = self.values[s];
        (!v.is_nan()).then_some(v)
    }

    pub fn is_constrained(&self) -> bool {
        self.values.iter().any(|v| v.is_nan())
    }

    /// Discounted cost charged on entering the failure set.
    pub fn failure_cost(&self) -> f64 {
        self.charge.effective(self.penalty, self.gamma)
    }

    /// One-step lookahead value of `(s, a)`.
    #[inline]
    pub fn q_value(&self, tt: &TransitionTable, s: usize, a: usize) -> f64 {
        q_value(tt, &self.values, self.gamma, self.failure_cost(), s, a)
    }
}

#[inline]
fn q_value(tt: &TransitionTable, v: &[f64], gamma: f64, cost: f64, s: usize, a: usize) -> f64 {
    let charge = if tt.is_failure(s) { cost } else { 0.0 };
    tt.reward(s, a) - charge + gamma * v[tt.next(s, a)]
}

fn iterate<F>(n: usize, settings: &SolverSettings, domain: &[bool], backup: F) -> (Vec<f64>, Vec<f64>, bool)
where
    F: Fn(&[f64], usize) -> f64 + Sync,
{
    let mut v: Vec<f64> = domain.iter().map(|&d| if d { 0.0 } else { f64::NAN }).collect();
    let mut residuals = Vec::new();
    for _ in 0..settings.max_iter {
        let next: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|s| if domain[s] { backup(&v, s) } else { f64::NAN })
            .collect();
        let residual = next
            .iter()
            .zip(&v)
            .filter(|(a, _)| !a.is_nan())
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        v = next;
        residuals.push(residual);
        if residual <= settings.tol {
            return (v, residuals, true);
        }
    }
    (v, residuals, false)
}

/// Value iteration on the penalized reward. The sink stays pinned at 0.
/// Non-convergence within `max_iter` is reported through
/// [`ValueField::converged`].
pub fn penalized_value_iteration(
    tt: &TransitionTable,
    penalty: Penalty,
    settings: SolverSettings,
) -> Result<ValueField> {
    settings.validate()?;
    if !(penalty.value >= 0.0) || !penalty.value.is_finite() {
        return config(format!("penalty must be a nonnegative number, got {}", penalty.value));
    }
    let gamma = settings.gamma;
    let cost = penalty.charge.effective(penalty.value, gamma);
    let sink = tt.sink();
    let domain = vec![true; tt.n_states()];
    let (values, residuals, converged) = iterate(tt.n_states(), &settings, &domain, |v, s| {
        if s == sink {
            return 0.0;
        }
        (0..tt.n_controls())
            .map(|a| q_value(tt, v, gamma, cost, s, a))
            .fold(f64::NEG_INFINITY, f64::max)
    });
    Ok(ValueField {
        values,
        gamma,
        penalty: penalty.value,
        charge: penalty.charge,
        tolerance: settings.tol,
        iterations: residuals.len(),
        final_residual: residuals.last().copied().unwrap_or(f64::INFINITY),
        converged,
        residuals,
    })
}

/// Value iteration restricted to the viability kernel with state-dependent
/// controls `Q_V[s]`. Unviable states carry `NaN`.
pub fn constrained_value_iteration(
    tt: &TransitionTable,
    kr: &KernelResult,
    settings: SolverSettings,
) -> Result<ValueField> {
    settings.validate()?;
    if kr.viable.len() != tt.n_states() || kr.n_controls() != tt.n_controls() {
        return config("kernel does not belong to this table");
    }
    if kr.viable_count() == 0 {
        return config("constrained problem needs a nonempty viability kernel");
    }
    if let Some(s) = (0..tt.n_states()).find(|&s| kr.viable[s] && kr.qv_controls(s).next().is_none()) {
        return Err(Error::Invariant(format!("viable state {s} has no viable control")));
    }
    let gamma = settings.gamma;
    let (values, residuals, converged) = iterate(tt.n_states(), &settings, &kr.viable, |v, s| {
        kr.qv_controls(s)
            .map(|a| tt.reward(s, a) + gamma * v[tt.next(s, a)])
            .fold(f64::NEG_INFINITY, f64::max)
    });
    Ok(ValueField {
        values,
        gamma,
        penalty: 0.0,
        charge: FailureCharge::Once,
        tolerance: settings.tol,
        iterations: residuals.len(),
        final_residual: residuals.last().copied().unwrap_or(f64::INFINITY),
        converged,
        residuals,
    })
}

/// Largest `|V - T V|` over the field's domain.
pub fn bellman_residual(vf: &ValueField, tt: &TransitionTable) -> f64 {
    let policy = greedy_policy(vf, tt);
    (0..tt.n_states())
        .filter(|&s| vf.get(s).is_some() && s != tt.sink())
        .map(|s| (vf.values[s] - vf.q_value(tt, s, policy.actions[s])).abs())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Policy {
    pub actions: Vec<usize>,
}

/// Argmax of the one-step lookahead; ties go to the lowest control index.
/// For constrained fields only controls whose successor carries a value are
/// considered, which on the kernel are exactly the viable controls.
pub fn greedy_policy(vf: &ValueField, tt: &TransitionTable) -> Policy {
    let actions = (0..tt.n_states())
        .map(|s| {
            let mut best = None::<(usize, f64)>;
            for a in 0..tt.n_controls() {
                let q = vf.q_value(tt, s, a);
                if q.is_nan() {
                    continue;
                }
                if best.is_none_or(|(_, b)| q > b) {
                    best = Some((a, q));
                }
            }
            best.map_or(0, |(a, _)| a)
        })
        .collect();
    Policy { actions }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rollout {
    /// Visited states, `horizon + 1` entries including the start.
    pub states: Vec<usize>,
    /// `gamma^t_f` for the first step `t_f` spent in the failure set, else 0.
    pub risk: f64,
    /// Discounted penalized return over the horizon.
    pub ret: f64,
}

pub fn rollout(
    tt: &TransitionTable,
    policy: &Policy,
    s0: usize,
    horizon: usize,
    gamma: f64,
    penalty: Penalty,
) -> Rollout {
    let cost = penalty.charge.effective(penalty.value, gamma);
    let mut states = Vec::with_capacity(horizon + 1);
    let mut s = s0;
    let mut risk = 0.0;
    let mut ret = 0.0;
    let mut discount = 1.0;
    states.push(s);
    for _ in 0..horizon {
        if tt.is_failure(s) && risk == 0.0 {
            risk = discount;
        }
        let a = policy.actions[s];
        ret += discount * q_value_reward(tt, s, a, cost);
        s = tt.next(s, a);
        states.push(s);
        discount *= gamma;
    }
    if tt.is_failure(s) && risk == 0.0 {
        risk = discount;
    }
    Rollout { states, risk, ret }
}

fn q_value_reward(tt: &TransitionTable, s: usize, a: usize, cost: f64) -> f64 {
    tt.reward(s, a) - if tt.is_failure(s) { cost } else { 0.0 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynsys::two_state_mdp;
    use crate::viability::compute_kernel;

    fn s01() -> SolverSettings {
        SolverSettings::new(0.1)
    }

    #[test]
    fn two_state_value_matches_closed_form() {
        let tt = two_state_mdp();
        for p in [0.0, 5.0, 10.0, 20.0, 100.0] {
            let vf = penalized_value_iteration(&tt, Penalty::once(p), s01()).unwrap();
            assert!(vf.converged);
            // u2 collects 1 now, then -p one step later
            let expect = f64::max(0.0, 1.0 - 0.1 * p);
            // stopping at residual tol leaves at most tol * gamma / (1 - gamma)
            assert!((vf.values[0] - expect).abs() <= 1e-9 * 0.1 / 0.9 + 1e-15, "p={p}: {}", vf.values[0]);
            assert_eq!(vf.values[1], -p);
            assert_eq!(vf.values[2], 0.0);
        }
    }

    #[test]
    fn greedy_two_state_actions() {
        let tt = two_state_mdp();
        let act = |p: f64| {
            let vf = penalized_value_iteration(&tt, Penalty::once(p), s01()).unwrap();
            greedy_policy(&vf, &tt).actions[0]
        };
        assert_eq!(act(20.0), 0);
        assert_eq!(act(0.0), 1);
        assert_eq!(act(10.0), 0);
    }

    #[test]
    fn constrained_two_state_is_zero() {
        let tt = two_state_mdp();
        let kr = compute_kernel(&tt).unwrap();
        let v = constrained_value_iteration(&tt, &kr, s01()).unwrap();
        assert_eq!(v.get(0), Some(0.0));
        assert_eq!(v.get(1), None);
        assert_eq!(greedy_policy(&v, &tt).actions[0], 0);
    }

    #[test]
    fn rollout_risk() {
        let tt = two_state_mdp();
        let always = |a| Policy { actions: vec![a; 3] };
        let r = rollout(&tt, &always(1), 0, 5, 0.1, Penalty::once(20.0));
        assert!((r.risk - 0.1).abs() < 1e-15);
        assert!((r.ret - (1.0 - 0.1 * 20.0)).abs() < 1e-12);
        assert_eq!(r.states, vec![0, 1, 2, 2, 2, 2]);
        let r = rollout(&tt, &always(0), 0, 5, 0.1, Penalty::once(20.0));
        assert_eq!(r.risk, 0.0);
        let r = rollout(&tt, &always(0), 1, 1, 0.1, Penalty::once(20.0));
        assert_eq!(r.risk, 1.0);
    }

    #[test]
    fn persistent_charge_scales_the_failure_value() {
        let tt = two_state_mdp();
        let vf = penalized_value_iteration(&tt, Penalty::persistent(1.0), SolverSettings::new(0.6)).unwrap();
        assert!((vf.values[1] + 2.5).abs() < 1e-12);
        assert_eq!(FailureCharge::Persistent.penalty_for(2.5, 0.6), 1.0);
    }

    #[test]
    fn bad_settings_are_rejected() {
        let tt = two_state_mdp();
        assert!(penalized_value_iteration(&tt, Penalty::once(1.0), SolverSettings::new(1.0)).is_err());
        assert!(penalized_value_iteration(&tt, Penalty::once(-1.0), s01()).is_err());
        let mut s = s01();
        s.tol = 0.0;
        assert!(penalized_value_iteration(&tt, Penalty::once(1.0), s).is_err());
    }

    #[test]
    fn non_convergence_is_flagged() {
        let tt = two_state_mdp();
        let mut s = SolverSettings::new(0.99);
        s.max_iter = 1;
        s.tol = 1e-15;
        let vf = penalized_value_iteration(&tt, Penalty::once(1.0), s).unwrap();
        assert!(!vf.converged);
        assert_eq!(vf.iterations, 1);
    }
}
