//! Safe-value-function analysis on a solved table: reward extrema, the
//! zeroth-order condition, penalty bounds, minimum-penalty sweeps, kernel
//! recovery by thresholding and safety of greedy policies.
//!
//! "Unviable states" below means the complement of the kernel minus the sink.
//! Failure states belong to it and carry their penalized value.

use serde::{Deserialize, Serialize};

use crate::dp::{
    greedy_policy, penalized_value_iteration, FailureCharge, Penalty, Policy, SolverSettings,
    ValueField,
};
use crate::dynsys::TransitionTable;
use crate::error::{config, Error, Result};
use crate::viability::KernelResult;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RewardExtrema {
    /// Supremum of the task reward over unviable transitions (`-inf` if none).
    pub r_qu: f64,
    /// Infimum over viable transitions (`+inf` if none).
    pub r_qv: f64,
    /// Supremum over unviable states and all controls (`-inf` if none).
    pub r_xu: f64,
}

fn check_kernel(tt: &TransitionTable, kr: &KernelResult) -> Result<()> {
    if kr.viable.len() != tt.n_states() || kr.n_controls() != tt.n_controls() {
        return config("kernel does not belong to this table");
    }
    Ok(())
}

fn unviable<'a>(tt: &'a TransitionTable, kr: &'a KernelResult) -> impl Iterator<Item = usize> + 'a {
    let sink = tt.sink();
    (0..tt.n_states()).filter(move |&s| s != sink && !kr.viable[s])
}

fn viable(kr: &KernelResult) -> impl Iterator<Item = usize> + '_ {
    kr.viable.iter().enumerate().filter(|(_, &v)| v).map(|(s, _)| s)
}

/// Extrema of the unpenalized reward. Sink pairs are bookkeeping and are left
/// out of every set.
pub fn reward_extrema(tt: &TransitionTable, kr: &KernelResult) -> Result<RewardExtrema> {
    check_kernel(tt, kr)?;
    let nc = tt.n_controls();
    let mut r_qu = f64::NEG_INFINITY;
    let mut r_qv = f64::INFINITY;
    for s in (0..tt.n_states()).filter(|&s| s != tt.sink()) {
        for a in 0..nc {
            let r = tt.reward(s, a);
            if kr.in_qv(s, a) {
                r_qv = r_qv.min(r);
            } else {
                r_qu = r_qu.max(r);
            }
        }
    }
    if r_qv == f64::INFINITY && kr.viable_count() > 0 {
        return Err(Error::Invariant("nonempty kernel without viable transitions".into()));
    }
    let r_xu = unviable(tt, kr)
        .flat_map(|s| (0..nc).map(move |a| tt.reward(s, a)))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(RewardExtrema { r_qu, r_qv, r_xu })
}

pub fn sup_unviable(vf: &ValueField, tt: &TransitionTable, kr: &KernelResult) -> f64 {
    unviable(tt, kr).map(|s| vf.values[s]).fold(f64::NEG_INFINITY, f64::max)
}

pub fn inf_viable(vf: &ValueField, kr: &KernelResult) -> f64 {
    viable(kr).map(|s| vf.values[s]).fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZerothOrder {
    /// `R_QU + gamma * sup_{X_U} V_p`.
    pub alpha_inf: f64,
    /// `R_QV + gamma * inf_{X_V} V`.
    pub alpha_sup: f64,
    pub holds: bool,
}

/// Discrete zeroth-order condition for the penalized field `vp` against the
/// constrained field `v`.
pub fn zeroth_order_check(
    vp: &ValueField,
    v: &ValueField,
    extrema: &RewardExtrema,
    tt: &TransitionTable,
    kr: &KernelResult,
) -> Result<ZerothOrder> {
    check_kernel(tt, kr)?;
    if vp.gamma != v.gamma {
        return config(format!("discount mismatch: {} vs {}", vp.gamma, v.gamma));
    }
    if vp.values.len() != tt.n_states() || v.values.len() != tt.n_states() {
        return config("value fields do not match the table");
    }
    let gamma = vp.gamma;
    let sup = sup_unviable(vp, tt, kr);
    let inf = inf_viable(v, kr);
    let alpha_inf = if sup == f64::NEG_INFINITY { sup } else { extrema.r_qu + gamma * sup };
    let alpha_sup = if inf == f64::INFINITY { inf } else { extrema.r_qv + gamma * inf };
    Ok(ZerothOrder { alpha_inf, alpha_sup, holds: alpha_inf < alpha_sup })
}

/// `R_XU (1 - gamma^(T_f + 1)) / (1 - gamma)`: the most reward an unviable
/// start can collect before failing.
fn unviable_reward_cap(r_xu: f64, tf_max: u32, gamma: f64) -> f64 {
    if r_xu == f64::NEG_INFINITY {
        return 0.0;
    }
    r_xu * (1.0 - gamma.powi(tf_max as i32 + 1)) / (1.0 - gamma)
}

/// Failure cost above which the penalized field is guaranteed safe,
/// expressed as the discounted charge paid on entering the failure set (see
/// [`FailureCharge::penalty_for`] to convert to a per-step penalty).
pub fn pstar_bound(extrema: &RewardExtrema, tf_max: u32, gamma: f64, inf_v: f64) -> f64 {
    let qu_gap = if extrema.r_qu == f64::NEG_INFINITY { 0.0 } else { extrema.r_qu - extrema.r_qv };
    (unviable_reward_cap(extrema.r_xu, tf_max, gamma) + qu_gap / gamma - inf_v) / gamma.powi(tf_max as i32)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SupBound {
    pub sup: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Checks `sup_{X_U} V_p <= R_XU (1 - gamma^(T_f+1)) / (1 - gamma) - c gamma^T_f`
/// up to `2 tol`, with `c` the field's failure cost.
pub fn sup_bound_check(vp: &ValueField, tt: &TransitionTable, kr: &KernelResult, r_xu: f64) -> SupBound {
    let gamma = vp.gamma;
    let sup = sup_unviable(vp, tt, kr);
    let bound = unviable_reward_cap(r_xu, kr.tf_max, gamma) - vp.failure_cost() * gamma.powi(kr.tf_max as i32);
    SupBound { sup, bound, holds: sup <= bound + 2.0 * vp.tolerance }
}

/// Whether every rollout of `policy` from a viable state stays viable for
/// `horizon >= 1` steps.
///
/// On a deterministic table this is the one-step closure of the kernel under
/// the policy: if every viable state steps to a viable state, induction keeps
/// every rollout inside, and otherwise the offending state escapes at its
/// first step.
pub fn verify_safety(tt: &TransitionTable, policy: &Policy, kr: &KernelResult, horizon: usize) -> bool {
    assert!(horizon >= 1, "horizon must be at least one step");
    viable(kr).all(|s| kr.viable[tt.next(s, policy.actions[s])])
}

/// Viable start states whose explicit rollout leaves the kernel within
/// `horizon` steps.
pub fn count_escapes(tt: &TransitionTable, policy: &Policy, kr: &KernelResult, horizon: usize) -> usize {
    viable(kr)
        .filter(|&s0| {
            let mut s = s0;
            for _ in 0..horizon {
                s = tt.next(s, policy.actions[s]);
                if !kr.viable[s] {
                    return true;
                }
            }
            false
        })
        .count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackupReading {
    /// `r(x, u) + gamma V_p(f(x, u))`.
    Successor,
    /// `r(x, u) + gamma V_p(x)`, as the threshold formula is printed.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RecoveryMode {
    /// `{s : V_p(s) >= alpha}`.
    Direct,
    /// `{s : max_a Q(s, a) >= alpha}`, over `Q_V[s]` when a kernel is given.
    Backup(BackupReading),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recovery {
    pub mask: Vec<bool>,
    /// `inf_{X_V} V_p > sup_{X_U} V_p`, when a kernel was supplied. Direct
    /// thresholding is only exact when this separation holds.
    pub separated: Option<bool>,
}

pub fn recover_kernel(
    vp: &ValueField,
    tt: &TransitionTable,
    kr: Option<&KernelResult>,
    alpha: f64,
    mode: RecoveryMode,
) -> Recovery {
    let sink = tt.sink();
    let cost = vp.failure_cost();
    let mask = (0..tt.n_states())
        .map(|s| {
            if s == sink {
                return false;
            }
            match mode {
                RecoveryMode::Direct => vp.values[s] >= alpha,
                RecoveryMode::Backup(reading) => (0..tt.n_controls())
                    .filter(|&a| kr.is_none_or(|k| k.in_qv(s, a)))
                    .any(|a| {
                        let charge = if tt.is_failure(s) { cost } else { 0.0 };
                        let target = match reading {
                            BackupReading::Successor => tt.next(s, a),
                            BackupReading::Literal => s,
                        };
                        tt.reward(s, a) - charge + vp.gamma * vp.values[target] >= alpha
                    }),
            }
        })
        .collect();
    let separated = kr.map(|k| inf_viable(vp, k) > sup_unviable(vp, tt, k));
    Recovery { mask, separated }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepStrategy {
    /// Every candidate in order until the first success.
    Linear,
    /// Bisection over the candidate list, relying on the condition being
    /// monotone in the penalty. The result is re-checked against its
    /// predecessor.
    Bisect,
}

/// What a sweep point must satisfy to count as a safe value function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepCriterion {
    /// Discrete zeroth-order condition and a safe greedy policy.
    ZerothOrder,
    /// `sup_{X_U} V_p < inf_{X_V} V_p` and a safe greedy policy: the kernel
    /// is a superlevel set of `V_p`.
    Separation,
    /// Every near-optimal control of every viable state keeps it viable, and
    /// `V_p` agrees with the constrained value on the kernel.
    Definition,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub penalty: f64,
    pub alpha_inf: f64,
    pub alpha_sup: f64,
    pub zeroth_order_holds: bool,
    /// `sup_{X_U} V_p`.
    pub sup_unviable: f64,
    /// `inf_{X_V} V_p`.
    pub inf_viable: f64,
    pub rollout_safe: bool,
    pub optimal_controls_safe: bool,
    pub matches_constrained: bool,
    pub converged: bool,
}

impl SweepPoint {
    pub fn passes(&self, criterion: SweepCriterion) -> bool {
        self.converged
            && match criterion {
                SweepCriterion::ZerothOrder => self.zeroth_order_holds && self.rollout_safe,
                SweepCriterion::Separation => self.inf_viable > self.sup_unviable && self.rollout_safe,
                SweepCriterion::Definition => self.optimal_controls_safe && self.matches_constrained,
            }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepOutcome {
    pub min_penalty: Option<f64>,
    pub evaluated: Vec<SweepPoint>,
}

/// Everything a penalty sweep needs besides the penalty itself.
pub struct SweepContext<'a> {
    pub table: &'a TransitionTable,
    pub kernel: &'a KernelResult,
    pub constrained: &'a ValueField,
    pub extrema: RewardExtrema,
    pub charge: FailureCharge,
    pub settings: SolverSettings,
    pub criterion: SweepCriterion,
}

impl SweepContext<'_> {
    pub fn evaluate(&self, penalty: f64) -> Result<SweepPoint> {
        let (tt, kr) = (self.table, self.kernel);
        let vp = penalized_value_iteration(tt, Penalty { value: penalty, charge: self.charge }, self.settings)?;
        let zo = zeroth_order_check(&vp, self.constrained, &self.extrema, tt, kr)?;
        let policy = greedy_policy(&vp, tt);
        // both fields sit within tol * gamma / (1 - gamma) of their fixpoints
        let slack = 2.0 * self.settings.tol / (1.0 - self.settings.gamma);
        let optimal_controls_safe = viable(kr).all(|s| {
            let best = vp.q_value(tt, s, policy.actions[s]);
            (0..tt.n_controls()).all(|a| kr.viable[tt.next(s, a)] || vp.q_value(tt, s, a) < best - slack)
        });
        let matches_constrained = viable(kr).all(|s| (vp.values[s] - self.constrained.values[s]).abs() <= slack);
        Ok(SweepPoint {
            penalty,
            alpha_inf: zo.alpha_inf,
            alpha_sup: zo.alpha_sup,
            zeroth_order_holds: zo.holds,
            sup_unviable: sup_unviable(&vp, tt, kr),
            inf_viable: inf_viable(&vp, kr),
            rollout_safe: verify_safety(tt, &policy, kr, tt.n_states()),
            optimal_controls_safe,
            matches_constrained,
            converged: vp.converged,
        })
    }
}

/// Smallest candidate penalty whose field passes `ctx.criterion`.
pub fn min_penalty_sweep(
    ctx: &SweepContext<'_>,
    candidates: &[f64],
    strategy: SweepStrategy,
) -> Result<SweepOutcome> {
    if candidates.windows(2).any(|w| !(w[0] < w[1])) {
        return config("sweep candidates must be strictly ascending");
    }
    let mut evaluated = Vec::new();
    if candidates.is_empty() {
        return Ok(SweepOutcome { min_penalty: None, evaluated });
    }
    match strategy {
        SweepStrategy::Linear => {
            for &p in candidates {
                let point = ctx.evaluate(p)?;
                let pass = point.passes(ctx.criterion);
                evaluated.push(point);
                if pass {
                    return Ok(SweepOutcome { min_penalty: Some(p), evaluated });
                }
            }
            Ok(SweepOutcome { min_penalty: None, evaluated })
        }
        SweepStrategy::Bisect => {
            let eval = |i: usize, evaluated: &mut Vec<SweepPoint>| -> Result<bool> {
                let point = ctx.evaluate(candidates[i])?;
                let pass = point.passes(ctx.criterion);
                evaluated.push(point);
                Ok(pass)
            };
            let last = candidates.len() - 1;
            if !eval(last, &mut evaluated)? {
                return Ok(SweepOutcome { min_penalty: None, evaluated });
            }
            // invariant: candidates[hi] passes, everything below lo fails
            let (mut lo, mut hi) = (0, last);
            while lo < hi {
                let mid = lo + (hi - lo) / 2;
                if eval(mid, &mut evaluated)? {
                    hi = mid;
                } else {
                    lo = mid + 1;
                }
            }
            if hi > 0 && !evaluated.iter().any(|p| p.penalty == candidates[hi - 1]) {
                eval(hi - 1, &mut evaluated)?;
            }
            Ok(SweepOutcome { min_penalty: Some(candidates[hi]), evaluated })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SvfReport {
    #[serde(rename = "R_QU")]
    pub r_qu: f64,
    #[serde(rename = "R_QV")]
    pub r_qv: f64,
    #[serde(rename = "R_XU")]
    pub r_xu: f64,
    pub alpha_inf: f64,
    pub alpha_sup: f64,
    pub zeroth_order_holds: bool,
    /// Penalty threshold in the same units as the run's penalty.
    pub pstar_bound: f64,
    pub min_penalty_empirical: Option<f64>,
    pub rollout_safe: bool,
}

impl SvfReport {
    /// Report for one penalized field `vp` against the constrained field `v`.
    pub fn build(
        tt: &TransitionTable,
        kr: &KernelResult,
        vp: &ValueField,
        v: &ValueField,
        min_penalty_empirical: Option<f64>,
    ) -> Result<Self> {
        let extrema = reward_extrema(tt, kr)?;
        let zo = zeroth_order_check(vp, v, &extrema, tt, kr)?;
        let inf_v = inf_viable(v, kr);
        let raw = pstar_bound(&extrema, kr.tf_max, vp.gamma, if inf_v.is_finite() { inf_v } else { 0.0 });
        let policy = greedy_policy(vp, tt);
        Ok(Self {
            r_qu: extrema.r_qu,
            r_qv: extrema.r_qv,
            r_xu: extrema.r_xu,
            alpha_inf: zo.alpha_inf,
            alpha_sup: zo.alpha_sup,
            zeroth_order_holds: zo.holds,
            pstar_bound: vp.charge.penalty_for(raw, vp.gamma),
            min_penalty_empirical,
            rollout_safe: verify_safety(tt, &policy, kr, tt.n_states()),
        })
    }
}
