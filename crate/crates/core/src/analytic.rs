//! Closed-form continuous-time shelf example and the two-state bounded-risk
//! counterexample.

use serde::{Deserialize, Serialize};

use crate::error::{config, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShelfParams {
    pub length: f64,
    pub speed: f64,
    /// Discount rate in seconds; the per-step factor is `exp(-dt / tau)`.
    pub tau: f64,
    pub fall_time: f64,
    pub penalty: f64,
}

impl ShelfParams {
    pub fn validate(&self) -> Result<()> {
        let ok = [self.length, self.speed, self.tau, self.fall_time]
            .iter()
            .all(|v| *v > 0.0 && v.is_finite());
        if !ok || !(self.penalty >= 0.0) {
            return config("shelf parameters must be positive (penalty nonnegative)");
        }
        Ok(())
    }

    /// Drive to `x = L` and stay there.
    pub fn stay_branch(&self, x: f64) -> f64 {
        self.tau * (((x - self.length) / (self.speed * self.tau)).exp() - 1.0)
    }

    /// Drive back over the ledge and fall.
    pub fn fall_branch(&self, x: f64) -> f64 {
        let Self { speed, tau, fall_time, penalty, .. } = *self;
        tau * ((2.0 - (-fall_time / tau).exp()) * (-x / (speed * tau)).exp() - 1.0)
            - penalty * (-(fall_time + x / speed) / tau).exp()
    }

    /// Value while falling from `x` in `(-L, 0)`.
    pub fn falling_value(&self, x: f64) -> f64 {
        let decay = (-(self.fall_time / self.tau) * (1.0 + x / self.length)).exp();
        self.tau * (1.0 - decay) - self.penalty * decay
    }
}

/// Penalized value of the shelf. At `x = -L` the trajectory has already
/// stopped in the failure set and the value is taken as the limit `-p`.
pub fn shelf_value(x: f64, params: &ShelfParams) -> Result<f64> {
    params.validate()?;
    let l = params.length;
    if !(x >= -l && x <= l) {
        return config(format!("x = {x} lies outside [-{l}, {l}]"));
    }
    Ok(if x == -l {
        -params.penalty
    } else if x < 0.0 {
        params.falling_value(x)
    } else {
        params.stay_branch(x).max(params.fall_branch(x))
    })
}

/// Smallest penalty above which staying on the shelf beats falling
/// everywhere: `tau (2 - exp(-L / (v tau))) exp(T_f / tau) - tau`.
pub fn shelf_pstar(tau: f64, fall_time: f64, length: f64, speed: f64) -> f64 {
    tau * (2.0 - (-length / (speed * tau)).exp()) * (fall_time / tau).exp() - tau
}

/// The general continuous-time threshold
/// `[R_XU tau - inf_XV V] exp(T_f / tau) - R_XU tau`.
pub fn continuous_pstar(r_xu: f64, inf_v: f64, tau: f64, fall_time: f64) -> f64 {
    (r_xu * tau - inf_v) * (fall_time / tau).exp() - r_xu * tau
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    Tau,
    FallTime,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShelfSweep {
    pub axis: SweepAxis,
    pub samples: Vec<(f64, f64)>,
    /// Interior minimizer of the tau curve, when the samples bracket one.
    pub minimum: Option<(f64, f64)>,
}

/// Samples `p*` over `[lo, hi]` with `n` evenly spaced points, varying `axis`
/// and holding the other parameters of `base` fixed.
pub fn shelf_sweep(axis: SweepAxis, lo: f64, hi: f64, n: usize, base: &ShelfParams) -> Result<ShelfSweep> {
    if !(lo > 0.0 && hi > lo) || n < 2 {
        return config("sweep needs 0 < lo < hi and at least two samples");
    }
    base.validate()?;
    let f = |t: f64| match axis {
        SweepAxis::Tau => shelf_pstar(t, base.fall_time, base.length, base.speed),
        SweepAxis::FallTime => shelf_pstar(base.tau, t, base.length, base.speed),
    };
    let samples: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let t = lo + (hi - lo) * i as f64 / (n - 1) as f64;
            (t, f(t))
        })
        .collect();
    let minimum = match axis {
        SweepAxis::FallTime => None,
        SweepAxis::Tau => {
            let k = (0..n).min_by(|&a, &b| samples[a].1.total_cmp(&samples[b].1)).unwrap();
            // only an interior sample brackets a minimum
            (k > 0 && k + 1 < n).then(|| {
                let t = golden_section_min(&f, samples[k - 1].0, samples[k + 1].0, 1e-6);
                (t, f(t))
            })
        }
    };
    Ok(ShelfSweep { axis, samples, minimum })
}

fn golden_section_min(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    while (b - a).abs() > tol {
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - ratio * (b - a);
        d = a + ratio * (b - a);
    }
    (a + b) / 2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CmdpParams {
    pub gamma: f64,
    pub eta: f64,
    pub penalty: f64,
    pub theta: f64,
}

/// Probability of the risky control maximizing `gamma theta` under
/// `gamma theta <= eta`.
pub fn cmdp_solve(gamma: f64, eta: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 1.0) || !(eta >= 0.0) {
        return config("cmdp needs gamma in (0, 1) and eta >= 0");
    }
    Ok((eta / gamma).min(1.0))
}

/// Objective of the penalized two-state problem: `gamma theta (1 - gamma p)`.
pub fn cmdp_penalized_objective(params: &CmdpParams) -> f64 {
    params.gamma * params.theta * (1.0 - params.gamma * params.penalty)
}

/// Penalty at which the penalized objective stops depending on `theta`.
pub fn cmdp_dual_penalty(gamma: f64) -> f64 {
    1.0 / gamma
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArgmaxSet {
    /// `{0}`: never take the risky control.
    Zero,
    /// `[0, 1]`: every mixture is optimal.
    Interval,
    /// `{1}`: always take it.
    One,
}

impl std::fmt::Display for ArgmaxSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Zero => "{0}",
            Self::Interval => "[0,1]",
            Self::One => "{1}",
        })
    }
}

/// Argmax over `theta in [0, 1]` of the penalized objective. `gamma p` is
/// compared with 1 within a few ulps so that `p = 1 / gamma` lands on the
/// interval.
pub fn cmdp_penalized_argmax(gamma: f64, penalty: f64) -> ArgmaxSet {
    let coef = 1.0 - gamma * penalty;
    if coef.abs() <= 4.0 * f64::EPSILON {
        ArgmaxSet::Interval
    } else if coef > 0.0 {
        ArgmaxSet::One
    } else {
        ArgmaxSet::Zero
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base(p: f64) -> ShelfParams {
        ShelfParams { length: 1.0, speed: 0.2, tau: 1.0, fall_time: 1.0, penalty: p }
    }

    #[test]
    fn right_end_is_worth_zero() {
        assert_eq!(shelf_value(1.0, &base(100.0)).unwrap(), 0.0);
    }

    #[test]
    fn ground_is_minus_p() {
        assert_eq!(shelf_value(-1.0, &base(3.0)).unwrap(), -3.0);
        let near = shelf_value(-1.0 + 1e-9, &base(3.0)).unwrap();
        assert!((near + 3.0).abs() < 1e-6);
    }

    #[test]
    fn branches_meet_at_the_ledge_for_pstar() {
        let p = shelf_pstar(1.0, 1.0, 1.0, 0.2);
        let prm = base(p);
        assert!((prm.stay_branch(0.0) - prm.fall_branch(0.0)).abs() < 1e-12);
    }

    #[test]
    fn pstar_reference_value() {
        let p = shelf_pstar(1.0, 1.0, 1.0, 0.2);
        let expect = (2.0 - (-5f64).exp()) * 1f64.exp() - 1.0;
        assert!((p - expect).abs() < 1e-15);
        assert!((p - 4.4183).abs() < 1e-4);
    }

    #[test]
    fn zero_fall_time_endpoint() {
        let tau: f64 = 0.7;
        let expect = tau * (1.0 - (-1.0 / (0.2 * tau)).exp());
        assert!((shelf_pstar(tau, 0.0, 1.0, 0.2) - expect).abs() < 1e-14);
    }

    #[test]
    fn outside_domain_is_an_error() {
        assert!(shelf_value(1.5, &base(1.0)).is_err());
    }

    #[test]
    fn cmdp_reference_solution() {
        assert!((cmdp_solve(0.1, 0.01).unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(cmdp_solve(0.1, 0.0).unwrap(), 0.0);
        assert_eq!(cmdp_solve(0.1, 0.5).unwrap(), 1.0);
        assert_eq!(cmdp_penalized_argmax(0.1, 10.0), ArgmaxSet::Interval);
        assert_eq!(cmdp_penalized_argmax(0.1, 0.0), ArgmaxSet::One);
        assert_eq!(cmdp_penalized_argmax(0.1, 20.0), ArgmaxSet::Zero);
        assert_eq!(ArgmaxSet::Interval.to_string(), "[0,1]");
    }
}
