//! Run configuration: a flat TOML file and/or command-line overrides,
//! resolved against per-scenario defaults.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dp::FailureCharge;
use crate::error::{config, Error, Result};
use crate::svf::{SweepCriterion, SweepStrategy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Parsimonious,
    Degenerate,
    PositiveProxy,
    NegativeProxy,
    Shelf,
    Cmdp,
}

impl Scenario {
    pub fn is_satellite(self) -> bool {
        !matches!(self, Self::Shelf | Self::Cmdp)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Parsimonious => "parsimonious",
            Self::Degenerate => "degenerate",
            Self::PositiveProxy => "positive-proxy",
            Self::NegativeProxy => "negative-proxy",
            Self::Shelf => "shelf",
            Self::Cmdp => "cmdp",
        }
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            Self::Parsimonious,
            Self::Degenerate,
            Self::PositiveProxy,
            Self::NegativeProxy,
            Self::Shelf,
            Self::Cmdp,
        ]
        .into_iter()
        .find(|sc| sc.name() == s)
        .ok_or_else(|| Error::Config(format!("unknown scenario '{s}'")))
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Node counts per axis, written `401x301`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct GridShape(pub Vec<usize>);

pub fn parse_grid(s: &str) -> Result<GridShape> {
    let counts = s
        .split('x')
        .map(|part| {
            part.parse::<usize>()
                .ok()
                .filter(|&n| n >= 2)
                .ok_or_else(|| Error::Config(format!("bad grid '{s}': expected counts >= 2 like 401x301")))
        })
        .collect::<Result<Vec<_>>>()?;
    if counts.iter().try_fold(1usize, |acc, &n| acc.checked_mul(n)).is_none_or(|n| n > 1 << 26) {
        return config(format!("grid '{s}' is too large"));
    }
    Ok(GridShape(counts))
}

impl TryFrom<String> for GridShape {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        parse_grid(&s)
    }
}

impl From<GridShape> for String {
    fn from(g: GridShape) -> Self {
        g.to_string()
    }
}

impl fmt::Display for GridShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|n| n.to_string()).collect();
        f.write_str(&parts.join("x"))
    }
}

/// Penalty candidates `lo:hi[:step]`, step 1 by default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SweepSpec {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

const MAX_SWEEP_POINTS: f64 = 1e6;

pub fn parse_sweep(s: &str) -> Result<SweepSpec> {
    let bad = || Error::Config(format!("bad sweep '{s}': expected lo:hi[:step]"));
    let nums = s
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<Vec<_>>>()?;
    let (lo, hi, step) = match nums[..] {
        [lo, hi] => (lo, hi, 1.0),
        [lo, hi, step] => (lo, hi, step),
        _ => return Err(bad()),
    };
    if !(lo.is_finite() && hi.is_finite() && step.is_finite()) || lo < 0.0 || hi < lo || step <= 0.0 {
        return config(format!("sweep '{s}' needs 0 <= lo <= hi and step > 0"));
    }
    if (hi - lo) / step >= MAX_SWEEP_POINTS {
        return config(format!("sweep '{s}' has too many points"));
    }
    Ok(SweepSpec { lo, hi, step })
}

impl SweepSpec {
    pub fn candidates(&self) -> Vec<f64> {
        let n = ((self.hi - self.lo) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|i| self.lo + i as f64 * self.step).collect()
    }
}

impl TryFrom<String> for SweepSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        parse_sweep(&s)
    }
}

impl From<SweepSpec> for String {
    fn from(s: SweepSpec) -> Self {
        s.to_string()
    }
}

impl fmt::Display for SweepSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.lo, self.hi, self.step)
    }
}

/// Every setting optional; what a config file or the command line provides.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunOptions {
    pub scenario: Option<Scenario>,
    pub grid: Option<GridShape>,
    pub controls: Option<usize>,
    pub dt: Option<f64>,
    pub substeps: Option<usize>,
    pub gamma: Option<f64>,
    pub penalty: Option<f64>,
    pub sweep: Option<SweepSpec>,
    pub strategy: Option<SweepStrategy>,
    pub criterion: Option<SweepCriterion>,
    pub alpha: Option<f64>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub charge: Option<FailureCharge>,
    pub out: Option<PathBuf>,
    pub length: Option<f64>,
    pub speed: Option<f64>,
    pub tau: Option<f64>,
    pub fall_time: Option<f64>,
    pub eta: Option<f64>,
}

impl RunOptions {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Fields set in `other` replace those in `self`.
    pub fn merge(self, other: RunOptions) -> RunOptions {
        macro_rules! pick {
            ($($f:ident),*) => { RunOptions { $($f: other.$f.or(self.$f)),* } };
        }
        pick!(
            scenario, grid, controls, dt, substeps, gamma, penalty, sweep, strategy, criterion, alpha, tol, max_iter,
            charge, out, length, speed, tau, fall_time, eta
        )
    }

    pub fn resolve(self) -> Result<RunConfig> {
        RunConfig::resolve(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShelfSettings {
    pub length: f64,
    pub speed: f64,
    pub tau: f64,
    pub fall_time: f64,
}

/// Fully resolved configuration. This is what reports echo back.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub grid: Option<GridShape>,
    pub controls: Option<usize>,
    pub dt: Option<f64>,
    pub substeps: Option<usize>,
    pub gamma: f64,
    pub penalty: Option<f64>,
    pub sweep: Option<SweepSpec>,
    pub strategy: SweepStrategy,
    pub criterion: SweepCriterion,
    pub alpha: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub charge: FailureCharge,
    pub out: PathBuf,
    pub shelf: Option<ShelfSettings>,
    pub eta: Option<f64>,
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        config(format!("{name} must be positive and finite, got {v}"))
    }
}

impl RunConfig {
    fn resolve(o: RunOptions) -> Result<Self> {
        let scenario = o.scenario.ok_or_else(|| Error::Config("no scenario given".into()))?;
        let reject = |present: bool, what: &str| -> Result<()> {
            if present {
                config(format!("{what} does not apply to the {scenario} scenario"))
            } else {
                Ok(())
            }
        };
        if !matches!(scenario, Scenario::Shelf) {
            reject(
                o.length.is_some() || o.speed.is_some() || o.tau.is_some() || o.fall_time.is_some(),
                "shelf geometry",
            )?;
        }
        if !matches!(scenario, Scenario::Cmdp) {
            reject(o.eta.is_some(), "eta")?;
        }
        if o.penalty.is_some() && o.sweep.is_some() {
            return config("give either a penalty or a sweep, not both");
        }
        if let Some(p) = o.penalty {
            if !(p >= 0.0 && p.is_finite()) {
                return config(format!("penalty must be nonnegative, got {p}"));
            }
        }
        let tol = positive("tol", o.tol.unwrap_or(1e-9))?;
        let max_iter = o.max_iter.unwrap_or(10_000);
        if max_iter == 0 {
            return config("max_iter must be positive");
        }
        let alpha = o.alpha.unwrap_or(0.0);
        if !alpha.is_finite() {
            return config("alpha must be finite");
        }
        let mut cfg = RunConfig {
            scenario,
            grid: None,
            controls: None,
            dt: None,
            substeps: None,
            gamma: 0.6,
            penalty: o.penalty,
            sweep: o.sweep,
            strategy: o.strategy.unwrap_or(SweepStrategy::Bisect),
            criterion: o.criterion.unwrap_or(SweepCriterion::ZerothOrder),
            alpha,
            tol,
            max_iter,
            charge: o.charge.unwrap_or(FailureCharge::Once),
            out: o.out.unwrap_or_else(|| PathBuf::from("out")),
            shelf: None,
            eta: None,
        };

        match scenario {
            Scenario::Cmdp => {
                reject(
                    o.grid.is_some()
                        || o.controls.is_some()
                        || o.dt.is_some()
                        || o.substeps.is_some()
                        || o.sweep.is_some()
                        || o.charge.is_some()
                        || o.strategy.is_some()
                        || o.criterion.is_some(),
                    "grid, dynamics and sweep settings",
                )?;
                cfg.gamma = o.gamma.unwrap_or(0.1);
                let eta = o.eta.unwrap_or(0.01);
                if !(eta >= 0.0 && eta.is_finite()) {
                    return config("eta must be nonnegative");
                }
                cfg.eta = Some(eta);
            }
            Scenario::Shelf => {
                reject(
                    o.gamma.is_some() || o.controls.is_some() || o.substeps.is_some() || o.grid.is_some(),
                    "gamma, controls, substeps and grid (derived from tau, speed and dt)",
                )?;
                if cfg.charge != FailureCharge::Once {
                    return config("the shelf charges its penalty once");
                }
                let s = ShelfSettings {
                    length: positive("length", o.length.unwrap_or(1.0))?,
                    speed: positive("speed", o.speed.unwrap_or(0.2))?,
                    tau: positive("tau", o.tau.unwrap_or(1.0))?,
                    fall_time: positive("fall_time", o.fall_time.unwrap_or(1.0))?,
                };
                let dt = positive("dt", o.dt.unwrap_or(0.05))?;
                let cells = s.length / (s.speed * dt);
                if (cells - cells.round()).abs() > 1e-9 * cells.max(1.0) || cells.round() < 1.0 {
                    return config("L / (speed * dt) must be a positive integer so the ledge is a node");
                }
                if cells > 1e6 {
                    return config("shelf grid too fine");
                }
                cfg.grid = Some(GridShape(vec![2 * cells.round() as usize + 1]));
                cfg.controls = Some(3);
                cfg.dt = Some(dt);
                cfg.substeps = Some(1);
                cfg.gamma = (-dt / s.tau).exp();
                cfg.shelf = Some(s);
                if cfg.sweep.is_none() && cfg.penalty.is_none() {
                    cfg.penalty = Some(10.0);
                }
            }
            _ => {
                let grid = o.grid.unwrap_or(GridShape(vec![401, 301]));
                if grid.0.len() != 2 {
                    return config(format!("the satellite needs a two-axis grid, got '{grid}'"));
                }
                let controls = o.controls.unwrap_or(11);
                if controls == 0 {
                    return config("need at least one control");
                }
                cfg.grid = Some(grid);
                cfg.controls = Some(controls);
                cfg.dt = Some(positive("dt", o.dt.unwrap_or(1.0))?);
                let substeps = o.substeps.unwrap_or(10);
                if substeps == 0 {
                    return config("substeps must be positive");
                }
                cfg.substeps = Some(substeps);
                cfg.gamma = o.gamma.unwrap_or(0.6);
                if cfg.sweep.is_none() && cfg.penalty.is_none() {
                    cfg.penalty = Some(1.0);
                }
            }
        }
        if !(cfg.gamma > 0.0 && cfg.gamma < 1.0) {
            return config(format!("gamma must lie in (0, 1), got {}", cfg.gamma));
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_shapes() {
        assert_eq!(parse_grid("401x301").unwrap().0, vec![401, 301]);
        assert_eq!(parse_grid("41").unwrap().0, vec![41]);
        for bad in ["", "x", "1x5", "4x", "ax3", "4x-3", "100000x100000"] {
            assert!(parse_grid(bad).is_err(), "{bad}");
        }
        assert_eq!(parse_grid("41x31").unwrap().to_string(), "41x31");
    }

    #[test]
    fn sweep_specs() {
        let s = parse_sweep("1:500").unwrap();
        assert_eq!(s.candidates().len(), 500);
        assert_eq!(s.candidates()[110], 111.0);
        assert_eq!(parse_sweep("0:1:0.25").unwrap().candidates(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(parse_sweep("3:3").unwrap().candidates(), vec![3.0]);
        for bad in ["", "1", "5:1", "1:2:0", "1:2:3:4", "a:b", "-1:3", "0:1e12", "nan:1"] {
            assert!(parse_sweep(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn toml_file_with_defaults() {
        let o = RunOptions::from_toml_str("scenario = \"positive-proxy\"\ngrid = \"41x31\"\nsweep = \"1:500\"\n").unwrap();
        let c = o.resolve().unwrap();
        assert_eq!(c.grid.unwrap().0, vec![41, 31]);
        assert_eq!(c.controls, Some(11));
        assert_eq!(c.gamma, 0.6);
        assert_eq!(c.penalty, None);
        assert_eq!(c.charge, FailureCharge::Once);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(RunOptions::from_toml_str("scenario = \"degenerate\"\nfoo = 1\n").is_err());
        assert!(RunOptions::from_toml_str("scenario = \"nope\"\n").is_err());
        assert!(RunOptions::from_toml_str("grid = \"3\"\nscenario = 4\n").is_err());
    }

    #[test]
    fn incompatible_settings_fail_before_any_work() {
        let base = |s: Scenario| RunOptions { scenario: Some(s), ..Default::default() };
        assert!(RunOptions { tau: Some(2.0), ..base(Scenario::Degenerate) }.resolve().is_err());
        assert!(RunOptions { eta: Some(0.1), ..base(Scenario::Shelf) }.resolve().is_err());
        assert!(RunOptions { gamma: Some(0.5), ..base(Scenario::Shelf) }.resolve().is_err());
        assert!(RunOptions { grid: Some(GridShape(vec![41])), ..base(Scenario::Parsimonious) }.resolve().is_err());
        assert!(RunOptions { gamma: Some(1.0), ..base(Scenario::Parsimonious) }.resolve().is_err());
        assert!(RunOptions { dt: Some(0.03), ..base(Scenario::Shelf) }.resolve().is_err());
        assert!(RunOptions {
            penalty: Some(1.0),
            sweep: Some(parse_sweep("1:2").unwrap()),
            ..base(Scenario::Degenerate)
        }
        .resolve()
        .is_err());
        assert!(RunOptions::default().resolve().is_err());
    }

    #[test]
    fn shelf_and_cmdp_defaults() {
        let shelf = RunOptions { scenario: Some(Scenario::Shelf), ..Default::default() }.resolve().unwrap();
        assert_eq!(shelf.grid.unwrap().0, vec![201]);
        assert!((shelf.gamma - (-0.05f64).exp()).abs() < 1e-15);
        let cmdp = RunOptions { scenario: Some(Scenario::Cmdp), ..Default::default() }.resolve().unwrap();
        assert_eq!((cmdp.gamma, cmdp.eta), (0.1, Some(0.01)));
    }

    #[test]
    fn command_line_overrides_file() {
        let file = RunOptions::from_toml_str("scenario = \"degenerate\"\npenalty = 2.0\n").unwrap();
        let cli = RunOptions { penalty: Some(5.0), ..Default::default() };
        assert_eq!(file.merge(cli).resolve().unwrap().penalty, Some(5.0));
    }
}
