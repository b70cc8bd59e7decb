//! One configured run: discretize, solve, analyze and render every artifact
//! in memory. Writing happens separately, once everything succeeded.

use std::path::Path;

use serde::Serialize;

use crate::analytic::{
    cmdp_dual_penalty, cmdp_penalized_argmax, cmdp_solve, continuous_pstar, shelf_pstar, shelf_sweep,
    shelf_value, ArgmaxSet, ShelfParams, SweepAxis,
};
use crate::config::{RunConfig, Scenario};
use crate::dp::{constrained_value_iteration, penalized_value_iteration, Penalty, SolverSettings, ValueField};
use crate::dynsys::{discretize, satellite_grid, Axis, ControlGrid, RewardSpec, StateGrid, SystemSpec, TransitionTable};
use crate::error::{Error, Result};
use crate::io::{curve_to_csv, write_file, GridCsv};
use crate::svf::{
    inf_viable, min_penalty_sweep, recover_kernel, reward_extrema, sup_bound_check, sup_unviable, RecoveryMode,
    SupBound, SvfReport, SweepContext, SweepCriterion, SweepPoint, SweepStrategy,
};
use crate::viability::{compute_kernel, KernelResult};

/// A discretizable problem.
#[derive(Debug, Clone)]
pub struct Problem {
    pub spec: SystemSpec,
    pub grid: StateGrid,
    pub controls: ControlGrid,
    pub reward: RewardSpec,
}

/// Everything a run produced: named file contents and the convergence flag.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub files: Vec<(String, String)>,
    pub converged: bool,
}

impl RunOutput {
    pub fn file(&self, name: &str) -> Option<&str> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, c)| c.as_str())
    }

    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, contents) in &self.files {
            write_file(&dir.join(name), contents)?;
        }
        Ok(())
    }
}

pub fn problem(cfg: &RunConfig) -> Result<Problem> {
    let counts = cfg.grid.as_ref().map(|g| g.0.clone()).unwrap_or_default();
    let nc = cfg.controls.unwrap_or(0);
    match cfg.scenario {
        Scenario::Cmdp => Err(Error::Config("the cmdp scenario has no grid".into())),
        Scenario::Shelf => {
            let s = cfg.shelf.ok_or_else(|| Error::Config("shelf settings missing".into()))?;
            let dt = cfg.dt.unwrap_or(0.05);
            Ok(Problem {
                spec: SystemSpec::shelf(s.length, s.speed, s.fall_time, dt),
                grid: StateGrid::new(vec![Axis::new(-s.length, s.length, counts[0])?])?,
                controls: ControlGrid::uniform(-s.speed, s.speed, 3)?,
                reward: RewardSpec::Shelf { tau: s.tau },
            })
        }
        sc => {
            let mut spec = SystemSpec::satellite();
            spec.dt = cfg.dt.unwrap_or(spec.dt);
            spec.substeps = cfg.substeps.unwrap_or(spec.substeps);
            let reward = match sc {
                Scenario::Parsimonious => RewardSpec::parsimonious(),
                Scenario::Degenerate => RewardSpec::Degenerate,
                Scenario::PositiveProxy => RewardSpec::positive_proxy(),
                _ => RewardSpec::negative_proxy(),
            };
            Ok(Problem {
                spec,
                grid: satellite_grid(counts[0], counts[1])?,
                controls: ControlGrid::uniform(-1.0, 1.0, nc)?,
                reward,
            })
        }
    }
}

#[derive(Debug, Serialize)]
struct KernelSummary {
    viable_count: usize,
    tf_max: u32,
    iterations: usize,
}

#[derive(Debug, Serialize)]
struct SolverSummary {
    iterations: usize,
    final_residual: f64,
    converged: bool,
}

impl From<&ValueField> for SolverSummary {
    fn from(v: &ValueField) -> Self {
        Self { iterations: v.iterations, final_residual: v.final_residual, converged: v.converged }
    }
}

/// `sup_{X_U} V_p` and `inf_{X_V} V`: a direct threshold in between recovers
/// the kernel from `V_p`.
#[derive(Debug, Serialize)]
struct ThresholdRange {
    lower: f64,
    upper: f64,
}

#[derive(Debug, Serialize)]
struct RecoverySummary {
    alpha: f64,
    recovered_count: usize,
    equals_kernel: bool,
    subset_of_kernel: bool,
    separated: Option<bool>,
}

#[derive(Debug, Serialize)]
struct SweepSummary {
    strategy: SweepStrategy,
    criterion: SweepCriterion,
    candidates: usize,
    evaluated: Vec<SweepPoint>,
}

#[derive(Debug, Serialize)]
struct ShelfSummary {
    pstar_analytic: f64,
    pstar_continuous_bound: f64,
    tau_minimum: Option<(f64, f64)>,
    max_error_vs_analytic: f64,
}

#[derive(Debug, Serialize)]
struct GridReport<'a> {
    scenario: Scenario,
    config: &'a RunConfig,
    penalty: f64,
    #[serde(flatten)]
    svf: SvfReport,
    threshold_range: ThresholdRange,
    sup_bound: SupBound,
    kernel: KernelSummary,
    recovery: RecoverySummary,
    penalized_solver: SolverSummary,
    constrained_solver: SolverSummary,
    sweep: Option<SweepSummary>,
    shelf: Option<ShelfSummary>,
    converged: bool,
}

#[derive(Debug, Serialize)]
struct CmdpReport<'a> {
    scenario: Scenario,
    config: &'a RunConfig,
    theta_star: f64,
    constrained_objective: f64,
    dual_penalty: f64,
    argmax_at_dual: String,
    penalty: f64,
    argmax_at_penalty: String,
    penalized_coefficient: f64,
    converged: bool,
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Invariant(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn run(cfg: &RunConfig) -> Result<RunOutput> {
    match cfg.scenario {
        Scenario::Cmdp => run_cmdp(cfg),
        _ => run_grid(cfg),
    }
}

fn run_cmdp(cfg: &RunConfig) -> Result<RunOutput> {
    let gamma = cfg.gamma;
    let eta = cfg.eta.unwrap_or(0.01);
    let theta_star = cmdp_solve(gamma, eta)?;
    let dual = cmdp_dual_penalty(gamma);
    let penalty = cfg.penalty.unwrap_or(dual);
    let report = CmdpReport {
        scenario: cfg.scenario,
        config: cfg,
        theta_star,
        constrained_objective: gamma * theta_star,
        dual_penalty: dual,
        argmax_at_dual: cmdp_penalized_argmax(gamma, dual).to_string(),
        penalty,
        argmax_at_penalty: cmdp_penalized_argmax(gamma, penalty).to_string(),
        penalized_coefficient: 1.0 - gamma * penalty,
        converged: true,
    };
    debug_assert_eq!(cmdp_penalized_argmax(gamma, dual), ArgmaxSet::Interval);
    Ok(RunOutput { files: vec![("report.json".into(), to_json(&report)?)], converged: true })
}

fn field_csv(grid: &StateGrid, meta: &[(String, String)], column: &str, values: &[f64]) -> Result<String> {
    Ok(GridCsv::new(grid, meta.to_vec(), column, values[..grid.len()].to_vec())?.to_csv_string())
}

fn mask_csv(grid: &StateGrid, meta: &[(String, String)], column: &str, mask: &[bool]) -> Result<String> {
    Ok(GridCsv::from_mask(grid, meta.to_vec(), column, &mask[..grid.len()])?.to_csv_string())
}

fn run_grid(cfg: &RunConfig) -> Result<RunOutput> {
    let pb = problem(cfg)?;
    let tt = discretize(&pb.spec, &pb.grid, &pb.controls, &pb.reward)?;
    let kr = compute_kernel(&tt)?;
    let settings = SolverSettings { gamma: cfg.gamma, tol: cfg.tol, max_iter: cfg.max_iter };
    let v = constrained_value_iteration(&tt, &kr, settings)?;
    let extrema = reward_extrema(&tt, &kr)?;

    let (penalty, min_penalty, sweep) = match cfg.sweep {
        Some(spec) => {
            let candidates = spec.candidates();
            let ctx = SweepContext {
                table: &tt,
                kernel: &kr,
                constrained: &v,
                extrema,
                charge: cfg.charge,
                settings,
                criterion: cfg.criterion,
            };
            let outcome = min_penalty_sweep(&ctx, &candidates, cfg.strategy)?;
            let shown = outcome.min_penalty.unwrap_or(*candidates.last().expect("sweep is never empty"));
            let summary = SweepSummary { strategy: cfg.strategy, criterion: cfg.criterion, candidates: candidates.len(), evaluated: outcome.evaluated };
            (shown, outcome.min_penalty, Some(summary))
        }
        None => (cfg.penalty.unwrap_or(1.0), None, None),
    };
    let vp = penalized_value_iteration(&tt, Penalty { value: penalty, charge: cfg.charge }, settings)?;
    let svf = SvfReport::build(&tt, &kr, &vp, &v, min_penalty)?;
    let recovered = recover_kernel(&vp, &tt, Some(&kr), cfg.alpha, RecoveryMode::Direct);
    let converged = vp.converged && v.converged;

    let meta = |field: &str| -> Vec<(String, String)> {
        vec![
            ("scenario".into(), cfg.scenario.to_string()),
            ("field".into(), field.into()),
            ("gamma".into(), format!("{}", cfg.gamma)),
            ("penalty".into(), format!("{penalty}")),
            ("charge".into(), format!("{:?}", cfg.charge).to_lowercase()),
        ]
    };
    let sg = &pb.grid;
    let tf: Vec<f64> = kr.tf.iter().map(|t| t.map_or(f64::NAN, f64::from)).collect();
    let mut files = vec![
        ("value.csv".to_string(), field_csv(sg, &meta("penalized"), "value", &vp.values)?),
        ("constrained.csv".to_string(), field_csv(sg, &meta("constrained"), "value", &v.values)?),
        ("kernel_mask.csv".to_string(), mask_csv(sg, &meta("kernel"), "kernel_mask", &kr.viable)?),
        ("tf.csv".to_string(), field_csv(sg, &meta("time-to-failure"), "tf", &tf)?),
        ("recovered_mask.csv".to_string(), mask_csv(sg, &meta("recovered"), "recovered_mask", &recovered.mask)?),
    ];

    let shelf = match (cfg.scenario, cfg.shelf) {
        (Scenario::Shelf, Some(s)) => {
            let params = ShelfParams { length: s.length, speed: s.speed, tau: s.tau, fall_time: s.fall_time, penalty };
            let analytic: Vec<f64> = (0..sg.len())
                .map(|i| shelf_value(sg.coords(i)[0], &params))
                .collect::<Result<_>>()?;
            let max_error = analytic
                .iter()
                .zip(&vp.values)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            let taus = shelf_sweep(SweepAxis::Tau, 0.1, 10.0, 100, &params)?;
            let falls = shelf_sweep(SweepAxis::FallTime, 0.05, 3.0, 60, &params)?;
            files.push(("value_analytic.csv".into(), field_csv(sg, &meta("analytic"), "value", &analytic)?));
            files.push(("pstar_tau.csv".into(), curve_to_csv(("tau", "pstar"), &taus.samples)));
            files.push(("pstar_fall_time.csv".into(), curve_to_csv(("fall_time", "pstar"), &falls.samples)));
            Some(ShelfSummary {
                pstar_analytic: shelf_pstar(s.tau, s.fall_time, s.length, s.speed),
                pstar_continuous_bound: continuous_pstar(1.0, params.stay_branch(0.0), s.tau, s.fall_time),
                tau_minimum: taus.minimum,
                max_error_vs_analytic: max_error,
            })
        }
        _ => None,
    };

    let report = GridReport {
        scenario: cfg.scenario,
        config: cfg,
        penalty,
        svf,
        threshold_range: ThresholdRange { lower: sup_unviable(&vp, &tt, &kr), upper: inf_viable(&v, &kr) },
        sup_bound: sup_bound_check(&vp, &tt, &kr, extrema.r_xu),
        kernel: KernelSummary { viable_count: kr.viable_count(), tf_max: kr.tf_max, iterations: kr.iterations },
        recovery: recovery_summary(&recovered.mask, &kr, cfg.alpha, recovered.separated),
        penalized_solver: (&vp).into(),
        constrained_solver: (&v).into(),
        sweep,
        shelf,
        converged,
    };
    files.push(("report.json".into(), to_json(&report)?));
    Ok(RunOutput { files, converged })
}

fn recovery_summary(mask: &[bool], kr: &KernelResult, alpha: f64, separated: Option<bool>) -> RecoverySummary {
    RecoverySummary {
        alpha,
        recovered_count: mask.iter().filter(|&&m| m).count(),
        equals_kernel: mask == kr.viable.as_slice(),
        subset_of_kernel: mask.iter().zip(&kr.viable).all(|(&m, &v)| !m || v),
        separated,
    }
}

/// Builds the table a configuration describes, for callers that want to
/// work on it directly.
pub fn table(cfg: &RunConfig) -> Result<TransitionTable> {
    let pb = problem(cfg)?;
    discretize(&pb.spec, &pb.grid, &pb.controls, &pb.reward)
}
