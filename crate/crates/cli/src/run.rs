//! Pipelines behind the subcommands.
//!
//! Each run writes its artifacts, then `timings.json` (wall-clock per phase,
//! the only non-reproducible file) and finally `report.json`.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};
use tfslab_core::forward::{project, solve_forward, tail_energy, ModalVector, SourceSpec, SpaceTimeField};
use tfslab_core::inverse::{
    build_initial_design, build_source_design, discrepancy_gamma, expected_noise_norm, invert_initial, invert_order,
    invert_source, weighted_data, InversionResult, OrderProblem, TikhonovConfig,
};
use tfslab_core::mlf::{ml_eval, ml_kernel, KernelKind, MlParams};
use tfslab_core::observe::{observe, ObservedData};
use tfslab_core::{forward, C64};

use crate::config::{ExperimentConfig, GammaConfig, GammaRule, Prepared, Problem, SpatialConfig};
use crate::error::CliError;
use crate::io::ArtifactWriter;

/// A built-in check with its tolerance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Verdict {
    fn at_most(name: &str, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            value,
            tolerance,
            passed: value <= tolerance,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub problem: &'static str,
    pub config: Value,
    pub checks: BTreeMap<String, f64>,
    pub verdicts: Vec<Verdict>,
    /// Artifacts written by this run, `report.json` excluded.
    pub manifest: Vec<String>,
    #[serde(skip)]
    pub timings: Vec<(String, f64)>,
}

struct Phases {
    timings: Vec<(String, f64)>,
}

impl Phases {
    fn time<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.timings.push((name.to_string(), start.elapsed().as_secs_f64()));
        out
    }
}

struct Outcome {
    checks: BTreeMap<String, f64>,
    verdicts: Vec<Verdict>,
}

/// Execute `problem` as configured, writing into `out_dir`.
pub fn run(cfg: &ExperimentConfig, problem: Problem, out_dir: &Path) -> Result<RunReport, CliError> {
    let mut phases = Phases { timings: Vec::new() };
    if problem == Problem::Selftest {
        return Err(CliError::config("problem", "selftest has no config pipeline"));
    }
    let mut writer = ArtifactWriter::create(out_dir)?;
    let outcome = if problem == Problem::MlEval {
        let (alpha, beta, z) = phases.time("prepare", || cfg.prepare_ml_eval())?;
        phases.time("ml_eval", || run_ml_eval(alpha, beta, &z, &mut writer))?
    } else {
        let prep = phases.time("prepare", || cfg.prepare(problem))?;
        log::info!(
            "{}: m = {}, n_t = {}, N = {}, alpha = {}",
            problem.name(),
            prep.grid.len(),
            prep.tg.len(),
            prep.eig.len(),
            prep.order.alpha()
        );
        match problem {
            Problem::Forward => run_forward(cfg, &prep, &mut writer, &mut phases)?,
            Problem::InvertInitial | Problem::InvertSource => run_spatial_inversion(&prep, &mut writer, &mut phases)?,
            Problem::InvertOrder => run_order_inversion(&prep, &mut writer, &mut phases)?,
            Problem::MlEval | Problem::Selftest => unreachable!(),
        }
    };
    let timings = json!({
        "phases": phases.timings.iter().map(|(k, v)| json!({"phase": k, "seconds": v})).collect::<Vec<_>>(),
        "threads": tfslab_core::par::current_num_threads(),
    });
    writer.write_json("timings.json", &timings)?;
    let report = RunReport {
        problem: problem.name(),
        config: serde_json::to_value(cfg).map_err(|e| CliError::config("<root>", e.to_string()))?,
        checks: outcome.checks,
        verdicts: outcome.verdicts,
        manifest: writer.manifest().to_vec(),
        timings: phases.timings,
    };
    let value = serde_json::to_value(&report).map_err(|e| CliError::io(out_dir.join("report.json"), e))?;
    writer.write_json("report.json", &value)?;
    for v in report.verdicts.iter().filter(|v| !v.passed) {
        log::warn!("check `{}` failed: {:e} > {:e}", v.name, v.value, v.tolerance);
    }
    Ok(report)
}

fn write_observed(writer: &mut ArtifactWriter, data: &ObservedData) -> Result<(), CliError> {
    writer.write("observed.csv", data.to_csv().as_bytes())?;
    writer.write_json("observed.json", &data.to_json())?;
    Ok(())
}

fn write_estimate(writer: &mut ArtifactWriter, result: &InversionResult) -> Result<(), CliError> {
    writer.write_json("estimate.json", &result.to_json())?;
    if let Some(csv) = result.to_csv() {
        writer.write("estimate.csv", csv.as_bytes())?;
    }
    Ok(())
}

fn field_norms(field: &SpaceTimeField) -> Vec<f64> {
    (0..field.time().len()).map(|k| field.grid().norm(field.row(k))).collect()
}

fn run_forward(cfg: &ExperimentConfig, prep: &Prepared, writer: &mut ArtifactWriter, phases: &mut Phases) -> Result<Outcome, CliError> {
    let field = phases
        .time("forward", || solve_forward(&prep.y0, &prep.source, &prep.order, &prep.eig, &prep.tg))
        .map_err(CliError::numerical("forward solve"))?;
    let mut checks = BTreeMap::new();
    let mut verdicts = Vec::new();
    let norms = field_norms(&field);
    let max_norm = norms.iter().copied().fold(0.0, f64::max);
    checks.insert("max_abs".into(), field.max_abs());
    checks.insert("max_norm".into(), max_norm);
    checks.insert(
        "initial_tail_energy".into(),
        tail_energy(&prep.y0, &prep.eig).map_err(CliError::numerical("projection"))?,
    );

    // A single eigenmode without source evolves by the scalar kernel alone.
    if let (Some(SpatialConfig::Mode { n, amplitude }), SourceSpec::None) = (&cfg.initial, &prep.source) {
        let a = C64::new(amplitude[0], amplitude[1]);
        let phi = prep.eig.phi_complex(n - 1);
        let lambda = prep.eig.lambdas()[n - 1];
        let mut worst: f64 = 0.0;
        let mut kernel_max: f64 = 0.0;
        for k in 0..prep.tg.len() {
            let e = ml_kernel(&prep.order, lambda, prep.tg.time(k), KernelKind::State).map_err(CliError::numerical("kernel check"))? * a;
            worst = worst.max((prep.grid.inner(field.row(k), &phi) - e).norm());
            kernel_max = kernel_max.max(e.norm());
        }
        checks.insert("single_mode_kernel_error".into(), worst);
        checks.insert("kernel_max_norm".into(), kernel_max);
        verdicts.push(Verdict::at_most("single_mode_trajectory", worst, 1e-12));
        verdicts.push(Verdict::at_most("max_norm_vs_kernel", (max_norm - kernel_max).abs(), 1e-12 * (1.0 + kernel_max)));
    }
    if let Some(a) = &prep.operator {
        let t_min = 0.1 * prep.tg.t_final();
        let r = phases
            .time("pde_residual", || forward::pde_residual(&field, &prep.source, &prep.order, a, t_min))
            .map_err(CliError::numerical("PDE residual"))?;
        checks.insert("pde_residual".into(), r);
    }

    phases.time("write", || -> Result<(), CliError> {
        writer.write("field.csv", field.to_csv().as_bytes())?;
        writer.write_json("field.json", &field.to_json())?;
        writer.write_json("eigensystem.json", &prep.eig.to_json())?;
        Ok(())
    })?;
    if let Some(mask) = &prep.mask {
        let data = phases
            .time("observe", || observe(&field, mask, prep.noise_level, prep.seed))
            .map_err(CliError::numerical("observation"))?;
        checks.insert("data_norm_sq".into(), data.norm_sq());
        write_observed(writer, &data)?;
    }
    Ok(Outcome { checks, verdicts })
}

fn relative_error(estimate: &[C64], truth: &ModalVector) -> f64 {
    let diff: f64 = estimate.iter().zip(truth.coeffs()).map(|(a, b)| (a - b).norm_sqr()).sum();
    let t = truth.norm();
    if t > 0.0 {
        diff.sqrt() / t
    } else {
        diff.sqrt()
    }
}

fn run_spatial_inversion(prep: &Prepared, writer: &mut ArtifactWriter, phases: &mut Phases) -> Result<Outcome, CliError> {
    let inv = prep.inversion.as_ref().ok_or_else(|| CliError::config("inversion", "required"))?;
    let mask = prep.mask.as_ref().ok_or_else(|| CliError::config("mask", "required for inversions"))?;
    let n_modes = inv.n_modes;
    let source_problem = prep.problem == Problem::InvertSource;

    let field = phases
        .time("forward", || solve_forward(&prep.y0, &prep.source, &prep.order, &prep.eig, &prep.tg))
        .map_err(CliError::numerical("synthetic data"))?;
    let data = phases
        .time("observe", || observe(&field, mask, prep.noise_level, prep.seed))
        .map_err(CliError::numerical("observation"))?;

    let (truth_samples, rho) = match &prep.source {
        SourceSpec::Separable { rho, g } if source_problem => (g.clone(), rho.clone()),
        _ => (prep.y0.clone(), Vec::new()),
    };
    let sub = prep.eig.truncate(n_modes).map_err(CliError::numerical("truncation"))?;
    let truth = project(&truth_samples, &sub).map_err(CliError::numerical("projection"))?;

    let design = phases
        .time("design", || {
            if source_problem {
                build_source_design(&rho, &prep.eig, &prep.order, &prep.tg, mask, n_modes)
            } else {
                build_initial_design(&prep.eig, &prep.order, &prep.tg, mask, n_modes)
            }
        })
        .map_err(CliError::numerical("design assembly"))?;
    let gamma = match inv.gamma {
        GammaConfig::Value(g) => g,
        GammaConfig::Rule(GammaRule::Discrepancy) => phases
            .time("gamma", || discrepancy_gamma(&design, &weighted_data(&data), expected_noise_norm(&data), inv.tau))
            .map_err(CliError::numerical("discrepancy principle"))?,
    };
    let tk = TikhonovConfig::new(gamma, n_modes).map_err(|e| CliError::config("inversion.gamma", e.to_string()))?;
    let result = phases
        .time("inverse", || {
            if source_problem {
                invert_source(&data, &rho, &prep.order, &prep.eig, &prep.tg, mask, &tk)
            } else {
                invert_initial(&data, &design, &tk, &prep.eig)
            }
        })
        .map_err(CliError::numerical("inversion"))?;

    let err = relative_error(result.modal().unwrap_or_default(), &truth);
    let mut checks = BTreeMap::new();
    checks.insert("relative_error".into(), err);
    checks.insert("gamma".into(), gamma);
    checks.insert("residual".into(), result.residual);
    checks.insert("truth_tail_energy".into(), tail_energy(&truth_samples, &sub).map_err(CliError::numerical("projection"))?);
    checks.insert("data_norm_sq".into(), data.norm_sq());
    let tolerance = match (prep.noise_level > 0.0, source_problem) {
        (true, _) => 1e-1,
        (false, true) => 1e-5,
        (false, false) => 1e-6,
    };
    let verdicts = vec![Verdict::at_most("relative_error", err, tolerance)];
    phases.time("write", || -> Result<(), CliError> {
        write_observed(writer, &data)?;
        write_estimate(writer, &result)
    })?;
    Ok(Outcome { checks, verdicts })
}

fn run_order_inversion(prep: &Prepared, writer: &mut ArtifactWriter, phases: &mut Phases) -> Result<Outcome, CliError> {
    let mask = prep.mask.as_ref().ok_or_else(|| CliError::config("mask", "required for inversions"))?;
    let field = phases
        .time("forward", || solve_forward(&prep.y0, &prep.source, &prep.order, &prep.eig, &prep.tg))
        .map_err(CliError::numerical("synthetic data"))?;
    let data = phases
        .time("observe", || observe(&field, mask, prep.noise_level, prep.seed))
        .map_err(CliError::numerical("observation"))?;
    let known = match &prep.source {
        SourceSpec::Separable { rho, g } => OrderProblem::Source { rho: rho.clone(), g: g.clone() },
        _ => OrderProblem::Initial { y0: prep.y0.clone() },
    };
    let result = phases
        .time("inverse", || invert_order(&data, &known, prep.order.phase(), &prep.eig, &prep.tg, mask, &prep.order_search))
        .map_err(CliError::numerical("order search"))?;
    let alpha_hat = result.scalar().unwrap_or(f64::NAN);
    let err = (alpha_hat - prep.order.alpha()).abs();
    let mut checks = BTreeMap::new();
    checks.insert("alpha_hat".into(), alpha_hat);
    checks.insert("alpha_error".into(), err);
    checks.insert("misfit".into(), result.residual);
    checks.insert("data_norm_sq".into(), data.norm_sq());
    let tolerance = if prep.noise_level > 0.0 { 5e-2 } else { 1e-3 };
    let verdicts = vec![Verdict::at_most("alpha_error", err, tolerance)];
    phases.time("write", || -> Result<(), CliError> {
        write_observed(writer, &data)?;
        write_estimate(writer, &result)
    })?;
    Ok(Outcome { checks, verdicts })
}

fn run_ml_eval(alpha: f64, beta: f64, z: &[C64], writer: &mut ArtifactWriter) -> Result<Outcome, CliError> {
    let p = MlParams::new(alpha, beta).map_err(|e| CliError::config("ml_eval", e.to_string()))?;
    let mut csv = String::from("re_z,im_z,re,im\n");
    let mut checks = BTreeMap::new();
    let mut worst_recurrence: f64 = 0.0;
    let shifted = MlParams::new(alpha, alpha + beta).map_err(|e| CliError::config("ml_eval", e.to_string()))?;
    for &zi in z {
        let e = ml_eval(p, zi).map_err(CliError::numerical("Mittag-Leffler evaluation"))?;
        let s = ml_eval(shifted, zi).map_err(CliError::numerical("Mittag-Leffler evaluation"))?;
        let r = (e - tfslab_core::gamma::rgamma(beta) - zi * s).norm() / (1.0 + e.norm());
        worst_recurrence = worst_recurrence.max(r);
        csv.push_str(&format!("{:?},{:?},{:?},{:?}\n", zi.re, zi.im, e.re, e.im));
    }
    checks.insert("points".into(), z.len() as f64);
    checks.insert("recurrence_residual".into(), worst_recurrence);
    writer.write("ml_eval.csv", csv.as_bytes())?;
    Ok(Outcome {
        verdicts: vec![Verdict::at_most("recurrence_residual", worst_recurrence, 1e-9)],
        checks,
    })
}
