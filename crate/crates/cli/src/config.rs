//! Experiment configuration: a single JSON document, unknown keys rejected.
//!
//! [`ExperimentConfig::prepare`] builds every core object the requested
//! pipeline needs, so all validation happens before any computation.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use tfslab_core::forward::{project, synthesize, ModalVector, SourceSpec, TimeGrid};
use tfslab_core::inverse::OrderSearchConfig;
use tfslab_core::observe::{make_mask, ObservationMask};
use tfslab_core::spectral::{analytic_eigensystem, fd_eigensystem, EigenSystem, Grid1D, OperatorSpec, SymTridiag};
use tfslab_core::{FractionalOrder, Phase, C64};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Problem {
    Forward,
    InvertInitial,
    InvertSource,
    InvertOrder,
    MlEval,
    Selftest,
}

impl Problem {
    pub fn name(self) -> &'static str {
        match self {
            Problem::Forward => "forward",
            Problem::InvertInitial => "invert-initial",
            Problem::InvertSource => "invert-source",
            Problem::InvertOrder => "invert-order",
            Problem::MlEval => "ml-eval",
            Problem::Selftest => "selftest",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub length: f64,
    pub interior_nodes: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            length: 1.0,
            interior_nodes: 63,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub t_final: f64,
    pub n_t: usize,
}

impl Default for TimeConfig {
    fn default() -> Self {
        Self { t_final: 1.0, n_t: 50 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorConfig {
    /// Closed-form Dirichlet Laplacian pairs.
    #[default]
    Analytic,
    /// Finite-difference Dirichlet Laplacian.
    Laplacian,
    Constant { a: f64, p: f64 },
    /// `a` on the `m + 1` cell midpoints, `p` on the `m` interior nodes.
    Samples { a_mid: Vec<f64>, p: Vec<f64>, kappa: f64 },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseConfig {
    #[default]
    StandardI,
    PowerIAlpha,
}

impl From<PhaseConfig> for Phase {
    fn from(p: PhaseConfig) -> Self {
        match p {
            PhaseConfig::StandardI => Phase::StandardI,
            PhaseConfig::PowerIAlpha => Phase::PowerIAlpha,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrderConfig {
    pub alpha: f64,
    #[serde(default)]
    pub phase: PhaseConfig,
}

/// A spatial profile on the interior nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpatialConfig {
    Zero,
    /// `amplitude · φ_n` (1-based `n`).
    Mode {
        n: usize,
        #[serde(default = "unit_amplitude")]
        amplitude: [f64; 2],
    },
    /// `Σ_n c_n φ_n` with `c_n = [re, im]`.
    Modes { coeffs: Vec<[f64; 2]> },
    Samples { re: Vec<f64>, im: Vec<f64> },
}

fn unit_amplitude() -> [f64; 2] {
    [1.0, 0.0]
}

/// A temporal profile on the time grid `t_1..t_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TemporalConfig {
    Constant { value: f64 },
    Samples { re: Vec<f64>, im: Vec<f64> },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceConfig {
    #[default]
    None,
    Separable { rho: TemporalConfig, g: SpatialConfig },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(default)]
    pub level: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaRule {
    Discrepancy,
}

/// A fixed `γ ≥ 0` or the discrepancy principle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GammaConfig {
    Value(f64),
    Rule(GammaRule),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InversionConfig {
    pub gamma: GammaConfig,
    pub n_modes: usize,
    /// Safety factor of the discrepancy principle.
    #[serde(default = "default_tau")]
    pub tau: f64,
}

fn default_tau() -> f64 {
    1.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrderSearchSection {
    #[serde(default = "defaults::alpha_lo")]
    pub alpha_lo: f64,
    #[serde(default = "defaults::alpha_hi")]
    pub alpha_hi: f64,
    #[serde(default = "defaults::coarse_points")]
    pub coarse_points: usize,
    #[serde(default = "defaults::refine_tol")]
    pub refine_tol: f64,
}

mod defaults {
    use super::OrderSearchConfig;

    pub fn alpha_lo() -> f64 {
        OrderSearchConfig::default().alpha_lo
    }
    pub fn alpha_hi() -> f64 {
        OrderSearchConfig::default().alpha_hi
    }
    pub fn coarse_points() -> usize {
        OrderSearchConfig::default().coarse_points
    }
    pub fn refine_tol() -> f64 {
        OrderSearchConfig::default().refine_tol
    }
}

impl Default for OrderSearchSection {
    fn default() -> Self {
        let d = OrderSearchConfig::default();
        Self {
            alpha_lo: d.alpha_lo,
            alpha_hi: d.alpha_hi,
            coarse_points: d.coarse_points,
            refine_tol: d.refine_tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlEvalConfig {
    pub alpha: f64,
    pub beta: f64,
    /// Arguments `[re, im]`.
    pub z: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Must match the subcommand when present.
    #[serde(default)]
    pub problem: Option<Problem>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub operator: OperatorConfig,
    /// Eigenpairs kept in the modal expansion.
    #[serde(default = "default_modes")]
    pub n_modes: usize,
    #[serde(default)]
    pub time: TimeConfig,
    #[serde(default)]
    pub order: Option<OrderConfig>,
    #[serde(default)]
    pub initial: Option<SpatialConfig>,
    #[serde(default)]
    pub source: SourceConfig,
    #[serde(default)]
    pub mask: Vec<[f64; 2]>,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub inversion: Option<InversionConfig>,
    #[serde(default)]
    pub order_search: OrderSearchSection,
    #[serde(default)]
    pub ml_eval: Option<MlEvalConfig>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_modes() -> usize {
    8
}

/// Parse a config document; errors name the offending path.
pub fn parse(text: &str) -> Result<ExperimentConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::config(if path == "." { "<root>".to_string() } else { path }, e.inner().to_string())
    })
}

/// Everything a pipeline needs, built and validated.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub problem: Problem,
    pub grid: Grid1D,
    pub tg: TimeGrid,
    pub eig: EigenSystem,
    /// Matrix of `−𝓛` when the operator is finite-difference.
    pub operator: Option<SymTridiag>,
    pub order: FractionalOrder,
    pub y0: Vec<C64>,
    pub source: SourceSpec,
    pub mask: Option<ObservationMask>,
    pub noise_level: f64,
    pub seed: u64,
    pub inversion: Option<InversionConfig>,
    pub order_search: OrderSearchConfig,
}

fn check(cond: bool, field: &str, message: impl Into<String>) -> Result<(), CliError> {
    if cond {
        Ok(())
    } else {
        Err(CliError::config(field, message))
    }
}

fn core_err(field: &str) -> impl Fn(tfslab_core::Error) -> CliError + '_ {
    move |e| CliError::config(field, e.to_string())
}

fn finite_all(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

impl ExperimentConfig {
    pub fn seed_override(&mut self, seed: u64) {
        self.noise.seed = seed;
    }

    fn build_spatial(&self, spec: &SpatialConfig, field: &str, eig: &EigenSystem) -> Result<Vec<C64>, CliError> {
        let m = eig.grid().len();
        match spec {
            SpatialConfig::Zero => Ok(vec![C64::new(0.0, 0.0); m]),
            SpatialConfig::Mode { n, amplitude } => {
                check(*n >= 1 && *n <= eig.len(), &format!("{field}.n"), format!("{n} not in 1..={}", eig.len()))?;
                check(finite_all(amplitude), &format!("{field}.amplitude"), "must be finite")?;
                let a = C64::new(amplitude[0], amplitude[1]);
                Ok(eig.phi(n - 1).iter().map(|&p| a * p).collect())
            }
            SpatialConfig::Modes { coeffs } => {
                check(
                    !coeffs.is_empty() && coeffs.len() <= eig.len(),
                    &format!("{field}.coeffs"),
                    format!("length {} not in 1..={}", coeffs.len(), eig.len()),
                )?;
                check(coeffs.iter().all(|c| finite_all(c)), &format!("{field}.coeffs"), "must be finite")?;
                let mut c: Vec<C64> = coeffs.iter().map(|c| C64::new(c[0], c[1])).collect();
                c.resize(eig.len(), C64::new(0.0, 0.0));
                synthesize(&ModalVector::new(c).map_err(core_err(field))?, eig).map_err(core_err(field))
            }
            SpatialConfig::Samples { re, im } => {
                check(re.len() == m, &format!("{field}.re"), format!("length {} != interior_nodes {m}", re.len()))?;
                check(im.len() == m, &format!("{field}.im"), format!("length {} != interior_nodes {m}", im.len()))?;
                check(finite_all(re) && finite_all(im), field, "samples must be finite")?;
                Ok(re.iter().zip(im).map(|(&a, &b)| C64::new(a, b)).collect())
            }
        }
    }

    fn build_temporal(&self, spec: &TemporalConfig, field: &str, tg: &TimeGrid) -> Result<Vec<C64>, CliError> {
        match spec {
            TemporalConfig::Constant { value } => {
                check(value.is_finite(), &format!("{field}.value"), "must be finite")?;
                Ok(vec![C64::new(*value, 0.0); tg.len()])
            }
            TemporalConfig::Samples { re, im } => {
                let n = tg.len();
                check(re.len() == n, &format!("{field}.re"), format!("length {} != n_t {n}", re.len()))?;
                check(im.len() == n, &format!("{field}.im"), format!("length {} != n_t {n}", im.len()))?;
                check(finite_all(re) && finite_all(im), field, "samples must be finite")?;
                Ok(re.iter().zip(im).map(|(&a, &b)| C64::new(a, b)).collect())
            }
        }
    }

    /// Validate for `problem` and build the core objects.
    pub fn prepare(&self, problem: Problem) -> Result<Prepared, CliError> {
        if let Some(p) = self.problem {
            check(p == problem, "problem", format!("config is for `{}` but `{}` was requested", p.name(), problem.name()))?;
        }
        check(
            self.grid.length > 0.0 && self.grid.length.is_finite(),
            "grid.length",
            format!("{} must be positive", self.grid.length),
        )?;
        check(self.grid.interior_nodes >= 3, "grid.interior_nodes", format!("{} < 3", self.grid.interior_nodes))?;
        let grid = Grid1D::new(self.grid.length, self.grid.interior_nodes).map_err(core_err("grid"))?;
        check(
            self.time.t_final > 0.0 && self.time.t_final.is_finite(),
            "time.t_final",
            format!("{} must be positive", self.time.t_final),
        )?;
        check(self.time.n_t >= 2, "time.n_t", format!("{} < 2", self.time.n_t))?;
        let tg = TimeGrid::new(self.time.t_final, self.time.n_t).map_err(core_err("time"))?;
        check(
            self.n_modes >= 1 && self.n_modes <= grid.len(),
            "n_modes",
            format!("{} not in 1..={}", self.n_modes, grid.len()),
        )?;
        let order_cfg = self.order.as_ref().ok_or_else(|| CliError::config("order", "required"))?;
        check(
            order_cfg.alpha > 0.0 && order_cfg.alpha < 1.0,
            "order.alpha",
            format!("{} not in (0, 1)", order_cfg.alpha),
        )?;
        let order = FractionalOrder::new(order_cfg.alpha, order_cfg.phase.into()).map_err(core_err("order.alpha"))?;

        let (eig, operator) = match &self.operator {
            OperatorConfig::Analytic => (analytic_eigensystem(self.n_modes, &grid).map_err(core_err("operator"))?, None),
            other => {
                let spec = match other {
                    OperatorConfig::Laplacian => OperatorSpec::laplacian(&grid),
                    OperatorConfig::Constant { a, p } => {
                        check(a.is_finite() && *a > 0.0, "operator.a", format!("{a} must be positive"))?;
                        check(p.is_finite() && *p >= 0.0, "operator.p", format!("{p} must be >= 0"))?;
                        OperatorSpec::constant(&grid, *a, *p)
                    }
                    OperatorConfig::Samples { a_mid, p, kappa } => {
                        check(finite_all(a_mid), "operator.a_mid", "must be finite")?;
                        check(finite_all(p), "operator.p", "must be finite")?;
                        OperatorSpec {
                            a_mid: a_mid.clone(),
                            p: p.clone(),
                            kappa: *kappa,
                        }
                    }
                    OperatorConfig::Analytic => unreachable!(),
                };
                let a = tfslab_core::spectral::assemble_operator(&spec, &grid).map_err(core_err("operator"))?;
                (fd_eigensystem(&spec, &grid, self.n_modes).map_err(core_err("operator"))?, Some(a))
            }
        };

        let y0 = match (&self.initial, problem) {
            (Some(s), _) => self.build_spatial(s, "initial", &eig)?,
            (None, Problem::InvertInitial) => return Err(CliError::config("initial", "required (true initial state)")),
            (None, _) => vec![C64::new(0.0, 0.0); grid.len()],
        };
        let source = match &self.source {
            SourceConfig::None => SourceSpec::None,
            SourceConfig::Separable { rho, g } => {
                let rho = self.build_temporal(rho, "source.rho", &tg)?;
                let g = self.build_spatial(g, "source.g", &eig)?;
                SourceSpec::separable(rho, g)
            }
        };
        source.validate(&tg, &grid).map_err(core_err("source"))?;

        let mask = if self.mask.is_empty() {
            None
        } else {
            check(self.mask.iter().all(|iv| finite_all(iv)), "mask", "interval ends must be finite")?;
            let intervals: Vec<(f64, f64)> = self.mask.iter().map(|iv| (iv[0], iv[1])).collect();
            Some(make_mask(&intervals, &grid).map_err(core_err("mask"))?)
        };
        check(
            self.noise.level >= 0.0 && self.noise.level.is_finite(),
            "noise.level",
            format!("{} must be >= 0", self.noise.level),
        )?;

        let order_search = OrderSearchConfig {
            alpha_lo: self.order_search.alpha_lo,
            alpha_hi: self.order_search.alpha_hi,
            coarse_points: self.order_search.coarse_points,
            refine_tol: self.order_search.refine_tol,
        };

        match problem {
            Problem::Forward => {}
            Problem::InvertInitial | Problem::InvertSource | Problem::InvertOrder => {
                check(mask.is_some(), "mask", "required for inversions")?;
            }
            Problem::MlEval | Problem::Selftest => {}
        }
        match problem {
            Problem::InvertInitial | Problem::InvertSource => {
                let inv = self.inversion.as_ref().ok_or_else(|| CliError::config("inversion", "required"))?;
                check(
                    inv.n_modes >= 1 && inv.n_modes <= eig.len(),
                    "inversion.n_modes",
                    format!("{} not in 1..={}", inv.n_modes, eig.len()),
                )?;
                match inv.gamma {
                    GammaConfig::Value(g) => check(g >= 0.0 && g.is_finite(), "inversion.gamma", format!("{g} must be >= 0"))?,
                    GammaConfig::Rule(GammaRule::Discrepancy) => {
                        check(self.noise.level > 0.0, "inversion.gamma", "the discrepancy rule needs noise.level > 0")?
                    }
                }
                check(inv.tau >= 1.0 && inv.tau.is_finite(), "inversion.tau", format!("{} must be >= 1", inv.tau))?;
                if problem == Problem::InvertInitial {
                    check(matches!(source, SourceSpec::None), "source", "must be none for initial-state recovery")?;
                }
                if problem == Problem::InvertSource {
                    check(matches!(source, SourceSpec::Separable { .. }), "source", "a separable source is required")?;
                    check(y0.iter().all(|v| v.norm() == 0.0), "initial", "must be zero (or absent) for source recovery")?;
                }
            }
            Problem::InvertOrder => {
                order_search.validate().map_err(core_err("order_search"))?;
                check(
                    matches!(source, SourceSpec::None | SourceSpec::Separable { .. }),
                    "source",
                    "order recovery accepts no source or a separable one",
                )?;
                let c0 = project(&y0, &eig).map_err(core_err("initial"))?;
                let has_source = !matches!(source, SourceSpec::None);
                check(c0.norm() > 0.0 || has_source, "initial", "the known datum vanishes identically")?;
                check(
                    !(c0.norm() > 0.0 && has_source),
                    "source",
                    "give either an initial state or a source for order recovery, not both",
                )?;
            }
            _ => {}
        }

        Ok(Prepared {
            problem,
            grid,
            tg,
            eig,
            operator,
            order,
            y0,
            source,
            mask,
            noise_level: self.noise.level,
            seed: self.noise.seed,
            inversion: self.inversion.clone(),
            order_search,
        })
    }

    /// Validate an `ml-eval` request.
    pub fn prepare_ml_eval(&self) -> Result<(f64, f64, Vec<C64>), CliError> {
        if let Some(p) = self.problem {
            check(p == Problem::MlEval, "problem", format!("config is for `{}` but `ml-eval` was requested", p.name()))?;
        }
        let ml = self.ml_eval.as_ref().ok_or_else(|| CliError::config("ml_eval", "required"))?;
        check(ml.alpha > 0.0 && ml.alpha <= 1.0, "ml_eval.alpha", format!("{} not in (0, 1]", ml.alpha))?;
        check(ml.beta > 0.0 && ml.beta.is_finite(), "ml_eval.beta", format!("{} must be positive", ml.beta))?;
        check(!ml.z.is_empty(), "ml_eval.z", "at least one argument required")?;
        check(ml.z.iter().all(|z| finite_all(z)), "ml_eval.z", "arguments must be finite")?;
        Ok((ml.alpha, ml.beta, ml.z.iter().map(|z| C64::new(z[0], z[1])).collect()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FORWARD: &str = r#"{
        "grid": {"length": 1.0, "interior_nodes": 31},
        "time": {"t_final": 1.0, "n_t": 20},
        "order": {"alpha": 0.5},
        "initial": {"kind": "mode", "n": 1}
    }"#;

    #[test]
    fn minimal_forward_config_prepares() {
        let cfg = parse(FORWARD).unwrap();
        let p = cfg.prepare(Problem::Forward).unwrap();
        assert_eq!(p.grid.len(), 31);
        assert_eq!(p.eig.len(), 8);
        assert!((p.grid.norm(&p.y0) - 1.0).abs() < 1e-12);
        assert!(p.mask.is_none());
    }

    #[test]
    fn out_of_range_alpha_names_the_field() {
        let cfg = parse(&FORWARD.replace("0.5", "1.5")).unwrap();
        match cfg.prepare(Problem::Forward).unwrap_err() {
            CliError::Config { field, .. } => assert_eq!(field, "order.alpha"),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected_with_their_path() {
        let text = FORWARD.replace("\"alpha\": 0.5", "\"alpha\": 0.5, \"alhpa\": 0.4");
        match parse(&text).unwrap_err() {
            CliError::Config { field, message } => {
                assert_eq!(field, "order.alhpa");
                assert!(message.contains("alhpa"), "{message}");
            }
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn gamma_accepts_a_number_or_the_rule() {
        let a: InversionConfig = serde_json::from_str(r#"{"gamma": 1e-8, "n_modes": 4}"#).unwrap();
        assert_eq!(a.gamma, GammaConfig::Value(1e-8));
        assert_eq!(a.tau, 1.1);
        let b: InversionConfig = serde_json::from_str(r#"{"gamma": "discrepancy", "n_modes": 4}"#).unwrap();
        assert_eq!(b.gamma, GammaConfig::Rule(GammaRule::Discrepancy));
    }

    #[test]
    fn inversions_require_a_mask_and_settings() {
        let cfg = parse(FORWARD).unwrap();
        match cfg.prepare(Problem::InvertInitial).unwrap_err() {
            CliError::Config { field, .. } => assert_eq!(field, "mask"),
            e => panic!("{e:?}"),
        }
        let mut cfg = cfg;
        cfg.mask = vec![[0.2, 0.4]];
        match cfg.prepare(Problem::InvertInitial).unwrap_err() {
            CliError::Config { field, .. } => assert_eq!(field, "inversion"),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn mismatched_problem_is_rejected() {
        let mut cfg = parse(FORWARD).unwrap();
        cfg.problem = Some(Problem::InvertOrder);
        assert!(matches!(cfg.prepare(Problem::Forward), Err(CliError::Config { .. })));
    }
}
