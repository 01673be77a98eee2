//! Recovery of the initial state, the spatial source factor and the order
//! from observations on `(0, T) × E`, together with the transform and
//! contour machinery behind the uniqueness statements.
//!
//! Unknowns are modal coefficients on the first `n_modes` eigenfunctions.
//! Rows of every design matrix are indexed by `(t_i, x_j)`, time-major over
//! the masked nodes, and weighted by `√(h·Δt)` so that `G^H G` approximates the
//! continuous normal operator on `L²((0,T) × E)`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::forward::{solve_modal, source_response, state_trajectory, ModalVector, SourceSpec, TimeGrid};
use crate::linalg::{singular_values, solve_shifted_hermitian};
use crate::mlf::{ml_kernel, KernelKind};
use crate::observe::{ObservationMask, ObservedData};
use crate::quad::{geometric_breaks, integrate_panels};
use crate::spectral::{EigenGroup, EigenSystem};
use crate::{par, Error, FractionalOrder, Phase, Result, C64};

/// Rank threshold below which an unregularized solve is refused.
pub const RANK_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TikhonovConfig {
    pub gamma: f64,
    pub n_modes: usize,
}

impl TikhonovConfig {
    pub fn new(gamma: f64, n_modes: usize) -> Result<Self> {
        let cfg = Self { gamma, n_modes };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::invalid("gamma", format!("{} must be >= 0", self.gamma)));
        }
        if self.n_modes == 0 {
            return Err(Error::invalid("n_modes", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderSearchConfig {
    pub alpha_lo: f64,
    pub alpha_hi: f64,
    pub coarse_points: usize,
    pub refine_tol: f64,
}

impl Default for OrderSearchConfig {
    fn default() -> Self {
        Self {
            alpha_lo: 0.05,
            alpha_hi: 0.95,
            coarse_points: 25,
            refine_tol: 1e-6,
        }
    }
}

impl OrderSearchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_lo > 0.0 && self.alpha_hi < 1.0) {
            return Err(Error::invalid("alpha bracket", format!("({}, {}) not inside (0, 1)", self.alpha_lo, self.alpha_hi)));
        }
        if !(self.alpha_lo < self.alpha_hi) {
            return Err(Error::EmptyBracket {
                lo: self.alpha_lo,
                hi: self.alpha_hi,
            });
        }
        if self.coarse_points < 3 {
            return Err(Error::invalid("coarse_points", format!("{} < 3", self.coarse_points)));
        }
        if !(self.refine_tol > 0.0) {
            return Err(Error::invalid("refine_tol", "must be positive"));
        }
        Ok(())
    }
}

/// What an inversion recovered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Estimate {
    /// Modal coefficients and their synthesis on the grid nodes.
    Spatial { modal: Vec<C64>, x: Vec<f64>, samples: Vec<C64> },
    Scalar { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InversionResult {
    pub estimate: Estimate,
    /// Data misfit `‖G ĉ − d‖` (or `M(α̂)` for the order).
    pub residual: f64,
    pub reg_norm: f64,
    pub diagnostics: BTreeMap<String, f64>,
}

impl InversionResult {
    pub fn modal(&self) -> Option<&[C64]> {
        match &self.estimate {
            Estimate::Spatial { modal, .. } => Some(modal),
            Estimate::Scalar { .. } => None,
        }
    }

    pub fn scalar(&self) -> Option<f64> {
        match self.estimate {
            Estimate::Scalar { value } => Some(value),
            Estimate::Spatial { .. } => None,
        }
    }

    pub fn diagnostic(&self, key: &str) -> Option<f64> {
        self.diagnostics.get(key).copied()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).unwrap_or(serde_json::Value::Null)
    }

    /// `x,re,im` for spatial estimates.
    pub fn to_csv(&self) -> Option<String> {
        let Estimate::Spatial { x, samples, .. } = &self.estimate else {
            return None;
        };
        let mut out = String::from("x,re,im\n");
        for (xj, v) in x.iter().zip(samples) {
            let _ = writeln!(out, "{xj:?},{:?},{:?}", v.re, v.im);
        }
        Some(out)
    }
}

fn row_weight(tg: &TimeGrid, mask: &ObservationMask) -> f64 {
    (tg.dt() * mask.grid().spacing()).sqrt()
}

fn check_modes(n_modes: usize, eig: &EigenSystem) -> Result<()> {
    if n_modes == 0 || n_modes > eig.len() {
        return Err(Error::invalid("n_modes", format!("{n_modes} not in 1..={}", eig.len())));
    }
    Ok(())
}

/// Design matrix from per-mode scalar trajectories `traj[n][k]`.
fn design_from_trajectories(traj: &[Vec<C64>], eig: &EigenSystem, tg: &TimeGrid, mask: &ObservationMask) -> DMatrix<C64> {
    let w = row_weight(tg, mask);
    let cols = mask.len();
    DMatrix::from_fn(tg.len() * cols, traj.len(), |r, n| {
        let (k, jj) = (r / cols, r % cols);
        traj[n][k] * (eig.phi(n)[mask.indices()[jj]] * w)
    })
}

/// `G[(t_i, x_j), n] = E_{α,1}(a_n t_i^α) φ_n(x_j) √(hΔt)`.
pub fn build_initial_design(
    eig: &EigenSystem,
    order: &FractionalOrder,
    tg: &TimeGrid,
    mask: &ObservationMask,
    n_modes: usize,
) -> Result<DMatrix<C64>> {
    check_modes(n_modes, eig)?;
    if mask.grid() != eig.grid() {
        return Err(Error::invalid("mask", "mask and eigen-system use different grids"));
    }
    let times = tg.times();
    let traj = par::try_map_indexed(n_modes, |n| state_trajectory(order, eig.lambdas()[n], &times))?;
    Ok(design_from_trajectories(&traj, eig, tg, mask))
}

/// Columns are the observed responses to `ρ ⊗ φ_n`.
pub fn build_source_design(
    rho: &[C64],
    eig: &EigenSystem,
    order: &FractionalOrder,
    tg: &TimeGrid,
    mask: &ObservationMask,
    n_modes: usize,
) -> Result<DMatrix<C64>> {
    check_modes(n_modes, eig)?;
    Error::check_len("rho", tg.len(), rho.len())?;
    if !rho.iter().any(|r| r.norm() > 0.0) {
        return Err(Error::DegenerateTemporalFactor);
    }
    let traj = par::try_map_indexed(n_modes, |n| source_response(order, eig.lambdas()[n], rho, tg))?;
    Ok(design_from_trajectories(&traj, eig, tg, mask))
}

/// Observed data flattened like the design rows and weighted by `√(hΔt)`.
pub fn weighted_data(data: &ObservedData) -> Vec<C64> {
    let w = row_weight(data.time(), data.mask());
    data.flatten().into_iter().map(|v| v * w).collect()
}

/// Solution of `min ‖G c − d‖² + γ‖c‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct TikhonovSolution {
    pub coeffs: Vec<C64>,
    pub residual: f64,
    pub reg_norm: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
}

/// Regularized normal equations `(G^H G + γI) c = G^H d` by Cholesky.
///
/// With `γ = 0` the solve is attempted only when `σ_min(G) > 10⁻⁸ σ_max(G)`
/// and then goes through the SVD of `G`.
pub fn tikhonov_solve(g: &DMatrix<C64>, d: &[C64], gamma: f64) -> Result<TikhonovSolution> {
    Error::check_len("data vector", g.nrows(), d.len())?;
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::invalid("gamma", format!("{gamma} must be >= 0")));
    }
    let sv = singular_values(g);
    let sigma_max = sv.first().copied().unwrap_or(0.0);
    let sigma_min = if g.ncols() > g.nrows() { 0.0 } else { sv.last().copied().unwrap_or(0.0) };
    if gamma == 0.0 && !(sigma_min > RANK_TOL * sigma_max) {
        return Err(Error::RankDeficient { sigma_min, sigma_max });
    }
    let dv = DVector::from_column_slice(d);
    let coeffs: Vec<C64> = if gamma == 0.0 {
        // Unregularized: least squares through the SVD, which avoids squaring
        // the condition number.
        let svd = g.clone().svd(true, true);
        let x = svd.solve(&dv, RANK_TOL * sigma_max).map_err(|_| Error::RankDeficient { sigma_min, sigma_max })?;
        x.iter().copied().collect()
    } else {
        let normal = g.adjoint() * g;
        let rhs: Vec<C64> = (g.adjoint() * &dv).iter().copied().collect();
        solve_shifted_hermitian(&normal, gamma, &rhs).ok_or(Error::RankDeficient { sigma_min, sigma_max })?
    };
    let c = DVector::from_column_slice(&coeffs);
    let residual = (g * &c - &dv).norm();
    let reg_norm = c.norm();
    if !(residual.is_finite() && reg_norm.is_finite()) {
        return Err(Error::NonFinite {
            context: "Tikhonov solution".into(),
        });
    }
    Ok(TikhonovSolution {
        coeffs,
        residual,
        reg_norm,
        sigma_min,
        sigma_max,
    })
}

/// Noise norm `δ` expected in the weighted data for relative noise `level`
/// (scaled by `max|d|` as the observation model does).
pub fn expected_noise_norm(data: &ObservedData) -> f64 {
    let w = row_weight(data.time(), data.mask());
    let peak = data.flatten().iter().fold(0.0_f64, |m, v| m.max(v.norm()));
    data.noise_level() * peak * w * (data.flatten().len() as f64).sqrt()
}

/// γ with `‖G c_γ − d‖ = τ δ` by bisection in `log γ`. Returns the smallest
/// searched γ when even that leaves a residual above `τ δ`.
pub fn discrepancy_gamma(g: &DMatrix<C64>, d: &[C64], delta: f64, tau: f64) -> Result<f64> {
    let scale = singular_values(g).first().copied().unwrap_or(1.0).powi(2).max(f64::MIN_POSITIVE);
    let (mut lo, mut hi) = ((1e-16 * scale).ln(), scale.ln());
    let target = tau * delta;
    let residual = |lg: f64| tikhonov_solve(g, d, lg.exp()).map(|s| s.residual);
    if residual(lo)? >= target {
        return Ok(lo.exp());
    }
    if residual(hi)? <= target {
        return Ok(hi.exp());
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if residual(mid)? > target {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-3 {
            break;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

fn spatial_result(sol: TikhonovSolution, eig: &EigenSystem, mut diagnostics: BTreeMap<String, f64>, gamma: f64) -> Result<InversionResult> {
    let n = sol.coeffs.len();
    let sub = eig.truncate(n)?;
    let samples = crate::forward::synthesize(&ModalVector::new(sol.coeffs.clone())?, &sub)?;
    diagnostics.insert("sigma_min".into(), sol.sigma_min);
    diagnostics.insert("sigma_max".into(), sol.sigma_max);
    diagnostics.insert("gamma".into(), gamma);
    diagnostics.insert("n_modes".into(), n as f64);
    Ok(InversionResult {
        estimate: Estimate::Spatial {
            modal: sol.coeffs,
            x: eig.grid().nodes(),
            samples,
        },
        residual: sol.residual,
        reg_norm: sol.reg_norm,
        diagnostics,
    })
}

/// Recover the initial modal coefficients from observations.
pub fn invert_initial(data: &ObservedData, g: &DMatrix<C64>, cfg: &TikhonovConfig, eig: &EigenSystem) -> Result<InversionResult> {
    cfg.validate()?;
    Error::check_len("design columns", cfg.n_modes, g.ncols())?;
    check_modes(cfg.n_modes, eig)?;
    let d = weighted_data(data);
    let sol = tikhonov_solve(g, &d, cfg.gamma)?;
    let mut diag = BTreeMap::new();
    diag.insert("rows".into(), g.nrows() as f64);
    spatial_result(sol, eig, diag, cfg.gamma)
}

/// Recover the spatial factor `g` of `f = ρ(t) g(x)` from observations of the
/// solution with zero initial state.
pub fn invert_source(
    data: &ObservedData,
    rho: &[C64],
    order: &FractionalOrder,
    eig: &EigenSystem,
    tg: &TimeGrid,
    mask: &ObservationMask,
    cfg: &TikhonovConfig,
) -> Result<InversionResult> {
    cfg.validate()?;
    let g = build_source_design(rho, eig, order, tg, mask, cfg.n_modes)?;
    let d = weighted_data(data);
    let sol = tikhonov_solve(&g, &d, cfg.gamma)?;
    let mut diag = BTreeMap::new();
    diag.insert("rows".into(), g.nrows() as f64);
    diag.insert("rho_max".into(), rho.iter().fold(0.0, |m, r| m.max(r.norm())));
    spatial_result(sol, eig, diag, cfg.gamma)
}

/// The known part of the problem when the order is unknown.
#[derive(Debug, Clone, PartialEq)]
pub enum OrderProblem {
    Initial { y0: Vec<C64> },
    Source { rho: Vec<C64>, g: Vec<C64> },
}

/// Misfit landscape evaluator `M(α) = Σ_i Δt ‖y_α(t_i) − d(t_i)‖²_{L²(E),h}`.
pub struct OrderMisfit<'a> {
    c0: ModalVector,
    src: SourceSpec,
    phase: Phase,
    eig: &'a EigenSystem,
    tg: TimeGrid,
    mask: &'a ObservationMask,
    data: Vec<C64>,
}

impl<'a> OrderMisfit<'a> {
    pub fn new(data: &ObservedData, problem: &OrderProblem, phase: Phase, eig: &'a EigenSystem, tg: &TimeGrid, mask: &'a ObservationMask) -> Result<Self> {
        if data.mask() != mask || data.time() != tg {
            return Err(Error::invalid("data", "observations do not match the given mask or time grid"));
        }
        let zero = vec![C64::new(0.0, 0.0); eig.grid().len()];
        let (y0, src) = match problem {
            OrderProblem::Initial { y0 } => (y0.clone(), SourceSpec::None),
            OrderProblem::Source { rho, g } => (zero, SourceSpec::separable(rho.clone(), g.clone())),
        };
        let c0 = crate::forward::project(&y0, eig)?;
        let source_zero = match &src {
            SourceSpec::Separable { rho, g } => !rho.iter().any(|r| r.norm() > 0.0) || !g.iter().any(|v| v.norm() > 0.0),
            _ => true,
        };
        if c0.norm() == 0.0 && source_zero {
            return Err(Error::ZeroDatum);
        }
        Ok(Self {
            c0,
            src,
            phase,
            eig,
            tg: *tg,
            mask,
            data: weighted_data(data),
        })
    }

    pub fn eval(&self, alpha: f64) -> Result<f64> {
        let order = FractionalOrder::new(alpha, self.phase)?;
        let traj = solve_modal(&self.c0, &self.src, &order, self.eig, &self.tg)?;
        let w = row_weight(&self.tg, self.mask);
        let cols = self.mask.len();
        let mut total = 0.0;
        for k in 0..self.tg.len() {
            for (jj, &j) in self.mask.indices().iter().enumerate() {
                let y: C64 = traj.coeffs.iter().enumerate().map(|(n, c)| c[k] * self.eig.phi(n)[j]).sum();
                total += (y * w - self.data[k * cols + jj]).norm_sqr();
            }
        }
        Ok(total)
    }
}

/// Estimate the order by a coarse scan of `M(α)` followed by golden-section
/// refinement around the best coarse point.
pub fn invert_order(
    data: &ObservedData,
    problem: &OrderProblem,
    phase: Phase,
    eig: &EigenSystem,
    tg: &TimeGrid,
    mask: &ObservationMask,
    cfg: &OrderSearchConfig,
) -> Result<InversionResult> {
    cfg.validate()?;
    let misfit = OrderMisfit::new(data, problem, phase, eig, tg, mask)?;
    let n = cfg.coarse_points;
    let grid: Vec<f64> = (0..n).map(|i| cfg.alpha_lo + (cfg.alpha_hi - cfg.alpha_lo) * i as f64 / (n - 1) as f64).collect();
    let values = par::try_map_indexed(n, |i| misfit.eval(grid[i]))?;
    let (best, &best_val) = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .ok_or(Error::EmptyBracket { lo: cfg.alpha_lo, hi: cfg.alpha_hi })?;
    let worst = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if worst - best_val <= 1e-12 * worst.abs() {
        return Err(Error::FlatLandscape);
    }
    let (mut a, mut b) = (grid[best.saturating_sub(1)], grid[(best + 1).min(n - 1)]);
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - ratio * (b - a);
    let mut x2 = a + ratio * (b - a);
    let (mut f1, mut f2) = (misfit.eval(x1)?, misfit.eval(x2)?);
    let mut evaluations = n + 2;
    while b - a > cfg.refine_tol {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - ratio * (b - a);
            f1 = misfit.eval(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + ratio * (b - a);
            f2 = misfit.eval(x2)?;
        }
        evaluations += 1;
    }
    let (alpha_hat, m_hat) = [(x1, f1), (x2, f2), (grid[best], best_val)]
        .into_iter()
        .min_by(|p, q| p.1.total_cmp(&q.1))
        .unwrap_or((grid[best], best_val));
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("evaluations".into(), evaluations as f64);
    diagnostics.insert("coarse_best_alpha".into(), grid[best]);
    diagnostics.insert("coarse_min".into(), best_val);
    diagnostics.insert("coarse_max".into(), worst);
    diagnostics.insert("data_norm_sq".into(), data.norm_sq());
    Ok(InversionResult {
        estimate: Estimate::Scalar { value: alpha_hat },
        residual: m_hat,
        reg_norm: 0.0,
        diagnostics,
    })
}

/// Outcome of [`laplace_identity_gap`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaplaceGap {
    pub gap: f64,
    pub truncation_bound: f64,
    pub quadrature_error: f64,
}

/// Compare `∫₀^T e^{−zt} E_{α,1}(a t^α) dt` with `z^{α−1}/(z^α − a)`,
/// `a = e^{iφ} μ`. The neglected tail is bounded by `c0 e^{−Re z·T}/Re z`.
pub fn laplace_identity_gap(order: &FractionalOrder, mu: f64, z: C64, t_trunc: f64, c0: f64) -> Result<LaplaceGap> {
    if !(z.re > 0.0) {
        return Err(Error::invalid("z", format!("Re z = {} must be positive", z.re)));
    }
    if !(t_trunc > 0.0 && t_trunc.is_finite()) {
        return Err(Error::invalid("t_trunc", "must be positive"));
    }
    if !(mu >= 0.0) {
        return Err(Error::invalid("mu", "must be >= 0"));
    }
    let alpha = order.alpha();
    let a = order.rotation() * mu;
    let exact = z.powf(alpha - 1.0) / (z.powf(alpha) - a);
    let f = |t: f64| -> Result<C64> {
        if t == 0.0 {
            return Ok(C64::new(1.0, 0.0));
        }
        Ok((-z * t).exp() * ml_kernel(order, mu, t, KernelKind::State)?)
    };
    // panels sized to the oscillation and decay scales of the integrand
    let scale = 1.0 / z.norm().max(mu.powf(1.0 / alpha)).max(1.0);
    let breaks = geometric_breaks(1e-10 * scale, t_trunc, 4);
    let q = integrate_panels(&f, &breaks, 1e-11, 1e-12, 20_000)?;
    Ok(LaplaceGap {
        gap: (q.value - exact).norm(),
        truncation_bound: c0 * (-z.re * t_trunc).exp() / z.re,
        quadrature_error: q.error_estimate,
    })
}

/// Circle `|η − center| = radius` around the pole of distinct eigenvalue `ell`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContourSpec {
    /// 1-based index into the distinct eigenvalues.
    pub ell: usize,
    pub radius: f64,
    pub n_quad: usize,
    pub center: C64,
}

/// Pole location `e^{iφ} μ_k` of the resolvent for group `k`.
pub fn resolvent_pole(order: &FractionalOrder, mu: f64) -> C64 {
    order.rotation() * mu
}

impl ContourSpec {
    /// Validate against the pole set; `radius = None` uses a third of the gap
    /// to the nearest other pole.
    pub fn new(ell: usize, radius: Option<f64>, n_quad: usize, groups: &[EigenGroup], order: &FractionalOrder) -> Result<Self> {
        if ell == 0 || ell > groups.len() {
            return Err(Error::invalid("ell", format!("{ell} not in 1..={}", groups.len())));
        }
        if n_quad < 8 {
            return Err(Error::invalid("n_quad", format!("{n_quad} < 8")));
        }
        let center = resolvent_pole(order, groups[ell - 1].value);
        let gap = groups
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != ell - 1)
            .map(|(_, g)| (resolvent_pole(order, g.value) - center).norm())
            .fold(f64::INFINITY, f64::min);
        let radius = radius.unwrap_or(if gap.is_finite() { gap / 3.0 } else { 1.0 });
        if !(radius > 0.0 && radius < 0.5 * gap) {
            return Err(Error::ContourRadius {
                radius,
                half_gap: 0.5 * gap,
            });
        }
        Ok(Self {
            ell,
            radius,
            n_quad,
            center,
        })
    }
}

/// `(1/2πi) ∮ S(η) dη` by the trapezoid rule on `spec`'s circle.
pub fn extract_modal_projection<F>(resolvent: F, spec: &ContourSpec) -> Result<Vec<C64>>
where
    F: Fn(C64) -> Result<Vec<C64>>,
{
    if spec.n_quad < 8 {
        return Err(Error::invalid("n_quad", format!("{} < 8", spec.n_quad)));
    }
    let mut acc: Option<Vec<C64>> = None;
    for j in 0..spec.n_quad {
        let rot = C64::from_polar(1.0, 2.0 * PI * j as f64 / spec.n_quad as f64);
        let s = resolvent(spec.center + rot * spec.radius)?;
        let acc = acc.get_or_insert_with(|| vec![C64::new(0.0, 0.0); s.len()]);
        Error::check_len("resolvent value", acc.len(), s.len())?;
        for (a, v) in acc.iter_mut().zip(s) {
            *a += v * rot;
        }
    }
    let scale = spec.radius / spec.n_quad as f64;
    Ok(acc.unwrap_or_default().into_iter().map(|v| v * scale).collect())
}

/// `S(η) = Σ_k P_k y0 / (η − e^{iφ}μ_k)` restricted to the mask, with `P_k`
/// the projection onto the eigenspace of distinct eigenvalue `μ_k`.
#[derive(Debug, Clone)]
pub struct ModalResolvent {
    poles: Vec<C64>,
    projections: Vec<Vec<C64>>,
}

impl ModalResolvent {
    pub fn new(c0: &ModalVector, eig: &EigenSystem, mask: &ObservationMask, order: &FractionalOrder) -> Result<Self> {
        Error::check_len("modal vector", eig.len(), c0.len())?;
        let mut poles = Vec::new();
        let mut projections = Vec::new();
        for group in eig.distinct() {
            let mut v = vec![C64::new(0.0, 0.0); mask.len()];
            for n in group.start..group.end {
                for (o, &j) in v.iter_mut().zip(mask.indices()) {
                    *o += c0.coeffs()[n] * eig.phi(n)[j];
                }
            }
            poles.push(resolvent_pole(order, group.value));
            projections.push(v);
        }
        Ok(Self { poles, projections })
    }

    /// `P_ℓ y0` on the mask (1-based `ell`).
    pub fn projection(&self, ell: usize) -> &[C64] {
        &self.projections[ell - 1]
    }

    pub fn eval(&self, eta: C64) -> Result<Vec<C64>> {
        let mut out = vec![C64::new(0.0, 0.0); self.projections.first().map_or(0, Vec::len)];
        for (p, v) in self.poles.iter().zip(&self.projections) {
            let d = eta - p;
            if d.norm() == 0.0 {
                return Err(Error::invalid("eta", "evaluated at a pole"));
            }
            for (o, x) in out.iter_mut().zip(v) {
                *o += x / d;
            }
        }
        Ok(out)
    }
}

/// Smallest singular value of the discrete convolution `w ↦ ρ ∗ w`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvolutionCheck {
    pub sigma_min: f64,
    pub norm: f64,
    /// `σ_min < 10⁻¹² ‖C‖`: numerically not injective.
    pub flagged: bool,
}

/// Lower-triangular `C[i][k] = ρ(t_{i−k+1}) Δt` for `ρ` sampled on the time grid.
pub fn convolution_matrix(rho: &[C64], dt: f64) -> DMatrix<C64> {
    let n = rho.len();
    DMatrix::from_fn(n, n, |i, k| if i >= k { rho[i - k] * dt } else { C64::new(0.0, 0.0) })
}

pub fn convolution_sigma_min(rho: &[C64], dt: f64) -> ConvolutionCheck {
    if rho.is_empty() || rho.iter().all(|r| r.norm() == 0.0) {
        return ConvolutionCheck {
            sigma_min: 0.0,
            norm: 0.0,
            flagged: true,
        };
    }
    let sv = singular_values(&convolution_matrix(rho, dt));
    let norm = sv[0];
    let sigma_min = *sv.last().unwrap_or(&0.0);
    ConvolutionCheck {
        sigma_min,
        norm,
        flagged: sigma_min < 1e-12 * norm,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::solve_forward;
    use crate::observe::{make_mask, observe};
    use crate::spectral::{analytic_eigensystem, Grid1D};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn design_row_definition() {
        let g = Grid1D::new(1.0, 9).unwrap();
        let eig = analytic_eigensystem(3, &g).unwrap();
        let order = FractionalOrder::standard(0.5).unwrap();
        let tg = TimeGrid::new(1.0, 2).unwrap();
        let mask = make_mask(&[(0.0, 1.0)], &g).unwrap();
        let gm = build_initial_design(&eig, &order, &tg, &mask, 3).unwrap();
        assert_eq!(gm.shape(), (18, 3));
        let w = (0.5 * g.spacing()).sqrt();
        let e = ml_kernel(&order, eig.lambdas()[2], 1.0, KernelKind::State).unwrap();
        assert!((gm[(9 + 4, 2)] - e * eig.phi(2)[4] * w).norm() < 1e-15);
        assert!(build_initial_design(&eig, &order, &tg, &mask, 4).is_err());
    }

    #[test]
    fn zero_data_gives_zero_estimate() {
        let g = Grid1D::new(1.0, 19).unwrap();
        let eig = analytic_eigensystem(4, &g).unwrap();
        let order = FractionalOrder::standard(0.5).unwrap();
        let tg = TimeGrid::new(1.0, 10).unwrap();
        let mask = make_mask(&[(0.2, 0.4)], &g).unwrap();
        let field = solve_forward(&vec![c(0.0, 0.0); 19], &SourceSpec::None, &order, &eig, &tg).unwrap();
        let data = observe(&field, &mask, 0.0, 0).unwrap();
        let gm = build_initial_design(&eig, &order, &tg, &mask, 4).unwrap();
        let r = invert_initial(&data, &gm, &TikhonovConfig::new(1e-3, 4).unwrap(), &eig).unwrap();
        assert!(r.modal().unwrap().iter().all(|v| *v == c(0.0, 0.0)));
        let rs = invert_source(&data, &[c(1.0, 0.0); 10], &order, &eig, &tg, &mask, &TikhonovConfig::new(1e-3, 4).unwrap()).unwrap();
        assert!(rs.modal().unwrap().iter().all(|v| *v == c(0.0, 0.0)));
    }

    #[test]
    fn degenerate_rho_is_rejected() {
        let g = Grid1D::new(1.0, 9).unwrap();
        let eig = analytic_eigensystem(2, &g).unwrap();
        let order = FractionalOrder::standard(0.5).unwrap();
        let tg = TimeGrid::new(1.0, 4).unwrap();
        let mask = make_mask(&[(0.2, 0.4)], &g).unwrap();
        let r = build_source_design(&[c(0.0, 0.0); 4], &eig, &order, &tg, &mask, 2);
        assert_eq!(r.unwrap_err(), Error::DegenerateTemporalFactor);
    }

    #[test]
    fn rank_deficient_unregularized_solve_is_reported() {
        let g = DMatrix::from_row_slice(3, 2, &[c(1.0, 0.0), c(1.0, 0.0), c(2.0, 0.0), c(2.0, 0.0), c(0.0, 1.0), c(0.0, 1.0)]);
        let r = tikhonov_solve(&g, &[c(1.0, 0.0); 3], 0.0);
        assert!(matches!(r, Err(Error::RankDeficient { .. })));
        assert!(tikhonov_solve(&g, &[c(1.0, 0.0); 3], 1e-6).is_ok());
    }

    #[test]
    fn convolution_examples() {
        assert_eq!(convolution_sigma_min(&[c(0.0, 0.0); 8], 0.1).sigma_min, 0.0);
        // all-ones lower triangle: σ_min = 1/(2 sin((2n−1)π/(4n+2)))
        let n = 40;
        let dt = 0.025;
        let chk = convolution_sigma_min(&vec![c(1.0, 0.0); n], dt);
        let exact = dt / (2.0 * ((2 * n - 1) as f64 * PI / (4 * n + 2) as f64).sin());
        assert!((chk.sigma_min - exact).abs() < 1e-13, "{} vs {exact}", chk.sigma_min);
        assert!(!chk.flagged);
        let step: Vec<C64> = (0..n).map(|k| if k + 1 < n / 2 { c(0.0, 0.0) } else { c(1.0, 0.0) }).collect();
        assert!(convolution_sigma_min(&step, dt).flagged);
    }

    #[test]
    fn contour_on_single_pole() {
        let order = FractionalOrder::standard(0.5).unwrap();
        let groups = [EigenGroup {
            value: 3.0,
            multiplicity: 1,
            start: 0,
            end: 1,
        }];
        let spec = ContourSpec::new(1, Some(0.5), 64, &groups, &order).unwrap();
        let v = vec![c(1.0, -2.0), c(0.25, 0.0)];
        let pole = resolvent_pole(&order, 3.0);
        let out = extract_modal_projection(|eta| Ok(v.iter().map(|x| x / (eta - pole)).collect()), &spec).unwrap();
        for (a, b) in out.iter().zip(&v) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn contour_radius_is_validated() {
        let g = Grid1D::new(1.0, 9).unwrap();
        let eig = analytic_eigensystem(3, &g).unwrap();
        let order = FractionalOrder::standard(0.5).unwrap();
        let gap = eig.lambdas()[1] - eig.lambdas()[0];
        assert!(ContourSpec::new(1, Some(0.6 * gap), 32, eig.distinct(), &order).is_err());
        let s = ContourSpec::new(1, None, 32, eig.distinct(), &order).unwrap();
        assert!((s.radius - gap / 3.0).abs() < 1e-12);
        assert!(ContourSpec::new(1, None, 4, eig.distinct(), &order).is_err());
    }

    #[test]
    fn extraction_ignores_empty_eigenspace() {
        let g = Grid1D::new(1.0, 19).unwrap();
        let eig = analytic_eigensystem(4, &g).unwrap();
        let order = FractionalOrder::standard(0.5).unwrap();
        let mask = make_mask(&[(0.2, 0.4)], &g).unwrap();
        let res = ModalResolvent::new(&ModalVector::unit(4, 1), &eig, &mask, &order).unwrap();
        let spec = ContourSpec::new(1, None, 64, eig.distinct(), &order).unwrap();
        let out = extract_modal_projection(|eta| res.eval(eta), &spec).unwrap();
        assert!(out.iter().all(|v| v.norm() < 1e-8));
        let spec2 = ContourSpec::new(2, None, 64, eig.distinct(), &order).unwrap();
        let out2 = extract_modal_projection(|eta| res.eval(eta), &spec2).unwrap();
        for (a, b) in out2.iter().zip(res.projection(2)) {
            assert!((a - b).norm() < 1e-8);
        }
    }

    #[test]
    fn laplace_gap_reduces_to_exponential_at_zero_mu() {
        let order = FractionalOrder::standard(0.5).unwrap();
        let r = laplace_identity_gap(&order, 0.0, c(1.0, 0.0), 60.0, 1.0).unwrap();
        assert!(r.gap < 1e-10, "{r:?}");
        assert!(laplace_identity_gap(&order, 1.0, c(0.0, 1.0), 10.0, 1.0).is_err());
    }

    #[test]
    fn noiseless_initial_recovery_and_tikhonov_filter() {
        let g = Grid1D::new(1.0, 31).unwrap();
        let eig = analytic_eigensystem(4, &g).unwrap();
        let order = FractionalOrder::standard(0.5).unwrap();
        let tg = TimeGrid::new(1.0, 30).unwrap();
        let mask = make_mask(&[(0.2, 0.4)], &g).unwrap();
        let field = solve_forward(&eig.phi_complex(0), &SourceSpec::None, &order, &eig, &tg).unwrap();
        let data = observe(&field, &mask, 0.0, 0).unwrap();
        let gm = build_initial_design(&eig, &order, &tg, &mask, 4).unwrap();
        let truth = ModalVector::unit(4, 0);
        let err = |est: &[C64], reference: &[C64]| est.iter().zip(reference).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();

        let exact = invert_initial(&data, &gm, &TikhonovConfig::new(0.0, 4).unwrap(), &eig).unwrap();
        assert!(err(exact.modal().unwrap(), truth.coeffs()) < 1e-9);

        // c_γ = V diag(σ²/(σ²+γ)) Vᴴ c for noiseless data
        let gamma = 1e-10;
        let svd = gm.clone().svd(false, true);
        let vt = svd.v_t.unwrap();
        let ct = DVector::from_column_slice(truth.coeffs());
        let mut filtered = DVector::from_element(4, c(0.0, 0.0));
        for (i, &sigma) in svd.singular_values.iter().enumerate() {
            let v = vt.row(i).adjoint();
            let coef = (v.adjoint() * &ct)[(0, 0)] * (sigma * sigma / (sigma * sigma + gamma));
            filtered += v * coef;
        }
        let reg = invert_initial(&data, &gm, &TikhonovConfig::new(gamma, 4).unwrap(), &eig).unwrap();
        let expected: Vec<C64> = filtered.iter().copied().collect();
        assert!(err(reg.modal().unwrap(), &expected) < 1e-9 * (1.0 + err(&expected, truth.coeffs())) + 1e-12);
        assert!(reg.to_csv().unwrap().lines().count() == 32);
    }
}
