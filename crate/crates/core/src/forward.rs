//! Modal solution of `i ∂_t^α y + 𝓛y = f` with Dirichlet conditions, and the
//! discrete fractional calculus used to cross-check it.
//!
//! With `A` the matrix of `−𝓛` and `{λ_n, φ_n}` its eigenpairs, each modal
//! coefficient obeys `∂^α c_n = e^{iφ}(λ_n c_n + f_n)` and therefore
//!
//! ```text
//! c_n(t) = c_n(0) E_{α,1}(a_n t^α) + e^{iφ} ∫₀^t f_n(s) (t−s)^{α−1} E_{α,α}(a_n (t−s)^α) ds,
//! ```
//!
//! with `a_n = e^{iφ} λ_n`. The source is taken piecewise constant in time and
//! each subinterval integral is evaluated exactly through the primitive
//! `τ^α E_{α,α+1}(a τ^α)`, so the weakly singular kernel is never sampled.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::gamma::gamma;
use crate::mlf::{ml_kernel, KernelKind};
use crate::spectral::{EigenSystem, Grid1D, SymTridiag};
use crate::{par, Error, FractionalOrder, Result, C64};

/// Uniform time grid `t_i = i·Δt`, `i = 1..n_t`, `Δt = T/n_t`.
///
/// Index `k` of any per-time vector refers to `t_{k+1}`; `t = 0` is never stored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t_final: f64,
    n_t: usize,
}

impl TimeGrid {
    pub fn new(t_final: f64, n_t: usize) -> Result<Self> {
        if !(t_final > 0.0 && t_final.is_finite()) {
            return Err(Error::invalid("t_final", format!("{t_final} must be positive")));
        }
        if n_t < 2 {
            return Err(Error::invalid("n_t", format!("{n_t} < 2")));
        }
        Ok(Self { t_final, n_t })
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn len(&self) -> usize {
        self.n_t
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.n_t as f64
    }

    /// `t_{k+1}`.
    pub fn time(&self, k: usize) -> f64 {
        (k + 1) as f64 * self.dt()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_t).map(|k| self.time(k)).collect()
    }
}

/// Right-hand side `f(t, x)`, sampled on `TimeGrid × Grid1D`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceSpec {
    None,
    /// `f(t, x) = ρ(t) g(x)`.
    Separable { rho: Vec<C64>, g: Vec<C64> },
    /// Arbitrary samples `values[k][j] = f(t_{k+1}, x_j)`.
    General { values: Vec<Vec<C64>> },
}

impl SourceSpec {
    pub fn separable(rho: Vec<C64>, g: Vec<C64>) -> Self {
        Self::Separable { rho, g }
    }

    /// `max |ρ| > 0` for separable sources; `None` otherwise.
    pub fn rho_nonzero(&self) -> Option<bool> {
        match self {
            Self::Separable { rho, .. } => Some(rho.iter().any(|r| r.norm() > 0.0)),
            _ => None,
        }
    }

    pub fn validate(&self, tg: &TimeGrid, grid: &Grid1D) -> Result<()> {
        match self {
            Self::None => Ok(()),
            Self::Separable { rho, g } => {
                Error::check_len("source rho", tg.len(), rho.len())?;
                Error::check_len("source g", grid.len(), g.len())?;
                check_finite("source", rho.iter().chain(g))
            }
            Self::General { values } => {
                Error::check_len("source time rows", tg.len(), values.len())?;
                for row in values {
                    Error::check_len("source row", grid.len(), row.len())?;
                }
                check_finite("source", values.iter().flatten())
            }
        }
    }

    /// `f(t_{k+1}, ·)`, or `None` for the homogeneous problem.
    pub fn at(&self, k: usize) -> Option<Vec<C64>> {
        match self {
            Self::None => None,
            Self::Separable { rho, g } => Some(g.iter().map(|&v| rho[k] * v).collect()),
            Self::General { values } => Some(values[k].clone()),
        }
    }

    /// Modal source coefficients `f_n(t_{k+1})`, indexed `[n][k]`.
    fn modal(&self, eig: &EigenSystem, tg: &TimeGrid) -> Option<Vec<Vec<C64>>> {
        match self {
            Self::None => None,
            Self::Separable { rho, g } => {
                let gn = project_raw(g, eig);
                Some(gn.iter().map(|&c| rho.iter().map(|&r| r * c).collect()).collect())
            }
            Self::General { values } => {
                let per_time: Vec<Vec<C64>> = (0..tg.len()).map(|k| project_raw(&values[k], eig)).collect();
                Some((0..eig.len()).map(|n| per_time.iter().map(|row| row[n]).collect()).collect())
            }
        }
    }
}

fn check_finite<'a>(context: &str, mut values: impl Iterator<Item = &'a C64>) -> Result<()> {
    if values.any(|v| !(v.re.is_finite() && v.im.is_finite())) {
        return Err(Error::NonFinite {
            context: context.to_string(),
        });
    }
    Ok(())
}

/// Modal coefficients `c_n`, `n = 1..N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalVector {
    coeffs: Vec<C64>,
}

impl ModalVector {
    pub fn new(coeffs: Vec<C64>) -> Result<Self> {
        check_finite("modal vector", coeffs.iter())?;
        Ok(Self { coeffs })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            coeffs: vec![C64::new(0.0, 0.0); n],
        }
    }

    /// The `n`-th unit vector (0-based).
    pub fn unit(len: usize, n: usize) -> Self {
        let mut v = Self::zeros(len);
        v.coeffs[n] = C64::new(1.0, 0.0);
        v
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Euclidean norm (equal to the `L²_h` norm of the synthesis).
    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }
}

fn project_raw(samples: &[C64], eig: &EigenSystem) -> Vec<C64> {
    let h = eig.grid().spacing();
    eig.phis()
        .iter()
        .map(|phi| samples.iter().zip(phi).map(|(s, p)| s * *p).sum::<C64>() * h)
        .collect()
}

/// `c_n = ⟨samples, φ_n⟩_h` for every pair of `eig`.
pub fn project(samples: &[C64], eig: &EigenSystem) -> Result<ModalVector> {
    Error::check_len("samples", eig.grid().len(), samples.len())?;
    ModalVector::new(project_raw(samples, eig))
}

/// `Σ c_n φ_n`.
pub fn synthesize(c: &ModalVector, eig: &EigenSystem) -> Result<Vec<C64>> {
    Error::check_len("modal vector", eig.len(), c.len())?;
    let mut out = vec![C64::new(0.0, 0.0); eig.grid().len()];
    for (cn, phi) in c.coeffs.iter().zip(eig.phis()) {
        for (o, p) in out.iter_mut().zip(phi) {
            *o += cn * *p;
        }
    }
    Ok(out)
}

/// `‖samples − Π_N samples‖_h`: the part of `samples` the truncated modal
/// space cannot represent.
pub fn tail_energy(samples: &[C64], eig: &EigenSystem) -> Result<f64> {
    let back = synthesize(&project(samples, eig)?, eig)?;
    let diff: Vec<C64> = samples.iter().zip(&back).map(|(a, b)| a - b).collect();
    Ok(eig.grid().norm(&diff))
}

/// Complex samples `y(t_i, x_j)`; row `k` is `t_{k+1}`. The initial state is
/// kept separately.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField {
    time: TimeGrid,
    grid: Grid1D,
    initial: Vec<C64>,
    values: Vec<Vec<C64>>,
}

impl SpaceTimeField {
    pub fn new(time: TimeGrid, grid: Grid1D, initial: Vec<C64>, values: Vec<Vec<C64>>) -> Result<Self> {
        Error::check_len("initial state", grid.len(), initial.len())?;
        Error::check_len("field time rows", time.len(), values.len())?;
        for row in &values {
            Error::check_len("field row", grid.len(), row.len())?;
        }
        check_finite("field", initial.iter().chain(values.iter().flatten()))?;
        Ok(Self {
            time,
            grid,
            initial,
            values,
        })
    }

    pub fn zeros(time: TimeGrid, grid: Grid1D) -> Self {
        let zero = vec![C64::new(0.0, 0.0); grid.len()];
        Self {
            time,
            grid,
            initial: zero.clone(),
            values: vec![zero; time.len()],
        }
    }

    pub fn time(&self) -> &TimeGrid {
        &self.time
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn initial(&self) -> &[C64] {
        &self.initial
    }

    pub fn values(&self) -> &[Vec<C64>] {
        &self.values
    }

    pub fn row(&self, k: usize) -> &[C64] {
        &self.values[k]
    }

    /// `max |y|` over all stored samples (the initial state excluded).
    pub fn max_abs(&self) -> f64 {
        self.values.iter().flatten().fold(0.0, |m, v| m.max(v.norm()))
    }

    /// Node series at `j` including `t = 0`.
    pub fn series(&self, j: usize) -> Vec<C64> {
        std::iter::once(self.initial[j]).chain(self.values.iter().map(|row| row[j])).collect()
    }

    /// CSV with header `t,x,re_y,im_y`, row-major by time.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,x,re_y,im_y\n");
        let nodes = self.grid.nodes();
        for (k, row) in self.values.iter().enumerate() {
            let t = self.time.time(k);
            for (x, v) in nodes.iter().zip(row) {
                let _ = writeln!(out, "{t:?},{x:?},{:?},{:?}", v.re, v.im);
            }
        }
        out
    }

    /// Grids plus the samples as a flat `[re, im, re, im, …]` array.
    pub fn to_json(&self) -> serde_json::Value {
        let flat = |rows: &mut dyn Iterator<Item = &C64>| -> Vec<f64> { rows.flat_map(|v| [v.re, v.im]).collect() };
        serde_json::json!({
            "time": self.time,
            "grid": self.grid,
            "initial": flat(&mut self.initial.iter()),
            "values": flat(&mut self.values.iter().flatten()),
        })
    }
}

/// Per-mode coefficient trajectories `c_n(t_{k+1})`, indexed `[n][k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalTrajectories {
    pub initial: Vec<C64>,
    pub coeffs: Vec<Vec<C64>>,
}

/// `[τ^α E_{α,α+1}(a τ^α)]` at `τ = j·Δt`, `j = 0..=n_t`.
fn primitive_table(order: &FractionalOrder, lambda: f64, tg: &TimeGrid) -> Result<Vec<C64>> {
    let mut table = Vec::with_capacity(tg.len() + 1);
    table.push(C64::new(0.0, 0.0));
    for k in 0..tg.len() {
        table.push(ml_kernel(order, lambda, tg.time(k), KernelKind::Integral)?);
    }
    Ok(table)
}

/// Response `e^{iφ} ∫₀^t f(s)(t−s)^{α−1}E_{α,α}(a(t−s)^α) ds` of one mode to
/// the piecewise-constant forcing `f` (value `f[k]` on `(t_k, t_{k+1}]`).
pub fn source_response(order: &FractionalOrder, lambda: f64, forcing: &[C64], tg: &TimeGrid) -> Result<Vec<C64>> {
    Error::check_len("modal forcing", tg.len(), forcing.len())?;
    let p = primitive_table(order, lambda, tg)?;
    let w: Vec<C64> = p.windows(2).map(|q| q[1] - q[0]).collect();
    let rot = order.rotation();
    Ok((0..tg.len())
        .map(|i| {
            // step k contributes through the subinterval lying (i−k)Δt..(i−k+1)Δt in the past
            (0..=i).map(|k| forcing[k] * w[i - k]).sum::<C64>() * rot
        })
        .collect())
}

/// Homogeneous trajectory `E_{α,1}(a t^α)` at the given times.
pub fn state_trajectory(order: &FractionalOrder, lambda: f64, times: &[f64]) -> Result<Vec<C64>> {
    times.iter().map(|&t| ml_kernel(order, lambda, t, KernelKind::State)).collect()
}

/// Modal coefficients of the solution, parallel over modes.
pub fn solve_modal(
    c0: &ModalVector,
    src: &SourceSpec,
    order: &FractionalOrder,
    eig: &EigenSystem,
    tg: &TimeGrid,
) -> Result<ModalTrajectories> {
    Error::check_len("initial modal vector", eig.len(), c0.len())?;
    src.validate(tg, eig.grid())?;
    let forcing = src.modal(eig, tg);
    let times = tg.times();
    let coeffs = par::try_map_indexed(eig.len(), |n| {
        let lambda = eig.lambdas()[n];
        let cn0 = c0.coeffs()[n];
        let mut traj = if cn0 == C64::new(0.0, 0.0) {
            vec![C64::new(0.0, 0.0); tg.len()]
        } else {
            state_trajectory(order, lambda, &times)?.into_iter().map(|e| e * cn0).collect()
        };
        if let Some(f) = &forcing {
            if f[n].iter().any(|v| v.norm() > 0.0) {
                for (c, r) in traj.iter_mut().zip(source_response(order, lambda, &f[n], tg)?) {
                    *c += r;
                }
            }
        }
        Ok::<_, Error>(traj)
    })?;
    Ok(ModalTrajectories {
        initial: c0.coeffs().to_vec(),
        coeffs,
    })
}

/// Assemble `Σ c_n(t) φ_n` on the grid.
pub fn synthesize_field(traj: &ModalTrajectories, eig: &EigenSystem, tg: &TimeGrid) -> Result<SpaceTimeField> {
    let initial = synthesize(&ModalVector::new(traj.initial.clone())?, eig)?;
    let values = par::try_map_indexed(tg.len(), |k| {
        let c = ModalVector::new(traj.coeffs.iter().map(|row| row[k]).collect())?;
        synthesize(&c, eig)
    })?;
    SpaceTimeField::new(*tg, *eig.grid(), initial, values)
}

/// Solve the forward problem on `tg × eig.grid()`.
///
/// `y0` is projected onto the first `N` eigenfunctions; the stored initial
/// state is that projection.
pub fn solve_forward(
    y0: &[C64],
    src: &SourceSpec,
    order: &FractionalOrder,
    eig: &EigenSystem,
    tg: &TimeGrid,
) -> Result<SpaceTimeField> {
    let c0 = project(y0, eig)?;
    let traj = solve_modal(&c0, src, order, eig, tg)?;
    synthesize_field(&traj, eig, tg)
}

fn check_order(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid("alpha", format!("{alpha} not in (0, 1)")));
    }
    Ok(())
}

/// L1 approximation of the Caputo derivative at `t_1..t_n` from samples
/// `y_0..y_n` (so `series.len() = n + 1`).
pub fn caputo_l1(series: &[C64], alpha: f64, dt: f64) -> Result<Vec<C64>> {
    check_order(alpha)?;
    if series.len() < 2 {
        return Err(Error::invalid("series", "need the t = 0 value and at least one step"));
    }
    let n = series.len() - 1;
    let b: Vec<f64> = (0..n).map(|k| ((k + 1) as f64).powf(1.0 - alpha) - (k as f64).powf(1.0 - alpha)).collect();
    let scale = dt.powf(-alpha) / gamma(2.0 - alpha);
    let diffs: Vec<C64> = series.windows(2).map(|w| w[1] - w[0]).collect();
    Ok((1..=n)
        .map(|i| (0..i).map(|k| diffs[i - k - 1] * b[k]).sum::<C64>() * scale)
        .collect())
}

/// Riemann–Liouville integral `J^β w` at `t_1..t_n` by product integration of
/// the piecewise-linear interpolant of `w_0..w_n`.
pub fn rl_integral(series: &[C64], beta: f64, dt: f64) -> Result<Vec<C64>> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::invalid("beta", format!("{beta} must be positive")));
    }
    if series.len() < 2 {
        return Err(Error::invalid("series", "need the t = 0 value and at least one step"));
    }
    let n = series.len() - 1;
    let pw: Vec<f64> = (0..=n + 1).map(|k| (k as f64).powf(beta + 1.0)).collect();
    // weight of an interior node at lag d = i − j
    let lag: Vec<f64> = (0..=n).map(|d| if d == 0 { 0.0 } else { pw[d + 1] - 2.0 * pw[d] + pw[d - 1] }).collect();
    let scale = dt.powf(beta) / gamma(beta + 2.0);
    Ok((1..=n)
        .map(|i| {
            let fi = i as f64;
            let mut acc = series[0] * (pw[i - 1] - (fi - 1.0 - beta) * fi.powf(beta));
            for (j, &w) in series.iter().enumerate().take(i).skip(1) {
                acc += w * lag[i - j];
            }
            acc += series[i];
            acc * scale
        })
        .collect())
}

/// `max_i ‖c_∂ ∂^α y(t_i) − A y(t_i) − f(t_i)‖_h` over `t_i ≥ t_min`, with the
/// Caputo derivative from the L1 scheme and `c_∂ ∈ {i, i^α}`.
///
/// Close to `t = 0` the solution behaves like `t^α`, which the L1 scheme does
/// not resolve at the first few steps; `t_min` excludes that layer.
#[allow(clippy::needless_range_loop)]
pub fn pde_residual(field: &SpaceTimeField, src: &SourceSpec, order: &FractionalOrder, a: &SymTridiag, t_min: f64) -> Result<f64> {
    let grid = field.grid();
    let tg = field.time();
    Error::check_len("operator dimension", grid.len(), a.dim())?;
    src.validate(tg, grid)?;
    let dt = tg.dt();
    let columns = par::try_map_indexed(grid.len(), |j| caputo_l1(&field.series(j), order.alpha(), dt))?;
    let factor = order.derivative_factor();
    let mut worst: f64 = 0.0;
    for k in 0..tg.len() {
        if tg.time(k) < t_min * (1.0 - 1e-12) {
            continue;
        }
        let ay = a.apply(field.row(k));
        let f = src.at(k);
        let r: Vec<C64> = (0..grid.len())
            .map(|j| factor * columns[j][k] - ay[j] - f.as_ref().map_or(C64::new(0.0, 0.0), |f| f[j]))
            .collect();
        worst = worst.max(grid.norm(&r));
    }
    Ok(worst)
}

/// Discrepancy in the Duhamel identity `J^{1−α} y(g) = e^{iφ} (ρ ∗ v(g))`,
/// where `v(g)` solves the homogeneous problem from `g` and `y(g)` the problem
/// with zero initial state and source `ρ ⊗ g`.
///
/// `rho` holds `ρ` on `{0} ∪ TimeGrid` (length `n_t + 1`); the forward solve
/// uses `ρ(t_1..t_n)`. The left side is computed by product integration, the
/// convolution by the trapezoid rule, so the two are independent
/// discretizations. Returns `max_i ‖·‖_h`.
pub fn duhamel_check(g: &[C64], rho: &[C64], order: &FractionalOrder, eig: &EigenSystem, tg: &TimeGrid) -> Result<f64> {
    Error::check_len("rho (including t = 0)", tg.len() + 1, rho.len())?;
    let grid = eig.grid();
    let v = solve_forward(g, &SourceSpec::None, order, eig, tg)?;
    let zero = vec![C64::new(0.0, 0.0); grid.len()];
    let y = solve_forward(&zero, &SourceSpec::separable(rho[1..].to_vec(), g.to_vec()), order, eig, tg)?;
    let dt = tg.dt();
    let beta = 1.0 - order.alpha();
    let lhs = par::try_map_indexed(grid.len(), |j| rl_integral(&y.series(j), beta, dt))?;
    let rot = order.rotation();
    // trapezoid for ∫₀^{t_i} ρ(t_i − s) v(s) ds on the nodes s = t_0..t_i
    let rhs = par::map_indexed(grid.len(), |j| {
        let vj = v.series(j);
        (1..=tg.len())
            .map(|i| {
                let inner: C64 = (1..i).map(|k| rho[i - k] * vj[k]).sum();
                (inner + (rho[i] * vj[0] + rho[0] * vj[i]) * 0.5) * dt * rot
            })
            .collect::<Vec<C64>>()
    });
    let mut worst: f64 = 0.0;
    for i in 0..tg.len() {
        let diff: Vec<C64> = (0..grid.len()).map(|j| lhs[j][i] - rhs[j][i]).collect();
        worst = worst.max(grid.norm(&diff));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gamma::gamma;
    use crate::spectral::{analytic_eigensystem, assemble_operator, fd_eigensystem, OperatorSpec};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn setup(m: usize, n: usize) -> EigenSystem {
        let g = Grid1D::new(1.0, m).unwrap();
        analytic_eigensystem(n, &g).unwrap()
    }

    #[test]
    fn project_and_synthesize_examples() {
        let eig = setup(31, 5);
        let phi1 = eig.phi_complex(0);
        let p = project(&phi1, &eig).unwrap();
        assert!((p.coeffs()[0] - c(1.0, 0.0)).norm() < 1e-13);
        assert!(p.coeffs()[1..].iter().all(|v| v.norm() < 1e-13));
        let mix: Vec<C64> = phi1.iter().zip(eig.phi_complex(1)).map(|(a, b)| a * 2.0 + b * c(0.0, 3.0)).collect();
        let p = project(&mix, &eig).unwrap();
        assert!((p.coeffs()[0] - c(2.0, 0.0)).norm() < 1e-13);
        assert!((p.coeffs()[1] - c(0.0, 3.0)).norm() < 1e-13);
        let zero = project(&vec![c(0.0, 0.0); 31], &eig).unwrap();
        assert!(zero.coeffs().iter().all(|v| *v == c(0.0, 0.0)));
        let back = synthesize(&ModalVector::unit(5, 0), &eig).unwrap();
        assert_eq!(back, phi1);
        assert!(project(&[c(1.0, 0.0)], &eig).is_err());
    }

    #[test]
    fn caputo_examples() {
        let dt = 0.01;
        let n = 100;
        let constant = vec![c(1.0, 0.0); n + 1];
        assert!(caputo_l1(&constant, 0.3, dt).unwrap().iter().all(|v| v.norm() == 0.0));
        let alpha = 0.4;
        let linear: Vec<C64> = (0..=n).map(|i| c(i as f64 * dt, 0.0)).collect();
        for (i, v) in caputo_l1(&linear, alpha, dt).unwrap().iter().enumerate() {
            let t = (i + 1) as f64 * dt;
            assert!((v.re - t.powf(1.0 - alpha) / gamma(2.0 - alpha)).abs() < 1e-12);
        }
        let err = |n: usize| {
            let dt = 1.0 / n as f64;
            let sq: Vec<C64> = (0..=n).map(|i| c((i as f64 * dt).powi(2), 0.0)).collect();
            let d = caputo_l1(&sq, 0.5, dt).unwrap();
            (d[n - 1].re - 2.0 / gamma(2.5)).abs()
        };
        let (e1, e2) = (err(100), err(200));
        assert!(e2 < e1 && (e1 / e2).log2() > 1.4, "{e1:e} {e2:e}");
        assert!(caputo_l1(&linear, 1.0, dt).is_err());
    }

    #[test]
    fn rl_integral_examples() {
        let dt = 0.02;
        let n = 50;
        let ones = vec![c(1.0, 0.0); n + 1];
        for beta in [0.3, 1.0, 1.7] {
            for (i, v) in rl_integral(&ones, beta, dt).unwrap().iter().enumerate() {
                let t = (i + 1) as f64 * dt;
                assert!((v.re - t.powf(beta) / gamma(beta + 1.0)).abs() < 1e-12, "beta={beta}");
            }
        }
        let lin: Vec<C64> = (0..=n).map(|i| c(i as f64 * dt, 0.0)).collect();
        for (i, v) in rl_integral(&lin, 0.5, dt).unwrap().iter().enumerate() {
            let t = (i + 1) as f64 * dt;
            assert!((v.re - t.powf(1.5) / gamma(2.5)).abs() < 1e-12);
        }
        // β = 1 with piecewise-linear data is the trapezoid rule
        let w: Vec<C64> = (0..=n).map(|i| c((i as f64 * dt).sin(), 0.0)).collect();
        let j1 = rl_integral(&w, 1.0, dt).unwrap();
        let mut trap = 0.0;
        for i in 1..=n {
            trap += 0.5 * dt * (w[i - 1].re + w[i].re);
            assert!((j1[i - 1].re - trap).abs() < 1e-13);
        }
        assert!(rl_integral(&w, 0.0, dt).is_err());
    }

    #[test]
    fn single_mode_state_evolution() {
        let eig = setup(31, 4);
        let order = FractionalOrder::standard(0.6).unwrap();
        let tg = TimeGrid::new(2.0, 20).unwrap();
        let field = solve_forward(&eig.phi_complex(0), &SourceSpec::None, &order, &eig, &tg).unwrap();
        for k in 0..tg.len() {
            let e = ml_kernel(&order, eig.lambdas()[0], tg.time(k), KernelKind::State).unwrap();
            for (j, v) in field.row(k).iter().enumerate() {
                assert!((v - e * eig.phi(0)[j]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_source_response_is_closed_form() {
        let order = FractionalOrder::standard(0.5).unwrap();
        let tg = TimeGrid::new(1.0, 40).unwrap();
        let lambda = 7.0;
        let r = source_response(&order, lambda, &vec![c(1.0, 0.0); 40], &tg).unwrap();
        for (k, v) in r.iter().enumerate() {
            let exact = c(0.0, -1.0) * ml_kernel(&order, lambda, tg.time(k), KernelKind::Integral).unwrap();
            assert!((v - exact).norm() < 1e-13);
        }
    }

    #[test]
    fn zero_field_has_zero_residual() {
        let g = Grid1D::new(1.0, 15).unwrap();
        let tg = TimeGrid::new(1.0, 10).unwrap();
        let a = assemble_operator(&OperatorSpec::laplacian(&g), &g).unwrap();
        let order = FractionalOrder::standard(0.5).unwrap();
        let r = pde_residual(&SpaceTimeField::zeros(tg, g), &SourceSpec::None, &order, &a, 0.0).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn duhamel_trivial_cases() {
        let g = Grid1D::new(1.0, 15).unwrap();
        let eig = fd_eigensystem(&OperatorSpec::laplacian(&g), &g, 4).unwrap();
        let tg = TimeGrid::new(1.0, 20).unwrap();
        let order = FractionalOrder::standard(0.5).unwrap();
        let ones = vec![c(1.0, 0.0); 21];
        assert_eq!(duhamel_check(&vec![c(0.0, 0.0); 15], &ones, &order, &eig, &tg).unwrap(), 0.0);
        let zeros = vec![c(0.0, 0.0); 21];
        assert_eq!(duhamel_check(&eig.phi_complex(0), &zeros, &order, &eig, &tg).unwrap(), 0.0);
    }

    #[test]
    fn csv_layout() {
        let g = Grid1D::new(1.0, 3).unwrap();
        let tg = TimeGrid::new(1.0, 2).unwrap();
        let f = SpaceTimeField::zeros(tg, g);
        let csv = f.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,x,re_y,im_y");
        assert_eq!(lines.len(), 7);
        assert_eq!(lines[1], "0.5,0.25,0.0,0.0");
    }
}
