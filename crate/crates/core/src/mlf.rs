//! Two-parameter Mittag-Leffler function
//!
//! ```text
//! E_{α,β}(z) = Σ_{k≥0} z^k / Γ(αk + β)
//! ```
//!
//! evaluated for complex `z` by switching between three representations:
//!
//! - `|z| ≤ r_taylor`: the power series, truncated by a geometric tail bound;
//! - `r_taylor < |z| < r_asymptotic`: numerical inversion of the Laplace
//!   transform `s^{α−β}/(s^α − z)` along an optimal parabolic contour, plus the
//!   residues of the poles `s* = z^{1/α}` that lie to the right of it;
//! - `|z| ≥ r_asymptotic`: all residues with `|arg s*| ≤ π` plus the algebraic
//!   expansion `−Σ_{k≥1} z^{−k}/Γ(β − αk)`.
//!
//! The module also provides the three solver kernels built from `E_{α,β}`, the
//! sector of analyticity of the homogeneous solution, and an empirical
//! certificate for the constant in the uniform bound
//! `|E_{α,1}(−iλt^α)| ≤ c0/(1 + λt^α)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::gamma::rgamma;
use crate::{par, Error, FractionalOrder, Phase, Result, C64};

/// Parameters `(α, β)` of `E_{α,β}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlParams {
    alpha: f64,
    beta: f64,
}

impl MlParams {
    /// `0 < α ≤ 2`, `β` finite.
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 2.0) {
            return Err(Error::invalid("alpha", format!("{alpha} not in (0, 2]")));
        }
        if !beta.is_finite() {
            return Err(Error::invalid("beta", format!("{beta} is not finite")));
        }
        Ok(Self { alpha, beta })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

/// Region radii and argument cap of the evaluator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlConfig {
    pub r_taylor: f64,
    pub r_asymptotic: f64,
    pub z_max: f64,
}

impl Default for MlConfig {
    fn default() -> Self {
        Self {
            r_taylor: 1.0,
            r_asymptotic: 50.0,
            z_max: 1e6,
        }
    }
}

/// `E_{α,β}(z)` with the default region configuration.
pub fn ml_eval(p: MlParams, z: C64) -> Result<C64> {
    ml_eval_with(&MlConfig::default(), p, z)
}

pub fn ml_eval_with(cfg: &MlConfig, p: MlParams, z: C64) -> Result<C64> {
    if !(z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::invalid("z", "non-finite argument"));
    }
    let modulus = z.norm();
    if modulus > cfg.z_max {
        return Err(Error::ArgumentTooLarge {
            modulus,
            cap: cfg.z_max,
        });
    }
    let value = if modulus == 0.0 {
        C64::new(rgamma(p.beta), 0.0)
    } else if modulus <= cfg.r_taylor {
        taylor(p.alpha, p.beta, z)?
    } else if modulus < cfg.r_asymptotic {
        laplace_inversion(p.alpha, p.beta, z)?
    } else {
        asymptotic(p.alpha, p.beta, z)?
    };
    if !(value.re.is_finite() && value.im.is_finite()) {
        return Err(Error::NonFinite {
            context: format!("E_{{{},{}}}({z})", p.alpha, p.beta),
        });
    }
    Ok(value)
}

/// Evaluation together with the residual of the three-term recurrence
/// `E_{α,β}(z) = 1/Γ(β) + z E_{α,α+β}(z)`. Fails with
/// [`Error::AccuracyLoss`] when the residual exceeds `1e-9 (1 + |E|)`.
pub fn ml_eval_verified(p: MlParams, z: C64) -> Result<(C64, f64)> {
    let e = ml_eval(p, z)?;
    let shifted = ml_eval(MlParams::new(p.alpha, p.alpha + p.beta)?, z)?;
    let residual = (e - rgamma(p.beta) - z * shifted).norm();
    if residual > 1e-9 * (1.0 + e.norm()) {
        return Err(Error::AccuracyLoss {
            context: format!(
                "recurrence residual {residual:e} at alpha={}, beta={}, z={z}",
                p.alpha, p.beta
            ),
        });
    }
    Ok((e, residual))
}

const TAYLOR_MAX_TERMS: usize = 20_000;

fn taylor(alpha: f64, beta: f64, z: C64) -> Result<C64> {
    let r = z.norm();
    let mut sum = C64::new(0.0, 0.0);
    let mut abs_sum = 0.0;
    let mut zk = C64::new(1.0, 0.0);
    for k in 0..TAYLOR_MAX_TERMS {
        let x = alpha * k as f64 + beta;
        let term = zk * rgamma(x);
        sum += term;
        abs_sum += term.norm();
        zk *= z;
        // Γ is increasing past 1.4616, so successive term ratios shrink and
        // the tail is bounded by a geometric series.
        if x + alpha > 1.5 {
            let next = r.powi(k as i32 + 1) * rgamma(x + alpha);
            let ratio = r * rgamma(x + 2.0 * alpha) / rgamma(x + alpha);
            if ratio < 1.0 && next / (1.0 - ratio) <= 1e-17 * sum.norm() + 1e-300 {
                if abs_sum > 1e6 * sum.norm() {
                    return Err(Error::AccuracyLoss {
                        context: format!("series cancellation at z={z}"),
                    });
                }
                return Ok(sum);
            }
        }
    }
    Err(Error::AccuracyLoss {
        context: format!("series did not converge at z={z}"),
    })
}

/// `ln` of the unit roundoff, `ln(2^{-52})`.
const LOG_MACHINE_EPS: f64 = -52.0 * std::f64::consts::LN_2;

struct ContourParams {
    mu: f64,
    h: f64,
    nodes: f64,
}

fn laplace_inversion(alpha: f64, beta: f64, z: C64) -> Result<C64> {
    let mut log_eps = 1e-15_f64.ln();
    let theta = z.arg();
    let radius = z.norm().powf(1.0 / alpha);
    let kmin = (-alpha / 2.0 - theta / (2.0 * PI)).ceil() as i64;
    let kmax = (alpha / 2.0 - theta / (2.0 * PI)).floor() as i64;

    let mut poles: Vec<(f64, C64)> = (kmin..=kmax)
        .map(|k| {
            let s = C64::from_polar(radius, (theta + 2.0 * k as f64 * PI) / alpha);
            (0.5 * (s.re + s.norm()), s)
        })
        .filter(|(phi, _)| *phi > 1e-15)
        .collect();
    poles.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Singularities: the branch point at the origin followed by the poles,
    // ordered by the abscissa of the parabola through them.
    let mut singular = vec![C64::new(0.0, 0.0)];
    let mut phi = vec![0.0];
    for (ph, s) in &poles {
        phi.push(*ph);
        singular.push(*s);
    }
    let count = singular.len();
    let mut p = vec![1.0; count];
    p[0] = (-2.0 * (alpha - beta + 1.0)).max(0.0);
    let mut q = vec![1.0; count];
    q[count - 1] = f64::INFINITY;
    phi.push(f64::INFINITY);

    let roundoff_bound = log_eps - LOG_MACHINE_EPS;
    let admissible: Vec<usize> = (0..count)
        .filter(|&j| phi[j] < roundoff_bound && phi[j] < phi[j + 1])
        .collect();

    let (region, params) = loop {
        let mut best: Option<(usize, ContourParams)> = None;
        for &j in &admissible {
            let cp = if j + 1 < count {
                optimal_params_bounded(phi[j], phi[j + 1], p[j], q[j], log_eps)
            } else {
                optimal_params_unbounded(phi[j], p[j], log_eps)
            };
            if best.as_ref().is_none_or(|(_, b)| cp.nodes < b.nodes) {
                best = Some((j, cp));
            }
        }
        match best {
            Some((j, cp)) if cp.nodes <= 200.0 => break (j, cp),
            _ => {
                log_eps += 10f64.ln();
                if log_eps > 1e-6_f64.ln() {
                    return Err(Error::AccuracyLoss {
                        context: format!("no admissible inversion contour at z={z}"),
                    });
                }
            }
        }
    };

    let n = params.nodes as i64;
    let mut integral = C64::new(0.0, 0.0);
    for k in -n..=n {
        let u = params.h * k as f64;
        let s = params.mu * C64::new(1.0, u).powi(2);
        let ds = params.mu * C64::new(-2.0 * u, 2.0);
        let f = s.powf(alpha - beta) / (s.powf(alpha) - z) * ds;
        integral += s.exp() * f;
    }
    integral *= params.h / (2.0 * PI * C64::i());

    let residues: C64 = singular[region + 1..]
        .iter()
        .map(|&s| s.powf(1.0 - beta) * s.exp() / alpha)
        .sum();
    Ok(integral + residues)
}

fn optimal_params_bounded(phi_j: f64, phi_j1: f64, pj: f64, qj: f64, log_eps: f64) -> ContourParams {
    const FAC: f64 = 1.01;
    let inadmissible = ContourParams {
        mu: 0.0,
        h: 0.0,
        nodes: f64::INFINITY,
    };
    let f_max = (log_eps - LOG_MACHINE_EPS).exp();
    let sq_j = phi_j.sqrt();
    let threshold = 2.0 * (log_eps - LOG_MACHINE_EPS).sqrt();
    let sq_j1 = phi_j1.sqrt().min(threshold - sq_j);
    if sq_j1 <= sq_j {
        return inadmissible;
    }

    let (bar_j, bar_j1, f_bar);
    if pj < 1e-14 && qj < 1e-14 {
        bar_j = sq_j;
        bar_j1 = sq_j1;
        f_bar = 1.0;
    } else if pj < 1e-14 {
        let f_min = if sq_j > 0.0 {
            FAC * (sq_j / (sq_j1 - sq_j)).powf(qj)
        } else {
            FAC
        };
        if !(f_min < f_max) {
            return inadmissible;
        }
        f_bar = f_min + f_min / f_max * (f_max - f_min);
        let fq = f_bar.powf(-1.0 / qj);
        bar_j = sq_j;
        bar_j1 = (2.0 * sq_j1 - fq * sq_j) / (2.0 + fq);
    } else if qj < 1e-14 {
        let f_min = FAC * (sq_j1 / (sq_j1 - sq_j)).powf(pj);
        if !(f_min < f_max) {
            return inadmissible;
        }
        f_bar = f_min + f_min / f_max * (f_max - f_min);
        let fp = f_bar.powf(-1.0 / pj);
        bar_j = (2.0 * sq_j + fp * sq_j1) / (2.0 - fp);
        bar_j1 = sq_j1;
    } else {
        let f_min = FAC * (sq_j + sq_j1) / (sq_j1 - sq_j).powf(pj.max(qj));
        if !(f_min < f_max) {
            return inadmissible;
        }
        let f_min = f_min.max(1.5);
        f_bar = f_min + f_min / f_max * (f_max - f_min);
        let fp = f_bar.powf(-1.0 / pj);
        let fq = f_bar.powf(-1.0 / qj);
        let w = -phi_j1 / log_eps;
        let den = 2.0 + w - (1.0 + w) * fp + fq;
        bar_j = ((2.0 + w + fq) * sq_j + fp * sq_j1) / den;
        bar_j1 = (-(1.0 + w) * fq * sq_j + (2.0 + w - (1.0 + w) * fp) * sq_j1) / den;
    }

    let log_eps = log_eps - f_bar.ln();
    let w = -bar_j1 * bar_j1 / log_eps;
    let mu = (((1.0 + w) * bar_j + bar_j1) / (2.0 + w)).powi(2);
    let h = -2.0 * PI / log_eps * (bar_j1 - bar_j) / ((1.0 + w) * bar_j + bar_j1);
    let nodes = ((1.0 - log_eps / mu).sqrt() / h).ceil();
    if !(mu > 0.0 && h > 0.0 && nodes.is_finite()) {
        return inadmissible;
    }
    ContourParams { mu, h, nodes }
}

fn optimal_params_unbounded(phi_j: f64, pj: f64, log_eps: f64) -> ContourParams {
    const F_MIN: f64 = 1.0;
    const F_MAX: f64 = 10.0;
    const F_TAR: f64 = 5.0;
    let sq_phi = phi_j.sqrt();
    let mut phibar = if phi_j > 0.0 { phi_j * 1.01 } else { 0.01 };
    let mut sq_phibar = phibar.sqrt();

    let (mut nodes, mut a, mut sq_mu);
    let mut iterations = 0;
    loop {
        let phi_t = phibar;
        let log_eps_phi_t = log_eps / phi_t;
        nodes = (phi_t / PI * (1.0 - 1.5 * log_eps_phi_t + (1.0 - 2.0 * log_eps_phi_t).sqrt())).ceil();
        a = PI * nodes / phi_t;
        sq_mu = sq_phibar * (4.0 - a).abs() / (7.0 - (1.0 + 12.0 * a).sqrt()).abs();
        let f_bar = ((sq_phibar - sq_phi) / sq_mu).powf(-pj);
        iterations += 1;
        if pj < 1e-14 || (F_MIN < f_bar && f_bar < F_MAX) || iterations > 100 {
            break;
        }
        sq_phibar = F_TAR.powf(-1.0 / pj) * sq_mu + sq_phi;
        phibar = sq_phibar * sq_phibar;
    }
    let mut mu = sq_mu * sq_mu;
    let mut h = (-3.0 * a - 2.0 + 2.0 * (1.0 + 12.0 * a).sqrt()) / (4.0 - a) / nodes;

    // Keep round-off under control for large abscissae.
    let threshold = log_eps - LOG_MACHINE_EPS;
    if mu > threshold {
        let qv = if pj.abs() < 1e-14 {
            0.0
        } else {
            F_TAR.powf(-1.0 / pj) * mu.sqrt()
        };
        let phibar = (qv + sq_phi).powi(2);
        if phibar < threshold {
            let w = (LOG_MACHINE_EPS / (LOG_MACHINE_EPS - log_eps)).sqrt();
            let u = (-phibar / LOG_MACHINE_EPS).sqrt();
            mu = threshold;
            nodes = (w * log_eps / 2.0 / PI / (u * w - 1.0)).ceil();
            h = w / nodes;
        } else {
            nodes = f64::INFINITY;
            h = 0.0;
        }
    }
    ContourParams { mu, h, nodes }
}

const ASYMPTOTIC_MAX_TERMS: usize = 400;

fn asymptotic(alpha: f64, beta: f64, z: C64) -> Result<C64> {
    let theta = z.arg();
    let radius = z.norm().powf(1.0 / alpha);
    let kmin = ((-alpha * PI - theta) / (2.0 * PI)).ceil() as i64;
    let kmax = ((alpha * PI - theta) / (2.0 * PI)).floor() as i64;
    let mut total = C64::new(0.0, 0.0);
    for k in kmin..=kmax {
        let angle = (theta + 2.0 * k as f64 * PI) / alpha;
        if angle.abs() > PI * (1.0 + 1e-14) {
            continue;
        }
        let s = C64::from_polar(radius, angle);
        let term = s.powf(1.0 - beta) * s.exp() / alpha;
        if !(term.re.is_finite() && term.im.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("exponential term of E_{{{alpha},{beta}}}({z})"),
            });
        }
        total += term;
    }

    // Stopping and divergence decisions use the envelope |z|^{-k} Γ(1−x)/π
    // of |1/Γ(x)|, x = β − αk, which is blind to the zeros of 1/Γ.
    let inv = 1.0 / z;
    let log_r = z.norm().ln();
    let mut inv_pow = C64::new(1.0, 0.0);
    let mut last_envelope = f64::INFINITY;
    for k in 1..=ASYMPTOTIC_MAX_TERMS {
        inv_pow *= inv;
        let x = beta - alpha * k as f64;
        let envelope = if x < 0.5 {
            (crate::gamma::ln_gamma(1.0 - x) - PI.ln() - k as f64 * log_r).exp()
        } else {
            rgamma(x).abs() * (-(k as f64) * log_r).exp()
        };
        if envelope > last_envelope {
            if last_envelope > 1e-9 * total.norm() {
                return Err(Error::AccuracyLoss {
                    context: format!("asymptotic expansion too short at z={z}"),
                });
            }
            break;
        }
        total -= inv_pow * rgamma(x);
        last_envelope = envelope;
        if envelope <= 1e-17 * total.norm() {
            break;
        }
    }
    Ok(total)
}

/// Which of the three solution kernels to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    /// `E_{α,1}(a t^α)`: evolution of an initial mode.
    State,
    /// `t^{α−1} E_{α,α}(a t^α)`: response to an impulse; singular at `t = 0`.
    Impulse,
    /// `t^α E_{α,α+1}(a t^α)`: primitive of the impulse kernel.
    Integral,
}

/// Solution kernel with argument `a t^α`, `a = e^{iφ} λ` (see [`FractionalOrder`]).
pub fn ml_kernel(order: &FractionalOrder, lambda: f64, t: f64, kind: KernelKind) -> Result<C64> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::invalid("t", format!("{t} must be positive")));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid("lambda", format!("{lambda} must be non-negative")));
    }
    let alpha = order.alpha();
    let ta = t.powf(alpha);
    let z = order.rotation() * (lambda * ta);
    let value = match kind {
        KernelKind::State => ml_eval(MlParams::new(alpha, 1.0)?, z)?,
        KernelKind::Impulse => ml_eval(MlParams::new(alpha, alpha)?, z)? * t.powf(alpha - 1.0),
        KernelKind::Integral => ml_eval(MlParams::new(alpha, alpha + 1.0)?, z)? * ta,
    };
    #[cfg(feature = "fault-injection")]
    let value = value * (1.0 + fault::kernel_perturbation());
    Ok(value)
}

/// Test hook: a global relative perturbation applied to every [`ml_kernel`] value.
#[cfg(feature = "fault-injection")]
pub mod fault {
    use std::sync::atomic::{AtomicU64, Ordering};

    static PERTURBATION: AtomicU64 = AtomicU64::new(0);

    pub fn set_kernel_perturbation(eps: f64) {
        PERTURBATION.store(eps.to_bits(), Ordering::SeqCst);
    }

    pub fn kernel_perturbation() -> f64 {
        f64::from_bits(PERTURBATION.load(Ordering::Relaxed))
    }
}

/// `arg(−i z^α)` for `z` with principal argument `theta ∈ (−π, π]`, reduced to `(−π, π]`.
pub fn rotated_arg(alpha: f64, theta: f64) -> f64 {
    if theta > -PI / (2.0 * alpha) {
        alpha * theta - PI / 2.0
    } else {
        alpha * theta + 1.5 * PI
    }
}

/// Sector `{ z ≠ 0 : arg_lo ≤ arg z ≤ arg_hi }` on which the homogeneous
/// solution extends analytically and the kernel bound holds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sector {
    pub alpha: f64,
    pub mu: f64,
    pub arg_lo: f64,
    pub arg_hi: f64,
}

impl Sector {
    pub fn contains(&self, z: C64) -> bool {
        if z == C64::new(0.0, 0.0) {
            return false;
        }
        let theta = z.arg();
        theta >= self.arg_lo && theta <= self.arg_hi
    }

    /// Whether `μ ≤ |arg(−i z^α)| ≤ π`, the defining condition of the sector.
    pub fn satisfies_defining_condition(&self, z: C64) -> bool {
        let a = rotated_arg(self.alpha, z.arg()).abs();
        a >= self.mu - 1e-12 && a <= PI + 1e-12
    }
}

fn check_mu(alpha: f64, mu: f64) -> Result<()> {
    if !(mu > PI * alpha / 2.0 && mu < PI * alpha) {
        return Err(Error::invalid(
            "mu",
            format!("{mu} not in (pi*alpha/2, pi*alpha) = ({}, {})", PI * alpha / 2.0, PI * alpha),
        ));
    }
    Ok(())
}

pub fn sector_bounds(order: &FractionalOrder, mu: f64) -> Result<Sector> {
    let alpha = order.alpha();
    check_mu(alpha, mu)?;
    let arg_lo = (-PI).max((mu - 1.5 * PI) / alpha);
    let arg_hi = PI.min((PI / 2.0 - mu) / alpha);
    debug_assert!(arg_lo < arg_hi);
    Ok(Sector {
        alpha,
        mu,
        arg_lo,
        arg_hi,
    })
}

/// `μ` and the certified kernel bound `c0` for one order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectorParams {
    pub alpha: f64,
    pub mu: f64,
    pub c0: f64,
}

impl SectorParams {
    pub fn new(alpha: f64, mu: f64, c0: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::invalid("alpha", format!("{alpha} not in (0, 1)")));
        }
        check_mu(alpha, mu)?;
        if !(c0 >= 1.0 && c0.is_finite()) {
            return Err(Error::invalid("c0", format!("{c0} must be finite and >= 1")));
        }
        Ok(Self { alpha, mu, c0 })
    }

    /// Certify `c0` on the default grids with `μ` at the middle of its range.
    pub fn certify(order: &FractionalOrder) -> Result<Self> {
        let mu = 0.75 * PI * order.alpha();
        let c0 = certify_c0(order, mu, &default_lambda_grid(), &default_t_grid())?;
        Self::new(order.alpha(), mu, c0)
    }
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// `λ ∈ [1, 100]`, 41 log-spaced points.
pub fn default_lambda_grid() -> Vec<f64> {
    log_grid(1.0, 100.0, 41)
}

/// `t ∈ [1e-3, 1e3]`, 61 log-spaced points.
pub fn default_t_grid() -> Vec<f64> {
    log_grid(1e-3, 1e3, 61)
}

/// Grid maximum of `|E_{α,1}(−iλt^α)| (1 + λt^α)`.
///
/// The bound concerns the `i` convention regardless of `order.phase()`.
pub fn certify_c0(order: &FractionalOrder, mu: f64, lambda_grid: &[f64], t_grid: &[f64]) -> Result<f64> {
    check_mu(order.alpha(), mu)?;
    if lambda_grid.is_empty() || t_grid.is_empty() {
        return Err(Error::invalid("grid", "lambda and t grids must be non-empty"));
    }
    if lambda_grid.iter().any(|&l| !(l >= 0.0)) || t_grid.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::invalid("grid", "lambda must be >= 0 and t > 0"));
    }
    let standard = FractionalOrder::for_kernel(order.alpha(), Phase::StandardI)?;
    let row_max = par::try_map_indexed(lambda_grid.len(), |i| {
        let lambda = lambda_grid[i];
        let mut m: f64 = 0.0;
        for &t in t_grid {
            let e = ml_kernel(&standard, lambda, t, KernelKind::State)?;
            m = m.max(e.norm() * (1.0 + lambda * t.powf(standard.alpha())));
        }
        Ok::<_, Error>(m)
    })?;
    Ok(row_max.into_iter().fold(0.0, f64::max))
}
