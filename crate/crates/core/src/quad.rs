//! Adaptive Gauss–Kronrod (7/15) quadrature for complex-valued integrands on
//! a real interval.

use crate::{Error, Result, C64};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights attach to the odd Kronrod nodes (1, 3, 5) and the centre.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: C64,
    pub error_estimate: f64,
    pub evaluations: usize,
}

/// 15-point Kronrod estimate and its difference from the embedded 7-point Gauss rule.
fn gk15<F>(f: &F, a: f64, b: f64) -> Result<(C64, f64)>
where
    F: Fn(f64) -> Result<C64>,
{
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(centre)?;
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for (j, (&x, &w)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let f1 = f(centre - half * x)?;
        let f2 = f(centre + half * x)?;
        kronrod += (f1 + f2) * w;
        if j % 2 == 1 {
            gauss += (f1 + f2) * WG[j / 2];
        }
    }
    Ok((kronrod * half, ((kronrod - gauss) * half).norm()))
}

/// Integrate `f` over `[a, b]` to `max(abs_tol, rel_tol·|I|)` by global
/// bisection of the worst panel. At most `max_panels` panels are used.
pub fn integrate<F>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64, max_panels: usize) -> Result<Quadrature>
where
    F: Fn(f64) -> Result<C64>,
{
    integrate_panels(&f, &[a, b], abs_tol, rel_tol, max_panels)
}

/// Like [`integrate`], starting from the given panel breakpoints (ascending).
pub fn integrate_panels<F>(f: &F, breaks: &[f64], abs_tol: f64, rel_tol: f64, max_panels: usize) -> Result<Quadrature>
where
    F: Fn(f64) -> Result<C64>,
{
    if breaks.len() < 2 || breaks.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("breaks", "need at least two ascending breakpoints"));
    }
    let mut panels: Vec<(f64, f64, C64, f64)> = Vec::new();
    for w in breaks.windows(2) {
        let (v, e) = gk15(f, w[0], w[1])?;
        panels.push((w[0], w[1], v, e));
    }
    let mut evaluations = 15 * panels.len();
    loop {
        let value: C64 = panels.iter().map(|p| p.2).sum();
        let error: f64 = panels.iter().map(|p| p.3).sum();
        if error <= abs_tol.max(rel_tol * value.norm()) || panels.len() >= max_panels {
            return Ok(Quadrature {
                value,
                error_estimate: error,
                evaluations,
            });
        }
        let worst = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let (a, b, _, _) = panels.swap_remove(worst);
        let mid = 0.5 * (a + b);
        if !(mid > a && mid < b) {
            // Panel can no longer be split; accept what we have.
            return Ok(Quadrature {
                value,
                error_estimate: error,
                evaluations,
            });
        }
        let (v1, e1) = gk15(f, a, mid)?;
        let (v2, e2) = gk15(f, mid, b)?;
        evaluations += 30;
        panels.push((a, mid, v1, e1));
        panels.push((mid, b, v2, e2));
    }
}

/// Breakpoints `0, lo, lo·r, …, hi` growing geometrically: suited to
/// integrands with an algebraic singularity at the origin.
pub fn geometric_breaks(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    let decades = (hi / lo).log10().ceil().max(1.0) as usize;
    let n = decades * per_decade.max(1);
    let mut out = vec![0.0];
    for i in 0..=n {
        out.push(lo * (hi / lo).powf(i as f64 / n as f64));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let q = integrate(|x| Ok(C64::new(x.powi(5) - 2.0 * x, x * x)), 0.0, 2.0, 1e-14, 0.0, 1).unwrap();
        assert!((q.value - C64::new(64.0 / 6.0 - 4.0, 8.0 / 3.0)).norm() < 1e-13);
    }

    #[test]
    fn oscillatory_exponential() {
        let z = C64::new(2.0, 3.0);
        let q = integrate(|t| Ok((-z * t).exp()), 0.0, 40.0, 1e-13, 0.0, 2000).unwrap();
        assert!((q.value - 1.0 / z).norm() < 1e-12);
    }

    #[test]
    fn square_root_singularity_with_geometric_panels() {
        let breaks = geometric_breaks(1e-14, 1.0, 2);
        let q = integrate_panels(&|x: f64| Ok(C64::new(x.powf(-0.5), 0.0)), &breaks, 1e-10, 0.0, 4000).unwrap();
        assert!((q.value.re - 2.0).abs() < 1e-6);
    }

    #[test]
    fn errors_propagate() {
        let r = integrate(|_| Err(Error::EmptyMask), 0.0, 1.0, 1e-8, 0.0, 10);
        assert_eq!(r.unwrap_err(), Error::EmptyMask);
    }
}
