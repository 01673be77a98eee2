use proptest::prelude::*;
use tfslab_core::spectral::{assemble_operator, eigen_solve, fd_eigensystem, EigenSystem, Grid1D, OperatorSpec};

fn order_estimate(e: &[f64]) -> Vec<f64> {
    e.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

#[test]
fn laplacian_eigenvalues_converge_at_second_order() {
    let grids: Vec<Grid1D> = [31, 63, 127].iter().map(|&m| Grid1D::new(1.0, m).unwrap()).collect();
    for n in 1..=4 {
        let exact = (n as f64 * std::f64::consts::PI).powi(2);
        let errors: Vec<f64> = grids
            .iter()
            .map(|g| (fd_eigensystem(&OperatorSpec::laplacian(g), g, 4).unwrap().lambdas()[n - 1] - exact).abs())
            .collect();
        for p in order_estimate(&errors) {
            assert!((1.9..=2.1).contains(&p), "mode {n}: order {p}");
        }
    }
}

#[test]
fn variable_coefficient_eigenvalues_converge_at_second_order() {
    // No closed form; the successive differences on h, h/2, h/4, h/8 serve as the oracle.
    let a = |x: f64| 1.0 + 0.5 * (2.0 * x).sin();
    let p = |x: f64| 2.0 + x * x;
    let lambda1: Vec<f64> = [31, 63, 127, 255]
        .iter()
        .map(|&m| {
            let g = Grid1D::new(1.0, m).unwrap();
            fd_eigensystem(&OperatorSpec::from_fns(&g, a, p, 1.0), &g, 1).unwrap().lambdas()[0]
        })
        .collect();
    let diffs: Vec<f64> = lambda1.windows(2).map(|w| (w[0] - w[1]).abs()).collect();
    for q in order_estimate(&diffs) {
        assert!((1.9..=2.1).contains(&q), "order {q}");
    }
}

#[test]
fn eigenvalues_respect_the_coercivity_bound() {
    let g = Grid1D::new(2.0, 99).unwrap();
    let spec = OperatorSpec::from_fns(&g, |x| 1.5 + x.cos(), |x| 0.3 * x, 0.5);
    let eig = fd_eigensystem(&spec, &g, 10).unwrap();
    let min_a = spec.a_mid.iter().copied().fold(f64::INFINITY, f64::min);
    // smallest eigenvalue of the discrete Dirichlet Laplacian on the same grid
    let h = g.spacing();
    let lap1 = 4.0 / (h * h) * (std::f64::consts::PI * h / (2.0 * g.length())).sin().powi(2);
    assert!(eig.lambdas()[0] >= min_a * lap1);
    assert!(eig.lambdas().windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn rayleigh_residuals_are_small() {
    let g = Grid1D::new(1.0, 127).unwrap();
    let spec = OperatorSpec::from_fns(&g, |x| 1.0 + x, |x| (3.0 * x).cos().abs(), 1.0);
    let a = assemble_operator(&spec, &g).unwrap();
    let eig = eigen_solve(&a, 12, None, &g).unwrap();
    for (n, &lambda) in eig.lambdas().iter().enumerate() {
        let phi = eig.phi(n);
        let r: f64 = a
            .apply_real(phi)
            .iter()
            .zip(phi)
            .map(|(ap, p)| (ap - lambda * p).powi(2))
            .sum::<f64>()
            .sqrt()
            * g.spacing().sqrt();
        assert!(r <= 1e-8 * lambda, "mode {n}: {r:e}");
    }
}

#[test]
fn json_roundtrip_preserves_the_system() {
    let g = Grid1D::new(1.0, 31).unwrap();
    let eig = fd_eigensystem(&OperatorSpec::laplacian(&g), &g, 5).unwrap();
    let back = EigenSystem::from_json(&serde_json::from_str(&eig.to_json().to_string()).unwrap()).unwrap();
    assert_eq!(back.lambdas(), eig.lambdas());
    assert_eq!(back.phis(), eig.phis());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_coefficients_give_orthonormal_positive_spectra(
        a_coef in proptest::collection::vec(0.5f64..3.0, 4),
        p_coef in proptest::collection::vec(0.0f64..5.0, 3),
        length in 0.5f64..3.0,
        m in 20usize..80,
    ) {
        let g = Grid1D::new(length, m).unwrap();
        let a = |x: f64| a_coef[0] + a_coef[1] * (x * a_coef[2]).sin().powi(2) + a_coef[3] * x / length;
        let p = |x: f64| p_coef[0] + p_coef[1] * (x * p_coef[2]).cos().powi(2);
        let eig = fd_eigensystem(&OperatorSpec::from_fns(&g, a, p, a_coef[0]), &g, 8).unwrap();
        prop_assert!(eig.orthonormality_defect() <= 1e-10);
        prop_assert!(eig.lambdas()[0] > 0.0);
        prop_assert!(eig.lambdas().windows(2).all(|w| w[0] <= w[1]));
    }
}
