//! Dirichlet eigen-systems of `−𝓛 = −∂ₓ(a ∂ₓ) + p` on `(0, L)`.
//!
//! Eigenfunctions are stored as samples on the interior nodes and are
//! orthonormal for the discrete inner product `⟨u, v⟩_h = h Σ u_j v̄_j`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

pub use crate::linalg::SymTridiag;
use crate::linalg::tridiag_eigen;
use crate::{Error, Result, C64};

/// Uniform grid of `m` interior nodes `x_j = j·h`, `h = L/(m+1)`, `j = 1..m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    length: f64,
    interior_nodes: usize,
}

impl Grid1D {
    pub fn new(length: f64, interior_nodes: usize) -> Result<Self> {
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::invalid("length", format!("{length} must be positive")));
        }
        if interior_nodes < 3 {
            return Err(Error::invalid("interior_nodes", format!("{interior_nodes} < 3")));
        }
        Ok(Self {
            length,
            interior_nodes,
        })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Number of interior nodes `m`.
    pub fn len(&self) -> usize {
        self.interior_nodes
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        self.length / (self.interior_nodes + 1) as f64
    }

    /// Coordinate of the node stored at vector index `i` (node number `i + 1`).
    pub fn node(&self, i: usize) -> f64 {
        (i + 1) as f64 * self.spacing()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.interior_nodes).map(|i| self.node(i)).collect()
    }

    /// `⟨u, v⟩_h`, conjugate-linear in `v`.
    pub fn inner(&self, u: &[C64], v: &[C64]) -> C64 {
        u.iter().zip(v).map(|(a, b)| a * b.conj()).sum::<C64>() * self.spacing()
    }

    /// Discrete `L²` norm.
    pub fn norm(&self, u: &[C64]) -> f64 {
        (u.iter().map(|x| x.norm_sqr()).sum::<f64>() * self.spacing()).sqrt()
    }
}

/// Coefficients of `𝓛`: `a` on the `m + 1` cell midpoints, `p` on the nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpec {
    pub a_mid: Vec<f64>,
    pub p: Vec<f64>,
    pub kappa: f64,
}

impl OperatorSpec {
    /// Sample `a` at midpoints and `p` at nodes of `grid`.
    pub fn from_fns(grid: &Grid1D, a: impl Fn(f64) -> f64, p: impl Fn(f64) -> f64, kappa: f64) -> Self {
        let h = grid.spacing();
        Self {
            a_mid: (0..=grid.len()).map(|i| a((i as f64 + 0.5) * h)).collect(),
            p: grid.nodes().into_iter().map(p).collect(),
            kappa,
        }
    }

    pub fn constant(grid: &Grid1D, a: f64, p: f64) -> Self {
        Self::from_fns(grid, |_| a, |_| p, a)
    }

    /// The Dirichlet Laplacian, `a ≡ 1`, `p ≡ 0`.
    pub fn laplacian(grid: &Grid1D) -> Self {
        Self::constant(grid, 1.0, 0.0)
    }

    pub fn validate(&self, grid: &Grid1D) -> Result<()> {
        Error::check_len("operator coefficient a (midpoints)", grid.len() + 1, self.a_mid.len())?;
        Error::check_len("operator coefficient p (nodes)", grid.len(), self.p.len())?;
        if !(self.kappa > 0.0) {
            return Err(Error::invalid("kappa", format!("{} must be positive", self.kappa)));
        }
        let min_a = self.a_mid.iter().copied().fold(f64::INFINITY, f64::min);
        if !(min_a >= self.kappa) {
            return Err(Error::Ellipticity {
                min_a,
                kappa: self.kappa,
            });
        }
        if self.p.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::invalid("p", "zeroth-order coefficient must be >= 0"));
        }
        Ok(())
    }
}

/// Matrix of `−𝓛` by the conservative three-point stencil.
pub fn assemble_operator(spec: &OperatorSpec, grid: &Grid1D) -> Result<SymTridiag> {
    spec.validate(grid)?;
    let m = grid.len();
    let inv_h2 = 1.0 / (grid.spacing() * grid.spacing());
    let diag = (0..m)
        .map(|i| (spec.a_mid[i] + spec.a_mid[i + 1]) * inv_h2 + spec.p[i])
        .collect();
    let off = (0..m - 1).map(|i| -spec.a_mid[i + 1] * inv_h2).collect();
    SymTridiag::new(diag, off)
}

/// A group of numerically equal eigenvalues `μ_k` with multiplicity `m_k`,
/// occupying indices `start..end` of [`EigenSystem::lambdas`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenGroup {
    pub value: f64,
    pub multiplicity: usize,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenSystem {
    grid: Grid1D,
    lambdas: Vec<f64>,
    phis: Vec<Vec<f64>>,
    distinct: Vec<EigenGroup>,
}

/// Tolerance for the discrete orthonormality invariant.
pub const ORTHONORMALITY_TOL: f64 = 1e-10;

impl EigenSystem {
    /// Validate and group. `dedup_tol = None` uses `1e-8·λ_N`.
    pub fn from_parts(grid: Grid1D, lambdas: Vec<f64>, phis: Vec<Vec<f64>>, dedup_tol: Option<f64>) -> Result<Self> {
        if lambdas.is_empty() {
            return Err(Error::invalid("lambdas", "empty eigen-system"));
        }
        Error::check_len("eigenfunction count", lambdas.len(), phis.len())?;
        for phi in &phis {
            Error::check_len("eigenfunction samples", grid.len(), phi.len())?;
        }
        if !(lambdas[0] > 0.0) {
            return Err(Error::invalid("lambdas", format!("lambda_1 = {} must be positive", lambdas[0])));
        }
        if lambdas.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::invalid("lambdas", "eigenvalues must be ascending"));
        }
        let tol = dedup_tol.unwrap_or(1e-8 * lambdas[lambdas.len() - 1]);
        let distinct = group_distinct(&lambdas, tol);
        let sys = Self {
            grid,
            lambdas,
            phis,
            distinct,
        };
        let defect = sys.orthonormality_defect();
        if defect > ORTHONORMALITY_TOL {
            return Err(Error::invalid("phis", format!("orthonormality defect {defect:e}")));
        }
        Ok(sys)
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn phis(&self) -> &[Vec<f64>] {
        &self.phis
    }

    pub fn phi(&self, n: usize) -> &[f64] {
        &self.phis[n]
    }

    pub fn distinct(&self) -> &[EigenGroup] {
        &self.distinct
    }

    /// The first `n` pairs.
    pub fn truncate(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.len() {
            return Err(Error::invalid("n_modes", format!("{n} not in 1..={}", self.len())));
        }
        let tol = self.distinct_tolerance();
        Self::from_parts(self.grid, self.lambdas[..n].to_vec(), self.phis[..n].to_vec(), Some(tol))
    }

    fn distinct_tolerance(&self) -> f64 {
        1e-8 * self.lambdas[self.lambdas.len() - 1]
    }

    /// `max |⟨φ_i, φ_j⟩_h − δ_ij|`.
    pub fn orthonormality_defect(&self) -> f64 {
        let h = self.grid.spacing();
        let mut worst: f64 = 0.0;
        for i in 0..self.phis.len() {
            for j in 0..=i {
                let dot: f64 = self.phis[i].iter().zip(&self.phis[j]).map(|(a, b)| a * b).sum::<f64>() * h;
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }

    /// Complex samples of `φ_n`.
    pub fn phi_complex(&self, n: usize) -> Vec<C64> {
        self.phis[n].iter().map(|&v| C64::new(v, 0.0)).collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "grid": { "length": self.grid.length, "interior_nodes": self.grid.interior_nodes },
            "n_modes": self.len(),
            "lambdas": self.lambdas,
            "phis": self.phis.iter().flatten().copied().collect::<Vec<f64>>(),
            "distinct": self.distinct,
        })
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        #[derive(Deserialize)]
        struct Raw {
            grid: Grid1D,
            n_modes: usize,
            lambdas: Vec<f64>,
            phis: Vec<f64>,
        }
        let raw: Raw = serde_json::from_value(value.clone()).map_err(|e| Error::invalid("eigensystem json", e.to_string()))?;
        let grid = Grid1D::new(raw.grid.length, raw.grid.interior_nodes)?;
        Error::check_len("eigensystem json lambdas", raw.n_modes, raw.lambdas.len())?;
        Error::check_len("eigensystem json phis", raw.n_modes * grid.len(), raw.phis.len())?;
        let phis = raw.phis.chunks(grid.len()).map(|c| c.to_vec()).collect();
        Self::from_parts(grid, raw.lambdas, phis, None)
    }
}

/// Group consecutive ascending values whose gap is at most `tol`.
pub fn group_distinct(lambdas: &[f64], tol: f64) -> Vec<EigenGroup> {
    let mut groups = Vec::new();
    let mut start = 0;
    for i in 1..=lambdas.len() {
        if i == lambdas.len() || lambdas[i] - lambdas[i - 1] > tol {
            let slice = &lambdas[start..i];
            groups.push(EigenGroup {
                value: slice.iter().sum::<f64>() / slice.len() as f64,
                multiplicity: slice.len(),
                start,
                end: i,
            });
            start = i;
        }
    }
    groups
}

/// Closed-form Dirichlet Laplacian pairs `λ_n = (nπ/L)²`,
/// `φ_n = √(2/L) sin(nπx/L)`, normalized for `⟨·,·⟩_h`.
pub fn analytic_eigensystem(n_modes: usize, grid: &Grid1D) -> Result<EigenSystem> {
    if n_modes == 0 || n_modes > grid.len() {
        return Err(Error::invalid("n_modes", format!("{n_modes} not in 1..={}", grid.len())));
    }
    let l = grid.length();
    let mut phis: Vec<Vec<f64>> = Vec::with_capacity(n_modes);
    for n in 1..=n_modes {
        let k = n as f64 * PI / l;
        let mut v: Vec<f64> = grid.nodes().iter().map(|&x| (2.0 / l).sqrt() * (k * x).sin()).collect();
        // Modified Gram-Schmidt; the discrete sines are already orthogonal, so
        // this only removes rounding.
        for prev in &phis {
            let dot: f64 = v.iter().zip(prev).map(|(a, b)| a * b).sum::<f64>() * grid.spacing();
            v.iter_mut().zip(prev).for_each(|(a, b)| *a -= dot * b);
        }
        let norm = (v.iter().map(|a| a * a).sum::<f64>() * grid.spacing()).sqrt();
        v.iter_mut().for_each(|a| *a /= norm);
        phis.push(v);
    }
    let lambdas = (1..=n_modes).map(|n| (n as f64 * PI / l).powi(2)).collect();
    EigenSystem::from_parts(*grid, lambdas, phis, None)
}

/// First `n_modes` eigenpairs of `a` (the matrix of `−𝓛` on `grid`).
pub fn eigen_solve(a: &SymTridiag, n_modes: usize, dedup_tol: Option<f64>, grid: &Grid1D) -> Result<EigenSystem> {
    Error::check_len("operator dimension", grid.len(), a.dim())?;
    if n_modes == 0 || n_modes > a.dim() {
        return Err(Error::invalid("n_modes", format!("{n_modes} not in 1..={}", a.dim())));
    }
    let (values, vectors) = tridiag_eigen(a)?;
    let scale = 1.0 / grid.spacing().sqrt();
    let phis = vectors
        .into_iter()
        .take(n_modes)
        .map(|mut v| {
            // Fix the sign by the first clearly non-zero component.
            let peak = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
            let lead = v.iter().copied().find(|x| x.abs() > 1e-8 * peak).unwrap_or(1.0);
            let s = if lead < 0.0 { -scale } else { scale };
            v.iter_mut().for_each(|x| *x *= s);
            v
        })
        .collect();
    EigenSystem::from_parts(*grid, values[..n_modes].to_vec(), phis, dedup_tol)
}

/// Convenience: assemble and solve.
pub fn fd_eigensystem(spec: &OperatorSpec, grid: &Grid1D, n_modes: usize) -> Result<EigenSystem> {
    eigen_solve(&assemble_operator(spec, grid)?, n_modes, None, grid)
}
