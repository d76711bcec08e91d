//! Gaussian random fields on the unit square: Matérn covariances and their
//! truncated Karhunen–Loève discretisation.
//!
//! The eigenproblem of the covariance operator is discretised with a nodal
//! quadrature rule (Nyström method). With `D` the diagonal of quadrature
//! weights and `C` the kernel matrix, the symmetric matrix `D^½ C D^½` is
//! diagonalised densely; its eigenvectors `v_n` give the nodal eigenfunctions
//! `u_n = D^{-½} v_n`, which are orthonormal in the discrete `L²` inner
//! product. The stored modes are pre-scaled by `√λ_n`, so a field reads
//! `θ(x) = m₀(x) + Σ_n m_n(x) ξ_n` with standard normal `ξ_n`.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Smoothness orders with closed-form Matérn kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Smoothness {
    Half,
    ThreeHalves,
    FiveHalves,
}

impl Smoothness {
    pub fn value(self) -> f64 {
        match self {
            Smoothness::Half => 0.5,
            Smoothness::ThreeHalves => 1.5,
            Smoothness::FiveHalves => 2.5,
        }
    }

    pub fn from_value(nu: f64) -> Result<Self> {
        match nu {
            v if v == 0.5 => Ok(Smoothness::Half),
            v if v == 1.5 => Ok(Smoothness::ThreeHalves),
            v if v == 2.5 => Ok(Smoothness::FiveHalves),
            _ => Err(Error::Domain(format!(
                "Matérn smoothness {nu} has no closed form (expected 0.5, 1.5 or 2.5)"
            ))),
        }
    }
}

/// How the distance is scaled before entering the Matérn correlation.
///
/// Both conventions use `ρ_ν(r) = 2^{1-ν}/Γ(ν) (a r/λ)^ν K_ν(a r/λ)` and
/// differ only in the factor `a`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub enum MaternScaling {
    /// `a = 2√ν` (Handcock–Wallis; the variogram convention of Minasny and
    /// McBratney). For `ν = 3/2` this gives `(1 + √6 r/λ) exp(-√6 r/λ)`.
    #[default]
    TwoSqrtNu,
    /// `a = √(2ν)`, the convention common in machine learning. For
    /// `ν = 3/2` this gives `(1 + √3 r/λ) exp(-√3 r/λ)`.
    SqrtTwoNu,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MaternParams {
    pub sigma2: f64,
    pub corr_length: f64,
    pub smoothness: Smoothness,
    #[serde(default)]
    pub scaling: MaternScaling,
}

impl MaternParams {
    pub fn new(sigma2: f64, corr_length: f64, smoothness: Smoothness) -> Result<Self> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::Domain(format!("variance must be positive, got {sigma2}")));
        }
        if !(corr_length > 0.0 && corr_length.is_finite()) {
            return Err(Error::Domain(format!(
                "correlation length must be positive, got {corr_length}"
            )));
        }
        Ok(Self {
            sigma2,
            corr_length,
            smoothness,
            scaling: MaternScaling::default(),
        })
    }

    pub fn with_scaling(mut self, scaling: MaternScaling) -> Self {
        self.scaling = scaling;
        self
    }

    fn distance_factor(&self) -> f64 {
        let nu = self.smoothness.value();
        match self.scaling {
            MaternScaling::TwoSqrtNu => 2.0 * nu.sqrt(),
            MaternScaling::SqrtTwoNu => (2.0 * nu).sqrt(),
        }
    }

    /// Correlation at distance `r`; assumes `r ≥ 0`.
    fn correlation(&self, r: f64) -> f64 {
        let x = self.distance_factor() * r / self.corr_length;
        match self.smoothness {
            Smoothness::Half => (-x).exp(),
            Smoothness::ThreeHalves => (1.0 + x) * (-x).exp(),
            Smoothness::FiveHalves => (1.0 + x + x * x / 3.0) * (-x).exp(),
        }
    }
}

pub fn matern_covariance(r: f64, p: &MaternParams) -> Result<f64> {
    if r.is_nan() || r < 0.0 {
        return Err(Error::Domain(format!("distance must be non-negative, got {r}")));
    }
    Ok(p.sigma2 * p.correlation(r))
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Dense kernel matrix `C_ij = C(|x_i - x_j|)`.
pub fn build_covariance_matrix(points: &[[f64; 2]], p: &MaternParams) -> Result<DMatrix<f64>> {
    if let Some(bad) = points.iter().find(|q| !(q[0].is_finite() && q[1].is_finite())) {
        return Err(Error::Domain(format!("non-finite point {bad:?}")));
    }
    let n = points.len();
    let mut c = DMatrix::zeros(n, n);
    for i in 0..n {
        c[(i, i)] = p.sigma2;
        for j in 0..i {
            let v = p.sigma2 * p.correlation(distance(points[i], points[j]));
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    Ok(c)
}

/// Nodal quadrature on the unit square.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    points: Vec<[f64; 2]>,
    weights: Vec<f64>,
    /// Cells per side when the points form the lattice `{i/n} × {j/n}`
    /// in x-fastest order.
    lattice: Option<usize>,
}

impl QuadratureGrid {
    pub fn new(points: Vec<[f64; 2]>, weights: Vec<f64>) -> Result<Self> {
        if points.len() != weights.len() || points.is_empty() {
            return Err(Error::Domain(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(Error::Domain(format!("quadrature weight {w} is not positive")));
        }
        Ok(Self {
            points,
            weights,
            lattice: None,
        })
    }

    /// Tensor trapezoidal rule on the `(n+1)²` lattice nodes.
    pub fn trapezoidal(n_cells: usize) -> Result<Self> {
        if n_cells < 1 {
            return Err(Error::Config("trapezoidal grid needs at least one cell".into()));
        }
        let h = 1.0 / n_cells as f64;
        let w1: Vec<f64> = (0..=n_cells)
            .map(|i| if i == 0 || i == n_cells { 0.5 * h } else { h })
            .collect();
        let mut points = Vec::with_capacity((n_cells + 1).pow(2));
        let mut weights = Vec::with_capacity(points.capacity());
        for j in 0..=n_cells {
            for i in 0..=n_cells {
                points.push([i as f64 * h, j as f64 * h]);
                weights.push(w1[i] * w1[j]);
            }
        }
        Ok(Self {
            points,
            weights,
            lattice: Some(n_cells),
        })
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn lattice_cells(&self) -> Option<usize> {
        self.lattice
    }

    /// Nodes and weights of the value at `x` as a linear combination of
    /// nodal values: bilinear on a lattice, exact node match otherwise.
    fn stencil(&self, x: [f64; 2]) -> Result<Vec<(usize, f64)>> {
        if !(0.0..=1.0).contains(&x[0]) || !(0.0..=1.0).contains(&x[1]) {
            return Err(Error::Domain(format!("point {x:?} lies outside [0,1]²")));
        }
        match self.lattice {
            Some(n) => {
                let (i, s) = cell_coordinate(x[0], n);
                let (j, t) = cell_coordinate(x[1], n);
                let stride = n + 1;
                let base = i + j * stride;
                let mut st = Vec::with_capacity(4);
                for (node, w) in [
                    (base, (1.0 - s) * (1.0 - t)),
                    (base + 1, s * (1.0 - t)),
                    (base + stride, (1.0 - s) * t),
                    (base + stride + 1, s * t),
                ] {
                    if w != 0.0 {
                        st.push((node, w));
                    }
                }
                Ok(st)
            }
            None => self
                .points
                .iter()
                .position(|p| distance(*p, x) <= 1e-12)
                .map(|i| vec![(i, 1.0)])
                .ok_or_else(|| Error::Domain(format!("point {x:?} is not a grid node and the grid is not a lattice"))),
        }
    }
}

/// Cell index and local coordinate in `[0,1]` of `x ∈ [0,1]` on `n` cells.
pub(crate) fn cell_coordinate(x: f64, n: usize) -> (usize, f64) {
    let scaled = x * n as f64;
    let i = (scaled.floor() as usize).min(n - 1);
    (i, scaled - i as f64)
}

/// Truncated Karhunen–Loève basis evaluated at the nodes of a quadrature grid.
#[derive(Debug, Clone)]
pub struct KlBasis {
    grid: QuadratureGrid,
    mean: Vec<f64>,
    eigenvalues: Vec<f64>,
    /// Column `n` holds the nodal values of `√λ_n u_n`.
    modes: DMatrix<f64>,
    trace: f64,
}

impl KlBasis {
    pub fn grid(&self) -> &QuadratureGrid {
        &self.grid
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn modes(&self) -> &DMatrix<f64> {
        &self.modes
    }

    pub fn n_sto(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Sum of all eigenvalues of the discretised operator.
    pub fn trace(&self) -> f64 {
        self.trace
    }

    /// Precomputes the linear map from coefficients to field values at
    /// a fixed point set.
    pub fn sampler_at(&self, points: &[[f64; 2]]) -> Result<FieldSampler> {
        let n_sto = self.n_sto();
        let mut mean = Vec::with_capacity(points.len());
        let mut modes = vec![0.0; points.len() * n_sto];
        for (p, x) in points.iter().enumerate() {
            let stencil = self.grid.stencil(*x)?;
            mean.push(stencil.iter().map(|&(i, w)| w * self.mean[i]).sum());
            let row = &mut modes[p * n_sto..(p + 1) * n_sto];
            for &(i, w) in &stencil {
                for (n, r) in row.iter_mut().enumerate() {
                    *r += w * self.modes[(i, n)];
                }
            }
        }
        Ok(FieldSampler { n_sto, mean, modes })
    }
}

/// Affine map `ξ ↦ m₀(x_p) + Σ_n m_n(x_p) ξ_n` at fixed points `x_p`.
#[derive(Debug, Clone)]
pub struct FieldSampler {
    n_sto: usize,
    mean: Vec<f64>,
    /// Row-major `points × n_sto`.
    modes: Vec<f64>,
}

impl FieldSampler {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn n_sto(&self) -> usize {
        self.n_sto
    }

    pub fn evaluate_into(&self, coeffs: &[f64], out: &mut [f64]) {
        debug_assert_eq!(coeffs.len(), self.n_sto);
        for (p, o) in out.iter_mut().enumerate() {
            let row = &self.modes[p * self.n_sto..(p + 1) * self.n_sto];
            *o = self.mean[p] + row.iter().zip(coeffs).map(|(m, c)| m * c).sum::<f64>();
        }
    }

    pub fn evaluate(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.evaluate_into(coeffs, &mut out);
        out
    }
}

/// Solves the Nyström eigenproblem and keeps the `n_sto` leading pairs.
pub fn compute_kl_basis(grid: &QuadratureGrid, p: &MaternParams, mean: &[f64], n_sto: usize) -> Result<KlBasis> {
    let n = grid.len();
    if mean.len() != n {
        return Err(Error::Domain(format!(
            "mean has {} nodal values, grid has {n} nodes",
            mean.len()
        )));
    }
    if n_sto > n {
        return Err(Error::Config(format!(
            "cannot keep {n_sto} KL modes on a grid with {n} nodes"
        )));
    }
    let sqrt_w: Vec<f64> = grid.weights.iter().map(|w| w.sqrt()).collect();
    let mut a = build_covariance_matrix(&grid.points, p)?;
    for j in 0..n {
        for i in 0..n {
            a[(i, j)] *= sqrt_w[i] * sqrt_w[j];
        }
    }
    let trace = a.trace();
    let eig = SymmetricEigen::try_new(a, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numeric("symmetric eigensolver did not converge".into()))?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));

    if n_sto > 0 && eig.eigenvalues[order[0]] <= 0.0 {
        return Err(Error::DegenerateKernel(eig.eigenvalues[order[0]]));
    }
    let mut eigenvalues = Vec::with_capacity(n_sto);
    let mut modes = DMatrix::zeros(n, n_sto);
    for (col, &k) in order.iter().take(n_sto).enumerate() {
        let lambda = eig.eigenvalues[k];
        if lambda <= 0.0 {
            return Err(Error::Numeric(format!(
                "KL eigenvalue {} is {lambda:e}; truncate below the numerical rank",
                col + 1
            )));
        }
        let v = eig.eigenvectors.column(k);
        // Fix the sign so the largest-magnitude nodal entry is positive.
        let pivot = v
            .iter()
            .copied()
            .fold(0.0_f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        let scale = sign * lambda.sqrt();
        for i in 0..n {
            modes[(i, col)] = scale * v[i] / sqrt_w[i];
        }
        eigenvalues.push(lambda);
    }
    Ok(KlBasis {
        grid: grid.clone(),
        mean: mean.to_vec(),
        eigenvalues,
        modes,
        trace,
    })
}

pub fn captured_variance_fraction(basis: &KlBasis) -> f64 {
    if basis.trace <= 0.0 {
        return 0.0;
    }
    (basis.eigenvalues.iter().sum::<f64>() / basis.trace).clamp(0.0, 1.0)
}

/// `m₀(x) + Σ m_n(x) coeffs_n` at each point; bilinear between lattice nodes.
pub fn evaluate_field(basis: &KlBasis, coeffs: &[f64], points: &[[f64; 2]]) -> Result<Vec<f64>> {
    if coeffs.len() != basis.n_sto() {
        return Err(Error::Domain(format!(
            "expected {} KL coefficients, got {}",
            basis.n_sto(),
            coeffs.len()
        )));
    }
    if let Some(c) = coeffs.iter().find(|c| !c.is_finite()) {
        return Err(Error::Domain(format!("non-finite KL coefficient {c}")));
    }
    Ok(basis.sampler_at(points)?.evaluate(coeffs))
}

/// `j` independent draws of `n_sto` standard normal coefficients.
pub fn sample_prior_coeffs<R: Rng + ?Sized>(n_sto: usize, j: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..j)
        .map(|_| (0..n_sto).map(|_| rng.sample(StandardNormal)).collect())
        .collect()
}

/// CSV with columns `index, eigenvalue, cumulative_fraction`.
pub fn write_eigenvalue_csv<W: Write>(basis: &KlBasis, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["index", "eigenvalue", "cumulative_fraction"])?;
    let mut cum = 0.0;
    for (i, l) in basis.eigenvalues.iter().enumerate() {
        cum += l;
        w.write_record([
            (i + 1).to_string(),
            format!("{l:e}"),
            format!("{:e}", cum / basis.trace),
        ])?;
    }
    w.flush()?;
    Ok(())
}
