//! Piecewise-linear finite elements for `-∇·(κ ∇p) = f` on the unit square.

mod band;
mod mesh;

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

pub use band::{BandCholesky, SymmetricBand};
pub use mesh::{build_mesh, BoundaryTags, MeshLevel};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum BoundarySpec {
    /// `p = 0` on the whole boundary.
    AllDirichletZero,
    /// `p = 0` at `x₁ = 0`, `p = 1` at `x₁ = 1`, no flow through `x₂ ∈ {0, 1}`.
    FlowCell,
}

#[derive(Debug, Clone, Copy)]
pub enum SourceSpec {
    Zero,
    NineGaussians,
    Custom(fn([f64; 2]) -> f64),
}

impl SourceSpec {
    pub fn eval(&self, x: [f64; 2]) -> f64 {
        match self {
            SourceSpec::Zero => 0.0,
            SourceSpec::NineGaussians => nine_gaussian_source(x),
            SourceSpec::Custom(f) => f(x),
        }
    }
}

const SOURCE_VARIANCE: f64 = 0.001;

fn gaussian_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
}

/// Nine smoothed point sources at `(0.25 n, 0.25 m)`, `n, m ∈ {1, 2, 3}`.
pub fn nine_gaussian_source(x: [f64; 2]) -> f64 {
    let gx: f64 = (1..=3)
        .map(|n| gaussian_pdf(x[0], 0.25 * n as f64, SOURCE_VARIANCE))
        .sum();
    let gy: f64 = (1..=3)
        .map(|m| gaussian_pdf(x[1], 0.25 * m as f64, SOURCE_VARIANCE))
        .sum();
    gx * gy
}

/// Nodal P1 solution on a mesh.
#[derive(Debug, Clone)]
pub struct FemSolution {
    mesh: Arc<MeshLevel>,
    values: Vec<f64>,
}

impl FemSolution {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mesh(&self) -> &MeshLevel {
        &self.mesh
    }

    /// Nodal dump with columns `x, y, p`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "y", "p"])?;
        for (x, p) in self.mesh.nodes().iter().zip(&self.values) {
            w.write_record([x[0].to_string(), x[1].to_string(), format!("{p:e}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Everything about a discrete problem that does not depend on `κ`:
/// dof numbering, band structure, load vector and element geometry.
#[derive(Debug, Clone)]
pub struct FemSystem {
    mesh: Arc<MeshLevel>,
    bc: BoundarySpec,
    /// Node to unknown index; `None` for Dirichlet nodes.
    dof: Vec<Option<usize>>,
    /// Prescribed values at Dirichlet nodes (zero elsewhere).
    lifting: Vec<f64>,
    n_free: usize,
    bandwidth: usize,
    /// Source contribution to the right-hand side, per unknown.
    load: Vec<f64>,
    /// Geometric stiffness `(∇φ_a · ∇φ_b) |T|` per element, row-major 3×3.
    local: Vec<[f64; 9]>,
}

impl FemSystem {
    pub fn new(mesh: Arc<MeshLevel>, source: SourceSpec, bc: BoundarySpec) -> Self {
        let n_nodes = mesh.n_nodes();
        let mut dof = vec![None; n_nodes];
        let mut lifting = vec![0.0; n_nodes];
        let mut n_free = 0;
        for (node, d) in dof.iter_mut().enumerate() {
            let tags = mesh.boundary_tags(node);
            let dirichlet = match bc {
                BoundarySpec::AllDirichletZero => tags.any(),
                BoundarySpec::FlowCell => tags.left || tags.right,
            };
            if dirichlet {
                if bc == BoundarySpec::FlowCell && tags.right {
                    lifting[node] = 1.0;
                }
            } else {
                *d = Some(n_free);
                n_free += 1;
            }
        }

        let mut bandwidth = 0;
        let mut local = Vec::with_capacity(mesh.n_elements());
        let mut load = vec![0.0; n_free];
        for (e, tri) in mesh.elements().iter().enumerate() {
            let free: Vec<usize> = tri.iter().filter_map(|&v| dof[v]).collect();
            if let (Some(lo), Some(hi)) = (free.iter().min(), free.iter().max()) {
                bandwidth = bandwidth.max(hi - lo);
            }

            let [a, b, c] = mesh.vertices(e);
            let area = mesh.element_area(e);
            let gy = [b[1] - c[1], c[1] - a[1], a[1] - b[1]];
            let gx = [c[0] - b[0], a[0] - c[0], b[0] - a[0]];
            let mut k = [0.0; 9];
            for r in 0..3 {
                for s in 0..3 {
                    k[3 * r + s] = (gy[r] * gy[s] + gx[r] * gx[s]) / (4.0 * area);
                }
            }
            local.push(k);

            // Edge-midpoint rule: each basis function is 1/2 at the two
            // midpoints of its adjacent edges and 0 at the opposite one.
            let mid = |p: [f64; 2], q: [f64; 2]| [(p[0] + q[0]) / 2.0, (p[1] + q[1]) / 2.0];
            let f_ab = source.eval(mid(a, b));
            let f_bc = source.eval(mid(b, c));
            let f_ca = source.eval(mid(c, a));
            let contrib = [f_ab + f_ca, f_ab + f_bc, f_bc + f_ca];
            for (r, &v) in tri.iter().enumerate() {
                if let Some(i) = dof[v] {
                    load[i] += area / 6.0 * contrib[r];
                }
            }
        }

        Self {
            mesh,
            bc,
            dof,
            lifting,
            n_free,
            bandwidth,
            load,
            local,
        }
    }

    pub fn mesh(&self) -> &Arc<MeshLevel> {
        &self.mesh
    }

    pub fn boundary(&self) -> BoundarySpec {
        self.bc
    }

    pub fn n_unknowns(&self) -> usize {
        self.n_free
    }

    /// Stiffness matrix after Dirichlet elimination and the matching
    /// right-hand side.
    pub fn assemble(&self, kappa_elem: &[f64]) -> Result<(SymmetricBand, Vec<f64>)> {
        if kappa_elem.len() != self.mesh.n_elements() {
            return Err(Error::Domain(format!(
                "{} conductivity values for {} elements",
                kappa_elem.len(),
                self.mesh.n_elements()
            )));
        }
        if let Some(k) = kappa_elem.iter().find(|k| !(**k > 0.0 && k.is_finite())) {
            return Err(Error::Domain(format!(
                "conductivity must be positive and finite, got {k}"
            )));
        }
        let mut a = SymmetricBand::zeros(self.n_free, self.bandwidth);
        let mut rhs = self.load.clone();
        for ((tri, k), &kappa) in self.mesh.elements().iter().zip(&self.local).zip(kappa_elem) {
            for r in 0..3 {
                let Some(i) = self.dof[tri[r]] else { continue };
                for s in 0..3 {
                    let entry = kappa * k[3 * r + s];
                    match self.dof[tri[s]] {
                        Some(j) if j <= i => a.add(i, j, entry),
                        Some(_) => {}
                        None => rhs[i] -= entry * self.lifting[tri[s]],
                    }
                }
            }
        }
        Ok((a, rhs))
    }

    pub fn solve(&self, kappa_elem: &[f64]) -> Result<FemSolution> {
        let (a, rhs) = self.assemble(kappa_elem)?;
        let mut x = rhs.clone();
        let direct_ok = match a.cholesky() {
            Ok(chol) => {
                chol.solve_in_place(&mut x);
                a.relative_residual(&x, &rhs) <= 1e-10
            }
            Err(_) => {
                x.iter_mut().for_each(|v| *v = 0.0);
                false
            }
        };
        if !direct_ok {
            a.conjugate_gradient(&rhs, &mut x, 1e-10, 10 * self.n_free.max(10))?;
        }
        let values = self
            .dof
            .iter()
            .zip(&self.lifting)
            .map(|(d, g)| d.map_or(*g, |i| x[i]))
            .collect();
        Ok(FemSolution {
            mesh: Arc::clone(&self.mesh),
            values,
        })
    }
}

/// Galerkin solution with piecewise-constant `κ` per element.
pub fn assemble_and_solve(
    mesh: &MeshLevel,
    kappa_elem: &[f64],
    source: SourceSpec,
    bc: BoundarySpec,
) -> Result<FemSolution> {
    FemSystem::new(Arc::new(mesh.clone()), source, bc).solve(kappa_elem)
}

/// Point evaluation of P1 functions at fixed locations.
#[derive(Debug, Clone)]
pub struct ObservationOperator {
    n_side: usize,
    stencils: Vec<[(usize, f64); 3]>,
}

impl ObservationOperator {
    pub fn new(mesh: &MeshLevel, points: &[[f64; 2]]) -> Result<Self> {
        let stencils = points
            .iter()
            .map(|&x| {
                let (e, bary) = mesh.locate(x)?;
                let tri = mesh.elements()[e];
                Ok([(tri[0], bary[0]), (tri[1], bary[1]), (tri[2], bary[2])])
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            n_side: mesh.n_side(),
            stencils,
        })
    }

    pub fn len(&self) -> usize {
        self.stencils.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stencils.is_empty()
    }

    pub fn apply(&self, sol: &FemSolution) -> Vec<f64> {
        debug_assert_eq!(sol.mesh.n_side(), self.n_side);
        self.stencils
            .iter()
            .map(|st| st.iter().map(|&(v, w)| w * sol.values[v]).sum())
            .collect()
    }
}

/// Exact P1 interpolation of the solution at each point.
pub fn observe(sol: &FemSolution, points: &[[f64; 2]]) -> Result<Vec<f64>> {
    Ok(ObservationOperator::new(&sol.mesh, points)?.apply(sol))
}

// Degree-5 seven-point rule on the reference triangle (Dunavant).
const D5_W: [f64; 3] = [0.225, 0.132_394_152_788_506, 0.125_939_180_544_827];
const D5_A: [f64; 2] = [0.059_715_871_789_770, 0.797_426_985_353_087];
const D5_B: [f64; 2] = [0.470_142_064_105_115, 0.101_286_507_323_456];

fn dunavant5() -> Vec<([f64; 3], f64)> {
    let mut pts = vec![([1.0 / 3.0; 3], D5_W[0])];
    for (k, w) in [D5_W[1], D5_W[2]].into_iter().enumerate() {
        let (a, b) = (D5_A[k], D5_B[k]);
        pts.push(([a, b, b], w));
        pts.push(([b, a, b], w));
        pts.push(([b, b, a], w));
    }
    pts
}

/// `‖p_h − p‖_{L²}` with a degree-5 quadrature per element.
pub fn l2_error(sol: &FemSolution, exact: impl Fn([f64; 2]) -> f64) -> f64 {
    let mesh = &sol.mesh;
    let rule = dunavant5();
    let mut acc = 0.0;
    for (e, tri) in mesh.elements().iter().enumerate() {
        let v = mesh.vertices(e);
        let area = mesh.element_area(e);
        for (bary, w) in &rule {
            let x = [
                bary[0] * v[0][0] + bary[1] * v[1][0] + bary[2] * v[2][0],
                bary[0] * v[0][1] + bary[1] * v[1][1] + bary[2] * v[2][1],
            ];
            let ph: f64 = (0..3).map(|k| bary[k] * sol.values[tri[k]]).sum();
            acc += w * area * (ph - exact(x)).powi(2);
        }
    }
    acc.sqrt()
}
