//! Spatial grid, the heavy particle's initial superposition and the density-matrix container.

use std::f64::consts::PI;
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fmt_num;
use crate::linalg::{hermitian_eigenvalues, singular_values};

type C = Complex64;

/// Uniform grid on `[-H, H]` with an odd number of nodes, so `X = 0` is a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub half_width: f64,
    pub nodes: usize,
}

impl GridSpec {
    pub fn new(half_width: f64, nodes: usize) -> Result<Self> {
        if !(half_width > 0.0) || !half_width.is_finite() {
            return Err(Error::InvalidInput(format!("grid half-width must be positive, got {half_width}")));
        }
        if nodes < 3 || nodes.is_multiple_of(2) {
            return Err(Error::InvalidInput(format!("grid node count must be odd and >= 3, got {nodes}")));
        }
        Ok(Self { half_width, nodes })
    }

    pub fn len(&self) -> usize {
        self.nodes
    }

    pub fn is_empty(&self) -> bool {
        self.nodes == 0
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.nodes - 1) as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        -self.half_width + j as f64 * self.spacing()
    }

    pub fn positions(&self) -> Vec<f64> {
        (0..self.nodes).map(|j| self.node(j)).collect()
    }

    /// Trapezoid quadrature weights, `h` at interior nodes and `h/2` at the walls.
    pub fn weights(&self) -> Vec<f64> {
        let h = self.spacing();
        (0..self.nodes)
            .map(|j| if j == 0 || j + 1 == self.nodes { 0.5 * h } else { h })
            .collect()
    }

    /// Nearest node to `x`, clamped to the grid.
    pub fn nearest(&self, x: f64) -> usize {
        let j = ((x + self.half_width) / self.spacing()).round();
        j.clamp(0.0, (self.nodes - 1) as f64) as usize
    }
}

/// Parameters of the two counter-propagating bumps of the heavy particle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeavyStateSpec {
    /// Distance of each bump from the origin.
    pub x0: f64,
    /// Momentum magnitude of each bump.
    pub p_h: f64,
    pub sigma_h: f64,
    pub mass: f64,
}

impl HeavyStateSpec {
    pub fn new(x0: f64, p_h: f64, sigma_h: f64, mass: f64) -> Result<Self> {
        let heavy = Self { x0, p_h, sigma_h, mass };
        if [x0, p_h, sigma_h, mass].iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "heavy state parameters must be positive: {heavy:?}"
            )));
        }
        Ok(heavy)
    }

    pub fn fits(&self, grid: &GridSpec) -> Result<()> {
        if 3.0 * self.sigma_h + self.x0 >= grid.half_width {
            return Err(Error::InvalidInput(format!(
                "state does not fit the box: 3 sigma_H + X0 = {} >= H = {}",
                3.0 * self.sigma_h + self.x0,
                grid.half_width
            )));
        }
        Ok(())
    }

    /// Time at which the two bumps overlap, `X0 M / p_H`.
    pub fn overlap_time(&self) -> f64 {
        self.x0 * self.mass / self.p_h
    }

    /// Normalization constant of `phi_- + phi_+` in the continuum.
    pub fn normalization(&self) -> f64 {
        let overlap = (-self.x0 * self.x0 / (2.0 * self.sigma_h * self.sigma_h)).exp()
            * (-2.0 * (self.sigma_h * self.p_h).powi(2)).exp();
        (2.0 * (1.0 + overlap)).sqrt()
    }
}

/// Which of the two bumps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bump {
    /// Centred at `-X0`, moving right.
    Left,
    /// Centred at `+X0`, moving left.
    Right,
}

/// A single Gaussian bump sampled on the grid (continuum normalization).
pub fn bump(heavy: &HeavyStateSpec, grid: &GridSpec, which: Bump) -> Vec<C> {
    let s = match which {
        Bump::Left => -1.0,
        Bump::Right => 1.0,
    };
    let amp = (2.0 * PI).powf(-0.25) / heavy.sigma_h.sqrt();
    grid.positions()
        .into_iter()
        .map(|x| {
            let env = amp * (-(x - s * heavy.x0).powi(2) / (4.0 * heavy.sigma_h * heavy.sigma_h)).exp();
            C::from_polar(env, -s * heavy.p_h * x)
        })
        .collect()
}

/// `sum_j w_j |phi_j|^2`.
pub fn norm_sq(phi: &[C], grid: &GridSpec) -> f64 {
    phi.iter().zip(grid.weights()).map(|(p, w)| w * p.norm_sqr()).sum()
}

/// Rescales `phi` to unit discrete norm.
pub fn normalize(phi: &mut [C], grid: &GridSpec) {
    let n = norm_sq(phi, grid).sqrt();
    if n > 0.0 {
        phi.iter_mut().for_each(|p| *p /= n);
    }
}

/// Tolerance on the continuum normalization before the discrete rescale.
pub const TOL_CLIPPING: f64 = 1e-6;

/// The superposition `(phi_- + phi_+) / N`, rescaled to unit discrete norm.
///
/// Fails when the continuum norm on the grid misses 1 by more than `1e-6`,
/// which means the box clips the bumps.
pub fn heavy_wavefunction(heavy: &HeavyStateSpec, grid: &GridSpec) -> Result<Vec<C>> {
    heavy.fits(grid)?;
    let n = heavy.normalization();
    let left = bump(heavy, grid, Bump::Left);
    let right = bump(heavy, grid, Bump::Right);
    let mut phi: Vec<C> = left.iter().zip(&right).map(|(a, b)| (a + b) / n).collect();
    let defect = (norm_sq(&phi, grid) - 1.0).abs();
    if defect > TOL_CLIPPING {
        return Err(Error::Normalization { defect, tol: TOL_CLIPPING });
    }
    normalize(&mut phi, grid);
    Ok(phi)
}

/// Density-matrix kernel sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    pub grid: GridSpec,
    pub values: Array2<C>,
}

impl DensityMatrix {
    pub fn new(grid: GridSpec, values: Array2<C>) -> Result<Self> {
        if values.dim() != (grid.nodes, grid.nodes) {
            return Err(Error::GridMismatch(format!(
                "matrix is {:?}, grid has {} nodes",
                values.dim(),
                grid.nodes
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn dim(&self) -> usize {
        self.grid.nodes
    }

    /// `sum_j w_j rho(X_j, X_j)` (real part; the imaginary part is a Hermiticity defect).
    pub fn trace(&self) -> f64 {
        self.grid
            .weights()
            .iter()
            .enumerate()
            .map(|(j, w)| w * self.values[[j, j]].re)
            .sum()
    }

    /// `max |rho_ij - conj(rho_ji)|`.
    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.values[[i, j]] - self.values[[j, i]].conj()).norm());
            }
        }
        worst
    }

    /// Matrix of the operator in the orthonormal basis of the weighted inner product.
    pub fn operator_matrix(&self) -> Array2<C> {
        let root: Vec<f64> = self.grid.weights().iter().map(|w| w.sqrt()).collect();
        let mut m = self.values.clone();
        for ((i, j), v) in m.indexed_iter_mut() {
            *v *= root[i] * root[j];
        }
        m
    }

    /// Smallest eigenvalue of the (Hermitian part of the) operator.
    pub fn min_eigenvalue(&self) -> f64 {
        hermitian_eigenvalues(&self.operator_matrix())[0]
    }

    pub fn same_grid(&self, other: &DensityMatrix) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch(format!("{:?} vs {:?}", self.grid, other.grid)));
        }
        Ok(())
    }

    /// Asserts unit trace and Hermiticity within the given tolerances.
    pub fn check_invariants(&self, tol_trace: f64, tol_herm: f64) -> Result<()> {
        let trace = self.trace();
        if !((trace - 1.0).abs() <= tol_trace) {
            return Err(Error::Invariant(format!("trace = {trace:.17e}, expected 1 within {tol_trace:.1e}")));
        }
        let herm = self.hermiticity_defect();
        if !(herm <= tol_herm) {
            return Err(Error::Invariant(format!("Hermiticity defect {herm:.3e} exceeds {tol_herm:.1e}")));
        }
        Ok(())
    }

    /// CSV with columns `X, rho_diag`.
    pub fn write_density_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["X", "rho_diag"])?;
        for (x, d) in self.grid.positions().iter().zip(position_density(self)) {
            w.write_record([fmt_num(*x), fmt_num(d)])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Long-format CSV with columns `X, X', abs_rho`.
    pub fn write_abs_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["X", "Xp", "abs_rho"])?;
        let x = self.grid.positions();
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                w.write_record([fmt_num(x[i]), fmt_num(x[j]), fmt_num(self.values[[i, j]].norm())])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// `rho(X, X') = phi(X) conj(phi(X'))`.
pub fn pure_density(phi: &[C], grid: &GridSpec) -> Result<DensityMatrix> {
    if phi.len() != grid.nodes {
        return Err(Error::GridMismatch(format!("{} samples on a {}-node grid", phi.len(), grid.nodes)));
    }
    let values = Array2::from_shape_fn((grid.nodes, grid.nodes), |(i, j)| phi[i] * phi[j].conj());
    DensityMatrix::new(*grid, values)
}

/// Diagonal of the kernel, the position probability density.
pub fn position_density(rho: &DensityMatrix) -> Vec<f64> {
    (0..rho.dim()).map(|j| rho.values[[j, j]].re).collect()
}

/// Trace norm of `a - b`, from the singular values of the weighted difference.
pub fn trace_distance(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    a.same_grid(b)?;
    let diff = DensityMatrix::new(a.grid, &a.values - &b.values)?;
    Ok(singular_values(&diff.operator_matrix()).iter().sum())
}
