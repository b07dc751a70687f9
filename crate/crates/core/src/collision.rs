//! The collision function `I = 1 - Theta(X - X') + i Gamma(X) - i Gamma(X')` and its kernel.

use std::f64::consts::PI;
use std::path::Path;

use ndarray::{Array2, Axis};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fmt_num;
use crate::scattering::AmplitudeTable;
use crate::state::{bump, normalize, Bump, DensityMatrix, GridSpec, HeavyStateSpec};

type C = Complex64;

/// Tolerance on the kernel's diagonal, modulus and Hermitian symmetry.
pub const TOL_KERNEL: f64 = 1e-8;
/// Relative tolerance on the imaginary residue of Gamma.
pub const TOL_GAMMA_IMAG: f64 = 1e-8;
/// Largest packet weight allowed outside the momentum grid.
const TOL_COVERAGE: f64 = 1e-12;

/// Gaussian state of the incoming light particle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LightPacket {
    pub x_l: f64,
    pub sigma: f64,
    pub p: f64,
}

impl LightPacket {
    pub fn new(x_l: f64, sigma: f64, p: f64) -> Result<Self> {
        if !(sigma > 0.0) || !x_l.is_finite() || !p.is_finite() {
            return Err(Error::InvalidInput(format!("packet needs sigma > 0, got ({x_l}, {sigma}, {p})")));
        }
        Ok(Self { x_l, sigma, p })
    }

    /// Momentum-space amplitude.
    pub fn amplitude(&self, k: f64) -> C {
        let s2 = self.sigma * self.sigma;
        let env = (2.0 * s2 / PI).powf(0.25) * (-s2 * (k - self.p).powi(2)).exp();
        C::from_polar(env, -(k - self.p) * self.x_l)
    }

    /// Position-space amplitude at time zero.
    pub fn position_amplitude(&self, x: f64) -> C {
        let s2 = self.sigma * self.sigma;
        let env = (2.0 * PI * s2).powf(-0.25) * (-(x - self.x_l).powi(2) / (4.0 * s2)).exp();
        C::from_polar(env, self.p * x)
    }

    /// Upper bound on the probability outside `[k_min, k_max]`.
    pub fn weight_outside(&self, k_min: f64, k_max: f64) -> f64 {
        // |chi|^2 is a normal density with standard deviation 1/(2 sigma);
        // erfc(z)/2 <= exp(-z^2) / (2 z sqrt(pi)) bounds each tail.
        let tail = |d: f64| {
            if d <= 0.0 {
                return 1.0;
            }
            let z = std::f64::consts::SQRT_2 * self.sigma * d;
            (-z * z).exp() / (2.0 * z * PI.sqrt())
        };
        tail(k_max - self.p) + tail(self.p - k_min)
    }
}

/// Quadrature weights for Theta and Gamma of one table/packet pair.
#[derive(Debug, Clone)]
pub struct CollisionQuadrature {
    k: Vec<f64>,
    /// `|r_k|^2 |chi(k)|^2 dk`
    theta_weight: Vec<f64>,
    /// `conj(r_{-k}) t_k conj(chi(-k)) chi(k) dk`
    gamma_weight: Vec<C>,
    gamma_scale: f64,
}

impl CollisionQuadrature {
    pub fn new(table: &AmplitudeTable, packet: &LightPacket) -> Result<Self> {
        let grid = &table.grid;
        let weight = packet.weight_outside(grid.min(), grid.max());
        if weight > TOL_COVERAGE {
            return Err(Error::Coverage { weight });
        }
        if !grid.is_sign_symmetric() {
            return Err(Error::GridMismatch("collision quadrature needs a sign-symmetric grid".into()));
        }
        let k = grid.values().to_vec();
        let dk = grid.trapezoid_weights();
        let chi: Vec<C> = k.iter().map(|&k| packet.amplitude(k)).collect();
        let theta_weight = (0..k.len())
            .map(|i| table.r[i].norm_sqr() * chi[i].norm_sqr() * dk[i])
            .collect();
        let gamma_weight: Vec<C> = (0..k.len())
            .map(|i| {
                let m = grid.mirror(i);
                table.r[m].conj() * table.t[i] * chi[m].conj() * chi[i] * dk[i]
            })
            .collect();
        let gamma_scale = gamma_weight.iter().map(|g| g.norm()).sum();
        Ok(Self { k, theta_weight, gamma_weight, gamma_scale })
    }

    pub fn theta(&self, y: f64) -> C {
        if y == 0.0 {
            return C::new(0.0, 0.0);
        }
        self.k
            .iter()
            .zip(&self.theta_weight)
            .map(|(&k, &w)| w * (1.0 - C::from_polar(1.0, 2.0 * k * y)))
            .sum()
    }

    /// Gamma before discarding its (theoretically zero) imaginary part.
    pub fn gamma_complex(&self, x: f64) -> C {
        C::i() * self
            .k
            .iter()
            .zip(&self.gamma_weight)
            .map(|(&k, &g)| C::from_polar(1.0, 2.0 * k * x) * g)
            .sum::<C>()
    }

    pub fn gamma(&self, x: f64) -> Result<f64> {
        let g = self.gamma_complex(x);
        let tol = TOL_GAMMA_IMAG * self.gamma_scale;
        if g.im.abs() > tol {
            return Err(Error::GammaImaginary { x, residue: g.im.abs(), tol });
        }
        Ok(g.re)
    }

    /// `i Theta'(0) = 2 int k |r|^2 |chi|^2 dk`.
    pub fn theta_slope(&self) -> f64 {
        2.0 * self.k.iter().zip(&self.theta_weight).map(|(k, w)| k * w).sum::<f64>()
    }

    /// `Theta''(0) = 4 int k^2 |r|^2 |chi|^2 dk`.
    pub fn theta_curvature(&self) -> f64 {
        4.0 * self.k.iter().zip(&self.theta_weight).map(|(k, w)| k * k * w).sum::<f64>()
    }

    /// `Theta(Y)` for large `Y`, the total reflection probability.
    pub fn reflection_probability(&self) -> f64 {
        self.theta_weight.iter().sum()
    }
}

pub fn theta(table: &AmplitudeTable, packet: &LightPacket, y: f64) -> Result<C> {
    Ok(CollisionQuadrature::new(table, packet)?.theta(y))
}

pub fn gamma(table: &AmplitudeTable, packet: &LightPacket, x: f64) -> Result<f64> {
    CollisionQuadrature::new(table, packet)?.gamma(x)
}

pub fn collision_function(table: &AmplitudeTable, packet: &LightPacket, x: f64, xp: f64) -> Result<C> {
    let q = CollisionQuadrature::new(table, packet)?;
    Ok(1.0 - q.theta(x - xp) + C::i() * (q.gamma(x)? - q.gamma(xp)?))
}

/// Whether to keep Gamma in the kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GammaMode {
    #[default]
    Exact,
    /// Drop Gamma. Only sensible for fast packets, where it is below `exp(-2 sigma^2 p^2)`.
    Neglect,
}

/// Samples of `I(X_i, X_j)` on the heavy-particle grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CollisionKernel {
    pub grid: GridSpec,
    pub values: Array2<C>,
}

impl CollisionKernel {
    /// Kernel that does nothing.
    pub fn identity(grid: GridSpec) -> Self {
        Self { grid, values: Array2::from_elem((grid.nodes, grid.nodes), C::new(1.0, 0.0)) }
    }

    /// Assembles `1 - Theta(X_i - X_j) + i (Gamma_i - Gamma_j)` from Theta on the
    /// grid differences and Gamma on the nodes.
    pub fn from_parts(grid: GridSpec, theta: &[C], gamma: &[f64]) -> Self {
        let n = grid.nodes;
        let values = Array2::from_shape_fn((n, n), |(i, j)| {
            let th = if i >= j { theta[i - j] } else { theta[j - i].conj() };
            1.0 - th + C::new(0.0, gamma[i] - gamma[j])
        });
        Self { grid, values }
    }

    pub fn diagonal_defect(&self) -> f64 {
        (0..self.grid.nodes).map(|j| (self.values[[j, j]] - 1.0).norm()).fold(0.0, f64::max)
    }

    pub fn max_modulus(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.grid.nodes;
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.values[[i, j]] - self.values[[j, i]].conj()).norm());
            }
        }
        worst
    }

    /// Checks diagonal, modulus bound and Hermitian symmetry against `TOL_KERNEL`.
    pub fn check(&self) -> Result<()> {
        let d = self.diagonal_defect();
        if d > TOL_KERNEL {
            return Err(Error::Invariant(format!("kernel diagonal differs from 1 by {d:.3e}")));
        }
        let m = self.max_modulus();
        if m > 1.0 + TOL_KERNEL {
            return Err(Error::Invariant(format!("kernel modulus {m} exceeds 1")));
        }
        let h = self.hermiticity_defect();
        if h > TOL_KERNEL {
            return Err(Error::Invariant(format!("kernel Hermiticity defect {h:.3e}")));
        }
        Ok(())
    }

    /// `|I(X, -X)|` for the nonnegative nodes.
    pub fn antidiagonal(&self) -> Vec<(f64, f64)> {
        let n = self.grid.nodes;
        (n / 2..n)
            .map(|i| (self.grid.node(i), self.values[[i, n - 1 - i]].norm()))
            .collect()
    }

    /// Long-format CSV `X, Xp, re_I, im_I, abs_I`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["X", "Xp", "re_I", "im_I", "abs_I"])?;
        let x = self.grid.positions();
        for ((i, j), v) in self.values.indexed_iter() {
            w.write_record([x[i], x[j], v.re, v.im, v.norm()].map(fmt_num))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_antidiagonal_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["X", "abs_I"])?;
        for (x, a) in self.antidiagonal() {
            w.write_record([fmt_num(x), fmt_num(a)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Theta on the nonnegative grid differences `m h`, `m = 0..J`.
pub fn theta_on_grid(q: &CollisionQuadrature, grid: &GridSpec) -> Vec<C> {
    let h = grid.spacing();
    (0..grid.nodes)
        .into_par_iter()
        .map(|m| q.theta(m as f64 * h))
        .collect()
}

/// Gamma at arbitrary positions.
pub fn gamma_at(q: &CollisionQuadrature, xs: &[f64]) -> Result<Vec<f64>> {
    xs.par_iter().map(|&x| q.gamma(x)).collect::<Vec<_>>().into_iter().collect()
}

pub fn build_collision_kernel(
    table: &AmplitudeTable,
    packet: &LightPacket,
    grid: &GridSpec,
) -> Result<CollisionKernel> {
    build_collision_kernel_with(table, packet, grid, GammaMode::Exact)
}

pub fn build_collision_kernel_with(
    table: &AmplitudeTable,
    packet: &LightPacket,
    grid: &GridSpec,
    mode: GammaMode,
) -> Result<CollisionKernel> {
    let q = CollisionQuadrature::new(table, packet)?;
    let theta = theta_on_grid(&q, grid);
    let gamma = match mode {
        GammaMode::Exact => gamma_at(&q, &grid.positions())?,
        GammaMode::Neglect => vec![0.0; grid.nodes],
    };
    Ok(CollisionKernel::from_parts(*grid, &theta, &gamma))
}

/// Kernel with the closed-form Gaussian Theta and no Gamma.
pub fn build_gaussian_kernel(r_p_sq: f64, packet: &LightPacket, grid: &GridSpec) -> CollisionKernel {
    let h = grid.spacing();
    let theta: Vec<C> = (0..grid.nodes)
        .map(|m| theta_gaussian_approx(r_p_sq, packet.sigma, packet.p, m as f64 * h))
        .collect();
    CollisionKernel::from_parts(*grid, &theta, &vec![0.0; grid.nodes])
}

/// Entrywise product `rho(X, X') I(X, X')`.
pub fn apply_collision(rho: &DensityMatrix, kernel: &CollisionKernel) -> Result<DensityMatrix> {
    if rho.grid != kernel.grid {
        return Err(Error::GridMismatch(format!("{:?} vs {:?}", rho.grid, kernel.grid)));
    }
    let mut values = rho.values.clone();
    values
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(kernel.values.axis_iter(Axis(0)).into_par_iter())
        .for_each(|(mut row, krow)| row.iter_mut().zip(krow).for_each(|(v, k)| *v *= k));
    DensityMatrix::new(rho.grid, values)
}

/// `|r_p|^2 (1 - exp(2 i p Y - Y^2 / (2 sigma^2)))`.
pub fn theta_gaussian_approx(r_p_sq: f64, sigma: f64, p: f64, y: f64) -> C {
    r_p_sq * (1.0 - C::from_polar((-y * y / (2.0 * sigma * sigma)).exp(), 2.0 * p * y))
}

/// Mixture of the transmitted superposition and the two reflected, momentum-boosted bumps.
pub fn mixture_approx(
    rho0: &DensityMatrix,
    r_p: C,
    t_p: C,
    p: f64,
    heavy: &HeavyStateSpec,
) -> Result<DensityMatrix> {
    let grid = rho0.grid;
    let x = grid.positions();
    let boosted = |which: Bump| {
        let mut phi = bump(heavy, &grid, which);
        normalize(&mut phi, &grid);
        phi.iter()
            .zip(&x)
            .map(|(f, &x)| f * C::from_polar(1.0, 2.0 * p * x))
            .collect::<Vec<_>>()
    };
    let left = boosted(Bump::Left);
    let right = boosted(Bump::Right);
    let (wt, wr) = (t_p.norm_sqr(), 0.5 * r_p.norm_sqr());
    let values = Array2::from_shape_fn((grid.nodes, grid.nodes), |(i, j)| {
        wt * rho0.values[[i, j]] + wr * (left[i] * left[j].conj() + right[i] * right[j].conj())
    });
    DensityMatrix::new(grid, values)
}
