//! Observables of the heavy particle and the predicted collision-induced transfers.

use num_complex::Complex64;

use crate::collision::{CollisionQuadrature, LightPacket};
use crate::error::{Error, Result};
use crate::scattering::AmplitudeTable;
use crate::state::{DensityMatrix, GridSpec};

type C = Complex64;

/// Centered first-derivative stencils.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Stencil {
    #[default]
    Second,
    /// Eighth order; needed when `p h` is not small, since the second-order
    /// stencil sees `sin(p h) / h` instead of `p`.
    Eighth,
}

impl Stencil {
    fn coefficients(self) -> &'static [f64] {
        match self {
            Stencil::Second => &[0.5],
            Stencil::Eighth => &[4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0],
        }
    }

    pub fn radius(self) -> usize {
        self.coefficients().len()
    }
}

/// Reflects an out-of-range index at the walls (Neumann ghost nodes).
fn reflect(i: isize, n: usize) -> usize {
    let last = n as isize - 1;
    let r = if i < 0 {
        -i
    } else if i > last {
        2 * last - i
    } else {
        i
    };
    r.clamp(0, last) as usize
}

/// `d/dX'` of the kernel on the diagonal.
fn d_second(rho: &DensityMatrix, j: usize, stencil: Stencil) -> C {
    let n = rho.dim();
    let h = rho.grid.spacing();
    let ji = j as isize;
    stencil
        .coefficients()
        .iter()
        .enumerate()
        .map(|(m, c)| {
            let m = m as isize + 1;
            *c * (rho.values[[j, reflect(ji + m, n)]] - rho.values[[j, reflect(ji - m, n)]])
        })
        .sum::<C>()
        / h
}

/// `d/dX` of the kernel on the diagonal.
fn d_first(rho: &DensityMatrix, j: usize, stencil: Stencil) -> C {
    let n = rho.dim();
    let h = rho.grid.spacing();
    let ji = j as isize;
    stencil
        .coefficients()
        .iter()
        .enumerate()
        .map(|(m, c)| {
            let m = m as isize + 1;
            *c * (rho.values[[reflect(ji + m, n), j]] - rho.values[[reflect(ji - m, n), j]])
        })
        .sum::<C>()
        / h
}

/// `(i/2)(d/dX' - d/dX) rho` on the diagonal.
pub fn probability_current(rho: &DensityMatrix, stencil: Stencil) -> Vec<f64> {
    (0..rho.dim())
        .map(|j| (0.5 * C::i() * (d_second(rho, j, stencil) - d_first(rho, j, stencil))).re)
        .collect()
}

/// Mean momentum (unit mass), the integral of the current.
pub fn momentum(rho: &DensityMatrix, stencil: Stencil) -> f64 {
    probability_current(rho, stencil)
        .iter()
        .zip(rho.grid.weights())
        .map(|(j, w)| w * j)
        .sum()
}

/// `(1/2) int d/dX d/dX' rho` on the diagonal, with unit mass; divide by `M` for the physical energy.
pub fn kinetic_energy(rho: &DensityMatrix, stencil: Stencil) -> f64 {
    let n = rho.dim();
    let h = rho.grid.spacing();
    let coef = stencil.coefficients();
    let w = rho.grid.weights();
    let mut total = 0.0;
    for j in 0..n {
        let ji = j as isize;
        let mut acc = C::new(0.0, 0.0);
        for (a, ca) in coef.iter().enumerate() {
            let a = a as isize + 1;
            let (ip, im) = (reflect(ji + a, n), reflect(ji - a, n));
            for (b, cb) in coef.iter().enumerate() {
                let b = b as isize + 1;
                let (jp, jm) = (reflect(ji + b, n), reflect(ji - b, n));
                let v = &rho.values;
                acc += ca * cb * (v[[ip, jp]] - v[[ip, jm]] - v[[im, jp]] + v[[im, jm]]);
            }
        }
        total += w[j] * acc.re / (h * h);
    }
    0.5 * total
}

/// Momentum and energy transfer predicted from the collision function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferPrediction {
    pub delta_p: f64,
    pub delta_e: f64,
    /// `i Theta'(0)`
    pub itheta_prime: f64,
    /// `Theta''(0)`
    pub theta_second: f64,
}

/// Derivative of Gamma at the grid nodes, by the centered stencil on Gamma
/// evaluated at nodes extended beyond the walls.
pub fn gamma_derivative(q: &CollisionQuadrature, grid: &GridSpec, stencil: Stencil) -> Result<Vec<f64>> {
    let r = stencil.radius() as isize;
    let h = grid.spacing();
    let xs: Vec<f64> = (-r..grid.nodes as isize + r).map(|m| -grid.half_width + m as f64 * h).collect();
    let g = crate::collision::gamma_at(q, &xs)?;
    let coef = stencil.coefficients();
    Ok((0..grid.nodes)
        .map(|j| {
            let c = j + r as usize;
            coef.iter()
                .enumerate()
                .map(|(m, w)| w * (g[c + m + 1] - g[c - m - 1]))
                .sum::<f64>()
                / h
        })
        .collect())
}

pub fn predict_transfer(
    table: &AmplitudeTable,
    packet: &LightPacket,
    rho: &DensityMatrix,
    stencil: Stencil,
) -> Result<TransferPrediction> {
    let q = CollisionQuadrature::new(table, packet)?;
    let itheta_prime = q.theta_slope();
    let theta_second = q.theta_curvature();
    let dgamma = gamma_derivative(&q, &rho.grid, stencil)?;
    let w = rho.grid.weights();
    let current = probability_current(rho, stencil);
    let p = momentum(rho, stencil);
    let mut gamma_rho = 0.0;
    let mut gamma_j = 0.0;
    for k in 0..rho.dim() {
        gamma_rho += w[k] * dgamma[k] * rho.values[[k, k]].re;
        gamma_j += w[k] * dgamma[k] * current[k];
    }
    Ok(TransferPrediction {
        delta_p: itheta_prime + gamma_rho,
        delta_e: itheta_prime * p + 0.5 * theta_second + gamma_j,
        itheta_prime,
        theta_second,
    })
}

/// Largest local maximum and smallest local minimum of `density` inside `window`.
pub fn fringe_extrema(density: &[f64], grid: &GridSpec, window: (f64, f64)) -> Result<(f64, f64)> {
    if density.len() != grid.nodes {
        return Err(Error::GridMismatch("density length differs from grid".into()));
    }
    let (lo, hi) = window;
    if !(lo < hi) || lo < -grid.half_width || hi > grid.half_width {
        return Err(Error::InvalidInput(format!("window ({lo}, {hi}) is not inside the grid")));
    }
    let mut maxima: Option<f64> = None;
    let mut minima: Option<f64> = None;
    for i in 1..grid.nodes - 1 {
        let x = grid.node(i);
        if x < lo || x > hi {
            continue;
        }
        let (l, c, r) = (density[i - 1], density[i], density[i + 1]);
        if c >= l && c >= r {
            maxima = Some(maxima.map_or(c, |m| m.max(c)));
        }
        if c <= l && c <= r {
            minima = Some(minima.map_or(c, |m| m.min(c)));
        }
    }
    match (maxima, minima) {
        (Some(max), Some(min)) => Ok((max, min)),
        _ => Err(Error::Numerical(format!(
            "fewer than two extrema inside the window ({lo}, {hi})"
        ))),
    }
}

/// `(max - min) / (max + min)` over the local extrema of `density` inside `window`.
pub fn fringe_visibility(density: &[f64], grid: &GridSpec, window: (f64, f64)) -> Result<f64> {
    let (max, min) = fringe_extrema(density, grid, window)?;
    Ok(if max + min > 0.0 { (max - min) / (max + min) } else { 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{bump, heavy_wavefunction, normalize, pure_density, Bump, HeavyStateSpec};
    use approx::assert_abs_diff_eq;

    fn bump_state(grid: &GridSpec, p_h: f64, sigma_h: f64) -> DensityMatrix {
        let heavy = HeavyStateSpec::new(0.0 + 1e-12, p_h.max(1e-12), sigma_h, 100.0).unwrap();
        let mut phi = bump(&heavy, grid, Bump::Left);
        normalize(&mut phi, grid);
        pure_density(&phi, grid).unwrap()
    }

    #[test]
    fn symmetric_superposition_has_no_momentum() {
        let grid = GridSpec::new(0.1, 201).unwrap();
        let heavy = HeavyStateSpec::new(0.05, 340.0, 0.01, 100.0).unwrap();
        let rho = pure_density(&heavy_wavefunction(&heavy, &grid).unwrap(), &grid).unwrap();
        assert!(momentum(&rho, Stencil::Second).abs() < 1e-8);
        assert!(momentum(&rho, Stencil::Eighth).abs() < 1e-8);
    }

    #[test]
    fn single_bump_momentum_and_energy() {
        let grid = GridSpec::new(0.1, 801).unwrap();
        let rho = bump_state(&grid, 340.0, 0.01);
        let p = momentum(&rho, Stencil::Eighth);
        assert!((p - 340.0).abs() <= 0.34, "{p}");
        let e = kinetic_energy(&rho, Stencil::Eighth);
        assert!((e - 59050.0).abs() <= 0.005 * 59050.0, "{e}");
        let current = probability_current(&rho, Stencil::Eighth);
        let total: f64 = current.iter().zip(grid.weights()).map(|(j, w)| j * w).sum();
        assert_abs_diff_eq!(total, p, epsilon = 1e-10);
    }

    #[test]
    fn single_bump_at_reference_resolution() {
        let grid = GridSpec::new(0.1, 201).unwrap();
        let rho = bump_state(&grid, 340.0, 0.01);
        assert!((momentum(&rho, Stencil::Eighth) - 340.0).abs() <= 0.34);
        assert!((kinetic_energy(&rho, Stencil::Eighth) - 59050.0).abs() <= 0.005 * 59050.0);
    }

    #[test]
    fn resting_bump_energy_is_pure_dispersion() {
        let grid = GridSpec::new(0.1, 401).unwrap();
        let rho = bump_state(&grid, 0.0, 0.01);
        let e = kinetic_energy(&rho, Stencil::Eighth);
        assert_abs_diff_eq!(e, 1250.0, epsilon = 1250.0 * 1e-4);
    }

    #[test]
    fn real_state_carries_no_current() {
        let grid = GridSpec::new(0.1, 101).unwrap();
        let phi: Vec<C> = grid.positions().iter().map(|x| C::new((-x * x / 1e-3).exp(), 0.0)).collect();
        let rho = pure_density(&phi, &grid).unwrap();
        assert!(probability_current(&rho, Stencil::Second).iter().all(|j| j.abs() < 1e-12));
    }

    #[test]
    fn second_order_stencil_converges_at_order_two() {
        let err = |n: usize| {
            let grid = GridSpec::new(0.1, n).unwrap();
            (momentum(&bump_state(&grid, 340.0, 0.01), Stencil::Second) - 340.0).abs()
        };
        let (a, b, c) = (err(201), err(401), err(801));
        let s1 = (a / b).log2();
        let s2 = (b / c).log2();
        assert!((s1 - 2.0).abs() < 0.1 && (s2 - 2.0).abs() < 0.1, "{s1} {s2}");
    }

    #[test]
    fn flat_density_has_no_visibility() {
        let grid = GridSpec::new(0.1, 201).unwrap();
        let flat = vec![3.0; 201];
        assert_eq!(fringe_visibility(&flat, &grid, (-0.02, 0.02)).unwrap(), 0.0);
        let fringes: Vec<f64> = grid.positions().iter().map(|x| 1.0 + (680.0 * x).cos()).collect();
        let v = fringe_visibility(&fringes, &grid, (-0.02, 0.02)).unwrap();
        assert!(v > 0.99);
        let ramp: Vec<f64> = grid.positions().iter().map(|x| 1.0 + x).collect();
        assert!(fringe_visibility(&ramp, &grid, (-0.02, 0.02)).is_err());
    }
}
