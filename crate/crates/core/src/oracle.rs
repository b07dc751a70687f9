//! Independent check of the limit model through the exact point-interaction propagator.
//!
//! The propagator with a delta of strength `alpha` is the free one minus
//! `alpha int_0^inf exp(-alpha u) U_0(t, u + |x| + |x'|) du`. Folding the
//! `x'` integral gives `U_0(t) P_- (psi + R psi)` evaluated at `u + |x|`, and the
//! exponential average over `u` becomes the Fourier multiplier `alpha / (alpha - i k)`.
//! All transforms run on a grid whose frequencies are shifted by half a cell,
//! so `k = 0` is never sampled and the momentum samples form a sign-symmetric
//! [`MomentumGrid`].

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::collision::LightPacket;
use crate::error::{Error, Result};
use crate::fmt_num;
use crate::scattering::{apply_scattering, build_amplitude_table, MomentumGrid, PotentialSpec};

type C = Complex64;

/// Norm tolerance for every oracle propagation.
pub const TOL_ORACLE_NORM: f64 = 1e-4;
/// Norm loss that signals a window too small for the packet trajectory.
const NORM_LOSS_FAILURE: f64 = 1e-3;

/// Free Gaussian `(2 pi s^2)^{-1/4} exp(-(x - x0)^2 / 4 s^2 + i p x)` evolved for time `t`
/// with mass `mass`.
pub fn free_gaussian(x0: f64, sigma: f64, p: f64, mass: f64, t: f64, x: f64) -> C {
    let tau = t / mass;
    let a = C::new(1.0, tau / (2.0 * sigma * sigma));
    let shift = x - x0 - p * tau;
    let exponent = -shift * shift / (4.0 * sigma * sigma * a) + C::new(0.0, p * x - 0.5 * p * p * tau);
    (2.0 * PI * sigma * sigma).powf(-0.25) * a.sqrt().inv() * exponent.exp()
}

/// Periodic position grid `x_j = -L + j dx` paired with half-shifted frequencies.
pub struct SpectralGrid {
    n: usize,
    dx: f64,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SpectralGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralGrid").field("n", &self.n).field("dx", &self.dx).finish()
    }
}

impl SpectralGrid {
    pub fn new(half_width: f64, n: usize) -> Result<Self> {
        if n < 16 || !n.is_multiple_of(2) || !(half_width > 0.0) {
            return Err(Error::InvalidInput(format!("spectral grid needs even n >= 16 and L > 0, got ({n}, {half_width})")));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            n,
            dx: 2.0 * half_width / n as f64,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn half_width(&self) -> f64 {
        0.5 * self.n as f64 * self.dx
    }

    pub fn position(&self, j: usize) -> f64 {
        -self.half_width() + j as f64 * self.dx
    }

    pub fn positions(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.position(j)).collect()
    }

    pub fn dk(&self) -> f64 {
        2.0 * PI / (self.n as f64 * self.dx)
    }

    pub fn frequency(&self, m: usize) -> f64 {
        (m as f64 - 0.5 * self.n as f64 + 0.5) * self.dk()
    }

    pub fn frequencies(&self) -> Vec<f64> {
        (0..self.n).map(|m| self.frequency(m)).collect()
    }

    pub fn momentum_grid(&self) -> Result<MomentumGrid> {
        MomentumGrid::new(self.frequencies())
    }

    /// Index of `-x_j`.
    pub fn mirror(&self, j: usize) -> usize {
        (self.n - j) % self.n
    }

    /// Unitary twist `(-1)^j exp(-i pi j / n)` that moves the frequencies by half a cell.
    fn twist(&self, j: usize, sign: f64) -> C {
        let parity = if j.is_multiple_of(2) { 1.0 } else { -1.0 };
        C::from_polar(parity, sign * PI * j as f64 / self.n as f64)
    }

    /// `psi(k_m) = (2 pi)^{-1/2} int exp(-i k_m x) psi(x) dx` by the trapezoid rule.
    pub fn to_momentum(&self, psi: &[C]) -> Vec<C> {
        let mut buf: Vec<C> = psi.iter().enumerate().map(|(j, v)| v * self.twist(j, -1.0)).collect();
        self.forward.process(&mut buf);
        let l = self.half_width();
        let scale = self.dx / (2.0 * PI).sqrt();
        buf.iter()
            .enumerate()
            .map(|(m, v)| v * C::from_polar(scale, self.frequency(m) * l))
            .collect()
    }

    /// Inverse of [`Self::to_momentum`].
    pub fn to_position(&self, psi_hat: &[C]) -> Vec<C> {
        let l = self.half_width();
        let mut buf: Vec<C> = psi_hat
            .iter()
            .enumerate()
            .map(|(m, v)| v * C::from_polar(1.0, -self.frequency(m) * l))
            .collect();
        self.inverse.process(&mut buf);
        let scale = self.dk() / (2.0 * PI).sqrt();
        buf.iter().enumerate().map(|(j, v)| v * self.twist(j, 1.0) * scale).collect()
    }

    /// Applies the Fourier multiplier `symbol(k)`.
    pub fn multiply<F: Fn(f64) -> C>(&self, psi: &[C], symbol: F) -> Vec<C> {
        let mut hat = self.to_momentum(psi);
        for (m, v) in hat.iter_mut().enumerate() {
            *v *= symbol(self.frequency(m));
        }
        self.to_position(&hat)
    }

    /// Free evolution `exp(-i t k^2 / 2)`.
    pub fn free(&self, psi: &[C], t: f64) -> Vec<C> {
        self.multiply(psi, |k| C::from_polar(1.0, -0.5 * k * k * t))
    }

    pub fn norm(&self, psi: &[C]) -> f64 {
        (psi.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.dx).sqrt()
    }

    /// The point-interaction correction term, to be subtracted from `U_0(t) psi`.
    pub fn delta_correction(&self, alpha: f64, t: f64, psi: &[C]) -> Vec<C> {
        if alpha == 0.0 {
            return vec![C::new(0.0, 0.0); self.n];
        }
        let folded: Vec<C> = (0..self.n)
            .map(|j| {
                let x = self.position(j);
                let weight = if x < 0.0 {
                    1.0
                } else if x == 0.0 {
                    0.5
                } else {
                    0.0
                };
                weight * (psi[j] + psi[self.mirror(j)])
            })
            .collect();
        let averaged = self.multiply(&folded, |k| {
            C::from_polar(1.0, -0.5 * k * k * t) * alpha / C::new(alpha, -k)
        });
        (0..self.n)
            .map(|j| {
                if self.position(j) >= 0.0 {
                    averaged[j]
                } else {
                    averaged[self.mirror(j)]
                }
            })
            .collect()
    }
}

/// `U_alpha(t) chi` for samples on a spectral grid.
pub fn delta_propagator_apply(alpha: f64, t: f64, chi: &[C], grid: &SpectralGrid) -> Result<Vec<C>> {
    if t == 0.0 {
        return Err(Error::InvalidInput("propagation time must be nonzero".into()));
    }
    if chi.len() != grid.len() {
        return Err(Error::GridMismatch("sample count differs from spectral grid".into()));
    }
    let free = grid.free(chi, t);
    let corr = grid.delta_correction(alpha, t, chi);
    let out: Vec<C> = free.iter().zip(&corr).map(|(f, c)| f - c).collect();
    check_norm(grid.norm(chi), grid.norm(&out))?;
    Ok(out)
}

fn check_norm(before: f64, after: f64) -> Result<()> {
    let loss = (after - before).abs() / before.max(f64::MIN_POSITIVE);
    if loss > NORM_LOSS_FAILURE {
        return Err(Error::Numerical(format!(
            "oracle propagation changed the norm by {loss:.3e}; the window is too small"
        )));
    }
    Ok(())
}

/// Settings of the finite-time scattering study.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleConfig {
    pub alpha: f64,
    pub taus: Vec<f64>,
    pub packet: LightPacket,
    pub x_window: f64,
    pub n_x: usize,
}

impl OracleConfig {
    /// Smallest half-width that holds the packet over the longest `tau`.
    pub fn minimum_window(taus: &[f64], packet: &LightPacket) -> f64 {
        let tau = taus.iter().copied().fold(0.0, f64::max);
        1.5 * tau * (packet.p.abs() + 5.0 / packet.sigma) + 10.0 * packet.sigma + packet.x_l.abs()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) {
            return Err(Error::InvalidInput(format!("oracle alpha must be >= 0, got {}", self.alpha)));
        }
        if self.taus.is_empty() || self.taus.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::InvalidInput("oracle taus must be positive".into()));
        }
        if self.taus.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput("oracle taus must be increasing".into()));
        }
        let min = Self::minimum_window(&self.taus, &self.packet);
        if self.x_window < min {
            return Err(Error::InvalidInput(format!(
                "oracle x_window = {} is below the required minimum {min:.6}",
                self.x_window
            )));
        }
        if self.n_x < 16 || !self.n_x.is_power_of_two() {
            return Err(Error::InvalidInput(format!("oracle n_x must be a power of two >= 16, got {}", self.n_x)));
        }
        Ok(())
    }

    pub fn spectral_grid(&self) -> Result<SpectralGrid> {
        SpectralGrid::new(self.x_window, self.n_x)
    }

    fn packet_at(&self, grid: &SpectralGrid, t: f64) -> Vec<C> {
        let p = &self.packet;
        grid.positions()
            .iter()
            .map(|&x| free_gaussian(p.x_l, p.sigma, p.p, 1.0, t, x))
            .collect()
    }
}

/// `U_0(-tau') U_alpha(tau + tau') U_0(-tau) chi`, with the free legs in closed form.
pub fn finite_time_s(config: &OracleConfig, tau: f64, tau_prime: f64) -> Result<Vec<C>> {
    let grid = config.spectral_grid()?;
    finite_time_s_on(config, &grid, tau, tau_prime)
}

fn finite_time_s_on(config: &OracleConfig, grid: &SpectralGrid, tau: f64, tau_prime: f64) -> Result<Vec<C>> {
    let incoming = config.packet_at(grid, -tau);
    let t = tau + tau_prime;
    let corr = grid.delta_correction(config.alpha, t, &incoming);
    let outgoing = config.packet_at(grid, tau_prime);
    let evolved: Vec<C> = outgoing.iter().zip(&corr).map(|(a, b)| a - b).collect();
    check_norm(grid.norm(&incoming), grid.norm(&evolved))?;
    let chi = config.packet_at(grid, 0.0);
    let back = grid.free(&corr, -tau_prime);
    Ok(chi.iter().zip(&back).map(|(a, b)| a - b).collect())
}

/// One point of the convergence study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OraclePoint {
    pub tau: f64,
    pub l2_error: f64,
    pub norm_defect: f64,
}

/// Errors against the closed-form scattering operator and their log-log slope.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub points: Vec<OraclePoint>,
    pub slope: f64,
}

impl ConvergenceReport {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["tau", "l2_error", "fitted_slope"])?;
        let last = self.points.len().saturating_sub(1);
        for (i, p) in self.points.iter().enumerate() {
            let slope = if i == last { fmt_num(self.slope) } else { String::new() };
            w.write_record([fmt_num(p.tau), fmt_num(p.l2_error), slope])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Compares `S(tau, tau) chi` with the closed-form `S chi` for every tau.
pub fn convergence_study(config: &OracleConfig) -> Result<ConvergenceReport> {
    config.validate()?;
    let taus = &config.taus;
    if taus.len() < 3 || taus[taus.len() - 1] / taus[0] < 10f64.powf(1.5) {
        return Err(Error::InvalidInput("need at least 3 taus spanning 1.5 decades".into()));
    }
    let grid = config.spectral_grid()?;
    let kgrid = grid.momentum_grid()?;
    let table = build_amplitude_table(&PotentialSpec::Delta { alpha: config.alpha }, &kgrid)?;
    let chi_hat = grid.to_momentum(&config.packet_at(&grid, 0.0));
    let target = apply_scattering(&table, &chi_hat, 0.0)?;
    let dk = grid.dk();

    let points: Vec<Result<OraclePoint>> = taus
        .par_iter()
        .map(|&tau| {
            let out = finite_time_s_on(config, &grid, tau, tau)?;
            let hat = grid.to_momentum(&out);
            let err = (hat.iter().zip(&target).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>() * dk).sqrt();
            Ok(OraclePoint { tau, l2_error: err, norm_defect: (grid.norm(&out) - 1.0).abs() })
        })
        .collect();
    let points: Vec<OraclePoint> = points.into_iter().collect::<Result<_>>()?;

    for w in points.windows(2) {
        if w[1].l2_error > 1.1 * w[0].l2_error {
            return Err(Error::NonMonotone(format!(
                "error rises from {:.3e} at tau = {:.3e} to {:.3e} at tau = {:.3e}",
                w[0].l2_error, w[0].tau, w[1].l2_error, w[1].tau
            )));
        }
    }
    let xs: Vec<f64> = points.iter().map(|p| p.tau).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.l2_error.max(f64::MIN_POSITIVE)).collect();
    let slope = log_log_slope(&xs, &ys);
    Ok(ConvergenceReport { points, slope })
}

/// Default tau list: seven points log-spaced over `[1e-5, 1e-3]`.
pub fn default_taus() -> Vec<f64> {
    (0..7).map(|i| 1e-5 * 10f64.powf(i as f64 / 3.0)).collect()
}
