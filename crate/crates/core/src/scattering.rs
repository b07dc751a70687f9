//! Reflection and transmission amplitudes and the one-body scattering operator.

use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::solve_tridiagonal;

type C = Complex64;

/// Unitarity tolerance for the closed-form amplitudes.
pub const TOL_UNITARITY_ANALYTIC: f64 = 1e-10;
/// Unitarity tolerance for the boundary-value solver at its default resolution.
pub const TOL_UNITARITY_NUMERIC: f64 = 1e-6;
/// Default number of nodes of the boundary-value grid.
pub const DEFAULT_BVP_POINTS: usize = 4096;

/// Relative level below which a potential is treated as zero when locating its support.
const SUPPORT_CUTOFF: f64 = 1e-8;

/// The interaction between the light particle and the scattering centre.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    /// Point interaction `alpha * delta(x)`.
    Delta { alpha: f64 },
    /// Square barrier of height `alpha / (2a)` on `[-a, a]`.
    Barrier { alpha: f64, a: f64 },
    /// Gaussian of unit-area shape scaled by `alpha`, width `sigma_v`.
    Gaussian { alpha: f64, sigma_v: f64 },
    /// Piecewise-linear potential through `(x, V)` samples, zero outside `[-a, a]`.
    Tabulated { samples: Vec<(f64, f64)>, a: f64 },
}

impl PotentialSpec {
    /// Builds a tabulated potential. When `a` is `None` the support is cut where
    /// the potential drops below `1e-8` of its peak.
    pub fn tabulated(mut samples: Vec<(f64, f64)>, a: Option<f64>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidInput("tabulated potential needs at least two samples".into()));
        }
        samples.sort_by(|p, q| p.0.total_cmp(&q.0));
        let v_max = samples.iter().map(|s| s.1).fold(0.0_f64, f64::max);
        let a = match a {
            Some(a) => a,
            None => {
                let cut = SUPPORT_CUTOFF * v_max;
                let lo = samples.iter().position(|s| s.1 > cut);
                let hi = samples.iter().rposition(|s| s.1 > cut);
                match (lo, hi) {
                    (Some(lo), Some(hi)) => {
                        let lo = lo.saturating_sub(1);
                        let hi = (hi + 1).min(samples.len() - 1);
                        let a = samples[lo].0.abs().max(samples[hi].0.abs());
                        samples.retain(|s| s.0.abs() <= a);
                        a
                    }
                    _ => samples.iter().map(|s| s.0.abs()).fold(0.0, f64::max),
                }
            }
        };
        let pot = PotentialSpec::Tabulated { samples, a };
        pot.validate()?;
        Ok(pot)
    }

    /// Checks the variant invariants. A zero strength is accepted and means no interaction.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        match self {
            PotentialSpec::Delta { alpha } => {
                if !(*alpha >= 0.0 && alpha.is_finite()) {
                    return bad(format!("delta strength must be >= 0, got {alpha}"));
                }
            }
            PotentialSpec::Barrier { alpha, a } => {
                if !(*alpha >= 0.0 && alpha.is_finite()) || !(*a > 0.0) {
                    return bad(format!("barrier needs alpha >= 0 and a > 0, got ({alpha}, {a})"));
                }
            }
            PotentialSpec::Gaussian { alpha, sigma_v } => {
                if !(*alpha >= 0.0 && alpha.is_finite()) || !(*sigma_v > 0.0) {
                    return bad(format!(
                        "gaussian potential needs alpha >= 0 and sigma_v > 0, got ({alpha}, {sigma_v})"
                    ));
                }
            }
            PotentialSpec::Tabulated { samples, a } => {
                if !(*a > 0.0) {
                    return bad(format!("tabulated support half-width must be > 0, got {a}"));
                }
                let tol = 1e-12 * a;
                for w in samples.windows(2) {
                    if !(w[1].0 > w[0].0) {
                        return bad("tabulated positions must be strictly increasing".into());
                    }
                }
                for &(x, v) in samples {
                    if x.abs() > a + tol {
                        return bad(format!("sample at x = {x} lies outside [-{a}, {a}]"));
                    }
                    if !(v >= 0.0) || !v.is_finite() {
                        return bad(format!("tabulated potential must be nonnegative, got V({x}) = {v}"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Integrated strength, equal to `alpha` for the parametric variants.
    pub fn strength(&self) -> f64 {
        match self {
            PotentialSpec::Delta { alpha }
            | PotentialSpec::Barrier { alpha, .. }
            | PotentialSpec::Gaussian { alpha, .. } => *alpha,
            PotentialSpec::Tabulated { samples, .. } => samples
                .windows(2)
                .map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0))
                .sum(),
        }
    }

    /// The same shape with its strength multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        match self {
            PotentialSpec::Delta { alpha } => PotentialSpec::Delta { alpha: alpha * factor },
            PotentialSpec::Barrier { alpha, a } => PotentialSpec::Barrier { alpha: alpha * factor, a: *a },
            PotentialSpec::Gaussian { alpha, sigma_v } => PotentialSpec::Gaussian {
                alpha: alpha * factor,
                sigma_v: *sigma_v,
            },
            PotentialSpec::Tabulated { samples, a } => PotentialSpec::Tabulated {
                samples: samples.iter().map(|&(x, v)| (x, v * factor)).collect(),
                a: *a,
            },
        }
    }

    /// Half-width outside which the potential is treated as zero; `None` for the delta.
    pub fn support_half_width(&self) -> Option<f64> {
        match self {
            PotentialSpec::Delta { .. } => None,
            PotentialSpec::Barrier { a, .. } | PotentialSpec::Tabulated { a, .. } => Some(*a),
            PotentialSpec::Gaussian { sigma_v, .. } => Some(sigma_v * (2.0 * (1.0 / SUPPORT_CUTOFF).ln()).sqrt()),
        }
    }

    /// Potential value at `x`; zero for the delta (it has no pointwise profile).
    pub fn value(&self, x: f64) -> f64 {
        match self {
            PotentialSpec::Delta { .. } => 0.0,
            PotentialSpec::Barrier { alpha, a } => {
                if x.abs() <= *a {
                    alpha / (2.0 * a)
                } else {
                    0.0
                }
            }
            PotentialSpec::Gaussian { alpha, sigma_v } => {
                let height = alpha / ((2.0 * std::f64::consts::PI).sqrt() * sigma_v);
                height * (-x * x / (2.0 * sigma_v * sigma_v)).exp()
            }
            PotentialSpec::Tabulated { samples, .. } => interpolate(samples, x),
        }
    }

    /// Whether the amplitudes come from a closed form.
    pub fn is_analytic(&self) -> bool {
        matches!(self, PotentialSpec::Delta { .. } | PotentialSpec::Barrier { .. })
    }
}

fn interpolate(samples: &[(f64, f64)], x: f64) -> f64 {
    let n = samples.len();
    if n == 0 || x < samples[0].0 || x > samples[n - 1].0 {
        return 0.0;
    }
    let i = samples.partition_point(|s| s.0 <= x);
    if i == 0 {
        return samples[0].1;
    }
    if i == n {
        return samples[n - 1].1;
    }
    let (x0, v0) = samples[i - 1];
    let (x1, v1) = samples[i];
    v0 + (v1 - v0) * (x - x0) / (x1 - x0)
}

/// A uniform grid of nonzero momenta.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumGrid {
    k: Vec<f64>,
}

impl MomentumGrid {
    /// Validates an explicit list of momenta: nonempty, strictly increasing,
    /// uniformly spaced and free of `k = 0`.
    pub fn new(k: Vec<f64>) -> Result<Self> {
        if k.is_empty() {
            return Err(Error::InvalidInput("momentum grid is empty".into()));
        }
        if k.iter().any(|v| !v.is_finite() || *v == 0.0) {
            return Err(Error::InvalidInput("momentum grid must be finite and exclude k = 0".into()));
        }
        if k.len() > 1 {
            let dk = (k[k.len() - 1] - k[0]) / (k.len() - 1) as f64;
            if !(dk > 0.0) {
                return Err(Error::InvalidInput("momentum grid must be strictly increasing".into()));
            }
            for (i, w) in k.windows(2).enumerate() {
                let step = w[1] - w[0];
                if !(step > 0.0) || (step - dk).abs() > 1e-8 * dk {
                    return Err(Error::InvalidInput(format!(
                        "momentum grid is not uniform at index {i}"
                    )));
                }
            }
        }
        Ok(Self { k })
    }

    /// `n` (even) points from `-k_max` to `k_max`; the centre falls between two nodes.
    pub fn symmetric(n: usize, k_max: f64) -> Result<Self> {
        if n < 2 || !n.is_multiple_of(2) {
            return Err(Error::InvalidInput(format!("symmetric grid needs an even count >= 2, got {n}")));
        }
        if !(k_max > 0.0) {
            return Err(Error::InvalidInput(format!("k_max must be positive, got {k_max}")));
        }
        let dk = 2.0 * k_max / (n - 1) as f64;
        let half = (n - 1) as f64 / 2.0;
        Self::new((0..n).map(|j| (j as f64 - half) * dk).collect())
    }

    /// `n` points evenly spread over `[k_min, k_max]`, which must not contain zero.
    pub fn span(n: usize, k_min: f64, k_max: f64) -> Result<Self> {
        if n < 2 || !(k_max > k_min) {
            return Err(Error::InvalidInput("span needs n >= 2 and k_max > k_min".into()));
        }
        let dk = (k_max - k_min) / (n - 1) as f64;
        Self::new((0..n).map(|j| k_min + j as f64 * dk).collect())
    }

    /// Symmetric grid covering `±p ± 5/sigma` for a packet of mean momentum `p`.
    pub fn for_packet(p: f64, sigma: f64, n: usize) -> Result<Self> {
        Self::symmetric(n, p.abs() + 5.0 / sigma)
    }

    pub fn values(&self) -> &[f64] {
        &self.k
    }

    pub fn len(&self) -> usize {
        self.k.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        if self.k.len() < 2 {
            return 0.0;
        }
        (self.k[self.k.len() - 1] - self.k[0]) / (self.k.len() - 1) as f64
    }

    pub fn min(&self) -> f64 {
        self.k[0]
    }

    pub fn max(&self) -> f64 {
        self.k[self.k.len() - 1]
    }

    /// True when `-k` is a node for every node `k`.
    pub fn is_sign_symmetric(&self) -> bool {
        let n = self.k.len();
        let tol = 1e-9 * self.spacing().max(f64::MIN_POSITIVE);
        (0..n).all(|i| (self.k[i] + self.k[n - 1 - i]).abs() <= tol)
    }

    /// Index of `-k_i`, valid on sign-symmetric grids.
    pub fn mirror(&self, i: usize) -> usize {
        self.k.len() - 1 - i
    }

    /// Trapezoid weights on the uniform grid.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let n = self.k.len();
        let dk = self.spacing();
        (0..n)
            .map(|i| if i == 0 || i == n - 1 { 0.5 * dk } else { dk })
            .collect()
    }
}

/// `(r, t)` for the point interaction; `alpha = 0` is the free case.
pub fn delta_amplitudes(alpha: f64, k: f64) -> (C, C) {
    if alpha == 0.0 {
        return (C::new(0.0, 0.0), C::new(1.0, 0.0));
    }
    let k = k.abs();
    let den = C::new(alpha, -k);
    (-alpha / den, C::new(0.0, -k) / den)
}

/// `(r, t)` for the square barrier of height `alpha / 2a` on `[-a, a]`.
///
/// Written with `cos(2 q a)` and `sin(2 q a) / q`, both entire in `q^2 = k^2 - 2 V0`,
/// so the expression stays real-analytic through `E = V0` and into tunnelling.
pub fn barrier_amplitudes(alpha: f64, a: f64, k: f64) -> Result<(C, C)> {
    if k == 0.0 {
        return Err(Error::InvalidInput("barrier amplitudes are undefined at k = 0".into()));
    }
    if !(alpha >= 0.0) || !(a > 0.0) {
        return Err(Error::InvalidInput(format!("barrier needs alpha >= 0 and a > 0, got ({alpha}, {a})")));
    }
    let k = k.abs();
    let v0 = alpha / (2.0 * a);
    let q2 = k * k - 2.0 * v0;
    let (c, s) = if q2 > 0.0 {
        let q = q2.sqrt();
        ((2.0 * q * a).cos(), (2.0 * q * a).sin() / q)
    } else if q2 < 0.0 {
        let q = (-q2).sqrt();
        ((2.0 * q * a).cosh(), (2.0 * q * a).sinh() / q)
    } else {
        (1.0, 2.0 * a)
    };
    let den = C::new(c, -(k * k - v0) * s / k);
    if !den.is_finite() || den.norm() < f64::MIN_POSITIVE {
        return Err(Error::Numerical(format!(
            "barrier denominator out of range for k = {k}, V0 = {v0}, a = {a}"
        )));
    }
    let phase = C::from_polar(1.0, -2.0 * k * a);
    let t = phase / den;
    let r = C::new(0.0, -v0 * s / k) * phase / den;
    Ok((r, t))
}

/// Amplitudes from the stationary Schrödinger problem on `[-a, a]`.
///
/// Second-order finite differences; the exterior is represented by exact discrete
/// plane waves `exp(± i kappa x)` with `2 (1 - cos(kappa h)) = (k h)^2`, which closes
/// the system with one transparent row at each end. The two end nodes carry half
/// the potential, the mean of the interior value and the zero outside.
pub fn numeric_amplitudes(pot: &PotentialSpec, k: f64, n_points: usize) -> Result<(C, C)> {
    if k == 0.0 {
        return Err(Error::InvalidInput("numeric amplitudes are undefined at k = 0".into()));
    }
    if n_points < 64 {
        return Err(Error::InvalidInput(format!("n_points must be >= 64, got {n_points}")));
    }
    let a = pot.support_half_width().ok_or_else(|| {
        Error::InvalidInput("the delta potential has no profile to discretize".into())
    })?;
    // A wave arriving from the right sees the mirrored potential.
    let mirror = if k < 0.0 { -1.0 } else { 1.0 };
    let k = k.abs();
    let n = n_points;
    let h = 2.0 * a / (n - 1) as f64;
    let cos_kh = 1.0 - 0.5 * (k * h).powi(2);
    if cos_kh <= -1.0 {
        return Err(Error::InvalidInput(format!(
            "n_points = {n} too small to resolve k = {k} on [-{a}, {a}]"
        )));
    }
    let kappa_h = cos_kh.acos();
    let outgoing = C::from_polar(1.0, kappa_h);
    let one = C::new(1.0, 0.0);

    let mut diag = Vec::with_capacity(n);
    for j in 0..n {
        let x = -a + j as f64 * h;
        let mut v = pot.value(mirror * x);
        if j == 0 || j == n - 1 {
            v *= 0.5;
        }
        diag.push(C::new(-2.0 + h * h * (k * k - 2.0 * v), 0.0));
    }
    diag[0] += outgoing;
    diag[n - 1] += outgoing;
    let lower = vec![one; n];
    let upper = vec![one; n];
    let mut rhs = vec![C::new(0.0, 0.0); n];
    rhs[0] = C::new(0.0, 2.0 * kappa_h.sin());
    let psi = solve_tridiagonal(&lower, &diag, &upper, &rhs)?;

    let kappa = kappa_h / h;
    let phase = C::from_polar(1.0, -2.0 * kappa * a);
    let r = (psi[0] - one) * phase;
    let t = psi[n - 1] * phase;
    let defect = (r.norm_sqr() + t.norm_sqr() - 1.0).abs();
    if defect > 10.0 * TOL_UNITARITY_NUMERIC {
        return Err(Error::Unitarity { k, defect, tol: 10.0 * TOL_UNITARITY_NUMERIC });
    }
    Ok((r, t))
}

/// The sampled S-matrix of a potential.
#[derive(Debug, Clone)]
pub struct AmplitudeTable {
    pub grid: MomentumGrid,
    pub r: Vec<C>,
    pub t: Vec<C>,
    pub tolerance: f64,
}

impl AmplitudeTable {
    /// Wraps precomputed amplitudes after checking the unitarity relations.
    pub fn new(grid: MomentumGrid, r: Vec<C>, t: Vec<C>, tolerance: f64) -> Result<Self> {
        if r.len() != grid.len() || t.len() != grid.len() {
            return Err(Error::GridMismatch("amplitude count differs from grid size".into()));
        }
        let table = Self { grid, r, t, tolerance };
        table.check()?;
        Ok(table)
    }

    /// Free table, `r = 0`, `t = 1`.
    pub fn identity(grid: MomentumGrid) -> Self {
        let n = grid.len();
        Self {
            grid,
            r: vec![C::new(0.0, 0.0); n],
            t: vec![C::new(1.0, 0.0); n],
            tolerance: TOL_UNITARITY_ANALYTIC,
        }
    }

    pub fn check(&self) -> Result<()> {
        let k = self.grid.values();
        let tol = self.tolerance;
        for i in 0..k.len() {
            let defect = (self.r[i].norm_sqr() + self.t[i].norm_sqr() - 1.0).abs();
            if !(defect <= tol) {
                return Err(Error::Unitarity { k: k[i], defect, tol });
            }
        }
        if self.grid.is_sign_symmetric() {
            for i in 0..k.len() {
                let m = self.grid.mirror(i);
                let modulus = (self.r[i].norm() - self.r[m].norm()).abs();
                let cross = (self.r[i] * self.t[m].conj() + self.t[i] * self.r[m].conj()).norm();
                let defect = modulus.max(cross);
                if !(defect <= tol) {
                    return Err(Error::Unitarity { k: k[i], defect, tol });
                }
            }
        }
        Ok(())
    }

    /// Largest `| |r|^2 + |t|^2 - 1 |` over the table.
    pub fn max_unitarity_defect(&self) -> f64 {
        self.r
            .iter()
            .zip(&self.t)
            .map(|(r, t)| (r.norm_sqr() + t.norm_sqr() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Sup of `|d|r_k|^2/dk|` estimated by finite differences over the table.
    pub fn reflectance_slope_sup(&self) -> f64 {
        let k = self.grid.values();
        self.r
            .windows(2)
            .zip(k.windows(2))
            .map(|(r, k)| ((r[1].norm_sqr() - r[0].norm_sqr()) / (k[1] - k[0])).abs())
            .fold(0.0, f64::max)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["k", "re_r", "im_r", "re_t", "im_t", "abs_r_sq"])?;
        for (i, k) in self.grid.values().iter().enumerate() {
            let (r, t) = (self.r[i], self.t[i]);
            w.write_record(
                [*k, r.re, r.im, t.re, t.im, r.norm_sqr()]
                    .iter()
                    .map(|v| crate::fmt_num(*v)),
            )?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Evaluates the amplitudes of `pot` on every grid point (in parallel, order preserved).
pub fn build_amplitude_table(pot: &PotentialSpec, grid: &MomentumGrid) -> Result<AmplitudeTable> {
    build_amplitude_table_with(pot, grid, DEFAULT_BVP_POINTS)
}

/// As [`build_amplitude_table`] with an explicit boundary-value resolution.
pub fn build_amplitude_table_with(
    pot: &PotentialSpec,
    grid: &MomentumGrid,
    bvp_points: usize,
) -> Result<AmplitudeTable> {
    pot.validate()?;
    if grid.is_empty() {
        return Err(Error::InvalidInput("empty momentum grid".into()));
    }
    let results: Vec<Result<(C, C)>> = grid
        .values()
        .par_iter()
        .map(|&k| match pot {
            PotentialSpec::Delta { alpha } => Ok(delta_amplitudes(*alpha, k)),
            PotentialSpec::Barrier { alpha, a } => barrier_amplitudes(*alpha, *a, k),
            _ if pot.strength() == 0.0 => Ok((C::new(0.0, 0.0), C::new(1.0, 0.0))),
            _ => numeric_amplitudes(pot, k, bvp_points),
        })
        .collect();
    let mut r = Vec::with_capacity(grid.len());
    let mut t = Vec::with_capacity(grid.len());
    for (res, &k) in results.into_iter().zip(grid.values()) {
        let (ri, ti) = res.map_err(|e| Error::AtMomentum { k, source: Box::new(e) })?;
        r.push(ri);
        t.push(ti);
    }
    let tolerance = if pot.is_analytic() {
        TOL_UNITARITY_ANALYTIC
    } else {
        TOL_UNITARITY_NUMERIC
    };
    AmplitudeTable::new(grid.clone(), r, t, tolerance)
}

/// Applies the scattering operator of a centre sitting at `shift_x`:
/// `(S chi)(k) = t_k chi(k) + exp(-2 i k X) r_{-k} chi(-k)`.
pub fn apply_scattering(table: &AmplitudeTable, chi_hat: &[C], shift_x: f64) -> Result<Vec<C>> {
    let grid = &table.grid;
    if chi_hat.len() != grid.len() {
        return Err(Error::GridMismatch(format!(
            "wavefunction has {} samples, table has {}",
            chi_hat.len(),
            grid.len()
        )));
    }
    if !grid.is_sign_symmetric() {
        return Err(Error::GridMismatch("scattering needs a sign-symmetric momentum grid".into()));
    }
    let k = grid.values();
    Ok((0..k.len())
        .map(|i| {
            let m = grid.mirror(i);
            table.t[i] * chi_hat[i] + C::from_polar(1.0, -2.0 * k[i] * shift_x) * table.r[m] * chi_hat[m]
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn close(a: C, b: C, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn delta_at_zero_momentum_reflects_totally() {
        let (r, t) = delta_amplitudes(1000.0, 0.0);
        assert!(close(r, C::new(-1.0, 0.0), 1e-15));
        assert!(close(t, C::new(0.0, 0.0), 1e-15));
    }

    #[test]
    fn delta_at_k_equal_alpha_splits_evenly() {
        let (r, t) = delta_amplitudes(1000.0, 1000.0);
        assert!(close(r, C::new(-0.5, -0.5), 1e-14));
        assert!(close(t, C::new(0.5, -0.5), 1e-14));
        assert_abs_diff_eq!(r.norm_sqr(), 0.5, epsilon = 1e-14);
    }

    #[test]
    fn delta_is_transparent_at_high_energy() {
        let (_, t) = delta_amplitudes(1000.0, 1e6);
        assert_abs_diff_eq!(t.norm_sqr(), 1e12 / (1e6 + 1e12), epsilon = 1e-15);
        assert!(t.norm_sqr() > 0.999998);
    }

    #[test]
    fn delta_transmission_is_one_plus_reflection() {
        for &k in &[-700.0, -3.0, 0.5, 250.0, 4000.0] {
            let (r, t) = delta_amplitudes(1000.0, k);
            assert!(close(t, 1.0 + r, 1e-15));
            assert_abs_diff_eq!(r.norm_sqr() + t.norm_sqr(), 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn weak_barrier_is_free() {
        let (r, t) = barrier_amplitudes(1e-14, 1e-2, 37.0).unwrap();
        assert!(r.norm() < 1e-12);
        assert!(close(t, C::new(1.0, 0.0), 1e-12));
    }

    #[test]
    fn barrier_tunnelling_limit() {
        let (r, t) = barrier_amplitudes(500.0, 1e-2, 1e-3).unwrap();
        assert!(r.norm_sqr() >= 1.0 - 1e-4);
        assert_abs_diff_eq!(r.norm_sqr() + t.norm_sqr(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn barrier_is_continuous_across_the_top() {
        let (alpha, a): (f64, f64) = (500.0, 1e-2);
        let k_top = (alpha / a).sqrt();
        let below = barrier_amplitudes(alpha, a, k_top * (1.0 - 1e-9)).unwrap();
        let at = barrier_amplitudes(alpha, a, k_top).unwrap();
        let above = barrier_amplitudes(alpha, a, k_top * (1.0 + 1e-9)).unwrap();
        assert!(close(below.0, at.0, 1e-7) && close(above.0, at.0, 1e-7));
        assert!(close(below.1, at.1, 1e-7) && close(above.1, at.1, 1e-7));
    }

    #[test]
    fn barrier_rejects_zero_momentum() {
        assert!(barrier_amplitudes(500.0, 1e-2, 0.0).is_err());
    }

    #[test]
    fn free_tabulated_potential_is_transparent() {
        let pot = PotentialSpec::tabulated(vec![(-0.01, 0.0), (0.01, 0.0)], Some(0.01)).unwrap();
        for &k in &[-300.0, 50.0, 250.0] {
            let (r, t) = numeric_amplitudes(&pot, k, 512).unwrap();
            assert!(r.norm() < 1e-10, "r = {r}");
            assert!(close(t, C::new(1.0, 0.0), 1e-10), "t = {t}");
        }
    }

    #[test]
    fn tabulated_barrier_matches_closed_form() {
        let (alpha, a) = (500.0, 1e-2);
        let v0 = alpha / (2.0 * a);
        let pot = PotentialSpec::tabulated(vec![(-a, v0), (a, v0)], Some(a)).unwrap();
        let (r, t) = numeric_amplitudes(&pot, 250.0, 4096).unwrap();
        let (r0, t0) = barrier_amplitudes(alpha, a, 250.0).unwrap();
        assert!((r - r0).norm() <= 1e-6 * r0.norm(), "{r} vs {r0}");
        assert!((t - t0).norm() <= 1e-6 * t0.norm(), "{t} vs {t0}");
    }

    #[test]
    fn gaussian_bvp_is_unitary() {
        let pot = PotentialSpec::Gaussian { alpha: 500.0, sigma_v: 1e-2 };
        let (r, t) = numeric_amplitudes(&pot, 250.0, 4096).unwrap();
        assert_abs_diff_eq!(r.norm_sqr() + t.norm_sqr(), 1.0, epsilon = 1e-8);
        let (rm, tm) = numeric_amplitudes(&pot, -250.0, 4096).unwrap();
        assert!(close(r, rm, 1e-12) && close(t, tm, 1e-12));
    }

    #[test]
    fn asymmetric_potential_mirror_relations() {
        let pot = PotentialSpec::tabulated(
            vec![(-0.01, 0.0), (-0.004, 3e4), (0.002, 1e4), (0.01, 0.0)],
            Some(0.01),
        )
        .unwrap();
        let (rp, tp) = numeric_amplitudes(&pot, 120.0, 2048).unwrap();
        let (rm, tm) = numeric_amplitudes(&pot, -120.0, 2048).unwrap();
        assert_abs_diff_eq!(rp.norm(), rm.norm(), epsilon = 1e-12);
        assert!(close(tp, tm, 1e-12));
        assert!((rp * tm.conj() + tp * rm.conj()).norm() < 1e-12);
    }

    #[test]
    fn default_support_is_trimmed() {
        let samples: Vec<(f64, f64)> = (-200..=200)
            .map(|i| {
                let x = i as f64 * 1e-4;
                (x, (-x * x / (2.0 * 1e-6)).exp())
            })
            .collect();
        let pot = PotentialSpec::tabulated(samples, None).unwrap();
        let a = pot.support_half_width().unwrap();
        assert!(a > 5e-3 && a < 7e-3, "a = {a}");
    }

    #[test]
    fn grids_exclude_zero_and_reject_nonuniform() {
        let g = MomentumGrid::symmetric(8, 10.0).unwrap();
        assert!(g.values().iter().all(|k| *k != 0.0));
        assert!(g.is_sign_symmetric());
        assert_abs_diff_eq!(g.max(), 10.0, epsilon = 1e-12);
        assert!(MomentumGrid::new(vec![1.0, 2.0, 4.0]).is_err());
        assert!(MomentumGrid::new(vec![-1.0, 0.0, 1.0]).is_err());
        assert!(MomentumGrid::symmetric(7, 1.0).is_err());
    }

    #[test]
    fn delta_table_is_unitary() {
        let grid = MomentumGrid::for_packet(250.0, 0.02, 512).unwrap();
        let table = build_amplitude_table(&PotentialSpec::Delta { alpha: 1000.0 }, &grid).unwrap();
        assert!(table.max_unitarity_defect() <= 1e-12);
    }

    #[test]
    fn barrier_table_matches_pointwise() {
        let grid = MomentumGrid::span(512, 50.0, 500.0).unwrap();
        let table = build_amplitude_table(&PotentialSpec::Barrier { alpha: 500.0, a: 1e-2 }, &grid).unwrap();
        for (i, &k) in grid.values().iter().enumerate() {
            let (r, t) = barrier_amplitudes(500.0, 1e-2, k).unwrap();
            assert_eq!(table.r[i], r);
            assert_eq!(table.t[i], t);
        }
    }

    #[test]
    fn broken_table_is_rejected() {
        let grid = MomentumGrid::symmetric(4, 1.0).unwrap();
        let r = vec![C::new(0.5, 0.0); 4];
        let t = vec![C::new(0.5, 0.0); 4];
        assert!(matches!(
            AmplitudeTable::new(grid, r, t, 1e-10),
            Err(Error::Unitarity { .. })
        ));
    }

    #[test]
    fn identity_scattering_leaves_input() {
        let grid = MomentumGrid::symmetric(16, 5.0).unwrap();
        let table = AmplitudeTable::identity(grid);
        let chi: Vec<C> = (0..16).map(|i| C::new(i as f64, -(i as f64).sqrt())).collect();
        assert_eq!(apply_scattering(&table, &chi, 0.3).unwrap(), chi);
    }

    #[test]
    fn scattering_needs_symmetric_grid() {
        let grid = MomentumGrid::span(8, 1.0, 2.0).unwrap();
        let table = AmplitudeTable::identity(grid);
        assert!(apply_scattering(&table, &[C::new(1.0, 0.0); 8], 0.0).is_err());
    }

    #[test]
    fn shift_equals_phase_on_reflection() {
        let grid = MomentumGrid::for_packet(250.0, 0.02, 256).unwrap();
        let table = build_amplitude_table(&PotentialSpec::Delta { alpha: 1000.0 }, &grid).unwrap();
        let x = 0.037;
        let k = grid.values();
        let shifted = AmplitudeTable {
            r: table.r.iter().zip(k).map(|(r, k)| r * C::from_polar(1.0, 2.0 * k * x)).collect(),
            ..table.clone()
        };
        let chi: Vec<C> = k.iter().map(|k| C::from_polar((-(k - 250.0).powi(2) / 1e4).exp(), *k * 0.01)).collect();
        let a = apply_scattering(&table, &chi, x).unwrap();
        let b = apply_scattering(&shifted, &chi, 0.0).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!(close(*u, *v, 1e-12));
        }
    }
}
