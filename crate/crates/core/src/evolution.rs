//! Free transport of the density kernel (Peaceman–Rachford ADI) and the collision scenario driver.

use ndarray::{Array2, Axis};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::collision::{apply_collision, build_collision_kernel_with, CollisionKernel, GammaMode, LightPacket};
use crate::error::{Error, Result};
use crate::linalg::TridiagonalLu;
use crate::scattering::{build_amplitude_table_with, AmplitudeTable, MomentumGrid, PotentialSpec};
use crate::state::{heavy_wavefunction, pure_density, DensityMatrix, GridSpec, HeavyStateSpec};

type C = Complex64;

/// Final time and step count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeSpec {
    pub final_time: f64,
    pub steps: usize,
}

impl TimeSpec {
    pub fn new(final_time: f64, steps: usize) -> Result<Self> {
        if !(final_time > 0.0) || steps < 1 {
            return Err(Error::InvalidInput(format!("need T > 0 and L >= 1, got ({final_time}, {steps})")));
        }
        Ok(Self { final_time, steps })
    }

    pub fn dt(&self) -> f64 {
        self.final_time / self.steps as f64
    }

    pub fn time(&self, step: usize) -> f64 {
        step as f64 * self.dt()
    }

    /// Step closest to time `t`, clamped to `[0, L]`.
    pub fn nearest_step(&self, t: f64) -> usize {
        ((t / self.dt()).round().max(0.0) as usize).min(self.steps)
    }
}

/// When collisions happen and whether the strength is divided by `sqrt(N)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CollisionSchedule {
    pub count: usize,
    pub interval_steps: usize,
    pub rescale: bool,
}

impl Default for CollisionSchedule {
    fn default() -> Self {
        Self { count: 1, interval_steps: 4, rescale: false }
    }
}

impl CollisionSchedule {
    pub fn new(count: usize, interval_steps: usize, rescale: bool) -> Result<Self> {
        if interval_steps < 1 {
            return Err(Error::InvalidInput("interval_steps must be >= 1".into()));
        }
        Ok(Self { count, interval_steps, rescale })
    }

    /// Steps at which a collision is applied, starting at step 0.
    pub fn steps(&self) -> Vec<usize> {
        (0..self.count).map(|k| k * self.interval_steps).collect()
    }

    /// Factor applied to the potential strength.
    pub fn strength_factor(&self) -> f64 {
        if self.rescale && self.count > 0 {
            1.0 / (self.count as f64).sqrt()
        } else {
            1.0
        }
    }
}

/// Per-step drift limit for the trace and Hermiticity of the transported kernel.
pub const TOL_STEP_DRIFT: f64 = 1e-12;

/// Cached factorizations for one `(dt, M, grid)` triple.
///
/// One step is `rho <- (i + cL_X)^-1 (i + cL_X') (i - cL_X')^-1 (i - cL_X) rho`
/// with `c = dt / (4M)` and `L` the Neumann Laplacian (mirrored ghost nodes).
#[derive(Debug, Clone)]
pub struct AdiPropagator {
    pub grid: GridSpec,
    pub dt: f64,
    pub mass: f64,
    /// Coefficient of the off-diagonal Laplacian entry, `c / h^2`.
    s: f64,
    solve_minus: TridiagonalLu,
    solve_plus: TridiagonalLu,
}

impl AdiPropagator {
    pub fn new(grid: GridSpec, dt: f64, mass: f64) -> Result<Self> {
        if !(dt > 0.0) || !(mass > 0.0) {
            return Err(Error::InvalidInput(format!("need dt > 0 and M > 0, got ({dt}, {mass})")));
        }
        let n = grid.nodes;
        let h = grid.spacing();
        let s = dt / (4.0 * mass * h * h);
        let factor = |sign: f64| {
            // (i + sign * c L)
            let diag = vec![C::new(-2.0 * sign * s, 1.0); n];
            let mut lower = vec![C::new(sign * s, 0.0); n];
            let mut upper = vec![C::new(sign * s, 0.0); n];
            lower[n - 1] *= 2.0;
            upper[0] *= 2.0;
            TridiagonalLu::new(&lower, &diag, &upper)
        };
        let solve_minus = factor(-1.0)?;
        let solve_plus = factor(1.0)?;
        Ok(Self { grid, dt, mass, s, solve_minus, solve_plus })
    }

    /// `y <- (i + sign c L) y` in place.
    fn apply(&self, sign: f64, y: &mut [C], scratch: &mut [C]) {
        let n = y.len();
        let s = sign * self.s;
        scratch.copy_from_slice(y);
        let x = scratch;
        y[0] = C::new(-2.0 * s, 1.0) * x[0] + 2.0 * s * x[1];
        for j in 1..n - 1 {
            y[j] = C::new(-2.0 * s, 1.0) * x[j] + s * (x[j - 1] + x[j + 1]);
        }
        y[n - 1] = C::new(-2.0 * s, 1.0) * x[n - 1] + 2.0 * s * x[n - 2];
    }

    fn rows<F>(&self, m: &mut Array2<C>, f: F)
    where
        F: Fn(&Self, &mut [C], &mut [C]) + Sync,
    {
        let n = self.grid.nodes;
        m.axis_iter_mut(Axis(0)).into_par_iter().for_each_init(
            || vec![C::new(0.0, 0.0); n],
            |scratch, mut row| {
                let row = row.as_slice_mut().expect("rows of a standard-layout matrix are contiguous");
                f(self, row, scratch);
            },
        );
    }

    fn transposed(m: &Array2<C>) -> Array2<C> {
        let mut t = Array2::zeros(m.raw_dim());
        t.assign(&m.t());
        t
    }

    /// One ADI step on the raw kernel values.
    pub fn step_values(&self, values: &Array2<C>) -> Array2<C> {
        // Operators along X act on columns, so they run on the transpose.
        let mut work = Self::transposed(values);
        self.rows(&mut work, |p, row, scratch| p.apply(-1.0, row, scratch));
        let mut work = Self::transposed(&work);
        self.rows(&mut work, |p, row, scratch| {
            p.solve_minus.solve_in_place(row);
            p.apply(1.0, row, scratch);
        });
        let mut work = Self::transposed(&work);
        self.rows(&mut work, |p, row, _| p.solve_plus.solve_in_place(row));
        Self::transposed(&work)
    }

    pub fn step(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        if rho.grid != self.grid {
            return Err(Error::GridMismatch(format!("{:?} vs {:?}", rho.grid, self.grid)));
        }
        DensityMatrix::new(self.grid, self.step_values(&rho.values))
    }
}

/// One Peaceman–Rachford step.
pub fn pr_step(rho: &DensityMatrix, dt: f64, mass: f64) -> Result<DensityMatrix> {
    AdiPropagator::new(rho.grid, dt, mass)?.step(rho)
}

/// State and defects recorded at a requested step.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub step: usize,
    pub time: f64,
    pub rho: DensityMatrix,
    pub trace: f64,
    pub herm_defect: f64,
}

impl Snapshot {
    fn take(step: usize, time: f64, rho: &DensityMatrix) -> Self {
        Self { step, time, rho: rho.clone(), trace: rho.trace(), herm_defect: rho.hermiticity_defect() }
    }
}

/// Largest per-step changes seen during a run.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DriftReport {
    pub max_step_trace_drift: f64,
    pub max_herm_defect: f64,
    pub total_trace_drift: f64,
}

/// Runs `L` free steps and keeps the requested snapshots.
pub fn evolve(rho: &DensityMatrix, time: &TimeSpec, mass: f64, snapshots: &[usize]) -> Result<Vec<Snapshot>> {
    let mut out = Vec::new();
    evolve_with(rho, time, mass, &[], None, |step, t, state| {
        if snapshots.contains(&step) {
            out.push(Snapshot::take(step, t, state));
        }
        Ok(())
    })?;
    Ok(out)
}

/// Core loop: before stepping from `l` to `l+1`, applies `kernel` if `l` is listed in
/// `collisions`; `observe` sees the state at every step `0..=L` after any collision.
pub fn evolve_with<F>(
    rho: &DensityMatrix,
    time: &TimeSpec,
    mass: f64,
    collisions: &[usize],
    kernel: Option<&CollisionKernel>,
    mut observe: F,
) -> Result<(DensityMatrix, DriftReport)>
where
    F: FnMut(usize, f64, &DensityMatrix) -> Result<()>,
{
    let prop = AdiPropagator::new(rho.grid, time.dt(), mass)?;
    let mut state = rho.clone();
    let mut report = DriftReport::default();
    let start = state.trace();
    for step in 0..=time.steps {
        if collisions.contains(&step) {
            if let Some(kernel) = kernel {
                state = apply_collision(&state, kernel)?;
            }
        }
        observe(step, time.time(step), &state)?;
        if step == time.steps {
            break;
        }
        let before = state.trace();
        state = prop.step(&state)?;
        let drift = (state.trace() - before).abs();
        report.max_step_trace_drift = report.max_step_trace_drift.max(drift);
        if drift > TOL_STEP_DRIFT {
            return Err(Error::Invariant(format!(
                "trace drift {drift:.3e} in step {step} exceeds {TOL_STEP_DRIFT:.0e}"
            )));
        }
    }
    report.total_trace_drift = (state.trace() - start).abs();
    report.max_herm_defect = state.hermiticity_defect();
    Ok((state, report))
}

/// Numerical knobs shared by the scenario driver and the command-line runner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureOptions {
    pub momentum_points: usize,
    pub bvp_points: usize,
    pub gamma: GammaMode,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self { momentum_points: 2048, bvp_points: crate::scattering::DEFAULT_BVP_POINTS, gamma: GammaMode::Exact }
    }
}

/// Everything needed for one collision run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub heavy: HeavyStateSpec,
    pub grid: GridSpec,
    pub time: TimeSpec,
    pub potential: PotentialSpec,
    pub packet: LightPacket,
    pub schedule: CollisionSchedule,
    pub quadrature: QuadratureOptions,
    /// Extra snapshot steps on top of the defaults.
    pub snapshots: Vec<usize>,
}

/// Results of [`run_scenario`].
#[derive(Debug, Clone)]
pub struct ScenarioOutput {
    pub initial: DensityMatrix,
    pub table: AmplitudeTable,
    pub kernel: CollisionKernel,
    pub collision_steps: Vec<usize>,
    pub overlap_step: usize,
    pub snapshots: Vec<Snapshot>,
    pub final_state: DensityMatrix,
    pub drift: DriftReport,
}

impl Scenario {
    pub fn overlap_step(&self) -> usize {
        self.time.nearest_step(self.heavy.overlap_time())
    }

    /// `{0, each collision, t*, T}` plus any extra steps, sorted and deduplicated.
    pub fn snapshot_steps(&self) -> Vec<usize> {
        let mut steps = vec![0, self.overlap_step(), self.time.steps];
        steps.extend(self.schedule.steps().into_iter().filter(|s| *s <= self.time.steps));
        steps.extend(self.snapshots.iter().copied().filter(|s| *s <= self.time.steps));
        steps.sort_unstable();
        steps.dedup();
        steps
    }

    pub fn amplitude_table(&self) -> Result<AmplitudeTable> {
        let pot = self.potential.scaled(self.schedule.strength_factor());
        let grid = MomentumGrid::for_packet(self.packet.p, self.packet.sigma, self.quadrature.momentum_points)?;
        build_amplitude_table_with(&pot, &grid, self.quadrature.bvp_points)
    }
}

/// Builds the superposition, then alternates scheduled collisions with ADI steps.
pub fn run_scenario<F>(scenario: &Scenario, mut observe: F) -> Result<ScenarioOutput>
where
    F: FnMut(usize, f64, &DensityMatrix) -> Result<()>,
{
    let initial = pure_density(&heavy_wavefunction(&scenario.heavy, &scenario.grid)?, &scenario.grid)?;
    let table = scenario.amplitude_table()?;
    let kernel = build_collision_kernel_with(&table, &scenario.packet, &scenario.grid, scenario.quadrature.gamma)?;
    let collision_steps: Vec<usize> = scenario.schedule.steps();
    let wanted = scenario.snapshot_steps();
    let mut snapshots = Vec::new();
    let (final_state, drift) = evolve_with(
        &initial,
        &scenario.time,
        scenario.heavy.mass,
        &collision_steps,
        Some(&kernel),
        |step, t, rho| {
            if wanted.contains(&step) {
                snapshots.push(Snapshot::take(step, t, rho));
            }
            observe(step, t, rho)
        },
    )?;
    Ok(ScenarioOutput {
        initial,
        table,
        kernel,
        collision_steps,
        overlap_step: scenario.overlap_step(),
        snapshots,
        final_state,
        drift,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{normalize, Bump};
    use approx::assert_abs_diff_eq;

    fn random_hermitian(grid: GridSpec, seed: u64) -> DensityMatrix {
        let n = grid.nodes;
        let mut state = seed;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let m = Array2::from_shape_fn((n, n), |_| C::new(next(), next()));
        DensityMatrix::new(grid, &m + &m.t().mapv(|z| z.conj())).unwrap()
    }

    #[test]
    fn step_preserves_trace_and_hermiticity() {
        let grid = GridSpec::new(0.1, 201).unwrap();
        let heavy = HeavyStateSpec::new(0.05, 340.0, 0.01, 100.0).unwrap();
        let rho = pure_density(&heavy_wavefunction(&heavy, &grid).unwrap(), &grid).unwrap();
        let prop = AdiPropagator::new(grid, 1.92e-2 / 2401.0, 100.0).unwrap();
        let next = prop.step(&rho).unwrap();
        assert!((next.trace() - rho.trace()).abs() <= 1e-12);
        assert!(next.hermiticity_defect() <= 1e-12);
    }

    #[test]
    fn step_commutes_with_adjoint() {
        let grid = GridSpec::new(0.1, 31).unwrap();
        let rho = random_hermitian(grid, 7);
        let m = Array2::from_shape_fn((31, 31), |(i, j)| rho.values[[i, j]] * C::new(1.0, 0.3 * (i as f64 - j as f64).sin()));
        let prop = AdiPropagator::new(grid, 1e-4, 100.0).unwrap();
        let a = prop.step_values(&m).t().mapv(|z| z.conj());
        let b = prop.step_values(&m.t().mapv(|z| z.conj()));
        let worst = (&a - &b).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(worst < 1e-13, "{worst}");
    }

    #[test]
    fn zero_steps_is_identity() {
        let grid = GridSpec::new(0.1, 21).unwrap();
        let rho = random_hermitian(grid, 3);
        let snaps = evolve(&rho, &TimeSpec::new(1e-3, 5).unwrap(), 100.0, &[0]).unwrap();
        assert_eq!(snaps[0].rho, rho);
    }

    #[test]
    fn free_momentum_is_conserved() {
        use crate::diagnostics::{momentum, Stencil};
        let grid = GridSpec::new(0.1, 201).unwrap();
        let heavy = HeavyStateSpec::new(0.05, 340.0, 0.01, 100.0).unwrap();
        let mut phi = crate::state::bump(&heavy, &grid, Bump::Left);
        normalize(&mut phi, &grid);
        let rho = pure_density(&phi, &grid).unwrap();
        let time = TimeSpec::new(4e-3, 200).unwrap();
        let snaps = evolve(&rho, &time, 100.0, &[0, 200]).unwrap();
        let p0 = momentum(&snaps[0].rho, Stencil::Second);
        let p1 = momentum(&snaps[1].rho, Stencil::Second);
        assert!(((p1 - p0) / p0).abs() < 1e-6, "{p0} -> {p1}");
    }

    #[test]
    fn schedule_steps_start_at_zero() {
        let s = CollisionSchedule::new(3, 4, true).unwrap();
        assert_eq!(s.steps(), vec![0, 4, 8]);
        assert_abs_diff_eq!(s.strength_factor(), 1.0 / 3f64.sqrt(), epsilon = 1e-15);
        assert!(CollisionSchedule::new(1, 0, false).is_err());
        assert_eq!(CollisionSchedule::new(0, 4, true).unwrap().strength_factor(), 1.0);
    }

    #[test]
    fn time_spec_rounds_overlap_time() {
        let t = TimeSpec::new(1.92e-2, 2401).unwrap();
        let heavy = HeavyStateSpec::new(0.05, 340.0, 0.01, 100.0).unwrap();
        let step = t.nearest_step(heavy.overlap_time());
        assert!((t.time(step) - heavy.overlap_time()).abs() <= 0.5 * t.dt());
    }
}
