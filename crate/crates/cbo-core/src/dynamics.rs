//! Euler integration of the rescaled interacting particle system.
//!
//! One step freezes the consensus point at the pre-step ensemble and then
//! updates every particle componentwise (the diffusion matrix
//! `delta*I + D(offset)` is diagonal, so no matrix algebra appears):
//!
//! ```text
//! x'[i,k] = x[i,k] - lambda * (x[i,k] - kappa*m[k]) * dt
//!         + sigma * (delta + |x[i,k] - kappa*m[k]|) * sqrt(dt) * xi[i,step,k]
//! ```
//!
//! The same update drives mean-field proxy copies, with an externally
//! supplied consensus trajectory in place of the ensemble's own; copies
//! read the identical noise lanes as the interacting particles they shadow
//! (synchronous coupling), so the two systems differ only through the
//! consensus input.
//!
//! Non-finite states abort instead of clamping: a clamp would silently
//! mask exactly the parameter-regime violations the experiments exist to
//! expose.

use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;

use crate::consensus;
use crate::error::Error;
use crate::math;
use crate::objectives::ObjectiveSpec;
use crate::randomness::{InitialDistribution, NoisePlan};

/// Parameters of the rescaled dynamics.
///
/// `kappa = 1` recovers the classical (unrescaled) system; `kappa < 1`
/// shrinks the consensus anchor toward the origin, which is what makes the
/// long-time moments controllable. `steps = 0` is allowed and means "just
/// sample the initial ensemble".
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CBOParams {
    /// Drift rate toward the rescaled consensus.
    pub lambda: f64,
    /// Noise scale; zero disables diffusion (and skips noise generation).
    pub sigma: f64,
    /// Weight sharpness of the consensus point.
    pub alpha: f64,
    /// Consensus rescale in (0, 1].
    pub kappa: f64,
    /// Diffusion floor added to the componentwise offset magnitude.
    pub delta: f64,
    /// Time step.
    pub dt: f64,
    /// Number of Euler steps; the horizon is `steps * dt`.
    pub steps: u64,
    /// Ensemble size.
    pub n_particles: usize,
    /// State dimension.
    pub dim: usize,
}

impl CBOParams {
    /// Validates ranges and the explicit-Euler stability guard.
    ///
    /// The guard admits the boundary `lambda * dt = 1` (a full-relaxation
    /// step that lands particles exactly on the consensus); anything above
    /// overshoots and is rejected.
    pub fn validate(&self) -> Result<(), Error> {
        let checks: [(bool, &str); 8] = [
            (
                self.lambda.is_finite() && self.lambda > 0.0,
                "lambda must be a positive finite real",
            ),
            (
                self.sigma.is_finite() && self.sigma >= 0.0,
                "sigma must be a nonnegative finite real",
            ),
            (
                self.alpha.is_finite() && self.alpha > 0.0,
                "alpha must be a positive finite real",
            ),
            (
                self.kappa.is_finite() && self.kappa > 0.0 && self.kappa <= 1.0,
                "kappa must lie in (0, 1]",
            ),
            (
                self.delta.is_finite() && self.delta >= 0.0,
                "delta must be a nonnegative finite real",
            ),
            (
                self.dt.is_finite() && self.dt > 0.0,
                "dt must be a positive finite real",
            ),
            (
                self.lambda * self.dt <= 1.0,
                "dt * lambda must not exceed 1 (explicit-Euler stability guard)",
            ),
            (
                self.n_particles >= 1 && self.dim >= 1,
                "need at least one particle and one dimension",
            ),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::Config(msg.to_string()));
            }
        }
        Ok(())
    }

    /// Horizon `steps * dt`.
    pub fn total_time(&self) -> f64 {
        self.steps as f64 * self.dt
    }
}

/// A particle ensemble at a definite step: row-major N x d positions plus
/// the integer step counter and the time `step * dt` it implies.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    positions: Vec<f64>,
    n: usize,
    dim: usize,
    step: u64,
    time: f64,
}

impl Ensemble {
    /// Wraps a row-major N x d position matrix as a step-0 ensemble.
    pub fn new(positions: Vec<f64>, n: usize, dim: usize) -> Result<Self, Error> {
        if n == 0 || dim == 0 || positions.len() != n * dim {
            return Err(Error::Input(format!(
                "positions length {} does not match {n} x {dim}",
                positions.len()
            )));
        }
        if !positions.iter().all(|v| v.is_finite()) {
            return Err(Error::Input("positions must be finite".to_string()));
        }
        Ok(Ensemble {
            positions,
            n,
            dim,
            step: 0,
            time: 0.0,
        })
    }

    /// Samples a fresh step-0 ensemble from an initial distribution.
    pub fn sample(init: &InitialDistribution, plan: &NoisePlan, n: usize) -> Result<Self, Error> {
        let rows = plan.sample_initial(init, n)?;
        Ensemble::new(rows, n, plan.d())
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn time(&self) -> f64 {
        self.time
    }
}

/// The diagonal of the anisotropic diffusion matrix `D(v)`: componentwise
/// absolute values.
pub fn anisotropic_diag(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| x.abs()).collect()
}

/// One Euler step of the interacting system: consensus from the ensemble's
/// own weighted mean, then the componentwise update.
pub fn euler_step_interacting(
    ens: &Ensemble,
    objective: &ObjectiveSpec,
    params: &CBOParams,
    plan: &NoisePlan,
) -> Result<Ensemble, Error> {
    check_shapes(ens, Some(objective), params, plan)?;
    let mut f_values = alloc::vec![0.0; ens.n];
    objective.eval_rows_into(&ens.positions, &mut f_values);
    let mut weights = alloc::vec![0.0; ens.n];
    consensus::weights_into(&f_values, params.alpha, &mut weights)
        .map_err(|_| abort(ens.step, "non-finite objective value"))?;
    let mut m = alloc::vec![0.0; ens.dim];
    consensus::weighted_mean_into(&ens.positions, ens.dim, &weights, &mut m);
    advance(ens, &m, params, plan)
}

/// One Euler step of mean-field proxy copies: identical update, but the
/// consensus input is supplied by the caller and the objective is never
/// evaluated. Feeding the ensemble's own consensus back in reproduces
/// `euler_step_interacting` bit for bit.
pub fn euler_step_copies(
    copies: &Ensemble,
    m_proxy: &[f64],
    params: &CBOParams,
    plan: &NoisePlan,
) -> Result<Ensemble, Error> {
    check_shapes(copies, None, params, plan)?;
    if m_proxy.len() != copies.dim {
        return Err(Error::Input(format!(
            "consensus proxy has length {}, ensemble dimension is {}",
            m_proxy.len(),
            copies.dim
        )));
    }
    if !m_proxy.iter().all(|v| v.is_finite()) || !copies.positions.iter().all(|v| v.is_finite()) {
        return Err(abort(copies.step, "non-finite state"));
    }
    advance(copies, m_proxy, params, plan)
}

fn check_shapes(
    ens: &Ensemble,
    objective: Option<&ObjectiveSpec>,
    params: &CBOParams,
    plan: &NoisePlan,
) -> Result<(), Error> {
    params.validate()?;
    let obj_dim = objective.map_or(params.dim, |o| o.dimension());
    if ens.n != params.n_particles
        || ens.dim != params.dim
        || obj_dim != params.dim
        || plan.d() != params.dim
    {
        return Err(Error::Input(format!(
            "shape mismatch: ensemble {}x{}, params {}x{}, objective dim {}, plan dim {}",
            ens.n,
            ens.dim,
            params.n_particles,
            params.dim,
            obj_dim,
            plan.d()
        )));
    }
    Ok(())
}

fn abort(step: u64, what: &str) -> Error {
    Error::SimulationAbort {
        step: step.saturating_sub(1),
        message: format!("{what} at step {step}"),
    }
}

fn advance(
    ens: &Ensemble,
    m: &[f64],
    params: &CBOParams,
    plan: &NoisePlan,
) -> Result<Ensemble, Error> {
    let mut positions = ens.positions.clone();
    let mut noise = alloc::vec![0.0; ens.dim];
    step_in_place(&mut positions, m, params, plan, ens.step, &mut noise);
    let step = ens.step + 1;
    Ok(Ensemble {
        positions,
        n: ens.n,
        dim: ens.dim,
        step,
        time: step as f64 * params.dt,
    })
}

/// Shared update kernel. `m` is the frozen consensus input; the noise for
/// particle i comes from the plan's `(i, step)` block, so interacting
/// particles and their proxy copies read identical lanes.
fn step_in_place(
    positions: &mut [f64],
    m: &[f64],
    params: &CBOParams,
    plan: &NoisePlan,
    step: u64,
    noise: &mut [f64],
) {
    let d = m.len();
    let n = positions.len() / d;
    let sqrt_dt = math::sqrt(params.dt);
    let mut anchor = alloc::vec![0.0; d];
    for k in 0..d {
        anchor[k] = params.kappa * m[k];
    }
    for i in 0..n {
        if params.sigma != 0.0 {
            plan.gaussian_increment_into(i as u64, step, noise);
        }
        let row = &mut positions[i * d..(i + 1) * d];
        for k in 0..d {
            let x = row[k];
            let offset = x - anchor[k];
            let mut next = x - params.lambda * offset * params.dt;
            if params.sigma != 0.0 {
                next += params.sigma * (params.delta + offset.abs()) * sqrt_dt * noise[k];
            }
            row[k] = next;
        }
    }
}

/// Which steps to snapshot and which norm-moment orders to record there.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSchedule {
    record_steps: Vec<u64>,
    moment_orders: Vec<u32>,
}

impl ObservationSchedule {
    /// Snapshots at the given steps (sorted and deduplicated; entries past
    /// the horizon are ignored by `simulate`).
    pub fn at_steps(record_steps: &[u64], moment_orders: &[u32]) -> Self {
        let mut steps = record_steps.to_vec();
        steps.sort_unstable();
        steps.dedup();
        ObservationSchedule {
            record_steps: steps,
            moment_orders: moment_orders.to_vec(),
        }
    }

    /// Snapshots every `stride` steps, always including 0 and `total_steps`.
    pub fn every(stride: u64, total_steps: u64, moment_orders: &[u32]) -> Self {
        let stride = stride.max(1);
        let mut steps: Vec<u64> = (0..=total_steps).step_by(stride as usize).collect();
        if steps.last() != Some(&total_steps) {
            steps.push(total_steps);
        }
        ObservationSchedule::at_steps(&steps, moment_orders)
    }

    pub fn record_steps(&self) -> &[u64] {
        &self.record_steps
    }

    pub fn moment_orders(&self) -> &[u32] {
        &self.moment_orders
    }
}

/// Observables of one recorded step.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: u64,
    pub time: f64,
    /// Consensus point of the ensemble at this step.
    pub consensus: Vec<f64>,
    /// Plain ensemble mean.
    pub mean: Vec<f64>,
    /// Empirical `E |X|^p` for each requested order, in schedule order.
    pub moments: Vec<f64>,
    pub f_min: f64,
    pub f_max: f64,
}

/// Trajectory record plus the final state.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOutput {
    pub snapshots: Vec<Snapshot>,
    pub final_ensemble: Ensemble,
}

/// Samples an initial ensemble and runs `params.steps` Euler steps,
/// snapshotting observables at the scheduled steps.
///
/// `init_plan` supplies the initial rows, `noise_plan` the Brownian lanes
/// (callers pick the purpose tags; reference systems run the same routine
/// under a different tag). Non-finite states abort with the last healthy
/// step.
pub fn simulate(
    objective: &ObjectiveSpec,
    params: &CBOParams,
    init: &InitialDistribution,
    init_plan: &NoisePlan,
    noise_plan: &NoisePlan,
    schedule: &ObservationSchedule,
) -> Result<SimulationOutput, Error> {
    params.validate()?;
    if objective.dimension() != params.dim
        || init_plan.d() != params.dim
        || noise_plan.d() != params.dim
    {
        return Err(Error::Input(
            "objective, plans, and params disagree on dimension".to_string(),
        ));
    }
    let n = params.n_particles;
    let d = params.dim;
    let mut positions = init_plan.sample_initial(init, n)?;
    let mut f_values = alloc::vec![0.0; n];
    let mut weights = alloc::vec![0.0; n];
    let mut m = alloc::vec![0.0; d];
    let mut noise = alloc::vec![0.0; d];
    let mut snapshots = Vec::with_capacity(schedule.record_steps.len());
    let mut next_record = 0;

    for step in 0..=params.steps {
        objective.eval_rows_into(&positions, &mut f_values);
        let (f_min, _) = consensus::weights_into(&f_values, params.alpha, &mut weights)
            .map_err(|_| abort(step, "non-finite objective value"))?;
        consensus::weighted_mean_into(&positions, d, &weights, &mut m);

        while next_record < schedule.record_steps.len() && schedule.record_steps[next_record] < step
        {
            next_record += 1;
        }
        if schedule.record_steps.get(next_record) == Some(&step) {
            snapshots.push(observe(
                step,
                step as f64 * params.dt,
                &positions,
                d,
                &m,
                &f_values,
                f_min,
                &schedule.moment_orders,
            ));
            next_record += 1;
        }

        if step < params.steps {
            step_in_place(&mut positions, &m, params, noise_plan, step, &mut noise);
        }
    }

    let final_ensemble = Ensemble {
        positions,
        n,
        dim: d,
        step: params.steps,
        time: params.total_time(),
    };
    Ok(SimulationOutput {
        snapshots,
        final_ensemble,
    })
}

#[allow(clippy::too_many_arguments)]
fn observe(
    step: u64,
    time: f64,
    positions: &[f64],
    d: usize,
    m: &[f64],
    f_values: &[f64],
    f_min: f64,
    moment_orders: &[u32],
) -> Snapshot {
    let n = f_values.len();
    let mut mean = alloc::vec![0.0; d];
    for i in 0..n {
        for k in 0..d {
            mean[k] += positions[i * d + k];
        }
    }
    for v in mean.iter_mut() {
        *v /= n as f64;
    }
    let mut moments = alloc::vec![0.0; moment_orders.len()];
    if !moment_orders.is_empty() {
        for i in 0..n {
            let row = &positions[i * d..(i + 1) * d];
            let r = math::sqrt(row.iter().map(|v| v * v).sum());
            for (j, &p) in moment_orders.iter().enumerate() {
                moments[j] += math::powi(r, p as i32);
            }
        }
        for v in moments.iter_mut() {
            *v /= n as f64;
        }
    }
    let f_max = f_values.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    Snapshot {
        step,
        time,
        consensus: m.to_vec(),
        mean,
        moments,
        f_min,
        f_max,
    }
}

/// Drift and diffusion magnitudes of the dynamics at an ensemble
/// concentrated entirely at `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiracFixedPointReport {
    /// `lambda * |z - kappa z|`.
    pub drift_magnitude: f64,
    /// `sigma * (delta + |z_k - kappa z_k|)` per coordinate.
    pub diffusion_magnitudes: Vec<f64>,
    /// True when drift and every diffusion entry are exactly zero.
    pub is_fixed_point: bool,
}

/// Evaluates whether a point mass at `z` is stationary: with `kappa = 1`
/// and `delta = 0` both drift and diffusion vanish for every `z` (all
/// point masses are fixed points); with `kappa < 1` the drift vanishes
/// only at `z = 0`; with `delta > 0` the diffusion never vanishes.
pub fn dirac_fixed_point_check(z: &[f64], params: &CBOParams) -> DiracFixedPointReport {
    let mut norm_sq = 0.0;
    let mut diffusion_magnitudes = Vec::with_capacity(z.len());
    for &zk in z {
        let offset = zk - params.kappa * zk;
        norm_sq += offset * offset;
        diffusion_magnitudes.push(params.sigma * (params.delta + offset.abs()));
    }
    let drift_magnitude = params.lambda * math::sqrt(norm_sq);
    let is_fixed_point = drift_magnitude == 0.0 && diffusion_magnitudes.iter().all(|&v| v == 0.0);
    DiracFixedPointReport {
        drift_magnitude,
        diffusion_magnitudes,
        is_fixed_point,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::randomness::PurposeTag;
    use proptest::prelude::*;

    fn params(n: usize, d: usize) -> CBOParams {
        CBOParams {
            lambda: 1.0,
            sigma: 0.0,
            alpha: 1.0,
            kappa: 1.0,
            delta: 0.0,
            dt: 0.1,
            steps: 10,
            n_particles: n,
            dim: d,
        }
    }

    fn plan(seed: u64, tag: PurposeTag, d: usize) -> NoisePlan {
        NoisePlan::new(seed, tag, d).unwrap()
    }

    #[test]
    fn params_validation_rejects_bad_ranges() {
        let good = params(2, 1);
        assert!(good.validate().is_ok());
        for bad in [
            CBOParams {
                lambda: 0.0,
                ..good
            },
            CBOParams {
                sigma: -1.0,
                ..good
            },
            CBOParams { alpha: 0.0, ..good },
            CBOParams { kappa: 0.0, ..good },
            CBOParams { kappa: 1.5, ..good },
            CBOParams {
                delta: -0.1,
                ..good
            },
            CBOParams { dt: 0.0, ..good },
            CBOParams {
                lambda: 11.0,
                dt: 0.1,
                ..good
            },
            CBOParams {
                n_particles: 0,
                ..good
            },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
        // Boundary: a full-relaxation step is admitted.
        assert!(CBOParams {
            lambda: 10.0,
            dt: 0.1,
            ..good
        }
        .validate()
        .is_ok());
    }

    #[test]
    fn anisotropic_diag_componentwise() {
        assert_eq!(anisotropic_diag(&[0.0, 0.0]), alloc::vec![0.0, 0.0]);
        assert_eq!(anisotropic_diag(&[-2.0, 3.0]), alloc::vec![2.0, 3.0]);
        let v = [1.5, -0.25, 0.0, -7.0];
        for (a, b) in anisotropic_diag(&v).iter().zip(&v) {
            assert_eq!(a * a, b * b);
        }
    }

    #[test]
    fn point_mass_is_fixed_under_classical_dynamics() {
        // All particles at a binary-friendly z, kappa=1, sigma=0: the
        // weighted mean reproduces z exactly (equal weights 1/4 and short
        // mantissas), so the drift vanishes bit-exactly.
        let z = [5.0, -3.0];
        let mut rows = Vec::new();
        for _ in 0..4 {
            rows.extend_from_slice(&z);
        }
        let ens = Ensemble::new(rows.clone(), 4, 2).unwrap();
        let obj = ObjectiveSpec::sphere(2).unwrap();
        let p = CBOParams {
            n_particles: 4,
            dim: 2,
            lambda: 3.7,
            ..params(4, 2)
        };
        let next =
            euler_step_interacting(&ens, &obj, &p, &plan(0, PurposeTag::Brownian, 2)).unwrap();
        assert_eq!(next.positions(), &rows[..]);
        assert_eq!(next.step(), 1);
    }

    #[test]
    fn single_particle_drift_algebra() {
        let obj = ObjectiveSpec::sphere(1).unwrap();
        let pl = plan(0, PurposeTag::Brownian, 1);
        // kappa=1: own consensus equals the particle, so it is stationary.
        let ens = Ensemble::new(alloc::vec![2.0], 1, 1).unwrap();
        let p = params(1, 1);
        let next = euler_step_interacting(&ens, &obj, &p, &pl).unwrap();
        assert_eq!(next.positions(), &[2.0]);
        // kappa=0.5: offset x - 0.5x = 1 contracts by lambda*dt.
        let p_half = CBOParams { kappa: 0.5, ..p };
        let next = euler_step_interacting(&ens, &obj, &p_half, &pl).unwrap();
        assert!((next.positions()[0] - 1.9).abs() <= 1e-15);
    }

    #[test]
    fn two_particle_hand_case() {
        // Positions (0, 1) under the sphere give f = (0, 1); alpha=1 puts
        // the consensus at 1/(1+e).
        let obj = ObjectiveSpec::sphere(1).unwrap();
        let ens = Ensemble::new(alloc::vec![0.0, 1.0], 2, 1).unwrap();
        let p = CBOParams {
            kappa: 0.5,
            ..params(2, 1)
        };
        let next =
            euler_step_interacting(&ens, &obj, &p, &plan(0, PurposeTag::Brownian, 1)).unwrap();
        let m = 1.0 / (1.0 + core::f64::consts::E);
        for (i, &x) in [0.0_f64, 1.0].iter().enumerate() {
            let expect = x - 0.1 * (x - 0.5 * m);
            assert!(
                (next.positions()[i] - expect).abs() <= 1e-15,
                "particle {i}"
            );
        }
    }

    #[test]
    fn copies_with_own_consensus_match_interacting() {
        let obj = ObjectiveSpec::sphere(2).unwrap();
        let pl_init = plan(11, PurposeTag::Initial, 2);
        let pl_noise = plan(11, PurposeTag::Brownian, 2);
        let init =
            InitialDistribution::gaussian(alloc::vec![2.0, 2.0], alloc::vec![1.0, 1.0]).unwrap();
        let ens = Ensemble::sample(&init, &pl_init, 16).unwrap();
        let p = CBOParams {
            sigma: 2.0,
            kappa: 0.5,
            ..params(16, 2)
        };
        let mut f = alloc::vec![0.0; 16];
        obj.eval_rows_into(ens.positions(), &mut f);
        let m = consensus::consensus_point(ens.positions(), 2, &f, p.alpha).unwrap();
        let a = euler_step_interacting(&ens, &obj, &p, &pl_noise).unwrap();
        let b = euler_step_copies(&ens, &m, &p, &pl_noise).unwrap();
        assert_eq!(a.positions(), b.positions());
    }

    #[test]
    fn full_relaxation_lands_on_proxy() {
        // lambda*dt = 1, sigma=0, kappa=1 with binary-friendly values:
        // x - (x - m) evaluates to m exactly.
        let ens = Ensemble::new(alloc::vec![2.5, -4.0, 0.75], 3, 1).unwrap();
        let p = CBOParams {
            lambda: 1.0,
            dt: 1.0,
            n_particles: 3,
            ..params(3, 1)
        };
        let next = euler_step_copies(&ens, &[0.5], &p, &plan(0, PurposeTag::Brownian, 1)).unwrap();
        assert_eq!(next.positions(), &[0.5, 0.5, 0.5]);
    }

    #[test]
    fn one_copy_hand_case() {
        let ens = Ensemble::new(alloc::vec![1.0], 1, 1).unwrap();
        let p = CBOParams {
            kappa: 0.5,
            ..params(1, 1)
        };
        let next = euler_step_copies(&ens, &[0.3], &p, &plan(0, PurposeTag::Brownian, 1)).unwrap();
        let expect = 1.0 - 1.0 * (1.0 - 0.5 * 0.3) * 0.1;
        assert!((next.positions()[0] - expect).abs() <= 1e-15);
        assert!((next.positions()[0] - 0.915).abs() <= 1e-15);
    }

    #[test]
    fn copies_reject_bad_proxy() {
        let ens = Ensemble::new(alloc::vec![1.0, 2.0], 2, 1).unwrap();
        let p = params(2, 1);
        let pl = plan(0, PurposeTag::Brownian, 1);
        assert!(euler_step_copies(&ens, &[0.0, 0.0], &p, &pl).is_err());
        assert!(matches!(
            euler_step_copies(&ens, &[f64::NAN], &p, &pl),
            Err(Error::SimulationAbort { .. })
        ));
    }

    #[test]
    fn zero_steps_returns_initial_sample() {
        let obj = ObjectiveSpec::sphere(1).unwrap();
        let init = InitialDistribution::gaussian(alloc::vec![2.0], alloc::vec![1.0]).unwrap();
        let pl_init = plan(3, PurposeTag::Initial, 1);
        let pl_noise = plan(3, PurposeTag::Brownian, 1);
        let p = CBOParams {
            steps: 0,
            n_particles: 8,
            ..params(8, 1)
        };
        let sched = ObservationSchedule::every(1, 0, &[2]);
        let out = simulate(&obj, &p, &init, &pl_init, &pl_noise, &sched).unwrap();
        assert_eq!(out.snapshots.len(), 1);
        assert_eq!(out.snapshots[0].step, 0);
        let direct = pl_init.sample_initial(&init, 8).unwrap();
        assert_eq!(out.final_ensemble.positions(), &direct[..]);
    }

    #[test]
    fn lone_particle_is_stationary_forever() {
        let obj = ObjectiveSpec::ackley(1, 3.0).unwrap();
        let init = InitialDistribution::gaussian(alloc::vec![2.0], alloc::vec![1.0]).unwrap();
        let p = CBOParams {
            steps: 25,
            n_particles: 1,
            ..params(1, 1)
        };
        let sched = ObservationSchedule::every(5, 25, &[]);
        let out = simulate(
            &obj,
            &p,
            &init,
            &plan(5, PurposeTag::Initial, 1),
            &plan(5, PurposeTag::Brownian, 1),
            &sched,
        )
        .unwrap();
        let x0 = out.snapshots[0].mean[0];
        for snap in &out.snapshots {
            assert_eq!(snap.mean[0], x0);
            assert_eq!(snap.consensus[0], x0);
        }
    }

    #[test]
    fn simulate_matches_repeated_single_steps() {
        let obj = ObjectiveSpec::sphere(2).unwrap();
        let init =
            InitialDistribution::gaussian(alloc::vec![2.0, 2.0], alloc::vec![1.0, 1.0]).unwrap();
        let pl_init = plan(9, PurposeTag::Initial, 2);
        let pl_noise = plan(9, PurposeTag::Brownian, 2);
        let p = CBOParams {
            sigma: 1.0,
            kappa: 0.5,
            steps: 7,
            n_particles: 5,
            ..params(5, 2)
        };
        let sched = ObservationSchedule::at_steps(&[7], &[]);
        let out = simulate(&obj, &p, &init, &pl_init, &pl_noise, &sched).unwrap();
        let mut ens = Ensemble::sample(&init, &pl_init, 5).unwrap();
        for _ in 0..7 {
            ens = euler_step_interacting(&ens, &obj, &p, &pl_noise).unwrap();
        }
        assert_eq!(out.final_ensemble.positions(), ens.positions());
        assert_eq!(out.final_ensemble.step(), ens.step());
    }

    #[test]
    fn nested_runs_share_initials_and_noise() {
        let init = InitialDistribution::gaussian(alloc::vec![2.0], alloc::vec![1.0]).unwrap();
        let pl_init = plan(21, PurposeTag::Initial, 1);
        let pl_noise = plan(21, PurposeTag::Brownian, 1);
        let small = Ensemble::sample(&init, &pl_init, 8).unwrap();
        let large = Ensemble::sample(&init, &pl_init, 16).unwrap();
        assert_eq!(&large.positions()[..8], small.positions());
        // Force the same consensus input on both sizes: the first 8 rows
        // then receive identical updates because the noise lanes depend
        // only on the particle index and step.
        let p8 = CBOParams {
            sigma: 2.0,
            kappa: 0.5,
            ..params(8, 1)
        };
        let p16 = CBOParams {
            n_particles: 16,
            ..p8
        };
        let proxy = [0.7];
        let a = euler_step_copies(&small, &proxy, &p8, &pl_noise).unwrap();
        let b = euler_step_copies(&large, &proxy, &p16, &pl_noise).unwrap();
        assert_eq!(&b.positions()[..8], a.positions());
    }

    #[test]
    fn abort_reports_last_healthy_step() {
        // A catastrophic noise scale sends positions non-finite within a
        // few steps; the run must abort rather than clamp.
        let obj = ObjectiveSpec::sphere(1).unwrap();
        let init = InitialDistribution::gaussian(alloc::vec![2.0], alloc::vec![1.0]).unwrap();
        let p = CBOParams {
            sigma: 1e200,
            kappa: 0.5,
            steps: 50,
            n_particles: 4,
            ..params(4, 1)
        };
        let out = simulate(
            &obj,
            &p,
            &init,
            &plan(1, PurposeTag::Initial, 1),
            &plan(1, PurposeTag::Brownian, 1),
            &ObservationSchedule::every(10, 50, &[]),
        );
        match out {
            Err(Error::SimulationAbort { step, message }) => {
                assert!(step < 50, "{step}");
                assert!(message.contains("step"), "{message}");
            }
            other => panic!("expected abort, got {other:?}"),
        }
    }

    #[test]
    fn dirac_report_examples() {
        let base = CBOParams {
            sigma: 2.0,
            ..params(1, 2)
        };
        // kappa=1, delta=0: invariant at every z.
        let r = dirac_fixed_point_check(&[5.0, -3.0], &base);
        assert_eq!(r.drift_magnitude, 0.0);
        assert_eq!(r.diffusion_magnitudes, alloc::vec![0.0, 0.0]);
        assert!(r.is_fixed_point);
        // kappa=0.5: drift lambda * 0.5 * |z| > 0.
        let half = CBOParams { kappa: 0.5, ..base };
        let r = dirac_fixed_point_check(&[5.0, -3.0], &half);
        assert_eq!(r.drift_magnitude, half.lambda * 0.5 * math::sqrt(34.0));
        assert!(!r.is_fixed_point);
        // kappa=0.5 at the origin: fixed again.
        let r = dirac_fixed_point_check(&[0.0, 0.0], &half);
        assert!(r.is_fixed_point);
        // delta > 0: diffusion floor never vanishes.
        let floored = CBOParams { delta: 0.1, ..base };
        let r = dirac_fixed_point_check(&[5.0, -3.0], &floored);
        assert!(r.diffusion_magnitudes.iter().all(|&v| v > 0.0));
        assert!(!r.is_fixed_point);
    }

    #[test]
    fn observation_schedule_shapes() {
        let s = ObservationSchedule::every(10, 35, &[2, 4]);
        assert_eq!(s.record_steps(), &[0, 10, 20, 30, 35]);
        let s = ObservationSchedule::at_steps(&[5, 1, 5, 0], &[]);
        assert_eq!(s.record_steps(), &[0, 1, 5]);
    }

    #[test]
    fn snapshot_moments_match_hand_values() {
        // Four particles at (3, 4): |x| = 5, so E|X|^2 = 25 and E|X|^4 = 625
        // exactly, for all time under sigma=0, kappa=1.
        let obj = ObjectiveSpec::sphere(2).unwrap();
        let rows = alloc::vec![3.0, 4.0, 3.0, 4.0, 3.0, 4.0, 3.0, 4.0];
        let ens = Ensemble::new(rows, 4, 2).unwrap();
        let p = CBOParams {
            steps: 6,
            n_particles: 4,
            dim: 2,
            ..params(4, 2)
        };
        let pl = plan(0, PurposeTag::Brownian, 2);
        let mut cur = ens;
        for _ in 0..p.steps {
            cur = euler_step_interacting(&cur, &obj, &p, &pl).unwrap();
        }
        assert_eq!(cur.positions()[..2], [3.0, 4.0]);
        let snap = observe(
            0,
            0.0,
            cur.positions(),
            2,
            &[0.0, 0.0],
            &[25.0; 4],
            25.0,
            &[2, 4],
        );
        assert_eq!(snap.moments, alloc::vec![25.0, 625.0]);
    }

    proptest! {
        #[test]
        fn diameter_contracts_without_noise(
            xs in proptest::collection::vec(-50.0f64..50.0, 2..12),
            lambda_dt in 0.01f64..0.99,
        ) {
            // sigma=0, kappa=1: each step is x -> (1 - lambda dt) x + lambda dt m
            // with m in the hull, so the diameter cannot grow (up to rounding).
            let n = xs.len();
            let obj = ObjectiveSpec::ackley(1, 3.0).unwrap();
            let p = CBOParams {
                lambda: 1.0,
                dt: lambda_dt,
                steps: 30,
                n_particles: n,
                ..params(n, 1)
            };
            let pl = plan(0, PurposeTag::Brownian, 1);
            let mut ens = Ensemble::new(xs, n, 1).unwrap();
            let diameter = |e: &Ensemble| {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for &v in e.positions() {
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                hi - lo
            };
            let mut prev = diameter(&ens);
            for _ in 0..30 {
                ens = euler_step_interacting(&ens, &obj, &p, &pl).unwrap();
                let cur = diameter(&ens);
                prop_assert!(cur <= prev * (1.0 + 1e-12) + 1e-12);
                prev = cur;
            }
        }

        #[test]
        fn consensus_error_and_moment_sanity(seed in 0u64..50) {
            // Short noisy runs stay finite under the stability guard.
            let obj = ObjectiveSpec::sphere(2).unwrap();
            let init = InitialDistribution::gaussian(alloc::vec![2.0, 2.0], alloc::vec![1.0, 1.0]).unwrap();
            let p = CBOParams {
                lambda: 13.0,
                sigma: 2.0,
                alpha: 5.0,
                kappa: 0.01,
                delta: 0.0,
                dt: 0.005,
                steps: 40,
                n_particles: 32,
                dim: 2,
            };
            let out = simulate(
                &obj,
                &p,
                &init,
                &plan(seed, PurposeTag::Initial, 2),
                &plan(seed, PurposeTag::Brownian, 2),
                &ObservationSchedule::every(10, 40, &[2]),
            ).unwrap();
            for snap in &out.snapshots {
                prop_assert!(snap.moments[0].is_finite());
                prop_assert!(snap.f_min <= snap.f_max);
                prop_assert!(snap.consensus.iter().all(|v| v.is_finite()));
            }
        }
    }
}
