//! Classical flux noise coupled through `f(t) sz_a`: trajectory sampling,
//! ensemble dephasing, the idle-immunity check, and decoherence-time fits.
//!
//! The fluctuation field is an Ornstein-Uhlenbeck process with stationary rms
//! amplitude `sigma` and correlation time `tau_c`. Sampling uses the exact
//! one-step update `x' = a x + sigma sqrt(1 - a^2) xi` with `a = exp(-dt /
//! tau_c)` and a stationary draw for the first sample, so the discretization
//! reproduces the process statistics at any step that merely resolves the
//! correlation time (`dt <= tau_c / 10` is enforced).
//!
//! The central physical fact used throughout: with `t0a = 0` the static
//! Hamiltonian commutes with `sz_a`, so over any interval where `f` is held
//! constant the evolution factors into the deterministic dressed phases and a
//! noise phase `exp(-i s_k integral(f))` carried by the ETLS sign `s_k` of
//! each dressed level. Free evolution under noise is therefore evaluated
//! exactly, with no integrator error, and a state confined to one ETLS sector
//! only ever acquires a global noise phase. During the drive the instantaneous
//! Hamiltonian no longer commutes with `sz_a` and the midpoint-exponential
//! integrator from the dynamics layer is used instead, with `f` held constant
//! across each noise cell.

use nalgebra::{Matrix2, Matrix4, SMatrix, SymmetricEigen, Vector4};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::dynamics::{
    apply_exponential, max_resolvable_step, sx_a_matrix, sz_a_matrix, DynamicsError,
    EigenPropagator, PulseSpec,
};
use crate::model::{build_hamiltonian, dressed_states, JointState, ModelError, SystemParams, TAU};

/// Errors from noise sampling and the ensemble drivers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum NoiseError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("invalid noise model: {0}")]
    InvalidModel(&'static str),
    /// The sampling step must resolve the correlation time.
    #[error("noise step dt = {dt} ns exceeds tau_c / 10 = {max_dt} ns")]
    StepTooCoarse { dt: f64, max_dt: f64 },
    #[error("invalid ensemble request: {0}")]
    InvalidEnsemble(&'static str),
    /// The immunity argument rests on `[H0, sz_a] = 0`, which fails once the
    /// ETLS tunnels.
    #[error("idle immunity does not apply with ETLS tunneling t0a = {0}")]
    ImmunityNotApplicable(f64),
    /// An averaged density matrix failed its Hermiticity / trace / positivity
    /// checks, indicating an integrator defect.
    #[error("ensemble density matrix failed a physicality check: {0}")]
    NotPhysical(&'static str),
}

/// The stochastic process family. Only Ornstein-Uhlenbeck noise is modeled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseKind {
    #[default]
    OrnsteinUhlenbeck,
}

/// Stationary noise coupled as `f(t) sz_a`.
///
/// `sigma` is the stationary rms of `f` in angular units (rad/ns), matching
/// the Hamiltonian convention of the dynamics stack; `from_ghz` converts a
/// laboratory amplitude quoted in linear GHz. `tau_c` is in ns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub sigma: f64,
    pub tau_c: f64,
    pub kind: NoiseKind,
}

impl NoiseModel {
    pub fn new(sigma: f64, tau_c: f64) -> Result<Self, NoiseError> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(NoiseError::InvalidModel("sigma must be finite and >= 0"));
        }
        if !(tau_c > 0.0) || !tau_c.is_finite() {
            return Err(NoiseError::InvalidModel("tau_c must be finite and > 0"));
        }
        Ok(Self {
            sigma,
            tau_c,
            kind: NoiseKind::OrnsteinUhlenbeck,
        })
    }

    /// Builds the model from a linear-frequency amplitude (GHz) and a
    /// correlation time (ns).
    pub fn from_ghz(sigma_f_ghz: f64, tau_c_ns: f64) -> Result<Self, NoiseError> {
        Self::new(TAU * sigma_f_ghz, tau_c_ns)
    }

    /// Free-dephasing rate of the branch coherence, `gamma = 4 sigma^2
    /// tau_c` (1/ns): the long-time exponential slope of the phase average
    /// `E[exp(-2i integral(f))]` for Gaussian noise.
    pub fn free_dephasing_rate(&self) -> f64 {
        4.0 * self.sigma * self.sigma * self.tau_c
    }

    /// The coarsest admissible sampling step, `tau_c / 10`.
    pub fn max_step(&self) -> f64 {
        self.tau_c / 10.0
    }
}

/// A sampled noise realization, held constant over cells of width `dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseTrajectory {
    /// Cell width (ns).
    pub dt: f64,
    /// `samples[k]` is the value of `f` (rad/ns) on `[k dt, (k+1) dt)`.
    pub samples: Vec<f64>,
    /// Seed the trajectory was drawn with.
    pub seed: u64,
}

impl NoiseTrajectory {
    /// Zero-order-hold lookup; times beyond the last cell clamp to it.
    pub fn value_at(&self, t: f64) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let idx = (t / self.dt).floor().max(0.0) as usize;
        self.samples[idx.min(self.samples.len() - 1)]
    }

    /// Total covered time (ns).
    pub fn duration(&self) -> f64 {
        self.dt * self.samples.len() as f64
    }
}

pub(crate) fn ou_samples<R: Rng + ?Sized>(model: &NoiseModel, dt: f64, n: usize, rng: &mut R) -> Vec<f64> {
    let a = (-dt / model.tau_c).exp();
    let step_sd = model.sigma * (1.0 - a * a).sqrt();
    let mut samples = Vec::with_capacity(n);
    let mut x = model.sigma * rng.sample::<f64, _>(StandardNormal);
    samples.push(x);
    for _ in 1..n {
        x = a * x + step_sd * rng.sample::<f64, _>(StandardNormal);
        samples.push(x);
    }
    samples
}

/// Draws one stationary Ornstein-Uhlenbeck realization covering `[0, t_total]`.
///
/// # Errors
/// Rejects `dt > tau_c / 10` and non-positive `dt` or `t_total`.
pub fn sample_noise(
    model: &NoiseModel,
    dt: f64,
    t_total: f64,
    seed: u64,
) -> Result<NoiseTrajectory, NoiseError> {
    if !(dt > 0.0) || !dt.is_finite() || !(t_total > 0.0) || !t_total.is_finite() {
        return Err(NoiseError::InvalidEnsemble(
            "dt and t_total must be positive and finite",
        ));
    }
    let max_dt = model.max_step();
    if dt > max_dt * (1.0 + 1e-12) {
        return Err(NoiseError::StepTooCoarse { dt, max_dt });
    }
    let n = (t_total / dt).ceil().max(1.0) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(NoiseTrajectory {
        dt,
        samples: ou_samples(model, dt, n, &mut rng),
        seed,
    })
}

/// Analytic power spectral density `2 sigma^2 tau_c / (1 + omega^2 tau_c^2)`,
/// with `omega` in rad/ns; even and nonnegative, normalized so that
/// `integral S(omega) domega / (2 pi) = sigma^2`.
pub fn spectral_density(model: &NoiseModel, omega: f64) -> f64 {
    let x = omega * model.tau_c;
    2.0 * model.sigma * model.sigma * model.tau_c / (1.0 + x * x)
}

/// ETLS z-sign of each eigenvector of a block-diagonal (t0a = 0) static
/// Hamiltonian: exactly +-1 because every eigenvector lives in one sector.
fn etls_signs(v: &Matrix4<f64>) -> [f64; 4] {
    let mut s = [0.0; 4];
    for (k, slot) in s.iter_mut().enumerate() {
        let plus = v[(0, k)] * v[(0, k)] + v[(2, k)] * v[(2, k)];
        let minus = v[(1, k)] * v[(1, k)] + v[(3, k)] * v[(3, k)];
        *slot = if plus >= minus { 1.0 } else { -1.0 };
    }
    s
}

pub(crate) struct StaticFrameScanner {
    prop: EigenPropagator,
    signs: [f64; 4],
    h0: Matrix4<f64>,
}

impl StaticFrameScanner {
    pub(crate) fn new(params: &SystemParams) -> Self {
        let h0 = build_hamiltonian(params);
        let prop = EigenPropagator::new(&h0);
        let signs = etls_signs(prop.vectors());
        Self { prop, signs, h0 }
    }

    /// Integrates the pulse window (midpoint exponential, noise held per
    /// cell), then walks the free tail exactly, returning the static-frame
    /// state at each probe time. Probes must be sorted and >= the pulse
    /// duration.
    pub(crate) fn scan(
        &self,
        initial: &Vector4<C64>,
        params: &SystemParams,
        pulse: &PulseSpec,
        noise: Option<&NoiseTrajectory>,
        probes: &[f64],
    ) -> Vec<Vector4<C64>> {
        let tp = pulse.duration;
        let dt_int = max_resolvable_step(params, Some(pulse));
        let n = (tp / dt_int).ceil().max(1.0) as usize;
        let dt = tp / n as f64;
        let sx = sx_a_matrix();
        let sz = sz_a_matrix();

        let mut psi = *initial;
        for k in 0..n {
            let t_mid = (k as f64 + 0.5) * dt;
            let amp = pulse.rabi * (pulse.carrier * t_mid + pulse.phase).cos();
            let f = noise.map_or(0.0, |tr| tr.value_at(t_mid));
            let h = self.h0 + sx.scale(amp) + sz.scale(f);
            apply_exponential(&h, dt, &mut psi);
        }

        // Static frame at the end of the pulse: undo the deterministic
        // phases, keep everything else.
        let mut y = self.prop.to_eigenbasis(&psi);
        for k in 0..4 {
            y[k] *= C64::from_polar(1.0, self.prop.values()[k] * tp);
        }

        // Free tail: only the noise phase survives in this frame, advancing
        // per noise cell with the exact accumulated integral of f.
        let mut out = Vec::with_capacity(probes.len());
        let mut t = tp;
        for &probe in probes {
            if let Some(tr) = noise {
                while t < probe - 1e-12 {
                    let cell = (t / tr.dt).floor().max(0.0) as usize;
                    let cell_end = (cell as f64 + 1.0) * tr.dt;
                    let seg_end = cell_end.min(probe);
                    let f = tr.samples[cell.min(tr.samples.len() - 1)];
                    let dphi = f * (seg_end - t);
                    for k in 0..4 {
                        y[k] *= C64::from_polar(1.0, -self.signs[k] * dphi);
                    }
                    t = seg_end;
                }
            }
            out.push(self.prop.from_eigenbasis(&y));
        }
        out
    }
}

pub(crate) fn initial_vector(
    c0: C64,
    c1: C64,
    params: &SystemParams,
) -> Result<(Vector4<C64>, [JointState; 4]), NoiseError> {
    let n2 = c0.norm_sqr() + c1.norm_sqr();
    if (n2 - 1.0).abs() > 1e-9 {
        return Err(NoiseError::Dynamics(DynamicsError::UnnormalizedAmplitudes(
            n2,
        )));
    }
    let states = dressed_states(params)?;
    let v = states[0].vector().map(|a| a * c0) + states[1].vector().map(|a| a * c1);
    Ok((v, states))
}

fn hermiticity_defect(rho: &Matrix4<C64>) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..4 {
        for j in 0..4 {
            worst = worst.max((rho[(i, j)] - rho[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Smallest eigenvalue of a 4x4 Hermitian matrix, through the real symmetric
/// embedding [[Re, -Im], [Im, Re]] (eigenvalues appear twice).
fn min_eigenvalue(rho: &Matrix4<C64>) -> f64 {
    let mut m = SMatrix::<f64, 8, 8>::zeros();
    for i in 0..4 {
        for j in 0..4 {
            let z = rho[(i, j)];
            m[(i, j)] = z.re;
            m[(i + 4, j + 4)] = z.re;
            m[(i + 4, j)] = z.im;
            m[(i, j + 4)] = -z.im;
        }
    }
    SymmetricEigen::new(m)
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |acc, &e| acc.min(e))
}

fn check_density_matrix(rho: &Matrix4<C64>) -> Result<(), NoiseError> {
    if hermiticity_defect(rho) > 1e-10 {
        return Err(NoiseError::NotPhysical("not Hermitian within 1e-10"));
    }
    let trace: f64 = (0..4).map(|i| rho[(i, i)].re).sum();
    if (trace - 1.0).abs() > 1e-10 {
        return Err(NoiseError::NotPhysical("trace deviates from 1 by > 1e-10"));
    }
    if min_eigenvalue(rho) < -1e-10 {
        return Err(NoiseError::NotPhysical("negative eigenvalue below -1e-10"));
    }
    Ok(())
}

/// Ensemble-averaged state after the entanglement pulse under noise.
#[derive(Debug, Clone)]
pub struct DephasingOutcome {
    /// Averaged density matrix at `t_total`, in the static frame (lab basis,
    /// deterministic phases removed). Hermitian, unit trace, positive
    /// semidefinite (checked).
    pub rho: Matrix4<C64>,
    /// `<target| rho |target>` with the ideal entangled target of the pulse.
    pub fidelity: f64,
    /// Magnitude of the branch coherence `<0_q 0_a| rho |1bar_q 1_a>`, the
    /// matrix element the noise dephases.
    pub coherence: f64,
}

/// Averages the post-pulse state over `n_traj` independent noise
/// realizations, evolving each from 0 to `t_total >= pulse.duration` (the
/// window past the pulse is free evolution with noise still acting).
///
/// The initial state is `c0 |0_q> + c1 |1_q>` with the ETLS in its ground
/// state. Reproducible: trajectory `k` draws from stream `k` of the seeded
/// generator.
pub fn dephasing_ensemble(
    c0: C64,
    c1: C64,
    params: &SystemParams,
    pulse: &PulseSpec,
    model: &NoiseModel,
    t_total: f64,
    n_traj: usize,
    seed: u64,
) -> Result<DephasingOutcome, NoiseError> {
    if n_traj == 0 {
        return Err(NoiseError::InvalidEnsemble("n_traj must be >= 1"));
    }
    if t_total < pulse.duration {
        return Err(NoiseError::InvalidEnsemble(
            "t_total must cover the pulse duration",
        ));
    }
    let (initial, states) = initial_vector(c0, c1, params)?;
    let scanner = StaticFrameScanner::new(params);
    let probes = [t_total];

    let mut rho_sum = Matrix4::<C64>::zeros();
    for k in 0..n_traj {
        let noise_traj;
        let noise = if model.sigma > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            noise_traj = NoiseTrajectory {
                dt: model.max_step(),
                samples: ou_samples(
                    model,
                    model.max_step(),
                    (t_total / model.max_step()).ceil().max(1.0) as usize,
                    &mut rng,
                ),
                seed,
            };
            Some(&noise_traj)
        } else {
            None
        };
        let fin = scanner.scan(&initial, params, pulse, noise, &probes)[0];
        for i in 0..4 {
            for j in 0..4 {
                rho_sum[(i, j)] += fin[i] * fin[j].conj();
            }
        }
    }
    let rho = rho_sum.map(|z| z / n_traj as f64);
    check_density_matrix(&rho)?;

    let i = C64::new(0.0, 1.0);
    let degenerate = params.omega_delta == 0.0;
    let target = if degenerate {
        states[2].vector().map(|a| a * c0) + states[3].vector().map(|a| a * c1)
    } else {
        states[0].vector().map(|a| a * c0) + states[3].vector().map(|a| a * (i * c1))
    };
    let fidelity = sandwich(&target, &rho, &target).re;
    let coherence = sandwich(states[0].vector(), &rho, states[3].vector()).norm();
    Ok(DephasingOutcome {
        rho,
        fidelity,
        coherence,
    })
}

fn sandwich(left: &Vector4<C64>, rho: &Matrix4<C64>, right: &Vector4<C64>) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..4 {
        for j in 0..4 {
            acc += left[i].conj() * rho[(i, j)] * right[j];
        }
    }
    acc
}

fn trace_distance_2x2(a: &Matrix2<C64>, b: &Matrix2<C64>) -> f64 {
    let d00 = (a[(0, 0)] - b[(0, 0)]).re;
    let d11 = (a[(1, 1)] - b[(1, 1)]).re;
    let off = a[(0, 1)] - b[(0, 1)];
    let mid = 0.5 * (d00 + d11);
    let rad = (0.25 * (d00 - d11) * (d00 - d11) + off.norm_sqr()).sqrt();
    0.5 * ((mid + rad).abs() + (mid - rad).abs())
}

/// Trace distance between the noise-averaged and noiseless qubit states
/// after idling for `t_total` with the ETLS in its ground state.
///
/// With `t0a = 0` the noise phase is global within the occupied ETLS sector
/// and the distance is zero to machine precision; the contract is <= 1e-9.
///
/// # Errors
/// Rejects `t0a != 0`: the commutation argument does not hold there (the
/// crate-internal unguarded variant exists for negative-control tests).
pub fn idle_immunity_check(
    c0: C64,
    c1: C64,
    params: &SystemParams,
    model: &NoiseModel,
    t_total: f64,
    n_traj: usize,
    seed: u64,
) -> Result<f64, NoiseError> {
    if params.t0a != 0.0 {
        return Err(NoiseError::ImmunityNotApplicable(params.t0a / TAU));
    }
    idle_immunity_unguarded(c0, c1, params, model, t_total, n_traj, seed)
}

/// The immunity computation without the `t0a = 0` guard. Evolution is exact
/// for any `t0a`: the Hamiltonian is constant across each noise cell, so one
/// eigendecomposition per cell advances the state without integrator error.
pub(crate) fn idle_immunity_unguarded(
    c0: C64,
    c1: C64,
    params: &SystemParams,
    model: &NoiseModel,
    t_total: f64,
    n_traj: usize,
    seed: u64,
) -> Result<f64, NoiseError> {
    if n_traj == 0 {
        return Err(NoiseError::InvalidEnsemble("n_traj must be >= 1"));
    }
    if !(t_total > 0.0) || !t_total.is_finite() {
        return Err(NoiseError::InvalidEnsemble(
            "t_total must be positive and finite",
        ));
    }
    let n2 = c0.norm_sqr() + c1.norm_sqr();
    if (n2 - 1.0).abs() > 1e-9 {
        return Err(NoiseError::Dynamics(DynamicsError::UnnormalizedAmplitudes(
            n2,
        )));
    }
    // The dressed qubit basis requires t0a = 0; for the unguarded negative
    // control, build the superposition from the bare ETLS-ground states
    // instead (t0a = 0 reduces to the same dressed construction only up to
    // the qubit mixing angle, which is irrelevant for a growth-vs-zero
    // comparison). To keep the guarded path exactly the documented one, use
    // dressed states whenever they exist.
    let initial = if params.t0a == 0.0 {
        initial_vector(c0, c1, params)?.0
    } else {
        let mut v = Vector4::zeros();
        v[crate::model::UP_DN] = c0;
        v[crate::model::DN_DN] = c1;
        v
    };

    let h0 = build_hamiltonian(params);
    let sz = sz_a_matrix();
    let dt = model.max_step();
    let n_cells = (t_total / dt).ceil().max(1.0) as usize;
    let dt = t_total / n_cells as f64;

    // Noiseless reference.
    let mut psi0 = initial;
    apply_exponential(&h0, t_total, &mut psi0);
    let rho_ref = qubit_reduced(&psi0);

    let mut rho_sum = Matrix2::<C64>::zeros();
    for k in 0..n_traj {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        let samples = if model.sigma > 0.0 {
            ou_samples(model, dt, n_cells, &mut rng)
        } else {
            vec![0.0; n_cells]
        };
        let mut psi = initial;
        for &f in &samples {
            let h = h0 + sz.scale(f);
            apply_exponential(&h, dt, &mut psi);
        }
        rho_sum += qubit_reduced(&psi);
    }
    let rho_avg = rho_sum.map(|z| z / n_traj as f64);
    Ok(trace_distance_2x2(&rho_avg, &rho_ref))
}

fn qubit_reduced(psi: &Vector4<C64>) -> Matrix2<C64> {
    // Trace over the ETLS: qubit index blocks are {0,1} (up_q) and {2,3}.
    let mut rho = Matrix2::zeros();
    rho[(0, 0)] = C64::new(psi[0].norm_sqr() + psi[1].norm_sqr(), 0.0);
    rho[(1, 1)] = C64::new(psi[2].norm_sqr() + psi[3].norm_sqr(), 0.0);
    rho[(0, 1)] = psi[0] * psi[2].conj() + psi[1] * psi[3].conj();
    rho[(1, 0)] = rho[(0, 1)].conj();
    rho
}

/// Result of the decoherence-time fit.
#[derive(Debug, Clone, PartialEq)]
pub enum T2Estimate {
    /// Exponential 1/e time from the log-linear fit (ns).
    Fitted { t2_ns: f64 },
    /// The coherence decayed by less than 10% over the probed window; only a
    /// lower bound can be quoted.
    LowerBound { window_ns: f64 },
}

/// Decoherence-time estimate with its probe data and analytic cross-checks.
#[derive(Debug, Clone)]
pub struct T2Report {
    pub estimate: T2Estimate,
    /// Probe times (ns) the ensemble coherence was read at; the first entry
    /// is the pulse end.
    pub probe_times: Vec<f64>,
    /// `|E[a0 conj(a1)]|` at each probe time.
    pub coherences: Vec<f64>,
    /// `1 / (4 sigma^2 tau_c)`: the free-dephasing prediction (ns);
    /// infinite for zero noise. Reported for comparison, not asserted.
    pub free_prediction_ns: f64,
    /// Spectral density at the Rabi frequency (diagnostic: the driven
    /// decoherence rate scales with it).
    pub psd_at_rabi: f64,
}

const PROBE_LADDER: [f64; 10] = [0.125, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0];
/// Cap on the probe horizon (ns) when the predicted decay is very slow.
const MAX_PROBE_SCALE: f64 = 2.5e4;

/// Fits the exponential decay of the ensemble branch coherence after the
/// entanglement pulse on an equal qubit superposition.
///
/// Probe times extend from the pulse end to four predicted decay times
/// (capped); every trajectory is evolved once through the whole window, so
/// all probes share the same noise realizations and the fit is smooth in the
/// seed. Points below 20% of the initial coherence are left out of the fit.
pub fn estimate_t2(
    model: &NoiseModel,
    params: &SystemParams,
    pulse: &PulseSpec,
    n_traj: usize,
    seed: u64,
) -> Result<T2Report, NoiseError> {
    if n_traj == 0 {
        return Err(NoiseError::InvalidEnsemble("n_traj must be >= 1"));
    }
    let c = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let (initial, states) = initial_vector(c, c, params)?;
    let scanner = StaticFrameScanner::new(params);

    let gamma = model.free_dephasing_rate();
    let scale = if gamma > 0.0 {
        (1.0 / gamma).min(MAX_PROBE_SCALE)
    } else {
        MAX_PROBE_SCALE
    };
    let tp = pulse.duration;
    let mut probe_times = vec![tp];
    probe_times.extend(PROBE_LADDER.iter().map(|&m| tp + m * scale));
    let horizon = *probe_times.last().expect("nonempty ladder");

    let free_prediction_ns = if gamma > 0.0 { 1.0 / gamma } else { f64::INFINITY };
    let psd_at_rabi = spectral_density(model, pulse.rabi);

    let mut acc = vec![C64::new(0.0, 0.0); probe_times.len()];
    for k in 0..n_traj {
        let noise_traj;
        let noise = if model.sigma > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            noise_traj = NoiseTrajectory {
                dt: model.max_step(),
                samples: ou_samples(
                    model,
                    model.max_step(),
                    (horizon / model.max_step()).ceil().max(1.0) as usize,
                    &mut rng,
                ),
                seed,
            };
            Some(&noise_traj)
        } else {
            None
        };
        let snapshots = scanner.scan(&initial, params, pulse, noise, &probe_times);
        for (slot, snap) in acc.iter_mut().zip(snapshots.iter()) {
            let a0 = dot(states[0].vector(), snap);
            let a1 = dot(states[3].vector(), snap);
            *slot += a0 * a1.conj();
        }
        if model.sigma == 0.0 {
            // Noiseless trajectories are identical; one suffices.
            for slot in acc.iter_mut() {
                *slot = slot.scale(n_traj as f64);
            }
            break;
        }
    }
    let coherences: Vec<f64> = acc.iter().map(|z| (z / n_traj as f64).norm()).collect();

    let c_first = coherences[0];
    let c_last = *coherences.last().expect("nonempty");
    let estimate = if c_first <= 0.0 || c_last >= 0.9 * c_first {
        T2Estimate::LowerBound { window_ns: horizon }
    } else {
        // Log-linear least squares over the usable probes.
        let mut ts = Vec::new();
        let mut ys = Vec::new();
        for (&t, &cv) in probe_times.iter().zip(coherences.iter()) {
            if cv >= 0.2 * c_first {
                ts.push(t);
                ys.push(cv.ln());
            }
        }
        let n = ts.len() as f64;
        let t_mean = ts.iter().sum::<f64>() / n;
        let y_mean = ys.iter().sum::<f64>() / n;
        let mut num = 0.0;
        let mut den = 0.0;
        for (t, y) in ts.iter().zip(ys.iter()) {
            num += (t - t_mean) * (y - y_mean);
            den += (t - t_mean) * (t - t_mean);
        }
        let slope = num / den;
        if slope >= -f64::EPSILON {
            T2Estimate::LowerBound { window_ns: horizon }
        } else {
            T2Estimate::Fitted { t2_ns: -1.0 / slope }
        }
    };

    Ok(T2Report {
        estimate,
        probe_times,
        coherences,
        free_prediction_ns,
        psd_at_rabi,
    })
}

fn dot(bra: &Vector4<C64>, ket: &Vector4<C64>) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..4 {
        acc += bra[i].conj() * ket[i];
    }
    acc
}
