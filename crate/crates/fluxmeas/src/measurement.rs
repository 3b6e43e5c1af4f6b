//! Projective ETLS readout and detector statistics.
//!
//! After the conditional flip the ETLS carries the qubit populations; its
//! reduced state has a closed form whose off-diagonal term is suppressed by
//! the overlap of the two conditional qubit branches. A detector then reads
//! the ETLS out by circulating current. This module provides that closed
//! form, the Born-rule projection used by the end-to-end protocol, and the
//! Gaussian switching-histogram phenomenology for comparing the repetition
//! cost of projective readout against the older always-coupled scheme.

use nalgebra::Matrix2;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::model::JointState;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeasurementError {
    #[error("amplitudes are not normalized: |c0|^2 + |c1|^2 = {0}")]
    UnnormalizedAmplitudes(f64),
    #[error("branch overlap must lie in [-1, 1], got {0}")]
    OverlapOutOfRange(f64),
    #[error("invalid histogram model: {0}")]
    InvalidHistogram(&'static str),
    #[error("accuracy must lie in (0, 1), got {0}")]
    InvalidAccuracy(f64),
    #[error("cannot estimate a population from zero samples")]
    EmptySamples,
}

/// Two-component Gaussian model of the switching detector: state 0 yields
/// output `y0`, state 1 yields `y1`, each smeared with variance `sigma`
/// (squared detector units, not a standard deviation), mixed with weight
/// `|c0|^2` on the `y0` component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramModel {
    pub y0: f64,
    pub y1: f64,
    pub sigma: f64,
    pub weight: f64,
}

impl HistogramModel {
    pub fn new(y0: f64, y1: f64, sigma: f64, weight: f64) -> Result<Self, MeasurementError> {
        if !(y0.is_finite() && y1.is_finite() && sigma.is_finite() && weight.is_finite()) {
            return Err(MeasurementError::InvalidHistogram(
                "all fields must be finite",
            ));
        }
        if y0 == y1 {
            return Err(MeasurementError::InvalidHistogram(
                "component means must differ",
            ));
        }
        if !(sigma > 0.0) {
            return Err(MeasurementError::InvalidHistogram(
                "component variance must be positive",
            ));
        }
        if !(0.0..=1.0).contains(&weight) {
            return Err(MeasurementError::InvalidHistogram(
                "weight must lie in [0, 1]",
            ));
        }
        Ok(Self {
            y0,
            y1,
            sigma,
            weight,
        })
    }

    /// The poorly separated detector discussed throughout: unit mean
    /// separation with `2 sqrt(sigma) / |y1 - y0| = 50`, equal weights.
    pub fn reference() -> Self {
        Self::new(0.0, 1.0, 625.0, 0.5).expect("reference values are valid")
    }

    /// Mean detector output `weight * y0 + (1 - weight) * y1`.
    pub fn mixture_mean(&self) -> f64 {
        self.weight * self.y0 + (1.0 - self.weight) * self.y1
    }

    /// Variance of one sample: component variance plus the between-component
    /// spread `w (1 - w) (y0 - y1)^2`.
    pub fn total_variance(&self) -> f64 {
        let d = self.y0 - self.y1;
        self.sigma + self.weight * (1.0 - self.weight) * d * d
    }

    /// Separation figure `2 sqrt(sigma) / |y1 - y0|`; large means the
    /// components overlap badly (50 for [`HistogramModel::reference`]).
    pub fn separation_ratio(&self) -> f64 {
        2.0 * self.sigma.sqrt() / (self.y1 - self.y0).abs()
    }
}

/// Target readout accuracy as a fraction of the full population range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccuracySpec {
    pub a_m: f64,
}

impl AccuracySpec {
    pub fn new(a_m: f64) -> Result<Self, MeasurementError> {
        if !a_m.is_finite() || !(0.0 < a_m && a_m < 1.0) {
            return Err(MeasurementError::InvalidAccuracy(a_m));
        }
        Ok(Self { a_m })
    }
}

/// ETLS reduced density matrix after an ideal conditional flip of the qubit
/// state `c0 |0_q> + c1 |1_q>`, in the (|0_a>, |1_a>) basis:
///
/// ```text
/// rho_a = |c0|^2 |0_a><0_a| + |c1|^2 |1_a><1_a|
///       + (i c0* c1 <0_q|1bar_q> |1_a><0_a| + h.c.)
/// ```
///
/// `overlap` is the inner product of the two conditional qubit branches,
/// `<0_q|1bar_q> = sin((theta_bar - theta)/2)`; the off-diagonal term
/// (all the ETLS retains of the qubit's phase) is proportional to it.
///
/// # Errors
/// Rejects `(c0, c1)` that are not normalized to 1e-9 and `|overlap| > 1`.
pub fn etls_density_matrix(
    c0: C64,
    c1: C64,
    overlap: f64,
) -> Result<Matrix2<C64>, MeasurementError> {
    let norm_sqr = c0.norm_sqr() + c1.norm_sqr();
    if (norm_sqr - 1.0).abs() > 1e-9 {
        return Err(MeasurementError::UnnormalizedAmplitudes(norm_sqr));
    }
    if !overlap.is_finite() || overlap.abs() > 1.0 {
        return Err(MeasurementError::OverlapOutOfRange(overlap));
    }
    let cross = C64::i() * c0.conj() * c1 * overlap;
    let mut rho = Matrix2::zeros();
    rho[(0, 0)] = C64::new(c0.norm_sqr(), 0.0);
    rho[(1, 1)] = C64::new(c1.norm_sqr(), 0.0);
    rho[(1, 0)] = cross;
    rho[(0, 1)] = cross.conj();
    Ok(rho)
}

/// One projective readout of the ETLS.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Measured ETLS bit: 1 for |1_a>, 0 for |0_a>.
    pub outcome: u8,
    /// Born probability of the outcome that was realized.
    pub probability: f64,
    /// Qubit density matrix conditioned on the outcome, normalized, in the
    /// (up_q, dn_q) basis.
    pub qubit_state: Matrix2<C64>,
}

/// Projects the ETLS onto its circulating-current basis, collapsing the
/// joint state. Outcome 1 occurs with probability equal to the |1_a>
/// population; the surviving qubit state is the normalized conditional
/// amplitude pair. Deterministic for a fixed generator state.
pub fn project_etls<R: Rng + ?Sized>(state: &JointState, rng: &mut R) -> Projection {
    let p_one = state.etls_excited_population();
    let one = rng.gen::<f64>() < p_one;
    let probability = if one { p_one } else { 1.0 - p_one };
    let amps = state.amplitudes();
    // Basis index 2q + a with a = 0 for up_a = |1_a>, 1 for dn_a = |0_a>.
    let a_idx = if one { 0 } else { 1 };
    let psi = [amps[a_idx], amps[2 + a_idx]];
    let mut rho = Matrix2::zeros();
    for i in 0..2 {
        for j in 0..2 {
            rho[(i, j)] = psi[i] * psi[j].conj() / probability;
        }
    }
    Projection {
        outcome: one as u8,
        probability,
        qubit_state: rho,
    }
}

/// Shots needed to reach accuracy `A_m` with a projective (von Neumann)
/// readout: `ceil(1 / (2 A_m)^2)`, from the binomial deviation
/// `dN/N = 1/(2 sqrt(N))` at the worst-case half-half split.
pub fn required_repetitions_von_neumann(acc: &AccuracySpec) -> u64 {
    (1.0 / (2.0 * acc.a_m).powi(2)).ceil() as u64
}

/// Shots needed at the same accuracy when the two detector outputs overlap:
/// `ceil(4 sigma / |y1 - y0|^2 * N_v)`. The multiplier over
/// [`required_repetitions_von_neumann`] is exactly `4 sigma / |y1 - y0|^2`,
/// the squared separation figure.
pub fn required_repetitions_overlapping(acc: &AccuracySpec, model: &HistogramModel) -> u64 {
    let n_v = required_repetitions_von_neumann(acc);
    let d = self::separation_penalty(model);
    (d * n_v as f64).ceil() as u64
}

fn separation_penalty(model: &HistogramModel) -> f64 {
    let d = model.y1 - model.y0;
    4.0 * model.sigma / (d * d)
}

/// Draws `n` detector outputs from the two-component Gaussian mixture.
/// Deterministic for a fixed seed (bit-identical across runs).
pub fn sample_switching(model: &HistogramModel, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sd = model.sigma.sqrt();
    (0..n)
        .map(|_| {
            let mean = if rng.gen::<f64>() < model.weight {
                model.y0
            } else {
                model.y1
            };
            mean + sd * rng.sample::<f64, _>(StandardNormal)
        })
        .collect()
}

/// Infers `|c0|^2` from detector samples by inverting the mixture mean:
/// `(mean(samples) - y1) / (y0 - y1)`, clamped to [0, 1] since a
/// finite-sample mean can land outside the physical range.
///
/// The estimate is invariant under shifting `y0`, `y1`, and every sample by
/// the same constant (and under common rescaling).
///
/// # Errors
/// [`MeasurementError::EmptySamples`] when `samples` is empty.
pub fn estimate_population(
    samples: &[f64],
    model: &HistogramModel,
) -> Result<f64, MeasurementError> {
    if samples.is_empty() {
        return Err(MeasurementError::EmptySamples);
    }
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    Ok(((mean - model.y1) / (model.y0 - model.y1)).clamp(0.0, 1.0))
}
