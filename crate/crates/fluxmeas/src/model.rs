//! Operators, parameters, and closed-form spectral quantities of the coupled
//! qubit-ETLS system.
//!
//! The system is a persistent-current qubit inductively coupled to an rf-SQUID
//! effective two-level system (ETLS). Its static Hamiltonian is
//!
//! ```text
//! H0 = eps0/2 sz_q + t0/2 sx_q + wa/2 sz_a + t0a/2 sx_a + wD/2 sz_q sz_a
//! ```
//!
//! with `sz`, `sx` Pauli operators on the qubit (`_q`) and ETLS (`_a`)
//! factors. All frequencies in this module and the rest of the dynamics stack
//! are *angular* (rad/ns); constructors taking laboratory values in linear GHz
//! multiply by 2 pi. With hbar = 1 energies and angular frequencies coincide.
//!
//! Basis conventions, fixed throughout the crate:
//! - product-basis order (|up_q up_a>, |up_q dn_a>, |dn_q up_a>, |dn_q dn_a>),
//!   qubit factor first, where up/dn are the sz = +1/-1 eigenstates;
//! - the ETLS ground side is |0_a> = |dn_a> (sz_a = -1), so the branch of the
//!   qubit conditioned on |0_a> sees the effective bias `eps0 - wD`;
//! - dressed qubit states follow the column conventions
//!   |0_q> = [-sin(th/2), cos(th/2)]^T, |1_q> = [cos(th/2), sin(th/2)]^T in
//!   the (up_q, dn_q) basis, with mixing angle th = atan2(t0, eps0 - wD) for
//!   the ETLS-ground branch and th_bar = atan2(t0, eps0 + wD) for the
//!   ETLS-excited branch.
//!
//! During storage the ETLS does not tunnel (`t0a = 0`), `H0` commutes with
//! `sz_a`, and the four eigenstates split into two conditional qubit doublets
//! with splittings `w_q = sqrt((eps0 - wD)^2 + t0^2)` and
//! `w_q_bar = sqrt((eps0 + wD)^2 + t0^2)`. The two ETLS transition
//! frequencies conditioned on the qubit state differ by `w_q_bar - w_q`;
//! driving one of them is what makes the measurement protocol conditional.

use nalgebra::{Matrix2, Matrix4, Vector4};
use num_complex::Complex64 as C64;
use thiserror::Error;

/// 2 pi, for converting linear frequencies (GHz) to angular ones (rad/ns).
pub const TAU: f64 = std::f64::consts::TAU;

/// Errors from parameter validation and the closed-form spectral routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    /// A parameter is NaN or infinite.
    #[error("parameter `{0}` must be finite")]
    NonFinite(&'static str),
    /// A parameter violates its sign constraint.
    #[error("parameter `{name}` must satisfy {constraint} (got {value})")]
    OutOfRange {
        name: &'static str,
        constraint: &'static str,
        value: f64,
    },
    /// Dressed-state labels are only defined in the storage configuration.
    #[error("dressed quantities require t0a = 0 (got {0} rad/ns)")]
    EtlsTunneling(f64),
    /// A state vector is not normalized.
    #[error("state norm^2 = {0}, expected 1 within 1e-9")]
    NotNormalized(f64),
}

/// The five energy scales of the static Hamiltonian, stored as angular
/// frequencies (rad/ns).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    /// Qubit bias energy `eps0` (any sign).
    pub epsilon0: f64,
    /// Qubit tunneling `t0` (nonnegative).
    pub t0: f64,
    /// ETLS splitting `wa` (positive).
    pub omega_a: f64,
    /// ETLS tunneling `t0a`; zero during storage.
    pub t0a: f64,
    /// Longitudinal `sz_q sz_a` coupling strength `wD` (nonnegative).
    pub omega_delta: f64,
}

impl SystemParams {
    /// Builds parameters from laboratory values in linear GHz.
    ///
    /// # Errors
    /// Rejects non-finite values, `t0 < 0`, `omega_a <= 0`, `omega_delta < 0`.
    ///
    /// ```
    /// use fluxmeas::model::SystemParams;
    /// let p = SystemParams::from_ghz(13.0, 1.0, 11.0, 0.0, 3.0).unwrap();
    /// assert!((p.epsilon0 - 13.0 * std::f64::consts::TAU).abs() < 1e-12);
    /// ```
    pub fn from_ghz(
        epsilon0_ghz: f64,
        t0_ghz: f64,
        omega_a_ghz: f64,
        t0a_ghz: f64,
        omega_delta_ghz: f64,
    ) -> Result<Self, ModelError> {
        Self::from_angular(
            TAU * epsilon0_ghz,
            TAU * t0_ghz,
            TAU * omega_a_ghz,
            TAU * t0a_ghz,
            TAU * omega_delta_ghz,
        )
    }

    /// Builds parameters directly in angular units (rad/ns), with the same
    /// validation as [`SystemParams::from_ghz`].
    pub fn from_angular(
        epsilon0: f64,
        t0: f64,
        omega_a: f64,
        t0a: f64,
        omega_delta: f64,
    ) -> Result<Self, ModelError> {
        for (name, v) in [
            ("epsilon0", epsilon0),
            ("t0", t0),
            ("omega_a", omega_a),
            ("t0a", t0a),
            ("omega_delta", omega_delta),
        ] {
            if !v.is_finite() {
                return Err(ModelError::NonFinite(name));
            }
        }
        if t0 < 0.0 {
            return Err(ModelError::OutOfRange {
                name: "t0",
                constraint: "t0 >= 0",
                value: t0,
            });
        }
        if omega_a <= 0.0 {
            return Err(ModelError::OutOfRange {
                name: "omega_a",
                constraint: "omega_a > 0",
                value: omega_a,
            });
        }
        if omega_delta < 0.0 {
            return Err(ModelError::OutOfRange {
                name: "omega_delta",
                constraint: "omega_delta >= 0",
                value: omega_delta,
            });
        }
        Ok(Self {
            epsilon0,
            t0,
            omega_a,
            t0a,
            omega_delta,
        })
    }

    /// The reference parameter set used throughout the crate's examples:
    /// (eps0, t0, wa, wD) = (13, 1, 11, 3) GHz with the ETLS tunneling off.
    pub fn reference() -> Self {
        Self::from_ghz(13.0, 1.0, 11.0, 0.0, 3.0).expect("reference parameters are valid")
    }
}

impl Default for SystemParams {
    fn default() -> Self {
        Self::reference()
    }
}

/// A pure state of the joint qubit-ETLS system: four complex amplitudes in
/// the fixed product-basis order (|up_q up_a>, |up_q dn_a>, |dn_q up_a>,
/// |dn_q dn_a>).
#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    amps: Vector4<C64>,
}

/// Index of |up_q up_a> in the product basis.
pub const UP_UP: usize = 0;
/// Index of |up_q dn_a> in the product basis.
pub const UP_DN: usize = 1;
/// Index of |dn_q up_a> in the product basis.
pub const DN_UP: usize = 2;
/// Index of |dn_q dn_a> in the product basis.
pub const DN_DN: usize = 3;

impl JointState {
    /// Wraps four amplitudes, requiring unit norm within 1e-9.
    pub fn new(amps: [C64; 4]) -> Result<Self, ModelError> {
        let v = Vector4::from_row_slice(&amps);
        let n2 = v.iter().map(|a| a.norm_sqr()).sum::<f64>();
        if (n2 - 1.0).abs() > 1e-9 {
            return Err(ModelError::NotNormalized(n2));
        }
        Ok(Self { amps: v })
    }

    /// The product basis state with index `i` (see the `UP_UP` .. `DN_DN`
    /// constants).
    ///
    /// # Panics
    /// Panics if `i > 3`.
    pub fn basis(i: usize) -> Self {
        assert!(i < 4, "basis index out of range: {i}");
        let mut v = Vector4::zeros();
        v[i] = C64::new(1.0, 0.0);
        Self { amps: v }
    }

    pub(crate) fn from_vector_unchecked(amps: Vector4<C64>) -> Self {
        Self { amps }
    }

    /// The four amplitudes in basis order.
    pub fn amplitudes(&self) -> [C64; 4] {
        [self.amps[0], self.amps[1], self.amps[2], self.amps[3]]
    }

    pub(crate) fn vector(&self) -> &Vector4<C64> {
        &self.amps
    }

    /// Squared norm (1 within 1e-9 for any state built through the public
    /// constructors; evolution preserves it to much better than that).
    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// The four basis populations |amplitude|^2.
    pub fn populations(&self) -> [f64; 4] {
        [
            self.amps[0].norm_sqr(),
            self.amps[1].norm_sqr(),
            self.amps[2].norm_sqr(),
            self.amps[3].norm_sqr(),
        ]
    }

    /// Population of the ETLS excited side |1_a> = |up_a> (basis indices 0
    /// and 2), regardless of the qubit state.
    pub fn etls_excited_population(&self) -> f64 {
        self.amps[UP_UP].norm_sqr() + self.amps[DN_UP].norm_sqr()
    }

    /// Inner product `<self|other>`.
    pub fn overlap(&self, other: &Self) -> C64 {
        self.amps.dotc(&other.amps)
    }

    /// Reduced density matrix of the qubit, in the (up_q, dn_q) basis,
    /// obtained by tracing out the ETLS.
    pub fn qubit_density_matrix(&self) -> Matrix2<C64> {
        let a = &self.amps;
        let mut rho = Matrix2::zeros();
        for i in 0..2 {
            for j in 0..2 {
                rho[(i, j)] = a[2 * i] * a[2 * j].conj() + a[2 * i + 1] * a[2 * j + 1].conj();
            }
        }
        rho
    }

    /// Reduced density matrix of the ETLS in the (|0_a>, |1_a>) basis,
    /// i.e. (dn_a, up_a), obtained by tracing out the qubit.
    pub fn etls_density_matrix(&self) -> Matrix2<C64> {
        let a = &self.amps;
        let mut rho = Matrix2::zeros();
        // row/column 0 is |0_a> = dn_a (odd basis indices), row/column 1 is
        // |1_a> = up_a (even basis indices).
        rho[(0, 0)] = C64::new(a[UP_DN].norm_sqr() + a[DN_DN].norm_sqr(), 0.0);
        rho[(1, 1)] = C64::new(a[UP_UP].norm_sqr() + a[DN_UP].norm_sqr(), 0.0);
        rho[(1, 0)] = a[UP_UP] * a[UP_DN].conj() + a[DN_UP] * a[DN_DN].conj();
        rho[(0, 1)] = rho[(1, 0)].conj();
        rho
    }
}

/// Conditional qubit energies, mixing angles, the four joint levels, and the
/// two conditional ETLS transition frequencies. All angular (rad/ns); the
/// `*_ghz` accessors divide by 2 pi.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DressedSpectrum {
    /// Qubit splitting with the ETLS in |0_a>: sqrt((eps0 - wD)^2 + t0^2).
    pub omega_q: f64,
    /// Qubit splitting with the ETLS in |1_a>: sqrt((eps0 + wD)^2 + t0^2).
    pub omega_q_bar: f64,
    /// Mixing angle of the ETLS-ground doublet, in [0, pi).
    pub theta: f64,
    /// Mixing angle of the ETLS-excited doublet, in [0, pi).
    pub theta_bar: f64,
    /// Joint level energies in the order
    /// (E_0q0a, E_1q0a, E_0bq1a, E_1bq1a):
    /// ground/excited qubit with the ETLS in |0_a>, then the barred
    /// (ETLS-excited) doublet.
    pub levels: [f64; 4],
    /// ETLS transition frequency when the qubit is in |0_q>:
    /// wa - (w_q_bar - w_q)/2.
    pub f_cond_q0: f64,
    /// ETLS transition frequency when the qubit is in |1_q>:
    /// wa + (w_q_bar - w_q)/2.
    pub f_cond_q1: f64,
}

impl DressedSpectrum {
    /// Qubit splitting (ETLS ground) in linear GHz.
    pub fn omega_q_ghz(&self) -> f64 {
        self.omega_q / TAU
    }

    /// Qubit splitting (ETLS excited) in linear GHz.
    pub fn omega_q_bar_ghz(&self) -> f64 {
        self.omega_q_bar / TAU
    }

    /// Level energies in linear GHz, same order as [`DressedSpectrum::levels`].
    pub fn levels_ghz(&self) -> [f64; 4] {
        self.levels.map(|e| e / TAU)
    }

    /// Conditional transition frequency (qubit in |0_q>) in linear GHz.
    pub fn f_cond_q0_ghz(&self) -> f64 {
        self.f_cond_q0 / TAU
    }

    /// Conditional transition frequency (qubit in |1_q>) in linear GHz.
    pub fn f_cond_q1_ghz(&self) -> f64 {
        self.f_cond_q1 / TAU
    }
}

/// Builds the static Hamiltonian as a real symmetric 4x4 matrix (rad/ns) in
/// the fixed product basis.
///
/// With `t0a = 0` the matrix commutes with `sz_a`: the (0, 1), (1, 0), (2, 3),
/// (3, 2) entries are exactly zero and the two ETLS blocks evolve
/// independently.
///
/// ```
/// use fluxmeas::model::{build_hamiltonian, SystemParams};
/// let h = build_hamiltonian(&SystemParams::reference());
/// assert_eq!(h[(0, 1)], 0.0); // no ETLS tunneling during storage
/// assert_eq!(h, h.transpose());
/// ```
pub fn build_hamiltonian(params: &SystemParams) -> Matrix4<f64> {
    let SystemParams {
        epsilon0: e0,
        t0,
        omega_a: wa,
        t0a,
        omega_delta: wd,
    } = *params;
    // sz_q = diag(+,+,-,-), sz_a = diag(+,-,+,-) in the product order;
    // sx_q swaps the qubit blocks, sx_a swaps within each block.
    let mut h = Matrix4::zeros();
    for i in 0..4 {
        let sq = if i < 2 { 1.0 } else { -1.0 };
        let sa = if i % 2 == 0 { 1.0 } else { -1.0 };
        h[(i, i)] = 0.5 * (e0 * sq + wa * sa + wd * sq * sa);
    }
    h[(0, 2)] = 0.5 * t0;
    h[(2, 0)] = 0.5 * t0;
    h[(1, 3)] = 0.5 * t0;
    h[(3, 1)] = 0.5 * t0;
    h[(0, 1)] = 0.5 * t0a;
    h[(1, 0)] = 0.5 * t0a;
    h[(2, 3)] = 0.5 * t0a;
    h[(3, 2)] = 0.5 * t0a;
    h
}

/// Closed-form dressed spectrum of the storage configuration.
///
/// The doublet splittings are `w_q = sqrt((eps0 - wD)^2 + t0^2)` and
/// `w_q_bar = sqrt((eps0 + wD)^2 + t0^2)`; the four levels are
/// `-wa/2 -+ w_q/2` and `+wa/2 -+ w_q_bar/2`; the conditional ETLS
/// transition frequencies are `wa -+ (w_q_bar - w_q)/2`.
///
/// # Errors
/// Rejects `t0a != 0`: with ETLS tunneling the eigenstates are no longer
/// labeled by the ETLS index and these formulas do not apply.
pub fn dressed_spectrum(params: &SystemParams) -> Result<DressedSpectrum, ModelError> {
    if params.t0a != 0.0 {
        return Err(ModelError::EtlsTunneling(params.t0a));
    }
    let e0 = params.epsilon0;
    let t0 = params.t0;
    let wa = params.omega_a;
    let wd = params.omega_delta;
    let omega_q = ((e0 - wd).powi(2) + t0 * t0).sqrt();
    let omega_q_bar = ((e0 + wd).powi(2) + t0 * t0).sqrt();
    // atan2 puts both angles in [0, pi) since t0 >= 0.
    let theta = t0.atan2(e0 - wd);
    let theta_bar = t0.atan2(e0 + wd);
    let levels = [
        -0.5 * wa - 0.5 * omega_q,
        -0.5 * wa + 0.5 * omega_q,
        0.5 * wa - 0.5 * omega_q_bar,
        0.5 * wa + 0.5 * omega_q_bar,
    ];
    let half_diff = 0.5 * (omega_q_bar - omega_q);
    Ok(DressedSpectrum {
        omega_q,
        omega_q_bar,
        theta,
        theta_bar,
        levels,
        f_cond_q0: wa - half_diff,
        f_cond_q1: wa + half_diff,
    })
}

/// The four dressed eigenstates (|0_q 0_a>, |1_q 0_a>, |0bar_q 1_a>,
/// |1bar_q 1_a>), each a unit eigenvector of [`build_hamiltonian`] with the
/// matching entry of [`DressedSpectrum::levels`].
///
/// The qubit factors are real 2-vectors in the (up_q, dn_q) basis:
/// |0> = [-sin(th/2), cos(th/2)]^T and |1> = [cos(th/2), sin(th/2)]^T with
/// th the branch's mixing angle.
///
/// # Errors
/// As [`dressed_spectrum`].
pub fn dressed_states(params: &SystemParams) -> Result<[JointState; 4], ModelError> {
    let spec = dressed_spectrum(params)?;
    let build = |qubit: [f64; 2], etls_up: bool| {
        let mut v = Vector4::zeros();
        let a = if etls_up { 0 } else { 1 };
        v[a] = C64::new(qubit[0], 0.0);
        v[2 + a] = C64::new(qubit[1], 0.0);
        JointState::from_vector_unchecked(v)
    };
    let (th, thb) = (spec.theta, spec.theta_bar);
    let q0 = [-(0.5 * th).sin(), (0.5 * th).cos()];
    let q1 = [(0.5 * th).cos(), (0.5 * th).sin()];
    let q0b = [-(0.5 * thb).sin(), (0.5 * thb).cos()];
    let q1b = [(0.5 * thb).cos(), (0.5 * thb).sin()];
    Ok([
        build(q0, false),
        build(q1, false),
        build(q0b, true),
        build(q1b, true),
    ])
}

/// Overlap `<0_q|1bar_q> = sin((theta_bar - theta)/2)` between the
/// ETLS-ground qubit ground state and the ETLS-excited qubit excited state.
///
/// This is the quantity that sets the residual coherence of the ETLS after
/// the entanglement pulse; it vanishes when the two branches share a mixing
/// angle (`wD = 0`).
pub fn qubit_overlap(spectrum: &DressedSpectrum) -> f64 {
    (0.5 * (spectrum.theta_bar - spectrum.theta)).sin()
}
