//! rf-SQUID circuit model: the double-well phase potential, a 1-D
//! finite-difference eigensolver, identification of the effective two-level
//! system, and the displaced-oscillator overlap governing the older readout
//! scheme.
//!
//! The loop is described in the phase basis by
//!
//! ```text
//! H = 4 E_C (-d^2/dphi^2) + E_L (phi - phi_ext)^2 / 2 - E_J cos(phi)
//! ```
//!
//! with `phi_ext = 2 pi f_rf` and the three energies derived from the circuit
//! values: `E_J = Ic Phi0 / (2 pi h)`, `E_C = e^2 / (2 C_J h)`,
//! `E_L = (Phi0 / 2 pi)^2 / (L h)`. For `beta_L = E_J / E_L > 1` and a bias
//! near half a flux quantum the potential is a double well, and the two
//! wells carry opposite circulating currents. Everything in this module works
//! in linear GHz (energies divided by h), not angular units: the circuit
//! formulas and published device figures are conventionally quoted that way,
//! and nothing here is ever fed to the time-domain propagators directly.
//!
//! The eigensolver discretizes on a uniform grid (central second difference,
//! Dirichlet walls) and extracts the lowest levels of the symmetric
//! tridiagonal matrix by Sturm-count bisection plus shifted inverse
//! iteration. Every solve re-runs itself on a doubled grid and fails loudly
//! if any requested level moves by 0.1 GHz or more, so a too-coarse grid is
//! an error carrying both results rather than a silent bias.

use thiserror::Error;

/// Magnetic flux quantum h/2e (Wb).
pub const PHI0_WB: f64 = 2.067833848e-15;
const PLANCK_JS: f64 = 6.62607015e-34;
const ECHARGE_C: f64 = 1.602176634e-19;

/// Half-width of the solver's phase domain around `2 pi f_rf` (rad). Wide
/// enough that the Dirichlet walls sit far above every computed level (the
/// wall shift is below 1e-8 GHz), narrow enough that the default 4001-point
/// grid passes the built-in refinement check.
const DOMAIN_HALF_WIDTH: f64 = 1.25 * std::f64::consts::PI;

/// Energy shift (GHz) allowed between a grid and its halved-spacing
/// refinement before the solve is rejected as unconverged.
const CONVERGENCE_LIMIT_GHZ: f64 = 0.1;

/// Errors from the circuit model and eigensolver.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SquidError {
    #[error("invalid SQUID parameters: {0}")]
    InvalidParams(&'static str),
    #[error("phase grid needs at least {need} points, got {got}")]
    GridTooSmall { need: usize, got: usize },
    #[error(
        "phase grid [{lo:.4}, {hi:.4}] rad does not cover both wells \
         (need at least [{need_lo:.4}, {need_hi:.4}])"
    )]
    GridNotCovering {
        lo: f64,
        hi: f64,
        need_lo: f64,
        need_hi: f64,
    },
    #[error(
        "eigensolver not grid-converged: refining {coarse_points} -> {fine_points} points \
         moves level {worst_level} from {coarse_energy:.4} to {fine_energy:.4} GHz \
         (shift {worst_shift:.4}, limit {CONVERGENCE_LIMIT_GHZ}); both spectra attached"
    )]
    NotConverged {
        coarse_points: usize,
        fine_points: usize,
        worst_level: usize,
        worst_shift: f64,
        coarse_energy: f64,
        fine_energy: f64,
        coarse_energies: Vec<f64>,
        fine_energies: Vec<f64>,
    },
    #[error("potential has {0} local minima on the grid, expected a double well")]
    NotDoubleWell(usize),
    #[error(
        "no opposite-well localized pair among {n_levels} levels: \
         {n_left} left-localized, {n_right} right-localized"
    )]
    NoLocalizedPair {
        n_levels: usize,
        n_left: usize,
        n_right: usize,
    },
    #[error("invalid overlap argument: {0}")]
    InvalidOverlap(&'static str),
}

/// rf-SQUID circuit values in laboratory units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SquidParams {
    /// Loop inductance (pH).
    pub l_ph: f64,
    /// Junction critical current (uA). Zero is allowed (no junction).
    pub ic_ua: f64,
    /// Junction capacitance (fF).
    pub cj_ff: f64,
    /// Flux bias in units of Phi0.
    pub f_rf: f64,
}

impl SquidParams {
    pub fn new(l_ph: f64, ic_ua: f64, cj_ff: f64, f_rf: f64) -> Result<Self, SquidError> {
        let all_finite =
            l_ph.is_finite() && ic_ua.is_finite() && cj_ff.is_finite() && f_rf.is_finite();
        if !all_finite {
            return Err(SquidError::InvalidParams("all fields must be finite"));
        }
        if !(l_ph > 0.0) || !(cj_ff > 0.0) {
            return Err(SquidError::InvalidParams(
                "inductance and capacitance must be positive",
            ));
        }
        if !(ic_ua >= 0.0) {
            return Err(SquidError::InvalidParams(
                "critical current must be nonnegative",
            ));
        }
        if !(f_rf > 0.0) {
            return Err(SquidError::InvalidParams("flux bias must be positive"));
        }
        Ok(Self {
            l_ph,
            ic_ua,
            cj_ff,
            f_rf,
        })
    }

    /// The circuit studied throughout: 154 pH, 4 uA, 40 fF, biased at
    /// f_rf = 0.4365.
    pub fn reference() -> Self {
        Self::new(154.0, 4.0, 40.0, 0.4365).expect("reference values are valid")
    }

    /// External phase bias `2 pi f_rf` (rad).
    pub fn phi_ext(&self) -> f64 {
        std::f64::consts::TAU * self.f_rf
    }
}

impl Default for SquidParams {
    fn default() -> Self {
        Self::reference()
    }
}

/// Circuit energy scales (linear GHz) and the screening parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedEnergies {
    pub e_j_ghz: f64,
    pub e_c_ghz: f64,
    pub e_l_ghz: f64,
    /// `2 pi L Ic / Phi0 = E_J / E_L`; a double well requires > 1.
    pub beta_l: f64,
}

/// Converts the circuit values to Josephson, charging, and inductive
/// energies.
pub fn derived_energies(params: &SquidParams) -> DerivedEnergies {
    let l = params.l_ph * 1e-12;
    let ic = params.ic_ua * 1e-6;
    let cj = params.cj_ff * 1e-15;
    let e_j = ic * PHI0_WB / (std::f64::consts::TAU * PLANCK_JS) / 1e9;
    let e_c = ECHARGE_C * ECHARGE_C / (2.0 * cj * PLANCK_JS) / 1e9;
    let e_l = (PHI0_WB / std::f64::consts::TAU).powi(2) / (l * PLANCK_JS) / 1e9;
    DerivedEnergies {
        e_j_ghz: e_j,
        e_c_ghz: e_c,
        e_l_ghz: e_l,
        beta_l: e_j / e_l,
    }
}

/// Uniform phase grid of `n` points centered on the bias point, covering
/// `phi_ext +- 1.25 pi`. Built symmetrically around the center so that a
/// symmetric potential is symmetric on the grid to machine precision.
pub fn phase_grid(f_rf: f64, n: usize) -> Vec<f64> {
    let center = std::f64::consts::TAU * f_rf;
    let m = (n - 1) / 2;
    let h = 2.0 * DOMAIN_HALF_WIDTH / (n - 1) as f64;
    (0..n)
        .map(|j| center + (j as f64 - m as f64) * h)
        .collect()
}

/// Potential energy `E_L (phi - phi_ext)^2 / 2 - E_J cos(phi)` (GHz) on the
/// given grid.
///
/// # Errors
/// The grid must be dense enough to resolve the well structure (>= 1000
/// points) and must cover at least `phi_ext +- pi`, or both wells could be
/// cropped away silently.
pub fn potential(params: &SquidParams, grid: &[f64]) -> Result<Vec<f64>, SquidError> {
    if grid.len() < 1000 {
        return Err(SquidError::GridTooSmall {
            need: 1000,
            got: grid.len(),
        });
    }
    let pe = params.phi_ext();
    let (lo, hi) = (grid[0], *grid.last().expect("nonempty grid"));
    if lo > pe - std::f64::consts::PI || hi < pe + std::f64::consts::PI {
        return Err(SquidError::GridNotCovering {
            lo,
            hi,
            need_lo: pe - std::f64::consts::PI,
            need_hi: pe + std::f64::consts::PI,
        });
    }
    let en = derived_energies(params);
    Ok(grid
        .iter()
        .map(|&phi| 0.5 * en.e_l_ghz * (phi - pe).powi(2) - en.e_j_ghz * phi.cos())
        .collect())
}

/// Indices of strict interior local minima of a grid function.
pub fn local_minima(values: &[f64]) -> Vec<usize> {
    (1..values.len().saturating_sub(1))
        .filter(|&i| values[i] < values[i - 1] && values[i] < values[i + 1])
        .collect()
}

/// Lowest eigenpairs of the discretized circuit Hamiltonian.
#[derive(Debug, Clone)]
pub struct EigenSolution {
    /// Phase points (rad).
    pub grid: Vec<f64>,
    /// Eigenvalues (GHz), nondecreasing.
    pub energies: Vec<f64>,
    /// Real eigenfunctions, unit norm under the grid measure
    /// (`sum psi^2 * h = 1`), one inner Vec per level.
    pub wavefunctions: Vec<Vec<f64>>,
}

impl EigenSolution {
    fn spacing(&self) -> f64 {
        self.grid[1] - self.grid[0]
    }

    /// Expectation of the phase in level `k`.
    pub fn mean_phi(&self, k: usize) -> f64 {
        let h = self.spacing();
        self.grid
            .iter()
            .zip(self.wavefunctions[k].iter())
            .map(|(&phi, &psi)| phi * psi * psi * h)
            .sum()
    }

    /// Probability of level `k` on grid points with `phi < phi_cut`.
    pub fn mass_below(&self, k: usize, phi_cut: f64) -> f64 {
        let h = self.spacing();
        self.grid
            .iter()
            .zip(self.wavefunctions[k].iter())
            .filter(|(&phi, _)| phi < phi_cut)
            .map(|(_, &psi)| psi * psi * h)
            .sum()
    }
}

/// Circulating current of level `k` (uA): `(Phi0 / 2 pi) <phi - phi_ext> / L`.
pub fn circulating_current_ua(
    solution: &EigenSolution,
    k: usize,
    params: &SquidParams,
) -> f64 {
    let l = params.l_ph * 1e-12;
    (PHI0_WB / std::f64::consts::TAU) * (solution.mean_phi(k) - params.phi_ext()) / l * 1e6
}

// Symmetric tridiagonal eigensolver: Sturm bisection for eigenvalues by
// index, LU-with-pivoting inverse iteration for eigenvectors.

/// Number of eigenvalues of the tridiagonal (diag, off) strictly below `x`.
fn sturm_count(diag: &[f64], off: &[f64], x: f64, pivmin: f64) -> usize {
    let mut count = 0;
    let mut q = diag[0] - x;
    if q < 0.0 {
        count += 1;
    }
    for i in 1..diag.len() {
        let denom = if q.abs() < pivmin {
            if q < 0.0 {
                -pivmin
            } else {
                pivmin
            }
        } else {
            q
        };
        q = diag[i] - x - off[i - 1] * off[i - 1] / denom;
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

fn bisect_eigenvalue(diag: &[f64], off: &[f64], k: usize, lo0: f64, hi0: f64, pivmin: f64) -> f64 {
    let (mut lo, mut hi) = (lo0, hi0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(diag, off, mid, pivmin) > k {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 8.0 * f64::EPSILON * lo.abs().max(hi.abs()) + 1e-13 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Pivoted LU of `(T - lambda I)` for a symmetric tridiagonal `T`, following
/// the usual tridiagonal factorization with row swaps (one extra
/// superdiagonal of fill-in).
struct TriFactor {
    d: Vec<f64>,
    du: Vec<f64>,
    du2: Vec<f64>,
    dl: Vec<f64>,
    swapped: Vec<bool>,
}

impl TriFactor {
    fn new(diag: &[f64], off: &[f64], lambda: f64, pivmin: f64) -> Self {
        let n = diag.len();
        let mut d: Vec<f64> = diag.iter().map(|&x| x - lambda).collect();
        let mut du = off.to_vec();
        let mut dl = off.to_vec();
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut swapped = vec![false; n.saturating_sub(1)];
        for i in 0..n - 1 {
            if d[i].abs() >= dl[i].abs() {
                let pivot = if d[i].abs() < pivmin {
                    if d[i] < 0.0 {
                        -pivmin
                    } else {
                        pivmin
                    }
                } else {
                    d[i]
                };
                let fact = dl[i] / pivot;
                dl[i] = fact;
                d[i + 1] -= fact * du[i];
            } else {
                let fact = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = fact;
                let tmp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = tmp - fact * d[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] = -fact * du[i + 1];
                }
                swapped[i] = true;
            }
        }
        Self {
            d,
            du,
            du2,
            dl,
            swapped,
        }
    }

    fn solve(&self, b: &mut [f64], pivmin: f64) {
        let n = b.len();
        for i in 0..n - 1 {
            if self.swapped[i] {
                b.swap(i, i + 1);
            }
            b[i + 1] -= self.dl[i] * b[i];
        }
        let guard = |x: f64| {
            if x.abs() < pivmin {
                if x < 0.0 {
                    -pivmin
                } else {
                    pivmin
                }
            } else {
                x
            }
        };
        b[n - 1] /= guard(self.d[n - 1]);
        if n >= 2 {
            b[n - 2] = (b[n - 2] - self.du[n - 2] * b[n - 1]) / guard(self.d[n - 2]);
        }
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - self.du[i] * b[i + 1] - self.du2[i] * b[i + 2]) / guard(self.d[i]);
        }
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
    norm
}

fn orthogonalize_against(v: &mut [f64], others: &[&[f64]]) {
    for o in others {
        let proj: f64 = v.iter().zip(o.iter()).map(|(a, b)| a * b).sum();
        for (x, y) in v.iter_mut().zip(o.iter()) {
            *x -= proj * y;
        }
    }
}

/// Gaps below this (GHz) are treated as one numerically degenerate cluster,
/// both for re-orthogonalization during inverse iteration and for the final
/// basis rotation. Physical gaps in this problem are of order GHz; tunneling
/// splittings of deep symmetric doublets are many orders below this.
const CLUSTER_TOL_GHZ: f64 = 1e-4;

fn solve_on_grid(
    params: &SquidParams,
    n_points: usize,
    n_levels: usize,
) -> Result<(Vec<f64>, Vec<f64>, Vec<Vec<f64>>), SquidError> {
    let grid = phase_grid(params.f_rf, n_points);
    let u = potential(params, &grid)?;
    let h = grid[1] - grid[0];
    let en = derived_energies(params);
    let kin = 4.0 * en.e_c_ghz / (h * h);
    let diag: Vec<f64> = u.iter().map(|&ui| 2.0 * kin + ui).collect();
    let off = vec![-kin; n_points - 1];

    // Gershgorin interval and the pivot floor.
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n_points {
        let r = if i == 0 || i == n_points - 1 {
            kin
        } else {
            2.0 * kin
        };
        lo = lo.min(diag[i] - r);
        hi = hi.max(diag[i] + r);
    }
    let pivmin = f64::EPSILON * f64::EPSILON * hi.abs().max(lo.abs()).max(1.0);

    let mut energies = Vec::with_capacity(n_levels);
    for k in 0..n_levels {
        energies.push(bisect_eigenvalue(&diag, &off, k, lo, hi, pivmin));
    }

    // Inverse iteration, orthogonalizing within near-degenerate clusters.
    let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(n_levels);
    for k in 0..n_levels {
        let mut cluster_start = k;
        while cluster_start > 0 && energies[k] - energies[cluster_start - 1] < CLUSTER_TOL_GHZ {
            cluster_start -= 1;
        }
        let shift = energies[k] * (1.0 + 4.0 * f64::EPSILON) + 1e-12;
        let factor = TriFactor::new(&diag, &off, shift, pivmin);
        let mut v = vec![0.0; n_points];
        let mut converged = false;
        for attempt in 0..3 {
            // Deterministic starts; later attempts break symmetries the
            // earlier ones may be orthogonal to.
            let mut state = 0x9e3779b97f4a7c15u64.wrapping_add(attempt as u64);
            for (i, x) in v.iter_mut().enumerate() {
                *x = match attempt {
                    0 => 1.0,
                    1 => {
                        if i % 2 == 0 {
                            1.0
                        } else {
                            -1.0
                        }
                    }
                    _ => {
                        state = state
                            .wrapping_mul(6364136223846793005)
                            .wrapping_add(1442695040888963407);
                        (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
                    }
                };
            }
            normalize(&mut v);
            for _ in 0..4 {
                factor.solve(&mut v, pivmin);
                let prior: Vec<&[f64]> = (cluster_start..k).map(|j| vectors[j].as_slice()).collect();
                orthogonalize_against(&mut v, &prior);
                if normalize(&mut v) == 0.0 {
                    break;
                }
                converged = true;
            }
            if converged {
                break;
            }
        }
        vectors.push(v);
    }

    // Within a degenerate cluster any orthonormal basis solves the
    // eigenproblem; fix the convention by diagonalizing the position
    // operator there, which prefers well-localized combinations and makes
    // the output deterministic.
    let mut k = 0;
    while k + 1 < n_levels {
        if energies[k + 1] - energies[k] < CLUSTER_TOL_GHZ {
            let (a, b) = {
                let (first, second) = vectors.split_at_mut(k + 1);
                (&mut first[k], &mut second[0])
            };
            let mut paa = 0.0;
            let mut pbb = 0.0;
            let mut pab = 0.0;
            for i in 0..n_points {
                paa += grid[i] * a[i] * a[i];
                pbb += grid[i] * b[i] * b[i];
                pab += grid[i] * a[i] * b[i];
            }
            let theta = 0.5 * (2.0 * pab).atan2(paa - pbb);
            let (s, c) = theta.sin_cos();
            for i in 0..n_points {
                let (ai, bi) = (a[i], b[i]);
                a[i] = c * ai + s * bi;
                b[i] = -s * ai + c * bi;
            }
            // Left-well state first.
            let mean_a: f64 = (0..n_points).map(|i| grid[i] * a[i] * a[i]).sum();
            let mean_b: f64 = (0..n_points).map(|i| grid[i] * b[i] * b[i]).sum();
            if mean_a > mean_b {
                std::mem::swap(a, b);
            }
            k += 2;
        } else {
            k += 1;
        }
    }

    // Sign convention and grid-measure normalization.
    let sqrt_h = h.sqrt();
    for v in vectors.iter_mut() {
        let peak = v.iter().fold(0.0_f64, |m, &x| m.max(x.abs()));
        if let Some(first) = v.iter().find(|&&x| x.abs() > 1e-3 * peak) {
            if *first < 0.0 {
                for x in v.iter_mut() {
                    *x = -*x;
                }
            }
        }
        for x in v.iter_mut() {
            *x /= sqrt_h;
        }
    }

    Ok((grid, energies, vectors))
}

/// Solves for the lowest `n_levels` eigenpairs on a uniform `grid_points`
/// grid, verifying grid convergence by re-solving with halved spacing.
///
/// # Errors
/// [`SquidError::NotConverged`] (carrying both spectra) when any level moves
/// by 0.1 GHz or more under refinement; grid guards as in [`potential`].
pub fn solve_spectrum(
    params: &SquidParams,
    grid_points: usize,
    n_levels: usize,
) -> Result<EigenSolution, SquidError> {
    if n_levels == 0 {
        return Err(SquidError::InvalidParams("n_levels must be >= 1"));
    }
    if grid_points < 1000 {
        return Err(SquidError::GridTooSmall {
            need: 1000,
            got: grid_points,
        });
    }
    if n_levels * 4 > grid_points {
        return Err(SquidError::InvalidParams(
            "n_levels too large for the grid",
        ));
    }
    let (grid, energies, wavefunctions) = solve_on_grid(params, grid_points, n_levels)?;
    let fine_points = 2 * grid_points - 1;
    let (_, fine_energies, _) = solve_on_grid(params, fine_points, n_levels)?;
    let (mut worst_level, mut worst_shift) = (0, 0.0);
    for (k, (&c, &f)) in energies.iter().zip(fine_energies.iter()).enumerate() {
        let shift = (c - f).abs();
        if shift > worst_shift {
            worst_shift = shift;
            worst_level = k;
        }
    }
    if worst_shift >= CONVERGENCE_LIMIT_GHZ {
        return Err(SquidError::NotConverged {
            coarse_points: grid_points,
            fine_points,
            worst_level,
            worst_shift,
            coarse_energy: energies[worst_level],
            fine_energy: fine_energies[worst_level],
            coarse_energies: energies,
            fine_energies,
        });
    }
    Ok(EigenSolution {
        grid,
        energies,
        wavefunctions,
    })
}

/// A localized opposite-well pair: the candidate effective two-level system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EtlsCharacterization {
    /// Level index of the left-well state (`<phi>` below the bias point).
    pub left_index: usize,
    /// Level index of the right-well state.
    pub right_index: usize,
    /// Circulating currents of the two states (uA).
    pub current_left_ua: f64,
    pub current_right_ua: f64,
    /// In-well probability of each state (localization quality).
    pub localization_left: f64,
    pub localization_right: f64,
    /// `|<I>_right - <I>_left|` (uA).
    pub delta_i_ua: f64,
    /// Flux difference `delta_i * L` in units of Phi0.
    pub delta_phi_phi0: f64,
    /// Minimum gap (GHz) from either chosen level to any other computed
    /// level, the pair partner excluded.
    pub isolation_ghz: f64,
}

/// Phase of the barrier top: the potential's local maximum between the two
/// wells.
///
/// # Errors
/// [`SquidError::NotDoubleWell`] when the potential does not have exactly
/// two minima on the grid; grid guards as in [`potential`].
pub fn barrier_phase(params: &SquidParams, grid: &[f64]) -> Result<f64, SquidError> {
    let u = potential(params, grid)?;
    let minima = local_minima(&u);
    if minima.len() != 2 {
        return Err(SquidError::NotDoubleWell(minima.len()));
    }
    let barrier_idx = (minima[0]..=minima[1])
        .max_by(|&a, &b| u[a].total_cmp(&u[b]))
        .expect("nonempty well segment");
    Ok(grid[barrier_idx])
}

/// All localized opposite-well pairs in the solution, sorted by isolation,
/// best first.
///
/// A state belongs to the left well when `<phi>` lies below the bias point
/// `2 pi f_rf`, and counts as localized when at least 90% of its probability
/// sits on that state's side of the barrier top (the potential's local
/// maximum between the wells).
///
/// # Errors
/// [`SquidError::NotDoubleWell`] when the potential does not have exactly two
/// minima on the grid; [`SquidError::NoLocalizedPair`] (naming the well
/// occupancies) when no opposite-well pair exists.
pub fn localized_pairs(
    solution: &EigenSolution,
    params: &SquidParams,
) -> Result<Vec<EtlsCharacterization>, SquidError> {
    let phi_barrier = barrier_phase(params, &solution.grid)?;
    let pe = params.phi_ext();

    let n_levels = solution.energies.len();
    let mut left = Vec::new();
    let mut right = Vec::new();
    for k in 0..n_levels {
        let mass_left = solution.mass_below(k, phi_barrier);
        let mean = solution.mean_phi(k);
        if mass_left >= 0.9 && mean < pe {
            left.push((k, mass_left));
        } else if mass_left <= 0.1 && mean > pe {
            right.push((k, 1.0 - mass_left));
        }
    }
    if left.is_empty() || right.is_empty() {
        return Err(SquidError::NoLocalizedPair {
            n_levels,
            n_left: left.len(),
            n_right: right.len(),
        });
    }

    let l_henry = params.l_ph * 1e-12;
    let mut pairs = Vec::with_capacity(left.len() * right.len());
    for &(a, loc_a) in &left {
        for &(b, loc_b) in &right {
            let i_a = circulating_current_ua(solution, a, params);
            let i_b = circulating_current_ua(solution, b, params);
            let delta_i = (i_b - i_a).abs();
            let isolation = solution
                .energies
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != a && k != b)
                .map(|(_, &e)| (e - solution.energies[a]).abs().min((e - solution.energies[b]).abs()))
                .fold(f64::INFINITY, f64::min);
            pairs.push(EtlsCharacterization {
                left_index: a,
                right_index: b,
                current_left_ua: i_a,
                current_right_ua: i_b,
                localization_left: loc_a,
                localization_right: loc_b,
                delta_i_ua: delta_i,
                delta_phi_phi0: delta_i * 1e-6 * l_henry / PHI0_WB,
                isolation_ghz: isolation,
            });
        }
    }
    pairs.sort_by(|p, q| q.isolation_ghz.total_cmp(&p.isolation_ghz));
    Ok(pairs)
}

/// The effective two-level system: the localized opposite-well pair with the
/// largest isolation from all other computed levels.
pub fn characterize_etls(
    solution: &EigenSolution,
    params: &SquidParams,
) -> Result<EtlsCharacterization, SquidError> {
    Ok(localized_pairs(solution, params)?[0])
}

/// Ground-state overlap of two oscillators displaced by `+-delta_phi0`:
/// `exp(-delta_phi0^2 / (2 var_phi))`, the figure of merit of the older
/// always-coupled readout (an overlap near 1 means the detector barely
/// distinguishes the two displaced vacua per shot).
///
/// # Errors
/// Rejects `var_phi <= 0` and non-finite inputs.
pub fn displaced_ground_overlap(delta_phi0: f64, var_phi: f64) -> Result<f64, SquidError> {
    if !delta_phi0.is_finite() || !var_phi.is_finite() {
        return Err(SquidError::InvalidOverlap("arguments must be finite"));
    }
    if !(var_phi > 0.0) {
        return Err(SquidError::InvalidOverlap("variance must be positive"));
    }
    Ok((-delta_phi0 * delta_phi0 / (2.0 * var_phi)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn derived_energies_reference_values() {
        let en = derived_energies(&SquidParams::reference());
        assert_relative_eq!(en.e_j_ghz, 1986.7340426628896, max_relative = 1e-12);
        assert_relative_eq!(en.e_c_ghz, 0.484255733116478, max_relative = 1e-12);
        assert_relative_eq!(en.e_l_ghz, 1061.4383943750029, max_relative = 1e-12);
        assert_relative_eq!(en.beta_l, 1.8717374962045914, max_relative = 1e-12);
        assert!((en.beta_l - 1.87).abs() <= 0.01);
        let ratio = en.e_j_ghz / en.e_c_ghz;
        assert!((3600.0..=4600.0).contains(&ratio), "E_J/E_C = {ratio}");
    }

    #[test]
    fn zero_critical_current_has_no_josephson_energy() {
        let params = SquidParams::new(154.0, 0.0, 40.0, 0.4365).unwrap();
        let en = derived_energies(&params);
        assert_eq!(en.e_j_ghz, 0.0);
        assert_eq!(en.beta_l, 0.0);
    }

    #[test]
    fn potential_reduces_to_parabola_without_junction() {
        let params = SquidParams::new(154.0, 0.0, 40.0, 0.4365).unwrap();
        let grid = phase_grid(params.f_rf, 2001);
        let u = potential(&params, &grid).unwrap();
        let en = derived_energies(&params);
        let pe = params.phi_ext();
        let scale = u.iter().fold(0.0_f64, |m, &x| m.max(x.abs()));
        for (&phi, &ui) in grid.iter().zip(u.iter()) {
            let parabola = 0.5 * en.e_l_ghz * (phi - pe).powi(2);
            assert!((ui - parabola).abs() <= 1e-12 * scale);
        }
        assert_eq!(local_minima(&u).len(), 1);
    }

    #[test]
    fn potential_is_symmetric_at_half_flux() {
        let params = SquidParams::new(154.0, 4.0, 40.0, 0.5).unwrap();
        let grid = phase_grid(0.5, 4001);
        let u = potential(&params, &grid).unwrap();
        let n = grid.len();
        let scale = u.iter().fold(0.0_f64, |m, &x| m.max(x.abs()));
        for i in 0..n {
            let diff = (u[i] - u[n - 1 - i]).abs();
            assert!(diff <= 1e-12 * scale, "asymmetry {diff} at index {i}");
        }
    }

    #[test]
    fn reference_bias_gives_asymmetric_double_well() {
        let params = SquidParams::reference();
        let grid = phase_grid(params.f_rf, 4001);
        let u = potential(&params, &grid).unwrap();
        let minima = local_minima(&u);
        assert_eq!(minima.len(), 2, "minima at {minima:?}");
        let depth_gap = (u[minima[0]] - u[minima[1]]).abs();
        assert!(depth_gap > 100.0, "wells suspiciously symmetric: {depth_gap}");
    }

    #[test]
    fn potential_guards_reject_bad_grids() {
        let params = SquidParams::reference();
        let err = potential(&params, &phase_grid(params.f_rf, 200)).unwrap_err();
        assert!(matches!(err, SquidError::GridTooSmall { .. }));

        let pe = params.phi_ext();
        let narrow: Vec<f64> = (0..1500)
            .map(|j| pe - 1.0 + 2.0 * j as f64 / 1499.0)
            .collect();
        let err = potential(&params, &narrow).unwrap_err();
        assert!(matches!(err, SquidError::GridNotCovering { .. }));
    }

    #[test]
    fn harmonic_limit_matches_lc_frequency() {
        let params = SquidParams::new(154.0, 0.0, 40.0, 0.4365).unwrap();
        let sol = solve_spectrum(&params, 4001, 10).unwrap();
        let f_lc = 64.12535399080092;
        for w in sol.energies.windows(2) {
            let spacing = w[1] - w[0];
            assert!(
                (spacing - f_lc).abs() <= 1e-3 * f_lc,
                "spacing {spacing} vs {f_lc}"
            );
        }
    }

    #[test]
    fn wavefunctions_are_orthonormal_and_oscillatory() {
        let params = SquidParams::reference();
        let sol = solve_spectrum(&params, 4001, 26).unwrap();
        let h = sol.grid[1] - sol.grid[0];
        for a in 0..26 {
            for b in a..26 {
                let dot: f64 = sol.wavefunctions[a]
                    .iter()
                    .zip(sol.wavefunctions[b].iter())
                    .map(|(x, y)| x * y * h)
                    .sum();
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!(
                    (dot - expect).abs() <= 1e-8,
                    "<{a}|{b}> = {dot}"
                );
            }
        }
        // Sturm oscillation: level k changes sign exactly k times.
        for (k, psi) in sol.wavefunctions.iter().enumerate() {
            let peak = psi.iter().fold(0.0_f64, |m, &x| m.max(x.abs()));
            let mut nodes = 0;
            let mut last = 0.0_f64;
            for &x in psi.iter().filter(|&&x| x.abs() > 1e-8 * peak) {
                if last != 0.0 && x.signum() != last.signum() {
                    nodes += 1;
                }
                last = x;
            }
            assert_eq!(nodes, k, "level {k} has {nodes} nodes");
        }
        for w in sol.energies.windows(2) {
            assert!(w[1] >= w[0]);
        }
    }

    #[test]
    fn frozen_reference_levels() {
        let params = SquidParams::reference();
        let sol = solve_spectrum(&params, 4001, 26).unwrap();
        let expect = [
            (20, 2075.943196, -1.679103),
            (21, 2081.490188, 3.880978),
            (22, 2127.578450, -1.239494),
            (23, 2133.249951, 3.561843),
        ];
        for (k, e, i) in expect {
            assert!(
                (sol.energies[k] - e).abs() <= 1e-4,
                "E[{k}] = {} vs {e}",
                sol.energies[k]
            );
            let cur = circulating_current_ua(&sol, k, &params);
            assert!((cur - i).abs() <= 1e-4, "I[{k}] = {cur} vs {i}");
        }
    }

    #[test]
    fn etls_is_the_isolated_opposite_well_pair() {
        let params = SquidParams::reference();
        let sol = solve_spectrum(&params, 4001, 26).unwrap();
        let etls = characterize_etls(&sol, &params).unwrap();
        assert_eq!((etls.left_index, etls.right_index), (20, 21));
        assert!((etls.delta_i_ua - 5.560081).abs() <= 1e-4);
        assert!((etls.delta_phi_phi0 - 0.414082).abs() <= 1e-4);
        assert!((etls.isolation_ghz - 46.0883).abs() <= 1e-3);
        assert!(etls.localization_left >= 0.99 && etls.localization_right >= 0.99);
        // The current difference is of the order of the critical current.
        assert!((etls.delta_i_ua - 4.0).abs() <= 2.0);
        assert!(etls.isolation_ghz >= 40.0);
    }

    #[test]
    fn a_pair_with_flux_shift_in_band_exists() {
        let params = SquidParams::reference();
        let sol = solve_spectrum(&params, 4001, 26).unwrap();
        let pairs = localized_pairs(&sol, &params).unwrap();
        let in_band = pairs
            .iter()
            .find(|p| (0.2..=0.4).contains(&p.delta_phi_phi0))
            .expect("an in-band pair exists");
        assert_eq!((in_band.left_index, in_band.right_index), (22, 23));
        assert!((in_band.delta_phi_phi0 - 0.357575).abs() <= 1e-4);
        assert!((in_band.isolation_ghz - 35.2292).abs() <= 1e-3);
    }

    #[test]
    fn half_flux_pair_has_opposite_currents() {
        let params = SquidParams::new(154.0, 4.0, 40.0, 0.5).unwrap();
        let sol = solve_spectrum(&params, 4001, 8).unwrap();
        let etls = characterize_etls(&sol, &params).unwrap();
        let sum = etls.current_left_ua + etls.current_right_ua;
        assert!(
            sum.abs() <= 1e-6,
            "currents {} + {} = {sum}",
            etls.current_left_ua,
            etls.current_right_ua
        );
        assert!(etls.current_left_ua < 0.0 && etls.current_right_ua > 0.0);
    }

    #[test]
    fn too_coarse_grid_fails_with_both_spectra() {
        let params = SquidParams::reference();
        let err = solve_spectrum(&params, 1001, 26).unwrap_err();
        match err {
            SquidError::NotConverged {
                worst_shift,
                coarse_energies,
                fine_energies,
                ..
            } => {
                assert!(worst_shift >= CONVERGENCE_LIMIT_GHZ);
                assert_eq!(coarse_energies.len(), 26);
                assert_eq!(fine_energies.len(), 26);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn default_grid_is_converged() {
        // The companion check: the documented default passes the refinement
        // test for the full level set used elsewhere.
        let params = SquidParams::reference();
        assert!(solve_spectrum(&params, 4001, 26).is_ok());
    }

    #[test]
    fn displaced_overlap_closed_form_and_oracle() {
        assert_relative_eq!(
            displaced_ground_overlap(0.002, 0.01).unwrap(),
            0.9998000199986667,
            max_relative = 1e-12
        );
        assert_eq!(displaced_ground_overlap(0.0, 0.01).unwrap(), 1.0);
        assert!(matches!(
            displaced_ground_overlap(0.1, 0.0),
            Err(SquidError::InvalidOverlap(_))
        ));

        // Quadrature oracle: two unit-norm Gaussian ground states with
        // variance var, displaced to +-delta. Trapezoid on a wide grid
        // converges far past the 1e-10 requirement for these smooth
        // integrands.
        for (delta, var) in [(0.002, 0.01), (0.05, 0.01), (0.3, 0.04), (1.0, 0.25)] {
            let sd = f64::sqrt(var);
            let (lo, hi) = (-delta - 12.0 * sd, delta + 12.0 * sd);
            let n = 40_000;
            let h = (hi - lo) / n as f64;
            let norm = 1.0 / (2.0 * std::f64::consts::PI * var).sqrt();
            let mut integral = 0.0;
            for j in 0..=n {
                let x = lo + j as f64 * h;
                let f = norm
                    * (-((x - delta) * (x - delta) + (x + delta) * (x + delta)) / (4.0 * var))
                        .exp();
                integral += if j == 0 || j == n { 0.5 * f } else { f };
            }
            integral *= h;
            let closed = displaced_ground_overlap(delta, var).unwrap();
            assert!(
                (integral - closed).abs() <= 1e-10,
                "quadrature {integral} vs closed form {closed}"
            );
        }
    }

    #[test]
    fn overlap_is_a_probability_amplitude() {
        for k in 0..200 {
            let delta = -2.0 + 0.02 * k as f64;
            let var = 0.001 + 0.01 * (k % 17) as f64;
            let ov = displaced_ground_overlap(delta, var).unwrap();
            assert!((0.0..=1.0).contains(&ov));
        }
    }

    #[test]
    fn parameter_validation() {
        assert!(SquidParams::new(0.0, 4.0, 40.0, 0.4365).is_err());
        assert!(SquidParams::new(154.0, -1.0, 40.0, 0.4365).is_err());
        assert!(SquidParams::new(154.0, 4.0, 40.0, 0.0).is_err());
        assert!(SquidParams::new(154.0, 4.0, f64::NAN, 0.4365).is_err());
        assert!(solve_spectrum(&SquidParams::reference(), 4001, 0).is_err());
    }
}
