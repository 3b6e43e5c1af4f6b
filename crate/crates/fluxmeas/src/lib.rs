//! Desk-scale simulator for a switchable, projective measurement of a
//! persistent-current qubit through an rf-SQUID effective two-level system
//! (ETLS).
//!
//! The crate covers five physical layers and a batch front-end:
//!
//! - [`model`]: the coupled qubit-ETLS Hamiltonian, its dressed states, and
//!   the conditional transition frequencies that make the readout switchable.
//! - [`dynamics`]: full-carrier unitary time evolution, the conditional pi
//!   pulse that entangles qubit and ETLS, and leakage estimates.
//! - [`noise`]: classical Ornstein-Uhlenbeck flux noise on the ETLS, idle
//!   immunity of the stored qubit, ensemble dephasing, and T2 estimation.
//! - [`squid`]: the rf-SQUID circuit model behind the ETLS, a 1-D
//!   finite-difference eigensolver for its double-well potential, and the
//!   displaced-oscillator overlap analysis of the non-switchable readout it
//!   replaces.
//! - [`measurement`]: the post-pulse ETLS density matrix, projective readout,
//!   Gaussian switching-histogram phenomenology, and repetition-count
//!   estimators comparing the two readout schemes.
//! - [`cli`]: config-driven scenario runners with CSV/JSON reports, used by
//!   the `fluxmeas` binary.
//!
//! Conventions shared across the dynamics stack: hbar = 1, frequencies are
//! angular (rad/ns) internally with constructors accepting linear GHz/MHz,
//! and the joint basis order is (|up_q up_a>, |up_q dn_a>, |dn_q up_a>,
//! |dn_q dn_a>) with |0_a> the sz_a = -1 state. The [`squid`] module works in
//! linear GHz (E/h) instead; its docs say so.

pub mod cli;
pub mod config;
pub mod dynamics;
pub mod measurement;
pub mod model;
pub mod noise;
pub mod report;
pub mod squid;

/// Book chapters double as doc-tests so the guide's code stays compilable.
#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident, $path:literal) => {
            #[doc = include_str!($path)]
            mod $name {}
        };
    }
    chapter!(coupled_system, "../../../book/src/coupled-system.md");
    chapter!(entanglement_pulse, "../../../book/src/entanglement-pulse.md");
    chapter!(dephasing_noise, "../../../book/src/dephasing-noise.md");
    chapter!(rf_squid, "../../../book/src/rf-squid.md");
    chapter!(readout_statistics, "../../../book/src/readout-statistics.md");
}
