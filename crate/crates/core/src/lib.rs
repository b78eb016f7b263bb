//! Smoothed switching logic and indirect trajectory optimization for
//! autonomously switched hybrid systems.
//!
//! A multi-segment trajectory whose active segment is selected by boolean
//! conditions on the continuous state is turned into a single smooth system:
//! the conditions are normalized to disjunctive normal form and relaxed with
//! sigmoid/tanh functions ([`logic`]), the flight dynamics and path cost are
//! blended with the resulting weights ([`dynamics`], [`ocp`]), and the
//! optimality system is solved as a two-point boundary value problem by
//! collocation ([`bvp`]) under slope/boundary continuation ([`homotopy`]).
//! [`mission`] wires a config-described entry-descent-landing scenario
//! through the whole pipeline and [`toy`] carries a small switched problem
//! with a brute-force reference solver for validation.

pub mod bvp;
pub mod dynamics;
pub mod homotopy;
pub mod logic;
pub mod mission;
pub mod ocp;
pub mod scalar;
pub mod toy;
