//! Brownian motion on a torus among nested semi-permeable membranes.
//!
//! A particle diffuses on the flat torus and interacts with the boundaries of
//! a family of nested (or disjoint) domains. Each boundary is a membrane that
//! lets the particle pass inward much more easily than outward: on contact the
//! particle jumps a small distance to the interior side with probability
//! `1/(1 + eps_k)` and to the exterior side with probability
//! `eps_k/(1 + eps_k)`, where `eps_k = eps^{a_k}` is the membrane
//! permeability. On time scales `t = eps^{-b}` the process is metastable: it
//! settles into a mixture of uniform distributions on the innermost domains,
//! and which mixture depends on the start point and on how `b` compares with
//! the escape-time exponents of the nesting hierarchy.
//!
//! The crate has three legs that check each other:
//!
//! * [`simulate`] — Monte Carlo engines for the jump-at-the-membrane process
//!   `X` and for the redistribution process `Y` (reflected Brownian motion
//!   with instantaneous uniform redistribution on collapsed boundaries).
//! * [`solve`] — deterministic hitting-probability solvers: exact
//!   piecewise-linear solutions in 1D, a finite-difference Laplace solver in
//!   2D, and a finite-permeability transmission solver used to validate the
//!   simulator.
//! * [`asymptotics`] + [`predictor`] — the symbolic side: chain and domain
//!   order exponents, trapping classification, and the inductive computation
//!   of the limiting mixture.
//!
//! [`verify`] ties the legs together with statistical experiments, and
//! [`scenes`] provides the canonical test geometries.

pub mod asymptotics;
pub mod geometry;
pub mod predictor;
pub mod scenes;
pub mod simulate;
pub mod solve;
pub mod verify;

pub use asymptotics::{Classification, ExponentQ};
pub use geometry::{ContainmentTree, Domain, Node, Point, Scene, Shape};
pub use predictor::{HittingDistribution, HittingQuery, MixtureMeasure, StartSpec};
