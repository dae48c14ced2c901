//! Distributed learning of generative models as a cooperative game.
//!
//! Players hold private data and a generative model over a finite space.
//! Each round a player trains on a mix of its own data and synthetic samples
//! drawn from its peers' models, weighted by a row-stochastic matrix `alpha`.
//! The resulting game has a unique equilibrium in which every player's
//! distribution is a fixed mixture of all players' data;
//! [`equilibrium::solve_exact`] computes it and [`engine::run_game`] plays the
//! game with sampled exchanges.
//!
//! Peers exchange only sampled outcomes, through [`transport`], either in
//! process or over TCP. Players may live on different subsets of the
//! variables ([`hetero`]), learning from the overlaps via marginal
//! likelihoods.

#![allow(clippy::needless_range_loop)]

pub mod alpha;
pub mod batch;
pub mod config;
pub mod distribution;
pub mod engine;
pub mod equilibrium;
pub mod error;
pub mod hetero;
pub mod ingest;
pub mod model;
pub mod node;
pub mod runner;
pub mod space;
pub mod transport;
