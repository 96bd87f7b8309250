//! Desk-scale simulator of a task-oriented semantic communication link.
//!
//! A toy masked-autoencoder codec ([`gjscc`]) is steered by an adaptive coding
//! controller ([`acc`]) that decides which image patches to send and at what
//! per-token rate, given a frozen downstream classifier ([`dataset`]), the
//! channel state and a delay budget. Frames cross AWGN or slow Rayleigh
//! fading channels ([`channel`]); the codec is trained in two stages
//! ([`training`]) against a weighted-region, feature and adversarial
//! objective ([`losses`]).

pub mod dataset;
pub mod layers;
pub mod numerics;
pub mod channel;
pub mod gjscc;
pub mod acc;
pub mod losses;
pub mod training;
pub mod cli;
