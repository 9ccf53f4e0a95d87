//! Optimal frame-transmission scheduling for hierarchically predicted video.
//!
//! A video is a sequence of I/P/B frames whose prediction dependencies form a
//! DAG. Given a link of fixed capacity, the scheduler picks which frames to send
//! and in what order so that the summed quality of frames that are decodable by
//! their display deadline is maximal.
//!
//! The pipeline:
//!
//! 1. [`dag`] describes frames and their dependencies and generates dyadic
//!    `GnBm` structures.
//! 2. [`mbfs`] turns each GOP into a deadline-ordered tree and classifies the
//!    structure as SIO, quasi-SIO or neither.
//! 3. [`universal`] derives the universal transmission order; every canonical
//!    schedule is a subsequence of it.
//! 4. [`dp`] runs the dynamic program over that order and reconstructs an
//!    optimal schedule.
//!
//! [`sim`] replays any sequence over the link, [`baselines`] holds the EDF family
//! of heuristics, [`oracle`] is a brute-force optimum for small instances and
//! [`trace`] / [`sweep`] cover trace ingestion and capacity sweeps.

pub mod analysis;
pub mod baselines;
pub mod dag;
pub mod dp;
mod error;
pub mod mbfs;
pub mod oracle;
pub mod sim;
pub mod sweep;
pub mod trace;
pub mod units;
pub mod universal;

pub use analysis::Analysis;
pub use dag::{DependencyDag, Frame, FrameId, FrameKind, GopPartition, GopPattern};
pub use dp::{DpSolution, FrameStatus, LinkConfig};
pub use error::{Error, Result};
pub use mbfs::{ClassLabel, MbfsForest, Violation};
pub use units::Quality;
pub use universal::{TransmissionSequence, UniversalSequence};
