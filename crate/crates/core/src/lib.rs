//! Perfect sampling for perturbed finite-state interacting particle systems
//! on `Z^d`.
//!
//! The dynamics is a list of rules driven by a Poisson process of
//! `(site, rule, time)` events ([`field`]). A frontier map ([`theta`])
//! explores the past of a space-time point until its state no longer depends
//! on the initial configuration ([`exploration`]); perturbative events make
//! the exploration fork ([`locking`]) and the resulting ambiguities are
//! resolved recursively ([`assembler`]) into one exact draw of the
//! stationary marginal at a site.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod assembler;
pub mod diagnostics;
pub mod error;
pub mod event;
pub mod exploration;
pub mod field;
pub mod locking;
pub mod model;
pub mod oracle;
pub mod readout;
pub mod rng;
pub mod site;
pub mod theta;

pub use assembler::{sample_site, Caps, SampleFailure, SampleResult};
pub use error::{Budget, Error, Result};
pub use event::{Event, SpaceTime};
pub use field::EventField;
pub use model::{Model, PatchConfig, Rule, RuleKind, State, StateSpace};
pub use readout::Readout;
pub use site::{Site, SiteBox};
pub use theta::{Theta, ThetaMap};
