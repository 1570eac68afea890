//! Slot-by-slot schedule builders for the unicast traffic pattern.
//!
//! Each builder returns a [`Schedule`]: the trace, a ledger with one batch
//! of `bulk` bits per source-destination pair, and the bulk size. Batches of
//! non-sessionized schemes depart at slot 0 and arrive when the last phase
//! ends; sessionized batches depart and arrive with their session.

mod session;
mod unicast;

pub use session::{build_session, build_session_hier};
pub use unicast::{build_h_level, build_modified_hier, build_three_phase};

use crate::analytic::{SchemeKind, SchemeParams};
use crate::cluster::Reuse;
use crate::error::{Error, Result};
use crate::netmodel::Network;
use crate::trace::Schedule;

/// How the decode phase of the sessionized three-phase scheme is sized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Phase3Budget {
    /// Exactly the slots the realized destination counts need.
    #[default]
    Realized,
    /// At least `Q·(M−1)·⌈log₂ n⌉` slots per cluster, the fixed allocation
    /// that covers the largest destination count with high probability.
    Reserved,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BuildOptions {
    pub reuse: Reuse,
    /// Deepest event level written to the trace.
    pub detail: u32,
    /// Restricted session variants (fewer active pairs per session).
    pub restricted: bool,
    pub budget: Phase3Budget,
    /// Mixed with the network seed for random session choices.
    pub seed: u64,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            reuse: Reuse::new(9).expect("9 is a perfect square"),
            detail: 1,
            restricted: false,
            budget: Phase3Budget::Realized,
            seed: 0,
        }
    }
}

impl BuildOptions {
    /// No spatial reuse, so slot counts match the closed forms.
    pub fn exact() -> Self {
        BuildOptions {
            reuse: Reuse::NONE,
            ..Self::default()
        }
    }
}

/// Bits held by the member at offset `r` when `k` bits are spread over `c`
/// members as evenly as possible.
pub(crate) fn share(k: u64, c: usize, r: usize) -> u64 {
    let c = c as u64;
    let r = r as u64;
    k / c + u64::from(r < k % c)
}

pub(crate) fn ceil_div(a: u64, b: u64) -> u64 {
    a.div_ceil(b)
}

/// Builds the schedule of `kind`. `params.sizes` holds the cluster sizes,
/// `params.h` the multiple-access depth of the modified hierarchy.
pub fn build(kind: SchemeKind, net: &Network, params: &SchemeParams, opts: &BuildOptions) -> Result<Schedule> {
    let need = match kind {
        SchemeKind::SessionHier => 2,
        _ => 1,
    };
    if params.sizes.len() < need {
        return Err(Error::InvalidParams(format!("{kind} needs {need} cluster size(s)")));
    }
    let m = params.sizes[0];
    match kind {
        SchemeKind::ThreePhase => build_three_phase(net, m, params.q, opts),
        SchemeKind::HLevel => build_h_level(net, &params.sizes, params.q, opts),
        SchemeKind::ModifiedHier => build_modified_hier(net, m, params.q, params.h, opts),
        SchemeKind::Session => build_session(net, m, params.q, opts),
        SchemeKind::SessionHier => {
            build_session_hier(net, m, params.sizes[1], params.q, params.h1, params.h2, opts)
        }
    }
}
