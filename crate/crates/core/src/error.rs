use thiserror::Error;

use crate::ParticleId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("box length {length} is smaller than one cell ({min_cell})")]
    Geometry { length: f64, min_cell: f64 },

    #[error("observable requested on an empty system")]
    EmptySystem,

    #[error("particles {0} and {1} overlap (zero separation)")]
    Overlap(ParticleId, ParticleId),

    #[error("bond {0}-{1} overstretched: r = {r} >= r_max = {r_max}", r = .2, r_max = .3)]
    BondOverstretch(ParticleId, ParticleId, f64, f64),

    #[error("degenerate angle: zero-length bond vector")]
    DegenerateAngle,

    #[error("particle {0} has a non-finite position")]
    NonFinitePosition(ParticleId),

    #[error("rebuild snapshot holds {snapshot} particles but the store holds {store}")]
    StaleSnapshot { snapshot: usize, store: usize },

    #[error("cannot split {dims:?} cells into {n_sub} subnodes")]
    Granularity { dims: [usize; 3], n_sub: usize },

    #[error("ghost plan is stale: {0}")]
    StalePlan(String),

    #[error("bonded partner {partner} of particle {owner} not found in the ghost shell")]
    MissingPartner { owner: ParticleId, partner: ParticleId },

    #[error("step {step}: {source}")]
    AtStep {
        step: u64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn at_step(self, step: u64) -> Self {
        match self {
            e @ Error::AtStep { .. } => e,
            e => Error::AtStep {
                step,
                source: Box::new(e),
            },
        }
    }

    /// The underlying error with any step context stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtStep { source, .. } => source.root(),
            e => e,
        }
    }

    /// Whether this is a physics failure (as opposed to a configuration problem).
    pub fn is_physics(&self) -> bool {
        matches!(
            self.root(),
            Error::Overlap(..)
                | Error::BondOverstretch(..)
                | Error::DegenerateAngle
                | Error::NonFinitePosition(_)
                | Error::MissingPartner { .. }
                | Error::StalePlan(_)
                | Error::StaleSnapshot { .. }
        )
    }
}
