use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("backward seed must be a scalar, got {0} elements")]
    NonScalarSeed(usize),
    #[error("tape already consumed by a previous backward pass")]
    TapeConsumed,
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("atoms {0} and {1} are coincident")]
    CoincidentAtoms(usize, usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("species {species} out of range for a model with {species_count} species")]
    SpeciesOutOfRange { species: u32, species_count: u32 },
    #[error("empty edge list: isolated atoms are unsupported")]
    EmptyEdges,
    #[error("placement failed after {0} attempts")]
    PlacementFailed(usize),
    #[error("degenerate relevance: all raw block scores are zero")]
    DegenerateRelevance,
    #[error("embedding block is not removable")]
    EmbeddingNotRemovable,
    #[error("checkpoint tensor {name}: {detail}")]
    Manifest { name: String, detail: String },
    #[error("non-finite loss at step {0}")]
    NonFiniteLoss(usize),
    #[error("incompatible teacher/student: {0}")]
    Incompatible(String),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn invalid(detail: impl Into<String>) -> Self {
        Error::InvalidArgument(detail.into())
    }
}
