use thiserror::Error;

/// Errors produced by mesh construction, metric building and the mesh solver.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("point {point:?} is outside the mesh")]
    PointNotFound { point: Vec<f64> },

    #[error("invalid mesh: element {element} is inverted or degenerate (det = {det:e})")]
    InvalidMesh { element: usize, det: f64 },

    #[error("barrier violated: det(J) = {det_j:e} <= 0{}", element_suffix(*.element))]
    Barrier { det_j: f64, element: Option<usize> },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("time step underflow at t = {t:e} (dt = {dt:e}){}", element_suffix(*.element))]
    Stall {
        t: f64,
        dt: f64,
        element: Option<usize>,
    },

    #[error("outer iteration {iteration}: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("unknown test function id {0}")]
    UnknownExample(u8),
}

fn element_suffix(element: Option<usize>) -> String {
    match element {
        Some(k) => format!(" in element {k}"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        Error::Iteration {
            iteration,
            source: Box::new(self),
        }
    }

    pub(crate) fn with_element(self, k: usize) -> Self {
        match self {
            Error::Barrier { det_j, element: None } => Error::Barrier {
                det_j,
                element: Some(k),
            },
            other => other,
        }
    }

    /// Element responsible for the failure, if one is known.
    pub fn element(&self) -> Option<usize> {
        match self {
            Error::InvalidMesh { element, .. } => Some(*element),
            Error::Barrier { element, .. } | Error::Stall { element, .. } => *element,
            Error::Iteration { source, .. } => source.element(),
            _ => None,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
