use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("Zernike index {index} is not supported (maximum {max})")]
    UnsupportedIndex { index: usize, max: usize },

    #[error("ill-posed fit: {pupil_pixels} pupil pixels for {basis} basis functions")]
    IllPosedFit { pupil_pixels: usize, basis: usize },

    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("invalid {what}: {detail}")]
    Domain { what: &'static str, detail: String },

    #[error(
        "Fresnel transfer function aliases at |z| = {distance} m; \
         the padded grid supports at most {max_distance} m"
    )]
    SamplingViolation { distance: f64, max_distance: f64 },

    #[error("trajectory is not sorted by axial position (sample {index})")]
    UnsortedTrajectory { index: usize },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: pixel ({x}, {y}) outside {cols}x{rows} sensor")]
    OutOfBounds {
        line: usize,
        x: i64,
        y: i64,
        rows: usize,
        cols: usize,
    },

    #[error("line {line}: timestamp {t_us} us precedes {previous_us} us by more than the reorder tolerance")]
    TimestampRegression {
        line: usize,
        t_us: i64,
        previous_us: i64,
    },

    #[error("{found:?} derivative cannot be solved with the {solver} equation")]
    WrongDerivativeKind {
        found: crate::retrieval::DerivativeKind,
        solver: &'static str,
    },

    #[error("no reference phase available and no pinned regularization constant configured")]
    MissingRegularization,

    #[error("empty regularization candidate grid")]
    EmptyCandidateGrid,

    #[error("mask selects no pixels")]
    EmptyMask,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            what,
            detail: detail.into(),
        }
    }
}

pub(crate) fn ensure_same_shape(left: (usize, usize), right: (usize, usize)) -> Result<()> {
    if left == right {
        Ok(())
    } else {
        Err(Error::ShapeMismatch { left, right })
    }
}
