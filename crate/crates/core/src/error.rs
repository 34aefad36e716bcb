use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    /// An argument or parameter outside its admissible domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A non-finite intermediate value. `study` is the offending index when known.
    #[error("numerical error{}: {msg}", study.map(|i| format!(" at study {i}")).unwrap_or_default())]
    Numerical { study: Option<usize>, msg: String },

    /// The nuisance block of the observed information is singular or not positive definite.
    #[error("degenerate information: {0}")]
    DegenerateInformation(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("singular design: {0}")]
    SingularDesign(String),

    #[error("trim-and-fill did not converge; k0 trajectory {trajectory:?}")]
    NonConvergence { trajectory: Vec<usize> },

    #[error("generation failed: {0}")]
    Generation(String),

    /// The test as a whole could not be carried out.
    #[error("test failed: {0}")]
    Test(String),
}

impl Error {
    pub(crate) fn numerical(study: usize, msg: impl Into<String>) -> Self {
        Error::Numerical {
            study: Some(study),
            msg: msg.into(),
        }
    }

    /// True for errors caused by the input data rather than by the numerics.
    pub fn is_data_error(&self) -> bool {
        matches!(self, Error::Domain(_))
    }
}
