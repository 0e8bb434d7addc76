use thiserror::Error;

#[derive(Debug, Error)]
pub enum GapError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("W(t) numerically singular at t={t} (condition {cond:.3e})")]
    ConjugatePoint { t: f64, cond: f64 },
    #[error("Riccati solution blew up at t={0}")]
    RiccatiBlowUp(f64),
    #[error("resolution mismatch: {0}")]
    Resolution(String),
    #[error("eigensolver did not converge: {0}")]
    NoConvergence(String),
    #[error("domain box too small: outside mass {0:.3e}")]
    BoxTooSmall(f64),
    #[error("perturbed N blew up at eps={0}")]
    PerturbationBlowUp(f64),
    #[error("trial mode not certified: {0}")]
    NotCertified(String),
    #[error("acceptance rate {0:.3} outside [0.2, 0.6] after tuning")]
    AcceptanceWindow(f64),
}

impl GapError {
    /// True for errors caused by bad parameters rather than numerical trouble.
    pub fn is_input(&self) -> bool {
        matches!(self, GapError::InvalidInput(_))
    }
}

pub type Result<T> = std::result::Result<T, GapError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(GapError::InvalidInput(msg.into()))
}
