use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    /// A state jet would need a derivative of `x_n`, which is the input.
    #[error("jet depth error: index {index} + order {order} exceeds system order {n}")]
    Depth {
        index: usize,
        order: usize,
        n: usize,
    },

    #[error("initially unsafe: x_1(t0) = {x1} must be negative")]
    InitiallyUnsafe { x1: f64 },

    #[error("degenerate barrier at stage {stage}: h_{stage}(t0) = {value:e}")]
    DegenerateBarrier { stage: usize, value: f64 },

    #[error("terminal value x_1(t0 + T) is required at t = {t}")]
    MissingTerminalCapture { t: f64 },

    #[error("unsupported system order {n}: {what}")]
    UnsupportedOrder { n: usize, what: &'static str },

    #[error("non-finite control at t = {t}, x = {x:?}")]
    Numeric { t: f64, x: Vec<f64> },

    /// The closed loop needs more RK4 substeps per grid step than allowed.
    #[error("closed loop too stiff at t = {t}: {required} substeps per step needed, at most {max} allowed")]
    TooStiff { t: f64, required: usize, max: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A scenario document failed to parse or validate; `path` names the key,
    /// e.g. `x0[0]` or `scenarios[1].filter.rho`, and is empty for syntax errors.
    #[error("invalid scenario document{}: {message}", if path.is_empty() { String::new() } else { format!(" at `{path}`") })]
    Parse { path: String, message: String },

    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}
