//! Default numerical tolerances shared across modules.
//!
//! Every threshold used by solvers and validators is named here so that the
//! CLI can override them from one place and the test suites can reference the
//! same values the library enforces.

/// Unit-norm validation for face normals.
pub const UNIT_NORM: f64 = 1e-12;

/// Validation of the normalization `<d_i, n_i> = 1`.
pub const DIRECTION_NORMALIZATION: f64 = 1e-12;

/// Default face-activity tolerance for exact (non-sampled) inputs.
pub const ACTIVE_FACE: f64 = 1e-9;

/// Face-activity tolerance used by the time-stepping solver on its own
/// output. The projection maps place boundary coordinates at exact zeros, so
/// this only needs to absorb representation noise.
pub const SOLVER_ACTIVE_FACE: f64 = 1e-12;

/// Snapping tolerance for piecewise-linear running-max events.
pub const SNAP: f64 = 1e-12;

/// Projection-matrix identities (idempotence, range/complement residuals).
pub const PROJECTION: f64 = 1e-10;

/// Residual for expanding a vector in the span of active directions.
pub const SPAN_RESIDUAL: f64 = 1e-9;

/// Residual for nonnegative cone-membership checks of projection moves.
pub const CONE_RESIDUAL: f64 = 1e-9;

/// Per-step residual above which local-time decomposition is an error.
pub const DECOMPOSITION: f64 = 1e-6;

/// Local-time increments in `[-CLIP, 0)` are treated as floating-point noise.
pub const LOCAL_TIME_CLIP: f64 = 1e-9;

/// Pathwise identity checks of solver output (`Z = X + Y`, `Y = R L`).
pub const SOLUTION_IDENTITY: f64 = 1e-9;

/// Agreement required between successive difference-quotient estimates of
/// the projection derivative.
pub const PI_DERIVATIVE_AGREE: f64 = 1e-6;

/// Half-space membership slack used by the left-limit substitution rule.
pub const LEFT_LIMIT_MEMBERSHIP: f64 = 1e-9;

/// Condition-number guard for the oblique-projection solve.
pub const CONDITION_GUARD: f64 = 1e12;

/// Spectral radius via power iteration is refined to this accuracy.
pub const POWER_ITERATION: f64 = 1e-10;

/// Agreement between power iteration and a dense eigenvalue solve.
pub const EIGEN_CROSS_CHECK: f64 = 1e-8;

/// Rank decisions in subspace computations.
pub const RANK: f64 = 1e-9;

/// Largest face count accepted by boundary classification.
pub const MAX_ENUMERATED_FACES: usize = 12;
