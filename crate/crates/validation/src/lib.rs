//! Holds the acceptance suite in `tests/acceptance.rs`; there is no library code.
//!
//! Kept as its own package so the suite runs after every other test binary in a
//! workspace run.
