//! Holds the `acceptance` test target; there is no library code.
//!
//! It lives in its own package so that it runs after the unit and integration
//! tests of the other crates in a workspace test run.
