//! Holds the `acceptance` test target, which runs the full-resolution
//! criteria after the faster suites.
