//! Host crate for the `acceptance` test target; it has no library code.
