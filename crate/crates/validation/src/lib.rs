//! Holds the `acceptance` test target only. Run it with
//! `cargo test -p disparity-validation --test acceptance`.
