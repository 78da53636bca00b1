//! Holds the `acceptance` test target; run it with
//! `cargo test -p dipsqz-validation --test acceptance [-- <criterion ids>]`.
