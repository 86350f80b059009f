//! CSV outputs. Every file is rendered in memory and written atomically, so
//! a reader sees either the previous file or the complete new one.

use std::path::Path;

use crate::error::IoError;
use crate::fsutil::write_atomic;

pub const RANK_CURVES_HEADER: &[&str] = &["kind", "p", "seed", "r", "epsilon"];
pub const RANK_SUMMARY_HEADER: &[&str] = &["kind", "p", "seed", "surrogate_rank", "saturated_fraction"];
pub const METRICS_HEADER: &[&str] = &[
    "variant",
    "kind",
    "p",
    "lambda",
    "seed",
    "epoch",
    "loss",
    "bce",
    "reg",
    "train_accuracy",
    "valid_accuracy",
    "valid_bce",
];
pub const RESULTS_HEADER: &[&str] = &["variant", "kind", "p", "lambda", "seed", "accuracy", "status"];
pub const SELECTION_HEADER: &[&str] = &[
    "kind",
    "p",
    "seed",
    "lambda",
    "valid_accuracy",
    "valid_bce",
    "accuracy",
];
pub const EVAL_HEADER: &[&str] = &["checkpoint", "split", "kind", "p", "seed", "accuracy"];

/// Renders a header and rows; fields must not contain commas or newlines.
pub fn render(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        debug_assert!(row.iter().all(|f| !f.contains([',', '\n'])));
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn write(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), IoError> {
    write_atomic(path, render(header, rows).as_bytes())
}

/// Shortest decimal that parses back to the same `f64`.
pub fn num(v: f64) -> String {
    format!("{v}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_layout() {
        let rows = vec![vec!["clean".into(), num(0.0), "1".into(), "2".into(), num(0.125)]];
        assert_eq!(
            render(RANK_CURVES_HEADER, &rows),
            "kind,p,seed,r,epsilon\nclean,0,1,2,0.125\n"
        );
    }
}
