//! Plain-text bound tables: one column per level, a lower row and an
//! upper row.

use std::fmt::Write as _;

use nalgebra::DVector;
use rdo_core::BoundLedger;

const COLUMNS_PER_BLOCK: usize = 8;
const LOWER_LABEL: &str = "lower: min c^T x over S_r";
const UPPER_LABEL: &str = "upper: min c^T x over I_r";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rows {
    Lower,
    Upper,
    Both,
}

fn cell(v: Option<f64>) -> String {
    match v {
        None => "-".into(),
        Some(x) if x == f64::INFINITY => "inf".into(),
        Some(x) if x == f64::NEG_INFINITY => "-inf".into(),
        Some(x) => format!("{x:.4}"),
    }
}

/// The ledger as a table, split into blocks of eight levels.
pub fn bound_table(ledger: &BoundLedger, rows: Rows) -> String {
    let label_w = LOWER_LABEL.len();
    let mut out = String::new();
    for block in ledger.rows.chunks(COLUMNS_PER_BLOCK) {
        let cells = |f: &dyn Fn(&rdo_core::LedgerRow) -> Option<f64>| block.iter().map(|r| format!("{:>10}", cell(f(r)))).collect::<String>();
        let head: String = block.iter().map(|r| format!("{:>10}", format!("r={}", r.r))).collect();
        writeln!(out, "{:label_w$} |{head}", "").expect("string write");
        writeln!(out, "{}-+{}", "-".repeat(label_w), "-".repeat(head.len())).expect("string write");
        if rows != Rows::Upper {
            writeln!(out, "{LOWER_LABEL} |{}", cells(&|r| r.lower)).expect("string write");
        }
        if rows != Rows::Lower {
            writeln!(out, "{UPPER_LABEL} |{}", cells(&|r| r.upper)).expect("string write");
        }
    }
    out
}

pub fn point(x: &DVector<f64>) -> String {
    let items: Vec<String> = x.iter().map(|v| format!("{v:.10}")).collect();
    format!("[{}]", items.join(", "))
}
