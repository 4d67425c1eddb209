//! Plain-text tables and flat per-cell records.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{BiasCell, BiasComparison, BiasReport, EvalMatrix};
use crate::corpus::Category;
use crate::error::{Error, Result};

const LABEL_WIDTH: usize = 24;

/// One (train, test) cell in machine-readable form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellRecord {
    pub train_category: Category,
    pub test_category: Category,
    pub accuracy: f64,
    pub f_m: f64,
    pub f_f: f64,
    pub f_n: f64,
    pub counted: usize,
    pub discarded_ties: usize,
}

pub fn reports_to_records(matrix: &EvalMatrix, bias: &BiasReport) -> Vec<CellRecord> {
    let mut out = Vec::new();
    for (r, train) in bias.train.iter().enumerate() {
        for (c, test) in bias.test.iter().enumerate() {
            let cell = bias.cells[r][c];
            out.push(CellRecord {
                train_category: *train,
                test_category: *test,
                accuracy: matrix.accuracy[train.index()][test.index()],
                f_m: cell.f_m,
                f_f: cell.f_f,
                f_n: cell.f_n,
                counted: cell.counted,
                discarded_ties: cell.discarded_ties,
            });
        }
    }
    out
}

/// Rebuilds the bias grid from records. Rows and columns follow category
/// order; every (train, test) combination present must appear exactly once.
pub fn records_to_reports(records: &[CellRecord]) -> Result<BiasReport> {
    let mut train: Vec<Category> = records.iter().map(|r| r.train_category).collect();
    let mut test: Vec<Category> = records.iter().map(|r| r.test_category).collect();
    train.sort();
    train.dedup();
    test.sort();
    test.dedup();
    let mut cells: Vec<Vec<Option<BiasCell>>> = vec![vec![None; test.len()]; train.len()];
    for rec in records {
        let r = train.binary_search(&rec.train_category).unwrap();
        let c = test.binary_search(&rec.test_category).unwrap();
        let slot = &mut cells[r][c];
        if slot.is_some() {
            return Err(Error::GridMismatch(format!(
                "duplicate cell {} -> {}",
                rec.train_category, rec.test_category
            )));
        }
        *slot = Some(BiasCell {
            f_m: rec.f_m,
            f_f: rec.f_f,
            f_n: rec.f_n,
            counted: rec.counted,
            discarded_ties: rec.discarded_ties,
        });
    }
    let cells = cells
        .into_iter()
        .enumerate()
        .map(|(r, row)| {
            row.into_iter()
                .enumerate()
                .map(|(c, cell)| {
                    cell.ok_or_else(|| {
                        Error::GridMismatch(format!("missing cell {} -> {}", train[r], test[c]))
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    BiasReport::new(train, test, cells)
}

fn header(out: &mut String, first: &str, columns: &[&str], width: usize) {
    write!(out, "{first:<LABEL_WIDTH$}").unwrap();
    for c in columns {
        write!(out, " {c:>width$}").unwrap();
    }
    out.push('\n');
}

fn rule(out: &mut String, columns: usize, width: usize) {
    out.push_str(&"-".repeat(LABEL_WIDTH + columns * (width + 1)));
    out.push('\n');
}

/// Train x test accuracy with an `Average*` column, followed by the
/// per-query ranking diagnostic.
pub fn format_matrix_table(m: &EvalMatrix) -> String {
    const W: usize = 17;
    let mut out = String::new();
    let mut cols: Vec<&str> = Category::ALL.iter().map(|c| c.token()).collect();
    cols.push("Average*");
    header(&mut out, "Train/Test", &cols, W);
    rule(&mut out, cols.len(), W);
    for c in Category::ALL {
        write!(out, "{:<LABEL_WIDTH$}", c.label()).unwrap();
        for v in m.accuracy[c.index()] {
            write!(out, " {v:>W$.4}").unwrap();
        }
        writeln!(out, " {:>W$.4}", m.average_star[c.index()]).unwrap();
    }
    out.push_str(
        "Average* excludes the diagonal; diagonal cells are in-category (non-held-out).\n\n",
    );

    cols.pop();
    header(&mut out, "Ranking (diagnostic)", &cols, W);
    rule(&mut out, cols.len(), W);
    for c in Category::ALL {
        write!(out, "{:<LABEL_WIDTH$}", c.label()).unwrap();
        for v in m.ranking[c.index()] {
            write!(out, " {v:>W$.4}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// Fractions of M/F/N among counted groups per cell, with row averages and
/// the |M-F| gap of the averages.
pub fn format_bias_table(b: &BiasReport) -> String {
    const W: usize = 17;
    let mut out = String::new();
    let mut cols: Vec<&str> = b.test.iter().map(|c| c.token()).collect();
    cols.push("Average");
    cols.push("|M-F|");
    header(&mut out, "Train/Test (M F N)", &cols, W);
    rule(&mut out, cols.len(), W);
    for (r, train) in b.train.iter().enumerate() {
        write!(out, "{:<LABEL_WIDTH$}", train.label()).unwrap();
        for cell in &b.cells[r] {
            write!(out, " {:>W$}", triple(cell.fractions())).unwrap();
        }
        write!(out, " {:>W$}", triple(b.row_average(r))).unwrap();
        writeln!(out, " {:>W$.2}", b.row_gap(r)).unwrap();
    }
    out.push_str("Counted groups / discarded ties per cell:\n");
    for (r, train) in b.train.iter().enumerate() {
        write!(out, "{:<LABEL_WIDTH$}", train.label()).unwrap();
        for cell in &b.cells[r] {
            write!(
                out,
                " {:>W$}",
                format!("{}/{}", cell.counted, cell.discarded_ties)
            )
            .unwrap();
        }
        out.push('\n');
    }
    out
}

fn triple(v: [f64; 3]) -> String {
    format!("{:.2} {:.2} {:.2}", v[0], v[1], v[2])
}

pub fn format_comparison_table(c: &BiasComparison) -> String {
    const W: usize = 17;
    let mut out = String::new();
    header(
        &mut out,
        "",
        &[
            "Before (M F N)",
            "After (M F N)",
            "|M-F| before",
            "|M-F| after",
            "decreased",
        ],
        W,
    );
    rule(&mut out, 5, W);
    for row in &c.rows {
        writeln!(
            out,
            "{:<LABEL_WIDTH$} {:>W$} {:>W$} {:>W$.2} {:>W$.2} {:>W$}",
            row.category.label(),
            triple(row.before),
            triple(row.after),
            row.gap_before,
            row.gap_after,
            if row.decreased { "yes" } else { "no" }
        )
        .unwrap();
    }
    out
}
