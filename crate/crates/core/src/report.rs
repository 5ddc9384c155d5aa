//! Fixed-width result tables.

use std::fmt::Write as _;

use crate::metrics::{BpcerGrid, EvalReport, MetricBundle};

pub const TABLE_COLUMNS: [&str; 8] =
    ["MAD", "Test data", "AUC(%)", "EER(%)", "BPCER(%)@APCER=0.10%", "1.00%", "10.00%", "20.00%"];

const WIDTHS: [usize; 8] = [6, 10, 7, 7, 21, 7, 7, 7];

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub detector: String,
    pub dataset: String,
    pub metrics: MetricBundle,
}

impl TableRow {
    pub fn new(detector: &str, dataset: &str, auc: f64, eer: f64, bpcer: [f64; 4]) -> Self {
        Self {
            detector: detector.to_string(),
            dataset: dataset.to_string(),
            metrics: MetricBundle { auc_percent: auc, eer_percent: eer, bpcer_at_apcer: BpcerGrid::from_array(bpcer) },
        }
    }

    pub fn from_report(r: &EvalReport) -> Self {
        Self { detector: r.detector.clone(), dataset: r.dataset.clone(), metrics: r.overall }
    }

    fn cells(&self) -> Vec<String> {
        let m = &self.metrics;
        let mut cells = vec![self.detector.clone(), self.dataset.clone()];
        cells.extend([m.auc_percent, m.eer_percent].iter().chain(m.bpcer_at_apcer.to_array().iter()).map(|v| format!("{v:.2}")));
        cells
    }
}

fn join(cells: &[String]) -> String {
    let mut line = String::new();
    for (k, (c, w)) in cells.iter().zip(WIDTHS).enumerate() {
        if k > 0 {
            line.push_str(" | ");
        }
        // Names left-aligned, numbers right-aligned.
        if k < 2 {
            let _ = write!(line, "{c:<w$}");
        } else {
            let _ = write!(line, "{c:>w$}");
        }
    }
    line.trim_end().to_string()
}

/// Pipe-separated table, two decimals per number.
pub fn render_table(rows: &[TableRow]) -> String {
    let header: Vec<String> = TABLE_COLUMNS.iter().map(|s| s.to_string()).collect();
    let mut out = join(&header);
    out.push('\n');
    out.push_str(&WIDTHS.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>().join("-+-"));
    out.push('\n');
    for r in rows {
        out.push_str(&join(&r.cells()));
        out.push('\n');
    }
    out
}

/// Inverse of [`render_table`].
pub fn parse_table(text: &str) -> Result<Vec<TableRow>, String> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines.next().ok_or("empty table")?.split('|').map(str::trim).collect();
    if header != TABLE_COLUMNS {
        return Err(format!("unexpected header {header:?}"));
    }
    let rule = lines.next().ok_or("missing rule line")?;
    if !rule.chars().all(|c| c == '-' || c == '+') {
        return Err("malformed rule line".into());
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split('|').map(str::trim).collect();
        if cells.len() != TABLE_COLUMNS.len() {
            return Err(format!("row {}: expected {} cells, got {}", i + 1, TABLE_COLUMNS.len(), cells.len()));
        }
        let mut nums = [0.0; 6];
        for (n, c) in nums.iter_mut().zip(&cells[2..]) {
            *n = c.parse().map_err(|_| format!("row {}: bad number `{c}`", i + 1))?;
        }
        rows.push(TableRow::new(cells[0], cells[1], nums[0], nums[1], [nums[2], nums[3], nums[4], nums[5]]));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout() {
        let t = render_table(&[TableRow::new("XN", "FRLL-M", 99.17, 3.26, [85.29, 28.92, 0.49, 0.0])]);
        let lines: Vec<_> = t.lines().collect();
        assert_eq!(lines[0], "MAD    | Test data  |  AUC(%) |  EER(%) |  BPCER(%)@APCER=0.10% |   1.00% |  10.00% |  20.00%");
        assert_eq!(lines[2], "XN     | FRLL-M     |   99.17 |    3.26 |                 85.29 |   28.92 |    0.49 |    0.00");
        assert_eq!(parse_table(&t).unwrap()[0].metrics.eer_percent, 3.26);
        assert!(parse_table("MAD | x\n").is_err());
    }
}
