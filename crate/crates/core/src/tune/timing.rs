//! Timing summaries for hyperparameter sweeps: per model family, the number
//! of configurations evaluated, the total wall time, and the mean seconds
//! per configuration.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub family: String,
    pub combinations: usize,
    pub total_seconds: f64,
    pub per_combination: f64,
}

impl TimingRow {
    pub fn from_totals(family: &str, combinations: usize, total_seconds: f64) -> TimingRow {
        let per_combination = if combinations == 0 {
            0.0
        } else {
            total_seconds / combinations as f64
        };
        TimingRow { family: family.to_string(), combinations, total_seconds, per_combination }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingTable {
    pub rows: Vec<TimingRow>,
}

impl TimingTable {
    pub fn new() -> TimingTable {
        TimingTable { rows: Vec::new() }
    }

    pub fn push(&mut self, row: TimingRow) {
        self.rows.push(row);
    }

    /// Plain-text rendering with aligned columns; seconds use 3 decimals.
    pub fn render_text(&self) -> String {
        let header = ["model", "combinations", "total_seconds", "per_combination"];
        let mut cells: Vec<[String; 4]> = Vec::with_capacity(self.rows.len());
        for row in &self.rows {
            cells.push([
                row.family.clone(),
                row.combinations.to_string(),
                format!("{:.3}", row.total_seconds),
                format!("{:.3}", row.per_combination),
            ]);
        }
        let mut widths = [0usize; 4];
        for (i, name) in header.iter().enumerate() {
            widths[i] = name.len();
        }
        for row in &cells {
            for (i, cell) in row.iter().enumerate() {
                widths[i] = widths[i].max(cell.len());
            }
        }
        let mut out = String::new();
        let render_line = |cols: [&str; 4]| -> String {
            format!(
                "{:<w0$}  {:>w1$}  {:>w2$}  {:>w3$}\n",
                cols[0],
                cols[1],
                cols[2],
                cols[3],
                w0 = widths[0],
                w1 = widths[1],
                w2 = widths[2],
                w3 = widths[3],
            )
        };
        out.push_str(&render_line([header[0], header[1], header[2], header[3]]));
        for row in &cells {
            out.push_str(&render_line([&row[0], &row[1], &row[2], &row[3]]));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("timing table serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn per_combination_is_the_exact_ratio() {
        let row = TimingRow::from_totals("random_forest", 1080, 985.267);
        assert!((row.per_combination - 985.267 / 1080.0).abs() < 1e-9);
        assert_eq!(format!("{:.3}", row.per_combination), "0.912");
    }

    #[test]
    fn reference_sweep_ratios_round_to_expected_values() {
        // (family, combinations, total seconds, expected per-combination display)
        let cases = [
            ("random_forest", 1080usize, 985.267, "0.912"),
            ("svm", 192, 17.482, "0.091"),
            ("decision_tree", 188_442, 651.747, "0.003"),
            ("xgboost", 11_664, 1204.597, "0.103"),
            ("distilbert", 27, 2043.965, "75.702"),
            ("scibert", 18, 1179.506, "65.528"),
        ];
        for (family, combinations, total, expected) in cases {
            let row = TimingRow::from_totals(family, combinations, total);
            assert!(
                (row.per_combination - total / combinations as f64).abs() < 1e-9,
                "{family}: per-combination ratio drifted"
            );
            assert_eq!(
                format!("{:.3}", row.per_combination),
                expected,
                "{family}: unexpected rounded ratio"
            );
        }
    }

    #[test]
    fn zero_combinations_render_zero_ratio() {
        let row = TimingRow::from_totals("svm", 0, 0.0);
        assert_eq!(row.per_combination, 0.0);
    }

    #[test]
    fn text_render_aligns_columns() {
        let mut table = TimingTable::new();
        table.push(TimingRow::from_totals("random_forest", 1080, 985.267));
        table.push(TimingRow::from_totals("svm", 192, 17.482));
        let text = table.render_text();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        let widths: Vec<usize> = lines.iter().map(|l| l.len()).collect();
        assert!(widths.iter().all(|w| *w == widths[0]), "rows must be equal width: {text}");
        assert!(lines[0].contains("per_combination"));
        assert!(lines[1].contains("0.912"));
        assert!(lines[2].contains("0.091"));
    }

    #[test]
    fn json_round_trips() {
        let mut table = TimingTable::new();
        table.push(TimingRow::from_totals("decision_tree", 188_442, 651.747));
        let parsed: TimingTable = serde_json::from_str(&table.to_json()).unwrap();
        assert_eq!(parsed, table);
    }
}
