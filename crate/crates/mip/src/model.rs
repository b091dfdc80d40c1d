//! Sparse linear program representation shared by the simplex and the
//! branch-and-bound driver.

use std::fmt::Write as _;

use crate::MipError;

/// Constraint sense of a row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ColId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RowId(pub usize);

#[derive(Debug, Clone)]
pub struct Column {
    pub cost: f64,
    pub lower: f64,
    pub upper: f64,
    /// Nonzero coefficients as `(row, value)`.
    pub entries: Vec<(usize, f64)>,
    pub name: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Row {
    pub sense: Sense,
    pub rhs: f64,
    pub name: Option<String>,
}

/// `min c'x` subject to row constraints and column bounds.
#[derive(Debug, Clone, Default)]
pub struct LinearProgram {
    pub columns: Vec<Column>,
    pub rows: Vec<Row>,
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn add_column(&mut self, cost: f64, lower: f64, upper: f64) -> ColId {
        self.columns.push(Column {
            cost,
            lower,
            upper,
            entries: Vec::new(),
            name: None,
        });
        ColId(self.columns.len() - 1)
    }

    pub fn add_named_column(&mut self, name: impl Into<String>, cost: f64, lower: f64, upper: f64) -> ColId {
        let id = self.add_column(cost, lower, upper);
        self.columns[id.0].name = Some(name.into());
        id
    }

    /// Adds a column together with its coefficients in existing rows.
    pub fn add_column_with(&mut self, cost: f64, lower: f64, upper: f64, entries: &[(RowId, f64)]) -> ColId {
        let id = self.add_column(cost, lower, upper);
        let col = &mut self.columns[id.0];
        for &(row, value) in entries {
            if value != 0.0 {
                col.entries.push((row.0, value));
            }
        }
        id
    }

    pub fn add_row(&mut self, sense: Sense, rhs: f64, coefficients: &[(ColId, f64)]) -> RowId {
        let row = self.rows.len();
        self.rows.push(Row { sense, rhs, name: None });
        for &(col, value) in coefficients {
            if value != 0.0 {
                self.columns[col.0].entries.push((row, value));
            }
        }
        RowId(row)
    }

    pub fn add_named_row(&mut self, name: impl Into<String>, sense: Sense, rhs: f64, coefficients: &[(ColId, f64)]) -> RowId {
        let id = self.add_row(sense, rhs, coefficients);
        self.rows[id.0].name = Some(name.into());
        id
    }

    pub fn set_bounds(&mut self, col: ColId, lower: f64, upper: f64) {
        self.columns[col.0].lower = lower;
        self.columns[col.0].upper = upper;
    }

    /// Row activity `a_i x` for every row.
    pub fn row_activity(&self, x: &[f64]) -> Vec<f64> {
        let mut act = vec![0.0; self.rows.len()];
        for (j, col) in self.columns.iter().enumerate() {
            if x[j] != 0.0 {
                for &(i, a) in &col.entries {
                    act[i] += a * x[j];
                }
            }
        }
        act
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.columns.iter().zip(x).map(|(c, v)| c.cost * v).sum()
    }

    /// Largest violation of any row or bound at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (row, act) in self.rows.iter().zip(self.row_activity(x)) {
            let v = match row.sense {
                Sense::Le => act - row.rhs,
                Sense::Ge => row.rhs - act,
                Sense::Eq => (act - row.rhs).abs(),
            };
            worst = worst.max(v);
        }
        for (col, &v) in self.columns.iter().zip(x) {
            worst = worst.max(col.lower - v).max(v - col.upper);
        }
        worst
    }

    pub fn validate(&self) -> Result<(), MipError> {
        for (j, col) in self.columns.iter().enumerate() {
            if col.lower.is_nan() || col.upper.is_nan() || col.lower > col.upper {
                return Err(MipError::Malformed(format!(
                    "column {j} has bounds [{}, {}]",
                    col.lower, col.upper
                )));
            }
            if !col.cost.is_finite() {
                return Err(MipError::Malformed(format!("column {j} has non-finite cost")));
            }
            for &(i, a) in &col.entries {
                if i >= self.rows.len() {
                    return Err(MipError::Malformed(format!("column {j} references missing row {i}")));
                }
                if !a.is_finite() {
                    return Err(MipError::Malformed(format!("column {j} has a non-finite coefficient")));
                }
            }
        }
        for (i, row) in self.rows.iter().enumerate() {
            if !row.rhs.is_finite() {
                return Err(MipError::Malformed(format!("row {i} has a non-finite right-hand side")));
            }
        }
        Ok(())
    }

    /// Renders the model in the common LP text format.
    pub fn to_lp_string(&self, integral: Option<&[bool]>) -> String {
        let col_name = |j: usize| -> String {
            self.columns[j]
                .name
                .clone()
                .unwrap_or_else(|| format!("x{j}"))
        };
        let mut out = String::new();
        out.push_str("Minimize\n obj:");
        let mut any = false;
        for (j, col) in self.columns.iter().enumerate() {
            if col.cost != 0.0 {
                let _ = write!(out, " {} {} {}", sign(col.cost), col.cost.abs(), col_name(j));
                any = true;
            }
        }
        if !any {
            out.push_str(" 0");
        }
        out.push_str("\nSubject To\n");
        let mut by_row: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.rows.len()];
        for (j, col) in self.columns.iter().enumerate() {
            for &(i, a) in &col.entries {
                by_row[i].push((j, a));
            }
        }
        for (i, row) in self.rows.iter().enumerate() {
            let name = row.name.clone().unwrap_or_else(|| format!("r{i}"));
            let _ = write!(out, " {name}:");
            if by_row[i].is_empty() {
                out.push_str(" 0");
            }
            for &(j, a) in &by_row[i] {
                let _ = write!(out, " {} {} {}", sign(a), a.abs(), col_name(j));
            }
            let op = match row.sense {
                Sense::Le => "<=",
                Sense::Eq => "=",
                Sense::Ge => ">=",
            };
            let _ = writeln!(out, " {op} {}", row.rhs);
        }
        out.push_str("Bounds\n");
        for (j, col) in self.columns.iter().enumerate() {
            let name = col_name(j);
            match (col.lower.is_finite(), col.upper.is_finite()) {
                (true, true) => {
                    let _ = writeln!(out, " {} <= {name} <= {}", col.lower, col.upper);
                }
                (true, false) => {
                    let _ = writeln!(out, " {name} >= {}", col.lower);
                }
                (false, true) => {
                    let _ = writeln!(out, " -inf <= {name} <= {}", col.upper);
                }
                (false, false) => {
                    let _ = writeln!(out, " {name} free");
                }
            }
        }
        if let Some(flags) = integral {
            let names: Vec<String> = flags
                .iter()
                .enumerate()
                .filter(|(_, &f)| f)
                .map(|(j, _)| col_name(j))
                .collect();
            if !names.is_empty() {
                out.push_str("General\n");
                for n in names {
                    let _ = writeln!(out, " {n}");
                }
            }
        }
        out.push_str("End\n");
        out
    }
}

fn sign(v: f64) -> char {
    if v < 0.0 {
        '-'
    } else {
        '+'
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lp_text_has_all_sections() {
        let mut lp = LinearProgram::new();
        let x = lp.add_named_column("x", 2.0, 0.0, f64::INFINITY);
        let y = lp.add_column(3.0, 0.0, 1.0);
        lp.add_named_row("cover", Sense::Eq, 1.0, &[(x, 1.0), (y, 1.0)]);
        let text = lp.to_lp_string(Some(&[false, true]));
        assert!(text.starts_with("Minimize"));
        assert!(text.contains("cover: + 1 x + 1 x1 = 1"));
        assert!(text.contains("0 <= x1 <= 1"));
        assert!(text.contains("General\n x1"));
        assert!(text.ends_with("End\n"));
    }

    #[test]
    fn validate_rejects_crossed_bounds() {
        let mut lp = LinearProgram::new();
        lp.add_column(1.0, 2.0, 1.0);
        assert!(lp.validate().is_err());
    }
}
