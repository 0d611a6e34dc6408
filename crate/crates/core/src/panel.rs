//! Panel data model: one treated unit (row 0), `N` controls, `T` periods split
//! at `t0` into a pre-treatment window and a post-treatment window.
//!
//! Outcome files are wide CSV: the header row is `period,<unit>,<unit>,...`,
//! each following row is one period in ascending order. Covariate files have a
//! `unit,<name>,<name>,...` header and one row per unit.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Time-invariant unit characteristics, one row per unit in panel order.
#[derive(Debug, Clone, PartialEq)]
pub struct Covariates {
    names: Vec<String>,
    values: DMatrix<f64>,
}

impl Covariates {
    pub fn new(names: Vec<String>, values: DMatrix<f64>) -> Result<Self> {
        if names.is_empty() || values.ncols() == 0 {
            return Err(Error::InvalidPanel("covariate block needs at least one column".into()));
        }
        if names.len() != values.ncols() {
            return Err(Error::InvalidPanel(format!(
                "{} covariate names for {} columns",
                names.len(),
                values.ncols()
            )));
        }
        check_unique("covariate", &names)?;
        if let Some((i, j)) = first_non_finite(&values) {
            return Err(Error::InvalidPanel(format!(
                "covariate `{}` of unit row {i} is not finite",
                names[j]
            )));
        }
        Ok(Self { names, values })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// `(N+1) x M`, row 0 is the treated unit.
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// A validated outcome panel with the treated unit at row 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    outcomes: DMatrix<f64>,
    t0: usize,
    unit_labels: Vec<String>,
    period_labels: Vec<String>,
    covariates: Option<Covariates>,
}

/// The four outcome blocks of a panel. Control blocks are `N x periods`.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelView {
    pub treated_pre: DVector<f64>,
    pub controls_pre: DMatrix<f64>,
    pub treated_post: DVector<f64>,
    pub controls_post: DMatrix<f64>,
}

impl Panel {
    /// `outcomes` is `(N+1) x T` with the treated unit in row 0; `t0` counts
    /// the pre-treatment periods.
    pub fn new(
        outcomes: DMatrix<f64>,
        t0: usize,
        unit_labels: Vec<String>,
        period_labels: Vec<String>,
    ) -> Result<Self> {
        let (units, periods) = outcomes.shape();
        if units < 2 {
            return Err(Error::InvalidPanel(
                "need the treated unit and at least one control".into(),
            ));
        }
        if periods < 2 || t0 < 1 || t0 >= periods {
            return Err(Error::InvalidPanel(format!(
                "t0 = {t0} must leave at least one pre and one post period out of {periods}"
            )));
        }
        if unit_labels.len() != units {
            return Err(Error::InvalidPanel(format!(
                "{} unit labels for {units} units",
                unit_labels.len()
            )));
        }
        if period_labels.len() != periods {
            return Err(Error::InvalidPanel(format!(
                "{} period labels for {periods} periods",
                period_labels.len()
            )));
        }
        check_unique("unit", &unit_labels)?;
        check_unique("period", &period_labels)?;
        if let Some((i, t)) = first_non_finite(&outcomes) {
            return Err(Error::InvalidPanel(format!(
                "outcome of `{}` in period `{}` is not finite",
                unit_labels[i], period_labels[t]
            )));
        }
        Ok(Self {
            outcomes,
            t0,
            unit_labels,
            period_labels,
            covariates: None,
        })
    }

    pub fn with_covariates(mut self, covariates: Covariates) -> Result<Self> {
        if covariates.values.nrows() != self.outcomes.nrows() {
            return Err(Error::InvalidPanel(format!(
                "covariates cover {} units, panel has {}",
                covariates.values.nrows(),
                self.outcomes.nrows()
            )));
        }
        self.covariates = Some(covariates);
        Ok(self)
    }

    /// Same units, periods, covariates and split; new outcome values.
    pub fn with_outcomes(&self, outcomes: DMatrix<f64>) -> Result<Self> {
        if outcomes.shape() != self.outcomes.shape() {
            return Err(Error::InvalidPanel("replacement outcomes change the panel shape".into()));
        }
        let mut p = Panel::new(
            outcomes,
            self.t0,
            self.unit_labels.clone(),
            self.period_labels.clone(),
        )?;
        p.covariates = self.covariates.clone();
        Ok(p)
    }

    /// Number of control units `N`.
    pub fn n_controls(&self) -> usize {
        self.outcomes.nrows() - 1
    }

    pub fn n_units(&self) -> usize {
        self.outcomes.nrows()
    }

    pub fn n_periods(&self) -> usize {
        self.outcomes.ncols()
    }

    pub fn t0(&self) -> usize {
        self.t0
    }

    pub fn n_post(&self) -> usize {
        self.n_periods() - self.t0
    }

    pub fn outcomes(&self) -> &DMatrix<f64> {
        &self.outcomes
    }

    pub fn outcome(&self, unit: usize, period: usize) -> f64 {
        self.outcomes[(unit, period)]
    }

    pub fn unit_labels(&self) -> &[String] {
        &self.unit_labels
    }

    pub fn period_labels(&self) -> &[String] {
        &self.period_labels
    }

    pub fn treated_label(&self) -> &str {
        &self.unit_labels[0]
    }

    pub fn covariates(&self) -> Option<&Covariates> {
        self.covariates.as_ref()
    }

    pub fn period_index(&self, label: &str) -> Option<usize> {
        self.period_labels.iter().position(|p| p == label)
    }

    pub fn unit_index(&self, label: &str) -> Option<usize> {
        self.unit_labels.iter().position(|u| u == label)
    }

    pub fn split(&self) -> PanelView {
        let n = self.n_controls();
        let t = self.n_periods();
        let t0 = self.t0;
        let row0 = self.outcomes.row(0);
        PanelView {
            treated_pre: DVector::from_iterator(t0, row0.iter().take(t0).copied()),
            treated_post: DVector::from_iterator(t - t0, row0.iter().skip(t0).copied()),
            controls_pre: self.outcomes.view((1, 0), (n, t0)).into_owned(),
            controls_post: self.outcomes.view((1, t0), (n, t - t0)).into_owned(),
        }
    }

    /// Reorders units; `order[0]` must be 0 so the treated unit stays first.
    pub fn permute_controls(&self, order: &[usize]) -> Result<Self> {
        let units = self.n_units();
        let mut seen = vec![false; units];
        if order.len() != units || order.first() != Some(&0) {
            return Err(Error::invalid("permutation must keep unit 0 first and cover all units"));
        }
        for &u in order {
            if u >= units || std::mem::replace(&mut seen[u], true) {
                return Err(Error::invalid("not a permutation of the unit indices"));
            }
        }
        let outcomes = self.outcomes.select_rows(order.iter());
        let labels = order.iter().map(|&u| self.unit_labels[u].clone()).collect();
        let mut p = Panel::new(outcomes, self.t0, labels, self.period_labels.clone())?;
        if let Some(cov) = &self.covariates {
            p.covariates = Some(Covariates {
                names: cov.names.clone(),
                values: cov.values.select_rows(order.iter()),
            });
        }
        Ok(p)
    }
}

impl PanelView {
    /// Stacks the blocks back into `(N+1) x T`.
    pub fn reassemble(&self) -> DMatrix<f64> {
        let n = self.controls_pre.nrows();
        let t0 = self.treated_pre.len();
        let t1 = self.treated_post.len();
        let mut out = DMatrix::zeros(n + 1, t0 + t1);
        for s in 0..t0 {
            out[(0, s)] = self.treated_pre[s];
        }
        for s in 0..t1 {
            out[(0, t0 + s)] = self.treated_post[s];
        }
        out.view_mut((1, 0), (n, t0)).copy_from(&self.controls_pre);
        out.view_mut((1, t0), (n, t1)).copy_from(&self.controls_post);
        out
    }
}

/// One prediction problem drawn from a panel: a target unit, the donor units
/// whose outcomes are combined to predict it, and the number of leading
/// periods used for fitting.
///
/// The treated problem is `target = 0`, donors `1..=N`, window `t0`. Placebo
/// problems swap in a control as target, always leaving unit 0 out of the
/// donors, or shorten the window.
#[derive(Debug, Clone)]
pub struct Design<'a> {
    panel: &'a Panel,
    target: usize,
    donors: Vec<usize>,
    window: usize,
}

impl<'a> Design<'a> {
    pub fn new(panel: &'a Panel, target: usize, donors: Vec<usize>, window: usize) -> Result<Self> {
        if target >= panel.n_units() {
            return Err(Error::invalid(format!("target unit {target} out of range")));
        }
        if donors.is_empty() {
            return Err(Error::invalid("donor pool is empty"));
        }
        if donors.iter().any(|&d| d == target || d >= panel.n_units()) {
            return Err(Error::invalid("donor pool contains the target or an unknown unit"));
        }
        if window == 0 || window > panel.n_periods() {
            return Err(Error::invalid(format!("fitting window {window} out of range")));
        }
        Ok(Self {
            panel,
            target,
            donors,
            window,
        })
    }

    /// Unit 0 against all controls over the pre-treatment window.
    pub fn treated(panel: &'a Panel) -> Self {
        Self {
            panel,
            target: 0,
            donors: (1..panel.n_units()).collect(),
            window: panel.t0(),
        }
    }

    /// Control `unit` as pseudo-treated; donors are the other controls.
    pub fn placebo_unit(panel: &'a Panel, unit: usize) -> Result<Self> {
        if unit == 0 || unit >= panel.n_units() {
            return Err(Error::invalid(format!("placebo unit {unit} is not a control")));
        }
        let donors = (1..panel.n_units()).filter(|&d| d != unit).collect();
        Self::new(panel, unit, donors, panel.t0())
    }

    pub fn with_window(mut self, window: usize) -> Result<Self> {
        if window == 0 || window > self.panel.n_periods() {
            return Err(Error::invalid(format!("fitting window {window} out of range")));
        }
        self.window = window;
        Ok(self)
    }

    pub fn panel(&self) -> &'a Panel {
        self.panel
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn donors(&self) -> &[usize] {
        &self.donors
    }

    pub fn n_donors(&self) -> usize {
        self.donors.len()
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// Target outcomes over the fitting window.
    pub fn target_pre(&self) -> DVector<f64> {
        DVector::from_fn(self.window, |s, _| self.panel.outcome(self.target, s))
    }

    /// `window x n_donors`: one column per donor pre-path.
    pub fn donors_pre(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.window, self.donors.len(), |s, j| {
            self.panel.outcome(self.donors[j], s)
        })
    }

    pub fn target_at(&self, period: usize) -> f64 {
        self.panel.outcome(self.target, period)
    }

    pub fn donors_at(&self, period: usize) -> DVector<f64> {
        DVector::from_iterator(
            self.donors.len(),
            self.donors.iter().map(|&d| self.panel.outcome(d, period)),
        )
    }

    /// Restricts the design to a subset of donor positions (not unit ids).
    pub fn select_donors(&self, positions: &[usize]) -> Result<Self> {
        let donors = positions
            .iter()
            .map(|&p| {
                self.donors
                    .get(p)
                    .copied()
                    .ok_or_else(|| Error::invalid(format!("donor position {p} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.panel, self.target, donors, self.window)
    }
}

/// Reads a wide outcome CSV, moves `treated_label` to row 0 and sets `t0` so
/// that `t0_label` is the last pre-treatment period.
pub fn load_panel(path: impl AsRef<Path>, treated_label: &str, t0_label: &str) -> Result<Panel> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_panel(file, treated_label, t0_label)
}

pub fn read_panel<R: Read>(reader: R, treated_label: &str, t0_label: &str) -> Result<Panel> {
    let table = read_table(reader, "period")?;
    let treated = table
        .columns
        .iter()
        .position(|c| c == treated_label)
        .ok_or_else(|| Error::UnknownUnit(treated_label.to_string()))?;
    let t0 = table
        .rows
        .iter()
        .position(|r| r == t0_label)
        .ok_or_else(|| Error::UnknownPeriod(t0_label.to_string()))?
        + 1;
    let periods = table.rows.len();
    if periods < 2 || t0 >= periods {
        return Err(Error::InvalidPanel(format!(
            "`{t0_label}` is the last period; no post-treatment periods remain"
        )));
    }
    let order: Vec<usize> = std::iter::once(treated)
        .chain((0..table.columns.len()).filter(|&c| c != treated))
        .collect();
    let outcomes = DMatrix::from_fn(order.len(), periods, |u, t| table.values[(t, order[u])]);
    let units = order.iter().map(|&c| table.columns[c].clone()).collect();
    Panel::new(outcomes, t0, units, table.rows)
}

/// Reads a covariate CSV and attaches it to `panel`, matching rows by unit label.
pub fn load_covariates(panel: Panel, path: impl AsRef<Path>) -> Result<Panel> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_covariates(panel, file)
}

pub fn read_covariates<R: Read>(panel: Panel, reader: R) -> Result<Panel> {
    let table = read_table(reader, "unit")?;
    let mut values = DMatrix::zeros(panel.n_units(), table.columns.len());
    for (u, label) in panel.unit_labels().iter().enumerate() {
        let row = table
            .rows
            .iter()
            .position(|r| r == label)
            .ok_or_else(|| Error::InvalidPanel(format!("no covariate row for unit `{label}`")))?;
        values.row_mut(u).copy_from(&table.values.row(row));
    }
    let cov = Covariates::new(table.columns, values)?;
    panel.with_covariates(cov)
}

/// Writes the panel in the wide outcome format. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn write_panel<W: Write>(panel: &Panel, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let csv_err = |e: csv::Error| Error::Parse {
        line: 0,
        message: e.to_string(),
    };
    let mut header = vec!["period".to_string()];
    header.extend(panel.unit_labels().iter().cloned());
    w.write_record(&header).map_err(csv_err)?;
    for (t, label) in panel.period_labels().iter().enumerate() {
        let mut rec = vec![label.clone()];
        rec.extend((0..panel.n_units()).map(|u| format!("{}", panel.outcome(u, t))));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Parse {
        line: 0,
        message: e.to_string(),
    })?;
    Ok(())
}

struct Table {
    columns: Vec<String>,
    rows: Vec<String>,
    values: DMatrix<f64>,
}

fn read_table<R: Read>(reader: R, row_kind: &'static str) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(rec) => rec.map_err(parse_err)?,
        None => {
            return Err(Error::Parse {
                line: 1,
                message: "file is empty".into(),
            })
        }
    };
    if header.len() < 2 {
        return Err(Error::Parse {
            line: 1,
            message: format!("header needs `{row_kind}` followed by at least one column"),
        });
    }
    let columns: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let col_kind = if row_kind == "period" { "unit" } else { "covariate" };
    check_unique(col_kind, &columns)?;

    let mut rows = Vec::new();
    let mut data = Vec::new();
    for rec in records {
        let rec = rec.map_err(parse_err)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() == 1 && rec.get(0) == Some("") {
            continue;
        }
        if rec.len() != header.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        let label = rec.get(0).unwrap_or_default();
        if label.is_empty() {
            return Err(Error::Cell {
                row: line,
                column: header.get(0).unwrap_or_default().to_string(),
                message: format!("empty {row_kind} label"),
            });
        }
        rows.push(label.to_string());
        for (c, cell) in rec.iter().skip(1).enumerate() {
            let column = columns[c].clone();
            if cell.is_empty() {
                return Err(Error::Cell {
                    row: line,
                    column,
                    message: "empty cell".into(),
                });
            }
            let v: f64 = cell.parse().map_err(|_| Error::Cell {
                row: line,
                column: column.clone(),
                message: format!("`{cell}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Cell {
                    row: line,
                    column,
                    message: format!("`{cell}` is not finite"),
                });
            }
            data.push(v);
        }
    }
    check_unique(row_kind, &rows)?;
    let values = DMatrix::from_row_slice(rows.len(), columns.len(), &data);
    Ok(Table {
        columns,
        rows,
        values,
    })
}

fn parse_err(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

fn check_unique(kind: &'static str, labels: &[String]) -> Result<()> {
    let mut seen = HashSet::with_capacity(labels.len());
    for l in labels {
        if !seen.insert(l.as_str()) {
            return Err(Error::DuplicateLabel {
                kind,
                label: l.clone(),
            });
        }
    }
    Ok(())
}

fn first_non_finite(m: &DMatrix<f64>) -> Option<(usize, usize)> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if !m[(i, j)].is_finite() {
                return Some((i, j));
            }
        }
    }
    None
}
