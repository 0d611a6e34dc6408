//! The replication panels. California ships with the crate; the other two
//! are looked up on disk because they cannot be redistributed here.
//!
//! On-disk files use the wide outcome CSV layout and are searched for in the
//! directory named by `PANELCF_DATA_DIR`, then in `./data`.

use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::panel::{load_panel, read_panel, Panel};

/// Environment variable naming the directory with replication CSVs.
pub const DATA_DIR_VAR: &str = "PANELCF_DATA_DIR";

const CALIFORNIA_CSV: &str = include_str!("../../../data/california.csv");

/// A replication dataset and the labels needed to load it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dataset {
    pub name: &'static str,
    pub file: &'static str,
    pub treated: &'static str,
    /// Label of the last pre-treatment period.
    pub t0_label: &'static str,
    /// Period at which effects are reported.
    pub report_period: &'static str,
}

pub const CALIFORNIA: Dataset = Dataset {
    name: "california",
    file: "california.csv",
    treated: "California",
    t0_label: "1988",
    report_period: "1995",
};

pub const GERMANY: Dataset = Dataset {
    name: "germany",
    file: "germany.csv",
    treated: "West Germany",
    t0_label: "1990",
    report_period: "1995",
};

pub const MARIEL: Dataset = Dataset {
    name: "mariel",
    file: "mariel.csv",
    treated: "Miami",
    t0_label: "1979",
    report_period: "1985",
};

pub const ALL: [Dataset; 3] = [CALIFORNIA, GERMANY, MARIEL];

pub fn find(name: &str) -> Result<Dataset> {
    ALL.iter()
        .copied()
        .find(|d| d.name.eq_ignore_ascii_case(name))
        .ok_or_else(|| Error::MissingDataset {
            name: name.to_string(),
            hint: "known datasets are california, germany and mariel".into(),
        })
}

impl Dataset {
    pub fn load(&self) -> Result<Panel> {
        if let Some(path) = self.locate() {
            return load_panel(path, self.treated, self.t0_label);
        }
        if self.name == CALIFORNIA.name {
            return read_panel(CALIFORNIA_CSV.as_bytes(), self.treated, self.t0_label);
        }
        Err(Error::MissingDataset {
            name: self.name.to_string(),
            hint: format!(
                "place {} (rows = years, columns = units, treated column `{}`) in ${DATA_DIR_VAR} or ./data",
                self.file, self.treated
            ),
        })
    }

    fn locate(&self) -> Option<PathBuf> {
        let mut dirs = Vec::new();
        if let Some(dir) = std::env::var_os(DATA_DIR_VAR) {
            dirs.push(PathBuf::from(dir));
        }
        dirs.push(PathBuf::from("data"));
        dirs.into_iter().map(|d| d.join(self.file)).find(|p| p.is_file())
    }
}

/// California per-capita cigarette sales, 1970-2000, 38 control states.
pub fn california() -> Result<Panel> {
    CALIFORNIA.load()
}
