use std::collections::BTreeMap;
use std::io::Read;

use crate::error::{Error, Result};

/// Deaths and central exposures on a rectangular age x year grid.
///
/// Storage is age-major: cell `(i, j)` lives at `i * years.len() + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct MortalityHistory {
    pub ages: Vec<i32>,
    pub years: Vec<i32>,
    pub deaths: Vec<f64>,
    pub exposure: Vec<f64>,
}

impl MortalityHistory {
    pub fn new(ages: Vec<i32>, years: Vec<i32>, deaths: Vec<f64>, exposure: Vec<f64>) -> Result<Self> {
        let cells = ages.len() * years.len();
        if deaths.len() != cells || exposure.len() != cells {
            return Err(Error::Dimension(format!(
                "history grid {}x{} needs {cells} cells, got {} deaths and {} exposures",
                ages.len(),
                years.len(),
                deaths.len(),
                exposure.len()
            )));
        }
        for (i, (&d, &e)) in deaths.iter().zip(&exposure).enumerate() {
            let (age, year) = (ages[i / years.len()], years[i % years.len()]);
            if !(d >= 0.0) || !(e >= 0.0) {
                return Err(Error::Validation(format!(
                    "negative or non-finite deaths/exposure at age {age}, year {year}"
                )));
            }
            if d > 0.0 && e <= 0.0 {
                return Err(Error::Validation(format!(
                    "deaths without exposure at age {age}, year {year}"
                )));
            }
        }
        Ok(Self {
            ages,
            years,
            deaths,
            exposure,
        })
    }

    /// Builds a history whose central death rates are exactly
    /// `exp(log_rate(age, year))` on a constant exposure.
    pub fn from_log_rates(
        ages: Vec<i32>,
        years: Vec<i32>,
        exposure: f64,
        log_rate: impl Fn(i32, i32) -> f64,
    ) -> Result<Self> {
        let mut deaths = Vec::with_capacity(ages.len() * years.len());
        for &a in &ages {
            for &y in &years {
                deaths.push(log_rate(a, y).exp() * exposure);
            }
        }
        let n = deaths.len();
        Self::new(ages, years, deaths, vec![exposure; n])
    }

    pub fn index(&self, age_idx: usize, year_idx: usize) -> usize {
        age_idx * self.years.len() + year_idx
    }

    pub fn central_rate(&self, age_idx: usize, year_idx: usize) -> f64 {
        let i = self.index(age_idx, year_idx);
        self.deaths[i] / self.exposure[i]
    }

    /// One-year death probability with initial exposure approximated by
    /// `E0 = Ec + 0.5 D`.
    pub fn initial_q(&self, age_idx: usize, year_idx: usize) -> f64 {
        let i = self.index(age_idx, year_idx);
        self.deaths[i] / (self.exposure[i] + 0.5 * self.deaths[i])
    }

    /// Restricts the grid to the given inclusive age and year ranges.
    pub fn slice(&self, ages: std::ops::RangeInclusive<i32>, years: std::ops::RangeInclusive<i32>) -> Result<Self> {
        let ai: Vec<usize> = (0..self.ages.len()).filter(|&i| ages.contains(&self.ages[i])).collect();
        let yi: Vec<usize> = (0..self.years.len()).filter(|&j| years.contains(&self.years[j])).collect();
        let mut deaths = Vec::new();
        let mut exposure = Vec::new();
        for &i in &ai {
            for &j in &yi {
                deaths.push(self.deaths[self.index(i, j)]);
                exposure.push(self.exposure[self.index(i, j)]);
            }
        }
        Self::new(
            ai.iter().map(|&i| self.ages[i]).collect(),
            yi.iter().map(|&j| self.years[j]).collect(),
            deaths,
            exposure,
        )
    }
}

/// Reads `year,age,deaths,exposure` CSV into a rectangular history.
pub fn load_history(source: impl Read) -> Result<MortalityHistory> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or(Error::Parse {
                line: 1,
                msg: format!("missing column `{name}` (expected year,age,deaths,exposure)"),
            })
    };
    let (iy, ia, id, ie) = (col("year")?, col("age")?, col("deaths")?, col("exposure")?);
    let mut cells: BTreeMap<(i32, i32), (f64, f64)> = BTreeMap::new();
    for (n, rec) in rdr.records().enumerate() {
        let line = n + 2;
        let rec = rec?;
        let field = |i: usize| -> Result<&str> {
            rec.get(i).ok_or(Error::Parse {
                line,
                msg: "missing field".into(),
            })
        };
        let parse_err = |what: &str| Error::Parse {
            line,
            msg: format!("invalid {what}"),
        };
        let year: i32 = field(iy)?.parse().map_err(|_| parse_err("year"))?;
        let age: i32 = field(ia)?.parse().map_err(|_| parse_err("age"))?;
        let d: f64 = field(id)?.parse().map_err(|_| parse_err("deaths"))?;
        let e: f64 = field(ie)?.parse().map_err(|_| parse_err("exposure"))?;
        if cells.insert((age, year), (d, e)).is_some() {
            return Err(Error::Parse {
                line,
                msg: format!("duplicate cell (age {age}, year {year})"),
            });
        }
    }
    let ages: Vec<i32> = {
        let mut v: Vec<i32> = cells.keys().map(|k| k.0).collect();
        v.dedup();
        v
    };
    let mut years: Vec<i32> = cells.keys().map(|k| k.1).collect();
    years.sort_unstable();
    years.dedup();
    let mut deaths = Vec::new();
    let mut exposure = Vec::new();
    for &a in &ages {
        for &y in &years {
            let &(d, e) = cells.get(&(a, y)).ok_or(Error::Validation(format!(
                "history grid missing cell (age {a}, year {y})"
            )))?;
            deaths.push(d);
            exposure.push(e);
        }
    }
    MortalityHistory::new(ages, years, deaths, exposure)
}
