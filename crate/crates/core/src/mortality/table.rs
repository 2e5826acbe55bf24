use std::collections::BTreeMap;
use std::io::Read;

use crate::error::{Error, Result};

/// Period life table of one-year death probabilities `q[age, year]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LifeTable {
    entries: BTreeMap<(i32, i32), f64>,
}

impl LifeTable {
    pub fn from_entries(entries: impl IntoIterator<Item = (i32, i32, f64)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (age, year, q) in entries {
            check_q(q, age, year)?;
            if map.insert((age, year), q).is_some() {
                return Err(Error::Validation(format!(
                    "duplicate entry for age {age}, year {year}"
                )));
            }
        }
        Ok(Self { entries: map })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, age: i32, year: i32) -> Option<f64> {
        self.entries.get(&(age, year)).copied()
    }

    pub fn entries(&self) -> impl Iterator<Item = (i32, i32, f64)> + '_ {
        self.entries.iter().map(|(&(a, y), &q)| (a, y, q))
    }

    /// Inclusive `(min_age, max_age, min_year, max_year)` bounding box.
    pub fn bounds(&self) -> Option<(i32, i32, i32, i32)> {
        let mut it = self.entries.keys();
        let &(a0, y0) = it.next()?;
        Some(self.entries.keys().fold((a0, a0, y0, y0), |(a_lo, a_hi, y_lo, y_hi), &(a, y)| {
            (a_lo.min(a), a_hi.max(a), y_lo.min(y), y_hi.max(y))
        }))
    }

    /// Cells of the bounding box with no entry, in (age, year) order.
    pub fn missing_cells(&self) -> Vec<(i32, i32)> {
        let Some((a_lo, a_hi, y_lo, y_hi)) = self.bounds() else {
            return Vec::new();
        };
        let mut missing = Vec::new();
        for a in a_lo..=a_hi {
            for y in y_lo..=y_hi {
                if !self.entries.contains_key(&(a, y)) {
                    missing.push((a, y));
                }
            }
        }
        missing
    }

    /// Errors with the list of missing cells unless the table covers its full
    /// age x year bounding box.
    pub fn require_rectangular(&self) -> Result<()> {
        let missing = self.missing_cells();
        if missing.is_empty() {
            return Ok(());
        }
        let shown: Vec<String> = missing
            .iter()
            .take(20)
            .map(|(a, y)| format!("({a}, {y})"))
            .collect();
        Err(Error::Validation(format!(
            "life table is not rectangular: {} missing cells: {}{}",
            missing.len(),
            shown.join(", "),
            if missing.len() > 20 { ", ..." } else { "" }
        )))
    }
}

fn check_q(q: f64, age: i32, year: i32) -> Result<()> {
    if !(0.0..1.0).contains(&q) {
        return Err(Error::Validation(format!(
            "q = {q} at age {age}, year {year} is outside [0, 1)"
        )));
    }
    Ok(())
}

/// Reads a life table either as CSV with a `year,age,qx` header or in the
/// whitespace-separated HMD 1x1 layout (`Year Age mx qx ...`). The HMD open
/// age interval (`110+`) is skipped because it is not a one-year probability.
pub fn load_life_table(mut source: impl Read) -> Result<LifeTable> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    if first.split(',').any(|c| c.trim().eq_ignore_ascii_case("qx")) {
        parse_csv(&text)
    } else {
        parse_hmd(&text)
    }
}

fn parse_csv(text: &str) -> Result<LifeTable> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "empty life table".into(),
    })?;
    let cols: Vec<String> = header.split(',').map(|c| c.trim().to_ascii_lowercase()).collect();
    let find = |name: &str| {
        cols.iter().position(|c| c == name).ok_or(Error::Parse {
            line: 1,
            msg: format!("missing column `{name}` (expected header year,age,qx)"),
        })
    };
    let (iy, ia, iq) = (find("year")?, find("age")?, find("qx")?);
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let get = |i: usize| {
            fields.get(i).copied().ok_or(Error::Parse {
                line: lineno,
                msg: format!("expected {} fields, found {}", cols.len(), fields.len()),
            })
        };
        let year = parse_int(get(iy)?, lineno)?;
        let age = parse_int(get(ia)?, lineno)?;
        let q = parse_f64(get(iq)?, lineno)?;
        rows.push((age, year, q));
    }
    LifeTable::from_entries(rows)
}

fn parse_hmd(text: &str) -> Result<LifeTable> {
    let mut header: Option<(usize, usize, usize)> = None;
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        match header {
            None => {
                let pos = |name: &str| fields.iter().position(|f| f.eq_ignore_ascii_case(name));
                if let (Some(y), Some(a), Some(q)) = (pos("Year"), pos("Age"), pos("qx")) {
                    header = Some((y, a, q));
                }
            }
            Some((iy, ia, iq)) => {
                let get = |i: usize| {
                    fields.get(i).copied().ok_or(Error::Parse {
                        line: lineno,
                        msg: "truncated HMD row".into(),
                    })
                };
                let age_field = get(ia)?;
                if age_field.ends_with('+') {
                    continue;
                }
                let year = parse_int(get(iy)?, lineno)?;
                let age = parse_int(age_field, lineno)?;
                let q = parse_f64(get(iq)?, lineno)?;
                rows.push((age, year, q));
            }
        }
    }
    if header.is_none() {
        return Err(Error::Parse {
            line: 1,
            msg: "no `year,age,qx` CSV header or HMD `Year Age ... qx` header found".into(),
        });
    }
    LifeTable::from_entries(rows)
}

fn parse_int(s: &str, line: usize) -> Result<i32> {
    s.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("invalid integer `{s}`"),
    })
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("invalid number `{s}`"),
    })
}

/// One-year death probabilities along the diagonal
/// `(x0 + m - 1, y0 + m - 1)` for `m = 1..=horizon`.
pub fn table_deltas(table: &LifeTable, x0: i32, y0: i32, horizon: usize) -> Result<Vec<f64>> {
    (0..horizon as i32)
        .map(|h| {
            let (age, year) = (x0 + h, y0 + h);
            table.get(age, year).ok_or(Error::Range { age, year })
        })
        .collect()
}

/// Period table from a Gompertz force of mortality
/// `mu(x) = exp((x - modal_age) / dispersion) / dispersion`, identical for
/// every year in `years`.
pub fn gompertz_table(
    modal_age: f64,
    dispersion: f64,
    ages: std::ops::RangeInclusive<i32>,
    years: std::ops::RangeInclusive<i32>,
) -> Result<LifeTable> {
    if dispersion <= 0.0 {
        return Err(Error::Validation("Gompertz dispersion must be positive".into()));
    }
    let mut rows = Vec::new();
    for age in ages {
        // integrated hazard over [age, age + 1)
        let h = ((age as f64 - modal_age) / dispersion).exp() * ((1.0 / dispersion).exp() - 1.0);
        let q = (-(-h).exp_m1()).min(1.0 - 1e-10);
        for year in years.clone() {
            rows.push((age, year, q));
        }
    }
    LifeTable::from_entries(rows)
}
