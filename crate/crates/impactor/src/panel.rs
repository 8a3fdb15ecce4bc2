//! Year-indexed multi-country panel: ingestion, validation, selection,
//! aggregation and descriptive statistics.
//!
//! The input format is a wide CSV: a `year` column followed by one column per
//! country code, one row per calendar year, values being non-negative
//! (possibly fractional) patent counts.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::ops::Range;

use serde::Serialize;

use crate::error::Error;
use crate::stats;
use crate::Result;

const MODULE: &str = "panel";

/// Immutable year × country matrix of fractional patent counts.
#[derive(Debug, Clone, PartialEq)]
pub struct PatentPanel {
    years: Vec<i32>,
    countries: Vec<String>,
    /// Row-major: `values[year_index][country_index]`.
    values: Vec<Vec<f64>>,
}

impl PatentPanel {
    /// Builds a panel from parts, enforcing all invariants.
    pub fn new(years: Vec<i32>, countries: Vec<String>, values: Vec<Vec<f64>>) -> Result<Self> {
        if years.is_empty() || countries.is_empty() {
            return Err(Error::validation(MODULE, "empty panel"));
        }
        for w in years.windows(2) {
            if w[1] != w[0] + 1 {
                return Err(Error::validation(
                    MODULE,
                    format!("non-consecutive years: {} followed by {}", w[0], w[1]),
                ));
            }
        }
        for (i, c) in countries.iter().enumerate() {
            if countries[..i].contains(c) {
                return Err(Error::validation(MODULE, format!("duplicate country column `{c}`")));
            }
        }
        if values.len() != years.len() {
            return Err(Error::validation(MODULE, "row count does not match years"));
        }
        for (row, y) in values.iter().zip(&years) {
            if row.len() != countries.len() {
                return Err(Error::validation(MODULE, format!("row for year {y} has wrong width")));
            }
            for (v, c) in row.iter().zip(&countries) {
                if !v.is_finite() || *v < 0.0 {
                    return Err(Error::validation(
                        MODULE,
                        format!("invalid value {v} for year {y}, column {c}"),
                    ));
                }
            }
        }
        Ok(PatentPanel { years, countries, values })
    }

    pub fn years(&self) -> &[i32] {
        &self.years
    }

    pub fn countries(&self) -> &[String] {
        &self.countries
    }

    pub fn has_country(&self, code: &str) -> bool {
        self.countries.iter().any(|c| c == code)
    }

    fn country_index(&self, code: &str) -> Result<usize> {
        self.countries
            .iter()
            .position(|c| c == code)
            .ok_or_else(|| Error::validation(MODULE, format!("unknown country `{code}`")))
    }

    fn year_index(&self, year: i32) -> Result<usize> {
        if year < self.years[0] || year > *self.years.last().unwrap() {
            return Err(Error::validation(
                MODULE,
                format!(
                    "year {year} outside panel range {}..={}",
                    self.years[0],
                    self.years.last().unwrap()
                ),
            ));
        }
        Ok((year - self.years[0]) as usize)
    }

    pub fn value(&self, year: i32, country: &str) -> Result<f64> {
        Ok(self.values[self.year_index(year)?][self.country_index(country)?])
    }

    /// Full time series for one country, in year order.
    pub fn column(&self, country: &str) -> Result<Vec<f64>> {
        let j = self.country_index(country)?;
        Ok(self.values.iter().map(|row| row[j]).collect())
    }

    /// Series restricted to an inclusive year range.
    pub fn column_over(&self, country: &str, years: &[i32]) -> Result<Vec<f64>> {
        let j = self.country_index(country)?;
        years
            .iter()
            .map(|&y| self.year_index(y).map(|i| self.values[i][j]))
            .collect()
    }
}

/// Partition of the panel years around an intervention.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeriodSplit {
    pub intervention_year: i32,
    /// Years strictly before the intervention (fitting range).
    pub pre_years: Vec<i32>,
    /// Years from the intervention onward (effect range); the intervention
    /// year itself is treated.
    pub post_years: Vec<i32>,
}

/// Per-country before/after change plus group shares of the grand total.
#[derive(Debug, Clone, Serialize)]
pub struct DescriptiveSummary {
    pub countries: Vec<CountryChange>,
    pub groups: Vec<GroupShare>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CountryChange {
    pub country: String,
    pub sum_before: f64,
    pub sum_after: f64,
    /// `None` when `sum_before` is zero (undefined, not infinity).
    pub pct_change: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GroupShare {
    pub name: String,
    pub total: f64,
    /// Percent of the grand total over all listed groups.
    pub share_pct: f64,
}

/// Parses and validates a wide CSV panel.
///
/// The header must start with a cell exactly equal to `year`; every data row
/// carries a year and one decimal value per country. Errors name the
/// offending row and column.
pub fn load_panel<R: Read>(source: R) -> Result<PatentPanel> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
    let headers = reader
        .headers()
        .map_err(|e| Error::validation(MODULE, format!("csv header: {e}")))?
        .clone();
    if headers.is_empty() {
        return Err(Error::validation(MODULE, "empty file"));
    }
    if &headers[0] != "year" {
        return Err(Error::validation(
            MODULE,
            format!("first header cell must be `year`, got `{}`", &headers[0]),
        ));
    }
    let countries: Vec<String> = headers.iter().skip(1).map(str::to_owned).collect();
    if countries.is_empty() {
        return Err(Error::validation(MODULE, "no country columns"));
    }

    let mut years = Vec::new();
    let mut values = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row_no = i + 2; // 1-based, counting the header
        let record = record.map_err(|e| Error::validation(MODULE, format!("row {row_no}: {e}")))?;
        if record.len() != countries.len() + 1 {
            return Err(Error::validation(
                MODULE,
                format!("row {row_no}: expected {} cells, got {}", countries.len() + 1, record.len()),
            ));
        }
        let year: i32 = record[0].trim().parse().map_err(|_| {
            Error::validation(MODULE, format!("row {row_no}, column year: non-integer `{}`", &record[0]))
        })?;
        let mut row = Vec::with_capacity(countries.len());
        for (j, cell) in record.iter().skip(1).enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| {
                Error::validation(
                    MODULE,
                    format!("row {row_no}, column {}: non-numeric cell `{cell}`", countries[j]),
                )
            })?;
            if !v.is_finite() || v < 0.0 {
                return Err(Error::validation(
                    MODULE,
                    format!("row {row_no}, column {}: invalid value `{cell}`", countries[j]),
                ));
            }
            row.push(v);
        }
        years.push(year);
        values.push(row);
    }
    if years.is_empty() {
        return Err(Error::validation(MODULE, "empty file"));
    }
    PatentPanel::new(years, countries, values)
}

/// Writes a panel back to CSV with 17 significant digits per value, which is
/// enough for a bit-exact round trip through [`load_panel`].
pub fn save_panel<W: Write>(panel: &PatentPanel, sink: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(sink);
    let mut header = vec!["year".to_owned()];
    header.extend(panel.countries.iter().cloned());
    writer
        .write_record(&header)
        .map_err(|e| Error::validation(MODULE, format!("csv write: {e}")))?;
    for (y, row) in panel.years.iter().zip(&panel.values) {
        let mut record = vec![y.to_string()];
        record.extend(row.iter().map(|v| format_sig17(*v)));
        writer
            .write_record(&record)
            .map_err(|e| Error::validation(MODULE, format!("csv write: {e}")))?;
    }
    writer.flush()?;
    Ok(())
}

fn format_sig17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Splits the panel years at the intervention; the intervention year belongs
/// to the post period.
pub fn split_periods(panel: &PatentPanel, intervention_year: i32) -> Result<PeriodSplit> {
    let years = panel.years();
    let first = years[0];
    let last = *years.last().unwrap();
    if intervention_year <= first || intervention_year > last {
        return Err(Error::validation(
            MODULE,
            format!("intervention year {intervention_year} outside panel range {first}..={last}"),
        ));
    }
    let pre: Vec<i32> = years.iter().copied().filter(|y| *y < intervention_year).collect();
    let post: Vec<i32> = years.iter().copied().filter(|y| *y >= intervention_year).collect();
    if pre.len() < 3 {
        return Err(Error::validation(
            MODULE,
            format!("only {} pre-intervention years, need at least 3", pre.len()),
        ));
    }
    Ok(PeriodSplit { intervention_year, pre_years: pre, post_years: post })
}

/// Extends the panel with a synthetic column summing the member series.
pub fn aggregate_group(panel: &PatentPanel, members: &[String], name: &str) -> Result<PatentPanel> {
    if members.is_empty() {
        return Err(Error::validation(MODULE, "empty member set"));
    }
    if panel.has_country(name) {
        return Err(Error::validation(MODULE, format!("group name `{name}` collides with a country column")));
    }
    let mut sum = vec![0.0; panel.years.len()];
    for m in members {
        let col = panel.column(m)?;
        for (s, v) in sum.iter_mut().zip(col) {
            *s += v;
        }
    }
    let mut countries = panel.countries.clone();
    countries.push(name.to_owned());
    let values = panel
        .values
        .iter()
        .zip(&sum)
        .map(|(row, s)| {
            let mut r = row.clone();
            r.push(*s);
            r
        })
        .collect();
    PatentPanel::new(panel.years.clone(), countries, values)
}

/// Before/after sums with percent change per listed country, plus group
/// totals as shares of the grand total over all listed groups.
pub fn describe_change(
    panel: &PatentPanel,
    splits: &BTreeMap<String, i32>,
    groups: &BTreeMap<String, Vec<String>>,
) -> Result<DescriptiveSummary> {
    let mut countries = Vec::new();
    for (code, &year) in splits {
        let split = split_periods(panel, year)?;
        let before: f64 = panel.column_over(code, &split.pre_years)?.iter().sum();
        let after: f64 = panel.column_over(code, &split.post_years)?.iter().sum();
        let pct_change = if before == 0.0 { None } else { Some(100.0 * (after - before) / before) };
        countries.push(CountryChange { country: code.clone(), sum_before: before, sum_after: after, pct_change });
    }

    let mut totals = Vec::new();
    for (name, members) in groups {
        let mut total = 0.0;
        for m in members {
            total += panel.column(m)?.iter().sum::<f64>();
        }
        totals.push((name.clone(), total));
    }
    let grand: f64 = totals.iter().map(|(_, t)| t).sum();
    let groups = totals
        .into_iter()
        .map(|(name, total)| GroupShare {
            name,
            total,
            share_pct: if grand == 0.0 { 0.0 } else { 100.0 * total / grand },
        })
        .collect();

    Ok(DescriptiveSummary { countries, groups })
}

/// Centers and scales a series so the `reference` index range has sample
/// mean 0 and sample standard deviation 1. Returns `(standardized, offset,
/// scale)` with `x = offset + scale · z` exactly invertible.
pub fn standardize(series: &[f64], reference: Range<usize>) -> Result<(Vec<f64>, f64, f64)> {
    let slice = series
        .get(reference.clone())
        .ok_or_else(|| Error::validation(MODULE, "reference range outside series"))?;
    if slice.len() < 2 {
        return Err(Error::validation(MODULE, "reference range needs at least 2 elements"));
    }
    let offset = stats::mean(slice);
    let scale = stats::sample_sd(slice);
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::validation(MODULE, "zero variance on reference range"));
    }
    let z = series.iter().map(|x| (x - offset) / scale).collect();
    Ok((z, offset, scale))
}
