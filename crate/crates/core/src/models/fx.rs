use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("column {0:?} not found in header")]
    MissingColumn(String),
    #[error("row {row}: missing value in column {column:?}")]
    MissingValue { row: usize, column: String },
    #[error("row {row}: cannot parse {value:?} in column {column:?}")]
    BadNumber { row: usize, column: String, value: String },
    #[error("row {row}: {value:?} is not an ISO-8601 date")]
    BadDate { row: usize, value: String },
    #[error("row {row}: dates are not strictly increasing")]
    NonMonotoneDates { row: usize },
    #[error("row {row}: non-positive rate in column {column:?}")]
    NonPositiveRate { row: usize, column: String },
    #[error("fewer than two rows in the selected range")]
    TooFewRows,
}

#[derive(Debug, Clone, Default)]
pub struct FxOptions {
    /// Columns to keep, in order. Empty means every non-date column.
    pub columns: Vec<String>,
    pub from: Option<NaiveDate>,
    pub to: Option<NaiveDate>,
    /// Drop rows with a missing rate instead of failing.
    pub drop_missing: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FxReturns {
    pub currencies: Vec<String>,
    /// Date of the later rate in each return.
    pub dates: Vec<NaiveDate>,
    /// `log(rate_t / rate_{t-1})`, one row per return.
    pub returns: Vec<Vec<f64>>,
}

impl FxReturns {
    /// Same returns with one currency removed.
    pub fn without(&self, currency: &str) -> Self {
        let keep: Vec<usize> = (0..self.currencies.len()).filter(|&i| self.currencies[i] != currency).collect();
        FxReturns {
            currencies: keep.iter().map(|&i| self.currencies[i].clone()).collect(),
            dates: self.dates.clone(),
            returns: self.returns.iter().map(|r| keep.iter().map(|&i| r[i]).collect()).collect(),
        }
    }
}

fn is_missing(cell: &str) -> bool {
    matches!(cell.trim(), "" | "NA" | "ND" | "." | "NaN" | "nan")
}

/// Monthly log returns from a CSV whose first column is an ISO date and whose
/// remaining columns are exchange rates.
pub fn load_fx_returns(path: &Path, options: &FxOptions) -> Result<FxReturns, IngestError> {
    let file = std::fs::File::open(path).map_err(|source| IngestError::Io { path: path.to_path_buf(), source })?;
    read_fx_returns(file, options)
}

pub fn read_fx_returns<R: std::io::Read>(reader: R, options: &FxOptions) -> Result<FxReturns, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let selected: Vec<String> = if options.columns.is_empty() {
        header.iter().skip(1).cloned().collect()
    } else {
        options.columns.clone()
    };
    let indices = selected
        .iter()
        .map(|c| header.iter().position(|h| h == c).ok_or_else(|| IngestError::MissingColumn(c.clone())))
        .collect::<Result<Vec<_>, _>>()?;

    let mut dates = Vec::new();
    let mut rates: Vec<Vec<f64>> = Vec::new();
    let mut last_date: Option<NaiveDate> = None;
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row = i + 2;
        let raw_date = record.get(0).unwrap_or("");
        let date = NaiveDate::parse_from_str(raw_date, "%Y-%m-%d")
            .map_err(|_| IngestError::BadDate { row, value: raw_date.to_string() })?;
        if last_date.is_some_and(|d| date <= d) {
            return Err(IngestError::NonMonotoneDates { row });
        }
        last_date = Some(date);
        if options.from.is_some_and(|f| date < f) || options.to.is_some_and(|t| date > t) {
            continue;
        }
        let mut values = Vec::with_capacity(indices.len());
        let mut missing = None;
        for (&col, name) in indices.iter().zip(&selected) {
            let cell = record.get(col).unwrap_or("");
            if is_missing(cell) {
                missing = Some(name.clone());
                break;
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| IngestError::BadNumber { row, column: name.clone(), value: cell.to_string() })?;
            if !v.is_finite() {
                missing = Some(name.clone());
                break;
            }
            if v <= 0.0 {
                return Err(IngestError::NonPositiveRate { row, column: name.clone() });
            }
            values.push(v);
        }
        match missing {
            Some(_) if options.drop_missing => continue,
            Some(column) => return Err(IngestError::MissingValue { row, column }),
            None => {
                dates.push(date);
                rates.push(values);
            }
        }
    }
    if rates.len() < 2 {
        return Err(IngestError::TooFewRows);
    }
    let returns = rates.windows(2).map(|w| w[1].iter().zip(&w[0]).map(|(b, a)| (b / a).ln()).collect()).collect();
    Ok(FxReturns { currencies: selected, dates: dates[1..].to_vec(), returns })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(text: &str, options: &FxOptions) -> Result<FxReturns, IngestError> {
        read_fx_returns(text.as_bytes(), options)
    }

    #[test]
    fn constant_rates_give_zero_returns() {
        let out = read("date,EUR\n2000-01-01,1.5\n2000-02-01,1.5\n2000-03-01,1.5\n", &FxOptions::default()).unwrap();
        assert_eq!(out.returns, vec![vec![0.0], vec![0.0]]);
    }

    #[test]
    fn single_return() {
        let out = read("date,JPY\n2000-01-01,100\n2000-02-01,110\n", &FxOptions::default()).unwrap();
        assert_eq!(out.returns.len(), 1);
        assert!((out.returns[0][0] - 1.1f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn dropping_a_currency_reduces_width() {
        let text = "date,EUR,INR,JPY\n2000-01-01,1,40,100\n2000-02-01,1.1,41,101\n";
        let out = read(text, &FxOptions::default()).unwrap();
        let reduced = out.without("INR");
        assert_eq!(reduced.currencies, vec!["EUR", "JPY"]);
        assert_eq!(reduced.returns[0].len(), out.returns[0].len() - 1);
    }

    #[test]
    fn range_and_errors() {
        let text = "date,EUR\n2000-01-01,1\n2000-02-01,2\n2000-03-01,4\n2000-04-01,8\n";
        let options = FxOptions {
            from: NaiveDate::from_ymd_opt(2000, 2, 1),
            to: NaiveDate::from_ymd_opt(2000, 3, 31),
            ..Default::default()
        };
        let out = read(text, &options).unwrap();
        assert_eq!(out.returns.len(), 1);
        assert_eq!(out.dates, vec![NaiveDate::from_ymd_opt(2000, 3, 1).unwrap()]);

        let missing = "date,EUR,JPY\n2000-01-01,1,ND\n2000-02-01,2,3\n";
        assert!(matches!(
            read(missing, &FxOptions::default()),
            Err(IngestError::MissingValue { row: 2, ref column }) if column == "JPY"
        ));
        let unordered = "date,EUR\n2000-02-01,1\n2000-01-01,2\n";
        assert!(matches!(read(unordered, &FxOptions::default()), Err(IngestError::NonMonotoneDates { row: 3 })));
        let missing_col = FxOptions { columns: vec!["GBP".into()], ..Default::default() };
        assert!(matches!(read(text, &missing_col), Err(IngestError::MissingColumn(_))));
    }
}
