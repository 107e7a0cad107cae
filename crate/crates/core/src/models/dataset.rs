use std::path::Path;

use serde::Serialize;

use crate::error::{Result, SmcError};

/// A simulated or loaded data set: one latent row and one observation row per time step.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub latent: Option<Vec<Vec<f64>>>,
    pub observations: Vec<Vec<f64>>,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> SmcError {
    SmcError::InvalidModel(format!("{}: {e}", path.display()))
}

impl Dataset {
    pub fn horizon(&self) -> usize {
        self.observations.len()
    }

    /// CSV with columns `t, x_1..x_d, y_1..y_k`.
    pub fn to_csv_string(&self) -> String {
        let d = self.latent.as_ref().and_then(|l| l.first()).map_or(0, Vec::len);
        let k = self.observations.first().map_or(0, Vec::len);
        let mut wtr = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["t".to_string()];
        header.extend((1..=d).map(|i| format!("x_{i}")));
        header.extend((1..=k).map(|i| format!("y_{i}")));
        wtr.write_record(&header).expect("in-memory write");
        for (t, y) in self.observations.iter().enumerate() {
            let mut row = vec![(t + 1).to_string()];
            if let Some(latent) = &self.latent {
                row.extend(latent[t].iter().map(|v| format!("{v:?}")));
            }
            row.extend(y.iter().map(|v| format!("{v:?}")));
            wtr.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(wtr.into_inner().expect("flush")).expect("utf8")
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()).map_err(|e| io_err(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        Self::from_csv_str(&text).map_err(|e| io_err(path, e))
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| SmcError::InvalidModel(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let xs: Vec<usize> = (0..header.len()).filter(|&i| header[i].starts_with("x_")).collect();
        let ys: Vec<usize> = (0..header.len()).filter(|&i| header[i].starts_with("y_")).collect();
        if ys.is_empty() {
            return Err(SmcError::InvalidModel("dataset has no y_ columns".into()));
        }
        let mut latent = Vec::new();
        let mut observations = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(|e| SmcError::InvalidModel(e.to_string()))?;
            let parse = |cols: &[usize]| -> Result<Vec<f64>> {
                cols.iter()
                    .map(|&c| {
                        record[c]
                            .trim()
                            .parse::<f64>()
                            .map_err(|_| SmcError::InvalidModel(format!("bad number {:?}", &record[c])))
                    })
                    .collect()
            };
            latent.push(parse(&xs)?);
            observations.push(parse(&ys)?);
        }
        Ok(Dataset { latent: (!xs.is_empty()).then_some(latent), observations })
    }
}

/// JSON sidecar describing how a data set was generated.
pub fn write_sidecar<T: Serialize>(path: &Path, params: &T, seed: u64) -> Result<()> {
    let value = serde_json::json!({ "seed": seed, "params": params });
    let text = serde_json::to_string_pretty(&value).expect("serializable");
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_exact() {
        let ds = Dataset {
            latent: Some(vec![vec![0.1, 1.0 / 3.0], vec![-2.5e-8, 7.0]]),
            observations: vec![vec![std::f64::consts::E], vec![-0.0]],
        };
        let text = ds.to_csv_string();
        assert!(text.starts_with("t,x_1,x_2,y_1\n"));
        assert_eq!(Dataset::from_csv_str(&text).unwrap(), ds);
    }
}
