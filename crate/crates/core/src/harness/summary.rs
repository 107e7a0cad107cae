use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::grid::ResultRecord;
use super::{io_error, HarnessError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CellStatus {
    Ok,
    /// Fewer than two runs; no standard deviation is reported.
    InsufficientReplicates,
    /// At least one run failed, which counts as an unbounded standard deviation.
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub dataset: usize,
    pub scheme: String,
    pub iteration: usize,
    pub runs: usize,
    pub failed_runs: usize,
    pub status: CellStatus,
    pub sd_log_z: Option<f64>,
    pub bpf_sd_log_z: Option<f64>,
    /// `sd / bpf_sd` when both are available.
    pub ratio: Option<f64>,
    /// Mean over bootstrap runs of the time-averaged relative weight variance.
    pub bpf_weight_variance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProportionSummary {
    pub scheme: String,
    pub iteration: usize,
    /// Datasets with a usable bootstrap reference and a usable scheme result.
    pub datasets: usize,
    pub le_bpf: f64,
    pub le_tenth_bpf: f64,
    pub le_ten_bpf: f64,
    /// Datasets whose sd exceeds ten times the bootstrap's, failures included.
    pub above_ten_bpf: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub datasets: Vec<DatasetSummary>,
    pub proportions: Vec<ProportionSummary>,
}

impl GridSummary {
    pub fn proportion(&self, scheme: &str, iteration: usize) -> Option<&ProportionSummary> {
        self.proportions.iter().find(|p| p.scheme == scheme && p.iteration == iteration)
    }

    pub fn datasets_csv(&self) -> String {
        let mut out = String::from("dataset,scheme,iteration,runs,failed_runs,status,sd_log_z,bpf_sd_log_z,ratio,bpf_weight_variance\n");
        let opt = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
        for d in &self.datasets {
            let status = serde_json::to_value(d.status).expect("serializable");
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                d.dataset,
                d.scheme,
                d.iteration,
                d.runs,
                d.failed_runs,
                status.as_str().expect("string"),
                opt(d.sd_log_z),
                opt(d.bpf_sd_log_z),
                opt(d.ratio),
                opt(d.bpf_weight_variance)
            ));
        }
        out
    }

    pub fn proportions_csv(&self) -> String {
        let mut out = String::from("scheme,iteration,datasets,le_bpf,le_tenth_bpf,le_ten_bpf,above_ten_bpf\n");
        for p in &self.proportions {
            out.push_str(&format!(
                "{},{},{},{:?},{:?},{:?},{}\n",
                p.scheme, p.iteration, p.datasets, p.le_bpf, p.le_tenth_bpf, p.le_ten_bpf, p.above_ten_bpf
            ));
        }
        out
    }
}

fn sample_sd(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

struct Cell {
    log_z: Vec<f64>,
    failed: usize,
    weight_variance: Vec<f64>,
}

/// Per-dataset standard deviations and bootstrap-relative proportions.
pub fn summarize(records: &[ResultRecord]) -> GridSummary {
    let mut cells: BTreeMap<(usize, String, usize), Cell> = BTreeMap::new();
    for r in records {
        let cell = cells
            .entry((r.dataset, r.scheme.clone(), r.iteration))
            .or_insert_with(|| Cell { log_z: Vec::new(), failed: 0, weight_variance: Vec::new() });
        match r.log_z.filter(|v| v.is_finite()) {
            Some(v) => {
                cell.log_z.push(v);
                cell.weight_variance.extend(r.weight_variance.filter(|w| w.is_finite()));
            }
            None => cell.failed += 1,
        }
    }
    let status_sd = |c: &Cell| -> (CellStatus, Option<f64>) {
        if c.failed > 0 {
            (CellStatus::Failed, None)
        } else if c.log_z.len() < 2 {
            (CellStatus::InsufficientReplicates, None)
        } else {
            (CellStatus::Ok, Some(sample_sd(&c.log_z)))
        }
    };
    let mut datasets = Vec::new();
    for ((dataset, scheme, iteration), cell) in &cells {
        let bpf = cells.get(&(*dataset, "bootstrap".to_string(), 0));
        let bpf_sd = bpf.and_then(|b| status_sd(b).1);
        let bpf_wv = bpf.filter(|b| !b.weight_variance.is_empty()).map(|b| {
            b.weight_variance.iter().sum::<f64>() / b.weight_variance.len() as f64
        });
        let (status, sd) = status_sd(cell);
        datasets.push(DatasetSummary {
            dataset: *dataset,
            scheme: scheme.clone(),
            iteration: *iteration,
            runs: cell.log_z.len() + cell.failed,
            failed_runs: cell.failed,
            status,
            sd_log_z: sd,
            bpf_sd_log_z: bpf_sd,
            ratio: match (sd, bpf_sd) {
                (Some(s), Some(b)) if b > 0.0 => Some(s / b),
                _ => None,
            },
            bpf_weight_variance: bpf_wv,
        });
    }

    let mut groups: BTreeMap<(String, usize), Vec<&DatasetSummary>> = BTreeMap::new();
    for d in datasets.iter().filter(|d| d.scheme != "bootstrap") {
        groups.entry((d.scheme.clone(), d.iteration)).or_default().push(d);
    }
    let proportions = groups
        .into_iter()
        .map(|((scheme, iteration), rows)| {
            // a failed scheme counts as worse than any multiple of a usable bootstrap sd
            let ratios: Vec<f64> = rows
                .iter()
                .filter(|d| d.bpf_sd_log_z.is_some_and(|b| b > 0.0))
                .filter_map(|d| match d.status {
                    CellStatus::Ok => d.ratio,
                    CellStatus::Failed => Some(f64::INFINITY),
                    CellStatus::InsufficientReplicates => None,
                })
                .collect();
            let n = ratios.len();
            let frac = |k: f64| ratios.iter().filter(|r| **r <= k).count() as f64 / n as f64;
            ProportionSummary {
                scheme,
                iteration,
                datasets: n,
                le_bpf: frac(1.0),
                le_tenth_bpf: frac(0.1),
                le_ten_bpf: frac(10.0),
                above_ten_bpf: ratios.iter().filter(|r| **r > 10.0).count(),
            }
        })
        .collect();
    GridSummary { datasets, proportions }
}

/// Records from a JSON-lines file.
pub fn read_records(path: &Path) -> Result<Vec<ResultRecord>, HarnessError> {
    let file = std::fs::File::open(path).map_err(io_error(path))?;
    let mut out = Vec::new();
    for (k, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_error(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| HarnessError::Config(format!("{}:{}: {e}", path.display(), k + 1)))?,
        );
    }
    Ok(out)
}
