use super::VarianceWindow;

/// CSV with header `step,estimator,variance`; windows without a variance are left empty.
pub fn windows_csv<'a>(runs: impl IntoIterator<Item = (&'a str, &'a [VarianceWindow])>) -> String {
    let mut out = String::from("step,estimator,variance\n");
    for (name, windows) in runs {
        for w in windows {
            let v = w.variance.map(|v| format!("{v:?}")).unwrap_or_default();
            out.push_str(&format!("{},{name},{v}\n", w.step));
        }
    }
    out
}

/// Empirical CDF of the window variances per estimator, header `estimator,variance,ecdf`.
pub fn ecdf_csv<'a>(runs: impl IntoIterator<Item = (&'a str, &'a [VarianceWindow])>) -> String {
    let mut out = String::from("estimator,variance,ecdf\n");
    for (name, windows) in runs {
        let mut v: Vec<f64> = windows.iter().filter_map(|w| w.variance).collect();
        v.sort_by(f64::total_cmp);
        let n = v.len() as f64;
        for (k, x) in v.iter().enumerate() {
            out.push_str(&format!("{name},{x:?},{:?}\n", (k + 1) as f64 / n));
        }
    }
    out
}
