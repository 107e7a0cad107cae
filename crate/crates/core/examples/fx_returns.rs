//! Monthly log returns from an exchange-rate table, then a bootstrap MSV
//! likelihood at the empirical starting point.

use chrono::NaiveDate;
use twisted_smc::models::{read_fx_returns, FxOptions};
use twisted_smc::pmmh::{msv_initial_theta, Estimator, EstimatorSpec, LogLikelihood, MInit, MsvLikelihood};
use twisted_smc::rng::RngStreams;

const RATES: &str = "\
date,EUR,JPY,GBP,CHF
2000-01-01,1.0130,105.30,0.6190,1.6000
2000-02-01,0.9830,109.40,0.6260,1.6400
2000-03-01,0.9640,106.30,0.6280,1.6550
2000-04-01,0.9450,105.60,0.6320,1.6700
2000-05-01,0.9060,108.20,0.6590,1.7300
2000-06-01,0.9510,106.10,0.6640,1.6400
2000-07-01,0.9390,ND,0.6610,1.6500
2000-08-01,0.9050,108.10,0.6700,1.7100
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let options = FxOptions {
        columns: vec!["EUR".into(), "JPY".into(), "CHF".into()],
        from: Some(NaiveDate::from_ymd_opt(2000, 2, 1).unwrap()),
        to: None,
        drop_missing: true,
    };
    let fx = read_fx_returns(RATES.as_bytes(), &options)?;
    println!("{} returns for {:?}", fx.returns.len(), fx.currencies);
    for (date, r) in fx.dates.iter().zip(&fx.returns) {
        println!("{date}: {:+.4?}", r);
    }

    let theta = msv_initial_theta(&fx.returns, MInit::LogVariance);
    println!("initial theta {:.3?}", theta);
    let likelihood = MsvLikelihood { observations: fx.returns, spec: EstimatorSpec::new(Estimator::Bootstrap) };
    println!("bootstrap log Z at theta0 {:.3}", likelihood.log_likelihood(&theta, &RngStreams::from_seed(12))?);

    // a missing rate is an error unless the row is dropped
    let strict = FxOptions { drop_missing: false, ..options };
    println!("strict read: {}", read_fx_returns(RATES.as_bytes(), &strict).unwrap_err());
    Ok(())
}
