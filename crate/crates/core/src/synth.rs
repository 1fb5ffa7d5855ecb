//! Deterministic synthetic OHLCV generators.
//!
//! Two families: a noisy sine wave whose next-day return is a clean function
//! of the day index (used to check that the model learns at all), and a
//! seasonal geometric random walk that imitates daily equity data (used for
//! the pinned desk-scale snapshots). Both are pure functions of their spec,
//! so regenerating a series always reproduces the committed bytes.

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::ingest::{OhlcvRecord, RawSeries};

/// First trading day of every generated series.
fn start_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2015, 1, 2).expect("valid calendar date")
}

/// Spec for a sinusoidal price series with small Gaussian close noise.
#[derive(Debug, Clone, PartialEq)]
pub struct SineSpec {
    pub symbol: String,
    pub n: usize,
    /// Price level the sine oscillates around.
    pub base: f64,
    /// Peak price deviation as a fraction of `base`.
    pub amplitude: f64,
    /// Days per full cycle.
    pub period: f64,
    /// Std of the relative noise applied to each close.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SineSpec {
    fn default() -> Self {
        Self {
            symbol: "SINE".into(),
            n: 2000,
            base: 100.0,
            amplitude: 0.3,
            period: 32.0,
            noise: 5e-4,
            seed: 7,
        }
    }
}

/// Build the noisy-sine series. The deterministic close level for day `i` is
/// `base · (1 + amplitude · sin(2πi/period + phase))`.
pub fn noisy_sine_series(spec: &SineSpec) -> RawSeries {
    assert!(spec.n >= 2, "series needs at least two rows");
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let phase = rng.gen_range(0.0..std::f64::consts::TAU);
    let level = |i: usize| {
        let angle = std::f64::consts::TAU * i as f64 / spec.period + phase;
        spec.base * (1.0 + spec.amplitude * angle.sin())
    };

    let mut records = Vec::with_capacity(spec.n);
    let mut prev_close = level(0);
    for i in 0..spec.n {
        let z: f64 = rng.sample(StandardNormal);
        let close = level(i) * (1.0 + spec.noise * z);
        let open = if i == 0 { close } else { prev_close };
        let bars = bar_around(open, close, spec.noise, &mut rng);
        let volume_wave = 1.0 + 0.5 * (std::f64::consts::TAU * i as f64 / 47.0).sin();
        let volume = (5e6 * volume_wave * (1.0 + 0.05 * rng.gen::<f64>())).round().max(1.0);
        records.push(OhlcvRecord {
            date: start_date() + chrono::Days::new(i as u64),
            open: bars.0,
            high: bars.1,
            low: bars.2,
            close,
            volume,
        });
        prev_close = close;
    }
    RawSeries { symbol: spec.symbol.clone(), records }
}

/// Spec for a seasonal geometric random walk.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketSpec {
    pub symbol: String,
    pub n: usize,
    pub seed: u64,
    pub start_price: f64,
    /// Daily log-price drift.
    pub drift: f64,
    /// Daily log-return std.
    pub volatility: f64,
    /// Relative amplitude of the multiplicative seasonal component.
    pub seasonal_amp: f64,
    /// Days per seasonal cycle.
    pub seasonal_period: f64,
    pub base_volume: f64,
}

/// Build the seasonal random-walk series: close on day `i` is
/// `exp(log-walk_i) · (1 + seasonal_amp · sin(2πi/period + phase))`.
pub fn market_series(spec: &MarketSpec) -> RawSeries {
    assert!(spec.n >= 2, "series needs at least two rows");
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let phase = rng.gen_range(0.0..std::f64::consts::TAU);

    let mut records = Vec::with_capacity(spec.n);
    let mut log_price = spec.start_price.ln();
    let mut prev_close = 0.0;
    for i in 0..spec.n {
        let z: f64 = rng.sample(StandardNormal);
        log_price += spec.drift + spec.volatility * z;
        let seasonal =
            1.0 + spec.seasonal_amp * (std::f64::consts::TAU * i as f64 / spec.seasonal_period + phase).sin();
        let close = log_price.exp() * seasonal;
        let open = if i == 0 { close } else { prev_close };
        let bars = bar_around(open, close, spec.volatility * 0.3, &mut rng);
        let volume = (spec.base_volume
            * (1.0 + 0.4 * (std::f64::consts::TAU * i as f64 / 63.0).cos())
            * (1.0 + 0.15 * rng.gen::<f64>()))
        .round()
        .max(1.0);
        records.push(OhlcvRecord {
            date: start_date() + chrono::Days::new(i as u64),
            open: bars.0,
            high: bars.1,
            low: bars.2,
            close,
            volume,
        });
        prev_close = close;
    }
    RawSeries { symbol: spec.symbol.clone(), records }
}

/// Widen (open, close) into a valid bar: high above both, low below both,
/// everything strictly positive.
fn bar_around(open: f64, close: f64, spread: f64, rng: &mut ChaCha20Rng) -> (f64, f64, f64) {
    let hi_z: f64 = rng.gen::<f64>();
    let lo_z: f64 = rng.gen::<f64>();
    // The 1e-4 relative margin keeps the bracket valid even after prices are
    // quantized to four decimals in snapshot CSVs.
    let top = open.max(close);
    let bottom = open.min(close);
    let high = top * (1.0 + spread.abs() * hi_z + 1e-4);
    let low = (bottom * (1.0 - spread.abs() * lo_z - 1e-4)).max(bottom * 0.5);
    (open, high, low)
}

/// Specs behind the five pinned snapshot files in `data/snapshots/`.
pub fn snapshot_specs() -> Vec<MarketSpec> {
    let spec = |symbol: &str, n, seed, start_price, drift, volatility, amp, period, base_volume| {
        MarketSpec {
            symbol: symbol.into(),
            n,
            seed,
            start_price,
            drift,
            volatility,
            seasonal_amp: amp,
            seasonal_period: period,
            base_volume,
        }
    };
    vec![
        spec("COST", 1142, 101, 480.0, 3e-4, 0.011, 0.08, 36.0, 2.1e6),
        spec("IBM", 1912, 102, 140.0, 1e-4, 0.012, 0.07, 29.0, 4.8e6),
        spec("META", 654, 103, 290.0, 4e-4, 0.016, 0.09, 33.0, 1.9e7),
        spec("MSFT", 1152, 104, 330.0, 3e-4, 0.013, 0.08, 27.0, 2.4e7),
        spec("TMUS", 487, 105, 142.0, 2e-4, 0.010, 0.06, 31.0, 5.3e6),
    ]
}

/// Render a series in the snapshot CSV layout. Prices carry four decimals,
/// volume is integral; `parse_csv` reads this back without rejected rows.
pub fn to_csv_string(series: &RawSeries) -> String {
    let mut out = String::from("Date,Open,High,Low,Close,Volume\n");
    for r in &series.records {
        out.push_str(&format!(
            "{},{:.4},{:.4},{:.4},{:.4},{:.0}\n",
            r.date, r.open, r.high, r.low, r.close, r.volume
        ));
    }
    out
}
