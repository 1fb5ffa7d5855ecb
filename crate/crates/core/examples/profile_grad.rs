//! Rough per-window cost of a forward+backward pass, used to budget the
//! training experiments. Run with `--release` for realistic numbers:
//!
//! ```text
//! cargo run --release -p fedseries-core --example profile_grad [d_model] [n_heads] [d_head] [d_ff] [n_encoders]
//! ```

use std::time::Instant;

use fedseries_core::model::{batch_gradient, init_params, ModelConfig, Sample};
use fedseries_core::tensor::Tensor;

fn main() {
    let args: Vec<usize> =
        std::env::args().skip(1).map(|a| a.parse().expect("usize args")).collect();
    let mut cfg = ModelConfig::default();
    if let [d_model, n_heads, d_head, d_ff, n_encoders] = args[..] {
        cfg.d_model = d_model;
        cfg.n_heads = n_heads;
        cfg.d_head = d_head;
        cfg.d_ff = d_ff;
        cfg.n_encoders = n_encoders;
    }
    println!("config: {cfg:?}");

    let params = init_params(&cfg, 7).unwrap();
    println!("params: {}", params.param_count());

    let rows = cfg.seq_len;
    let features: Vec<Tensor> = (0..64)
        .map(|w| {
            let data: Vec<f64> = (0..rows * cfg.n_features)
                .map(|i| 0.5 + 0.3 * ((i + w) as f64 * 0.37).sin())
                .collect();
            Tensor::new(vec![rows, cfg.n_features], data).unwrap()
        })
        .collect();
    let time_index: Vec<Vec<i64>> =
        (0..64).map(|w| (w as i64..w as i64 + rows as i64).collect()).collect();
    let samples: Vec<Sample> = features
        .iter()
        .zip(&time_index)
        .map(|(f, t)| Sample { features: f, time_index: t, target: 0.5 })
        .collect();

    // Warm-up, then timed passes.
    batch_gradient(&params, &cfg, &samples[..8]).unwrap();
    let start = Instant::now();
    let mut n = 0usize;
    while start.elapsed().as_secs_f64() < 5.0 {
        batch_gradient(&params, &cfg, &samples).unwrap();
        n += samples.len();
    }
    let per = start.elapsed().as_secs_f64() / n as f64;
    println!("{:.2} ms/window  ({n} windows timed)", per * 1e3);
    println!("10 epochs x 1576 windows = {:.0} s", per * 15760.0);
}
