//! Browser bindings: waiting-time distribution, ratio grids and Monte Carlo
//! histograms. Each binding returns a JSON string.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use qrwt::analysis::{dominant_eigenvalue, mean_absorption, moments, waiting_pdf_capped};
use qrwt::montecarlo::estimate;
use qrwt::scheme::{parse_cutoff, SchemeSpec};
use qrwt::RepeaterParams;

/// Largest distribution prefix sent to the page.
pub const MAX_PDF_POINTS: u64 = 20_000;
/// Grid resolution cap per axis.
pub const MAX_GRID_STEPS: usize = 40;
pub const MAX_TRIALS: u64 = 2_000_000;

#[derive(Serialize)]
pub struct Distribution {
    pub states: usize,
    pub mean: f64,
    pub std_dev: f64,
    pub tail_lambda: f64,
    pub mass: f64,
    pub pdf: Vec<f64>,
}

#[derive(Serialize)]
pub struct RatioGrid {
    pub ps: Vec<f64>,
    pub as_: Vec<f64>,
    /// Row per `p`, column per `a`.
    pub values: Vec<Vec<f64>>,
    pub min: f64,
    pub max: f64,
}

#[derive(Serialize)]
pub struct Histogram {
    pub mean: f64,
    pub std_dev: f64,
    pub ci99: f64,
    pub exact_mean: Option<f64>,
    pub steps: Vec<u64>,
    pub counts: Vec<u64>,
}

fn spec(scheme: &str, n: usize, p: f64, a: f64, m: &str) -> Result<SchemeSpec, String> {
    let params = RepeaterParams::new(n, p, a)
        .and_then(|r| r.with_cutoff(parse_cutoff(m)?))
        .map_err(|e| e.to_string())?;
    let mut spec = SchemeSpec::new(scheme.parse().map_err(|e: qrwt::Error| e.to_string())?, params);
    spec.params.c = 1;
    Ok(spec)
}

fn json<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

pub fn distribution_json(scheme: &str, n: usize, p: f64, a: f64, m: &str, eps: f64) -> Result<String, String> {
    let chain = spec(scheme, n, p, a, m)?.build().map_err(|e| e.to_string())?;
    if chain.is_structured() {
        return Err("distribution of this size is too slow for the page; use the command-line tool".into());
    }
    let (mean, second) = moments(&chain).map_err(|e| e.to_string())?;
    let lambda = dominant_eigenvalue(&chain).map_err(|e| e.to_string())?.0;
    let pdf: Vec<f64> = match waiting_pdf_capped(&chain, eps, MAX_PDF_POINTS) {
        Ok(pdf) => pdf.into_iter().map(|x| x.1).collect(),
        Err(_) => waiting_pdf_capped(&chain, 0.5, MAX_PDF_POINTS)
            .map_err(|e| e.to_string())?
            .into_iter()
            .map(|x| x.1)
            .collect(),
    };
    json(&Distribution {
        states: chain.len(),
        mean: mean[0],
        std_dev: (second[0] - mean[0] * mean[0]).max(0.0).sqrt(),
        tail_lambda: lambda,
        mass: pdf.iter().sum(),
        pdf,
    })
}

fn axis(steps: usize) -> Vec<f64> {
    (1..=steps).map(|i| i as f64 / steps as f64).collect()
}

/// Ratio of mean waiting times of two schemes over `p, a` in `(0, 1]`.
pub fn ratio_grid_json(scheme: &str, baseline: &str, n: usize, steps: usize) -> Result<String, String> {
    if !(1..=MAX_GRID_STEPS).contains(&steps) {
        return Err(format!("steps must lie in 1..={MAX_GRID_STEPS}"));
    }
    let (ps, as_) = (axis(steps), axis(steps));
    let mean = |kind: &str, p: f64, a: f64| -> Result<f64, String> {
        let chain = spec(kind, n, p, a, "inf")?.build().map_err(|e| e.to_string())?;
        Ok(mean_absorption(&chain).map_err(|e| e.to_string())?[0])
    };
    let mut values = Vec::with_capacity(steps);
    for &p in &ps {
        let row = as_
            .iter()
            .map(|&a| Ok(mean(scheme, p, a)? / mean(baseline, p, a)?))
            .collect::<Result<Vec<f64>, String>>()?;
        values.push(row);
    }
    let flat = values.iter().flatten();
    let min = flat.clone().copied().fold(f64::INFINITY, f64::min);
    let max = flat.copied().fold(f64::NEG_INFINITY, f64::max);
    json(&RatioGrid {
        ps,
        as_,
        values,
        min,
        max,
    })
}

pub fn histogram_json(d: u32, p: f64, a: f64, cc: bool, trials: u64, seed: u64) -> Result<String, String> {
    if trials > MAX_TRIALS {
        return Err(format!("at most {MAX_TRIALS} trials in the page"));
    }
    let est = estimate(d, p, a, cc, trials, seed).map_err(|e| e.to_string())?;
    let exact_mean = if (1..=5).contains(&d) {
        let kind = if cc { "cc-doubling" } else { "doubling" };
        spec(kind, 1 << d, p, a, "inf")
            .ok()
            .and_then(|s| s.build().ok())
            .and_then(|c| mean_absorption(&c).ok())
            .map(|m| m[0])
    } else {
        Some(1.0 / p)
    };
    json(&Histogram {
        mean: est.mean,
        std_dev: est.variance.sqrt(),
        ci99: est.ci99,
        exact_mean,
        steps: est.histogram.keys().copied().collect(),
        counts: est.histogram.values().copied().collect(),
    })
}

#[wasm_bindgen]
pub fn distribution(scheme: &str, n: usize, p: f64, a: f64, m: &str, eps: f64) -> Result<String, JsValue> {
    distribution_json(scheme, n, p, a, m, eps).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn ratio_grid(scheme: &str, baseline: &str, n: usize, steps: usize) -> Result<String, JsValue> {
    ratio_grid_json(scheme, baseline, n, steps).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn histogram(d: u32, p: f64, a: f64, cc: bool, trials: u32, seed: u32) -> Result<String, JsValue> {
    histogram_json(d, p, a, cc, trials as u64, seed as u64).map_err(|e| JsValue::from_str(&e))
}
