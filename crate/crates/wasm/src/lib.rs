//! Browser bindings for the static demo in `www/`. Every function returns a
//! JSON string so the page needs no generated type definitions.

use ijforest::dataset::gen_synthetic;
use ijforest::experiments::{run_bias_grid, BiasGridSpec};
use ijforest::forest::train;
use ijforest::jackknife::{forest_estimate, interval};
use ijforest::oracle::{exact_resampling, monte_carlo_vij, BaseLearnerSpec};
use ijforest::{ForestConfig, LabeledExample, SyntheticKind, SyntheticSpec, TrainingSet, TreeConfig, TreeMode};
use serde_json::json;
use wasm_bindgen::prelude::*;

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn parse_mode(mode: &str) -> Result<TreeMode, JsError> {
    mode.parse().map_err(js_err)
}

/// Mean forest prediction on a `resolution²` grid when every label is an
/// independent Bernoulli(`p`) draw, so any structure in the map is bias.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn bias_grid(
    mode: &str,
    n: usize,
    s: usize,
    b: usize,
    resolution: usize,
    replicates: usize,
    p: f64,
    seed: u64,
) -> Result<String, JsError> {
    let spec = BiasGridSpec { n, s, b, mode: parse_mode(mode)?, resolution, r: replicates, p, seed };
    let grid = run_bias_grid(&spec).map_err(js_err)?;
    Ok(json!({
        "cells": grid.cells,
        "corner_mean": grid.corner_mean(),
        "center_mean": grid.center_mean(),
        "max_abs_deviation": grid.max_abs_deviation(p),
    })
    .to_string())
}

/// Trains a forest on the two-dimensional cosine surface and predicts along
/// `x1 ∈ [0, 1]` at fixed `x2`, with jackknife intervals.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn prediction_slice(
    mode: &str,
    n: usize,
    b: usize,
    noise_sd: f64,
    x2: f64,
    points: usize,
    level: f64,
    seed: u64,
) -> Result<String, JsError> {
    let spec = SyntheticSpec::new(SyntheticKind::Cosine, 2).with_noise(noise_sd);
    let ts = gen_synthetic(&spec, n, seed).map_err(js_err)?;
    let tree = TreeConfig { mode: parse_mode(mode)?, ..TreeConfig::default() };
    let model = train(&ts, &ForestConfig::new(tree).with_b(b).with_seed(seed)).map_err(js_err)?;
    let mut rows = Vec::with_capacity(points);
    for k in 0..points {
        let x1 = if points > 1 { k as f64 / (points - 1) as f64 } else { 0.5 };
        let x = [x1, x2];
        let (y, est) = forest_estimate(&model, &x).map_err(js_err)?;
        let iv = interval(y, &est, level).map_err(js_err)?;
        rows.push(json!({
            "x1": x1,
            "y_hat": y,
            "lower": iv.lower(),
            "upper": iv.upper(),
            "truth": spec.true_mean(&x).map_err(js_err)?,
            "variance": est.corrected,
            "degenerate": iv.degenerate,
        }));
    }
    let train_points: Vec<[f64; 3]> = (0..ts.n()).map(|i| [ts.row(i)[0], ts.row(i)[1], ts.label(i)]).collect();
    Ok(json!({ "s": model.s(), "b": model.b(), "rows": rows, "train": train_points }).to_string())
}

/// Exact jackknife variance of the subsample-mean learner by enumeration,
/// next to plug-in and bias-corrected Monte Carlo estimates.
#[wasm_bindgen]
pub fn jackknife_oracle(labels: &str, s: usize, b: usize, seed: u64) -> Result<String, JsError> {
    let ys = labels
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|e| js_err(format!("label {t:?}: {e}"))))
        .collect::<Result<Vec<_>, _>>()?;
    let ex: Vec<LabeledExample> = ys.iter().map(|&y| LabeledExample::new(vec![y], y)).collect();
    let ts = TrainingSet::from_examples(1, &ex).map_err(js_err)?;
    let learner = BaseLearnerSpec::SubsampleMean;
    let exact = exact_resampling(&ts, &learner, s).map_err(js_err)?;
    let mc = monte_carlo_vij(&ts, &learner, s, b, seed).map_err(js_err)?;
    Ok(json!({
        "n": ts.n(),
        "subsamples": exact.subsamples.to_string(),
        "exact": exact.vij,
        "plugin": mc.plugin,
        "correction": mc.correction,
        "corrected": mc.corrected,
        "relative_error": if exact.vij > 0.0 { Some((mc.corrected - exact.vij).abs() / exact.vij) } else { None },
    })
    .to_string())
}
