//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Each export returns a JSON string. The work is done by the plain Rust
//! functions in [`demo`], which native tests call directly.

use wasm_bindgen::prelude::*;

pub mod demo;

/// Closed-form risk `G(a, theta)` over a grid of actions.
#[wasm_bindgen]
pub fn risk_curve(h: f64, b: f64, theta: f64, a_max: f64, points: u32) -> Result<String, JsError> {
    demo::risk_curve(h, b, theta, a_max, points as usize).map_err(|e| JsError::new(&e))
}

/// Exact posterior, NVB and LCVB densities plus the three decisions on one synthetic sample.
#[wasm_bindgen]
pub fn posterior_view(h: f64, theta0: f64, n: u32, seed: u32, action: f64) -> Result<String, JsError> {
    demo::posterior_view(h, theta0, n as usize, u64::from(seed), action).map_err(|e| JsError::new(&e))
}

/// Median action gap against `n` for NVB and LCVB over a few sample paths.
#[wasm_bindgen]
pub fn gap_curve(h: f64, replications: u32, seed: u32) -> Result<String, JsError> {
    demo::gap_curve(h, replications as usize, u64::from(seed)).map_err(|e| JsError::new(&e))
}
