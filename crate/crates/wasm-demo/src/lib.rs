//! Browser bindings for the planner: boundary tables, a performance sweep
//! with charts, and dataset ingestion. Each operation takes and returns
//! strings so the page needs no generated glue beyond `wasm-bindgen`.
//!
//! The `*_json` functions hold the logic and run natively as well.

use enrichment_core::export::{self, performance_charts, performance_table_csv};
use enrichment_core::ingest::{estimate_population, parse_dataset, PopulationEstimate};
use enrichment_core::{
    estimate_performance, DesignTables, ParameterDocument, Parameters, PerformanceGrid,
};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
pub struct DesignsView {
    pub parameters: Parameters,
    pub tables: DesignTables,
    pub csv: TablesCsv,
}

#[derive(Debug, Serialize)]
pub struct TablesCsv {
    pub ad: String,
    pub sc: String,
    pub ss: String,
}

#[derive(Debug, Serialize)]
pub struct PerformanceView {
    pub grid: PerformanceGrid,
    pub csv: String,
    pub charts: Vec<String>,
    pub wall_time_secs: f64,
}

fn resolve(params_json: &str) -> Result<Parameters, String> {
    let doc: ParameterDocument = if params_json.trim().is_empty() {
        ParameterDocument::default()
    } else {
        serde_json::from_str(params_json).map_err(|e| format!("invalid parameters: {e}"))?
    };
    doc.resolve().map_err(|e| e.to_string())
}

fn calibrate(params: &Parameters) -> Result<DesignTables, String> {
    DesignTables::calibrate(&params.design, &params.population, &params.mc.calibration())
        .map_err(|e| e.to_string())
}

fn to_json<T: Serialize>(value: &T) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

/// Calibrated boundary tables for AD, SC and SS as JSON.
pub fn designs_json(params_json: &str) -> Result<String, String> {
    let parameters = resolve(params_json)?;
    let tables = calibrate(&parameters)?;
    let csv = TablesCsv {
        ad: export::adaptive_table_csv(&tables.adaptive),
        sc: export::standard_table_csv(&tables.combined),
        ss: export::standard_table_csv(&tables.subpop1),
    };
    to_json(&DesignsView { parameters, tables, csv })
}

/// Performance sweep over the effect grid with CSV export and SVG charts.
pub fn performance_json(params_json: &str) -> Result<String, String> {
    let params = resolve(params_json)?;
    let tables = calibrate(&params)?;
    let grid = estimate_performance(&params.design, &params.population, &tables, &params.grid, &params.mc)
        .map_err(|e| e.to_string())?;
    to_json(&PerformanceView {
        csv: performance_table_csv(&grid),
        charts: performance_charts(&grid),
        wall_time_secs: grid.wall_time_secs,
        grid,
    })
}

/// Population estimates from a `subpopulation,treatment,outcome` CSV.
pub fn ingest_json(csv_text: &str) -> Result<String, String> {
    let records = parse_dataset(csv_text.as_bytes()).map_err(|e| e.to_string())?;
    let estimate: PopulationEstimate = estimate_population(&records).map_err(|e| e.to_string())?;
    to_json(&estimate)
}

#[wasm_bindgen]
pub fn designs(params_json: &str) -> Result<String, JsError> {
    designs_json(params_json).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn performance(params_json: &str) -> Result<String, JsError> {
    performance_json(params_json).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn ingest(csv_text: &str) -> Result<String, JsError> {
    ingest_json(csv_text).map_err(|e| JsError::new(&e))
}
