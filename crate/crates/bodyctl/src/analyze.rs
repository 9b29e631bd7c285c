//! Offline mapping-curve and JND tables, as CSV.

use std::io::{self, Write};

use bodyctl_core::mapping::{self, JndParams, MappingError};
use bodyctl_core::MappingFn;

use crate::config::FunctionConfig;
use crate::wire::write_number;

#[derive(Debug, thiserror::Error)]
pub enum AnalyzeError {
    #[error("function: {0}")]
    Function(String),
    #[error("bad --params entry `{0}`: expected name=number")]
    Params(String),
    #[error(transparent)]
    Mapping(#[from] MappingError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Builds a mapping function from its configuration name (`linear`,
/// `exp_db`, `exp_norm`, `pitch_exp`) and `name=value,...` parameters.
pub fn parse_function(name: &str, params: &str) -> Result<MappingFn, AnalyzeError> {
    let mut obj = serde_json::Map::new();
    obj.insert("kind".into(), name.into());
    for entry in params.split(',').map(str::trim).filter(|e| !e.is_empty()) {
        let (k, v) = entry
            .split_once('=')
            .ok_or_else(|| AnalyzeError::Params(entry.into()))?;
        let v: f64 = v.trim().parse().map_err(|_| AnalyzeError::Params(entry.into()))?;
        let v = serde_json::Number::from_f64(v).ok_or_else(|| AnalyzeError::Params(entry.into()))?;
        obj.insert(k.trim().into(), v.into());
    }
    let f: FunctionConfig = serde_json::from_value(obj.into()).map_err(|e| AnalyzeError::Function(e.to_string()))?;
    let f = MappingFn::from(f);
    f.validate()?;
    Ok(f)
}

/// `s,m` over `points` grid values.
pub fn write_curve(out: &mut impl Write, f: &MappingFn, points: usize) -> Result<(), AnalyzeError> {
    let mut text = String::from("s,m\n");
    for (s, m) in mapping::curve(f, points) {
        write_number(&mut text, s);
        text.push(',');
        write_number(&mut text, m);
        text.push('\n');
    }
    out.write_all(text.as_bytes())?;
    Ok(())
}

/// `s,step_db,perceptible` for every grid value where the step is defined.
pub fn write_jnd(out: &mut impl Write, f: &MappingFn, params: JndParams) -> Result<(), AnalyzeError> {
    let report = mapping::jnd_analyze(f, params)?;
    let mut text = String::from("s,step_db,perceptible\n");
    for row in &report.rows {
        write_number(&mut text, row.s);
        text.push(',');
        write_number(&mut text, row.step_db);
        text.push_str(if row.perceptible { ",1\n" } else { ",0\n" });
    }
    out.write_all(text.as_bytes())?;
    Ok(())
}
