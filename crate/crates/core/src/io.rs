//! JSON schemas for states, bases, records and reports.
//!
//! All files are canonical: object keys sorted, pretty-printed, newline
//! terminated. Floats use the shortest representation that parses back to
//! the identical `f64`. Outcome keys are the integers 2m so half-integer
//! spins stay exact; joint outcomes use "2mA,2mB".
//!
//! State file:
//! ```json
//! { "two_l": 2, "matrix": [[[re, im], ...], ...] }
//! { "two_l_a": 2, "two_l_b": 2, "matrix": ... }
//! ```

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde_json::{json, Map, Value};

use crate::basis::OperatorBasis;
use crate::bipartite::{JointEntry, JointRecord};
use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::measurement::{MeasurementRecord, OutcomeData, RecordEntry};
use crate::spin::{DensityMatrix, Direction, SpinLength};
use crate::tomography::ReconstructionReport;

/// Serialize as canonical JSON text.
pub fn to_canonical_string(value: &Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("JSON values always serialize");
    s.push('\n');
    s
}

pub fn parse(text: &str) -> Result<Value> {
    serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("malformed JSON: {e}")))
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

fn field<'a>(obj: &'a Value, key: &str) -> Result<&'a Value> {
    obj.get(key).ok_or_else(|| invalid(format!("missing field '{key}'")))
}

fn as_f64(v: &Value, what: &str) -> Result<f64> {
    v.as_f64().ok_or_else(|| invalid(format!("'{what}' must be a number")))
}

fn as_u64(v: &Value, what: &str) -> Result<u64> {
    v.as_u64().ok_or_else(|| invalid(format!("'{what}' must be a non-negative integer")))
}

fn spin_field(obj: &Value, key: &str) -> Result<SpinLength> {
    let raw = as_u64(field(obj, key)?, key)?;
    SpinLength::new(u32::try_from(raw).map_err(|_| Error::InvalidSpin(u32::MAX))?)
}

pub fn matrix_to_json(m: &CMatrix) -> Value {
    Value::Array(
        (0..m.nrows())
            .map(|r| Value::Array((0..m.ncols()).map(|c| json!([m[(r, c)].re, m[(r, c)].im])).collect()))
            .collect(),
    )
}

pub fn matrix_from_json(v: &Value) -> Result<CMatrix> {
    let rows = v.as_array().ok_or_else(|| invalid("matrix must be an array of rows"))?;
    let n = rows.len();
    if n == 0 {
        return Err(invalid("matrix is empty"));
    }
    let mut m = CMatrix::zeros(n, n);
    for (r, row) in rows.iter().enumerate() {
        let cells = row.as_array().ok_or_else(|| invalid("matrix row must be an array"))?;
        if cells.len() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: cells.len() });
        }
        for (c, cell) in cells.iter().enumerate() {
            let pair = cell.as_array().filter(|p| p.len() == 2).ok_or_else(|| invalid("matrix entries are [re, im]"))?;
            m[(r, c)] = Complex64::new(as_f64(&pair[0], "re")?, as_f64(&pair[1], "im")?);
        }
    }
    Ok(m)
}

/// Contents of a state file.
#[derive(Debug, Clone)]
pub enum StateFile {
    Single { l: SpinLength, rho: DensityMatrix },
    Pair { l_a: SpinLength, l_b: SpinLength, rho: DensityMatrix },
}

impl StateFile {
    pub fn rho(&self) -> &DensityMatrix {
        match self {
            StateFile::Single { rho, .. } | StateFile::Pair { rho, .. } => rho,
        }
    }
}

pub fn state_to_json(l: SpinLength, rho: &DensityMatrix) -> Value {
    json!({ "two_l": l.two_l(), "matrix": matrix_to_json(rho.matrix()) })
}

pub fn pair_state_to_json(l_a: SpinLength, l_b: SpinLength, rho: &DensityMatrix) -> Value {
    json!({ "two_l_a": l_a.two_l(), "two_l_b": l_b.two_l(), "matrix": matrix_to_json(rho.matrix()) })
}

pub fn state_from_json(v: &Value) -> Result<StateFile> {
    let matrix = matrix_from_json(field(v, "matrix")?)?;
    let (state, dim) = if v.get("two_l").is_some() {
        let l = spin_field(v, "two_l")?;
        (StateFile::Single { l, rho: DensityMatrix::new(matrix)? }, l.dimension())
    } else {
        let (l_a, l_b) = (spin_field(v, "two_l_a")?, spin_field(v, "two_l_b")?);
        (StateFile::Pair { l_a, l_b, rho: DensityMatrix::new(matrix)? }, l_a.dimension() * l_b.dimension())
    };
    if state.rho().dim() != dim {
        return Err(Error::DimensionMismatch { expected: dim, actual: state.rho().dim() });
    }
    Ok(state)
}

/// Basis dump: one object per member with n, i, coherence, part and matrix.
pub fn basis_to_json(basis: &OperatorBasis) -> Value {
    let members: Vec<Value> = basis
        .iter()
        .map(|(label, op)| {
            json!({
                "n": label.n,
                "i": label.i,
                "coherence": label.coherence,
                "part": label.part,
                "matrix": matrix_to_json(op.matrix()),
            })
        })
        .collect();
    json!({ "two_l": basis.l().two_l(), "members": members })
}

fn direction_fields(d: &Direction, suffix: &str, obj: &mut Map<String, Value>) {
    obj.insert(format!("theta{suffix}"), json!(d.theta));
    obj.insert(format!("phi{suffix}"), json!(d.phi));
}

fn direction_from(obj: &Value, suffix: &str) -> Result<Direction> {
    let theta = as_f64(field(obj, &format!("theta{suffix}"))?, "theta")?;
    let phi = as_f64(field(obj, &format!("phi{suffix}"))?, "phi")?;
    Ok(Direction::new(theta, phi))
}

fn outcome_object(keys: &[String], data: &OutcomeData, obj: &mut Map<String, Value>) {
    let mut outcomes = Map::new();
    match data {
        OutcomeData::Probabilities(p) => {
            for (k, v) in keys.iter().zip(p) {
                outcomes.insert(k.clone(), json!(v));
            }
            obj.insert("probs".into(), Value::Object(outcomes));
        }
        OutcomeData::Counts(c) => {
            for (k, v) in keys.iter().zip(c) {
                outcomes.insert(k.clone(), json!(v));
            }
            obj.insert("counts".into(), Value::Object(outcomes));
            obj.insert("shots".into(), json!(c.iter().sum::<u64>()));
        }
    }
}

fn outcome_data(entry: &Value, keys: &[String], idx: usize) -> Result<OutcomeData> {
    let lookup = |map: &Map<String, Value>| -> Result<Vec<Value>> {
        if map.len() != keys.len() {
            return Err(Error::IncompleteRecord(format!(
                "entry {idx} has {} outcomes, expected {}",
                map.len(),
                keys.len()
            )));
        }
        keys.iter()
            .map(|k| {
                map.get(k)
                    .cloned()
                    .ok_or_else(|| Error::IncompleteRecord(format!("entry {idx} lacks outcome '{k}'")))
            })
            .collect()
    };
    if let Some(map) = entry.get("probs").and_then(Value::as_object) {
        let p = lookup(map)?.iter().map(|v| as_f64(v, "probability")).collect::<Result<Vec<_>>>()?;
        return Ok(OutcomeData::Probabilities(p));
    }
    if let Some(map) = entry.get("counts").and_then(Value::as_object) {
        let c = lookup(map)?.iter().map(|v| as_u64(v, "count")).collect::<Result<Vec<_>>>()?;
        if let Some(shots) = entry.get("shots") {
            let shots = as_u64(shots, "shots")?;
            if shots != c.iter().sum::<u64>() {
                return Err(invalid(format!("entry {idx}: shots does not equal the sum of counts")));
            }
        }
        return Ok(OutcomeData::Counts(c));
    }
    Err(Error::IncompleteRecord(format!("entry {idx} has neither 'probs' nor 'counts'")))
}

fn single_keys(l: SpinLength) -> Vec<String> {
    (0..l.dimension()).map(|k| l.two_m(k).to_string()).collect()
}

fn joint_keys(l_a: SpinLength, l_b: SpinLength) -> Vec<String> {
    (0..l_a.dimension())
        .flat_map(|ka| (0..l_b.dimension()).map(move |kb| format!("{},{}", l_a.two_m(ka), l_b.two_m(kb))))
        .collect()
}

fn entries_of(v: &Value) -> Result<&Vec<Value>> {
    field(v, "entries")?.as_array().ok_or_else(|| invalid("'entries' must be an array"))
}

pub fn record_to_json(record: &MeasurementRecord) -> Value {
    let keys = single_keys(record.l());
    let entries: Vec<Value> = record
        .entries()
        .iter()
        .map(|e| {
            let mut obj = Map::new();
            direction_fields(&e.direction, "", &mut obj);
            outcome_object(&keys, &e.data, &mut obj);
            Value::Object(obj)
        })
        .collect();
    json!({ "two_l": record.l().two_l(), "entries": entries })
}

pub fn record_from_json(v: &Value) -> Result<MeasurementRecord> {
    let l = spin_field(v, "two_l")?;
    let keys = single_keys(l);
    let entries = entries_of(v)?
        .iter()
        .enumerate()
        .map(|(idx, e)| Ok(RecordEntry { direction: direction_from(e, "")?, data: outcome_data(e, &keys, idx)? }))
        .collect::<Result<Vec<_>>>()?;
    MeasurementRecord::new(l, entries)
}

pub fn joint_record_to_json(record: &JointRecord) -> Value {
    let keys = joint_keys(record.l_a(), record.l_b());
    let entries: Vec<Value> = record
        .entries()
        .iter()
        .map(|e| {
            let mut obj = Map::new();
            direction_fields(&e.direction_a, "_a", &mut obj);
            direction_fields(&e.direction_b, "_b", &mut obj);
            outcome_object(&keys, &e.data, &mut obj);
            Value::Object(obj)
        })
        .collect();
    json!({ "two_l_a": record.l_a().two_l(), "two_l_b": record.l_b().two_l(), "entries": entries })
}

pub fn joint_record_from_json(v: &Value) -> Result<JointRecord> {
    let (l_a, l_b) = (spin_field(v, "two_l_a")?, spin_field(v, "two_l_b")?);
    let keys = joint_keys(l_a, l_b);
    let entries = entries_of(v)?
        .iter()
        .enumerate()
        .map(|(idx, e)| {
            Ok(JointEntry {
                direction_a: direction_from(e, "_a")?,
                direction_b: direction_from(e, "_b")?,
                data: outcome_data(e, &keys, idx)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    JointRecord::new(l_a, l_b, entries)
}

/// Report layout shared by single and joint reconstructions. `state` holds the
/// state file of `rho_physical` when `project` is set, otherwise of `rho_raw`.
pub fn report_to_json<C>(report: &ReconstructionReport<C>, keyed: Vec<(String, f64)>, state: Value) -> Value {
    let coefficients: BTreeMap<String, f64> = keyed.into_iter().collect();
    json!({
        "coefficients": coefficients,
        "rho_raw": matrix_to_json(report.rho_raw.matrix()),
        "rho_physical": matrix_to_json(report.rho_physical.matrix()),
        "min_eigenvalue_raw": report.rho_raw.min_eigenvalue(),
        "residual_norm": report.residual_norm,
        "consistency_residuals": report.consistency_residuals,
        "condition_number": finite_or_null(report.condition_number),
        "state": state,
    })
}

fn finite_or_null(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

/// Directions file: either `[{"theta": .., "phi": ..}, ...]` or `{"directions": [...]}`.
pub fn directions_from_json(v: &Value) -> Result<Vec<Direction>> {
    let list = match v {
        Value::Array(a) => a,
        Value::Object(_) => field(v, "directions")?.as_array().ok_or_else(|| invalid("'directions' must be an array"))?,
        _ => return Err(invalid("directions file must be an array or an object")),
    };
    list.iter().map(|d| direction_from(d, "")).collect()
}

pub fn directions_to_json(dirs: &[Direction]) -> Value {
    Value::Array(dirs.iter().map(|d| json!({ "theta": d.theta, "phi": d.phi })).collect())
}
