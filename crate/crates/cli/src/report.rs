//! Canonical JSON: sorted keys, floats as C-style `%.12e`, non-finite floats
//! as the strings "inf", "-inf", "nan". Byte-identical for identical values.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nsiss_core::certify::{CheckReport, ConditionSummary, Witness};
use serde_json::{Map, Value};

/// A float that survives JSON: non-finite values become strings.
pub fn num(x: f64) -> Value {
    if x.is_nan() {
        Value::String("nan".into())
    } else if x.is_infinite() {
        Value::String(if x > 0.0 { "inf" } else { "-inf" }.into())
    } else {
        serde_json::Number::from_f64(x).map(Value::Number).expect("finite")
    }
}

pub fn nums(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|&x| num(x)).collect())
}

pub fn opt(x: Option<f64>) -> Value {
    x.map_or(Value::Null, num)
}

pub fn obj<const N: usize>(entries: [(&str, Value); N]) -> Value {
    Value::Object(entries.into_iter().map(|(k, v)| (k.to_string(), v)).collect())
}

pub fn witness(w: &Witness) -> Value {
    obj([
        ("x", nums(&w.x)),
        ("u", nums(&w.u)),
        ("v", num(w.v)),
        ("lo", opt(w.lo)),
        ("hi", opt(w.hi)),
        ("margin", num(w.margin)),
    ])
}

pub fn condition(c: &ConditionSummary) -> Value {
    obj([
        ("pass", Value::Bool(c.pass())),
        ("checked", c.checked.into()),
        ("active", c.active.into()),
        ("failures", c.failures.into()),
        ("empty_lie", c.empty_lie.into()),
        ("worst_margin", num(c.worst_margin)),
        ("worst", c.worst.as_ref().map_or(Value::Null, witness)),
        ("failing", Value::Array(c.failing.iter().map(witness).collect())),
    ])
}

pub fn metrics(m: &BTreeMap<String, f64>) -> Value {
    Value::Object(m.iter().map(|(k, &v)| (k.clone(), num(v))).collect())
}

pub fn check_report(r: &CheckReport) -> Value {
    obj([
        ("pass", Value::Bool(r.pass)),
        ("conditions", Value::Object(r.conditions.iter().map(|(k, c)| (k.clone(), condition(c))).collect::<Map<_, _>>())),
        ("metrics", metrics(&r.metrics)),
        ("notes", Value::Array(r.notes.iter().cloned().map(Value::String).collect())),
    ])
}

pub use nsiss_core::format_e12 as format_float;

fn write_value(out: &mut String, v: &Value, indent: usize) {
    let pad = |n: usize| "  ".repeat(n);
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                write!(out, "{i}").unwrap();
            } else if let Some(u) = n.as_u64() {
                write!(out, "{u}").unwrap();
            } else {
                out.push_str(&format_float(n.as_f64().expect("float")));
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("string")),
        Value::Array(a) if a.is_empty() => out.push_str("[]"),
        Value::Array(a) => {
            out.push_str("[\n");
            for (k, item) in a.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                write_value(out, item, indent + 1);
                out.push_str(if k + 1 < a.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push(']');
        }
        Value::Object(m) if m.is_empty() => out.push_str("{}"),
        Value::Object(m) => {
            let mut keys: Vec<&String> = m.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (k, key) in keys.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                out.push_str(&serde_json::to_string(key).expect("key"));
                out.push_str(": ");
                write_value(out, &m[*key], indent + 1);
                out.push_str(if k + 1 < keys.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push('}');
        }
    }
}

pub fn canonical_json(v: &Value) -> String {
    let mut out = String::new();
    write_value(&mut out, v, 0);
    out.push('\n');
    out
}
