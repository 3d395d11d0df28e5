//! Instance JSON schema:
//!
//! ```json
//! {"items":["a","b"],
//!  "agents":[{"id":"A","weight":1.0,"degree":1.0,
//!             "valuation":{"family":"linear","params":[3,1]}}]}
//! ```
//!
//! `family` is one of `linear`, `leontief`, `cobb_douglas`, `ces`; `ces`
//! also carries `rho`. `degree` is optional and defaults to 1.

use serde::Serialize;
use serde_json::{Map, Value};

use super::{validate_instance, Agent, Family, Instance, ValuationSpec, Violation};
use crate::error::{Error, Result};

#[derive(Debug, Serialize)]
pub struct InstanceDoc {
    pub items: Vec<String>,
    pub agents: Vec<AgentDoc>,
}

#[derive(Debug, Serialize)]
pub struct AgentDoc {
    pub id: String,
    pub weight: f64,
    pub degree: f64,
    pub valuation: ValuationDoc,
}

#[derive(Debug, Serialize)]
pub struct ValuationDoc {
    pub family: Family,
    pub params: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
}

impl From<&Instance> for InstanceDoc {
    fn from(inst: &Instance) -> Self {
        InstanceDoc {
            items: inst.items.clone(),
            agents: inst
                .agents
                .iter()
                .map(|a| AgentDoc {
                    id: a.id.clone(),
                    weight: a.weight,
                    degree: a.degree,
                    valuation: ValuationDoc {
                        family: a.valuation.family(),
                        params: a.valuation.params().to_vec(),
                        rho: match &a.valuation {
                            ValuationSpec::Ces { rho, .. } => Some(*rho),
                            _ => None,
                        },
                    },
                })
                .collect(),
        }
    }
}

/// Pretty JSON rendering of an instance; `parse_instance` reads it back.
pub fn render_instance(inst: &Instance) -> String {
    serde_json::to_string_pretty(&InstanceDoc::from(inst)).expect("instance serializes")
}

/// Parses and validates an instance document.
///
/// Every schema problem is reported with its JSON path; a document that
/// parses is then run through [`validate_instance`].
pub fn parse_instance(bytes: &[u8]) -> Result<Instance> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| Error::invalid("$", format!("input is not UTF-8: {e}")))?;
    let root: Value = serde_json::from_str(text)
        .map_err(|e| Error::invalid("$", format!("malformed JSON: {e}")))?;
    let mut errs = Vec::new();
    let inst = read_instance(&root, &mut errs);
    if !errs.is_empty() {
        return Err(Error::InvalidInstance(errs));
    }
    let inst = inst.expect("no schema errors implies an instance");
    let violations = validate_instance(&inst);
    if violations.is_empty() {
        Ok(inst)
    } else {
        Err(Error::InvalidInstance(violations))
    }
}

fn read_instance(root: &Value, errs: &mut Vec<Violation>) -> Option<Instance> {
    let Some(obj) = root.as_object() else {
        errs.push(Violation::new("$", "expected an object"));
        return None;
    };
    let items = match obj.get("items").and_then(Value::as_array) {
        Some(arr) => arr
            .iter()
            .enumerate()
            .filter_map(|(j, v)| match v.as_str() {
                Some(s) => Some(s.to_owned()),
                None => {
                    errs.push(Violation::new(format!("items[{j}]"), "expected a string"));
                    None
                }
            })
            .collect(),
        None => {
            errs.push(Violation::new("items", "missing or not an array"));
            Vec::new()
        }
    };
    let agents = match obj.get("agents").and_then(Value::as_array) {
        Some(arr) => arr
            .iter()
            .enumerate()
            .filter_map(|(i, v)| read_agent(v, &format!("agents[{i}]"), errs))
            .collect(),
        None => {
            errs.push(Violation::new("agents", "missing or not an array"));
            Vec::new()
        }
    };
    Some(Instance { items, agents })
}

fn number(obj: &Map<String, Value>, key: &str, path: &str, errs: &mut Vec<Violation>) -> Option<f64> {
    match obj.get(key) {
        Some(v) => match v.as_f64() {
            Some(x) => Some(x),
            None => {
                errs.push(Violation::new(format!("{path}.{key}"), "expected a number"));
                None
            }
        },
        None => {
            errs.push(Violation::new(format!("{path}.{key}"), "missing field"));
            None
        }
    }
}

fn read_agent(v: &Value, path: &str, errs: &mut Vec<Violation>) -> Option<Agent> {
    let Some(obj) = v.as_object() else {
        errs.push(Violation::new(path, "expected an object"));
        return None;
    };
    let id = match obj.get("id").and_then(Value::as_str) {
        Some(s) => Some(s.to_owned()),
        None => {
            errs.push(Violation::new(format!("{path}.id"), "missing or not a string"));
            None
        }
    };
    let weight = number(obj, "weight", path, errs);
    let degree = match obj.get("degree") {
        None | Some(Value::Null) => Some(1.0),
        Some(_) => number(obj, "degree", path, errs),
    };
    let valuation = match obj.get("valuation") {
        Some(v) => read_valuation(v, &format!("{path}.valuation"), errs),
        None => {
            errs.push(Violation::new(format!("{path}.valuation"), "missing field"));
            None
        }
    };
    Some(Agent {
        id: id?,
        weight: weight?,
        valuation: valuation?,
        degree: degree?,
    })
}

fn read_valuation(v: &Value, path: &str, errs: &mut Vec<Violation>) -> Option<ValuationSpec> {
    let Some(obj) = v.as_object() else {
        errs.push(Violation::new(path, "expected an object"));
        return None;
    };
    let family = match obj.get("family").and_then(Value::as_str) {
        Some(s) => match Family::parse(s) {
            Some(f) => Some(f),
            None => {
                errs.push(Violation::new(
                    format!("{path}.family"),
                    format!("unknown family `{s}` (expected linear, leontief, cobb_douglas or ces)"),
                ));
                None
            }
        },
        None => {
            errs.push(Violation::new(format!("{path}.family"), "missing or not a string"));
            None
        }
    };
    let params: Option<Vec<f64>> = match obj.get("params").and_then(Value::as_array) {
        Some(arr) => {
            let mut out = Vec::with_capacity(arr.len());
            let mut ok = true;
            for (j, x) in arr.iter().enumerate() {
                match x.as_f64() {
                    Some(x) => out.push(x),
                    None => {
                        ok = false;
                        errs.push(Violation::new(
                            format!("{path}.params[{j}]"),
                            "expected a number",
                        ));
                    }
                }
            }
            ok.then_some(out)
        }
        None => {
            errs.push(Violation::new(format!("{path}.params"), "missing or not an array"));
            None
        }
    };
    let family = family?;
    let params = params?;
    Some(match family {
        Family::Linear => ValuationSpec::Linear(params),
        Family::Leontief => ValuationSpec::Leontief(params),
        Family::CobbDouglas => ValuationSpec::CobbDouglas(params),
        Family::Ces => {
            let rho = number(obj, "rho", path, errs)?;
            ValuationSpec::Ces {
                weights: params,
                rho,
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCHEMA_EXAMPLE: &str = r#"{"items":["a","b"],"agents":[{"id":"A","weight":1.0,"degree":1.0,"valuation":{"family":"linear","params":[3,1]}},{"id":"B","weight":1.0,"valuation":{"family":"linear","params":[1,3]}}]}"#;

    #[test]
    fn parses_schema_example() {
        let inst = parse_instance(SCHEMA_EXAMPLE.as_bytes()).unwrap();
        assert_eq!(inst.items, vec!["a", "b"]);
        assert_eq!(inst.n(), 2);
        assert_eq!(inst.agents[0].valuation, ValuationSpec::Linear(vec![3.0, 1.0]));
        assert_eq!(inst.agents[1].degree, 1.0);
    }

    #[test]
    fn unknown_family_names_path() {
        let doc = SCHEMA_EXAMPLE.replacen("\"linear\"", "\"linaer\"", 1);
        match parse_instance(doc.as_bytes()) {
            Err(Error::InvalidInstance(v)) => {
                assert_eq!(v[0].path, "agents[0].valuation.family");
                assert!(v[0].message.contains("linaer"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn length_mismatch_reported() {
        let doc = SCHEMA_EXAMPLE.replacen("[3,1]", "[3,1,2]", 1);
        match parse_instance(doc.as_bytes()) {
            Err(Error::InvalidInstance(v)) => {
                assert!(v.iter().any(|v| v.path == "agents[0].valuation.params"), "{v:?}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_json() {
        assert!(matches!(
            parse_instance(b"{\"items\":"),
            Err(Error::InvalidInstance(_))
        ));
    }

    #[test]
    fn ces_requires_rho() {
        let doc = r#"{"items":["a"],"agents":[{"id":"A","weight":1,"valuation":{"family":"ces","params":[1]}}]}"#;
        match parse_instance(doc.as_bytes()) {
            Err(Error::InvalidInstance(v)) => assert_eq!(v[0].path, "agents[0].valuation.rho"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn render_round_trip() {
        let inst = parse_instance(SCHEMA_EXAMPLE.as_bytes()).unwrap();
        let again = parse_instance(render_instance(&inst).as_bytes()).unwrap();
        assert_eq!(inst, again);
    }
}
