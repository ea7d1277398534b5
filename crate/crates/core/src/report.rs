use std::collections::BTreeMap;
use std::fmt::Write as _;

use daegeo::AnalysisConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub command: String,
    pub model: String,
    pub config: AnalysisConfig,
    pub point: Option<Vec<f64>>,
    pub sections: BTreeMap<String, Value>,
    pub warnings: Vec<String>,
    pub error: Option<String>,
}

impl Report {
    pub fn new(command: &str, model: &str, config: AnalysisConfig, point: Option<Vec<f64>>) -> Report {
        Report { command: command.into(), model: model.into(), config, point, sections: BTreeMap::new(), warnings: Vec::new(), error: None }
    }

    pub fn section<T: Serialize>(&mut self, name: &str, value: &T) {
        let v = serde_json::to_value(value).unwrap_or_else(|e| Value::String(format!("unserializable: {e}")));
        self.sections.insert(name.into(), v);
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn to_text(&self) -> String {
        let v = serde_json::to_value(self).expect("report serializes");
        let mut s = String::new();
        render(&mut s, &v, 0);
        s
    }
}

/// Long numeric arrays are cut in the text rendering; JSON keeps everything.
const TEXT_ARRAY_LIMIT: usize = 12;

fn scalar(v: &Value) -> Option<String> {
    match v {
        Value::Null => Some("-".into()),
        Value::Bool(b) => Some(b.to_string()),
        Value::Number(n) => Some(n.to_string()),
        Value::String(s) => Some(s.clone()),
        Value::Array(a) if a.iter().all(|x| matches!(x, Value::Number(_) | Value::Bool(_))) => {
            let shown: Vec<String> = a.iter().take(TEXT_ARRAY_LIMIT).map(|x| scalar(x).unwrap()).collect();
            let more = if a.len() > TEXT_ARRAY_LIMIT { format!(", ... ({} values)", a.len()) } else { String::new() };
            Some(format!("[{}{more}]", shown.join(", ")))
        }
        _ => None,
    }
}

fn render(s: &mut String, v: &Value, depth: usize) {
    let pad = "  ".repeat(depth);
    match v {
        Value::Object(map) => {
            for (k, x) in map {
                match scalar(x) {
                    Some(t) => writeln!(s, "{pad}{k}: {t}").unwrap(),
                    None => {
                        writeln!(s, "{pad}{k}:").unwrap();
                        render(s, x, depth + 1);
                    }
                }
            }
        }
        Value::Array(items) => {
            let cut = items.len() > TEXT_ARRAY_LIMIT && items.iter().all(|x| scalar(x).is_some());
            if cut {
                for x in &items[..3] {
                    writeln!(s, "{pad}- {}", scalar(x).unwrap()).unwrap();
                }
                writeln!(s, "{pad}- ... ({} entries)", items.len()).unwrap();
                return;
            }
            for x in items {
                match scalar(x) {
                    Some(t) => writeln!(s, "{pad}- {t}").unwrap(),
                    None => {
                        writeln!(s, "{pad}-").unwrap();
                        render(s, x, depth + 1);
                    }
                }
            }
        }
        other => writeln!(s, "{pad}{}", scalar(other).unwrap_or_default()).unwrap(),
    }
}
