use std::io;

use serde::ser::Serialize;
use serde::{Deserialize, Serialize as SerializeDerive};
use serde_json::ser::Formatter;
use serde_json::{Map, Value};

/// A parsed action. Wire form: `{"function": "<name>", "kwargs": { ... }}`.
#[derive(Debug, Clone, PartialEq, SerializeDerive, Deserialize)]
pub struct ToolCall {
    pub function: String,
    #[serde(default)]
    pub kwargs: Map<String, Value>,
}

impl ToolCall {
    pub fn new(function: impl Into<String>, kwargs: Map<String, Value>) -> Self {
        Self {
            function: function.into(),
            kwargs,
        }
    }

    /// Builds a call from a parsed JSON action. `kwargs` may be absent but must
    /// be an object when present.
    pub fn from_value(value: &Value) -> Result<Self, String> {
        let obj = value.as_object().ok_or("action is not a JSON object")?;
        let function = obj
            .get("function")
            .and_then(Value::as_str)
            .map(str::trim)
            .filter(|f| !f.is_empty())
            .ok_or("action lacks a \"function\" string")?;
        let kwargs = match obj.get("kwargs") {
            None | Some(Value::Null) => Map::new(),
            Some(Value::Object(m)) => m.clone(),
            Some(_) => return Err("\"kwargs\" must be an object".into()),
        };
        Ok(Self::new(function, kwargs))
    }

    pub fn to_wire(&self) -> String {
        let mut root = Map::new();
        root.insert("function".into(), Value::String(self.function.clone()));
        root.insert("kwargs".into(), Value::Object(self.kwargs.clone()));
        to_spaced_json(&Value::Object(root))
    }

    /// Canonical rendering of the arguments alone; used for duplicate detection.
    pub fn kwargs_wire(&self) -> String {
        to_spaced_json(&Value::Object(self.kwargs.clone()))
    }
}

/// Single-line JSON with `": "` and `", "` separators.
pub fn to_spaced_json(value: &Value) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SpacedFormatter);
    value
        .serialize(&mut ser)
        .expect("serializing a Value cannot fail");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

struct SpacedFormatter;

impl Formatter for SpacedFormatter {
    fn begin_array_value<W: ?Sized + io::Write>(
        &mut self,
        writer: &mut W,
        first: bool,
    ) -> io::Result<()> {
        if first {
            Ok(())
        } else {
            writer.write_all(b", ")
        }
    }

    fn begin_object_key<W: ?Sized + io::Write>(
        &mut self,
        writer: &mut W,
        first: bool,
    ) -> io::Result<()> {
        if first {
            Ok(())
        } else {
            writer.write_all(b", ")
        }
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        writer.write_all(b": ")
    }
}
