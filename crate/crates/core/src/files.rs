//! Loading instance and activation-function documents.

use std::path::Path;

use serde::de::DeserializeOwned;

use crate::instance::Instance;
use crate::ratiocalc::PiecewiseConstantF;
use crate::{Error, Result};

/// Parses a JSON document, reporting the offending key path and position.
pub fn parse_json<T: DeserializeOwned>(path: &Path, text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let inner = e.inner();
        let key = e.path().to_string();
        let message = if key == "." {
            format!("{inner}")
        } else {
            format!("at `{key}`: {inner}")
        };
        Error::Parse { path: path.to_owned(), message }
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_owned(), source })?;
    parse_json(path, &text)
}

pub fn load_instance(path: &Path) -> Result<Instance> {
    read_json(path)
}

pub fn load_activation(path: &Path) -> Result<PiecewiseConstantF> {
    read_json(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_error_has_key_and_line() {
        let text = "{\n  \"m\": 2,\n  \"values\": [0.5, \"x\"]\n}";
        let err = parse_json::<PiecewiseConstantF>(Path::new("f.json"), text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("values[1]"), "{msg}");
        assert!(msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn unknown_key_rejected() {
        let err = parse_json::<Instance>(Path::new("i.json"), r#"{"online":[],"offline":[],"weights":[],"extra":1}"#)
            .unwrap_err();
        assert!(err.to_string().contains("extra"));
    }

    #[test]
    fn activation_semantic_error() {
        let err = parse_json::<PiecewiseConstantF>(Path::new("f.json"), r#"{"m":2,"values":[1.5,0.5]}"#).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
    }

    #[test]
    fn missing_file() {
        assert!(matches!(load_instance(Path::new("/nonexistent/x.json")), Err(Error::Io { .. })));
    }
}
