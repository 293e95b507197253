//! JSON Lines recordings: one object per line, either a protocol message
//! (tagged by `"type"`) or a ground-truth record (`"type": "truth"`).

use crate::protocol::Message;
use crate::simulator::{SimOutput, TruthRecord};
use serde_json::Value;
use std::io::{self, BufRead, Write};
use thiserror::Error;

pub const TRUTH_TAG: &str = "truth";

#[derive(Debug, Error)]
pub enum RecordingError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub enum RecordLine {
    Message(Message),
    Truth(TruthRecord),
}

impl RecordLine {
    pub fn to_json(&self) -> String {
        match self {
            RecordLine::Message(m) => serde_json::to_string(m).expect("messages always serialize"),
            RecordLine::Truth(t) => {
                let mut v = serde_json::to_value(t).expect("truth records always serialize");
                if let Value::Object(map) = &mut v {
                    map.insert("type".into(), Value::String(TRUTH_TAG.into()));
                }
                v.to_string()
            }
        }
    }

    pub fn parse(line: &str) -> Result<Self, String> {
        let mut v: Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
        let is_truth = v.get("type").and_then(Value::as_str) == Some(TRUTH_TAG);
        if is_truth {
            if let Value::Object(map) = &mut v {
                map.remove("type");
            }
            serde_json::from_value(v).map(RecordLine::Truth).map_err(|e| e.to_string())
        } else {
            serde_json::from_value(v).map(RecordLine::Message).map_err(|e| e.to_string())
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Recording {
    pub messages: Vec<Message>,
    pub truth: Vec<TruthRecord>,
}

impl From<SimOutput> for Recording {
    fn from(o: SimOutput) -> Self {
        Recording { messages: o.messages, truth: o.truth }
    }
}

impl Recording {
    /// Writes the truth header first, then the messages.
    pub fn write<W: Write>(&self, mut w: W) -> io::Result<()> {
        for t in &self.truth {
            writeln!(w, "{}", RecordLine::Truth(t.clone()).to_json())?;
        }
        for m in &self.messages {
            writeln!(w, "{}", RecordLine::Message(m.clone()).to_json())?;
        }
        w.flush()
    }

    /// Blank lines are skipped.
    pub fn read<R: BufRead>(r: R) -> Result<Self, RecordingError> {
        let mut out = Recording::default();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match RecordLine::parse(&line).map_err(|message| RecordingError::Parse { line: i + 1, message })? {
                RecordLine::Message(m) => out.messages.push(m),
                RecordLine::Truth(t) => out.truth.push(t),
            }
        }
        Ok(out)
    }

    pub fn to_string(&self) -> String {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{generate, NoiseModel, Scenario};

    #[test]
    fn roundtrip_through_text() {
        let rec: Recording = generate(Scenario::by_name("usplane", Some(4)).unwrap(), NoiseModel::new(1e-3, 0.01, 5), 60.0)
            .unwrap()
            .into();
        let text = rec.to_string();
        let back = Recording::read(text.as_bytes()).unwrap();
        assert_eq!(back, rec);
    }

    #[test]
    fn truth_lines_are_tagged() {
        let line = RecordLine::Truth(TruthRecord::UsPoint { sequence: 3, world: crate::Vec3::new(1.0, 2.0, 3.0) });
        let json = line.to_json();
        assert!(json.contains("\"type\":\"truth\""));
        assert_eq!(RecordLine::parse(&json).unwrap(), line);
    }

    #[test]
    fn bad_line_reports_number() {
        let text = "{\"type\":\"heartbeat\",\"timestamp\":1.0}\n\n{\"type\":\"nope\"}\n";
        match Recording::read(text.as_bytes()) {
            Err(RecordingError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }
}
