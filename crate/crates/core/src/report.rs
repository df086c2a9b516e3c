//! Serialization helpers shared by every emitted artifact: floats are
//! written with 17 significant digits so outputs are byte-stable and
//! round-trip exactly.

use serde::Serialize;

use crate::error::{Error, Result};

/// 17 significant digits in scientific notation; enough to reconstruct
/// the exact f64.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".to_string()
    } else if x > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

struct SigFigFormatter {
    pretty: bool,
    indent: usize,
    has_value: bool,
}

impl SigFigFormatter {
    fn newline<W: ?Sized + std::io::Write>(&mut self, writer: &mut W) -> std::io::Result<()> {
        if self.pretty {
            writer.write_all(b"\n")?;
            for _ in 0..self.indent {
                writer.write_all(b"  ")?;
            }
        }
        Ok(())
    }
}

impl serde_json::ser::Formatter for SigFigFormatter {
    fn write_f64<W: ?Sized + std::io::Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        if value.is_finite() {
            writer.write_all(fmt_f64(value).as_bytes())
        } else {
            writer.write_all(b"null")
        }
    }

    fn begin_array<W: ?Sized + std::io::Write>(&mut self, writer: &mut W) -> std::io::Result<()> {
        self.indent += 1;
        self.has_value = false;
        writer.write_all(b"[")
    }

    fn end_array<W: ?Sized + std::io::Write>(&mut self, writer: &mut W) -> std::io::Result<()> {
        self.indent -= 1;
        if self.has_value {
            self.newline(writer)?;
        }
        writer.write_all(b"]")
    }

    fn begin_array_value<W: ?Sized + std::io::Write>(&mut self, writer: &mut W, first: bool) -> std::io::Result<()> {
        if !first {
            writer.write_all(b",")?;
        }
        self.newline(writer)
    }

    fn end_array_value<W: ?Sized + std::io::Write>(&mut self, _writer: &mut W) -> std::io::Result<()> {
        self.has_value = true;
        Ok(())
    }

    fn begin_object<W: ?Sized + std::io::Write>(&mut self, writer: &mut W) -> std::io::Result<()> {
        self.indent += 1;
        self.has_value = false;
        writer.write_all(b"{")
    }

    fn end_object<W: ?Sized + std::io::Write>(&mut self, writer: &mut W) -> std::io::Result<()> {
        self.indent -= 1;
        if self.has_value {
            self.newline(writer)?;
        }
        writer.write_all(b"}")
    }

    fn begin_object_key<W: ?Sized + std::io::Write>(&mut self, writer: &mut W, first: bool) -> std::io::Result<()> {
        if !first {
            writer.write_all(b",")?;
        }
        self.newline(writer)
    }

    fn begin_object_value<W: ?Sized + std::io::Write>(&mut self, writer: &mut W) -> std::io::Result<()> {
        writer.write_all(if self.pretty { b": " } else { b":" })
    }

    fn end_object_value<W: ?Sized + std::io::Write>(&mut self, _writer: &mut W) -> std::io::Result<()> {
        self.has_value = true;
        Ok(())
    }
}

fn serialize_json<T: Serialize>(value: &T, pretty: bool) -> Result<String> {
    let mut out = Vec::new();
    let formatter = SigFigFormatter {
        pretty,
        indent: 0,
        has_value: false,
    };
    let mut serializer = serde_json::Serializer::with_formatter(&mut out, formatter);
    value
        .serialize(&mut serializer)
        .map_err(|e| Error::Pipeline(format!("json serialization: {e}")))?;
    String::from_utf8(out).map_err(|e| Error::Pipeline(format!("json utf8: {e}")))
}

/// Compact JSON with 17-significant-digit floats.
pub fn to_json(value: &impl Serialize) -> Result<String> {
    serialize_json(value, false)
}

/// Pretty JSON with 17-significant-digit floats.
pub fn to_json_pretty(value: &impl Serialize) -> Result<String> {
    let mut s = serialize_json(value, true)?;
    s.push('\n');
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips_exactly() {
        for &x in &[
            0.3,
            1.0 / 3.0,
            std::f64::consts::PI,
            -2.5e-17,
            0.0,
            9.007199254740993e15,
        ] {
            let s = fmt_f64(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "{x} -> {s}");
        }
    }

    #[test]
    fn json_outputs_parse_and_preserve_floats() {
        #[derive(Serialize)]
        struct Doc {
            a: f64,
            b: Vec<f64>,
            c: &'static str,
        }
        let doc = Doc {
            a: 0.1 + 0.2,
            b: vec![1.5, -0.25],
            c: "x",
        };
        for json in [to_json(&doc).unwrap(), to_json_pretty(&doc).unwrap()] {
            let v: serde_json::Value = serde_json::from_str(&json).unwrap();
            assert_eq!(v["a"].as_f64().unwrap().to_bits(), (0.1f64 + 0.2).to_bits());
            assert_eq!(v["b"][1].as_f64().unwrap(), -0.25);
            assert_eq!(v["c"], "x");
        }
    }
}
