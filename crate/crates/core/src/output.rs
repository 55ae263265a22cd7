//! Report serialization.
//!
//! Every float is written with 17 significant digits so that it parses back
//! to the same `f64`. Non-finite values become `null` in JSON.

use std::io;

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

/// 17-significant-digit rendering of `x`, positional for moderate exponents
/// and scientific otherwise. Trailing zeros of the fraction are dropped.
pub fn format_f64(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0.0".into() } else { "0.0".into() };
    }
    let sci = format!("{:.16e}", x.abs());
    let (mantissa, exp) = sci.split_once('e').expect("scientific notation");
    let exp: i32 = exp.parse().expect("integer exponent");
    let mut digits: String = mantissa.chars().filter(|c| *c != '.').collect();
    while digits.len() > 1 && digits.ends_with('0') {
        digits.pop();
    }
    let sign = if x < 0.0 { "-" } else { "" };
    let body = if (-5..=16).contains(&exp) {
        if exp >= 0 {
            let int_len = exp as usize + 1;
            if digits.len() <= int_len {
                format!("{digits}{}.0", "0".repeat(int_len - digits.len()))
            } else {
                format!("{}.{}", &digits[..int_len], &digits[int_len..])
            }
        } else {
            format!("0.{}{digits}", "0".repeat((-exp - 1) as usize))
        }
    } else {
        let (head, tail) = digits.split_at(1);
        let tail = if tail.is_empty() { "0" } else { tail };
        format!("{head}.{tail}e{exp}")
    };
    format!("{sign}{body}")
}

/// Pretty JSON with full-precision floats.
struct PreciseFormatter<'a>(PrettyFormatter<'a>);

impl Formatter for PreciseFormatter<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(format_f64(value).as_bytes())
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.begin_array(writer)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_array(writer)
    }

    fn begin_array_value<W: ?Sized + io::Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(writer, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_array_value(writer)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.begin_object(writer)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_object(writer)
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(writer, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.begin_object_value(writer)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_object_value(writer)
    }
}

/// Serializes `value` as pretty JSON followed by a newline.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, PreciseFormatter(PrettyFormatter::new()));
    value.serialize(&mut ser).expect("reports serialize to memory");
    buf.push(b'\n');
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

/// One CSV field.
pub enum Cell<'a> {
    Text(&'a str),
    Float(f64),
    Int(u64),
    Missing,
}

impl Cell<'_> {
    fn render(&self) -> String {
        match self {
            Cell::Text(s) => (*s).to_owned(),
            Cell::Float(x) => format_f64(*x),
            Cell::Int(n) => n.to_string(),
            Cell::Missing => String::new(),
        }
    }
}

/// In-memory CSV table.
pub struct Table {
    writer: csv::Writer<Vec<u8>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(header).expect("write to memory");
        Table { writer }
    }

    pub fn row(&mut self, cells: &[Cell<'_>]) {
        self.writer
            .write_record(cells.iter().map(Cell::render))
            .expect("write to memory");
    }

    pub fn finish(self) -> String {
        let bytes = self.writer.into_inner().expect("flush to memory");
        String::from_utf8(bytes).expect("cells are UTF-8")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips() {
        for &x in &[
            0.1,
            1.24,
            -2.5,
            1.0 - std::f64::consts::LN_2,
            6.02e23,
            1e-7,
            123456.0,
            f64::MIN_POSITIVE,
            f64::MAX,
            0.000123,
        ] {
            let s = format_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
    }

    #[test]
    fn shapes() {
        assert_eq!(format_f64(0.0), "0.0");
        assert_eq!(format_f64(2.0), "2.0");
        assert_eq!(format_f64(1000.0), "1000.0");
        assert_eq!(format_f64(0.5), "0.5");
        assert_eq!(format_f64(0.1), "0.10000000000000001");
        assert_eq!(format_f64(1e-7), "9.9999999999999995e-8");
        assert_eq!(format_f64(1e20), "1.0e20");
        assert_eq!(format_f64(0.00001), "0.000010000000000000001");
    }

    #[test]
    fn json_floats_and_nulls() {
        let s = to_json(&serde_json::json!({"a": 0.1, "b": [1.5, f64::NAN], "c": 3}));
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["a"].as_f64(), Some(0.1));
        assert!(v["b"][1].is_null());
        assert!(s.contains("0.10000000000000001"));
        assert_eq!(v["c"].as_u64(), Some(3));
    }

    #[test]
    fn csv_quoting() {
        let mut t = Table::new(&["id", "x"]);
        t.row(&[Cell::Text("a,b"), Cell::Float(0.5)]);
        t.row(&[Cell::Text("c"), Cell::Missing]);
        assert_eq!(t.finish(), "id,x\n\"a,b\",0.5\nc,\n");
    }
}
