//! Property values, rows, and tabular result sets.
//!
//! `PropertyValue` is the single value type flowing through the whole
//! system: serialized into tag/edge rows, encoded into index keys, and
//! carried between executors as `DataSet` rows.

use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::fmt;

/// Declared type of a tag or edge-type property.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PropertyType {
    Bool,
    Int64,
    Float64,
    String,
    Date,
    DateTime,
}

impl fmt::Display for PropertyType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PropertyType::Bool => "BOOL",
            PropertyType::Int64 => "INT64",
            PropertyType::Float64 => "FLOAT64",
            PropertyType::String => "STRING",
            PropertyType::Date => "DATE",
            PropertyType::DateTime => "DATETIME",
        };
        f.write_str(s)
    }
}

/// Calendar date, no timezone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Date {
    pub year: u16,
    pub month: u8,
    pub day: u8,
}

impl Date {
    pub fn new(year: u16, month: u8, day: u8) -> Self {
        Date { year, month, day }
    }

    /// Parses `"YYYY-MM-DD"`.
    pub fn parse(s: &str) -> Option<Date> {
        let mut it = s.split('-');
        let year = it.next()?.parse().ok()?;
        let month = it.next()?.parse().ok()?;
        let day = it.next()?.parse().ok()?;
        if it.next().is_some() || month == 0 || month > 12 || day == 0 || day > 31 {
            return None;
        }
        Some(Date { year, month, day })
    }
}

impl fmt::Display for Date {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}-{:02}", self.year, self.month, self.day)
    }
}

/// Date plus wall-clock time, second precision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DateTime {
    pub date: Date,
    pub hour: u8,
    pub minute: u8,
    pub second: u8,
}

impl DateTime {
    /// Parses `"YYYY-MM-DDThh:mm:ss"`.
    pub fn parse(s: &str) -> Option<DateTime> {
        let (d, t) = s.split_once('T')?;
        let date = Date::parse(d)?;
        let mut it = t.split(':');
        let hour = it.next()?.parse().ok()?;
        let minute = it.next()?.parse().ok()?;
        let second = it.next()?.parse().ok()?;
        if it.next().is_some() || hour > 23 || minute > 59 || second > 59 {
            return None;
        }
        Some(DateTime { date, hour, minute, second })
    }
}

impl fmt::Display for DateTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}T{:02}:{:02}:{:02}",
            self.date, self.hour, self.minute, self.second
        )
    }
}

/// A single property value. `Null` is only legal where the schema marks
/// the property nullable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum PropertyValue {
    Null,
    Bool(bool),
    Int64(i64),
    Float64(f64),
    Str(String),
    Date(Date),
    DateTime(DateTime),
}

impl PropertyValue {
    pub fn type_of(&self) -> Option<PropertyType> {
        match self {
            PropertyValue::Null => None,
            PropertyValue::Bool(_) => Some(PropertyType::Bool),
            PropertyValue::Int64(_) => Some(PropertyType::Int64),
            PropertyValue::Float64(_) => Some(PropertyType::Float64),
            PropertyValue::Str(_) => Some(PropertyType::String),
            PropertyValue::Date(_) => Some(PropertyType::Date),
            PropertyValue::DateTime(_) => Some(PropertyType::DateTime),
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, PropertyValue::Null)
    }

    /// Whether this value can be stored under the declared type.
    pub fn conforms_to(&self, ty: PropertyType, nullable: bool) -> bool {
        match self.type_of() {
            None => nullable,
            Some(t) => t == ty,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            PropertyValue::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            PropertyValue::Int64(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            PropertyValue::Str(s) => Some(s),
            _ => None,
        }
    }

    /// Total-order comparison used by Sort/TopN and index-range checks.
    /// Nulls sort first; mixed numeric types compare numerically; any
    /// other cross-type pair compares by type tag.
    pub fn total_cmp(&self, other: &PropertyValue) -> Ordering {
        use PropertyValue::*;
        match (self, other) {
            (Null, Null) => Ordering::Equal,
            (Null, _) => Ordering::Less,
            (_, Null) => Ordering::Greater,
            (Bool(a), Bool(b)) => a.cmp(b),
            (Int64(a), Int64(b)) => a.cmp(b),
            (Float64(a), Float64(b)) => a.total_cmp(b),
            (Int64(a), Float64(b)) => (*a as f64).total_cmp(b),
            (Float64(a), Int64(b)) => a.total_cmp(&(*b as f64)),
            (Str(a), Str(b)) => a.cmp(b),
            (Date(a), Date(b)) => a.cmp(b),
            (DateTime(a), DateTime(b)) => a.cmp(b),
            _ => self.type_rank().cmp(&other.type_rank()),
        }
    }

    fn type_rank(&self) -> u8 {
        match self {
            PropertyValue::Null => 0,
            PropertyValue::Bool(_) => 1,
            PropertyValue::Int64(_) => 2,
            PropertyValue::Float64(_) => 2,
            PropertyValue::Str(_) => 3,
            PropertyValue::Date(_) => 4,
            PropertyValue::DateTime(_) => 5,
        }
    }

    /// Canonical bytes for hashing/dedup; distinct from the codec row format.
    pub fn dedup_key(&self, out: &mut Vec<u8>) {
        match self {
            PropertyValue::Null => out.push(0),
            PropertyValue::Bool(b) => {
                out.push(1);
                out.push(*b as u8);
            }
            PropertyValue::Int64(v) => {
                out.push(2);
                out.extend_from_slice(&v.to_be_bytes());
            }
            PropertyValue::Float64(v) => {
                out.push(3);
                out.extend_from_slice(&v.to_bits().to_be_bytes());
            }
            PropertyValue::Str(s) => {
                out.push(4);
                out.extend_from_slice(&(s.len() as u32).to_be_bytes());
                out.extend_from_slice(s.as_bytes());
            }
            PropertyValue::Date(d) => {
                out.push(5);
                out.extend_from_slice(&d.year.to_be_bytes());
                out.push(d.month);
                out.push(d.day);
            }
            PropertyValue::DateTime(dt) => {
                out.push(6);
                out.extend_from_slice(&dt.date.year.to_be_bytes());
                out.extend_from_slice(&[dt.date.month, dt.date.day, dt.hour, dt.minute, dt.second]);
            }
        }
    }
}

impl PartialEq for PropertyValue {
    fn eq(&self, other: &Self) -> bool {
        use PropertyValue::*;
        match (self, other) {
            (Float64(a), Float64(b)) => a.to_bits() == b.to_bits(),
            (Int64(a), Float64(b)) | (Float64(b), Int64(a)) => (*a as f64).to_bits() == b.to_bits(),
            _ => self.total_cmp(other) == Ordering::Equal,
        }
    }
}

impl Eq for PropertyValue {}

impl fmt::Display for PropertyValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PropertyValue::Null => f.write_str("__NULL__"),
            PropertyValue::Bool(b) => write!(f, "{}", b),
            PropertyValue::Int64(v) => write!(f, "{}", v),
            PropertyValue::Float64(v) => write!(f, "{}", v),
            PropertyValue::Str(s) => write!(f, "\"{}\"", s),
            PropertyValue::Date(d) => write!(f, "{}", d),
            PropertyValue::DateTime(dt) => write!(f, "{}", dt),
        }
    }
}

/// One executor output row.
pub type Row = Vec<PropertyValue>;

/// Tabular intermediate result flowing between executors.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DataSet {
    pub columns: Vec<String>,
    pub rows: Vec<Row>,
}

impl DataSet {
    pub fn new(columns: Vec<String>) -> Self {
        DataSet { columns, rows: Vec::new() }
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Every row's arity must equal the column count.
    pub fn check_arity(&self) -> bool {
        self.rows.iter().all(|r| r.len() == self.columns.len())
    }
}
