//! Versioned row serialization for tag and edge property values.
//!
//! Layout: `schema_version u32 BE ‖ null bitmap ‖ payload`. The bitmap
//! carries one bit per property in schema order (bit set = Null); the
//! payload holds the non-null values in schema order, fixed-width for
//! numeric/bool/date kinds and length-prefixed for strings. Rows written
//! under an old schema version stay readable after ALTER: missing
//! properties come back as their default, or Null.

use super::CodecError;
use crate::value::{Date, DateTime, PropertyType, PropertyValue};
use serde::{Deserialize, Serialize};

/// One property in a tag or edge-type schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyDef {
    pub name: String,
    pub ty: PropertyType,
    pub nullable: bool,
    pub default: Option<PropertyValue>,
}

impl PropertyDef {
    pub fn new(name: &str, ty: PropertyType) -> PropertyDef {
        PropertyDef { name: name.into(), ty, nullable: false, default: None }
    }

    pub fn nullable(name: &str, ty: PropertyType) -> PropertyDef {
        PropertyDef { name: name.into(), ty, nullable: true, default: None }
    }
}

pub fn serialize_row(
    version: u32,
    props: &[PropertyDef],
    values: &[PropertyValue],
) -> Result<Vec<u8>, CodecError> {
    if values.len() != props.len() {
        return Err(CodecError::MalformedRow(format!(
            "{} values for {} properties",
            values.len(),
            props.len()
        )));
    }
    let bitmap_len = props.len().div_ceil(8);
    let mut out = Vec::with_capacity(4 + bitmap_len + values.len() * 8);
    out.extend_from_slice(&version.to_be_bytes());
    out.resize(4 + bitmap_len, 0);
    for (i, (def, value)) in props.iter().zip(values).enumerate() {
        if value.is_null() {
            if !def.nullable {
                return Err(CodecError::UnexpectedNull(def.name.clone()));
            }
            out[4 + i / 8] |= 1 << (i % 8);
            continue;
        }
        if value.type_of() != Some(def.ty) {
            return Err(CodecError::TypeMismatch {
                property: def.name.clone(),
                expected: def.ty.to_string(),
                actual: format!("{}", value),
            });
        }
        write_value(value, &mut out);
    }
    Ok(out)
}

fn write_value(value: &PropertyValue, out: &mut Vec<u8>) {
    match value {
        PropertyValue::Null => unreachable!("nulls go in the bitmap"),
        PropertyValue::Bool(b) => out.push(*b as u8),
        PropertyValue::Int64(v) => out.extend_from_slice(&v.to_be_bytes()),
        PropertyValue::Float64(v) => out.extend_from_slice(&v.to_bits().to_be_bytes()),
        PropertyValue::Str(s) => {
            out.extend_from_slice(&(s.len() as u32).to_be_bytes());
            out.extend_from_slice(s.as_bytes());
        }
        PropertyValue::Date(d) => {
            out.extend_from_slice(&d.year.to_be_bytes());
            out.push(d.month);
            out.push(d.day);
        }
        PropertyValue::DateTime(dt) => {
            out.extend_from_slice(&dt.date.year.to_be_bytes());
            out.extend_from_slice(&[dt.date.month, dt.date.day, dt.hour, dt.minute, dt.second]);
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        if self.pos + n > self.bytes.len() {
            return Err(CodecError::MalformedRow("row payload truncated".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
}

fn read_value(ty: PropertyType, r: &mut Reader) -> Result<PropertyValue, CodecError> {
    Ok(match ty {
        PropertyType::Bool => PropertyValue::Bool(r.take(1)?[0] != 0),
        PropertyType::Int64 => {
            PropertyValue::Int64(i64::from_be_bytes(r.take(8)?.try_into().unwrap()))
        }
        PropertyType::Float64 => PropertyValue::Float64(f64::from_bits(u64::from_be_bytes(
            r.take(8)?.try_into().unwrap(),
        ))),
        PropertyType::String => {
            let len = u32::from_be_bytes(r.take(4)?.try_into().unwrap()) as usize;
            let bytes = r.take(len)?;
            PropertyValue::Str(String::from_utf8_lossy(bytes).into_owned())
        }
        PropertyType::Date => {
            let b = r.take(4)?;
            PropertyValue::Date(Date {
                year: u16::from_be_bytes([b[0], b[1]]),
                month: b[2],
                day: b[3],
            })
        }
        PropertyType::DateTime => {
            let b = r.take(7)?;
            PropertyValue::DateTime(DateTime {
                date: Date { year: u16::from_be_bytes([b[0], b[1]]), month: b[2], day: b[3] },
                hour: b[4],
                minute: b[5],
                second: b[6],
            })
        }
    })
}

/// The schema version a row was written under; peeked without full decode.
pub fn row_version(bytes: &[u8]) -> Result<u32, CodecError> {
    if bytes.len() < 4 {
        return Err(CodecError::MalformedRow("missing version".into()));
    }
    Ok(u32::from_be_bytes(bytes[..4].try_into().unwrap()))
}

/// Decodes a row with the exact property list it was written under.
pub fn deserialize_row_exact(
    props: &[PropertyDef],
    bytes: &[u8],
) -> Result<Vec<PropertyValue>, CodecError> {
    let bitmap_len = props.len().div_ceil(8);
    if bytes.len() < 4 + bitmap_len {
        return Err(CodecError::MalformedRow("row shorter than header".into()));
    }
    let bitmap = &bytes[4..4 + bitmap_len];
    let mut r = Reader { bytes, pos: 4 + bitmap_len };
    let mut values = Vec::with_capacity(props.len());
    for (i, def) in props.iter().enumerate() {
        if bitmap[i / 8] & (1 << (i % 8)) != 0 {
            values.push(PropertyValue::Null);
        } else {
            values.push(read_value(def.ty, &mut r)?);
        }
    }
    Ok(values)
}

/// Decodes a row written under any schema version in `history` and
/// remaps it to `history[target_version]`'s property order. Properties
/// added after the row was written read as their default, or Null.
pub fn deserialize_row(
    history: &[Vec<PropertyDef>],
    target_version: u32,
    bytes: &[u8],
) -> Result<Vec<PropertyValue>, CodecError> {
    let written = row_version(bytes)?;
    let old_props = history
        .get(written as usize)
        .ok_or(CodecError::UnknownSchemaVersion(written))?;
    let target_props = history
        .get(target_version as usize)
        .ok_or(CodecError::UnknownSchemaVersion(target_version))?;
    let old_values = deserialize_row_exact(old_props, bytes)?;
    if written == target_version {
        return Ok(old_values);
    }
    let remapped = target_props
        .iter()
        .map(|def| {
            match old_props.iter().position(|p| p.name == def.name) {
                Some(i) => old_values[i].clone(),
                None => def.default.clone().unwrap_or(PropertyValue::Null),
            }
        })
        .collect();
    Ok(remapped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::value::PropertyType as T;

    fn tag_b_props() -> Vec<PropertyDef> {
        vec![PropertyDef::new("pb-1", T::String), PropertyDef::new("pb-2", T::String)]
    }

    #[test]
    fn round_trips_table_style_row() {
        let props = tag_b_props();
        let values = vec![
            PropertyValue::Str("tb-1".into()),
            PropertyValue::Str("tb-2".into()),
        ];
        let bytes = serialize_row(0, &props, &values).unwrap();
        assert_eq!(deserialize_row_exact(&props, &bytes).unwrap(), values);
    }

    #[test]
    fn all_null_nullable_row_has_empty_payload() {
        let props = vec![
            PropertyDef::nullable("a", T::Int64),
            PropertyDef::nullable("b", T::String),
        ];
        let bytes = serialize_row(0, &props, &[PropertyValue::Null, PropertyValue::Null]).unwrap();
        // version + one bitmap byte with both bits set, nothing else
        assert_eq!(bytes.len(), 5);
        assert_eq!(bytes[4], 0b11);
        let back = deserialize_row_exact(&props, &bytes).unwrap();
        assert!(back.iter().all(|v| v.is_null()));
    }

    #[test]
    fn type_mismatch_is_an_error() {
        let props = vec![PropertyDef::new("wtime", T::Date)];
        let err = serialize_row(0, &props, &[PropertyValue::Str("hello".into())]).unwrap_err();
        assert!(matches!(err, CodecError::TypeMismatch { .. }));
    }

    #[test]
    fn null_into_not_null_property_is_an_error() {
        let props = vec![PropertyDef::new("a", T::Int64)];
        let err = serialize_row(0, &props, &[PropertyValue::Null]).unwrap_err();
        assert!(matches!(err, CodecError::UnexpectedNull(_)));
    }

    #[test]
    fn old_rows_stay_readable_after_alter() {
        let v0 = vec![PropertyDef::new("a", T::Int64)];
        let mut v1 = v0.clone();
        v1.push(PropertyDef::nullable("added", T::String));
        let history = vec![v0.clone(), v1];

        let bytes = serialize_row(0, &v0, &[PropertyValue::Int64(7)]).unwrap();
        let values = deserialize_row(&history, 1, &bytes).unwrap();
        assert_eq!(values, vec![PropertyValue::Int64(7), PropertyValue::Null]);
    }

    #[test]
    fn added_property_defaults_apply() {
        let v0 = vec![PropertyDef::new("a", T::Int64)];
        let mut v1 = v0.clone();
        v1.push(PropertyDef {
            name: "flag".into(),
            ty: T::Bool,
            nullable: false,
            default: Some(PropertyValue::Bool(true)),
        });
        let history = vec![v0.clone(), v1];
        let bytes = serialize_row(0, &v0, &[PropertyValue::Int64(1)]).unwrap();
        let values = deserialize_row(&history, 1, &bytes).unwrap();
        assert_eq!(values[1], PropertyValue::Bool(true));
    }
}
