//! Row-level access to delimited and fixed-width text, independent of the
//! record type being read.

use std::io::{BufRead, BufReader, Read};

use super::mapping::{ColumnMapping, Encoding, FieldSpec, SourceKind};
use crate::Error;

#[derive(Debug, Clone, Copy)]
enum Slot {
    Column(usize),
    Range(usize, usize),
    Unmapped,
}

enum Inner<R: Read> {
    Delimited {
        reader: csv::Reader<R>,
        record: csv::ByteRecord,
    },
    Fixed {
        reader: BufReader<R>,
        buf: Vec<u8>,
        line: u64,
    },
}

/// One source row with its wanted fields decoded to UTF-8. Blank fields are
/// `None`.
#[derive(Debug, Clone, Default)]
pub struct RawRow {
    pub line: u64,
    pub fields: Vec<Option<String>>,
}

impl RawRow {
    pub fn get(&self, i: usize) -> Option<&str> {
        self.fields.get(i).and_then(|f| f.as_deref())
    }
}

pub struct RowSource<R: Read> {
    inner: Inner<R>,
    slots: Vec<Slot>,
    encoding: Encoding,
}

fn decode(bytes: &[u8], encoding: Encoding) -> Option<String> {
    let trimmed = bytes.trim_ascii();
    if trimmed.is_empty() {
        return None;
    }
    Some(match encoding {
        Encoding::Utf8 => String::from_utf8_lossy(trimmed).into_owned(),
        Encoding::Latin1 => trimmed.iter().map(|&b| char::from(b)).collect(),
    })
}

impl<R: Read> RowSource<R> {
    /// `wanted` lists logical field names in the order they appear in
    /// [`RawRow::fields`]. Names absent from the mapping decode as `None`.
    pub fn new(source: R, mapping: &ColumnMapping, wanted: &[&str]) -> Result<Self, Error> {
        match mapping.kind {
            SourceKind::Delimited => {
                let mut reader = csv::ReaderBuilder::new()
                    .delimiter(mapping.delimiter as u8)
                    .has_headers(mapping.header)
                    .flexible(true)
                    .from_reader(source);
                let header: Vec<String> = if mapping.header {
                    reader
                        .byte_headers()?
                        .iter()
                        .map(|h| decode(h, mapping.encoding).unwrap_or_default())
                        .collect()
                } else {
                    Vec::new()
                };
                // a headerless empty file has no rows to resolve names against
                let empty = mapping.header && header.is_empty();
                let slots = wanted
                    .iter()
                    .map(|name| match mapping.fields.get(*name) {
                        None => Ok(Slot::Unmapped),
                        Some(_) if empty => Ok(Slot::Unmapped),
                        Some(FieldSpec::Column(i)) => Ok(Slot::Column(*i)),
                        Some(FieldSpec::Name(n)) => header
                            .iter()
                            .position(|h| h == n)
                            .map(Slot::Column)
                            .ok_or_else(|| Error::Format(format!("header has no column {n:?}"))),
                        Some(FieldSpec::Range(_)) => Err(Error::Config(format!(
                            "{name}: byte range in a delimited mapping"
                        ))),
                    })
                    .collect::<Result<_, _>>()?;
                Ok(RowSource {
                    inner: Inner::Delimited {
                        reader,
                        record: csv::ByteRecord::new(),
                    },
                    slots,
                    encoding: mapping.encoding,
                })
            }
            SourceKind::FixedWidth => {
                let slots = wanted
                    .iter()
                    .map(|name| match mapping.fields.get(*name) {
                        None => Ok(Slot::Unmapped),
                        Some(FieldSpec::Range([s, e])) => Ok(Slot::Range(*s, *e)),
                        Some(_) => Err(Error::Config(format!(
                            "{name}: fixed-width fields need a byte range"
                        ))),
                    })
                    .collect::<Result<_, _>>()?;
                let mut reader = BufReader::with_capacity(1 << 16, source);
                let mut buf = Vec::new();
                let mut line = 0;
                if mapping.header {
                    reader.read_until(b'\n', &mut buf)?;
                    line = 1;
                }
                Ok(RowSource {
                    inner: Inner::Fixed { reader, buf, line },
                    slots,
                    encoding: mapping.encoding,
                })
            }
        }
    }

    pub fn next_row(&mut self) -> Option<Result<RawRow, Error>> {
        match &mut self.inner {
            Inner::Delimited { reader, record } => match reader.read_byte_record(record) {
                Err(e) => Some(Err(e.into())),
                Ok(false) => None,
                Ok(true) => {
                    let line = record.position().map_or(0, |p| p.line());
                    let fields = self
                        .slots
                        .iter()
                        .map(|slot| match slot {
                            Slot::Column(i) => {
                                record.get(*i).and_then(|b| decode(b, self.encoding))
                            }
                            _ => None,
                        })
                        .collect();
                    Some(Ok(RawRow { line, fields }))
                }
            },
            Inner::Fixed { reader, buf, line } => loop {
                buf.clear();
                match reader.read_until(b'\n', buf) {
                    Err(e) => return Some(Err(e.into())),
                    Ok(0) => return None,
                    Ok(_) => {
                        *line += 1;
                        while matches!(buf.last(), Some(b'\n' | b'\r')) {
                            buf.pop();
                        }
                        if buf.is_empty() {
                            continue;
                        }
                        let fields = self
                            .slots
                            .iter()
                            .map(|slot| match *slot {
                                Slot::Range(s, e) if s < buf.len() => {
                                    decode(&buf[s..e.min(buf.len())], self.encoding)
                                }
                                _ => None,
                            })
                            .collect();
                        return Some(Ok(RawRow {
                            line: *line,
                            fields,
                        }));
                    }
                }
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows<R: Read>(mut src: RowSource<R>) -> Vec<RawRow> {
        std::iter::from_fn(|| src.next_row())
            .map(Result::unwrap)
            .collect()
    }

    #[test]
    fn delimited_by_name_and_index() {
        let mut m = ColumnMapping::delimited([
            ("a", FieldSpec::Name("second".into())),
            ("b", FieldSpec::Column(0)),
        ]);
        m.delimiter = ';';
        let data = "first;second\n x ;y\nz\n";
        let got = rows(RowSource::new(data.as_bytes(), &m, &["a", "b", "c"]).unwrap());
        assert_eq!(got.len(), 2);
        assert_eq!(got[0].line, 2);
        assert_eq!(got[0].get(0), Some("y"));
        assert_eq!(got[0].get(1), Some("x"));
        assert_eq!(got[0].get(2), None);
        assert_eq!(got[1].get(0), None);
    }

    #[test]
    fn unknown_header_name() {
        let m = ColumnMapping::delimited([("a", FieldSpec::Name("nope".into()))]);
        assert!(RowSource::new("x,y\n".as_bytes(), &m, &["a"]).is_err());
    }

    #[test]
    fn fixed_width_latin1() {
        let mut m = ColumnMapping::delimited([
            ("name", FieldSpec::Range([0, 6])),
            ("code", FieldSpec::Range([6, 9])),
        ]);
        m.kind = SourceKind::FixedWidth;
        m.header = false;
        m.encoding = Encoding::Latin1;
        let data: &[u8] = b"S\xe3o C 12\r\n\nab\n";
        let got = rows(RowSource::new(data, &m, &["name", "code"]).unwrap());
        assert_eq!(got.len(), 2);
        assert_eq!(got[0].get(0), Some("São C"));
        assert_eq!(got[0].get(1), Some("12"));
        assert_eq!(got[1].line, 3);
        assert_eq!(got[1].get(0), Some("ab"));
        assert_eq!(got[1].get(1), None);
    }
}
