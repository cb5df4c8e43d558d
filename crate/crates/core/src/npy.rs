//! Reading and writing little-endian float32 arrays in the numpy npy format.
//!
//! Versions 1.0 and 2.0 are read; 1.0 is written. Only `'<f4'` in C order is
//! accepted, which is the one layout the rest of the crate consumes.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub(crate) const MAGIC: &[u8; 6] = b"\x93NUMPY";
const ALIGN: usize = 64;

/// A dense float32 array with its npy shape.
#[derive(Debug, Clone, PartialEq)]
pub struct NpyArray {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl NpyArray {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let expected = element_count(&shape)?;
        if expected != data.len() {
            return Err(Error::Shape(format!(
                "shape {:?} needs {} values, got {}",
                shape,
                expected,
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }
}

fn element_count(shape: &[usize]) -> Result<usize> {
    shape
        .iter()
        .try_fold(1usize, |acc, &n| acc.checked_mul(n))
        .ok_or_else(|| Error::Format(format!("shape {shape:?} overflows")))
}

pub fn read_npy_file(path: impl AsRef<Path>) -> Result<NpyArray> {
    let mut reader = BufReader::new(File::open(path)?);
    read_npy(&mut reader)
}

pub fn write_npy_file(path: impl AsRef<Path>, array: &NpyArray) -> Result<()> {
    let mut writer = BufWriter::new(File::create(path)?);
    write_npy(&mut writer, &array.shape, &array.data)?;
    writer.flush()?;
    Ok(())
}

/// Reads a complete npy stream. Trailing bytes after the data are an error.
pub fn read_npy<R: Read>(reader: &mut R) -> Result<NpyArray> {
    let mut preamble = [0u8; 8];
    read_exact_or_format(reader, &mut preamble, "preamble")?;
    if &preamble[..6] != MAGIC {
        return Err(Error::Format("missing \\x93NUMPY magic".into()));
    }
    let (major, minor) = (preamble[6], preamble[7]);
    let header_len = match major {
        1 => {
            let mut buf = [0u8; 2];
            read_exact_or_format(reader, &mut buf, "header length")?;
            u16::from_le_bytes(buf) as usize
        }
        2 => {
            let mut buf = [0u8; 4];
            read_exact_or_format(reader, &mut buf, "header length")?;
            u32::from_le_bytes(buf) as usize
        }
        _ => {
            return Err(Error::Schema(format!(
                "npy version {major}.{minor} not supported (expected 1.0 or 2.0)"
            )))
        }
    };
    let mut header = vec![0u8; header_len];
    read_exact_or_format(reader, &mut header, "header")?;
    let header = std::str::from_utf8(&header)
        .map_err(|_| Error::Format("header is not ASCII".into()))?;
    let dict = HeaderDict::parse(header)?;

    if dict.descr != "<f4" {
        let hint = if dict.descr == ">f4" {
            " (big-endian not supported)"
        } else {
            ""
        };
        return Err(Error::Schema(format!(
            "dtype 'descr' is '{}', expected '<f4'{}",
            dict.descr, hint
        )));
    }
    if dict.fortran_order {
        return Err(Error::Schema(
            "'fortran_order' is True, only C order is supported".into(),
        ));
    }

    let count = element_count(&dict.shape)?;
    let byte_len = count
        .checked_mul(4)
        .ok_or_else(|| Error::Format("data size overflows".into()))?;
    let mut bytes = vec![0u8; byte_len];
    read_exact_or_format(reader, &mut bytes, "data")?;
    let mut probe = [0u8; 1];
    if reader.read(&mut probe)? != 0 {
        return Err(Error::Format("trailing bytes after array data".into()));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(NpyArray {
        shape: dict.shape,
        data,
    })
}

fn read_exact_or_format<R: Read>(reader: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    reader.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => Error::Format(format!("truncated {what}")),
        _ => Error::Io(e),
    })
}

/// Writes a version 1.0 npy stream.
pub fn write_npy<W: Write>(writer: &mut W, shape: &[usize], data: &[f32]) -> Result<()> {
    if element_count(shape)? != data.len() {
        return Err(Error::Shape(format!(
            "shape {:?} does not match {} values",
            shape,
            data.len()
        )));
    }
    let shape_str = match shape {
        [n] => format!("({n},)"),
        _ => {
            let parts: Vec<String> = shape.iter().map(|n| n.to_string()).collect();
            format!("({})", parts.join(", "))
        }
    };
    let mut header = format!("{{'descr': '<f4', 'fortran_order': False, 'shape': {shape_str}, }}");
    // magic + version + u16 length + header + '\n' must be a multiple of ALIGN
    let unpadded = MAGIC.len() + 2 + 2 + header.len() + 1;
    let pad = (ALIGN - unpadded % ALIGN) % ALIGN;
    header.extend(std::iter::repeat_n(' ', pad));
    header.push('\n');
    let header_len = u16::try_from(header.len())
        .map_err(|_| Error::Shape(format!("shape {shape:?} too long for npy 1.0 header")))?;

    writer.write_all(MAGIC)?;
    writer.write_all(&[1, 0])?;
    writer.write_all(&header_len.to_le_bytes())?;
    writer.write_all(header.as_bytes())?;
    let mut bytes = Vec::with_capacity(data.len() * 4);
    for v in data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    writer.write_all(&bytes)?;
    Ok(())
}

#[derive(Debug, PartialEq)]
struct HeaderDict {
    descr: String,
    fortran_order: bool,
    shape: Vec<usize>,
}

#[derive(Debug)]
enum Value {
    Str(String),
    Bool(bool),
    Tuple(Vec<usize>),
}

/// Parser for the python dict literal stored in the npy header.
struct Cursor<'a> {
    s: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.s.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(&format!("expected '{}'", c as char)))
        }
    }

    fn error(&self, msg: &str) -> Error {
        Error::Format(format!("bad npy header at byte {}: {msg}", self.pos))
    }

    fn string(&mut self) -> Result<String> {
        let quote = match self.peek() {
            Some(q @ (b'\'' | b'"')) => q,
            _ => return Err(self.error("expected string")),
        };
        self.pos += 1;
        let start = self.pos;
        while self.pos < self.s.len() && self.s[self.pos] != quote {
            self.pos += 1;
        }
        if self.pos == self.s.len() {
            return Err(self.error("unterminated string"));
        }
        let out = String::from_utf8_lossy(&self.s[start..self.pos]).into_owned();
        self.pos += 1;
        Ok(out)
    }

    fn integer(&mut self) -> Result<usize> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        // numpy may write long literals such as `3L` under python 2
        let digits = std::str::from_utf8(&self.s[start..self.pos]).unwrap_or("");
        if self.s.get(self.pos) == Some(&b'L') {
            self.pos += 1;
        }
        digits.parse().map_err(|_| self.error("expected integer"))
    }

    fn value(&mut self) -> Result<Value> {
        match self.peek() {
            Some(b'\'' | b'"') => self.string().map(Value::Str),
            Some(b'(') => {
                self.pos += 1;
                let mut dims = Vec::new();
                loop {
                    if self.peek() == Some(b')') {
                        self.pos += 1;
                        break;
                    }
                    dims.push(self.integer()?);
                    match self.peek() {
                        Some(b',') => self.pos += 1,
                        Some(b')') => {}
                        _ => return Err(self.error("expected ',' or ')' in shape")),
                    }
                }
                Ok(Value::Tuple(dims))
            }
            _ => {
                let rest = &self.s[self.pos..];
                if rest.starts_with(b"True") {
                    self.pos += 4;
                    Ok(Value::Bool(true))
                } else if rest.starts_with(b"False") {
                    self.pos += 5;
                    Ok(Value::Bool(false))
                } else {
                    Err(self.error("unrecognised value"))
                }
            }
        }
    }
}

impl HeaderDict {
    fn parse(header: &str) -> Result<Self> {
        let mut cur = Cursor {
            s: header.as_bytes(),
            pos: 0,
        };
        cur.expect(b'{')?;
        let (mut descr, mut fortran, mut shape) = (None, None, None);
        loop {
            if cur.peek() == Some(b'}') {
                cur.pos += 1;
                break;
            }
            let key = cur.string()?;
            cur.expect(b':')?;
            let value = cur.value()?;
            match (key.as_str(), value) {
                ("descr", Value::Str(s)) => descr = Some(s),
                ("fortran_order", Value::Bool(b)) => fortran = Some(b),
                ("shape", Value::Tuple(t)) => shape = Some(t),
                ("descr" | "fortran_order" | "shape", v) => {
                    return Err(Error::Format(format!("key '{key}' has wrong type: {v:?}")))
                }
                _ => return Err(Error::Format(format!("unexpected header key '{key}'"))),
            }
            match cur.peek() {
                Some(b',') => cur.pos += 1,
                Some(b'}') => {}
                _ => return Err(cur.error("expected ',' or '}'")),
            }
        }
        if cur.s[cur.pos..].iter().any(|b| !b.is_ascii_whitespace()) {
            return Err(cur.error("garbage after header dict"));
        }
        let missing = |k: &str| Error::Format(format!("header is missing '{k}'"));
        Ok(HeaderDict {
            descr: descr.ok_or_else(|| missing("descr"))?,
            fortran_order: fortran.ok_or_else(|| missing("fortran_order"))?,
            shape: shape.ok_or_else(|| missing("shape"))?,
        })
    }
}
