//! Reader and writer for the version 1.0 `.npy` array container.
//!
//! Supported element types are little/big-endian `f4`, `f8`, `i4`, `i8` and
//! single-byte `u1`. Fortran-ordered payloads are transposed into C order on
//! load, and the in-memory [`NpyArray`] is always C ordered with host byte
//! order. Writing defaults to little-endian C order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// The container magic string.
pub const MAGIC: [u8; 6] = *b"\x93NUMPY";

const ALIGNMENT: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ByteOrder {
    Little,
    Big,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElementType {
    F32,
    F64,
    I32,
    I64,
    U8,
}

impl ElementType {
    pub fn size(self) -> usize {
        match self {
            ElementType::U8 => 1,
            ElementType::F32 | ElementType::I32 => 4,
            ElementType::F64 | ElementType::I64 => 8,
        }
    }

    fn code(self) -> &'static str {
        match self {
            ElementType::F32 => "f4",
            ElementType::F64 => "f8",
            ElementType::I32 => "i4",
            ElementType::I64 => "i8",
            ElementType::U8 => "u1",
        }
    }
}

/// Element buffer of a decoded array, in C order and host byte order.
#[derive(Clone, Debug, PartialEq)]
pub enum ArrayData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    I32(Vec<i32>),
    I64(Vec<i64>),
    U8(Vec<u8>),
}

impl ArrayData {
    pub fn len(&self) -> usize {
        match self {
            ArrayData::F32(v) => v.len(),
            ArrayData::F64(v) => v.len(),
            ArrayData::I32(v) => v.len(),
            ArrayData::I64(v) => v.len(),
            ArrayData::U8(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn element_type(&self) -> ElementType {
        match self {
            ArrayData::F32(_) => ElementType::F32,
            ArrayData::F64(_) => ElementType::F64,
            ArrayData::I32(_) => ElementType::I32,
            ArrayData::I64(_) => ElementType::I64,
            ArrayData::U8(_) => ElementType::U8,
        }
    }
}

/// An n-dimensional array decoded from (or destined for) a container file.
#[derive(Clone, Debug, PartialEq)]
pub struct NpyArray {
    pub shape: Vec<usize>,
    pub data: ArrayData,
}

impl NpyArray {
    pub fn new(shape: Vec<usize>, data: ArrayData) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::LengthMismatch {
                expected,
                found: data.len(),
            });
        }
        Ok(NpyArray { shape, data })
    }

    pub fn from_f64(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        Self::new(shape, ArrayData::F64(values))
    }

    pub fn from_i64(shape: Vec<usize>, values: Vec<i64>) -> Result<Self> {
        Self::new(shape, ArrayData::I64(values))
    }
}

/// Layout used when encoding an array.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WriteOptions {
    pub byte_order: ByteOrder,
    pub fortran_order: bool,
}

impl Default for WriteOptions {
    fn default() -> Self {
        WriteOptions {
            byte_order: ByteOrder::Little,
            fortran_order: false,
        }
    }
}

#[derive(Debug, PartialEq)]
struct Header {
    element_type: ElementType,
    byte_order: ByteOrder,
    fortran_order: bool,
    shape: Vec<usize>,
}

fn parse_descr(descr: &str) -> Result<(ElementType, ByteOrder)> {
    let unsupported = || Error::Unsupported(format!("element type '{descr}'"));
    if descr.len() != 3 {
        return Err(unsupported());
    }
    let (order_char, code) = descr.split_at(1);
    let element_type = match code {
        "f4" => ElementType::F32,
        "f8" => ElementType::F64,
        "i4" => ElementType::I32,
        "i8" => ElementType::I64,
        "u1" => ElementType::U8,
        _ => return Err(unsupported()),
    };
    let byte_order = match order_char {
        "<" => ByteOrder::Little,
        ">" => ByteOrder::Big,
        "|" if element_type.size() == 1 => ByteOrder::Little,
        "=" => {
            if cfg!(target_endian = "little") {
                ByteOrder::Little
            } else {
                ByteOrder::Big
            }
        }
        _ => return Err(unsupported()),
    };
    Ok((element_type, byte_order))
}

#[derive(Debug, PartialEq)]
enum Value {
    Str(String),
    Bool(bool),
    Tuple(Vec<usize>),
}

/// Minimal parser for the Python-literal header dictionary.
struct DictParser<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
}

impl<'a> DictParser<'a> {
    fn new(text: &'a str) -> Self {
        DictParser {
            chars: text.chars().peekable(),
        }
    }

    fn err(msg: &str) -> Error {
        Error::Format(format!("header dictionary: {msg}"))
    }

    fn skip_ws(&mut self) {
        while matches!(self.chars.peek(), Some(c) if c.is_whitespace()) {
            self.chars.next();
        }
    }

    fn expect(&mut self, want: char) -> Result<()> {
        self.skip_ws();
        match self.chars.next() {
            Some(c) if c == want => Ok(()),
            _ => Err(Self::err(&format!("expected '{want}'"))),
        }
    }

    fn string(&mut self) -> Result<String> {
        self.skip_ws();
        let quote = match self.chars.next() {
            Some(q @ ('\'' | '"')) => q,
            _ => return Err(Self::err("expected quoted string")),
        };
        let mut out = String::new();
        for c in self.chars.by_ref() {
            if c == quote {
                return Ok(out);
            }
            out.push(c);
        }
        Err(Self::err("unterminated string"))
    }

    fn word(&mut self) -> String {
        let mut out = String::new();
        while let Some(&c) = self.chars.peek() {
            if c.is_ascii_alphanumeric() || c == '_' {
                out.push(c);
                self.chars.next();
            } else {
                break;
            }
        }
        out
    }

    fn tuple(&mut self) -> Result<Vec<usize>> {
        self.expect('(')?;
        let mut dims = Vec::new();
        loop {
            self.skip_ws();
            match self.chars.peek() {
                Some(')') => {
                    self.chars.next();
                    return Ok(dims);
                }
                Some(',') => {
                    self.chars.next();
                }
                Some(c) if c.is_ascii_digit() => {
                    let w = self.word();
                    let w = w.trim_end_matches('L');
                    dims.push(w.parse().map_err(|_| Self::err("bad shape entry"))?);
                }
                _ => return Err(Self::err("bad shape tuple")),
            }
        }
    }

    fn value(&mut self) -> Result<Value> {
        self.skip_ws();
        match self.chars.peek() {
            Some('\'' | '"') => Ok(Value::Str(self.string()?)),
            Some('(') => Ok(Value::Tuple(self.tuple()?)),
            _ => match self.word().as_str() {
                "True" => Ok(Value::Bool(true)),
                "False" => Ok(Value::Bool(false)),
                other => Err(Self::err(&format!("unexpected value '{other}'"))),
            },
        }
    }

    fn parse(mut self) -> Result<Vec<(String, Value)>> {
        self.expect('{')?;
        let mut entries = Vec::new();
        loop {
            self.skip_ws();
            if self.chars.peek() == Some(&'}') {
                self.chars.next();
                break;
            }
            let key = self.string()?;
            self.expect(':')?;
            let value = self.value()?;
            entries.push((key, value));
            self.skip_ws();
            match self.chars.peek() {
                Some(',') => {
                    self.chars.next();
                }
                Some('}') => {}
                _ => return Err(Self::err("expected ',' or '}'")),
            }
        }
        self.skip_ws();
        if self.chars.next().is_some() {
            return Err(Self::err("trailing characters"));
        }
        Ok(entries)
    }
}

impl Header {
    fn parse(text: &str) -> Result<Self> {
        let mut descr = None;
        let mut fortran_order = None;
        let mut shape = None;
        for (key, value) in DictParser::new(text).parse()? {
            match (key.as_str(), value) {
                ("descr", Value::Str(s)) => descr = Some(parse_descr(&s)?),
                ("fortran_order", Value::Bool(b)) => fortran_order = Some(b),
                ("shape", Value::Tuple(t)) => shape = Some(t),
                (k, _) => return Err(Error::Format(format!("unexpected header key '{k}'"))),
            }
        }
        let missing = |k: &str| Error::Format(format!("header is missing '{k}'"));
        let (element_type, byte_order) = descr.ok_or_else(|| missing("descr"))?;
        Ok(Header {
            element_type,
            byte_order,
            fortran_order: fortran_order.ok_or_else(|| missing("fortran_order"))?,
            shape: shape.ok_or_else(|| missing("shape"))?,
        })
    }

    fn render(&self) -> String {
        let order = match (self.byte_order, self.element_type) {
            (_, ElementType::U8) => '|',
            (ByteOrder::Little, _) => '<',
            (ByteOrder::Big, _) => '>',
        };
        let shape = match self.shape.as_slice() {
            [single] => format!("({single},)"),
            dims => format!(
                "({})",
                dims.iter()
                    .map(|d| d.to_string())
                    .collect::<Vec<_>>()
                    .join(", ")
            ),
        };
        let fortran = if self.fortran_order { "True" } else { "False" };
        let mut text = format!(
            "{{'descr': '{order}{}', 'fortran_order': {fortran}, 'shape': {shape}, }}",
            self.element_type.code()
        );
        // magic + version + u16 length + text + '\n' must be a multiple of 64.
        let unpadded = MAGIC.len() + 2 + 2 + text.len() + 1;
        let pad = (ALIGNMENT - unpadded % ALIGNMENT) % ALIGNMENT;
        text.extend(std::iter::repeat_n(' ', pad));
        text.push('\n');
        text
    }
}

fn map_read_err(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Format("truncated container".into())
    } else {
        Error::io("<stream>", e)
    }
}

macro_rules! decode {
    ($bytes:expr, $ty:ty, $order:expr) => {{
        const W: usize = std::mem::size_of::<$ty>();
        $bytes
            .chunks_exact(W)
            .map(|c| {
                let arr: [u8; W] = c.try_into().unwrap();
                match $order {
                    ByteOrder::Little => <$ty>::from_le_bytes(arr),
                    ByteOrder::Big => <$ty>::from_be_bytes(arr),
                }
            })
            .collect::<Vec<$ty>>()
    }};
}

/// Maps C-order flat positions to Fortran-order flat positions.
fn fortran_to_c_permutation(shape: &[usize]) -> Vec<usize> {
    let total: usize = shape.iter().product();
    let mut f_strides = vec![1usize; shape.len()];
    for axis in 1..shape.len() {
        f_strides[axis] = f_strides[axis - 1] * shape[axis - 1];
    }
    let mut index = vec![0usize; shape.len()];
    let mut out = Vec::with_capacity(total);
    for _ in 0..total {
        out.push(index.iter().zip(&f_strides).map(|(i, s)| i * s).sum());
        // Increment the C-order multi-index (last axis fastest).
        for axis in (0..shape.len()).rev() {
            index[axis] += 1;
            if index[axis] < shape[axis] {
                break;
            }
            index[axis] = 0;
        }
    }
    out
}

fn reorder<T: Copy>(values: Vec<T>, perm: &[usize]) -> Vec<T> {
    perm.iter().map(|&p| values[p]).collect()
}

/// Decodes a container from a byte stream positioned at its start.
pub fn read_npy<R: Read>(reader: &mut R) -> Result<NpyArray> {
    let mut magic = [0u8; 6];
    reader.read_exact(&mut magic).map_err(map_read_err)?;
    if magic != MAGIC {
        return Err(Error::Format("bad magic bytes".into()));
    }
    let mut version = [0u8; 2];
    reader.read_exact(&mut version).map_err(map_read_err)?;
    if version != [1, 0] {
        return Err(Error::Unsupported(format!(
            "container version {}.{}",
            version[0], version[1]
        )));
    }
    let mut len_bytes = [0u8; 2];
    reader.read_exact(&mut len_bytes).map_err(map_read_err)?;
    let header_len = u16::from_le_bytes(len_bytes) as usize;
    let mut header_bytes = vec![0u8; header_len];
    reader.read_exact(&mut header_bytes).map_err(map_read_err)?;
    let text = std::str::from_utf8(&header_bytes)
        .map_err(|_| Error::Format("header is not ASCII".into()))?;
    let header = Header::parse(text.trim_end())?;

    let count: usize = header.shape.iter().product();
    let n_bytes = count
        .checked_mul(header.element_type.size())
        .ok_or_else(|| Error::Format("shape overflows".into()))?;
    let mut payload = Vec::with_capacity(n_bytes);
    reader.read_to_end(&mut payload).map_err(map_read_err)?;
    if payload.len() != n_bytes {
        return Err(Error::Format(format!(
            "payload has {} bytes, header implies {n_bytes}",
            payload.len()
        )));
    }

    let order = header.byte_order;
    let mut data = match header.element_type {
        ElementType::F32 => ArrayData::F32(decode!(payload, f32, order)),
        ElementType::F64 => ArrayData::F64(decode!(payload, f64, order)),
        ElementType::I32 => ArrayData::I32(decode!(payload, i32, order)),
        ElementType::I64 => ArrayData::I64(decode!(payload, i64, order)),
        ElementType::U8 => ArrayData::U8(payload),
    };
    if header.fortran_order && header.shape.len() > 1 {
        let perm = fortran_to_c_permutation(&header.shape);
        data = match data {
            ArrayData::F32(v) => ArrayData::F32(reorder(v, &perm)),
            ArrayData::F64(v) => ArrayData::F64(reorder(v, &perm)),
            ArrayData::I32(v) => ArrayData::I32(reorder(v, &perm)),
            ArrayData::I64(v) => ArrayData::I64(reorder(v, &perm)),
            ArrayData::U8(v) => ArrayData::U8(reorder(v, &perm)),
        };
    }
    Ok(NpyArray {
        shape: header.shape,
        data,
    })
}

macro_rules! encode {
    ($writer:expr, $values:expr, $order:expr) => {{
        let mut buf = Vec::with_capacity($values.len() * 8);
        for v in $values {
            match $order {
                ByteOrder::Little => buf.extend_from_slice(&v.to_le_bytes()),
                ByteOrder::Big => buf.extend_from_slice(&v.to_be_bytes()),
            }
        }
        $writer.write_all(&buf)
    }};
}

/// Encodes `array` with an explicit layout.
pub fn write_npy_with<W: Write>(
    writer: &mut W,
    array: &NpyArray,
    options: WriteOptions,
) -> Result<()> {
    let header = Header {
        element_type: array.data.element_type(),
        byte_order: options.byte_order,
        fortran_order: options.fortran_order,
        shape: array.shape.clone(),
    };
    let text = header.render();
    let header_len = u16::try_from(text.len())
        .map_err(|_| Error::Unsupported("header longer than 65535 bytes".into()))?;

    let io = |e| Error::io("<stream>", e);
    writer.write_all(&MAGIC).map_err(io)?;
    writer.write_all(&[1, 0]).map_err(io)?;
    writer.write_all(&header_len.to_le_bytes()).map_err(io)?;
    writer.write_all(text.as_bytes()).map_err(io)?;

    let perm = if options.fortran_order && array.shape.len() > 1 {
        // Inverse of the load-time permutation: Fortran slot -> C position.
        let to_f = fortran_to_c_permutation(&array.shape);
        let mut inv = vec![0usize; to_f.len()];
        for (c, &f) in to_f.iter().enumerate() {
            inv[f] = c;
        }
        Some(inv)
    } else {
        None
    };
    let order = options.byte_order;
    macro_rules! emit {
        ($v:expr) => {
            match &perm {
                Some(p) => encode!(writer, reorder($v.clone(), p).iter(), order),
                None => encode!(writer, $v.iter(), order),
            }
        };
    }
    match &array.data {
        ArrayData::F32(v) => emit!(v),
        ArrayData::F64(v) => emit!(v),
        ArrayData::I32(v) => emit!(v),
        ArrayData::I64(v) => emit!(v),
        ArrayData::U8(v) => emit!(v),
    }
    .map_err(io)
}

/// Encodes `array` as little-endian, C-ordered.
pub fn write_npy<W: Write>(writer: &mut W, array: &NpyArray) -> Result<()> {
    write_npy_with(writer, array, WriteOptions::default())
}

pub fn read_npy_file(path: impl AsRef<Path>) -> Result<NpyArray> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_npy(&mut BufReader::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn write_npy_file(path: impl AsRef<Path>, array: &NpyArray) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = BufWriter::new(file);
    write_npy(&mut writer, array)?;
    writer.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn encode(array: &NpyArray, options: WriteOptions) -> Vec<u8> {
        let mut buf = Vec::new();
        write_npy_with(&mut buf, array, options).unwrap();
        buf
    }

    #[test]
    fn header_is_aligned_and_numpy_shaped() {
        let arr = NpyArray::from_f64(vec![3, 2], vec![0.0; 6]).unwrap();
        let bytes = encode(&arr, WriteOptions::default());
        let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
        assert_eq!((10 + header_len) % 64, 0);
        let text = std::str::from_utf8(&bytes[10..10 + header_len]).unwrap();
        assert!(text.starts_with("{'descr': '<f8', 'fortran_order': False, 'shape': (3, 2), }"));
        assert!(text.ends_with('\n'));
        assert_eq!(bytes.len(), 10 + header_len + 48);
    }

    #[test]
    fn one_dimensional_shape_renders_trailing_comma() {
        let arr = NpyArray::from_i64(vec![3], vec![0, 0, 1]).unwrap();
        let bytes = encode(&arr, WriteOptions::default());
        let text = String::from_utf8_lossy(&bytes[10..]);
        assert!(text.contains("'shape': (3,)"));
        assert_eq!(read_npy(&mut bytes.as_slice()).unwrap(), arr);
    }

    #[test]
    fn parses_numpy_header_variants() {
        let h = Header::parse("{'descr': '>i4', 'shape': (2,), 'fortran_order': True}").unwrap();
        assert_eq!(h.element_type, ElementType::I32);
        assert_eq!(h.byte_order, ByteOrder::Big);
        assert!(h.fortran_order);
        assert_eq!(h.shape, vec![2]);
        let h = Header::parse("{\"descr\": \"|u1\", \"fortran_order\": False, \"shape\": ()}").unwrap();
        assert_eq!(h.shape, Vec::<usize>::new());
    }

    #[test]
    fn rejects_bad_magic_and_version() {
        let arr = NpyArray::from_f64(vec![1, 1], vec![1.0]).unwrap();
        let mut bytes = encode(&arr, WriteOptions::default());
        bytes[1] = b'X';
        assert!(matches!(read_npy(&mut bytes.as_slice()), Err(Error::Format(_))));
        let mut bytes = encode(&arr, WriteOptions::default());
        bytes[6] = 3;
        assert!(matches!(
            read_npy(&mut bytes.as_slice()),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn rejects_unknown_dtype() {
        let arr = NpyArray::from_f64(vec![1], vec![1.0]).unwrap();
        let bytes = encode(&arr, WriteOptions::default());
        let mut patched = bytes.clone();
        let at = patched.windows(3).position(|w| w == b"<f8").unwrap();
        patched[at + 1] = b'c';
        assert!(matches!(
            read_npy(&mut patched.as_slice()),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn truncated_payload_is_a_format_error() {
        let arr = NpyArray::from_f64(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let bytes = encode(&arr, WriteOptions::default());
        let cut = &bytes[..bytes.len() - 3];
        assert!(matches!(read_npy(&mut &cut[..]), Err(Error::Format(_))));
    }

    #[test]
    fn big_endian_and_fortran_decode_to_same_logical_array() {
        let arr = NpyArray::new(
            vec![2, 3, 2],
            ArrayData::I32((0..12).collect()),
        )
        .unwrap();
        for byte_order in [ByteOrder::Little, ByteOrder::Big] {
            for fortran_order in [false, true] {
                let bytes = encode(
                    &arr,
                    WriteOptions {
                        byte_order,
                        fortran_order,
                    },
                );
                assert_eq!(read_npy(&mut bytes.as_slice()).unwrap(), arr);
            }
        }
    }

    #[test]
    fn fortran_payload_is_column_major() {
        let arr = NpyArray::from_f64(vec![2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let bytes = encode(
            &arr,
            WriteOptions {
                byte_order: ByteOrder::Little,
                fortran_order: true,
            },
        );
        let payload: Vec<f64> = bytes[bytes.len() - 48..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        assert_eq!(payload, vec![1., 4., 2., 5., 3., 6.]);
    }
}
