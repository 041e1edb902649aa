//! Persistence: model checkpoints, PGM images and CSV tables.
//!
//! Checkpoint layout (all integers little-endian):
//!
//! ```text
//! "LLENS001"                                   magic and format version
//! u32 channels, u32 height, u32 width          input shape
//! u32 class_count, u32 layer_count
//! per layer: u8 kind, then
//!   dense   (1): u32 rows, u32 cols, activation, rows·cols f64 weights, rows f64 bias
//!   conv    (2): u32 k_out, u32 stride, u32 channels, u32 height, u32 width,
//!                activation, k_out·channels·9 f64 kernels, k_out f64 bias
//!   maxpool (3): u32 size, u32 channels, u32 height, u32 width
//!   flatten (4): nothing
//! activation: u8 tag, f64 parameter (leaky slope, else 0)
//! u32 CRC32 of every byte after the magic
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::nn::{ActivationKind, ConvLayer, DenseLayer, Layer, MaxPool, Network, Shape3};
use crate::tensor::{Matrix, Vector};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"LLENS001";
const MAGIC_PREFIX: &[u8; 5] = b"LLENS";

const TAG_DENSE: u8 = 1;
const TAG_CONV: u8 = 2;
const TAG_MAXPOOL: u8 = 3;
const TAG_FLATTEN: u8 = 4;

fn activation_tag(a: ActivationKind) -> (u8, f64) {
    match a {
        ActivationKind::Identity => (0, 0.0),
        ActivationKind::Selu => (1, 0.0),
        ActivationKind::Tanh => (2, 0.0),
        ActivationKind::Sigmoid => (3, 0.0),
        ActivationKind::LeakyRelu(alpha) => (4, alpha),
        ActivationKind::Relu => (5, 0.0),
    }
}

fn activation_from_tag(tag: u8, param: f64) -> Result<ActivationKind> {
    Ok(match tag {
        0 => ActivationKind::Identity,
        1 => ActivationKind::Selu,
        2 => ActivationKind::Tanh,
        3 => ActivationKind::Sigmoid,
        4 => ActivationKind::LeakyRelu(param),
        5 => ActivationKind::Relu,
        t => return Err(Error::Format(format!("unknown activation tag {t}"))),
    })
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }

    fn u32(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v)
            .map_err(|_| Error::Validation(format!("dimension {v} does not fit the format")))?;
        self.0.extend_from_slice(&v.to_le_bytes());
        Ok(())
    }

    fn f64s(&mut self, vs: &[f64]) {
        for v in vs {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }

    fn shape(&mut self, s: Shape3) -> Result<()> {
        self.u32(s.channels)?;
        self.u32(s.height)?;
        self.u32(s.width)
    }

    fn activation(&mut self, a: ActivationKind) {
        let (tag, param) = activation_tag(a);
        self.u8(tag);
        self.f64s(&[param]);
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(Error::Length {
                expected: self.pos.saturating_add(n),
                found: self.bytes.len(),
            });
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let len = n
            .checked_mul(8)
            .ok_or_else(|| Error::Format(format!("array of {n} values is too large")))?;
        let b = self.take(len)?;
        Ok(b.chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn shape(&mut self) -> Result<Shape3> {
        Ok(Shape3::new(self.u32()?, self.u32()?, self.u32()?))
    }

    fn activation(&mut self) -> Result<ActivationKind> {
        let tag = self.u8()?;
        let param = self.f64s(1)?[0];
        activation_from_tag(tag, param)
    }
}

/// Serializes a network. Identical networks give identical bytes.
pub fn encode_checkpoint(net: &Network) -> Result<Vec<u8>> {
    if net.layers.is_empty() {
        return Err(Error::Validation("network has no layers".into()));
    }
    let mut w = Writer(Vec::new());
    w.shape(net.input_shape)?;
    w.u32(net.class_count)?;
    w.u32(net.layers.len())?;
    for layer in &net.layers {
        match layer {
            Layer::Dense(d) => {
                w.u8(TAG_DENSE);
                w.u32(d.weights.rows())?;
                w.u32(d.weights.cols())?;
                w.activation(d.activation);
                w.f64s(d.weights.as_slice());
                w.f64s(d.bias.as_slice());
            }
            Layer::Conv(c) => {
                w.u8(TAG_CONV);
                w.u32(c.out_channels())?;
                w.u32(c.stride)?;
                w.shape(c.input_shape)?;
                w.activation(c.activation);
                w.f64s(c.kernels.as_slice());
                w.f64s(c.bias.as_slice());
            }
            Layer::MaxPool(p) => {
                w.u8(TAG_MAXPOOL);
                w.u32(p.size)?;
                w.shape(p.input_shape)?;
            }
            Layer::Flatten => w.u8(TAG_FLATTEN),
        }
    }
    let crc = crc32fast::hash(&w.0);
    let mut out = Vec::with_capacity(CHECKPOINT_MAGIC.len() + w.0.len() + 4);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&w.0);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

/// Parses checkpoint bytes, verifying magic, version and checksum first.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<Network> {
    if bytes.len() < MAGIC_PREFIX.len() || &bytes[..MAGIC_PREFIX.len()] != MAGIC_PREFIX {
        return Err(Error::Format("not a checkpoint file (bad magic)".into()));
    }
    if bytes.len() < CHECKPOINT_MAGIC.len() {
        return Err(Error::Length {
            expected: CHECKPOINT_MAGIC.len() + 4,
            found: bytes.len(),
        });
    }
    if &bytes[..CHECKPOINT_MAGIC.len()] != CHECKPOINT_MAGIC {
        let version = String::from_utf8_lossy(&bytes[MAGIC_PREFIX.len()..CHECKPOINT_MAGIC.len()]);
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version:?}"
        )));
    }
    let body = &bytes[CHECKPOINT_MAGIC.len()..];
    if body.len() < 4 {
        return Err(Error::Length {
            expected: CHECKPOINT_MAGIC.len() + 4,
            found: bytes.len(),
        });
    }
    let (payload, tail) = body.split_at(body.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    let computed = crc32fast::hash(payload);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }

    let mut r = Reader {
        bytes: payload,
        pos: 0,
    };
    let input_shape = r.shape()?;
    let class_count = r.u32()?;
    let count = r.u32()?;
    if count == 0 {
        return Err(Error::Validation("checkpoint holds no layers".into()));
    }
    let mut layers = Vec::new();
    for k in 0..count {
        let layer = read_layer(&mut r).map_err(|e| e.at_layer(k))?;
        layers.push(layer);
    }
    if r.pos != payload.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after the last layer",
            payload.len() - r.pos
        )));
    }
    Network::new(layers, input_shape, class_count)
}

fn read_layer(r: &mut Reader<'_>) -> Result<Layer> {
    Ok(match r.u8()? {
        TAG_DENSE => {
            let rows = r.u32()?;
            let cols = r.u32()?;
            let act = r.activation()?;
            let weights = Matrix::new(rows, cols, r.f64s(rows.saturating_mul(cols))?)?;
            let bias = Vector::new(r.f64s(rows)?);
            Layer::Dense(DenseLayer::new(weights, bias, act)?)
        }
        TAG_CONV => {
            let k_out = r.u32()?;
            let stride = r.u32()?;
            let shape = r.shape()?;
            let act = r.activation()?;
            let cols = shape.channels.saturating_mul(9);
            let kernels = Matrix::new(k_out, cols, r.f64s(k_out.saturating_mul(cols))?)?;
            let bias = Vector::new(r.f64s(k_out)?);
            Layer::Conv(ConvLayer::new(kernels, bias, act, stride, shape)?)
        }
        TAG_MAXPOOL => {
            let size = r.u32()?;
            let input_shape = r.shape()?;
            Layer::MaxPool(MaxPool { size, input_shape })
        }
        TAG_FLATTEN => Layer::Flatten,
        t => return Err(Error::Format(format!("unknown layer tag {t}"))),
    })
}

/// Writes through a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::Input(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = name.to_os_string();
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp: PathBuf = path.with_file_name(tmp_name);
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

pub fn save_checkpoint(net: &Network, path: &Path) -> Result<()> {
    write_atomic(path, &encode_checkpoint(net)?)
}

pub fn load_checkpoint(path: &Path) -> Result<Network> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

/// Smallest and largest entry.
pub fn value_range(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        })
}

/// Maps `[lo, hi]` onto `0..=255`; a degenerate range renders mid-gray.
pub fn to_gray(v: &[f64], lo: f64, hi: f64) -> Vec<u8> {
    if !(hi > lo) {
        return vec![128; v.len()];
    }
    v.iter()
        .map(|&x| (255.0 * (x - lo) / (hi - lo)).round().clamp(0.0, 255.0) as u8)
        .collect()
}

/// Binary PGM bytes for already-quantized pixels.
pub fn encode_pgm(pixels: &[u8], rows: usize, cols: usize) -> Result<Vec<u8>> {
    if pixels.len() != rows * cols {
        return Err(Error::Shape(format!(
            "{} pixels cannot fill a {rows}x{cols} image",
            pixels.len()
        )));
    }
    let mut out = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    Ok(out)
}

/// Parses binary PGM with maxval 255; returns `(rows, cols, pixels)`.
pub fn decode_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated PGM header".into()));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if fields[0] != "P5" {
        return Err(Error::Format(format!("not a binary PGM ({:?})", fields[0])));
    }
    let num = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::Format(format!("bad PGM header field {s:?}")))
    };
    let (cols, rows, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    if maxval != 255 {
        return Err(Error::Format(format!("unsupported PGM maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    let data = &bytes[(pos + 1).min(bytes.len())..];
    if data.len() != rows * cols {
        return Err(Error::Length {
            expected: rows * cols,
            found: data.len(),
        });
    }
    Ok((rows, cols, data.to_vec()))
}

/// Writes `v` as a `rows × cols` PGM with its own min-max normalization.
pub fn write_image(v: &Vector, rows: usize, cols: usize, path: &Path) -> Result<()> {
    let (lo, hi) = value_range(v.as_slice());
    write_image_in_range(v, rows, cols, lo, hi, path)
}

/// Writes `v` with a caller-chosen normalization range.
pub fn write_image_in_range(
    v: &Vector,
    rows: usize,
    cols: usize,
    lo: f64,
    hi: f64,
    path: &Path,
) -> Result<()> {
    let bytes = encode_pgm(&to_gray(v.as_slice(), lo, hi), rows, cols)?;
    write_atomic(path, &bytes)
}

/// Writes several images, normalized either jointly or one by one.
pub fn write_images(
    vs: &[Vector],
    rows: usize,
    cols: usize,
    shared_norm: bool,
    paths: &[PathBuf],
) -> Result<()> {
    if vs.len() != paths.len() {
        return Err(Error::Shape(format!(
            "{} images but {} paths",
            vs.len(),
            paths.len()
        )));
    }
    let shared = vs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            let (a, b) = value_range(v.as_slice());
            (lo.min(a), hi.max(b))
        });
    for (v, p) in vs.iter().zip(paths) {
        let (lo, hi) = if shared_norm {
            shared
        } else {
            value_range(v.as_slice())
        };
        write_image_in_range(v, rows, cols, lo, hi, p)?;
    }
    Ok(())
}

pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes)
}

/// Named columns of reals.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Table {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) -> Result<()> {
        if row.len() != self.header.len() {
            return Err(Error::Shape(format!(
                "row has {} values, table has {} columns",
                row.len(),
                self.header.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }
}

/// Integers below 1e15 print exactly; everything else with 17 significant digits.
pub fn format_real(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 && !(v == 0.0 && v.is_sign_negative()) {
        format!("{}", v as i64)
    } else if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

pub fn encode_csv(table: &Table) -> Result<String> {
    if let Some(bad) = table
        .header
        .iter()
        .find(|h| h.is_empty() || h.contains([',', '\n', '\r', '"']))
    {
        return Err(Error::Input(format!("column name {bad:?} is not CSV-safe")));
    }
    let mut out = table.header.join(",");
    out.push('\n');
    for row in &table.rows {
        if row.len() != table.header.len() {
            return Err(Error::Shape(format!(
                "row has {} values, table has {} columns",
                row.len(),
                table.header.len()
            )));
        }
        let cells: Vec<String> = row.iter().map(|&v| format_real(v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    Ok(out)
}

pub fn decode_csv(text: &str) -> Result<Table> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("empty CSV".into()))?;
    let mut table = Table::new(header.split(','));
    for (n, line) in lines.enumerate() {
        let row = line
            .split(',')
            .map(|c| {
                c.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Format(format!("line {}: bad number {c:?}", n + 2)))
            })
            .collect::<Result<Vec<f64>>>()?;
        table.push(row)?;
    }
    Ok(table)
}

pub fn write_csv(table: &Table, path: &Path) -> Result<()> {
    write_atomic(path, encode_csv(table)?.as_bytes())
}

pub fn read_csv(path: &Path) -> Result<Table> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    decode_csv(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn checkpoint_round_trips_every_layer_kind() {
        for net in [Network::fc1(3).unwrap(), Network::cnn_small(4).unwrap()] {
            let bytes = encode_checkpoint(&net).unwrap();
            assert_eq!(&bytes[..8], CHECKPOINT_MAGIC);
            let back = decode_checkpoint(&bytes).unwrap();
            assert_eq!(back, net);
            assert_eq!(encode_checkpoint(&back).unwrap(), bytes);
        }
        let mut net = Network::fc1(0).unwrap();
        if let Layer::Dense(d) = &mut net.layers[0] {
            d.activation = ActivationKind::LeakyRelu(0.125);
        }
        assert_eq!(
            decode_checkpoint(&encode_checkpoint(&net).unwrap()).unwrap(),
            net
        );
    }

    #[test]
    fn checkpoint_rejects_damage() {
        let net = Network::fc1(1).unwrap();
        let good = encode_checkpoint(&net).unwrap();

        let mut flipped = good.clone();
        flipped[100] ^= 0x01;
        assert!(matches!(
            decode_checkpoint(&flipped),
            Err(Error::Checksum { .. })
        ));

        let mut magic = good.clone();
        magic[0] = b'X';
        assert!(matches!(decode_checkpoint(&magic), Err(Error::Format(_))));

        let mut version = good.clone();
        version[7] = b'9';
        match decode_checkpoint(&version) {
            Err(Error::Format(m)) => assert!(m.contains("version")),
            other => panic!("{other:?}"),
        }

        assert!(decode_checkpoint(&good[..6]).is_err());
        assert!(decode_checkpoint(&good[..good.len() - 1]).is_err());

        // a truncated payload with a matching checksum is still caught
        let payload = &good[8..good.len() - 4];
        let short = &payload[..payload.len() - 8];
        let mut forged = CHECKPOINT_MAGIC.to_vec();
        forged.extend_from_slice(short);
        forged.extend_from_slice(&crc32fast::hash(short).to_le_bytes());
        assert!(matches!(
            decode_checkpoint(&forged),
            Err(Error::Layer { .. }) | Err(Error::Length { .. })
        ));
    }

    #[test]
    fn empty_network_is_rejected() {
        let mut net = Network::fc1(0).unwrap();
        net.layers.clear();
        assert!(matches!(encode_checkpoint(&net), Err(Error::Validation(_))));
    }

    #[test]
    fn checkpoint_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ck");
        let net = Network::fc1(9).unwrap();
        save_checkpoint(&net, &path).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), net);
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
        assert!(matches!(
            load_checkpoint(&dir.path().join("missing")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn gray_levels() {
        assert_eq!(to_gray(&[3.0, 3.0], 3.0, 3.0), vec![128, 128]);
        assert_eq!(to_gray(&[0.0, 1.0, 0.5], 0.0, 1.0), vec![0, 255, 128]);
        let (lo, hi) = value_range(&[0.0, 1.0, 1.0, 0.0]);
        assert_eq!(to_gray(&[0.0, 1.0, 1.0, 0.0], lo, hi), vec![0, 255, 255, 0]);
    }

    #[test]
    fn pgm_round_trip_and_shape_check() {
        let px: Vec<u8> = (0..12).map(|i| i * 20).collect();
        let bytes = encode_pgm(&px, 3, 4).unwrap();
        assert!(bytes.starts_with(b"P5\n4 3\n255\n"));
        assert_eq!(decode_pgm(&bytes).unwrap(), (3, 4, px));
        assert!(encode_pgm(&[0; 5], 2, 3).is_err());
        assert!(decode_pgm(b"P2\n1 1\n255\n0").is_err());
        assert!(decode_pgm(b"P5\n2 2\n255\n\x00").is_err());
    }

    #[test]
    fn shared_normalization_keeps_relative_brightness() {
        let dir = tempfile::tempdir().unwrap();
        let vs = vec![Vector::new(vec![0.0, 4.0]), Vector::new(vec![0.0, 1.0])];
        let paths: Vec<PathBuf> = (0..2)
            .map(|i| dir.path().join(format!("{i}.pgm")))
            .collect();
        write_images(&vs, 1, 2, true, &paths).unwrap();
        assert_eq!(read_pgm(&paths[0]).unwrap().2, vec![0, 255]);
        assert_eq!(read_pgm(&paths[1]).unwrap().2, vec![0, 64]);
        write_images(&vs, 1, 2, false, &paths).unwrap();
        assert_eq!(read_pgm(&paths[1]).unwrap().2, vec![0, 255]);
    }

    #[test]
    fn csv_examples() {
        let t = Table::new(["index", "sigma"]);
        assert_eq!(encode_csv(&t).unwrap(), "index,sigma\n");
        let mut t = Table::new(["step", "loss"]);
        t.push(vec![0.0, 0.1]).unwrap();
        let s = encode_csv(&t).unwrap();
        assert_eq!(s, "step,loss\n0,1.0000000000000001e-1\n");
        assert_eq!(decode_csv(&s).unwrap(), t);
        assert!(t.push(vec![1.0]).is_err());
        assert!(encode_csv(&Table::new(["a,b"])).is_err());
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_exact(bits in proptest::collection::vec(any::<u64>(), 1..20)) {
            let vals: Vec<f64> = bits.iter().map(|&b| f64::from_bits(b)).filter(|v| v.is_finite()).collect();
            let mut t = Table::new(["v"]);
            for &v in &vals {
                t.push(vec![v]).unwrap();
            }
            let back = decode_csv(&encode_csv(&t).unwrap()).unwrap();
            for (a, b) in back.rows.iter().zip(&vals) {
                prop_assert_eq!(a[0].to_bits(), b.to_bits());
            }
        }
    }
}
