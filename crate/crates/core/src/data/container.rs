//! Band-major raster container.
//!
//! A file is a UTF-8 header of `key: value` lines terminated by one blank
//! line, followed by the raw little-endian payload, band after band, each band
//! row-major. Required keys:
//!
//! ```text
//! format: soilmap-raster/1
//! width: 4
//! height: 4
//! bands: 2
//! band_names: b0,b1
//! geotransform: 0,10,0,40,0,-10
//! dtype: float32
//! nodata: -9999
//! ```
//!
//! `band_groups` is optional; any other key is kept as free metadata
//! (provenance, task tags, ...). `dtype` is `float32` or `int32`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use crate::data::geo::GeoTransform;
use crate::error::{Error, Result};

pub const FORMAT_TAG: &str = "soilmap-raster/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    Float32,
    Int32,
}

impl Dtype {
    pub fn as_str(&self) -> &'static str {
        match self {
            Dtype::Float32 => "float32",
            Dtype::Int32 => "int32",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "float32" => Ok(Dtype::Float32),
            "int32" => Ok(Dtype::Int32),
            other => Err(Error::UnknownDtype(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RasterHeader {
    pub width: usize,
    pub height: usize,
    pub band_names: Vec<String>,
    pub band_groups: Option<Vec<String>>,
    pub transform: GeoTransform,
    pub dtype: Dtype,
    pub nodata: f64,
    pub meta: BTreeMap<String, String>,
}

impl RasterHeader {
    pub fn band_count(&self) -> usize {
        self.band_names.len()
    }

    fn band_len(&self) -> usize {
        self.width * self.height
    }

    fn render(&self) -> Result<String> {
        for name in &self.band_names {
            if name.contains([',', '\n']) || name.is_empty() {
                return Err(Error::InvalidArgument(format!("invalid band name `{name}`")));
            }
        }
        let g = self.transform.to_gdal();
        let mut s = String::new();
        s.push_str(&format!("format: {FORMAT_TAG}\n"));
        s.push_str(&format!("width: {}\n", self.width));
        s.push_str(&format!("height: {}\n", self.height));
        s.push_str(&format!("bands: {}\n", self.band_names.len()));
        s.push_str(&format!("band_names: {}\n", self.band_names.join(",")));
        if let Some(groups) = &self.band_groups {
            s.push_str(&format!("band_groups: {}\n", groups.join(",")));
        }
        s.push_str(&format!("geotransform: {},{},{},{},{},{}\n", g[0], g[1], g[2], g[3], g[4], g[5]));
        s.push_str(&format!("dtype: {}\n", self.dtype.as_str()));
        s.push_str(&format!("nodata: {}\n", self.nodata));
        for (k, v) in &self.meta {
            if k.contains([':', '\n']) || v.contains('\n') {
                return Err(Error::InvalidArgument(format!("invalid metadata entry `{k}`")));
            }
            s.push_str(&format!("{k}: {v}\n"));
        }
        s.push('\n');
        Ok(s)
    }

    fn parse(lines: &[String]) -> Result<Self> {
        let mut kv = BTreeMap::new();
        for line in lines {
            let (k, v) = line
                .split_once(':')
                .ok_or_else(|| Error::MalformedHeader(format!("line without ':' -> `{line}`")))?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        let mut take = |k: &str| kv.remove(k).ok_or_else(|| Error::MalformedHeader(format!("missing key `{k}`")));
        let format = take("format")?;
        if format != FORMAT_TAG {
            return Err(Error::MalformedHeader(format!("unsupported format `{format}`")));
        }
        let int = |k: &str, v: String| {
            v.parse::<usize>()
                .map_err(|_| Error::MalformedHeader(format!("`{k}` is not an integer: `{v}`")))
        };
        let width = int("width", take("width")?)?;
        let height = int("height", take("height")?)?;
        let bands = int("bands", take("bands")?)?;
        let band_names: Vec<String> = take("band_names")?
            .split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect();
        if band_names.len() != bands {
            return Err(Error::MalformedHeader(format!(
                "band count {bands} but {} band names",
                band_names.len()
            )));
        }
        let gt: Vec<f64> = take("geotransform")?
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::MalformedHeader("unparseable geotransform".into()))?;
        if gt.len() != 6 {
            return Err(Error::MalformedHeader(format!("geotransform needs 6 values, got {}", gt.len())));
        }
        let transform =
            GeoTransform::from_gdal([gt[0], gt[1], gt[2], gt[3], gt[4], gt[5]]).map_err(|e| Error::MalformedHeader(e.to_string()))?;
        let dtype = Dtype::parse(&take("dtype")?)?;
        let nodata_s = take("nodata")?;
        let nodata = nodata_s
            .parse::<f64>()
            .map_err(|_| Error::MalformedHeader(format!("bad nodata `{nodata_s}`")))?;
        let band_groups = match kv.remove("band_groups") {
            Some(g) => {
                let groups: Vec<String> = g.split(',').map(|s| s.trim().to_string()).collect();
                if groups.len() != bands {
                    return Err(Error::MalformedHeader(format!("{} band groups for {bands} bands", groups.len())));
                }
                Some(groups)
            }
            None => None,
        };
        if width == 0 || height == 0 {
            return Err(Error::MalformedHeader("zero-sized raster".into()));
        }
        Ok(RasterHeader {
            width,
            height,
            band_names,
            band_groups,
            transform,
            dtype,
            nodata,
            meta: kv,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RasterData {
    F32(Vec<Vec<f32>>),
    I32(Vec<Vec<i32>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RasterFile {
    pub header: RasterHeader,
    pub data: RasterData,
}

impl RasterFile {
    fn check_shapes(&self) -> Result<()> {
        let n = self.header.band_len();
        let (count, lens): (usize, Vec<usize>) = match &self.data {
            RasterData::F32(b) => (b.len(), b.iter().map(Vec::len).collect()),
            RasterData::I32(b) => (b.len(), b.iter().map(Vec::len).collect()),
        };
        if count != self.header.band_count() {
            return Err(Error::BandShapeMismatch(format!(
                "header lists {} bands, payload has {count}",
                self.header.band_count()
            )));
        }
        for (i, len) in lens.into_iter().enumerate() {
            if len != n {
                return Err(Error::BandShapeMismatch(format!(
                    "band {i} has {len} values, expected {}x{}",
                    self.header.width, self.header.height
                )));
            }
        }
        let dtype_ok = matches!(
            (&self.data, self.header.dtype),
            (RasterData::F32(_), Dtype::Float32) | (RasterData::I32(_), Dtype::Int32)
        );
        if !dtype_ok {
            return Err(Error::Format("payload type does not match header dtype".into()));
        }
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        self.check_shapes()?;
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        w.write_all(self.header.render()?.as_bytes()).map_err(io)?;
        match &self.data {
            RasterData::F32(bands) => {
                for band in bands {
                    let mut buf = Vec::with_capacity(band.len() * 4);
                    for v in band {
                        buf.extend_from_slice(&v.to_le_bytes());
                    }
                    w.write_all(&buf).map_err(io)?;
                }
            }
            RasterData::I32(bands) => {
                for band in bands {
                    let mut buf = Vec::with_capacity(band.len() * 4);
                    for v in band {
                        buf.extend_from_slice(&v.to_le_bytes());
                    }
                    w.write_all(&buf).map_err(io)?;
                }
            }
        }
        w.flush().map_err(io)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut reader = RasterReader::open(path)?;
        let header = reader.header.clone();
        let n = header.band_len();
        let mut raw = Vec::new();
        reader.inner.read_to_end(&mut raw).map_err(|e| Error::io(path, e))?;
        let expected = n * header.band_count() * 4;
        if raw.len() != expected {
            return Err(Error::BandShapeMismatch(format!(
                "payload has {} bytes, header implies {} bands of {}x{} ({expected} bytes)",
                raw.len(),
                header.band_count(),
                header.width,
                header.height
            )));
        }
        let data = match header.dtype {
            Dtype::Float32 => RasterData::F32(
                raw.chunks_exact(n * 4)
                    .map(|band| band.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect())
                    .collect(),
            ),
            Dtype::Int32 => RasterData::I32(
                raw.chunks_exact(n * 4)
                    .map(|band| band.chunks_exact(4).map(|b| i32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect())
                    .collect(),
            ),
        };
        Ok(RasterFile { header, data })
    }
}

/// Streaming reader: parses the header, then serves rectangular windows
/// without loading the whole payload.
pub struct RasterReader {
    pub header: RasterHeader,
    data_offset: u64,
    inner: BufReader<File>,
}

impl RasterReader {
    pub fn open(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut inner = BufReader::new(file);
        let mut lines = Vec::new();
        let mut consumed = 0u64;
        loop {
            let mut buf = Vec::new();
            let n = inner.read_until(b'\n', &mut buf).map_err(|e| Error::io(path, e))?;
            if n == 0 {
                return Err(Error::MalformedHeader("end of file before blank header terminator".into()));
            }
            consumed += n as u64;
            let line = String::from_utf8(buf).map_err(|_| Error::MalformedHeader("header is not UTF-8".into()))?;
            let line = line.trim_end_matches(['\n', '\r']);
            if line.is_empty() {
                break;
            }
            lines.push(line.to_string());
            if lines.len() > 10_000 {
                return Err(Error::MalformedHeader("header too long".into()));
            }
        }
        let header = RasterHeader::parse(&lines)?;
        Ok(RasterReader {
            header,
            data_offset: consumed,
            inner,
        })
    }

    /// Reads a `w`×`h` window of one float32 band starting at `(col0, row0)`.
    pub fn read_window_f32(&mut self, band: usize, col0: usize, row0: usize, w: usize, h: usize) -> Result<Vec<f32>> {
        if self.header.dtype != Dtype::Float32 {
            return Err(Error::Format("window reads require a float32 raster".into()));
        }
        if band >= self.header.band_count() || col0 + w > self.header.width || row0 + h > self.header.height {
            return Err(Error::OutOfBounds(format!(
                "window ({col0},{row0},{w},{h}) band {band} outside raster"
            )));
        }
        let mut out = Vec::with_capacity(w * h);
        let mut row_buf = vec![0u8; w * 4];
        let band_bytes = (self.header.width * self.header.height * 4) as u64;
        for r in row0..row0 + h {
            let off = self.data_offset + band as u64 * band_bytes + ((r * self.header.width + col0) * 4) as u64;
            self.inner.seek(SeekFrom::Start(off)).map_err(|e| Error::io("<raster window>", e))?;
            self.inner.read_exact(&mut row_buf).map_err(|e| Error::io("<raster window>", e))?;
            out.extend(row_buf.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])));
        }
        Ok(out)
    }
}
