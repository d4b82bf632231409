//! Gridded height rasters with lazy, memory-bounded window access.
//!
//! A [`DsmGrid`] never requires the full raster in memory: file-backed
//! storages read only the requested window, and procedural storage
//! evaluates a height function on demand. Grids are immutable after
//! construction and safe to share across concurrent readers.

use std::fmt;
use std::fs::File;
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::geo::{uv_to_world, GeoTransform};

/// Requested pixel rectangle, inclusive bounds, may overhang the extent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelRect {
    pub u_min: i64,
    pub u_max: i64,
    pub v_min: i64,
    pub v_max: i64,
}

impl PixelRect {
    pub fn new(u_min: i64, u_max: i64, v_min: i64, v_max: i64) -> Self {
        PixelRect {
            u_min,
            u_max,
            v_min,
            v_max,
        }
    }

    pub fn full(width: usize, height: usize) -> Self {
        PixelRect::new(0, width as i64 - 1, 0, height as i64 - 1)
    }

    pub fn is_empty(&self) -> bool {
        self.u_min > self.u_max || self.v_min > self.v_max
    }
}

/// A dense rectangular read of a raster, clipped to the extent, with a
/// validity mask (false where the cell is nodata).
#[derive(Debug, Clone)]
pub struct Window {
    pub u_min: usize,
    pub u_max: usize,
    pub v_min: usize,
    pub v_max: usize,
    heights: Vec<f64>,
    mask: Vec<bool>,
}

impl Window {
    pub fn width(&self) -> usize {
        self.u_max - self.u_min + 1
    }

    pub fn height(&self) -> usize {
        self.v_max - self.v_min + 1
    }

    pub fn len(&self) -> usize {
        self.heights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heights.is_empty()
    }

    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    fn index(&self, u: usize, v: usize) -> usize {
        debug_assert!(u >= self.u_min && u <= self.u_max);
        debug_assert!(v >= self.v_min && v <= self.v_max);
        (v - self.v_min) * self.width() + (u - self.u_min)
    }

    /// Height at raster coordinates (u,v); `None` when nodata.
    pub fn get(&self, u: usize, v: usize) -> Option<f64> {
        let k = self.index(u, v);
        if self.mask[k] {
            Some(self.heights[k])
        } else {
            None
        }
    }

    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Iterate valid cells as (u, v, height) in row-major order.
    pub fn iter_valid(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let w = self.width();
        self.mask.iter().enumerate().filter_map(move |(k, &m)| {
            if m {
                Some((self.u_min + k % w, self.v_min + k / w, self.heights[k]))
            } else {
                None
            }
        })
    }
}

enum Storage {
    Memory(Arc<[f64]>),
    Binary(Arc<BinaryStorage>),
    Ascii(Arc<AsciiStorage>),
    Procedural(Arc<dyn Fn(usize, usize) -> f64 + Send + Sync>),
}

impl Clone for Storage {
    fn clone(&self) -> Self {
        match self {
            Storage::Memory(a) => Storage::Memory(a.clone()),
            Storage::Binary(a) => Storage::Binary(a.clone()),
            Storage::Ascii(a) => Storage::Ascii(a.clone()),
            Storage::Procedural(a) => Storage::Procedural(a.clone()),
        }
    }
}

pub(crate) struct BinaryStorage {
    pub(crate) file: File,
    pub(crate) path: PathBuf,
    pub(crate) data_offset: u64,
    pub(crate) width: usize,
}

impl BinaryStorage {
    /// Read `count` f64 cells starting at row `v`, column `u`.
    fn read_span(&self, u: usize, v: usize, count: usize, out: &mut [f64]) -> Result<()> {
        let cell = (v * self.width + u) as u64;
        let offset = self.data_offset + cell * 8;
        let mut raw = vec![0u8; count * 8];
        read_exact_at(&self.file, &mut raw, offset).map_err(|e| Error::io(&self.path, e))?;
        for (i, chunk) in raw.chunks_exact(8).enumerate() {
            out[i] = f64::from_le_bytes(chunk.try_into().unwrap());
        }
        Ok(())
    }
}

#[cfg(unix)]
pub(crate) fn read_exact_at(file: &File, buf: &mut [u8], offset: u64) -> std::io::Result<()> {
    use std::os::unix::fs::FileExt;
    file.read_exact_at(buf, offset)
}

#[cfg(not(unix))]
pub(crate) fn read_exact_at(file: &File, buf: &mut [u8], offset: u64) -> std::io::Result<()> {
    use std::io::{Read, Seek, SeekFrom};
    let mut f = file.try_clone()?;
    f.seek(SeekFrom::Start(offset))?;
    f.read_exact(buf)
}

pub(crate) struct AsciiStorage {
    pub(crate) file: File,
    pub(crate) path: PathBuf,
    /// Byte offset of the first data row.
    pub(crate) data_offset: u64,
    pub(crate) width: usize,
    pub(crate) height: usize,
    /// Byte offset of each data row, built lazily on first window read.
    row_index: OnceLock<Vec<u64>>,
}

impl AsciiStorage {
    pub(crate) fn new(file: File, path: PathBuf, data_offset: u64, width: usize, height: usize) -> Self {
        AsciiStorage {
            file,
            path,
            data_offset,
            width,
            height,
            row_index: OnceLock::new(),
        }
    }

    fn row_offsets(&self) -> Result<&[u64]> {
        if let Some(ix) = self.row_index.get() {
            return Ok(ix);
        }
        let mut offsets = Vec::with_capacity(self.height);
        let mut scanner = ByteScanner::new(&self.file, self.data_offset);
        let mut tokens_seen = 0usize;
        offsets.push(self.data_offset);
        // Row starts are counted in tokens, not lines: the format is
        // whitespace-separated row-major, line breaks are not guaranteed
        // to align with rows.
        while offsets.len() < self.height {
            let start = scanner
                .skip_token()
                .map_err(|e| Error::io(&self.path, e))?
                .ok_or_else(|| {
                    Error::parse(
                        &self.path,
                        format!("byte {}", scanner.pos()),
                        "unexpected end of data",
                    )
                })?;
            let _ = start;
            tokens_seen += 1;
            if tokens_seen % self.width == 0 {
                scanner
                    .skip_whitespace()
                    .map_err(|e| Error::io(&self.path, e))?;
                offsets.push(scanner.pos());
            }
        }
        let _ = self.row_index.set(offsets);
        Ok(self.row_index.get().unwrap())
    }

    fn read_row_span(&self, u: usize, v: usize, count: usize, out: &mut [f64]) -> Result<()> {
        let offsets = self.row_offsets()?;
        let mut scanner = ByteScanner::new(&self.file, offsets[v]);
        for _ in 0..u {
            scanner
                .skip_token()
                .map_err(|e| Error::io(&self.path, e))?
                .ok_or_else(|| self.eod(&scanner))?;
        }
        let mut buf = String::with_capacity(32);
        for slot in out.iter_mut().take(count) {
            buf.clear();
            let found = scanner
                .read_token(&mut buf)
                .map_err(|e| Error::io(&self.path, e))?;
            if !found {
                return Err(self.eod(&scanner));
            }
            *slot = buf.parse::<f64>().map_err(|_| {
                Error::parse(
                    &self.path,
                    format!("byte {}", scanner.pos()),
                    format!("invalid number {buf:?}"),
                )
            })?;
        }
        Ok(())
    }

    fn eod(&self, scanner: &ByteScanner<'_>) -> Error {
        Error::parse(
            &self.path,
            format!("byte {}", scanner.pos()),
            "unexpected end of data",
        )
    }
}

/// Forward-only token scanner over a file, reading through a fixed-size
/// buffer via positional reads so concurrent readers never contend.
pub(crate) struct ByteScanner<'a> {
    file: &'a File,
    buf: [u8; 8192],
    len: usize,
    idx: usize,
    /// File offset of buf[0].
    base: u64,
}

impl<'a> ByteScanner<'a> {
    pub(crate) fn new(file: &'a File, offset: u64) -> Self {
        ByteScanner {
            file,
            buf: [0; 8192],
            len: 0,
            idx: 0,
            base: offset,
        }
    }

    pub(crate) fn pos(&self) -> u64 {
        self.base + self.idx as u64
    }

    fn refill(&mut self) -> std::io::Result<bool> {
        self.base += self.len as u64;
        self.idx = 0;
        self.len = read_at_most(self.file, &mut self.buf, self.base)?;
        Ok(self.len > 0)
    }

    fn peek(&mut self) -> std::io::Result<Option<u8>> {
        if self.idx >= self.len && !self.refill()? {
            return Ok(None);
        }
        Ok(Some(self.buf[self.idx]))
    }

    pub(crate) fn skip_whitespace(&mut self) -> std::io::Result<()> {
        while let Some(b) = self.peek()? {
            if b.is_ascii_whitespace() {
                self.idx += 1;
            } else {
                break;
            }
        }
        Ok(())
    }

    /// Skip one whitespace-delimited token; returns its start offset, or
    /// `None` at end of file.
    pub(crate) fn skip_token(&mut self) -> std::io::Result<Option<u64>> {
        self.skip_whitespace()?;
        let start = self.pos();
        let mut any = false;
        while let Some(b) = self.peek()? {
            if b.is_ascii_whitespace() {
                break;
            }
            any = true;
            self.idx += 1;
        }
        Ok(if any { Some(start) } else { None })
    }

    /// Read one token into `out`; returns false at end of file.
    pub(crate) fn read_token(&mut self, out: &mut String) -> std::io::Result<bool> {
        self.skip_whitespace()?;
        let mut any = false;
        while let Some(b) = self.peek()? {
            if b.is_ascii_whitespace() {
                break;
            }
            any = true;
            out.push(b as char);
            self.idx += 1;
        }
        Ok(any)
    }
}

#[cfg(unix)]
fn read_at_most(file: &File, buf: &mut [u8], offset: u64) -> std::io::Result<usize> {
    use std::os::unix::fs::FileExt;
    file.read_at(buf, offset)
}

#[cfg(not(unix))]
fn read_at_most(file: &File, buf: &mut [u8], offset: u64) -> std::io::Result<usize> {
    use std::io::{Read, Seek, SeekFrom};
    let mut f = file.try_clone()?;
    f.seek(SeekFrom::Start(offset))?;
    f.read(buf)
}

/// A lazily windowed height raster with georeferencing and a nodata mask.
#[derive(Clone)]
pub struct DsmGrid {
    id: usize,
    width: usize,
    height: usize,
    geotransform: GeoTransform,
    nodata: f64,
    source_path: Option<PathBuf>,
    storage: Storage,
    valid_cache: Arc<OnceLock<usize>>,
}

impl fmt::Debug for DsmGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DsmGrid")
            .field("id", &self.id)
            .field("width", &self.width)
            .field("height", &self.height)
            .field("nodata", &self.nodata)
            .field("source_path", &self.source_path)
            .finish()
    }
}

impl DsmGrid {
    fn validate_dims(width: usize, height: usize) -> Result<()> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput(format!(
                "raster dimensions must be >= 1, got {width}x{height}"
            )));
        }
        Ok(())
    }

    /// In-memory grid, row-major heights, north row first.
    pub fn from_heights(
        width: usize,
        height: usize,
        heights: Vec<f64>,
        geotransform: GeoTransform,
        nodata: f64,
    ) -> Result<Self> {
        Self::validate_dims(width, height)?;
        if heights.len() != width * height {
            return Err(Error::InvalidInput(format!(
                "height buffer length {} != {}x{}",
                heights.len(),
                width,
                height
            )));
        }
        Ok(DsmGrid {
            id: 0,
            width,
            height,
            geotransform,
            nodata,
            source_path: None,
            storage: Storage::Memory(heights.into()),
            valid_cache: Arc::new(OnceLock::new()),
        })
    }

    /// Grid whose heights are computed on demand; nothing is ever cached
    /// beyond the requested window. Useful for very large synthetic tests.
    pub fn procedural<F>(
        width: usize,
        height: usize,
        geotransform: GeoTransform,
        nodata: f64,
        f: F,
    ) -> Result<Self>
    where
        F: Fn(usize, usize) -> f64 + Send + Sync + 'static,
    {
        Self::validate_dims(width, height)?;
        Ok(DsmGrid {
            id: 0,
            width,
            height,
            geotransform,
            nodata,
            source_path: None,
            storage: Storage::Procedural(Arc::new(f)),
            valid_cache: Arc::new(OnceLock::new()),
        })
    }

    pub(crate) fn from_binary_storage(
        width: usize,
        height: usize,
        geotransform: GeoTransform,
        nodata: f64,
        storage: BinaryStorage,
    ) -> Result<Self> {
        Self::validate_dims(width, height)?;
        let path = storage.path.clone();
        Ok(DsmGrid {
            id: 0,
            width,
            height,
            geotransform,
            nodata,
            source_path: Some(path),
            storage: Storage::Binary(Arc::new(storage)),
            valid_cache: Arc::new(OnceLock::new()),
        })
    }

    pub(crate) fn from_ascii_storage(
        width: usize,
        height: usize,
        geotransform: GeoTransform,
        nodata: f64,
        storage: AsciiStorage,
    ) -> Result<Self> {
        Self::validate_dims(width, height)?;
        let path = storage.path.clone();
        Ok(DsmGrid {
            id: 0,
            width,
            height,
            geotransform,
            nodata,
            source_path: Some(path),
            storage: Storage::Ascii(Arc::new(storage)),
            valid_cache: Arc::new(OnceLock::new()),
        })
    }

    pub fn with_id(mut self, id: usize) -> Self {
        self.id = id;
        self
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn geotransform(&self) -> &GeoTransform {
        &self.geotransform
    }

    pub fn nodata(&self) -> f64 {
        self.nodata
    }

    pub fn source_path(&self) -> Option<&Path> {
        self.source_path.as_deref()
    }

    /// True when `h` is a real height: finite and not the nodata sentinel.
    pub fn is_valid_value(&self, h: f64) -> bool {
        h.is_finite() && h != self.nodata
    }

    pub fn contains_pixel(&self, u: i64, v: i64) -> bool {
        u >= 0 && v >= 0 && (u as usize) < self.width && (v as usize) < self.height
    }

    /// Single-cell read; `None` when out of range or nodata.
    pub fn sample_pixel(&self, u: i64, v: i64) -> Option<f64> {
        if !self.contains_pixel(u, v) {
            return None;
        }
        let (u, v) = (u as usize, v as usize);
        let h = match &self.storage {
            Storage::Memory(data) => data[v * self.width + u],
            Storage::Procedural(f) => f(u, v),
            Storage::Binary(b) => {
                let mut one = [0.0f64];
                b.read_span(u, v, 1, &mut one).ok()?;
                one[0]
            }
            Storage::Ascii(a) => {
                let mut one = [0.0f64];
                a.read_row_span(u, v, 1, &mut one).ok()?;
                one[0]
            }
        };
        if self.is_valid_value(h) {
            Some(h)
        } else {
            None
        }
    }

    /// Read a rectangular window, clipped to the extent. Memory use is
    /// proportional to the clipped window area, never to the raster.
    pub fn read_window(&self, rect: PixelRect) -> Result<Window> {
        if rect.is_empty() {
            return Err(Error::InvalidInput(format!("empty window request {rect:?}")));
        }
        let u_min = rect.u_min.max(0);
        let v_min = rect.v_min.max(0);
        let u_max = rect.u_max.min(self.width as i64 - 1);
        let v_max = rect.v_max.min(self.height as i64 - 1);
        if u_min > u_max || v_min > v_max {
            return Err(Error::OutOfBounds {
                u_min: rect.u_min,
                u_max: rect.u_max,
                v_min: rect.v_min,
                v_max: rect.v_max,
            });
        }
        let (u_min, u_max, v_min, v_max) =
            (u_min as usize, u_max as usize, v_min as usize, v_max as usize);
        let w = u_max - u_min + 1;
        let h = v_max - v_min + 1;
        let mut heights = vec![0.0f64; w * h];
        match &self.storage {
            Storage::Memory(data) => {
                for row in 0..h {
                    let src = (v_min + row) * self.width + u_min;
                    heights[row * w..(row + 1) * w].copy_from_slice(&data[src..src + w]);
                }
            }
            Storage::Procedural(f) => {
                for row in 0..h {
                    for col in 0..w {
                        heights[row * w + col] = f(u_min + col, v_min + row);
                    }
                }
            }
            Storage::Binary(b) => {
                for row in 0..h {
                    b.read_span(u_min, v_min + row, w, &mut heights[row * w..(row + 1) * w])?;
                }
            }
            Storage::Ascii(a) => {
                for row in 0..h {
                    a.read_row_span(u_min, v_min + row, w, &mut heights[row * w..(row + 1) * w])?;
                }
            }
        }
        let mask = heights.iter().map(|&x| self.is_valid_value(x)).collect();
        Ok(Window {
            u_min,
            u_max,
            v_min,
            v_max,
            heights,
            mask,
        })
    }

    /// Total number of valid cells; streamed in row bands and cached.
    pub fn valid_count(&self) -> Result<usize> {
        if let Some(&n) = self.valid_cache.get() {
            return Ok(n);
        }
        let mut n = 0usize;
        let band = (1 << 20) / self.width.max(1) + 1;
        let mut v = 0usize;
        while v < self.height {
            let v_end = (v + band).min(self.height) - 1;
            let win = self.read_window(PixelRect::new(0, self.width as i64 - 1, v as i64, v_end as i64))?;
            n += win.valid_count();
            v = v_end + 1;
        }
        let _ = self.valid_cache.set(n);
        Ok(n)
    }

    /// World-coordinate bounding box of the pixel centers (x_min, x_max, y_min, y_max).
    pub fn world_bounds(&self) -> (f64, f64, f64, f64) {
        let gt = &self.geotransform;
        let corners = [
            (0.0, 0.0),
            (self.width as f64 - 1.0, 0.0),
            (0.0, self.height as f64 - 1.0),
            (self.width as f64 - 1.0, self.height as f64 - 1.0),
        ];
        let mut x_min = f64::INFINITY;
        let mut x_max = f64::NEG_INFINITY;
        let mut y_min = f64::INFINITY;
        let mut y_max = f64::NEG_INFINITY;
        for (u, v) in corners {
            let (x, y, _) = uv_to_world(u, v, gt, 0.0);
            x_min = x_min.min(x);
            x_max = x_max.max(x);
            y_min = y_min.min(y);
            y_max = y_max.max(y);
        }
        (x_min, x_max, y_min, y_max)
    }

    /// 3D world point of an integer pixel; `None` when nodata.
    pub fn point_at(&self, u: i64, v: i64) -> Option<(f64, f64, f64)> {
        let h = self.sample_pixel(u, v)?;
        Some(uv_to_world(u as f64, v as f64, &self.geotransform, h))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_3x3(nodata: f64, heights: Vec<f64>) -> DsmGrid {
        DsmGrid::from_heights(3, 3, heights, GeoTransform::north_up(0.0, 0.0, 1.0), nodata)
            .unwrap()
    }

    #[test]
    fn full_extent_window() {
        let g = grid_3x3(
            -9999.0,
            vec![1.0, 2.0, 3.0, 4.0, -9999.0, 6.0, 7.0, 8.0, f64::NAN],
        );
        let w = g.read_window(PixelRect::full(3, 3)).unwrap();
        assert_eq!(w.len(), 9);
        assert_eq!(w.valid_count(), 7);
        assert_eq!(w.get(1, 1), None); // sentinel
        assert_eq!(w.get(2, 2), None); // NaN is always nodata
        assert_eq!(w.get(0, 1), Some(4.0));
    }

    #[test]
    fn overhanging_request_is_clipped() {
        let g = grid_3x3(-9999.0, (0..9).map(|i| i as f64).collect());
        let w = g.read_window(PixelRect::new(1, 4, 0, 1)).unwrap();
        assert_eq!(w.u_min, 1);
        assert_eq!(w.u_max, 2);
        assert_eq!(w.width(), 2);
        assert_eq!(w.height(), 2);
        assert_eq!(w.get(2, 1), Some(5.0));
    }

    #[test]
    fn disjoint_request_is_out_of_bounds() {
        let g = grid_3x3(-9999.0, vec![0.0; 9]);
        assert!(matches!(
            g.read_window(PixelRect::new(5, 7, 0, 1)),
            Err(Error::OutOfBounds { .. })
        ));
        assert!(matches!(
            g.read_window(PixelRect::new(-3, -1, 0, 1)),
            Err(Error::OutOfBounds { .. })
        ));
    }

    #[test]
    fn checkerboard_nodata_mask_count() {
        // 5x5 checkerboard with (0,0) nodata: invalid where (u+v) even.
        let mut heights = vec![0.0; 25];
        for v in 0..5 {
            for u in 0..5 {
                heights[v * 5 + u] = if (u + v) % 2 == 0 { -9999.0 } else { 1.0 };
            }
        }
        let g = DsmGrid::from_heights(5, 5, heights, GeoTransform::north_up(0.0, 0.0, 1.0), -9999.0)
            .unwrap();
        let w = g.read_window(PixelRect::full(5, 5)).unwrap();
        let area = w.len();
        let invalid = area - w.valid_count();
        assert_eq!(invalid, area.div_ceil(2));
    }

    #[test]
    fn procedural_matches_closure() {
        let g = DsmGrid::procedural(
            100,
            80,
            GeoTransform::north_up(0.0, 0.0, 1.0),
            -9999.0,
            |u, v| (u * 1000 + v) as f64,
        )
        .unwrap();
        assert_eq!(g.sample_pixel(7, 9), Some(7009.0));
        let w = g.read_window(PixelRect::new(50, 59, 70, 79)).unwrap();
        assert_eq!(w.get(51, 72), Some(51072.0));
        assert_eq!(w.len(), 100);
    }

    #[test]
    fn valid_count_streams() {
        let g = grid_3x3(-1.0, vec![0.0, -1.0, 2.0, 3.0, -1.0, 5.0, 6.0, 7.0, 8.0]);
        assert_eq!(g.valid_count().unwrap(), 7);
    }
}
