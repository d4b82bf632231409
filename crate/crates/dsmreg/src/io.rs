//! Raster file formats: ESRI ASCII Grid (with optional world file) and a
//! little-endian binary raster. Loading is lazy — only headers are parsed;
//! heights stay on disk until a window is read.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geo::GeoTransform;
use crate::raster::{AsciiStorage, BinaryStorage, DsmGrid, PixelRect};

/// Magic bytes of the binary raster format.
pub const BINARY_MAGIC: &[u8; 4] = b"DSMG";
/// Current binary format version.
pub const BINARY_VERSION: u16 = 1;
/// Binary header: magic(4) + version(2) + width(4) + height(4) + 6 x f64 geotransform + f64 nodata.
pub const BINARY_HEADER_LEN: u64 = 4 + 2 + 4 + 4 + 48 + 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RasterFormat {
    /// ESRI ASCII Grid (`.asc`), row-major, north row first.
    AsciiGrid,
    /// Little-endian `DSMG` binary raster (`.dsmg`).
    Binary,
}

impl RasterFormat {
    /// Guess the format from a file extension, if recognizable.
    pub fn from_extension(path: &Path) -> Option<RasterFormat> {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref()
        {
            Some("asc") | Some("agr") | Some("txt") => Some(RasterFormat::AsciiGrid),
            Some("dsmg") => Some(RasterFormat::Binary),
            _ => None,
        }
    }
}

/// Load a raster header, returning a lazily windowed grid. When `format`
/// is `None` it is inferred from the extension, falling back to sniffing
/// the leading bytes.
pub fn load_dsm(path: impl AsRef<Path>, format: Option<RasterFormat>) -> Result<DsmGrid> {
    let path = path.as_ref();
    let format = match format.or_else(|| RasterFormat::from_extension(path)) {
        Some(f) => f,
        None => sniff_format(path)?,
    };
    match format {
        RasterFormat::AsciiGrid => load_ascii(path),
        RasterFormat::Binary => load_binary(path),
    }
}

/// Write a grid to disk. Streams row bands; memory stays O(row).
pub fn write_dsm(grid: &DsmGrid, path: impl AsRef<Path>, format: RasterFormat) -> Result<()> {
    let path = path.as_ref();
    match format {
        RasterFormat::AsciiGrid => write_ascii(grid, path),
        RasterFormat::Binary => write_binary(grid, path),
    }
}

fn sniff_format(path: &Path) -> Result<RasterFormat> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut head = [0u8; 8];
    let n = file.read(&mut head).map_err(|e| Error::io(path, e))?;
    if n >= 4 && &head[..4] == BINARY_MAGIC {
        return Ok(RasterFormat::Binary);
    }
    if head[..n].iter().take_while(|b| !b.is_ascii_whitespace()).all(|b| b.is_ascii_alphabetic()) && n > 0 {
        return Ok(RasterFormat::AsciiGrid);
    }
    Err(Error::UnsupportedFormat(format!(
        "{}: unrecognized leading bytes",
        path.display()
    )))
}

// ---------------------------------------------------------------------------
// ESRI ASCII Grid
// ---------------------------------------------------------------------------

struct AsciiHeader {
    ncols: usize,
    nrows: usize,
    /// (value, is_center) for each axis.
    xll: (f64, bool),
    yll: (f64, bool),
    cellsize: f64,
    nodata: f64,
    data_offset: u64,
}

fn load_ascii(path: &Path) -> Result<DsmGrid> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let header = parse_ascii_header(&file, path)?;

    // Header anchors the lower-left cell; our geotransform anchors the
    // center of the top-left pixel.
    let cs = header.cellsize;
    let x_origin = if header.xll.1 {
        header.xll.0
    } else {
        header.xll.0 + 0.5 * cs
    };
    let y_origin = if header.yll.1 {
        header.yll.0 + (header.nrows as f64 - 1.0) * cs
    } else {
        header.yll.0 + (header.nrows as f64 - 0.5) * cs
    };
    let mut gt = GeoTransform::north_up(x_origin, y_origin, cs);

    if let Some(world) = read_world_file(path)? {
        gt = world;
    }

    let storage = AsciiStorage::new(
        file,
        path.to_path_buf(),
        header.data_offset,
        header.ncols,
        header.nrows,
    );
    DsmGrid::from_ascii_storage(header.ncols, header.nrows, gt, header.nodata, storage)
}

fn parse_ascii_header(file: &File, path: &Path) -> Result<AsciiHeader> {
    let mut reader = BufReader::new(file.try_clone().map_err(|e| Error::io(path, e))?);
    let mut offset = 0u64;
    let mut line = String::new();
    let mut line_no = 0usize;

    let mut ncols = None;
    let mut nrows = None;
    let mut xll = None;
    let mut yll = None;
    let mut cellsize = None;
    let mut nodata = f64::NAN;

    loop {
        line.clear();
        let n = reader
            .read_line(&mut line)
            .map_err(|e| Error::io(path, e))?;
        if n == 0 {
            return Err(Error::parse(path, format!("line {line_no}"), "missing data rows"));
        }
        line_no += 1;
        let mut tokens = line.split_whitespace();
        let key = match tokens.next() {
            Some(k) => k,
            None => {
                offset += n as u64;
                continue; // blank line inside header
            }
        };
        if key.starts_with(|c: char| c.is_ascii_digit() || c == '-' || c == '+' || c == '.') {
            // First data row; header ends at the offset before this line.
            break;
        }
        let value: f64 = tokens
            .next()
            .ok_or_else(|| Error::parse(path, format!("line {line_no}"), format!("{key}: missing value")))?
            .parse()
            .map_err(|_| Error::parse(path, format!("line {line_no}"), format!("{key}: invalid number")))?;
        match key.to_ascii_lowercase().as_str() {
            "ncols" => ncols = Some(value as usize),
            "nrows" => nrows = Some(value as usize),
            "xllcorner" => xll = Some((value, false)),
            "xllcenter" => xll = Some((value, true)),
            "yllcorner" => yll = Some((value, false)),
            "yllcenter" => yll = Some((value, true)),
            "cellsize" => cellsize = Some(value),
            "nodata_value" => nodata = value,
            other => {
                return Err(Error::parse(
                    path,
                    format!("line {line_no}"),
                    format!("unknown header key {other:?}"),
                ))
            }
        }
        offset += n as u64;
    }

    let missing = |what: &str| Error::parse(path, "header".to_string(), format!("missing {what}"));
    let ncols = ncols.ok_or_else(|| missing("ncols"))?;
    let nrows = nrows.ok_or_else(|| missing("nrows"))?;
    if ncols == 0 || nrows == 0 {
        return Err(Error::parse(path, "header".to_string(), "ncols/nrows must be >= 1"));
    }
    Ok(AsciiHeader {
        ncols,
        nrows,
        xll: xll.ok_or_else(|| missing("xllcorner/xllcenter"))?,
        yll: yll.ok_or_else(|| missing("yllcorner/yllcenter"))?,
        cellsize: cellsize.ok_or_else(|| missing("cellsize"))?,
        nodata,
        data_offset: offset,
    })
}

/// Companion world file: same stem, `.wld` extension. Six lines in order
/// x_scale, y_skew, x_skew, y_scale, x_origin, y_origin (center of the
/// first pixel). Overrides the ASCII header georeferencing when present.
fn read_world_file(raster_path: &Path) -> Result<Option<GeoTransform>> {
    let wld = raster_path.with_extension("wld");
    if !wld.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&wld).map_err(|e| Error::io(&wld, e))?;
    let mut params = [0.0f64; 6];
    let mut count = 0;
    for (i, tok) in text.split_whitespace().enumerate() {
        if i >= 6 {
            return Err(Error::parse(&wld, "line 7".to_string(), "expected exactly 6 numbers"));
        }
        params[i] = tok.parse().map_err(|_| {
            Error::parse(&wld, format!("line {}", i + 1), format!("invalid number {tok:?}"))
        })?;
        count = i + 1;
    }
    if count != 6 {
        return Err(Error::parse(
            &wld,
            format!("line {count}"),
            "expected exactly 6 numbers",
        ));
    }
    let gt = GeoTransform::from_world_file_params(params);
    if !gt.is_invertible() {
        return Err(Error::SingularTransform);
    }
    Ok(Some(gt))
}

fn write_ascii(grid: &DsmGrid, path: &Path) -> Result<()> {
    let gt = grid.geotransform();
    if gt.x_skew != 0.0 || gt.y_skew != 0.0 || gt.x_scale != -gt.y_scale || gt.x_scale <= 0.0 {
        return Err(Error::UnsupportedFormat(
            "ASCII grid requires a square north-up geotransform; use the binary format".into(),
        ));
    }
    let cs = gt.x_scale;
    let nrows = grid.height();
    let sentinel = if grid.nodata().is_finite() {
        grid.nodata()
    } else {
        -9999.0
    };
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let header = format!(
        "ncols {}\nnrows {}\nxllcorner {}\nyllcorner {}\ncellsize {}\nNODATA_value {}\n",
        grid.width(),
        nrows,
        gt.x_origin - 0.5 * cs,
        gt.y_origin + (nrows as f64 - 0.5) * gt.y_scale,
        cs,
        sentinel,
    );
    w.write_all(header.as_bytes()).map_err(|e| Error::io(path, e))?;
    let mut line = String::new();
    for v in 0..nrows {
        let row = grid.read_window(PixelRect::new(0, grid.width() as i64 - 1, v as i64, v as i64))?;
        line.clear();
        for u in 0..grid.width() {
            if u > 0 {
                line.push(' ');
            }
            match row.get(u, v) {
                // `{}` on f64 prints the shortest representation that
                // parses back to the same bits, so valid heights
                // round-trip exactly.
                Some(h) => line.push_str(&format!("{h}")),
                None => line.push_str(&format!("{sentinel}")),
            }
        }
        line.push('\n');
        w.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// Binary raster
// ---------------------------------------------------------------------------

fn load_binary(path: &Path) -> Result<DsmGrid> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut header = [0u8; BINARY_HEADER_LEN as usize];
    file.read_exact(&mut header).map_err(|e| {
        Error::parse(path, "byte 0".to_string(), format!("short header: {e}"))
    })?;
    if &header[..4] != BINARY_MAGIC {
        return Err(Error::parse(path, "byte 0".to_string(), "bad magic, expected 'DSMG'"));
    }
    let version = u16::from_le_bytes(header[4..6].try_into().unwrap());
    if version != BINARY_VERSION {
        return Err(Error::parse(
            path,
            "byte 4".to_string(),
            format!("unsupported version {version}"),
        ));
    }
    let width = u32::from_le_bytes(header[6..10].try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(header[10..14].try_into().unwrap()) as usize;
    let mut params = [0.0f64; 6];
    for (i, p) in params.iter_mut().enumerate() {
        let at = 14 + i * 8;
        *p = f64::from_le_bytes(header[at..at + 8].try_into().unwrap());
    }
    let nodata = f64::from_le_bytes(header[62..70].try_into().unwrap());
    let gt = GeoTransform::from_world_file_params(params);

    let expected = BINARY_HEADER_LEN + (width as u64) * (height as u64) * 8;
    let actual = file.metadata().map_err(|e| Error::io(path, e))?.len();
    if actual < expected {
        return Err(Error::parse(
            path,
            format!("byte {actual}"),
            format!("truncated: expected {expected} bytes"),
        ));
    }

    let storage = BinaryStorage {
        file,
        path: path.to_path_buf(),
        data_offset: BINARY_HEADER_LEN,
        width,
    };
    DsmGrid::from_binary_storage(width, height, gt, nodata, storage)
}

fn write_binary(grid: &DsmGrid, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(BINARY_MAGIC).map_err(|e| Error::io(path, e))?;
    w.write_all(&BINARY_VERSION.to_le_bytes())
        .map_err(|e| Error::io(path, e))?;
    w.write_all(&(grid.width() as u32).to_le_bytes())
        .map_err(|e| Error::io(path, e))?;
    w.write_all(&(grid.height() as u32).to_le_bytes())
        .map_err(|e| Error::io(path, e))?;
    for p in grid.geotransform().to_world_file_params() {
        w.write_all(&p.to_le_bytes()).map_err(|e| Error::io(path, e))?;
    }
    w.write_all(&grid.nodata().to_le_bytes())
        .map_err(|e| Error::io(path, e))?;
    let mut raw = Vec::with_capacity(grid.width() * 8);
    for v in 0..grid.height() {
        let row = grid.read_window(PixelRect::new(0, grid.width() as i64 - 1, v as i64, v as i64))?;
        raw.clear();
        for &h in row.heights() {
            raw.extend_from_slice(&h.to_le_bytes());
        }
        w.write_all(&raw).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
