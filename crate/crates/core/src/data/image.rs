//! Grayscale image input (binary PGM and PNG) and 8-bit PGM output.

use std::fs;
use std::io::BufWriter;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

/// Read a grayscale image as `H x W` values on the 0..=255 scale. The format
/// is chosen by extension (`.pgm`, `.png`).
pub fn read_image(path: &Path) -> Result<Array2<f32>> {
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("pgm") => read_pgm(path),
        Some("png") => read_png(path),
        _ => Err(Error::format(path, "unsupported image type (expected .pgm or .png)")),
    }
}

pub fn read_pgm(path: &Path) -> Result<Array2<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pgm(&bytes, path)
}

fn parse_pgm(bytes: &[u8], path: &Path) -> Result<Array2<f32>> {
    let mut pos = 0;
    let mut token = || -> Result<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format(path, "truncated PGM header"));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token()? != "P5" {
        return Err(Error::format(path, "not a binary PGM (P5) file"));
    }
    let mut num = |what: &str| -> Result<usize> {
        token()?
            .parse()
            .map_err(|_| Error::format(path, format!("bad PGM {what}")))
    };
    let w = num("width")?;
    let h = num("height")?;
    let maxval = num("maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::format(path, format!("bad PGM maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    let start = pos + 1;
    let wide = maxval > 255;
    let need = w * h * if wide { 2 } else { 1 };
    if bytes.len() < start + need {
        return Err(Error::format(path, "truncated PGM raster"));
    }
    let raster = &bytes[start..start + need];
    let scale = 255.0 / maxval as f64;
    Ok(Array2::from_shape_fn((h, w), |(r, c)| {
        let i = r * w + c;
        let v = if wide {
            u16::from_be_bytes([raster[2 * i], raster[2 * i + 1]]) as f64
        } else {
            raster[i] as f64
        };
        (v * scale) as f32
    }))
}

pub fn read_png(path: &Path) -> Result<Array2<f32>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut decoder = png::Decoder::new(std::io::BufReader::new(file));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::format(path, e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::format(path, "PNG too large"))?;
    let mut buf = vec![0; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::format(path, e.to_string()))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let channels = info.color_type.samples();
    let line = info.line_size;
    Ok(Array2::from_shape_fn((h, w), |(r, c)| {
        let px = &buf[r * line + c * channels..];
        match channels {
            1 | 2 => px[0] as f32,
            _ => (LUMA[0] * px[0] as f64 + LUMA[1] * px[1] as f64 + LUMA[2] * px[2] as f64) as f32,
        }
    }))
}

/// Write an 8-bit binary PGM, `pixels` in row-major order.
pub fn write_pgm(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    if pixels.len() != width * height {
        return Err(Error::shape("write_pgm", &[height, width], &[pixels.len()]));
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Write an 8-bit grayscale or RGB PNG (used by tests and tooling).
pub fn write_png(path: &Path, width: usize, height: usize, pixels: &[u8], rgb: bool) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    enc.set_color(if rgb { png::ColorType::Rgb } else { png::ColorType::Grayscale });
    enc.set_depth(png::BitDepth::Eight);
    let mut w = enc.write_header().map_err(|e| Error::format(path, e.to_string()))?;
    w.write_image_data(pixels).map_err(|e| Error::format(path, e.to_string()))?;
    w.finish().map_err(|e| Error::format(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_roundtrip_with_comment() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.pgm");
        write_pgm(&p, 3, 2, &[0, 10, 20, 30, 40, 255]).unwrap();
        let img = read_image(&p).unwrap();
        assert_eq!(img.dim(), (2, 3));
        assert_eq!(img[[1, 2]], 255.0);
        assert_eq!(img[[0, 1]], 10.0);

        let q = dir.path().join("b.pgm");
        std::fs::write(&q, b"P5\n# comment\n2 1\n255\n\x05\x06").unwrap();
        assert_eq!(read_pgm(&q).unwrap().into_raw_vec_and_offset().0, vec![5.0, 6.0]);
    }

    #[test]
    fn png_gray_and_rgb() {
        let dir = tempfile::tempdir().unwrap();
        let g = dir.path().join("g.png");
        write_png(&g, 2, 1, &[7, 200], false).unwrap();
        assert_eq!(read_image(&g).unwrap().into_raw_vec_and_offset().0, vec![7.0, 200.0]);

        let c = dir.path().join("c.png");
        write_png(&c, 1, 1, &[100, 50, 200], true).unwrap();
        let v = read_image(&c).unwrap()[[0, 0]] as f64;
        assert!((v - (0.299 * 100.0 + 0.587 * 50.0 + 0.114 * 200.0)).abs() < 1e-4);
    }

    #[test]
    fn rejects_unknown_extension() {
        assert!(read_image(Path::new("x.bmp")).is_err());
    }
}
