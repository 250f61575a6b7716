//! Binary PGM (P5) reading and writing, plus a thin grayscale loader that
//! also accepts PNG behind the same interface.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

/// Read an 8-bit binary PGM (`P5`) file into a row-major array.
pub fn read_pgm(path: &Path) -> Result<Array2<u8>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pgm(&bytes).map_err(|message| Error::Image {
        path: path.to_path_buf(),
        message,
    })
}

fn parse_pgm(bytes: &[u8]) -> std::result::Result<Array2<u8>, String> {
    let mut pos = 0usize;

    let token = |pos: &mut usize| -> std::result::Result<Vec<u8>, String> {
        // skip whitespace and `#` comments
        loop {
            while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < bytes.len() && bytes[*pos] == b'#' {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
            } else {
                break;
            }
        }
        let start = *pos;
        while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if start == *pos {
            return Err("unexpected end of header".into());
        }
        Ok(bytes[start..*pos].to_vec())
    };

    let magic = token(&mut pos)?;
    if magic != b"P5" {
        return Err(format!(
            "not a binary PGM (magic {:?})",
            String::from_utf8_lossy(&magic)
        ));
    }
    let parse_num = |t: Vec<u8>| -> std::result::Result<usize, String> {
        String::from_utf8_lossy(&t)
            .parse::<usize>()
            .map_err(|_| "malformed header number".to_string())
    };
    let width = parse_num(token(&mut pos)?)?;
    let height = parse_num(token(&mut pos)?)?;
    let maxval = parse_num(token(&mut pos)?)?;
    if maxval == 0 || maxval > 255 {
        return Err(format!("unsupported maxval {maxval} (only 8-bit PGM)"));
    }
    // exactly one whitespace byte separates the header from the raster
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err("missing raster separator".into());
    }
    pos += 1;

    let expected = width
        .checked_mul(height)
        .ok_or_else(|| "image dimensions overflow".to_string())?;
    let raster = &bytes[pos..];
    if raster.len() < expected {
        return Err(format!(
            "raster truncated: expected {expected} bytes, found {}",
            raster.len()
        ));
    }
    Array2::from_shape_vec((height, width), raster[..expected].to_vec())
        .map_err(|e| e.to_string())
}

/// Write an 8-bit binary PGM (`P5`) file.
pub fn write_pgm(path: &Path, image: &Array2<u8>) -> Result<()> {
    let (height, width) = image.dim();
    let mut out = Vec::with_capacity(32 + width * height);
    write!(out, "P5\n{width} {height}\n255\n").expect("write to vec");
    if let Some(slice) = image.as_slice() {
        out.extend_from_slice(slice);
    } else {
        out.extend(image.iter().copied());
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Load a grayscale image, dispatching on extension: `.pgm` uses the built-in
/// P5 parser, `.png` decodes through the `image` crate (converted to 8-bit
/// luma).
pub fn read_gray(path: &Path) -> Result<Array2<u8>> {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .as_deref()
    {
        Some("pgm") => read_pgm(path),
        Some("png") => {
            let img = image::open(path).map_err(|e| Error::Image {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
            let gray = img.into_luma8();
            let (width, height) = gray.dimensions();
            Ok(
                Array2::from_shape_vec((height as usize, width as usize), gray.into_raw())
                    .expect("luma buffer matches dimensions"),
            )
        }
        other => Err(Error::Image {
            path: path.to_path_buf(),
            message: format!("unsupported image extension {other:?} (use .pgm or .png)"),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn pgm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.pgm");
        let img = array![[0u8, 50, 100], [150, 200, 255]];
        write_pgm(&path, &img).unwrap();
        let back = read_pgm(&path).unwrap();
        assert_eq!(img, back);
    }

    #[test]
    fn pgm_with_comment_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.pgm");
        std::fs::write(&path, b"P5\n# a comment\n2 2\n255\n\x01\x02\x03\x04").unwrap();
        let img = read_pgm(&path).unwrap();
        assert_eq!(img, array![[1u8, 2], [3, 4]]);
    }

    #[test]
    fn rejects_ascii_pgm_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let p2 = dir.path().join("a.pgm");
        std::fs::write(&p2, b"P2\n2 2\n255\n1 2 3 4\n").unwrap();
        assert!(read_pgm(&p2).is_err());

        let short = dir.path().join("s.pgm");
        std::fs::write(&short, b"P5\n4 4\n255\n\x01\x02").unwrap();
        assert!(read_pgm(&short).is_err());
    }

    #[test]
    fn png_round_trips_through_gray_loader() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.png");
        let img = array![[10u8, 20], [30, 40], [50, 60]];
        let buf =
            image::GrayImage::from_raw(2, 3, img.iter().copied().collect::<Vec<_>>()).unwrap();
        buf.save(&path).unwrap();
        assert_eq!(read_gray(&path).unwrap(), img);
    }
}
