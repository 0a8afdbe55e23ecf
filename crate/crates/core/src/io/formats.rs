use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::{read_text, IoError};

const MAXVAL: u32 = 65535;

/// Row-major single-channel image with values in `[−1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<f64>,
}

fn to_level(v: f64) -> u16 {
    (((v.clamp(-1.0, 1.0) + 1.0) / 2.0) * MAXVAL as f64).round() as u16
}

fn from_level(l: u16) -> f64 {
    l as f64 / MAXVAL as f64 * 2.0 - 1.0
}

/// Binary 16-bit PGM; values outside `[−1, 1]` are clipped.
pub fn write_pgm(path: &Path, image: &Image) -> Result<(), IoError> {
    if image.pixels.len() != image.height * image.width {
        return Err(IoError::Invalid(format!(
            "{}x{} image with {} pixels",
            image.height,
            image.width,
            image.pixels.len()
        )));
    }
    let mut buf = format!("P5\n{} {}\n{MAXVAL}\n", image.width, image.height).into_bytes();
    for &p in &image.pixels {
        buf.extend_from_slice(&to_level(p).to_be_bytes());
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&buf))
        .map_err(|source| IoError::File { path: path.to_path_buf(), source })
}

pub fn read_pgm(path: &Path) -> Result<Image, IoError> {
    let file_err = |source| IoError::File { path: path.to_path_buf(), source };
    let parse_err = |message: String| IoError::Parse { path: path.to_path_buf(), message };
    let mut reader = BufReader::new(std::fs::File::open(path).map_err(file_err)?);
    let mut header = Vec::new();
    while header.len() < 4 {
        let mut line = String::new();
        if reader.read_line(&mut line).map_err(file_err)? == 0 {
            return Err(parse_err("truncated header".into()));
        }
        let line = line.split('#').next().unwrap_or_default();
        header.extend(line.split_whitespace().map(str::to_owned));
    }
    if header[0] != "P5" {
        return Err(parse_err(format!("expected P5, got {}", header[0])));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|e| parse_err(format!("header field `{s}`: {e}")));
    let (width, height, maxval) = (num(&header[1])?, num(&header[2])?, num(&header[3])?);
    if maxval != MAXVAL as usize {
        return Err(parse_err(format!("maxval {maxval}, expected {MAXVAL}")));
    }
    let mut raw = vec![0u8; 2 * width * height];
    reader.read_exact(&mut raw).map_err(|_| parse_err("truncated pixel data".into()))?;
    let pixels = raw.chunks_exact(2).map(|b| from_level(u16::from_be_bytes([b[0], b[1]]))).collect();
    Ok(Image { height, width, pixels })
}

/// One value per line, no header.
pub fn write_csv_vector(path: &Path, values: &[f64]) -> Result<(), IoError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path).map_err(|e| csv_err(path, e))?;
    for v in values {
        w.write_record([v.to_string()]).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|source| IoError::File { path: path.to_path_buf(), source })
}

/// Accepts values separated by commas and newlines.
pub fn parse_csv_vector(text: &str) -> Result<Vec<f64>, String> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(text.as_bytes());
    let mut out = Vec::new();
    for record in r.records() {
        for field in record.map_err(|e| e.to_string())?.iter() {
            let field = field.trim();
            if field.is_empty() {
                continue;
            }
            out.push(field.parse::<f64>().map_err(|e| format!("`{field}`: {e}"))?);
        }
    }
    Ok(out)
}

/// Reads a vector from CSV, or the pixels of a `.pgm` image.
pub fn read_vector(path: &Path) -> Result<Vec<f64>, IoError> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")) {
        return Ok(read_pgm(path)?.pixels);
    }
    parse_csv_vector(&read_text(path)?).map_err(|message| IoError::Parse { path: path.to_path_buf(), message })
}

fn csv_err(path: &Path, e: csv::Error) -> IoError {
    IoError::Parse { path: path.to_path_buf(), message: e.to_string() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.pgm");
        let img = Image { height: 2, width: 3, pixels: vec![-1.0, 1.0, 0.0, 0.25, -0.6, 3.0] };
        write_pgm(&path, &img).unwrap();
        let back = read_pgm(&path).unwrap();
        assert_eq!((back.height, back.width), (2, 3));
        assert_eq!(back.pixels[0], -1.0);
        assert_eq!(back.pixels[1], 1.0);
        assert_eq!(back.pixels[5], 1.0);
        for (a, b) in img.pixels[..5].iter().zip(&back.pixels) {
            assert!((a - b).abs() <= 1.0 / MAXVAL as f64);
        }
        write_pgm(&path, &back).unwrap();
        assert_eq!(read_pgm(&path).unwrap(), back);
        let bytes = std::fs::read(&path).unwrap();
        assert!(bytes.starts_with(b"P5\n3 2\n65535\n"));
        assert_eq!(bytes.len(), 13 + 12);
    }

    #[test]
    fn pgm_rejects_other_formats() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.pgm");
        std::fs::write(&path, b"P2\n1 1\n255\n0\n").unwrap();
        assert!(read_pgm(&path).is_err());
        std::fs::write(&path, b"P5\n2 2\n65535\n\x00\x00").unwrap();
        assert!(read_pgm(&path).is_err());
    }

    #[test]
    fn csv_vectors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.csv");
        let v = vec![0.1, -2.5e-7, 1.0 / 3.0];
        write_csv_vector(&path, &v).unwrap();
        assert_eq!(read_vector(&path).unwrap(), v);
        assert_eq!(parse_csv_vector("1, 2\n3\n\n").unwrap(), vec![1.0, 2.0, 3.0]);
        assert!(parse_csv_vector("1,x").is_err());
    }
}
