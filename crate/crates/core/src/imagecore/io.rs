//! File boundaries: binary PGM (exact), other raster formats (read only),
//! and the `root/<class>/<file>` dataset layout.

use std::fs;
use std::path::Path;

use super::{GrayImage, LabeledDataset, RgbImage, Split};
use crate::error::{Error, Result};

/// Encodes as binary PGM (`P5`, maxval 255). Intensities are rounded to the
/// nearest of 256 levels.
pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let header = format!("P5\n{} {}\n255\n", img.width(), img.height());
    let mut out = Vec::with_capacity(header.len() + img.data().len());
    out.extend_from_slice(header.as_bytes());
    out.extend(img.data().iter().map(|v| (v * 255.0).round() as u8));
    out
}

pub fn write_pgm(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pgm(img)).map_err(|e| Error::io(path, e))
}

/// Decodes binary PGM with maxval up to 65535 (16-bit samples big-endian).
pub fn decode_pgm(bytes: &[u8]) -> std::result::Result<GrayImage, String> {
    let mut pos = 0;
    let magic = next_token(bytes, &mut pos).ok_or("missing magic")?;
    if magic != b"P5" {
        return Err(format!(
            "unsupported magic {:?}, expected P5",
            String::from_utf8_lossy(magic)
        ));
    }
    let mut field = |name: &str| -> std::result::Result<usize, String> {
        let tok = next_token(bytes, &mut pos).ok_or_else(|| format!("missing {name}"))?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| format!("bad {name}"))
    };
    let width = field("width")?;
    let height = field("height")?;
    let maxval = field("maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(format!("maxval {maxval} out of range"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let wide = maxval > 255;
    let sample_bytes = if wide { 2 } else { 1 };
    let need = width * height * sample_bytes;
    let raster = bytes
        .get(pos..pos + need)
        .ok_or_else(|| format!("raster truncated: need {need} bytes"))?;
    let scale = maxval as f64;
    let data = if wide {
        raster
            .chunks_exact(2)
            .map(|p| u16::from_be_bytes([p[0], p[1]]) as f64 / scale)
            .collect()
    } else {
        raster.iter().map(|&b| b as f64 / scale).collect()
    };
    GrayImage::from_clamped(width, height, data).map_err(|e| e.to_string())
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (start < *pos).then(|| &bytes[start..*pos])
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes).map_err(|reason| Error::Decode {
        path: path.to_path_buf(),
        reason,
    })
}

/// Reads any supported raster. Binary PGM goes through the exact decoder;
/// other formats go through the `image` crate.
pub fn read_image(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(b"P5") {
        let gray = decode_pgm(&bytes).map_err(|reason| Error::Decode {
            path: path.to_path_buf(),
            reason,
        })?;
        return Ok(RgbImage::from_gray(&gray));
    }
    let decoded = image::load_from_memory(&bytes).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let rgb = decoded.to_rgb32f();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let data = rgb
        .pixels()
        .map(|p| p.0.map(|c| f64::from(c).clamp(0.0, 1.0)))
        .collect();
    RgbImage::new(w, h, data)
}

fn is_image_file(path: &Path) -> bool {
    matches!(
        path.extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref(),
        Some("pgm" | "png" | "jpg" | "jpeg" | "bmp" | "gif" | "tif" | "tiff")
    )
}

fn sorted_entries(dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    let mut entries = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<Vec<_>>>()?;
    entries.sort();
    Ok(entries)
}

/// Loads `root/<class>/<file>` as grayscale images. Class indices follow
/// sorted class-directory names; files are read in sorted order.
pub fn load_dataset_dir(root: impl AsRef<Path>, split: Split) -> Result<LabeledDataset<GrayImage>> {
    let root = root.as_ref();
    let class_dirs: Vec<_> = sorted_entries(root)?
        .into_iter()
        .filter(|p| p.is_dir())
        .collect();
    if class_dirs.is_empty() {
        return Err(Error::invalid(format!(
            "{} contains no class directories",
            root.display()
        )));
    }
    let mut class_names = Vec::with_capacity(class_dirs.len());
    let mut items = Vec::new();
    for (label, dir) in class_dirs.iter().enumerate() {
        let name = dir
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| Error::invalid(format!("non-UTF-8 class dir {}", dir.display())))?;
        class_names.push(name.to_string());
        let files: Vec<_> = sorted_entries(dir)?
            .into_iter()
            .filter(|p| p.is_file() && is_image_file(p))
            .collect();
        if files.is_empty() {
            log::warn!("class directory {} has no images", dir.display());
        }
        for file in files {
            items.push((read_image(&file)?.to_grayscale(), label));
        }
    }
    LabeledDataset::new(items, class_names, split)
}

/// Writes `root/<class>/<index>.pgm`, numbering items within each class.
pub fn write_dataset_dir(ds: &LabeledDataset<GrayImage>, root: impl AsRef<Path>) -> Result<()> {
    let root = root.as_ref();
    for name in ds.class_names() {
        let dir = root.join(name);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let mut next = vec![0usize; ds.num_classes()];
    for (img, label) in ds.items() {
        let path = root
            .join(&ds.class_names()[*label])
            .join(format!("{:05}.pgm", next[*label]));
        next[*label] += 1;
        write_pgm(img, path)?;
    }
    Ok(())
}
