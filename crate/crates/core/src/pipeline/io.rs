//! Frame discovery and image file I/O (8-bit PNG and TIFF).

use std::cmp::Ordering;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageReader};

use crate::error::{Error, Result};
use crate::raster::RasterImage;

const FRAME_EXTENSIONS: [&str; 3] = ["png", "tif", "tiff"];

pub fn is_frame_file(path: &Path) -> bool {
    path.is_file()
        && path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| FRAME_EXTENSIONS.iter().any(|x| e.eq_ignore_ascii_case(x)))
}

/// Compare names with digit runs taken as numbers, so `f2` < `f10`.
pub fn natural_cmp(a: &str, b: &str) -> Ordering {
    let (mut x, mut y) = (a.as_bytes(), b.as_bytes());
    while !x.is_empty() && !y.is_empty() {
        if x[0].is_ascii_digit() && y[0].is_ascii_digit() {
            let run = |s: &[u8]| s.iter().take_while(|c| c.is_ascii_digit()).count();
            let (nx, ny) = (run(x), run(y));
            let trim = |s: &[u8]| {
                let z = s.iter().take_while(|&&c| c == b'0').count();
                s[z..].to_vec()
            };
            let (dx, dy) = (trim(&x[..nx]), trim(&y[..ny]));
            let ord = dx.len().cmp(&dy.len()).then_with(|| dx.cmp(&dy));
            if ord != Ordering::Equal {
                return ord;
            }
            x = &x[nx..];
            y = &y[ny..];
        } else {
            if x[0] != y[0] {
                return x[0].cmp(&y[0]);
            }
            x = &x[1..];
            y = &y[1..];
        }
    }
    x.len().cmp(&y.len()).then_with(|| a.cmp(b))
}

pub fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Image files in `dir`, in natural filename order.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if is_frame_file(&path) {
            files.push(path);
        }
    }
    files.sort_by(|a, b| natural_cmp(&file_name(a), &file_name(b)));
    Ok(files)
}

fn decode(path: &Path) -> Result<DynamicImage> {
    let decode_err = |message: String| Error::Decode {
        path: path.to_path_buf(),
        message,
    };
    ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| decode_err(e.to_string()))
}

/// Read an 8-bit gray or RGB frame; alpha is dropped.
pub fn read_image(path: &Path) -> Result<RasterImage> {
    let img = decode(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let built = match img {
        DynamicImage::ImageLuma8(b) => RasterImage::new(w, h, 1, b.into_raw()),
        DynamicImage::ImageLumaA8(_) => RasterImage::new(w, h, 1, img.to_luma8().into_raw()),
        DynamicImage::ImageRgb8(b) => RasterImage::new(w, h, 3, b.into_raw()),
        DynamicImage::ImageRgba8(_) => RasterImage::new(w, h, 3, img.to_rgb8().into_raw()),
        other => {
            return Err(Error::Decode {
                path: path.to_path_buf(),
                message: format!("unsupported pixel format {:?}; frames must be 8-bit", other.color()),
            })
        }
    };
    built.map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Read a label map. 16-bit gray maps are re-encoded as RGB with the high
/// byte in red and the low byte in green.
pub fn read_label_map(path: &Path) -> Result<RasterImage> {
    let img = decode(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img {
        DynamicImage::ImageLuma16(b) => {
            let px = b.into_raw().into_iter().flat_map(|v| [(v >> 8) as u8, (v & 0xff) as u8, 0]).collect();
            RasterImage::new(w, h, 3, px)
        }
        _ => read_image(path),
    }
}

pub fn write_png(path: &Path, image: &RasterImage) -> Result<()> {
    let (w, h) = (image.width() as u32, image.height() as u32);
    let color = if image.channels() == 1 {
        image::ExtendedColorType::L8
    } else {
        image::ExtendedColorType::Rgb8
    };
    image::save_buffer_with_format(path, image.pixels(), w, h, color, image::ImageFormat::Png).map_err(|e| {
        match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::Decode {
                path: path.to_path_buf(),
                message: other.to_string(),
            },
        }
    })
}
