use crate::error::{Error, Result};
use crate::tensor::Tensor;
use image::{ImageBuffer, Rgb};
use std::path::Path;

/// Reads an image as `[3, H, W]` with values in `[0, 1]`.
pub fn read_png(path: &Path) -> Result<Tensor> {
    let img = image::open(path)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?
        .to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut data = vec![0.0f32; 3 * h * w];
    for (x, y, px) in img.enumerate_pixels() {
        for c in 0..3 {
            data[(c * h + y as usize) * w + x as usize] = px[c] as f32 / 255.0;
        }
    }
    Tensor::new(&[3, h, w], data)
}

/// Writes a `[3, H, W]` frame as 8-bit RGB, clamping to `[0, 1]` and
/// rounding to the nearest level.
pub fn write_png(path: &Path, frame: &Tensor) -> Result<()> {
    let s = frame.shape();
    if s.len() != 3 || s[0] != 3 {
        return Err(Error::invalid("write_png", format!("expected [3, H, W], got {s:?}")));
    }
    let (h, w) = (s[1], s[2]);
    let d = frame.data();
    let img = ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
        let at = |c: usize| {
            let v = d[(c * h + y as usize) * w + x as usize].clamp(0.0, 1.0);
            (v * 255.0).round() as u8
        };
        Rgb([at(0), at(1), at(2)])
    });
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    img.save(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip_is_exact_on_8bit_levels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a/b.png");
        let f = Tensor::from_fn(&[3, 4, 5], |i| (i * 7 % 256) as f32 / 255.0);
        write_png(&path, &f).unwrap();
        assert_eq!(read_png(&path).unwrap(), f);
        assert!(read_png(&dir.path().join("missing.png")).is_err());
    }
}
