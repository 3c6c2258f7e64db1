use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use super::cwt::Scalogram;
use crate::error::{Error, Result};

pub const IMAGE_SIZE: usize = 224;

/// 8-bit RGB raster, row-major, channels interleaved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn pixel(&self, row: usize, col: usize) -> [u8; 3] {
        let i = 3 * (row * self.width + col);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, 3)
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut enc = png::Encoder::new(BufWriter::new(file), self.width as u32, self.height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc
            .write_header()
            .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
        w.write_image_data(&self.data)
            .map_err(|e| Error::io(path, std::io::Error::other(e)))
    }
}

fn source_coord(i: usize, out: usize, src: usize) -> (usize, usize, f64) {
    let c = ((i as f64 + 0.5) * src as f64 / out as f64 - 0.5).clamp(0.0, (src - 1) as f64);
    let i0 = c.floor() as usize;
    let i1 = (i0 + 1).min(src - 1);
    (i0, i1, c - i0 as f64)
}

/// Bilinear resize with pixel-center alignment and edge clamping.
pub fn resize_bilinear(m: &[Vec<f64>], out_h: usize, out_w: usize) -> Vec<Vec<f64>> {
    let (h, w) = (m.len(), m[0].len());
    let cols: Vec<_> = (0..out_w).map(|j| source_coord(j, out_w, w)).collect();
    (0..out_h)
        .map(|i| {
            let (r0, r1, fr) = source_coord(i, out_h, h);
            cols.iter()
                .map(|&(c0, c1, fc)| {
                    let top = m[r0][c0] * (1.0 - fc) + m[r0][c1] * fc;
                    let bot = m[r1][c0] * (1.0 - fc) + m[r1][c1] * fc;
                    top * (1.0 - fr) + bot * fr
                })
                .collect()
        })
        .collect()
}

/// Min-max scale to [0, 255], resize to 224×224 and replicate to three
/// channels. A constant scalogram maps to an all-zero image.
pub fn scalogram_to_image(s: &Scalogram) -> Result<RgbImage> {
    if s.rows() == 0 || s.cols() == 0 || s.matrix.iter().any(|r| r.len() != s.cols()) {
        return Err(Error::InvalidInput("scalogram must be a non-empty rectangle".into()));
    }
    let lo = s.matrix.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    let hi = s.matrix.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let norm: Vec<Vec<f64>> = s
        .matrix
        .iter()
        .map(|r| {
            r.iter()
                .map(|v| if span > 0.0 { 255.0 * (v - lo) / span } else { 0.0 })
                .collect()
        })
        .collect();
    let resized = resize_bilinear(&norm, IMAGE_SIZE, IMAGE_SIZE);
    let data = resized
        .iter()
        .flatten()
        .flat_map(|v| [v.round().clamp(0.0, 255.0) as u8; 3])
        .collect();
    Ok(RgbImage { width: IMAGE_SIZE, height: IMAGE_SIZE, data })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalogram(matrix: Vec<Vec<f64>>) -> Scalogram {
        let n = matrix.len();
        Scalogram { matrix, scales_hz: vec![1.0; n] }
    }

    #[test]
    fn constant_is_black() {
        let img = scalogram_to_image(&scalogram(vec![vec![4.2; 50]; 128])).unwrap();
        assert_eq!(img.shape(), (224, 224, 3));
        assert!(img.data.iter().all(|v| *v == 0));
    }

    #[test]
    fn checkerboard_matches_hand_grid() {
        let img = scalogram_to_image(&scalogram(vec![vec![0.0, 1.0], vec![1.0, 0.0]])).unwrap();
        // output pixel k samples source coordinate (k + 0.5)/112 − 0.5, clamped to [0, 1]
        let coord = |k: usize| ((k as f64 + 0.5) / 112.0 - 0.5).clamp(0.0, 1.0);
        for i in 0..224 {
            for j in 0..224 {
                let (u, v) = (coord(i), coord(j));
                let want = 255.0 * (u * (1.0 - v) + (1.0 - u) * v);
                let px = img.pixel(i, j);
                assert_eq!(px[0] as f64, want.round(), "({i},{j})");
                assert!(px[0] == px[1] && px[1] == px[2]);
            }
        }
        // centre pixel: 255·2·u(1−u) with u = 0.5 − 0.5/112
        let u: f64 = 0.5 - 0.5 / 112.0;
        assert!((255.0 * 2.0 * u * (1.0 - u) - 127.49).abs() < 0.01);
        assert_eq!(img.pixel(111, 111)[0], 127);
        assert_eq!(img.pixel(0, 0)[0], 0);
        assert_eq!(img.pixel(0, 223)[0], 255);
    }

    #[test]
    fn png_roundtrip() {
        let s = scalogram((0..128).map(|r| (0..300).map(|c| (r * c) as f64).collect()).collect());
        let img = scalogram_to_image(&s).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.png");
        img.write_png(&path).unwrap();
        let decoder = png::Decoder::new(std::io::BufReader::new(File::open(&path).unwrap()));
        let mut reader = decoder.read_info().unwrap();
        let mut buf = vec![0; reader.output_buffer_size().unwrap()];
        let info = reader.next_frame(&mut buf).unwrap();
        assert_eq!((info.width, info.height), (224, 224));
        assert_eq!(&buf[..info.buffer_size()], &img.data[..]);
    }
}
