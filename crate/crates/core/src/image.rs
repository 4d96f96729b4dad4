//! 8-bit RGB raster images and their PNG encoding.

use std::io::{Read, Write};

use crate::error::{Error, Result};

/// 8-bit RGB image, row-major, interleaved channels, no alpha.
#[derive(Clone, PartialEq, Eq)]
pub struct PixelImage {
    height: usize,
    width: usize,
    samples: Vec<u8>,
}

impl std::fmt::Debug for PixelImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "PixelImage({}x{})", self.height, self.width)
    }
}

impl PixelImage {
    pub const CHANNELS: usize = 3;

    pub fn new(height: usize, width: usize, samples: Vec<u8>) -> Result<Self> {
        if samples.len() != height * width * Self::CHANNELS {
            return Err(Error::Shape(format!(
                "{height}x{width} RGB image needs {} samples, got {}",
                height * width * Self::CHANNELS,
                samples.len()
            )));
        }
        Ok(PixelImage { height, width, samples })
    }

    pub fn filled(height: usize, width: usize, rgb: [u8; 3]) -> Self {
        let samples = rgb.iter().copied().cycle().take(height * width * 3).collect();
        PixelImage { height, width, samples }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Self {
        let mut samples = Vec::with_capacity(height * width * 3);
        for y in 0..height {
            for x in 0..width {
                samples.extend_from_slice(&f(y, x));
            }
        }
        PixelImage { height, width, samples }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn samples(&self) -> &[u8] {
        &self.samples
    }

    #[inline]
    pub fn pixel(&self, y: usize, x: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.samples[i], self.samples[i + 1], self.samples[i + 2]]
    }

    #[inline]
    pub fn sample(&self, y: usize, x: usize, ch: usize) -> u8 {
        self.samples[(y * self.width + x) * 3 + ch]
    }

    /// Copy of the rectangle with top-left `(y0, x0)`.
    pub fn crop(&self, y0: usize, x0: usize, height: usize, width: usize) -> Result<Self> {
        if y0 + height > self.height || x0 + width > self.width {
            return Err(Error::Shape(format!(
                "crop {height}x{width} at ({y0}, {x0}) exceeds {}x{} image",
                self.height, self.width
            )));
        }
        let mut samples = Vec::with_capacity(height * width * 3);
        for y in y0..y0 + height {
            let start = (y * self.width + x0) * 3;
            samples.extend_from_slice(&self.samples[start..start + width * 3]);
        }
        Ok(PixelImage { height, width, samples })
    }

    /// Swaps rows and columns, turning vertical seams into horizontal ones.
    pub fn transpose(&self) -> Self {
        PixelImage::from_fn(self.width, self.height, |y, x| self.pixel(x, y))
    }

    pub fn flip_vertical(&self) -> Self {
        let row = self.width * 3;
        let mut samples = Vec::with_capacity(self.samples.len());
        for y in (0..self.height).rev() {
            samples.extend_from_slice(&self.samples[y * row..(y + 1) * row]);
        }
        PixelImage { height: self.height, width: self.width, samples }
    }

    pub fn write_png<W: Write>(&self, out: W) -> Result<()> {
        let w = u32::try_from(self.width).map_err(|_| Error::Shape("image too wide for PNG".into()))?;
        let h = u32::try_from(self.height).map_err(|_| Error::Shape("image too tall for PNG".into()))?;
        let mut encoder = png::Encoder::new(out, w, h);
        encoder.set_color(png::ColorType::Rgb);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder.write_header().map_err(png_err)?;
        writer.write_image_data(&self.samples).map_err(png_err)?;
        writer.finish().map_err(png_err)?;
        Ok(())
    }

    pub fn to_png_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.write_png(&mut buf)?;
        Ok(buf)
    }

    /// Decodes an 8-bit PNG. Grayscale and alpha inputs are converted to RGB;
    /// alpha is dropped.
    pub fn read_png<R: Read + std::io::BufRead + std::io::Seek>(input: R) -> Result<Self> {
        let mut decoder = png::Decoder::new(input);
        decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
        let mut reader = decoder.read_info().map_err(png_err)?;
        let size = reader.output_buffer_size().ok_or_else(|| Error::Input("PNG dimensions overflow".into()))?;
        let mut buf = vec![0u8; size];
        let info = reader.next_frame(&mut buf).map_err(png_err)?;
        let (width, height) = (info.width as usize, info.height as usize);
        let src = &buf[..info.buffer_size()];
        let per_pixel = match info.color_type {
            png::ColorType::Rgb => 3,
            png::ColorType::Rgba => 4,
            png::ColorType::Grayscale => 1,
            png::ColorType::GrayscaleAlpha => 2,
            png::ColorType::Indexed => {
                return Err(Error::Input("indexed PNG was not expanded".into()));
            }
        };
        let mut samples = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            let row = &src[y * info.line_size..y * info.line_size + width * per_pixel];
            for px in row.chunks_exact(per_pixel) {
                match per_pixel {
                    1 | 2 => samples.extend_from_slice(&[px[0], px[0], px[0]]),
                    _ => samples.extend_from_slice(&px[..3]),
                }
            }
        }
        PixelImage::new(height, width, samples)
    }

    pub fn from_png_bytes(bytes: &[u8]) -> Result<Self> {
        Self::read_png(std::io::Cursor::new(bytes))
    }
}

fn png_err<E: std::fmt::Display>(e: E) -> Error {
    Error::Input(format!("png: {e}"))
}
