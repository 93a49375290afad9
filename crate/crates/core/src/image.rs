//! Channel-major RGB image with values nominally in [0, 1], plus PNG I/O.

use std::path::Path;

use image::{ColorType, DynamicImage, ImageBuffer, Rgb};
use multisr_tensor::Tensor;

use crate::{Error, Result, Scalar};

#[derive(Clone, Debug, PartialEq)]
pub struct Image<T> {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Scalar> Image<T> {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::Shape(format!(
                "image dimensions must be positive, got {channels}x{height}x{width}"
            )));
        }
        if data.len() != channels * height * width {
            return Err(Error::Shape(format!(
                "{channels}x{height}x{width} image needs {} values, got {}",
                channels * height * width,
                data.len()
            )));
        }
        Ok(Image {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: T) -> Self {
        Self::new(channels, height, width, vec![value; channels * height * width])
            .expect("positive dimensions")
    }

    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> T,
    ) -> Self {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self::new(channels, height, width, data).expect("positive dimensions")
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// `(channels, height, width)`
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> T {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: T) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn plane(&self, c: usize) -> &[T] {
        &self.data[c * self.height * self.width..(c + 1) * self.height * self.width]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.dims() == other.dims()
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Image {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..*self
        }
    }

    pub fn cast<U: Scalar>(&self) -> Image<U> {
        Image {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .map(|v| U::from_f64(v.as_f64()).unwrap_or_else(U::nan))
                .collect(),
        }
    }

    /// Axis-aligned crop.
    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<Self> {
        if h == 0 || w == 0 || y0 + h > self.height || x0 + w > self.width {
            return Err(Error::Shape(format!(
                "crop {h}x{w} at ({y0},{x0}) outside {}x{}",
                self.height, self.width
            )));
        }
        Ok(Self::from_fn(self.channels, h, w, |c, y, x| {
            self.get(c, y0 + y, x0 + x)
        }))
    }

    /// Largest top-left crop whose sides are multiples of `s`.
    pub fn crop_to_multiple(&self, s: usize) -> Result<Self> {
        let (h, w) = (self.height / s * s, self.width / s * s);
        if h == self.height && w == self.width {
            return Ok(self.clone());
        }
        self.crop(0, 0, h, w)
    }

    pub fn to_tensor(&self) -> Tensor<T> {
        Tensor::from_vec(&[1, self.channels, self.height, self.width], self.data.clone())
    }

    /// Stacks equally-shaped images into an NCHW batch.
    pub fn stack(images: &[Image<T>]) -> Result<Tensor<T>> {
        let first = images
            .first()
            .ok_or_else(|| Error::Shape("cannot stack an empty batch".into()))?;
        let mut data = Vec::with_capacity(images.len() * first.data.len());
        for im in images {
            if !im.same_shape(first) {
                return Err(Error::Shape(format!(
                    "batch mixes {:?} and {:?}",
                    first.dims(),
                    im.dims()
                )));
            }
            data.extend_from_slice(&im.data);
        }
        let (c, h, w) = first.dims();
        Ok(Tensor::from_vec(&[images.len(), c, h, w], data))
    }

    pub fn unstack(batch: &Tensor<T>) -> Vec<Image<T>> {
        let (n, c, h, w) = batch.dims4();
        batch
            .data()
            .chunks(c * h * w)
            .take(n)
            .map(|chunk| Image::new(c, h, w, chunk.to_vec()).expect("tensor dims are positive"))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

/// Loads a PNG (or any format the `image` crate decodes) as RGB in [0, 1];
/// 8-bit sources are divided by 255, 16-bit sources by 65535.
pub fn load_image<T: Scalar>(path: impl AsRef<Path>) -> Result<Image<T>> {
    let path = path.as_ref();
    let dynimg = image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(from_dynamic(&dynimg))
}

pub(crate) fn from_dynamic<T: Scalar>(dynimg: &DynamicImage) -> Image<T> {
    let sixteen = matches!(
        dynimg.color(),
        ColorType::L16 | ColorType::La16 | ColorType::Rgb16 | ColorType::Rgba16
    );
    let (w, h) = (dynimg.width() as usize, dynimg.height() as usize);
    let mut data = vec![T::zero(); 3 * h * w];
    if sixteen {
        let buf = dynimg.to_rgb16();
        let scale = T::lit(65535.0);
        for (i, px) in buf.pixels().enumerate() {
            for c in 0..3 {
                data[c * h * w + i] = T::lit(px.0[c] as f64) / scale;
            }
        }
    } else {
        let buf = dynimg.to_rgb8();
        let scale = T::lit(255.0);
        for (i, px) in buf.pixels().enumerate() {
            for c in 0..3 {
                data[c * h * w + i] = T::lit(px.0[c] as f64) / scale;
            }
        }
    }
    Image::new(3, h, w, data).expect("decoded images have positive size")
}

fn quantize<T: Scalar>(v: T, max: f64) -> f64 {
    let v = v.as_f64();
    let v = if v.is_finite() { v } else { 0.0 };
    (v.clamp(0.0, 1.0) * max).round()
}

/// Writes an RGB PNG, clamping to [0, 1] and rounding to the nearest level.
pub fn save_image<T: Scalar>(img: &Image<T>, path: impl AsRef<Path>, depth: BitDepth) -> Result<()> {
    let path = path.as_ref();
    if img.channels() != 3 {
        return Err(Error::Shape(format!(
            "can only save 3-channel images, got {}",
            img.channels()
        )));
    }
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let (h, w) = (img.height(), img.width());
    let res = match depth {
        BitDepth::Eight => {
            let buf = ImageBuffer::<Rgb<u8>, _>::from_fn(w as u32, h as u32, |x, y| {
                let p = |c| quantize(img.get(c, y as usize, x as usize), 255.0) as u8;
                Rgb([p(0), p(1), p(2)])
            });
            buf.save_with_format(path, image::ImageFormat::Png)
        }
        BitDepth::Sixteen => {
            let buf = ImageBuffer::<Rgb<u16>, _>::from_fn(w as u32, h as u32, |x, y| {
                let p = |c| quantize(img.get(c, y as usize, x as usize), 65535.0) as u16;
                Rgb([p(0), p(1), p(2)])
            });
            buf.save_with_format(path, image::ImageFormat::Png)
        }
    };
    res.map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip_8_and_16_bit() {
        let dir = tempfile::tempdir().unwrap();
        let img = Image::<f64>::from_fn(3, 5, 7, |c, y, x| (c * 35 + y * 7 + x) as f64 / 104.0);
        for (depth, levels) in [(BitDepth::Eight, 255.0), (BitDepth::Sixteen, 65535.0)] {
            let p = dir.path().join(format!("{depth:?}.png"));
            save_image(&img, &p, depth).unwrap();
            let back: Image<f64> = load_image(&p).unwrap();
            assert_eq!(back.dims(), (3, 5, 7));
            for (a, b) in img.data().iter().zip(back.data()) {
                assert!((a - b).abs() <= 0.5 / levels + 1e-12);
            }
        }
    }

    #[test]
    fn save_clamps_out_of_range_values() {
        let dir = tempfile::tempdir().unwrap();
        let img = Image::<f32>::from_fn(3, 2, 2, |_, y, _| if y == 0 { -0.3 } else { 1.7 });
        let p = dir.path().join("c.png");
        save_image(&img, &p, BitDepth::Eight).unwrap();
        let back: Image<f32> = load_image(&p).unwrap();
        assert_eq!(back.get(0, 0, 0), 0.0);
        assert_eq!(back.get(2, 1, 1), 1.0);
    }

    #[test]
    fn stack_rejects_mixed_shapes() {
        let a = Image::<f32>::filled(3, 4, 4, 0.0);
        let b = Image::<f32>::filled(3, 4, 5, 0.0);
        assert!(Image::stack(&[a.clone(), b]).is_err());
        let t = Image::stack(&[a.clone(), a.clone()]).unwrap();
        assert_eq!(t.shape(), &[2, 3, 4, 4]);
        assert_eq!(Image::unstack(&t), vec![a.clone(), a]);
    }
}
