//! Geometric and photometric transforms on `[3,H,W]` images.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn dims(op: &'static str, img: &Tensor<f32>) -> Result<(usize, usize, usize)> {
    match *img.shape() {
        [c, h, w] => Ok((c, h, w)),
        _ => Err(Error::dim(op, format!("expected [C,H,W], got {:?}", img.shape()))),
    }
}

/// Source index pair and blend weight for one output coordinate under the
/// half-pixel-centre convention, clamped to the edge.
fn sample_axis(dst: usize, in_len: usize, out_len: usize) -> (usize, usize, f32) {
    let scale = in_len as f64 / out_len as f64;
    let src = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (in_len - 1) as f64);
    let lo = src.floor() as usize;
    let hi = (lo + 1).min(in_len - 1);
    (lo, hi, (src - lo as f64) as f32)
}

// exact when a == b, so constant regions stay constant
fn lerp(a: f32, b: f32, t: f32) -> f32 {
    a + (b - a) * t
}

/// Bilinear resampling to `out_h x out_w`.
pub fn resize_bilinear(img: &Tensor<f32>, out_h: usize, out_w: usize) -> Result<Tensor<f32>> {
    let (c, h, w) = dims("resize_bilinear", img)?;
    if out_h == 0 || out_w == 0 {
        return Err(Error::dim(
            "resize_bilinear",
            format!("zero output size {out_h}x{out_w}"),
        ));
    }
    if (h, w) == (out_h, out_w) {
        return Ok(img.clone());
    }
    let rows: Vec<_> = (0..out_h).map(|y| sample_axis(y, h, out_h)).collect();
    let cols: Vec<_> = (0..out_w).map(|x| sample_axis(x, w, out_w)).collect();
    let src = img.data();
    let mut out = Vec::with_capacity(c * out_h * out_w);
    for ch in 0..c {
        let plane = &src[ch * h * w..(ch + 1) * h * w];
        for &(y0, y1, fy) in &rows {
            for &(x0, x1, fx) in &cols {
                let top = lerp(plane[y0 * w + x0], plane[y0 * w + x1], fx);
                let bottom = lerp(plane[y1 * w + x0], plane[y1 * w + x1], fx);
                out.push(lerp(top, bottom, fy));
            }
        }
    }
    Tensor::from_vec(&[c, out_h, out_w], out)
}

/// Counter-clockwise rotation by `degrees` about the image centre. Output keeps
/// the input size; pixels whose source falls outside the frame are 0.
pub fn rotate(img: &Tensor<f32>, degrees: f64) -> Result<Tensor<f32>> {
    let (c, h, w) = dims("rotate", img)?;
    let (sin, cos) = degrees.to_radians().sin_cos();
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let src = img.data();
    let mut out = vec![0f32; c * h * w];
    for y in 0..h {
        for x in 0..w {
            // y axis points down in image coordinates
            let u = x as f64 - cx;
            let v = cy - y as f64;
            let sx = cx + (cos * u + sin * v);
            let sy = cy - (-sin * u + cos * v);
            if sx < 0.0 || sy < 0.0 || sx > (w - 1) as f64 || sy > (h - 1) as f64 {
                continue;
            }
            let x0 = sx.floor() as usize;
            let y0 = sy.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let y1 = (y0 + 1).min(h - 1);
            let fx = (sx - x0 as f64) as f32;
            let fy = (sy - y0 as f64) as f32;
            for ch in 0..c {
                let p = &src[ch * h * w..(ch + 1) * h * w];
                let top = lerp(p[y0 * w + x0], p[y0 * w + x1], fx);
                let bottom = lerp(p[y1 * w + x0], p[y1 * w + x1], fx);
                out[(ch * h + y) * w + x] = lerp(top, bottom, fy);
            }
        }
    }
    Tensor::from_vec(&[c, h, w], out)
}

/// The augmentation rotation: 45 degrees counter-clockwise.
pub fn rotate45(img: &Tensor<f32>) -> Result<Tensor<f32>> {
    rotate(img, 45.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlipAxis {
    /// Mirror left-right (reverse columns).
    Horizontal,
    /// Mirror top-bottom (reverse rows).
    Vertical,
}

pub fn flip(img: &Tensor<f32>, axis: FlipAxis) -> Result<Tensor<f32>> {
    let (c, h, w) = dims("flip", img)?;
    let src = img.data();
    let mut out = Vec::with_capacity(src.len());
    for ch in 0..c {
        for y in 0..h {
            let sy = match axis {
                FlipAxis::Vertical => h - 1 - y,
                FlipAxis::Horizontal => y,
            };
            let row = &src[(ch * h + sy) * w..(ch * h + sy + 1) * w];
            match axis {
                FlipAxis::Horizontal => out.extend(row.iter().rev()),
                FlipAxis::Vertical => out.extend_from_slice(row),
            }
        }
    }
    Tensor::from_vec(&[c, h, w], out)
}

/// ImageNet RGB channel means on the 0-255 scale.
pub const IMAGENET_MEANS: [f32; 3] = [123.68, 116.779, 103.939];

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum Normalization {
    /// Divide by 255.
    #[default]
    UnitScale,
    /// Subtract a per-channel mean (0-255 scale).
    ChannelMean([f32; 3]),
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Normalization::UnitScale => f.write_str("unit-scale"),
            Normalization::ChannelMean([r, g, b]) => write!(f, "channel-mean:{r},{g},{b}"),
        }
    }
}

impl FromStr for Normalization {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "unit-scale" {
            return Ok(Normalization::UnitScale);
        }
        if s == "channel-mean" {
            return Ok(Normalization::ChannelMean(IMAGENET_MEANS));
        }
        if let Some(list) = s.strip_prefix("channel-mean:") {
            let vals: Vec<f32> = list
                .split(',')
                .map(|v| v.trim().parse::<f32>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Config(format!("bad channel means '{list}'")))?;
            if let [r, g, b] = vals[..] {
                if [r, g, b].iter().all(|v| v.is_finite()) {
                    return Ok(Normalization::ChannelMean([r, g, b]));
                }
            }
            return Err(Error::Config(format!(
                "expected three finite channel means, got '{list}'"
            )));
        }
        Err(Error::Config(format!(
            "unknown normalization '{s}' (expected unit-scale or channel-mean[:r,g,b])"
        )))
    }
}

pub fn normalize(img: &Tensor<f32>, mode: Normalization) -> Result<Tensor<f32>> {
    let (c, h, w) = dims("normalize", img)?;
    match mode {
        Normalization::UnitScale => Ok(img.map(|v| v / 255.0)),
        Normalization::ChannelMean(means) => {
            if c != 3 {
                return Err(Error::dim(
                    "normalize",
                    format!("channel-mean needs 3 channels, got {c}"),
                ));
            }
            let mut out = img.clone();
            for (ch, plane) in out.data_mut().chunks_mut(h * w).enumerate() {
                for v in plane {
                    *v -= means[ch];
                }
            }
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn img(h: usize, w: usize, f: impl Fn(usize, usize, usize) -> f32) -> Tensor<f32> {
        let mut d = Vec::new();
        for c in 0..3 {
            for y in 0..h {
                for x in 0..w {
                    d.push(f(c, y, x));
                }
            }
        }
        Tensor::from_vec(&[3, h, w], d).unwrap()
    }

    #[test]
    fn resize_identity_and_mean() {
        let x = img(224, 224, |c, y, x| (c * 7 + y * 3 + x) as f32 % 251.0);
        assert_eq!(resize_bilinear(&x, 224, 224).unwrap(), x);
        let q = img(2, 2, |_, y, x| (y * 2 + x + 1) as f32);
        assert_eq!(resize_bilinear(&q, 1, 1).unwrap().data(), &[2.5, 2.5, 2.5]);
    }

    #[test]
    fn resize_constant_and_zero_size() {
        let x = img(5, 9, |_, _, _| 17.0);
        for (h, w) in [(1, 1), (3, 20), (224, 224)] {
            assert!(resize_bilinear(&x, h, w).unwrap().data().iter().all(|&v| v == 17.0));
        }
        assert!(matches!(resize_bilinear(&x, 0, 3), Err(Error::Dimension { .. })));
    }

    #[test]
    fn rotate_keeps_shape_and_blanks_corners() {
        let x = img(224, 224, |_, _, _| 255.0);
        let r = rotate45(&x).unwrap();
        assert_eq!(r.shape(), x.shape());
        for (y, xx) in [(0, 0), (0, 223), (223, 0), (223, 223)] {
            assert_eq!(r.data()[y * 224 + xx], 0.0);
        }
        assert_eq!(r.data()[112 * 224 + 112], 255.0);
    }

    #[test]
    fn rotate_preserves_odd_centre() {
        let x = img(7, 7, |c, y, x| {
            if (y, x) == (3, 3) {
                100.0 + c as f32
            } else {
                (y * 7 + x) as f32
            }
        });
        let r = rotate45(&x).unwrap();
        for c in 0..3 {
            assert_eq!(r.data()[(c * 7 + 3) * 7 + 3], 100.0 + c as f32);
        }
    }

    #[test]
    fn rotate_direction_is_counter_clockwise() {
        // a bright pixel right of centre moves up-right under CCW rotation
        let x = img(21, 21, |_, y, x| if y == 10 && x == 18 { 255.0 } else { 0.0 });
        let r = rotate(&x, 90.0).unwrap();
        assert_eq!(r.data()[2 * 21 + 10], 255.0);
    }

    #[test]
    fn flip_cases() {
        let row = Tensor::from_vec(&[3, 1, 3], vec![1., 2., 3., 1., 2., 3., 1., 2., 3.]).unwrap();
        assert_eq!(&flip(&row, FlipAxis::Horizontal).unwrap().data()[..3], &[3., 2., 1.]);
        let sym = img(4, 4, |_, _, x| [1., 2., 2., 1.][x]);
        assert_eq!(flip(&sym, FlipAxis::Horizontal).unwrap(), sym);
        let col = img(3, 1, |_, y, _| y as f32);
        assert_eq!(&flip(&col, FlipAxis::Vertical).unwrap().data()[..3], &[2., 1., 0.]);
    }

    #[test]
    fn normalization_modes() {
        let x = img(2, 2, |_, _, _| 255.0);
        assert!(normalize(&x, Normalization::UnitScale)
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 1.0));
        let z = img(2, 2, |_, _, _| 0.0);
        assert!(normalize(&z, Normalization::UnitScale)
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 0.0));
        let m = img(2, 2, |c, _, _| IMAGENET_MEANS[c]);
        assert!(normalize(&m, Normalization::ChannelMean(IMAGENET_MEANS))
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn normalization_parse() {
        assert_eq!("unit-scale".parse::<Normalization>().unwrap(), Normalization::UnitScale);
        assert_eq!(
            "channel-mean".parse::<Normalization>().unwrap(),
            Normalization::ChannelMean(IMAGENET_MEANS)
        );
        let n: Normalization = "channel-mean:1,2,3.5".parse().unwrap();
        assert_eq!(n, Normalization::ChannelMean([1., 2., 3.5]));
        assert_eq!(n.to_string().parse::<Normalization>().unwrap(), n);
        assert!("channel-mean:1,2".parse::<Normalization>().is_err());
    }

    proptest! {
        #[test]
        fn flips_are_involutions(h in 1usize..7, w in 1usize..7, seed in any::<u32>()) {
            let x = img(h, w, |c, y, xx| ((c * 31 + y * 7 + xx) as u32 ^ seed) as f32);
            for axis in [FlipAxis::Horizontal, FlipAxis::Vertical] {
                prop_assert_eq!(flip(&flip(&x, axis).unwrap(), axis).unwrap(), x.clone());
            }
        }

        #[test]
        fn resize_stays_within_input_range(h in 1usize..9, w in 1usize..9, oh in 1usize..12, ow in 1usize..12, seed in any::<u32>()) {
            let x = img(h, w, |c, y, xx| (((c * 131 + y * 17 + xx * 7) as u32).wrapping_mul(seed | 1) % 256) as f32);
            let lo = x.data().iter().copied().fold(f32::INFINITY, f32::min);
            let hi = x.data().iter().copied().fold(f32::NEG_INFINITY, f32::max);
            let r = resize_bilinear(&x, oh, ow).unwrap();
            prop_assert!(r.data().iter().all(|&v| v >= lo - 1e-3 && v <= hi + 1e-3));
        }
    }
}
