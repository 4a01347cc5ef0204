use super::PinholeCamera;
use crate::image::RgbImage;

/// Resamples `image`, taken with `src`, as if it had been taken with `reference`.
///
/// Each output pixel center defines a ray in the reference camera; the ray is
/// projected into the source camera and the input is sampled bilinearly there.
/// Samples falling outside the source image are black.
pub fn remap_to_reference(image: &RgbImage, src: &PinholeCamera, reference: &PinholeCamera) -> RgbImage {
    if src == reference && image.width() == reference.width && image.height() == reference.height {
        return image.clone();
    }
    RgbImage::from_fn(reference.width, reference.height, |i, j| {
        let u = i as f64 + 0.5;
        let v = j as f64 + 0.5;
        let rx = (u - reference.cx) / reference.fx;
        let ry = (v - reference.cy) / reference.fy;
        let us = rx * src.fx + src.cx;
        let vs = ry * src.fy + src.cy;
        image.sample_bilinear(us, vs).unwrap_or([0.0; 3])
    })
}
