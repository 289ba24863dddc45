use crate::error::{Error, Result};
use crate::image::{Rect, SensorImage};

/// Sum of squared 3×3 Sobel responses over the interior of `region`.
///
/// Only pixels inside the region feed the stencil, so the outer ring of the
/// region contributes no terms.
pub fn tenengrad(image: &SensorImage, region: Rect) -> Result<f64> {
    if region.w < 3 || region.h < 3 {
        return Err(Error::Range(format!("tenengrad region {region:?} smaller than 3x3")));
    }
    if !region.fits_in(image.width(), image.height()) {
        return Err(Error::Range(format!(
            "tenengrad region {region:?} outside {}x{} image",
            image.width(),
            image.height()
        )));
    }
    let p = |x: usize, y: usize| image.get(x, y) as f64;
    let mut total = 0.0;
    for y in region.y + 1..region.y + region.h - 1 {
        for x in region.x + 1..region.x + region.w - 1 {
            let gx = (p(x + 1, y - 1) + 2.0 * p(x + 1, y) + p(x + 1, y + 1))
                - (p(x - 1, y - 1) + 2.0 * p(x - 1, y) + p(x - 1, y + 1));
            let gy = (p(x - 1, y + 1) + 2.0 * p(x, y + 1) + p(x + 1, y + 1))
                - (p(x - 1, y - 1) + 2.0 * p(x, y - 1) + p(x + 1, y - 1));
            total += gx * gx + gy * gy;
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_region_is_zero() {
        let img = SensorImage::filled(10, 10, 77);
        assert_eq!(tenengrad(&img, Rect::new(2, 2, 5, 5)).unwrap(), 0.0);
    }

    #[test]
    fn vertical_step_matches_hand_sobel() {
        // columns 0 0 255 255 255, three rows: interior pixels are (1..=3, 1).
        // Gx at x=1: (255 - 0)·4 = 1020, at x=2: 1020, at x=3: 0; Gy = 0.
        let img = SensorImage::from_fn(5, 3, |x, _| if x >= 2 { 255 } else { 0 });
        let t = tenengrad(&img, Rect::new(0, 0, 5, 3)).unwrap();
        assert_eq!(t, 2.0 * 1020.0 * 1020.0);
    }

    #[test]
    fn rejects_bad_regions() {
        let img = SensorImage::filled(10, 10, 0);
        assert!(tenengrad(&img, Rect::new(0, 0, 2, 5)).is_err());
        assert!(tenengrad(&img, Rect::new(8, 8, 3, 3)).is_err());
    }

    #[test]
    fn translation_invariant_for_interior_patterns() {
        let pattern = |x: usize, y: usize| ((x * 37 + y * 91) % 200) as u8;
        let a = SensorImage::from_fn(20, 20, |x, y| {
            if (5..10).contains(&x) && (5..10).contains(&y) { pattern(x - 5, y - 5) } else { 50 }
        });
        let b = SensorImage::from_fn(20, 20, |x, y| {
            if (8..13).contains(&x) && (7..12).contains(&y) { pattern(x - 8, y - 7) } else { 50 }
        });
        let ta = tenengrad(&a, Rect::new(3, 3, 9, 9)).unwrap();
        let tb = tenengrad(&b, Rect::new(6, 5, 9, 9)).unwrap();
        assert!(ta > 0.0);
        assert_eq!(ta, tb);
    }
}
