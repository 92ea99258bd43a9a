//! Normalized XY position grids and the 3-channel input stack.
//!
//! A grid assigns every pixel its own coordinates: x_channel[i][j] = j/(W−1),
//! y_channel[i][j] = i/(H−1), so both channels span [0,1] with the endpoints
//! attained. An extent of 1 has no second endpoint and maps to constant 0.
//! Because the grid is affine in its indices, generating it at a target
//! resolution is interchangeable with bilinearly resizing a reference grid.

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

#[derive(Debug, Clone)]
pub struct CoordinateGrid<E: Element> {
    pub height: usize,
    pub width: usize,
    /// [H,W]; varies along j (columns).
    pub x_channel: Tensor<E>,
    /// [H,W]; varies along i (rows).
    pub y_channel: Tensor<E>,
}

fn axis_value(index: usize, extent: usize) -> f64 {
    if extent <= 1 {
        0.0
    } else {
        index as f64 / (extent - 1) as f64
    }
}

pub fn make_position_grids<E: Element>(height: usize, width: usize) -> Result<CoordinateGrid<E>> {
    if height == 0 || width == 0 {
        return Err(Error::InvalidArgument(format!(
            "grid extents must be positive (got {height}x{width})"
        )));
    }
    let mut x = vec![E::zero(); height * width];
    let mut y = vec![E::zero(); height * width];
    for i in 0..height {
        let yv = E::from_f64(axis_value(i, height));
        for j in 0..width {
            x[i * width + j] = E::from_f64(axis_value(j, width));
            y[i * width + j] = yv;
        }
    }
    Ok(CoordinateGrid {
        height,
        width,
        x_channel: Tensor::from_vec(vec![height, width], x)?,
        y_channel: Tensor::from_vec(vec![height, width], y)?,
    })
}

/// Grid for an image that has been resized to `height`×`width`. The grid is
/// regenerated rather than interpolated; the two are equal to within
/// rounding because the grid is affine in its indices.
pub fn grids_for_resolution<E: Element>(height: usize, width: usize) -> Result<CoordinateGrid<E>> {
    make_position_grids(height, width)
}

/// [1,H,W] grayscale → [3,H,W]: channel 0 the image, channel 1 the x grid,
/// channel 2 the y grid.
pub fn append_coords<E: Element>(image: &Tensor<E>) -> Result<Tensor<E>> {
    let (h, w) = match image.shape() {
        [1, h, w] => (*h, *w),
        s => {
            return Err(Error::shape(
                "append_coords",
                format!("expected single-channel [1,H,W], got {s:?}"),
            ))
        }
    };
    let grid = make_position_grids::<E>(h, w)?;
    let mut data = Vec::with_capacity(3 * h * w);
    data.extend_from_slice(image.data());
    data.extend_from_slice(grid.x_channel.data());
    data.extend_from_slice(grid.y_channel.data());
    Tensor::from_vec(vec![3, h, w], data)
}

/// Batch form: [N,1,H,W] → [N,3,H,W]. One grid is generated and shared.
pub fn append_coords_batch<E: Element>(images: &Tensor<E>) -> Result<Tensor<E>> {
    let (n, h, w) = match images.shape() {
        [n, 1, h, w] => (*n, *h, *w),
        s => {
            return Err(Error::shape(
                "append_coords",
                format!("expected [N,1,H,W], got {s:?}"),
            ))
        }
    };
    let grid = make_position_grids::<E>(h, w)?;
    let hw = h * w;
    let mut data = Vec::with_capacity(n * 3 * hw);
    for i in 0..n {
        data.extend_from_slice(&images.data()[i * hw..][..hw]);
        data.extend_from_slice(grid.x_channel.data());
        data.extend_from_slice(grid.y_channel.data());
    }
    Tensor::from_vec(vec![n, 3, h, w], data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_are_attained() {
        let g = make_position_grids::<f64>(28, 28).unwrap();
        for i in 0..28 {
            assert_eq!(g.x_channel.at(&[i, 0]), 0.0);
            assert_eq!(g.x_channel.at(&[i, 27]), 1.0);
            assert_eq!(g.y_channel.at(&[0, i]), 0.0);
            assert_eq!(g.y_channel.at(&[27, i]), 1.0);
        }
        assert!((g.x_channel.at(&[5, 13]) - 13.0 / 27.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_extent_is_constant_zero() {
        let g = make_position_grids::<f32>(1, 5).unwrap();
        assert!(g.y_channel.data().iter().all(|&v| v == 0.0));
        assert_eq!(g.x_channel.data(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert!(make_position_grids::<f32>(0, 5).is_err());
        assert!(make_position_grids::<f32>(5, 0).is_err());
    }

    #[test]
    fn two_by_two_grid() {
        let g = make_position_grids::<f64>(2, 2).unwrap();
        assert_eq!(g.x_channel.data(), &[0.0, 1.0, 0.0, 1.0]);
        assert_eq!(g.y_channel.data(), &[0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn append_preserves_image_and_adds_grids() {
        let img = Tensor::from_vec(vec![1, 2, 3], vec![0.1f32, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        let out = append_coords(&img).unwrap();
        assert_eq!(out.shape(), &[3, 2, 3]);
        assert_eq!(&out.data()[..6], img.data());
        let g = make_position_grids::<f32>(2, 3).unwrap();
        assert_eq!(&out.data()[6..12], g.x_channel.data());
        assert_eq!(&out.data()[12..], g.y_channel.data());
        // Multi-channel input is rejected.
        let rgb = Tensor::<f32>::zeros(&[3, 2, 3]);
        assert!(append_coords(&rgb).is_err());
    }

    #[test]
    fn batch_append_shares_one_grid() {
        let imgs = Tensor::from_vec(vec![2, 1, 2, 2], vec![1.0f32; 8]).unwrap();
        let out = append_coords_batch(&imgs).unwrap();
        assert_eq!(out.shape(), &[2, 3, 2, 2]);
        assert_eq!(&out.data()[4..8], &[0.0, 1.0, 0.0, 1.0]);
        assert_eq!(&out.data()[16..20], &[0.0, 1.0, 0.0, 1.0]);
    }
}
