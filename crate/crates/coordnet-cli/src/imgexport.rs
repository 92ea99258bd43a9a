//! 8-bit grayscale PNG export for [H,W] tensors with values in [0,1].

use std::path::Path;

use coordnet::{Element, Error, Result, Tensor};

fn plane_dims<E: Element>(t: &Tensor<E>) -> Result<(usize, usize)> {
    match t.shape() {
        [h, w] => Ok((*h, *w)),
        s => Err(Error::shape("png_export", format!("expected [H,W], got {s:?}"))),
    }
}

/// Quantizes round(clamp(v)·255) and writes a grayscale PNG.
pub fn write_grayscale_png<E: Element>(t: &Tensor<E>, path: &Path) -> Result<()> {
    let (h, w) = plane_dims(t)?;
    let pixels: Vec<u8> = t
        .data()
        .iter()
        .map(|&v| (v.to_f64().clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let img = image::GrayImage::from_raw(w as u32, h as u32, pixels)
        .expect("buffer length matches dimensions");
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    img.save(path)
        .map_err(|e| Error::Data(format!("writing {}: {e}", path.display())))
}

/// Reads a grayscale PNG back to values in [0,1] (v/255).
pub fn read_grayscale_png(path: &Path) -> Result<Tensor<f32>> {
    let img = image::open(path)
        .map_err(|e| Error::Data(format!("reading {}: {e}", path.display())))?
        .into_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = img.into_raw().into_iter().map(|b| b as f32 / 255.0).collect();
    Tensor::from_vec(vec![h, w], data)
}

/// Min-max rescale to [0,1]; a constant input maps to all zeros.
pub fn min_max_normalize<E: Element>(t: &Tensor<E>) -> Tensor<E> {
    let lo = t.data().iter().map(|&v| v.to_f64()).fold(f64::INFINITY, f64::min);
    let hi = t.data().iter().map(|&v| v.to_f64()).fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    if range > 0.0 {
        t.map(|v| E::from_f64((v.to_f64() - lo) / range))
    } else {
        Tensor::zeros(t.shape())
    }
}

/// Side-by-side composite of equally sized [H,W] planes: [H, len·W].
pub fn hstack<E: Element>(planes: &[&Tensor<E>]) -> Result<Tensor<E>> {
    let (h, w) = plane_dims(planes.first().ok_or_else(|| {
        Error::InvalidArgument("hstack of zero planes".into())
    })?)?;
    for p in planes {
        if p.shape() != [h, w] {
            return Err(Error::shape(
                "hstack",
                format!("mixed plane shapes {:?} vs [{h}, {w}]", p.shape()),
            ));
        }
    }
    let cols = planes.len() * w;
    let mut out = vec![E::zero(); h * cols];
    for (k, p) in planes.iter().enumerate() {
        for i in 0..h {
            out[i * cols + k * w..][..w].copy_from_slice(&p.data()[i * w..][..w]);
        }
    }
    Tensor::from_vec(vec![h, cols], out)
}
