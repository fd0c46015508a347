use aniso_core::ImageField;

/// Returned by [`psnr`] for identical images.
pub const PSNR_CAP: f64 = 99.0;

/// `10·log₁₀(1/MSE)` for fields on `[0, 1]`, capped at [`PSNR_CAP`].
pub fn psnr(a: &ImageField, b: &ImageField) -> aniso_core::Result<f64> {
    if a.dims() != b.dims() || a.channels() != b.channels() {
        return Err(aniso_core::Error::Dimension(format!(
            "psnr of {:?}x{} and {:?}x{}",
            a.dims(),
            a.channels(),
            b.dims(),
            b.channels()
        )));
    }
    let n = a.values().len() as f64;
    let mse = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((-10.0 * mse.log10()).min(PSNR_CAP))
}
