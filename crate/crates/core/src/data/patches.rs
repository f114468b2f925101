use rand::Rng;

use super::Sample;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    pub sample: Sample,
    /// Pixel the patch was centered on, before clamping.
    pub center: (usize, usize),
    /// Top-left corner of the window in the source image.
    pub origin: (usize, usize),
    pub fg_centered: bool,
}

/// Center-based patch sampler with foreground oversampling.
pub struct PatchSampler<'a> {
    sample: &'a Sample,
    size: usize,
    fg_fraction: f64,
    fg: Vec<usize>,
    bg: Vec<usize>,
}

impl<'a> PatchSampler<'a> {
    pub fn new(sample: &'a Sample, size: usize, fg_fraction: f64) -> Result<Self> {
        if size == 0 || size > sample.height || size > sample.width {
            return Err(Error::InvalidInput(format!(
                "patch size {size} does not fit a {}x{} image",
                sample.height, sample.width
            )));
        }
        if !(0.0..=1.0).contains(&fg_fraction) {
            return Err(Error::Domain {
                value: fg_fraction,
                domain: "fg_fraction in [0, 1]",
            });
        }
        let (fg, bg) = (0..sample.pixels()).partition(|&i| sample.labels[i] != 0);
        let s = Self {
            sample,
            size,
            fg_fraction,
            fg,
            bg,
        };
        if fg_fraction > 0.0 && s.fg.is_empty() {
            log::warn!("foreground sampling requested on an image without foreground; using background centers");
        }
        Ok(s)
    }

    pub fn draw<R: Rng>(&self, rng: &mut R) -> Patch {
        let want_fg = rng.random::<f64>() < self.fg_fraction;
        let fg_centered = (want_fg && !self.fg.is_empty()) || self.bg.is_empty();
        let pool = if fg_centered { &self.fg } else { &self.bg };
        let idx = pool[rng.random_range(0..pool.len())];
        let (cy, cx) = (idx / self.sample.width, idx % self.sample.width);
        let half = self.size / 2;
        let y0 = cy.saturating_sub(half).min(self.sample.height - self.size);
        let x0 = cx.saturating_sub(half).min(self.sample.width - self.size);
        Patch {
            sample: self.sample.crop(y0, x0, self.size).expect("window clamped inside image"),
            center: (cy, cx),
            origin: (y0, x0),
            fg_centered,
        }
    }
}

/// Endless stream of patches drawn from one image.
pub fn sample_patches<'a, R: Rng>(
    sample: &'a Sample,
    size: usize,
    fg_fraction: f64,
    rng: &'a mut R,
) -> Result<impl Iterator<Item = Patch> + 'a> {
    let sampler = PatchSampler::new(sample, size, fg_fraction)?;
    Ok(std::iter::repeat_with(move || sampler.draw(rng)))
}
