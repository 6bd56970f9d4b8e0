//! Planted band-selection dataset with a known answer.
//!
//! Twelve bands, three balanced classes, `5×5` patches. Only two bands carry
//! class information:
//!
//! * band 3: class 0 sits at 0, classes 1 and 2 at `separation`;
//! * band 9: classes 0 and 1 sit at 0, class 2 at `separation`.
//!
//! So both are needed to tell all three classes apart. Bands 2 and 4 are
//! near-duplicates of band 3 with extra patch- and pixel-level noise, forming
//! a collinear block centred on band 3. The remaining bands form
//! collinear noise blocks `{0,1}`, `{5,6,7,8}` and `{10,11}` built from a
//! heavy-tailed (Student-t) latent per block, so they carry no class signal
//! and have a lower histogram entropy than the signal bands.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StudentT};

use crate::datacube::{LabeledPatchSet, WavelengthAxis};
use crate::error::Result;

pub const PLANTED_SIGNAL_BANDS: [usize; 2] = [3, 9];
pub const PLANTED_DUPLICATES: [usize; 2] = [2, 4];
const NOISE_BLOCKS: [&[usize]; 3] = [&[0, 1], &[5, 6, 7, 8], &[10, 11]];

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedConfig {
    pub patches: usize,
    pub classes: usize,
    pub patch_size: usize,
    pub seed: u64,
    /// Distance between class levels on a signal band.
    pub separation: f64,
    /// Per-patch jitter of the signal level.
    pub patch_noise: f64,
    /// Per-pixel jitter of the signal level.
    pub pixel_noise: f64,
    /// Per-patch noise added to each duplicate band.
    pub duplicate_patch_noise: f64,
    /// Per-pixel noise added to each duplicate band.
    pub duplicate_pixel_noise: f64,
    /// Independent per-pixel noise on each member of a noise block.
    pub block_member_noise: f64,
    /// Overall amplitude of the noise blocks.
    pub block_scale: f64,
    pub first_wavelength_nm: f64,
    pub wavelength_step_nm: f64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self {
            patches: 600,
            classes: 3,
            patch_size: 5,
            seed: 1,
            separation: 1.0,
            patch_noise: 0.18,
            pixel_noise: 0.6,
            duplicate_patch_noise: 0.15,
            duplicate_pixel_noise: 0.05,
            block_member_noise: 0.1,
            block_scale: 0.05,
            first_wavelength_nm: 450.0,
            wavelength_step_nm: 20.0,
        }
    }
}

pub const PLANTED_BANDS: usize = 12;

impl PlantedConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    fn levels(&self, class: usize) -> [f64; 2] {
        let d = self.separation;
        [
            if class >= 1 { d } else { 0.0 },
            if class >= 2 { d } else { 0.0 },
        ]
    }

    pub fn generate(&self) -> Result<LabeledPatchSet> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let normal = Normal::new(0.0, 1.0).expect("valid normal");
        let heavy = StudentT::new(3.0).expect("valid student-t");
        let pixels = self.patch_size * self.patch_size;
        let mut data = Vec::with_capacity(self.patches * pixels * PLANTED_BANDS);
        let labels: Vec<usize> = (0..self.patches).map(|i| i % self.classes).collect();
        let mut n = || normal.sample(&mut rng);
        for &class in &labels {
            let level = self.levels(class);
            let patch_sig = [level[0] + self.patch_noise * n(), level[1] + self.patch_noise * n()];
            let dup_patch = [self.duplicate_patch_noise * n(), self.duplicate_patch_noise * n()];
            for _ in 0..pixels {
                let mut px = [0.0; PLANTED_BANDS];
                let a = patch_sig[0] + self.pixel_noise * n();
                let b = patch_sig[1] + self.pixel_noise * n();
                px[3] = a;
                px[2] = a + dup_patch[0] + self.duplicate_pixel_noise * n();
                px[4] = a + dup_patch[1] + self.duplicate_pixel_noise * n();
                px[9] = b;
                data.extend_from_slice(&px);
            }
        }
        // noise blocks are filled in a second pass so the signal stream above
        // does not depend on them
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
        for px in data.chunks_exact_mut(PLANTED_BANDS) {
            for block in NOISE_BLOCKS {
                let latent: f64 = heavy.sample(&mut rng);
                for &band in block {
                    let eps: f64 = normal.sample(&mut rng);
                    px[band] = self.block_scale * (latent + self.block_member_noise * eps);
                }
            }
        }
        let axis = WavelengthAxis::linear(
            self.first_wavelength_nm,
            self.wavelength_step_nm,
            PLANTED_BANDS,
        )?;
        LabeledPatchSet::new(self.patch_size, axis, data, labels)
    }
}
