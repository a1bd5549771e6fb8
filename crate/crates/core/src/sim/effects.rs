//! Per-category procedural effect layers and the linear blend that builds
//! the final scene.
//!
//! None of this aims at photorealism. Each effect is a cheap, recognizable
//! transform (tint, visibility ramp, particle streaks) whose only hard
//! requirements are: same shape as the input, values in [0, 1], and full
//! determinism given the effect seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::render::{value_noise, Image};
use super::SimError;

/// Approximate sky/ground split used by effects that treat the two regions
/// differently. Effects do not see the base scene's exact horizon; a fixed
/// split is close enough for layering.
const EFFECT_HORIZON: f64 = 0.62;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EffectKind {
    Blizzard,
    Clear,
    Clearing,
    Cloudy,
    ExtraSunny,
    Foggy,
    Neutral,
    Overcast,
    Rain,
    Smog,
    Snow,
    Snowlight,
    Thunder,
    Frozen,
}

impl EffectKind {
    pub fn for_category(name: &str) -> Option<EffectKind> {
        Some(match name {
            "blizzard" => EffectKind::Blizzard,
            "clear" => EffectKind::Clear,
            "clearing" => EffectKind::Clearing,
            "cloudy" => EffectKind::Cloudy,
            "extrasunny" => EffectKind::ExtraSunny,
            "foggy" => EffectKind::Foggy,
            "neutral" => EffectKind::Neutral,
            "overcast" => EffectKind::Overcast,
            "rain" => EffectKind::Rain,
            "smog" => EffectKind::Smog,
            "snow" => EffectKind::Snow,
            "snowlight" => EffectKind::Snowlight,
            "thunder" => EffectKind::Thunder,
            "frozen" => EffectKind::Frozen,
            _ => return None,
        })
    }
}

/// One weather effect bound to a category and a seed. Applying it to a base
/// image is a pure function of (kind, seed, base).
#[derive(Debug, Clone)]
pub struct WeatherEffect {
    pub category: String,
    pub kind: EffectKind,
    pub seed: u64,
}

impl WeatherEffect {
    pub fn new(category: &str, seed: u64) -> Result<Self, SimError> {
        let kind = EffectKind::for_category(category).ok_or_else(|| SimError::InvalidInput {
            op: "weather_effect",
            detail: format!("no effect registered for category {category:?}"),
        })?;
        Ok(WeatherEffect {
            category: category.to_string(),
            kind,
            seed,
        })
    }

    /// Render this effect's layer over the base image, clipped to [0, 1].
    pub fn layer(&self, base: &Image) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut img = base.clone();
        match self.kind {
            EffectKind::Clear => {
                brightness(&mut img, 1.05);
                mix_toward(&mut img, [0.55, 0.7, 0.95], 0.08);
            }
            EffectKind::ExtraSunny => {
                brightness(&mut img, 1.28);
                tint_mul(&mut img, [1.1, 1.04, 0.88]);
                contrast(&mut img, 1.1);
                let sun_x = rng.gen_range(0.3..0.7);
                sun_glow(&mut img, sun_x, 0.2, 0.5);
            }
            EffectKind::Clearing => {
                brightness(&mut img, 1.12);
                mix_toward(&mut img, [0.78, 0.74, 0.62], 0.10);
                streaks(&mut img, &mut rng, 40, 3..6, 0.8, [0.9, 0.92, 1.0], 0.13);
            }
            EffectKind::Cloudy => {
                brightness(&mut img, 0.93);
                cloud_blotches(&mut img, rng.gen(), 0.6);
            }
            EffectKind::Overcast => {
                mix_toward(&mut img, [0.58, 0.59, 0.62], 0.55);
                contrast(&mut img, 0.85);
                brightness(&mut img, 0.9);
            }
            EffectKind::Neutral => {
                mix_toward(&mut img, [0.6, 0.6, 0.62], 0.18);
                brightness(&mut img, 0.98);
            }
            EffectKind::Rain => {
                brightness(&mut img, 0.72);
                tint_mul(&mut img, [0.88, 0.92, 1.05]);
                darken_ground(&mut img, 0.85);
                streaks(&mut img, &mut rng, 220, 5..10, 1.6, [0.75, 0.8, 0.9], 0.3);
            }
            EffectKind::Snowlight => {
                brightness(&mut img, 0.94);
                mix_toward(&mut img, [0.92, 0.93, 0.96], 0.10);
                streaks(&mut img, &mut rng, 90, 3..6, 0.6, [0.95, 0.96, 1.0], 0.22);
            }
            EffectKind::Snow => {
                whiten_split(&mut img, 0.35, 0.55);
                dots(&mut img, &mut rng, 180, [0.97, 0.97, 1.0], 0.7);
            }
            EffectKind::Blizzard => {
                mix_toward(&mut img, [0.88, 0.9, 0.93], 0.6);
                contrast(&mut img, 0.8);
                streaks(&mut img, &mut rng, 500, 4..9, 3.0, [0.96, 0.97, 1.0], 0.5);
            }
            EffectKind::Thunder => {
                brightness(&mut img, 0.52);
                mix_toward(&mut img, [0.25, 0.27, 0.38], 0.45);
                let bolts = rng.gen_range(1..=2);
                for _ in 0..bolts {
                    lightning(&mut img, &mut rng);
                }
            }
            EffectKind::Foggy => {
                horizon_haze(&mut img, [0.82, 0.84, 0.87], 0.8, 0.35);
                contrast(&mut img, 0.8);
            }
            EffectKind::Smog => {
                horizon_haze(&mut img, [0.62, 0.56, 0.45], 0.45, 0.25);
                brightness(&mut img, 0.9);
                contrast(&mut img, 0.85);
            }
            EffectKind::Frozen => {
                tint_mul(&mut img, [0.85, 0.95, 1.12]);
                ice_ground(&mut img, [0.8, 0.88, 0.95], 0.4);
                dots(&mut img, &mut rng, 60, [1.0, 1.0, 1.0], 0.8);
            }
        }
        img.clip();
        img
    }
}

/// Convex combination of effect layers over a shared base:
/// out = sum(weight_i * effect_i(base)), clipped to [0, 1].
pub fn render_blend(
    base: &Image,
    effects: &[WeatherEffect],
    weights: &[f64],
) -> Result<Image, SimError> {
    if effects.len() != weights.len() {
        return Err(SimError::LengthMismatch {
            op: "render_blend",
            expected: effects.len(),
            got: weights.len(),
        });
    }
    if effects.is_empty() {
        return Err(SimError::InvalidInput {
            op: "render_blend",
            detail: "at least one effect layer required".into(),
        });
    }
    for &w in weights {
        if !w.is_finite() || w < 0.0 {
            return Err(SimError::InvalidInput {
                op: "render_blend",
                detail: format!("weight {w} must be finite and non-negative"),
            });
        }
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(SimError::WeightSum { sum });
    }

    let mut out = Image::zeros(base.width, base.height);
    for (effect, &w) in effects.iter().zip(weights) {
        let layer = effect.layer(base);
        for (o, v) in out.data.iter_mut().zip(&layer.data) {
            *o += w * v;
        }
    }
    out.clip();
    Ok(out)
}

// ── shared pixel transforms ──

fn brightness(img: &mut Image, factor: f64) {
    for v in &mut img.data {
        *v *= factor;
    }
}

fn contrast(img: &mut Image, factor: f64) {
    for v in &mut img.data {
        *v = (*v - 0.5) * factor + 0.5;
    }
}

fn tint_mul(img: &mut Image, rgb: [f64; 3]) {
    for px in img.data.chunks_exact_mut(3) {
        for c in 0..3 {
            px[c] *= rgb[c];
        }
    }
}

fn mix_toward(img: &mut Image, rgb: [f64; 3], amount: f64) {
    for px in img.data.chunks_exact_mut(3) {
        for c in 0..3 {
            px[c] += (rgb[c] - px[c]) * amount;
        }
    }
}

fn sun_glow(img: &mut Image, cx: f64, cy: f64, strength: f64) {
    let (w, h) = (img.width, img.height);
    for y in 0..h {
        let fy = y as f64 / h as f64;
        for x in 0..w {
            let fx = x as f64 / w as f64;
            let d2 = (fx - cx).powi(2) + (fy - cy).powi(2);
            let glow = strength * (-d2 / 0.02).exp();
            if glow > 1e-4 {
                let mut px = img.pixel(x, y);
                px[0] += glow;
                px[1] += glow;
                px[2] += glow * 0.75;
                img.set_pixel(x, y, px);
            }
        }
    }
}

fn darken_ground(img: &mut Image, factor: f64) {
    let split = (img.height as f64 * EFFECT_HORIZON) as usize;
    for y in split..img.height {
        for x in 0..img.width {
            let mut px = img.pixel(x, y);
            for c in &mut px {
                *c *= factor;
            }
            img.set_pixel(x, y, px);
        }
    }
}

fn whiten_split(img: &mut Image, sky_amount: f64, ground_amount: f64) {
    let split = (img.height as f64 * EFFECT_HORIZON) as usize;
    for y in 0..img.height {
        let amount = if y < split { sky_amount } else { ground_amount };
        for x in 0..img.width {
            let mut px = img.pixel(x, y);
            for c in &mut px {
                *c += (0.93 - *c) * amount;
            }
            img.set_pixel(x, y, px);
        }
    }
}

fn ice_ground(img: &mut Image, rgb: [f64; 3], amount: f64) {
    let split = (img.height as f64 * EFFECT_HORIZON) as usize;
    for y in split..img.height {
        for x in 0..img.width {
            let mut px = img.pixel(x, y);
            for c in 0..3 {
                px[c] += (rgb[c] - px[c]) * amount;
            }
            img.set_pixel(x, y, px);
        }
    }
}

/// Haze strongest at the horizon line, fading toward the frame edges, plus
/// a uniform base veil.
fn horizon_haze(img: &mut Image, rgb: [f64; 3], peak: f64, base: f64) {
    let h = img.height as f64;
    for y in 0..img.height {
        let fy = y as f64 / h;
        let band = (1.0 - (fy - EFFECT_HORIZON).abs() / 0.5).clamp(0.0, 1.0);
        let amount = (base + peak * band).min(0.95);
        for x in 0..img.width {
            let mut px = img.pixel(x, y);
            for c in 0..3 {
                px[c] += (rgb[c] - px[c]) * amount;
            }
            img.set_pixel(x, y, px);
        }
    }
}

fn cloud_blotches(img: &mut Image, seed: u64, strength: f64) {
    let split = (img.height as f64 * EFFECT_HORIZON) as usize;
    let cell = img.width as f64 * 0.22;
    for y in 0..split {
        for x in 0..img.width {
            let n = value_noise(x as f64, y as f64 * 1.8, cell, seed);
            let amount = strength * ((n - 0.35) * 1.8).clamp(0.0, 1.0);
            if amount > 0.0 {
                let mut px = img.pixel(x, y);
                for c in 0..3 {
                    px[c] += ([0.72, 0.73, 0.75][c] - px[c]) * amount;
                }
                img.set_pixel(x, y, px);
            }
        }
    }
}

fn streaks(
    img: &mut Image,
    rng: &mut ChaCha8Rng,
    count: usize,
    len_range: std::ops::Range<usize>,
    slant: f64,
    color: [f64; 3],
    alpha: f64,
) {
    let (w, h) = (img.width as i64, img.height as i64);
    for _ in 0..count {
        let x0 = rng.gen_range(0..img.width) as i64;
        let y0 = rng.gen_range(0..img.height) as i64;
        let len = rng.gen_range(len_range.clone()) as i64;
        for t in 0..len {
            let x = x0 + (t as f64 * slant / 3.0) as i64;
            let y = y0 + t;
            if x >= 0 && x < w && y >= 0 && y < h {
                let mut px = img.pixel(x as usize, y as usize);
                for c in 0..3 {
                    px[c] += (color[c] - px[c]) * alpha;
                }
                img.set_pixel(x as usize, y as usize, px);
            }
        }
    }
}

fn dots(img: &mut Image, rng: &mut ChaCha8Rng, count: usize, color: [f64; 3], alpha: f64) {
    for _ in 0..count {
        let x = rng.gen_range(0..img.width);
        let y = rng.gen_range(0..img.height);
        let mut px = img.pixel(x, y);
        for c in 0..3 {
            px[c] += (color[c] - px[c]) * alpha;
        }
        img.set_pixel(x, y, px);
    }
}

fn lightning(img: &mut Image, rng: &mut ChaCha8Rng) {
    let h = img.height;
    let w = img.width;
    let mut x = rng.gen_range(w / 4..w * 3 / 4) as f64;
    let bottom = (h as f64 * EFFECT_HORIZON) as usize;
    for y in 0..bottom {
        x += rng.gen_range(-1.6..1.6);
        let xi = x.round() as i64;
        for dx in -1i64..=1 {
            let px_x = xi + dx;
            if px_x >= 0 && (px_x as usize) < w {
                let glow = if dx == 0 { 0.95 } else { 0.45 };
                let mut px = img.pixel(px_x as usize, y);
                for c in &mut px {
                    *c += (1.0 - *c) * glow;
                }
                img.set_pixel(px_x as usize, y, px);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::canonical_categories;
    use crate::sim::render::SceneParams;
    use rand::SeedableRng;

    fn test_base() -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let params = SceneParams::sample(&mut rng);
        super::super::render::base_scene(24, &params)
    }

    #[test]
    fn every_category_has_a_deterministic_bounded_layer() {
        let base = test_base();
        for name in canonical_categories() {
            let effect = WeatherEffect::new(&name, 99).unwrap();
            let a = effect.layer(&base);
            let b = effect.layer(&base);
            assert_eq!(a, b, "layer for {name} not deterministic");
            assert_eq!(a.data.len(), base.data.len());
            assert!(
                a.data.iter().all(|&v| (0.0..=1.0).contains(&v)),
                "layer for {name} out of range"
            );
        }
    }

    #[test]
    fn unknown_category_is_rejected() {
        assert!(WeatherEffect::new("hurricane", 1).is_err());
    }

    #[test]
    fn degenerate_blend_returns_single_effect_exactly() {
        let base = test_base();
        let e1 = WeatherEffect::new("rain", 7).unwrap();
        let e2 = WeatherEffect::new("clear", 8).unwrap();
        let blended = render_blend(&base, &[e1.clone(), e2], &[1.0, 0.0]).unwrap();
        assert_eq!(blended, e1.layer(&base));
    }

    #[test]
    fn even_blend_of_constant_tints_averages_per_pixel() {
        // Constant-color layers via a flood-filled base and the neutral mix:
        // build two synthetic effects by hand instead, using filled images.
        let base = Image::filled(8, 8, [0.2, 0.4, 0.6]);
        let e1 = WeatherEffect::new("overcast", 1).unwrap();
        let e2 = WeatherEffect::new("frozen", 2).unwrap();
        let l1 = e1.layer(&base);
        let l2 = e2.layer(&base);
        let blended = render_blend(&base, &[e1, e2], &[0.5, 0.5]).unwrap();
        for i in 0..blended.data.len() {
            let expect = (0.5 * l1.data[i] + 0.5 * l2.data[i]).clamp(0.0, 1.0);
            assert!((blended.data[i] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn weighted_blend_matches_per_pixel_oracle() {
        let base = test_base();
        let e1 = WeatherEffect::new("foggy", 3).unwrap();
        let e2 = WeatherEffect::new("thunder", 4).unwrap();
        let l1 = e1.layer(&base);
        let l2 = e2.layer(&base);
        let blended = render_blend(&base, &[e1, e2], &[0.3, 0.7]).unwrap();
        for i in 0..blended.data.len() {
            let expect = (0.3 * l1.data[i] + 0.7 * l2.data[i]).clamp(0.0, 1.0);
            assert!((blended.data[i] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn blend_is_linear_in_the_weights_before_clipping() {
        let base = test_base();
        let e1 = WeatherEffect::new("snow", 3).unwrap();
        let e2 = WeatherEffect::new("smog", 4).unwrap();
        let l1 = e1.layer(&base);
        let l2 = e2.layer(&base);
        // Interpolating between one-hot weight vectors equals interpolating
        // the layers; all values stay inside [0,1] so clipping is inactive.
        for &a in &[0.0, 0.25, 0.5, 0.9] {
            let blended = render_blend(
                &base,
                &[e1.clone(), e2.clone()],
                &[a, 1.0 - a],
            )
            .unwrap();
            for i in 0..blended.data.len() {
                let expect = a * l1.data[i] + (1.0 - a) * l2.data[i];
                assert!((blended.data[i] - expect).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn invalid_weights_are_rejected() {
        let base = test_base();
        let e1 = WeatherEffect::new("rain", 7).unwrap();
        let e2 = WeatherEffect::new("clear", 8).unwrap();
        assert!(matches!(
            render_blend(&base, &[e1.clone(), e2.clone()], &[0.6, 0.6]),
            Err(SimError::WeightSum { .. })
        ));
        assert!(matches!(
            render_blend(&base, &[e1.clone(), e2.clone()], &[1.5, -0.5]),
            Err(SimError::InvalidInput { .. })
        ));
        assert!(matches!(
            render_blend(&base, &[e1, e2], &[1.0]),
            Err(SimError::LengthMismatch { .. })
        ));
    }
}
