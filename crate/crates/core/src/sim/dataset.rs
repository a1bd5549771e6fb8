//! Stratified dataset generation and the on-disk layout.
//!
//! Determinism contract: for a fixed `GenerateConfig` the full output tree
//! (PNGs, manifest, config snapshots) is byte-identical across runs and
//! across thread counts. All randomness flows from two places only:
//!
//! * a global stream seeded with `config.seed`, consumed in a fixed serial
//!   prologue (stratum shuffle, train/test shuffle), and
//! * one independent stream per sample, seeded by mixing `config.seed` with
//!   the sample index, consumed in a fixed draw order inside
//!   `generate_sample`.
//!
//! Samples can therefore be rendered on any number of rayon workers; the
//! serial epilogue writes them back in index order.

use std::fs;
use std::path::{Path, PathBuf};

use image::codecs::png::PngEncoder;
use image::{ExtendedColorType, ImageEncoder};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::membership::{memberships_raw, MembershipConfig};
use super::render::{base_scene, Image, SceneParams};
use super::scenario::{label_error_propagation, step_moisture, FluxDynamics, ScenarioState};
use super::effects::{render_blend, EffectKind, WeatherEffect};
use super::{binarize, ground_truth_from_weights, SceneSample, SimError};

pub const STRATUM_LABELS: [&str; 5] = ["1", "2", "3", "4", ">4"];

/// Co-presence stratum: how many categories are blended into a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stratum {
    #[serde(rename = "1")]
    Single,
    #[serde(rename = "2")]
    Pair,
    #[serde(rename = "3")]
    Triple,
    #[serde(rename = "4")]
    Quad,
    #[serde(rename = ">4")]
    Many,
}

impl Stratum {
    pub const ALL: [Stratum; 5] = [
        Stratum::Single,
        Stratum::Pair,
        Stratum::Triple,
        Stratum::Quad,
        Stratum::Many,
    ];

    pub fn index(self) -> usize {
        match self {
            Stratum::Single => 0,
            Stratum::Pair => 1,
            Stratum::Triple => 2,
            Stratum::Quad => 3,
            Stratum::Many => 4,
        }
    }

    pub fn label(self) -> &'static str {
        STRATUM_LABELS[self.index()]
    }

    pub fn of_k(k: usize) -> Stratum {
        match k {
            0 | 1 => Stratum::Single,
            2 => Stratum::Pair,
            3 => Stratum::Triple,
            4 => Stratum::Quad,
            _ => Stratum::Many,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Everything the generator needs; serialized next to the data it produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    pub count: usize,
    pub image_size: usize,
    pub seed: u64,
    pub categories: Vec<String>,
    /// Upper bound on blended categories inside the ">4" stratum.
    pub max_copresent: usize,
    /// Target share of each stratum, in `STRATUM_LABELS` order.
    pub stratum_proportions: [f64; 5],
    pub binarize_threshold: f64,
    pub train_fraction: f64,
    /// Scenario steps integrated before reading off the final state.
    pub burn_in_steps: usize,
    pub dt: f64,
    /// Std-dev of hypothetical blend-weight noise; its propagated variance
    /// is recorded per sample so downstream consumers know the label noise
    /// floor (zero here by construction, but the budget is carried along).
    pub label_sigma: f64,
    pub membership: MembershipConfig,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        GenerateConfig {
            count: 2000,
            image_size: 64,
            seed: 7,
            categories: super::canonical_categories(),
            max_copresent: 6,
            stratum_proportions: [0.30, 0.25, 0.20, 0.15, 0.10],
            binarize_threshold: 0.5,
            train_fraction: 0.8,
            burn_in_steps: 40,
            dt: 0.5,
            label_sigma: 0.1,
            membership: MembershipConfig::default(),
        }
    }
}

impl GenerateConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.count < 2 {
            return Err(SimError::Config("count must be at least 2".into()));
        }
        if self.image_size < 8 {
            return Err(SimError::Config("image_size must be at least 8".into()));
        }
        if self.categories.is_empty() {
            return Err(SimError::Config("categories must be non-empty".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for name in &self.categories {
            if !seen.insert(name.as_str()) {
                return Err(SimError::Config(format!("duplicate category {name:?}")));
            }
            if EffectKind::for_category(name).is_none() {
                return Err(SimError::Config(format!(
                    "category {name:?} has no effect layer"
                )));
            }
            if !self.membership.categories.iter().any(|c| &c.name == name) {
                return Err(SimError::Config(format!(
                    "category {name:?} has no membership gates"
                )));
            }
        }
        if self.max_copresent == 0 || self.max_copresent > self.categories.len() {
            return Err(SimError::Config(format!(
                "max_copresent {} outside 1..={}",
                self.max_copresent,
                self.categories.len()
            )));
        }
        let props = &self.stratum_proportions;
        if props.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(SimError::Config(
                "stratum proportions must be finite and non-negative".into(),
            ));
        }
        let sum: f64 = props.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(SimError::Config(format!(
                "stratum proportions sum to {sum}, expected 1"
            )));
        }
        if props[4] > 0.0 && self.max_copresent < 5 {
            return Err(SimError::Config(
                "the >4 stratum needs max_copresent >= 5".into(),
            ));
        }
        if props[3] > 0.0 && self.categories.len() < 4 {
            return Err(SimError::Config(
                "stratum 4 needs at least four categories".into(),
            ));
        }
        if !(self.binarize_threshold > 0.0 && self.binarize_threshold < 1.0) {
            return Err(SimError::Config(format!(
                "binarize_threshold {} outside (0, 1)",
                self.binarize_threshold
            )));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(SimError::Config(format!(
                "train_fraction {} outside (0, 1)",
                self.train_fraction
            )));
        }
        if self.burn_in_steps == 0 {
            return Err(SimError::Config("burn_in_steps must be positive".into()));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(SimError::Config(format!("dt {} must be positive", self.dt)));
        }
        if !self.label_sigma.is_finite() || !(0.0..=1.0).contains(&self.label_sigma) {
            return Err(SimError::Config(format!(
                "label_sigma {} outside [0, 1]",
                self.label_sigma
            )));
        }
        self.membership.validate()
    }
}

/// Hamilton / largest-remainder apportionment of `count` samples over the
/// five strata. Every stratum lands on the floor or ceiling of its exact
/// quota, so no share is off by more than one sample.
pub(crate) fn apportion(count: usize, proportions: &[f64; 5]) -> [usize; 5] {
    let mut counts = [0usize; 5];
    let mut fractions: Vec<(f64, usize)> = Vec::with_capacity(5);
    let mut assigned = 0usize;
    for i in 0..5 {
        let quota = count as f64 * proportions[i];
        let floor = quota.floor() as usize;
        counts[i] = floor;
        assigned += floor;
        fractions.push((quota - floor as f64, i));
    }
    // Largest fractional part first; ties go to the earlier stratum.
    fractions.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, idx) in fractions.iter().take(count.saturating_sub(assigned)) {
        counts[idx] += 1;
    }
    counts
}

/// Per-sample plan fixed by the serial prologue before any rendering runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplePlan {
    pub index: usize,
    pub stratum: Stratum,
    pub split: Split,
    pub scenario_seed: u64,
}

/// SplitMix64-style finalizer; decorrelates per-sample streams from the
/// single dataset seed.
fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn effect_seed(scenario_seed: u64, category_index: usize) -> u64 {
    mix_seed(scenario_seed ^ 0xA076_1D64_78BD_642F, category_index as u64)
}

/// Serial prologue: stratum labels and split membership for every index.
pub fn plan_samples(config: &GenerateConfig) -> Vec<SamplePlan> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let counts = apportion(config.count, &config.stratum_proportions);

    let mut strata: Vec<Stratum> = Vec::with_capacity(config.count);
    for (i, &n) in counts.iter().enumerate() {
        strata.extend(std::iter::repeat(Stratum::ALL[i]).take(n));
    }
    strata.shuffle(&mut rng);

    let mut order: Vec<usize> = (0..config.count).collect();
    order.shuffle(&mut rng);
    let train_count = ((config.count as f64) * config.train_fraction)
        .round()
        .clamp(1.0, (config.count - 1) as f64) as usize;
    let mut splits = vec![Split::Test; config.count];
    for &i in order.iter().take(train_count) {
        splits[i] = Split::Train;
    }

    (0..config.count)
        .map(|i| SamplePlan {
            index: i,
            stratum: strata[i],
            split: splits[i],
            scenario_seed: mix_seed(config.seed, i as u64),
        })
        .collect()
}

/// Render one sample from its plan. Pure in (plan, config).
///
/// Draw order on the per-sample stream, in stone: k (Many stratum only),
/// flux dynamics, initial state, burn-in steps, one selection key per
/// category, the sharpening exponent, one jitter per selected category,
/// scene parameters.
pub fn generate_sample(
    plan: &SamplePlan,
    config: &GenerateConfig,
) -> Result<(SceneSample, usize), SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(plan.scenario_seed);

    let k = match plan.stratum {
        Stratum::Single => 1,
        Stratum::Pair => 2,
        Stratum::Triple => 3,
        Stratum::Quad => 4,
        Stratum::Many => rng.gen_range(5..=config.max_copresent),
    };
    if k > config.categories.len() {
        return Err(SimError::Config(format!(
            "stratum needs {k} categories, only {} configured",
            config.categories.len()
        )));
    }

    let dynamics = FluxDynamics::sample(&mut rng);
    let mut state = ScenarioState::new(rng.gen_range(1.0..19.0), rng.gen_range(-18.0..36.0));
    for _ in 0..config.burn_in_steps {
        state = step_moisture(&state, config.dt, &dynamics, &mut rng)?;
    }

    let memberships = memberships_raw(&state, &config.membership, &config.categories)?;

    // Weighted sampling without replacement (exponential-key method): the
    // k categories with the largest u^(1/w) keys win, so higher-membership
    // categories are more likely to co-occur in the blend.
    let mut keyed: Vec<(f64, usize)> = memberships
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let u: f64 = rng.gen();
            (u.powf(1.0 / m.max(1e-6)), i)
        })
        .collect();
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut selected: Vec<usize> = keyed[..k].iter().map(|&(_, i)| i).collect();
    selected.sort_unstable();

    // Blend weights over the selected set: jittered, sharpened memberships,
    // normalized to sum 1. With k = 1 this is exactly [1.0].
    let gamma = rng.gen_range(0.8..1.6);
    let mut weights: Vec<f64> = selected
        .iter()
        .map(|&i| {
            let jitter = rng.gen_range(0.85..1.15);
            (memberships[i].max(1e-3) * jitter).powf(gamma)
        })
        .collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }

    let params = SceneParams::sample(&mut rng);
    let base = base_scene(config.image_size, &params);
    let effects: Vec<WeatherEffect> = selected
        .iter()
        .map(|&i| WeatherEffect::new(&config.categories[i], effect_seed(plan.scenario_seed, i)))
        .collect::<Result<_, _>>()?;
    let image = render_blend(&base, &effects, &weights)?;

    let mut full = vec![0.0f64; config.categories.len()];
    for (slot, &i) in selected.iter().enumerate() {
        full[i] = weights[slot];
    }
    let label_prob = ground_truth_from_weights(&full)?;
    label_prob.require_convex()?;
    let label_binary = binarize(&label_prob, config.binarize_threshold)?;

    Ok((
        SceneSample {
            image,
            label_prob,
            label_binary,
            blend_weights: full,
            scenario_seed: plan.scenario_seed,
        },
        k,
    ))
}

/// One line of `manifest.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub index: usize,
    pub file: String,
    pub split: Split,
    pub stratum: Stratum,
    pub k: usize,
    pub scenario_seed: u64,
    pub label_prob: Vec<f64>,
    pub label_binary: Vec<u8>,
    pub blend_weights: Vec<f64>,
    pub label_variance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DatasetSummary {
    pub total: usize,
    pub train: usize,
    pub test: usize,
    pub per_stratum: [usize; 5],
}

impl std::fmt::Display for DatasetSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} samples ({} train / {} test); strata",
            self.total, self.train, self.test
        )?;
        for (label, n) in STRATUM_LABELS.iter().zip(self.per_stratum) {
            write!(f, " {label}:{n}")?;
        }
        Ok(())
    }
}

fn summarize(rows: &[ManifestRow]) -> DatasetSummary {
    let mut summary = DatasetSummary {
        total: rows.len(),
        train: 0,
        test: 0,
        per_stratum: [0; 5],
    };
    for row in rows {
        match row.split {
            Split::Train => summary.train += 1,
            Split::Test => summary.test += 1,
        }
        summary.per_stratum[row.stratum.index()] += 1;
    }
    summary
}

fn encode_png(img: &Image) -> Result<Vec<u8>, SimError> {
    let mut out = Vec::new();
    PngEncoder::new(&mut out).write_image(
        &img.to_rgb8(),
        img.width as u32,
        img.height as u32,
        ExtendedColorType::Rgb8,
    )?;
    Ok(out)
}

fn decode_png(bytes: &[u8]) -> Result<Image, SimError> {
    let rgb = image::load_from_memory(bytes)?.into_rgb8();
    Image::from_rgb8(rgb.width() as usize, rgb.height() as usize, rgb.as_raw())
}

/// Generate the full dataset tree under `out_dir`:
///
/// ```text
/// out_dir/
///   images/00000.png ...
///   manifest.jsonl
///   categories.json
///   membership_config.json
///   generate_config.json
/// ```
pub fn generate_dataset(config: &GenerateConfig, out_dir: &Path) -> Result<DatasetSummary, SimError> {
    config.validate()?;
    let plans = plan_samples(config);
    let label_variance = label_error_propagation(config.label_sigma)?;

    let built: Vec<(Vec<u8>, ManifestRow)> = plans
        .par_iter()
        .map(|plan| {
            let (sample, k) = generate_sample(plan, config)?;
            let png = encode_png(&sample.image)?;
            let row = ManifestRow {
                index: plan.index,
                file: format!("images/{:05}.png", plan.index),
                split: plan.split,
                stratum: plan.stratum,
                k,
                scenario_seed: plan.scenario_seed,
                label_prob: sample.label_prob.into_inner(),
                label_binary: sample.label_binary,
                blend_weights: sample.blend_weights,
                label_variance,
            };
            Ok((png, row))
        })
        .collect::<Result<_, SimError>>()?;

    fs::create_dir_all(out_dir.join("images"))?;
    let mut manifest = String::new();
    for (png, row) in &built {
        fs::write(out_dir.join(&row.file), png)?;
        manifest.push_str(&serde_json::to_string(row)?);
        manifest.push('\n');
    }
    fs::write(out_dir.join("manifest.jsonl"), manifest)?;
    fs::write(
        out_dir.join("categories.json"),
        format!("{}\n", serde_json::to_string_pretty(&config.categories)?),
    )?;
    fs::write(
        out_dir.join("membership_config.json"),
        format!("{}\n", serde_json::to_string_pretty(&config.membership)?),
    )?;
    fs::write(
        out_dir.join("generate_config.json"),
        format!("{}\n", serde_json::to_string_pretty(config)?),
    )?;

    let rows: Vec<ManifestRow> = built.into_iter().map(|(_, r)| r).collect();
    Ok(summarize(&rows))
}

/// A generated dataset read back from disk.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub config: GenerateConfig,
    pub categories: Vec<String>,
    pub rows: Vec<ManifestRow>,
}

impl Dataset {
    pub fn load(dir: &Path) -> Result<Self, SimError> {
        let config: GenerateConfig =
            serde_json::from_str(&fs::read_to_string(dir.join("generate_config.json"))?)?;
        let categories: Vec<String> =
            serde_json::from_str(&fs::read_to_string(dir.join("categories.json"))?)?;
        let mut rows = Vec::with_capacity(config.count);
        for line in fs::read_to_string(dir.join("manifest.jsonl"))?.lines() {
            if line.trim().is_empty() {
                continue;
            }
            rows.push(serde_json::from_str::<ManifestRow>(line)?);
        }
        if rows.len() != config.count {
            return Err(SimError::Config(format!(
                "manifest has {} rows, config says {}",
                rows.len(),
                config.count
            )));
        }
        Ok(Dataset {
            root: dir.to_path_buf(),
            config,
            categories,
            rows,
        })
    }

    pub fn load_image(&self, row: &ManifestRow) -> Result<Image, SimError> {
        decode_png(&fs::read(self.root.join(&row.file))?)
    }

    pub fn summary(&self) -> DatasetSummary {
        summarize(&self.rows)
    }

    /// Rows matching the given split and/or stratum filters.
    pub fn select(&self, split: Option<Split>, stratum: Option<Stratum>) -> Vec<&ManifestRow> {
        self.rows
            .iter()
            .filter(|r| split.map_or(true, |s| r.split == s))
            .filter(|r| stratum.map_or(true, |s| r.stratum == s))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use sha2::{Digest, Sha256};

    fn tiny_config(count: usize, seed: u64) -> GenerateConfig {
        GenerateConfig {
            count,
            image_size: 16,
            seed,
            burn_in_steps: 8,
            ..GenerateConfig::default()
        }
    }

    #[test]
    fn apportionment_matches_hand_worked_hamilton() {
        // Quotas 3 / 2.5 / 2 / 1.5 / 1: floors assign 9, the leftover goes
        // to the largest remainder, ties broken toward the earlier stratum.
        let counts = apportion(10, &[0.3, 0.25, 0.2, 0.15, 0.1]);
        assert_eq!(counts, [3, 3, 2, 1, 1]);
        assert_eq!(apportion(40, &[0.3, 0.25, 0.2, 0.15, 0.1]), [12, 10, 8, 6, 4]);
    }

    #[test]
    fn apportionment_stays_within_one_of_quota() {
        let props = [0.30, 0.25, 0.20, 0.15, 0.10];
        for count in 1..160 {
            let counts = apportion(count, &props);
            assert_eq!(counts.iter().sum::<usize>(), count);
            for i in 0..5 {
                let quota = count as f64 * props[i];
                assert!(
                    (counts[i] as f64 - quota).abs() < 1.0 + 1e-9,
                    "count {count} stratum {i}: {} vs quota {quota}",
                    counts[i]
                );
            }
        }
    }

    #[test]
    fn plans_cover_requested_split_and_strata() {
        let config = tiny_config(40, 11);
        let plans = plan_samples(&config);
        assert_eq!(plans.len(), 40);
        let train = plans.iter().filter(|p| p.split == Split::Train).count();
        assert_eq!(train, 32);
        let mut strata = [0usize; 5];
        for p in &plans {
            strata[p.stratum.index()] += 1;
        }
        assert_eq!(strata, apportion(40, &config.stratum_proportions));
        // Per-sample seeds are all distinct.
        let mut seeds: Vec<u64> = plans.iter().map(|p| p.scenario_seed).collect();
        seeds.sort_unstable();
        seeds.dedup();
        assert_eq!(seeds.len(), 40);
    }

    #[test]
    fn labels_are_blend_weights_verbatim_and_match_stratum() {
        let config = tiny_config(20, 3);
        for plan in plan_samples(&config) {
            let (sample, k) = generate_sample(&plan, &config).unwrap();
            // The identity is bitwise, not approximate.
            assert!(sample
                .label_prob
                .iter()
                .zip(&sample.blend_weights)
                .all(|(a, b)| a.to_bits() == b.to_bits()));
            let nonzero = sample.blend_weights.iter().filter(|&&w| w > 0.0).count();
            assert_eq!(nonzero, k);
            assert_eq!(Stratum::of_k(k), plan.stratum);
            let sum: f64 = sample.blend_weights.iter().sum();
            assert!((sum - 1.0).abs() <= 1e-9);
            if k == 1 {
                assert!(sample.blend_weights.iter().any(|&w| w == 1.0));
            }
        }
    }

    #[test]
    fn single_category_stratum_yields_exact_unit_labels() {
        let config = GenerateConfig {
            stratum_proportions: [1.0, 0.0, 0.0, 0.0, 0.0],
            ..tiny_config(8, 21)
        };
        for plan in plan_samples(&config) {
            let (sample, k) = generate_sample(&plan, &config).unwrap();
            assert_eq!(k, 1);
            let ones = sample.blend_weights.iter().filter(|&&w| w == 1.0).count();
            assert_eq!(ones, 1);
            assert_eq!(sample.label_binary.iter().sum::<u8>(), 1);
        }
    }

    fn tree_digest(dir: &Path) -> Vec<(String, [u8; 32])> {
        let mut files = Vec::new();
        let mut stack = vec![dir.to_path_buf()];
        while let Some(d) = stack.pop() {
            for entry in fs::read_dir(&d).unwrap() {
                let path = entry.unwrap().path();
                if path.is_dir() {
                    stack.push(path);
                } else {
                    let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                    let digest: [u8; 32] = Sha256::digest(fs::read(&path).unwrap()).into();
                    files.push((rel, digest));
                }
            }
        }
        files.sort();
        files
    }

    #[test]
    fn regeneration_is_byte_identical() {
        let config = tiny_config(12, 5);
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let sum_a = generate_dataset(&config, dir_a.path()).unwrap();
        let sum_b = generate_dataset(&config, dir_b.path()).unwrap();
        assert_eq!(sum_a, sum_b);
        let files_a = tree_digest(dir_a.path());
        assert!(!files_a.is_empty());
        assert_eq!(files_a, tree_digest(dir_b.path()));
    }

    #[test]
    fn load_round_trips_manifest_and_images() {
        let config = tiny_config(10, 9);
        let dir = tempfile::tempdir().unwrap();
        let summary = generate_dataset(&config, dir.path()).unwrap();
        let dataset = Dataset::load(dir.path()).unwrap();
        assert_eq!(dataset.rows.len(), 10);
        assert_eq!(dataset.config, config);
        assert_eq!(dataset.categories, config.categories);
        assert_eq!(dataset.summary(), summary);
        assert_eq!(summary.train + summary.test, 10);

        let img = dataset.load_image(&dataset.rows[0]).unwrap();
        assert_eq!((img.width, img.height), (16, 16));
        assert!(img.data.iter().all(|&v| (0.0..=1.0).contains(&v)));

        let expected_var = label_error_propagation(config.label_sigma).unwrap();
        for row in &dataset.rows {
            assert_eq!(row.label_variance.to_bits(), expected_var.to_bits());
            assert_eq!(row.label_prob, row.blend_weights);
        }

        let train_rows = dataset.select(Some(Split::Train), None);
        assert_eq!(train_rows.len(), summary.train);
        let singles = dataset.select(None, Some(Stratum::Single));
        assert!(singles.iter().all(|r| r.k == 1));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut config = tiny_config(10, 1);
        config.stratum_proportions = [0.5, 0.5, 0.5, 0.0, 0.0];
        assert!(config.validate().is_err());

        let mut config = tiny_config(10, 1);
        config.categories.push("rain".into());
        assert!(config.validate().is_err());

        let mut config = tiny_config(10, 1);
        config.categories.push("hurricane".into());
        assert!(config.validate().is_err());

        let mut config = tiny_config(10, 1);
        config.max_copresent = 3;
        assert!(config.validate().is_err(), ">4 stratum with max_copresent 3");

        let mut config = tiny_config(10, 1);
        config.train_fraction = 1.0;
        assert!(config.validate().is_err());
    }
}
