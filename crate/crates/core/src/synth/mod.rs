//! Synthetic data with known answers: fish-shaped masks rendered through a
//! distorted camera, matching calibration views, and ground-truth lengths.

mod camera;
mod fish;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use camera::{generate_calibration_views, SynthCamera, CALIBRATION_BOARD};
pub use fish::{adaptive_simpson, SynthFishSpec, WidthProfile};

use crate::dataset::{
    AnnotationAttributes, CocoAnnotation, CocoCategory, CocoFile, CocoImage, ImageAttributes, SetKind,
};
use crate::geometry::{CalibrationFile, CameraFile, GeometryError};
use crate::maskops::{principal_axis, MaskError, RleCounts, RleMask, RleSegmentation, Segmentation};
use crate::par;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid synthetic configuration: {0}")]
    InvalidConfig(String),
    #[error("camera setup: {0}")]
    CameraNotWellPosed(String),
    #[error("fish {fish_id} extends beyond the belt")]
    FishOutsideBelt { fish_id: u64 },
    #[error("could not place fish: {0}")]
    Placement(String),
    #[error("could not reach a hidden fraction of {target} within {attempts} attempts")]
    OverlapUnsatisfiable { target: f64, attempts: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error("serialization failed: {0}")]
    Serialize(#[from] serde_json::Error),
}

/// Crossing overlaps added to the `all` images.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OcclusionSpec {
    /// Target fraction of the lower fish's area hidden by the upper one.
    pub hidden_fraction: f64,
    pub tolerance: f64,
    pub pairs_per_image: usize,
}

impl Default for OcclusionSpec {
    fn default() -> Self {
        Self {
            hidden_fraction: 0.3,
            tolerance: 0.1,
            pairs_per_image: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub groups: Vec<u32>,
    /// Fish per group; `set1` shows the first half, `set2` the rest, `all` every fish.
    pub fish_per_group: usize,
    pub images_per_set: usize,
    /// True lengths are drawn uniformly from this range; annotations round them to 5 mm.
    pub length_range_mm: [f64; 2],
    /// Largest quadratic bend, as a fraction of the spine extent.
    pub max_sagitta: f64,
    /// Largest cubic bend, as a fraction of the spine extent.
    pub max_s_bend: f64,
    pub fork_probability: f64,
    /// Minimum clearance between separated fish.
    pub gap_mm: f64,
    pub occlusion: Option<OcclusionSpec>,
    pub camera: SynthCamera,
    /// Per-group camera tilt is drawn uniformly within this many radians of the base tilt.
    pub tilt_jitter_rad: f64,
    pub categories: Vec<String>,
    pub calibration_views: usize,
    pub calibration_noise_px: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            groups: (1..=25).collect(),
            fish_per_group: 6,
            images_per_set: 2,
            length_range_mm: [150.0, 600.0],
            max_sagitta: 0.02,
            max_s_bend: 0.008,
            fork_probability: 0.6,
            gap_mm: 10.0,
            occlusion: Some(OcclusionSpec::default()),
            camera: SynthCamera::default(),
            tilt_jitter_rad: 0.004,
            categories: vec!["cod".into(), "haddock".into(), "whiting".into()],
            calibration_views: 20,
            calibration_noise_px: 0.1,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidConfig(m));
        if self.groups.is_empty() {
            return bad("at least one group is required".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        for &g in &self.groups {
            if !(1..=25).contains(&g) || !seen.insert(g) {
                return bad(format!("groups must be distinct and within 1..=25, got {g}"));
            }
        }
        if self.fish_per_group < 2 || self.images_per_set == 0 {
            return bad("need at least two fish per group and one image per set".into());
        }
        let [lo, hi] = self.length_range_mm;
        if !(lo >= 5.0 && hi >= lo && hi.is_finite()) {
            return bad(format!("length range must satisfy 5 <= min <= max, got {lo}..{hi} mm"));
        }
        if !(0.0..=0.1).contains(&self.max_sagitta) || !(0.0..=0.05).contains(&self.max_s_bend) {
            return bad("bends must be within 0..=0.1 (quadratic) and 0..=0.05 (cubic)".into());
        }
        if !(0.0..=1.0).contains(&self.fork_probability) || !(self.gap_mm >= 0.0) {
            return bad("fork probability must lie in [0, 1] and the gap must be non-negative".into());
        }
        if let Some(o) = &self.occlusion {
            if !(o.hidden_fraction > 0.0 && o.hidden_fraction < 1.0 && o.tolerance > 0.0) {
                return bad(format!("hidden fraction must lie in (0, 1), got {}", o.hidden_fraction));
            }
            if 2 * o.pairs_per_image > self.fish_per_group {
                return bad("not enough fish for the requested overlapping pairs".into());
            }
        }
        if self.categories.is_empty() {
            return bad("at least one category is required".into());
        }
        if !(self.tilt_jitter_rad >= 0.0 && self.calibration_noise_px >= 0.0) {
            return bad("tilt jitter and calibration noise must be non-negative".into());
        }
        self.camera.validate()
    }
}

/// Per-fish ground truth for one image.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruthRow {
    pub image_id: u64,
    pub fish_id: u64,
    pub length_mm_true: f64,
    /// Visible pixels over the pixels the fish would cover unoccluded.
    pub visible_fraction: f64,
}

/// One fish as rendered in a scene.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedFish {
    pub fish_id: u64,
    pub full: RleMask,
    pub visible: RleMask,
}

impl RenderedFish {
    pub fn visible_fraction(&self) -> f64 {
        if self.full.area() == 0 {
            0.0
        } else {
            self.visible.area() as f64 / self.full.area() as f64
        }
    }
}

/// Renders fish in paint order: later fish cover earlier ones.
pub fn generate_scene(camera: &SynthCamera, fish: &[SynthFishSpec]) -> Result<Vec<RenderedFish>, SynthError> {
    for f in fish {
        if !inside_belt(camera, f) {
            return Err(SynthError::FishOutsideBelt { fish_id: f.fish_id });
        }
    }
    let model = camera.model()?;
    let [w, h] = camera.image_size;
    let full: Vec<RleMask> = par::map(fish, |f| f.render(&model, w, h)).into_iter().collect::<Result<_, _>>()?;
    occlude(fish, full)
}

fn occlude(fish: &[SynthFishSpec], full: Vec<RleMask>) -> Result<Vec<RenderedFish>, SynthError> {
    let mut out = Vec::with_capacity(full.len());
    for i in 0..full.len() {
        let mut visible = full[i].clone();
        for above in &full[i + 1..] {
            if above.intersection_area(&visible)? > 0 {
                visible = visible.difference(above)?;
            }
        }
        out.push(RenderedFish {
            fish_id: fish[i].fish_id,
            full: full[i].clone(),
            visible,
        });
    }
    Ok(out)
}

const BELT_MARGIN_MM: f64 = 5.0;

fn inside_belt(camera: &SynthCamera, f: &SynthFishSpec) -> bool {
    f.envelope_belt_points(64)
        .iter()
        .all(|&p| camera.belt_contains(p, BELT_MARGIN_MM))
}

fn clear_of(a: &SynthFishSpec, b: &SynthFishSpec, gap: f64) -> bool {
    let need = a.profile.peak_mm + b.profile.peak_mm + gap;
    let pa = a.spine_belt_points(64);
    let pb = b.spine_belt_points(64);
    pa.iter()
        .all(|p| pb.iter().all(|q| (p[0] - q[0]).hypot(p[1] - q[1]) >= need))
}

/// A group's fish before placement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FishTemplate {
    pub fish_id: u64,
    pub length_mm: f64,
    pub category_id: u64,
    pub forked: bool,
}

const PLACE_ATTEMPTS: usize = 400;
const OVERLAP_ATTEMPTS: usize = 400;
const SCENE_ATTEMPTS: usize = 30;
const HIDDEN_GRID_MM: f64 = 2.0;

fn shaped(cfg: &SynthConfig, t: &FishTemplate, rng: &mut ChaCha8Rng) -> Result<SynthFishSpec, SynthError> {
    let sag = cfg.max_sagitta * rng.random_range(-1.0..=1.0);
    let s = cfg.max_s_bend * rng.random_range(-1.0..=1.0);
    let len = t.length_mm;
    SynthFishSpec::new(t.fish_id, len, sag, s, WidthProfile::for_length(len, t.forked), [0.0, 0.0], 0.0)
}

fn random_pose(camera: &SynthCamera, rng: &mut ChaCha8Rng) -> ([f64; 2], f64) {
    let [bw, bh] = camera.belt_size_mm;
    (
        [rng.random_range(-0.5 * bw..0.5 * bw), rng.random_range(-0.5 * bh..0.5 * bh)],
        rng.random_range(0.0..std::f64::consts::TAU),
    )
}

fn place_clear(
    cfg: &SynthConfig,
    camera: &SynthCamera,
    shape: &SynthFishSpec,
    placed: &[SynthFishSpec],
    rng: &mut ChaCha8Rng,
) -> Option<SynthFishSpec> {
    (0..PLACE_ATTEMPTS).find_map(|_| {
        let (c, a) = random_pose(camera, rng);
        let f = shape.placed(c, a);
        (inside_belt(camera, &f) && placed.iter().all(|o| clear_of(&f, o, cfg.gap_mm))).then_some(f)
    })
}

/// Places `upper` across the middle of `lower` so that it hides about the
/// target fraction of it.
fn place_across(
    camera: &SynthCamera,
    spec: &OcclusionSpec,
    upper: &SynthFishSpec,
    lower: &SynthFishSpec,
    others: &[SynthFishSpec],
    gap: f64,
    rng: &mut ChaCha8Rng,
) -> Option<SynthFishSpec> {
    let lower_points = lower.sampled_points(HIDDEN_GRID_MM);
    if lower_points.is_empty() {
        return None;
    }
    let spine = lower.spine_belt_points(100);
    for _ in 0..OVERLAP_ATTEMPTS {
        let at = spine[rng.random_range(30..=65)];
        let cross = rng.random_range(50f64.to_radians()..130f64.to_radians());
        let angle = lower.angle + cross;
        let shift = upper.extent_mm * rng.random_range(-0.25..0.25);
        let f = upper.placed([at[0] - shift * angle.cos(), at[1] - shift * angle.sin()], angle);
        if !inside_belt(camera, &f) || !others.iter().all(|o| clear_of(&f, o, gap)) {
            continue;
        }
        let hidden = lower_points.iter().filter(|&&p| f.contains(p)).count() as f64 / lower_points.len() as f64;
        if (hidden - spec.hidden_fraction).abs() <= spec.tolerance {
            return Some(f);
        }
    }
    None
}

/// Places a scene's fish in paint order. With `occlusion`, the first
/// `2 * pairs_per_image` shapes form (lower, upper) crossing pairs.
fn place_scene(
    cfg: &SynthConfig,
    camera: &SynthCamera,
    shapes: &[SynthFishSpec],
    occlusion: Option<&OcclusionSpec>,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<SynthFishSpec>, SynthError> {
    let pairs = occlusion.map_or(0, |o| o.pairs_per_image);
    'scene: for _ in 0..SCENE_ATTEMPTS {
        let mut placed: Vec<SynthFishSpec> = Vec::with_capacity(shapes.len());
        for p in 0..pairs {
            let spec = occlusion.expect("pairs imply occlusion");
            let Some(lower) = place_clear(cfg, camera, &shapes[2 * p], &placed, rng) else {
                continue 'scene;
            };
            let Some(upper) = place_across(camera, spec, &shapes[2 * p + 1], &lower, &placed, cfg.gap_mm, rng)
            else {
                continue 'scene;
            };
            placed.push(lower);
            placed.push(upper);
        }
        for s in &shapes[2 * pairs..] {
            let Some(f) = place_clear(cfg, camera, s, &placed, rng) else {
                continue 'scene;
            };
            placed.push(f);
        }
        return Ok(placed);
    }
    match occlusion {
        Some(o) if pairs > 0 => Err(SynthError::OverlapUnsatisfiable {
            target: o.hidden_fraction,
            attempts: SCENE_ATTEMPTS * OVERLAP_ATTEMPTS,
        }),
        _ => Err(SynthError::Placement(format!(
            "{} fish do not fit on a {:?} mm belt",
            shapes.len(),
            camera.belt_size_mm
        ))),
    }
}

/// Moves the `pairs` most similar-length pairs to the front as (longer, shorter).
fn pair_similar_lengths(order: &mut Vec<&FishTemplate>, pairs: usize) {
    let mut front = Vec::with_capacity(order.len());
    for _ in 0..pairs {
        let mut best = (0, 1, f64::NEG_INFINITY);
        for i in 0..order.len() {
            for j in i + 1..order.len() {
                let (a, b) = (order[i].length_mm, order[j].length_mm);
                let r = a.min(b) / a.max(b);
                if r > best.2 {
                    best = (i, j, r);
                }
            }
        }
        let (i, j, _) = best;
        let (b, a) = (order.remove(j), order.remove(i));
        if a.length_mm >= b.length_mm {
            front.extend([a, b]);
        } else {
            front.extend([b, a]);
        }
    }
    front.append(order);
    *order = front;
}

/// One generated image.
#[derive(Debug, Clone)]
pub struct SynthScene {
    pub image_id: u64,
    pub group: u32,
    pub set: SetKind,
    /// In paint order.
    pub fish: Vec<SynthFishSpec>,
    pub rendered: Vec<RenderedFish>,
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub annotations: CocoFile,
    pub calibrations: BTreeMap<u32, CalibrationFile>,
    /// The cameras the images were rendered with.
    pub cameras: BTreeMap<u32, SynthCamera>,
    pub templates: BTreeMap<u32, Vec<FishTemplate>>,
    pub truth: Vec<TruthRow>,
    pub scenes: Vec<SynthScene>,
}

impl SynthDataset {
    pub fn truth_csv(&self) -> String {
        let mut s = String::from("image_id,fish_id,length_mm_true,visible_fraction\n");
        for r in &self.truth {
            let _ = writeln!(
                s,
                "{},{},{:.6},{:.6}",
                r.image_id, r.fish_id, r.length_mm_true, r.visible_fraction
            );
        }
        s
    }

    /// Output files as (relative path, contents).
    pub fn files(&self) -> Result<Vec<(PathBuf, String)>, SynthError> {
        let mut out = vec![
            (PathBuf::from("annotations.json"), serde_json::to_string(&self.annotations)?),
            (PathBuf::from("truth.csv"), self.truth_csv()),
        ];
        for (g, c) in &self.calibrations {
            out.push((
                PathBuf::from(format!("calibration/group_{g:02}.json")),
                serde_json::to_string_pretty(c)?,
            ));
        }
        for (g, cam) in &self.cameras {
            out.push((
                PathBuf::from(format!("cameras_true/group_{g:02}.json")),
                serde_json::to_string_pretty(&CameraFile::from_model(&cam.model()?))?,
            ));
        }
        Ok(out)
    }
}

/// Annotation lengths come in 5 mm steps.
pub fn round_to_5mm(length_mm: f64) -> u32 {
    ((length_mm / 5.0).round() as u32).max(1) * 5
}

fn set_name(set: SetKind) -> &'static str {
    match set {
        SetKind::Set1 => "set1",
        SetKind::Set2 => "set2",
        SetKind::All => "all",
    }
}

/// Builds the whole dataset. Output depends only on the configuration.
pub fn generate_dataset(cfg: &SynthConfig) -> Result<SynthDataset, SynthError> {
    cfg.validate()?;
    let mut cameras = BTreeMap::new();
    let mut calibrations = BTreeMap::new();
    let mut templates = BTreeMap::new();
    let mut scenes = Vec::new();
    let mut image_id = 0u64;
    let [lo, hi] = cfg.length_range_mm;
    let mut groups = cfg.groups.clone();
    groups.sort_unstable();
    for &g in &groups {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(g as u64);
        let mut camera = cfg.camera;
        let j = cfg.tilt_jitter_rad;
        if j > 0.0 {
            camera.tilt[0] += rng.random_range(-j..=j);
            camera.tilt[1] += rng.random_range(-j..=j);
        }
        camera.validate()?;
        let mut calib =
            generate_calibration_views(&camera, cfg.calibration_views, rng.random(), cfg.calibration_noise_px)?;
        calib.group = Some(g);
        let group_fish: Vec<FishTemplate> = (0..cfg.fish_per_group)
            .map(|i| FishTemplate {
                fish_id: g as u64 * 1000 + i as u64 + 1,
                length_mm: if hi > lo { rng.random_range(lo..hi) } else { lo },
                category_id: rng.random_range(1..=cfg.categories.len() as u64),
                forked: rng.random_bool(cfg.fork_probability),
            })
            .collect();
        let half = cfg.fish_per_group / 2;
        for set in [SetKind::Set1, SetKind::Set2, SetKind::All] {
            let members: &[FishTemplate] = match set {
                SetKind::Set1 => &group_fish[..half],
                SetKind::Set2 => &group_fish[half..],
                SetKind::All => &group_fish,
            };
            let occlusion = match set {
                SetKind::All => cfg.occlusion.as_ref(),
                _ => None,
            };
            for _ in 0..cfg.images_per_set {
                image_id += 1;
                let mut order: Vec<&FishTemplate> = members.iter().collect();
                order.shuffle(&mut rng);
                if let Some(o) = occlusion {
                    pair_similar_lengths(&mut order, o.pairs_per_image);
                }
                let shapes: Vec<SynthFishSpec> =
                    order.iter().map(|t| shaped(cfg, t, &mut rng)).collect::<Result<_, _>>()?;
                let fish = place_scene(cfg, &camera, &shapes, occlusion, &mut rng)?;
                scenes.push(SynthScene {
                    image_id,
                    group: g,
                    set,
                    fish,
                    rendered: Vec::new(),
                });
            }
        }
        cameras.insert(g, camera);
        calibrations.insert(g, calib);
        templates.insert(g, group_fish);
    }

    // render every fish of every scene in one parallel pass
    let models: BTreeMap<u32, _> = cameras
        .iter()
        .map(|(&g, c)| c.model().map(|m| (g, m)))
        .collect::<Result<_, _>>()?;
    let jobs: Vec<(usize, usize)> = scenes
        .iter()
        .enumerate()
        .flat_map(|(s, sc)| (0..sc.fish.len()).map(move |f| (s, f)))
        .collect();
    let [w, h] = cfg.camera.image_size;
    let masks = par::map(&jobs, |&(s, f)| scenes[s].fish[f].render(&models[&scenes[s].group], w, h));
    let mut masks = masks.into_iter();
    for sc in &mut scenes {
        let full: Vec<RleMask> = (0..sc.fish.len())
            .map(|_| masks.next().expect("one mask per job"))
            .collect::<Result<_, _>>()?;
        sc.rendered = occlude(&sc.fish, full)?;
    }

    let mut coco = CocoFile {
        categories: cfg
            .categories
            .iter()
            .enumerate()
            .map(|(i, n)| CocoCategory {
                id: i as u64 + 1,
                name: n.clone(),
                supercategory: Some("fish".into()),
            })
            .collect(),
        ..CocoFile::default()
    };
    let mut truth = Vec::new();
    let mut ann_id = 0u64;
    for sc in &scenes {
        coco.images.push(CocoImage {
            id: sc.image_id,
            file_name: format!("group_{:02}/{}/{:05}.png", sc.group, set_name(sc.set), sc.image_id),
            width: w,
            height: h,
            attributes: Some(ImageAttributes {
                group: sc.group,
                set: sc.set,
            }),
        });
        let by_id: BTreeMap<u64, &FishTemplate> = templates[&sc.group].iter().map(|t| (t.fish_id, t)).collect();
        for r in &sc.rendered {
            let t = by_id[&r.fish_id];
            truth.push(TruthRow {
                image_id: sc.image_id,
                fish_id: r.fish_id,
                length_mm_true: t.length_mm,
                visible_fraction: r.visible_fraction(),
            });
            let Some((x0, y0, x1, y1)) = r.visible.bounding_box() else {
                log::warn!("fish {} is fully hidden in image {}", r.fish_id, sc.image_id);
                continue;
            };
            ann_id += 1;
            coco.annotations.push(CocoAnnotation {
                id: ann_id,
                image_id: sc.image_id,
                category_id: t.category_id,
                segmentation: Segmentation::Rle(RleSegmentation {
                    size: [h, w],
                    counts: RleCounts::Compressed(r.visible.to_compressed_string()),
                }),
                area: Some(r.visible.area() as f64),
                bbox: Some([x0 as f64, y0 as f64, (x1 - x0 + 1) as f64, (y1 - y0 + 1) as f64]),
                iscrowd: 0,
                attributes: Some(AnnotationAttributes {
                    fish_id: r.fish_id,
                    length_mm: round_to_5mm(t.length_mm),
                }),
            });
        }
    }
    Ok(SynthDataset {
        annotations: coco,
        calibrations,
        cameras,
        templates,
        truth,
        scenes,
    })
}

/// Removes the last `fraction` of a mask along its principal axis, at the end
/// the axis points to when `at_positive_end`, otherwise at the other end.
pub fn truncate_mask_end(mask: &RleMask, fraction: f64, at_positive_end: bool) -> Result<RleMask, SynthError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(SynthError::InvalidConfig(format!("truncation fraction must lie in (0, 1), got {fraction}")));
    }
    let (crop, (ox, oy)) = mask.to_cropped_mask(0).ok_or(MaskError::EmptyMask)?;
    let axis = principal_axis(&crop)?;
    let (s, c) = axis.angle.sin_cos();
    let proj = |x: usize, y: usize| {
        let p = (x as f64 - axis.centroid.0) * c + (y as f64 - axis.centroid.1) * s;
        if at_positive_end {
            p
        } else {
            -p
        }
    };
    let (lo, hi) = crop
        .foreground()
        .map(|(x, y)| proj(x, y))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p), b.max(p)));
    let cut = hi - fraction * (hi - lo);
    let mut kept = crop.clone();
    for (x, y) in crop.foreground() {
        if proj(x, y) > cut {
            kept.set(x, y, false);
        }
    }
    Ok(RleMask::from_cropped_mask(mask.width(), mask.height(), &kept, (ox, oy))?)
}
