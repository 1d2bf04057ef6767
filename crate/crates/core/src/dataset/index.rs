use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::Serialize;

use super::coco::{
    AnnotationAttributes, CocoAnnotation, CocoCategory, CocoFile, CocoImage, ImageAttributes,
    SetKind,
};
use super::{read_json, DatasetError};
use crate::maskops::{rasterize_rle, RleMask, Segmentation};
use crate::par;

const MAX_GROUP: u32 = 25;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRecord {
    pub id: u64,
    pub file_name: String,
    pub width: usize,
    pub height: usize,
    pub group: u32,
    pub set: SetKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Category {
    pub id: u64,
    pub name: String,
}

/// One annotation. A fish split by an occluder may appear as several
/// instances (or one multi-piece instance) sharing `fish_id`.
#[derive(Debug, Clone, PartialEq)]
pub struct GtInstance {
    pub annotation_id: u64,
    pub image_id: u64,
    pub category_id: u64,
    pub fish_id: u64,
    pub length_mm: u32,
    pub mask: RleMask,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DatasetSummary {
    pub images: usize,
    pub instances: usize,
    pub categories: usize,
    pub groups: usize,
    pub fish: usize,
}

type ImageAdapter = dyn Fn(&CocoImage) -> Option<ImageAttributes> + Send + Sync;

/// Load-time hooks: category relabeling and an override for reading an image's
/// group and set when a file does not carry the `attributes` record.
#[derive(Default)]
pub struct LoadOptions {
    /// Category name → replacement name. Categories mapped onto the same name
    /// merge under the lowest original id.
    pub category_map: BTreeMap<String, String>,
    pub image_attributes: Option<Box<ImageAdapter>>,
}

impl std::fmt::Debug for LoadOptions {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LoadOptions")
            .field("category_map", &self.category_map)
            .field("image_attributes", &self.image_attributes.is_some())
            .finish()
    }
}

/// Validated, rasterized view of an annotation file. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetIndex {
    images: Vec<ImageRecord>,
    instances: Vec<GtInstance>,
    categories: Vec<Category>,
    groups: BTreeMap<u32, Vec<u64>>,
    image_pos: HashMap<u64, usize>,
}

impl DatasetIndex {
    pub fn empty() -> Self {
        Self::from_parts(Vec::new(), Vec::new(), Vec::new(), BTreeMap::new())
    }

    pub(crate) fn from_parts(
        images: Vec<ImageRecord>,
        instances: Vec<GtInstance>,
        categories: Vec<Category>,
        mut groups: BTreeMap<u32, Vec<u64>>,
    ) -> Self {
        for img in &images {
            groups.entry(img.group).or_default();
        }
        for ids in groups.values_mut() {
            ids.clear();
        }
        for img in &images {
            groups.get_mut(&img.group).expect("inserted").push(img.id);
        }
        let image_pos = images.iter().enumerate().map(|(i, im)| (im.id, i)).collect();
        Self {
            images,
            instances,
            categories,
            groups,
            image_pos,
        }
    }

    pub fn from_coco(file: CocoFile, options: &LoadOptions) -> Result<Self, DatasetError> {
        let (categories, category_ids) = remap_categories(&file.categories, &options.category_map)?;

        let mut images = Vec::with_capacity(file.images.len());
        let mut seen = HashSet::new();
        for (i, img) in file.images.iter().enumerate() {
            let loc = || format!("images[{i}] (id {})", img.id);
            if !seen.insert(img.id) {
                return Err(DatasetError::invalid(loc(), "duplicate image id"));
            }
            if img.width == 0 || img.height == 0 {
                return Err(DatasetError::invalid(
                    loc(),
                    format!("image size must be positive, got {}x{}", img.width, img.height),
                ));
            }
            let attrs = match &options.image_attributes {
                Some(adapter) => adapter(img),
                None => img.attributes,
            }
            .ok_or_else(|| DatasetError::invalid(loc(), "missing group/set attributes"))?;
            if !(1..=MAX_GROUP).contains(&attrs.group) {
                return Err(DatasetError::invalid(
                    loc(),
                    format!("group must be in 1..={MAX_GROUP}, got {}", attrs.group),
                ));
            }
            images.push(ImageRecord {
                id: img.id,
                file_name: img.file_name.clone(),
                width: img.width,
                height: img.height,
                group: attrs.group,
                set: attrs.set,
            });
        }
        let image_pos: HashMap<u64, usize> =
            images.iter().enumerate().map(|(i, im)| (im.id, i)).collect();

        let mut seen = HashSet::new();
        let mut fish: HashMap<u64, (u32, u32, usize)> = HashMap::new();
        let mut checked = Vec::with_capacity(file.annotations.len());
        for (i, ann) in file.annotations.iter().enumerate() {
            let loc = || format!("annotations[{i}] (id {})", ann.id);
            if !seen.insert(ann.id) {
                return Err(DatasetError::invalid(loc(), "duplicate annotation id"));
            }
            let &pos = image_pos.get(&ann.image_id).ok_or_else(|| {
                DatasetError::invalid(loc(), format!("unknown image id {}", ann.image_id))
            })?;
            let &category_id = category_ids.get(&ann.category_id).ok_or_else(|| {
                DatasetError::invalid(loc(), format!("unknown category id {}", ann.category_id))
            })?;
            if ann.iscrowd != 0 {
                return Err(DatasetError::invalid(loc(), "crowd annotations are not supported"));
            }
            let AnnotationAttributes { fish_id, length_mm } = ann
                .attributes
                .ok_or_else(|| DatasetError::invalid(loc(), "missing fish_id/length_mm attributes"))?;
            if length_mm == 0 || length_mm % 5 != 0 {
                return Err(DatasetError::invalid(
                    loc(),
                    format!("length_mm must be a positive multiple of 5, got {length_mm}"),
                ));
            }
            let group = images[pos].group;
            match fish.get(&fish_id) {
                Some(&(g, _, first)) if g != group => {
                    return Err(DatasetError::invalid(
                        loc(),
                        format!(
                            "fish_id {fish_id} is in group {group} but annotations[{first}] puts it in group {g}"
                        ),
                    ));
                }
                Some(&(_, len, first)) if len != length_mm => {
                    return Err(DatasetError::invalid(
                        loc(),
                        format!(
                            "fish_id {fish_id} has length_mm {length_mm} but annotations[{first}] says {len}"
                        ),
                    ));
                }
                Some(_) => {}
                None => {
                    fish.insert(fish_id, (group, length_mm, i));
                }
            }
            checked.push((pos, category_id, fish_id, length_mm));
        }

        let masks = par::map_range(0..file.annotations.len(), |i| {
            let img = &images[checked[i].0];
            rasterize_rle(&file.annotations[i].segmentation, img.width, img.height)
        });
        let mut instances = Vec::with_capacity(masks.len());
        for (i, mask) in masks.into_iter().enumerate() {
            let ann = &file.annotations[i];
            let mask = mask.map_err(|source| DatasetError::Mask {
                location: format!("annotations[{i}] (id {})", ann.id),
                source,
            })?;
            let (pos, category_id, fish_id, length_mm) = checked[i];
            instances.push(GtInstance {
                annotation_id: ann.id,
                image_id: images[pos].id,
                category_id,
                fish_id,
                length_mm,
                mask,
            });
        }
        Ok(Self::from_parts(images, instances, categories, BTreeMap::new()))
    }

    pub fn images(&self) -> &[ImageRecord] {
        &self.images
    }

    pub fn instances(&self) -> &[GtInstance] {
        &self.instances
    }

    pub fn categories(&self) -> &[Category] {
        &self.categories
    }

    /// Group number → image ids, in file order.
    pub fn groups(&self) -> &BTreeMap<u32, Vec<u64>> {
        &self.groups
    }

    pub fn image(&self, id: u64) -> Option<&ImageRecord> {
        self.image_pos.get(&id).map(|&i| &self.images[i])
    }

    pub fn category(&self, id: u64) -> Option<&Category> {
        self.categories.iter().find(|c| c.id == id)
    }

    pub fn instances_in(&self, image_id: u64) -> impl Iterator<Item = &GtInstance> + '_ {
        self.instances.iter().filter(move |g| g.image_id == image_id)
    }

    pub fn summary(&self) -> DatasetSummary {
        let fish: HashSet<u64> = self.instances.iter().map(|g| g.fish_id).collect();
        DatasetSummary {
            images: self.images.len(),
            instances: self.instances.len(),
            categories: self.categories.len(),
            groups: self.groups.len(),
            fish: fish.len(),
        }
    }

    /// Writes the index back out; masks are emitted as uncompressed run-length objects.
    pub fn to_coco(&self) -> CocoFile {
        CocoFile {
            images: self
                .images
                .iter()
                .map(|im| CocoImage {
                    id: im.id,
                    file_name: im.file_name.clone(),
                    width: im.width,
                    height: im.height,
                    attributes: Some(ImageAttributes {
                        group: im.group,
                        set: im.set,
                    }),
                })
                .collect(),
            annotations: self.instances.iter().map(annotation_from_instance).collect(),
            categories: self
                .categories
                .iter()
                .map(|c| CocoCategory {
                    id: c.id,
                    name: c.name.clone(),
                    supercategory: None,
                })
                .collect(),
        }
    }
}

pub(crate) fn annotation_from_instance(g: &GtInstance) -> CocoAnnotation {
    let bbox = g.mask.bounding_box().map(|(x0, y0, x1, y1)| {
        [x0 as f64, y0 as f64, (x1 - x0 + 1) as f64, (y1 - y0 + 1) as f64]
    });
    CocoAnnotation {
        id: g.annotation_id,
        image_id: g.image_id,
        category_id: g.category_id,
        segmentation: Segmentation::from_rle(&g.mask),
        area: Some(g.mask.area() as f64),
        bbox,
        iscrowd: 0,
        attributes: Some(AnnotationAttributes {
            fish_id: g.fish_id,
            length_mm: g.length_mm,
        }),
    }
}

/// Applies the name map; returns the surviving categories and an old-id → new-id table.
fn remap_categories(
    cats: &[CocoCategory],
    map: &BTreeMap<String, String>,
) -> Result<(Vec<Category>, HashMap<u64, u64>), DatasetError> {
    let mut seen = HashSet::new();
    for (i, c) in cats.iter().enumerate() {
        if !seen.insert(c.id) {
            return Err(DatasetError::invalid(
                format!("categories[{i}] (id {})", c.id),
                "duplicate category id",
            ));
        }
    }
    let mut by_name: BTreeMap<String, u64> = BTreeMap::new();
    for c in cats {
        let name = map.get(&c.name).unwrap_or(&c.name);
        let id = by_name.entry(name.clone()).or_insert(c.id);
        *id = (*id).min(c.id);
    }
    let ids = cats
        .iter()
        .map(|c| (c.id, by_name[map.get(&c.name).unwrap_or(&c.name)]))
        .collect();
    let mut out: Vec<Category> = by_name
        .into_iter()
        .map(|(name, id)| Category { id, name })
        .collect();
    out.sort_by_key(|c| c.id);
    Ok((out, ids))
}

pub fn load_dataset(path: &Path) -> Result<DatasetIndex, DatasetError> {
    load_dataset_with(path, &LoadOptions::default())
}

pub fn load_dataset_with(path: &Path, options: &LoadOptions) -> Result<DatasetIndex, DatasetError> {
    let file: CocoFile = read_json(path)?;
    let index = DatasetIndex::from_coco(file, options).map_err(|e| e.in_file(path))?;
    let s = index.summary();
    log::info!(
        "{}: {} images, {} instances, {} categories, {} groups",
        path.display(),
        s.images,
        s.instances,
        s.categories,
        s.groups
    );
    Ok(index)
}
