//! COCO and VOC annotation loaders, plus a generated blob dataset.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::detectors::SYNTHETIC_CLASSES;
use crate::explainers::stream_rng;
use crate::imageproc::encode_png;
use crate::types::{BBox, GroundTruthInstance, ImageBuffer};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageEntry {
    pub image_id: String,
    pub path: PathBuf,
    pub width: usize,
    pub height: usize,
}

/// Images sorted by id; every annotation refers to a listed image and lies
/// inside it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub name: String,
    pub images: Vec<ImageEntry>,
    pub annotations: BTreeMap<String, Vec<GroundTruthInstance>>,
    pub categories: BTreeMap<u32, String>,
}

impl DatasetIndex {
    pub fn image(&self, image_id: &str) -> Option<&ImageEntry> {
        self.images
            .binary_search_by(|e| e.image_id.as_str().cmp(image_id))
            .ok()
            .map(|i| &self.images[i])
    }

    pub fn category_name(&self, label: u32) -> Option<&str> {
        self.categories.get(&label).map(String::as_str)
    }

    pub fn instance_count(&self) -> usize {
        self.annotations.values().map(Vec::len).sum()
    }

    /// All `(image, instance)` pairs ordered by image id then instance id.
    pub fn instances(&self) -> Vec<(&ImageEntry, &GroundTruthInstance)> {
        let mut out: Vec<_> = self
            .annotations
            .iter()
            .flat_map(|(id, gts)| {
                let entry = self.image(id).expect("validated index");
                gts.iter().map(move |gt| (entry, gt))
            })
            .collect();
        out.sort_by(|a, b| (&a.0.image_id, &a.1.instance_id).cmp(&(&b.0.image_id, &b.1.instance_id)));
        out
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.images.windows(2).any(|w| w[0].image_id >= w[1].image_id) {
            return Err(HarnessError::Parse("image ids must be unique and sorted".into()));
        }
        for (id, gts) in &self.annotations {
            let entry = self
                .image(id)
                .ok_or_else(|| HarnessError::Parse(format!("annotations for unknown image {id:?}")))?;
            for gt in gts {
                if !gt.bbox.within(entry.width as f64, entry.height as f64) {
                    return Err(HarnessError::Parse(format!(
                        "instance {} box {:?} exceeds the {}x{} image",
                        gt.instance_id,
                        gt.bbox.to_array(),
                        entry.width,
                        entry.height
                    )));
                }
                if !self.categories.contains_key(&gt.label) {
                    return Err(HarnessError::Parse(format!("instance {} has unknown category {}", gt.instance_id, gt.label)));
                }
            }
        }
        Ok(())
    }
}

/// Clips a box to the image; `None` when nothing of it is left.
fn clip(x1: f64, y1: f64, x2: f64, y2: f64, w: usize, h: usize) -> Option<BBox> {
    let (w, h) = (w as f64, h as f64);
    BBox::new(x1.clamp(0.0, w), y1.clamp(0.0, h), x2.clamp(0.0, w), y2.clamp(0.0, h)).ok()
}

#[derive(Deserialize)]
struct CocoFile {
    images: Vec<CocoImage>,
    annotations: Vec<CocoAnnotation>,
    categories: Vec<CocoCategory>,
}

#[derive(Deserialize)]
struct CocoImage {
    id: u64,
    file_name: String,
    width: usize,
    height: usize,
}

#[derive(Deserialize)]
struct CocoAnnotation {
    id: u64,
    image_id: u64,
    category_id: u32,
    bbox: [f64; 4],
    #[serde(default)]
    iscrowd: u8,
}

#[derive(Deserialize)]
struct CocoCategory {
    id: u32,
    name: String,
}

/// Reads COCO instance annotations. Boxes `[x, y, w, h]` become corners and
/// are clipped to the image. Crowd regions are skipped, and boxes with no
/// area after clipping are dropped with a warning.
pub fn load_coco(annotation_file: impl AsRef<Path>, image_dir: impl AsRef<Path>) -> Result<DatasetIndex, HarnessError> {
    let annotation_file = annotation_file.as_ref();
    let image_dir = image_dir.as_ref();
    let text = std::fs::read_to_string(annotation_file)?;
    let coco: CocoFile =
        serde_json::from_str(&text).map_err(|e| HarnessError::Parse(format!("{}: {e}", annotation_file.display())))?;

    let categories: BTreeMap<u32, String> = coco.categories.into_iter().map(|c| (c.id, c.name)).collect();
    let mut by_id = BTreeMap::new();
    let mut images = Vec::with_capacity(coco.images.len());
    for img in coco.images {
        let path = image_dir.join(&img.file_name);
        if !path.is_file() {
            return Err(HarnessError::MissingImage(path));
        }
        if img.width == 0 || img.height == 0 {
            return Err(HarnessError::Parse(format!("image {} has zero size", img.id)));
        }
        let entry = ImageEntry {
            image_id: img.id.to_string(),
            path,
            width: img.width,
            height: img.height,
        };
        if by_id.insert(img.id, (entry.width, entry.height)).is_some() {
            return Err(HarnessError::Parse(format!("duplicate image id {}", img.id)));
        }
        images.push(entry);
    }
    images.sort_by(|a, b| a.image_id.cmp(&b.image_id));

    let mut annotations: BTreeMap<String, Vec<GroundTruthInstance>> = BTreeMap::new();
    for ann in coco.annotations {
        let &(w, h) = by_id
            .get(&ann.image_id)
            .ok_or_else(|| HarnessError::Parse(format!("annotation {} references unknown image {}", ann.id, ann.image_id)))?;
        if !categories.contains_key(&ann.category_id) {
            return Err(HarnessError::Parse(format!(
                "annotation {} references unknown category {}",
                ann.id, ann.category_id
            )));
        }
        if ann.iscrowd != 0 {
            continue;
        }
        let [x, y, bw, bh] = ann.bbox;
        if ![x, y, bw, bh].iter().all(|v| v.is_finite()) {
            return Err(HarnessError::Parse(format!("annotation {} has a non-finite box", ann.id)));
        }
        let Some(bbox) = clip(x, y, x + bw, y + bh, w, h) else {
            log::warn!("dropping annotation {}: empty box {:?}", ann.id, ann.bbox);
            continue;
        };
        annotations.entry(ann.image_id.to_string()).or_default().push(GroundTruthInstance {
            bbox,
            label: ann.category_id,
            instance_id: ann.id.to_string(),
            difficult: false,
        });
    }

    let name = annotation_file
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "coco".into());
    let index = DatasetIndex {
        name,
        images,
        annotations,
        categories,
    };
    index.validate()?;
    Ok(index)
}

/// The twenty PASCAL VOC classes; their positions are the category ids.
pub const VOC_CLASSES: [&str; 20] = [
    "aeroplane", "bicycle", "bird", "boat", "bottle", "bus", "car", "cat", "chair", "cow", "diningtable", "dog",
    "horse", "motorbike", "person", "pottedplant", "sheep", "sofa", "train", "tvmonitor",
];

struct VocObject {
    name: String,
    difficult: bool,
    bbox: [f64; 4],
}

struct VocFile {
    filename: String,
    width: usize,
    height: usize,
    objects: Vec<VocObject>,
}

fn parse_voc_xml(text: &str) -> Result<VocFile, String> {
    let doc = roxmltree::Document::parse(text).map_err(|e| e.to_string())?;
    let root = doc.root_element();
    if root.tag_name().name() != "annotation" {
        return Err(format!("root element is <{}>, expected <annotation>", root.tag_name().name()));
    }
    fn child<'a, 'i>(n: roxmltree::Node<'a, 'i>, tag: &str) -> Option<roxmltree::Node<'a, 'i>> {
        n.children().find(|c| c.has_tag_name(tag))
    }
    fn text_of(n: roxmltree::Node<'_, '_>, tag: &str) -> Result<String, String> {
        child(n, tag)
            .and_then(|c| c.text())
            .map(|t| t.trim().to_string())
            .ok_or_else(|| format!("missing <{tag}>"))
    }
    fn num(n: roxmltree::Node<'_, '_>, tag: &str) -> Result<f64, String> {
        let t = text_of(n, tag)?;
        t.parse::<f64>().map_err(|_| format!("<{tag}> is not a number: {t:?}"))
    }
    let size = child(root, "size").ok_or("missing <size>")?;
    let (width, height) = (num(size, "width")?, num(size, "height")?);
    if !(width >= 1.0 && height >= 1.0) {
        return Err(format!("bad image size {width}x{height}"));
    }
    let mut objects = Vec::new();
    for obj in root.children().filter(|c| c.has_tag_name("object")) {
        let bnd = child(obj, "bndbox").ok_or("object without <bndbox>")?;
        let difficult = match child(obj, "difficult").and_then(|d| d.text()).map(str::trim) {
            None | Some("0") | Some("") => false,
            Some("1") => true,
            Some(other) => return Err(format!("<difficult> must be 0 or 1, got {other:?}")),
        };
        objects.push(VocObject {
            name: text_of(obj, "name")?,
            difficult,
            bbox: [num(bnd, "xmin")?, num(bnd, "ymin")?, num(bnd, "xmax")?, num(bnd, "ymax")?],
        });
    }
    Ok(VocFile {
        filename: text_of(root, "filename")?,
        width: width as usize,
        height: height as usize,
        objects,
    })
}

/// Reads one VOC XML file per image from `dataset_dir/Annotations` (or from
/// `dataset_dir` itself when that subdirectory is absent). Images resolve
/// against `JPEGImages/` next to the annotations, falling back to the
/// annotation directory. Box corners pass through unchanged apart from
/// clipping to the image.
///
/// Category ids follow [`VOC_CLASSES`]; other names get ids from 20 upward
/// in sorted order.
pub fn load_voc(dataset_dir: impl AsRef<Path>) -> Result<DatasetIndex, HarnessError> {
    let dataset_dir = dataset_dir.as_ref();
    let ann_dir = match dataset_dir.join("Annotations") {
        d if d.is_dir() => d,
        _ => dataset_dir.to_path_buf(),
    };
    let mut xml_files: Vec<PathBuf> = std::fs::read_dir(&ann_dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    xml_files.retain(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("xml")));
    xml_files.sort();

    let mut parsed = Vec::with_capacity(xml_files.len());
    for path in &xml_files {
        let text = std::fs::read_to_string(path)?;
        let file = parse_voc_xml(&text).map_err(|e| HarnessError::Parse(format!("{}: {e}", path.display())))?;
        let stem = path.file_stem().expect("xml file has a stem").to_string_lossy().into_owned();
        parsed.push((stem, file));
    }

    let extras: BTreeSet<&str> = parsed
        .iter()
        .flat_map(|(_, f)| f.objects.iter().map(|o| o.name.as_str()))
        .filter(|n| !VOC_CLASSES.contains(n))
        .collect();
    let mut categories: BTreeMap<u32, String> =
        VOC_CLASSES.iter().enumerate().map(|(i, n)| (i as u32, n.to_string())).collect();
    for (i, name) in extras.into_iter().enumerate() {
        categories.insert((VOC_CLASSES.len() + i) as u32, name.to_string());
    }
    let id_of: BTreeMap<&str, u32> = categories.iter().map(|(k, v)| (v.as_str(), *k)).collect();

    let image_root = match ann_dir.parent().map(|p| p.join("JPEGImages")) {
        Some(d) if d.is_dir() => d,
        _ => ann_dir.clone(),
    };
    let mut images = Vec::new();
    let mut annotations = BTreeMap::new();
    for (stem, file) in &parsed {
        let path = image_root.join(&file.filename);
        if !path.is_file() {
            return Err(HarnessError::MissingImage(path));
        }
        let mut gts = Vec::new();
        for (k, obj) in file.objects.iter().enumerate() {
            let [x1, y1, x2, y2] = obj.bbox;
            let Some(bbox) = clip(x1, y1, x2, y2, file.width, file.height) else {
                log::warn!("dropping {stem} object {k}: empty box {:?}", obj.bbox);
                continue;
            };
            gts.push(GroundTruthInstance {
                bbox,
                label: id_of[obj.name.as_str()],
                instance_id: format!("{stem}#{k}"),
                difficult: obj.difficult,
            });
        }
        if !gts.is_empty() {
            annotations.insert(stem.clone(), gts);
        }
        images.push(ImageEntry {
            image_id: stem.clone(),
            path,
            width: file.width,
            height: file.height,
        });
    }
    images.sort_by(|a, b| a.image_id.cmp(&b.image_id));

    let name = dataset_dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "voc".into());
    let index = DatasetIndex {
        name,
        images,
        annotations,
        categories,
    };
    index.validate()?;
    Ok(index)
}

/// Side of the generated blob images.
pub const BLOB_IMAGE_SIZE: usize = 64;

/// One pure-color square blob on a dim, noisy background that the synthetic
/// detector never fires on. Returns the image, the blob box and its class
/// index in [`SYNTHETIC_CLASSES`].
///
/// The blob side is drawn from `[16, 28]` pixels and its position uniformly
/// inside the image.
pub fn blob_image(seed: u64, index: u64) -> (ImageBuffer, BBox, usize) {
    let mut rng = stream_rng(seed, index);
    let side = rng.random_range(16..=28usize);
    let x = rng.random_range(0..=BLOB_IMAGE_SIZE - side);
    let y = rng.random_range(0..=BLOB_IMAGE_SIZE - side);
    let class = rng.random_range(0..SYNTHETIC_CLASSES.len());
    let noise: Vec<f32> = (0..BLOB_IMAGE_SIZE * BLOB_IMAGE_SIZE * 3)
        .map(|_| rng.random_range(0.25..0.55f32))
        .collect();
    let image = ImageBuffer::from_fn(BLOB_IMAGE_SIZE, BLOB_IMAGE_SIZE, |r, c| {
        if (y..y + side).contains(&r) && (x..x + side).contains(&c) {
            let mut px = [0.0; 3];
            px[class] = 1.0;
            px
        } else {
            let i = (r * BLOB_IMAGE_SIZE + c) * 3;
            [noise[i], noise[i + 1], noise[i + 2]]
        }
    })
    .expect("fixed size");
    let bbox = BBox::new(x as f64, y as f64, (x + side) as f64, (y + side) as f64).expect("nonempty blob");
    (image, bbox, class)
}

/// Writes `n` blob images as `blob_NNN.png` plus a COCO `annotations.json`
/// into `dir`, then loads it back with [`load_coco`]. Category ids are the
/// synthetic class indices.
pub fn write_blob_dataset(dir: impl AsRef<Path>, n: usize, seed: u64) -> Result<DatasetIndex, HarnessError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut images = Vec::new();
    let mut annotations = Vec::new();
    for i in 0..n {
        let (image, bbox, class) = blob_image(seed, i as u64);
        let file_name = format!("blob_{i:03}.png");
        std::fs::write(dir.join(&file_name), encode_png(&image))?;
        images.push(serde_json::json!({
            "id": i, "file_name": file_name, "width": image.width(), "height": image.height(),
        }));
        annotations.push(serde_json::json!({
            "id": i, "image_id": i, "category_id": class,
            "bbox": [bbox.x1(), bbox.y1(), bbox.width(), bbox.height()],
        }));
    }
    let categories: Vec<_> = SYNTHETIC_CLASSES
        .iter()
        .enumerate()
        .map(|(i, name)| serde_json::json!({"id": i, "name": name}))
        .collect();
    let coco = serde_json::json!({"images": images, "annotations": annotations, "categories": categories});
    let ann = dir.join("annotations.json");
    std::fs::write(&ann, serde_json::to_vec_pretty(&coco).expect("json value serializes"))?;
    let mut index = load_coco(&ann, dir)?;
    index.name = "blobs".into();
    Ok(index)
}
