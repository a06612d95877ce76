//! COCO-style instance-segmentation dataset model and I/O.
//!
//! The on-disk schema is a documented subset of COCO: top-level `images`,
//! `annotations`, `categories` arrays plus a free-form `provenance` object.
//! Segmentation is always a list of flat polygons; RLE and crowd annotations
//! are rejected at parse time. Serialization is canonical: UTF-8, arrays
//! sorted by id, fixed key order, 6-decimal fixed-point for all fractional
//! fields, so equal datasets produce byte-identical documents.
//!
//! `Annotation.area` is defined as the rasterized mask pixel count (see
//! [`crate::geometry::rasterize`]), not the shoelace area, so the data model
//! and the evaluation metrics agree on a single discretization.

use std::collections::{HashMap, HashSet};

use serde_json::Value;

use crate::canon::{canonical_value, fmt_fixed6, json_string, round6, sha256_hex};
use crate::error::{Error, Result};
use crate::geometry::{polygons_bbox, rasterize, GeometricTransform};

/// Annotation provenance: hand-labeled ground truth or model pseudo-label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Labeled,
    Pseudo,
}

impl Source {
    pub fn as_str(&self) -> &'static str {
        match self {
            Source::Labeled => "labeled",
            Source::Pseudo => "pseudo",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Category {
    pub id: u64,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRecord {
    pub id: u64,
    pub file_name: String,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Annotation {
    pub id: u64,
    pub image_id: u64,
    pub category_id: u64,
    /// List of flat [x1,y1,...,xn,yn] polygons; the mask is their union.
    pub segmentation: Vec<Vec<f64>>,
    /// Tight axis-aligned bounds [x, y, w, h] of the polygon union.
    pub bbox: [f64; 4],
    /// Rasterized mask pixel count.
    pub area: f64,
    /// Confidence, present only on pseudo-labels.
    pub score: Option<f64>,
    pub source: Source,
}

impl Annotation {
    /// Canonical constructor: rounds coordinates to wire precision, checks
    /// them against the image bounds, and derives bbox and area.
    #[allow(clippy::too_many_arguments)]
    pub fn from_polygons(
        id: u64,
        image_id: u64,
        category_id: u64,
        segmentation: Vec<Vec<f64>>,
        score: Option<f64>,
        source: Source,
        image: &ImageRecord,
    ) -> Result<Annotation> {
        let segmentation: Vec<Vec<f64>> = segmentation
            .into_iter()
            .map(|poly| poly.into_iter().map(round6).collect())
            .collect();
        validate_polygons(id, &segmentation, image)?;
        if let Some(s) = score {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::validation(format!(
                    "annotation {id}: score {s} outside [0, 1]"
                )));
            }
        }
        let bbox = polygons_bbox(&segmentation)
            .map_err(|e| Error::validation(format!("annotation {id}: {e}")))?;
        let area = rasterize(&segmentation, image.width, image.height)?.popcount() as f64;
        Ok(Annotation {
            id,
            image_id,
            category_id,
            segmentation,
            bbox,
            area,
            score,
            source,
        })
    }
}

fn validate_polygons(ann_id: u64, segmentation: &[Vec<f64>], image: &ImageRecord) -> Result<()> {
    if segmentation.is_empty() {
        return Err(Error::validation(format!(
            "annotation {ann_id}: empty segmentation"
        )));
    }
    for poly in segmentation {
        if !poly.len().is_multiple_of(2) {
            return Err(Error::validation(format!(
                "annotation {ann_id}: polygon has odd coordinate count {}",
                poly.len()
            )));
        }
        if poly.len() < 6 {
            return Err(Error::validation(format!(
                "annotation {ann_id}: polygon has {} coordinates, need at least 6",
                poly.len()
            )));
        }
        for pair in poly.chunks_exact(2) {
            let (x, y) = (pair[0], pair[1]);
            if !x.is_finite() || !y.is_finite() {
                return Err(Error::validation(format!(
                    "annotation {ann_id}: non-finite coordinate"
                )));
            }
            if x < 0.0 || x > image.width as f64 || y < 0.0 || y > image.height as f64 {
                return Err(Error::validation(format!(
                    "annotation {ann_id}: coordinate ({x}, {y}) outside image bounds {}x{}",
                    image.width, image.height
                )));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub images: Vec<ImageRecord>,
    pub annotations: Vec<Annotation>,
    pub categories: Vec<Category>,
    /// Free-form metadata (seed, source digests, tool version). Unknown
    /// top-level document keys are preserved here on parse.
    pub provenance: serde_json::Map<String, Value>,
}

impl Dataset {
    pub fn image_index(&self) -> HashMap<u64, &ImageRecord> {
        self.images.iter().map(|i| (i.id, i)).collect()
    }

    pub fn category_index(&self) -> HashMap<u64, &Category> {
        self.categories.iter().map(|c| (c.id, c)).collect()
    }

    /// SHA-256 of the canonical serialization.
    pub fn digest(&self) -> String {
        sha256_hex(write_dataset(self).as_bytes())
    }

    /// Check the referential and uniqueness invariants.
    pub fn validate(&self) -> Result<()> {
        let mut image_ids = HashSet::new();
        for img in &self.images {
            if img.id == 0 {
                return Err(Error::validation("image id must be positive".to_string()));
            }
            if img.width == 0 || img.height == 0 {
                return Err(Error::validation(format!(
                    "image {}: dimensions must be positive",
                    img.id
                )));
            }
            if !image_ids.insert(img.id) {
                return Err(Error::validation(format!("duplicate image id {}", img.id)));
            }
        }
        let mut category_ids = HashSet::new();
        for cat in &self.categories {
            if cat.id == 0 {
                return Err(Error::validation("category id must be positive".to_string()));
            }
            if !category_ids.insert(cat.id) {
                return Err(Error::validation(format!(
                    "duplicate category id {}",
                    cat.id
                )));
            }
        }
        let mut ann_ids = HashSet::new();
        for ann in &self.annotations {
            if ann.id == 0 {
                return Err(Error::validation(
                    "annotation id must be positive".to_string(),
                ));
            }
            if !ann_ids.insert(ann.id) {
                return Err(Error::validation(format!(
                    "duplicate annotation id {}",
                    ann.id
                )));
            }
            if !image_ids.contains(&ann.image_id) {
                return Err(Error::referential(format!(
                    "annotation {}: image_id {} does not resolve",
                    ann.id, ann.image_id
                )));
            }
            if !category_ids.contains(&ann.category_id) {
                return Err(Error::referential(format!(
                    "annotation {}: category_id {} does not resolve",
                    ann.id, ann.category_id
                )));
            }
        }
        Ok(())
    }
}

fn as_object<'a>(v: &'a Value, what: &str) -> Result<&'a serde_json::Map<String, Value>> {
    v.as_object()
        .ok_or_else(|| Error::validation(format!("{what} must be a JSON object")))
}

fn get_u64(obj: &serde_json::Map<String, Value>, key: &str, what: &str) -> Result<u64> {
    obj.get(key)
        .and_then(Value::as_u64)
        .ok_or_else(|| Error::validation(format!("{what}: missing or non-integer `{key}`")))
}

fn get_positive_u64(obj: &serde_json::Map<String, Value>, key: &str, what: &str) -> Result<u64> {
    let v = get_u64(obj, key, what)?;
    if v == 0 {
        return Err(Error::validation(format!("{what}: `{key}` must be positive")));
    }
    Ok(v)
}

fn get_string(obj: &serde_json::Map<String, Value>, key: &str, what: &str) -> Result<String> {
    obj.get(key)
        .and_then(Value::as_str)
        .map(str::to_owned)
        .ok_or_else(|| Error::validation(format!("{what}: missing or non-string `{key}`")))
}

fn number_list(v: &Value, what: &str) -> Result<Vec<f64>> {
    let arr = v
        .as_array()
        .ok_or_else(|| Error::validation(format!("{what} must be an array of numbers")))?;
    arr.iter()
        .map(|x| {
            x.as_f64()
                .ok_or_else(|| Error::validation(format!("{what} must contain only numbers")))
        })
        .collect()
}

/// Parse a COCO-style JSON document into a validated [`Dataset`].
///
/// Unknown top-level keys are preserved into `provenance`. Annotations
/// missing `bbox` or `area` get them recomputed from the polygons; when
/// present, both are checked against the recomputed values (bbox within
/// 1e-6, area exactly, since area is defined as the rasterized pixel count).
pub fn parse_dataset(document: &str) -> Result<Dataset> {
    let root: Value =
        serde_json::from_str(document).map_err(|e| Error::from_json(&e, document))?;
    let root = as_object(&root, "document root")?;

    let mut provenance = serde_json::Map::new();
    for (key, value) in root {
        match key.as_str() {
            "images" | "annotations" | "categories" => {}
            "provenance" => {
                let obj = as_object(value, "provenance")?;
                for (k, v) in obj {
                    provenance.insert(k.clone(), v.clone());
                }
            }
            other => {
                provenance.insert(other.to_string(), value.clone());
            }
        }
    }

    let images_v = root
        .get("images")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::validation("document must contain an `images` array"))?;
    let categories_v = root
        .get("categories")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::validation("document must contain a `categories` array"))?;
    let annotations_v = root
        .get("annotations")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::validation("document must contain an `annotations` array"))?;

    let mut images = Vec::with_capacity(images_v.len());
    for v in images_v {
        let obj = as_object(v, "image record")?;
        let id = get_positive_u64(obj, "id", "image")?;
        let what = format!("image {id}");
        let width = get_positive_u64(obj, "width", &what)? as u32;
        let height = get_positive_u64(obj, "height", &what)? as u32;
        images.push(ImageRecord {
            id,
            file_name: get_string(obj, "file_name", &what)?,
            width,
            height,
        });
    }

    let mut categories = Vec::with_capacity(categories_v.len());
    for v in categories_v {
        let obj = as_object(v, "category record")?;
        let id = get_positive_u64(obj, "id", "category")?;
        categories.push(Category {
            id,
            name: get_string(obj, "name", &format!("category {id}"))?,
        });
    }

    let image_by_id: HashMap<u64, &ImageRecord> = images.iter().map(|i| (i.id, i)).collect();
    let category_ids: HashSet<u64> = categories.iter().map(|c| c.id).collect();

    let mut annotations = Vec::with_capacity(annotations_v.len());
    for v in annotations_v {
        let obj = as_object(v, "annotation record")?;
        let id = get_positive_u64(obj, "id", "annotation")?;
        let image_id = get_u64(obj, "image_id", &format!("annotation {id}"))?;
        let category_id = get_u64(obj, "category_id", &format!("annotation {id}"))?;
        let image = *image_by_id.get(&image_id).ok_or_else(|| {
            Error::referential(format!(
                "annotation {id}: image_id {image_id} does not resolve"
            ))
        })?;
        if !category_ids.contains(&category_id) {
            return Err(Error::referential(format!(
                "annotation {id}: category_id {category_id} does not resolve"
            )));
        }
        if let Some(crowd) = obj.get("iscrowd") {
            let truthy = crowd.as_u64().map(|v| v != 0).unwrap_or(false)
                || crowd.as_bool().unwrap_or(false);
            if truthy {
                return Err(Error::validation(format!(
                    "annotation {id}: crowd annotations are not supported"
                )));
            }
        }

        let seg_v = obj.get("segmentation").ok_or_else(|| {
            Error::validation(format!("annotation {id}: missing `segmentation`"))
        })?;
        let seg_arr = match seg_v {
            Value::Array(a) => a,
            Value::Object(_) => {
                return Err(Error::validation(format!(
                    "annotation {id}: RLE segmentation is not supported, expected polygon lists"
                )))
            }
            _ => {
                return Err(Error::validation(format!(
                    "annotation {id}: segmentation must be a list of polygons"
                )))
            }
        };
        let mut segmentation = Vec::with_capacity(seg_arr.len());
        for poly_v in seg_arr {
            segmentation.push(number_list(poly_v, &format!("annotation {id}: polygon"))?);
        }
        validate_polygons(id, &segmentation, image)?;

        let source = match obj.get("source").and_then(Value::as_str) {
            None | Some("labeled") => Source::Labeled,
            Some("pseudo") => Source::Pseudo,
            Some(other) => {
                return Err(Error::validation(format!(
                    "annotation {id}: unknown source `{other}`"
                )))
            }
        };
        let score = match obj.get("score") {
            None | Some(Value::Null) => None,
            Some(v) => {
                let s = v.as_f64().ok_or_else(|| {
                    Error::validation(format!("annotation {id}: score must be a number"))
                })?;
                if !(0.0..=1.0).contains(&s) {
                    return Err(Error::validation(format!(
                        "annotation {id}: score {s} outside [0, 1]"
                    )));
                }
                Some(s)
            }
        };
        if score.is_some() && source == Source::Labeled {
            return Err(Error::validation(format!(
                "annotation {id}: score is only valid on pseudo annotations"
            )));
        }

        let computed_bbox = polygons_bbox(&segmentation)
            .map_err(|e| Error::validation(format!("annotation {id}: {e}")))?;
        let bbox = match obj.get("bbox") {
            None | Some(Value::Null) => computed_bbox,
            Some(v) => {
                let given = number_list(v, &format!("annotation {id}: bbox"))?;
                if given.len() != 4 {
                    return Err(Error::validation(format!(
                        "annotation {id}: bbox must have 4 entries"
                    )));
                }
                for (g, c) in given.iter().zip(computed_bbox.iter()) {
                    if (g - c).abs() > 1e-6 {
                        return Err(Error::validation(format!(
                            "annotation {id}: bbox {given:?} does not match polygon bounds {computed_bbox:?}"
                        )));
                    }
                }
                [given[0], given[1], given[2], given[3]]
            }
        };

        let computed_area =
            rasterize(&segmentation, image.width, image.height)?.popcount() as f64;
        let area = match obj.get("area") {
            None | Some(Value::Null) => computed_area,
            Some(v) => {
                let a = v.as_f64().ok_or_else(|| {
                    Error::validation(format!("annotation {id}: area must be a number"))
                })?;
                if a != computed_area {
                    return Err(Error::validation(format!(
                        "annotation {id}: area {a} does not match rasterized pixel count {computed_area}"
                    )));
                }
                a
            }
        };

        annotations.push(Annotation {
            id,
            image_id,
            category_id,
            segmentation,
            bbox,
            area,
            score,
            source,
        });
    }

    let dataset = Dataset {
        images,
        annotations,
        categories,
        provenance,
    };
    dataset.validate()?;
    Ok(dataset)
}

fn write_polygon(poly: &[f64], out: &mut String) {
    out.push('[');
    for (i, c) in poly.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&fmt_fixed6(*c));
    }
    out.push(']');
}

/// Serialize a dataset to its canonical JSON document. Arrays are sorted by
/// id, record keys are in fixed order, fractional fields use 6-decimal
/// fixed point. `parse_dataset(write_dataset(d))` reproduces `d` exactly.
pub fn write_dataset(dataset: &Dataset) -> String {
    let mut images: Vec<&ImageRecord> = dataset.images.iter().collect();
    images.sort_by_key(|i| i.id);
    let mut annotations: Vec<&Annotation> = dataset.annotations.iter().collect();
    annotations.sort_by_key(|a| a.id);
    let mut categories: Vec<&Category> = dataset.categories.iter().collect();
    categories.sort_by_key(|c| c.id);

    let mut out = String::new();
    out.push_str("{\n  \"images\": [");
    for (i, img) in images.iter().enumerate() {
        out.push_str(if i == 0 { "\n" } else { ",\n" });
        out.push_str(&format!(
            "    {{\"id\":{},\"file_name\":{},\"width\":{},\"height\":{}}}",
            img.id,
            json_string(&img.file_name),
            img.width,
            img.height
        ));
    }
    out.push_str(if images.is_empty() { "],\n" } else { "\n  ],\n" });

    out.push_str("  \"annotations\": [");
    for (i, ann) in annotations.iter().enumerate() {
        out.push_str(if i == 0 { "\n" } else { ",\n" });
        out.push_str(&format!(
            "    {{\"id\":{},\"image_id\":{},\"category_id\":{},\"segmentation\":[",
            ann.id, ann.image_id, ann.category_id
        ));
        for (j, poly) in ann.segmentation.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            write_polygon(poly, &mut out);
        }
        out.push_str("],\"bbox\":");
        write_polygon(&ann.bbox, &mut out);
        out.push_str(&format!(",\"area\":{}", fmt_fixed6(ann.area)));
        if let Some(score) = ann.score {
            out.push_str(&format!(",\"score\":{}", fmt_fixed6(score)));
        }
        out.push_str(&format!(",\"source\":\"{}\"}}", ann.source.as_str()));
    }
    out.push_str(if annotations.is_empty() { "],\n" } else { "\n  ],\n" });

    out.push_str("  \"categories\": [");
    for (i, cat) in categories.iter().enumerate() {
        out.push_str(if i == 0 { "\n" } else { ",\n" });
        out.push_str(&format!(
            "    {{\"id\":{},\"name\":{}}}",
            cat.id,
            json_string(&cat.name)
        ));
    }
    out.push_str(if categories.is_empty() { "],\n" } else { "\n  ],\n" });

    out.push_str("  \"provenance\": ");
    out.push_str(&canonical_value(&Value::Object(dataset.provenance.clone())));
    out.push_str("\n}\n");
    out
}

/// Transform an annotation's geometry within its image. Coordinates are
/// mapped, polygons clipped to the image rectangle, and bbox/area
/// recomputed. Returns `None` (dropped) when fewer than 3 vertices survive
/// clipping or the surviving mask covers less than one pixel.
pub fn transform_annotation(
    annotation: &Annotation,
    transform: GeometricTransform,
    image: &ImageRecord,
) -> Result<Option<Annotation>> {
    if annotation.image_id != image.id {
        return Err(Error::contract(format!(
            "annotation {} belongs to image {}, not {}",
            annotation.id, annotation.image_id, image.id
        )));
    }
    transform.validate()?;
    let (w, h) = (image.width as f64, image.height as f64);

    let mut clipped_polys: Vec<Vec<f64>> = Vec::new();
    for poly in &annotation.segmentation {
        let mapped: Vec<f64> = poly
            .chunks_exact(2)
            .flat_map(|p| {
                let (x, y) = transform.apply_point(p[0], p[1], w, h);
                [x, y]
            })
            .collect();
        let clipped = crate::geometry::clip_polygon_to_rect(&mapped, w, h);
        if clipped.len() >= 6 {
            clipped_polys.push(clipped);
        }
    }
    if clipped_polys.is_empty() {
        return Ok(None);
    }
    let out = Annotation::from_polygons(
        annotation.id,
        annotation.image_id,
        annotation.category_id,
        clipped_polys,
        annotation.score,
        annotation.source,
        image,
    )?;
    if out.area < 1.0 {
        return Ok(None);
    }
    Ok(Some(out))
}
