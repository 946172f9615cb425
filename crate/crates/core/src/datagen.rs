//! Synthetic scenes of attributed objects.
//!
//! Each object draws one value per attribute family (and, in the COCO-like
//! preset, one category plus independent free attributes). Its vision payload
//! is the sum of fixed random codewords of its labels plus Gaussian noise, and
//! its sentence lists the labels with the head noun last.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::store::{
    build_vocabulary, AnnotatedSample, ConceptId, ConceptKind, Dataset, DatasetHeader, FamilyDecl, PairRow, PairTable,
    Vocabulary,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub families: Vec<FamilyDecl>,
    /// Family whose value ends the sentence; `None` ends with the category.
    pub head_family: Option<String>,
    pub categories: Vec<String>,
    pub free_attributes: Vec<String>,
    pub attribute_p: f64,
    pub min_objects: usize,
    pub max_objects: usize,
    pub scenes: usize,
    pub feature_dim: usize,
    pub noise: f64,
    pub codeword_scale: f64,
    pub min_distance: f64,
    pub seed: u64,
}

fn fam(name: &str, values: &[&str]) -> FamilyDecl {
    FamilyDecl {
        name: name.into(),
        values: values.iter().map(|v| v.to_string()).collect(),
    }
}

impl GeneratorConfig {
    pub fn clevr() -> Self {
        GeneratorConfig {
            families: vec![
                fam(
                    "color",
                    &["gray", "red", "blue", "green", "brown", "purple", "cyan", "yellow"],
                ),
                fam("shape", &["cube", "sphere", "cylinder"]),
                fam("material", &["rubber", "metal"]),
                fam("size", &["large", "small"]),
            ],
            head_family: Some("shape".into()),
            categories: vec![],
            free_attributes: vec![],
            attribute_p: 0.15,
            min_objects: 3,
            max_objects: 10,
            scenes: 1000,
            feature_dim: 64,
            noise: 0.1,
            codeword_scale: 1.0,
            min_distance: 0.05,
            seed: 0,
        }
    }

    /// Categories with independent free attributes, no exclusive families.
    pub fn coco_like() -> Self {
        let cats = [
            "dog", "cat", "car", "bus", "bird", "horse", "chair", "table", "boat", "person",
        ];
        let attrs = [
            "white", "black", "brown", "red", "blue", "green", "wooden", "metal", "soft", "parked", "large", "small",
            "old", "new", "wet", "dry", "shiny", "striped", "spotted", "open", "closed", "standing", "sitting",
            "empty", "full",
        ];
        GeneratorConfig {
            families: vec![],
            head_family: None,
            categories: cats.iter().map(|s| s.to_string()).collect(),
            free_attributes: attrs.iter().map(|s| s.to_string()).collect(),
            ..Self::clevr()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "clevr" => Ok(Self::clevr()),
            "coco-like" | "coco_like" | "coco" => Ok(Self::coco_like()),
            other => Err(Error::Config(format!(
                "unknown preset `{other}` (expected clevr or coco-like)"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for f in &self.families {
            if f.values.len() < 2 {
                return Err(Error::Config(format!("family `{}` needs at least two values", f.name)));
            }
        }
        if self.families.is_empty() && self.categories.is_empty() && self.free_attributes.is_empty() {
            return Err(Error::Config("generator declares no concepts".into()));
        }
        if let Some(h) = &self.head_family {
            if !self.families.iter().any(|f| &f.name == h) {
                return Err(Error::Config(format!("head family `{h}` is not declared")));
            }
        } else if self.categories.is_empty() {
            return Err(Error::Config("sentences need a head family or categories".into()));
        }
        if self.min_objects == 0 || self.min_objects > self.max_objects {
            return Err(Error::Config(format!(
                "object range {}..{} is invalid",
                self.min_objects, self.max_objects
            )));
        }
        if self.feature_dim == 0 {
            return Err(Error::Config("feature_dim must be >= 1".into()));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Config("noise must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.attribute_p) {
            return Err(Error::Config("attribute_p must lie in [0,1]".into()));
        }
        if !(0.0..1.0).contains(&self.min_distance) {
            return Err(Error::Config("min_distance must lie in [0,1)".into()));
        }
        self.header().declarations()?;
        Ok(())
    }

    pub fn header(&self) -> DatasetHeader {
        DatasetHeader {
            dim_features: self.feature_dim,
            families: self.families.clone(),
            categories: self.categories.clone(),
            attributes: self.free_attributes.clone(),
        }
    }

    /// Apply one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::Config(format!("bad value `{value}` for `{key}` ({what})"));
        let list = |v: &str| -> Vec<String> {
            v.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .collect()
        };
        match key {
            "preset" => *self = Self::preset(value)?,
            "scenes" => self.scenes = value.parse().map_err(|_| bad("integer"))?,
            "min_objects" => self.min_objects = value.parse().map_err(|_| bad("integer"))?,
            "max_objects" => self.max_objects = value.parse().map_err(|_| bad("integer"))?,
            "feature_dim" => self.feature_dim = value.parse().map_err(|_| bad("integer"))?,
            "noise" => self.noise = value.parse().map_err(|_| bad("real"))?,
            "codeword_scale" => self.codeword_scale = value.parse().map_err(|_| bad("real"))?,
            "min_distance" => self.min_distance = value.parse().map_err(|_| bad("real"))?,
            "attribute_p" => self.attribute_p = value.parse().map_err(|_| bad("real"))?,
            "seed" => self.seed = value.parse().map_err(|_| bad("integer"))?,
            "categories" => self.categories = list(value),
            "attributes" => self.free_attributes = list(value),
            "head_family" => {
                self.head_family = if value.is_empty() {
                    None
                } else {
                    Some(value.to_string())
                }
            }
            "families" => {
                // color:red|blue;shape:cube|sphere
                self.families = value
                    .split(';')
                    .filter(|s| !s.trim().is_empty())
                    .map(|spec| {
                        let (name, vals) = spec.split_once(':').ok_or_else(|| bad("name:v1|v2;..."))?;
                        Ok(FamilyDecl {
                            name: name.trim().to_string(),
                            values: vals.split('|').map(|v| v.trim().to_string()).collect(),
                        })
                    })
                    .collect::<Result<_>>()?;
            }
            other => return Err(Error::Config(format!("unknown generator key `{other}`"))),
        }
        Ok(())
    }

    /// Parse a plain-text `key = value` file on top of `self`. `#` starts a comment.
    pub fn apply_kv(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::format(Some(i + 1), format!("expected key=value, got `{line}`")))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn from_kv_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::clevr();
        cfg.apply_kv(&text)?;
        Ok(cfg)
    }

    fn concept_names(&self) -> impl Iterator<Item = &String> {
        self.families
            .iter()
            .flat_map(|f| f.values.iter())
            .chain(&self.categories)
            .chain(&self.free_attributes)
    }
}

/// One fixed random vector per concept name.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    names: Vec<String>,
    vectors: Vec<Vec<f64>>,
}

impl Codebook {
    pub fn new(config: &GeneratorConfig) -> Self {
        let mut rng = rng::stream(config.seed, "codebook");
        let names: Vec<String> = config.concept_names().cloned().collect();
        let vectors = names
            .iter()
            .map(|_| {
                (0..config.feature_dim)
                    .map(|_| config.codeword_scale * Distribution::<f64>::sample(&StandardNormal, &mut rng))
                    .collect::<Vec<f64>>()
            })
            .collect();
        Codebook { names, vectors }
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.vectors[i].as_slice())
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Ground truth of one generated object.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectSpec {
    /// One value per family, in family order.
    pub values: Vec<String>,
    pub category: Option<String>,
    pub attributes: Vec<String>,
    pub coords: [f64; 2],
}

impl ObjectSpec {
    pub fn concepts(&self) -> Vec<String> {
        self.values
            .iter()
            .chain(self.category.iter())
            .chain(&self.attributes)
            .cloned()
            .collect()
    }
}

/// Objects of one scene; the count is uniform in the configured range and
/// coordinates keep the configured minimum pairwise distance.
pub fn generate_scene<R: Rng + ?Sized>(config: &GeneratorConfig, rng: &mut R) -> Vec<ObjectSpec> {
    let mut n = rng.random_range(config.min_objects..=config.max_objects);
    let coords = loop {
        match place(n, config.min_distance, rng) {
            Some(c) => break c,
            None if n > 1 => n -= 1,
            None => break vec![[rng.random::<f64>(), rng.random::<f64>()]],
        }
    };
    coords
        .into_iter()
        .map(|xy| {
            let values = config
                .families
                .iter()
                .map(|f| f.values[rng.random_range(0..f.values.len())].clone())
                .collect();
            let category = if config.categories.is_empty() {
                None
            } else {
                Some(config.categories[rng.random_range(0..config.categories.len())].clone())
            };
            let attributes = config
                .free_attributes
                .iter()
                .filter(|_| rng.random::<f64>() < config.attribute_p)
                .cloned()
                .collect();
            ObjectSpec {
                values,
                category,
                attributes,
                coords: xy,
            }
        })
        .collect()
}

fn place<R: Rng + ?Sized>(n: usize, min_distance: f64, rng: &mut R) -> Option<Vec<[f64; 2]>> {
    const TRIES_PER_OBJECT: usize = 200;
    let mut out: Vec<[f64; 2]> = Vec::with_capacity(n);
    let mut tries = 0;
    while out.len() < n {
        if tries == TRIES_PER_OBJECT * n {
            return None;
        }
        tries += 1;
        let p = [rng.random::<f64>(), rng.random::<f64>()];
        if out
            .iter()
            .all(|q| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt() >= min_distance)
        {
            out.push(p);
        }
    }
    Some(out)
}

/// Sum of the object's codewords plus `N(0, sigma^2)` noise per coordinate.
pub fn render_features<R: Rng + ?Sized>(concepts: &[String], codebook: &Codebook, sigma: f64, rng: &mut R) -> Vec<f64> {
    let dim = codebook.vectors.first().map_or(0, Vec::len);
    let mut out = vec![0.0; dim];
    for c in concepts {
        let v = codebook.get(c).expect("codebook covers every generated concept");
        for (o, x) in out.iter_mut().zip(v) {
            *o += x;
        }
    }
    if sigma > 0.0 {
        let noise = Normal::new(0.0, sigma).expect("sigma validated");
        for o in &mut out {
            *o += noise.sample(rng);
        }
    }
    out
}

/// `There is a <modifiers in random order> <head>`.
pub fn describe<R: Rng + ?Sized>(object: &ObjectSpec, config: &GeneratorConfig, rng: &mut R) -> String {
    let head_idx = config
        .head_family
        .as_ref()
        .and_then(|h| config.families.iter().position(|f| &f.name == h));
    let head = match head_idx {
        Some(i) => object.values[i].clone(),
        None => object.category.clone().unwrap_or_else(|| "object".into()),
    };
    let mut mods: Vec<&String> = object
        .values
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != head_idx)
        .map(|(_, v)| v)
        .chain(&object.attributes)
        .collect();
    mods.shuffle(rng);
    if mods.is_empty() {
        format!("There is a {head}")
    } else {
        let joined: Vec<&str> = mods.iter().map(|s| s.as_str()).collect();
        format!("There is a {} {head}", joined.join(", "))
    }
}

/// Invert [`describe`]: the concept names mentioned by a sentence.
pub fn parse_description(sentence: &str) -> Option<Vec<String>> {
    let body = sentence.strip_prefix("There is a ")?;
    let (mods, head) = match body.rsplit_once(' ') {
        Some((m, h)) => (Some(m), h),
        None => (None, body),
    };
    let mut out: Vec<String> = mods
        .map(|m| m.split(", ").map(str::to_string).collect())
        .unwrap_or_default();
    out.push(head.to_string());
    Some(out)
}

/// Generate `config.scenes` scenes as one dataset, one record per object.
pub fn generate_dataset(config: &GeneratorConfig) -> Result<Dataset> {
    config.validate()?;
    let header = config.header();
    let decls = header.declarations()?;
    let codebook = Codebook::new(config);
    let mut raw = Vec::new();
    for s in 0..config.scenes {
        let mut r = rng::indexed_stream(config.seed, "datagen", s as u64);
        for (k, obj) in generate_scene(config, &mut r).into_iter().enumerate() {
            let concepts = obj.concepts();
            let vision = render_features(&concepts, &codebook, config.noise, &mut r);
            let text = describe(&obj, config, &mut r);
            raw.push((format!("s{s}-o{k}"), concepts, vision, text, obj.coords, s as u64));
        }
    }
    if raw.is_empty() {
        return Err(Error::Config("generator produced no objects (scenes = 0?)".into()));
    }
    let vocabulary = build_vocabulary(raw.iter().map(|r| r.1.as_slice()), |name| {
        decls
            .get(name)
            .cloned()
            .ok_or_else(|| Error::format(None, format!("undeclared concept `{name}`")))
    })?;
    let mut samples = Vec::with_capacity(raw.len());
    for (id, concepts, vision, text, coords, scene) in raw {
        let mut labels = concepts
            .iter()
            .map(|c| vocabulary.require(c))
            .collect::<Result<Vec<_>>>()?;
        labels.sort();
        samples.push(AnnotatedSample {
            id,
            labels,
            vision,
            text,
            coords: Some(coords),
            scene: Some(scene),
        });
    }
    Ok(Dataset {
        header,
        vocabulary,
        samples,
    })
}

pub fn export_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    dataset.write(path)
}

/// Split samples into train and held-out parts by scene (or by sample when
/// scenes are absent); the last `held_out` fraction of scenes is held out.
pub fn split_by_scene(dataset: &Dataset, held_out: f64) -> (Dataset, Dataset) {
    let key = |s: &AnnotatedSample, i: usize| s.scene.unwrap_or(i as u64);
    let max_key = dataset
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| key(s, i))
        .max()
        .unwrap_or(0);
    let cut = ((max_key + 1) as f64 * (1.0 - held_out)).round() as u64;
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (i, s) in dataset.samples.iter().enumerate() {
        if key(s, i) < cut {
            train.push(s.clone());
        } else {
            test.push(s.clone());
        }
    }
    let wrap = |samples| Dataset {
        header: dataset.header.clone(),
        vocabulary: dataset.vocabulary.clone(),
        samples,
    };
    (wrap(train), wrap(test))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchyConfig {
    pub concepts: usize,
    /// Unrelated pairs emitted with target 0, per closure pair.
    pub negative_ratio: f64,
    pub seed: u64,
}

impl Default for HierarchyConfig {
    fn default() -> Self {
        HierarchyConfig {
            concepts: 500,
            negative_ratio: 1.0,
            seed: 0,
        }
    }
}

/// A random recursive tree over `concepts` nodes and its pair table: every
/// `(ancestor | descendant)` pair of the transitive closure with target 1,
/// plus unrelated pairs (neither an ancestor of the other) with target 0.
pub fn generate_hierarchy(config: &HierarchyConfig) -> Result<(Vocabulary, PairTable, Vec<Option<usize>>)> {
    if config.concepts < 2 {
        return Err(Error::Config("a hierarchy needs at least two concepts".into()));
    }
    if !(config.negative_ratio >= 0.0 && config.negative_ratio.is_finite()) {
        return Err(Error::Config("negative_ratio must be >= 0".into()));
    }
    let n = config.concepts;
    let mut rng = rng::stream(config.seed, "hierarchy");
    let parent: Vec<Option<usize>> = (0..n)
        .map(|i| if i == 0 { None } else { Some(rng.random_range(0..i)) })
        .collect();
    let width = (n - 1).to_string().len();
    let mut vocab = Vocabulary::new();
    for i in 0..n {
        vocab.push(&format!("n{i:0width$}"), ConceptKind::Category, None)?;
    }
    let mut ancestors: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 1..n {
        let p = parent[i].expect("non-root");
        let mut up = ancestors[p].clone();
        up.push(p);
        ancestors[i] = up;
    }
    let related = |a: usize, b: usize| a == b || ancestors[a].contains(&b) || ancestors[b].contains(&a);
    let mut rows = Vec::new();
    for (d, ups) in ancestors.iter().enumerate() {
        for &a in ups {
            rows.push(PairRow {
                concept: ConceptId::from(a),
                given: ConceptId::from(d),
                probability: 1.0,
            });
        }
    }
    let wanted = (rows.len() as f64 * config.negative_ratio).round() as usize;
    let mut seen = std::collections::BTreeSet::new();
    let mut attempts = 0usize;
    while seen.len() < wanted && attempts < 100 * wanted.max(1) {
        attempts += 1;
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if !related(a, b) && seen.insert((a, b)) {
            rows.push(PairRow {
                concept: ConceptId::from(a),
                given: ConceptId::from(b),
                probability: 0.0,
            });
        }
    }
    Ok((vocab, PairTable::new(rows)?, parent))
}
