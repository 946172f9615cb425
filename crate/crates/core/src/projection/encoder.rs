use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::boxes::{BoxEmbedding, BoxGrad};
use crate::error::{Error, Result};

pub const ENCODER_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Vision,
    Text,
}

impl std::fmt::Display for Modality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Modality::Vision => "vision",
            Modality::Text => "text",
        })
    }
}

impl std::str::FromStr for Modality {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "vision" => Ok(Modality::Vision),
            "text" => Ok(Modality::Text),
            other => Err(format!("unknown modality `{other}`")),
        }
    }
}

/// Raw input to an encoder.
#[derive(Debug, Clone, Copy)]
pub enum Payload<'a> {
    Vision(&'a [f64]),
    Text(&'a str),
}

pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// Sorted token list; a sentence becomes a vector of token counts over it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenTable {
    pub tokens: Vec<String>,
}

impl TokenTable {
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let set: BTreeSet<String> = texts.into_iter().flat_map(tokenize).collect();
        TokenTable {
            tokens: set.into_iter().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Bag of counts; tokens outside the table are ignored.
    pub fn counts(&self, text: &str) -> Vec<f64> {
        let mut out = vec![0.0; self.tokens.len()];
        for t in tokenize(text) {
            if let Ok(i) = self.tokens.binary_search(&t) {
                out[i] += 1.0;
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderShape {
    pub input: usize,
    pub embed: usize,
    pub dim: usize,
}

impl EncoderShape {
    fn half(&self) -> usize {
        self.embed / 2
    }

    pub fn num_params(&self) -> usize {
        let h = self.half();
        self.embed * self.input + self.embed + 2 * (self.dim * h + self.dim)
    }

    fn offsets(&self) -> [usize; 6] {
        let h = self.half();
        let w_enc = 0;
        let b_enc = w_enc + self.embed * self.input;
        let w_min = b_enc + self.embed;
        let b_min = w_min + self.dim * h;
        let w_delta = b_min + self.dim;
        let b_delta = w_delta + self.dim * h;
        [w_enc, b_enc, w_min, b_min, w_delta, b_delta]
    }
}

/// Toy projection model: `e = tanh(W x + b)`, split in half, then
/// `min = W_min e[..E/2] + b_min` and `delta = relu(W_delta e[E/2..] + b_delta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureEncoder {
    pub modality: Modality,
    pub shape: EncoderShape,
    pub tokens: Option<TokenTable>,
    /// All weights, laid out `[W, b, W_min, b_min, W_delta, b_delta]`, matrices row-major.
    pub params: Vec<f64>,
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub input: Vec<f64>,
    pub hidden: Vec<f64>,
    pub pre_delta: Vec<f64>,
    pub output: BoxEmbedding,
}

pub const DELTA_BIAS_INIT: f64 = 0.5;

impl FeatureEncoder {
    pub fn zeros(modality: Modality, shape: EncoderShape, tokens: Option<TokenTable>) -> Result<Self> {
        if shape.embed == 0 || !shape.embed.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "embedding size must be even and positive, got {}",
                shape.embed
            )));
        }
        if shape.input == 0 || shape.dim == 0 {
            return Err(Error::Config("encoder input and output sizes must be positive".into()));
        }
        match (modality, &tokens) {
            (Modality::Text, Some(t)) if t.len() == shape.input => {}
            (Modality::Text, _) => {
                return Err(Error::Config(
                    "text encoder needs a token table matching its input size".into(),
                ))
            }
            (Modality::Vision, Some(_)) => return Err(Error::Config("vision encoder takes no token table".into())),
            (Modality::Vision, None) => {}
        }
        Ok(FeatureEncoder {
            modality,
            shape,
            tokens,
            params: vec![0.0; shape.num_params()],
        })
    }

    /// Uniform `±1/sqrt(fan_in)` weights, zero biases, and a positive delta bias
    /// so freshly projected boxes have volume.
    pub fn init<R: Rng + ?Sized>(
        modality: Modality,
        shape: EncoderShape,
        tokens: Option<TokenTable>,
        rng: &mut R,
    ) -> Result<Self> {
        let mut enc = Self::zeros(modality, shape, tokens)?;
        let [w_enc, b_enc, w_min, b_min, w_delta, b_delta] = shape.offsets();
        let fill = |slice: &mut [f64], fan_in: usize, rng: &mut R| {
            let a = 1.0 / (fan_in as f64).sqrt();
            for p in slice {
                *p = rng.random_range(-a..a);
            }
        };
        let h = shape.half();
        fill(&mut enc.params[w_enc..b_enc], shape.input, rng);
        fill(&mut enc.params[w_min..b_min], h, rng);
        fill(&mut enc.params[w_delta..b_delta], h, rng);
        enc.params[b_delta..].iter_mut().for_each(|b| *b = DELTA_BIAS_INIT);
        Ok(enc)
    }

    pub fn for_vision<R: Rng + ?Sized>(input: usize, embed: usize, dim: usize, rng: &mut R) -> Result<Self> {
        Self::init(Modality::Vision, EncoderShape { input, embed, dim }, None, rng)
    }

    pub fn for_text<R: Rng + ?Sized>(tokens: TokenTable, embed: usize, dim: usize, rng: &mut R) -> Result<Self> {
        let shape = EncoderShape {
            input: tokens.len(),
            embed,
            dim,
        };
        Self::init(Modality::Text, shape, Some(tokens), rng)
    }

    pub fn dim(&self) -> usize {
        self.shape.dim
    }

    /// Turn a payload into the encoder's input vector.
    pub fn featurize(&self, payload: Payload<'_>) -> Result<Vec<f64>> {
        match (self.modality, payload) {
            (Modality::Vision, Payload::Vision(x)) => {
                if x.len() != self.shape.input {
                    return Err(Error::domain(format!(
                        "vision payload has {} features, encoder expects {}",
                        x.len(),
                        self.shape.input
                    )));
                }
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(Error::domain("non-finite vision feature"));
                }
                Ok(x.to_vec())
            }
            (Modality::Text, Payload::Text(s)) => Ok(self.tokens.as_ref().expect("text encoder has tokens").counts(s)),
            (m, _) => Err(Error::domain(format!("payload does not match the {m} encoder"))),
        }
    }

    pub fn encode(&self, payload: Payload<'_>) -> Result<BoxEmbedding> {
        Ok(self.forward(self.featurize(payload)?).output)
    }

    pub fn forward(&self, input: Vec<f64>) -> ForwardCache {
        let s = self.shape;
        let h = s.half();
        let [w_enc, b_enc, w_min, b_min, w_delta, b_delta] = s.offsets();
        let p = &self.params;
        let hidden: Vec<f64> = (0..s.embed)
            .map(|r| {
                let row = &p[w_enc + r * s.input..w_enc + (r + 1) * s.input];
                (dot(row, &input) + p[b_enc + r]).tanh()
            })
            .collect();
        let (h_min, h_delta) = hidden.split_at(h);
        let min: Vec<f64> = (0..s.dim)
            .map(|r| dot(&p[w_min + r * h..w_min + (r + 1) * h], h_min) + p[b_min + r])
            .collect();
        let pre_delta: Vec<f64> = (0..s.dim)
            .map(|r| dot(&p[w_delta + r * h..w_delta + (r + 1) * h], h_delta) + p[b_delta + r])
            .collect();
        let delta = pre_delta.iter().map(|&v| v.max(0.0)).collect();
        ForwardCache {
            input,
            hidden,
            pre_delta,
            output: BoxEmbedding { min, delta },
        }
    }

    /// Accumulate `d loss / d params` into `grad` given the gradient with
    /// respect to the output box.
    pub fn backward(&self, cache: &ForwardCache, g: &BoxGrad, grad: &mut [f64]) {
        let s = self.shape;
        let h = s.half();
        let [w_enc, b_enc, w_min, b_min, w_delta, b_delta] = s.offsets();
        let p = &self.params;
        let mut d_hidden = vec![0.0; s.embed];
        for r in 0..s.dim {
            let gm = g.min[r];
            if gm != 0.0 {
                grad[b_min + r] += gm;
                for k in 0..h {
                    grad[w_min + r * h + k] += gm * cache.hidden[k];
                    d_hidden[k] += gm * p[w_min + r * h + k];
                }
            }
            let gd = if cache.pre_delta[r] > 0.0 { g.delta[r] } else { 0.0 };
            if gd != 0.0 {
                grad[b_delta + r] += gd;
                for k in 0..h {
                    grad[w_delta + r * h + k] += gd * cache.hidden[h + k];
                    d_hidden[h + k] += gd * p[w_delta + r * h + k];
                }
            }
        }
        for r in 0..s.embed {
            let dz = d_hidden[r] * (1.0 - cache.hidden[r] * cache.hidden[r]);
            if dz == 0.0 {
                continue;
            }
            grad[b_enc + r] += dz;
            let row = &mut grad[w_enc + r * s.input..w_enc + (r + 1) * s.input];
            for (gw, &x) in row.iter_mut().zip(&cache.input) {
                *gw += dz * x;
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer(&mut w, &self.to_file()).map_err(|e| Error::format(None, e.to_string()))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(BufReader::new(file))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_file()).expect("encoder serialises")
    }

    pub fn from_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let raw: serde_json::Value =
            serde_json::from_reader(reader).map_err(|e| Error::format(None, format!("encoder: {e}")))?;
        let version = raw
            .get("version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| Error::format(None, "encoder: missing version"))?;
        if version != u64::from(ENCODER_FORMAT_VERSION) {
            return Err(Error::Version {
                found: version as u32,
                supported: ENCODER_FORMAT_VERSION,
            });
        }
        let f: EncoderFile = serde_json::from_value(raw).map_err(|e| Error::format(None, format!("encoder: {e}")))?;
        let shape = EncoderShape {
            input: f.input,
            embed: f.embed,
            dim: f.dim,
        };
        let tokens = f.tokens.map(|tokens| TokenTable { tokens });
        let mut enc = Self::zeros(f.modality, shape, tokens).map_err(|e| Error::format(None, e.to_string()))?;
        let h = shape.half();
        let parts = [
            (f.w_enc, shape.embed * shape.input, "w_enc"),
            (f.b_enc, shape.embed, "b_enc"),
            (f.w_min, shape.dim * h, "w_min"),
            (f.b_min, shape.dim, "b_min"),
            (f.w_delta, shape.dim * h, "w_delta"),
            (f.b_delta, shape.dim, "b_delta"),
        ];
        let mut params = Vec::with_capacity(shape.num_params());
        for (v, n, name) in parts {
            if v.len() != n {
                return Err(Error::format(
                    None,
                    format!("encoder: `{name}` has {} values, expected {n}", v.len()),
                ));
            }
            params.extend(v);
        }
        enc.params = params;
        Ok(enc)
    }

    fn to_file(&self) -> EncoderFile {
        let [w_enc, b_enc, w_min, b_min, w_delta, b_delta] = self.shape.offsets();
        let p = &self.params;
        EncoderFile {
            version: ENCODER_FORMAT_VERSION,
            modality: self.modality,
            input: self.shape.input,
            embed: self.shape.embed,
            dim: self.shape.dim,
            tokens: self.tokens.as_ref().map(|t| t.tokens.clone()),
            w_enc: p[w_enc..b_enc].to_vec(),
            b_enc: p[b_enc..w_min].to_vec(),
            w_min: p[w_min..b_min].to_vec(),
            b_min: p[b_min..w_delta].to_vec(),
            w_delta: p[w_delta..b_delta].to_vec(),
            b_delta: p[b_delta..].to_vec(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct EncoderFile {
    version: u32,
    modality: Modality,
    input: usize,
    embed: usize,
    dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tokens: Option<Vec<String>>,
    w_enc: Vec<f64>,
    b_enc: Vec<f64>,
    w_min: Vec<f64>,
    b_min: Vec<f64>,
    w_delta: Vec<f64>,
    b_delta: Vec<f64>,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
