//! Versioned plain-text model files.
//!
//! Floats are written in shortest round-trip exponent form, so a saved model
//! reloads bit-for-bit and identical models produce identical files. Avatar
//! names are JSON string literals, one per line.
//!
//! ```text
//! gae-model
//! format_version 1
//! kind gae
//! avatars 2
//! "axe"
//! "lina"
//! latent_dim 1
//! embeddings 2 1
//! 1e0
//! -5e-1
//! synergy 1 1
//! ...
//! end
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::baselines::{FmModel, LogisticModel, WinRatioMatrix};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::registry::AvatarRegistry;

const MAGIC: &str = "gae-model";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum SavedModel {
    Gae(ModelParams),
    Lr(LogisticModel),
    Fm(FmModel),
    WinRatio(WinRatioMatrix),
}

impl SavedModel {
    pub fn kind(&self) -> &'static str {
        match self {
            SavedModel::Gae(_) => "gae",
            SavedModel::Lr(_) => "lr",
            SavedModel::Fm(_) => "fm",
            SavedModel::WinRatio(_) => "winratio",
        }
    }

    pub fn registry(&self) -> &AvatarRegistry {
        match self {
            SavedModel::Gae(m) => m.registry(),
            SavedModel::Lr(m) => m.registry(),
            SavedModel::Fm(m) => m.registry(),
            SavedModel::WinRatio(m) => m.registry(),
        }
    }
}

struct Emitter<W: Write> {
    out: W,
}

impl<W: Write> Emitter<W> {
    fn line(&mut self, text: &str) -> Result<()> {
        writeln!(self.out, "{text}")?;
        Ok(())
    }

    fn row<T: std::fmt::LowerExp>(&mut self, values: impl IntoIterator<Item = T>) -> Result<()> {
        let text: Vec<String> = values.into_iter().map(|v| format!("{v:e}")).collect();
        self.line(&text.join(" "))
    }

    fn vector(&mut self, name: &str, v: &Array1<f64>) -> Result<()> {
        self.line(&format!("{name} {}", v.len()))?;
        self.row(v.iter())
    }

    fn matrix(&mut self, name: &str, m: ndarray::ArrayView2<f64>) -> Result<()> {
        self.line(&format!("{name} {} {}", m.nrows(), m.ncols()))?;
        for r in m.rows() {
            self.row(r.iter())?;
        }
        Ok(())
    }

    fn scalar(&mut self, name: &str, v: f64) -> Result<()> {
        self.line(&format!("{name} {v:e}"))
    }
}

pub fn write_model<W: Write>(model: &SavedModel, out: W) -> Result<()> {
    let mut e = Emitter { out };
    e.line(MAGIC)?;
    e.line(&format!("format_version {FORMAT_VERSION}"))?;
    e.line(&format!("kind {}", model.kind()))?;
    let names = model.registry().names();
    e.line(&format!("avatars {}", names.len()))?;
    for name in names {
        e.line(&serde_json::to_string(name).expect("strings serialize"))?;
    }
    match model {
        SavedModel::Gae(m) => {
            e.line(&format!("latent_dim {}", m.latent_dim()))?;
            e.matrix("embeddings", m.embeddings())?;
            e.matrix("synergy", m.synergy())?;
            e.matrix("opposition", m.opposition())?;
            e.vector("bias", &m.bias().to_owned())?;
        }
        SavedModel::Lr(m) => {
            e.vector("weights", m.weights())?;
            e.scalar("intercept", m.intercept())?;
        }
        SavedModel::Fm(m) => {
            e.line(&format!("latent_dim {}", m.latent_dim()))?;
            e.vector("first_order", m.first_order())?;
            e.matrix("factors", m.factors().view())?;
            e.scalar("intercept", m.intercept())?;
        }
        SavedModel::WinRatio(m) => {
            e.matrix("ratios", m.ratios().view())?;
            e.line(&format!("counts {} {}", m.counts().nrows(), m.counts().ncols()))?;
            for r in m.counts().rows() {
                let text: Vec<String> = r.iter().map(u64::to_string).collect();
                e.line(&text.join(" "))?;
            }
        }
    }
    e.line("end")?;
    e.out.flush()?;
    Ok(())
}

pub fn save_model(model: &SavedModel, path: &Path) -> Result<()> {
    write_model(model, BufWriter::new(File::create(path)?))
}

struct Lines {
    lines: Vec<String>,
    pos: usize,
}

impl Lines {
    fn error(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            line: self.pos,
            message: message.into(),
        }
    }

    fn next(&mut self) -> Result<&str> {
        self.pos += 1;
        self.lines
            .get(self.pos - 1)
            .map(String::as_str)
            .ok_or_else(|| Error::Parse {
                line: self.pos,
                message: "unexpected end of model file".into(),
            })
    }

    /// Reads a `keyword arg...` line and returns the arguments.
    fn header(&mut self, keyword: &str) -> Result<Vec<String>> {
        let line = self.next()?.to_owned();
        let mut parts = line.split_whitespace();
        if parts.next() != Some(keyword) {
            return Err(self.error(format!("expected {keyword:?}, found {line:?}")));
        }
        Ok(parts.map(str::to_owned).collect())
    }

    fn sizes<const D: usize>(&mut self, keyword: &str) -> Result<[usize; D]> {
        let args = self.header(keyword)?;
        let parsed: Vec<usize> = args
            .iter()
            .map(|a| a.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| self.error(format!("bad size in {keyword:?}")))?;
        parsed
            .try_into()
            .map_err(|_| self.error(format!("{keyword:?} expects {D} size(s)")))
    }

    fn values<T: std::str::FromStr>(&mut self, expected: usize) -> Result<Vec<T>> {
        let line = self.next()?.to_owned();
        let values: Vec<T> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| self.error("malformed number"))?;
        if values.len() != expected {
            return Err(self.error(format!("expected {expected} values, found {}", values.len())));
        }
        Ok(values)
    }

    fn vector(&mut self, keyword: &str, expected: usize) -> Result<Array1<f64>> {
        let [len] = self.sizes::<1>(keyword)?;
        if len != expected {
            return Err(self.error(format!("{keyword} has length {len}, expected {expected}")));
        }
        Ok(Array1::from(self.values::<f64>(len)?))
    }

    fn matrix<T: std::str::FromStr>(
        &mut self,
        keyword: &str,
        shape: (usize, usize),
    ) -> Result<Array2<T>> {
        let [rows, cols] = self.sizes::<2>(keyword)?;
        if (rows, cols) != shape {
            return Err(self.error(format!("{keyword} is {rows}x{cols}, expected {}x{}", shape.0, shape.1)));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            data.extend(self.values::<T>(cols)?);
        }
        Ok(Array2::from_shape_vec((rows, cols), data).expect("sizes checked"))
    }

    fn scalar(&mut self, keyword: &str) -> Result<f64> {
        let args = self.header(keyword)?;
        match args.as_slice() {
            [v] => v.parse().map_err(|_| self.error("malformed number")),
            _ => Err(self.error(format!("{keyword:?} expects one value"))),
        }
    }
}

pub fn read_model<R: Read>(input: R) -> Result<SavedModel> {
    let lines = BufReader::new(input).lines().collect::<std::io::Result<Vec<_>>>()?;
    let mut l = Lines { lines, pos: 0 };
    if l.next()? != MAGIC {
        return Err(l.error("not a model file"));
    }
    let [version] = l.sizes::<1>("format_version")?;
    if version != FORMAT_VERSION as usize {
        return Err(Error::ModelFile(format!(
            "unsupported format_version {version} (this build reads {FORMAT_VERSION})"
        )));
    }
    let kind = match l.header("kind")?.as_slice() {
        [k] => k.clone(),
        _ => return Err(l.error("kind expects one value")),
    };
    let [n] = l.sizes::<1>("avatars")?;
    let mut names = Vec::with_capacity(n);
    for _ in 0..n {
        let line = l.next()?.to_owned();
        let name: String = serde_json::from_str(&line).map_err(|e| l.error(format!("bad avatar name: {e}")))?;
        names.push(name);
    }
    let registry = AvatarRegistry::from_names(names)?;
    let model = match kind.as_str() {
        "gae" => {
            let [k] = l.sizes::<1>("latent_dim")?;
            let embeddings = l.matrix("embeddings", (n, k))?;
            let synergy = l.matrix("synergy", (k, k))?;
            let opposition = l.matrix("opposition", (k, k))?;
            let bias = l.vector("bias", n)?;
            SavedModel::Gae(ModelParams::new(registry, embeddings, synergy, opposition, bias)?)
        }
        "lr" => {
            let weights = l.vector("weights", 2 * n)?;
            let intercept = l.scalar("intercept")?;
            SavedModel::Lr(LogisticModel::new(registry, weights, intercept)?)
        }
        "fm" => {
            let [k] = l.sizes::<1>("latent_dim")?;
            let first_order = l.vector("first_order", 2 * n)?;
            let factors = l.matrix("factors", (2 * n, k))?;
            let intercept = l.scalar("intercept")?;
            SavedModel::Fm(FmModel::new(registry, first_order, factors, intercept)?)
        }
        "winratio" => {
            let ratios = l.matrix("ratios", (n, 2 * n))?;
            let counts = l.matrix::<u64>("counts", (n, 2 * n))?;
            SavedModel::WinRatio(WinRatioMatrix::new(registry, ratios, counts)?)
        }
        other => return Err(Error::ModelFile(format!("unknown model kind {other:?}"))),
    };
    l.header("end")?;
    Ok(model)
}

pub fn load_model(path: &Path) -> Result<SavedModel> {
    read_model(File::open(path)?)
}

/// Loads a file that must hold a GAE model.
pub fn load_gae(path: &Path) -> Result<ModelParams> {
    match load_model(path)? {
        SavedModel::Gae(m) => Ok(m),
        other => Err(Error::ModelFile(format!(
            "{} holds a {} model, expected gae",
            path.display(),
            other.kind()
        ))),
    }
}

pub fn save_gae(model: &ModelParams, path: &Path) -> Result<()> {
    save_model(&SavedModel::Gae(model.clone()), path)
}
