//! Plain-text model archive.
//!
//! ```text
//! ACTSEG-MODEL 1
//! kind hmm
//! meta states 30
//! tensor transitions 30 30
//! <one line per row, values in `{:.16e}`>
//! end
//! ```
//!
//! Values use 17 significant digits, which reproduces every `f64` bit for bit.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, MlpParams};

pub const MAGIC: &str = "ACTSEG-MODEL";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Archive {
    pub kind: String,
    pub meta: BTreeMap<String, String>,
    pub tensors: BTreeMap<String, Matrix>,
}

impl Archive {
    pub fn new(kind: &str) -> Self {
        Archive {
            kind: kind.to_string(),
            ..Archive::default()
        }
    }

    pub fn set_meta(&mut self, key: &str, value: impl ToString) {
        self.meta.insert(key.to_string(), value.to_string());
    }

    pub fn put(&mut self, name: &str, m: Matrix) {
        self.tensors.insert(name.to_string(), m);
    }

    pub fn put_vec(&mut self, name: &str, v: &[f64]) {
        self.put(name, Matrix::from_vec(1, v.len(), v.to_vec()).expect("finite vector"));
    }

    pub fn meta_str(&self, key: &str) -> Result<&str> {
        self.meta
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::ModelInvalid(format!("archive lacks meta `{key}`")))
    }

    pub fn meta_parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.meta_str(key)?
            .parse()
            .map_err(|_| Error::ModelInvalid(format!("meta `{key}` does not parse")))
    }

    pub fn tensor(&self, name: &str) -> Result<&Matrix> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::ModelInvalid(format!("archive lacks tensor `{name}`")))
    }

    pub fn vector(&self, name: &str) -> Result<Vec<f64>> {
        let m = self.tensor(name)?;
        if m.rows() != 1 {
            return Err(Error::ModelInvalid(format!("tensor `{name}` is not a row vector")));
        }
        Ok(m.data().to_vec())
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind != kind {
            return Err(Error::ModelInvalid(format!("archive holds `{}`, expected `{kind}`", self.kind)));
        }
        Ok(())
    }

    /// Stores an MLP under `prefix`.
    pub fn put_mlp(&mut self, prefix: &str, mlp: &MlpParams) {
        self.set_meta(&format!("{prefix}.layers"), mlp.layers().len());
        for (i, l) in mlp.layers().iter().enumerate() {
            self.put(&format!("{prefix}.{i}.weight"), l.weight.clone());
            self.put_vec(&format!("{prefix}.{i}.bias"), &l.bias);
            self.set_meta(&format!("{prefix}.{i}.activation"), l.activation.name());
        }
    }

    pub fn mlp(&self, prefix: &str) -> Result<MlpParams> {
        use crate::numerics::{Activation, Layer};
        let n: usize = self.meta_parse(&format!("{prefix}.layers"))?;
        let mut layers = Vec::with_capacity(n);
        for i in 0..n {
            let act = self.meta_str(&format!("{prefix}.{i}.activation"))?;
            layers.push(Layer {
                weight: self.tensor(&format!("{prefix}.{i}.weight"))?.clone(),
                bias: self.vector(&format!("{prefix}.{i}.bias"))?,
                activation: Activation::from_name(act)
                    .ok_or_else(|| Error::ModelInvalid(format!("unknown activation `{act}`")))?,
            });
        }
        MlpParams::new(layers).map_err(|e| Error::ModelInvalid(e.to_string()))
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{MAGIC} {VERSION}\nkind {}\n", self.kind);
        for (k, v) in &self.meta {
            writeln!(out, "meta {k} {v}").unwrap();
        }
        for (name, m) in &self.tensors {
            writeln!(out, "tensor {name} {} {}", m.rows(), m.cols()).unwrap();
            for r in 0..m.rows() {
                let row: Vec<String> = m.row(r).iter().map(|v| format!("{v:.16e}")).collect();
                out.push_str(&row.join(" "));
                out.push('\n');
            }
        }
        out.push_str("end\n");
        out
    }

    pub fn from_text(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, column: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            column,
            message,
        };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (_, header) = lines.next().ok_or_else(|| err(1, 1, "empty archive".into()))?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some(MAGIC) {
            return Err(err(1, 1, format!("missing `{MAGIC}` header")));
        }
        match parts.next().map(str::parse::<u32>) {
            Some(Ok(VERSION)) => {}
            _ => return Err(err(1, MAGIC.len() + 2, format!("unsupported version, expected {VERSION}"))),
        }
        let mut archive = Archive::default();
        let mut ended = false;
        while let Some((no, line)) = lines.next() {
            if line.trim().is_empty() {
                continue;
            }
            let (word, rest) = line.split_once(' ').unwrap_or((line, ""));
            match word {
                "kind" => archive.kind = rest.trim().to_string(),
                "meta" => {
                    let (k, v) = rest
                        .split_once(' ')
                        .ok_or_else(|| err(no, 6, "meta needs a key and a value".into()))?;
                    archive.meta.insert(k.to_string(), v.to_string());
                }
                "tensor" => {
                    let f: Vec<&str> = rest.split_whitespace().collect();
                    if f.len() != 3 {
                        return Err(err(no, 8, "tensor needs a name, rows and cols".into()));
                    }
                    let dims: Vec<usize> = f[1..]
                        .iter()
                        .map(|s| s.parse().map_err(|_| err(no, 8, format!("bad dimension `{s}`"))))
                        .collect::<Result<_>>()?;
                    let mut data = Vec::with_capacity(dims[0] * dims[1]);
                    for _ in 0..dims[0] {
                        let (rno, row) = lines
                            .next()
                            .ok_or_else(|| err(no, 1, format!("tensor `{}` is truncated", f[0])))?;
                        let before = data.len();
                        let mut col = 1;
                        for tok in row.split(' ').filter(|_| dims[1] > 0) {
                            let v: f64 = tok.parse().map_err(|_| err(rno, col, format!("bad number `{tok}`")))?;
                            data.push(v);
                            col += tok.len() + 1;
                        }
                        if data.len() - before != dims[1] {
                            return Err(err(rno, 1, format!("row has {} values, expected {}", data.len() - before, dims[1])));
                        }
                    }
                    let m = Matrix::from_vec(dims[0], dims[1], data).map_err(|e| err(no, 1, e.to_string()))?;
                    archive.tensors.insert(f[0].to_string(), m);
                }
                "end" => {
                    ended = true;
                    break;
                }
                other => return Err(err(no, 1, format!("unknown record `{other}`"))),
            }
        }
        if !ended {
            return Err(err(text.lines().count(), 1, "archive is truncated (no `end`)".into()));
        }
        Ok(archive)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(PathBuf::from(path), e))?;
        Archive::from_text(&text, path)
    }
}
