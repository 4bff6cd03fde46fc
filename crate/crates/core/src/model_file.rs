//! Binary model persistence: a little-endian container with
//! length-prefixed sections [header | pca | machines | labels], format
//! version 1. All reals round-trip bit-exactly, so a loaded model predicts
//! identically to the saved one.

use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::gnb::GnbModel;
use crate::pca::PcaModel;
use crate::pipeline::{Classifier, SolverModel};
use crate::svm::{BinarySvm, MulticlassSvm, PairMachine};

const MAGIC: &[u8; 4] = b"ACSM";
const VERSION: u16 = 1;

const KIND_SVM: u8 = 0;
const KIND_GNB: u8 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn new() -> Self {
        Self(Vec::new())
    }

    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }

    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn f64s(&mut self, vs: impl IntoIterator<Item = f64>) {
        for v in vs {
            self.f64(v);
        }
    }

    fn section(&mut self, body: Writer) {
        self.u64(body.0.len() as u64);
        self.0.extend_from_slice(&body.0);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn corrupt(detail: &str) -> Error {
        Error::ModelCorrupt {
            detail: detail.to_string(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Self::corrupt("unexpected end of file"));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn usize(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| Self::corrupt("length overflows usize"))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        if n.saturating_mul(8) > self.buf.len() - self.pos {
            return Err(Self::corrupt("array length exceeds file size"));
        }
        (0..n).map(|_| self.f64()).collect()
    }

    fn section(&mut self) -> Result<Reader<'a>> {
        let len = self.usize()?;
        Ok(Reader::new(self.take(len)?))
    }

    fn done(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Self::corrupt("trailing bytes"));
        }
        Ok(())
    }
}

fn write_pca(pca: &PcaModel) -> Writer {
    let mut w = Writer::new();
    let d = pca.input_dim();
    let k = pca.k();
    w.u64(d as u64);
    w.u64(k as u64);
    w.f64(pca.var_fraction());
    w.f64(pca.total_variance());
    w.f64(pca.achieved_fraction());
    w.f64s(pca.mean().iter().copied());
    w.f64s(pca.eigenvalues().iter().copied());
    w.f64s(pca.components().iter().copied());
    w
}

fn read_pca(r: &mut Reader<'_>) -> Result<PcaModel> {
    let d = r.usize()?;
    let k = r.usize()?;
    let var_fraction = r.f64()?;
    let total_variance = r.f64()?;
    let achieved = r.f64()?;
    let mean = Array1::from_vec(r.f64s(d)?);
    let eigenvalues = r.f64s(k)?;
    let comp = r.f64s(k * d)?;
    let components = Array2::from_shape_vec((k, d), comp)
        .map_err(|_| Reader::corrupt("pca component shape"))?;
    r.done()?;
    Ok(PcaModel::from_parts(
        mean,
        components,
        eigenvalues,
        var_fraction,
        total_variance,
        achieved,
    ))
}

fn write_svm(w: &mut Writer, model: &MulticlassSvm) {
    w.u64(model.dim() as u64);
    w.u64(model.machines().len() as u64);
    for machine in model.machines() {
        match machine {
            PairMachine::Trained(svm) => {
                w.u8(0);
                w.u8(svm.class_pair().0);
                w.u8(svm.class_pair().1);
                w.u8(svm.converged() as u8);
                w.f64(svm.gamma());
                w.f64(svm.c());
                w.f64(svm.bias());
                let m = svm.dual_coeffs().len();
                w.u64(m as u64);
                w.f64s(svm.dual_coeffs().iter().copied());
                w.f64s(svm.support_vectors().iter().copied());
            }
            PairMachine::Degenerate { pair, vote_for } => {
                w.u8(1);
                w.u8(pair.0);
                w.u8(pair.1);
                match vote_for {
                    Some(v) => {
                        w.u8(1);
                        w.u8(*v);
                    }
                    None => {
                        w.u8(0);
                        w.u8(0);
                    }
                }
            }
        }
    }
}

fn read_svm(r: &mut Reader<'_>, labels: Vec<u8>) -> Result<MulticlassSvm> {
    let dim = r.usize()?;
    let n_machines = r.usize()?;
    let mut machines = Vec::with_capacity(n_machines);
    for _ in 0..n_machines {
        let tag = r.u8()?;
        let pair = (r.u8()?, r.u8()?);
        match tag {
            0 => {
                let converged = r.u8()? != 0;
                let gamma = r.f64()?;
                let c = r.f64()?;
                let bias = r.f64()?;
                let m = r.usize()?;
                let dual_coeffs = r.f64s(m)?;
                let sv = r.f64s(m * dim)?;
                let support_vectors = Array2::from_shape_vec((m, dim), sv)
                    .map_err(|_| Reader::corrupt("support vector shape"))?;
                machines.push(PairMachine::Trained(BinarySvm {
                    support_vectors,
                    dual_coeffs,
                    bias,
                    gamma,
                    c,
                    class_pair: pair,
                    converged,
                }));
            }
            1 => {
                let present = r.u8()? != 0;
                let vote = r.u8()?;
                machines.push(PairMachine::Degenerate {
                    pair,
                    vote_for: present.then_some(vote),
                });
            }
            other => {
                return Err(Reader::corrupt(&format!("unknown machine tag {other}")));
            }
        }
    }
    r.done()?;
    Ok(MulticlassSvm {
        machines,
        labels,
        dim,
    })
}

fn write_gnb(w: &mut Writer, model: &GnbModel) {
    w.u64(model.dim() as u64);
    w.u64(model.labels().len() as u64);
    w.f64s(model.priors().iter().copied());
    w.f64s(model.means.iter().copied());
    w.f64s(model.variances.iter().copied());
}

fn read_gnb(r: &mut Reader<'_>, labels: Vec<u8>) -> Result<GnbModel> {
    let dim = r.usize()?;
    let n_labels = r.usize()?;
    if n_labels != labels.len() {
        return Err(Reader::corrupt("label count mismatch"));
    }
    let priors = r.f64s(n_labels)?;
    let means = Array2::from_shape_vec((n_labels, dim), r.f64s(n_labels * dim)?)
        .map_err(|_| Reader::corrupt("gnb mean shape"))?;
    let variances = Array2::from_shape_vec((n_labels, dim), r.f64s(n_labels * dim)?)
        .map_err(|_| Reader::corrupt("gnb variance shape"))?;
    r.done()?;
    Ok(GnbModel::from_parts(labels, priors, means, variances))
}

/// Serializes a model to bytes.
pub fn model_to_bytes(model: &SolverModel) -> Vec<u8> {
    let mut out = Writer::new();
    out.0.extend_from_slice(MAGIC);
    out.0.extend_from_slice(&VERSION.to_le_bytes());

    let mut header = Writer::new();
    header.u64(model.feature_cfg_hash);
    header.f64(model.chosen_c);
    match model.chosen_var {
        Some(v) => {
            header.u8(1);
            header.f64(v);
        }
        None => {
            header.u8(0);
            header.f64(0.0);
        }
    }
    header.u8(match model.classifier {
        Classifier::Svm(_) => KIND_SVM,
        Classifier::Gnb(_) => KIND_GNB,
    });
    header.u8(model.pca.is_some() as u8);
    out.section(header);

    let pca = match &model.pca {
        Some(p) => write_pca(p),
        None => Writer::new(),
    };
    out.section(pca);

    let mut machines = Writer::new();
    match &model.classifier {
        Classifier::Svm(m) => write_svm(&mut machines, m),
        Classifier::Gnb(m) => write_gnb(&mut machines, m),
    }
    out.section(machines);

    let mut labels = Writer::new();
    let label_list: &[u8] = match &model.classifier {
        Classifier::Svm(m) => m.labels(),
        Classifier::Gnb(m) => m.labels(),
    };
    labels.u64(label_list.len() as u64);
    for &l in label_list {
        labels.u8(l);
    }
    out.section(labels);

    out.0
}

/// Parses a model from bytes, checking magic, version, and internal
/// consistency (classifier input dimension vs PCA output dimension).
pub fn model_from_bytes(bytes: &[u8]) -> Result<SolverModel> {
    let mut r = Reader::new(bytes);
    let magic = r.take(4)?;
    if magic != MAGIC {
        return Err(Reader::corrupt("bad magic"));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::ModelVersion {
            found: version,
            expected: VERSION,
        });
    }

    let mut header = r.section()?;
    let feature_cfg_hash = header.u64()?;
    let chosen_c = header.f64()?;
    let var_present = header.u8()? != 0;
    let var_value = header.f64()?;
    let kind = header.u8()?;
    let pca_present = header.u8()? != 0;
    header.done()?;

    let mut pca_section = r.section()?;
    let pca = if pca_present {
        Some(read_pca(&mut pca_section)?)
    } else {
        pca_section.done()?;
        None
    };

    let mut machines = r.section()?;
    let mut labels_section = r.section()?;
    r.done()?;

    let n_labels = labels_section.usize()?;
    let labels: Vec<u8> = labels_section.take(n_labels)?.to_vec();
    labels_section.done()?;

    let classifier = match kind {
        KIND_SVM => Classifier::Svm(read_svm(&mut machines, labels)?),
        KIND_GNB => Classifier::Gnb(read_gnb(&mut machines, labels)?),
        other => {
            return Err(Reader::corrupt(&format!("unknown classifier kind {other}")));
        }
    };

    if let Some(pca) = &pca {
        if pca.k() != classifier.dim() {
            return Err(Reader::corrupt("classifier dimension differs from PCA k"));
        }
    }

    Ok(SolverModel {
        pca,
        classifier,
        feature_cfg_hash,
        chosen_c,
        chosen_var: var_present.then_some(var_value),
    })
}

pub fn save_model(model: &SolverModel, path: &Path) -> Result<()> {
    std::fs::write(path, model_to_bytes(model)).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_model(path: &Path) -> Result<SolverModel> {
    let bytes = std::fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    model_from_bytes(&bytes)
}
