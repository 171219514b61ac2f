//! Versioned binary container for a trained [`PipelineModel`].
//!
//! Layout: the magic bytes, a `u32` format version, then tagged sections
//! (`[u8; 4]` tag, `u64` byte length, payload). Numbers inside sections are
//! little-endian `f64`; strings are a length followed by UTF-8 bytes.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::anomaly::{AnomalyModel, ClusterLabelModel};
use super::pipeline::{PipelineModel, FORMAT_VERSION};
use super::stack::StackedModel;
use crate::error::{Error, Result};
use crate::features::{FeatureSelection, Kernel, KpcaModel};
use crate::learners::{EnsembleModel, LearnerKind, Node, Tree, Variant};
use crate::matrix::Matrix;
use crate::preprocess::{Distance, KMeansModel, ZScoreScaler};

pub const MAGIC: &[u8; 8] = b"HIDSPIPE";

const SECTIONS: [&[u8; 4]; 6] = [b"SCAL", b"SELE", b"KPCA", b"STAK", b"ANOM", b"REGI"];

#[derive(Default)]
struct Out {
    buf: Vec<u8>,
}

impl Out {
    fn num(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn int(&mut self, v: usize) {
        self.num(v as f64);
    }

    fn nums(&mut self, v: &[f64]) {
        self.int(v.len());
        v.iter().for_each(|&x| self.num(x));
    }

    fn ints(&mut self, v: &[usize]) {
        self.int(v.len());
        v.iter().for_each(|&x| self.int(x));
    }

    fn text(&mut self, s: &str) {
        self.int(s.len());
        self.buf.extend_from_slice(s.as_bytes());
    }

    fn texts(&mut self, v: &[String]) {
        self.int(v.len());
        v.iter().for_each(|s| self.text(s));
    }

    fn matrix(&mut self, m: &Matrix) {
        self.int(m.rows());
        self.int(m.cols());
        m.as_slice().iter().for_each(|&x| self.num(x));
    }
}

struct In<'a> {
    data: &'a [u8],
    pos: usize,
    section: &'static str,
}

fn truncated(what: &str) -> Error {
    Error::Format(format!("truncated {what}"))
}

impl<'a> In<'a> {
    fn new(data: &'a [u8], section: &'static str) -> Self {
        Self {
            data,
            pos: 0,
            section,
        }
    }

    fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.data.len());
        let end = end.ok_or_else(|| truncated(self.section))?;
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn num(&mut self) -> Result<f64> {
        let b = self.bytes(8)?;
        Ok(f64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn int(&mut self) -> Result<usize> {
        let v = self.num()?;
        if !(v >= 0.0 && v.fract() == 0.0 && v < 9.007_199_254_740_992e15) {
            return Err(Error::Format(format!("bad count {v} in {}", self.section)));
        }
        Ok(v as usize)
    }

    /// A count that must fit in the remaining bytes at `unit` bytes each.
    fn len(&mut self, unit: usize) -> Result<usize> {
        let n = self.int()?;
        if n.saturating_mul(unit) > self.data.len() - self.pos {
            return Err(truncated(self.section));
        }
        Ok(n)
    }

    fn nums(&mut self) -> Result<Vec<f64>> {
        let n = self.len(8)?;
        (0..n).map(|_| self.num()).collect()
    }

    fn ints(&mut self) -> Result<Vec<usize>> {
        let n = self.len(8)?;
        (0..n).map(|_| self.int()).collect()
    }

    fn flag(&mut self) -> Result<bool> {
        Ok(self.int()? != 0)
    }

    fn text(&mut self) -> Result<String> {
        let n = self.len(1)?;
        String::from_utf8(self.bytes(n)?.to_vec())
            .map_err(|_| Error::Format(format!("invalid UTF-8 in {}", self.section)))
    }

    fn texts(&mut self) -> Result<Vec<String>> {
        let n = self.len(8)?;
        (0..n).map(|_| self.text()).collect()
    }

    fn matrix(&mut self) -> Result<Matrix> {
        let rows = self.int()?;
        let cols = self.int()?;
        let n = rows
            .checked_mul(cols)
            .filter(|n| n.saturating_mul(8) <= self.data.len() - self.pos)
            .ok_or_else(|| truncated(self.section))?;
        let data = (0..n).map(|_| self.num()).collect::<Result<Vec<_>>>()?;
        Matrix::from_vec(rows, cols, data)
    }
}

fn write_ensemble(o: &mut Out, m: &EnsembleModel) {
    o.int(m.variant.tag() as usize);
    o.int(m.n_classes);
    o.int(m.n_features);
    o.num(m.learning_rate);
    o.nums(&m.init_scores);
    o.nums(&m.loss_trace);
    o.int(m.trees.len());
    for t in &m.trees {
        o.int(t.leaf_width);
        o.int(t.nodes.len());
        for n in &t.nodes {
            match *n {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    o.num(0.0);
                    o.int(feature as usize);
                    o.num(threshold);
                    o.int(left as usize);
                    o.int(right as usize);
                }
                Node::Leaf { offset } => {
                    o.num(1.0);
                    o.int(offset as usize);
                }
            }
        }
        o.nums(&t.values);
    }
}

fn read_u32(i: &mut In, bound: usize, what: &str) -> Result<u32> {
    let v = i.int()?;
    if v >= bound || v > u32::MAX as usize {
        return Err(Error::Format(format!("{what} {v} out of range")));
    }
    Ok(v as u32)
}

fn read_ensemble(i: &mut In) -> Result<EnsembleModel> {
    let tag = i.int()?;
    let variant = u8::try_from(tag)
        .ok()
        .and_then(Variant::from_tag)
        .ok_or_else(|| Error::Format(format!("unknown learner variant {tag}")))?;
    let n_classes = i.int()?;
    let n_features = i.int()?;
    let learning_rate = i.num()?;
    let init_scores = i.nums()?;
    let loss_trace = i.nums()?;
    if n_classes == 0 || (variant == Variant::Boosted && init_scores.len() != n_classes) {
        return Err(Error::Format("inconsistent learner header".into()));
    }
    let n_trees = i.len(16)?;
    let mut trees = Vec::with_capacity(n_trees);
    for _ in 0..n_trees {
        let leaf_width = i.int()?;
        let expected_width = if variant == Variant::Boosted { 1 } else { n_classes };
        if leaf_width != expected_width {
            return Err(Error::Format(format!("leaf width {leaf_width} for {n_classes} classes")));
        }
        let n_nodes = i.len(16)?;
        let mut nodes = Vec::with_capacity(n_nodes);
        let mut leaf_offsets = Vec::new();
        for _ in 0..n_nodes {
            match i.int()? {
                0 => nodes.push(Node::Split {
                    feature: read_u32(i, n_features, "split feature")?,
                    threshold: i.num()?,
                    left: read_u32(i, n_nodes, "child index")?,
                    right: read_u32(i, n_nodes, "child index")?,
                }),
                1 => {
                    let offset = i.int()?;
                    leaf_offsets.push(offset);
                    nodes.push(Node::Leaf {
                        offset: u32::try_from(offset)
                            .map_err(|_| Error::Format("leaf offset too large".into()))?,
                    });
                }
                k => return Err(Error::Format(format!("unknown node kind {k}"))),
            }
        }
        let values = i.nums()?;
        if nodes.is_empty() || leaf_offsets.iter().any(|&o| o + leaf_width > values.len()) {
            return Err(Error::Format("tree leaves point outside their values".into()));
        }
        // children must come after their parent, which rules out cycles
        for (idx, n) in nodes.iter().enumerate() {
            if let Node::Split { left, right, .. } = *n {
                if left as usize <= idx || right as usize <= idx {
                    return Err(Error::Format("tree child precedes its parent".into()));
                }
            }
        }
        trees.push(Tree {
            nodes,
            values,
            leaf_width,
        });
    }
    Ok(EnsembleModel {
        variant,
        n_classes,
        n_features,
        trees,
        init_scores,
        learning_rate,
        loss_trace,
    })
}

fn kind_index(k: LearnerKind) -> usize {
    LearnerKind::ALL.iter().position(|&x| x == k).unwrap_or(0)
}

fn read_kind(i: &mut In) -> Result<LearnerKind> {
    let t = i.int()?;
    LearnerKind::ALL
        .get(t)
        .copied()
        .ok_or_else(|| Error::Format(format!("unknown learner kind {t}")))
}

fn encode_sections(p: &PipelineModel) -> Vec<(&'static [u8; 4], Vec<u8>)> {
    let mut scal = Out::default();
    scal.nums(&p.scaler.means);
    scal.nums(&p.scaler.stds);

    let mut sele = Out::default();
    let s = &p.selection;
    sele.texts(&s.feature_names);
    sele.nums(&s.importances);
    sele.ints(&s.selected);
    sele.num(s.alpha_ig);
    sele.num(s.alpha_su);

    let mut kpca = Out::default();
    let k = &p.kpca;
    match k.kernel {
        Kernel::Rbf { gamma } => [0.0, gamma, 0.0, 0.0],
        Kernel::Poly {
            degree,
            gamma,
            coef0,
        } => [1.0, gamma, degree as f64, coef0],
        Kernel::Linear => [2.0, 0.0, 0.0, 0.0],
    }
    .iter()
    .for_each(|&v| kpca.num(v));
    kpca.matrix(&k.training_rows);
    kpca.matrix(&k.eigenvectors);
    kpca.nums(&k.eigenvalues);
    kpca.nums(&k.row_means);
    kpca.num(k.grand_mean);
    kpca.int(k.p);

    let mut stak = Out::default();
    stak.int(p.stack.meta_probabilities as usize);
    stak.int(kind_index(p.stack.best_base));
    stak.int(p.stack.bases.len());
    p.stack.bases.iter().for_each(|b| write_ensemble(&mut stak, b));
    write_ensemble(&mut stak, &p.stack.meta);

    let mut anom = Out::default();
    let c = &p.anomaly.clusters;
    anom.int(match c.kmeans.distance {
        Distance::Euclidean => 0,
        Distance::Manhattan => 1,
    });
    anom.matrix(&c.kmeans.centroids);
    anom.num(c.kmeans.inertia);
    anom.int(c.kmeans.iterations_run);
    anom.nums(&c.kmeans.objective_trace);
    anom.ints(&c.attack.iter().map(|&a| a as usize).collect::<Vec<_>>());
    anom.nums(&c.purity);
    anom.num(c.p_star);
    anom.int(kind_index(p.anomaly.biased_kind));
    for b in [&p.anomaly.b1, &p.anomaly.b2] {
        anom.int(b.is_some() as usize);
        if let Some(m) = b {
            write_ensemble(&mut anom, m);
        }
    }

    let mut regi = Out::default();
    regi.texts(&p.class_names);
    regi.ints(&p.attack_classes);
    regi.int(p.normal_class);

    vec![
        (SECTIONS[0], scal.buf),
        (SECTIONS[1], sele.buf),
        (SECTIONS[2], kpca.buf),
        (SECTIONS[3], stak.buf),
        (SECTIONS[4], anom.buf),
        (SECTIONS[5], regi.buf),
    ]
}

/// Serializes `p` to bytes.
pub fn pipeline_to_bytes(p: &PipelineModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for (tag, payload) in encode_sections(p) {
        out.extend_from_slice(tag);
        out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
        out.extend_from_slice(&payload);
    }
    out
}

/// Parses a container produced by [`pipeline_to_bytes`].
pub fn pipeline_from_bytes(data: &[u8]) -> Result<PipelineModel> {
    if data.len() < MAGIC.len() + 4 {
        return Err(truncated("header"));
    }
    if &data[..MAGIC.len()] != MAGIC {
        return Err(Error::Format("not a pipeline file (bad magic)".into()));
    }
    let found = u32::from_le_bytes(data[8..12].try_into().expect("4 bytes"));
    if found != FORMAT_VERSION {
        return Err(Error::Version {
            found,
            expected: FORMAT_VERSION,
        });
    }
    let mut sections: HashMap<[u8; 4], &[u8]> = HashMap::new();
    let mut pos = 12;
    while pos < data.len() {
        if data.len() - pos < 12 {
            return Err(truncated("section header"));
        }
        let tag: [u8; 4] = data[pos..pos + 4].try_into().expect("4 bytes");
        let len = u64::from_le_bytes(data[pos + 4..pos + 12].try_into().expect("8 bytes"));
        pos += 12;
        let len = usize::try_from(len)
            .ok()
            .filter(|&l| l <= data.len() - pos)
            .ok_or_else(|| truncated(&String::from_utf8_lossy(&tag)))?;
        sections.insert(tag, &data[pos..pos + len]);
        pos += len;
    }
    let section = |idx: usize, name: &'static str| -> Result<In> {
        sections
            .get(SECTIONS[idx])
            .map(|d| In::new(d, name))
            .ok_or_else(|| Error::Format(format!("missing {name} section")))
    };

    let mut i = section(0, "scaler")?;
    let scaler = ZScoreScaler {
        means: i.nums()?,
        stds: i.nums()?,
    };

    let mut i = section(1, "selection")?;
    let selection = FeatureSelection {
        feature_names: i.texts()?,
        importances: i.nums()?,
        selected: i.ints()?,
        alpha_ig: i.num()?,
        alpha_su: i.num()?,
    };

    let mut i = section(2, "kpca")?;
    let (kt, a, b, c) = (i.int()?, i.num()?, i.num()?, i.num()?);
    let kernel = match kt {
        0 => Kernel::Rbf { gamma: a },
        1 => Kernel::Poly {
            degree: b as u32,
            gamma: a,
            coef0: c,
        },
        2 => Kernel::Linear,
        t => return Err(Error::Format(format!("unknown kernel tag {t}"))),
    };
    let kpca = KpcaModel {
        kernel,
        training_rows: i.matrix()?,
        eigenvectors: i.matrix()?,
        eigenvalues: i.nums()?,
        row_means: i.nums()?,
        grand_mean: i.num()?,
        p: i.int()?,
    };
    let m = kpca.training_rows.rows();
    if kpca.eigenvectors.rows() != m
        || kpca.eigenvectors.cols() != kpca.p
        || kpca.eigenvalues.len() != kpca.p
        || kpca.row_means.len() != m
    {
        return Err(Error::Format("inconsistent KPCA section".into()));
    }

    let mut i = section(3, "stack")?;
    let meta_probabilities = i.flag()?;
    let best_base = read_kind(&mut i)?;
    let n = i.int()?;
    if n != LearnerKind::ALL.len() {
        return Err(Error::Format(format!("stack holds {n} base learners")));
    }
    let bases = (0..n).map(|_| read_ensemble(&mut i)).collect::<Result<Vec<_>>>()?;
    let meta = read_ensemble(&mut i)?;
    let stack = StackedModel {
        bases,
        meta,
        best_base,
        meta_probabilities,
    };
    let c = stack.meta.n_classes;
    let w = stack.bases[0].n_features;
    let meta_width = if meta_probabilities { c * n } else { n };
    if stack.bases.iter().any(|b| b.n_classes != c || b.n_features != w) || stack.meta.n_features != meta_width {
        return Err(Error::Format("inconsistent stack section".into()));
    }

    let mut i = section(4, "anomaly")?;
    let distance = match i.int()? {
        0 => Distance::Euclidean,
        1 => Distance::Manhattan,
        t => return Err(Error::Format(format!("unknown distance tag {t}"))),
    };
    let centroids = i.matrix()?;
    let kmeans = KMeansModel {
        k: centroids.rows(),
        centroids,
        distance,
        inertia: i.num()?,
        iterations_run: i.int()?,
        objective_trace: i.nums()?,
    };
    let attack: Vec<bool> = i.ints()?.into_iter().map(|v| v != 0).collect();
    let purity = i.nums()?;
    let p_star = i.num()?;
    if attack.len() != kmeans.k || purity.len() != kmeans.k || kmeans.k == 0 {
        return Err(Error::Format("inconsistent cluster labels".into()));
    }
    let biased_kind = read_kind(&mut i)?;
    let mut biased = [None, None];
    for slot in &mut biased {
        if i.flag()? {
            let m = read_ensemble(&mut i)?;
            if m.n_classes != 2 || m.n_features != kmeans.centroids.cols() {
                return Err(Error::Format("inconsistent biased classifier".into()));
            }
            *slot = Some(m);
        }
    }
    let [b1, b2] = biased;
    let anomaly = AnomalyModel {
        clusters: ClusterLabelModel {
            kmeans,
            attack,
            purity,
            p_star,
        },
        b1,
        b2,
        biased_kind,
    };

    let mut i = section(5, "registry")?;
    let class_names = i.texts()?;
    let attack_classes = i.ints()?;
    let normal_class = i.int()?;

    let model = PipelineModel {
        version: found,
        scaler,
        selection,
        kpca,
        stack,
        anomaly,
        class_names,
        attack_classes,
        normal_class,
    };
    if model.scaler.stds.len() != model.scaler.width() {
        return Err(Error::Format("inconsistent scaler section".into()));
    }
    model.validate().map_err(|e| match e {
        Error::WidthMismatch { .. } => Error::Format(e.to_string()),
        other => other,
    })?;
    Ok(model)
}

pub fn save_pipeline(p: &PipelineModel, path: &Path) -> Result<()> {
    fs::write(path, pipeline_to_bytes(p)).map_err(|e| Error::io(path, e))
}

pub fn load_pipeline(path: &Path) -> Result<PipelineModel> {
    let data = fs::read(path).map_err(|e| Error::io(path, e))?;
    pipeline_from_bytes(&data)
}
