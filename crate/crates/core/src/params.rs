//! Parameter traversal and the versioned binary parameter container.
//!
//! Every trainable structure exposes its tensors by dotted path
//! (`encoder.0.conv.w_re`, `datrnn.1.intra.lstm.fwd.w_ih`, ...). Gradients are
//! stored in a structure of the same type, so optimizers and gradient checks
//! can walk parameters and gradients in lockstep through flat vectors.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array, Dimension};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type VisitFn<'a> = dyn FnMut(&str, &[f64], &[usize]) + 'a;
pub type VisitMutFn<'a> = dyn FnMut(&str, &mut [f64], &[usize]) + 'a;

pub trait Parameters {
    fn visit(&self, prefix: &str, f: &mut VisitFn<'_>);
    fn visit_mut(&mut self, prefix: &str, f: &mut VisitMutFn<'_>);

    fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, v, _| n += v.len());
        n
    }

    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        self.visit("", &mut |_, v, _| out.extend_from_slice(v));
        out
    }

    fn set_flat(&mut self, flat: &[f64]) {
        let mut offset = 0;
        self.visit_mut("", &mut |_, v, _| {
            v.copy_from_slice(&flat[offset..offset + v.len()]);
            offset += v.len();
        });
        assert_eq!(offset, flat.len(), "flat vector length mismatch");
    }

    fn fill(&mut self, value: f64) {
        self.visit_mut("", &mut |_, v, _| v.iter_mut().for_each(|x| *x = value));
    }

    fn zeros_like(&self) -> Self
    where
        Self: Clone + Sized,
    {
        let mut z = self.clone();
        z.fill(0.0);
        z
    }

    /// `(path, element count)` for every tensor, in traversal order.
    fn tensor_sizes(&self) -> Vec<(String, usize)> {
        let mut out = Vec::new();
        self.visit("", &mut |name, v, _| out.push((name.to_string(), v.len())));
        out
    }
}

pub fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

pub fn visit_array<D: Dimension>(prefix: &str, name: &str, a: &Array<f64, D>, f: &mut VisitFn<'_>) {
    let slice = a.as_slice().expect("parameter arrays are kept in standard layout");
    f(&join(prefix, name), slice, a.shape());
}

pub fn visit_array_mut<D: Dimension>(prefix: &str, name: &str, a: &mut Array<f64, D>, f: &mut VisitMutFn<'_>) {
    let shape = a.shape().to_vec();
    let slice = a.as_slice_mut().expect("parameter arrays are kept in standard layout");
    f(&join(prefix, name), slice, &shape);
}

pub(crate) fn uniform<D: Dimension, Sh: ndarray::ShapeBuilder<Dim = D>>(
    shape: Sh,
    bound: f64,
    rng: &mut impl Rng,
) -> Array<f64, D> {
    Array::from_shape_simple_fn(shape, || rng.gen_range(-bound..=bound))
}

/// Implements [`Parameters`] for a struct from a list of named array fields
/// and nested parameter fields.
#[macro_export]
macro_rules! impl_parameters {
    ($ty:ty { $($arr:ident),* $(,)? } $(nested { $($sub:ident),* $(,)? })?) => {
        impl $crate::params::Parameters for $ty {
            fn visit(&self, prefix: &str, f: &mut $crate::params::VisitFn<'_>) {
                $( $crate::params::visit_array(prefix, stringify!($arr), &self.$arr, f); )*
                $($( self.$sub.visit(&$crate::params::join(prefix, stringify!($sub)), f); )*)?
            }
            fn visit_mut(&mut self, prefix: &str, f: &mut $crate::params::VisitMutFn<'_>) {
                $( $crate::params::visit_array_mut(prefix, stringify!($arr), &mut self.$arr, f); )*
                $($( self.$sub.visit_mut(&$crate::params::join(prefix, stringify!($sub)), f); )*)?
            }
        }
    };
}

impl<T: Parameters> Parameters for Vec<T> {
    fn visit(&self, prefix: &str, f: &mut VisitFn<'_>) {
        for (i, p) in self.iter().enumerate() {
            p.visit(&join(prefix, &i.to_string()), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut VisitMutFn<'_>) {
        for (i, p) in self.iter_mut().enumerate() {
            p.visit_mut(&join(prefix, &i.to_string()), f);
        }
    }
}

impl<T: Parameters> Parameters for Option<T> {
    fn visit(&self, prefix: &str, f: &mut VisitFn<'_>) {
        if let Some(p) = self {
            p.visit(prefix, f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut VisitMutFn<'_>) {
        if let Some(p) = self {
            p.visit_mut(prefix, f);
        }
    }
}

/// Bare arrays are parameter sets too, which lets gradient checks treat
/// layer inputs and layer parameters uniformly.
impl<D: Dimension> Parameters for Array<f64, D> {
    fn visit(&self, prefix: &str, f: &mut VisitFn<'_>) {
        let slice = self.as_slice().expect("standard layout");
        f(prefix, slice, self.shape());
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut VisitMutFn<'_>) {
        let shape = self.shape().to_vec();
        let slice = self.as_slice_mut().expect("standard layout");
        f(prefix, slice, &shape);
    }
}

const MAGIC: &[u8; 4] = b"DNPC";
pub const CONTAINER_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
struct EntryHeader {
    name: String,
    shape: Vec<usize>,
    offset: usize,
    len: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ContainerHeader {
    version: u32,
    meta: serde_json::Value,
    entries: Vec<EntryHeader>,
}

/// Named flat map of tensors plus free-form JSON metadata.
///
/// On disk: `DNPC`, u32 version, u32 header length, JSON header, then the
/// concatenated little-endian f64 payload.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamContainer {
    pub meta: serde_json::Value,
    pub tensors: Vec<NamedTensor>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl ParamContainer {
    pub fn new(meta: serde_json::Value) -> Self {
        Self {
            meta,
            tensors: Vec::new(),
        }
    }

    pub fn from_params(meta: serde_json::Value, p: &impl Parameters, prefix: &str) -> Self {
        let mut c = Self::new(meta);
        c.push_params(p, prefix);
        c
    }

    pub fn push_params(&mut self, p: &impl Parameters, prefix: &str) {
        p.visit(prefix, &mut |name, v, shape| {
            self.tensors.push(NamedTensor {
                name: name.to_string(),
                shape: shape.to_vec(),
                data: v.to_vec(),
            })
        });
    }

    pub fn get(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    /// Copies every tensor under `prefix` into `p`, checking names and shapes.
    pub fn load_into(&self, p: &mut impl Parameters, prefix: &str) -> Result<()> {
        let index: std::collections::HashMap<&str, &NamedTensor> =
            self.tensors.iter().map(|t| (t.name.as_str(), t)).collect();
        let mut err = None;
        p.visit_mut(prefix, &mut |name, v, shape| {
            if err.is_some() {
                return;
            }
            match index.get(name) {
                None => err = Some(Error::Format(format!("missing tensor '{name}'"))),
                Some(t) if t.shape != shape => {
                    err = Some(Error::Format(format!(
                        "tensor '{name}' has shape {:?}, expected {shape:?}",
                        t.shape
                    )))
                }
                Some(t) => v.copy_from_slice(&t.data),
            }
        });
        err.map_or(Ok(()), Err)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut offset = 0;
        let entries = self
            .tensors
            .iter()
            .map(|t| {
                let e = EntryHeader {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                    offset,
                    len: t.data.len(),
                };
                offset += t.data.len();
                e
            })
            .collect();
        let header = serde_json::to_vec(&ContainerHeader {
            version: CONTAINER_VERSION,
            meta: self.meta.clone(),
            entries,
        })?;
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(CONTAINER_VERSION)?;
        w.write_u32::<LittleEndian>(header.len() as u32)?;
        w.write_all(&header)?;
        for t in &self.tensors {
            for v in &t.data {
                w.write_f64::<LittleEndian>(*v)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a parameter container".into()));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != CONTAINER_VERSION {
            return Err(Error::Format(format!("unsupported container version {version}")));
        }
        let header_len = r.read_u32::<LittleEndian>()? as usize;
        let mut header = vec![0u8; header_len];
        r.read_exact(&mut header)?;
        let header: ContainerHeader = serde_json::from_slice(&header)?;
        let mut tensors = Vec::with_capacity(header.entries.len());
        for e in header.entries {
            if e.shape.iter().product::<usize>() != e.len {
                return Err(Error::Format(format!("tensor '{}' shape/length mismatch", e.name)));
            }
            let mut data = vec![0.0; e.len];
            r.read_f64_into::<LittleEndian>(&mut data)?;
            tensors.push(NamedTensor {
                name: e.name,
                shape: e.shape,
                data,
            });
        }
        Ok(Self {
            meta: header.meta,
            tensors,
        })
    }
}
