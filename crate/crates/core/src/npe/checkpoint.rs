//! Binary checkpoint: a header (magic, version, architecture, transform,
//! standardisation constants) followed by little-endian `f64` weights.

use alloc::string::String;
use alloc::vec::Vec;

use super::model::{Network, NpeArch, PosteriorModel, Standardizer};
use crate::error::{Error, Result};
use crate::transform::{Bijection, ParamTransform};

pub const MAGIC: &[u8; 8] = b"BANPECKP";
pub const VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u64(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u64).to_le_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        for x in v {
            self.0.extend_from_slice(&x.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Encoding("checkpoint is truncated".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u64(&mut self) -> Result<usize> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()) as usize)
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
}

pub fn to_bytes(m: &PosteriorModel) -> Vec<u8> {
    let a = &m.arch;
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.0.extend_from_slice(&VERSION.to_le_bytes());
    for v in [a.row_dim, a.cond_dim, a.n_params, a.enc_width, a.summary_dim, a.grouped as usize, a.head_width, a.n_components] {
        w.u64(v);
    }
    w.f64s(&[a.dropout]);
    for name in &m.param_names {
        w.u64(name.len());
        w.0.extend_from_slice(name.as_bytes());
    }
    w.0.extend(m.transform.maps.iter().map(|b| b.code()));
    w.f64s(&m.row_scale.mean);
    w.f64s(&m.row_scale.sd);
    w.f64s(&m.theta_scale.mean);
    w.f64s(&m.theta_scale.sd);
    w.u64(m.weights.len());
    w.f64s(&m.weights);
    w.0
}

pub fn from_bytes(buf: &[u8]) -> Result<PosteriorModel> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Encoding("not a posterior checkpoint (bad magic)".into()));
    }
    let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
    if version != VERSION {
        return Err(Error::Encoding(alloc::format!(
            "checkpoint version {version} is not supported (expected {VERSION})"
        )));
    }
    let mut d = [0usize; 8];
    for v in &mut d {
        *v = r.u64()?;
    }
    let arch = NpeArch {
        row_dim: d[0],
        cond_dim: d[1],
        n_params: d[2],
        enc_width: d[3],
        summary_dim: d[4],
        grouped: d[5] != 0,
        head_width: d[6],
        n_components: d[7],
        dropout: r.f64()?,
    };
    arch.validate()?;
    let mut names = Vec::with_capacity(arch.n_params);
    for _ in 0..arch.n_params {
        let n = r.u64()?;
        let s = core::str::from_utf8(r.take(n)?).map_err(|_| Error::Encoding("parameter name is not UTF-8".into()))?;
        names.push(String::from(s));
    }
    let maps = r
        .take(arch.n_params)?
        .iter()
        .map(|&c| Bijection::from_code(c).ok_or_else(|| Error::Encoding(alloc::format!("unknown transform code {c}"))))
        .collect::<Result<Vec<_>>>()?;
    let row_scale = Standardizer {
        mean: r.f64s(arch.row_dim)?,
        sd: r.f64s(arch.row_dim)?,
    };
    let theta_scale = Standardizer {
        mean: r.f64s(arch.n_params)?,
        sd: r.f64s(arch.n_params)?,
    };
    let n = r.u64()?;
    let expected = Network::new(&arch).n_weights;
    if n != expected {
        return Err(Error::Encoding(alloc::format!(
            "checkpoint holds {n} weights, the declared architecture needs {expected}"
        )));
    }
    let weights = r.f64s(n)?;
    if r.pos != buf.len() {
        return Err(Error::Encoding("trailing bytes after checkpoint weights".into()));
    }
    Ok(PosteriorModel {
        arch,
        param_names: names,
        transform: ParamTransform::new(maps),
        row_scale,
        theta_scale,
        weights,
    })
}
