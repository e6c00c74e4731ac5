//! Flat parameter checkpoints.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic      8 bytes   "SMPOCKPT"
//! version    u32       1
//! spec_hash  u64       FNV-1a of the model description
//! n_shapes   u32
//! shapes     n_shapes × (rank: u32, dims: rank × u64)
//! n_values   u64       must equal the sum of the shape products
//! values     n_values × f64
//! ```

use std::fs;
use std::path::Path;

use super::{Mlp, PolicyFunction};
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"SMPOCKPT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub spec_hash: u64,
    pub shapes: Vec<Vec<usize>>,
    pub values: Vec<f64>,
}

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn describe_net(net: &Mlp) -> String {
    serde_json::to_string(net.spec()).expect("spec serializes")
}

impl Checkpoint {
    pub fn from_mlp(net: &Mlp) -> Self {
        Self {
            spec_hash: fnv1a(describe_net(net).as_bytes()),
            shapes: net.spec().shapes(),
            values: net.params().to_vec(),
        }
    }

    pub fn from_policy(policy: &PolicyFunction) -> Self {
        let desc = format!(
            "{}|{:?}|{:?}",
            describe_net(policy.network()),
            policy.head(),
            policy.action_space()
        );
        let mut shapes = policy.network().spec().shapes();
        let extra = policy.num_params() - policy.network().num_params();
        if extra > 0 {
            shapes.push(vec![extra]);
        }
        Self {
            spec_hash: fnv1a(desc.as_bytes()),
            shapes,
            values: policy.params(),
        }
    }

    /// Copies the stored values into `policy` after checking the description hash.
    pub fn restore_policy(&self, policy: &mut PolicyFunction) -> Result<()> {
        let expected = Checkpoint::from_policy(policy);
        if expected.spec_hash != self.spec_hash || expected.shapes != self.shapes {
            return Err(Error::contract("checkpoint does not match the policy architecture"));
        }
        policy.set_params(&self.values)
    }

    pub fn restore_mlp(&self, net: &mut Mlp) -> Result<()> {
        let expected = Checkpoint::from_mlp(net);
        if expected.spec_hash != self.spec_hash || expected.shapes != self.shapes {
            return Err(Error::contract("checkpoint does not match the network architecture"));
        }
        net.set_params(&self.values)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + 8 * self.values.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.spec_hash.to_le_bytes());
        out.extend_from_slice(&(self.shapes.len() as u32).to_le_bytes());
        for shape in &self.shapes {
            out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
            for &d in shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
        }
        out.extend_from_slice(&(self.values.len() as u64).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err("bad magic".into());
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(format!("unsupported version {version}"));
        }
        let spec_hash = r.u64()?;
        let n_shapes = r.u32()? as usize;
        let mut shapes = Vec::with_capacity(n_shapes.min(1024));
        for _ in 0..n_shapes {
            let rank = r.u32()? as usize;
            shapes.push(
                (0..rank)
                    .map(|_| r.u64().map(|d| d as usize))
                    .collect::<Result<Vec<_>, _>>()?,
            );
        }
        let n = r.u64()? as usize;
        let expected: usize = shapes.iter().map(|s| s.iter().product::<usize>()).sum();
        if n != expected {
            return Err(format!("value count {n} does not match shapes ({expected})"));
        }
        let values = (0..n)
            .map(|_| r.take(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))))
            .collect::<Result<Vec<_>, _>>()?;
        if r.pos != bytes.len() {
            return Err("trailing bytes".into());
        }
        Ok(Self {
            spec_hash,
            shapes,
            values,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos + n;
        let s = self.bytes.get(self.pos..end).ok_or("truncated checkpoint")?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn write_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, ckpt.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes).map_err(|message| Error::Format {
        path: path.to_path_buf(),
        message,
    })
}
