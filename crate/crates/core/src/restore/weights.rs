//! EDSW1 weight files.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "EDSW"  u32 version=1  u32 n_blocks  u32 channels  f32 residual_scale  f32 radiometric_max
//! tensors, each: u32 rank, u32 dims[rank], f32 data[prod(dims)]
//!   head.weight [C,1,3,3]  head.bias [C]
//!   per block: conv1.weight [C,C,3,3] conv1.bias [C] conv2.weight [C,C,3,3] conv2.bias [C]
//!   tail.weight [1,C,3,3]  tail.bias [1]
//! u32 CRC-32 (IEEE) of every preceding byte
//! ```
//!
//! Convolution weights are stored out-channel-major, then in-channel, ky, kx.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::{stream_from_label, Rng};

pub const MAGIC: &[u8; 4] = b"EDSW";
pub const VERSION: u32 = 1;

/// 3×3 convolution, weights indexed `[out][in][ky][kx]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv3x3 {
    pub out_channels: usize,
    pub in_channels: usize,
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

impl Conv3x3 {
    pub fn zeros(out_channels: usize, in_channels: usize) -> Self {
        Conv3x3 {
            out_channels,
            in_channels,
            weight: vec![0.0; out_channels * in_channels * 9],
            bias: vec![0.0; out_channels],
        }
    }

    #[inline]
    pub fn w(&self, o: usize, i: usize, ky: usize, kx: usize) -> f32 {
        self.weight[((o * self.in_channels + i) * 3 + ky) * 3 + kx]
    }

    pub fn w_mut(&mut self, o: usize, i: usize, ky: usize, kx: usize) -> &mut f32 {
        &mut self.weight[((o * self.in_channels + i) * 3 + ky) * 3 + kx]
    }

    fn check(&self, name: &str, out_c: usize, in_c: usize) -> Result<()> {
        if self.out_channels != out_c
            || self.in_channels != in_c
            || self.weight.len() != out_c * in_c * 9
            || self.bias.len() != out_c
        {
            return Err(Error::WeightFile(format!(
                "{name}: expected [{out_c},{in_c},3,3] + [{out_c}], got [{},{},3,3] ({} values) + {} biases",
                self.out_channels,
                self.in_channels,
                self.weight.len(),
                self.bias.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResBlock {
    pub conv1: Conv3x3,
    pub conv2: Conv3x3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdsrWeights {
    pub n_blocks: usize,
    pub channels: usize,
    pub residual_scale: f32,
    /// Inputs are divided by this before the network and outputs multiplied back.
    pub radiometric_max: f32,
    pub head: Conv3x3,
    pub blocks: Vec<ResBlock>,
    pub tail: Conv3x3,
}

impl EdsrWeights {
    /// All-zero network of the given shape.
    pub fn zeros(n_blocks: usize, channels: usize, residual_scale: f32, radiometric_max: f32) -> Self {
        EdsrWeights {
            n_blocks,
            channels,
            residual_scale,
            radiometric_max,
            head: Conv3x3::zeros(channels, 1),
            blocks: (0..n_blocks)
                .map(|_| ResBlock {
                    conv1: Conv3x3::zeros(channels, channels),
                    conv2: Conv3x3::zeros(channels, channels),
                })
                .collect(),
            tail: Conv3x3::zeros(1, channels),
        }
    }

    /// Uniform `±1/sqrt(fan_in)` initialisation from a seeded stream.
    pub fn random(seed: u64, n_blocks: usize, channels: usize) -> Self {
        let mut rng = Rng::new(seed, stream_from_label("edsr-init"));
        let mut w = EdsrWeights::zeros(n_blocks, channels, 0.1, 1000.0);
        let mut fill = |c: &mut Conv3x3| {
            let bound = 1.0 / ((c.in_channels * 9) as f64).sqrt();
            for v in c.weight.iter_mut().chain(c.bias.iter_mut()) {
                *v = rng.uniform(-bound, bound) as f32;
            }
        };
        fill(&mut w.head);
        for b in &mut w.blocks {
            fill(&mut b.conv1);
            fill(&mut b.conv2);
        }
        fill(&mut w.tail);
        w
    }

    pub fn parameter_count(&self) -> usize {
        let conv = |c: &Conv3x3| c.weight.len() + c.bias.len();
        conv(&self.head)
            + conv(&self.tail)
            + self
                .blocks
                .iter()
                .map(|b| conv(&b.conv1) + conv(&b.conv2))
                .sum::<usize>()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_blocks == 0 || self.channels == 0 {
            return Err(Error::WeightFile(format!(
                "n_blocks {} and channels {} must be >= 1",
                self.n_blocks, self.channels
            )));
        }
        if !(self.radiometric_max > 0.0 && self.radiometric_max.is_finite()) {
            return Err(Error::WeightFile(format!(
                "radiometric_max {} must be > 0",
                self.radiometric_max
            )));
        }
        if !self.residual_scale.is_finite() {
            return Err(Error::WeightFile("residual_scale is not finite".into()));
        }
        if self.blocks.len() != self.n_blocks {
            return Err(Error::WeightFile(format!(
                "{} blocks present, header says {}",
                self.blocks.len(),
                self.n_blocks
            )));
        }
        let c = self.channels;
        self.head.check("head", c, 1)?;
        for (i, b) in self.blocks.iter().enumerate() {
            b.conv1.check(&format!("block{i}.conv1"), c, c)?;
            b.conv2.check(&format!("block{i}.conv2"), c, c)?;
        }
        self.tail.check("tail", 1, c)?;
        Ok(())
    }

    /// Convolutions in file order.
    fn convs(&self) -> Vec<&Conv3x3> {
        let mut v = vec![&self.head];
        for b in &self.blocks {
            v.push(&b.conv1);
            v.push(&b.conv2);
        }
        v.push(&self.tail);
        v
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let mut out = Vec::with_capacity(24 + self.parameter_count() * 4 + 64 * self.n_blocks);
        out.extend_from_slice(MAGIC);
        for v in [VERSION, self.n_blocks as u32, self.channels as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.residual_scale.to_le_bytes());
        out.extend_from_slice(&self.radiometric_max.to_le_bytes());
        for conv in self.convs() {
            let dims = [conv.out_channels, conv.in_channels, 3, 3];
            write_tensor(&mut out, &dims, &conv.weight);
            write_tensor(&mut out, &[conv.out_channels], &conv.bias);
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut rd = Reader { bytes, pos: 0 };
        if rd.take(4)? != MAGIC {
            return Err(Error::WeightFile("bad magic, expected \"EDSW\"".into()));
        }
        let version = rd.u32()?;
        if version != VERSION {
            return Err(Error::WeightFile(format!("unsupported version {version}")));
        }
        let n_blocks = rd.u32()? as usize;
        let channels = rd.u32()? as usize;
        let residual_scale = rd.f32()?;
        let radiometric_max = rd.f32()?;
        if n_blocks == 0 || channels == 0 || n_blocks > 4096 || channels > 4096 {
            return Err(Error::WeightFile(format!(
                "implausible shape: {n_blocks} blocks x {channels} channels"
            )));
        }
        let mut read_conv = |name: &str, out_c: usize, in_c: usize| -> Result<Conv3x3> {
            let weight = rd.tensor(&format!("{name}.weight"), &[out_c, in_c, 3, 3])?;
            let bias = rd.tensor(&format!("{name}.bias"), &[out_c])?;
            Ok(Conv3x3 {
                out_channels: out_c,
                in_channels: in_c,
                weight,
                bias,
            })
        };
        let head = read_conv("head", channels, 1)?;
        let mut blocks = Vec::with_capacity(n_blocks);
        for i in 0..n_blocks {
            let conv1 = read_conv(&format!("block{i}.conv1"), channels, channels)?;
            let conv2 = read_conv(&format!("block{i}.conv2"), channels, channels)?;
            blocks.push(ResBlock { conv1, conv2 });
        }
        let tail = read_conv("tail", 1, channels)?;
        let body_len = rd.pos;
        let stored = rd.u32()?;
        if rd.pos != bytes.len() {
            return Err(Error::WeightFile(format!(
                "{} trailing bytes after checksum",
                bytes.len() - rd.pos
            )));
        }
        let actual = crc32fast::hash(&bytes[..body_len]);
        if stored != actual {
            return Err(Error::WeightFile(format!(
                "checksum mismatch: stored {stored:08x}, computed {actual:08x}"
            )));
        }
        let w = EdsrWeights {
            n_blocks,
            channels,
            residual_scale,
            radiometric_max,
            head,
            blocks,
            tail,
        };
        w.validate()?;
        Ok(w)
    }
}

fn write_tensor(out: &mut Vec<u8>, dims: &[usize], data: &[f32]) {
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for d in dims {
        out.extend_from_slice(&(*d as u32).to_le_bytes());
    }
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                Error::WeightFile(format!("unexpected end of file at byte {}", self.pos))
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_bits(self.u32()?))
    }

    fn tensor(&mut self, name: &str, expect: &[usize]) -> Result<Vec<f32>> {
        let rank = self.u32()? as usize;
        if rank != expect.len() {
            return Err(Error::WeightFile(format!(
                "{name}: rank {rank}, expected {}",
                expect.len()
            )));
        }
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(self.u32()? as usize);
        }
        if dims != expect {
            return Err(Error::WeightFile(format!(
                "{name}: shape {dims:?}, expected {expect:?}"
            )));
        }
        let n: usize = dims.iter().product();
        let raw = self.take(n * 4)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }
}

pub fn save_weights(w: &EdsrWeights, path: &Path) -> Result<()> {
    let bytes = w.to_bytes()?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_weights(path: &Path) -> Result<EdsrWeights> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    EdsrWeights::from_bytes(&bytes)
}
