//! Native `GSSC` scene files.
//!
//! Layout (little-endian): magic `GSSC`, version u16, P u32, D′ u16, D u16,
//! channel mask u8, then contiguous f32 arrays in Gaussian order: mean (3),
//! scale (3), rotation (4), opacity (1), color (3), followed by the optional
//! channels whose mask bit is set, in bit order.

use super::{Gaussian, GaussianScene};
use crate::error::{Error, Result};

pub(crate) const MAGIC: &[u8; 4] = b"GSSC";
const VERSION: u16 = 1;

const BIT_LOW: u8 = 1 << 0;
const BIT_HIGH: u8 = 1 << 1;
const BIT_TRANSFORMED: u8 = 1 << 2;
const BIT_STYLED: u8 = 1 << 3;

fn put_f32s(out: &mut Vec<u8>, vals: &[f32]) {
    out.reserve(vals.len() * 4);
    for v in vals {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn write_native(scene: &GaussianScene) -> Result<Vec<u8>> {
    let p = scene.len();
    let (d_low, d_high) = scene.feature_dims();
    let to_u16 = |v: usize, what: &str| {
        u16::try_from(v).map_err(|_| Error::Format(format!("{what} {v} exceeds u16")))
    };
    let mut mask = 0u8;
    if scene.low_feat.is_some() {
        mask |= BIT_LOW;
    }
    if scene.high_feat.is_some() {
        mask |= BIT_HIGH;
    }
    if scene.transformed_feat.is_some() {
        mask |= BIT_TRANSFORMED;
    }
    if scene.styled_color.is_some() {
        mask |= BIT_STYLED;
    }

    let mut out = Vec::with_capacity(15 + p * 4 * (14 + d_low + 2 * d_high + 3));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(
        &u32::try_from(p)
            .map_err(|_| Error::Format("too many Gaussians".into()))?
            .to_le_bytes(),
    );
    out.extend_from_slice(&to_u16(d_low, "D′")?.to_le_bytes());
    out.extend_from_slice(&to_u16(d_high, "D")?.to_le_bytes());
    out.push(mask);

    put_f32s(&mut out, scene.means.as_flattened());
    put_f32s(&mut out, scene.scales.as_flattened());
    put_f32s(&mut out, scene.rotations.as_flattened());
    put_f32s(&mut out, &scene.opacities);
    put_f32s(&mut out, scene.colors.as_flattened());
    if let Some(c) = &scene.low_feat {
        put_f32s(&mut out, &c.data);
    }
    if let Some(c) = &scene.high_feat {
        put_f32s(&mut out, &c.data);
    }
    if let Some(c) = &scene.transformed_feat {
        put_f32s(&mut out, &c.data);
    }
    if let Some(c) = &scene.styled_color {
        put_f32s(&mut out, c.as_flattened());
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Parse {
                offset: self.pos as u64,
                msg: format!("truncated while reading {what}"),
            }),
        }
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        let raw = self.take(n * 4, what)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

fn rows<const N: usize>(flat: Vec<f32>) -> Vec<[f32; N]> {
    flat.chunks_exact(N).map(|c| c.try_into().unwrap()).collect()
}

pub fn read_native(bytes: &[u8], name: String) -> Result<GaussianScene> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Parse { offset: 0, msg: "bad magic, expected GSSC".into() });
    }
    let version = r.u16("version")?;
    if version != VERSION {
        return Err(Error::Parse { offset: 4, msg: format!("unsupported version {version}") });
    }
    let p = r.u32("count")? as usize;
    let d_low = r.u16("D′")? as usize;
    let d_high = r.u16("D")? as usize;
    let mask = r.take(1, "channel mask")?[0];
    if mask & !(BIT_LOW | BIT_HIGH | BIT_TRANSFORMED | BIT_STYLED) != 0 {
        return Err(Error::Parse { offset: 16, msg: format!("unknown channel bits {mask:#04x}") });
    }
    if mask & BIT_LOW != 0 && d_low == 0 {
        return Err(Error::Parse { offset: 12, msg: "low_feat present with D′ = 0".into() });
    }
    if mask & (BIT_HIGH | BIT_TRANSFORMED) != 0 && d_high == 0 {
        return Err(Error::Parse { offset: 14, msg: "high features present with D = 0".into() });
    }

    let means = rows::<3>(r.f32s(p * 3, "means")?);
    let scales = rows::<3>(r.f32s(p * 3, "scales")?);
    let rotations = rows::<4>(r.f32s(p * 4, "rotations")?);
    let opacities = r.f32s(p, "opacities")?;
    let colors = rows::<3>(r.f32s(p * 3, "colors")?);
    let gaussians = (0..p)
        .map(|i| Gaussian {
            mean: means[i],
            scale: scales[i],
            rotation: rotations[i],
            opacity: opacities[i],
            color: colors[i],
        })
        .collect();
    let mut scene = GaussianScene::from_validated(name, gaussians)?;

    let check = |what: &str, data: &[f32]| -> Result<()> {
        match data.iter().position(|v| !v.is_finite()) {
            Some(k) => Err(Error::Validation { index: k / (data.len() / p), msg: format!("non-finite {what}") }),
            None => Ok(()),
        }
    };
    if mask & BIT_LOW != 0 {
        let data = r.f32s(p * d_low, "low_feat")?;
        check("low_feat", &data)?;
        scene.set_low_feat(d_low, data)?;
    }
    if mask & BIT_HIGH != 0 {
        let data = r.f32s(p * d_high, "high_feat")?;
        check("high_feat", &data)?;
        scene.set_high_feat(d_high, data)?;
    }
    if mask & BIT_TRANSFORMED != 0 {
        let data = r.f32s(p * d_high, "transformed_feat")?;
        check("transformed_feat", &data)?;
        scene.set_transformed_feat(d_high, data)?;
    }
    if mask & BIT_STYLED != 0 {
        let data = r.f32s(p * 3, "styled_color")?;
        check("styled_color", &data)?;
        scene.set_styled_color(rows::<3>(data))?;
    }
    if r.pos != bytes.len() {
        return Err(Error::Parse {
            offset: r.pos as u64,
            msg: format!("{} trailing bytes", bytes.len() - r.pos),
        });
    }
    Ok(scene)
}
