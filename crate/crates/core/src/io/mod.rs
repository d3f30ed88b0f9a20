//! File formats: PFM images for maps, a JSON key-value intrinsics document,
//! and conversions between maps and 32-bit images.
//!
//! Invalid depth pixels are written as `0.0`; invalid normal and point pixels
//! as `(0, 0, 0)`. Reading applies the inverse rule.

pub mod pfm;

use serde_json::Value;

use crate::context::{ContextMap, ScalarGrid};
use crate::error::{Error, PfmError, Result};
use crate::geometry::{DepthMap, Grid, Intrinsics, NormalMap, PointMap, Vec3};

pub use pfm::{read_channels, read_pfm, write_pfm, write_planes, PfmImage};

/// Parses `{"fx": .., "fy": .., "cx": .., "cy": ..}`; other keys are ignored.
pub fn read_intrinsics(text: &str) -> Result<Intrinsics> {
    let doc: Value = serde_json::from_str(text)
        .map_err(|e| Error::Intrinsics(format!("malformed intrinsics document: {e}")))?;
    let obj = doc
        .as_object()
        .ok_or_else(|| Error::Intrinsics("intrinsics document must be an object".into()))?;
    let get = |key: &str| -> Result<f64> {
        let v = obj
            .get(key)
            .ok_or_else(|| Error::Intrinsics(format!("missing key {key}")))?;
        v.as_f64()
            .ok_or_else(|| Error::Intrinsics(format!("key {key} is not numeric")))
    };
    Intrinsics::new(get("fx")?, get("fy")?, get("cx")?, get("cy")?)
}

pub fn write_intrinsics(k: &Intrinsics) -> String {
    serde_json::to_string(k).expect("intrinsics serialize")
}

pub fn depth_to_pfm(depth: &DepthMap) -> PfmImage {
    let data = depth
        .values
        .iter()
        .zip(&depth.valid)
        .map(|(&d, &ok)| if ok { d as f32 } else { 0.0 })
        .collect();
    PfmImage {
        width: depth.width,
        height: depth.height,
        channels: 1,
        data,
    }
}

pub fn depth_from_pfm(img: &PfmImage) -> Result<DepthMap> {
    if img.channels != 1 {
        return Err(PfmError::Channels(img.channels).into());
    }
    DepthMap::from_depths(
        img.width,
        img.height,
        img.data.iter().map(|&v| v as f64).collect(),
    )
}

pub fn vectors_to_pfm(grid: &Grid<Vec3>) -> PfmImage {
    let data = grid
        .values
        .iter()
        .zip(&grid.valid)
        .flat_map(|(v, &ok)| {
            if ok {
                [v.x as f32, v.y as f32, v.z as f32]
            } else {
                [0.0; 3]
            }
        })
        .collect();
    PfmImage {
        width: grid.width,
        height: grid.height,
        channels: 3,
        data,
    }
}

/// Three-channel image to vectors; all-zero pixels are invalid.
pub fn vectors_from_pfm(img: &PfmImage) -> Result<Grid<Vec3>> {
    if img.channels != 3 {
        return Err(PfmError::Channels(img.channels).into());
    }
    let values: Vec<Vec3> = img
        .data
        .chunks_exact(3)
        .map(|c| Vec3::new(c[0] as f64, c[1] as f64, c[2] as f64))
        .collect();
    let valid = values.iter().map(|v| *v != Vec3::zeros()).collect();
    Grid::from_parts(img.width, img.height, values, valid)
}

/// Normals read from file are renormalized to unit length in 64 bits.
pub fn normals_from_pfm(img: &PfmImage) -> Result<NormalMap> {
    let mut g = vectors_from_pfm(img)?;
    for (v, ok) in g.values.iter_mut().zip(&g.valid) {
        if *ok {
            *v = v.normalize();
        }
    }
    Ok(g)
}

pub fn points_to_pfm(pm: &PointMap) -> PfmImage {
    vectors_to_pfm(pm)
}

pub fn scalar_to_pfm(g: &ScalarGrid) -> PfmImage {
    PfmImage {
        width: g.width,
        height: g.height,
        channels: 1,
        data: g.values.iter().map(|&v| v as f32).collect(),
    }
}

pub fn scalar_from_pfm(img: &PfmImage) -> Result<ScalarGrid> {
    if img.channels != 1 {
        return Err(PfmError::Channels(img.channels).into());
    }
    Ok(ScalarGrid {
        width: img.width,
        height: img.height,
        values: img.data.iter().map(|&v| v as f64).collect(),
    })
}

/// `Pf` for one channel, `PF` for three, planar otherwise.
pub fn context_to_bytes(ctx: &ContextMap) -> Result<Vec<u8>> {
    let data: Vec<f32> = ctx.features.iter().map(|&v| v as f32).collect();
    Ok(match ctx.channels {
        1 | 3 => write_pfm(&PfmImage::new(ctx.width, ctx.height, ctx.channels, data)?)?,
        c => {
            let planes: Vec<Vec<f32>> = (0..c)
                .map(|ch| data.iter().skip(ch).step_by(c).copied().collect())
                .collect();
            write_planes(ctx.width, ctx.height, &planes)?
        }
    })
}

pub fn context_from_bytes(bytes: &[u8]) -> Result<ContextMap> {
    let (w, h, c, data) = read_channels(bytes)?;
    ContextMap::new(w, h, c, data.into_iter().map(|v| v as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intrinsics_examples() {
        let k =
            read_intrinsics(r#"{"fx": 100, "fy": 100, "cx": 320, "cy": 240, "model": "pinhole"}"#)
                .unwrap();
        assert_eq!(
            k,
            Intrinsics {
                fx: 100.0,
                fy: 100.0,
                cx: 320.0,
                cy: 240.0
            }
        );
        let e = read_intrinsics(r#"{"fx": 100, "cx": 320, "cy": 240}"#).unwrap_err();
        assert_eq!(e.to_string(), "missing key fy");
        let e = read_intrinsics(r#"{"fx": -1, "fy": 100, "cx": 320, "cy": 240}"#).unwrap_err();
        assert_eq!(e.to_string(), "fx must be positive");
        let e = read_intrinsics(r#"{"fx": "a", "fy": 100, "cx": 320, "cy": 240}"#).unwrap_err();
        assert_eq!(e.to_string(), "key fx is not numeric");
        assert_eq!(read_intrinsics(&write_intrinsics(&k)).unwrap(), k);
    }

    #[test]
    fn depth_mask_survives_roundtrip() {
        let mut d = DepthMap::filled(3, 2, 1.5, true);
        d.valid[4] = false;
        let back =
            depth_from_pfm(&read_pfm(&write_pfm(&depth_to_pfm(&d)).unwrap()).unwrap()).unwrap();
        assert_eq!(back.valid, d.valid);
        assert_eq!(back.values[0], 1.5);
    }

    #[test]
    fn context_channel_layouts() {
        for c in [1, 2, 3, 5] {
            let feats: Vec<f64> = (0..4 * 3 * c).map(|i| i as f64 * 0.5 - 3.0).collect();
            let ctx = ContextMap::new(4, 3, c, feats).unwrap();
            let bytes = context_to_bytes(&ctx).unwrap();
            let magic: &[u8] = match c {
                1 => b"Pf",
                3 => b"PF",
                _ => b"# asn-planes",
            };
            assert!(bytes.starts_with(magic));
            assert_eq!(context_from_bytes(&bytes).unwrap(), ctx);
        }
    }
}
