//! Run-length masks: alternating run lengths over row-major pixels, starting
//! with a (possibly empty) bg run, as little-endian `u32`s in base64.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use robotseg_core::grid::{Grid, Label, LabelMap};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RleMask {
    pub width: usize,
    pub height: usize,
    pub rle: String,
}

pub fn runs(m: &LabelMap) -> Vec<u32> {
    let mut out = Vec::new();
    let mut current = Label::Bg;
    let mut len = 0u32;
    for &l in m.as_slice() {
        if l == current {
            len += 1;
        } else {
            out.push(len);
            current = l;
            len = 1;
        }
    }
    out.push(len);
    out
}

pub fn encode(m: &LabelMap) -> RleMask {
    let bytes: Vec<u8> = runs(m).iter().flat_map(|r| r.to_le_bytes()).collect();
    RleMask {
        width: m.width(),
        height: m.height(),
        rle: STANDARD.encode(bytes),
    }
}

pub fn decode(mask: &RleMask) -> Result<LabelMap, String> {
    let bytes = STANDARD.decode(&mask.rle).map_err(|e| e.to_string())?;
    if bytes.len() % 4 != 0 {
        return Err("run data is not a whole number of u32 values".into());
    }
    let mut labels = Vec::with_capacity(mask.width * mask.height);
    let mut current = Label::Bg;
    for chunk in bytes.chunks_exact(4) {
        let n = u32::from_le_bytes(chunk.try_into().expect("4 bytes")) as usize;
        labels.extend(std::iter::repeat_n(current, n));
        current = current.flip();
    }
    Grid::from_vec(mask.width, mask.height, labels).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let m: LabelMap = Grid::from_fn(5, 3, |p| Label::from_bool((p.x + p.y) % 3 == 0));
        assert_eq!(decode(&encode(&m)).unwrap(), m);
        let fg: LabelMap = Grid::filled(4, 4, Label::Fg);
        assert_eq!(runs(&fg), vec![0, 16]);
        assert_eq!(decode(&encode(&fg)).unwrap(), fg);
    }

    #[test]
    fn wrong_length_is_rejected() {
        let m: LabelMap = Grid::filled(2, 2, Label::Bg);
        let mut e = encode(&m);
        e.width = 3;
        assert!(decode(&e).is_err());
    }
}
