//! Binary checkpoint format.
//!
//! ```text
//! TRAILCKPT1\n
//! sizes=<in>,<h1>,...,<out>\n
//! head=categorical|mixture\n
//! k=<modes or actions>\n
//! d=<mixture dim, 0 for categorical>\n
//! params=<count>\n
//! end\n
//! <count little-endian f64 values, layer order>
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::dense::{param_count, DenseNet};

pub const MAGIC: &str = "TRAILCKPT1";

/// Upper bound on any single layer width accepted by the decoder.
const MAX_WIDTH: usize = 1 << 20;
const MAX_HEADER_LINES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadKind {
    Categorical { n_actions: usize },
    Mixture { k: usize, dim: usize },
}

impl HeadKind {
    pub fn out_dim(&self) -> usize {
        match *self {
            HeadKind::Categorical { n_actions } => n_actions,
            HeadKind::Mixture { k, dim } => k * (1 + 2 * dim),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub head: HeadKind,
    pub net: DenseNet,
}

impl Checkpoint {
    pub fn encode(&self) -> Vec<u8> {
        let sizes = self
            .net
            .sizes()
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join(",");
        let (kind, k, d) = match self.head {
            HeadKind::Categorical { n_actions } => ("categorical", n_actions, 0),
            HeadKind::Mixture { k, dim } => ("mixture", k, dim),
        };
        let header = format!(
            "{MAGIC}\nsizes={sizes}\nhead={kind}\nk={k}\nd={d}\nparams={}\nend\n",
            self.net.num_params()
        );
        let mut out = header.into_bytes();
        out.reserve(self.net.num_params() * 8);
        for p in self.net.params() {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| Error::Checkpoint(msg.to_string());
        let mut rest = bytes;
        let next_line = |rest: &mut &[u8]| -> Result<String> {
            let nl = rest
                .iter()
                .take(256)
                .position(|b| *b == b'\n')
                .ok_or_else(|| bad("truncated header"))?;
            let line = std::str::from_utf8(&rest[..nl]).map_err(|_| bad("header is not utf-8"))?;
            let line = line.to_string();
            *rest = &rest[nl + 1..];
            Ok(line)
        };

        if next_line(&mut rest)? != MAGIC {
            return Err(bad("bad magic"));
        }
        let mut sizes = None;
        let mut kind = None;
        let mut k = None;
        let mut d = None;
        let mut count = None;
        let mut terminated = false;
        for _ in 0..MAX_HEADER_LINES {
            let line = next_line(&mut rest)?;
            if line == "end" {
                terminated = true;
                break;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| bad("malformed header line"))?;
            let num = |v: &str| v.parse::<usize>().map_err(|_| bad("invalid integer in header"));
            match key {
                "sizes" => {
                    let parsed = value.split(',').map(num).collect::<Result<Vec<_>>>()?;
                    sizes = Some(parsed);
                }
                "head" => kind = Some(value.to_string()),
                "k" => k = Some(num(value)?),
                "d" => d = Some(num(value)?),
                "params" => count = Some(num(value)?),
                _ => return Err(bad("unknown header key")),
            }
        }
        if !terminated {
            return Err(bad("header not terminated"));
        }
        let sizes = sizes.ok_or_else(|| bad("missing sizes"))?;
        let (k, d, count) = (
            k.ok_or_else(|| bad("missing k"))?,
            d.ok_or_else(|| bad("missing d"))?,
            count.ok_or_else(|| bad("missing params"))?,
        );
        if sizes.len() < 2 || sizes.iter().any(|s| *s == 0 || *s > MAX_WIDTH) {
            return Err(bad("invalid layer sizes"));
        }
        let head = match kind.as_deref() {
            Some("categorical") if d == 0 && k >= 2 => HeadKind::Categorical { n_actions: k },
            Some("mixture") if k >= 1 && d >= 1 && k <= MAX_WIDTH && d <= MAX_WIDTH => HeadKind::Mixture { k, dim: d },
            _ => return Err(bad("invalid head description")),
        };
        if head.out_dim() != *sizes.last().unwrap() {
            return Err(bad("head does not match output width"));
        }
        // widths are bounded, so the product cannot overflow on 64-bit targets
        if param_count(&sizes) != count {
            return Err(bad("parameter count does not match layer sizes"));
        }
        if rest.len() != count.saturating_mul(8) {
            return Err(bad("parameter payload has wrong length"));
        }
        let params = rest
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Checkpoint {
            head,
            net: DenseNet::from_params(&sizes, params)?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> Checkpoint {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        Checkpoint {
            head: HeadKind::Mixture { k: 2, dim: 2 },
            net: DenseNet::new(&[5, 8, 8, 10], &mut rng).unwrap(),
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ckpt = sample();
        let back = Checkpoint::decode(&ckpt.encode()).unwrap();
        assert_eq!(back.head, ckpt.head);
        let a: Vec<u64> = ckpt.net.params().iter().map(|p| p.to_bits()).collect();
        let b: Vec<u64> = back.net.params().iter().map(|p| p.to_bits()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn corrupted_magic_is_rejected() {
        let mut bytes = sample().encode();
        bytes[0] = b'X';
        assert!(Checkpoint::decode(&bytes).unwrap_err().to_string().contains("magic"));
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let bytes = sample().encode();
        assert!(Checkpoint::decode(&bytes[..bytes.len() - 3]).is_err());
    }

    #[test]
    fn head_width_must_match() {
        let text = format!("{MAGIC}\nsizes=2,3\nhead=categorical\nk=4\nd=0\nparams=9\nend\n");
        let mut bytes = text.into_bytes();
        bytes.extend(std::iter::repeat_n(0u8, 72));
        assert!(Checkpoint::decode(&bytes).is_err());
    }
}
