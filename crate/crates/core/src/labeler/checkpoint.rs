//! Versioned binary checkpoints. Little-endian throughout; writing the
//! same parameters always produces the same bytes.
//!
//! Layout: 8-byte magic, u32 version, u64 seed, model config, vocabulary
//! (length-prefixed UTF-8 tokens), then every tensor in the fixed order
//! as (rows, cols, rows*cols f64 values).

use std::fs;
use std::path::Path;

use super::net::NetTensors;
use super::vocab::Vocab;
use super::{EncoderConfig, LabelerError, ModelConfig, ModelParams, Pooling};

const MAGIC: &[u8; 8] = b"CXRLNETB";
const VERSION: u32 = 1;

fn corrupt(msg: impl Into<String>) -> LabelerError {
    LabelerError::Checkpoint { msg: msg.into() }
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], LabelerError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.data.len())
            .ok_or_else(|| corrupt(format!("truncated at byte {}", self.pos)))?;
        let out = &self.data[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, LabelerError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, LabelerError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, LabelerError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, LabelerError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn at_end(&self) -> bool {
        self.pos == self.data.len()
    }
}

fn push_tensor(out: &mut Vec<u8>, rows: usize, cols: usize, data: &[f64]) {
    out.extend_from_slice(&(rows as u32).to_le_bytes());
    out.extend_from_slice(&(cols as u32).to_le_bytes());
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Serialize parameters to the checkpoint byte format.
pub fn checkpoint_bytes(params: &ModelParams) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&params.seed.to_le_bytes());
    let cfg = &params.config;
    out.extend_from_slice(&(cfg.encoder.embedding_dim as u32).to_le_bytes());
    out.extend_from_slice(&(cfg.encoder.max_seq_len as u32).to_le_bytes());
    out.push(match cfg.encoder.pooling {
        Pooling::Mean => 0,
        Pooling::SingleAttention => 1,
    });
    out.extend_from_slice(&cfg.encoder.dropout_rate.to_le_bytes());
    out.push(cfg.use_dual_encoder as u8);
    out.extend_from_slice(&cfg.threshold.to_le_bytes());
    let tokens = params.vocab.tokens();
    out.extend_from_slice(&(tokens.len() as u32).to_le_bytes());
    for token in tokens {
        out.extend_from_slice(&(token.len() as u32).to_le_bytes());
        out.extend_from_slice(token.as_bytes());
    }
    let net = &params.net;
    let shaped: Vec<(usize, usize, &[f64])> = {
        let mut v: Vec<(usize, usize, &[f64])> =
            vec![(net.emb_a.rows, net.emb_a.cols, &net.emb_a.data)];
        if let Some(a) = &net.attn_a {
            for t in [&a.w_q, &a.w_k, &a.w_v] {
                v.push((t.rows, t.cols, &t.data));
            }
        }
        v.push((net.emb_b.rows, net.emb_b.cols, &net.emb_b.data));
        if let Some(a) = &net.attn_b {
            for t in [&a.w_q, &a.w_k, &a.w_v] {
                v.push((t.rows, t.cols, &t.data));
            }
        }
        for t in [&net.head_a_w, &net.head_a_b, &net.head_b_w, &net.head_b_b] {
            v.push((t.rows, t.cols, &t.data));
        }
        v
    };
    out.extend_from_slice(&(shaped.len() as u32).to_le_bytes());
    for (rows, cols, data) in shaped {
        push_tensor(&mut out, rows, cols, data);
    }
    out
}

pub fn save_checkpoint(params: &ModelParams, path: impl AsRef<Path>) -> Result<(), LabelerError> {
    fs::write(path, checkpoint_bytes(params))?;
    Ok(())
}

/// Parse checkpoint bytes back into parameters.
pub fn parse_checkpoint(bytes: &[u8]) -> Result<ModelParams, LabelerError> {
    let mut r = Reader {
        data: bytes,
        pos: 0,
    };
    let magic = r.take(8)?;
    if magic != MAGIC {
        return Err(corrupt(format!("bad magic {magic:02x?}")));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(corrupt(format!(
            "unsupported version {version} (expected {VERSION})"
        )));
    }
    let seed = r.u64()?;
    let embedding_dim = r.u32()? as usize;
    let max_seq_len = r.u32()? as usize;
    let pooling = match r.u8()? {
        0 => Pooling::Mean,
        1 => Pooling::SingleAttention,
        other => return Err(corrupt(format!("unknown pooling code {other}"))),
    };
    let dropout_rate = r.f64()?;
    let use_dual_encoder = match r.u8()? {
        0 => false,
        1 => true,
        other => return Err(corrupt(format!("bad dual-encoder flag {other}"))),
    };
    let threshold = r.f64()?;
    let config = ModelConfig {
        encoder: EncoderConfig {
            embedding_dim,
            max_seq_len,
            pooling,
            dropout_rate,
        },
        use_dual_encoder,
        threshold,
    };
    config
        .encoder
        .validate()
        .map_err(|e| corrupt(format!("invalid stored config: {e}")))?;
    if !(0.0..=1.0).contains(&threshold) {
        return Err(corrupt(format!(
            "stored threshold {threshold} outside [0, 1]"
        )));
    }

    let token_count = r.u32()? as usize;
    let mut tokens = Vec::with_capacity(token_count.min(1 << 20));
    for _ in 0..token_count {
        let len = r.u32()? as usize;
        let bytes = r.take(len)?;
        let token = std::str::from_utf8(bytes)
            .map_err(|_| corrupt("vocabulary token is not UTF-8"))?
            .to_string();
        tokens.push(token);
    }
    let vocab = Vocab::from_tokens(tokens).map_err(corrupt)?;

    // Rebuild the tensor skeleton from the config, then fill it in order,
    // checking each stored shape.
    let mut net = NetTensors::init(&config, vocab.len(), 0).zeros_like();
    let tensor_count = r.u32()? as usize;
    {
        let mut slots = net.tensor_slices_mut();
        if tensor_count != slots.len() {
            return Err(corrupt(format!(
                "tensor count {tensor_count} does not match architecture ({})",
                slots.len()
            )));
        }
        for (i, slot) in slots.iter_mut().enumerate() {
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            let n = rows
                .checked_mul(cols)
                .ok_or_else(|| corrupt("tensor shape overflow"))?;
            if n != slot.len() {
                return Err(corrupt(format!(
                    "tensor {i} has shape {rows}x{cols}, expected {} values",
                    slot.len()
                )));
            }
            for v in slot.iter_mut() {
                *v = r.f64()?;
            }
        }
    }
    if !r.at_end() {
        return Err(corrupt(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(ModelParams {
        vocab,
        config,
        net,
        seed,
    })
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelParams, LabelerError> {
    parse_checkpoint(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_params(pooling: Pooling) -> ModelParams {
        let vocab = Vocab::build(["双肺纹理增多。", "abc"]);
        let config = ModelConfig {
            encoder: EncoderConfig {
                embedding_dim: 4,
                max_seq_len: 16,
                pooling,
                dropout_rate: 0.1,
            },
            use_dual_encoder: true,
            threshold: 0.5,
        };
        ModelParams::init(vocab, config, 99).unwrap()
    }

    #[test]
    fn round_trip_preserves_everything() {
        for pooling in [Pooling::Mean, Pooling::SingleAttention] {
            let params = sample_params(pooling);
            let bytes = checkpoint_bytes(&params);
            let loaded = parse_checkpoint(&bytes).unwrap();
            assert_eq!(params, loaded);
        }
    }

    #[test]
    fn serialization_is_byte_stable() {
        let params = sample_params(Pooling::SingleAttention);
        let first = checkpoint_bytes(&params);
        let reloaded = parse_checkpoint(&first).unwrap();
        let second = checkpoint_bytes(&reloaded);
        assert_eq!(first, second);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let params = sample_params(Pooling::Mean);
        save_checkpoint(&params, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(params, loaded);
    }

    #[test]
    fn bad_magic_is_rejected() {
        let params = sample_params(Pooling::Mean);
        let mut bytes = checkpoint_bytes(&params);
        bytes[0] = b'X';
        assert!(matches!(
            parse_checkpoint(&bytes),
            Err(LabelerError::Checkpoint { msg }) if msg.contains("magic")
        ));
    }

    #[test]
    fn wrong_version_is_rejected() {
        let params = sample_params(Pooling::Mean);
        let mut bytes = checkpoint_bytes(&params);
        bytes[8] = 2;
        assert!(matches!(
            parse_checkpoint(&bytes),
            Err(LabelerError::Checkpoint { msg }) if msg.contains("version")
        ));
    }

    #[test]
    fn truncation_and_trailing_garbage_are_rejected() {
        let params = sample_params(Pooling::Mean);
        let bytes = checkpoint_bytes(&params);
        let truncated = &bytes[..bytes.len() - 3];
        assert!(parse_checkpoint(truncated).is_err());
        let mut extended = bytes.clone();
        extended.push(0);
        assert!(matches!(
            parse_checkpoint(&extended),
            Err(LabelerError::Checkpoint { msg }) if msg.contains("trailing")
        ));
    }

    #[test]
    fn flipping_one_parameter_byte_changes_the_model_not_the_parse() {
        let params = sample_params(Pooling::Mean);
        let mut bytes = checkpoint_bytes(&params);
        let last = bytes.len() - 1;
        bytes[last] ^= 0x3f;
        let loaded = parse_checkpoint(&bytes).unwrap();
        assert_ne!(params, loaded);
    }
}
