//! Binary checkpoint archive.
//!
//! Layout (little endian): magic, format version, training configuration as
//! TOML, step, RNG state, optimizer step counts, then every named tensor in
//! name order as `name, rank, dims, f32 data`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use uwstyle_tensor::{Adam, ParamStore, Tensor};

use crate::error::{Error, Result};
use crate::model::Model;
use crate::trainer::{TrainConfig, TrainState};

pub const MAGIC: &[u8; 8] = b"UWSCKPT1";
pub const VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn bytes(&mut self, b: &[u8]) {
        self.u64(b.len() as u64);
        self.0.extend_from_slice(b);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Checkpoint("truncated archive".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn u128(&mut self) -> Result<u128> {
        Ok(u128::from_le_bytes(self.take(16)?.try_into().unwrap()))
    }
    fn bytes(&mut self) -> Result<&'a [u8]> {
        let n = self.u64()? as usize;
        self.take(n)
    }
}

fn named_tensors(state: &TrainState) -> BTreeMap<String, &Tensor<f32>> {
    let mut out = BTreeMap::new();
    let stores = [
        ("gen", state.model.gen_params(), &state.adam_gen),
        ("dis", state.model.dis_params(), &state.adam_dis),
    ];
    for (side, store, adam) in stores {
        for (i, (name, t)) in store.iter().enumerate() {
            out.insert(format!("{side}/{name}"), t);
            out.insert(format!("adam_{side}/m/{name}"), &adam.first_moments()[i]);
            out.insert(format!("adam_{side}/v/{name}"), &adam.second_moments()[i]);
        }
    }
    out
}

pub fn to_bytes(state: &TrainState) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u32(VERSION);
    w.bytes(state.config.to_toml().as_bytes());
    w.u64(state.step);
    w.0.extend_from_slice(&state.rng.get_seed());
    w.u64(state.rng.get_stream());
    w.0.extend_from_slice(&state.rng.get_word_pos().to_le_bytes());
    w.u64(state.adam_gen.step_count());
    w.u64(state.adam_dis.step_count());
    let tensors = named_tensors(state);
    w.u64(tensors.len() as u64);
    for (name, t) in tensors {
        w.bytes(name.as_bytes());
        w.u32(t.shape().len() as u32);
        for &d in t.shape() {
            w.u64(d as u64);
        }
        for v in t.data() {
            w.0.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.0
}

pub fn from_bytes(buf: &[u8]) -> Result<TrainState> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let text = std::str::from_utf8(r.bytes()?)
        .map_err(|_| Error::Checkpoint("config is not UTF-8".into()))?;
    let config = TrainConfig::from_toml(text)?;
    let step = r.u64()?;
    let seed: [u8; 32] = r.take(32)?.try_into().unwrap();
    let stream = r.u64()?;
    let word_pos = r.u128()?;
    let gen_steps = r.u64()?;
    let dis_steps = r.u64()?;
    let count = r.u64()? as usize;
    let mut tensors = BTreeMap::new();
    for _ in 0..count {
        let name = String::from_utf8(r.bytes()?.to_vec())
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
        let rank = r.u32()? as usize;
        let shape = (0..rank)
            .map(|_| r.u64().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let numel: usize = shape.iter().product();
        let raw = r.take(numel * 4)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.insert(name, Tensor::new(&shape, data)?);
    }
    if r.pos != buf.len() {
        return Err(Error::Checkpoint("trailing bytes after tensors".into()));
    }

    let mut model = Model::new(config.model.clone(), config.seed)?;
    let mut take = |key: String| {
        tensors
            .remove(&key)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor {key}")))
    };
    let mut restore = |side: &str, store: &mut ParamStore<f32>| -> Result<(Vec<Tensor<f32>>, Vec<Tensor<f32>>)> {
        let names: Vec<String> = store.iter().map(|(n, _)| n.to_string()).collect();
        let (mut m, mut v) = (Vec::new(), Vec::new());
        for name in names {
            let t = take(format!("{side}/{name}"))?;
            store
                .set(&name, t)
                .map_err(|e| Error::Checkpoint(format!("{side}/{name}: {e}")))?;
            m.push(take(format!("adam_{side}/m/{name}"))?);
            v.push(take(format!("adam_{side}/v/{name}"))?);
        }
        Ok((m, v))
    };
    let (gm, gv) = restore("gen", model.gen_params_mut())?;
    let (dm, dv) = restore("dis", model.dis_params_mut())?;
    if let Some(extra) = tensors.keys().next() {
        return Err(Error::Checkpoint(format!("unexpected tensor {extra}")));
    }
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(stream);
    rng.set_word_pos(word_pos);
    Ok(TrainState {
        adam_gen: Adam::from_state(config.adam(), gen_steps, gm, gv),
        adam_dis: Adam::from_state(config.adam(), dis_steps, dm, dv),
        config,
        step,
        model,
        rng,
    })
}

/// Write atomically: a temporary sibling file is renamed into place.
pub fn save(state: &TrainState, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension("ckpt.tmp");
    fs::write(&tmp, to_bytes(state)).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<TrainState> {
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&buf).map_err(|e| match e {
        Error::Checkpoint(msg) => Error::Checkpoint(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Only the networks of a checkpoint.
pub fn load_model(path: &Path) -> Result<Model> {
    Ok(load(path)?.model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use rand::Rng;

    fn state() -> TrainState {
        let cfg = TrainConfig {
            patch_size: 32,
            model: ModelConfig {
                base_filters: 4,
                content_channels: 8,
                num_content_resblocks: 1,
                style_channels: 8,
                generator_resblocks: 1,
                adain_param_net_hidden: 8,
                transform_hidden: 4,
                ..ModelConfig::default()
            },
            ..TrainConfig::default()
        };
        let mut s = TrainState::new(cfg).unwrap();
        s.step = 7;
        let _: u64 = s.rng.random();
        s
    }

    #[test]
    fn bytes_round_trip() {
        let s = state();
        let bytes = to_bytes(&s);
        let back = from_bytes(&bytes).unwrap();
        assert_eq!(to_bytes(&back), bytes);
        assert_eq!(back.step, 7);
        assert_eq!(back.rng, s.rng);
    }

    #[test]
    fn rejects_damage() {
        let bytes = to_bytes(&state());
        assert!(from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(from_bytes(&bad).is_err());
        let mut longer = bytes;
        longer.push(0);
        assert!(from_bytes(&longer).is_err());
    }

    #[test]
    fn save_is_atomic_rename() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a/b.ckpt");
        save(&state(), &path).unwrap();
        assert!(path.exists());
        assert!(!path.with_extension("ckpt.tmp").exists());
        let again = dir.path().join("c.ckpt");
        save(&load(&path).unwrap(), &again).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&again).unwrap());
    }
}
