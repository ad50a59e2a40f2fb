//! Binary checkpoint of both networks and their optimizer state.
//!
//! Layout, all integers and floats little-endian:
//!
//! | field            | encoding                                         |
//! |------------------|--------------------------------------------------|
//! | magic            | `b"SCRPCKPT"`                                    |
//! | format version   | `u32`                                            |
//! | iteration        | `u64`                                            |
//! | config digest    | 32 bytes (SHA-256)                               |
//! | policy header    | activation `u8`, `u32` count, `u32` layer sizes, `u32` log_std length |
//! | value header     | same                                             |
//! | policy optimizer | kind `u8`, lr, beta1, beta2, eps as `f64`, steps `u64` |
//! | value optimizer  | same                                             |
//! | payload          | `f64` arrays: policy, value, policy m, policy v, value m, value v |
//!
//! Each parameter array is the network's flat declaration order: per layer
//! the row-major weight then the bias, then `log_std`.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::ppo::PpoTrainer;
use crate::tinynet::{Activation, MlpParams, Optimizer, OptimizerKind};

pub const MAGIC: &[u8; 8] = b"SCRPCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub iteration: u64,
    pub config_digest: [u8; 32],
    pub policy: MlpParams,
    pub value: MlpParams,
    pub policy_opt: Optimizer,
    pub value_opt: Optimizer,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn floats(&mut self, values: &[f64]) {
        values.iter().for_each(|&v| self.f64(v));
    }
    fn network(&mut self, net: &MlpParams) {
        self.u8(match net.hidden_activation {
            Activation::Tanh => 0,
            Activation::Identity => 1,
        });
        let sizes = net.layer_sizes();
        self.u32(sizes.len() as u32);
        sizes.iter().for_each(|&s| self.u32(s as u32));
        self.u32(net.log_std.as_ref().map_or(0, |l| l.len()) as u32);
    }
    fn optimizer(&mut self, opt: &Optimizer) {
        self.u8(match opt.kind {
            OptimizerKind::Adam => 0,
            OptimizerKind::Sgd => 1,
        });
        self.f64(opt.lr);
        self.f64(opt.beta1);
        self.f64(opt.beta2);
        self.f64(opt.eps);
        self.u64(opt.steps);
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn fail(&self, reason: impl Into<String>) -> Error {
        Error::Checkpoint {
            path: self.path.to_path_buf(),
            reason: reason.into(),
        }
    }
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let out = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(out)
            }
            None => Err(self.fail(format!("truncated at byte {}", self.bytes.len()))),
        }
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn network(&mut self) -> Result<MlpParams> {
        let activation = match self.u8()? {
            0 => Activation::Tanh,
            1 => Activation::Identity,
            other => return Err(self.fail(format!("unknown activation tag {other}"))),
        };
        let count = self.u32()? as usize;
        if count > 64 {
            return Err(self.fail(format!("implausible layer count {count}")));
        }
        let sizes = (0..count)
            .map(|_| self.u32().map(|s| s as usize))
            .collect::<Result<Vec<_>>>()?;
        let log_std_len = self.u32()? as usize;
        let net = MlpParams::zeros(&sizes, log_std_len > 0)
            .map_err(|_| self.fail(format!("invalid layer sizes {sizes:?}")))?;
        if log_std_len > 0 && log_std_len != net.output_dim() {
            return Err(self.fail("log_std length does not match output size"));
        }
        Ok(net.with_activation(activation))
    }
    fn optimizer(&mut self, params: &MlpParams) -> Result<Optimizer> {
        let kind = match self.u8()? {
            0 => OptimizerKind::Adam,
            1 => OptimizerKind::Sgd,
            other => return Err(self.fail(format!("unknown optimizer tag {other}"))),
        };
        let mut opt = Optimizer::new(kind, self.f64()?, params);
        opt.beta1 = self.f64()?;
        opt.beta2 = self.f64()?;
        opt.eps = self.f64()?;
        opt.steps = self.u64()?;
        Ok(opt)
    }
    fn fill(&mut self, params: &mut MlpParams) -> Result<()> {
        for block in params.blocks_mut() {
            let raw = self.take(block.len() * 8)?;
            for (dst, chunk) in block.iter_mut().zip(raw.chunks_exact(8)) {
                *dst = f64::from_le_bytes(chunk.try_into().unwrap());
            }
        }
        Ok(())
    }
}

impl Checkpoint {
    pub fn from_trainer(trainer: &PpoTrainer, config_digest: [u8; 32]) -> Self {
        Self {
            iteration: trainer.iteration as u64,
            config_digest,
            policy: trainer.policy.clone(),
            value: trainer.value.clone(),
            policy_opt: trainer.policy_opt.clone(),
            value_opt: trainer.value_opt.clone(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u32(FORMAT_VERSION);
        w.u64(self.iteration);
        w.0.extend_from_slice(&self.config_digest);
        w.network(&self.policy);
        w.network(&self.value);
        w.optimizer(&self.policy_opt);
        w.optimizer(&self.value_opt);
        for net in [
            &self.policy,
            &self.value,
            &self.policy_opt.first_moment,
            &self.policy_opt.second_moment,
            &self.value_opt.first_moment,
            &self.value_opt.second_moment,
        ] {
            net.blocks().iter().for_each(|b| w.floats(b));
        }
        w.0
    }

    /// Parses a checkpoint; `path` is only used in error messages.
    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0, path };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(r.fail("not a checkpoint (bad magic)"));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(r.fail(format!(
                "format version {version}, expected {FORMAT_VERSION}"
            )));
        }
        let iteration = r.u64()?;
        let config_digest: [u8; 32] = r.take(32)?.try_into().unwrap();
        let mut policy = r.network()?;
        let mut value = r.network()?;
        let mut policy_opt = r.optimizer(&policy)?;
        let mut value_opt = r.optimizer(&value)?;
        r.fill(&mut policy)?;
        r.fill(&mut value)?;
        r.fill(&mut policy_opt.first_moment)?;
        r.fill(&mut policy_opt.second_moment)?;
        r.fill(&mut value_opt.first_moment)?;
        r.fill(&mut value_opt.second_moment)?;
        if r.pos != bytes.len() {
            return Err(r.fail(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        if !policy.is_finite() || !value.is_finite() {
            return Err(r.fail("non-finite parameters"));
        }
        Ok(Self {
            iteration,
            config_digest,
            policy,
            value,
            policy_opt,
            value_opt,
        })
    }

    /// Writes through a temporary file so an interrupted save never replaces
    /// a good checkpoint with a partial one.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = tmp_path(path);
        std::fs::write(&tmp, self.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }

    /// Like [`Checkpoint::load`] but refuses checkpoints trained under a
    /// different configuration.
    pub fn load_strict(path: &Path, expected_digest: &[u8; 32]) -> Result<Self> {
        let ckpt = Self::load(path)?;
        if &ckpt.config_digest != expected_digest {
            return Err(Error::Checkpoint {
                path: path.to_path_buf(),
                reason: "config digest does not match the supplied configuration".into(),
            });
        }
        Ok(ckpt)
    }
}

fn tmp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".tmp");
    path.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RunConfig;
    use crate::env::EnvConfig;
    use crate::ppo::PpoConfig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn trained() -> (PpoTrainer, [u8; 32]) {
        let cfg = RunConfig {
            ppo: PpoConfig {
                horizon: 20,
                batch_episodes: 2,
                hidden: vec![12, 6],
                ..PpoConfig::default()
            },
            ..RunConfig::default()
        };
        let mut t = PpoTrainer::new(cfg.ppo.clone(), EnvConfig::default()).unwrap();
        t.train_iteration().unwrap();
        t.train_iteration().unwrap();
        (t, cfg.digest())
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let (t, digest) = trained();
        let ckpt = Checkpoint::from_trainer(&t, digest);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ckpt");
        ckpt.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back.to_bytes(), ckpt.to_bytes());
        assert_eq!(back, ckpt);
        assert_eq!(back.iteration, 2);

        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            let x: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
            let a = ckpt.policy.predict(&x).unwrap();
            let b = back.policy.predict(&x).unwrap();
            assert_eq!(
                a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
        }
    }

    #[test]
    fn truncation_and_garbage_are_rejected() {
        let (t, digest) = trained();
        let bytes = Checkpoint::from_trainer(&t, digest).to_bytes();
        let p = Path::new("t.ckpt");
        for cut in [0, 7, 20, 60, bytes.len() / 2, bytes.len() - 1] {
            let err = Checkpoint::from_bytes(&bytes[..cut], p).unwrap_err();
            assert!(matches!(err, Error::Checkpoint { .. }), "{err}");
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra, p).is_err());
        let mut bad_version = bytes.clone();
        bad_version[8] = 9;
        let err = Checkpoint::from_bytes(&bad_version, p).unwrap_err();
        assert!(err.to_string().contains("version"), "{err}");
    }

    #[test]
    fn strict_load_checks_digest() {
        let (t, digest) = trained();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.ckpt");
        Checkpoint::from_trainer(&t, digest).save(&path).unwrap();
        Checkpoint::load_strict(&path, &digest).unwrap();
        let mut other = digest;
        other[0] ^= 1;
        assert!(Checkpoint::load_strict(&path, &other).is_err());
    }
}
