//! Versioned little-endian binary checkpoints for [`SacAgent`].
//!
//! Layout: magic, `u32` version, scalars, networks, optimizer states, rng.
//! Restoring is bit-exact, so a restored agent continues training on the
//! same trajectory as the original.

use crate::sac::SacAgent;
use crate::tensor::{Activation, AdamState, LayerShape, ParamVector};
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

pub const MAGIC: &[u8; 8] = b"CUPAGENT";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("not an agent checkpoint")]
    BadMagic,
    #[error("unsupported checkpoint version {0} (this build reads {VERSION})")]
    UnsupportedVersion(u32),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
}

struct Writer<W: Write>(W);

impl<W: Write> Writer<W> {
    fn u64(&mut self, v: u64) -> std::io::Result<()> {
        self.0.write_all(&v.to_le_bytes())
    }
    fn f64(&mut self, v: f64) -> std::io::Result<()> {
        self.0.write_all(&v.to_bits().to_le_bytes())
    }
    fn f64s(&mut self, vs: &[f64]) -> std::io::Result<()> {
        self.u64(vs.len() as u64)?;
        vs.iter().try_for_each(|&v| self.f64(v))
    }
    fn params(&mut self, p: &ParamVector) -> std::io::Result<()> {
        self.u64(p.shapes().len() as u64)?;
        for s in p.shapes() {
            self.u64(s.rows as u64)?;
            self.u64(s.cols as u64)?;
        }
        self.f64s(p.values())
    }
    fn adam(&mut self, a: &AdamState) -> std::io::Result<()> {
        self.u64(a.t)?;
        for v in [a.lr, a.beta1, a.beta2, a.eps] {
            self.f64(v)?;
        }
        self.f64s(&a.m)?;
        self.f64s(&a.v)
    }
}

struct Reader<R: Read>(R);

const MAX_LEN: u64 = 1 << 28;

impl<R: Read> Reader<R> {
    fn u64(&mut self) -> Result<u64, CheckpointError> {
        let mut b = [0u8; 8];
        self.0.read_exact(&mut b)?;
        Ok(u64::from_le_bytes(b))
    }
    fn usize(&mut self) -> Result<usize, CheckpointError> {
        let v = self.u64()?;
        if v > MAX_LEN {
            return Err(CheckpointError::Corrupt(format!("length {v}")));
        }
        Ok(v as usize)
    }
    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_bits(self.u64()?))
    }
    fn f64s(&mut self) -> Result<Vec<f64>, CheckpointError> {
        let n = self.usize()?;
        (0..n).map(|_| self.f64()).collect()
    }
    fn params(&mut self) -> Result<ParamVector, CheckpointError> {
        let n = self.usize()?;
        let mut shapes = Vec::with_capacity(n);
        for _ in 0..n {
            shapes.push(LayerShape {
                rows: self.usize()?,
                cols: self.usize()?,
            });
        }
        let values = self.f64s()?;
        ParamVector::from_values(shapes, values).map_err(|e| CheckpointError::Corrupt(e.to_string()))
    }
    fn adam(&mut self) -> Result<AdamState, CheckpointError> {
        let t = self.u64()?;
        let (lr, beta1, beta2, eps) = (self.f64()?, self.f64()?, self.f64()?, self.f64()?);
        let m = self.f64s()?;
        let v = self.f64s()?;
        if m.len() != v.len() {
            return Err(CheckpointError::Corrupt("adam moment lengths differ".into()));
        }
        Ok(AdamState { m, v, t, lr, beta1, beta2, eps })
    }
}

fn activation_code(a: Activation) -> u64 {
    match a {
        Activation::Relu => 0,
        Activation::Tanh => 1,
        Activation::Identity => 2,
    }
}

fn activation_from(code: u64) -> Result<Activation, CheckpointError> {
    match code {
        0 => Ok(Activation::Relu),
        1 => Ok(Activation::Tanh),
        2 => Ok(Activation::Identity),
        c => Err(CheckpointError::Corrupt(format!("activation {c}"))),
    }
}

pub fn write_agent<W: Write>(agent: &SacAgent, out: W) -> Result<(), CheckpointError> {
    let mut w = Writer(out);
    w.0.write_all(MAGIC)?;
    w.0.write_all(&VERSION.to_le_bytes())?;
    w.u64(agent.obs_dim as u64)?;
    w.u64(agent.action_dim as u64)?;
    w.u64(activation_code(agent.activation))?;
    for v in [agent.log_alpha, agent.target_entropy, agent.tau, agent.gamma] {
        w.f64(v)?;
    }
    w.params(&agent.actor)?;
    for p in agent.critics.iter().chain(&agent.target_critics) {
        w.params(p)?;
    }
    w.adam(&agent.actor_opt)?;
    for a in &agent.critic_opts {
        w.adam(a)?;
    }
    w.adam(&agent.alpha_opt)?;
    w.0.write_all(&agent.rng.get_seed())?;
    w.u64(agent.rng.get_stream())?;
    w.0.write_all(&agent.rng.get_word_pos().to_le_bytes())?;
    w.0.flush()?;
    Ok(())
}

pub fn read_agent<R: Read>(input: R) -> Result<SacAgent, CheckpointError> {
    let mut r = Reader(input);
    let mut magic = [0u8; 8];
    r.0.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let mut vb = [0u8; 4];
    r.0.read_exact(&mut vb)?;
    let version = u32::from_le_bytes(vb);
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let obs_dim = r.usize()?;
    let action_dim = r.usize()?;
    let activation = activation_from(r.u64()?)?;
    let (log_alpha, target_entropy, tau, gamma) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?);
    let actor = r.params()?;
    let critics = [r.params()?, r.params()?];
    let target_critics = [r.params()?, r.params()?];
    let actor_opt = r.adam()?;
    let critic_opts = [r.adam()?, r.adam()?];
    let alpha_opt = r.adam()?;
    let mut seed = [0u8; 32];
    r.0.read_exact(&mut seed)?;
    let stream = r.u64()?;
    let mut pos = [0u8; 16];
    r.0.read_exact(&mut pos)?;
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(stream);
    rng.set_word_pos(u128::from_le_bytes(pos));

    if actor.input_dim() != obs_dim || actor.output_dim() != 2 * action_dim {
        return Err(CheckpointError::Corrupt("actor shape".into()));
    }
    for c in critics.iter().chain(&target_critics) {
        if c.input_dim() != obs_dim + action_dim || c.output_dim() != 1 {
            return Err(CheckpointError::Corrupt("critic shape".into()));
        }
    }
    if actor_opt.m.len() != actor.len()
        || critic_opts.iter().zip(&critics).any(|(o, c)| o.m.len() != c.len())
        || alpha_opt.m.len() != 1
    {
        return Err(CheckpointError::Corrupt("optimizer state size".into()));
    }
    Ok(SacAgent {
        obs_dim,
        action_dim,
        activation,
        actor,
        critics,
        target_critics,
        log_alpha,
        target_entropy,
        tau,
        gamma,
        actor_opt,
        critic_opts,
        alpha_opt,
        rng,
    })
}

pub fn save(agent: &SacAgent, path: &Path) -> Result<(), CheckpointError> {
    let file = std::fs::File::create(path)?;
    write_agent(agent, std::io::BufWriter::new(file))
}

pub fn load(path: &Path) -> Result<SacAgent, CheckpointError> {
    let file = std::fs::File::open(path)?;
    read_agent(std::io::BufReader::new(file))
}
