//! Binary checkpoints.
//!
//! Layout: 8-byte magic, `u32` version, a kind byte, the run config as
//! length-prefixed JSON, then the payload. Every number is little-endian;
//! parameters and optimizer moments are `f64`, counts `u64`.

use std::path::Path;

use anyhow::{bail, ensure, Context, Result};

use selectaugment::data::Dataset;
use selectaugment::hrl::{TrainConfig, Trainer};
use selectaugment::policy::{ActorCritic, PolicyNets};
use selectaugment::rng::{RngState, RunRngs};
use selectaugment::tensorcore::{Activation, Dense, Mlp, OptimKind, OptimState, Tensor};

use crate::config::RunConfig;

pub const MAGIC: &[u8; 8] = b"SELAUGCK";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Kind {
    Run = 0,
    Policies = 1,
}

/// Everything a run needs to continue from an epoch boundary.
#[derive(Debug, Clone)]
pub struct RunState {
    pub epoch: u64,
    pub iteration: u64,
    pub loss_ema: Option<f64>,
    pub target: Mlp,
    pub target_opt: OptimState,
    pub policies: PolicyNets,
    pub rngs: RunRngs,
}

impl RunState {
    pub fn capture(t: &Trainer) -> Self {
        Self {
            epoch: t.epoch,
            iteration: t.iteration,
            loss_ema: t.loss_ema,
            target: t.target.clone(),
            target_opt: t.target_opt.clone(),
            policies: t.policies.clone(),
            rngs: t.rngs.clone(),
        }
    }

    /// Rebuilds the trainer this state was captured from.
    pub fn into_trainer(self, config: TrainConfig, train: &Dataset) -> Result<Trainer> {
        let mut t = Trainer::from_parts(config, train, self.target, self.policies)?;
        t.epoch = self.epoch;
        t.iteration = self.iteration;
        t.loss_ema = self.loss_ema;
        t.target_opt = self.target_opt;
        t.rngs = self.rngs;
        Ok(t)
    }
}

#[derive(Default)]
struct Enc(Vec<u8>);

impl Enc {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, vs: &[f64]) {
        self.u64(vs.len() as u64);
        for &v in vs {
            self.f64(v);
        }
    }
    fn bytes(&mut self, b: &[u8]) {
        self.u64(b.len() as u64);
        self.0.extend_from_slice(b);
    }

    fn mlp(&mut self, net: &Mlp) {
        self.u64(net.layers.len() as u64);
        for l in &net.layers {
            self.u64(l.in_width() as u64);
            self.u64(l.out_width() as u64);
            self.u8(match l.activation {
                Activation::Relu => 0,
                Activation::Identity => 1,
            });
            self.f64s(l.weight.data());
            self.f64s(&l.bias);
        }
    }

    fn optim(&mut self, o: &OptimState) {
        self.u8(match o.kind {
            OptimKind::Sgd => 0,
            OptimKind::Adam => 1,
        });
        self.f64(o.learning_rate);
        self.f64(o.weight_decay);
        self.u64(o.step);
        self.f64s(&o.m);
        self.f64s(&o.v);
    }

    fn actor_critic(&mut self, ac: &ActorCritic) {
        self.mlp(&ac.actor);
        self.mlp(&ac.critic);
        self.optim(&ac.actor_opt);
        self.optim(&ac.critic_opt);
    }

    fn policies(&mut self, p: &PolicyNets) {
        for ac in [&p.parent, &p.child, &p.op, &p.online] {
            self.actor_critic(ac);
        }
    }

    fn rng(&mut self, s: &RngState) {
        self.0.extend_from_slice(&s.seed);
        self.u64(s.stream);
        self.0.extend_from_slice(&s.word_pos.to_le_bytes());
    }

    fn header(&mut self, kind: Kind, config: &RunConfig) {
        self.0.extend_from_slice(MAGIC);
        self.0.extend_from_slice(&VERSION.to_le_bytes());
        self.u8(kind as u8);
        self.bytes(config.to_json().as_bytes());
    }
}

struct Dec<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Dec<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        ensure!(
            self.buf.len() - self.pos >= n,
            "checkpoint truncated at byte {}",
            self.pos
        );
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into()?))
    }
    fn len(&mut self) -> Result<usize> {
        let n = self.u64()? as usize;
        ensure!(
            n <= self.buf.len() - self.pos,
            "length {n} at byte {} runs past the end",
            self.pos
        );
        Ok(n)
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into()?))
    }
    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.len()?;
        (0..n).map(|_| self.f64()).collect()
    }
    fn bytes(&mut self) -> Result<&'a [u8]> {
        let n = self.len()?;
        self.take(n)
    }

    fn mlp(&mut self) -> Result<Mlp> {
        let n = self.len()?;
        let mut layers = Vec::with_capacity(n);
        for _ in 0..n {
            let rows = self.u64()? as usize;
            let cols = self.u64()? as usize;
            let activation = match self.u8()? {
                0 => Activation::Relu,
                1 => Activation::Identity,
                a => bail!("unknown activation tag {a}"),
            };
            let weight = Tensor::matrix(rows, cols, self.f64s()?)?;
            let bias = self.f64s()?;
            layers.push(Dense {
                weight,
                bias,
                activation,
            });
        }
        Ok(Mlp::from_layers(layers)?)
    }

    fn optim(&mut self) -> Result<OptimState> {
        let kind = match self.u8()? {
            0 => OptimKind::Sgd,
            1 => OptimKind::Adam,
            k => bail!("unknown optimizer tag {k}"),
        };
        Ok(OptimState {
            kind,
            learning_rate: self.f64()?,
            weight_decay: self.f64()?,
            step: self.u64()?,
            m: self.f64s()?,
            v: self.f64s()?,
        })
    }

    fn actor_critic(&mut self) -> Result<ActorCritic> {
        Ok(ActorCritic {
            actor: self.mlp()?,
            critic: self.mlp()?,
            actor_opt: self.optim()?,
            critic_opt: self.optim()?,
        })
    }

    fn policies(&mut self) -> Result<PolicyNets> {
        Ok(PolicyNets {
            parent: self.actor_critic()?,
            child: self.actor_critic()?,
            op: self.actor_critic()?,
            online: self.actor_critic()?,
        })
    }

    fn rng(&mut self) -> Result<RngState> {
        Ok(RngState {
            seed: self.take(32)?.try_into()?,
            stream: self.u64()?,
            word_pos: u128::from_le_bytes(self.take(16)?.try_into()?),
        })
    }

    fn header(&mut self, kind: Kind) -> Result<RunConfig> {
        ensure!(self.take(8)? == MAGIC, "not a checkpoint file");
        let version = u32::from_le_bytes(self.take(4)?.try_into()?);
        ensure!(
            version == VERSION,
            "checkpoint version {version}, expected {VERSION}"
        );
        let k = self.u8()?;
        ensure!(
            k == kind as u8,
            "checkpoint holds kind {k}, expected {}",
            kind as u8
        );
        let json = std::str::from_utf8(self.bytes()?).context("config is not UTF-8")?;
        RunConfig::from_json(json)
    }

    fn finish(&self) -> Result<()> {
        ensure!(
            self.pos == self.buf.len(),
            "{} trailing bytes in checkpoint",
            self.buf.len() - self.pos
        );
        Ok(())
    }
}

pub fn encode_run(config: &RunConfig, state: &RunState) -> Vec<u8> {
    let mut e = Enc::default();
    e.header(Kind::Run, config);
    e.u64(state.epoch);
    e.u64(state.iteration);
    match state.loss_ema {
        Some(v) => {
            e.u8(1);
            e.f64(v);
        }
        None => e.u8(0),
    }
    e.mlp(&state.target);
    e.optim(&state.target_opt);
    e.policies(&state.policies);
    for r in [
        &state.rngs.selection,
        &state.rngs.augment,
        &state.rngs.policy,
    ] {
        e.rng(&RngState::capture(r));
    }
    e.0
}

pub fn decode_run(bytes: &[u8]) -> Result<(RunConfig, RunState)> {
    let mut d = Dec { buf: bytes, pos: 0 };
    let config = d.header(Kind::Run)?;
    let epoch = d.u64()?;
    let iteration = d.u64()?;
    let loss_ema = match d.u8()? {
        0 => None,
        1 => Some(d.f64()?),
        f => bail!("bad loss average flag {f}"),
    };
    let target = d.mlp()?;
    let target_opt = d.optim()?;
    let policies = d.policies()?;
    let rngs = RunRngs {
        selection: d.rng()?.restore(),
        augment: d.rng()?.restore(),
        policy: d.rng()?.restore(),
    };
    d.finish()?;
    Ok((
        config,
        RunState {
            epoch,
            iteration,
            loss_ema,
            target,
            target_opt,
            policies,
            rngs,
        },
    ))
}

pub fn encode_policies(config: &RunConfig, policies: &PolicyNets) -> Vec<u8> {
    let mut e = Enc::default();
    e.header(Kind::Policies, config);
    e.policies(policies);
    e.0
}

pub fn decode_policies(bytes: &[u8]) -> Result<(RunConfig, PolicyNets)> {
    let mut d = Dec { buf: bytes, pos: 0 };
    let config = d.header(Kind::Policies)?;
    let policies = d.policies()?;
    d.finish()?;
    Ok((config, policies))
}

pub fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).with_context(|| format!("reading checkpoint {}", path.display()))
}
