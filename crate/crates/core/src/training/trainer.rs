use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::model::{ForwardVars, HiFiNet};
use crate::roadnet::{build_od_matrix, split_trajectories, RoadNetwork, TrajectorySet};
use crate::tensor::{Bound, Matrix, ParamStore, Tape, Var};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::losses::{
    alignment_loss, entropy_loss, reconstruction_loss, semantic_loss, semantic_target, total_loss, LossVars,
};

/// Loss components of one epoch, measured before that epoch's update.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub epoch: usize,
    pub align: f64,
    pub rec: f64,
    pub sem: f64,
    pub ent: f64,
    pub total: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTrace {
    pub records: Vec<LossRecord>,
}

pub const TRACE_HEADER: &str = "epoch,align,rec,sem,ent,total";

impl LossTrace {
    pub fn first(&self) -> Option<&LossRecord> {
        self.records.first()
    }

    pub fn last(&self) -> Option<&LossRecord> {
        self.records.last()
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "{TRACE_HEADER}")?;
        for r in &self.records {
            writeln!(w, "{},{:e},{:e},{:e},{:e},{:e}", r.epoch, r.align, r.rec, r.sem, r.ent, r.total)?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(TRACE_HEADER) {
            return Err(Error::Data(format!("loss trace must start with `{TRACE_HEADER}`")));
        }
        let mut records = Vec::new();
        for (k, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let bad = |what: &str| Error::Data(format!("loss trace line {}: {what}", k + 2));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(bad("expected 6 fields"));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad("malformed number"));
            records.push(LossRecord {
                epoch: f[0].parse().map_err(|_| bad("malformed epoch"))?,
                align: num(f[1])?,
                rec: num(f[2])?,
                sem: num(f[3])?,
                ent: num(f[4])?,
                total: num(f[5])?,
            });
        }
        Ok(Self { records })
    }
}

/// Model, semantic target and weights: everything needed to score a
/// parameter store.
#[derive(Clone, Debug)]
pub struct Objective {
    model: HiFiNet,
    target: Matrix,
}

/// Loss nodes plus the forward intermediates they were computed from.
#[derive(Clone, Debug)]
pub struct ObjectiveVars {
    pub total: Var,
    pub parts: LossVars,
    pub forward: ForwardVars,
}

impl Objective {
    /// `O_S` is built from the training split of the trajectories when
    /// `od_from_train_only` is set, from all of them otherwise.
    pub fn new(net: &RoadNetwork, trajs: &TrajectorySet, cfg: &TrainConfig, seed: u64) -> Result<Self> {
        let model = HiFiNet::new(net, cfg)?;
        trajs.validate_ids(net.n_segments())?;
        let od = if cfg.od_from_train_only {
            let (train, _, _) = split_trajectories(trajs, seed)?;
            build_od_matrix(&train, net.n_segments())?
        } else {
            build_od_matrix(trajs, net.n_segments())?
        };
        let target = semantic_target(model.adjacency(), &od.o, cfg.loss.lambda)?;
        Ok(Self { model, target })
    }

    pub fn model(&self) -> &HiFiNet {
        &self.model
    }

    pub fn semantic_target(&self) -> &Matrix {
        &self.target
    }

    pub fn build(&self, tape: &mut Tape, b: &Bound) -> Result<ObjectiveVars> {
        let cfg = self.model.config();
        let f = self.model.forward(tape, b)?;
        let parts = LossVars {
            align: alignment_loss(tape, f.h_s, f.h_l, f.a_sl, f.h_r, f.a_lr, cfg.loss.tau)?,
            rec: reconstruction_loss(tape, f.h_hat, f.h_s)?,
            sem: semantic_loss(tape, f.h_hat, &self.target, cfg.semantic_gram)?,
            ent: entropy_loss(tape, f.a_sl, f.a_lr),
        };
        let total = total_loss(tape, &parts, &cfg.loss)?;
        Ok(ObjectiveVars { total, parts, forward: f })
    }

    fn record(tape: &Tape, v: &ObjectiveVars, epoch: usize) -> LossRecord {
        let x = |var: Var| tape.value(var).item();
        LossRecord {
            epoch,
            align: x(v.parts.align),
            rec: x(v.parts.rec),
            sem: x(v.parts.sem),
            ent: x(v.parts.ent),
            total: x(v.total),
        }
    }

    /// Loss components of `params` without any update.
    pub fn evaluate(&self, params: &ParamStore) -> Result<LossRecord> {
        let mut tape = Tape::new();
        let b = params.bind(&mut tape);
        let v = self.build(&mut tape, &b)?;
        Ok(Self::record(&tape, &v, 0))
    }
}

/// Full-batch Adam training state.
#[derive(Clone, Debug)]
pub struct Trainer {
    objective: Objective,
    params: ParamStore,
    adam: AdamState,
    adam_cfg: AdamConfig,
    epoch: usize,
}

impl Trainer {
    pub fn new(net: &RoadNetwork, trajs: &TrajectorySet, cfg: &TrainConfig, seed: u64) -> Result<Self> {
        let objective = Objective::new(net, trajs, cfg, seed)?;
        let params = objective.model.init_params(seed);
        Ok(Self::from_parts(objective, params))
    }

    /// Resumes from stored parameters with fresh optimiser moments.
    pub fn with_params(
        net: &RoadNetwork,
        trajs: &TrajectorySet,
        cfg: &TrainConfig,
        seed: u64,
        params: ParamStore,
    ) -> Result<Self> {
        let objective = Objective::new(net, trajs, cfg, seed)?;
        objective.model.check_params(&params)?;
        Ok(Self::from_parts(objective, params))
    }

    fn from_parts(objective: Objective, params: ParamStore) -> Self {
        let adam_cfg = AdamConfig { lr: objective.model.config().lr, ..AdamConfig::default() };
        Self { objective, params, adam: AdamState::new(), adam_cfg, epoch: 0 }
    }

    pub fn objective(&self) -> &Objective {
        &self.objective
    }

    pub fn model(&self) -> &HiFiNet {
        &self.objective.model
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn into_params(self) -> ParamStore {
        self.params
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    /// One epoch: forward, losses, backward, Adam. The returned record holds
    /// the losses before the update.
    pub fn step(&mut self) -> Result<LossRecord> {
        let epoch = self.epoch + 1;
        let mut tape = Tape::new();
        let b = self.params.bind(&mut tape);
        let v = self.objective.build(&mut tape, &b)?;
        let rec = Objective::record(&tape, &v, epoch);
        if !rec.total.is_finite() {
            return Err(Error::Numeric(format!("training diverged at epoch {epoch}: total loss {}", rec.total)));
        }
        let grads = tape.backward(v.total).map_err(|e| Error::Numeric(format!("epoch {epoch}: {e}")))?;
        self.params.zero_grads();
        self.params.accumulate(&b, &grads).map_err(|e| Error::Numeric(format!("epoch {epoch}: {e}")))?;
        adam_step(&mut self.params, &mut self.adam, &self.adam_cfg)
            .map_err(|e| Error::Numeric(format!("epoch {epoch}: {e}")))?;
        self.epoch = epoch;
        Ok(rec)
    }

    pub fn run(&mut self, epochs: usize) -> Result<LossTrace> {
        let mut trace = LossTrace::default();
        for _ in 0..epochs {
            let r = self.step()?;
            if r.epoch == 1 || r.epoch % 50 == 0 {
                log::debug!("epoch {} total {:.6}", r.epoch, r.total);
            }
            trace.records.push(r);
        }
        Ok(trace)
    }
}

/// Trains for `cfg.epochs` epochs from the seeded initialisation.
pub fn train(
    cfg: &TrainConfig,
    net: &RoadNetwork,
    trajs: &TrajectorySet,
    seed: u64,
) -> Result<(ParamStore, LossTrace)> {
    let mut t = Trainer::new(net, trajs, cfg, seed)?;
    let trace = t.run(cfg.epochs)?;
    Ok((t.into_params(), trace))
}
