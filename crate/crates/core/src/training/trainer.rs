use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::log::{LogRecord, TrainLog};
use super::objective::Objective;
use super::{objective, TrainConfig};
use crate::error::{Error, Result};
use crate::evaluation::evaluate_mcd;
use crate::features::{make_blocks, normalize, Dataset, Split};
use crate::model::{
    critic_graph, generator_graph, init_params, song_condition_blocks, strip_noise, Checkpoint, CriticNodes,
    GenNodes, GeneratorState, ModelConfig, ModelParams, OptimizerState,
};
use crate::nn::{clip_weights, Graph, NodeId, Tensor};

fn mix(a: u64, b: u64) -> u64 {
    // splitmix64 finalizer over the combined words
    let mut z = a ^ b.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

struct PreparedSong {
    targets: Vec<Tensor>,
    phonemes: Vec<usize>,
    f0: Vec<f64>,
    vuv: Vec<f64>,
    singer: usize,
}

#[derive(Clone, Copy)]
struct Segment {
    lane: usize,
    song: usize,
    start: usize,
    len: usize,
}

/// Owns parameters and optimizer state for one training run.
pub struct Trainer<'a> {
    data: &'a Dataset,
    pub model_config: ModelConfig,
    pub config: TrainConfig,
    objective: Box<dyn Objective>,
    pub params: ModelParams,
    pub optimizer: OptimizerState,
    /// Completed epochs.
    pub epoch: usize,
    pub step: usize,
    pub log: TrainLog,
    songs: Vec<PreparedSong>,
    hop: usize,
    pad_phoneme: usize,
    checkpoint_dir: Option<PathBuf>,
    log_path: Option<PathBuf>,
    started: Instant,
}

fn check_compatible(data: &Dataset, cfg: &ModelConfig) -> Result<()> {
    let spec = &cfg.condition;
    if data.n_phonemes() != spec.n_phonemes || data.n_singers() != spec.n_singers {
        return Err(Error::shape(format!(
            "model expects {} phonemes and {} singers, dataset has {} and {}",
            spec.n_phonemes,
            spec.n_singers,
            data.n_phonemes(),
            data.n_singers()
        )));
    }
    if data.dim_labels.len() != cfg.d_out {
        return Err(Error::shape(format!(
            "model outputs {} dimensions, dataset features have {}",
            cfg.d_out,
            data.dim_labels.len()
        )));
    }
    Ok(())
}

fn prepare(data: &Dataset, cfg: &ModelConfig, hop: usize) -> Result<Vec<PreparedSong>> {
    let mut out = Vec::new();
    for song in data.split(Split::Train) {
        let frames = normalize(&song.features, &data.norm_stats)?;
        let seq = make_blocks(&frames, cfg.block_len, hop)?;
        let targets = seq
            .blocks
            .iter()
            .map(|b| {
                let mut t = Tensor::zeros(b.d, b.t);
                for i in 0..b.t {
                    for (k, &v) in b.row(i).iter().enumerate() {
                        t.set(k, i, v);
                    }
                }
                t
            })
            .collect();
        out.push(PreparedSong {
            targets,
            phonemes: song.phonemes.clone(),
            f0: song.f0.clone(),
            vuv: song.vuv(),
            singer: song.singer,
        });
    }
    if out.is_empty() {
        return Err(Error::Validation("training split has no songs".into()));
    }
    Ok(out)
}

fn sum_terms(g: &mut Graph, terms: &[NodeId], scale: f64) -> Result<NodeId> {
    let mut acc = terms[0];
    for &t in &terms[1..] {
        acc = g.add(acc, t)?;
    }
    Ok(g.scale(acc, scale))
}

fn max_abs(values: &[Vec<f32>]) -> f64 {
    values.iter().flatten().fold(0.0f64, |m, &v| m.max(v.abs() as f64))
}

impl<'a> Trainer<'a> {
    pub fn new(data: &'a Dataset, model_config: ModelConfig, config: TrainConfig) -> Result<Self> {
        let params = init_params(config.seed, &model_config)?;
        let optimizer = OptimizerState::new(&params, config.optimizer, config.optimizer);
        Self::assemble(data, model_config, config, params, optimizer, 0, 0)
    }

    /// Continues from a checkpoint; the run proceeds exactly as if it had
    /// never stopped, provided `config` matches the original run.
    pub fn resume(data: &'a Dataset, ckpt: Checkpoint, config: TrainConfig) -> Result<Self> {
        let optimizer = match ckpt.optimizer {
            Some(mut o) => {
                o.generator.config = config.optimizer;
                o.critic.config = config.optimizer;
                o
            }
            None => OptimizerState::new(&ckpt.params, config.optimizer, config.optimizer),
        };
        Self::assemble(data, ckpt.config, config, ckpt.params, optimizer, ckpt.epoch, ckpt.step)
    }

    fn assemble(
        data: &'a Dataset,
        model_config: ModelConfig,
        config: TrainConfig,
        params: ModelParams,
        optimizer: OptimizerState,
        epoch: usize,
        step: usize,
    ) -> Result<Self> {
        config.validate()?;
        model_config.validate()?;
        check_compatible(data, &model_config)?;
        let hop = model_config.block_len / 2;
        let songs = prepare(data, &model_config, hop.max(1))?;
        Ok(Self {
            data,
            objective: objective(&config.mode)?,
            pad_phoneme: data.vocab.silence_id(),
            model_config,
            config,
            params,
            optimizer,
            epoch,
            step,
            log: TrainLog::default(),
            songs,
            hop: hop.max(1),
            checkpoint_dir: None,
            log_path: None,
            started: Instant::now(),
        })
    }

    /// Writes `latest.gsc` after every epoch, plus numbered checkpoints.
    pub fn with_checkpoint_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.checkpoint_dir = Some(dir.into());
        self
    }

    /// Appends every log record to a JSONL file as it is produced.
    pub fn with_log_path(mut self, path: impl Into<PathBuf>) -> Self {
        self.log_path = Some(path.into());
        self
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.model_config.clone(),
            params: self.params.clone(),
            optimizer: Some(self.optimizer.clone()),
            epoch: self.epoch,
            step: self.step,
            extra: serde_json::json!({ "train_config": self.config }),
        }
    }

    fn record(&mut self, r: LogRecord) -> Result<()> {
        if let Some(p) = &self.log_path {
            TrainLog::append_to(p, &r)?;
        }
        self.log.push(r);
        Ok(())
    }

    /// Runs until `config.epochs` epochs are complete.
    pub fn run(&mut self) -> Result<()> {
        while self.epoch < self.config.epochs {
            self.run_epoch()?;
        }
        Ok(())
    }

    /// One pass over every training segment.
    pub fn run_epoch(&mut self) -> Result<()> {
        let e = self.epoch + 1;
        let epoch_seed = mix(self.config.seed, e as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(epoch_seed);
        let mut order: Vec<usize> = (0..self.songs.len()).collect();
        order.shuffle(&mut rng);

        // Songs go whole to the least loaded lane so state carries within a song.
        let sb = self.config.blocks_per_segment;
        let n_lanes = self.config.batch_size.min(self.songs.len());
        let mut lanes: Vec<Vec<Segment>> = vec![Vec::new(); n_lanes];
        for &s in &order {
            let lane = (0..n_lanes).min_by_key(|&l| lanes[l].len()).expect("at least one lane");
            let n = self.songs[s].targets.len();
            for start in (0..n).step_by(sb) {
                lanes[lane].push(Segment {
                    lane,
                    song: s,
                    start,
                    len: sb.min(n - start),
                });
            }
        }
        let mut conds = Vec::with_capacity(self.songs.len());
        for (i, s) in self.songs.iter().enumerate() {
            conds.push(song_condition_blocks(
                &s.phonemes,
                &s.f0,
                &s.vuv,
                s.singer,
                &self.model_config.condition,
                self.model_config.block_len,
                self.hop,
                self.pad_phoneme,
                mix(epoch_seed, i as u64),
            )?);
        }
        let plain: Vec<Vec<Tensor>> = conds
            .iter()
            .map(|c| c.iter().map(|b| strip_noise(b, &self.model_config.condition)).collect())
            .collect();

        let n_steps = lanes.iter().map(Vec::len).max().unwrap_or(0);
        let mut states: Vec<Option<GeneratorState>> = vec![None; n_lanes];
        for k in 0..n_steps {
            let items: Vec<Segment> = lanes.iter().filter_map(|l| l.get(k).copied()).collect();
            self.train_step(e, &items, &conds, &plain, &mut states)?;
        }

        let report = evaluate_mcd(&self.params, &self.model_config, self.data, Split::Train, "train", self.config.seed)?;
        let wall_s = self.started.elapsed().as_secs_f64();
        self.record(LogRecord::Epoch {
            epoch: e,
            train_mcd_db: report.mean_db,
            wall_s,
        })?;
        self.epoch = e;
        if let Some(dir) = &self.checkpoint_dir {
            fs::create_dir_all(dir)?;
            let ck = self.checkpoint();
            ck.save(dir.join("latest.gsc"))?;
            if e.is_multiple_of(self.config.checkpoint_every.max(1)) || e == self.config.epochs {
                ck.save(dir.join(format!("epoch_{e:04}.gsc")))?;
            }
        }
        Ok(())
    }

    fn train_step(
        &mut self,
        epoch: usize,
        items: &[Segment],
        conds: &[Vec<Tensor>],
        plain: &[Vec<Tensor>],
        states: &mut [Option<GeneratorState>],
    ) -> Result<()> {
        let cfg = &self.model_config;
        let gen_r = self.params.generator_range();
        let crit_r = self.params.critic_range();
        let n_blocks: usize = items.iter().map(|s| s.len).sum();
        let scale = 1.0 / n_blocks as f64;

        // Generator forward once per step; its outputs are the critic's fakes.
        let mut graphs = Vec::with_capacity(items.len());
        for seg in items {
            let mut g = Graph::new();
            let ids = self.params.bind(&mut g, gen_r.clone(), true);
            let nodes = GenNodes::new(cfg, &ids);
            let mut st = if seg.start == 0 {
                None
            } else {
                states[seg.lane].as_ref().map(|s| s.bind(&mut g))
            };
            let mut outputs = Vec::with_capacity(seg.len);
            for j in 0..seg.len {
                let c = g.input(conds[seg.song][seg.start + j].clone());
                let (y, s) = generator_graph(&mut g, cfg, &nodes, c, st.as_deref())?;
                outputs.push(y);
                st = Some(s);
            }
            states[seg.lane] = st.map(|s| GeneratorState::capture(&g, &s));
            graphs.push((g, outputs));
        }

        let clip = self.config.clip as f32;
        let mut critic_loss = 0.0;
        let mut critic_max_abs = 0.0f64;
        for _ in 0..self.config.n_critic {
            let mut grads = self.params.zero_grads();
            critic_loss = 0.0;
            for (seg, (gg, outputs)) in items.iter().zip(&graphs) {
                let mut g = Graph::new();
                let ids = self.params.bind(&mut g, crit_r.clone(), true);
                let nodes = CriticNodes::new(cfg, &ids);
                let mut terms = Vec::with_capacity(seg.len);
                for (j, &y) in outputs.iter().enumerate() {
                    let b = seg.start + j;
                    let real = g.input(self.songs[seg.song].targets[b].clone());
                    let fake = g.input(gg.value(y).clone());
                    let c = g.input(plain[seg.song][b].clone());
                    let dr = critic_graph(&mut g, cfg, &nodes, real, c)?;
                    let df = critic_graph(&mut g, cfg, &nodes, fake, c)?;
                    terms.push(self.objective.critic_term(&mut g, dr, df)?);
                }
                let loss = sum_terms(&mut g, &terms, scale)?;
                critic_loss += g.value(loss).get(0, 0);
                g.backward(loss)?.accumulate_params(&g, &mut grads)?;
            }
            if !critic_loss.is_finite() {
                return Err(Error::Numerical(format!(
                    "critic loss {critic_loss} at epoch {epoch}, step {}",
                    self.step
                )));
            }
            self.optimizer
                .critic
                .step(&mut self.params.values[crit_r.clone()], &grads[crit_r.clone()])?;
            if self.objective.clips_critic() {
                clip_weights(&mut self.params.values[crit_r.clone()], clip);
            }
            critic_max_abs = critic_max_abs.max(max_abs(&self.params.values[crit_r.clone()]));
        }

        let mut grads = self.params.zero_grads();
        let mut generator_loss = 0.0;
        for (seg, (g, outputs)) in items.iter().zip(graphs.iter_mut()) {
            let ids = self.params.bind(g, crit_r.clone(), false);
            let nodes = CriticNodes::new(cfg, &ids);
            let mut terms = Vec::with_capacity(seg.len);
            for (j, &y) in outputs.iter().enumerate() {
                let b = seg.start + j;
                let c = g.input(plain[seg.song][b].clone());
                let df = critic_graph(g, cfg, &nodes, y, c)?;
                let mut t = self.objective.generator_term(g, df)?;
                if self.config.recon_weight > 0.0 {
                    let real = g.input(self.songs[seg.song].targets[b].clone());
                    let d = g.sub(y, real)?;
                    let a = g.abs(d);
                    let m = g.mean(a);
                    let r = g.scale(m, self.config.recon_weight);
                    t = g.add(t, r)?;
                }
                terms.push(t);
            }
            let loss = sum_terms(g, &terms, scale)?;
            generator_loss += g.value(loss).get(0, 0);
            g.backward(loss)?.accumulate_params(g, &mut grads)?;
        }
        if !generator_loss.is_finite() {
            return Err(Error::Numerical(format!(
                "generator loss {generator_loss} at epoch {epoch}, step {}",
                self.step
            )));
        }
        self.optimizer
            .generator
            .step(&mut self.params.values[gen_r.clone()], &grads[gen_r])?;

        let wall_s = self.started.elapsed().as_secs_f64();
        self.record(LogRecord::Step {
            epoch,
            step: self.step,
            critic_loss,
            generator_loss,
            critic_max_abs,
            wall_s,
        })?;
        self.step += 1;
        Ok(())
    }
}

/// Trains from scratch for `config.epochs` epochs.
pub fn train(data: &Dataset, model_config: ModelConfig, config: TrainConfig) -> Result<(ModelParams, TrainLog)> {
    let mut t = Trainer::new(data, model_config, config)?;
    t.run()?;
    Ok((t.params, t.log))
}

/// Norm of the generator-loss gradient over all generator parameters for one
/// block, with the critic output shifted so that its sigmoid equals
/// `target_prob` when given. Also returns the probability actually seen.
pub fn generator_grad_norm(
    objective: &dyn Objective,
    params: &ModelParams,
    cfg: &ModelConfig,
    cond: &Tensor,
    target_prob: Option<f64>,
) -> Result<(f64, f64)> {
    let mut g = Graph::new();
    let ids = params.bind(&mut g, params.generator_range(), true);
    let gn = GenNodes::new(cfg, &ids);
    let c = g.input(cond.clone());
    let (y, _) = generator_graph(&mut g, cfg, &gn, c, None)?;
    let cids = params.bind(&mut g, params.critic_range(), false);
    let cn = CriticNodes::new(cfg, &cids);
    let plain = g.input(strip_noise(cond, &cfg.condition));
    let mut z = critic_graph(&mut g, cfg, &cn, y, plain)?;
    if let Some(p) = target_prob {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::config(format!("target probability {p} outside (0, 1)")));
        }
        let shift = (p / (1.0 - p)).ln() - g.value(z).get(0, 0);
        let s = g.input(Tensor::scalar(shift));
        z = g.add(z, s)?;
    }
    let zv = g.value(z).get(0, 0);
    let loss = objective.generator_term(&mut g, z)?;
    let mut grads = params.zero_grads();
    g.backward(loss)?.accumulate_params(&g, &mut grads)?;
    let norm = grads[params.generator_range()]
        .iter()
        .flatten()
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    Ok((norm, 1.0 / (1.0 + (-zv).exp())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{generate_synthetic_dataset, SyntheticSpec};
    use crate::training::{Gan, Wgan};

    fn tiny() -> (Dataset, ModelConfig, TrainConfig) {
        let data = generate_synthetic_dataset(&SyntheticSpec::new(3, 2, 4, 3, 80)).unwrap().dataset;
        let mut cfg = ModelConfig::tiny(data.n_phonemes(), data.n_singers());
        cfg.block_len = 32;
        let tc = TrainConfig {
            epochs: 2,
            batch_size: 2,
            blocks_per_segment: 2,
            n_critic: 2,
            seed: 5,
            ..TrainConfig::default()
        };
        (data, cfg, tc)
    }

    #[test]
    fn deterministic_and_clipped() {
        let (data, cfg, tc) = tiny();
        let (p1, l1) = train(&data, cfg.clone(), tc.clone()).unwrap();
        let (p2, l2) = train(&data, cfg, tc).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(l1.without_wall_time(), l2.without_wall_time());
        assert_eq!(l1.epoch_mcd().len(), 2);
        for r in &l1.records {
            if let LogRecord::Step { critic_max_abs, .. } = r {
                assert!(*critic_max_abs <= 0.01f32 as f64);
            }
        }
        let c = p1.critic_range();
        assert!(p1.values[c].iter().flatten().all(|v| v.abs() <= 0.01));
    }

    #[test]
    fn resume_matches_uninterrupted() {
        let (data, cfg, tc) = tiny();
        let mut full = Trainer::new(&data, cfg.clone(), tc.clone()).unwrap();
        full.run().unwrap();
        let mut first = Trainer::new(&data, cfg, TrainConfig { epochs: 1, ..tc.clone() }).unwrap();
        first.run().unwrap();
        let bytes = first.checkpoint().to_bytes().unwrap();
        let mut rest = Trainer::resume(&data, Checkpoint::from_bytes(&bytes).unwrap(), tc).unwrap();
        rest.run().unwrap();
        let n1 = first.log.step_losses().len();
        assert_eq!(full.log.step_losses()[n1..], rest.log.step_losses()[..]);
        assert_eq!(full.params, rest.params);
    }

    #[test]
    fn gan_mode_trains_without_clipping() {
        let (data, cfg, tc) = tiny();
        let tc = TrainConfig {
            mode: "gan".into(),
            epochs: 1,
            ..tc
        };
        let (_, log) = train(&data, cfg, tc).unwrap();
        assert!(log.step_losses().iter().all(|(c, g)| c.is_finite() && g.is_finite()));
    }

    #[test]
    fn incompatible_dataset_is_rejected() {
        let (data, _, tc) = tiny();
        let cfg = ModelConfig::tiny(data.n_phonemes() + 1, data.n_singers());
        assert!(matches!(Trainer::new(&data, cfg, tc), Err(Error::Shape(_))));
    }

    #[test]
    fn gradients_reach_every_generator_tensor() {
        let (_, cfg, _) = tiny();
        let p = init_params(1, &cfg).unwrap();
        let cond = Tensor::new(
            cfg.condition.channels(),
            cfg.block_len,
            (0..cfg.condition.channels() * cfg.block_len).map(|i| ((i * 7919) % 13) as f64 / 13.0 - 0.4).collect(),
        )
        .unwrap();
        let (n, _) = generator_grad_norm(&Wgan, &p, &cfg, &cond, None).unwrap();
        assert!(n.is_finite() && n > 0.0);
        let (half, d) = generator_grad_norm(&Gan, &p, &cfg, &cond, Some(0.5)).unwrap();
        assert!((d - 0.5).abs() < 1e-12);
        let (small, d) = generator_grad_norm(&Gan, &p, &cfg, &cond, Some(1e-4)).unwrap();
        assert!(d < 1e-3);
        assert!(small < 0.01 * half);
    }
}
