//! SGD with momentum and weight decay under a polynomial learning-rate
//! schedule; deterministic and resumable.
//!
//! Update rule per parameter:
//!
//! ```text
//! v ← momentum·v − lr·(g + weight_decay·θ)
//! θ ← θ + v
//! ```

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::data::{augment, prepare, sample_index, AugmentSpec, ConsensusPolicy, LabeledSample, Sample};
use crate::error::{Error, Result};
use crate::layers::Mode;
use crate::loss::{compute_beta, total_loss, LossConfig, DEFAULT_CLAMP_EPS, SIDE_OUTPUTS};
use crate::network::{load_checkpoint_with, save_checkpoint_with, NetworkConfig, NetworkGraph, Record};
use crate::tensor::{Float, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub base_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub max_iter: u64,
    pub lr_power: f64,
    pub batch: usize,
    pub alpha: [f64; SIDE_OUTPUTS],
    pub clamp_eps: f64,
    pub seed: u64,
    /// Training resolution; `None` keeps each image's own size.
    pub image_size: Option<(usize, usize)>,
    pub consensus: ConsensusPolicy,
    pub augment: bool,
    /// Also decay biases and BN beta.
    pub decay_bias: bool,
    /// 0 disables periodic checkpoints.
    pub checkpoint_every: u64,
    /// Channel widths are divided by this (1 = full width).
    pub width_divisor: usize,
    pub dropout_rate: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            base_lr: 1e-6,
            momentum: 0.9,
            weight_decay: 2e-4,
            max_iter: 20_000,
            lr_power: 0.8,
            batch: 1,
            alpha: [1.0; SIDE_OUTPUTS],
            clamp_eps: DEFAULT_CLAMP_EPS,
            seed: 0,
            image_size: Some((400, 400)),
            consensus: ConsensusPolicy::over3(),
            augment: true,
            decay_bias: false,
            checkpoint_every: 0,
            width_divisor: 1,
            dropout_rate: crate::layers::DEFAULT_DROPOUT_RATE,
        }
    }
}

fn parse_num<F: std::str::FromStr>(key: &str, v: &str) -> Result<F> {
    v.parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("`{key}`: expected true/false, got `{v}`"))),
    }
}

impl TrainConfig {
    pub const KEYS: &'static [&'static str] = &[
        "base_lr",
        "momentum",
        "weight_decay",
        "max_iter",
        "lr_power",
        "batch",
        "alpha",
        "clamp_eps",
        "seed",
        "image_size",
        "consensus",
        "augment",
        "decay_bias",
        "checkpoint_every",
        "width_divisor",
        "dropout_rate",
    ];

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "base_lr" => self.base_lr = parse_num(key, v)?,
            "momentum" => self.momentum = parse_num(key, v)?,
            "weight_decay" => self.weight_decay = parse_num(key, v)?,
            "max_iter" => self.max_iter = parse_num(key, v)?,
            "lr_power" => self.lr_power = parse_num(key, v)?,
            "batch" => self.batch = parse_num(key, v)?,
            "alpha" => {
                let parts: Vec<f64> = v.split(',').map(|p| parse_num(key, p.trim())).collect::<Result<_>>()?;
                self.alpha = match parts.len() {
                    1 => [parts[0]; SIDE_OUTPUTS],
                    SIDE_OUTPUTS => parts.try_into().unwrap(),
                    n => return Err(Error::Config(format!("`alpha`: expected 1 or {SIDE_OUTPUTS} values, got {n}"))),
                };
            }
            "clamp_eps" => self.clamp_eps = parse_num(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            "image_size" => {
                self.image_size = match v {
                    "none" | "native" => None,
                    _ => match v.split_once('x') {
                        Some((h, w)) => Some((parse_num(key, h)?, parse_num(key, w)?)),
                        None => {
                            let s = parse_num(key, v)?;
                            Some((s, s))
                        }
                    },
                }
            }
            "consensus" => self.consensus = ConsensusPolicy::parse(v)?,
            "augment" => self.augment = parse_bool(key, v)?,
            "decay_bias" => self.decay_bias = parse_bool(key, v)?,
            "checkpoint_every" => self.checkpoint_every = parse_num(key, v)?,
            "width_divisor" => self.width_divisor = parse_num(key, v)?,
            "dropout_rate" => self.dropout_rate = parse_num(key, v)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines over the defaults; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            cfg.set(k.trim(), v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr > 0.0) {
            return Err(Error::Config(format!("base_lr must be positive, got {}", self.base_lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        if !(self.lr_power > 0.0) {
            return Err(Error::Config(format!("lr_power must be positive, got {}", self.lr_power)));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config("weight_decay must be non-negative".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be positive".into()));
        }
        if self.batch != 1 {
            return Err(Error::Config(format!("only batch = 1 is supported, got {}", self.batch)));
        }
        if self.width_divisor == 0 {
            return Err(Error::Config("width_divisor must be at least 1".into()));
        }
        if let Some((h, w)) = self.image_size {
            if h < crate::network::MIN_INPUT_SIDE || w < crate::network::MIN_INPUT_SIDE {
                return Err(Error::Config(format!("image_size {h}x{w} below 32")));
            }
        }
        self.loss_config().validate()
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            alpha: self.alpha,
            clamp_eps: self.clamp_eps,
        }
    }

    pub fn network_config(&self, input_channels: usize) -> NetworkConfig {
        NetworkConfig {
            input_channels,
            dropout_rate: self.dropout_rate,
            ..NetworkConfig::narrow(self.width_divisor)
        }
    }

    pub fn augment_spec(&self) -> AugmentSpec {
        if self.augment {
            AugmentSpec::full(self.seed)
        } else {
            AugmentSpec::none(self.seed)
        }
    }
}

/// `base_lr · (1 − iter/max_iter)^lr_power`.
pub fn poly_lr(iter: u64, cfg: &TrainConfig) -> Result<f64> {
    if iter > cfg.max_iter {
        return Err(Error::invalid(
            "poly_lr",
            format!("iteration {iter} beyond max_iter {}", cfg.max_iter),
        ));
    }
    Ok(cfg.base_lr * (1.0 - iter as f64 / cfg.max_iter as f64).powf(cfg.lr_power))
}

/// One momentum step on a flat parameter.
pub fn sgd_update<T: Float>(theta: &mut [T], grad: &[T], velocity: &mut [T], lr: f64, momentum: f64, decay: f64) {
    let (lr, m, wd) = (T::from_f64(lr), T::from_f64(momentum), T::from_f64(decay));
    for ((p, &g), v) in theta.iter_mut().zip(grad).zip(velocity.iter_mut()) {
        *v = m * *v - lr * (g + wd * *p);
        *p += *v;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T: Float> {
    /// Completed steps.
    pub iteration: u64,
    /// Velocity per parameter, in registry order.
    pub velocity: Vec<(String, Vec<T>)>,
}

impl<T: Float> OptimizerState<T> {
    pub fn new(graph: &NetworkGraph<T>) -> Self {
        OptimizerState {
            iteration: 0,
            velocity: graph
                .params()
                .into_iter()
                .map(|p| (p.name, vec![T::zero(); p.tensor.len()]))
                .collect(),
        }
    }

    pub fn to_records(&self) -> Vec<Record<T>> {
        let mut out = vec![Record::from_u64("optim.iteration", self.iteration)];
        for (name, v) in &self.velocity {
            out.push(Record::vector(format!("optim.velocity.{name}"), v.clone()));
        }
        out
    }

    /// Rebuilds optimizer state for `graph` from `optim.*` records.
    pub fn from_records(graph: &NetworkGraph<T>, records: &[Record<T>]) -> Result<Self> {
        let iteration = records
            .iter()
            .find(|r| r.name == "optim.iteration")
            .ok_or_else(|| Error::MissingParameter("optim.iteration".into()))?
            .to_u64()?;
        let velocity = graph
            .params()
            .into_iter()
            .map(|p| {
                let key = format!("optim.velocity.{}", p.name);
                let r = records
                    .iter()
                    .find(|r| r.name == key)
                    .ok_or_else(|| Error::MissingParameter(key.clone()))?;
                if r.values.len() != p.tensor.len() {
                    return Err(Error::ParameterShape {
                        name: key,
                        expected: vec![p.tensor.len()],
                        found: r.dims.clone(),
                    });
                }
                Ok((p.name, r.values.clone()))
            })
            .collect::<Result<_>>()?;
        Ok(OptimizerState { iteration, velocity })
    }
}

/// Applies one update with learning rate `lr` using the gradients stored on
/// the graph's parameters, then advances the iteration counter.
pub fn sgd_step<T: Float>(graph: &mut NetworkGraph<T>, state: &mut OptimizerState<T>, cfg: &TrainConfig, lr: f64) -> Result<()> {
    let params = graph.params_mut();
    if params.len() != state.velocity.len() {
        return Err(Error::invalid("sgd_step", "optimizer state does not match the graph"));
    }
    for (p, (vname, v)) in params.into_iter().zip(state.velocity.iter_mut()) {
        if &p.name != vname {
            return Err(Error::invalid("sgd_step", format!("velocity `{vname}` paired with `{}`", p.name)));
        }
        let grad = p
            .tensor
            .grad()
            .ok_or_else(|| Error::MissingGradient(p.name.clone()))?
            .to_vec();
        let decay = if p.kind.decays() || cfg.decay_bias {
            cfg.weight_decay
        } else {
            0.0
        };
        sgd_update(p.tensor.data_mut(), &grad, v, lr, cfg.momentum, decay);
    }
    state.iteration += 1;
    Ok(())
}

/// One line of the loss log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    /// 1-based step number.
    pub iter: u64,
    pub lr: f64,
    pub side_loss: f64,
    pub pred_loss: f64,
    pub total: f64,
}

pub const LOG_HEADER: &str = "iter,lr,side_loss,pred_loss,total";

impl LogRow {
    /// Shortest round-trip formatting, so logs compare bitwise.
    pub fn to_csv(&self) -> String {
        format!("{},{},{},{},{}", self.iter, self.lr, self.side_loss, self.pred_loss, self.total)
    }

    pub fn from_csv(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 5 {
            return Err(Error::invalid("loss_log", format!("bad row `{line}`")));
        }
        let num = |s: &str| parse_num::<f64>("loss_log", s);
        Ok(LogRow {
            iter: parse_num("loss_log", f[0])?,
            lr: num(f[1])?,
            side_loss: num(f[2])?,
            pred_loss: num(f[3])?,
            total: num(f[4])?,
        })
    }
}

pub fn read_log(path: &Path) -> Result<Vec<LogRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .skip_while(|l| l.trim() == LOG_HEADER)
        .filter(|l| !l.trim().is_empty())
        .map(LogRow::from_csv)
        .collect()
}

/// Consensus and resize for every sample.
pub fn prepare_dataset(samples: &[Sample], cfg: &TrainConfig) -> Result<Vec<LabeledSample>> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    samples.iter().map(|s| prepare(s, cfg.consensus, cfg.image_size)).collect()
}

/// Called after backward and before the update; may edit gradients.
pub type GradHook<'a, T> = Box<dyn FnMut(u64, &mut NetworkGraph<T>) + 'a>;

pub struct TrainOptions<'a, T: Float> {
    /// Receives `loss_log.csv` and checkpoints when set.
    pub out_dir: Option<PathBuf>,
    pub grad_hook: Option<GradHook<'a, T>>,
    /// Stop after this many steps even if `max_iter` is not reached.
    pub stop_after: Option<u64>,
}

impl<T: Float> Default for TrainOptions<'_, T> {
    fn default() -> Self {
        TrainOptions {
            out_dir: None,
            grad_hook: None,
            stop_after: None,
        }
    }
}

pub fn save_training_state<T: Float>(graph: &NetworkGraph<T>, state: &OptimizerState<T>, path: &Path) -> Result<()> {
    save_checkpoint_with(graph, &state.to_records(), path)
}

pub fn load_training_state<T: Float>(path: &Path) -> Result<(NetworkGraph<T>, OptimizerState<T>)> {
    let (graph, records) = load_checkpoint_with::<T>(path)?;
    let state = OptimizerState::from_records(&graph, &records)?;
    Ok((graph, state))
}

fn grads_finite<T: Float>(graph: &NetworkGraph<T>) -> bool {
    graph
        .params()
        .iter()
        .all(|p| p.tensor.grad().is_none_or(|g| g.iter().all(|v| v.is_finite())))
}

fn append_log(path: &Path, row: &LogRow) -> Result<()> {
    let fresh = !path.exists();
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut text = String::new();
    if fresh {
        text.push_str(LOG_HEADER);
        text.push('\n');
    }
    text.push_str(&row.to_csv());
    text.push('\n');
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Runs single-sample steps from `state.iteration` up to `cfg.max_iter`.
///
/// Sample order, augmentation and dropout masks are functions of the global
/// iteration, so resuming from a saved state reproduces the uninterrupted
/// run. A non-finite loss or gradient aborts the run; the state from before
/// the failing step is written to `last_good.ckpt` in `out_dir` (or the
/// system temp directory).
pub fn train<T: Float>(
    graph: &mut NetworkGraph<T>,
    state: &mut OptimizerState<T>,
    data: &[LabeledSample],
    cfg: &TrainConfig,
    mut opts: TrainOptions<'_, T>,
) -> Result<Vec<LogRow>> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if let Some(dir) = &opts.out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let loss_cfg = cfg.loss_config();
    let spec = cfg.augment_spec();
    let mut log = Vec::new();
    graph.set_mode(Mode::Train);
    let end = match opts.stop_after {
        Some(k) => (state.iteration + k).min(cfg.max_iter),
        None => cfg.max_iter,
    };
    while state.iteration < end {
        let i = state.iteration;
        let lr = poly_lr(i, cfg)?;
        let sample = &data[sample_index(data.len(), cfg.seed, i)?];
        let s = augment(sample, &spec, i);
        let x: Tensor<T> = s.image.cast();
        let target = compute_beta(&s.gt)?;
        graph.set_iteration(i);
        graph.zero_grad();
        let out = graph.forward(&x)?;
        let sides = out.sides.expect("train mode yields side outputs");
        let loss = total_loss(&out.pred, &sides, &target, &loss_cfg)?;
        let mut ok = loss.total.is_finite();
        if ok {
            graph.backward(&loss.grad_pred, &loss.grad_sides)?;
            if let Some(hook) = opts.grad_hook.as_mut() {
                hook(i, graph);
            }
            ok = grads_finite(graph);
        }
        if !ok {
            let dir = opts.out_dir.clone().unwrap_or_else(std::env::temp_dir);
            let snapshot = dir.join("last_good.ckpt");
            graph.zero_grad();
            save_training_state(graph, state, &snapshot)?;
            return Err(Error::NonFiniteLoss { iteration: i, snapshot });
        }
        sgd_step(graph, state, cfg, lr)?;
        let row = LogRow {
            iter: i + 1,
            lr,
            side_loss: loss.side,
            pred_loss: loss.pred,
            total: loss.total,
        };
        if let Some(dir) = &opts.out_dir {
            append_log(&dir.join("loss_log.csv"), &row)?;
            if cfg.checkpoint_every > 0 && state.iteration % cfg.checkpoint_every == 0 {
                graph.zero_grad();
                save_training_state(graph, state, &dir.join(format!("checkpoint_{:06}.ckpt", state.iteration)))?;
            }
        }
        log.push(row);
    }
    graph.zero_grad();
    if let Some(dir) = &opts.out_dir {
        save_training_state(graph, state, &dir.join("final.ckpt"))?;
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::disk_outline_sample;

    fn cfg() -> TrainConfig {
        TrainConfig::default()
    }

    #[test]
    fn poly_schedule_values() {
        let c = cfg();
        assert_eq!(poly_lr(0, &c).unwrap(), 1e-6);
        assert_eq!(poly_lr(c.max_iter, &c).unwrap(), 0.0);
        assert!((poly_lr(c.max_iter / 2, &c).unwrap() - 5.7435e-7).abs() < 1e-11);
        assert!(poly_lr(c.max_iter + 1, &c).is_err());
        let lrs: Vec<f64> = (0..=c.max_iter).step_by(500).map(|i| poly_lr(i, &c).unwrap()).collect();
        assert!(lrs.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn zero_lr_only_decays_velocity() {
        let mut theta = vec![1.0f64, -2.0];
        let mut v = vec![0.5, 0.25];
        sgd_update(&mut theta, &[3.0, 4.0], &mut v, 0.0, 0.9, 2e-4);
        assert_eq!(theta, vec![1.45, -1.775]);
        assert_eq!(v, vec![0.45, 0.225]);
    }

    #[test]
    fn plain_gradient_descent_without_momentum() {
        let mut theta = vec![1.0f64];
        let mut v = vec![0.0];
        sgd_update(&mut theta, &[0.5], &mut v, 0.1, 0.0, 0.0);
        assert_eq!(theta, vec![1.0 - 0.1 * 0.5]);
    }

    #[test]
    fn quadratic_matches_hand_simulation() {
        // f(θ) = θ², g = 2θ, lr = 0.1, momentum = 0.9, no decay.
        let expected = [0.8, 0.46, 0.062, -0.3086, -0.58042];
        let (mut theta, mut v) = (vec![1.0f64], vec![0.0f64]);
        for &want in &expected {
            let g = 2.0 * theta[0];
            sgd_update(&mut theta, &[g], &mut v, 0.1, 0.9, 0.0);
            assert!((theta[0] - want).abs() < 1e-12, "{} vs {want}", theta[0]);
        }
    }

    #[test]
    fn config_file_round_trip_and_unknown_keys() {
        let c = TrainConfig::parse("# run\nbase_lr = 1e-3\nmax_iter=500\nimage_size = 64\nalpha = 1,0,0,0,0\nconsensus = all\n")
            .unwrap();
        assert_eq!(c.base_lr, 1e-3);
        assert_eq!(c.max_iter, 500);
        assert_eq!(c.image_size, Some((64, 64)));
        assert_eq!(c.alpha, [1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(c.consensus, ConsensusPolicy::all());
        assert!(matches!(TrainConfig::parse("learning_rate = 1"), Err(Error::Config(_))));
        assert!(TrainConfig::parse("momentum = 1.0").is_err());
        assert!(TrainConfig::parse("batch = 2").is_err());
    }

    fn tiny_run() -> (NetworkGraph<f32>, OptimizerState<f32>, Vec<LabeledSample>, TrainConfig) {
        let c = TrainConfig {
            base_lr: 1e-3,
            max_iter: 6,
            image_size: None,
            width_divisor: 64,
            ..TrainConfig::default()
        };
        let (image, gt) = disk_outline_sample(32).unwrap();
        let data = vec![
            LabeledSample {
                id: "a".into(),
                image: image.clone(),
                gt: gt.clone(),
            },
            LabeledSample {
                id: "b".into(),
                image: image.map(|v| 1.0 - v),
                gt,
            },
        ];
        let g = NetworkGraph::new(c.network_config(3), c.seed).unwrap();
        let s = OptimizerState::new(&g);
        (g, s, data, c)
    }

    #[test]
    fn deterministic_and_resumable() {
        let (mut g1, mut s1, data, c) = tiny_run();
        let full = train(&mut g1, &mut s1, &data, &c, TrainOptions::default()).unwrap();
        assert_eq!(full.len(), 6);

        let (mut g2, mut s2, _, _) = tiny_run();
        let again = train(&mut g2, &mut s2, &data, &c, TrainOptions::default()).unwrap();
        assert_eq!(full, again);

        let dir = tempfile::tempdir().unwrap();
        let (mut g3, mut s3, _, _) = tiny_run();
        let head = train(
            &mut g3,
            &mut s3,
            &data,
            &c,
            TrainOptions {
                stop_after: Some(3),
                ..TrainOptions::default()
            },
        )
        .unwrap();
        let path = dir.path().join("mid.ckpt");
        save_training_state(&g3, &s3, &path).unwrap();
        let (mut g4, mut s4) = load_training_state::<f32>(&path).unwrap();
        assert_eq!(s4.iteration, 3);
        let tail = train(&mut g4, &mut s4, &data, &c, TrainOptions::default()).unwrap();
        assert_eq!([head, tail].concat(), full);
    }

    #[test]
    fn nan_gradient_aborts_with_snapshot() {
        let (mut g, mut s, data, c) = tiny_run();
        let dir = tempfile::tempdir().unwrap();
        let hook: GradHook<f32> = Box::new(|i, g: &mut NetworkGraph<f32>| {
            if i == 2 {
                g.params_mut()[0].tensor.grad_mut()[0] = f32::NAN;
            }
        });
        let err = train(
            &mut g,
            &mut s,
            &data,
            &c,
            TrainOptions {
                out_dir: Some(dir.path().to_path_buf()),
                grad_hook: Some(hook),
                stop_after: None,
            },
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonFiniteLoss { iteration: 2, .. }));
        let (restored, rs) = load_training_state::<f32>(&dir.path().join("last_good.ckpt")).unwrap();
        assert_eq!(rs.iteration, 2);
        assert!(restored.params().iter().all(|p| p.tensor.is_finite()));
        assert_eq!(read_log(&dir.path().join("loss_log.csv")).unwrap().len(), 2);
    }

    #[test]
    fn zero_gradients_without_decay_are_fixed_points() {
        let (mut g, mut s, _, _) = tiny_run();
        let c = TrainConfig {
            weight_decay: 0.0,
            ..cfg()
        };
        for p in g.params_mut() {
            p.tensor.zero_grad();
        }
        let before: Vec<Vec<f32>> = g.params().iter().map(|p| p.tensor.data().to_vec()).collect();
        sgd_step(&mut g, &mut s, &c, 0.5).unwrap();
        let after: Vec<Vec<f32>> = g.params().iter().map(|p| p.tensor.data().to_vec()).collect();
        assert_eq!(before, after);
        g.zero_grad();
        assert!(matches!(sgd_step(&mut g, &mut s, &c, 0.5), Err(Error::MissingGradient(_))));
    }
}
