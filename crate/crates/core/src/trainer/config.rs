//! Experiment configuration as a flat `key=value` record.

use std::fmt;
use std::str::FromStr;

use crate::adjacency::{normalization_name, parse_normalization, AdjacencyConfig, PKind, SymMode};
use crate::error::{Error, Result};
use crate::generators::{FpInit, GeneratorKind, GeneratorOptions};
use crate::numerics::{Activation, Normalization};

/// Feature corruption used by the denoising task.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NoiseScheme {
    /// Binary masking for binary features, zero-masking otherwise.
    Auto,
    Binary,
    Zero,
    Gaussian,
}

/// Validation metric used to pick the checkpoint.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Selection {
    Accuracy,
    Loss,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub lambda: f64,
    /// Percentage of cells corrupted.
    pub r: f64,
    /// Negative-to-positive ratio for binary noise.
    pub eta: f64,
    pub k: usize,
    pub lr_c: f64,
    pub lr_dae: f64,
    /// Adjacency dropout for the classifier.
    pub dropout_c: f64,
    /// Adjacency dropout for the denoiser.
    pub dropout_dae: f64,
    /// Dropout on hidden activations of both networks.
    pub hidden_dropout: f64,
    pub hidden_c: usize,
    /// `None` picks `min(512, 2f)`.
    pub hidden_dae: Option<usize>,
    pub max_epochs: usize,
    pub eval_every: usize,
    /// Stop after this many evaluations without improvement.
    pub patience: Option<usize>,
    pub seed: u64,
    pub runs: usize,
    pub generator: GeneratorKind,
    /// `None` uses the generator's default.
    pub p_kind: Option<PKind>,
    pub sym_mode: SymMode,
    pub norm_mode: Normalization,
    pub add_self_loops: bool,
    pub noise: NoiseScheme,
    pub sigma: f64,
    pub selection: Selection,
    pub fp_init: FpInit,
    pub mask_refresh_every: usize,
    pub mlp_activation: Activation,
    /// Keep θ_G fixed (no optimizer updates).
    pub freeze_generator: bool,
    /// Snapshot interval for the two-stage variant.
    pub two_stage_t: usize,
    /// Classifier epochs per two-stage snapshot.
    pub stage_two_epochs: usize,
    pub zeta: usize,
    pub ada_threshold: f64,
    pub ada_rounds: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            lambda: 1.0,
            r: 10.0,
            eta: 5.0,
            k: 20,
            lr_c: 0.01,
            lr_dae: 0.001,
            dropout_c: 0.5,
            dropout_dae: 0.5,
            hidden_dropout: 0.5,
            hidden_c: 32,
            hidden_dae: None,
            max_epochs: 2000,
            eval_every: 1,
            patience: None,
            seed: 0,
            runs: 10,
            generator: GeneratorKind::Mlp,
            p_kind: None,
            sym_mode: SymMode::Mean,
            norm_mode: Normalization::Symmetric,
            add_self_loops: false,
            noise: NoiseScheme::Auto,
            sigma: 0.1,
            selection: Selection::Accuracy,
            fp_init: FpInit::Knn,
            mask_refresh_every: 1,
            mlp_activation: Activation::Relu,
            freeze_generator: false,
            two_stage_t: 10,
            stage_two_epochs: 200,
            zeta: 0,
            ada_threshold: 0.9,
            ada_rounds: 5,
        }
    }
}

/// Every recognised key, in serialization order.
pub const CONFIG_KEYS: &[&str] = &[
    "lambda",
    "r",
    "eta",
    "k",
    "lr_c",
    "lr_dae",
    "dropout_c",
    "dropout_dae",
    "hidden_dropout",
    "hidden_c",
    "hidden_dae",
    "max_epochs",
    "eval_every",
    "patience",
    "seed",
    "runs",
    "generator",
    "p_kind",
    "sym_mode",
    "norm_mode",
    "add_self_loops",
    "noise",
    "sigma",
    "selection",
    "fp_init",
    "mask_refresh_every",
    "mlp_activation",
    "freeze_generator",
    "two_stage_t",
    "stage_two_epochs",
    "zeta",
    "ada_threshold",
    "ada_rounds",
];

fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::invalid(format!("`{key}`: cannot parse `{v}`")))
}

fn opt<T: FromStr>(key: &str, v: &str) -> Result<Option<T>> {
    match v {
        "auto" | "none" | "" => Ok(None),
        _ => num(key, v).map(Some),
    }
}

fn opt_str<T: fmt::Display>(v: &Option<T>, none: &str) -> String {
    v.as_ref().map_or_else(|| none.to_string(), |x| x.to_string())
}

impl ExperimentConfig {
    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "lambda" => self.lambda = num(key, v)?,
            "r" => self.r = num(key, v)?,
            "eta" => self.eta = num(key, v)?,
            "k" => self.k = num(key, v)?,
            "lr_c" => self.lr_c = num(key, v)?,
            "lr_dae" => self.lr_dae = num(key, v)?,
            "dropout_c" => self.dropout_c = num(key, v)?,
            "dropout_dae" => self.dropout_dae = num(key, v)?,
            "hidden_dropout" => self.hidden_dropout = num(key, v)?,
            "hidden_c" => self.hidden_c = num(key, v)?,
            "hidden_dae" => self.hidden_dae = opt(key, v)?,
            "max_epochs" => self.max_epochs = num(key, v)?,
            "eval_every" => self.eval_every = num(key, v)?,
            "patience" => self.patience = opt(key, v)?,
            "seed" => self.seed = num(key, v)?,
            "runs" => self.runs = num(key, v)?,
            "generator" => self.generator = v.parse()?,
            "p_kind" => {
                self.p_kind = match v {
                    "auto" => None,
                    _ => Some(v.parse()?),
                }
            }
            "sym_mode" => self.sym_mode = v.parse()?,
            "norm_mode" => self.norm_mode = parse_normalization(v)?,
            "add_self_loops" => self.add_self_loops = num(key, v)?,
            "noise" => {
                self.noise = match v {
                    "auto" => NoiseScheme::Auto,
                    "binary" => NoiseScheme::Binary,
                    "zero" => NoiseScheme::Zero,
                    "gaussian" => NoiseScheme::Gaussian,
                    _ => return Err(Error::invalid(format!("unknown noise scheme `{v}`"))),
                }
            }
            "sigma" => self.sigma = num(key, v)?,
            "selection" => {
                self.selection = match v {
                    "accuracy" => Selection::Accuracy,
                    "loss" => Selection::Loss,
                    _ => return Err(Error::invalid(format!("unknown selection `{v}`"))),
                }
            }
            "fp_init" => self.fp_init = v.parse()?,
            "mask_refresh_every" => self.mask_refresh_every = num(key, v)?,
            "mlp_activation" => {
                self.mlp_activation = match v {
                    "relu" => Activation::Relu,
                    "elu" => Activation::Elu,
                    _ => return Err(Error::invalid(format!("unknown activation `{v}`"))),
                }
            }
            "freeze_generator" => self.freeze_generator = num(key, v)?,
            "two_stage_t" => self.two_stage_t = num(key, v)?,
            "stage_two_epochs" => self.stage_two_epochs = num(key, v)?,
            "zeta" => self.zeta = num(key, v)?,
            "ada_threshold" => self.ada_threshold = num(key, v)?,
            "ada_rounds" => self.ada_rounds = num(key, v)?,
            other => return Err(Error::invalid(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Textual value of one field.
    pub fn get(&self, key: &str) -> Result<String> {
        Ok(match key {
            "lambda" => self.lambda.to_string(),
            "r" => self.r.to_string(),
            "eta" => self.eta.to_string(),
            "k" => self.k.to_string(),
            "lr_c" => self.lr_c.to_string(),
            "lr_dae" => self.lr_dae.to_string(),
            "dropout_c" => self.dropout_c.to_string(),
            "dropout_dae" => self.dropout_dae.to_string(),
            "hidden_dropout" => self.hidden_dropout.to_string(),
            "hidden_c" => self.hidden_c.to_string(),
            "hidden_dae" => opt_str(&self.hidden_dae, "auto"),
            "max_epochs" => self.max_epochs.to_string(),
            "eval_every" => self.eval_every.to_string(),
            "patience" => opt_str(&self.patience, "none"),
            "seed" => self.seed.to_string(),
            "runs" => self.runs.to_string(),
            "generator" => self.generator.to_string(),
            "p_kind" => opt_str(&self.p_kind, "auto"),
            "sym_mode" => self.sym_mode.to_string(),
            "norm_mode" => normalization_name(self.norm_mode).to_string(),
            "add_self_loops" => self.add_self_loops.to_string(),
            "noise" => match self.noise {
                NoiseScheme::Auto => "auto",
                NoiseScheme::Binary => "binary",
                NoiseScheme::Zero => "zero",
                NoiseScheme::Gaussian => "gaussian",
            }
            .to_string(),
            "sigma" => self.sigma.to_string(),
            "selection" => match self.selection {
                Selection::Accuracy => "accuracy",
                Selection::Loss => "loss",
            }
            .to_string(),
            "fp_init" => self.fp_init.to_string(),
            "mask_refresh_every" => self.mask_refresh_every.to_string(),
            "mlp_activation" => match self.mlp_activation {
                Activation::Relu => "relu",
                Activation::Elu => "elu",
            }
            .to_string(),
            "freeze_generator" => self.freeze_generator.to_string(),
            "two_stage_t" => self.two_stage_t.to_string(),
            "stage_two_epochs" => self.stage_two_epochs.to_string(),
            "zeta" => self.zeta.to_string(),
            "ada_threshold" => self.ada_threshold.to_string(),
            "ada_rounds" => self.ada_rounds.to_string(),
            other => return Err(Error::invalid(format!("unknown config key `{other}`"))),
        })
    }

    pub fn to_pairs(&self) -> Vec<(String, String)> {
        CONFIG_KEYS
            .iter()
            .map(|&k| (k.to_string(), self.get(k).expect("known key")))
            .collect()
    }

    /// Parses `key=value` lines; blank lines and `#` comments are skipped.
    /// Keys absent from the text keep their default values.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    /// Applies `key=value` lines on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("line {}: expected key=value", i + 1)))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn p_kind(&self) -> PKind {
        self.p_kind.unwrap_or_else(|| self.generator.default_p())
    }

    pub fn adjacency(&self) -> AdjacencyConfig {
        AdjacencyConfig {
            p: self.p_kind(),
            sym: self.sym_mode,
            norm: self.norm_mode,
            add_self_loops: self.add_self_loops,
        }
    }

    pub fn generator_options(&self) -> GeneratorOptions {
        GeneratorOptions {
            k: self.k,
            mask_refresh_every: self.mask_refresh_every,
            fp_init: self.fp_init,
            mlp_activation: self.mlp_activation,
            initial_graph: None,
        }
    }

    pub fn dae_hidden(&self, features: usize) -> usize {
        self.hidden_dae.unwrap_or_else(|| 512.min(2 * features)).max(1)
    }

    /// Checks ranges that every run needs.
    pub fn validate(&self) -> Result<()> {
        let rate = |name: &str, p: f64| {
            if (0.0..1.0).contains(&p) {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} = {p} outside [0, 1)")))
            }
        };
        rate("dropout_c", self.dropout_c)?;
        rate("dropout_dae", self.dropout_dae)?;
        rate("hidden_dropout", self.hidden_dropout)?;
        if self.lambda < 0.0 {
            return Err(Error::invalid("lambda must be non-negative"));
        }
        if !(0.0..=100.0).contains(&self.r) || self.eta < 0.0 {
            return Err(Error::invalid("r must lie in [0, 100] and eta be non-negative"));
        }
        if self.k == 0 || self.hidden_c == 0 || self.eval_every == 0 || self.runs == 0 {
            return Err(Error::invalid("k, hidden_c, eval_every and runs must be positive"));
        }
        if self.two_stage_t == 0 || self.mask_refresh_every == 0 {
            return Err(Error::invalid("two_stage_t and mask_refresh_every must be positive"));
        }
        if !(self.lr_c > 0.0 && self.lr_dae >= 0.0) {
            return Err(Error::invalid("learning rates must be positive"));
        }
        Ok(())
    }
}

impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in self.to_pairs() {
            writeln!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

impl FromStr for ExperimentConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

/// Value sets searched in grid mode.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub lambda: Vec<f64>,
    pub lr_c: Vec<f64>,
    pub lr_dae: Vec<f64>,
    pub dropout_c: Vec<f64>,
    pub dropout_dae: Vec<f64>,
    pub k: Vec<usize>,
    pub r: Vec<f64>,
    pub eta: Vec<f64>,
}

impl Grid {
    /// The full search space.
    pub fn standard() -> Self {
        Grid {
            lambda: vec![0.1, 1.0, 10.0, 100.0, 500.0],
            lr_c: vec![0.01, 0.001],
            lr_dae: vec![0.01, 0.001],
            dropout_c: vec![0.25, 0.5],
            dropout_dae: vec![0.25, 0.5],
            k: vec![10, 15, 20, 30],
            r: vec![1.0, 5.0, 10.0],
            eta: vec![1.0, 5.0],
        }
    }

    /// Rejects values outside the standard sets (λ = 0 is also allowed).
    pub fn validate(&self) -> Result<()> {
        let standard = Grid::standard();
        let check = |name: &str, vals: &[f64], allowed: &[f64]| {
            match vals.iter().find(|v| !allowed.contains(v)) {
                Some(v) => Err(Error::invalid(format!("{name} = {v} is not in the search grid"))),
                None if vals.is_empty() => Err(Error::invalid(format!("{name}: empty grid"))),
                None => Ok(()),
            }
        };
        let mut lambdas = standard.lambda.clone();
        lambdas.push(0.0);
        check("lambda", &self.lambda, &lambdas)?;
        check("lr_c", &self.lr_c, &standard.lr_c)?;
        check("lr_dae", &self.lr_dae, &standard.lr_dae)?;
        check("dropout_c", &self.dropout_c, &standard.dropout_c)?;
        check("dropout_dae", &self.dropout_dae, &standard.dropout_dae)?;
        let ks: Vec<f64> = self.k.iter().map(|&k| k as f64).collect();
        let allowed_k: Vec<f64> = standard.k.iter().map(|&k| k as f64).collect();
        check("k", &ks, &allowed_k)?;
        check("r", &self.r, &standard.r)?;
        check("eta", &self.eta, &standard.eta)
    }

    /// Every combination applied on top of `base`.
    pub fn configs(&self, base: &ExperimentConfig) -> Vec<ExperimentConfig> {
        let mut out = vec![base.clone()];
        macro_rules! expand {
            ($field:ident) => {
                out = out
                    .into_iter()
                    .flat_map(|c| {
                        self.$field.iter().map(move |&v| {
                            let mut c = c.clone();
                            c.$field = v;
                            c
                        })
                    })
                    .collect();
            };
        }
        expand!(lambda);
        expand!(lr_c);
        expand!(lr_dae);
        expand!(dropout_c);
        expand!(dropout_dae);
        expand!(k);
        expand!(r);
        expand!(eta);
        out
    }

    pub fn size(&self) -> usize {
        self.lambda.len()
            * self.lr_c.len()
            * self.lr_dae.len()
            * self.dropout_c.len()
            * self.dropout_dae.len()
            * self.k.len()
            * self.r.len()
            * self.eta.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_through_text() {
        let mut c = ExperimentConfig::default();
        c.lambda = 0.1;
        c.generator = GeneratorKind::MlpDiag;
        c.p_kind = Some(PKind::EluPlusOne);
        c.hidden_dae = Some(64);
        c.patience = Some(100);
        c.fp_init = FpInit::PreElu { offset: 6.0 };
        c.selection = Selection::Loss;
        let back = ExperimentConfig::parse(&c.to_string()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn comments_and_errors() {
        let c = ExperimentConfig::parse("# wine\nlambda = 10 # tuned\n\nk=15\n").unwrap();
        assert_eq!((c.lambda, c.k), (10.0, 15));
        assert!(ExperimentConfig::parse("lamda=1").is_err());
        assert!(ExperimentConfig::parse("k=twenty").is_err());
        assert!(ExperimentConfig::parse("just text").is_err());
    }

    #[test]
    fn grid_product() {
        let g = Grid::standard();
        assert_eq!(g.size(), 1920);
        assert_eq!(g.configs(&ExperimentConfig::default()).len(), 1920);
        g.validate().unwrap();
        let mut bad = g.clone();
        bad.k = vec![7];
        assert!(bad.validate().is_err());
    }

    #[test]
    fn derived_settings() {
        let c = ExperimentConfig::default();
        assert_eq!(c.dae_hidden(13), 26);
        assert_eq!(c.dae_hidden(1000), 512);
        let mut fp = c.clone();
        fp.generator = GeneratorKind::Fp;
        assert_eq!(fp.adjacency().p, PKind::EluPlusOne);
        c.validate().unwrap();
    }
}
