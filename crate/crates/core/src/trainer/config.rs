use std::fmt::Write as _;
use std::path::Path;

use crate::assign::TopKMode;
use crate::codebook::RowSelection;
use crate::error::{Error, Result};

/// Every knob of both training stages. Field names double as config-file keys.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub d: usize,
    pub m_c: usize,
    pub m_r: usize,
    pub t_c: usize,
    pub t_r: usize,
    pub w_cr: f64,
    pub lambda_thr: f64,
    pub d_r: usize,
    pub alpha: f64,
    pub lr_coarse: f64,
    pub lr_fine: f64,
    pub l2_weight: f64,
    pub num_layers: usize,
    pub negatives_per_positive: usize,
    pub f_c: usize,
    pub f_r: usize,
    pub patience_coarse: usize,
    pub patience_fine: usize,
    /// Triplets per optimiser step; 0 means one full batch per epoch.
    pub batch_size: usize,
    pub seed: u64,
    /// Anchor weight used when seeding assignments from partitions.
    pub w_star: f64,
    pub topk_mode: TopKMode,
    pub row_selection: RowSelection,
    /// Hard cap on epochs per phase, on top of early stopping.
    pub max_epochs: usize,
    pub pca_max_iter: usize,
    /// Worker threads; 0 lets the pool decide.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            d: 128,
            m_c: 300,
            m_r: 100,
            t_c: 2,
            t_r: 5,
            w_cr: 0.5,
            lambda_thr: 0.05,
            d_r: 64,
            alpha: 0.01,
            lr_coarse: 1e-3,
            lr_fine: 3e-3,
            l2_weight: 5e-4,
            num_layers: 3,
            negatives_per_positive: 5,
            f_c: 1,
            f_r: 1,
            patience_coarse: 10,
            patience_fine: 5,
            batch_size: 2048,
            seed: 2024,
            w_star: 0.5,
            topk_mode: TopKMode::Signed,
            row_selection: RowSelection::Random,
            max_epochs: 500,
            pca_max_iter: 200,
            threads: 0,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .trim()
        .parse()
        .map_err(|e: T::Err| Error::Config(format!("{key}: cannot parse '{}': {e}", value.trim())))
}

macro_rules! config_fields {
    ($($field:ident),* $(,)?) => {
        impl TrainConfig {
            /// Names accepted by [`TrainConfig::set`], in serialisation order.
            pub const KEYS: &'static [&'static str] = &[$(stringify!($field)),*];

            /// Assigns one field from its text form.
            pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
                match key.trim() {
                    $(stringify!($field) => self.$field = parse(key, value)?,)*
                    other => return Err(Error::Config(format!("unknown key '{other}'"))),
                }
                Ok(())
            }

            /// `(key, value)` pairs; floats use a round-trip representation.
            pub fn entries(&self) -> Vec<(&'static str, String)> {
                vec![$((stringify!($field), Repr::repr(&self.$field))),*]
            }
        }
    };
}

trait Repr {
    fn repr(&self) -> String;
}

impl Repr for f64 {
    fn repr(&self) -> String {
        format!("{self:?}")
    }
}

macro_rules! display_repr {
    ($($t:ty),*) => {$(impl Repr for $t { fn repr(&self) -> String { self.to_string() } })*};
}
display_repr!(usize, u64, TopKMode, RowSelection);

config_fields!(
    d,
    m_c,
    m_r,
    t_c,
    t_r,
    w_cr,
    lambda_thr,
    d_r,
    alpha,
    lr_coarse,
    lr_fine,
    l2_weight,
    num_layers,
    negatives_per_positive,
    f_c,
    f_r,
    patience_coarse,
    patience_fine,
    batch_size,
    seed,
    w_star,
    topk_mode,
    row_selection,
    max_epochs,
    pca_max_iter,
    threads,
);

impl TrainConfig {
    /// Small codebooks suited to corpora of a few hundred entities.
    pub fn desk() -> Self {
        TrainConfig {
            d: 32,
            m_c: 16,
            m_r: 8,
            t_c: 2,
            t_r: 3,
            d_r: 8,
            lr_coarse: 1e-2,
            lr_fine: 3e-2,
            num_layers: 2,
            negatives_per_positive: 1,
            batch_size: 0,
            seed: 7,
            max_epochs: 60,
            ..TrainConfig::default()
        }
    }

    /// Applies `key = value` lines. Blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", n + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("d", self.d),
            ("m_c", self.m_c),
            ("m_r", self.m_r),
            ("t_c", self.t_c),
            ("t_r", self.t_r),
            ("d_r", self.d_r),
            ("negatives_per_positive", self.negatives_per_positive),
            ("f_c", self.f_c),
            ("f_r", self.f_r),
            ("patience_coarse", self.patience_coarse),
            ("patience_fine", self.patience_fine),
            ("max_epochs", self.max_epochs),
            ("pca_max_iter", self.pca_max_iter),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.d_r > self.d.min(self.m_r) {
            return Err(Error::Config(format!(
                "d_r ({}) cannot exceed d ({}) or m_r ({})",
                self.d_r, self.d, self.m_r
            )));
        }
        if self.m_r > self.m_c {
            return Err(Error::Config(format!("m_r ({}) cannot exceed m_c ({})", self.m_r, self.m_c)));
        }
        if !(0.0..=1.0).contains(&self.w_cr) {
            return Err(Error::Config(format!("w_cr must lie in [0, 1], got {}", self.w_cr)));
        }
        if !(self.w_star > 0.0 && self.w_star <= 1.0) {
            return Err(Error::Config(format!("w_star must lie in (0, 1], got {}", self.w_star)));
        }
        for (name, v) in [
            ("lambda_thr", self.lambda_thr),
            ("alpha", self.alpha),
            ("lr_coarse", self.lr_coarse),
            ("lr_fine", self.lr_fine),
            ("l2_weight", self.l2_weight),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}
