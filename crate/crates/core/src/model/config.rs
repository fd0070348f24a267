use alloc::format;
use alloc::string::String;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeMode {
    /// All nodes decoded as one separator-delimited token sequence.
    Text,
    /// One learnable query per node slot, decoded in a single unmasked pass.
    Query,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EdgeMode {
    /// A GRU decodes the relation label token by token.
    Generate,
    /// An MLP picks one of the known relation classes or `<no_edge>`.
    Classify,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Imbalance {
    /// Plain cross-entropy over every cell.
    None,
    /// Focal loss over every cell.
    Focal,
    /// Cross-entropy over real edges plus `k_noedge` sampled `<no_edge>` cells.
    Sparse,
}

macro_rules! named_enum {
    ($ty:ident { $($var:ident => $name:literal),* $(,)? }) => {
        impl $ty {
            pub fn as_str(self) -> &'static str {
                match self { $($ty::$var => $name),* }
            }
        }
        impl core::str::FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok($ty::$var),)*
                    other => Err(Error::config(format!(
                        concat!("unknown ", stringify!($ty), " {:?} (expected one of: ", $($name, " ",)* ")"),
                        other
                    ))),
                }
            }
        }
        impl core::fmt::Display for $ty {
            fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

named_enum!(NodeMode { Text => "text", Query => "query" });
named_enum!(EdgeMode { Generate => "generate", Classify => "classify" });
named_enum!(Imbalance { None => "none", Focal => "focal", Sparse => "sparse" });

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub node_mode: NodeMode,
    pub edge_mode: EdgeMode,
    pub imbalance: Imbalance,
    /// Hidden width.
    pub d_model: usize,
    pub layers: usize,
    pub heads: usize,
    pub d_ff: usize,
    /// Node slots.
    pub max_nodes: usize,
    /// Tokens per node slot, end token included.
    pub node_tokens: usize,
    /// Tokens per edge label, end token included.
    pub edge_tokens: usize,
    /// Encoder input length, end token included.
    pub max_input: usize,
    /// Width of the classification head's hidden layers.
    pub edge_hidden: usize,
    /// Dropout rate inside the classification head during training.
    pub dropout: f64,
    /// Focal exponent.
    pub gamma: f64,
    /// `<no_edge>` cells kept per example in sparse mode.
    pub k_noedge: usize,
    /// Vocabulary size; set from the vocabulary when the model is built.
    pub vocab_size: usize,
    /// Edge classes including `<no_edge>`; set from the class list when the model is built.
    pub edge_classes: usize,
}

impl ModelConfig {
    /// Defaults for a mode pair. Focal loss is on for the classification
    /// head only.
    pub fn new(node_mode: NodeMode, edge_mode: EdgeMode) -> Self {
        ModelConfig {
            node_mode,
            edge_mode,
            imbalance: match edge_mode {
                EdgeMode::Classify => Imbalance::Focal,
                EdgeMode::Generate => Imbalance::None,
            },
            d_model: 64,
            layers: 2,
            heads: 2,
            d_ff: 128,
            max_nodes: 8,
            node_tokens: 4,
            edge_tokens: 4,
            max_input: 64,
            edge_hidden: 256,
            dropout: 0.5,
            gamma: 2.0,
            k_noedge: 4,
            vocab_size: 0,
            edge_classes: 0,
        }
    }

    /// Longest serialized node sequence in text mode, end token included.
    pub fn text_target_len(&self) -> usize {
        self.max_nodes * (self.node_tokens - 1) + (self.max_nodes - 1) + 1
    }

    /// Edge-loss exponent for the configured imbalance remedy.
    pub fn edge_gamma(&self) -> f64 {
        match self.imbalance {
            Imbalance::Focal => self.gamma,
            Imbalance::None | Imbalance::Sparse => 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::config(m));
        if self.max_nodes < 1 {
            return bad("max_nodes must be at least 1".into());
        }
        if self.node_tokens < 2 || self.edge_tokens < 2 {
            return bad(format!(
                "node_tokens and edge_tokens must be at least 2, got {} and {}",
                self.node_tokens, self.edge_tokens
            ));
        }
        if self.d_model == 0 || self.heads == 0 || self.d_model % self.heads != 0 {
            return bad(format!("d_model {} must be a positive multiple of heads {}", self.d_model, self.heads));
        }
        if self.d_model % 2 != 0 {
            return bad(format!("d_model {} must be even for sinusoidal positions", self.d_model));
        }
        if self.layers == 0 || self.d_ff == 0 || self.edge_hidden == 0 {
            return bad("layers, d_ff and edge_hidden must be positive".into());
        }
        if self.max_input < 2 {
            return bad("max_input must be at least 2".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return bad(format!("gamma must be >= 0, got {}", self.gamma));
        }
        if self.vocab_size < crate::vocab::NUM_SPECIAL {
            return bad(format!("vocab_size {} smaller than the special tokens", self.vocab_size));
        }
        if self.edge_mode == EdgeMode::Classify && self.edge_classes < 2 {
            return bad(format!(
                "classify mode needs at least 2 edge classes (labels + <no_edge>), got {}",
                self.edge_classes
            ));
        }
        Ok(())
    }
}
