//! Variable-length encoding of a collaborative-filtering network.
//!
//! A genome is read head to tail as: one embedding gene (vector length shared
//! by the user and item tables), zero or more hidden blocks (dense layer, ReLU,
//! dropout) and one prediction gene (a dense layer with a single output).
//! The genome *length* counts every unit, so a length-4 genome has two hidden
//! blocks.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

/// Weight-initialization scheme carried by every dense layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum InitScheme {
    /// Random normal with a fixed small standard deviation.
    Rn,
    /// Random uniform with a fixed small bound.
    Ru,
    /// Xavier normal.
    Xn,
    /// Xavier uniform.
    Xu,
    /// Kaiming normal.
    Kn,
    /// Kaiming uniform.
    Ku,
}

impl InitScheme {
    pub const ALL: [InitScheme; 6] = [
        InitScheme::Rn,
        InitScheme::Ru,
        InitScheme::Xn,
        InitScheme::Xu,
        InitScheme::Kn,
        InitScheme::Ku,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            InitScheme::Rn => "Rn",
            InitScheme::Ru => "Ru",
            InitScheme::Xn => "Xn",
            InitScheme::Xu => "Xu",
            InitScheme::Kn => "Kn",
            InitScheme::Ku => "Ku",
        }
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self::ALL[rng.random_range(0..Self::ALL.len())]
    }

    pub fn is_uniform(self) -> bool {
        matches!(self, InitScheme::Ru | InitScheme::Xu | InitScheme::Ku)
    }
}

impl fmt::Display for InitScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InitScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|scheme| scheme.as_str() == s)
            .ok_or_else(|| Error::parse("init", format!("unknown init scheme {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EmbeddingGene {
    pub embedding_dim: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockGene {
    pub neurons: usize,
    pub dropout_rate: f64,
    pub init: InitScheme,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PredictionGene {
    pub init: InitScheme,
}

/// Run-local genome identifier, assigned by a monotone counter.
pub type GenomeId = u64;

/// One individual of the population.
///
/// `PartialEq` compares structure only; the id is bookkeeping.
#[derive(Debug, Clone)]
pub struct Genome {
    pub id: GenomeId,
    pub embedding: EmbeddingGene,
    pub blocks: Vec<BlockGene>,
    pub prediction: PredictionGene,
}

impl PartialEq for Genome {
    fn eq(&self, other: &Self) -> bool {
        self.embedding == other.embedding && self.blocks == other.blocks && self.prediction == other.prediction
    }
}

impl Genome {
    pub fn new(embedding_dim: usize, blocks: Vec<BlockGene>, prediction_init: InitScheme) -> Self {
        Genome {
            id: 0,
            embedding: EmbeddingGene { embedding_dim },
            blocks,
            prediction: PredictionGene { init: prediction_init },
        }
    }

    pub fn with_id(mut self, id: GenomeId) -> Self {
        self.id = id;
        self
    }

    /// Total unit count: embedding + hidden blocks + prediction.
    pub fn len(&self) -> usize {
        self.blocks.len() + 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Stable 64-bit hash of the structure (id excluded), used to key the
    /// fitness cache. Stable across processes and platforms.
    pub fn structural_hash(&self) -> u64 {
        let digest = Sha256::digest(serialize(self).as_bytes());
        let mut bytes = [0u8; 8];
        bytes.copy_from_slice(&digest[..8]);
        u64::from_le_bytes(bytes)
    }
}

/// Bounds backing the encoded-information table. All bounds are inclusive.
#[derive(Debug, Clone, PartialEq)]
pub struct GenomeRanges {
    pub length: (usize, usize),
    pub neurons: (usize, usize),
    pub dropout: (f64, f64),
    pub embedding_dim: (usize, usize),
}

impl Default for GenomeRanges {
    fn default() -> Self {
        GenomeRanges {
            length: (4, 10),
            neurons: (16, 256),
            dropout: (0.0, 0.5),
            embedding_dim: (8, 64),
        }
    }
}

impl GenomeRanges {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.length.0 > self.length.1 {
            problems.push(format!("length bounds {:?} inverted", self.length));
        }
        if self.length.0 < 2 {
            problems.push("length lower bound must be at least 2 (embedding + prediction)".into());
        }
        if self.neurons.0 > self.neurons.1 {
            problems.push(format!("neuron bounds {:?} inverted", self.neurons));
        }
        if self.neurons.0 == 0 {
            problems.push("neuron lower bound must be positive".into());
        }
        if self.embedding_dim.0 > self.embedding_dim.1 {
            problems.push(format!("embedding-dim bounds {:?} inverted", self.embedding_dim));
        }
        if self.embedding_dim.0 == 0 {
            problems.push("embedding-dim lower bound must be positive".into());
        }
        let (lo, hi) = self.dropout;
        if !lo.is_finite() || !hi.is_finite() {
            problems.push("dropout bounds must be finite".into());
        } else if lo > hi {
            problems.push(format!("dropout bounds {:?} inverted", self.dropout));
        } else if lo < 0.0 || hi >= 1.0 {
            problems.push(format!("dropout bounds {:?} must lie in [0, 1)", self.dropout));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    pub(crate) fn random_block<R: Rng + ?Sized>(&self, rng: &mut R) -> BlockGene {
        let dropout_rate = if self.dropout.0 == self.dropout.1 {
            self.dropout.0
        } else {
            rng.random_range(self.dropout.0..=self.dropout.1)
        };
        BlockGene {
            neurons: rng.random_range(self.neurons.0..=self.neurons.1),
            dropout_rate,
            init: InitScheme::random(rng),
        }
    }
}

/// Draws a genome: length uniform over the configured bounds, every numeric
/// field uniform over its range and every init scheme uniform over the six tags.
/// The returned genome has id 0.
pub fn random_genome<R: Rng + ?Sized>(ranges: &GenomeRanges, rng: &mut R) -> Result<Genome> {
    ranges.validate()?;
    let length = rng.random_range(ranges.length.0..=ranges.length.1);
    let embedding_dim = rng.random_range(ranges.embedding_dim.0..=ranges.embedding_dim.1);
    let blocks = (0..length - 2).map(|_| ranges.random_block(rng)).collect();
    Ok(Genome::new(embedding_dim, blocks, InitScheme::random(rng)))
}

/// A single broken invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    LengthAbove {
        length: usize,
        max: usize,
    },
    LengthBelow {
        length: usize,
        min: usize,
    },
    EmbeddingDimOutOfRange {
        value: usize,
        min: usize,
        max: usize,
    },
    NeuronsAbove {
        block: usize,
        value: usize,
        max: usize,
    },
    NeuronsBelow {
        block: usize,
        value: usize,
        min: usize,
    },
    DropoutOutOfRange {
        block: usize,
        value: f64,
        min: f64,
        max: f64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::LengthAbove { length, max } => write!(f, "length {length} > {max}"),
            Violation::LengthBelow { length, min } => write!(f, "length {length} < {min}"),
            Violation::EmbeddingDimOutOfRange { value, min, max } => {
                write!(f, "embedding_dim {value} outside [{min}, {max}]")
            }
            Violation::NeuronsAbove { block, value, max } => {
                write!(f, "block {block}: neurons {value} > {max}")
            }
            Violation::NeuronsBelow { block, value, min } => {
                write!(f, "block {block}: neurons {value} < {min}")
            }
            Violation::DropoutOutOfRange { block, value, min, max } => {
                write!(f, "block {block}: dropout {value} outside [{min}, {max}]")
            }
        }
    }
}

/// Lists every broken invariant; an empty list means the genome is valid.
pub fn validate(genome: &Genome, ranges: &GenomeRanges) -> Vec<Violation> {
    let mut out = Vec::new();
    let length = genome.len();
    if length > ranges.length.1 {
        out.push(Violation::LengthAbove {
            length,
            max: ranges.length.1,
        });
    }
    if length < ranges.length.0 {
        out.push(Violation::LengthBelow {
            length,
            min: ranges.length.0,
        });
    }
    let dim = genome.embedding.embedding_dim;
    if dim < ranges.embedding_dim.0 || dim > ranges.embedding_dim.1 {
        out.push(Violation::EmbeddingDimOutOfRange {
            value: dim,
            min: ranges.embedding_dim.0,
            max: ranges.embedding_dim.1,
        });
    }
    for (block, gene) in genome.blocks.iter().enumerate() {
        if gene.neurons > ranges.neurons.1 {
            out.push(Violation::NeuronsAbove {
                block,
                value: gene.neurons,
                max: ranges.neurons.1,
            });
        }
        if gene.neurons < ranges.neurons.0 {
            out.push(Violation::NeuronsBelow {
                block,
                value: gene.neurons,
                min: ranges.neurons.0,
            });
        }
        // NaN fails both comparisons, so test containment positively.
        let (lo, hi) = ranges.dropout;
        if !(gene.dropout_rate >= lo && gene.dropout_rate <= hi) {
            out.push(Violation::DropoutOutOfRange {
                block,
                value: gene.dropout_rate,
                min: lo,
                max: hi,
            });
        }
    }
    out
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BlockRecord {
    neurons: usize,
    dropout: f64,
    init: InitScheme,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PredictionRecord {
    init: InitScheme,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GenomeRecord {
    embedding_dim: usize,
    blocks: Vec<BlockRecord>,
    prediction: PredictionRecord,
}

/// Single-line JSON record:
/// `{"embedding_dim":..,"blocks":[{"neurons":..,"dropout":..,"init":".."}],"prediction":{"init":".."}}`.
pub fn serialize(genome: &Genome) -> String {
    let record = GenomeRecord {
        embedding_dim: genome.embedding.embedding_dim,
        blocks: genome
            .blocks
            .iter()
            .map(|b| BlockRecord {
                neurons: b.neurons,
                dropout: b.dropout_rate,
                init: b.init,
            })
            .collect(),
        prediction: PredictionRecord {
            init: genome.prediction.init,
        },
    };
    serde_json::to_string(&record).expect("genome record always serializes")
}

/// Parses a genome record. Out-of-range values are accepted here and left for
/// [`validate`] to report; the returned genome has id 0.
pub fn deserialize(text: &str) -> Result<Genome> {
    let record: GenomeRecord = serde_json::from_str(text.trim()).map_err(|e| {
        Error::parse(
            format!("genome record line {} column {}", e.line(), e.column()),
            e.to_string(),
        )
    })?;
    let blocks = record
        .blocks
        .into_iter()
        .map(|b| BlockGene {
            neurons: b.neurons,
            dropout_rate: b.dropout,
            init: b.init,
        })
        .collect();
    Ok(Genome::new(record.embedding_dim, blocks, record.prediction.init))
}
