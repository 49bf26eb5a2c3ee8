use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(into = "&'static str")]
pub enum HiddenKind {
    Sigmoid,
    Tanh,
    Lstm,
    LstmPeephole,
}

impl HiddenKind {
    pub const ALL: [HiddenKind; 4] = [
        HiddenKind::Sigmoid,
        HiddenKind::Tanh,
        HiddenKind::Lstm,
        HiddenKind::LstmPeephole,
    ];

    pub fn prefix(self) -> &'static str {
        match self {
            HiddenKind::Sigmoid => "fnn-sigmoid",
            HiddenKind::Tanh => "fnn-tanh",
            HiddenKind::Lstm => "rnn-lstm",
            HiddenKind::LstmPeephole => "rnn-lstm-peephole",
        }
    }

    pub fn is_recurrent(self) -> bool {
        matches!(self, HiddenKind::Lstm | HiddenKind::LstmPeephole)
    }
}

impl From<HiddenKind> for &'static str {
    fn from(k: HiddenKind) -> Self {
        k.prefix()
    }
}

/// Layer sizes from input to softmax output, plus the hidden layer kind.
/// Written as e.g. `fnn-sigmoid:48-128-12` or `rnn-lstm:6-128-12`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Topology {
    pub hidden: HiddenKind,
    pub sizes: Vec<usize>,
}

impl Topology {
    pub fn new(hidden: HiddenKind, sizes: Vec<usize>) -> Result<Self> {
        let t = Topology { hidden, sizes };
        t.validate()?;
        Ok(t)
    }

    pub fn fnn(hidden: HiddenKind, sizes: &[usize]) -> Result<Self> {
        if hidden.is_recurrent() {
            return Err(Error::invalid("fnn topology needs a sigmoid or tanh hidden kind"));
        }
        Topology::new(hidden, sizes.to_vec())
    }

    pub fn lstm(input: usize, hidden: usize, output: usize, peephole: bool) -> Result<Self> {
        let kind = if peephole {
            HiddenKind::LstmPeephole
        } else {
            HiddenKind::Lstm
        };
        Topology::new(kind, vec![input, hidden, output])
    }

    fn validate(&self) -> Result<()> {
        if self.sizes.len() < 3 {
            return Err(Error::ModelFormat(format!(
                "{}: need input, hidden and output sizes",
                self
            )));
        }
        if self.hidden.is_recurrent() && self.sizes.len() != 3 {
            return Err(Error::ModelFormat(format!("{self}: one LSTM layer supported")));
        }
        if self.sizes.contains(&0) {
            return Err(Error::ModelFormat(format!("{self}: zero-width layer")));
        }
        if self.output_dim() < 2 {
            return Err(Error::ModelFormat(format!("{self}: softmax needs two or more outputs")));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("validated")
    }

    pub fn hidden_dim(&self) -> usize {
        self.sizes[1]
    }

    pub fn weight_count(&self) -> usize {
        if self.hidden.is_recurrent() {
            let (d, h, k) = (self.sizes[0], self.sizes[1], self.sizes[2]);
            let peep = if self.hidden == HiddenKind::LstmPeephole { 3 * h } else { 0 };
            4 * h * (d + h) + peep + k * h
        } else {
            self.sizes.windows(2).map(|w| w[0] * w[1]).sum()
        }
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:", self.hidden.prefix())?;
        for (i, s) in self.sizes.iter().enumerate() {
            if i > 0 {
                f.write_str("-")?;
            }
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

impl FromStr for Topology {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (prefix, sizes) = s
            .trim()
            .split_once(':')
            .ok_or_else(|| Error::ModelFormat(format!("topology {s:?} lacks ':'")))?;
        let hidden = HiddenKind::ALL
            .into_iter()
            .find(|k| k.prefix() == prefix)
            .ok_or_else(|| Error::ModelFormat(format!("unknown network kind {prefix:?}")))?;
        let sizes = sizes
            .split('-')
            .map(|p| {
                p.parse::<usize>()
                    .map_err(|_| Error::ModelFormat(format!("bad layer size {p:?} in {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Topology::new(hidden, sizes)
    }
}
