use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use super::{generate_erdos_renyi, generate_kronecker, load_snap_edge_list, EdgeList, Graph, GraphError};

/// Graph source as written on the command line: `kron:<scale>,<edge_factor>`,
/// `er:<n>,<p>` or `file:<path>`.
#[derive(Debug, Clone, PartialEq)]
pub enum GraphSpec {
    Kronecker { scale: u32, edge_factor: usize },
    ErdosRenyi { n: usize, p: f64 },
    File(PathBuf),
}

impl GraphSpec {
    pub fn edge_list(&self, seed: u64) -> Result<EdgeList, GraphError> {
        match self {
            GraphSpec::Kronecker { scale, edge_factor } => Ok(generate_kronecker(*scale, *edge_factor, seed)),
            GraphSpec::ErdosRenyi { n, p } => Ok(generate_erdos_renyi(*n, *p, seed)),
            GraphSpec::File(path) => load_snap_edge_list(path),
        }
    }

    pub fn build(&self, seed: u64, directed: bool) -> Result<Graph, GraphError> {
        Graph::build_csr(&self.edge_list(seed)?, directed)
    }
}

impl FromStr for GraphSpec {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || GraphError::Spec(s.to_string());
        let (kind, args) = s.split_once(':').ok_or_else(bad)?;
        match kind {
            "kron" => {
                let (scale, ef) = args.split_once(',').ok_or_else(bad)?;
                let scale: u32 = scale.trim().parse().map_err(|_| bad())?;
                let edge_factor = ef.trim().parse().map_err(|_| bad())?;
                if scale == 0 || scale > 40 {
                    return Err(bad());
                }
                Ok(GraphSpec::Kronecker { scale, edge_factor })
            }
            "er" => {
                let (n, p) = args.split_once(',').ok_or_else(bad)?;
                let n = n.trim().parse().map_err(|_| bad())?;
                let p: f64 = p.trim().parse().map_err(|_| bad())?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(bad());
                }
                Ok(GraphSpec::ErdosRenyi { n, p })
            }
            "file" if !args.is_empty() => Ok(GraphSpec::File(PathBuf::from(args))),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for GraphSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphSpec::Kronecker { scale, edge_factor } => write!(f, "kron:{scale},{edge_factor}"),
            GraphSpec::ErdosRenyi { n, p } => write!(f, "er:{n},{p}"),
            GraphSpec::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}
