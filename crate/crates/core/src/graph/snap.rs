use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{EdgeList, GraphError};

struct RawEdges {
    declared_nodes: Option<usize>,
    edges: Vec<(u64, u64)>,
    weights: Option<Vec<f64>>,
}

fn io_err(path: &Path, source: std::io::Error) -> GraphError {
    GraphError::Io { path: path.display().to_string(), source }
}

// Reads `# Nodes: <n>` if the comment carries it, as SNAP headers do.
fn declared_nodes(comment: &str) -> Option<usize> {
    let mut tokens = comment.trim_start_matches('#').split_whitespace();
    while let Some(tok) = tokens.next() {
        if tok.eq_ignore_ascii_case("nodes:") {
            return tokens.next().and_then(|t| t.parse().ok());
        }
    }
    None
}

fn read_raw(path: &Path) -> Result<RawEdges, GraphError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut raw = RawEdges { declared_nodes: None, edges: Vec::new(), weights: None };
    let mut weighted: Option<bool> = None;

    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| io_err(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if trimmed.starts_with('#') {
            if raw.declared_nodes.is_none() {
                raw.declared_nodes = declared_nodes(trimmed);
            }
            continue;
        }
        let tokens: Vec<&str> = trimmed.split_whitespace().collect();
        if tokens.len() < 2 || tokens.len() > 3 {
            return Err(GraphError::Parse {
                line: lineno,
                msg: format!("expected 'src dst [weight]', got {} fields", tokens.len()),
            });
        }
        let id = |t: &str| {
            t.parse::<u64>()
                .map_err(|_| GraphError::Parse { line: lineno, msg: format!("'{t}' is not a vertex id") })
        };
        let (src, dst) = (id(tokens[0])?, id(tokens[1])?);
        let has_weight = tokens.len() == 3;
        match weighted {
            None => {
                weighted = Some(has_weight);
                if has_weight {
                    raw.weights = Some(Vec::new());
                }
            }
            Some(w) if w != has_weight => {
                return Err(GraphError::Parse {
                    line: lineno,
                    msg: "weights must be present on every line or on none".into(),
                })
            }
            _ => {}
        }
        if has_weight {
            let w: f64 = tokens[2]
                .parse()
                .map_err(|_| GraphError::Parse { line: lineno, msg: format!("'{}' is not a weight", tokens[2]) })?;
            if !(w.is_finite() && w >= 0.0) {
                return Err(GraphError::Parse { line: lineno, msg: format!("weight {w} is not a non-negative real") });
            }
            raw.weights.as_mut().expect("weighted").push(w);
        }
        raw.edges.push((src, dst));
    }
    Ok(raw)
}

/// Parses a SNAP-style edge list: whitespace separated `src dst [weight]`
/// lines, `#` comments. Ids are taken as-is; `n` is `max id + 1`, or the
/// `# Nodes:` header count when that is larger.
pub fn load_snap_edge_list(path: impl AsRef<Path>) -> Result<EdgeList, GraphError> {
    let raw = read_raw(path.as_ref())?;
    let max_id = raw.edges.iter().map(|&(s, d)| s.max(d) + 1).max().unwrap_or(0);
    let n = usize::try_from(max_id)
        .map_err(|_| GraphError::Malformed("vertex id exceeds address space".into()))?
        .max(raw.declared_nodes.unwrap_or(0));
    let edges = raw.edges.iter().map(|&(s, d)| (s as usize, d as usize)).collect();
    Ok(EdgeList { n, edges, weights: raw.weights })
}

/// Like [`load_snap_edge_list`] but remaps sparse ids onto `0..k` in ascending
/// order of the original id. Returns the edge list and the original id of each
/// dense vertex.
pub fn load_snap_edge_list_compact(path: impl AsRef<Path>) -> Result<(EdgeList, Vec<u64>), GraphError> {
    let raw = read_raw(path.as_ref())?;
    let mut ids: Vec<u64> = raw.edges.iter().flat_map(|&(s, d)| [s, d]).collect();
    ids.sort_unstable();
    ids.dedup();
    let dense = |x: u64| ids.binary_search(&x).expect("id collected above");
    let edges = raw.edges.iter().map(|&(s, d)| (dense(s), dense(d))).collect();
    Ok((EdgeList { n: ids.len(), edges, weights: raw.weights }, ids))
}

/// Writes `edges` in the format read by [`load_snap_edge_list`], with a
/// `# Nodes:` header so isolated trailing vertices survive a round trip.
pub fn write_snap_edge_list(edges: &EdgeList, path: impl AsRef<Path>) -> Result<(), GraphError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut out = BufWriter::new(file);
    let write = |out: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(out, "# Nodes: {} Edges: {}", edges.n, edges.len())?;
        for (i, &(s, d)) in edges.edges.iter().enumerate() {
            match &edges.weights {
                Some(w) => writeln!(out, "{s}\t{d}\t{}", w[i])?,
                None => writeln!(out, "{s}\t{d}")?,
            }
        }
        out.flush()
    };
    write(&mut out).map_err(|e| io_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn file_with(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn plain_lines() {
        let f = file_with("0 1\n1 2\n");
        let el = load_snap_edge_list(f.path()).unwrap();
        assert_eq!(el.n, 3);
        assert_eq!(el.edges, vec![(0, 1), (1, 2)]);
        assert!(el.weights.is_none());
    }

    #[test]
    fn comments_skipped() {
        let f = file_with("# comment\n0 1\n");
        assert_eq!(load_snap_edge_list(f.path()).unwrap().len(), 1);
    }

    #[test]
    fn weighted_lines() {
        let f = file_with("0 1 2.5\n1 2 0.5\n");
        let el = load_snap_edge_list(f.path()).unwrap();
        assert_eq!(el.weights, Some(vec![2.5, 0.5]));
    }

    #[test]
    fn bad_token_reports_line() {
        let f = file_with("# hdr\n0 1\n1 x\n");
        match load_snap_edge_list(f.path()) {
            Err(GraphError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn mixed_weights_rejected() {
        let f = file_with("0 1 1.0\n1 2\n");
        assert!(matches!(load_snap_edge_list(f.path()), Err(GraphError::Parse { line: 2, .. })));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(load_snap_edge_list("/nonexistent/aam/graph.txt"), Err(GraphError::Io { .. })));
    }

    #[test]
    fn compact_remap() {
        let f = file_with("10 1000\n1000 5\n");
        let (el, ids) = load_snap_edge_list_compact(f.path()).unwrap();
        assert_eq!(ids, vec![5, 10, 1000]);
        assert_eq!(el.n, 3);
        assert_eq!(el.edges, vec![(1, 2), (2, 0)]);
    }
}
