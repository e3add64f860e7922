//! Plain-text graphs: a header line `N M`, then `M` lines `i j` with 0-based
//! node indices. Blank lines and `#` comments are ignored.

use std::path::Path;

use asyncadmm_core::Graph;

use crate::error::{CliError, Result};

pub fn parse_graph(text: &str, name: &str) -> Result<Graph> {
    let err = |line: usize, message: String| CliError::Parse {
        file: name.to_string(),
        line: Some(line),
        message,
    };
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(k, l)| (k + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    let (hline, header) = lines
        .next()
        .ok_or_else(|| err(1, "missing `N M` header".into()))?;
    let nums = |line: usize, s: &str| -> Result<(usize, usize)> {
        let parts: Vec<&str> = s.split_whitespace().collect();
        if parts.len() != 2 {
            return Err(err(line, format!("expected two integers, found `{s}`")));
        }
        let p = |t: &str| {
            t.parse::<usize>()
                .map_err(|_| err(line, format!("`{t}` is not a nonnegative integer")))
        };
        Ok((p(parts[0])?, p(parts[1])?))
    };
    let (n, m) = nums(hline, header)?;
    let mut edges = Vec::with_capacity(m);
    let mut last = hline;
    for (line, s) in lines {
        let (i, j) = nums(line, s)?;
        if i >= n || j >= n {
            return Err(err(line, format!("edge ({i}, {j}) names a node outside 0..{n}")));
        }
        if i == j {
            return Err(err(line, format!("self-loop at node {i}")));
        }
        if edges
            .iter()
            .any(|&(a, b): &(usize, usize)| (a.min(b), a.max(b)) == (i.min(j), i.max(j)))
        {
            return Err(err(line, format!("duplicate edge ({i}, {j})")));
        }
        edges.push((i, j));
        last = line;
    }
    if edges.len() != m {
        return Err(err(
            last,
            format!("header promises {m} edges, found {}", edges.len()),
        ));
    }
    Ok(Graph::new(n, edges)?)
}

pub fn read_graph(path: &Path) -> Result<Graph> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_graph(&text, &path.display().to_string())
}

pub fn render_graph(g: &Graph) -> String {
    let mut s = format!("{} {}\n", g.nodes(), g.num_edges());
    for (i, j) in g.edges() {
        s.push_str(&format!("{i} {j}\n"));
    }
    s
}

/// `cycle:5`, `path:4`, `complete:3`, `star:6`, or `None` when `spec` is not
/// of that form.
pub fn builtin_graph(spec: &str) -> Option<Result<Graph>> {
    let (kind, count) = spec.split_once(':')?;
    let count: usize = count.trim().parse().ok()?;
    let g = match kind.trim() {
        "cycle" => Graph::cycle(count),
        "path" => Graph::path(count),
        "complete" => Graph::complete(count),
        "star" => Graph::star(count),
        _ => return None,
    };
    Some(g.map_err(CliError::from))
}

/// A builtin name or a path (relative to `base`).
pub fn resolve_graph(spec: &str, base: &Path) -> Result<Graph> {
    match builtin_graph(spec) {
        Some(g) => g,
        None => read_graph(&base.join(spec)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_triangle() {
        let g = parse_graph("3 3\n0 1\n1 2\n# closing edge\n2 0\n", "t").unwrap();
        assert_eq!(g.edges(), &[(0, 1), (1, 2), (0, 2)]);
        assert_eq!(parse_graph(&render_graph(&g), "t").unwrap(), g);
    }

    #[test]
    fn rejects_bad_lines() {
        let e = parse_graph("3 2\n0 1\n1 0\n", "g.txt").unwrap_err();
        assert_eq!(e.to_string(), "g.txt:3: duplicate edge (1, 0)");
        assert!(parse_graph("3 1\n1 1\n", "g").is_err());
        assert!(parse_graph("3 2\n0 1\n", "g").is_err());
        assert!(parse_graph("2 1\n0 x\n", "g").is_err());
    }

    #[test]
    fn builtins() {
        assert_eq!(builtin_graph("cycle:5").unwrap().unwrap().num_edges(), 5);
        assert!(builtin_graph("graph.txt").is_none());
    }
}
