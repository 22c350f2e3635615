//! Graph file formats: whitespace-separated edge lists and coordinate CSVs.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{GraphError, Network};
use crate::scalar::{real, Scalar};

fn io_err(path: &Path, source: std::io::Error) -> GraphError {
    GraphError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> GraphError {
    GraphError::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

/// Read a weighted edge list: one `k l weight` triple per line, 0-based node
/// indices, whitespace-separated, `#` starts a comment. The number of agents
/// is one past the largest node index. Returns `(n_agents, edges)`.
pub fn read_edge_list<T: Scalar>(
    path: impl AsRef<Path>,
) -> Result<(usize, Vec<(usize, usize, T)>), GraphError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut edges = Vec::new();
    let mut max_node = 0usize;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(parse_err(
                path,
                line_no,
                format!("expected `k l weight`, got {} fields", fields.len()),
            ));
        }
        let a: usize = fields[0]
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("bad node index `{}`", fields[0])))?;
        let b: usize = fields[1]
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("bad node index `{}`", fields[1])))?;
        let w: f64 = fields[2]
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("bad weight `{}`", fields[2])))?;
        max_node = max_node.max(a).max(b);
        edges.push((a, b, real(w)));
    }
    if edges.is_empty() {
        return Err(parse_err(path, 0, "edge list is empty"));
    }
    Ok((max_node + 1, edges))
}

/// Write a network as an edge list (upper triangle, full float precision).
pub fn write_edge_list<T: Scalar>(
    path: impl AsRef<Path>,
    network: &Network<T>,
) -> Result<(), GraphError> {
    let path = path.as_ref();
    let mut out = String::from("# k l weight\n");
    let n = network.n_agents();
    for k in 0..n {
        for l in (k + 1)..n {
            let w = network.adjacency()[(k, l)];
            if w > T::zero() {
                out.push_str(&format!("{} {} {}\n", k, l, w.as_f64()));
            }
        }
    }
    let mut file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    file.write_all(out.as_bytes()).map_err(|e| io_err(path, e))
}

/// Read planar coordinates from a CSV with header `id,x,y`. Ids must be
/// exactly `0..n-1` (any order). Returns coordinates indexed by id.
pub fn read_coordinates<T: Scalar>(path: impl AsRef<Path>) -> Result<Vec<(T, T)>, GraphError> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| parse_err(path, 0, e.to_string()))?;

    let headers = reader
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .clone();
    let expected = ["id", "x", "y"];
    let got: Vec<&str> = headers.iter().collect();
    if got != expected {
        return Err(parse_err(
            path,
            1,
            format!("expected header `id,x,y`, got `{}`", got.join(",")),
        ));
    }

    let mut rows: Vec<(usize, T, T)> = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let line_no = idx + 2;
        let record = record.map_err(|e| parse_err(path, line_no, e.to_string()))?;
        let id: usize = record[0]
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("bad id `{}`", &record[0])))?;
        let x: f64 = record[1]
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("bad x `{}`", &record[1])))?;
        let y: f64 = record[2]
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("bad y `{}`", &record[2])))?;
        if !(x.is_finite() && y.is_finite()) {
            return Err(parse_err(path, line_no, "non-finite coordinate"));
        }
        rows.push((id, real(x), real(y)));
    }

    let n = rows.len();
    let mut coords = vec![None; n];
    for (id, x, y) in rows {
        if id >= n {
            return Err(parse_err(
                path,
                0,
                format!("id {id} out of range for {n} rows (ids must be 0..{})", n - 1),
            ));
        }
        if coords[id].is_some() {
            return Err(parse_err(path, 0, format!("duplicate id {id}")));
        }
        coords[id] = Some((x, y));
    }
    Ok(coords.into_iter().map(|c| c.unwrap()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edge_list_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.edges");
        let net = Network::from_edges(3, &[(0, 1, 1.0), (1, 2, 0.5), (0, 2, 0.25)]).unwrap();
        write_edge_list(&path, &net).unwrap();
        let (n, edges) = read_edge_list::<f64>(&path).unwrap();
        assert_eq!(n, 3);
        let rebuilt = Network::from_edges(n, &edges).unwrap();
        assert_eq!(rebuilt.adjacency(), net.adjacency());
    }

    #[test]
    fn edge_list_comments_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.edges");
        fs::write(&path, "# comment\n0 1 1.0  # trailing\n\n1 2 0.5\n").unwrap();
        let (n, edges) = read_edge_list::<f64>(&path).unwrap();
        assert_eq!(n, 3);
        assert_eq!(edges.len(), 2);

        fs::write(&path, "0 1\n").unwrap();
        assert!(matches!(
            read_edge_list::<f64>(&path),
            Err(GraphError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn coordinates_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("coords.csv");
        fs::write(&path, "id,x,y\n1,1.0,0.0\n0,0.0,0.0\n2,2.0,0.0\n").unwrap();
        let coords = read_coordinates::<f64>(&path).unwrap();
        assert_eq!(coords, vec![(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)]);

        fs::write(&path, "node,x,y\n0,0.0,0.0\n").unwrap();
        assert!(read_coordinates::<f64>(&path).is_err());
    }
}
