//! Simply-laced Cartan matrices with Bourbaki node numbering (0-based here).

use std::fmt;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CartanError {
    #[error("invalid type/rank `{0}`")]
    InvalidType(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Family {
    A,
    D,
    E,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CartanData {
    pub family: Family,
    pub rank: usize,
    pub matrix: Vec<Vec<i32>>,
}

impl fmt::Display for CartanData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}{}", self.family, self.rank)
    }
}

/// Dynkin edges in Bourbaki numbering, shifted to start at 0.
pub fn dynkin_edges(family: Family, rank: usize) -> Result<Vec<(usize, usize)>, CartanError> {
    let bad = || CartanError::InvalidType(format!("{family:?}{rank}"));
    match family {
        Family::A if rank >= 1 => Ok((1..rank).map(|k| (k - 1, k)).collect()),
        Family::D if rank >= 4 => {
            let mut e: Vec<(usize, usize)> = (1..rank - 1).map(|k| (k - 1, k)).collect();
            e.push((rank - 3, rank - 1));
            Ok(e)
        }
        Family::E if (6..=8).contains(&rank) => {
            // 1-3-4-5-...-n with 2 attached to 4.
            let mut e = vec![(0, 2), (1, 3)];
            e.extend((2..rank - 1).map(|k| (k, k + 1)));
            Ok(e)
        }
        _ => Err(bad()),
    }
}

pub fn cartan_matrix(family: Family, rank: usize) -> Result<CartanData, CartanError> {
    let edges = dynkin_edges(family, rank)?;
    let mut m = vec![vec![0; rank]; rank];
    for (k, row) in m.iter_mut().enumerate() {
        row[k] = 2;
    }
    for (a, b) in edges {
        m[a][b] = -1;
        m[b][a] = -1;
    }
    Ok(CartanData {
        family,
        rank,
        matrix: m,
    })
}

/// Parses labels such as `A2`, `D4`, `E6` (case-insensitive).
pub fn parse_label(label: &str) -> Result<CartanData, CartanError> {
    let bad = || CartanError::InvalidType(label.to_string());
    let mut chars = label.trim().chars();
    let family = match chars.next().map(|c| c.to_ascii_uppercase()) {
        Some('A') => Family::A,
        Some('D') => Family::D,
        Some('E') => Family::E,
        _ => return Err(bad()),
    };
    let rank: usize = chars.as_str().parse().map_err(|_| bad())?;
    cartan_matrix(family, rank)
}

impl CartanData {
    pub fn entry(&self, i: usize, j: usize) -> i32 {
        self.matrix[i][j]
    }

    pub fn label(&self) -> String {
        self.to_string()
    }

    /// All ordered node pairs.
    pub fn node_pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.rank {
            for j in 0..self.rank {
                out.push((i, j));
            }
        }
        out
    }
}

/// Checks symmetry, diagonal, simply-laced entries, connectivity, and that
/// the diagram has the shape of the declared family.
pub fn validate(cd: &CartanData) -> Result<(), String> {
    let n = cd.rank;
    if cd.matrix.len() != n || cd.matrix.iter().any(|r| r.len() != n) {
        return Err("matrix is not rank x rank".into());
    }
    for i in 0..n {
        if cd.matrix[i][i] != 2 {
            return Err(format!("diagonal entry {i} is {}", cd.matrix[i][i]));
        }
        for j in 0..n {
            let a = cd.matrix[i][j];
            if a != cd.matrix[j][i] {
                return Err(format!("not symmetric at ({i},{j})"));
            }
            if i != j && a != 0 && a != -1 {
                return Err(format!("entry ({i},{j}) = {a} is not simply laced"));
            }
        }
    }
    let adj: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i && cd.matrix[i][j] == -1)
                .collect()
        })
        .collect();
    let edges: usize = adj.iter().map(|v| v.len()).sum::<usize>() / 2;
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    while let Some(v) = stack.pop() {
        if !seen[v] {
            seen[v] = true;
            stack.extend(adj[v].iter().copied());
        }
    }
    if n > 0 && seen.iter().any(|s| !s) {
        return Err("Dynkin diagram is disconnected".into());
    }
    if edges + 1 != n {
        return Err("Dynkin diagram has a cycle".into());
    }
    let branches: Vec<usize> = (0..n).filter(|&v| adj[v].len() >= 3).collect();
    let shape_ok = match cd.family {
        Family::A => branches.is_empty(),
        Family::D | Family::E => {
            if branches.len() != 1 || adj[branches[0]].len() != 3 {
                false
            } else {
                let b = branches[0];
                let mut arms: Vec<usize> = adj[b].iter().map(|&s| arm_length(&adj, b, s)).collect();
                arms.sort();
                match cd.family {
                    Family::D => arms[0] == 1 && arms[1] == 1,
                    _ => arms[0] == 1 && arms[1] == 2 && (2..=4).contains(&arms[2]),
                }
            }
        }
    };
    if !shape_ok {
        return Err(format!("diagram shape does not match {}", cd));
    }
    Ok(())
}

fn arm_length(adj: &[Vec<usize>], from: usize, start: usize) -> usize {
    let (mut prev, mut cur, mut len) = (from, start, 1);
    loop {
        let next: Vec<usize> = adj[cur].iter().copied().filter(|&v| v != prev).collect();
        if next.len() != 1 {
            return len;
        }
        prev = cur;
        cur = next[0];
        len += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_matrices() {
        assert_eq!(parse_label("A1").unwrap().matrix, vec![vec![2]]);
        assert_eq!(
            parse_label("a2").unwrap().matrix,
            vec![vec![2, -1], vec![-1, 2]]
        );
        assert!(parse_label("D3").is_err());
        assert!(parse_label("E9").is_err());
        assert!(parse_label("B2").is_err());
    }

    #[test]
    fn d4_branch_node() {
        let d4 = parse_label("D4").unwrap();
        let row = &d4.matrix[1];
        assert_eq!(row.iter().filter(|&&a| a == -1).count(), 3);
        let sums: Vec<i32> = d4.matrix.iter().map(|r| r.iter().sum()).collect();
        assert_eq!(sums, vec![1, -1, 1, 1]);
    }

    #[test]
    fn every_label_validates() {
        for label in ["A1", "A2", "A5", "D4", "D6", "E6", "E7", "E8"] {
            let cd = parse_label(label).unwrap();
            validate(&cd).unwrap();
            for i in 0..cd.rank {
                for j in 0..cd.rank {
                    assert_eq!(cd.matrix[i][j], cd.matrix[j][i]);
                }
            }
        }
    }

    #[test]
    fn invalid_matrices_fail() {
        let mut cd = parse_label("A2").unwrap();
        cd.matrix = vec![vec![2, -2], vec![-2, 2]];
        assert!(validate(&cd).is_err());
        cd.matrix = vec![vec![2, 0], vec![0, 2]];
        assert!(validate(&cd).unwrap_err().contains("disconnected"));
        let mut d4 = parse_label("D4").unwrap();
        d4.family = Family::A;
        assert!(validate(&d4).is_err());
    }
}
