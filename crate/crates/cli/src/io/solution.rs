use std::path::Path;

use reassembly_core::{PieceId, Solution};
use serde::{Deserialize, Serialize};

use super::{io_err, IoError, IoResult};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairEntry {
    pub in_id: u32,
    pub out_id: u32,
}

/// JSON view of a [`Solution`] carrying both the structured and the flat
/// form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionFile {
    pub pairs: Vec<PairEntry>,
    pub order: Vec<usize>,
    pub last_id: u32,
    pub flat: Vec<u32>,
}

impl SolutionFile {
    pub fn from_solution(sol: &Solution) -> Self {
        Self {
            pairs: sol
                .pairs
                .iter()
                .map(|(i, o)| PairEntry {
                    in_id: i.0,
                    out_id: o.0,
                })
                .collect(),
            order: sol.order.clone(),
            last_id: sol.last_id.0,
            flat: sol.flat().iter().map(|id| id.0).collect(),
        }
    }

    /// The structured view, after checking it is a valid assembly and that
    /// `flat` agrees with it.
    pub fn to_solution(&self) -> Result<Solution, String> {
        let sol = Solution {
            pairs: self
                .pairs
                .iter()
                .map(|p| (PieceId(p.in_id), PieceId(p.out_id)))
                .collect(),
            order: self.order.clone(),
            last_id: PieceId(self.last_id),
        };
        sol.validate().map_err(|e| e.to_string())?;
        let flat: Vec<u32> = sol.flat().iter().map(|id| id.0).collect();
        if flat != self.flat {
            return Err(String::from("flat list disagrees with pairs and order"));
        }
        Ok(sol)
    }
}

/// Pretty-printed JSON with a trailing newline.
pub fn solution_json(sol: &Solution) -> String {
    let mut s = serde_json::to_string_pretty(&SolutionFile::from_solution(sol))
        .expect("solution serializes");
    s.push('\n');
    s
}

pub fn write_solution(sol: &Solution, path: &Path) -> IoResult<()> {
    std::fs::write(path, solution_json(sol)).map_err(io_err(path))
}

pub fn read_solution(path: &Path) -> IoResult<Solution> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let file: SolutionFile = serde_json::from_str(&text).map_err(|source| IoError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    file.to_solution().map_err(|message| IoError::Solution {
        path: path.to_path_buf(),
        message,
    })
}
