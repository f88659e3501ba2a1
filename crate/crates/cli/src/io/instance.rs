use std::path::{Path, PathBuf};

use reassembly_core::generator::PuzzleInstance;
use reassembly_core::{Census, Dataset, Piece, PieceId};

use super::{io_err, read_dataset, read_piece, write_dataset, write_piece, write_solution, IoError, IoResult};

pub const PIECES_DIR: &str = "pieces";
pub const DATASET_FILE: &str = "historical_data.csv";
pub const SEALED_FILE: &str = "solution.sealed.json";

pub fn piece_path(dir: &Path, id: u32) -> PathBuf {
    dir.join(PIECES_DIR).join(format!("piece_{id}.rlp"))
}

/// What a solver gets to see.
#[derive(Debug, Clone)]
pub struct Instance {
    pub census: Census,
    pub dataset: Dataset,
}

/// Writes pieces, dataset and the sealed solution under `dir`.
pub fn write_instance(inst: &PuzzleInstance, dir: &Path) -> IoResult<()> {
    let pieces = dir.join(PIECES_DIR);
    std::fs::create_dir_all(&pieces).map_err(io_err(&pieces))?;
    for p in &inst.pieces {
        write_piece(p, &piece_path(dir, p.id().0))?;
    }
    write_dataset(&inst.dataset, &dir.join(DATASET_FILE))?;
    write_solution(&inst.sealed_solution, &dir.join(SEALED_FILE))
}

/// Loads every `piece_<k>.rlp` and the dataset; never touches the sealed
/// solution. Roles within the census are sorted by id.
pub fn read_instance(dir: &Path) -> IoResult<Instance> {
    let pieces_dir = dir.join(PIECES_DIR);
    let mut entries: Vec<(u32, PathBuf)> = Vec::new();
    for entry in std::fs::read_dir(&pieces_dir).map_err(io_err(&pieces_dir))? {
        let path = entry.map_err(io_err(&pieces_dir))?.path();
        let id = path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_prefix("piece_"))
            .and_then(|n| n.strip_suffix(".rlp"))
            .and_then(|n| n.parse::<u32>().ok());
        if let Some(id) = id {
            entries.push((id, path));
        }
    }
    entries.sort();
    let pieces = entries
        .iter()
        .map(|(id, path)| read_piece(path, PieceId(*id)))
        .collect::<IoResult<Vec<Piece>>>()?;
    let mut census = Census::from_pieces(pieces).map_err(|source| IoError::Model {
        path: pieces_dir.clone(),
        source,
    })?;
    census.inputs.sort_by_key(Piece::id);
    census.outputs.sort_by_key(Piece::id);
    let dataset = read_dataset(&dir.join(DATASET_FILE))?;
    Ok(Instance { census, dataset })
}
