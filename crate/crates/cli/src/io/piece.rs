use std::path::Path;

use reassembly_core::{Matrix, Piece, PieceId, PieceKind, Vector};

use super::{io_err, IoError, IoResult};

pub const MAGIC: [u8; 4] = *b"RLP1";
pub const VERSION: u32 = 1;

const HEADER: usize = 16;

/// `RLP1`, version, rows, cols, row-major f32 weights, bias length, f32
/// bias. All integers and floats little-endian.
pub fn encode_piece(piece: &Piece) -> Vec<u8> {
    let (rows, cols) = piece.weight().shape();
    let bias = piece.bias().as_slice();
    let mut out = Vec::with_capacity(HEADER + 4 * rows * cols + 4 + 4 * bias.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(rows as u32).to_le_bytes());
    out.extend_from_slice(&(cols as u32).to_le_bytes());
    for v in piece.weight().as_slice() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out.extend_from_slice(&(bias.len() as u32).to_le_bytes());
    for v in bias {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

/// Parses a piece file image; `path` only labels errors.
pub fn decode_piece(bytes: &[u8], id: PieceId, path: &Path) -> IoResult<Piece> {
    let truncated = |expected: usize| IoError::Truncated {
        path: path.to_path_buf(),
        expected,
        actual: bytes.len(),
    };
    if bytes.len() < 4 {
        return Err(truncated(HEADER));
    }
    if bytes[..4] != MAGIC {
        return Err(IoError::BadMagic {
            path: path.to_path_buf(),
            found: bytes[..4].try_into().expect("four bytes"),
        });
    }
    if bytes.len() < HEADER {
        return Err(truncated(HEADER));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("four bytes"));
    let version = word(4);
    if version != VERSION {
        return Err(IoError::Version {
            path: path.to_path_buf(),
            version,
        });
    }
    let (rows, cols) = (word(8) as usize, word(12) as usize);
    if PieceKind::from_shape(rows, cols).is_none() {
        return Err(IoError::Piece {
            path: path.to_path_buf(),
            source: reassembly_core::Error::PieceShape { id, rows, cols },
        });
    }
    let bias_at = HEADER + 4 * rows * cols;
    if bytes.len() < bias_at + 4 {
        // The bias length is unknown yet; the least the file could hold is
        // a bias of `rows` entries.
        return Err(truncated(bias_at + 4 + 4 * rows));
    }
    let bias_len = word(bias_at) as usize;
    if bias_len != rows {
        return Err(IoError::BiasLength {
            path: path.to_path_buf(),
            rows,
            bias_len,
        });
    }
    let expected = bias_at + 4 + 4 * bias_len;
    if bytes.len() < expected {
        return Err(truncated(expected));
    }
    if bytes.len() > expected {
        return Err(IoError::TrailingBytes {
            path: path.to_path_buf(),
            expected,
            actual: bytes.len(),
        });
    }
    let floats = |from: usize, n: usize| -> Vec<f64> {
        bytes[from..from + 4 * n]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("four bytes")) as f64)
            .collect()
    };
    let model = |source| IoError::Piece {
        path: path.to_path_buf(),
        source,
    };
    let weight = Matrix::new(rows, cols, floats(HEADER, rows * cols)).map_err(model)?;
    let bias = Vector::new(floats(bias_at + 4, bias_len)).map_err(model)?;
    Piece::new(id, weight, bias).map_err(model)
}

pub fn read_piece(path: &Path, id: PieceId) -> IoResult<Piece> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    decode_piece(&bytes, id, path)
}

pub fn write_piece(piece: &Piece, path: &Path) -> IoResult<()> {
    std::fs::write(path, encode_piece(piece)).map_err(io_err(path))
}
