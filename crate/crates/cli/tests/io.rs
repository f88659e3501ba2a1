use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reassembly_cli::io::{
    self, decode_piece, encode_piece, read_dataset, read_instance, read_piece, read_solution,
    write_dataset, write_instance, write_piece, write_solution, IoError, COLUMNS,
};
use reassembly_core::generator::{self, TrainConfig};
use reassembly_core::{Dataset, Matrix, Piece, PieceId, Solution, Vector};

fn random_piece(rng: &mut ChaCha8Rng, id: u32, rows: usize, cols: usize) -> Piece {
    let w = Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0));
    let b = Vector::new((0..rows).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    Piece::new(PieceId(id), w, b).unwrap()
}

fn f32_bits(values: &[f64]) -> Vec<u32> {
    values.iter().map(|v| (*v as f32).to_bits()).collect()
}

#[test]
fn piece_round_trip_keeps_f32_payload() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (k, (rows, cols)) in [(96, 48), (48, 96), (1, 48)].into_iter().enumerate() {
        let p = random_piece(&mut rng, k as u32, rows, cols);
        let path = dir.path().join(format!("p{k}.rlp"));
        write_piece(&p, &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert_eq!(bytes.len(), 4 * 4 + 4 * rows * cols + 4 + 4 * rows);
        let q = read_piece(&path, PieceId(k as u32)).unwrap();
        assert_eq!(f32_bits(q.weight().as_slice()), f32_bits(p.weight().as_slice()));
        assert_eq!(f32_bits(q.bias().as_slice()), f32_bits(p.bias().as_slice()));
        // A second trip is exact in f64 too.
        assert_eq!(decode_piece(&encode_piece(&q), q.id(), &path).unwrap(), q);
    }
}

#[test]
fn piece_errors_are_distinct() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let p = random_piece(&mut rng, 0, 96, 48);
    let bytes = encode_piece(&p);
    let path = Path::new("piece_0.rlp");

    match decode_piece(&bytes[..1000], PieceId(0), path) {
        Err(IoError::Truncated { expected, actual, .. }) => {
            assert_eq!(expected, bytes.len());
            assert_eq!(actual, 1000);
        }
        other => panic!("expected truncation, got {other:?}"),
    }
    let err = decode_piece(&bytes[..1000], PieceId(0), path).unwrap_err();
    assert!(err.to_string().contains(&bytes.len().to_string()));

    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(decode_piece(&bad, PieceId(0), path), Err(IoError::BadMagic { .. })));

    let mut long = bytes.clone();
    long.push(0);
    assert!(matches!(decode_piece(&long, PieceId(0), path), Err(IoError::TrailingBytes { .. })));

    let mut version = bytes.clone();
    version[4] = 9;
    assert!(matches!(decode_piece(&version, PieceId(0), path), Err(IoError::Version { .. })));
}

#[test]
fn off_census_shape_is_rejected() {
    let mut bytes = Vec::new();
    bytes.extend_from_slice(b"RLP1");
    for word in [1u32, 2, 2] {
        bytes.extend_from_slice(&word.to_le_bytes());
    }
    for _ in 0..4 {
        bytes.extend_from_slice(&1f32.to_le_bytes());
    }
    bytes.extend_from_slice(&2u32.to_le_bytes());
    bytes.extend_from_slice(&[0; 8]);
    let err = decode_piece(&bytes, PieceId(3), Path::new("x")).unwrap_err();
    match err {
        IoError::Piece {
            source: reassembly_core::Error::PieceShape { rows: 2, cols: 2, .. },
            ..
        } => {}
        other => panic!("expected a shape error, got {other:?}"),
    }
}

#[test]
fn bias_length_must_match_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p = random_piece(&mut rng, 0, 1, 48);
    let mut bytes = encode_piece(&p);
    let at = 16 + 4 * 48;
    bytes[at..at + 4].copy_from_slice(&2u32.to_le_bytes());
    bytes.extend_from_slice(&[0; 4]);
    assert!(matches!(
        decode_piece(&bytes, PieceId(0), Path::new("x")),
        Err(IoError::BiasLength { rows: 1, bias_len: 2, .. })
    ));
}

fn header() -> String {
    COLUMNS.join(",")
}

#[test]
fn one_row_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    let row: Vec<String> = (0..50).map(|i| format!("{}", i as f64 * 0.5)).collect();
    fs::write(&path, format!("{}\n{}\n", header(), row.join(","))).unwrap();
    let ds = read_dataset(&path).unwrap();
    assert_eq!(ds.len(), 1);
    assert_eq!(ds.x()[(0, 47)], 23.5);
    assert_eq!(ds.pred(), &[24.0]);
    assert_eq!(ds.truth(), &[24.5]);
}

#[test]
fn csv_errors_name_the_problem() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    let row: Vec<String> = (0..50).map(|_| String::from("1.0")).collect();

    let mut swapped = COLUMNS.clone();
    swapped.swap(0, 1);
    fs::write(&path, format!("{}\n{}\n", swapped.join(","), row.join(","))).unwrap();
    assert!(matches!(read_dataset(&path), Err(IoError::Header { .. })));

    let missing = COLUMNS[..49].join(",");
    fs::write(&path, format!("{missing}\n{}\n", row[..49].join(","))).unwrap();
    match read_dataset(&path) {
        Err(IoError::Header { message, .. }) => assert!(message.contains("true")),
        other => panic!("expected a header error, got {other:?}"),
    }

    let mut bad = row.clone();
    bad[7] = String::from("seven");
    fs::write(&path, format!("{}\n{}\n{}\n", header(), row.join(","), bad.join(","))).unwrap();
    let err = read_dataset(&path).unwrap_err();
    let text = err.to_string();
    assert!(matches!(err, IoError::Cell { row: 2, .. }));
    assert!(text.contains("measurement_7") && text.contains("row 2"), "{text}");
}

#[test]
fn dataset_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    let ds = generator::synthesize_dataset(300, 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let pred: Vec<f64> = (0..300).map(|_| rng.random_range(-3.0..3.0)).collect();
    let ds = ds.with_pred(pred).unwrap();
    write_dataset(&ds, &path).unwrap();
    let back: Dataset = read_dataset(&path).unwrap();
    assert_eq!(back, ds);
}

#[test]
fn solution_views_must_agree() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.json");
    let sol = Solution {
        pairs: vec![(PieceId(4), PieceId(1)), (PieceId(0), PieceId(3))],
        order: vec![1, 0],
        last_id: PieceId(2),
    };
    write_solution(&sol, &path).unwrap();
    assert_eq!(read_solution(&path).unwrap(), sol);
    let text = fs::read_to_string(&path).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["flat"], serde_json::json!([0, 3, 4, 1, 2]));

    let mut file = io::SolutionFile::from_solution(&sol);
    file.flat.swap(0, 1);
    fs::write(&path, serde_json::to_string(&file).unwrap()).unwrap();
    assert!(matches!(read_solution(&path), Err(IoError::Solution { .. })));

    let mut file = io::SolutionFile::from_solution(&sol);
    file.pairs[1].in_id = 4;
    fs::write(&path, serde_json::to_string(&file).unwrap()).unwrap();
    assert!(matches!(read_solution(&path), Err(IoError::Solution { .. })));

    fs::write(&path, "{\"pairs\": []").unwrap();
    assert!(matches!(read_solution(&path), Err(IoError::Json { .. })));
}

#[test]
fn instance_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = TrainConfig {
        blocks: 3,
        epochs: 1,
        seed: 8,
        ..TrainConfig::default()
    };
    let ds = generator::synthesize_dataset(120, 8).unwrap();
    let t = generator::train_network(&cfg, &ds).unwrap();
    let inst = generator::shuffle_and_export(&t.network, &t.dataset, 8).unwrap();
    write_instance(&inst, dir.path()).unwrap();
    assert_eq!(fs::read_dir(dir.path().join(io::PIECES_DIR)).unwrap().count(), 7);

    let back = read_instance(dir.path()).unwrap();
    assert_eq!(back.dataset, inst.dataset);
    let mut all: Vec<Piece> = back.census.inputs.clone();
    all.extend(back.census.outputs.iter().cloned());
    all.push(back.census.last.clone());
    all.sort_by_key(Piece::id);
    assert_eq!(all, inst.pieces);
    let sealed = read_solution(&dir.path().join(io::SEALED_FILE)).unwrap();
    assert_eq!(sealed, inst.sealed_solution);
}
