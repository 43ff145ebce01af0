use statenet::modelzoo::{IndexEntry, WeightManifest, MAGIC};
use statenet::Tensor;

const GOLDEN: &[u8] = include_bytes!("fixtures/golden.weights");

fn expected() -> WeightManifest {
    let mut m = WeightManifest::default();
    m.meta.insert("note".into(), "golden".into());
    m.tensors.push((
        "fc.weight".into(),
        Tensor::from_vec(&[2, 3], vec![1.0, -2.0, 0.5, 0.25, 3.0, -0.125]).unwrap(),
    ));
    m.tensors
        .push(("fc.bias".into(), Tensor::from_vec(&[3], vec![0.0, 1.5, -1.0]).unwrap()));
    m
}

#[test]
fn golden_bytes_are_stable() {
    assert_eq!(expected().encode().unwrap(), GOLDEN);
}

#[test]
fn golden_layout() {
    let text_len = GOLDEN.len() - 36;
    let header = std::str::from_utf8(&GOLDEN[..text_len]).unwrap();
    let lines: Vec<&str> = header.lines().collect();
    assert_eq!(lines[0], MAGIC);
    assert_eq!(lines[1], "meta\tnote\tgolden");
    assert_eq!(lines[4], "blob\t36");
    // little-endian f32 payload, tensors back to back in index order
    assert_eq!(&GOLDEN[text_len..text_len + 4], &1.0f32.to_le_bytes());
    assert_eq!(&GOLDEN[GOLDEN.len() - 4..], &(-1.0f32).to_le_bytes());

    let m = WeightManifest::decode(GOLDEN).unwrap();
    assert_eq!(m, expected());
    let idx = m.index();
    assert_eq!(
        idx.iter()
            .map(|e: &IndexEntry| (e.name.as_str(), e.shape.clone(), e.offset))
            .collect::<Vec<_>>(),
        vec![("fc.weight", vec![2, 3], 0), ("fc.bias", vec![3], 24)]
    );
}
