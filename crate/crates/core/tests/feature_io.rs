use blocksing::features::{parse_phone_annotations, serialize_phone_annotations};

const GOLDEN_TEXT: &str = include_str!("data/golden_annotation.txt");
const GOLDEN_PARSED: &str = include_str!("data/golden_annotation.json");

#[test]
fn golden_annotation_parses_to_the_reference_list() {
    let segs = parse_phone_annotations(GOLDEN_TEXT).unwrap();
    let want: Vec<(f64, f64, String)> = serde_json::from_str(GOLDEN_PARSED).unwrap();
    assert_eq!(segs.len(), 100);
    assert_eq!(want.len(), 100);
    for (i, (s, (a, b, l))) in segs.iter().zip(&want).enumerate() {
        assert_eq!((s.start, s.end, s.label.as_str()), (*a, *b, l.as_str()), "line {}", i + 1);
    }
}

#[test]
fn golden_annotation_round_trips_byte_for_byte() {
    let segs = parse_phone_annotations(GOLDEN_TEXT).unwrap();
    assert_eq!(serialize_phone_annotations(&segs).as_bytes(), GOLDEN_TEXT.as_bytes());
}

#[test]
fn parse_errors_carry_the_line_number() {
    let mut text: Vec<&str> = GOLDEN_TEXT.lines().collect();
    text[41] = "1.0 oops ah";
    let err = parse_phone_annotations(&text.join("\n")).unwrap_err();
    assert!(matches!(err, blocksing::Error::Parse { line: 42, .. }), "{err}");
}
