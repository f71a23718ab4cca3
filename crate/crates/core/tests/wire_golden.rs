use polsr::geo::GeoPosition;
use polsr::wire::{
    decode_hello, decode_tc, decode_vtime, encode_hello, encode_tc, encode_vtime, HelloMessage, NeighborBlock,
    NodeAddr, TcMessage, Variant,
};

const ORIGIN: NodeAddr = NodeAddr(0x0a00_0002);

fn blocks(speed: i16) -> Vec<NeighborBlock> {
    vec![
        NeighborBlock { addr: NodeAddr(0x0a00_0001), lq: 0xff, nlq: 0x80, speed },
        NeighborBlock { addr: NodeAddr(0x0a00_0003), lq: 0x40, nlq: 0x00, speed: 0 },
    ]
}

#[test]
fn vtime_codes() {
    assert_eq!(encode_vtime(0.5), 0x03);
    assert_eq!(encode_vtime(2.0), 0x05);
    assert_eq!(decode_vtime(0x03), 0.5);
    assert_eq!(decode_vtime(0x86), 6.0);
}

#[test]
fn original_hello_bytes() {
    let m = HelloMessage {
        variant: Variant::Original,
        originator: ORIGIN,
        seq: 0x0107,
        htime: 0x03,
        willingness: 3,
        position: None,
        neighbors: blocks(0),
    };
    let want: Vec<u8> = vec![
        201, 0, 0x03, 3, 0x01, 0x07, 0, 0, //
        10, 0, 0, 1, 0xff, 0x80, 0, 0, //
        10, 0, 0, 3, 0x40, 0x00, 0, 0,
    ];
    assert_eq!(encode_hello(&m).unwrap(), want);
    assert_eq!(decode_hello(&want, Variant::Original, ORIGIN).unwrap(), m);
}

#[test]
fn modified_hello_bytes() {
    let m = HelloMessage {
        variant: Variant::Modified,
        originator: ORIGIN,
        seq: 7,
        htime: 0x03,
        willingness: 3,
        position: Some(GeoPosition { lat: 46.5, lon: 6.5, alt: 75.0 }),
        // -12 m/s in Q8.8
        neighbors: blocks(-3072),
    };
    let want: Vec<u8> = vec![
        201, 0, 0x03, 3, 0x00, 0x07, 0x00, 0x4b, //
        0x42, 0x3a, 0x00, 0x00, 0x40, 0xd0, 0x00, 0x00, //
        10, 0, 0, 1, 0xff, 0x80, 0xf4, 0x00, //
        10, 0, 0, 3, 0x40, 0x00, 0, 0,
    ];
    assert_eq!(encode_hello(&m).unwrap(), want);
    let back = decode_hello(&want, Variant::Modified, ORIGIN).unwrap();
    assert_eq!(back, m);
    assert_eq!(back.neighbors[0].speed_mps(), -12.0);
}

#[test]
fn tc_bytes_match_across_variants() {
    let want_original: Vec<u8> = vec![0x12, 0x34, 0, 0, 10, 0, 0, 1, 0xff, 0x80, 0, 0, 10, 0, 0, 3, 0x40, 0x00, 0, 0];
    let tc = |variant, speed| TcMessage { variant, originator: ORIGIN, ansn: 0x1234, advertised: blocks(speed) };
    assert_eq!(encode_tc(&tc(Variant::Original, 0)).unwrap(), want_original);
    let modified = encode_tc(&tc(Variant::Modified, 0x0180)).unwrap();
    assert_eq!(modified.len(), want_original.len());
    assert_eq!(&modified[10..12], &[0x01, 0x80]);
    assert_eq!(decode_tc(&modified, Variant::Modified, ORIGIN).unwrap().advertised[0].speed_mps(), 1.5);
}
