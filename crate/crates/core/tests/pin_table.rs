use dmfv::diag::{format_report, Code, Format};
use dmfv::fluidics::{verify_program, VerifyOptions, Policy};
use dmfv::isa::{parse_program, Loc, Program};
use dmfv::pins::{verify_program_pins, PinMap};

fn fixture(name: &str) -> String {
    std::fs::read_to_string(format!("{}/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

fn setup() -> (Program, PinMap) {
    let p = parse_program(&fixture("mplex.dmf")).unwrap();
    let map = PinMap::parse(&fixture("mplex.pins")).unwrap();
    (p, map)
}

fn remapped(map: &PinMap, cells: &[((u32, u32), u32)]) -> PinMap {
    let mut m = map.clone();
    for &((r, c), pin) in cells {
        m.set(Loc::new(r, c), pin).unwrap();
    }
    m
}

fn row(p: &Program, map: &PinMap) -> (String, u32, String) {
    let (_, r) = verify_program_pins(p, map, &VerifyOptions::default()).unwrap();
    assert_eq!(r.violations.len(), 1, "{r:#?}");
    let v = &r.violations[0];
    assert!(v.code.is_pin());
    (v.response.clone(), v.t.unwrap(), v.instruction.clone())
}

#[test]
fn base_map_is_clean_but_shared() {
    let (p, map) = setup();
    assert!(!map.is_injective());
    let (_, general) = verify_program(&p, &VerifyOptions::default());
    let (_, pins) = verify_program_pins(&p, &map, &VerifyOptions { policy: Policy::All, t_max: None }).unwrap();
    assert!(general.passed());
    assert!(pins.passed(), "{pins:#?}");
}

#[test]
fn ahead_of_mover_stretches() {
    let (p, map) = setup();
    let m = remapped(&map, &[((13, 5), 6)]);
    assert_eq!(
        row(&p, &m),
        ("Droplet stretch".to_string(), 4, "m(3,3,4,3) m(13,3,13,4)".to_string())
    );
}

#[test]
fn behind_mover_sticks() {
    let (p, map) = setup();
    let m = remapped(&map, &[((13, 15), 8), ((14, 15), 10)]);
    assert_eq!(
        row(&p, &m),
        ("Droplet stuck on (13,14)".to_string(), 53, "m(13,14,13,13) m(3,14,3,13)".to_string())
    );
    let m = remapped(&map, &[((6, 13), 7)]);
    assert_eq!(
        row(&p, &m),
        ("Droplet stuck on (13,11)".to_string(), 56, "m(5,13,6,13) m(13,11,13,10)".to_string())
    );
}

#[test]
fn table_rows_show_assignment() {
    let (p, map) = setup();
    let m = remapped(&map, &[((6, 13), 7)]);
    let (_, r) = verify_program_pins(&p, &m, &VerifyOptions::default()).unwrap();
    assert_eq!(r.codes(), vec![Code::PinCase3]);
    let text = format_report(&[r], Format::Text);
    assert!(text.contains("Droplet stuck on (13,11)"), "{text}");
    assert!(text.contains(" 56 "), "{text}");
}
