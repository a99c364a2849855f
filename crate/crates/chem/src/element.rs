//! Supported elements and their valence rules.

/// Atomic numbers accepted anywhere in a molecule.
pub const SUPPORTED: [u8; 15] = [1, 3, 5, 6, 7, 8, 9, 11, 15, 16, 17, 19, 20, 35, 53];

/// Elements that may appear outside brackets.
const ORGANIC: [u8; 10] = [5, 6, 7, 8, 9, 15, 16, 17, 35, 53];

pub fn symbol(element: u8) -> &'static str {
    match element {
        0 => "*",
        1 => "H",
        3 => "Li",
        5 => "B",
        6 => "C",
        7 => "N",
        8 => "O",
        9 => "F",
        11 => "Na",
        15 => "P",
        16 => "S",
        17 => "Cl",
        19 => "K",
        20 => "Ca",
        35 => "Br",
        53 => "I",
        _ => "?",
    }
}

pub fn from_symbol(symbol: &str) -> Option<u8> {
    Some(match symbol {
        "H" => 1,
        "Li" => 3,
        "B" => 5,
        "C" => 6,
        "N" => 7,
        "O" => 8,
        "F" => 9,
        "Na" => 11,
        "P" => 15,
        "S" => 16,
        "Cl" => 17,
        "K" => 19,
        "Ca" => 20,
        "Br" => 35,
        "I" => 53,
        _ => return None,
    })
}

pub fn is_supported(element: u8) -> bool {
    SUPPORTED.contains(&element)
}

pub fn is_organic(element: u8) -> bool {
    ORGANIC.contains(&element)
}

/// Elements written in lowercase when aromatic.
pub fn can_be_aromatic(element: u8) -> bool {
    matches!(element, 5 | 6 | 7 | 8 | 15 | 16)
}

pub fn is_metal(element: u8) -> bool {
    matches!(element, 3 | 11 | 19 | 20)
}

/// Allowed total valences (bond orders plus hydrogens) for an element at a
/// given formal charge, ascending. `None` means the combination is unsupported.
pub fn allowed_valences(element: u8, charge: i8) -> Option<&'static [u8]> {
    Some(match (element, charge) {
        (1, 0) => &[1],
        (1, 1) | (1, -1) => &[0],
        (5, 0) => &[3],
        (5, -1) => &[4],
        (5, 1) => &[2],
        (6, 0) => &[4],
        (6, 1) | (6, -1) => &[3],
        (7, 0) => &[3, 5],
        (7, 1) => &[4],
        (7, -1) => &[2],
        (8, 0) => &[2],
        (8, 1) => &[3],
        (8, -1) => &[1],
        (15, 0) => &[3, 5],
        (15, 1) => &[4],
        (15, -1) => &[2],
        (16, 0) => &[2, 4, 6],
        (16, 1) => &[3, 5],
        (16, -1) => &[1, 3, 5],
        (9, 0) => &[1],
        (9, -1) => &[0],
        (17 | 35 | 53, 0) => &[1, 3, 5, 7],
        (17 | 35 | 53, -1) => &[0],
        (17 | 35 | 53, 1) => &[2],
        (3 | 11 | 19, 1) => &[0],
        (3 | 11 | 19, 0) => &[1],
        (20, 2) => &[0],
        (20, 0) => &[2],
        _ => return None,
    })
}

/// Whether the atom can donate a lone pair to a ring pi system.
pub fn has_lone_pair_donor(element: u8) -> bool {
    matches!(element, 7 | 8 | 15 | 16)
}
