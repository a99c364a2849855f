use std::path::PathBuf;

pub fn esol_smiles() -> Vec<String> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/esol.csv");
    let text = std::fs::read_to_string(&path).expect("ESOL csv present");
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.rsplit(',').next().unwrap().trim().to_string())
        .collect()
}
