use serde::Serialize;

pub const DEFAULT_THRESHOLD: f64 = 0.2;

/// Unit-cost insert/delete/substitute distance between two sequences.
pub fn levenshtein_by<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let (a, b) = if a.len() < b.len() { (b, a) } else { (a, b) };
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, x) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = diag + usize::from(x != y);
            diag = row[j + 1];
            row[j + 1] = sub.min(diag + 1).min(row[j] + 1);
        }
    }
    row[b.len()]
}

/// Edit distance over Unicode scalar values.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    levenshtein_by(&a, &b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EditDistanceResult {
    pub distance: usize,
    pub len_a: usize,
    pub len_b: usize,
    /// `distance / max(len_a, len_b)`, 0 when both are empty.
    pub relative: f64,
    pub threshold: f64,
    /// `relative <= threshold`.
    pub pass: bool,
}

pub fn relative_edit_distance(a: &str, b: &str, threshold: f64) -> EditDistanceResult {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let distance = levenshtein_by(&a, &b);
    let longest = a.len().max(b.len());
    let relative = if longest == 0 { 0.0 } else { distance as f64 / longest as f64 };
    EditDistanceResult {
        distance,
        len_a: a.len(),
        len_b: b.len(),
        relative,
        threshold,
        pass: relative <= threshold,
    }
}
