//! The fixed weather vocabulary.

/// Number of weather categories in the canonical vocabulary.
pub const CANONICAL_CATEGORY_COUNT: usize = 14;

/// Canonical ordered category names. Order matters everywhere: label
/// vectors, token rows and report rows all index into this list.
pub fn canonical_categories() -> Vec<String> {
    [
        "blizzard",
        "clear",
        "clearing",
        "cloudy",
        "extrasunny",
        "foggy",
        "neutral",
        "overcast",
        "rain",
        "smog",
        "snow",
        "snowlight",
        "thunder",
        "frozen",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fourteen_unique_names() {
        let cats = canonical_categories();
        assert_eq!(cats.len(), CANONICAL_CATEGORY_COUNT);
        let mut sorted = cats.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), cats.len());
    }
}
