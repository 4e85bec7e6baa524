//! Location-aware structural signatures for screen observations.
//!
//! Every UI element is quantized into a 30x30 grid cell by its bounding-box
//! center and emits two kinds of structural atoms:
//!
//! ```text
//! r3_c12|T:button     cell x control type
//! r3_c12|X:save       cell x normalized text
//! ```
//!
//! The canonical state ID is a digest of the sorted atoms followed by the
//! `mode:` and `text_size:` tags. A deterministic signed feature-hash
//! embedding is kept alongside for optional dense ranking; it never feeds the
//! canonical ID.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Side length of the quantization grid.
pub const GRID_SIZE: u32 = 30;

/// Default dimension of the hashed embedding.
pub const DEFAULT_EMBEDDING_DIM: usize = 256;

/// Canonical IDs are truncated SHA-256 hex digests of this many characters.
pub const CANONICAL_ID_HEX_LEN: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub left: f64,
    pub top: f64,
    pub right: f64,
    pub bottom: f64,
}

impl BBox {
    pub fn new(left: f64, top: f64, right: f64, bottom: f64) -> Self {
        Self { left, top, right, bottom }
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.left + self.right) / 2.0, (self.top + self.bottom) / 2.0)
    }

    pub fn is_finite(&self) -> bool {
        self.left.is_finite() && self.top.is_finite() && self.right.is_finite() && self.bottom.is_finite()
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        Self::new(self.left + dx, self.top + dy, self.right + dx, self.bottom + dy)
    }
}

impl From<[f64; 4]> for BBox {
    fn from(v: [f64; 4]) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.left, b.top, b.right, b.bottom]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UiElement {
    pub bbox: BBox,
    pub control_label: String,
    #[serde(default)]
    pub text: String,
    #[serde(default)]
    pub executable: bool,
}

impl UiElement {
    pub fn new(bbox: BBox, control_label: impl Into<String>, text: impl Into<String>, executable: bool) -> Self {
        Self {
            bbox,
            control_label: control_label.into(),
            text: text.into(),
            executable,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DisplayMode {
    Light,
    Dark,
}

impl fmt::Display for DisplayMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DisplayMode::Light => "light",
            DisplayMode::Dark => "dark",
        })
    }
}

/// One raw screen as delivered by the environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenObservation {
    pub elements: Vec<UiElement>,
    pub screen_width: u32,
    pub screen_height: u32,
    pub text_size_bin: u32,
    pub display_mode: DisplayMode,
    pub rollout_group: String,
}

impl ScreenObservation {
    pub fn validate(&self) -> Result<()> {
        if self.screen_width == 0 || self.screen_height == 0 {
            return Err(Error::InvalidObservation(format!(
                "screen dimensions must be positive, got {}x{}",
                self.screen_width, self.screen_height
            )));
        }
        for (i, el) in self.elements.iter().enumerate() {
            if !el.bbox.is_finite() {
                return Err(Error::InvalidObservation(format!("element {i}: non-finite bbox")));
            }
            if el.bbox.left > el.bbox.right || el.bbox.top > el.bbox.bottom {
                return Err(Error::InvalidObservation(format!("element {i}: bbox corners out of order")));
            }
            if el.control_label.trim().is_empty() {
                return Err(Error::InvalidObservation(format!("element {i}: empty control label")));
            }
        }
        Ok(())
    }
}

/// Reads a JSON-lines file of observations. Blank lines are skipped.
pub fn read_observations(path: &Path) -> Result<Vec<ScreenObservation>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let obs: ScreenObservation = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        obs.validate().map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push(obs);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub row: u32,
    pub col: u32,
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}_c{}", self.row, self.col)
    }
}

/// Maps a bounding box to the grid cell containing its center. Centers
/// outside the screen are clamped onto the border cells.
pub fn quantize_cell(bbox: &BBox, screen_width: u32, screen_height: u32) -> Result<Cell> {
    if !bbox.is_finite() {
        return Err(Error::NonFiniteCoordinate);
    }
    if screen_width == 0 || screen_height == 0 {
        return Err(Error::InvalidObservation("screen dimensions must be positive".into()));
    }
    let (cx, cy) = bbox.center();
    Ok(Cell {
        row: grid_index(cy, screen_height),
        col: grid_index(cx, screen_width),
    })
}

fn grid_index(coord: f64, extent: u32) -> u32 {
    let g = GRID_SIZE as f64;
    // multiply first so integral coordinates land exactly on cell boundaries
    let raw = (coord * g / extent as f64).floor();
    raw.clamp(0.0, g - 1.0) as u32
}

/// Lowercase, trim, and collapse internal whitespace runs to one space.
pub fn normalize_text(text: &str) -> String {
    text.split_whitespace()
        .map(|w| w.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn control_token(cell: Cell, control_label: &str) -> String {
    format!("{cell}|T:{}", normalize_text(control_label))
}

pub fn text_token(cell: Cell, normalized_text: &str) -> String {
    format!("{cell}|X:{normalized_text}")
}

/// Kind of a structural atom.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AtomKind {
    ControlType,
    Text,
}

/// A structural atom split back into its parts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedAtom<'a> {
    pub cell: Cell,
    pub kind: AtomKind,
    pub value: &'a str,
}

/// Parses `r<row>_c<col>|T:<label>` or `r<row>_c<col>|X:<text>`. Returns
/// `None` if the shape is wrong or the cell is off-grid.
pub fn parse_atom(token: &str) -> Option<ParsedAtom<'_>> {
    let (cell_part, rest) = token.split_once('|')?;
    let (row, col) = cell_part.strip_prefix('r')?.split_once("_c")?;
    let row: u32 = row.parse().ok()?;
    let col: u32 = col.parse().ok()?;
    if row >= GRID_SIZE || col >= GRID_SIZE {
        return None;
    }
    let (kind, value) = if let Some(v) = rest.strip_prefix("T:") {
        (AtomKind::ControlType, v)
    } else if let Some(v) = rest.strip_prefix("X:") {
        (AtomKind::Text, v)
    } else {
        return None;
    };
    if kind == AtomKind::ControlType && value.is_empty() {
        return None;
    }
    Some(ParsedAtom { cell: Cell { row, col }, kind, value })
}

/// Structural atoms emitted by a single element.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ElementAtoms {
    pub control: String,
    pub text: Option<String>,
}

pub fn element_atoms(el: &UiElement, screen_width: u32, screen_height: u32) -> Result<ElementAtoms> {
    let cell = quantize_cell(&el.bbox, screen_width, screen_height)?;
    let norm = normalize_text(&el.text);
    Ok(ElementAtoms {
        control: control_token(cell, &el.control_label),
        text: (!norm.is_empty()).then(|| text_token(cell, &norm)),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuralSignature {
    pub ct_tokens: BTreeSet<String>,
    pub txt_tokens: BTreeSet<String>,
    pub canonical_id: String,
    pub embedding: Vec<f64>,
    pub mode_tag: String,
    pub text_size_tag: String,
}

impl StructuralSignature {
    /// Builds a signature directly from token sets. The canonical ID and the
    /// default embedding are derived here.
    pub fn from_tokens(
        ct_tokens: BTreeSet<String>,
        txt_tokens: BTreeSet<String>,
        display_mode: DisplayMode,
        text_size_bin: u32,
    ) -> Self {
        Self::from_tokens_with(ct_tokens, txt_tokens, display_mode, text_size_bin, &HashedEmbedder::default())
    }

    pub fn from_tokens_with(
        ct_tokens: BTreeSet<String>,
        txt_tokens: BTreeSet<String>,
        display_mode: DisplayMode,
        text_size_bin: u32,
        embedder: &dyn ScreenEmbedder,
    ) -> Self {
        let mut sig = StructuralSignature {
            ct_tokens,
            txt_tokens,
            canonical_id: String::new(),
            embedding: Vec::new(),
            mode_tag: format!("mode:{display_mode}"),
            text_size_tag: format!("text_size:{text_size_bin}"),
        };
        sig.canonical_id = canonical_state_id(&sig);
        sig.embedding = embedder.embed(&sig);
        sig
    }

    pub fn token_count(&self) -> usize {
        self.ct_tokens.len() + self.txt_tokens.len()
    }

    /// All structural atoms in byte order.
    pub fn sorted_tokens(&self) -> Vec<&str> {
        let mut all: Vec<&str> = self
            .ct_tokens
            .iter()
            .chain(self.txt_tokens.iter())
            .map(String::as_str)
            .collect();
        all.sort_unstable();
        all.dedup();
        all
    }
}

pub fn extract_signature(obs: &ScreenObservation) -> Result<StructuralSignature> {
    extract_signature_with(obs, &HashedEmbedder::default())
}

pub fn extract_signature_with(obs: &ScreenObservation, embedder: &dyn ScreenEmbedder) -> Result<StructuralSignature> {
    obs.validate()?;
    let mut ct = BTreeSet::new();
    let mut txt = BTreeSet::new();
    for el in &obs.elements {
        let atoms = element_atoms(el, obs.screen_width, obs.screen_height)?;
        ct.insert(atoms.control);
        if let Some(t) = atoms.text {
            txt.insert(t);
        }
    }
    Ok(StructuralSignature::from_tokens_with(
        ct,
        txt,
        obs.display_mode,
        obs.text_size_bin,
        embedder,
    ))
}

/// The exact byte string hashed into a canonical ID: sorted atoms, one per
/// line, then the mode tag and text-size tag lines. No trailing newline.
pub fn canonical_serialization(sig: &StructuralSignature) -> String {
    let mut lines = sig.sorted_tokens();
    lines.push(&sig.mode_tag);
    lines.push(&sig.text_size_tag);
    lines.join("\n")
}

pub fn canonical_state_id(sig: &StructuralSignature) -> String {
    let digest = Sha256::digest(canonical_serialization(sig).as_bytes());
    let mut id = hex::encode(digest);
    id.truncate(CANONICAL_ID_HEX_LEN);
    id
}

/// Dense screen embedding. Implementations must be deterministic.
pub trait ScreenEmbedder: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, sig: &StructuralSignature) -> Vec<f64>;
}

/// Signed feature hashing of structural atoms, L2-normalized.
#[derive(Debug, Clone, Copy)]
pub struct HashedEmbedder {
    dim: usize,
}

impl HashedEmbedder {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 8 {
            return Err(Error::Config(format!("embedding dimension must be >= 8, got {dim}")));
        }
        Ok(Self { dim })
    }
}

impl Default for HashedEmbedder {
    fn default() -> Self {
        Self { dim: DEFAULT_EMBEDDING_DIM }
    }
}

impl ScreenEmbedder for HashedEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, sig: &StructuralSignature) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for token in sig.sorted_tokens() {
            let (bucket, sign) = hash_bucket(token, self.dim);
            v[bucket] += sign;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

/// Bucket and sign of a token under the signed feature hash.
pub fn hash_bucket(token: &str, dim: usize) -> (usize, f64) {
    let digest = Sha256::digest(token.as_bytes());
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    let bucket = (u64::from_le_bytes(head) % dim as u64) as usize;
    let sign = if digest[8] & 1 == 0 { 1.0 } else { -1.0 };
    (bucket, sign)
}

pub fn embed(sig: &StructuralSignature, dim: usize) -> Result<Vec<f64>> {
    Ok(HashedEmbedder::new(dim)?.embed(sig))
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn el(bbox: [f64; 4], label: &str, text: &str) -> UiElement {
        UiElement::new(bbox.into(), label, text, true)
    }

    fn obs(elements: Vec<UiElement>) -> ScreenObservation {
        ScreenObservation {
            elements,
            screen_width: 1200,
            screen_height: 900,
            text_size_bin: 100,
            display_mode: DisplayMode::Light,
            rollout_group: "test/run".into(),
        }
    }

    #[test]
    fn quantize_first_cell() {
        let c = quantize_cell(&BBox::new(0.0, 0.0, 10.0, 10.0), 300, 300).unwrap();
        assert_eq!((c.row, c.col), (0, 0));
    }

    #[test]
    fn quantize_clamps_far_corner() {
        let c = quantize_cell(&BBox::new(300.0, 300.0, 300.0, 300.0), 300, 300).unwrap();
        assert_eq!((c.row, c.col), (29, 29));
        let c = quantize_cell(&BBox::new(-50.0, -80.0, -10.0, -20.0), 300, 300).unwrap();
        assert_eq!((c.row, c.col), (0, 0));
    }

    #[test]
    fn quantize_hand_computed() {
        // center (120, 210): row = floor(210/900*30) = 7, col = floor(120/1200*30) = 3
        let c = quantize_cell(&BBox::new(100.0, 200.0, 140.0, 220.0), 1200, 900).unwrap();
        assert_eq!((c.row, c.col), (7, 3));
    }

    #[test]
    fn quantize_rejects_nan() {
        let err = quantize_cell(&BBox::new(f64::NAN, 0.0, 1.0, 1.0), 100, 100).unwrap_err();
        assert!(matches!(err, Error::NonFiniteCoordinate));
        assert!(quantize_cell(&BBox::new(0.0, 0.0, f64::INFINITY, 1.0), 100, 100).is_err());
    }

    #[test]
    fn save_button_tokens() {
        // cell (3, 12) on a 1200x900 screen: x in [480, 520), y in [90, 120)
        let sig = extract_signature(&obs(vec![el([490.0, 95.0, 510.0, 110.0], "button", "Save")])).unwrap();
        assert_eq!(sig.ct_tokens.iter().collect::<Vec<_>>(), vec!["r3_c12|T:button"]);
        assert_eq!(sig.txt_tokens.iter().collect::<Vec<_>>(), vec!["r3_c12|X:save"]);
        assert_eq!(sig.mode_tag, "mode:light");
        assert_eq!(sig.text_size_tag, "text_size:100");
    }

    #[test]
    fn empty_screen() {
        let sig = extract_signature(&obs(vec![])).unwrap();
        assert!(sig.ct_tokens.is_empty() && sig.txt_tokens.is_empty());
        assert!(sig.embedding.iter().all(|&x| x == 0.0));
        assert_eq!(canonical_serialization(&sig), "mode:light\ntext_size:100");
    }

    #[test]
    fn duplicate_elements_collapse() {
        let e = el([10.0, 10.0, 20.0, 20.0], "button", "OK");
        let sig = extract_signature(&obs(vec![e.clone(), e])).unwrap();
        assert_eq!(sig.ct_tokens.len(), 1);
        assert_eq!(sig.txt_tokens.len(), 1);
    }

    #[test]
    fn empty_text_emits_no_text_token() {
        let sig = extract_signature(&obs(vec![el([10.0, 10.0, 20.0, 20.0], "pane", "   ")])).unwrap();
        assert_eq!(sig.ct_tokens.len(), 1);
        assert!(sig.txt_tokens.is_empty());
    }

    #[test]
    fn text_normalization() {
        assert_eq!(normalize_text("  Save   As\t File \n"), "save as file");
        assert_eq!(normalize_text(""), "");
    }

    #[test]
    fn canonical_serialization_layout() {
        let sig = extract_signature(&obs(vec![
            el([490.0, 95.0, 510.0, 110.0], "button", "Save"),
            el([0.0, 0.0, 10.0, 10.0], "menu_item", "File"),
        ]))
        .unwrap();
        assert_eq!(
            canonical_serialization(&sig),
            "r0_c0|T:menu_item\nr0_c0|X:file\nr3_c12|T:button\nr3_c12|X:save\nmode:light\ntext_size:100"
        );
        assert_eq!(sig.canonical_id.len(), CANONICAL_ID_HEX_LEN);
    }

    #[test]
    fn mode_flip_changes_id() {
        let mut o = obs(vec![el([490.0, 95.0, 510.0, 110.0], "button", "Save")]);
        let light = extract_signature(&o).unwrap();
        o.display_mode = DisplayMode::Dark;
        let dark = extract_signature(&o).unwrap();
        assert_eq!(light.ct_tokens, dark.ct_tokens);
        assert_ne!(light.canonical_id, dark.canonical_id);
    }

    #[test]
    fn one_token_difference_changes_id() {
        let a = extract_signature(&obs(vec![el([490.0, 95.0, 510.0, 110.0], "button", "Save")])).unwrap();
        let b = extract_signature(&obs(vec![el([490.0, 95.0, 510.0, 110.0], "button", "Open")])).unwrap();
        assert_eq!(a.ct_tokens, b.ct_tokens);
        assert_ne!(a.canonical_id, b.canonical_id);
    }

    #[test]
    fn embedding_identical_and_disjoint() {
        let a = extract_signature(&obs(vec![el([490.0, 95.0, 510.0, 110.0], "button", "")])).unwrap();
        let a2 = extract_signature(&obs(vec![el([490.0, 95.0, 510.0, 110.0], "button", "")])).unwrap();
        assert!((cosine(&a.embedding, &a2.embedding) - 1.0).abs() < 1e-12);

        // probe labels until the single token lands in a different bucket
        let (bucket_a, _) = hash_bucket("r3_c12|T:button", DEFAULT_EMBEDDING_DIM);
        let label = (0..)
            .map(|i| format!("kind{i}"))
            .find(|l| hash_bucket(&format!("r3_c12|T:{l}"), DEFAULT_EMBEDDING_DIM).0 != bucket_a)
            .unwrap();
        let b = extract_signature(&obs(vec![el([490.0, 95.0, 510.0, 110.0], &label, "")])).unwrap();
        assert_eq!(cosine(&a.embedding, &b.embedding), 0.0);
    }

    #[test]
    fn embedder_rejects_small_dim() {
        assert!(HashedEmbedder::new(7).is_err());
        assert!(HashedEmbedder::new(8).is_ok());
    }

    #[test]
    fn validation_errors() {
        let mut o = obs(vec![el([10.0, 10.0, 5.0, 20.0], "button", "")]);
        assert!(extract_signature(&o).is_err());
        o.elements = vec![el([1.0, 1.0, 2.0, 2.0], " ", "")];
        assert!(extract_signature(&o).is_err());
        o.elements.clear();
        o.screen_width = 0;
        assert!(extract_signature(&o).is_err());
    }

    #[test]
    fn parse_atom_roundtrip() {
        let a = parse_atom("r3_c12|T:button").unwrap();
        assert_eq!(a.cell, Cell { row: 3, col: 12 });
        assert_eq!(a.kind, AtomKind::ControlType);
        assert_eq!(a.value, "button");
        assert!(parse_atom("r30_c1|T:button").is_none());
        assert!(parse_atom("r3c12|T:button").is_none());
        assert!(parse_atom("r3_c12|Q:button").is_none());
        assert_eq!(parse_atom("r0_c0|X:").unwrap().kind, AtomKind::Text);
    }

    #[test]
    fn observation_json_shape() {
        let o = obs(vec![el([1.0, 2.0, 3.0, 4.0], "button", "Go")]);
        let s = serde_json::to_string(&o).unwrap();
        assert!(s.contains(r#""bbox":[1.0,2.0,3.0,4.0]"#));
        assert!(s.contains(r#""display_mode":"light""#));
        let back: ScreenObservation = serde_json::from_str(&s).unwrap();
        assert_eq!(back, o);
    }

    fn arb_element() -> impl Strategy<Value = UiElement> {
        (
            -100.0..1300.0f64,
            -100.0..1000.0f64,
            0.0..200.0f64,
            0.0..100.0f64,
            prop::sample::select(vec!["button", "edit", "text", "menu_item"]),
            prop::sample::select(vec!["", "Save", "  open  file", "OK", "Cancel"]),
        )
            .prop_map(|(x, y, w, h, label, text)| el([x, y, x + w, y + h], label, text))
    }

    proptest! {
        #[test]
        fn permutation_invariance(elements in prop::collection::vec(arb_element(), 0..25), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let o = obs(elements.clone());
            let mut shuffled = elements;
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a = extract_signature(&o).unwrap();
            let b = extract_signature(&obs(shuffled)).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(canonical_state_id(&a), a.canonical_id.clone());
        }

        #[test]
        fn tokens_stay_on_grid_and_embedding_is_unit(elements in prop::collection::vec(arb_element(), 0..25)) {
            let sig = extract_signature(&obs(elements)).unwrap();
            for t in sig.ct_tokens.iter().chain(&sig.txt_tokens) {
                prop_assert!(parse_atom(t).is_some(), "bad token {}", t);
            }
            let norm = sig.embedding.iter().map(|x| x * x).sum::<f64>().sqrt();
            if sig.token_count() == 0 {
                prop_assert_eq!(norm, 0.0);
            } else {
                // signed collisions can cancel exactly; otherwise unit norm
                prop_assert!(norm == 0.0 || (norm - 1.0).abs() <= 1e-9);
            }
        }
    }
}
