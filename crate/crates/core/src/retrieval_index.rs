//! Metadata-filtered sparse retrieval with bounded Jaccard verification.
//!
//! Candidates are pulled from an inverted index over structural atoms and
//! ranked by IDF-weighted overlap; the ranking only has to surface the right
//! screens within `top_k`. The merge decision itself is made by the weighted
//! Jaccard score against the configured threshold.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::screen_model::{cosine, DisplayMode, StructuralSignature};

/// Slack applied when comparing a similarity against the threshold, so that
/// pairs sitting exactly on the boundary are not split by float rounding.
pub const SIMILARITY_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityWeights {
    pub control_type: f64,
    pub text: f64,
}

impl SimilarityWeights {
    pub fn new(control_type: f64, text: f64) -> Result<Self> {
        let w = Self { control_type, text };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if self.control_type < 0.0 || self.text < 0.0 {
            return Err(Error::Config("similarity weights must be non-negative".into()));
        }
        if ((self.control_type + self.text) - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "similarity weights must sum to 1, got {} + {}",
                self.control_type, self.text
            )));
        }
        Ok(())
    }
}

impl Default for SimilarityWeights {
    fn default() -> Self {
        Self { control_type: 0.5, text: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DedupConfig {
    /// Near-duplicate threshold on the weighted Jaccard score.
    pub tau: f64,
    pub weights: SimilarityWeights,
    /// Retrieval depth before verification.
    pub top_k: usize,
    /// Weight of dense cosine in candidate ranking; 0 disables it.
    #[serde(default)]
    pub dense_weight: f64,
}

impl Default for DedupConfig {
    fn default() -> Self {
        Self {
            tau: 0.93,
            weights: SimilarityWeights::default(),
            top_k: 20,
            dense_weight: 0.0,
        }
    }
}

impl DedupConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::Config(format!("tau must lie in [0, 1], got {}", self.tau)));
        }
        if self.top_k == 0 {
            return Err(Error::Config("top_k must be >= 1".into()));
        }
        if !(self.dense_weight >= 0.0) {
            return Err(Error::Config("dense_weight must be non-negative".into()));
        }
        Ok(())
    }
}

/// Standard Jaccard index. Two empty sets are identical (1.0).
pub fn jaccard_component(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let inter = small.iter().filter(|t| large.contains(*t)).count();
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

pub fn sparse_similarity(q: &StructuralSignature, c: &StructuralSignature) -> f64 {
    sparse_similarity_weighted(q, c, &SimilarityWeights::default())
}

pub fn sparse_similarity_weighted(q: &StructuralSignature, c: &StructuralSignature, w: &SimilarityWeights) -> f64 {
    w.control_type * jaccard_component(&q.ct_tokens, &c.ct_tokens)
        + w.text * jaccard_component(&q.txt_tokens, &c.txt_tokens)
}

/// Threshold test with [`SIMILARITY_EPS`] slack.
pub fn meets_threshold(similarity: f64, tau: f64) -> bool {
    similarity + SIMILARITY_EPS >= tau
}

/// Inverse document frequency used by the ranking stage.
pub fn idf(doc_freq: usize, doc_count: usize) -> f64 {
    let n = doc_count as f64;
    let df = doc_freq as f64;
    (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexedScreen {
    pub canonical_id: String,
    pub signature: StructuralSignature,
    pub rollout_group: String,
    pub insert_seq: u64,
    pub dedup_state_id: String,
}

#[derive(Debug, Clone)]
pub struct RetrievalQuery {
    pub signature: StructuralSignature,
    pub rollout_group_prefix: String,
    pub display_mode: DisplayMode,
    pub text_size_bin: u32,
    pub top_k: usize,
}

impl RetrievalQuery {
    pub fn new(
        signature: StructuralSignature,
        rollout_group_prefix: impl Into<String>,
        display_mode: DisplayMode,
        text_size_bin: u32,
        top_k: usize,
    ) -> Self {
        Self {
            signature,
            rollout_group_prefix: rollout_group_prefix.into(),
            display_mode,
            text_size_bin,
            top_k,
        }
    }

    /// True when a stored screen passes the prefix, mode and text-size filters.
    pub fn admits(&self, screen: &IndexedScreen) -> bool {
        screen.rollout_group.starts_with(&self.rollout_group_prefix)
            && screen.signature.mode_tag == format!("mode:{}", self.display_mode)
            && screen.signature.text_size_tag == format!("text_size:{}", self.text_size_bin)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredCandidate {
    pub canonical_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DedupDecision {
    pub state_id: String,
    pub is_new: bool,
    pub best_similarity: f64,
    /// Canonical ID of the stored screen the decision was matched against.
    pub matched: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexStats {
    pub screen_count: usize,
    pub token_count: usize,
    pub posting_entries: usize,
    pub state_count: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexManifest {
    format: String,
    version: u32,
    screen_count: usize,
    token_count: usize,
    config: DedupConfig,
}

/// Inverted index over structural atoms with per-screen filter metadata.
#[derive(Debug, Clone)]
pub struct ScreenIndex {
    config: DedupConfig,
    screens: Vec<IndexedScreen>,
    by_id: HashMap<String, usize>,
    postings: HashMap<String, Vec<u32>>,
    empty_screens: Vec<u32>,
    next_seq: u64,
}

impl ScreenIndex {
    pub fn new(config: DedupConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            screens: Vec::new(),
            by_id: HashMap::new(),
            postings: HashMap::new(),
            empty_screens: Vec::new(),
            next_seq: 0,
        })
    }

    pub fn config(&self) -> &DedupConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.screens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.screens.is_empty()
    }

    pub fn screens(&self) -> &[IndexedScreen] {
        &self.screens
    }

    pub fn get(&self, canonical_id: &str) -> Option<&IndexedScreen> {
        self.by_id.get(canonical_id).map(|&i| &self.screens[i])
    }

    pub fn contains_token(&self, token: &str) -> bool {
        self.postings.contains_key(token)
    }

    /// Adds a screen and returns its insert sequence number. Re-inserting an
    /// identical signature is a no-op that returns the original sequence.
    pub fn insert(
        &mut self,
        signature: StructuralSignature,
        rollout_group: impl Into<String>,
        dedup_state_id: impl Into<String>,
    ) -> Result<u64> {
        let seq = self.next_seq;
        self.insert_with_seq(signature, rollout_group.into(), dedup_state_id.into(), seq)
    }

    fn insert_with_seq(
        &mut self,
        signature: StructuralSignature,
        rollout_group: String,
        dedup_state_id: String,
        seq: u64,
    ) -> Result<u64> {
        if let Some(&i) = self.by_id.get(&signature.canonical_id) {
            let existing = &self.screens[i];
            if existing.signature.ct_tokens != signature.ct_tokens
                || existing.signature.txt_tokens != signature.txt_tokens
                || existing.signature.mode_tag != signature.mode_tag
                || existing.signature.text_size_tag != signature.text_size_tag
            {
                return Err(Error::Integrity(format!(
                    "canonical id {} already indexed with a different signature",
                    signature.canonical_id
                )));
            }
            return Ok(existing.insert_seq);
        }
        if seq < self.next_seq {
            return Err(Error::Integrity(format!(
                "insert sequence {seq} is not greater than previous {}",
                self.next_seq.saturating_sub(1)
            )));
        }
        let doc = self.screens.len() as u32;
        for token in signature.ct_tokens.iter().chain(&signature.txt_tokens) {
            self.postings.entry(token.clone()).or_default().push(doc);
        }
        if signature.token_count() == 0 {
            self.empty_screens.push(doc);
        }
        self.by_id.insert(signature.canonical_id.clone(), self.screens.len());
        self.screens.push(IndexedScreen {
            canonical_id: signature.canonical_id.clone(),
            signature,
            rollout_group,
            insert_seq: seq,
            dedup_state_id,
        });
        self.next_seq = seq + 1;
        Ok(seq)
    }

    /// Ranked candidates that pass every metadata filter. Screens sharing no
    /// atom with the query are not candidates, except that an empty query
    /// retrieves the stored empty screens.
    pub fn search(&self, q: &RetrievalQuery) -> Vec<ScoredCandidate> {
        self.ranked_docs(q)
            .into_iter()
            .map(|(doc, score)| ScoredCandidate {
                canonical_id: self.screens[doc as usize].canonical_id.clone(),
                score,
            })
            .collect()
    }

    fn ranked_docs(&self, q: &RetrievalQuery) -> Vec<(u32, f64)> {
        if q.top_k == 0 || self.screens.is_empty() {
            return Vec::new();
        }
        let mut scored: Vec<(u32, f64)> = if q.signature.token_count() == 0 {
            self.empty_screens.iter().map(|&d| (d, 0.0)).collect()
        } else {
            let n = self.screens.len();
            let mut acc: HashMap<u32, f64> = HashMap::new();
            for token in q.signature.sorted_tokens() {
                if let Some(post) = self.postings.get(token) {
                    let w = idf(post.len(), n);
                    for &d in post {
                        *acc.entry(d).or_insert(0.0) += w;
                    }
                }
            }
            acc.into_iter().collect()
        };
        scored.retain(|&(d, _)| q.admits(&self.screens[d as usize]));
        if self.config.dense_weight > 0.0 {
            for (d, s) in scored.iter_mut() {
                let emb = &self.screens[*d as usize].signature.embedding;
                *s += self.config.dense_weight * cosine(&q.signature.embedding, emb);
            }
        }
        // doc index order equals insert_seq order
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        scored.truncate(q.top_k);
        scored
    }

    /// Retrieves the top-K candidates and verifies each with the weighted
    /// Jaccard score. The best candidate at or above `tau` supplies the state;
    /// equal similarities resolve to the earliest inserted screen.
    pub fn dedup_decide(&self, q: &RetrievalQuery) -> DedupDecision {
        let mut best: Option<(u32, f64)> = None;
        for (doc, _) in self.ranked_docs(q) {
            let sim = sparse_similarity_weighted(
                &q.signature,
                &self.screens[doc as usize].signature,
                &self.config.weights,
            );
            best = match best {
                Some((bd, bs)) if bs > sim || (bs == sim && bd < doc) => Some((bd, bs)),
                _ => Some((doc, sim)),
            };
        }
        match best {
            Some((doc, sim)) if meets_threshold(sim, self.config.tau) => {
                let s = &self.screens[doc as usize];
                DedupDecision {
                    state_id: s.dedup_state_id.clone(),
                    is_new: false,
                    best_similarity: sim,
                    matched: Some(s.canonical_id.clone()),
                }
            }
            other => DedupDecision {
                state_id: q.signature.canonical_id.clone(),
                is_new: true,
                best_similarity: other.map_or(0.0, |(_, s)| s),
                matched: None,
            },
        }
    }

    /// Resolves an observation to a deduplicated state and indexes it.
    /// An exact re-observation short-circuits to its recorded state.
    pub fn observe(&mut self, q: &RetrievalQuery, rollout_group: &str) -> Result<DedupDecision> {
        if let Some(existing) = self.get(&q.signature.canonical_id) {
            if q.admits(existing) {
                return Ok(DedupDecision {
                    state_id: existing.dedup_state_id.clone(),
                    is_new: false,
                    best_similarity: 1.0,
                    matched: Some(existing.canonical_id.clone()),
                });
            }
        }
        let decision = self.dedup_decide(q);
        self.insert(q.signature.clone(), rollout_group, decision.state_id.clone())?;
        Ok(decision)
    }

    pub fn stats(&self) -> IndexStats {
        let states: HashSet<&str> = self.screens.iter().map(|s| s.dedup_state_id.as_str()).collect();
        IndexStats {
            screen_count: self.screens.len(),
            token_count: self.postings.len(),
            posting_entries: self.postings.values().map(Vec::len).sum(),
            state_count: states.len(),
        }
    }

    /// Writes the screens as JSON-lines plus a manifest next to them
    /// (`<path>.manifest.json`).
    pub fn save_snapshot(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for s in &self.screens {
            serde_json::to_writer(&mut w, s)?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        let manifest = IndexManifest {
            format: "screensearch-index".into(),
            version: 1,
            screen_count: self.screens.len(),
            token_count: self.postings.len(),
            config: self.config.clone(),
        };
        let mpath = manifest_path(path);
        let text = serde_json::to_string_pretty(&manifest)?;
        std::fs::write(&mpath, text + "\n").map_err(|e| Error::io(&mpath, e))?;
        Ok(())
    }

    pub fn load_snapshot(path: &Path) -> Result<Self> {
        let mpath = manifest_path(path);
        let mtext = std::fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
        let manifest: IndexManifest = serde_json::from_str(&mtext).map_err(|e| Error::Parse {
            path: mpath.clone(),
            line: e.line(),
            msg: e.to_string(),
        })?;
        let mut index = ScreenIndex::new(manifest.config)?;
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |msg: String| Error::Parse { path: path.to_path_buf(), line: i + 1, msg };
            let s: IndexedScreen = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
            if s.canonical_id != s.signature.canonical_id {
                return Err(parse_err("canonical_id does not match its signature".into()));
            }
            index
                .insert_with_seq(s.signature, s.rollout_group, s.dedup_state_id, s.insert_seq)
                .map_err(|e| parse_err(e.to_string()))?;
        }
        if index.len() != manifest.screen_count {
            return Err(Error::Integrity(format!(
                "manifest lists {} screens, snapshot holds {}",
                manifest.screen_count,
                index.len()
            )));
        }
        Ok(index)
    }
}

pub fn manifest_path(path: &Path) -> std::path::PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".manifest.json");
    p.into()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(tokens: &[&str]) -> BTreeSet<String> {
        tokens.iter().map(|s| s.to_string()).collect()
    }

    fn sig(ct: &[&str], txt: &[&str]) -> StructuralSignature {
        StructuralSignature::from_tokens(set(ct), set(txt), DisplayMode::Light, 100)
    }

    fn query(s: &StructuralSignature) -> RetrievalQuery {
        RetrievalQuery::new(s.clone(), "g", DisplayMode::Light, 100, 20)
    }

    #[test]
    fn jaccard_cases() {
        assert_eq!(jaccard_component(&set(&["a", "b"]), &set(&["a", "b"])), 1.0);
        assert_eq!(jaccard_component(&set(&["a"]), &set(&["b"])), 0.0);
        assert_eq!(jaccard_component(&set(&["a", "b", "c", "d"]), &set(&["a", "b", "c"])), 0.75);
        assert_eq!(jaccard_component(&set(&[]), &set(&[])), 1.0);
        assert_eq!(jaccard_component(&set(&["a"]), &set(&[])), 0.0);
    }

    #[test]
    fn weighted_mean() {
        // J_ct = 1, J_txt = 1/2
        let a = sig(&["r0_c0|T:a"], &["r0_c0|X:x", "r0_c1|X:y"]);
        let b = sig(&["r0_c0|T:a"], &["r0_c0|X:x"]);
        assert_eq!(sparse_similarity(&a, &b), 0.75);
        assert_eq!(sparse_similarity(&a, &a), 1.0);
    }

    #[test]
    fn table_weights_at_threshold() {
        let s = 0.5 * 0.9 + 0.5 * 0.96;
        assert!(meets_threshold(s, 0.93));
        assert!(!meets_threshold(0.929, 0.93));
    }

    #[test]
    fn weights_must_sum_to_one() {
        assert!(SimilarityWeights::new(0.5, 0.6).is_err());
        assert!(SimilarityWeights::new(0.3, 0.7).is_ok());
        let cfg = DedupConfig { top_k: 0, ..Default::default() };
        assert!(ScreenIndex::new(cfg).is_err());
    }

    #[test]
    fn empty_index_returns_nothing() {
        let idx = ScreenIndex::new(DedupConfig::default()).unwrap();
        assert!(idx.search(&query(&sig(&["r0_c0|T:a"], &[]))).is_empty());
        let d = idx.dedup_decide(&query(&sig(&["r0_c0|T:a"], &[])));
        assert!(d.is_new);
        assert_eq!(d.best_similarity, 0.0);
    }

    #[test]
    fn insert_then_query_ranks_first() {
        let mut idx = ScreenIndex::new(DedupConfig::default()).unwrap();
        let a = sig(&["r0_c0|T:a", "r0_c1|T:b"], &["r0_c0|X:hi"]);
        let b = sig(&["r0_c0|T:a"], &[]);
        idx.insert(b.clone(), "g", b.canonical_id.clone()).unwrap();
        idx.insert(a.clone(), "g", a.canonical_id.clone()).unwrap();
        let res = idx.search(&query(&a));
        assert_eq!(res[0].canonical_id, a.canonical_id);
        assert_eq!(res.len(), 2);
    }

    #[test]
    fn mode_filter_excludes() {
        let mut idx = ScreenIndex::new(DedupConfig::default()).unwrap();
        let dark = StructuralSignature::from_tokens(set(&["r0_c0|T:a"]), set(&[]), DisplayMode::Dark, 100);
        idx.insert(dark.clone(), "g", dark.canonical_id.clone()).unwrap();
        let q = RetrievalQuery::new(dark.clone(), "g", DisplayMode::Light, 100, 20);
        assert!(idx.search(&q).is_empty());
        let q = RetrievalQuery::new(dark.clone(), "g", DisplayMode::Dark, 101, 20);
        assert!(idx.search(&q).is_empty());
        let q = RetrievalQuery::new(dark.clone(), "other", DisplayMode::Dark, 100, 20);
        assert!(idx.search(&q).is_empty());
        let q = RetrievalQuery::new(dark, "", DisplayMode::Dark, 100, 20);
        assert_eq!(idx.search(&q).len(), 1);
    }

    #[test]
    fn conflicting_insert_is_integrity_error() {
        let mut idx = ScreenIndex::new(DedupConfig::default()).unwrap();
        let a = sig(&["r0_c0|T:a"], &[]);
        idx.insert(a.clone(), "g", "s").unwrap();
        assert_eq!(idx.insert(a.clone(), "g", "s").unwrap(), 0);
        let mut forged = sig(&["r0_c0|T:b"], &[]);
        forged.canonical_id = a.canonical_id.clone();
        assert!(matches!(idx.insert(forged, "g", "s"), Err(Error::Integrity(_))));
    }

    #[test]
    fn exact_reobservation_maps_to_first_state() {
        let mut idx = ScreenIndex::new(DedupConfig::default()).unwrap();
        let a = sig(&["r0_c0|T:a", "r0_c1|T:b"], &["r0_c0|X:hi"]);
        let d = idx.observe(&query(&a), "g").unwrap();
        assert!(d.is_new);
        let d2 = idx.observe(&query(&a), "g").unwrap();
        assert!(!d2.is_new);
        assert_eq!(d2.best_similarity, 1.0);
        assert_eq!(d2.state_id, d.state_id);
        assert_eq!(idx.dedup_decide(&query(&a)).best_similarity, 1.0);
    }

    #[test]
    fn tie_resolves_to_lower_insert_seq() {
        // 40 shared atoms plus one private atom each: J_ct = 40/42 for both
        // candidates, J_txt = 1 (empty/empty), similarity ~0.976
        let base: Vec<String> = (0..40).map(|i| format!("r{}_c{}|T:a", i % 30, 5 + i / 30)).collect();
        let mut q_ct = base.clone();
        q_ct.push("r0_c1|T:q".into());
        let mut c1 = base.clone();
        c1.push("r0_c2|T:x".into());
        let build = |v: &Vec<String>| {
            StructuralSignature::from_tokens(v.iter().cloned().collect(), BTreeSet::new(), DisplayMode::Light, 100)
        };
        let mut c2 = base.clone();
        c2.push("r0_c3|T:y".into());
        let (qs, s1, s2) = (build(&q_ct), build(&c1), build(&c2));
        assert_eq!(sparse_similarity(&qs, &s1), sparse_similarity(&qs, &s2));
        let mut idx = ScreenIndex::new(DedupConfig::default()).unwrap();
        idx.insert(s1.clone(), "g", "first").unwrap();
        idx.insert(s2.clone(), "g", "second").unwrap();
        let d = idx.dedup_decide(&query(&qs));
        assert!(!d.is_new);
        assert_eq!(d.state_id, "first");
    }

    #[test]
    fn blank_screens_dedupe_together() {
        let mut idx = ScreenIndex::new(DedupConfig::default()).unwrap();
        let empty = sig(&[], &[]);
        idx.insert(empty.clone(), "g", "blank").unwrap();
        let d = idx.dedup_decide(&query(&empty));
        assert!(!d.is_new);
        assert_eq!(d.state_id, "blank");
    }

    #[test]
    fn snapshot_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("index.jsonl");
        let mut idx = ScreenIndex::new(DedupConfig::default()).unwrap();
        for i in 0..10 {
            let s = sig(&[&format!("r{i}_c0|T:a"), "r0_c9|T:z"], &[&format!("r{i}_c0|X:t")]);
            idx.observe(&query(&s), "g").unwrap();
        }
        idx.save_snapshot(&path).unwrap();
        let back = ScreenIndex::load_snapshot(&path).unwrap();
        assert_eq!(back.screens(), idx.screens());
        assert_eq!(back.stats(), idx.stats());
        let q = query(&sig(&["r3_c0|T:a"], &[]));
        assert_eq!(back.search(&q), idx.search(&q));
    }

    #[test]
    fn snapshot_bad_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("index.jsonl");
        let idx = ScreenIndex::new(DedupConfig::default()).unwrap();
        idx.save_snapshot(&path).unwrap();
        std::fs::write(&path, "\n{not json}\n").unwrap();
        match ScreenIndex::load_snapshot(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }
}
