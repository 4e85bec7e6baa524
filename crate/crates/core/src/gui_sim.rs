//! Deterministic simulated GUI.
//!
//! A scenario declares hidden workflow states, each rendered from a screen
//! template. Several hidden states may share one template (an alias group),
//! which makes them indistinguishable on screen while their transitions
//! differ. Every emission is perturbed by bounded jitter: small position
//! shifts, text case flips, and decorative elements toggling off. Scenario
//! validation proves that jittered screens stay above the dedup threshold.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;
use std::sync::Arc;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::retrieval_index::{sparse_similarity, DedupConfig, RetrievalQuery, ScreenIndex};
use crate::rng::{derive_seed, rng_from_seed, SimRng};
use crate::screen_model::{
    element_atoms, extract_signature, BBox, DisplayMode, ScreenObservation, UiElement, GRID_SIZE,
};
use crate::state_graph::{ActionKind, ActionSignature};

/// Control label of elements that accept typed text.
pub const EDITABLE_CONTROL: &str = "edit";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScreenSize {
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JitterSpec {
    /// Maximum shift per axis in pixels. Defaults to one grid cell.
    #[serde(default)]
    pub max_shift_px: Option<f64>,
    /// Fraction of elements shifted on each emission (rounded down).
    #[serde(default = "default_fraction")]
    pub fraction: f64,
    #[serde(default)]
    pub case_flip_prob: f64,
    #[serde(default)]
    pub decorative_toggle_prob: f64,
}

fn default_fraction() -> f64 {
    0.1
}

impl Default for JitterSpec {
    fn default() -> Self {
        Self {
            max_shift_px: None,
            fraction: default_fraction(),
            case_flip_prob: 0.0,
            decorative_toggle_prob: 0.0,
        }
    }
}

impl JitterSpec {
    pub fn none() -> Self {
        Self {
            max_shift_px: Some(0.0),
            fraction: 0.0,
            case_flip_prob: 0.0,
            decorative_toggle_prob: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    /// Grid cell `[row, col]`; the element is drawn centered in it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cell: Option<[u32; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<BBox>,
    pub control: String,
    #[serde(default)]
    pub text: String,
    #[serde(default)]
    pub executable: bool,
    #[serde(default)]
    pub decorative: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extends: Option<String>,
    #[serde(default)]
    pub elements: Vec<ElementSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiddenState {
    pub id: String,
    pub template: String,
    /// Counted as a cross-application state when discovered.
    #[serde(default)]
    pub external: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeSpec {
    pub state: String,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Outcomes {
    Single(String),
    Distribution(Vec<OutcomeSpec>),
}

impl Outcomes {
    fn as_list(&self) -> Vec<(String, f64)> {
        match self {
            Outcomes::Single(s) => vec![(s.clone(), 1.0)],
            Outcomes::Distribution(v) => v.iter().map(|o| (o.state.clone(), o.p)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionSpec {
    pub from: String,
    pub element: String,
    #[serde(default = "default_kind")]
    pub kind: ActionKind,
    /// For `type_text`: the matching payload; absent matches any payload.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<String>,
    pub to: Outcomes,
}

fn default_kind() -> ActionKind {
    ActionKind::Click
}

fn default_text_size() -> u32 {
    100
}

fn default_mode() -> DisplayMode {
    DisplayMode::Light
}

/// Scenario file contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub screen: ScreenSize,
    #[serde(default = "default_mode")]
    pub display_mode: DisplayMode,
    #[serde(default = "default_text_size")]
    pub text_size_bin: u32,
    pub rollout_group: String,
    pub initial_state: String,
    #[serde(default)]
    pub payloads: Vec<String>,
    #[serde(default)]
    pub jitter: JitterSpec,
    pub templates: BTreeMap<String, TemplateSpec>,
    pub states: Vec<HiddenState>,
    #[serde(default)]
    pub transitions: Vec<TransitionSpec>,
    #[serde(default)]
    pub alias_groups: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
struct ResolvedElement {
    id: Option<String>,
    bbox: BBox,
    control: String,
    text: String,
    executable: bool,
    decorative: bool,
}

type TransitionKey = (usize, String, ActionKind, Option<String>);

/// A validated scenario ready to drive [`SimEnv`] instances.
#[derive(Debug, Clone)]
pub struct Scenario {
    spec: ScenarioSpec,
    hash: String,
    templates: HashMap<String, Vec<ResolvedElement>>,
    state_index: HashMap<String, usize>,
    transitions: HashMap<TransitionKey, Vec<(usize, f64)>>,
    max_shift: f64,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Json(j) => Error::Parse {
                path: path.to_path_buf(),
                line: j.line(),
                msg: j.to_string(),
            },
            other => other,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ScenarioSpec = serde_json::from_str(text)?;
        Self::compile(spec, DedupConfig::default().tau)
    }

    /// Validates a spec and resolves templates and transitions. Every problem
    /// found is reported in one error.
    pub fn compile(spec: ScenarioSpec, tau: f64) -> Result<Self> {
        let mut v = Vec::new();
        let ScreenSize { width, height } = spec.screen;
        if width == 0 || height == 0 {
            v.push(format!("screen size must be positive, got {width}x{height}"));
        }
        let cell_w = width.max(1) as f64 / GRID_SIZE as f64;
        let cell_h = height.max(1) as f64 / GRID_SIZE as f64;
        let max_shift = spec.jitter.max_shift_px.unwrap_or(cell_w.min(cell_h));
        let j = &spec.jitter;
        if !(max_shift >= 0.0) || !max_shift.is_finite() {
            v.push("jitter.max_shift_px must be a non-negative number".into());
        }
        for (name, p) in [
            ("fraction", j.fraction),
            ("case_flip_prob", j.case_flip_prob),
            ("decorative_toggle_prob", j.decorative_toggle_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                v.push(format!("jitter.{name} must lie in [0, 1], got {p}"));
            }
        }

        let mut templates = HashMap::new();
        for name in spec.templates.keys() {
            match resolve_template(&spec, name, cell_w, cell_h) {
                Ok(els) => {
                    let mut ids = BTreeSet::new();
                    for el in &els {
                        if let Some(id) = &el.id {
                            if !ids.insert(id.clone()) {
                                v.push(format!("template `{name}`: duplicate element id `{id}`"));
                            }
                        }
                    }
                    templates.insert(name.clone(), els);
                }
                Err(errs) => v.extend(errs),
            }
        }

        let mut state_index = HashMap::new();
        for (i, s) in spec.states.iter().enumerate() {
            if state_index.insert(s.id.clone(), i).is_some() {
                v.push(format!("duplicate hidden state `{}`", s.id));
            }
            if !spec.templates.contains_key(&s.template) {
                v.push(format!("state `{}` uses unknown template `{}`", s.id, s.template));
            }
        }
        if !state_index.contains_key(&spec.initial_state) {
            v.push(format!("initial state `{}` is not declared", spec.initial_state));
        }

        let mut transitions: HashMap<TransitionKey, Vec<(usize, f64)>> = HashMap::new();
        for (ti, t) in spec.transitions.iter().enumerate() {
            let at = format!("transition #{ti} ({} / {})", t.from, t.element);
            let Some(&from) = state_index.get(&t.from) else {
                v.push(format!("{at}: unknown source state"));
                continue;
            };
            let template = &spec.states[from].template;
            match templates
                .get(template)
                .and_then(|els| els.iter().find(|e| e.id.as_deref() == Some(t.element.as_str())))
            {
                None => v.push(format!("{at}: element not found in template `{template}`")),
                Some(el) => {
                    if !el.executable {
                        v.push(format!("{at}: element is not executable"));
                    }
                    if t.kind == ActionKind::TypeText && el.control != EDITABLE_CONTROL {
                        v.push(format!("{at}: type_text requires an `{EDITABLE_CONTROL}` element"));
                    }
                    if t.kind == ActionKind::Click && el.control == EDITABLE_CONTROL {
                        v.push(format!("{at}: edit elements are driven by type_text"));
                    }
                }
            }
            if t.kind == ActionKind::Click && t.payload.is_some() {
                v.push(format!("{at}: click transitions take no payload"));
            }
            let outs = t.to.as_list();
            let mut resolved = Vec::new();
            let mut total = 0.0;
            for (to, p) in outs {
                if !(p > 0.0) {
                    v.push(format!("{at}: outcome `{to}` has non-positive probability {p}"));
                }
                total += p;
                match state_index.get(&to) {
                    Some(&i) => resolved.push((i, p)),
                    None => v.push(format!("{at}: unknown outcome state `{to}`")),
                }
            }
            if (total - 1.0).abs() > 1e-9 {
                v.push(format!("{at}: outcome probabilities sum to {total}"));
            }
            let key = (from, t.element.clone(), t.kind, t.payload.clone());
            if transitions.insert(key, resolved).is_some() {
                v.push(format!("{at}: duplicate transition"));
            }
        }

        let mut aliased: HashMap<&str, usize> = HashMap::new();
        for (gi, group) in spec.alias_groups.iter().enumerate() {
            if group.len() < 2 {
                v.push(format!("alias group #{gi} needs at least two states"));
            }
            let mut tpl: Option<&str> = None;
            for s in group {
                match state_index.get(s) {
                    None => v.push(format!("alias group #{gi}: unknown state `{s}`")),
                    Some(&i) => {
                        aliased.insert(s.as_str(), gi);
                        let t = spec.states[i].template.as_str();
                        if tpl.is_some_and(|x| x != t) {
                            v.push(format!("alias group #{gi}: members must share one template"));
                        }
                        tpl = Some(t);
                    }
                }
            }
        }
        // two states rendering the same template must be declared aliases
        let mut by_template: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for s in &spec.states {
            by_template.entry(&s.template).or_default().push(&s.id);
        }
        for (tpl, members) in &by_template {
            if members.len() > 1 {
                let groups: BTreeSet<Option<usize>> = members.iter().map(|m| aliased.get(m).copied()).collect();
                if groups.len() != 1 || groups.contains(&None) {
                    v.push(format!(
                        "states {members:?} share template `{tpl}` but are not one alias group"
                    ));
                }
            }
        }

        if v.is_empty() {
            let shifted = |n: usize| (spec.jitter.fraction * n as f64).floor() as usize;
            let used: BTreeSet<&str> = spec.states.iter().map(|s| s.template.as_str()).collect();
            let mut sigs = Vec::new();
            for name in &used {
                let els = &templates[*name];
                let bound = jitter_similarity_bound(els, shifted(els.len()), max_shift, spec.screen);
                if bound + crate::retrieval_index::SIMILARITY_EPS < tau {
                    v.push(format!(
                        "template `{name}`: worst-case jittered similarity {bound:.4} is below tau {tau}"
                    ));
                }
                let obs = render(&spec, els);
                match extract_signature(&obs) {
                    Ok(sig) => sigs.push((*name, sig)),
                    Err(e) => v.push(format!("template `{name}`: {e}")),
                }
            }
            for i in 0..sigs.len() {
                for k in i + 1..sigs.len() {
                    let s = sparse_similarity(&sigs[i].1, &sigs[k].1);
                    if s + crate::retrieval_index::SIMILARITY_EPS >= tau {
                        v.push(format!(
                            "templates `{}` and `{}` are near-duplicates (similarity {s:.4})",
                            sigs[i].0, sigs[k].0
                        ));
                    }
                }
            }
        }

        if !v.is_empty() {
            return Err(Error::Scenario { name: spec.name.clone(), violations: v });
        }
        let hash = {
            let canonical = serde_json::to_string(&spec).expect("spec serializes");
            let mut h = hex::encode(Sha256::digest(canonical.as_bytes()));
            h.truncate(16);
            h
        };
        Ok(Self {
            spec,
            hash,
            templates,
            state_index,
            transitions,
            max_shift,
        })
    }

    pub fn spec(&self) -> &ScenarioSpec {
        &self.spec
    }

    pub fn name(&self) -> &str {
        &self.spec.name
    }

    /// Digest of the parsed scenario, echoed into trace headers.
    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn payloads(&self) -> &[String] {
        &self.spec.payloads
    }

    pub fn rollout_group(&self) -> &str {
        &self.spec.rollout_group
    }

    pub fn hidden_states(&self) -> impl Iterator<Item = &HiddenState> {
        self.spec.states.iter()
    }

    pub fn state_count(&self) -> usize {
        self.spec.states.len()
    }

    /// Jitter-free observation of a hidden state.
    pub fn template_observation(&self, state: &str) -> Option<ScreenObservation> {
        let i = *self.state_index.get(state)?;
        Some(render(&self.spec, &self.templates[&self.spec.states[i].template]))
    }

    /// Worst-case similarity between a template and any jittered rendering.
    pub fn jitter_bound(&self, state: &str) -> Option<f64> {
        let i = *self.state_index.get(state)?;
        let els = &self.templates[&self.spec.states[i].template];
        let k = (self.spec.jitter.fraction * els.len() as f64).floor() as usize;
        Some(jitter_similarity_bound(els, k, self.max_shift, self.spec.screen))
    }

    /// Dedup query for an observation rendered by this scenario.
    pub fn query_for(&self, sig: crate::screen_model::StructuralSignature, top_k: usize) -> RetrievalQuery {
        RetrievalQuery::new(sig, self.spec.rollout_group.clone(), self.spec.display_mode, self.spec.text_size_bin, top_k)
    }
}

fn resolve_template(
    spec: &ScenarioSpec,
    name: &str,
    cell_w: f64,
    cell_h: f64,
) -> std::result::Result<Vec<ResolvedElement>, Vec<String>> {
    let mut chain = Vec::new();
    let mut cur = Some(name);
    while let Some(n) = cur {
        if chain.contains(&n) {
            return Err(vec![format!("template `{name}`: cyclic `extends`")]);
        }
        chain.push(n);
        cur = match spec.templates.get(n) {
            Some(t) => t.extends.as_deref(),
            None => return Err(vec![format!("template `{name}`: extends unknown template `{n}`")]),
        };
    }
    let mut errs = Vec::new();
    let mut out = Vec::new();
    for n in chain.iter().rev() {
        for (i, e) in spec.templates[*n].elements.iter().enumerate() {
            let at = format!("template `{n}` element #{i}");
            if e.control.trim().is_empty() {
                errs.push(format!("{at}: empty control label"));
            }
            let bbox = match (e.cell, e.bbox) {
                (Some([r, c]), None) => {
                    if r >= GRID_SIZE || c >= GRID_SIZE {
                        errs.push(format!("{at}: cell [{r}, {c}] is off the grid"));
                    }
                    let (l, t) = (c as f64 * cell_w, r as f64 * cell_h);
                    BBox::new(l + 0.2 * cell_w, t + 0.2 * cell_h, l + 0.8 * cell_w, t + 0.8 * cell_h)
                }
                (None, Some(b)) => {
                    if !b.is_finite() || b.left > b.right || b.top > b.bottom {
                        errs.push(format!("{at}: malformed bbox"));
                    }
                    b
                }
                _ => {
                    errs.push(format!("{at}: give exactly one of `cell` or `bbox`"));
                    BBox::new(0.0, 0.0, 0.0, 0.0)
                }
            };
            out.push(ResolvedElement {
                id: e.id.clone(),
                bbox,
                control: e.control.clone(),
                text: e.text.clone(),
                executable: e.executable,
                decorative: e.decorative,
            });
        }
    }
    if errs.is_empty() {
        Ok(out)
    } else {
        Err(errs)
    }
}

fn to_ui(el: &ResolvedElement) -> UiElement {
    UiElement::new(el.bbox, el.control.clone(), el.text.clone(), el.executable)
}

fn render(spec: &ScenarioSpec, els: &[ResolvedElement]) -> ScreenObservation {
    ScreenObservation {
        elements: els.iter().map(to_ui).collect(),
        screen_width: spec.screen.width,
        screen_height: spec.screen.height,
        text_size_bin: spec.text_size_bin,
        display_mode: spec.display_mode,
        rollout_group: spec.rollout_group.clone(),
    }
}

fn crosses_cell(center: f64, shift: f64, extent: u32) -> bool {
    let idx = |x: f64| ((x * GRID_SIZE as f64 / extent as f64).floor()).clamp(0.0, GRID_SIZE as f64 - 1.0);
    idx(center - shift) != idx(center + shift)
}

/// Lower bound on the weighted Jaccard between a template rendering and any
/// jittered rendering in which at most `shifted` elements move by up to
/// `max_shift` pixels and every decorative element may disappear.
fn jitter_similarity_bound(els: &[ResolvedElement], shifted: usize, max_shift: f64, screen: ScreenSize) -> f64 {
    let mut ct = BTreeSet::new();
    let mut txt = BTreeSet::new();
    let (mut fragile_ct, mut fragile_txt, mut deco_ct, mut deco_txt) = (0usize, 0usize, 0usize, 0usize);
    for el in els {
        let atoms = element_atoms(&to_ui(el), screen.width, screen.height).expect("validated bbox");
        let (cx, cy) = el.bbox.center();
        let fragile = max_shift > 0.0
            && (crosses_cell(cx, max_shift, screen.width) || crosses_cell(cy, max_shift, screen.height));
        if fragile {
            fragile_ct += 1;
            fragile_txt += atoms.text.is_some() as usize;
        }
        if el.decorative {
            deco_ct += 1;
            deco_txt += atoms.text.is_some() as usize;
        }
        ct.insert(atoms.control);
        if let Some(t) = atoms.text {
            txt.insert(t);
        }
    }
    let component = |m: usize, moved: usize, removed: usize| {
        if m == 0 {
            1.0
        } else {
            (m.saturating_sub(moved + removed)) as f64 / (m + moved) as f64
        }
    };
    0.5 * component(ct.len(), shifted.min(fragile_ct), deco_ct)
        + 0.5 * component(txt.len(), shifted.min(fragile_txt), deco_txt)
}

/// Where replays and episodes start.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StartSnapshot {
    pub seed: u64,
    pub initial_state: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayPrefix {
    pub start_snapshot: StartSnapshot,
    pub actions: Vec<ActionSignature>,
    pub target_state_id: String,
    pub anchor_step: usize,
}

impl ReplayPrefix {
    /// Seed of the `trial`-th replay. Trial 0 is the benchmark replay.
    pub fn trial_seed(&self, trial: usize) -> u64 {
        derive_seed(self.start_snapshot.seed, &["replay", &trial.to_string()])
    }
}

/// One simulated application instance.
#[derive(Debug, Clone)]
pub struct SimEnv {
    scenario: Arc<Scenario>,
    rng: SimRng,
    hidden: usize,
    current: ScreenObservation,
    current_ids: Vec<Option<String>>,
}

impl SimEnv {
    pub fn new(scenario: Arc<Scenario>, seed: u64) -> Self {
        let hidden = scenario.state_index[&scenario.spec.initial_state];
        let mut env = Self {
            scenario,
            rng: rng_from_seed(seed),
            hidden,
            current: ScreenObservation {
                elements: Vec::new(),
                screen_width: 1,
                screen_height: 1,
                text_size_bin: 0,
                display_mode: DisplayMode::Light,
                rollout_group: String::new(),
            },
            current_ids: Vec::new(),
        };
        env.emit();
        env
    }

    /// Restarts from the scenario's initial state.
    pub fn reset(&mut self, seed: u64) -> ScreenObservation {
        let initial = self.scenario.spec.initial_state.clone();
        self.reset_to(seed, &initial).expect("initial state validated")
    }

    pub fn reset_to(&mut self, seed: u64, state: &str) -> Result<ScreenObservation> {
        let &i = self
            .scenario
            .state_index
            .get(state)
            .ok_or_else(|| Error::InvalidInput(format!("unknown hidden state `{state}`")))?;
        self.rng = rng_from_seed(seed);
        self.hidden = i;
        self.emit();
        Ok(self.current.clone())
    }

    pub fn scenario(&self) -> &Arc<Scenario> {
        &self.scenario
    }

    pub fn observation(&self) -> &ScreenObservation {
        &self.current
    }

    pub fn hidden_state(&self) -> &str {
        &self.scenario.spec.states[self.hidden].id
    }

    pub fn is_external(&self) -> bool {
        self.scenario.spec.states[self.hidden].external
    }

    /// Executes a signature. Signatures matching no declared transition leave
    /// the hidden state unchanged.
    pub fn step(&mut self, sig: &ActionSignature) -> ScreenObservation {
        if let Some(next) = self.resolve(sig) {
            self.hidden = next;
        }
        self.emit();
        self.current.clone()
    }

    fn resolve(&mut self, sig: &ActionSignature) -> Option<usize> {
        let sc = Arc::clone(&self.scenario);
        let (w, h) = (sc.spec.screen.width, sc.spec.screen.height);
        let element_id = self.current.elements.iter().zip(&self.current_ids).find_map(|(el, id)| {
            let atoms = element_atoms(el, w, h).ok()?;
            (el.executable && atoms.control == sig.target_token).then_some(id.as_ref()).flatten()
        })?;
        let key = (self.hidden, element_id.clone(), sig.kind, sig.payload.clone());
        let outcomes = sc
            .transitions
            .get(&key)
            .or_else(|| sc.transitions.get(&(self.hidden, element_id.clone(), sig.kind, None)))?;
        if outcomes.len() == 1 {
            return Some(outcomes[0].0);
        }
        let draw: f64 = self.rng.random();
        let mut acc = 0.0;
        for &(to, p) in outcomes {
            acc += p;
            if draw < acc {
                return Some(to);
            }
        }
        outcomes.last().map(|o| o.0)
    }

    fn emit(&mut self) {
        let sc = Arc::clone(&self.scenario);
        let spec = &sc.spec;
        let els = &sc.templates[&spec.states[self.hidden].template];
        let j = &spec.jitter;
        let k = (j.fraction * els.len() as f64).floor() as usize;
        let mut shifted = vec![false; els.len()];
        if k > 0 && sc.max_shift > 0.0 {
            for i in sample(&mut self.rng, els.len(), k) {
                shifted[i] = true;
            }
        }
        let mut elements = Vec::with_capacity(els.len());
        let mut ids = Vec::with_capacity(els.len());
        for (i, el) in els.iter().enumerate() {
            if el.decorative && j.decorative_toggle_prob > 0.0 && self.rng.random_bool(j.decorative_toggle_prob) {
                continue;
            }
            let mut ui = to_ui(el);
            if shifted[i] {
                let dx = self.rng.random_range(-sc.max_shift..=sc.max_shift);
                let dy = self.rng.random_range(-sc.max_shift..=sc.max_shift);
                ui.bbox = ui.bbox.translate(dx, dy);
            }
            if j.case_flip_prob > 0.0 && !ui.text.is_empty() && self.rng.random_bool(j.case_flip_prob) {
                ui.text = flip_case(&ui.text);
            }
            elements.push(ui);
            ids.push(el.id.clone());
        }
        self.current = ScreenObservation {
            elements,
            screen_width: spec.screen.width,
            screen_height: spec.screen.height,
            text_size_bin: spec.text_size_bin,
            display_mode: spec.display_mode,
            rollout_group: spec.rollout_group.clone(),
        };
        self.current_ids = ids;
    }
}

impl crate::explorer::Environment for SimEnv {
    fn observation(&self) -> &ScreenObservation {
        &self.current
    }

    fn step(&mut self, sig: &ActionSignature) -> Result<ScreenObservation> {
        Ok(SimEnv::step(self, sig))
    }

    fn is_external(&self) -> bool {
        SimEnv::is_external(self)
    }

    fn payloads(&self) -> &[String] {
        &self.scenario.spec.payloads
    }
}

fn flip_case(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_uppercase() {
                c.to_lowercase().collect::<String>()
            } else {
                c.to_uppercase().collect::<String>()
            }
        })
        .collect()
}

/// Replays a prefix `trials` times, each with its own seed, and reports
/// whether every trial lands in the target state under `index`'s dedup map.
pub fn verify_replay(scenario: &Arc<Scenario>, prefix: &ReplayPrefix, trials: usize, index: &ScreenIndex) -> Result<bool> {
    if trials == 0 {
        return Err(Error::InvalidInput("verify_replay needs at least one trial".into()));
    }
    for t in 0..trials {
        let obs = replay(scenario, prefix, prefix.trial_seed(t))?;
        let sig = extract_signature(&obs)?;
        let decision = index.dedup_decide(&scenario.query_for(sig, index.config().top_k));
        if decision.is_new || decision.state_id != prefix.target_state_id {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Runs a prefix from its snapshot and returns the resulting environment.
pub fn replay_env(scenario: &Arc<Scenario>, prefix: &ReplayPrefix, seed: u64) -> Result<SimEnv> {
    let mut env = SimEnv::new(Arc::clone(scenario), seed);
    env.reset_to(seed, &prefix.start_snapshot.initial_state)?;
    for a in &prefix.actions {
        env.step(a);
    }
    Ok(env)
}

fn replay(scenario: &Arc<Scenario>, prefix: &ReplayPrefix, seed: u64) -> Result<ScreenObservation> {
    Ok(replay_env(scenario, prefix, seed)?.observation().clone())
}

/// A visited state along a logged episode: which actions from the episode
/// start led there.
#[derive(Debug, Clone)]
pub struct VisitPath<'a> {
    pub snapshot: StartSnapshot,
    pub actions: &'a [ActionSignature],
    pub state_id: &'a str,
}

#[derive(Debug, Clone)]
pub struct PoolRequest {
    pub min_occurrences: usize,
    pub min_anchor: usize,
    pub count: usize,
    pub trials: usize,
}

impl Default for PoolRequest {
    fn default() -> Self {
        Self {
            min_occurrences: 3,
            min_anchor: 5,
            count: 3,
            trials: 5,
        }
    }
}

/// Chooses replay-start cases. `visits` lists, for every step of every
/// logged episode, the state reached and the action prefix that reached it
/// (anchor = prefix length). States need `min_occurrences` visits and a
/// prefix of at least `min_anchor` actions; candidates are verified and the
/// lexicographically first `count` are returned.
pub fn build_replay_pool(
    scenario: &Arc<Scenario>,
    visits: &[VisitPath<'_>],
    index: &ScreenIndex,
    req: &PoolRequest,
) -> Result<Vec<ReplayPrefix>> {
    if visits.is_empty() {
        return Ok(Vec::new());
    }
    let mut occurrences: BTreeMap<&str, usize> = BTreeMap::new();
    let mut candidates: BTreeMap<&str, Vec<&VisitPath<'_>>> = BTreeMap::new();
    for v in visits {
        *occurrences.entry(v.state_id).or_default() += 1;
        if v.actions.len() >= req.min_anchor {
            candidates.entry(v.state_id).or_default().push(v);
        }
    }
    let mut pool = Vec::new();
    let mut report = Vec::new();
    for (state, paths) in &candidates {
        if pool.len() == req.count {
            break;
        }
        let occ = occurrences[state];
        if occ < req.min_occurrences {
            report.push(format!("{state}: {occ} occurrences"));
            continue;
        }
        // shortest qualifying prefix first, then logged order
        let mut ordered: Vec<&&VisitPath<'_>> = paths.iter().collect();
        ordered.sort_by_key(|p| p.actions.len());
        let mut verified = None;
        for p in ordered.into_iter().take(3) {
            let prefix = ReplayPrefix {
                start_snapshot: p.snapshot.clone(),
                actions: p.actions.to_vec(),
                target_state_id: state.to_string(),
                anchor_step: p.actions.len(),
            };
            if verify_replay(scenario, &prefix, req.trials, index)? {
                verified = Some(prefix);
                break;
            }
        }
        match verified {
            Some(p) => pool.push(p),
            None => report.push(format!("{state}: replay verification failed")),
        }
    }
    if pool.len() < req.count {
        return Err(Error::Shortfall {
            requested: req.count,
            available: pool.len(),
            report,
        });
    }
    Ok(pool)
}

pub fn write_pool(pool: &[ReplayPrefix], path: &Path) -> Result<()> {
    let mut text = String::new();
    for p in pool {
        text.push_str(&serde_json::to_string(p)?);
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_pool(path: &Path) -> Result<Vec<ReplayPrefix>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: e.to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retrieval_index::meets_threshold;

    fn toy_json(jitter: &str) -> String {
        format!(
            r#"{{
  "name": "toy",
  "screen": {{"width": 1200, "height": 900}},
  "rollout_group": "sim/toy",
  "initial_state": "home",
  "payloads": ["abc"],
  "jitter": {jitter},
  "templates": {{
    "chrome": {{"elements": [
      {{"cell": [0, 0], "control": "title_bar", "text": "Toy"}},
      {{"cell": [0, 1], "control": "button", "text": "Min"}},
      {{"cell": [0, 2], "control": "button", "text": "Max"}},
      {{"cell": [0, 3], "control": "button", "text": "Close"}},
      {{"cell": [29, 0], "control": "status_bar", "text": "Ready"}}
    ]}},
    "home": {{"extends": "chrome", "elements": [
      {{"id": "go", "cell": [5, 5], "control": "button", "text": "Go", "executable": true}},
      {{"id": "coin", "cell": [6, 5], "control": "button", "text": "Flip", "executable": true}},
      {{"id": "name", "cell": [7, 5], "control": "edit", "text": "", "executable": true}},
      {{"cell": [8, 5], "control": "text", "text": "Home screen"}},
      {{"cell": [9, 5], "control": "text", "text": "welcome"}}
    ]}},
    "away": {{"extends": "chrome", "elements": [
      {{"id": "back", "cell": [5, 20], "control": "button", "text": "Back", "executable": true}},
      {{"cell": [8, 20], "control": "text", "text": "Away screen"}},
      {{"cell": [9, 20], "control": "text", "text": "far"}},
      {{"cell": [10, 20], "control": "text", "text": "further"}},
      {{"cell": [11, 20], "control": "image", "text": "logo"}}
    ]}},
    "typed": {{"extends": "chrome", "elements": [
      {{"id": "back", "cell": [5, 25], "control": "button", "text": "Back", "executable": true}},
      {{"cell": [8, 25], "control": "text", "text": "Typed"}},
      {{"cell": [9, 25], "control": "text", "text": "done"}},
      {{"cell": [10, 25], "control": "text", "text": "with"}},
      {{"cell": [11, 25], "control": "text", "text": "typing"}}
    ]}}
  }},
  "states": [
    {{"id": "home", "template": "home"}},
    {{"id": "away", "template": "away"}},
    {{"id": "away2", "template": "typed", "external": true}}
  ],
  "transitions": [
    {{"from": "home", "element": "go", "to": "away"}},
    {{"from": "home", "element": "coin", "to": [{{"state": "away", "p": 0.5}}, {{"state": "away2", "p": 0.5}}]}},
    {{"from": "home", "element": "name", "kind": "type_text", "to": "away2"}},
    {{"from": "away", "element": "back", "to": "home"}},
    {{"from": "away2", "element": "back", "to": "home"}}
  ]
}}"#
        )
    }

    const NO_JITTER: &str = r#"{"max_shift_px": 0, "fraction": 0}"#;
    const SOME_JITTER: &str = r#"{"max_shift_px": 5, "fraction": 0.3, "case_flip_prob": 0.5}"#;

    fn scenario(jitter: &str) -> Arc<Scenario> {
        Arc::new(Scenario::from_json(&toy_json(jitter)).unwrap())
    }

    fn click_on(env: &SimEnv, text: &str) -> ActionSignature {
        let obs = env.observation();
        let el = obs
            .elements
            .iter()
            .find(|e| e.text.eq_ignore_ascii_case(text))
            .unwrap();
        let atoms = element_atoms(el, obs.screen_width, obs.screen_height).unwrap();
        ActionSignature::click(atoms.control).unwrap()
    }

    #[test]
    fn same_seed_same_observation() {
        let sc = scenario(SOME_JITTER);
        let mut a = SimEnv::new(Arc::clone(&sc), 1);
        let mut b = SimEnv::new(sc, 99);
        assert_eq!(a.reset(5), b.reset(5));
    }

    #[test]
    fn zero_jitter_is_seed_independent() {
        let sc = scenario(NO_JITTER);
        let mut env = SimEnv::new(sc, 0);
        let a = serde_json::to_string(&env.reset(1)).unwrap();
        let b = serde_json::to_string(&env.reset(2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn jittered_seeds_still_dedupe() {
        let sc = scenario(r#"{"max_shift_px": 10, "fraction": 0.5, "case_flip_prob": 0.5}"#);
        let template = extract_signature(&sc.template_observation("home").unwrap()).unwrap();
        let mut env = SimEnv::new(Arc::clone(&sc), 0);
        for seed in 0..200 {
            let sig = extract_signature(&env.reset(seed)).unwrap();
            assert!(meets_threshold(sparse_similarity(&template, &sig), 0.93));
        }
    }

    #[test]
    fn unmatched_signature_is_noop() {
        let sc = scenario(NO_JITTER);
        let mut env = SimEnv::new(sc, 0);
        let before = env.observation().clone();
        let title = click_on(&env, "Toy");
        assert_eq!(env.step(&title), before);
        assert_eq!(env.hidden_state(), "home");
    }

    #[test]
    fn deterministic_and_typed_transitions() {
        let sc = scenario(NO_JITTER);
        let mut env = SimEnv::new(sc, 0);
        let go = click_on(&env, "Go");
        env.step(&go);
        assert_eq!(env.hidden_state(), "away");
        let back = click_on(&env, "Back");
        env.step(&back);
        assert_eq!(env.hidden_state(), "home");
        let edit = ActionSignature::type_text("r7_c5|T:edit", "anything").unwrap();
        env.step(&edit);
        assert_eq!(env.hidden_state(), "away2");
        assert!(env.is_external());
    }

    #[test]
    fn stochastic_split_within_tolerance() {
        let sc = scenario(SOME_JITTER);
        let mut env = SimEnv::new(sc, 0);
        let mut away = 0;
        for i in 0..1000 {
            env.reset(i);
            let coin = click_on(&env, "Flip");
            env.step(&coin);
            away += (env.hidden_state() == "away") as usize;
        }
        assert!((450..=550).contains(&away), "away = {away}");
    }

    #[test]
    fn validation_lists_violations() {
        let bad = toy_json(NO_JITTER)
            .replace(r#""to": "away"}"#, r#""to": "nowhere"}"#)
            .replace(r#""initial_state": "home""#, r#""initial_state": "missing""#);
        match Scenario::from_json(&bad) {
            Err(Error::Scenario { violations, .. }) => {
                assert!(violations.iter().any(|v| v.contains("nowhere")));
                assert!(violations.iter().any(|v| v.contains("missing")));
            }
            other => panic!("unexpected {other:?}"),
        }
        let bad = toy_json(NO_JITTER).replace(r#""p": 0.5}, {"state": "away2", "p": 0.5"#, r#""p": 0.5}, {"state": "away2", "p": 0.6"#);
        assert!(matches!(Scenario::from_json(&bad), Err(Error::Scenario { .. })));
    }

    #[test]
    fn unsafe_jitter_rejected() {
        // a full-cell shift on 30% of ~10 elements can move 3 atoms out of ~10
        let err = Scenario::from_json(&toy_json(r#"{"fraction": 0.3}"#)).unwrap_err();
        match err {
            Error::Scenario { violations, .. } => assert!(violations.iter().any(|v| v.contains("worst-case"))),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn undeclared_alias_rejected() {
        let bad = toy_json(NO_JITTER).replace(r#""template": "typed", "external": true"#, r#""template": "away""#);
        assert!(matches!(Scenario::from_json(&bad), Err(Error::Scenario { .. })));
    }

    fn corpus_index(sc: &Arc<Scenario>) -> ScreenIndex {
        let mut idx = ScreenIndex::new(DedupConfig::default()).unwrap();
        for s in ["home", "away", "away2"] {
            let sig = extract_signature(&sc.template_observation(s).unwrap()).unwrap();
            let q = sc.query_for(sig, 20);
            let mut d = idx.dedup_decide(&q);
            d.state_id = s.to_string();
            idx.insert(q.signature, sc.rollout_group(), d.state_id).unwrap();
        }
        idx
    }

    #[test]
    fn replay_verification() {
        let sc = scenario(SOME_JITTER);
        let idx = corpus_index(&sc);
        let env = SimEnv::new(Arc::clone(&sc), 0);
        let go = click_on(&env, "Go");
        let coin = click_on(&env, "Flip");
        let snap = StartSnapshot { seed: 3, initial_state: "home".into() };
        let det = ReplayPrefix {
            start_snapshot: snap.clone(),
            actions: vec![go],
            target_state_id: "away".into(),
            anchor_step: 1,
        };
        assert!(verify_replay(&sc, &det, 10, &idx).unwrap());
        let stoch = ReplayPrefix { actions: vec![coin], ..det.clone() };
        assert!(!verify_replay(&sc, &stoch, 20, &idx).unwrap());
        let empty = ReplayPrefix { actions: vec![], anchor_step: 0, target_state_id: "home".into(), ..det.clone() };
        assert!(verify_replay(&sc, &empty, 3, &idx).unwrap());
        let wrong = ReplayPrefix { target_state_id: "away".into(), ..empty };
        assert!(!verify_replay(&sc, &wrong, 3, &idx).unwrap());
        assert!(verify_replay(&sc, &det, 0, &idx).is_err());
    }

    #[test]
    fn pool_selection() {
        let sc = scenario(NO_JITTER);
        let idx = corpus_index(&sc);
        assert!(build_replay_pool(&sc, &[], &idx, &PoolRequest::default()).unwrap().is_empty());

        let env = SimEnv::new(Arc::clone(&sc), 0);
        let go = click_on(&env, "Go");
        let mut to_away = SimEnv::new(Arc::clone(&sc), 0);
        to_away.step(&go);
        let back = click_on(&to_away, "Back");
        // go, back, go, back, go: alternates home/away, reaching away at 1, 3, 5
        let actions = vec![go.clone(), back.clone(), go.clone(), back.clone(), go.clone(), back.clone()];
        let snap = StartSnapshot { seed: 0, initial_state: "home".into() };
        let states = ["away", "home", "away", "home", "away", "home"];
        let visits: Vec<VisitPath<'_>> = (0..actions.len())
            .map(|i| VisitPath { snapshot: snap.clone(), actions: &actions[..=i], state_id: states[i] })
            .collect();
        let req = PoolRequest { count: 2, ..Default::default() };
        let pool = build_replay_pool(&sc, &visits, &idx, &req).unwrap();
        assert_eq!(pool.len(), 2);
        assert_eq!(pool[0].target_state_id, "away");
        assert_eq!(pool[0].anchor_step, 5);
        assert_eq!(pool[1].target_state_id, "home");
        assert_eq!(pool[1].anchor_step, 6);
        let again = build_replay_pool(&sc, &visits, &idx, &req).unwrap();
        assert_eq!(pool, again);
        let req = PoolRequest { count: 3, ..Default::default() };
        assert!(matches!(
            build_replay_pool(&sc, &visits, &idx, &req),
            Err(Error::Shortfall { requested: 3, available: 2, .. })
        ));
    }
}
