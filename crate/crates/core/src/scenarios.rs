//! Builders for the scenarios shipped in `scenarios/`.
//!
//! The JSON files are generated from these functions (`screensearch sim
//! generate <name>`), and a test keeps the two in sync.

use std::collections::BTreeMap;

use crate::gui_sim::{
    ElementSpec, HiddenState, JitterSpec, OutcomeSpec, Outcomes, ScenarioSpec, ScreenSize, TemplateSpec,
    TransitionSpec,
};
use crate::screen_model::{BBox, DisplayMode};
use crate::state_graph::ActionKind;

pub const NAMES: [&str; 4] = ["aliased_hub", "alias_free_hub", "loop_trap", "reference_notepad"];

pub fn by_name(name: &str) -> Option<ScenarioSpec> {
    match name {
        "aliased_hub" => Some(aliased_hub()),
        "alias_free_hub" => Some(alias_free_hub()),
        "loop_trap" => Some(loop_trap()),
        "reference_notepad" => Some(reference_notepad()),
        _ => None,
    }
}

#[derive(Default)]
struct Tb {
    extends: Option<String>,
    els: Vec<ElementSpec>,
}

impl Tb {
    fn new() -> Self {
        Self::default()
    }

    fn on(base: &str) -> Self {
        Self {
            extends: Some(base.to_string()),
            els: Vec::new(),
        }
    }

    fn push(mut self, id: Option<&str>, r: u32, c: u32, control: &str, text: &str, exec: bool) -> Self {
        self.els.push(ElementSpec {
            id: id.map(str::to_string),
            cell: Some([r, c]),
            bbox: None,
            control: control.into(),
            text: text.into(),
            executable: exec,
            decorative: false,
        });
        self
    }

    fn text(self, r: u32, c: u32, control: &str, text: &str) -> Self {
        self.push(None, r, c, control, text, false)
    }

    fn act(self, id: &str, r: u32, c: u32, control: &str, text: &str) -> Self {
        self.push(Some(id), r, c, control, text, true)
    }

    /// Executable element without transitions.
    fn noop(self, r: u32, c: u32, control: &str, text: &str) -> Self {
        self.push(None, r, c, control, text, true)
    }

    fn deco(mut self, r: u32, c: u32, control: &str, text: &str) -> Self {
        self = self.text(r, c, control, text);
        self.els.last_mut().unwrap().decorative = true;
        self
    }

    fn boxed(mut self, bbox: BBox, control: &str, text: &str) -> Self {
        self.els.push(ElementSpec {
            id: None,
            cell: None,
            bbox: Some(bbox),
            control: control.into(),
            text: text.into(),
            executable: false,
            decorative: false,
        });
        self
    }

    /// A block of static labels laid out row-major from `(r, c)`.
    fn block(mut self, r: u32, c: u32, per_row: u32, control: &str, texts: &[&str]) -> Self {
        for (i, t) in texts.iter().enumerate() {
            let i = i as u32;
            self = self.text(r + i / per_row, c + 2 * (i % per_row), control, t);
        }
        self
    }

    fn build(self) -> TemplateSpec {
        TemplateSpec {
            extends: self.extends,
            elements: self.els,
        }
    }
}

fn click(from: &str, element: &str, to: &str) -> TransitionSpec {
    TransitionSpec {
        from: from.into(),
        element: element.into(),
        kind: ActionKind::Click,
        payload: None,
        to: Outcomes::Single(to.into()),
    }
}

fn click_split(from: &str, element: &str, outs: &[(&str, f64)]) -> TransitionSpec {
    TransitionSpec {
        to: Outcomes::Distribution(
            outs.iter()
                .map(|(s, p)| OutcomeSpec { state: s.to_string(), p: *p })
                .collect(),
        ),
        ..click(from, element, "")
    }
}

fn typing(from: &str, element: &str, to: &str) -> TransitionSpec {
    TransitionSpec {
        kind: ActionKind::TypeText,
        ..click(from, element, to)
    }
}

fn state(id: &str, template: &str) -> HiddenState {
    HiddenState {
        id: id.into(),
        template: template.into(),
        external: false,
    }
}

fn external(id: &str, template: &str) -> HiddenState {
    HiddenState {
        external: true,
        ..state(id, template)
    }
}

const SCREEN: ScreenSize = ScreenSize { width: 1200, height: 900 };

fn standard_jitter() -> JitterSpec {
    JitterSpec {
        max_shift_px: Some(6.0),
        fraction: 0.1,
        case_flip_prob: 0.1,
        decorative_toggle_prob: 0.5,
    }
}

/// Clock in the taskbar, placed 3px right of a column boundary so that
/// jitter moves it between cells.
fn clock() -> BBox {
    BBox::new(1063.0, 875.0, 1103.0, 895.0)
}

/// Window frame shared by the hub scenarios. Nothing in it is executable.
fn inert_frame(app: &str) -> TemplateSpec {
    Tb::new()
        .text(0, 1, "title_bar", app)
        .block(1, 0, 8, "menu_item", &["File", "Edit", "View", "Go", "Tools", "Window", "Help", "Account"])
        .block(2, 0, 10, "button", &[
            "Back", "Forward", "Reload", "Stop", "Print", "Share", "Bookmark", "Download", "Zoom", "Settings",
        ])
        .block(4, 0, 1, "list_item", &[
            "Inbox", "Drafts", "Sent", "Archive", "Spam", "Trash", "Starred", "Labels", "Contacts", "Calendar",
        ])
        .block(27, 1, 7, "text", &["Online", "Synced", "3 items", "UTF-8", "100%", "Light", "v2.4"])
        .deco(3, 10, "text", "Tip: try the keyboard shortcuts")
        .block(29, 10, 6, "button", &["Start", "Search", "Task view", "Files", "Browser", "Store"])
        .boxed(clock(), "text", "10:42 AM")
        .build()
}

fn hub_common(name: &str, aliased: bool) -> ScenarioSpec {
    let mut templates = BTreeMap::new();
    templates.insert("frame".to_string(), inert_frame("Workflow Portal"));
    templates.insert(
        "home".into(),
        Tb::on("frame")
            .block(6, 8, 4, "text", &["Welcome back", "Your workspace", "Recent activity", "Nothing new"])
            .block(8, 8, 4, "hyperlink", &["Docs", "Blog", "Status", "Careers"])
            .act("enter", 12, 12, "button", "Enter")
            .build(),
    );
    let hub_content = |t: Tb, variant: &str| {
        t.block(6, 16, 3, "text", &["Select a path", "Two ways forward", "Pick one", variant])
            .block(8, 16, 3, "image", &["Banner", "Chart", "Map"])
            .act("continue", 12, 16, "button", "Continue")
            .act("options", 12, 20, "button", "Options")
    };
    if aliased {
        templates.insert("hub".into(), hub_content(Tb::on("frame"), "Step 2 of 4").build());
    } else {
        templates.insert(
            "hub_a".into(),
            hub_content(Tb::on("frame"), "Route A")
                .block(14, 16, 4, "text", &["Route A selected", "Standard track", "Estimated 5 min", "Low risk"])
                .build(),
        );
        templates.insert(
            "hub_b".into(),
            hub_content(Tb::on("frame"), "Route B")
                .block(16, 6, 4, "checkbox", &["Express track", "Skip review", "Notify me", "Keep draft"])
                .build(),
        );
    }
    let leaves = [
        ("a1", "Account setup", 5u32),
        ("a2", "Advanced options", 9),
        ("b1", "Billing details", 13),
        ("b2", "Backup settings", 17),
    ];
    for (id, title, row) in leaves {
        let body: Vec<String> = (1..=6).map(|i| format!("{title} field {i}")).collect();
        let body: Vec<&str> = body.iter().map(String::as_str).collect();
        templates.insert(
            id.to_string(),
            Tb::on("frame")
                .text(row, 22, "text", title)
                .block(row + 1, 4, 3, "edit", &body)
                .act("home", row + 3, 22, "button", "Home")
                .build(),
        );
    }
    let (hub_a_tpl, hub_b_tpl) = if aliased { ("hub", "hub") } else { ("hub_a", "hub_b") };
    let mut transitions = vec![click_split("home", "enter", &[("hub_a", 0.5), ("hub_b", 0.5)])];
    transitions.extend([
        click("hub_a", "continue", "a1"),
        click("hub_a", "options", "a2"),
        click("hub_b", "continue", "b1"),
        click("hub_b", "options", "b2"),
    ]);
    for (id, _, _) in leaves {
        transitions.push(click(id, "home", "home"));
    }
    let mut states = vec![state("home", "home"), state("hub_a", hub_a_tpl), state("hub_b", hub_b_tpl)];
    states.extend(leaves.iter().map(|(id, _, _)| state(id, id)));
    ScenarioSpec {
        name: name.into(),
        description: if aliased {
            "Entering the portal lands on one of two hidden hub states that look identical; \
             the same buttons then lead to different pages."
                .into()
        } else {
            "Same workflow as aliased_hub, but the two hub states are visibly different.".into()
        },
        screen: SCREEN,
        display_mode: DisplayMode::Light,
        text_size_bin: 100,
        rollout_group: format!("sim/{name}"),
        initial_state: "home".into(),
        payloads: Vec::new(),
        jitter: standard_jitter(),
        templates,
        states,
        transitions,
        alias_groups: if aliased {
            vec![vec!["hub_a".into(), "hub_b".into()]]
        } else {
            Vec::new()
        },
    }
}

pub fn aliased_hub() -> ScenarioSpec {
    hub_common("aliased_hub", true)
}

pub fn alias_free_hub() -> ScenarioSpec {
    hub_common("alias_free_hub", false)
}

/// A corridor of rooms full of buttons that do nothing, plus a help dialog
/// that only leads back to the first room.
pub fn loop_trap() -> ScenarioSpec {
    let mut templates = BTreeMap::new();
    templates.insert("frame".to_string(), inert_frame("Maze Runner"));
    let rooms = 6;
    let mut states = Vec::new();
    let mut transitions = Vec::new();
    for i in 0..rooms {
        let id = format!("room{i}");
        let label = format!("Room {i}");
        let mut t = Tb::on("frame")
            .text(5, 3 + 4 * i, "text", &label)
            .block(7, 3 + 2 * i, 3, "text", &["Dim light", "Stone walls", "Echoes", "Cold air", "Dust", "Silence"])
            .noop(14, 4, "button", "Refresh")
            .noop(14, 8, "button", "Look around")
            .noop(14, 12, "button", "Wait")
            .noop(14, 16, "button", "Listen")
            .noop(15, 4, "button", "Knock")
            .noop(15, 8, "button", "Shout")
            .act("help", 15, 12, "button", "Help");
        if i + 1 < rooms {
            t = t.act("next", 17, 20, "button", "Next room");
            transitions.push(click(&id, "next", &format!("room{}", i + 1)));
        }
        if i > 0 {
            t = t.act("back", 17, 4, "button", "Previous room");
            transitions.push(click(&id, "back", &format!("room{}", i - 1)));
        }
        transitions.push(click(&id, "help", "help"));
        templates.insert(id.clone(), t.build());
        states.push(state(&id, &id));
    }
    templates.insert(
        "help".into(),
        Tb::on("frame")
            .text(8, 10, "dialog", "Help")
            .block(9, 10, 2, "text", &["Lost?", "Every room has an exit", "Some buttons do nothing", "Try again"])
            .act("ok", 12, 12, "button", "Start over")
            .noop(12, 16, "button", "More help")
            .build(),
    );
    states.push(state("help", "help"));
    transitions.push(click("help", "ok", "room0"));
    ScenarioSpec {
        name: "loop_trap".into(),
        description: "Six rooms in a row; most buttons are no-ops and help resets to the first room.".into(),
        screen: SCREEN,
        display_mode: DisplayMode::Light,
        text_size_bin: 100,
        rollout_group: "sim/loop_trap".into(),
        initial_state: "room0".into(),
        payloads: Vec::new(),
        jitter: standard_jitter(),
        templates,
        states,
        transitions,
        alias_groups: Vec::new(),
    }
}

/// Editor window chrome without the status bar. Most of its controls are
/// clickable but do nothing.
fn editor_core() -> TemplateSpec {
    Tb::new()
        .act("minimize", 0, 26, "button", "Minimize")
        .act("maximize", 0, 27, "button", "Maximize")
        .act("close", 0, 28, "button", "Close")
        .noop(1, 1, "tab_item", "Untitled")
        .noop(1, 6, "button", "Add new tab")
        .act("settings", 1, 28, "button", "Settings")
        .act("menu_file", 2, 0, "menu_item", "File")
        .act("menu_edit", 2, 1, "menu_item", "Edit")
        .act("menu_view", 2, 2, "menu_item", "View")
        .noop(2, 20, "button", "Heading")
        .noop(2, 21, "button", "List")
        .noop(2, 22, "button", "Bold")
        .noop(2, 23, "button", "Italic")
        .noop(2, 24, "button", "Link")
        .noop(2, 25, "button", "Clear formatting")
        .act("body", 14, 14, "edit", "")
        .noop(4, 29, "button", "Line up")
        .noop(8, 29, "button", "Page up")
        .noop(12, 29, "thumb", "Position")
        .noop(20, 29, "button", "Page down")
        .noop(25, 29, "button", "Line down")
        .noop(26, 0, "button", "Column left")
        .noop(26, 10, "thumb", "Horizontal position")
        .noop(26, 28, "button", "Column right")
        .deco(3, 10, "text", "Tip: Press Ctrl+H to replace")
        .block(28, 1, 6, "text", &["Autosave on", "Spelling: English", "Copilot ready", "Markdown off", "Page 1 of 1", "Tab 1"])
        .act("taskbar_start", 29, 10, "button", "Start")
        .noop(29, 11, "button", "Search")
        .noop(29, 12, "button", "Task View")
        .act("taskbar_explorer", 29, 13, "button", "File Explorer")
        .act("taskbar_edge", 29, 14, "button", "Microsoft Edge")
        .noop(29, 15, "button", "Microsoft Store")
        .noop(29, 16, "button", "Notepad")
        .noop(29, 24, "button", "Show hidden icons")
        .boxed(clock(), "text", "10:42 AM")
        .build()
}

fn editor_window() -> TemplateSpec {
    Tb::on("editor_core")
        .block(27, 1, 6, "text", &["Ln 1, Col 1", "0 characters", "Plain text", "100%", "Windows (CRLF)", "UTF-8"])
        .build()
}

/// Desktop background with taskbar, shared by the external applications.
fn desktop_frame() -> TemplateSpec {
    Tb::new()
        .block(1, 0, 1, "list_item", &[
            "Recycle Bin", "This PC", "Network", "Control Panel", "Projects", "Photos", "Music", "Videos",
            "Budget.xlsx", "Readme.txt", "Setup.exe", "Games",
        ])
        .act("taskbar_start", 29, 10, "button", "Start")
        .noop(29, 11, "button", "Search")
        .noop(29, 12, "button", "Task View")
        .noop(29, 13, "button", "File Explorer")
        .noop(29, 14, "button", "Microsoft Edge")
        .noop(29, 15, "button", "Microsoft Store")
        .act("taskbar_notepad", 29, 16, "button", "Notepad")
        .noop(29, 24, "button", "Show hidden icons")
        .noop(29, 25, "button", "Network")
        .noop(29, 26, "button", "Volume")
        .boxed(clock(), "text", "10:42 AM")
        .deco(28, 20, "text", "Weather 18°C")
        .block(25, 4, 10, "text", &[
            "Wallpaper", "Lock screen", "Widgets", "Copilot", "Focus", "Notifications", "Battery", "Wi-Fi",
            "Bluetooth", "Night light",
        ])
        .block(3, 22, 1, "image", &[
            "Icon grid 1", "Icon grid 2", "Icon grid 3", "Icon grid 4", "Icon grid 5", "Icon grid 6", "Icon grid 7",
            "Icon grid 8", "Icon grid 9", "Icon grid 10",
        ])
        .build()
}

/// A modal dialog: title, close box, rows of labelled controls.
struct Dialog<'a> {
    title: &'a str,
    row: u32,
    col: u32,
    /// `(id, control, text)`; `id` of `None` gives a static element and
    /// `Some("")` an executable element without transitions.
    items: Vec<(Option<&'a str>, &'a str, &'a str)>,
}

impl Dialog<'_> {
    fn onto(&self, t: Tb) -> Tb {
        let mut t = t.text(self.row, self.col, "dialog", self.title).noop(self.row, self.col + 9, "button", "Close dialog");
        for (i, (id, control, text)) in self.items.iter().enumerate() {
            let i = i as u32;
            let (r, c) = (self.row + 1 + i / 3, self.col + 3 * (i % 3));
            t = match id {
                None => t.text(r, c, control, text),
                Some("") => t.noop(r, c, control, text),
                Some(id) => t.act(id, r, c, control, text),
            };
        }
        t
    }
}

fn doc_lines(t: Tb, title: &str, lines: &[&str]) -> Tb {
    let mut t = t.text(0, 1, "title_bar", title);
    for (i, l) in lines.iter().enumerate() {
        t = t.text(5 + i as u32, 1, "text", l);
    }
    t
}

const MODIFIED_LINES: [&str; 6] = [
    "Meeting notes", "- budget review", "- hiring plan", "- launch date", "Action items", "Follow up Friday",
];

/// A notepad-like editor with menus, dialogs, a few external applications,
/// and an aliased unsaved-changes prompt.
pub fn reference_notepad() -> ScenarioSpec {
    let mut t: BTreeMap<String, TemplateSpec> = BTreeMap::new();
    let mut add = |name: &str, tpl: TemplateSpec| {
        t.insert(name.to_string(), tpl);
    };
    add("editor_core", editor_core());
    add("editor", editor_window());
    add("desktop_frame", desktop_frame());

    add("main", doc_lines(Tb::on("editor"), "Untitled - Notepad", &[]).build());
    add("main_mod", doc_lines(Tb::on("editor"), "*Untitled - Notepad", &MODIFIED_LINES).build());
    add(
        "main_nostatus",
        doc_lines(Tb::on("editor_core"), "Untitled - Notepad", &[])
            .block(22, 3, 4, "text", &["Status bar hidden", "View menu", "to restore", "it"])
            .build(),
    );
    add(
        "main_notes",
        doc_lines(Tb::on("editor"), "notes.txt - Notepad", &[
            "Groceries", "milk", "eggs", "coffee", "Call plumber", "Renew passport", "Book flights",
        ])
        .build(),
    );
    add(
        "main_log",
        doc_lines(Tb::on("editor"), "setup.log - Notepad", &[
            "[info] starting installer", "[info] extracting", "[warn] disk nearly full", "[info] copying files",
            "[error] retry 1", "[info] done", "[info] exit code 0",
        ])
        .build(),
    );
    add(
        "main_saved",
        doc_lines(Tb::on("editor"), "report.txt - Notepad", &MODIFIED_LINES[..4])
            .block(22, 3, 4, "text", &["Saved", "report.txt", "Documents", "just now"])
            .build(),
    );

    let menu = |base: &str, title: &str, col: u32, items: &[(&'static str, &'static str)]| {
        let mut tb = doc_lines(Tb::on(base), title, if title.starts_with('*') { &MODIFIED_LINES } else { &[] });
        for (i, (id, text)) in items.iter().enumerate() {
            tb = if id.is_empty() {
                tb.noop(3 + i as u32, col + 1, "menu_item", text)
            } else {
                tb.act(id, 3 + i as u32, col + 1, "menu_item", text)
            };
        }
        tb.build()
    };
    let file_items = [
        ("new", "New tab"),
        ("new_window", "New window"),
        ("open", "Open"),
        ("", "Recent"),
        ("save", "Save"),
        ("save_as", "Save as"),
        ("", "Save all"),
        ("page_setup", "Page setup"),
        ("print", "Print"),
        ("close_tab", "Close tab"),
        ("", "Close window"),
        ("exit", "Exit"),
    ];
    add("file_menu", menu("editor", "Untitled - Notepad", 0, &file_items));
    add("file_menu_mod", menu("editor", "*Untitled - Notepad", 0, &file_items));
    add(
        "edit_menu",
        menu("editor", "Untitled - Notepad", 1, &[
            ("", "Undo"),
            ("", "Cut"),
            ("", "Copy"),
            ("", "Paste"),
            ("", "Delete"),
            ("bing", "Search with Bing"),
            ("find", "Find"),
            ("", "Find next"),
            ("", "Find previous"),
            ("replace", "Replace"),
            ("goto", "Go to"),
            ("", "Select all"),
            ("timedate", "Time/Date"),
            ("font", "Font"),
        ]),
    );
    add(
        "view_menu",
        menu("editor", "Untitled - Notepad", 2, &[
            ("", "Zoom in"),
            ("", "Zoom out"),
            ("", "Restore default zoom"),
            ("status", "Status bar"),
            ("", "Word wrap"),
            ("", "Spell check"),
            ("", "Autocorrect"),
            ("", "Formatting"),
        ]),
    );

    let dialogs: Vec<(&str, &str, Dialog)> = vec![
        ("find_dlg", "main", Dialog {
            title: "Find",
            row: 6,
            col: 8,
            items: vec![
                (None, "text", "Find what"),
                (Some("what"), "edit", ""),
                (Some("find_next"), "button", "Find next"),
                (Some(""), "checkbox", "Match case"),
                (Some(""), "checkbox", "Wrap around"),
                (Some(""), "radio_button", "Up"),
                (Some(""), "radio_button", "Down"),
                (Some("cancel"), "button", "Cancel"),
                (None, "text", "Direction"),
            ],
        }),
        ("not_found", "find_dlg", Dialog {
            title: "Notepad message",
            row: 14,
            col: 12,
            items: vec![
                (None, "image", "Information"),
                (None, "text", "Cannot find the text"),
                (None, "text", "Check spelling"),
                (None, "text", "or search again"),
                (Some("ok"), "button", "OK"),
                (Some(""), "button", "Help"),
                (None, "text", "Search wrapped"),
                (None, "text", "No results"),
            ],
        }),
        ("replace_dlg", "main", Dialog {
            title: "Replace",
            row: 6,
            col: 8,
            items: vec![
                (None, "text", "Find what"),
                (Some("what"), "edit", ""),
                (Some("find_next"), "button", "Find next"),
                (None, "text", "Replace with"),
                (Some("with"), "edit", ""),
                (Some("replace_one"), "button", "Replace"),
                (Some("replace_all"), "button", "Replace all"),
                (Some(""), "checkbox", "Match case"),
                (Some("cancel"), "button", "Cancel"),
            ],
        }),
        ("goto_dlg", "main", Dialog {
            title: "Go to line",
            row: 8,
            col: 14,
            items: vec![
                (None, "text", "Line number"),
                (Some("line"), "edit", ""),
                (Some("go"), "button", "Go to"),
                (Some("cancel"), "button", "Cancel"),
                (None, "text", "Lines in file: 1"),
                (None, "text", "Current line: 1"),
                (None, "text", "Enter a number"),
                (None, "text", "between 1 and 1"),
            ],
        }),
        ("goto_error", "goto_dlg", Dialog {
            title: "Notepad - Goto Line",
            row: 15,
            col: 16,
            items: vec![
                (None, "image", "Warning"),
                (None, "text", "The line number is beyond"),
                (None, "text", "the total number of lines"),
                (Some("ok"), "button", "OK"),
                (None, "text", "Try a smaller number"),
                (None, "text", "Line count: 1"),
                (None, "text", "Requested line"),
                (None, "text", "out of range"),
            ],
        }),
        ("font_dlg", "main", Dialog {
            title: "Font",
            row: 5,
            col: 6,
            items: vec![
                (None, "text", "Family"),
                (Some(""), "list_item", "Arial"),
                (Some(""), "list_item", "Consolas"),
                (Some(""), "list_item", "Segoe UI"),
                (None, "text", "Style"),
                (Some(""), "list_item", "Regular"),
                (Some(""), "list_item", "Bold"),
                (None, "text", "Size"),
                (Some(""), "list_item", "11"),
                (Some(""), "list_item", "14"),
                (None, "text", "Sample AaBbYyZz"),
                (Some("ok"), "button", "OK"),
                (Some("cancel"), "button", "Cancel"),
            ],
        }),
        ("open_docs", "main", Dialog {
            title: "Open",
            row: 4,
            col: 4,
            items: vec![
                (None, "text", "Documents"),
                (Some("desktop"), "tree_item", "Desktop"),
                (Some("downloads"), "tree_item", "Downloads"),
                (Some("pictures"), "tree_item", "Pictures"),
                (Some("notes"), "list_item", "notes.txt"),
                (Some(""), "list_item", "budget.csv"),
                (None, "text", "File name"),
                (Some(""), "edit", ""),
                (Some(""), "button", "Open"),
                (Some("cancel"), "button", "Cancel"),
                (None, "text", "Text documents (*.txt)"),
            ],
        }),
        ("open_desktop", "main", Dialog {
            title: "Open",
            row: 4,
            col: 4,
            items: vec![
                (None, "text", "Desktop"),
                (Some("docs"), "tree_item", "Documents"),
                (Some(""), "tree_item", "Downloads"),
                (Some(""), "list_item", "shortcut.lnk"),
                (Some(""), "list_item", "Readme.txt"),
                (None, "text", "2 items"),
                (Some("cancel"), "button", "Cancel"),
                (None, "text", "Quick access"),
                (None, "text", "This PC"),
            ],
        }),
        ("open_downloads", "main", Dialog {
            title: "Open",
            row: 4,
            col: 4,
            items: vec![
                (None, "text", "Downloads"),
                (Some("docs"), "tree_item", "Documents"),
                (Some("log"), "list_item", "setup.log"),
                (Some(""), "list_item", "invoice.pdf"),
                (Some(""), "list_item", "archive.zip"),
                (None, "text", "3 items"),
                (Some("cancel"), "button", "Cancel"),
                (None, "text", "Last week"),
                (None, "text", "Earlier"),
            ],
        }),
        ("open_pictures", "main", Dialog {
            title: "Open",
            row: 4,
            col: 4,
            items: vec![
                (None, "text", "Pictures"),
                (Some("docs"), "tree_item", "Documents"),
                (None, "text", "This folder is empty"),
                (None, "text", "No text files"),
                (Some("cancel"), "button", "Cancel"),
                (None, "text", "Screenshots"),
                (None, "text", "Camera roll"),
                (None, "text", "Saved pictures"),
            ],
        }),
        ("open_notes_sel", "main", Dialog {
            title: "Open",
            row: 4,
            col: 4,
            items: vec![
                (None, "text", "Documents"),
                (None, "text", "notes.txt selected"),
                (Some("open"), "button", "Open"),
                (Some("cancel"), "button", "Cancel"),
                (None, "text", "File name"),
                (None, "edit", "notes.txt"),
                (None, "text", "Size 2 KB"),
                (None, "text", "Modified yesterday"),
            ],
        }),
        ("open_log_sel", "main", Dialog {
            title: "Open",
            row: 4,
            col: 4,
            items: vec![
                (None, "text", "Downloads"),
                (None, "text", "setup.log selected"),
                (Some("open"), "button", "Open"),
                (Some("cancel"), "button", "Cancel"),
                (None, "text", "File name"),
                (None, "edit", "setup.log"),
                (None, "text", "Size 14 KB"),
                (None, "text", "Modified last week"),
            ],
        }),
        ("save_as", "main_mod", Dialog {
            title: "Save as",
            row: 6,
            col: 10,
            items: vec![
                (None, "text", "Documents"),
                (None, "text", "File name"),
                (Some("name"), "edit", ""),
                (Some("desktop"), "tree_item", "Desktop"),
                (Some(""), "button", "Save"),
                (Some("cancel"), "button", "Cancel"),
                (Some(""), "combo_box", "Encoding UTF-8"),
                (None, "text", "Save as type"),
                (Some(""), "combo_box", "Text documents"),
            ],
        }),
        ("save_as_desktop", "main_mod", Dialog {
            title: "Save as",
            row: 6,
            col: 10,
            items: vec![
                (None, "text", "Desktop"),
                (Some("docs"), "tree_item", "Documents"),
                (Some(""), "list_item", "shortcut.lnk"),
                (Some(""), "list_item", "Readme.txt"),
                (Some("cancel"), "button", "Cancel"),
                (None, "text", "2 items"),
                (None, "text", "Quick access"),
                (None, "text", "This PC"),
            ],
        }),
        ("save_as_named", "main_mod", Dialog {
            title: "Save as",
            row: 6,
            col: 10,
            items: vec![
                (None, "text", "Documents"),
                (None, "text", "Name entered"),
                (None, "edit", "report.txt"),
                (Some("save"), "button", "Save"),
                (Some("cancel"), "button", "Cancel"),
                (None, "text", "Ready to save"),
                (None, "text", "UTF-8"),
                (None, "text", "Text documents"),
            ],
        }),
        ("confirm_overwrite", "main_mod", Dialog {
            title: "Confirm Save As",
            row: 12,
            col: 12,
            items: vec![
                (None, "image", "Warning"),
                (None, "text", "report.txt already exists"),
                (None, "text", "Do you want to replace it"),
                (Some("yes"), "button", "Yes"),
                (Some("no"), "button", "No"),
                (None, "text", "Replacing overwrites"),
                (None, "text", "the existing file"),
                (None, "text", "This cannot be undone"),
            ],
        }),
        ("page_setup", "main", Dialog {
            title: "Page setup",
            row: 5,
            col: 5,
            items: vec![
                (None, "text", "Paper"),
                (Some(""), "combo_box", "Letter"),
                (Some(""), "combo_box", "Automatically select"),
                (None, "text", "Orientation"),
                (Some(""), "radio_button", "Portrait"),
                (Some(""), "radio_button", "Landscape"),
                (None, "text", "Margins"),
                (Some(""), "edit", "25"),
                (Some("printer"), "button", "Printer"),
                (Some("ok"), "button", "OK"),
                (Some("cancel"), "button", "Cancel"),
            ],
        }),
        ("page_printer", "page_setup", Dialog {
            title: "Page setup - Printer",
            row: 14,
            col: 14,
            items: vec![
                (None, "text", "Name"),
                (Some(""), "combo_box", "Office LaserJet"),
                (Some(""), "button", "Properties"),
                (None, "text", "Status: Ready"),
                (None, "text", "Type: LaserJet"),
                (Some("p_ok"), "button", "OK"),
                (Some("p_cancel"), "button", "Cancel"),
                (None, "text", "Where: USB001"),
            ],
        }),
        ("print_dlg", "main", Dialog {
            title: "Print",
            row: 5,
            col: 5,
            items: vec![
                (None, "text", "Select printer"),
                (Some(""), "list_item", "Office LaserJet"),
                (Some(""), "list_item", "Microsoft Print to PDF"),
                (Some("prefs"), "button", "Preferences"),
                (Some("find_printer"), "button", "Find printer"),
                (None, "text", "Page range"),
                (Some(""), "radio_button", "All"),
                (Some(""), "radio_button", "Pages"),
                (Some(""), "edit", "1"),
                (Some("print"), "button", "Print"),
                (Some("cancel"), "button", "Cancel"),
            ],
        }),
        ("print_prefs", "print_dlg", Dialog {
            title: "Printing preferences",
            row: 13,
            col: 13,
            items: vec![
                (None, "text", "Layout"),
                (Some(""), "radio_button", "Portrait"),
                (Some(""), "radio_button", "Landscape"),
                (None, "text", "Pages per sheet"),
                (Some(""), "combo_box", "1"),
                (Some(""), "tab_item", "Paper/Quality"),
                (Some("p_ok"), "button", "OK"),
                (Some("p_cancel"), "button", "Cancel"),
                (None, "text", "Color"),
            ],
        }),
        ("find_printer", "print_dlg", Dialog {
            title: "Find Printers",
            row: 13,
            col: 13,
            items: vec![
                (None, "text", "In: Entire directory"),
                (Some(""), "edit", ""),
                (Some(""), "button", "Find now"),
                (Some(""), "button", "Stop"),
                (Some(""), "button", "Clear all"),
                (None, "text", "Location"),
                (None, "text", "Model"),
                (Some("p_cancel"), "button", "Cancel"),
            ],
        }),
        ("save_prompt", "main_mod", Dialog {
            title: "Notepad",
            row: 10,
            col: 10,
            items: vec![
                (None, "text", "Do you want to save changes"),
                (None, "text", "to Untitled?"),
                (Some("save"), "button", "Save"),
                (Some("dont_save"), "button", "Don't save"),
                (Some("cancel"), "button", "Cancel"),
                (None, "image", "Question"),
                (None, "text", "Unsaved changes"),
                (None, "text", "will be lost"),
            ],
        }),
        ("about", "settings", Dialog {
            title: "About Notepad",
            row: 9,
            col: 12,
            items: vec![
                (None, "image", "Notepad logo"),
                (None, "text", "Notepad"),
                (None, "text", "Version 11.2410"),
                (None, "text", "Microsoft Corporation"),
                (None, "hyperlink", "License terms"),
                (None, "hyperlink", "Privacy statement"),
                (Some("ok"), "button", "OK"),
                (None, "text", "All rights reserved"),
            ],
        }),
    ];
    // the settings page replaces the document area
    add(
        "settings",
        doc_lines(Tb::on("editor"), "Settings - Notepad", &[])
            .text(4, 3, "text", "Settings")
            .text(5, 3, "text", "Appearance")
            .noop(6, 3, "radio_button", "Light")
            .noop(6, 7, "radio_button", "Dark")
            .noop(6, 11, "radio_button", "Use system setting")
            .text(8, 3, "text", "Text formatting")
            .act("font", 9, 3, "button", "Font")
            .noop(10, 3, "toggle", "Word wrap")
            .noop(11, 3, "toggle", "Spell check")
            .noop(12, 3, "toggle", "Autocorrect")
            .text(14, 3, "text", "About this app")
            .act("about", 15, 3, "hyperlink", "About Notepad")
            .act("feedback", 16, 3, "hyperlink", "Send feedback")
            .act("help", 17, 3, "hyperlink", "Help")
            .act("back", 4, 1, "button", "Back")
            .build(),
    );
    for (name, base, dlg) in &dialogs {
        let title = match *base {
            "main_mod" | "save_prompt" => "*Untitled - Notepad",
            "settings" => "Settings - Notepad",
            _ => "Untitled - Notepad",
        };
        let lines: &[&str] = if *base == "main_mod" { &MODIFIED_LINES } else { &[] };
        let tb = match *base {
            "main" | "main_mod" => doc_lines(Tb::on("editor"), title, lines),
            other => Tb::on(other),
        };
        add(name, dlg.onto(tb).build());
    }

    let ext_app = |t: Tb, title: &str, items: &[&str]| {
        let mut t = t.text(0, 3, "title_bar", title).act("close", 0, 28, "button", "Close");
        for (i, it) in items.iter().enumerate() {
            let i = i as u32;
            t = t.noop(4 + i / 4, 6 + 4 * (i % 4), "hyperlink", it);
        }
        t.build()
    };
    add(
        "desktop",
        Tb::on("desktop_frame")
            .act("icon_notepad", 14, 2, "list_item", "Notepad")
            .block(16, 8, 3, "text", &["Desktop", "No windows open", "Good afternoon"])
            .build(),
    );
    add(
        "browser",
        ext_app(Tb::on("desktop_frame"), "Bing - Microsoft Edge", &[
            "Images", "Videos", "Maps", "News", "Copilot", "Shopping", "Travel", "Weather", "Sports", "Money",
            "Results for notepad", "Notepad help",
        ]),
    );
    add(
        "help_page",
        ext_app(Tb::on("desktop_frame"), "Notepad help - Microsoft Edge", &[
            "Get started", "Tabs", "Saving files", "Formatting", "Spell check", "Shortcuts", "Accessibility",
            "Troubleshoot", "Community", "Contact support", "Was this helpful", "Related topics",
        ]),
    );
    add(
        "explorer",
        ext_app(Tb::on("desktop_frame"), "File Explorer", &[
            "Home", "Gallery", "OneDrive", "Desktop", "Downloads", "Documents", "Pictures", "Music", "Videos",
            "This PC", "Network", "Linux",
        ]),
    );
    add(
        "start_menu",
        Tb::on("desktop_frame")
            .block(8, 8, 4, "list_item", &[
                "Edge", "Word", "Excel", "Mail", "Calendar", "Photos", "Settings", "Store", "Calculator", "Clock",
                "Paint", "Terminal",
            ])
            .act("pin_notepad", 12, 8, "list_item", "Notepad")
            .act("close", 13, 8, "button", "Close start")
            .text(7, 8, "text", "Pinned")
            .build(),
    );
    add(
        "feedback",
        ext_app(Tb::on("desktop_frame"), "Feedback Hub", &[
            "Home", "Feedback", "Announcements", "Quests", "Achievements", "Give feedback", "Report a problem",
            "Suggest a feature", "Category", "Attachments", "Submit", "Privacy",
        ]),
    );

    let mut states: Vec<HiddenState> = [
        "main", "main_mod", "main_nostatus", "main_notes", "main_log", "main_saved", "file_menu", "file_menu_mod",
        "edit_menu", "view_menu", "settings",
    ]
    .iter()
    .map(|s| state(s, s))
    .collect();
    for (name, _, _) in &dialogs {
        if *name != "save_prompt" {
            states.push(state(name, name));
        }
    }
    states.push(state("prompt_exit", "save_prompt"));
    states.push(state("prompt_new", "save_prompt"));
    for ext in ["desktop", "browser", "help_page", "explorer", "start_menu", "feedback"] {
        states.push(external(ext, ext));
    }

    let mut tr = Vec::new();
    // window states share the editor chrome
    for w in ["main", "main_mod", "main_nostatus", "main_notes", "main_log", "main_saved"] {
        let modified = w == "main_mod";
        tr.push(typing(w, "body", "main_mod"));
        tr.push(click(w, "menu_file", if modified { "file_menu_mod" } else { "file_menu" }));
        if !modified {
            tr.push(click(w, "menu_edit", "edit_menu"));
            tr.push(click(w, "menu_view", "view_menu"));
        }
        tr.push(click(w, "settings", "settings"));
        tr.push(click(w, "close", if modified { "prompt_exit" } else { "desktop" }));
        tr.push(click(w, "minimize", "desktop"));
        tr.push(click(w, "taskbar_start", "start_menu"));
        tr.push(click(w, "taskbar_explorer", "explorer"));
        tr.push(click(w, "taskbar_edge", "browser"));
    }
    for (m, back) in [("file_menu", "main"), ("file_menu_mod", "main_mod")] {
        let modified = back == "main_mod";
        tr.push(click(m, "menu_file", back));
        tr.push(click(m, "new", if modified { "prompt_new" } else { "main" }));
        tr.push(click(m, "new_window", "main"));
        tr.push(click(m, "open", "open_docs"));
        tr.push(click(m, "save", "save_as"));
        tr.push(click(m, "save_as", "save_as"));
        tr.push(click(m, "page_setup", "page_setup"));
        tr.push(click(m, "print", "print_dlg"));
        tr.push(click(m, "close_tab", if modified { "prompt_exit" } else { "desktop" }));
        tr.push(click(m, "exit", if modified { "prompt_exit" } else { "desktop" }));
    }
    for m in ["edit_menu", "view_menu"] {
        tr.push(click(m, "menu_file", "file_menu"));
        tr.push(click(m, "menu_edit", if m == "edit_menu" { "main" } else { "edit_menu" }));
        tr.push(click(m, "menu_view", if m == "view_menu" { "main" } else { "view_menu" }));
    }
    tr.extend([
        click("edit_menu", "bing", "browser"),
        click("edit_menu", "find", "find_dlg"),
        click("edit_menu", "replace", "replace_dlg"),
        click("edit_menu", "goto", "goto_dlg"),
        click("edit_menu", "timedate", "main_mod"),
        click("edit_menu", "font", "font_dlg"),
        click("view_menu", "status", "main_nostatus"),
        click("settings", "back", "main"),
        click("settings", "font", "font_dlg"),
        click("settings", "about", "about"),
        click("settings", "feedback", "feedback"),
        click("settings", "help", "help_page"),
        click("about", "ok", "settings"),
        typing("find_dlg", "what", "find_dlg"),
        click("find_dlg", "find_next", "not_found"),
        click("find_dlg", "cancel", "main"),
        click("not_found", "ok", "find_dlg"),
        typing("replace_dlg", "what", "replace_dlg"),
        typing("replace_dlg", "with", "replace_dlg"),
        click("replace_dlg", "find_next", "not_found"),
        click("replace_dlg", "replace_one", "main"),
        click("replace_dlg", "replace_all", "main_mod"),
        click("replace_dlg", "cancel", "main"),
        typing("goto_dlg", "line", "goto_dlg"),
        click("goto_dlg", "go", "goto_error"),
        click("goto_dlg", "cancel", "main"),
        click("goto_error", "ok", "goto_dlg"),
        click("font_dlg", "ok", "main"),
        click("font_dlg", "cancel", "main"),
        click("open_docs", "desktop", "open_desktop"),
        click("open_docs", "downloads", "open_downloads"),
        click("open_docs", "pictures", "open_pictures"),
        click("open_docs", "notes", "open_notes_sel"),
        click("open_docs", "cancel", "main"),
        click("open_desktop", "docs", "open_docs"),
        click("open_desktop", "cancel", "main"),
        click("open_downloads", "docs", "open_docs"),
        click("open_downloads", "log", "open_log_sel"),
        click("open_downloads", "cancel", "main"),
        click("open_pictures", "docs", "open_docs"),
        click("open_pictures", "cancel", "main"),
        click("open_notes_sel", "open", "main_notes"),
        click("open_notes_sel", "cancel", "open_docs"),
        click("open_log_sel", "open", "main_log"),
        click("open_log_sel", "cancel", "open_downloads"),
        typing("save_as", "name", "save_as_named"),
        click("save_as", "desktop", "save_as_desktop"),
        click("save_as", "cancel", "main_mod"),
        click("save_as_desktop", "docs", "save_as"),
        click("save_as_desktop", "cancel", "main_mod"),
        click_split("save_as_named", "save", &[("confirm_overwrite", 0.5), ("main_saved", 0.5)]),
        click("save_as_named", "cancel", "main_mod"),
        click("confirm_overwrite", "yes", "main_saved"),
        click("confirm_overwrite", "no", "save_as_named"),
        click("page_setup", "printer", "page_printer"),
        click("page_setup", "ok", "main"),
        click("page_setup", "cancel", "main"),
        click("page_printer", "p_ok", "page_setup"),
        click("page_printer", "p_cancel", "page_setup"),
        click("print_dlg", "prefs", "print_prefs"),
        click("print_dlg", "find_printer", "find_printer"),
        click("print_dlg", "print", "main"),
        click("print_dlg", "cancel", "main"),
        click("print_prefs", "p_ok", "print_dlg"),
        click("print_prefs", "p_cancel", "print_dlg"),
        click("find_printer", "p_cancel", "print_dlg"),
        // the same prompt continues differently depending on how it was opened
        click("prompt_exit", "save", "save_as"),
        click("prompt_exit", "dont_save", "desktop"),
        click("prompt_exit", "cancel", "main_mod"),
        click("prompt_new", "save", "save_as"),
        click("prompt_new", "dont_save", "main"),
        click("prompt_new", "cancel", "main_mod"),
        click("desktop", "icon_notepad", "main"),
        click("desktop", "taskbar_notepad", "main"),
        click("desktop", "taskbar_start", "start_menu"),
        click("start_menu", "pin_notepad", "main"),
        click("start_menu", "close", "desktop"),
        click("start_menu", "taskbar_start", "desktop"),
        click("start_menu", "taskbar_notepad", "main"),
    ]);
    for ext in ["browser", "help_page", "explorer", "feedback"] {
        tr.push(click(ext, "close", "main"));
        tr.push(click(ext, "taskbar_notepad", "main"));
        tr.push(click(ext, "taskbar_start", "start_menu"));
    }

    ScenarioSpec {
        name: "reference_notepad".into(),
        description: "A notepad-like editor: menus, modal dialogs, file pickers, a stochastic \
                      overwrite prompt, an aliased unsaved-changes prompt, and external apps."
            .into(),
        screen: SCREEN,
        display_mode: DisplayMode::Light,
        text_size_bin: 100,
        rollout_group: "sim/reference_notepad".into(),
        initial_state: "main".into(),
        payloads: vec!["hello world".into(), "report.txt".into(), "42".into()],
        jitter: standard_jitter(),
        templates: t,
        states,
        transitions: tr,
        alias_groups: vec![vec!["prompt_exit".into(), "prompt_new".into()]],
    }
}
