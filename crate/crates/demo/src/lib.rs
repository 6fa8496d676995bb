//! WebAssembly entry points for the static demo page in `www/`.
//!
//! Every export takes and returns plain strings or numbers so the page
//! needs no generated bindings beyond `wasm-bindgen`'s glue. Failures are
//! returned as `{"error": "..."}`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use storyreason::gspo::{
    brute_force_optimum, gspo_run, GspoConfig, Selection, TableObjective, BRUTE_FORCE_CAP,
};
use storyreason::oracles::GradientHintProvider;
use storyreason::perception::{iou, nms_indices, BBox, Scored};
use storyreason::prompt::{parse_answer, LabelSet};
use wasm_bindgen::prelude::wasm_bindgen;

#[derive(Debug, Clone, Deserialize)]
struct DemoBox {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
    score: f64,
    #[serde(skip)]
    bbox: Option<BBox>,
}

impl Scored for DemoBox {
    fn score(&self) -> f64 {
        self.score
    }
    fn bbox(&self) -> &BBox {
        self.bbox.as_ref().expect("bbox set after parsing")
    }
}

fn error(msg: impl std::fmt::Display) -> String {
    json!({ "error": msg.to_string() }).to_string()
}

/// `boxes_json`: `[{"x","y","w","h","score"}, ...]` in corner form.
/// Returns `{"kept": [indices by descending score], "iou": [[...]]}`.
#[wasm_bindgen]
pub fn nms_demo(boxes_json: &str, iou_threshold: f64) -> String {
    let mut boxes: Vec<DemoBox> = match serde_json::from_str(boxes_json) {
        Ok(b) => b,
        Err(e) => return error(e),
    };
    for b in &mut boxes {
        match BBox::new(b.x, b.y, b.w, b.h) {
            Ok(bb) => b.bbox = Some(bb),
            Err(e) => return error(e),
        }
        if !b.score.is_finite() {
            return error("scores must be finite");
        }
    }
    let matrix: Vec<Vec<f64>> = boxes
        .iter()
        .map(|a| boxes.iter().map(|b| iou(a.bbox(), b.bbox())).collect())
        .collect();
    json!({ "kept": nms_indices(&boxes, iou_threshold), "iou": matrix }).to_string()
}

#[derive(Serialize)]
struct GspoDemo {
    sizes: Vec<usize>,
    initial_loss: f64,
    losses: Vec<f64>,
    selections: Vec<Vec<usize>>,
    final_selection: Vec<usize>,
    final_loss: f64,
    optimum: Vec<usize>,
    optimum_loss: f64,
}

const DEMO_SIZES: [usize; 4] = [4, 3, 5, 3];
const DEMO_EXAMPLES: usize = 12;

/// Random per-example loss table for the demo pool sizes.
/// `separable` draws additive per-segment terms; otherwise every cell is independent.
pub fn demo_table(seed: u64, separable: bool) -> TableObjective {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sizes = DEMO_SIZES.to_vec();
    if separable {
        let terms: Vec<Vec<Vec<f64>>> = (0..DEMO_EXAMPLES)
            .map(|_| sizes.iter().map(|&n| (0..n).map(|_| rng.gen::<f64>()).collect()).collect())
            .collect();
        TableObjective::separable(sizes, &terms).expect("valid sizes")
    } else {
        let cells: usize = sizes.iter().product();
        let tables = (0..DEMO_EXAMPLES)
            .map(|_| (0..cells).map(|_| rng.gen::<f64>()).collect())
            .collect();
        TableObjective::new(sizes, tables).expect("valid sizes")
    }
}

fn mean_loss(obj: &TableObjective, sel: &Selection) -> f64 {
    let i = obj.flat_index(sel);
    obj.tables.iter().map(|t| t[i]).sum::<f64>() / obj.tables.len() as f64
}

/// Runs the search on a seeded random table and reports the per-iteration
/// path next to the exhaustive optimum.
#[wasm_bindgen]
pub fn gspo_demo(seed: u32, k: u32, iterations: u32, separable: bool, guard: bool) -> String {
    let obj = demo_table(seed as u64, separable);
    let cfg = GspoConfig {
        k: k as usize,
        n: iterations as usize,
        batch_size: 6,
        probe_size: 3,
        seed: seed as u64,
        incumbent_guard: guard,
        parallelism: 1,
    };
    if let Err(e) = cfg.validate() {
        return error(e);
    }
    let initial = Selection::first(DEMO_SIZES.len());
    let initial_loss = mean_loss(&obj, &initial);
    let hints = GradientHintProvider::ProbeSurrogate { probe_size: cfg.probe_size };
    let outcome = match gspo_run(&cfg, initial, &obj, &hints) {
        Ok(o) => o,
        Err(e) => return error(e),
    };
    let (optimum, optimum_loss) = match brute_force_optimum(&obj, BRUTE_FORCE_CAP) {
        Ok(o) => o,
        Err(e) => return error(e),
    };
    let selections: Vec<Selection> = outcome.trace.records.iter().map(|r| r.chosen_selection.clone()).collect();
    let demo = GspoDemo {
        sizes: DEMO_SIZES.to_vec(),
        initial_loss,
        losses: selections.iter().map(|s| mean_loss(&obj, s)).collect(),
        selections: selections.into_iter().map(|s| s.indices).collect(),
        final_loss: mean_loss(&obj, &outcome.selection),
        final_selection: outcome.selection.indices,
        optimum: optimum.indices,
        optimum_loss,
    };
    serde_json::to_string(&demo).expect("serializable")
}

/// Parses a model answer against `pipa`, `pisc` or an inline label-set JSON.
#[wasm_bindgen]
pub fn parse_answer_demo(text: &str, label_set: &str) -> String {
    let labels = match label_set.trim().to_ascii_lowercase().as_str() {
        "pipa" => LabelSet::pipa(),
        "pisc" => LabelSet::pisc(),
        _ => match serde_json::from_str::<LabelSet>(label_set).map_err(|e| e.to_string()).and_then(|l| {
            l.validate().map_err(|e| e.to_string())?;
            Ok(l)
        }) {
            Ok(l) => l,
            Err(e) => return error(e),
        },
    };
    match parse_answer(text, &labels) {
        Ok(a) => json!({ "label": a.label, "explanation": a.explanation }).to_string(),
        Err(e) => error(e),
    }
}
