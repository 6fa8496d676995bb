use super::geometry::{iou, BBox};
use super::{ObjectKind, PerceptionBundle, SegmentedObject, SymbolEntry, SymbolTable};
use crate::error::{Error, Result};

/// Minimum IoU for a dataset box to match a person by overlap; below it the
/// nearest box center wins.
pub const QUERY_IOU_FLOOR: f64 = 0.5;

/// Numbers persons `P1..` and other objects `O1..`, each kind ordered by
/// centroid x, then centroid y, then object id.
pub fn assign_symbols(objects: &[SegmentedObject], kinds: &[ObjectKind]) -> Result<SymbolTable> {
    if objects.len() != kinds.len() {
        return Err(Error::Precondition(format!(
            "{} objects but {} kinds",
            objects.len(),
            kinds.len()
        )));
    }
    let mut keyed: Vec<(ObjectKind, f64, f64, &str)> = objects
        .iter()
        .zip(kinds)
        .map(|(o, &k)| {
            let (cx, cy) = o.centroid();
            (k, cx, cy, o.object_id.as_str())
        })
        .collect();
    keyed.sort_by(|a, b| {
        let rank = |k: ObjectKind| (k == ObjectKind::Other) as u8;
        rank(a.0)
            .cmp(&rank(b.0))
            .then(a.1.total_cmp(&b.1))
            .then(a.2.total_cmp(&b.2))
            .then(a.3.cmp(b.3))
    });

    let (mut persons, mut others) = (0usize, 0usize);
    let entries = keyed
        .into_iter()
        .map(|(kind, _, _, id)| {
            let n = match kind {
                ObjectKind::Person => {
                    persons += 1;
                    persons
                }
                ObjectKind::Other => {
                    others += 1;
                    others
                }
            };
            SymbolEntry {
                symbol: format!("{}{n}", kind.prefix()),
                object_id: id.to_string(),
                kind,
            }
        })
        .collect();
    Ok(SymbolTable { entries })
}

fn match_one(query: &BBox, persons: &[(&str, BBox)]) -> String {
    let mut best = 0usize;
    let mut best_iou = f64::NEG_INFINITY;
    for (i, (_, b)) in persons.iter().enumerate() {
        let v = iou(query, b);
        if v > best_iou {
            best_iou = v;
            best = i;
        }
    }
    if best_iou >= QUERY_IOU_FLOOR {
        return persons[best].0.to_string();
    }
    let (qx, qy) = query.center();
    let mut best_dist = f64::INFINITY;
    for (i, (_, b)) in persons.iter().enumerate() {
        let (cx, cy) = b.center();
        let d = (cx - qx).powi(2) + (cy - qy).powi(2);
        if d < best_dist {
            best_dist = d;
            best = i;
        }
    }
    persons[best].0.to_string()
}

/// Maps the two dataset query boxes to distinct person symbols.
pub fn match_query_boxes(b1: &BBox, b2: &BBox, bundle: &PerceptionBundle) -> Result<(String, String)> {
    let persons: Vec<(&str, BBox)> = bundle
        .symbols
        .persons()
        .filter_map(|e| bundle.object(&e.object_id).map(|o| (e.symbol.as_str(), o.bbox)))
        .collect();
    if persons.len() < 2 {
        return Err(Error::UnmatchableQuery(format!(
            "image has {} person(s), need at least 2",
            persons.len()
        )));
    }
    let s1 = match_one(b1, &persons);
    let s2 = match_one(b2, &persons);
    if s1 == s2 {
        return Err(Error::AmbiguousQuery(s1));
    }
    Ok((s1, s2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perception::{CaptionRecord, Mask, IMAGE_SYMBOL};
    use proptest::prelude::*;

    fn obj(id: &str, x: u32, y: u32, w: u32, h: u32) -> SegmentedObject {
        SegmentedObject::from_mask(id, Mask::rect(64, 64, x, y, w, h).unwrap(), 0.9).unwrap()
    }

    fn bundle(objects: Vec<SegmentedObject>, kinds: &[ObjectKind]) -> PerceptionBundle {
        let symbols = assign_symbols(&objects, kinds).unwrap();
        let captions = symbols
            .entries
            .iter()
            .map(|e| CaptionRecord {
                symbol: e.symbol.clone(),
                caption: String::new(),
                attributes: Default::default(),
            })
            .collect();
        PerceptionBundle {
            image_ref: "test".into(),
            objects,
            symbols,
            captions,
            image_caption: CaptionRecord {
                symbol: IMAGE_SYMBOL.into(),
                caption: String::new(),
                attributes: Default::default(),
            },
        }
    }

    #[test]
    fn persons_numbered_left_to_right() {
        // centroid x = 10 and x = 3
        let objects = vec![obj("a", 9, 0, 3, 3), obj("b", 2, 0, 3, 3)];
        let table = assign_symbols(&objects, &[ObjectKind::Person, ObjectKind::Person]).unwrap();
        assert_eq!(table.get("P1").unwrap().object_id, "b");
        assert_eq!(table.get("P2").unwrap().object_id, "a");
    }

    #[test]
    fn mixed_kinds_and_empty() {
        let objects = vec![obj("t", 0, 0, 2, 2), obj("p", 10, 10, 2, 2)];
        let table = assign_symbols(&objects, &[ObjectKind::Other, ObjectKind::Person]).unwrap();
        let syms: Vec<_> = table.entries.iter().map(|e| e.symbol.as_str()).collect();
        assert_eq!(syms, ["P1", "O1"]);
        table.validate().unwrap();
        assert!(assign_symbols(&[], &[]).unwrap().is_empty());
    }

    #[test]
    fn ties_break_on_y_then_id() {
        let objects = vec![obj("z", 0, 10, 2, 2), obj("y", 0, 0, 2, 2), obj("x", 0, 0, 2, 2)];
        let table = assign_symbols(&objects, &[ObjectKind::Other; 3]).unwrap();
        let ids: Vec<_> = table.entries.iter().map(|e| e.object_id.as_str()).collect();
        assert_eq!(ids, ["x", "y", "z"]);
    }

    #[test]
    fn query_matching() {
        let b = bundle(
            vec![obj("a", 0, 0, 10, 10), obj("b", 30, 0, 10, 10), obj("c", 50, 50, 5, 5)],
            &[ObjectKind::Person, ObjectKind::Person, ObjectKind::Other],
        );
        let p2_box = b.object("b").unwrap().bbox;
        let far = BBox::new(0.0, 40.0, 4.0, 4.0).unwrap();
        // far box: nearest center is P1 at (5, 5)
        assert_eq!(match_query_boxes(&p2_box, &far, &b).unwrap(), ("P2".into(), "P1".into()));
        assert!(matches!(match_query_boxes(&p2_box, &p2_box, &b), Err(Error::AmbiguousQuery(_))));
    }

    #[test]
    fn single_person_is_unmatchable() {
        let b = bundle(vec![obj("a", 0, 0, 10, 10)], &[ObjectKind::Person]);
        let q = b.objects[0].bbox;
        assert!(matches!(match_query_boxes(&q, &q, &b), Err(Error::UnmatchableQuery(_))));
    }

    proptest! {
        #[test]
        fn symbols_invariant_under_permutation(
            specs in proptest::collection::vec((0u32..50, 0u32..50, any::<bool>()), 1..8),
            seed in any::<u64>(),
        ) {
            let objects: Vec<_> = specs.iter().enumerate()
                .map(|(i, &(x, y, _))| obj(&format!("o{i}"), x, y, 3, 3)).collect();
            let kinds: Vec<_> = specs.iter()
                .map(|&(_, _, p)| if p { ObjectKind::Person } else { ObjectKind::Other }).collect();
            let reference = assign_symbols(&objects, &kinds).unwrap();

            let mut order: Vec<usize> = (0..objects.len()).collect();
            let mut s = seed;
            for i in (1..order.len()).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                order.swap(i, (s >> 33) as usize % (i + 1));
            }
            let permuted: Vec<_> = order.iter().map(|&i| objects[i].clone()).collect();
            let permuted_kinds: Vec<_> = order.iter().map(|&i| kinds[i]).collect();
            let table = assign_symbols(&permuted, &permuted_kinds).unwrap();
            prop_assert_eq!(table, reference);
        }
    }
}
