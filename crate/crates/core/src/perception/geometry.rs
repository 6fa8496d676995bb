//! Axis-aligned boxes, overlap and non-maximum suppression.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Box in corner format: top-left corner plus size, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x0: f64,
    pub y0: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x0: f64, y0: f64, w: f64, h: f64) -> Result<Self> {
        if !(w > 0.0 && h > 0.0) || !x0.is_finite() || !y0.is_finite() || !w.is_finite() || !h.is_finite() {
            return Err(Error::InvalidGeometry(format!(
                "box ({x0}, {y0}, {w}, {h}) needs finite coordinates and positive size"
            )));
        }
        Ok(Self { x0, y0, w, h })
    }

    pub fn x1(&self) -> f64 {
        self.x0 + self.w
    }

    pub fn y1(&self) -> f64 {
        self.y0 + self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x0 + self.w / 2.0, self.y0 + self.h / 2.0)
    }

    /// Inverse of [`center_to_corner`]: `(cx, cy, h, w)`.
    pub fn to_center(&self) -> (f64, f64, f64, f64) {
        let (cx, cy) = self.center();
        (cx, cy, self.h, self.w)
    }

    /// True when the box lies inside a `width` x `height` image.
    pub fn within(&self, width: u32, height: u32) -> bool {
        self.x0 >= 0.0 && self.y0 >= 0.0 && self.x1() <= width as f64 && self.y1() <= height as f64
    }
}

/// Converts a center-format box `(cx, cy, h, w)` to corner format.
///
/// Note the argument order: height comes before width, as in the dataset
/// files.
pub fn center_to_corner(cx: f64, cy: f64, h: f64, w: f64) -> Result<BBox> {
    if !(h > 0.0 && w > 0.0) {
        return Err(Error::InvalidGeometry(format!(
            "non-positive box size h={h} w={w}"
        )));
    }
    BBox::new(cx - w / 2.0, cy - h / 2.0, w, h)
}

/// Intersection over union; 0 for disjoint boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let ix = (a.x1().min(b.x1()) - a.x0.max(b.x0)).max(0.0);
    let iy = (a.y1().min(b.y1()) - a.y0.max(b.y0)).max(0.0);
    let inter = ix * iy;
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Anything NMS can rank and compare.
pub trait Scored {
    fn score(&self) -> f64;
    fn bbox(&self) -> &BBox;
}

/// Indices kept by greedy non-maximum suppression, in descending score order.
///
/// Equal scores keep input order. An item survives iff its IoU with every
/// already-kept item is `<= iou_threshold`.
pub fn nms_indices<T: Scored>(items: &[T], iou_threshold: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| items[b].score().total_cmp(&items[a].score()));
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        if kept
            .iter()
            .all(|&k| iou(items[i].bbox(), items[k].bbox()) <= iou_threshold)
        {
            kept.push(i);
        }
    }
    kept
}

/// Greedy NMS returning the surviving items by descending score.
pub fn nms<T: Scored + Clone>(items: &[T], iou_threshold: f64) -> Vec<T> {
    nms_indices(items, iou_threshold)
        .into_iter()
        .map(|i| items[i].clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[derive(Clone, Debug)]
    struct Det(BBox, f64);

    impl Scored for Det {
        fn score(&self) -> f64 {
            self.1
        }
        fn bbox(&self) -> &BBox {
            &self.0
        }
    }

    fn b(x0: f64, y0: f64, w: f64, h: f64) -> BBox {
        BBox::new(x0, y0, w, h).unwrap()
    }

    #[test]
    fn center_to_corner_examples() {
        assert_eq!(center_to_corner(5.0, 5.0, 4.0, 4.0).unwrap(), b(3.0, 3.0, 4.0, 4.0));
        assert_eq!(center_to_corner(0.0, 0.0, 2.0, 2.0).unwrap(), b(-1.0, -1.0, 2.0, 2.0));
        // h=2, w=6 around (10, 4)
        assert_eq!(center_to_corner(10.0, 4.0, 2.0, 6.0).unwrap(), b(7.0, 3.0, 6.0, 2.0));
    }

    #[test]
    fn center_to_corner_rejects_degenerate() {
        assert!(matches!(center_to_corner(1.0, 1.0, 0.0, 2.0), Err(Error::InvalidGeometry(_))));
        assert!(matches!(center_to_corner(1.0, 1.0, 2.0, -1.0), Err(Error::InvalidGeometry(_))));
    }

    #[test]
    fn iou_examples() {
        let a = b(0.0, 0.0, 2.0, 2.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &b(5.0, 5.0, 1.0, 1.0)), 0.0);
        assert!((iou(&a, &b(1.0, 1.0, 2.0, 2.0)) - 1.0 / 7.0).abs() < 1e-12);
        // touching edges do not overlap
        assert_eq!(iou(&a, &b(2.0, 0.0, 2.0, 2.0)), 0.0);
    }

    #[test]
    fn nms_examples() {
        let one = vec![Det(b(0.0, 0.0, 2.0, 2.0), 0.3)];
        assert_eq!(nms(&one, 0.5).len(), 1);

        let dup = vec![Det(b(0.0, 0.0, 2.0, 2.0), 0.8), Det(b(0.0, 0.0, 2.0, 2.0), 0.9)];
        let kept = nms(&dup, 0.5);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].1, 0.9);

        let disjoint = vec![Det(b(0.0, 0.0, 2.0, 2.0), 0.4), Det(b(9.0, 9.0, 2.0, 2.0), 0.6)];
        assert_eq!(nms_indices(&disjoint, 0.5), vec![1, 0]);
    }

    fn arb_box() -> impl Strategy<Value = BBox> {
        (-50.0..50.0f64, -50.0..50.0f64, 0.1..40.0f64, 0.1..40.0f64)
            .prop_map(|(x, y, w, h)| BBox::new(x, y, w, h).unwrap())
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(a in arb_box(), c in arb_box()) {
            let v = iou(&a, &c);
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert_eq!(v, iou(&c, &a));
            prop_assert!((iou(&a, &a) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn center_round_trip(x in -100i32..100, y in -100i32..100, w in 1u32..64, h in 1u32..64) {
            // half-integer grid keeps the arithmetic exact
            let (cx, cy, hh, ww) = (x as f64 * 0.5, y as f64 * 0.5, h as f64, w as f64);
            let bx = center_to_corner(cx, cy, hh, ww).unwrap();
            prop_assert_eq!(bx.to_center(), (cx, cy, hh, ww));
        }

        #[test]
        fn nms_output_pairwise_below_threshold(
            boxes in proptest::collection::vec((arb_box(), 0.0..1.0f64), 0..12),
            thr in 0.0..1.0f64,
        ) {
            let dets: Vec<Det> = boxes.into_iter().map(|(bx, s)| Det(bx, s)).collect();
            let kept = nms(&dets, thr);
            for i in 0..kept.len() {
                for j in i + 1..kept.len() {
                    prop_assert!(iou(&kept[i].0, &kept[j].0) <= thr);
                    prop_assert!(kept[i].1 >= kept[j].1);
                }
            }
        }
    }
}
