//! Geometry primitives and the detection record exchanged by every stage.

use std::fmt;

/// Axis-aligned box in pixel coordinates, stored as top-left + extent (`tlwh`).
///
/// Coordinates are continuous. Nothing here clamps to the image; a predicted
/// box is allowed to leave the frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

/// Kalman measurement space: center, aspect ratio `w / h`, height.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Xyah {
    pub cx: f64,
    pub cy: f64,
    pub a: f64,
    pub h: f64,
}

impl BBox {
    pub const fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    /// `true` when both extents are strictly positive and every field is finite.
    pub fn is_valid(&self) -> bool {
        self.x.is_finite()
            && self.y.is_finite()
            && self.w.is_finite()
            && self.h.is_finite()
            && self.w > 0.0
            && self.h > 0.0
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn to_xyah(&self) -> Xyah {
        Xyah {
            cx: self.x + self.w / 2.0,
            cy: self.y + self.h / 2.0,
            a: self.w / self.h,
            h: self.h,
        }
    }

    pub fn from_xyah(m: Xyah) -> Self {
        let w = m.a * m.h;
        Self {
            x: m.cx - w / 2.0,
            y: m.cy - m.h / 2.0,
            w,
            h: m.h,
        }
    }

    /// `(left, top, right, bottom)`.
    pub fn to_tlbr(&self) -> [f64; 4] {
        [self.x, self.y, self.right(), self.bottom()]
    }

    pub fn from_tlbr(tlbr: [f64; 4]) -> Self {
        Self {
            x: tlbr[0],
            y: tlbr[1],
            w: tlbr[2] - tlbr[0],
            h: tlbr[3] - tlbr[1],
        }
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            x: self.x + dx,
            y: self.y + dy,
            ..*self
        }
    }

    /// Intersection over union. Symmetric, in `[0, 1]`; boxes with a
    /// non-positive extent score 0 against everything.
    pub fn iou(&self, other: &BBox) -> f64 {
        let iw = self.right().min(other.right()) - self.x.max(other.x);
        let ih = self.bottom().min(other.bottom()) - self.y.max(other.y);
        if iw <= 0.0 || ih <= 0.0 {
            return 0.0;
        }
        let inter = iw * ih;
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            return 0.0;
        }
        (inter / union).clamp(0.0, 1.0)
    }
}

impl fmt::Display for BBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.x, self.y, self.w, self.h)
    }
}

impl Xyah {
    pub fn to_array(self) -> [f64; 4] {
        [self.cx, self.cy, self.a, self.h]
    }

    pub fn from_array(v: [f64; 4]) -> Self {
        Self {
            cx: v[0],
            cy: v[1],
            a: v[2],
            h: v[3],
        }
    }
}

/// Free-function form of [`BBox::iou`].
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    a.iou(b)
}

/// Appearance vector attached to a detection.
///
/// Normalized descriptors have unit L2 norm. A descriptor whose raw pooling
/// result had zero (or non-finite) norm is stored as the all-zero vector and
/// reports [`Descriptor::is_degenerate`]; distance to it is maximal.
#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor {
    values: Vec<f64>,
}

impl Descriptor {
    /// L2-normalizes `raw`. Zero or non-finite input yields the degenerate descriptor.
    pub fn normalized(mut raw: Vec<f64>) -> Self {
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 && norm.is_finite() {
            raw.iter_mut().for_each(|v| *v /= norm);
        } else {
            raw.iter_mut().for_each(|v| *v = 0.0);
        }
        Self { values: raw }
    }

    pub fn degenerate(dim: usize) -> Self {
        Self {
            values: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_degenerate(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &Descriptor) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum()
    }
}

/// One detector output for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    /// 1-based frame index.
    pub frame: u32,
    pub bbox: BBox,
    pub confidence: f64,
    pub class_id: i32,
    pub descriptor: Option<Descriptor>,
}

impl Detection {
    pub fn new(frame: u32, bbox: BBox, confidence: f64) -> Self {
        Self {
            frame,
            bbox,
            confidence,
            class_id: 1,
            descriptor: None,
        }
    }

    pub fn with_descriptor(mut self, descriptor: Descriptor) -> Self {
        self.descriptor = Some(descriptor);
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn iou_identity_and_disjoint() {
        let a = BBox::new(0.0, 0.0, 10.0, 10.0);
        assert_eq!(a.iou(&a), 1.0);
        assert_eq!(a.iou(&BBox::new(20.0, 20.0, 5.0, 5.0)), 0.0);
    }

    #[test]
    fn iou_half_shift() {
        // overlap 5x10 = 50, union 100 + 100 - 50 = 150
        let a = BBox::new(0.0, 0.0, 10.0, 10.0);
        let b = BBox::new(5.0, 0.0, 10.0, 10.0);
        assert!((a.iou(&b) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn iou_touching_edges_is_zero() {
        let a = BBox::new(0.0, 0.0, 10.0, 10.0);
        assert_eq!(a.iou(&BBox::new(10.0, 0.0, 10.0, 10.0)), 0.0);
    }

    #[test]
    fn xyah_examples() {
        let m = BBox::new(0.0, 0.0, 10.0, 20.0).to_xyah();
        assert_eq!(m.to_array(), [5.0, 10.0, 0.5, 20.0]);
        let m = BBox::new(-5.0, -5.0, 10.0, 10.0).to_xyah();
        assert_eq!(m.to_array(), [0.0, 0.0, 1.0, 10.0]);
    }

    #[test]
    fn tlbr_round_trip() {
        let b = BBox::new(3.5, -2.0, 7.25, 11.0);
        assert_eq!(BBox::from_tlbr(b.to_tlbr()), b);
    }

    #[test]
    fn invalid_extents() {
        assert!(!BBox::new(0.0, 0.0, 0.0, 1.0).is_valid());
        assert!(!BBox::new(0.0, 0.0, 1.0, -1.0).is_valid());
        assert!(!BBox::new(f64::NAN, 0.0, 1.0, 1.0).is_valid());
        assert!(BBox::new(-4.0, 0.0, 1.0, 1.0).is_valid());
    }

    #[test]
    fn descriptor_normalization() {
        let d = Descriptor::normalized(vec![3.0, 4.0]);
        assert!((d.norm() - 1.0).abs() < 1e-12);
        let z = Descriptor::normalized(vec![0.0; 48]);
        assert!(z.is_degenerate());
        assert_eq!(z.dim(), 48);
    }

    fn any_box() -> impl Strategy<Value = BBox> {
        (-1e3..1e3f64, -1e3..1e3f64, 1e-2..1e3f64, 1e-2..1e3f64)
            .prop_map(|(x, y, w, h)| BBox::new(x, y, w, h))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn xyah_round_trip(b in any_box()) {
            let back = BBox::from_xyah(b.to_xyah());
            prop_assert!((back.x - b.x).abs() < 1e-9);
            prop_assert!((back.y - b.y).abs() < 1e-9);
            prop_assert!((back.w - b.w).abs() < 1e-9);
            prop_assert!((back.h - b.h).abs() < 1e-9);
        }

        #[test]
        fn iou_symmetric_and_bounded(a in any_box(), b in any_box()) {
            let ab = a.iou(&b);
            prop_assert_eq!(ab, b.iou(&a));
            prop_assert!((0.0..=1.0).contains(&ab));
        }
    }
}
