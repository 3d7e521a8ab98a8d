//! Axis-aligned rectangle geometry shared by association, tracking and
//! evaluation. All coordinates are real-valued pixels; a pixel with integer
//! index `(i, j)` covers `[i, i + 1) x [j, j + 1)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A whole-target rectangle stored as `(left, top, width, height)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
}

/// The sub-region of a target that the correlation filter follows, stored
/// as `(center, size)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TagBox {
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
}

fn check_fields(kind: &str, fields: [f64; 4]) -> Result<()> {
    if fields.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidBox(format!("{kind} has non-finite field {fields:?}")));
    }
    if fields[2] <= 0.0 || fields[3] <= 0.0 {
        return Err(Error::InvalidBox(format!(
            "{kind} needs positive size, got {}x{}",
            fields[2], fields[3]
        )));
    }
    Ok(())
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        check_fields("bounding box", [x, y, w, h])?;
        Ok(Self { x, y, w, h })
    }

    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        Self::new(cx - w / 2.0, cy - h / 2.0, w, h)
    }

    pub fn x(&self) -> f64 {
        self.x
    }
    pub fn y(&self) -> f64 {
        self.y
    }
    pub fn w(&self) -> f64 {
        self.w
    }
    pub fn h(&self) -> f64 {
        self.h
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
    pub fn diagonal(&self) -> f64 {
        self.w.hypot(self.h)
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            x: self.x + dx,
            y: self.y + dy,
            ..*self
        }
    }

    /// The same rectangle in center/size form.
    pub fn to_tag_box(&self) -> TagBox {
        let (cx, cy) = self.center();
        TagBox {
            cx,
            cy,
            w: self.w,
            h: self.h,
        }
    }

    /// A tag-box sharing this box's center with each side scaled by `fraction`.
    pub fn centered_tag_box(&self, fraction: f64) -> Result<TagBox> {
        let (cx, cy) = self.center();
        TagBox::new(cx, cy, self.w * fraction, self.h * fraction)
    }
}

impl TagBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        check_fields("tag-box", [cx, cy, w, h])?;
        Ok(Self { cx, cy, w, h })
    }

    pub fn cx(&self) -> f64 {
        self.cx
    }
    pub fn cy(&self) -> f64 {
        self.cy
    }
    pub fn w(&self) -> f64 {
        self.w
    }
    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn center(&self) -> (f64, f64) {
        (self.cx, self.cy)
    }
    pub fn area(&self) -> f64 {
        self.w * self.h
    }
    pub fn left(&self) -> f64 {
        self.cx - self.w / 2.0
    }
    pub fn top(&self) -> f64 {
        self.cy - self.h / 2.0
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            cx: self.cx + dx,
            cy: self.cy + dy,
            ..*self
        }
    }

    pub fn with_center(&self, cx: f64, cy: f64) -> Self {
        Self { cx, cy, ..*self }
    }

    /// Rescales both sides by `factor` about the center. `factor` must be positive.
    pub fn scaled(&self, factor: f64) -> Self {
        debug_assert!(factor > 0.0);
        Self {
            w: self.w * factor,
            h: self.h * factor,
            ..*self
        }
    }

    pub fn to_bounding_box(&self) -> BoundingBox {
        BoundingBox {
            x: self.left(),
            y: self.top(),
            w: self.w,
            h: self.h,
        }
    }
}

fn intersection_area(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let iw = a.right().min(b.right()) - a.x.max(b.x);
    let ih = a.bottom().min(b.bottom()) - a.y.max(b.y);
    if iw <= 0.0 || ih <= 0.0 {
        0.0
    } else {
        iw * ih
    }
}

/// Fraction of the tag-box area that lies inside the detection box.
pub fn overlap_fraction(db: &BoundingBox, tb: &TagBox) -> f64 {
    let tbb = tb.to_bounding_box();
    let inter = intersection_area(db, &tbb);
    // Full containment must report exactly 1 regardless of rounding in the
    // center/size conversion.
    if tbb.x >= db.x && tbb.y >= db.y && tbb.right() <= db.right() && tbb.bottom() <= db.bottom()
    {
        return 1.0;
    }
    (inter / tb.area()).clamp(0.0, 1.0)
}

pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    if a == b {
        return 1.0;
    }
    let inter = intersection_area(a, b);
    if inter == 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Center distance between the two boxes divided by the detection's diagonal.
pub fn normalized_center_distance(db: &BoundingBox, tb: &TagBox) -> f64 {
    let (dx, dy) = db.center();
    (dx - tb.cx).hypot(dy - tb.cy) / db.diagonal()
}
