//! Pixel coordinates and inclusive axis-aligned rectangles.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

/// A pixel position. Points order row-major: by `y`, then by `x`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Point {
    pub x: u32,
    pub y: u32,
}

impl Point {
    pub const fn new(x: u32, y: u32) -> Self {
        Point { x, y }
    }
}

impl Ord for Point {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.y, self.x).cmp(&(other.y, other.x))
    }
}

impl PartialOrd for Point {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Axis-aligned rectangle with inclusive pixel bounds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Rect {
    pub left: u32,
    pub top: u32,
    pub right: u32,
    pub bottom: u32,
}

impl Rect {
    /// Returns `None` when the bounds are inverted.
    pub fn new(left: u32, top: u32, right: u32, bottom: u32) -> Option<Self> {
        (left <= right && top <= bottom).then_some(Rect {
            left,
            top,
            right,
            bottom,
        })
    }

    pub fn from_point(p: Point) -> Self {
        Rect {
            left: p.x,
            top: p.y,
            right: p.x,
            bottom: p.y,
        }
    }

    /// Tight bound of a point set, `None` if the set is empty.
    pub fn bounding<'a, I>(points: I) -> Option<Self>
    where
        I: IntoIterator<Item = &'a Point>,
    {
        let mut it = points.into_iter();
        let first = Rect::from_point(*it.next()?);
        Some(it.fold(first, |r, p| r.expand_to(*p)))
    }

    pub fn width(&self) -> u32 {
        self.right - self.left + 1
    }

    pub fn height(&self) -> u32 {
        self.bottom - self.top + 1
    }

    pub fn area(&self) -> u64 {
        self.width() as u64 * self.height() as u64
    }

    pub fn contains(&self, p: Point) -> bool {
        (self.left..=self.right).contains(&p.x) && (self.top..=self.bottom).contains(&p.y)
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        self.left <= other.left
            && self.top <= other.top
            && self.right >= other.right
            && self.bottom >= other.bottom
    }

    pub fn expand_to(self, p: Point) -> Self {
        Rect {
            left: self.left.min(p.x),
            top: self.top.min(p.y),
            right: self.right.max(p.x),
            bottom: self.bottom.max(p.y),
        }
    }

    /// Smallest rectangle covering both.
    pub fn union(&self, other: &Rect) -> Rect {
        Rect {
            left: self.left.min(other.left),
            top: self.top.min(other.top),
            right: self.right.max(other.right),
            bottom: self.bottom.max(other.bottom),
        }
    }

    pub fn intersection(&self, other: &Rect) -> Option<Rect> {
        Rect::new(
            self.left.max(other.left),
            self.top.max(other.top),
            self.right.min(other.right),
            self.bottom.min(other.bottom),
        )
    }

    /// Intersection over union, measured in pixels.
    pub fn iou(&self, other: &Rect) -> f64 {
        let inter = self.intersection(other).map_or(0, |r| r.area());
        if inter == 0 {
            return 0.0;
        }
        let union = self.area() + other.area() - inter;
        inter as f64 / union as f64
    }

    /// Signed count of pixel columns shared by the two x-extents; negative when
    /// they are apart.
    pub fn horizontal_overlap(&self, other: &Rect) -> i64 {
        self.right.min(other.right) as i64 - self.left.max(other.left) as i64 + 1
    }

    /// Signed count of empty rows between the two y-extents; negative values
    /// mean the extents overlap.
    pub fn vertical_gap(&self, other: &Rect) -> i64 {
        self.top.max(other.top) as i64 - self.bottom.min(other.bottom) as i64 - 1
    }

    /// Signed count of empty columns between the two x-extents.
    pub fn horizontal_gap(&self, other: &Rect) -> i64 {
        -self.horizontal_overlap(other)
    }

    pub fn center_y(&self) -> f64 {
        (self.top as f64 + self.bottom as f64) / 2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn points_sort_row_major() {
        let mut pts = vec![Point::new(3, 1), Point::new(0, 2), Point::new(1, 1)];
        pts.sort();
        assert_eq!(pts, vec![Point::new(1, 1), Point::new(3, 1), Point::new(0, 2)]);
    }

    #[test]
    fn inverted_rect_is_rejected() {
        assert!(Rect::new(5, 0, 4, 0).is_none());
        assert!(Rect::new(0, 5, 0, 4).is_none());
    }

    #[test]
    fn iou_of_identical_and_disjoint() {
        let a = Rect::new(0, 0, 9, 9).unwrap();
        let b = Rect::new(20, 20, 29, 29).unwrap();
        assert_eq!(a.iou(&a), 1.0);
        assert_eq!(a.iou(&b), 0.0);
        // half overlap: 50 shared of 150 total
        let c = Rect::new(5, 0, 14, 9).unwrap();
        assert!((a.iou(&c) - 50.0 / 150.0).abs() < 1e-12);
    }

    #[test]
    fn gaps_and_overlaps() {
        let a = Rect::new(0, 0, 4, 4).unwrap();
        let b = Rect::new(5, 5, 9, 9).unwrap();
        assert_eq!(a.horizontal_overlap(&b), 0);
        assert_eq!(a.vertical_gap(&b), 0);
        let c = Rect::new(0, 8, 4, 9).unwrap();
        assert_eq!(a.vertical_gap(&c), 3);
        assert_eq!(a.horizontal_overlap(&c), 5);
    }
}
