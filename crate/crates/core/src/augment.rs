//! The eight flip/rotation augmentations (the dihedral group of the square).

use rand::Rng;

use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AugmentOp {
    Identity,
    FlipH,
    FlipV,
    Rot90,
    Rot180,
    Rot270,
    Rot90FlipH,
    Rot270FlipH,
}

impl AugmentOp {
    pub const ALL: [AugmentOp; 8] = [
        AugmentOp::Identity,
        AugmentOp::FlipH,
        AugmentOp::FlipV,
        AugmentOp::Rot90,
        AugmentOp::Rot180,
        AugmentOp::Rot270,
        AugmentOp::Rot90FlipH,
        AugmentOp::Rot270FlipH,
    ];

    /// `(k, flip)` such that the op is `k` clockwise quarter turns followed by
    /// a horizontal flip when `flip` is set.
    pub fn parts(self) -> (u8, bool) {
        match self {
            AugmentOp::Identity => (0, false),
            AugmentOp::FlipH => (0, true),
            AugmentOp::FlipV => (2, true),
            AugmentOp::Rot90 => (1, false),
            AugmentOp::Rot180 => (2, false),
            AugmentOp::Rot270 => (3, false),
            AugmentOp::Rot90FlipH => (1, true),
            AugmentOp::Rot270FlipH => (3, true),
        }
    }

    pub fn from_parts(quarter_turns: u8, flip: bool) -> AugmentOp {
        match (quarter_turns % 4, flip) {
            (0, false) => AugmentOp::Identity,
            (0, true) => AugmentOp::FlipH,
            (2, true) => AugmentOp::FlipV,
            (1, false) => AugmentOp::Rot90,
            (2, false) => AugmentOp::Rot180,
            (3, false) => AugmentOp::Rot270,
            (1, true) => AugmentOp::Rot90FlipH,
            _ => AugmentOp::Rot270FlipH,
        }
    }

    /// The op equivalent to applying `self` and then `next`.
    pub fn then(self, next: AugmentOp) -> AugmentOp {
        let (ka, fa) = self.parts();
        let (kb, fb) = next.parts();
        // A quarter turn conjugated by a flip reverses direction.
        let kb = if fa { (4 - kb) % 4 } else { kb };
        AugmentOp::from_parts(ka + kb, fa ^ fb)
    }

    pub fn inverse(self) -> AugmentOp {
        match self {
            AugmentOp::Rot90 => AugmentOp::Rot270,
            AugmentOp::Rot270 => AugmentOp::Rot90,
            other => other,
        }
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> AugmentOp {
        Self::ALL[rng.random_range(0..Self::ALL.len())]
    }

    pub fn name(self) -> &'static str {
        match self {
            AugmentOp::Identity => "identity",
            AugmentOp::FlipH => "flip-h",
            AugmentOp::FlipV => "flip-v",
            AugmentOp::Rot90 => "rot90",
            AugmentOp::Rot180 => "rot180",
            AugmentOp::Rot270 => "rot270",
            AugmentOp::Rot90FlipH => "rot90+flip-h",
            AugmentOp::Rot270FlipH => "rot270+flip-h",
        }
    }

    /// Source pixel for output pixel `(x, y)` of a `w` x `h` image.
    fn source(self, x: usize, y: usize, w: usize, h: usize) -> (usize, usize) {
        let (k, flip) = self.parts();
        let x = if flip { w - 1 - x } else { x };
        match k {
            0 => (x, y),
            1 => (y, w - 1 - x),
            2 => (w - 1 - x, h - 1 - y),
            _ => (h - 1 - y, x),
        }
    }
}

/// Applies `op` as an exact pixel permutation.
///
/// Quarter turns need a square image; flips and the half turn work on any shape.
pub fn augment(img: &Image, op: AugmentOp) -> Result<Image> {
    let (w, h, c) = img.shape();
    if op.parts().0 % 2 == 1 && w != h {
        return Err(Error::NotSquare { width: w, height: h });
    }
    Image::from_fn(w, h, c, |x, y, ch| {
        let (sx, sy) = op.source(x, y, w, h);
        img.get(sx, sy, ch)
    })
}
