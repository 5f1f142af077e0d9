//! World geometry for the navigation task: the arena, the rectangular
//! obstacle, the charging stations, and everything built directly on top of
//! them — safe-displacement regions for the policy flows, the violation
//! indicators, and collision resolution for the dynamics.
//!
//! Everything here is a pure function of positions and battery charge, so the
//! environment, the flow construction, and the audits in the test suite all
//! share one source of truth for what counts as safe.

use serde::{Deserialize, Serialize};

use crate::flows::ConvexRegion;
use crate::scalar::{c, FloatT};

/// Closed axis-aligned rectangle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect<T> {
    pub low: [T; 2],
    pub high: [T; 2],
}

impl<T: FloatT> Rect<T> {
    pub fn new(low: [T; 2], high: [T; 2]) -> Self {
        assert!(low[0] < high[0] && low[1] < high[1], "degenerate rectangle");
        Self { low, high }
    }

    /// Membership in the closed rectangle.
    pub fn contains(&self, p: &[T; 2]) -> bool {
        (0..2).all(|d| p[d] >= self.low[d] && p[d] <= self.high[d])
    }

    /// Membership in the open interior.
    pub fn contains_strict(&self, p: &[T; 2]) -> bool {
        (0..2).all(|d| p[d] > self.low[d] && p[d] < self.high[d])
    }

    /// The rectangle grown by `by` on every side.
    pub fn inflate(&self, by: T) -> Rect<T> {
        Rect {
            low: [self.low[0] - by, self.low[1] - by],
            high: [self.high[0] + by, self.high[1] + by],
        }
    }

    /// Signed distances past the two faces on `axis`: `(low - x, x - high)`.
    /// A positive entry means the point is clear of the rectangle on that
    /// side; both entries are negative inside the slab.
    fn face_excess(&self, p: &[T; 2], axis: usize) -> (T, T) {
        (self.low[axis] - p[axis], p[axis] - self.high[axis])
    }

    /// Largest face excess over both axes: the signed Chebyshev distance to
    /// the rectangle (positive outside, negative inside).
    pub fn clearance(&self, p: &[T; 2]) -> T {
        let (l, r) = self.face_excess(p, 0);
        let (b, t) = self.face_excess(p, 1);
        l.max(r).max(b.max(t))
    }
}

/// Static geometry of the navigation world plus the safety margins used when
/// constructing displacement regions and resolving motion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldLayout<T> {
    pub arena: Rect<T>,
    pub obstacle: Rect<T>,
    /// Per-axis bound on a single displacement.
    pub max_step: T,
    pub stations: Vec<[T; 2]>,
    /// A resolved position within this distance of a station recharges fully.
    pub station_radius: T,
    /// Contact-shell thickness: motion stops this far from the obstacle and
    /// the walls, and safe boxes keep at least half of it as clearance.
    pub margin: T,
    /// While the two axis clearances are within this gap of each other, both
    /// obstacle caps stay fully engaged instead of one relaxing.
    pub tie_gap: T,
    /// Width of the ramp over which the losing axis cap relaxes away.
    pub tie_taper: T,
    /// Displacement boxes are widened to at least this on each axis.
    pub min_width: T,
}

impl<T: FloatT> WorldLayout<T> {
    /// The benchmark world: 10x10 arena, central 2x2 obstacle, four charging
    /// stations at the side midpoints.
    pub fn nav_default() -> Self {
        Self {
            arena: Rect::new([c(-5.0), c(-5.0)], [c(5.0), c(5.0)]),
            obstacle: Rect::new([c(-1.0), c(-1.0)], [c(1.0), c(1.0)]),
            max_step: c(1.0),
            stations: vec![
                [c(5.0), c(0.0)],
                [c(-5.0), c(0.0)],
                [c(0.0), c(5.0)],
                [c(0.0), c(-5.0)],
            ],
            station_radius: c(0.5),
            margin: c(1e-3),
            tie_gap: c(0.05),
            tie_taper: c(0.2),
            min_width: c(1e-3),
        }
    }

    /// Index of and Euclidean distance to the nearest charging station.
    pub fn nearest_station(&self, p: &[T; 2]) -> (usize, T) {
        let mut best = (0, T::infinity());
        for (i, s) in self.stations.iter().enumerate() {
            let dx = s[0] - p[0];
            let dy = s[1] - p[1];
            let d = (dx * dx + dy * dy).sqrt();
            if d < best.1 {
                best = (i, d);
            }
        }
        assert!(best.1.is_finite(), "no charging stations in layout");
        best
    }

    /// Whether a (resolved) position gets service from some station.
    pub fn within_station(&self, p: &[T; 2]) -> bool {
        self.nearest_station(p).1 <= self.station_radius
    }

    /// Signed Chebyshev clearance from the obstacle.
    pub fn clearance(&self, p: &[T; 2]) -> T {
        self.obstacle.clearance(p)
    }

    /// True for positions the dynamics can actually occupy: inside the wall
    /// inset and not inside the obstacle's contact shell.
    pub fn position_ok(&self, p: &[T; 2]) -> bool {
        let m = self.margin;
        (0..2).all(|d| p[d] >= self.arena.low[d] + m && p[d] <= self.arena.high[d] - m)
            && self.clearance(p) >= m
    }

    pub fn validate(&self) -> Result<(), String> {
        let two = c::<T>(2.0);
        if !(self.max_step > T::zero()) {
            return Err("max_step must be positive".into());
        }
        if !(self.margin > T::zero() && self.margin < self.max_step) {
            return Err("margin must lie in (0, max_step)".into());
        }
        if !(self.tie_gap > T::zero() && self.tie_taper > T::zero()) {
            return Err("tie_gap and tie_taper must be positive".into());
        }
        if !(self.min_width > T::zero() && self.min_width < self.max_step) {
            return Err("min_width must lie in (0, max_step)".into());
        }
        for d in 0..2 {
            let gap_low = self.obstacle.low[d] - self.arena.low[d];
            let gap_high = self.arena.high[d] - self.obstacle.high[d];
            if gap_low <= two * self.margin || gap_high <= two * self.margin {
                return Err("obstacle must sit strictly inside the arena".into());
            }
        }
        if self.stations.is_empty() {
            return Err("at least one charging station is required".into());
        }
        if !(self.station_radius > T::zero()) {
            return Err("station_radius must be positive".into());
        }
        Ok(())
    }
}

/// Battery bookkeeping and the schedule turning charge into a displacement
/// ball.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatteryRule<T> {
    /// Recharges restore exactly this charge.
    pub capacity: T,
    /// Charge spent per step.
    pub depletion: T,
    /// The constraint: post-step charge below this is a violation.
    pub threshold: T,
    /// Charge at which the ball relaxes to the free ball; the pull toward the
    /// nearest station fades linearly between `threshold` and here.
    pub relax_level: T,
    /// Ball radius at `threshold` charge and below.
    pub radius_min: T,
    /// Ball radius at `relax_level` charge and above; at most `max_step`.
    pub radius_max: T,
}

impl<T: FloatT> BatteryRule<T> {
    /// Tuned so the pull wins even against an adversarial sampler: the
    /// obstacle squash runs after the battery squash and contracts the ball
    /// roughly by `tanh`, so the guaranteed per-step approach is
    /// `tanh(pull - radius)`, not `pull - radius`. Summed over the forced
    /// window (charge 42 down to 21) that is ~7.7 world units against at most
    /// ~4.2 needed from the worst arena corner. With `relax_level` at 50 the
    /// same sum is ~3.6 and the dock can fail; a `radius_min` much above 0.1
    /// reopens the wall-side hover gap described at [`battery_region`].
    pub fn nav_default() -> Self {
        Self {
            capacity: c(100.0),
            depletion: c(1.0),
            threshold: c(20.0),
            relax_level: c(70.0),
            radius_min: c(0.1),
            radius_max: c(1.0),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.relax_level > self.threshold) {
            return Err("relax_level must exceed threshold".into());
        }
        if !(self.radius_min > T::zero() && self.radius_min <= self.radius_max) {
            return Err("need 0 < radius_min <= radius_max".into());
        }
        if !(self.capacity > self.threshold && self.depletion > T::zero()) {
            return Err("capacity must exceed threshold and depletion be positive".into());
        }
        Ok(())
    }
}

/// Axis-aligned box of displacements whose whole motion segment stays clear
/// of the obstacle and strictly inside the arena.
///
/// Wall limits are plain per-axis caps (the arena is convex). The obstacle
/// cap works per axis: whichever axis has the larger clearance is always held
/// fully capped on its toward-obstacle side, which alone keeps the swept
/// segment on this side of the nearer face. The other axis's cap relaxes
/// toward its wall limit over a `tie_taper` ramp so that the box does not
/// collapse when a single axis already separates, and each cap also fades out
/// as its own clearance vanishes (inside the obstacle's slab no single face
/// is meaningful). Motion resolution maintains at least `margin` clearance,
/// which guarantees the larger-clearance axis is always fully engaged, so the
/// construction is sound everywhere the dynamics can go — and it is
/// continuous in the position, which the flow policies need.
pub fn obstacle_region<T: FloatT>(p: &[T; 2], layout: &WorldLayout<T>) -> ConvexRegion<T> {
    let zero = T::zero();
    let one = T::one();
    let m = layout.margin;

    let mut lo = [zero; 2];
    let mut hi = [zero; 2];
    for d in 0..2 {
        hi[d] = (layout.arena.high[d] - m - p[d]).min(layout.max_step);
        lo[d] = (layout.arena.low[d] + m - p[d]).max(-layout.max_step);
    }

    let excess = [
        layout.obstacle.face_excess(p, 0),
        layout.obstacle.face_excess(p, 1),
    ];
    let ax = excess[0].0.max(excess[0].1);
    let ay = excess[1].0.max(excess[1].1);
    let strength = |own: T, other: T| -> T {
        let tie = (one - (other - own - layout.tie_gap) / layout.tie_taper)
            .max(zero)
            .min(one);
        let gate = (own / m).max(zero).min(one);
        tie * gate
    };
    let engage = [strength(ax, ay), strength(ay, ax)];

    for d in 0..2 {
        let s = engage[d];
        if s <= zero {
            continue;
        }
        let (below, above) = excess[d];
        if below >= above {
            // The agent is on the low side of this axis: cap motion toward
            // the rectangle, blending back to the wall limit as `s` drops.
            let cap = below - m;
            let relaxed = cap + (one - s) * (hi[d] - cap);
            hi[d] = hi[d].min(relaxed);
        } else {
            let cap = -(above - m);
            let relaxed = cap + (one - s) * (lo[d] - cap);
            lo[d] = lo[d].max(relaxed);
        }
    }

    // Degenerate-width guard for cramped layouts: widen to a sliver around
    // the in-box point nearest to zero displacement. This can overrun a cap
    // by half the sliver, which still leaves half the margin as clearance.
    let half = layout.min_width / c(2.0);
    for d in 0..2 {
        let (a, b) = if lo[d] <= hi[d] {
            (lo[d], hi[d])
        } else {
            (hi[d], lo[d])
        };
        if b - a < layout.min_width {
            let anchor = zero.max(a).min(b);
            lo[d] = anchor - half;
            hi[d] = anchor + half;
        }
    }

    ConvexRegion::box_region(vec![lo[0], lo[1]], vec![hi[0], hi[1]])
        .expect("displacement box bounds are ordered and finite")
}

/// Displacement ball pulling the agent toward the nearest charging station as
/// the battery runs down.
///
/// At `relax_level` charge and above this is the free ball of radius
/// `radius_max` around zero displacement; approaching `threshold` it shrinks
/// to `radius_min` while its centre slides one radius *past* the nearest
/// station (capped so the ball never leaves the step bound). The overshoot is
/// what makes docking inescapable: with the centre merely on the station, the
/// reluctant edge of the ball makes so little headway that the downstream
/// obstacle squash — whose wall cap biases motion away from the wall the
/// station sits on — can cancel it entirely, leaving a hover point just
/// outside the service disk. One interpolation formula covers the whole
/// range, so the region is continuous in both position and charge.
pub fn battery_region<T: FloatT>(
    p: &[T; 2],
    battery: T,
    layout: &WorldLayout<T>,
    rule: &BatteryRule<T>,
) -> ConvexRegion<T> {
    let zero = T::zero();
    let one = T::one();
    let t = ((battery - rule.threshold) / (rule.relax_level - rule.threshold))
        .max(zero)
        .min(one);
    let (idx, dist) = layout.nearest_station(p);
    let radius = rule.radius_min + t * (rule.radius_max - rule.radius_min);
    let pull = ((one - t) * (dist + radius))
        .min(layout.max_step - radius)
        .max(zero);
    let mut center = vec![zero; 2];
    if dist > c(1e-12) {
        let s = &layout.stations[idx];
        for d in 0..2 {
            center[d] = (s[d] - p[d]) / dist * pull;
        }
    }
    ConvexRegion::ball(center, radius).expect("battery ball is a valid region")
}

/// Does the closed segment from `p` to `q` touch the closed rectangle?
pub fn segment_hits_rect<T: FloatT>(p: &[T; 2], q: &[T; 2], rect: &Rect<T>) -> bool {
    let delta = [q[0] - p[0], q[1] - p[1]];
    segment_rect_entry(p, &delta, rect).is_some()
}

/// Earliest `t` in [0, 1] with `p + t * delta` inside the closed rectangle,
/// if the segment touches it at all. Standard slab clipping; inclusive
/// comparisons give closed-set semantics, so grazing a corner counts.
fn segment_rect_entry<T: FloatT>(p: &[T; 2], delta: &[T; 2], rect: &Rect<T>) -> Option<T> {
    let mut t0 = T::zero();
    let mut t1 = T::one();
    for d in 0..2 {
        if delta[d] == T::zero() {
            if p[d] < rect.low[d] || p[d] > rect.high[d] {
                return None;
            }
        } else {
            let inv = T::one() / delta[d];
            let mut ta = (rect.low[d] - p[d]) * inv;
            let mut tb = (rect.high[d] - p[d]) * inv;
            if ta > tb {
                core::mem::swap(&mut ta, &mut tb);
            }
            t0 = t0.max(ta);
            t1 = t1.min(tb);
            if t0 > t1 {
                return None;
            }
        }
    }
    Some(t0)
}

/// Obstacle/arena indicator for a *proposed* displacement: true when the
/// motion segment would touch the obstacle or fail to stay strictly inside
/// the arena (an endpoint on a wall counts). The environment raises this flag
/// before resolving motion, so it reports on what the policy asked for, not
/// on where the agent actually ends up.
pub fn violates_obstacle<T: FloatT>(p: &[T; 2], action: &[T; 2], layout: &WorldLayout<T>) -> bool {
    let q = [p[0] + action[0], p[1] + action[1]];
    if !layout.arena.contains_strict(p) || !layout.arena.contains_strict(&q) {
        return true;
    }
    segment_hits_rect(p, &q, &layout.obstacle)
}

/// Post-step charge for a resolved endpoint: depletion, clamping at empty,
/// then a full recharge if a station serves the endpoint.
pub fn battery_after<T: FloatT>(
    endpoint: &[T; 2],
    battery: T,
    layout: &WorldLayout<T>,
    rule: &BatteryRule<T>,
) -> T {
    if layout.within_station(endpoint) {
        rule.capacity
    } else {
        (battery - rule.depletion).max(T::zero())
    }
}

/// Battery indicator for a proposed displacement: true when the post-step
/// charge falls strictly below the constraint threshold. The charge update
/// uses the *resolved* endpoint, matching what the environment will do.
pub fn violates_battery<T: FloatT>(
    p: &[T; 2],
    action: &[T; 2],
    battery: T,
    layout: &WorldLayout<T>,
    rule: &BatteryRule<T>,
) -> bool {
    let q = resolve_motion(p, action, layout);
    battery_after(&q, battery, layout, rule) < rule.threshold
}

/// Resolve a proposed displacement against the walls and the obstacle's
/// contact shell: motion stops at the first contact, backed off by a whisker
/// so repeated contacts never erode the `margin` clearance invariant.
/// Unobstructed proposals are applied exactly.
pub fn resolve_motion<T: FloatT>(p: &[T; 2], action: &[T; 2], layout: &WorldLayout<T>) -> [T; 2] {
    let zero = T::zero();
    let one = T::one();
    let m = layout.margin;

    let mut t_stop = one;
    for d in 0..2 {
        let a = action[d];
        if a > zero {
            t_stop = t_stop.min((layout.arena.high[d] - m - p[d]) / a);
        } else if a < zero {
            t_stop = t_stop.min((layout.arena.low[d] + m - p[d]) / a);
        }
    }

    // A position illegally inside the shell clips against the obstacle itself
    // (so contact never wedges the agent permanently); legal positions clip
    // against the inflated shell, which preserves full clearance.
    let rect = if layout.clearance(p) < m {
        layout.obstacle.clone()
    } else {
        layout.obstacle.inflate(m)
    };
    if let Some(t_in) = segment_rect_entry(p, action, &rect) {
        t_stop = t_stop.min(t_in);
    }

    let t = if t_stop < one {
        (t_stop - c(1e-9)).max(zero)
    } else {
        one
    };
    [p[0] + t * action[0], p[1] + t * action[1]]
}
