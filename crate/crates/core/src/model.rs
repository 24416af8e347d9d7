//! Domain vocabulary: traceable resource units (TRUs), primitive activities,
//! activity states, and the availability arithmetic over batch quantities.
//!
//! Everything here is a plain value with pure predicates; the transition
//! rules that maintain the invariants live in [`crate::contract`].

use std::fmt;

use num_rational::Ratio;
use thiserror::Error;

use crate::canon::{write_bool, write_string, write_uint, write_uint_list};

/// Maximum byte length of a primitive-activity name.
pub const MAX_ACTIVITY_NAME_BYTES: usize = 256;

// ---------------------------------------------------------------------------
// Identities
// ---------------------------------------------------------------------------

/// Identity of a traceable resource unit. Zero is reserved as the null
/// sentinel ("no link"); a valid identity is strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct TruId(pub u64);

/// Identity of a primitive activity. Zero is the null sentinel, used for
/// "no recorded producer" and "not yet consumed/used" links.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct ActivityId(pub u64);

impl TruId {
    pub const NULL: TruId = TruId(0);

    pub fn get(self) -> u64 {
        self.0
    }

    pub fn is_null(self) -> bool {
        self.0 == 0
    }
}

impl ActivityId {
    pub const NULL: ActivityId = ActivityId(0);

    pub fn get(self) -> u64 {
        self.0
    }

    pub fn is_null(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for TruId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl fmt::Display for ActivityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

// ---------------------------------------------------------------------------
// Quantities
// ---------------------------------------------------------------------------

/// A non-negative exact rational, used for batch sizes and committed amounts.
///
/// Kept as an integer numerator/denominator pair in lowest terms so that
/// canonical encodings, and therefore state digests, are bit-deterministic.
/// No floating point enters consensus-relevant state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Quantity(Ratio<u64>);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("quantity denominator must be nonzero")]
pub struct ZeroDenominator;

impl Quantity {
    pub const fn zero() -> Quantity {
        Quantity(Ratio::new_raw(0, 1))
    }

    pub const fn one() -> Quantity {
        Quantity(Ratio::new_raw(1, 1))
    }

    /// Build from a numerator/denominator pair; reduces to lowest terms.
    pub fn new(numer: u64, denom: u64) -> Result<Quantity, ZeroDenominator> {
        if denom == 0 {
            return Err(ZeroDenominator);
        }
        Ok(Quantity(Ratio::new(numer, denom)))
    }

    pub fn from_int(v: u64) -> Quantity {
        Quantity(Ratio::from_integer(v))
    }

    pub fn numer(&self) -> u64 {
        *self.0.numer()
    }

    pub fn denom(&self) -> u64 {
        *self.0.denom()
    }

    pub fn is_zero(&self) -> bool {
        self.numer() == 0
    }

    /// `self - other`, clamped at zero. Quantities are non-negative by
    /// construction, so subtraction never produces a negative value.
    pub fn saturating_sub(&self, other: &Quantity) -> Quantity {
        if other.0 >= self.0 {
            Quantity::zero()
        } else {
            Quantity(self.0 - other.0)
        }
    }

    pub fn write_canon(&self, out: &mut String) {
        write_uint(out, self.numer());
        out.push('/');
        write_uint(out, self.denom());
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.numer(), self.denom())
    }
}

// ---------------------------------------------------------------------------
// TRUs
// ---------------------------------------------------------------------------

/// A traceable resource unit: one batch, with lifecycle flags, producer and
/// consumer links, and a resource-point quantity.
///
/// Field discipline, maintained by the contract guards:
/// - `consumed` iff `consumed_by` is a real activity id; same for `used`.
/// - `produced_by`, once nonzero, never changes (a TRU is produced only once).
/// - `committed <= quantity` at all times.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tru {
    pub id: TruId,
    pub created: bool,
    pub used: bool,
    pub consumed: bool,
    pub produced_by: ActivityId,
    pub consumed_by: ActivityId,
    pub used_by: ActivityId,
    /// Batch size; defaults to 1 so the flag-only model is the degenerate case.
    pub quantity: Quantity,
    /// Amount reserved by enabled use/consume states; defaults to 0.
    pub committed: Quantity,
}

impl Tru {
    /// A freshly created TRU with no recorded producer.
    pub fn genesis(id: TruId) -> Tru {
        Tru {
            id,
            created: true,
            used: false,
            consumed: false,
            produced_by: ActivityId::NULL,
            consumed_by: ActivityId::NULL,
            used_by: ActivityId::NULL,
            quantity: Quantity::one(),
            committed: Quantity::zero(),
        }
    }

    /// True iff the TRU can still take part as an activity input.
    pub fn is_available(&self) -> bool {
        !self.consumed && !self.used
    }

    /// The uncommitted amount: `quantity - committed`, and zero once the
    /// TRU is consumed.
    pub fn available_amount(&self) -> Quantity {
        if self.consumed {
            return Quantity::zero();
        }
        self.quantity.saturating_sub(&self.committed)
    }

    /// Flag/link consistency plus the commitment bound. The contract keeps
    /// these true for every stored TRU; tests assert them over histories.
    pub fn invariants_hold(&self) -> bool {
        self.consumed == !self.consumed_by.is_null()
            && self.used == !self.used_by.is_null()
            && self.committed <= self.quantity
    }

    pub fn write_canon(&self, out: &mut String) {
        out.push_str("tru(");
        write_uint(out, self.id.get());
        out.push(',');
        write_bool(out, self.created);
        out.push(',');
        write_bool(out, self.used);
        out.push(',');
        write_bool(out, self.consumed);
        out.push(',');
        write_uint(out, self.produced_by.get());
        out.push(',');
        write_uint(out, self.consumed_by.get());
        out.push(',');
        write_uint(out, self.used_by.get());
        out.push(',');
        self.quantity.write_canon(out);
        out.push(',');
        self.committed.write_canon(out);
        out.push(')');
    }
}

// ---------------------------------------------------------------------------
// Primitive activities
// ---------------------------------------------------------------------------

/// A named, non-aggregated activity linking input TRUs to output TRUs.
/// Input and output lists are duplicate-free and disjoint for every stored
/// activity (enforced by the stepwise contract guards).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrimitiveActivity {
    pub id: ActivityId,
    pub created: bool,
    pub name: String,
    pub input_tru_ids: Vec<TruId>,
    pub output_tru_ids: Vec<TruId>,
}

impl PrimitiveActivity {
    pub fn write_canon(&self, out: &mut String) {
        out.push_str("act(");
        write_uint(out, self.id.get());
        out.push(',');
        write_bool(out, self.created);
        out.push(',');
        write_string(out, &self.name);
        out.push(',');
        write_uint_list(out, self.input_tru_ids.iter().map(|t| t.get()));
        out.push(',');
        write_uint_list(out, self.output_tru_ids.iter().map(|t| t.get()));
        out.push(')');
    }
}

// ---------------------------------------------------------------------------
// Activity states
// ---------------------------------------------------------------------------

/// Role a TRU plays in an activity state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StateRole {
    Produce,
    Consume,
    Use,
}

/// One enabled produce/consume/use state: which activity touched which TRU,
/// and when. The (role, activity, tru) triple is unique within any accepted
/// ledger history.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivityState {
    pub role: StateRole,
    pub activity: ActivityId,
    pub tru: TruId,
    /// Milliseconds since epoch; the timestamp of the accepting transaction.
    pub enabled_at: u64,
}

/// Lookup failure for a TRU identity.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown tru {0}")]
pub struct UnknownTru(pub TruId);
