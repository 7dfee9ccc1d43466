//! Time-bin qubit states and their preparation.
//!
//! A qubit lives on the two-dimensional space spanned by the early bin
//! `|t0⟩` and the late bin `|t1⟩`. Three mutually unbiased bases are
//! defined on it: the time basis, the phase basis `(|t0⟩ ± |t1⟩)/√2` and the
//! circular basis `(|t0⟩ ± i|t1⟩)/√2`. Only the first two take part in BB84.

use core::fmt;

use num_complex::Complex64;

use crate::{Error, Result};

const FRAC_1_SQRT_2: f64 = core::f64::consts::FRAC_1_SQRT_2;

/// Tolerance on `|a0|² + |a1|² - 1` accepted from callers.
pub const NORM_TOLERANCE: f64 = 1e-9;

/// Sense of the half-wave-plate rotation as seen by the birefringent
/// crystal. With `-1` the angle `-22.5°` prepares `|φ0⟩` and `+22.5°`
/// prepares `|φ1⟩`.
pub const HWP_ROTATION_SENSE: f64 = -1.0;

/// Measurement/preparation basis. Discriminants follow the `α, β` labels of
/// the probability-of-detection matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum BasisId {
    Phase = 0,
    Time = 1,
    Circular = 2,
}

impl BasisId {
    /// The two bases used for key generation, in `α` index order.
    pub const BB84: [BasisId; 2] = [BasisId::Phase, BasisId::Time];

    pub const fn index(self) -> usize {
        self as usize
    }

    /// Inverse of [`BasisId::index`] for the BB84 bases.
    pub fn from_bb84_index(index: usize) -> Option<Self> {
        match index {
            0 => Some(BasisId::Phase),
            1 => Some(BasisId::Time),
            _ => None,
        }
    }

    pub const fn is_bb84(self) -> bool {
        !matches!(self, BasisId::Circular)
    }
}

/// One classical bit value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Bit {
    Zero = 0,
    One = 1,
}

impl Bit {
    pub const fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        match index {
            0 => Some(Bit::Zero),
            1 => Some(Bit::One),
            _ => None,
        }
    }

    pub const fn flipped(self) -> Self {
        match self {
            Bit::Zero => Bit::One,
            Bit::One => Bit::Zero,
        }
    }
}

impl From<bool> for Bit {
    fn from(value: bool) -> Self {
        if value {
            Bit::One
        } else {
            Bit::Zero
        }
    }
}

/// Normalized amplitude vector `a0|t0⟩ + a1|t1⟩`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeBinQubit {
    amp_t0: Complex64,
    amp_t1: Complex64,
}

impl TimeBinQubit {
    pub const T0: TimeBinQubit = TimeBinQubit {
        amp_t0: Complex64::new(1.0, 0.0),
        amp_t1: Complex64::new(0.0, 0.0),
    };
    pub const T1: TimeBinQubit = TimeBinQubit {
        amp_t0: Complex64::new(0.0, 0.0),
        amp_t1: Complex64::new(1.0, 0.0),
    };

    /// Builds a state from amplitudes that must already be normalized.
    pub fn new(amp_t0: Complex64, amp_t1: Complex64) -> Result<Self> {
        let q = TimeBinQubit { amp_t0, amp_t1 };
        q.check_normalized()?;
        Ok(q)
    }

    /// Builds a state by rescaling arbitrary non-zero amplitudes.
    pub fn normalized(amp_t0: Complex64, amp_t1: Complex64) -> Result<Self> {
        let n = amp_t0.norm_sqr() + amp_t1.norm_sqr();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::InvalidState { norm_sqr: n });
        }
        let s = 1.0 / libm::sqrt(n);
        Ok(TimeBinQubit {
            amp_t0: amp_t0 * s,
            amp_t1: amp_t1 * s,
        })
    }

    pub fn amp_t0(&self) -> Complex64 {
        self.amp_t0
    }

    pub fn amp_t1(&self) -> Complex64 {
        self.amp_t1
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amp_t0.norm_sqr() + self.amp_t1.norm_sqr()
    }

    pub(crate) fn check_normalized(&self) -> Result<()> {
        let n = self.norm_sqr();
        if (n - 1.0).abs() > NORM_TOLERANCE || !n.is_finite() {
            return Err(Error::InvalidState { norm_sqr: n });
        }
        Ok(())
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &TimeBinQubit) -> Complex64 {
        self.amp_t0.conj() * other.amp_t0 + self.amp_t1.conj() * other.amp_t1
    }

    /// True when the two states differ at most by a global phase.
    pub fn same_ray(&self, other: &TimeBinQubit) -> bool {
        (self.inner(other).norm() - 1.0).abs() < NORM_TOLERANCE
    }
}

impl fmt::Display for TimeBinQubit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({})|t0⟩ + ({})|t1⟩", self.amp_t0, self.amp_t1)
    }
}

/// State produced by the HWP → α-BBO → PBS chain at `hwp_angle_deg`.
///
/// The amplitude rotation is `cos(2a)|t0⟩ + sin(2a)|t1⟩` with
/// `a = HWP_ROTATION_SENSE * hwp_angle_deg`, periodic in 180°.
pub fn prepare_state(hwp_angle_deg: f64) -> Result<TimeBinQubit> {
    if !hwp_angle_deg.is_finite() {
        return Err(Error::input("hwp_angle", "must be finite"));
    }
    let a = (HWP_ROTATION_SENSE * hwp_angle_deg) % 180.0;
    let (s, c) = sin_cos_double_deg(a);
    Ok(TimeBinQubit {
        amp_t0: Complex64::new(c, 0.0),
        amp_t1: Complex64::new(s, 0.0),
    })
}

/// `(sin 2a, cos 2a)` for `a` in degrees, exact at multiples of 22.5°.
fn sin_cos_double_deg(a: f64) -> (f64, f64) {
    let twice = 2.0 * a;
    let eighths = twice / 45.0;
    if eighths == libm::round(eighths) {
        let k = (libm::round(eighths) as i64).rem_euclid(8);
        let h = FRAC_1_SQRT_2;
        return match k {
            0 => (0.0, 1.0),
            1 => (h, h),
            2 => (1.0, 0.0),
            3 => (h, -h),
            4 => (0.0, -1.0),
            5 => (-h, -h),
            6 => (-1.0, 0.0),
            _ => (-h, h),
        };
    }
    let r = twice.to_radians();
    (libm::sin(r), libm::cos(r))
}

/// The orthonormal pair `(|ψ_0⟩, |ψ_1⟩)` of `basis`.
pub fn mub_states(basis: BasisId) -> [TimeBinQubit; 2] {
    let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
    let (plus, minus) = match basis {
        BasisId::Time => return [TimeBinQubit::T0, TimeBinQubit::T1],
        BasisId::Phase => (h, -h),
        BasisId::Circular => (Complex64::new(0.0, FRAC_1_SQRT_2), Complex64::new(0.0, -FRAC_1_SQRT_2)),
    };
    [
        TimeBinQubit {
            amp_t0: h,
            amp_t1: plus,
        },
        TimeBinQubit {
            amp_t0: h,
            amp_t1: minus,
        },
    ]
}

/// The state `|ψ_bit^{(basis)}⟩`.
pub fn basis_state(basis: BasisId, bit: Bit) -> TimeBinQubit {
    mub_states(basis)[bit.index()]
}

/// `|⟨b|a⟩|²`.
pub fn overlap_probability(a: &TimeBinQubit, b: &TimeBinQubit) -> Result<f64> {
    a.check_normalized()?;
    b.check_normalized()?;
    Ok(b.inner(a).norm_sqr().clamp(0.0, 1.0))
}

/// A BB84 preparation: which HWP angle Alice sets and which state that is.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PreparationSetting {
    pub hwp_angle_deg: f64,
    pub basis: BasisId,
    pub bit: Bit,
}

impl PreparationSetting {
    /// The four settings in `(α, i)` order: φ0, φ1, t0, t1.
    pub const BB84: [PreparationSetting; 4] = [
        PreparationSetting {
            hwp_angle_deg: -22.5,
            basis: BasisId::Phase,
            bit: Bit::Zero,
        },
        PreparationSetting {
            hwp_angle_deg: 22.5,
            basis: BasisId::Phase,
            bit: Bit::One,
        },
        PreparationSetting {
            hwp_angle_deg: 0.0,
            basis: BasisId::Time,
            bit: Bit::Zero,
        },
        PreparationSetting {
            hwp_angle_deg: 45.0,
            basis: BasisId::Time,
            bit: Bit::One,
        },
    ];

    pub fn from_hwp_angle(hwp_angle_deg: f64) -> Result<Self> {
        Self::BB84
            .iter()
            .copied()
            .find(|s| s.hwp_angle_deg == hwp_angle_deg)
            .ok_or(Error::input("hwp_angle", "not one of 0, 45, -22.5, 22.5 degrees"))
    }

    pub fn for_state(basis: BasisId, bit: Bit) -> Result<Self> {
        Self::BB84
            .iter()
            .copied()
            .find(|s| s.basis == basis && s.bit == bit)
            .ok_or(Error::input("basis", "no half-wave-plate setting prepares this basis"))
    }

    /// Position in [`PreparationSetting::BB84`].
    pub fn index(&self) -> usize {
        2 * self.basis.index() + self.bit.index()
    }

    pub fn state(&self) -> Result<TimeBinQubit> {
        prepare_state(self.hwp_angle_deg)
    }
}
