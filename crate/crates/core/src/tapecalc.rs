//! Binary counters stored on tape cells.
//!
//! A counter occupies `width` consecutive cells of one segment body and is
//! written little-endian over `0`/`1`, padded with blanks. An all-blank
//! region reads as zero. Results that do not fit are errors, never wrapped.

use std::cmp::Ordering;

use thiserror::Error;

use crate::tape_machine::{Sym, BLANK};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TapeCalcError {
    #[error("counter cell holds {0:?}")]
    MalformedCounter(Sym),
    #[error("counter overflow")]
    CounterOverflow,
    #[error("gcd of two zeros")]
    BothZero,
    #[error("region {offset}+{width} exceeds a segment body of {len} cells")]
    RegionOutOfBounds {
        offset: usize,
        width: usize,
        len: usize,
    },
}

/// Cells `offset..offset + width` of a segment body.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CounterRegion {
    pub offset: usize,
    pub width: usize,
}

impl CounterRegion {
    pub const fn new(offset: usize, width: usize) -> Self {
        Self { offset, width }
    }

    pub fn end(&self) -> usize {
        self.offset + self.width
    }

    /// Largest value the region can hold.
    pub fn capacity(&self) -> u64 {
        if self.width >= 64 {
            u64::MAX
        } else {
            (1u64 << self.width) - 1
        }
    }

    fn cells<'a>(&self, tape: &'a [Sym]) -> Result<&'a [Sym], TapeCalcError> {
        tape.get(self.offset..self.end())
            .ok_or(TapeCalcError::RegionOutOfBounds {
                offset: self.offset,
                width: self.width,
                len: tape.len(),
            })
    }

    fn cells_mut<'a>(&self, tape: &'a mut [Sym]) -> Result<&'a mut [Sym], TapeCalcError> {
        let len = tape.len();
        tape.get_mut(self.offset..self.end())
            .ok_or(TapeCalcError::RegionOutOfBounds {
                offset: self.offset,
                width: self.width,
                len,
            })
    }
}

pub fn read_counter(tape: &[Sym], r: &CounterRegion) -> Result<u64, TapeCalcError> {
    let mut value: u64 = 0;
    for (i, &c) in r.cells(tape)?.iter().enumerate() {
        match c {
            '0' | BLANK => {}
            '1' if i < 64 => value |= 1 << i,
            '1' => return Err(TapeCalcError::CounterOverflow),
            other => return Err(TapeCalcError::MalformedCounter(other)),
        }
    }
    Ok(value)
}

/// Writes `value` as its shortest binary form (`0` for zero), blanks after.
pub fn write_counter(tape: &mut [Sym], r: &CounterRegion, value: u64) -> Result<(), TapeCalcError> {
    if value > r.capacity() || r.width == 0 {
        return Err(TapeCalcError::CounterOverflow);
    }
    let bits = (u64::BITS - value.leading_zeros()).max(1) as usize;
    for (i, cell) in r.cells_mut(tape)?.iter_mut().enumerate() {
        *cell = if i >= bits {
            BLANK
        } else if value >> i & 1 == 1 {
            '1'
        } else {
            '0'
        };
    }
    Ok(())
}

/// `dst := dst + value`.
pub fn add(tape: &mut [Sym], dst: &CounterRegion, value: u64) -> Result<(), TapeCalcError> {
    let sum = read_counter(tape, dst)?
        .checked_add(value)
        .ok_or(TapeCalcError::CounterOverflow)?;
    write_counter(tape, dst, sum)
}

/// `out := a * b`; `a` and `b` are left as they were.
pub fn multiply(
    tape: &mut [Sym],
    a: &CounterRegion,
    b: &CounterRegion,
    out: &CounterRegion,
) -> Result<(), TapeCalcError> {
    let x = read_counter(tape, a)?;
    let y = read_counter(tape, b)?;
    // Shift-and-add, one partial product per bit of y.
    let mut acc: u64 = 0;
    for i in 0..64 - y.leading_zeros() {
        if y >> i & 1 == 1 {
            let part = x
                .checked_shl(i)
                .filter(|p| p >> i == x)
                .ok_or(TapeCalcError::CounterOverflow)?;
            acc = acc
                .checked_add(part)
                .ok_or(TapeCalcError::CounterOverflow)?;
        }
    }
    write_counter(tape, out, acc)
}

pub fn compare(
    tape: &[Sym],
    a: &CounterRegion,
    b: &CounterRegion,
) -> Result<Ordering, TapeCalcError> {
    Ok(read_counter(tape, a)?.cmp(&read_counter(tape, b)?))
}

/// `r := 2r`.
pub fn double(tape: &mut [Sym], r: &CounterRegion) -> Result<(), TapeCalcError> {
    let v = read_counter(tape, r)?;
    let d = v.checked_mul(2).ok_or(TapeCalcError::CounterOverflow)?;
    write_counter(tape, r, d)
}

/// Euclid's algorithm by remainders.
pub fn gcd(a: u64, b: u64) -> Result<u64, TapeCalcError> {
    if a == 0 && b == 0 {
        return Err(TapeCalcError::BothZero);
    }
    let (mut x, mut y) = (a, b);
    while y != 0 {
        (x, y) = (y, x % y);
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cells(s: &str) -> Vec<Sym> {
        s.chars().collect()
    }

    /// Subtraction-only Euclid, independent of the remainder form above.
    fn euclid_by_subtraction(mut a: u64, mut b: u64) -> u64 {
        if a == 0 {
            return b;
        }
        while b != 0 {
            if a > b {
                a -= b;
            } else {
                b -= a;
            }
        }
        a
    }

    #[test]
    fn decode() {
        let r = CounterRegion::new(0, 4);
        assert_eq!(read_counter(&cells("110_"), &r), Ok(3));
        assert_eq!(read_counter(&cells("____"), &r), Ok(0));
        assert_eq!(
            read_counter(&cells("1a__"), &r),
            Err(TapeCalcError::MalformedCounter('a'))
        );
    }

    #[test]
    fn add_and_overflow() {
        let r = CounterRegion::new(0, 4);
        let mut t = cells("____");
        write_counter(&mut t, &r, 5).unwrap();
        add(&mut t, &r, 3).unwrap();
        assert_eq!(read_counter(&t, &r), Ok(8));
        let r3 = CounterRegion::new(0, 3);
        let mut t = cells("111");
        assert_eq!(add(&mut t, &r3, 1), Err(TapeCalcError::CounterOverflow));
        let r6 = CounterRegion::new(1, 6);
        for x in 0..64 {
            let mut t = cells("x______y");
            write_counter(&mut t, &r6, x).unwrap();
            add(&mut t, &r6, 0).unwrap();
            assert_eq!(read_counter(&t, &r6), Ok(x));
            assert_eq!((t[0], t[7]), ('x', 'y'));
        }
    }

    #[test]
    fn multiply_exhaustive_five_bit() {
        let a = CounterRegion::new(0, 5);
        let b = CounterRegion::new(5, 5);
        let out = CounterRegion::new(10, 10);
        for x in 0..32 {
            for y in 0..32 {
                let mut t = vec![BLANK; 21];
                t[20] = '#';
                write_counter(&mut t, &a, x).unwrap();
                write_counter(&mut t, &b, y).unwrap();
                multiply(&mut t, &a, &b, &out).unwrap();
                assert_eq!(read_counter(&t, &out), Ok(x * y));
                assert_eq!(read_counter(&t, &a), Ok(x));
                assert_eq!(read_counter(&t, &b), Ok(y));
                assert_eq!(t[20], '#');
            }
        }
        let mut t = vec![BLANK; 20];
        write_counter(&mut t, &a, 6).unwrap();
        write_counter(&mut t, &b, 7).unwrap();
        multiply(&mut t, &a, &b, &out).unwrap();
        assert_eq!(read_counter(&t, &out), Ok(42));
        let small = CounterRegion::new(10, 3);
        assert_eq!(
            multiply(&mut t, &a, &b, &small),
            Err(TapeCalcError::CounterOverflow)
        );
    }

    #[test]
    fn compare_and_double() {
        let a = CounterRegion::new(0, 5);
        let b = CounterRegion::new(5, 5);
        for x in 0..32 {
            for y in 0..32 {
                let mut t = vec![BLANK; 10];
                write_counter(&mut t, &a, x).unwrap();
                write_counter(&mut t, &b, y).unwrap();
                assert_eq!(compare(&t, &a, &b), Ok(x.cmp(&y)));
            }
        }
        let mut t = vec![BLANK; 5];
        write_counter(&mut t, &a, 4).unwrap();
        double(&mut t, &a).unwrap();
        assert_eq!(read_counter(&t, &a), Ok(8));
        write_counter(&mut t, &a, 0).unwrap();
        double(&mut t, &a).unwrap();
        assert_eq!(read_counter(&t, &a), Ok(0));
        write_counter(&mut t, &a, 16).unwrap();
        assert_eq!(double(&mut t, &a), Err(TapeCalcError::CounterOverflow));
    }

    #[test]
    fn gcd_matches_subtraction_euclid() {
        assert_eq!(gcd(4, 6), Ok(2));
        assert_eq!(gcd(1, 17), Ok(1));
        assert_eq!(gcd(0, 0), Err(TapeCalcError::BothZero));
        for a in 0..=64 {
            for b in 0..=64 {
                if a == 0 && b == 0 {
                    continue;
                }
                assert_eq!(gcd(a, b), Ok(euclid_by_subtraction(a, b)), "{a} {b}");
            }
        }
    }

    #[test]
    fn region_must_fit() {
        let mut t = cells("___");
        assert!(matches!(
            write_counter(&mut t, &CounterRegion::new(2, 2), 1),
            Err(TapeCalcError::RegionOutOfBounds { .. })
        ));
    }

    proptest::proptest! {
        #[test]
        fn write_then_read_is_identity(width in 1usize..20, raw in proptest::num::u64::ANY) {
            let r = CounterRegion::new(2, width);
            let v = raw & r.capacity();
            let mut t = vec!['x'; width + 4];
            write_counter(&mut t, &r, v).unwrap();
            proptest::prop_assert_eq!(read_counter(&t, &r), Ok(v));
            proptest::prop_assert_eq!(&t[..2], &['x', 'x']);
            proptest::prop_assert_eq!(&t[width + 2..], &['x', 'x']);
        }
    }
}
