use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result, Scalar};

pub const NUM_DOMAINS: usize = 5;

/// The five image populations a generator translates among.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    BicubicLr = 0,
    BilinearLr = 1,
    NearestLr = 2,
    RealLr = 3,
    Hr = 4,
}

impl Domain {
    pub const ALL: [Domain; NUM_DOMAINS] = [
        Domain::BicubicLr,
        Domain::BilinearLr,
        Domain::NearestLr,
        Domain::RealLr,
        Domain::Hr,
    ];

    /// The four degraded populations evaluated against HR ground truth.
    pub const LR: [Domain; 4] = [
        Domain::BicubicLr,
        Domain::BilinearLr,
        Domain::NearestLr,
        Domain::RealLr,
    ];

    /// LR domains that can be produced from an HR image.
    pub const SYNTHETIC: [Domain; 3] = [Domain::BicubicLr, Domain::BilinearLr, Domain::NearestLr];

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: usize) -> Result<Domain> {
        Domain::ALL
            .get(id)
            .copied()
            .ok_or_else(|| Error::InvalidDomain(format!("id {id} (expected 0..{NUM_DOMAINS})")))
    }

    pub fn name(self) -> &'static str {
        match self {
            Domain::BicubicLr => "bicubic",
            Domain::BilinearLr => "bilinear",
            Domain::NearestLr => "nearest",
            Domain::RealLr => "real",
            Domain::Hr => "hr",
        }
    }

    pub fn is_synthetic(self) -> bool {
        Domain::SYNTHETIC.contains(&self)
    }

    pub fn one_hot<T: Scalar>(self) -> [T; NUM_DOMAINS] {
        let mut v = [T::zero(); NUM_DOMAINS];
        v[self.id()] = T::one();
        v
    }

    /// Inverse of [`Domain::one_hot`]; rejects anything that is not exactly
    /// one 1 among zeros.
    pub fn from_one_hot<T: Scalar>(v: &[T]) -> Result<Domain> {
        if v.len() != NUM_DOMAINS {
            return Err(Error::InvalidDomain(format!(
                "one-hot vector has length {}, expected {NUM_DOMAINS}",
                v.len()
            )));
        }
        let hot: Vec<usize> = (0..v.len()).filter(|&i| v[i] == T::one()).collect();
        let clean = v.iter().all(|&x| x == T::zero() || x == T::one());
        match (clean, hot.as_slice()) {
            (true, [i]) => Domain::from_id(*i),
            _ => Err(Error::InvalidDomain(format!("not a one-hot vector: {v:?}"))),
        }
    }
}

/// Canonical one-hot encoding of a domain id.
pub fn encode_label<T: Scalar>(id: usize) -> Result<[T; NUM_DOMAINS]> {
    Ok(Domain::from_id(id)?.one_hot())
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Domain> {
        match s.to_ascii_lowercase().as_str() {
            "bicubic" | "bicubic_lr" => Ok(Domain::BicubicLr),
            "bilinear" | "bilinear_lr" => Ok(Domain::BilinearLr),
            "nearest" | "nearest_lr" => Ok(Domain::NearestLr),
            "real" | "real_lr" => Ok(Domain::RealLr),
            "hr" => Ok(Domain::Hr),
            other => Err(Error::InvalidDomain(other.to_string())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_hot_examples() {
        assert_eq!(encode_label::<f64>(4).unwrap(), [0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(encode_label::<f32>(0).unwrap(), [1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(
            Domain::from_one_hot(&[0.0f64, 0.0, 1.0, 0.0, 0.0]).unwrap(),
            Domain::NearestLr
        );
    }

    #[test]
    fn round_trip_all_ids() {
        for d in Domain::ALL {
            let v = d.one_hot::<f64>();
            assert_eq!(v.iter().sum::<f64>(), 1.0);
            assert_eq!(v[d.id()], 1.0);
            assert_eq!(Domain::from_one_hot(&v).unwrap(), d);
            assert_eq!(d.name().parse::<Domain>().unwrap(), d);
        }
    }

    #[test]
    fn rejects_unknown_ids_and_bad_vectors() {
        assert!(matches!(encode_label::<f64>(5), Err(Error::InvalidDomain(_))));
        assert!(Domain::from_one_hot(&[1.0f64, 1.0, 0.0, 0.0, 0.0]).is_err());
        assert!(Domain::from_one_hot(&[0.5f64, 0.5, 0.0, 0.0, 0.0]).is_err());
        assert!(Domain::from_one_hot(&[0.0f64; 4]).is_err());
        assert!("bogus".parse::<Domain>().is_err());
    }
}
