//! Ordinal four-point scales used by testing profiles and test-case prerequisites.
//!
//! Every scale is a distinct type, so comparing levels from different scales
//! does not compile. Ordering is defined by [`OrdinalLevel::rank`] alone.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Common behaviour of the ordinal level scales.
pub trait OrdinalLevel: Copy + Eq + fmt::Debug + fmt::Display + 'static {
    /// Every value of the scale, ascending by rank.
    const ALL: [Self; 4];

    /// Rank in `1..=4`.
    fn rank(self) -> u8;

    /// Canonical token as it appears in documents.
    fn name(self) -> &'static str;

    fn from_rank(rank: u8) -> Option<Self> {
        Self::ALL.iter().copied().find(|l| l.rank() == rank)
    }

    fn highest() -> Self {
        Self::ALL[3]
    }

    fn lowest() -> Self {
        Self::ALL[0]
    }
}

/// `true` iff `rank(a) <= rank(b)`.
pub fn level_leq<L: OrdinalLevel>(a: L, b: L) -> bool {
    a.rank() <= b.rank()
}

macro_rules! ordinal_level {
    (
        $(#[$meta:meta])*
        $name:ident { $($variant:ident = $rank:literal => $token:literal),+ $(,)? }
    ) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
        pub enum $name {
            $(
                #[serde(rename = $token)]
                $variant,
            )+
        }

        impl OrdinalLevel for $name {
            const ALL: [Self; 4] = [$(Self::$variant),+];

            fn rank(self) -> u8 {
                match self {
                    $(Self::$variant => $rank,)+
                }
            }

            fn name(self) -> &'static str {
                match self {
                    $(Self::$variant => $token,)+
                }
            }
        }

        impl PartialOrd for $name {
            fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
                Some(self.cmp(other))
            }
        }

        impl Ord for $name {
            fn cmp(&self, other: &Self) -> Ordering {
                self.rank().cmp(&other.rank())
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }
    };
}

ordinal_level! {
    /// How close an attacker (or assessor) can get to the device.
    PhysicalAccessLevel {
        Remote = 1 => "REMOTE",
        Adjacent = 2 => "ADJACENT",
        NonInvasive = 3 => "NONINVASIVE",
        Invasive = 4 => "INVASIVE",
    }
}

ordinal_level! {
    /// Digital privileges assumed for the attacker.
    AuthorizationAccessLevel {
        Unauthorized = 1 => "UNAUTHORIZED",
        User = 2 => "USER",
        Admin = 3 => "ADMIN",
        Manufacturer = 4 => "MANUFACTURER",
    }
}

ordinal_level! {
    /// Sensitivity of the data the device produces or stores.
    DataSensitivityLevel {
        NonPersonal = 1 => "NONPERSONAL",
        Behavioral = 2 => "BEHAVIORAL",
        Personal = 3 => "PERSONAL",
        Critical = 4 => "CRITICAL",
    }
}

ordinal_level! {
    /// Consequence of a security breach of the device.
    SecurityImpactLevel {
        Inconvenience = 1 => "INCONVENIENCE",
        PropertyPrivacy = 2 => "PROPERTY_PRIVACY",
        SafetyLimited = 3 => "SAFETY_LIMITED",
        SafetyCritical = 4 => "SAFETY_CRITICAL",
    }
}

ordinal_level! {
    /// Rigor with which tests are executed.
    VerificationLevel {
        Overall = 1 => "OVERALL",
        Standard = 2 => "STANDARD",
        Rigorous = 3 => "RIGOROUS",
        Formal = 4 => "FORMAL",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_scale<L: OrdinalLevel>() {
        let ranks: Vec<u8> = L::ALL.iter().map(|l| l.rank()).collect();
        assert_eq!(ranks, vec![1, 2, 3, 4]);
        for a in L::ALL {
            assert_eq!(L::from_rank(a.rank()), Some(a));
            for b in L::ALL {
                // brute-force table against rank arithmetic
                let expected = a.rank() <= b.rank();
                assert_eq!(level_leq(a, b), expected, "{a} <= {b}");
                // totality
                assert!(level_leq(a, b) || level_leq(b, a));
                // antisymmetry
                if level_leq(a, b) && level_leq(b, a) {
                    assert_eq!(a, b);
                }
                for c in L::ALL {
                    if level_leq(a, b) && level_leq(b, c) {
                        assert!(level_leq(a, c), "transitivity {a} {b} {c}");
                    }
                }
            }
        }
        assert_eq!(L::from_rank(0), None);
        assert_eq!(L::from_rank(5), None);
    }

    #[test]
    fn every_scale_is_a_total_order_matching_rank() {
        check_scale::<PhysicalAccessLevel>();
        check_scale::<AuthorizationAccessLevel>();
        check_scale::<DataSensitivityLevel>();
        check_scale::<SecurityImpactLevel>();
        check_scale::<VerificationLevel>();
    }

    #[test]
    fn endpoint_comparisons() {
        assert!(level_leq(PhysicalAccessLevel::Remote, PhysicalAccessLevel::Invasive));
        assert!(!level_leq(AuthorizationAccessLevel::Manufacturer, AuthorizationAccessLevel::User));
    }

    #[test]
    fn tokens_round_trip_through_serde() {
        let json = serde_json::to_string(&SecurityImpactLevel::PropertyPrivacy).unwrap();
        assert_eq!(json, "\"PROPERTY_PRIVACY\"");
        let parsed: VerificationLevel = serde_json::from_str("\"FORMAL\"").unwrap();
        assert_eq!(parsed, VerificationLevel::Formal);
        assert!(serde_json::from_str::<VerificationLevel>("\"formal\"").is_err());
    }
}
