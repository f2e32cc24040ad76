use std::fmt;
use std::str::FromStr;

/// Transformation family; each has a group form and an algebra form.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Family {
    SO3,
    SE3,
    Sim3,
    RxSO3,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::SO3, Family::SE3, Family::Sim3, Family::RxSO3];

    /// Scalars per group element.
    pub fn group_size(self) -> usize {
        match self {
            Family::SO3 => 4,
            Family::SE3 => 7,
            Family::Sim3 => 8,
            Family::RxSO3 => 5,
        }
    }

    /// Tangent dimension (scalars per algebra element).
    pub fn dof(self) -> usize {
        match self {
            Family::SO3 => 3,
            Family::SE3 => 6,
            Family::Sim3 => 7,
            Family::RxSO3 => 4,
        }
    }

    pub fn has_translation(self) -> bool {
        matches!(self, Family::SE3 | Family::Sim3)
    }

    pub fn has_scale(self) -> bool {
        matches!(self, Family::Sim3 | Family::RxSO3)
    }

    /// Offset of the quaternion inside a group item.
    pub(crate) fn quat_offset(self) -> usize {
        if self.has_translation() {
            3
        } else {
            0
        }
    }

    /// Side of the square matrix returned by `to_matrix`.
    pub fn matrix_dim(self) -> usize {
        if self.has_translation() {
            4
        } else {
            3
        }
    }
}

/// Tag carried by every [`LieBatch`](super::LieBatch).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Kind {
    Group(Family),
    Algebra(Family),
}

impl Kind {
    pub fn family(self) -> Family {
        match self {
            Kind::Group(f) | Kind::Algebra(f) => f,
        }
    }

    pub fn is_group(self) -> bool {
        matches!(self, Kind::Group(_))
    }

    pub fn item_size(self) -> usize {
        match self {
            Kind::Group(f) => f.group_size(),
            Kind::Algebra(f) => f.dof(),
        }
    }

    /// The paired kind: SO3 <-> so3 and so on.
    pub fn paired(self) -> Kind {
        match self {
            Kind::Group(f) => Kind::Algebra(f),
            Kind::Algebra(f) => Kind::Group(f),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Kind::Group(Family::SO3) => "SO3",
            Kind::Group(Family::SE3) => "SE3",
            Kind::Group(Family::Sim3) => "Sim3",
            Kind::Group(Family::RxSO3) => "RxSO3",
            Kind::Algebra(Family::SO3) => "so3",
            Kind::Algebra(Family::SE3) => "se3",
            Kind::Algebra(Family::Sim3) => "sim3",
            Kind::Algebra(Family::RxSO3) => "rxso3",
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let kind = match s {
            "SO3" => Kind::Group(Family::SO3),
            "SE3" => Kind::Group(Family::SE3),
            "Sim3" => Kind::Group(Family::Sim3),
            "RxSO3" => Kind::Group(Family::RxSO3),
            "so3" => Kind::Algebra(Family::SO3),
            "se3" => Kind::Algebra(Family::SE3),
            "sim3" => Kind::Algebra(Family::Sim3),
            "rxso3" => Kind::Algebra(Family::RxSO3),
            other => return Err(format!("unknown kind '{other}'")),
        };
        Ok(kind)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn item_sizes() {
        let expected = [
            ("SO3", 4),
            ("so3", 3),
            ("SE3", 7),
            ("se3", 6),
            ("Sim3", 8),
            ("sim3", 7),
            ("RxSO3", 5),
            ("rxso3", 4),
        ];
        for (name, size) in expected {
            let kind: Kind = name.parse().unwrap();
            assert_eq!(kind.item_size(), size, "{name}");
            assert_eq!(kind.to_string(), name);
        }
    }

    #[test]
    fn pairing_is_involutive() {
        for f in Family::ALL {
            let g = Kind::Group(f);
            assert_eq!(g.paired(), Kind::Algebra(f));
            assert_eq!(g.paired().paired(), g);
        }
        assert!("SE2".parse::<Kind>().is_err());
    }
}
