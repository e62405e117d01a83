use crate::error::{Error, Result};
use std::fmt;
use std::str::FromStr;

/// Compactly supported symmetric kernels on [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Kernel {
    Uniform,
    Triangular,
    Epanechnikov,
}

impl Kernel {
    pub const ALL: [Kernel; 3] = [Kernel::Uniform, Kernel::Triangular, Kernel::Epanechnikov];

    #[inline]
    pub fn eval(self, u: f64) -> f64 {
        let a = u.abs();
        if a > 1.0 {
            return 0.0;
        }
        match self {
            Kernel::Uniform => 0.5,
            Kernel::Triangular => 1.0 - a,
            Kernel::Epanechnikov => 0.75 * (1.0 - u * u),
        }
    }

    /// Interior points where the kernel is not smooth.
    pub fn breakpoints(self) -> &'static [f64] {
        match self {
            Kernel::Triangular => &[0.0],
            _ => &[],
        }
    }

    /// Polynomial degree of the kernel on each smooth piece.
    pub fn degree(self) -> usize {
        match self {
            Kernel::Uniform => 0,
            Kernel::Triangular => 1,
            Kernel::Epanechnikov => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Kernel::Uniform => "uniform",
            Kernel::Triangular => "triangular",
            Kernel::Epanechnikov => "epanechnikov",
        }
    }
}

impl Default for Kernel {
    fn default() -> Self {
        Kernel::Triangular
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kernel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "uniform" => Ok(Kernel::Uniform),
            "triangular" => Ok(Kernel::Triangular),
            "epanechnikov" => Ok(Kernel::Epanechnikov),
            other => Err(Error::InvalidInput(format!("unknown kernel '{other}'"))),
        }
    }
}
