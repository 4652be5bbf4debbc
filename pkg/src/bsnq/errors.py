"""Exception types shared across the package."""


class BsnqError(Exception):
    """Base class for all package errors."""


class ConfigError(BsnqError):
    """Invalid or inconsistent run configuration; message carries the dotted key path."""


class FieldNotFinite(BsnqError):
    """An operator produced NaN or Inf."""


class GridMismatch(BsnqError):
    """Fields living on different grids were combined."""


class WallConstraintError(BsnqError):
    """A field violates a required wall value (e.g. nonzero streamfunction at a wall)."""


class EllipticIncompatibility(BsnqError):
    """Neumann data violate the discrete solvability condition beyond tolerance."""

    def __init__(self, magnitude, tol):
        self.magnitude = magnitude
        self.tol = tol
        super().__init__(
            "Neumann problem incompatible after mean correction: "
            "residual %.3e exceeds tolerance %.3e (discretization bug upstream?)"
            % (magnitude, tol)
        )


class PotentialNotHarmonic(BsnqError):
    """Sampled gravity potential fails the discrete Laplacian check."""


class NonIntegrableGradient(BsnqError):
    """delta * grad(Psi) is not curl-free / not x-periodic integrable; no steady density exists."""


class CflViolation(BsnqError):
    """Fixed time step violates the advective CFL bound."""


class NanGuard(BsnqError):
    """State lost finiteness during time stepping."""


class EigensolverError(BsnqError):
    """Iterative eigensolver failed to converge to the requested residual."""


class SnapshotFormatError(BsnqError):
    """Binary field snapshot is malformed."""
