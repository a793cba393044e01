"""Exception types shared across the toolkit.

Every failure mode that callers are expected to handle gets its own class;
all of them derive from :class:`DiracBCError` so `except DiracBCError` at the
CLI boundary catches everything we raise on purpose.
"""


class DiracBCError(Exception):
    """Base class for all toolkit errors."""


# --- fiber / assembly ------------------------------------------------------

class AlgebraViolation(DiracBCError):
    """A Clifford/chirality/potential identity fails beyond tolerance."""


class AnticommutationViolation(DiracBCError):
    """A boundary projector does not intertwine the normal Clifford action."""


class GridTooCoarse(DiracBCError):
    """Too few nodes to assemble a meaningful operator."""


class DecompositionFailure(DiracBCError):
    """A dense eigendecomposition failed or produced inconsistent structure."""


class DecompositionUnavailable(DiracBCError):
    """The boundary condition does not split into chiral channels."""


# --- propagation -----------------------------------------------------------

class IncompatibleProjector(DiracBCError):
    """Boundary data does not lie in the projector's range."""


class GridMismatch(DiracBCError):
    """Source sampled on a different time lattice than requested."""


class BasisNotInRange(DiracBCError):
    """A source-basis element violates the projector constraint."""


# --- boundary-data inner products -----------------------------------------

class LatticeTooShort(DiracBCError):
    """Traces end before the time horizon the computation needs."""


class NegativeForm(DiracBCError):
    """A quantity that must be a squared norm came out significantly negative."""


class WrongProjectorSide(DiracBCError):
    """Mixed pairing called with sources on the wrong projector side."""


# --- control ---------------------------------------------------------------

class SingularGram(DiracBCError):
    """Regularized normal equations are numerically singular."""


class TargetNotExpressible(DiracBCError):
    """Target requires interior (oracle) data not available in this mode."""


class ProbeFamilyTooSmall(DiracBCError):
    """Not enough probe sources to run the geometry estimate."""


# --- spectral --------------------------------------------------------------

class BasisDeficient(DiracBCError):
    """Source-basis Gram is singular beyond what regularization can absorb."""


class RankCollapse(DiracBCError):
    """Channel projector construction lost the numerical range."""


class KernelAmbiguous(DiracBCError):
    """No clear spectral gap separates the kernel candidates."""


class NotDifferentiable(DiracBCError):
    """Difference-quotient defects plateau; source outside the derivative domain."""


# --- focusing / reconstruction ---------------------------------------------

class FocusFailure(DiracBCError):
    """Focusing family's probe functional diverges."""


class NoFrameFound(DiracBCError):
    """No candidate eigen-pair spans the fiber over the requested neighborhood."""


class FrameSingularAt(DiracBCError):
    """Frame matrix is singular at the evaluation point."""


class ConstraintInfeasible(DiracBCError):
    """Constrained minimization has incompatible equality constraints."""


class InvolutionDefect(DiracBCError):
    """Recovered chirality fails F² = I beyond tolerance."""


class ControlResidualTooLarge(DiracBCError):
    """A control solve did not reach the target within tolerance."""


class FitResidualTooLarge(DiracBCError):
    """Operator-coefficient fit residual beyond tolerance."""


# --- harmonic --------------------------------------------------------------

class SpectrumTooClose(DiracBCError):
    """Frequency too close to an eigenvalue for a stable map."""


class CutoffTooSmall(DiracBCError):
    """Spectral cutoff does not cover enough modes for the requested accuracy."""


class BandLimitViolated(DiracBCError):
    """Source has significant content beyond the synthesis band."""


class DampingOutOfRange(DiracBCError):
    """Contour damping parameter outside the supported window."""


# --- meshes ----------------------------------------------------------------

class DegenerateTriangle(DiracBCError):
    """Triangle circumcenter ill-placed; dual cell degenerate."""


class RankUnstable(DiracBCError):
    """Kernel rank decision sits inside the singular-value noise floor."""


# --- CLI / caching ---------------------------------------------------------

class ConfigInvalid(DiracBCError):
    """Scenario config fails schema validation."""


class CacheCorrupt(DiracBCError):
    """Cache container checksum mismatch."""
