"""Quantities carrying exact powers of the scale ``t`` and the coupling ``eps``.

At the regime of interest ``t = e^{-k}`` with ``k >= 25``, so factors such as
``t^{16 + 2 c0}`` are far below double precision range once squared.  A
:class:`ScaledQuantity` keeps the mantissa as a float and the exponents as
exact rationals; it is only turned into a plain float on request, and only
when the log-magnitude of the prefactor stays inside a safe window.
"""
from dataclasses import dataclass
from fractions import Fraction
import math

__all__ = ["ScaledQuantity", "as_fraction", "LOG_LIMIT"]

LOG_LIMIT = 600.0


def as_fraction(v):
    """Exact rational from an int, Fraction, or a float/str decimal (``1.5 -> 3/2``)."""
    if isinstance(v, Fraction):
        return v
    if isinstance(v, int):
        return Fraction(v)
    return Fraction(str(v))


@dataclass(frozen=True)
class ScaledQuantity:
    """``mantissa * t**t_pow * eps**eps_pow`` with optional mantissa standard error."""
    mantissa: float
    t_pow: Fraction = Fraction(0)
    eps_pow: int = 0
    stderr: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "t_pow", as_fraction(self.t_pow))
        object.__setattr__(self, "eps_pow", int(self.eps_pow))
        object.__setattr__(self, "mantissa", float(self.mantissa))
        object.__setattr__(self, "stderr", float(self.stderr))

    def __mul__(self, other):
        if isinstance(other, ScaledQuantity):
            m = self.mantissa * other.mantissa
            # first-order propagation for independent errors
            se = math.hypot(self.stderr * other.mantissa, other.stderr * self.mantissa)
            return ScaledQuantity(m, self.t_pow + other.t_pow, self.eps_pow + other.eps_pow, se)
        c = float(other)
        return ScaledQuantity(self.mantissa * c, self.t_pow, self.eps_pow, abs(c) * self.stderr)

    __rmul__ = __mul__

    def __neg__(self):
        return ScaledQuantity(-self.mantissa, self.t_pow, self.eps_pow, self.stderr)

    def same_scale(self, other):
        return self.t_pow == other.t_pow and self.eps_pow == other.eps_pow

    def __add__(self, other):
        if not self.same_scale(other):
            raise ValueError("cannot add ScaledQuantity values with different exponents "
                             f"(t^{self.t_pow} eps^{self.eps_pow} vs t^{other.t_pow} eps^{other.eps_pow})")
        return ScaledQuantity(self.mantissa + other.mantissa, self.t_pow, self.eps_pow,
                              math.hypot(self.stderr, other.stderr))

    def __sub__(self, other):
        return self + (-other)

    def log_prefactor(self, log_t, log_eps):
        return float(self.t_pow) * log_t + self.eps_pow * log_eps

    def materializable(self, log_t, log_eps):
        return abs(self.log_prefactor(log_t, log_eps)) < LOG_LIMIT

    def value(self, log_t, log_eps):
        """Plain float; raises ``OverflowError`` outside the safe window."""
        lp = self.log_prefactor(log_t, log_eps)
        if abs(lp) >= LOG_LIMIT:
            raise OverflowError(f"prefactor exp({lp:.1f}) is outside the materialization window")
        return self.mantissa * math.exp(lp)

    def to_dict(self):
        return {"mantissa": self.mantissa, "stderr": self.stderr,
                "t_pow": str(self.t_pow), "eps_pow": self.eps_pow}

    @classmethod
    def from_dict(cls, d):
        return cls(d["mantissa"], Fraction(d["t_pow"]), d["eps_pow"], d.get("stderr", 0.0))

    def __str__(self):
        return f"{self.mantissa:.6g} * t^{self.t_pow} * eps^{self.eps_pow}"
