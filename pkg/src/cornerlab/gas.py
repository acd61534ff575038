"""Polytropic gas thermodynamics for steady irrotational flow.

Pressure law p = rho^gamma with gamma > 1.  The Bernoulli relation
q^2/2 + pi(rho) = B links speed and density; rewriting it in terms of the
half-squared mass flux mu = |rho*v|^2/2 gives the specific-volume closure
tau(mu) = 1/rho on the subsonic branch, defined for mu in [0, mu_sonic].
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numpy.polynomial.chebyshev import Chebyshev


class LimitSpeedExceeded(ValueError):
    """Speed above the vacuum limit sqrt(2B): no physical density exists."""


class SupersonicState(ValueError):
    """Momentum flux mu outside the subsonic interval [0, mu_sonic]."""


class NotSubsonic(ValueError):
    """Far-field Mach number >= 1."""


# the contract is a relative closure residual below 1e-12; iterate to near
# machine precision because the value error amplifies like residual/dF_drho
# toward the sonic fold
_NEWTON_TOL = 1e-15
_CHEB_DEGREE = 96


@dataclass(frozen=True)
class GasModel:
    """Isentropic coefficient and Bernoulli constant of a gamma-law gas.

    With bernoulli = gamma/(gamma-1) (the default, see :meth:`normalized`)
    the stagnation density is exactly 1.
    """

    gamma: float
    bernoulli: float

    def __post_init__(self):
        if not self.gamma > 1.0:
            raise ValueError(f"gamma must exceed 1, got {self.gamma}")
        if not self.bernoulli > 0.0:
            raise ValueError(f"bernoulli must be positive, got {self.bernoulli}")

    @classmethod
    def normalized(cls, gamma=1.4):
        """Gas with Bernoulli constant chosen so the stagnation density is 1."""
        return cls(gamma=gamma, bernoulli=gamma / (gamma - 1.0))

    # -- derived constants -------------------------------------------------

    @cached_property
    def stagnation_density(self) -> float:
        """Density at q = 0: the inverse enthalpy of the Bernoulli constant."""
        return float(_density_from_enthalpy(self.bernoulli, self.gamma))

    @cached_property
    def limit_speed(self) -> float:
        """Vacuum speed sqrt(2B); densities vanish there."""
        return float(np.sqrt(2.0 * self.bernoulli))

    @cached_property
    def sonic_speed(self) -> float:
        """Critical speed q* with q = c: q*^2 = 2(gamma-1)B/(gamma+1)."""
        g = self.gamma
        return float(np.sqrt(2.0 * (g - 1.0) * self.bernoulli / (g + 1.0)))

    @cached_property
    def sonic_density(self) -> float:
        q2 = self.sonic_speed**2
        return float(_density_from_enthalpy(self.bernoulli - 0.5 * q2, self.gamma))

    @cached_property
    def _tau_cheb(self):
        # tau is analytic in s = sqrt(mu_sonic - mu) up to and including the
        # sonic endpoint (fold of the Bernoulli closure), so interpolate there.
        mu1 = self.mu_sonic

        def h(s):
            mu = np.clip(mu1 - np.asarray(s) ** 2, 0.0, mu1)
            return tau(mu, self)

        return Chebyshev.interpolate(h, _CHEB_DEGREE, domain=[0.0, np.sqrt(mu1)])

    @cached_property
    def _tau_cheb_deriv(self):
        return self._tau_cheb.deriv()

    @cached_property
    def _energy_cheb(self):
        # T(mu) = integral_0^mu tau = integral_{s(mu)}^{s(0)} 2 s h(s) ds,
        # an exact antiderivative of the Chebyshev fit of h.
        cheb = self._tau_cheb
        a, b = cheb.domain
        ident = Chebyshev([(a + b) / 2.0, (b - a) / 2.0], domain=cheb.domain)
        return (2.0 * ident * cheb).integ()

    @property
    def mu_sonic(self) -> float:
        return sonic_mu(self)


@dataclass(frozen=True)
class FlowSample:
    """One thermodynamic state: density, speed and derived quantities.

    Construction checks the Bernoulli relation and the sound-speed law,
    so a FlowSample is always internally consistent.
    """

    density: float
    speed: float
    sound_speed: float
    mach: float
    momentum_half_sq: float

    def __post_init__(self):
        if self.density < 0 or self.speed < 0:
            raise ValueError("density and speed must be nonnegative")

    @classmethod
    def from_speed(cls, q, gas: GasModel):
        rho = density_from_speed(q, gas)
        return cls._build(rho, float(q), gas)

    @classmethod
    def from_momentum(cls, mu, gas: GasModel):
        rho = 1.0 / tau(mu, gas)
        q = np.sqrt(2.0 * float(mu)) / rho
        return cls._build(rho, float(q), gas)

    @classmethod
    def _build(cls, rho, q, gas):
        c = float(np.sqrt(gas.gamma) * rho ** ((gas.gamma - 1.0) / 2.0))
        mach = q / c if c > 0 else np.inf
        mu = 0.5 * (rho * q) ** 2
        res = abs(0.5 * q * q + pi_from_density(rho, gas) - gas.bernoulli)
        if res > 1e-9 * gas.bernoulli:
            raise ValueError(f"state violates the Bernoulli relation: residual {res:g}")
        return cls(rho, q, c, mach, mu)


# ---------------------------------------------------------------------------
# core relations
# ---------------------------------------------------------------------------

def pi_from_density(rho, gas: GasModel):
    """Specific enthalpy pi(rho) = gamma/(gamma-1) * rho^(gamma-1), pi(0) = 0.

    This is the antiderivative of p'(rho)/rho for p = rho^gamma, normalized
    to vanish at vacuum (valid for gamma > 1).
    """
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0):
        raise ValueError("density must be nonnegative")
    g = gas.gamma
    out = g / (g - 1.0) * rho ** (g - 1.0)
    return out if out.ndim else float(out)


def _density_from_enthalpy(pi_val, gamma):
    pi_val = np.asarray(pi_val, dtype=float)
    return ((gamma - 1.0) / gamma * pi_val) ** (1.0 / (gamma - 1.0))


def density_from_speed(q, gas: GasModel):
    """Invert the Bernoulli relation: rho = pi^-1(B - q^2/2).

    Raises LimitSpeedExceeded when q^2/2 > B (beyond the vacuum limit).
    """
    q = np.asarray(q, dtype=float)
    head = gas.bernoulli - 0.5 * q * q
    if np.any(head < -1e-14 * gas.bernoulli):
        raise LimitSpeedExceeded(
            f"speed {float(np.max(q)):g} exceeds the limit speed {gas.limit_speed:g}"
        )
    out = _density_from_enthalpy(np.maximum(head, 0.0), gas.gamma)
    return out if out.ndim else float(out)


def sonic_mu(gas: GasModel):
    """Sonic threshold mu_1 = (rho* q*)^2 / 2 of the momentum variable.

    At mu_1 the Bernoulli closure F(rho, mu) = B becomes degenerate
    (dF/drho = 0) and the state is exactly sonic.
    """
    return 0.5 * (gas.sonic_density * gas.sonic_speed) ** 2


def _closure_residual(rho, mu, gas):
    # F(rho, mu) - B with F = mu/rho^2 + pi(rho)
    return mu / rho**2 + pi_from_density(rho, gas) - gas.bernoulli


def tau(mu, gas: GasModel):
    """Specific volume 1/rho as a function of mu = |rho v|^2 / 2.

    Solves F(rho, mu) = B on the subsonic branch rho in [rho_sonic,
    rho_stagnation] by bisection-safeguarded Newton, relative residual
    below 1e-12 (relaxed near the sonic endpoint where dF/drho -> 0).
    Strictly increasing on [0, mu_sonic].
    """
    mu_in = np.asarray(mu, dtype=float)
    scalar = mu_in.ndim == 0
    mu_arr = np.atleast_1d(mu_in).astype(float)
    if np.any(mu_arr < 0):
        raise ValueError("mu must be nonnegative")
    mu1 = sonic_mu(gas)
    if np.any(mu_arr > mu1 * (1.0 + 1e-12)):
        raise SupersonicState(
            f"mu={float(np.max(mu_arr)):g} above the sonic threshold {mu1:g}"
        )
    mu_arr = np.minimum(mu_arr, mu1)
    # at the fold endpoint the root is known exactly; Newton accuracy there
    # is only sqrt(residual), so snap instead of iterating
    at_sonic = mu_arr >= mu1 * (1.0 - 1e-12)

    g = gas.gamma
    B = gas.bernoulli
    lo = np.full_like(mu_arr, gas.sonic_density)   # F(lo) - B <= 0
    hi = np.full_like(mu_arr, gas.stagnation_density)  # F(hi) - B >= 0
    rho = hi.copy()
    for _ in range(200):
        res = _closure_residual(rho, mu_arr, gas)
        done = np.abs(res) <= _NEWTON_TOL * B
        if np.all(done):
            break
        lo = np.where(res < 0, rho, lo)
        hi = np.where(res > 0, rho, hi)
        dF = -2.0 * mu_arr / rho**3 + g * rho ** (g - 2.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            cand = rho - res / dF
        bad = ~np.isfinite(cand) | (cand <= lo) | (cand >= hi)
        rho = np.where(bad & ~done, 0.5 * (lo + hi), np.where(done, rho, cand))
        if np.all((hi - lo) <= 1e-16 * hi):
            break
    rho = np.where(at_sonic, gas.sonic_density, rho)
    out = 1.0 / rho
    return float(out[0]) if scalar else out.reshape(mu_in.shape)


def energy_density(mu, gas: GasModel):
    """Antiderivative T(mu) of tau with T(0) = 0; strictly convex.

    Evaluated from a Chebyshev representation accurate to ~1e-12; adaptive
    quadrature of tau is the ground truth the tests compare against.
    """
    mu_in = np.asarray(mu, dtype=float)
    if np.any(mu_in < 0):
        raise ValueError("mu must be nonnegative")
    mu1 = sonic_mu(gas)
    if np.any(mu_in > mu1 * (1.0 + 1e-12)):
        raise SupersonicState(
            f"mu={float(np.max(mu_in)):g} above the sonic threshold {mu1:g}"
        )
    G = gas._energy_cheb
    s = np.sqrt(np.maximum(mu1 - np.minimum(mu_in, mu1), 0.0))
    out = G(np.sqrt(mu1)) - G(s)
    return float(out) if mu_in.ndim == 0 else out


def tau_fast(mu, gas: GasModel):
    """Chebyshev-cached tau for solver inner loops (same accuracy class)."""
    mu1 = sonic_mu(gas)
    s = np.sqrt(np.maximum(mu1 - np.minimum(np.asarray(mu, float), mu1), 0.0))
    return gas._tau_cheb(s)


def tau_prime(mu, gas: GasModel):
    """d tau/d mu from the cached representation; blows up like
    1/sqrt(mu_sonic - mu) toward the sonic endpoint (callers cap mu)."""
    mu1 = sonic_mu(gas)
    mu = np.minimum(np.asarray(mu, float), mu1 * (1.0 - 1e-10))
    s = np.sqrt(np.maximum(mu1 - mu, 0.0))
    return gas._tau_cheb_deriv(s) * (-0.5 / s)


def prandtl_glauert(mach_inf):
    """Far-field anisotropy factor beta = sqrt(1 - M_inf^2), M_inf in [0, 1)."""
    if mach_inf < 0 or mach_inf >= 1.0:
        raise NotSubsonic(f"far-field Mach {mach_inf:g} is not in [0, 1)")
    return float(np.sqrt(1.0 - mach_inf**2))


def farfield_state(mach_inf, gas: GasModel) -> FlowSample:
    """Uniform state with the given Mach number on this gas's Bernoulli level.

    Closed form: rho^(gamma-1) * gamma * (M^2/2 + 1/(gamma-1)) = B.
    """
    if mach_inf < 0 or mach_inf >= 1.0:
        raise NotSubsonic(f"far-field Mach {mach_inf:g} is not in [0, 1)")
    g = gas.gamma
    rho = (gas.bernoulli / (g * (0.5 * mach_inf**2 + 1.0 / (g - 1.0)))) ** (
        1.0 / (g - 1.0)
    )
    q = mach_inf * np.sqrt(g * rho ** (g - 1.0))
    return FlowSample.from_speed(float(q), gas)
