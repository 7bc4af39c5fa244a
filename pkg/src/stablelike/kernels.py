"""Jump kernels n(x, h) comparable to the symmetric stable density.

A kernel is stored in bound-normalized form: ``ratio(x, h) = n(x, h) |h|^{d+alpha}``,
which lies in ``[kappa, 1/kappa]`` for admissible kernels. Built-in families
depend on ``h`` only through its direction; the sampler uses that to skip
radius draws for rejected candidates.

Each built-in family also carries compiled scalar twins of ``ratio`` and of the
spherical second moments used by the Gaussian small-jump substitution.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from ._accel import njit
from .constants import SUPPORTED_DIMS, default_kappa, sphere_area, stable_constant
from .errors import ConfigurationError, DomainError

SYMMETRY_RTOL = 1e-12


@dataclass(frozen=True)
class KernelBounds:
    d: int
    alpha: float
    kappa: float
    eta: float = None

    def __post_init__(self):
        if int(self.d) != self.d or self.d not in SUPPORTED_DIMS:
            raise ConfigurationError(f"d must be one of {SUPPORTED_DIMS}, got {self.d}")
        if not 0.0 < self.alpha < 2.0:
            raise ConfigurationError(f"alpha must lie in (0, 2), got {self.alpha}")
        if not 0.0 < self.kappa < 1.0:
            raise ConfigurationError(f"kappa must lie in (0, 1), got {self.kappa}")
        if self.eta is not None and not self.eta > 0:
            raise ConfigurationError(f"eta must be positive, got {self.eta}")
        object.__setattr__(self, "d", int(self.d))
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "kappa", float(self.kappa))

    def to_dict(self):
        return {"d": self.d, "alpha": self.alpha, "kappa": self.kappa, "eta": self.eta}


def psi_eta(r, eta):
    """Log modulus (1 + log^+(1/r))^{1+eta}."""
    r = np.asarray(r, dtype=np.float64)
    return (1.0 + np.log(np.maximum(1.0 / r, 1.0))) ** (1.0 + eta)


def envelope_intensity(bounds, eps_cut):
    """Total rate of the dominating jump measure kappa^{-1} |h|^{-d-alpha} on |h| >= eps_cut."""
    if not eps_cut > 0:
        raise DomainError(f"eps_cut must be positive, got {eps_cut}")
    return sphere_area(bounds.d) / (bounds.kappa * bounds.alpha * eps_cut ** bounds.alpha)


def small_jump_variance_scale(bounds, eps_cut):
    """s_d eps^{2-alpha} / (2 - alpha): multiply by a spherical average of the ratio."""
    return sphere_area(bounds.d) * eps_cut ** (2.0 - bounds.alpha) / (2.0 - bounds.alpha)


# ---------------------------------------------------------------- compiled twins

@njit(cache=True)
def _bump(z):
    return 2.0 * math.exp(-0.5 * z * z) - 1.0


@njit(cache=True, nogil=True)
def _ratio_constant(params, table, x, h):
    return params[0]


@njit(cache=True, nogil=True)
def _moments_constant(params, table, x, out):
    d = out.shape[0]
    for i in range(d):
        out[i] = params[0] / d


@njit(cache=True, nogil=True)
def _ratio_modulated(params, table, x, h):
    return params[0] * (1.0 + params[1] * _bump((x[0] - params[2]) / params[3]))


@njit(cache=True, nogil=True)
def _moments_modulated(params, table, x, out):
    d = out.shape[0]
    q = params[0] * (1.0 + params[1] * _bump((x[0] - params[2]) / params[3]))
    for i in range(d):
        out[i] = q / d


@njit(cache=True, nogil=True)
def _ratio_anisotropic(params, table, x, h):
    nh2 = 0.0
    for i in range(h.shape[0]):
        nh2 += h[i] * h[i]
    q = (h[0] * h[0] - h[1] * h[1]) / nh2
    return params[0] * (1.0 + params[1] * _bump((x[0] - params[2]) / params[3]) * q)


@njit(cache=True, nogil=True)
def _moments_anisotropic(params, table, x, out):
    d = out.shape[0]
    s = params[1] * _bump((x[0] - params[2]) / params[3])
    skew = 2.0 * s / (d * (d + 2.0))
    for i in range(d):
        out[i] = params[0] / d
    out[0] += params[0] * skew
    out[1] -= params[0] * skew


# ---------------------------------------------------------------- kernels

@dataclass(frozen=True)
class JitSpec:
    """What the compiled sampler needs to evaluate a kernel."""

    ratio: object
    moments: object
    params: np.ndarray
    table: np.ndarray = field(default_factory=lambda: np.zeros(1))


class JumpKernel:
    """Symmetric jump intensity with declared bounds.

    Subclasses implement :meth:`ratio` (vectorized over leading axes) and,
    for the Gaussian small-jump mode, :meth:`axis_moments`.
    """

    family = "user-defined"
    radial = False       # ratio depends on |h|
    directional = False  # ratio depends on h/|h|

    def __init__(self, bounds):
        if not isinstance(bounds, KernelBounds):
            raise ConfigurationError("bounds must be a KernelBounds instance")
        self.bounds = bounds

    @property
    def d(self):
        return self.bounds.d

    def ratio(self, x, h):
        raise NotImplementedError

    def axis_moments(self, x):
        """Per-axis spherical averages of u_i^2 ratio(x, u), shape (..., d)."""
        raise ConfigurationError(
            f"{self.family} kernel does not provide small-jump moments (GAUSS mode)")

    def jit_spec(self):
        """Compiled representation, or None when only the numpy path applies."""
        return None

    def params(self):
        return {}

    def describe(self):
        return {"family": self.family, "bounds": self.bounds.to_dict(), **self.params()}

    def __call__(self, x, h):
        return evaluate_kernel(self, x, h)


class ConstantStable(JumpKernel):
    """n(x, h) = c / |h|^{d+alpha}."""

    family = "constant-stable"

    def __init__(self, bounds, c):
        super().__init__(bounds)
        self.c = float(c)

    @classmethod
    def standard(cls, d, alpha, kappa=None, eta=None):
        """Kernel of the isotropic alpha-stable process with symbol |xi|^alpha."""
        c = stable_constant(d, alpha)
        kappa = default_kappa(c) if kappa is None else kappa
        return cls(KernelBounds(d, alpha, kappa, eta), c)

    @property
    def is_standard(self):
        return math.isclose(self.c, stable_constant(self.d, self.bounds.alpha), rel_tol=1e-14)

    def ratio(self, x, h):
        x = np.asarray(x, dtype=np.float64)
        h = np.asarray(h, dtype=np.float64)
        shape = np.broadcast_shapes(x.shape[:-1], h.shape[:-1])
        return np.full(shape, self.c)

    def axis_moments(self, x):
        x = np.asarray(x, dtype=np.float64)
        return np.full(x.shape, self.c / self.d)

    def jit_spec(self):
        return JitSpec(_ratio_constant, _moments_constant, np.array([self.c]))

    def params(self):
        return {"c": self.c}


class Modulated(JumpKernel):
    """n(x, h) = scale * m(x) / |h|^{d+alpha} with m(x) = 1 + a s((x_1 - center)/width).

    s(z) = 2 exp(-z^2/2) - 1 is a smooth bump with range (-1, 1], so m
    ranges over (1 - |a|, 1 + |a|].
    """

    family = "modulated"

    def __init__(self, bounds, a, scale=1.0, center=0.0, width=1.0):
        super().__init__(bounds)
        if not abs(a) < 1:
            raise ConfigurationError("modulation amplitude must satisfy |a| < 1")
        if not width > 0:
            raise ConfigurationError("modulation width must be positive")
        self.a = float(a)
        self.scale = float(scale)
        self.center = float(center)
        self.width = float(width)

    def bump(self, x1):
        z = (np.asarray(x1, dtype=np.float64) - self.center) / self.width
        return 2.0 * np.exp(-0.5 * z * z) - 1.0

    def modulation(self, x):
        """m(x) for points of shape (..., d)."""
        x = np.asarray(x, dtype=np.float64)
        return 1.0 + self.a * self.bump(x[..., 0])

    def ratio(self, x, h):
        x = np.asarray(x, dtype=np.float64)
        h = np.asarray(h, dtype=np.float64)
        q = self.scale * self.modulation(x)
        shape = np.broadcast_shapes(x.shape[:-1], h.shape[:-1])
        return np.broadcast_to(q, shape).copy()

    def axis_moments(self, x):
        x = np.asarray(x, dtype=np.float64)
        q = self.scale * self.modulation(x)
        return np.repeat(q[..., None] / self.d, self.d, axis=-1)

    def jit_spec(self):
        return JitSpec(_ratio_modulated, _moments_modulated,
                       np.array([self.scale, self.a, self.center, self.width]))

    def params(self):
        return {"a": self.a, "scale": self.scale, "center": self.center, "width": self.width}


class Anisotropic(JumpKernel):
    """n(x, h) = g(x, h/|h|) / |h|^{d+alpha}, g = scale (1 + b s(x_1) (u_1^2 - u_2^2)).

    g is even in the direction u, and lies in scale * [1 - |b|, 1 + |b|].
    Requires d >= 2.
    """

    family = "anisotropic"
    directional = True

    def __init__(self, bounds, b, scale=1.0, center=0.0, width=1.0):
        super().__init__(bounds)
        if bounds.d < 2:
            raise ConfigurationError("anisotropic kernels need d >= 2")
        if not abs(b) < 1:
            raise ConfigurationError("anisotropy strength must satisfy |b| < 1")
        if not width > 0:
            raise ConfigurationError("modulation width must be positive")
        self.b = float(b)
        self.scale = float(scale)
        self.center = float(center)
        self.width = float(width)

    def _s(self, x):
        z = (np.asarray(x, dtype=np.float64)[..., 0] - self.center) / self.width
        return 2.0 * np.exp(-0.5 * z * z) - 1.0

    def ratio(self, x, h):
        x = np.asarray(x, dtype=np.float64)
        h = np.asarray(h, dtype=np.float64)
        nh2 = np.sum(h * h, axis=-1)
        q = (h[..., 0] ** 2 - h[..., 1] ** 2) / nh2
        return self.scale * (1.0 + self.b * self._s(x) * q)

    def axis_moments(self, x):
        x = np.asarray(x, dtype=np.float64)
        d = self.d
        skew = 2.0 * self.b * self._s(x) / (d * (d + 2.0))
        out = np.full(x.shape, self.scale / d)
        out[..., 0] += self.scale * skew
        out[..., 1] -= self.scale * skew
        return out

    def jit_spec(self):
        return JitSpec(_ratio_anisotropic, _moments_anisotropic,
                       np.array([self.scale, self.b, self.center, self.width]))

    def params(self):
        return {"b": self.b, "scale": self.scale, "center": self.center, "width": self.width}


class UserKernel(JumpKernel):
    """Wraps a vectorized intensity ``func(x, h)``.

    Bounds are declared, not enforced; run :func:`validate_bounds` to audit them.
    ``moments`` (optional) returns per-axis spherical averages for GAUSS mode.
    Only the numpy sampler backend can run user kernels.
    """

    family = "user-defined"
    radial = True
    directional = True

    def __init__(self, bounds, func, moments=None, name="user"):
        super().__init__(bounds)
        self.func = func
        self.moments = moments
        self.name = name

    def ratio(self, x, h):
        h = np.asarray(h, dtype=np.float64)
        r = np.sqrt(np.sum(h * h, axis=-1))
        return np.asarray(self.func(x, h), dtype=np.float64) * r ** (self.d + self.bounds.alpha)

    def axis_moments(self, x):
        if self.moments is None:
            return super().axis_moments(x)
        return np.asarray(self.moments(x), dtype=np.float64)

    def params(self):
        return {"name": self.name}


# ---------------------------------------------------------------- operations

def _points(x, d, what):
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 0:
        a = a[None]
    if a.shape[-1] != d:
        if d == 1:
            a = a[..., None]
        else:
            raise DomainError(f"{what} must have trailing dimension {d}")
    return a


def evaluate_kernel(kernel, x, h):
    """Intensity n(x, h); vectorized over leading axes of ``x`` and ``h``.

    A single point and displacement give a float.
    """
    d = kernel.d
    single = np.ndim(x) <= 1 and np.ndim(h) <= 1
    x = _points(x, d, "x")
    h = _points(h, d, "h")
    r = np.sqrt(np.sum(h * h, axis=-1))
    if np.any(r <= 0):
        raise DomainError("jump kernel is undefined at zero displacement")
    out = kernel.ratio(x, h) / r ** (d + kernel.bounds.alpha)
    if single and out.size == 1:
        return float(out.reshape(()))
    return out


def unit_directions(d, n=16):
    """Deterministic direction set: both signs for d = 1, a circle for d = 2,
    a Fibonacci sphere for d = 3."""
    if d == 1:
        return np.array([[1.0], [-1.0]])
    if d == 2:
        th = 2.0 * np.pi * np.arange(n) / n
        return np.stack([np.cos(th), np.sin(th)], axis=-1)
    k = np.arange(n) + 0.5
    z = 1.0 - 2.0 * k / n
    phi = np.pi * (3.0 - math.sqrt(5.0)) * k
    rho = np.sqrt(1.0 - z * z)
    return np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=-1)


def default_h_grid(d, r_min=1e-4, r_max=1e2, n_radii=64, n_dirs=16):
    radii = np.logspace(np.log10(r_min), np.log10(r_max), n_radii)
    dirs = unit_directions(d, n_dirs)
    return (radii[:, None, None] * dirs[None, :, :]).reshape(-1, d)


@dataclass
class ValidationReport:
    min_ratio: float
    max_ratio: float
    worst_ratio: float
    worst_x: np.ndarray
    worst_h: np.ndarray
    max_asymmetry: float
    bounds_ok: bool
    symmetric: bool

    @property
    def passed(self):
        return self.bounds_ok and self.symmetric


def validate_bounds(kernel, x_grid, h_grid=None):
    """Check kappa <= n |h|^{d+alpha} <= 1/kappa and n(x,h) = n(x,-h) on a grid."""
    d = kernel.d
    kappa = kernel.bounds.kappa
    xs = _points(x_grid, d, "x_grid").reshape(-1, d)
    hs = default_h_grid(d) if h_grid is None else _points(h_grid, d, "h_grid").reshape(-1, d)
    if xs.shape[0] == 0 or hs.shape[0] == 0:
        raise DomainError("validation grids must be nonempty")
    if np.any(np.sum(hs * hs, axis=-1) <= 0):
        raise DomainError("h grid contains a zero displacement")
    X = xs[:, None, :]
    H = hs[None, :, :]
    n_plus = evaluate_kernel(kernel, X, H)
    n_minus = evaluate_kernel(kernel, X, -H)
    r = np.sqrt(np.sum(H * H, axis=-1))
    ratio = n_plus * r ** (d + kernel.bounds.alpha)
    asym = np.abs(n_plus - n_minus) / np.maximum(np.abs(n_plus), np.finfo(float).tiny)
    # distance outside [kappa, 1/kappa] in log scale; negative means inside
    excess = np.maximum(np.log(kappa) - np.log(ratio), np.log(ratio) + np.log(kappa))
    i, j = np.unravel_index(np.argmax(excess), excess.shape)
    return ValidationReport(
        min_ratio=float(ratio.min()),
        max_ratio=float(ratio.max()),
        worst_ratio=float(ratio[i, j]),
        worst_x=xs[i].copy(),
        worst_h=hs[j].copy(),
        max_asymmetry=float(asym.max()),
        bounds_ok=bool(np.all((ratio >= kappa) & (ratio <= 1.0 / kappa))),
        symmetric=bool(np.all(asym <= SYMMETRY_RTOL)),
    )


def continuity_modulus(kernel, x, y, b, h_grid=None):
    """Grid sup over 0 < |h| <= b of |q(x,h) - q(y,h)| psi_eta(|h|), q = n |h|^{d+alpha}."""
    eta = kernel.bounds.eta
    if eta is None:
        raise ConfigurationError("continuity_modulus needs eta in the kernel bounds")
    if not b > 0:
        raise DomainError("radius b must be positive")
    d = kernel.d
    if h_grid is None:
        hs = default_h_grid(d, r_max=b)
    else:
        hs = _points(h_grid, d, "h_grid").reshape(-1, d)
    r = np.sqrt(np.sum(hs * hs, axis=-1))
    if np.any(r <= 0) or np.any(r > b * (1 + 1e-12)):
        raise DomainError("h grid must satisfy 0 < |h| <= b")
    xp = _points(x, d, "x").reshape(d)
    yp = _points(y, d, "y").reshape(d)
    qx = kernel.ratio(np.broadcast_to(xp, hs.shape), hs)
    qy = kernel.ratio(np.broadcast_to(yp, hs.shape), hs)
    return float(np.max(np.abs(qx - qy) * psi_eta(r, eta)))


FAMILIES = {
    "constant-stable": ConstantStable,
    "modulated": Modulated,
    "anisotropic": Anisotropic,
}


def kernel_from_spec(spec):
    """Build a kernel from a mapping ``{family, d, alpha, kappa?, eta?, ...params}``.

    ``family: standard`` selects the constant-stable kernel with the symbol
    normalization; its kappa defaults to the tightest admissible value.
    """
    spec = dict(spec)
    family = spec.pop("family", None)
    try:
        d = int(spec.pop("d"))
        alpha = float(spec.pop("alpha"))
    except KeyError as exc:
        raise ConfigurationError(f"kernel spec missing field {exc.args[0]!r}") from None
    kappa = spec.pop("kappa", None)
    eta = spec.pop("eta", None)
    if family == "standard":
        if spec:
            raise ConfigurationError(f"unexpected kernel fields {sorted(spec)}")
        return ConstantStable.standard(d, alpha, kappa, eta)
    if family not in FAMILIES:
        raise ConfigurationError(
            f"unknown kernel family {family!r}; expected one of "
            f"{['standard', *FAMILIES]}")
    if kappa is None:
        raise ConfigurationError("kernel spec needs kappa")
    bounds = KernelBounds(d, alpha, float(kappa), None if eta is None else float(eta))
    try:
        return FAMILIES[family](bounds, **{k: float(v) for k, v in spec.items()})
    except TypeError as exc:
        raise ConfigurationError(f"bad parameters for {family}: {exc}") from None
