# --------------------------------------------------------
# 🧠 smm.py — Student's t mixture model of a grayscale image
# --------------------------------------------------------
"""
Every pixel contributes one bivariate t component: mean at the pixel
centre (normalized coordinates), isotropic covariance driven by the
pixel intensity, degrees of freedom tied to that covariance.

Grid-valued quantities are accumulated by sweeping pixel offsets in a
fixed order, so a pixel's sum never depends on how rows are split
between workers.
"""
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy.special import gammaln

from geometry import Intrinsics
from settings import worker_count

MAX_INTENSITY = 255.0
POINT_CHUNK = 256


# --------------------------------------------------------
# ⚙️ Configuration
# --------------------------------------------------------
class SmmConfig(BaseModel):
    """How intensities become components and how the mixture is summed."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    sigma_min: float = 1.5
    sigma_max: float = 5.0
    # px² of spread per unit of sigma; 1.5 makes sigma_min a 1.5 px standard spread
    pixel_variance: float = Field(1.5, gt=0)
    truncate: bool = True
    # cutoff on sqrt(δ/ν); None derives it from truncation_tolerance
    truncation_radius: Optional[float] = Field(None, gt=0)
    truncation_tolerance: float = Field(1e-6, gt=0)
    gradient_mode: Literal["analytic", "filter"] = "analytic"
    normalize: bool = False

    @field_validator("sigma_min")
    @classmethod
    def _above_pole(cls, v: float) -> float:
        if not v > 1.0:
            raise ValueError(
                f"sigma_min={v} must be > 1: the degrees-of-freedom rule "
                "nu = 2*sigma/(sigma - 1) has a pole at sigma = 1"
            )
        return v

    @model_validator(mode="after")
    def _ordered(self) -> "SmmConfig":
        if not self.sigma_max > self.sigma_min:
            raise ValueError(f"sigma_max={self.sigma_max} must exceed sigma_min={self.sigma_min}")
        return self

    @property
    def sigma_per_intensity(self) -> float:
        return (self.sigma_max - self.sigma_min) / MAX_INTENSITY


# --------------------------------------------------------
# 🧱 Domain types
# --------------------------------------------------------
@dataclass(frozen=True, eq=False)
class Image:
    """Grayscale intensities in [0, 255], stored row-major as (height, width)."""

    intensities: np.ndarray

    def __post_init__(self):
        arr = np.array(self.intensities, dtype=float)
        if arr.ndim != 2:
            raise ValueError(f"image must be a 2-D grid, got shape {arr.shape}")
        if arr.size and (not np.all(np.isfinite(arr)) or arr.min() < 0 or arr.max() > MAX_INTENSITY):
            raise ValueError("intensities must lie in [0, 255]")
        arr.setflags(write=False)
        object.__setattr__(self, "intensities", arr)

    @property
    def height(self) -> int:
        return self.intensities.shape[0]

    @property
    def width(self) -> int:
        return self.intensities.shape[1]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.intensities.shape


@dataclass(frozen=True, eq=False)
class TComponent:
    mean: np.ndarray
    sigma: float
    nu: float
    weight: float

    def __post_init__(self):
        if not self.sigma > 1.0:
            raise ValueError(f"component sigma must be > 1, got {self.sigma}")
        if not np.isclose(self.nu, nu_from_sigma(self.sigma), rtol=1e-12, atol=0.0):
            raise ValueError("component nu must equal 2*sigma/(sigma - 1)")
        if not self.weight > 0:
            raise ValueError("component weight must be > 0")


@dataclass(frozen=True, eq=False)
class ComponentSet(Sequence):
    """One TComponent per pixel, kept as (height, width) arrays."""

    sigma: np.ndarray
    nu: np.ndarray
    weight: np.ndarray
    intrinsics: Intrinsics

    @property
    def shape(self) -> Tuple[int, int]:
        return self.sigma.shape

    def __len__(self) -> int:
        return self.sigma.size

    def __getitem__(self, index):
        if isinstance(index, slice):
            return [self[i] for i in range(*index.indices(len(self)))]
        if index < 0:
            index += len(self)
        if not 0 <= index < len(self):
            raise IndexError(index)
        row, col = divmod(index, self.shape[1])
        K = self.intrinsics
        mean = np.array([(col - K.center_u) / K.focal_u, (row - K.center_v) / K.focal_v])
        return TComponent(mean, float(self.sigma[row, col]), float(self.nu[row, col]),
                          float(self.weight[row, col]))

    def means(self) -> np.ndarray:
        """(n, 2) normalized means in row-major pixel order."""
        x, y = self.intrinsics.normalized_grid()
        return np.stack([x.ravel(), y.ravel()], axis=1)


@dataclass(frozen=True, eq=False)
class SmmImage:
    values: np.ndarray
    components: ComponentSet
    intrinsics: Intrinsics

    def __post_init__(self):
        if not (np.all(np.isfinite(self.values)) and np.all(self.values > 0)):
            raise ValueError("SMM values must be strictly positive and finite")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def normalized(self, scale: float) -> "SmmImage":
        return SmmImage(self.values * scale, self.components, self.intrinsics)


@dataclass(frozen=True, eq=False)
class SmmGradient:
    """dS/dx and dS/dy per pixel, in density per normalized coordinate."""

    du: np.ndarray
    dv: np.ndarray

    def __post_init__(self):
        if self.du.shape != self.dv.shape:
            raise ValueError("du and dv must share one shape")
        if not (np.all(np.isfinite(self.du)) and np.all(np.isfinite(self.dv))):
            raise ValueError("gradient entries must be finite")

    @property
    def height(self) -> int:
        return self.du.shape[0]

    @property
    def width(self) -> int:
        return self.du.shape[1]

    def at(self, row: int, col: int) -> np.ndarray:
        return np.array([self.du[row, col], self.dv[row, col]])

    def scaled(self, scale: float) -> "SmmGradient":
        return SmmGradient(self.du * scale, self.dv * scale)


# --------------------------------------------------------
# 📈 Densities
# --------------------------------------------------------
def _log_t_norm(sigma, nu):
    """log of Γ((ν+2)/2) / (Γ(ν/2) π ν |Σ|^½) for Σ = sigma·I₂."""
    return gammaln((nu + 2.0) / 2.0) - gammaln(nu / 2.0) - np.log(np.pi * nu * sigma)


def student_t_pdf(x, mean, sigma, nu):
    """Bivariate t density with covariance sigma·I₂; x may be (..., 2)."""
    sigma = np.asarray(sigma, dtype=float)
    nu = np.asarray(nu, dtype=float)
    if np.any(sigma <= 0) or np.any(nu <= 0):
        raise ValueError("student_t_pdf needs sigma > 0 and nu > 0")
    d = np.asarray(x, dtype=float) - np.asarray(mean, dtype=float)
    delta = np.sum(d * d, axis=-1) / sigma
    return np.exp(_log_t_norm(sigma, nu) - (nu + 2.0) / 2.0 * np.log1p(delta / nu))


def gaussian_pdf(x, mean, sigma):
    """Bivariate normal density with covariance sigma·I₂."""
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma <= 0):
        raise ValueError("gaussian_pdf needs sigma > 0")
    d = np.asarray(x, dtype=float) - np.asarray(mean, dtype=float)
    return np.exp(-0.5 * np.sum(d * d, axis=-1) / sigma) / (2.0 * np.pi * sigma)


def nu_from_sigma(sigma):
    """Degrees of freedom from the variance relation, nu = 2σ/(σ−1)."""
    arr = np.asarray(sigma, dtype=float)
    if np.any(arr <= 1.0):
        raise ValueError("sigma <= 1 gives a degenerate component (pole of nu = 2σ/(σ−1))")
    nu = 2.0 * arr / (arr - 1.0)
    return float(nu) if nu.ndim == 0 else nu


def spread(sigma, K: Intrinsics, cfg: SmmConfig):
    """Covariance scale in squared normalized units for a raw sigma."""
    return np.asarray(sigma, dtype=float) * cfg.pixel_variance / (K.focal_u * K.focal_v)


def _dlog_dsigma(q, sigma, nu, half):
    # d log φ / dσ through both the covariance scale and ν(σ); ψ terms cancel
    scale_part = (-1.0 + half * q / (1.0 + q)) / sigma
    nu_part = (-0.5 * np.log1p(q) + half * q / (nu * (1.0 + q))) * (-2.0 / (sigma - 1.0) ** 2)
    return scale_part + nu_part


def component_density(x, mean, sigma: float, K: Intrinsics, cfg: SmmConfig):
    """Density of one pixel component with raw sigma, before weighting."""
    return student_t_pdf(x, mean, spread(sigma, K, cfg), nu_from_sigma(sigma))


def component_sigma_derivative(x, mean, sigma: float, K: Intrinsics, cfg: SmmConfig):
    """∂/∂sigma of component_density."""
    nu = nu_from_sigma(sigma)
    s = spread(sigma, K, cfg)
    d = np.asarray(x, dtype=float) - np.asarray(mean, dtype=float)
    q = np.sum(d * d, axis=-1) / (nu * s)
    phi = student_t_pdf(x, mean, s, nu)
    return phi * _dlog_dsigma(q, sigma, nu, (nu + 2.0) / 2.0)


# --------------------------------------------------------
# 🧩 Components
# --------------------------------------------------------
def components_from_image(img: Image, K: Intrinsics, cfg: SmmConfig) -> ComponentSet:
    """One component per pixel; sigma is an affine map of intensity."""
    if img.width == 0 or img.height == 0:
        raise ValueError("cannot build components from a zero-sized image")
    if img.shape != K.shape:
        raise ValueError(f"image is {img.width}x{img.height} but intrinsics are {K.width}x{K.height}")

    sigma = cfg.sigma_min + img.intensities * cfg.sigma_per_intensity
    weight = np.full(img.shape, 1.0 / img.intensities.size)
    return ComponentSet(sigma=sigma, nu=nu_from_sigma(sigma), weight=weight, intrinsics=K)


def _cutoff(coef: np.ndarray, half: np.ndarray, cfg: SmmConfig) -> float:
    """Cutoff on δ/ν: the explicit radius squared, or one that keeps every pixel within tolerance.

    At a pixel centre the own component contributes at least min(coef), and
    each dropped term is at most max(coef)·(1 + cutoff)^(−min(half)), so n
    dropped terms stay below tolerance·min(coef) once the cutoff passes the
    value returned here.
    """
    if cfg.truncation_radius is not None:
        return cfg.truncation_radius ** 2
    ratio = float(coef.max() / coef.min())
    return float((2.0 * coef.size * ratio / cfg.truncation_tolerance) ** (1.0 / half.min()) - 1.0)


@dataclass(frozen=True, eq=False)
class _Kernel:
    """Per-component constants shared by every sweep."""

    coef: np.ndarray      # weight · normalizing constant
    inv_nu_s: np.ndarray  # 1 / (ν · spread)
    half: np.ndarray      # (ν + 2) / 2
    sigma: np.ndarray
    nu: np.ndarray
    cutoff: Optional[float]

    @classmethod
    def of(cls, comps: ComponentSet, K: Intrinsics, cfg: SmmConfig) -> "_Kernel":
        s = spread(comps.sigma, K, cfg)
        coef = comps.weight * np.exp(_log_t_norm(s, comps.nu))
        half = (comps.nu + 2.0) / 2.0
        return cls(
            coef=coef,
            inv_nu_s=1.0 / (comps.nu * s),
            half=half,
            sigma=comps.sigma,
            nu=comps.nu,
            cutoff=_cutoff(coef, half, cfg) if cfg.truncate else None,
        )

    def density(self, q, src):
        phi = self.coef[src] * np.exp(-self.half[src] * np.log1p(q))
        if self.cutoff is not None:
            phi[q > self.cutoff] = 0.0
        return phi


def _check_grid(components: ComponentSet, K: Intrinsics):
    if len(components) == 0:
        raise ValueError("component list is empty")
    if components.intrinsics != K or components.shape != K.shape:
        raise ValueError("components were built for different intrinsics")


def _radius(kernel: _Kernel, K: Intrinsics) -> Tuple[int, int]:
    h, w = K.shape
    if kernel.cutoff is None:
        return h - 1, w - 1
    reach = np.sqrt(kernel.cutoff / kernel.inv_nu_s.min())
    return min(h - 1, int(np.ceil(reach * K.focal_v))), min(w - 1, int(np.ceil(reach * K.focal_u)))


def _row_bands(height: int, workers: int) -> List[Tuple[int, int]]:
    n = max(1, min(workers, height))
    edges = np.linspace(0, height, n + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def _sweep(kernel: _Kernel, K: Intrinsics, channels: int,
           term: Callable[[float, float, tuple], np.ndarray],
           workers: Optional[int]) -> np.ndarray:
    """Sum term(x - mu) over every (output pixel, component) pair within reach."""
    h, w = K.shape
    ry, rx = _radius(kernel, K)
    offsets = [(dy, dx) for dy in range(-ry, ry + 1) for dx in range(-rx, rx + 1)]

    def band(rows: Tuple[int, int]) -> np.ndarray:
        start, stop = rows
        out = np.zeros((channels, stop - start, w))
        for dy, dx in offsets:
            y0, y1 = max(start, dy), min(stop, h + dy)
            x0, x1 = max(0, dx), min(w, w + dx)
            if y0 >= y1 or x0 >= x1:
                continue
            src = (slice(y0 - dy, y1 - dy), slice(x0 - dx, x1 - dx))
            out[:, y0 - start:y1 - start, x0:x1] += term(dx / K.focal_u, dy / K.focal_v, src)
        return out

    bands = _row_bands(h, worker_count() if workers is None else workers)
    if len(bands) == 1:
        return band(bands[0])
    with ThreadPoolExecutor(max_workers=len(bands)) as executor:
        parts = list(executor.map(band, bands))
    return np.concatenate(parts, axis=1)


# --------------------------------------------------------
# 🌐 Transform and gradients
# --------------------------------------------------------
def smm_transform(components: ComponentSet, K: Intrinsics, cfg: SmmConfig,
                  workers: Optional[int] = None) -> SmmImage:
    """S(X) = Σ π_i φ(X; μ_i, Σ_i, ν_i) at every pixel centre."""
    _check_grid(components, K)
    kernel = _Kernel.of(components, K, cfg)

    def term(dxn, dyn, src):
        q = (dxn * dxn + dyn * dyn) * kernel.inv_nu_s[src]
        return kernel.density(q, src)[None]

    values = _sweep(kernel, K, 1, term, workers)[0]
    return SmmImage(values=values, components=components, intrinsics=K)


def smm_gradient_analytic(components: ComponentSet, K: Intrinsics, cfg: SmmConfig,
                          workers: Optional[int] = None) -> SmmGradient:
    """∇S = Σ π_i ∇φ_i with ∇φ = −φ (ν+2) Σ⁻¹(x−μ) / (ν + δ)."""
    _check_grid(components, K)
    kernel = _Kernel.of(components, K, cfg)

    def term(dxn, dyn, src):
        q = (dxn * dxn + dyn * dyn) * kernel.inv_nu_s[src]
        factor = -2.0 * kernel.density(q, src) * kernel.half[src] * kernel.inv_nu_s[src] / (1.0 + q)
        return np.stack([factor * dxn, factor * dyn])

    grad = _sweep(kernel, K, 2, term, workers)
    return SmmGradient(du=grad[0], dv=grad[1])


def smm_gradient_filter(smm: SmmImage) -> SmmGradient:
    """Central differences inside, one-sided at the border, per normalized unit."""
    if smm.width < 3 or smm.height < 3:
        raise ValueError(f"gradient filter needs at least 3x3, got {smm.width}x{smm.height}")
    d_row, d_col = np.gradient(smm.values)
    K = smm.intrinsics
    return SmmGradient(du=d_col * K.focal_u, dv=d_row * K.focal_v)


def sigma_sensitivity_field(components: ComponentSet, K: Intrinsics, cfg: SmmConfig,
                            loads: np.ndarray, workers: Optional[int] = None) -> np.ndarray:
    """Σ_i π_i ∂φ_i/∂σ(x) · loads_i for a (channels, height, width) load per component."""
    _check_grid(components, K)
    loads = np.asarray(loads, dtype=float)
    if loads.shape[1:] != components.shape:
        raise ValueError("loads must carry one vector per component")
    kernel = _Kernel.of(components, K, cfg)

    def term(dxn, dyn, src):
        q = (dxn * dxn + dyn * dyn) * kernel.inv_nu_s[src]
        dphi = kernel.density(q, src) * _dlog_dsigma(q, kernel.sigma[src], kernel.nu[src], kernel.half[src])
        return dphi[None] * loads[(slice(None),) + src]

    return _sweep(kernel, K, loads.shape[0], term, workers)


def evaluate_mixture(components: ComponentSet, points, cfg: SmmConfig) -> np.ndarray:
    """Mixture density at arbitrary normalized points of shape (..., 2)."""
    if len(components) == 0:
        raise ValueError("component list is empty")
    pts = np.asarray(points, dtype=float)
    flat = pts.reshape(-1, 2)
    kernel = _Kernel.of(components, components.intrinsics, cfg)
    means = components.means()
    coef, inv_nu_s, half = (a.ravel() for a in (kernel.coef, kernel.inv_nu_s, kernel.half))

    out = np.empty(len(flat))
    for start in range(0, len(flat), POINT_CHUNK):
        chunk = flat[start:start + POINT_CHUNK]
        d = chunk[:, None, :] - means[None, :, :]
        q = np.sum(d * d, axis=-1) * inv_nu_s
        phi = coef * np.exp(-half * np.log1p(q))
        if kernel.cutoff is not None:
            phi[q > kernel.cutoff] = 0.0
        out[start:start + POINT_CHUNK] = phi.sum(axis=1)
    return out.reshape(pts.shape[:-1])


def smm_of_image(img: Image, K: Intrinsics, cfg: SmmConfig,
                 workers: Optional[int] = None) -> SmmImage:
    return smm_transform(components_from_image(img, K, cfg), K, cfg, workers)


def smm_gradient(smm: SmmImage, cfg: SmmConfig, workers: Optional[int] = None) -> SmmGradient:
    """Gradient of an SMM image from the source selected in cfg."""
    if cfg.gradient_mode == "filter":
        return smm_gradient_filter(smm)
    return smm_gradient_analytic(smm.components, smm.intrinsics, cfg, workers)


def truncation_deviation(components: ComponentSet, K: Intrinsics, cfg: SmmConfig,
                         workers: Optional[int] = None) -> float:
    """Largest per-pixel relative gap between the truncated and the full sum."""
    truncated = smm_transform(components, K, cfg.model_copy(update={"truncate": True}), workers).values
    full = smm_transform(components, K, cfg.model_copy(update={"truncate": False}), workers).values
    return float(np.max(np.abs(truncated - full) / full))


def truncation_within_tolerance(components: ComponentSet, K: Intrinsics, cfg: SmmConfig,
                                workers: Optional[int] = None) -> bool:
    return truncation_deviation(components, K, cfg, workers) < cfg.truncation_tolerance
