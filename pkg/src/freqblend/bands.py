"""Three-band frequency priors and the component-selection algebra.

The frequency plane is split along anti-diagonals of the normalized
coordinate sum u + v, where u = i/(h-1) and v = j/(w-1) place the DC
corner at (0, 0) and the highest-frequency corner at (1, 1):

    semantic    u + v <= t1          (default t1 = 1/16)
    structural  t1 < u + v <= t2     (default t2 = 1/2)
    noise       u + v > t2

Boundaries are inclusive on the lower band. Components of a frequency
tensor are selected by multiplying with a probability map broadcast
over channels.
"""

from dataclasses import dataclass

import numpy as np

from .dct import dct2, idct2

__all__ = [
    "DistributionTriple",
    "PriorMasks",
    "COMPONENT_NAMES",
    "make_prior_masks",
    "select_component",
    "parse_components",
    "normalize_triple",
]

COMPONENT_NAMES = ("sem", "str", "noi")

DEFAULT_T1 = 1.0 / 16.0
DEFAULT_T2 = 1.0 / 2.0


@dataclass
class DistributionTriple:
    """Per-position probabilities of the three frequency components.

    Maps are (h, w) with entries in [0, 1]. The sum over components is a
    trained quantity, not a hard constraint; use :func:`normalize_triple`
    when exact sum-to-one is required.
    """

    p_sem: np.ndarray
    p_str: np.ndarray
    p_noi: np.ndarray

    def maps(self) -> dict[str, np.ndarray]:
        return {"sem": self.p_sem, "str": self.p_str, "noi": self.p_noi}

    def integrity_residual(self) -> float:
        """Mean absolute deviation of the map sum from one."""
        total = self.p_sem + self.p_str + self.p_noi
        return float(np.mean(np.abs(total - 1.0)))


@dataclass(frozen=True)
class PriorMasks:
    """Binary band masks; exactly one mask is active at every position."""

    m_sem: np.ndarray
    m_str: np.ndarray
    m_noi: np.ndarray
    t1: float
    t2: float

    def maps(self) -> dict[str, np.ndarray]:
        return {"sem": self.m_sem, "str": self.m_str, "noi": self.m_noi}

    def as_triple(self) -> DistributionTriple:
        return DistributionTriple(self.m_sem.copy(), self.m_str.copy(), self.m_noi.copy())


def make_prior_masks(h: int, w: int, t1: float = DEFAULT_T1, t2: float = DEFAULT_T2) -> PriorMasks:
    """Partition an h x w frequency grid into the three prior bands."""
    if h < 2 or w < 2:
        raise ValueError(f"grid must be at least 2x2 to normalize coordinates, got {h}x{w}")
    if not (0.0 < t1 < t2 < 2.0):
        raise ValueError(f"thresholds must satisfy 0 < t1 < t2 < 2, got t1={t1}, t2={t2}")
    u = np.arange(h, dtype=np.float64) / (h - 1)
    v = np.arange(w, dtype=np.float64) / (w - 1)
    s = u[:, None] + v[None, :]
    sem = s <= t1
    noi = s > t2
    stc = ~sem & ~noi
    return PriorMasks(
        m_sem=sem.astype(np.float64),
        m_str=stc.astype(np.float64),
        m_noi=noi.astype(np.float64),
        t1=float(t1),
        t2=float(t2),
    )


def select_component(freq: np.ndarray, pmap: np.ndarray) -> np.ndarray:
    """Select a frequency component: elementwise product with a map.

    A single (h, w) map is broadcast across all channels of ``freq``.
    """
    freq = np.asarray(freq, dtype=np.float64)
    pmap = np.asarray(pmap, dtype=np.float64)
    if pmap.ndim != 2 or freq.shape[:2] != pmap.shape:
        raise ValueError(
            f"map shape {pmap.shape} does not match frequency tensor {freq.shape}"
        )
    if freq.ndim == 2:
        return freq * pmap
    return freq * pmap[:, :, None]


def parse_components(x: np.ndarray, triple: DistributionTriple) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Split an image into its three frequency components.

    Returns, per component name, the selected frequency tensor and its
    spatial rendering through the inverse transform.
    """
    freq = dct2(x)
    out = {}
    for name, pmap in triple.maps().items():
        comp = select_component(freq, pmap)
        out[name] = (comp, idct2(comp))
    return out


def normalize_triple(triple: DistributionTriple) -> DistributionTriple:
    """Rescale the three maps so they sum to exactly one everywhere."""
    total = triple.p_sem + triple.p_str + triple.p_noi
    zero = total <= 0.0
    if np.any(zero):
        i, j = np.argwhere(zero)[0]
        raise ValueError(f"cannot normalize: map sum is zero at position ({i}, {j})")
    return DistributionTriple(triple.p_sem / total, triple.p_str / total, triple.p_noi / total)
