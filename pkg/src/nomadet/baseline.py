"""Classical comparison method: projection subtractive clustering.

The received constellation is projected on the I and Q axes, the number of
cluster centres per axis is estimated with Chiu's subtractive clustering
(range-relative radii), the known near-user level pattern is divided out
and the remaining per-axis level counts are matched to the closest far-user
modulation signature.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sigsim import ModScheme, PowerAllocation, SignalFrame

__all__ = ["ClusterParams", "subtractive_cluster_count", "projection_classify",
           "axis_level_counts"]


@dataclass(frozen=True)
class ClusterParams:
    """Chiu subtractive clustering constants; radii are fractions of the
    data range."""

    neighborhood_radius: float = 0.15
    squash_factor: float = 1.5
    accept_ratio: float = 0.5
    reject_ratio: float = 0.15
    max_centers: int = 64

    def __post_init__(self):
        if not 0.0 < self.neighborhood_radius < 1.0:
            raise ValueError("neighborhood_radius must lie in (0, 1)")
        if self.squash_factor <= 1.0:
            raise ValueError("squash_factor must exceed 1")
        if not 0.0 < self.reject_ratio < self.accept_ratio <= 1.0:
            raise ValueError("need 0 < reject_ratio < accept_ratio <= 1")


def subtractive_cluster_count(points, params: ClusterParams = ClusterParams()) -> int:
    """Number of cluster centres in a 1-D point set.

    Potentials use exp(-||p_i - p_j||^2 / (r_a/2)^2) on range-normalised
    points; after each accepted centre the squash term with radius
    r_b = squash_factor * r_a is subtracted. Candidates between the accept
    and reject ratios are kept only if they are far enough from existing
    centres (Chiu's grey-zone rule).
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1)
    if pts.size < 2:
        raise ValueError("need at least 2 points to cluster")
    span = pts.max() - pts.min()
    if span == 0.0:
        return 1
    x = (pts - pts.min()) / span
    ra = params.neighborhood_radius
    rb = params.squash_factor * ra
    alpha = 4.0 / ra ** 2
    beta = 4.0 / rb ** 2
    diff2 = (x[:, None] - x[None, :]) ** 2
    potential = np.exp(-alpha * diff2).sum(axis=1)

    first_potential = potential.max()
    centers: list[float] = []
    dead = np.zeros(x.size, dtype=bool)
    while len(centers) < params.max_centers:
        potential_masked = np.where(dead, -np.inf, potential)
        k = int(np.argmax(potential_masked))
        p_star = potential_masked[k]
        if not np.isfinite(p_star):
            break
        if centers and p_star <= params.reject_ratio * first_potential:
            break
        accept = not centers or p_star > params.accept_ratio * first_potential
        if not accept:
            d_min = min(abs(x[k] - c) for c in centers)
            if d_min / ra + p_star / first_potential >= 1.0:
                accept = True
            else:
                dead[k] = True
                continue
        centers.append(float(x[k]))
        potential = potential - p_star * np.exp(-beta * (x - x[k]) ** 2)
    return len(centers)


# Per-axis level counts (I, Q) after folding odd-index samples back by -pi/2.
# The fold maps pi/2-BPSK onto a plain 2-level BPSK on the I axis while
# leaving the square constellations' level sets unchanged.
_AXIS_SIGNATURE = {
    ModScheme.PI_HALF_BPSK: (2, 1),
    ModScheme.QPSK: (2, 2),
    ModScheme.QAM16: (4, 4),
    ModScheme.QAM64: (8, 8),
}

# finer radius than the generic default: the projections must resolve up to
# 8 x near-levels per axis
_PROJECTION_PARAMS = ClusterParams(neighborhood_radius=0.06)


def _fold_quarter_rotation(samples: np.ndarray) -> np.ndarray:
    folded = samples.copy()
    folded[1::2] *= -1.0j
    return folded


def axis_level_counts(frame: SignalFrame,
                      params: ClusterParams = _PROJECTION_PARAMS) -> tuple[int, int]:
    """Cluster-centre counts on the folded I and Q projections."""
    folded = _fold_quarter_rotation(frame.samples)
    return (subtractive_cluster_count(folded.real, params),
            subtractive_cluster_count(folded.imag, params))


def projection_classify(frame: SignalFrame,
                        alloc: PowerAllocation | None = None,
                        near_schemes=(),
                        params: ClusterParams = _PROJECTION_PARAMS) -> ModScheme:
    """Far-user scheme from per-axis cluster counts.

    The joint per-axis level count is (near levels) x (far levels); dividing
    by the known near pattern leaves the far signature: (2,1) pi/2-BPSK,
    (2,2) QPSK, (4,4) QAM16, (8,8) QAM64. Ambiguous counts fall back to the
    nearest admissible signature in log space. Total function: any frame
    yields some scheme.
    """
    count_i, count_q = axis_level_counts(frame, params)
    near_i = near_q = 1
    for scheme in near_schemes:
        si, sq = _AXIS_SIGNATURE[scheme]
        near_i *= si
        near_q *= sq
    resid_i = max(1.0, count_i / near_i)
    resid_q = max(1.0, count_q / near_q)
    best_scheme = None
    best_score = None
    for scheme, (sig_i, sig_q) in _AXIS_SIGNATURE.items():
        score = abs(np.log2(resid_i) - np.log2(sig_i)) + \
                abs(np.log2(resid_q) - np.log2(sig_q))
        if best_score is None or score < best_score:
            best_score = score
            best_scheme = scheme
    return best_scheme
