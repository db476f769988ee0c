"""Time-varying coordinate frames that make the target dynamics nonnegative.

For a block-diagonal Schur matrix built from the canonical block kinds below,
there is a closed-form sequence of invertible frames ``R_k`` such that
``R_{k+1} @ A @ inv(R_k)`` is one constant matrix ``Lambda`` that is
elementwise nonnegative and Schur:

* ``positive_real(lam)``  : R_k = 1,        Lambda block = gamma*lam
* ``negative_real(lam)``  : R_k = (-1)^k,   Lambda block = gamma*|lam|
* ``rotation(rho, theta)``: R_k = rot(-k*theta), Lambda block = gamma*rho*I2

Frames are evaluated directly from ``k`` (never by accumulating products),
so there is no drift for large ``k``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_KINDS = ("positive_real", "negative_real", "rotation")


@dataclass(frozen=True)
class CanonicalBlock:
    kind: str
    lam: float = 0.0
    rho: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown block kind {self.kind!r}")
        if self.kind == "positive_real" and not 0.0 <= self.lam:
            raise ValueError("positive_real block needs lam >= 0")
        if self.kind == "negative_real" and not self.lam < 0.0:
            raise ValueError("negative_real block needs lam < 0")
        if self.kind == "rotation" and not self.rho > 0.0:
            raise ValueError("rotation block needs rho > 0")
        if not self.modulus < 1.0:
            raise ValueError(f"block modulus {self.modulus} is not < 1")

    @staticmethod
    def positive_real(lam: float) -> "CanonicalBlock":
        return CanonicalBlock("positive_real", lam=lam)

    @staticmethod
    def negative_real(lam: float) -> "CanonicalBlock":
        return CanonicalBlock("negative_real", lam=lam)

    @staticmethod
    def rotation(rho: float, theta: float) -> "CanonicalBlock":
        return CanonicalBlock("rotation", rho=rho, theta=theta)

    @property
    def dim(self) -> int:
        return 2 if self.kind == "rotation" else 1

    @property
    def modulus(self) -> float:
        return self.rho if self.kind == "rotation" else abs(self.lam)

    def a_block(self) -> np.ndarray:
        """The unscaled target sub-block this frame construction covers."""
        if self.kind == "rotation":
            c, s = math.cos(self.theta), math.sin(self.theta)
            return self.rho * np.array([[c, -s], [s, c]])
        return np.array([[self.lam]])

    def lambda_block(self, gamma: float) -> np.ndarray:
        if self.kind == "rotation":
            return gamma * self.rho * np.eye(2)
        return np.array([[gamma * abs(self.lam)]])

    def r_block(self, k: int) -> np.ndarray:
        if self.kind == "positive_real":
            return np.array([[1.0]])
        if self.kind == "negative_real":
            return np.array([[(-1.0) ** (k % 2)]])
        phi = k * self.theta
        c, s = math.cos(phi), math.sin(phi)
        # rotation by -k*theta
        return np.array([[c, s], [-s, c]])

    def r_block_inv(self, k: int) -> np.ndarray:
        return self.r_block(k).T if self.kind == "rotation" else self.r_block(k)

    def sup_frame_norm(self) -> float:
        # max-norm of a planar rotation is |cos| + |sin| <= sqrt(2)
        return math.sqrt(2.0) if self.kind == "rotation" else 1.0


@dataclass(frozen=True, eq=False)
class CoordChangeSeq:
    blocks: tuple[CanonicalBlock, ...]
    gamma: float
    Lambda: np.ndarray
    sigma: float
    n: int

    def R(self, k: int) -> np.ndarray:
        if k < 0:
            raise ValueError("frame index must be nonnegative")
        return _blockdiag([b.r_block(k) for b in self.blocks])

    def S(self, k: int) -> np.ndarray:
        """Inverse frame; ``R(k) @ S(k)`` is the identity."""
        if k < 0:
            raise ValueError("frame index must be nonnegative")
        return _blockdiag([b.r_block_inv(k) for b in self.blocks])

    def frame_norms(self, ks) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized ``(||R_k||, ||inv(R_k)||)`` for an array of indices."""
        ks = np.asarray(ks, dtype=float)
        fwd = np.zeros_like(ks)
        inv = np.zeros_like(ks)
        for b in self.blocks:
            if b.kind == "rotation":
                nb = np.abs(np.cos(ks * b.theta)) + np.abs(np.sin(ks * b.theta))
                fwd = np.maximum(fwd, nb)
                inv = np.maximum(inv, nb)
            else:
                fwd = np.maximum(fwd, 1.0)
                inv = np.maximum(inv, 1.0)
        return fwd, inv


def build_coord_change(blocks, gamma: float) -> CoordChangeSeq:
    """Assemble the frame sequence for the given blocks and gain."""
    blocks = tuple(blocks)
    if not blocks:
        raise ValueError("need at least one block")
    if not 0.0 < gamma:
        raise ValueError("gamma must be positive")
    for b in blocks:
        if not gamma * b.modulus < 1.0:
            raise ValueError(
                f"block {b.kind} with modulus {b.modulus} is not Schur at gamma={gamma}"
            )
    lam = _blockdiag([b.lambda_block(gamma) for b in blocks])
    sigma = max(b.sup_frame_norm() for b in blocks) * 2.0
    return CoordChangeSeq(blocks=blocks, gamma=gamma, Lambda=lam,
                          sigma=sigma, n=sum(b.dim for b in blocks))


def assemble_target_matrix(blocks, gamma: float) -> np.ndarray:
    """The scaled target matrix ``gamma * blockdiag(...)`` these frames expect."""
    return gamma * _blockdiag([b.a_block() for b in blocks])


def _blockdiag(mats) -> np.ndarray:
    n = sum(m.shape[0] for m in mats)
    out = np.zeros((n, n))
    i = 0
    for m in mats:
        d = m.shape[0]
        out[i:i + d, i:i + d] = m
        i += d
    return out
