"""Morphological operators with exact subgradients.

Dilation is the sup-convolution ``out(x) = max_y f(x - y) + g(y)`` over the
finite support of a structuring function ``g``; erosion is its adjoint
``inf_y f(x + y) - g(y)``.  Pooling is a strided dilation on corner-anchored
windows ``[K*x, K*x + R - 1]`` with output extent ``(n - R) // K + 1``.

Conventions shared by every op here:

* spatial axes are the trailing axes; leading axes (batch, channel) are
  carried through untouched;
* offsets falling outside the input are ignored (-inf padding in the sup,
  +inf in the inf); a position whose window lies entirely outside evaluates
  to the lattice bottom -inf and carries zero gradient;
* on ties the subgradient routes to the lowest offset index, which for pool
  windows is the first position in row-major window order.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Array, Tensor


def _as_offset_tuple(o) -> tuple[int, ...]:
    if isinstance(o, (tuple, list)):
        return tuple(int(c) for c in o)
    return (int(o),)


class StructuringFunction:
    """Finite-support structuring function: offsets plus additive weights.

    ``weights`` is a 1-d tensor aligned with ``offsets``; a flat structuring
    element has zero weights.  ``learnable=True`` marks the weights as
    trainable leaves.
    """

    def __init__(self, offsets, weights=None, learnable: bool = False):
        offs = tuple(_as_offset_tuple(o) for o in offsets)
        if not offs:
            raise ValueError("structuring function needs at least one offset")
        rank = len(offs[0])
        if any(len(o) != rank for o in offs):
            raise ValueError("offsets must share one rank")
        if len(set(offs)) != len(offs):
            raise ValueError("duplicate offsets")
        if weights is None:
            weights = np.zeros(len(offs))
        if isinstance(weights, Tensor):
            wt = weights
        else:
            wt = Tensor(np.asarray(weights, dtype=np.float64),
                        requires_grad=learnable)
        if wt.data.shape != (len(offs),):
            raise ValueError("weights must be 1-d, one per offset")
        self.offsets = offs
        self.weights = wt

    @property
    def rank(self) -> int:
        return len(self.offsets[0])

    def transpose(self) -> "StructuringFunction":
        """Reflection through the origin; the weights tensor is shared."""
        return StructuringFunction(tuple(tuple(-c for c in o) for o in self.offsets),
                                   weights=self.weights)

    @classmethod
    def flat(cls, offsets, learnable: bool = False) -> "StructuringFunction":
        return cls(offsets, learnable=learnable)

    @classmethod
    def pool_window(cls, extent, learnable: bool = False) -> "StructuringFunction":
        """Offsets covering the corner-anchored window, row-major.

        With these offsets ``dilate`` at stride K reads ``f`` on
        ``[K*x, K*x + R - 1]`` per axis.
        """
        ext = _as_offset_tuple(extent)
        if any(r < 1 for r in ext):
            raise ValueError("window extent must be positive")
        offs = list(itertools.product(*[range(0, -r, -1) for r in ext]))
        return cls(offs, learnable=learnable)

    def __repr__(self) -> str:
        return f"StructuringFunction({len(self.offsets)} offsets, rank {self.rank})"


@dataclass(frozen=True)
class PoolSpec:
    """Window extent R and stride K per spatial axis."""

    extent: tuple[int, ...]
    stride: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "extent", _as_offset_tuple(self.extent))
        object.__setattr__(self, "stride", _as_offset_tuple(self.stride))
        if len(self.extent) != len(self.stride):
            raise ValueError("extent and stride must share one rank")
        if any(r < 1 for r in self.extent) or any(k < 1 for k in self.stride):
            raise ValueError("extent and stride must be >= 1")

    @property
    def rank(self) -> int:
        return len(self.extent)

    def out_extent(self, in_extent) -> tuple[int, ...]:
        ext = _as_offset_tuple(in_extent)
        if len(ext) != self.rank:
            raise ValueError("input rank mismatch")
        out = []
        for n, r, k in zip(ext, self.extent, self.stride):
            if n < r:
                raise ValueError(f"pool window {r} exceeds input extent {n}")
            out.append((n - r) // k + 1)
        return tuple(out)

    def window(self, learnable: bool = False) -> StructuringFunction:
        return StructuringFunction.pool_window(self.extent, learnable)


def _offset_slices(y, stride, n_in, n_out):
    """Output/source slice pair where offset y lands inside the input."""
    outs, srcs = [], []
    for ya, ka, na, ma in zip(y, stride, n_in, n_out):
        lo = max(0, -((-ya) // ka))
        hi = min(ma - 1, (na - 1 + ya) // ka)
        if lo > hi:
            return None
        outs.append(slice(lo, hi + 1))
        srcs.append(slice(ka * lo - ya, ka * hi - ya + 1, ka))
    return tuple(outs), tuple(srcs)


def _sup_conv(f: Tensor, offsets, weights: Tensor | None, stride,
              out_extent) -> Tensor:
    """Shared strided sup-convolution kernel.

    Tracks the attaining offset index per output position (first attainer on
    ties); the backward rules replay the slices and scatter through it.
    """
    rank = len(offsets[0])
    if f.data.ndim < rank:
        raise ValueError("input rank below offset rank")
    n_in = f.data.shape[-rank:]
    lead = f.data.shape[:-rank]
    out = np.full(lead + tuple(out_extent), -np.inf)
    idx = np.full(out.shape, -1, dtype=np.int16)
    wdat = None if weights is None else weights.data
    fdat = f.data
    for o, y in enumerate(offsets):
        sl = _offset_slices(y, stride, n_in, out_extent)
        if sl is None:
            continue
        out_sl, src_sl = sl
        cand = fdat[(..., *src_sl)]
        if wdat is not None and wdat[o] != 0.0:
            cand = cand + wdat[o]
        region = out[(..., *out_sl)]
        better = cand > region
        np.copyto(region, cand, where=better)
        idx[(..., *out_sl)][better] = o
    # positions whose window lies entirely outside the input keep the
    # lattice bottom -inf and receive no gradient (idx stays -1); pool
    # windows can never produce them (out_extent guarantees overlap)

    f_shape = fdat.shape

    def back_f(g: Array) -> Array:
        df = np.zeros(f_shape)
        for o, y in enumerate(offsets):
            sl = _offset_slices(y, stride, n_in, out_extent)
            if sl is None:
                continue
            out_sl, src_sl = sl
            sel = idx[(..., *out_sl)] == o
            if sel.any():
                df[(..., *src_sl)] += g[(..., *out_sl)] * sel
        return df

    parents = [(f, back_f)]
    if weights is not None:

        def back_w(g: Array) -> Array:
            flat_idx = idx.ravel().astype(np.int64)
            hit = flat_idx >= 0
            return np.bincount(flat_idx[hit], weights=g.ravel()[hit],
                               minlength=len(offsets))

        parents.append((weights, back_w))
    return ad.make_node(out, parents)


def _lift(f) -> Tensor:
    return f if isinstance(f, Tensor) else Tensor(np.asarray(f, dtype=np.float64))


# -- stride-1 operators ----------------------------------------------------


def dilate(f, g: StructuringFunction) -> Tensor:
    """(f (+) g)(x) = max_y f(x - y) + g(y), same spatial extent as f."""
    f = _lift(f)
    ones = (1,) * g.rank
    return _sup_conv(f, g.offsets, g.weights, ones, f.data.shape[-g.rank:])


def erode(f, g: StructuringFunction) -> Tensor:
    """(f (-) g)(x) = min_y f(x + y) - g(y), via the dilation duality."""
    f = _lift(f)
    return ad.neg(dilate(ad.neg(f), g.transpose()))


def relu(f) -> Tensor:
    return ad.maximum(_lift(f), 0.0)


# -- pooling ----------------------------------------------------------------


def dilate_pool(f, g: StructuringFunction, pool: PoolSpec) -> Tensor:
    """Strided dilation: out(x) = max_y f(K*x - y) + g(y)."""
    f = _lift(f)
    out_ext = pool.out_extent(f.data.shape[-pool.rank:])
    return _sup_conv(f, g.offsets, g.weights, pool.stride, out_ext)


def max_pool(f, pool: PoolSpec) -> Tensor:
    """Flat max over corner-anchored windows."""
    f = _lift(f)
    out_ext = pool.out_extent(f.data.shape[-pool.rank:])
    offs = StructuringFunction.pool_window(pool.extent).offsets
    return _sup_conv(f, offs, None, pool.stride, out_ext)


def min_pool(f, pool: PoolSpec) -> Tensor:
    """Flat min over windows; dual of max_pool, same tie rule."""
    return ad.neg(max_pool(ad.neg(_lift(f)), pool))


def act_pool(f, pool: PoolSpec, alpha=0.0) -> Tensor:
    """Max over the window of max(0, f + alpha): ReLU and max-pooling as a
    single dilation with a trainable threshold."""
    return max_pool(relu(ad.add(_lift(f), alpha)), pool)


# -- two-slope activations and self-dual pooling -----------------------------


def _scalar_value(x) -> float:
    return float(x.data) if isinstance(x, Tensor) else float(x)


def prelu2(f, beta_pos, beta_neg) -> Tensor:
    """Two-slope rectifier max(beta_neg * f, beta_pos * f).

    Valid as written only when beta_pos >= beta_neg (otherwise the max picks
    the wrong branch); (1, 0) is ReLU, (1, 0.01) the usual leaky variant.
    """
    if _scalar_value(beta_pos) < _scalar_value(beta_neg):
        raise ValueError("prelu2 requires beta_pos >= beta_neg")
    f = _lift(f)
    return ad.maximum(ad.mul(f, beta_neg), ad.mul(f, beta_pos))


def pos_neg_split(f) -> tuple[Tensor, Tensor]:
    """f = pos - neg with both parts nonnegative."""
    f = _lift(f)
    return relu(f), relu(ad.neg(f))


def selfdual_pool(f, pool: PoolSpec) -> Tensor:
    """max_pool(f_pos) - max_pool(f_neg): commutes with negation."""
    pos, neg_part = pos_neg_split(f)
    return ad.sub(max_pool(pos, pool), max_pool(neg_part, pool))


def posneg_pool_param(f, pool: PoolSpec, beta_pos, beta_neg) -> Tensor:
    """Parametric split pooling:
    max_pool(max(0, beta_neg * f)) + min_pool(min(0, beta_pos * f)).

    The slope pairing follows the printed formula; with
    beta_pos = beta_neg = 1 it reduces exactly to selfdual_pool.
    """
    f = _lift(f)
    pos_branch = max_pool(relu(ad.mul(f, beta_neg)), pool)
    neg_branch = min_pool(ad.minimum(ad.mul(f, beta_pos), 0.0), pool)
    return ad.add(pos_branch, neg_branch)
