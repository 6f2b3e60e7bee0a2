"""Piecewise-linear max-min activations and the two combined
activation-pooling layers.

The universal activation is a min of maxes of affine pieces,

    act(x) = min_j max_i (beta[j, i] * x + alpha[j, i]),

evaluated elementwise with trainable slope/intercept matrices.  Layer
variant 1 applies one weighted dilation-pool per max-row and takes the min
across rows; variant 2 pools first, one weighted dilation-pool per outer
index, then applies the affine max-min on the pooled values.  Both reduce
to ReLU6 + max-pooling under the clamp initialization, and both expose
every parameter (slopes, intercepts, structuring weights) to reverse mode.

Parameter layout: ``beta[..., j, i]`` where ``j`` indexes the outer min and
``i`` the inner max.  A leading channel axis is allowed; it must line up
with a channel axis of the input (``channel_axis``).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import morphops as mo
from .autodiff import Array, Tensor
from .morphops import PoolSpec, StructuringFunction


def clamp_init(m_terms: int, n_terms: int, outer: str = "rows") -> tuple[Array, Array]:
    """Slope/intercept matrices that make the activation equal
    ``max(min(relu(x), 6), -6) = min(max(x, 0), 6)`` at initialization.

    The four clamp pieces (slope, intercept) are (1, 0) and (0, 0) inside
    the max stage plus a constant 6 row in the min stage; remaining slots
    are filled with (0, -6), inactive inside a max, or (0, 6), inactive
    inside a min.  ``outer`` says which matrix axis carries the outer min:
    "rows" (axis -2, layer variant 1) or "cols" (axis -1, variant 2).

    Degenerate sizes truncate the clamp: m_terms == 1 drops the upper bound,
    n_terms == 1 (with outer="rows") drops the lower rectification.
    """
    if m_terms < 1 or n_terms < 1:
        raise ValueError("need at least one term per stage")
    if outer == "rows":
        n_outer, n_inner = m_terms, n_terms
    elif outer == "cols":
        n_outer, n_inner = n_terms, m_terms
    else:
        raise ValueError("outer must be 'rows' or 'cols'")
    beta = np.zeros((n_outer, n_inner))
    alpha = np.full((n_outer, n_inner), -6.0)
    beta[0, 0] = 1.0
    alpha[0, 0] = 0.0
    if n_inner >= 2:
        alpha[0, 1] = 0.0  # the rectifying piece max(x, 0)
    if n_outer >= 2:
        alpha[1, :] = -6.0
        alpha[1, 0] = 6.0  # the saturating row min(., 6)
    for j in range(2, n_outer):
        alpha[j, 0] = 6.0  # extra min rows stay inactive as constant 6
    if outer == "cols":
        beta, alpha = beta.T.copy(), alpha.T.copy()
    return beta, alpha


@dataclass
class MorphoActivationParams:
    """Trainable (beta, alpha) for one activation; shape [m, n] or [c, m, n]."""

    beta: Tensor
    alpha: Tensor

    def __post_init__(self):
        if self.beta.data.shape != self.alpha.data.shape:
            raise ValueError("beta and alpha must share a shape")
        if self.beta.data.ndim not in (2, 3):
            raise ValueError("expected [m, n] or [c, m, n] parameters")

    @property
    def m_terms(self) -> int:
        return self.beta.data.shape[-2]

    @property
    def n_terms(self) -> int:
        return self.beta.data.shape[-1]

    @classmethod
    def clamp(cls, m_terms: int, n_terms: int, outer: str = "rows",
              channels: int | None = None,
              learnable: bool = True) -> "MorphoActivationParams":
        b, a = clamp_init(m_terms, n_terms, outer)
        if channels is not None:
            b = np.broadcast_to(b, (channels,) + b.shape).copy()
            a = np.broadcast_to(a, (channels,) + a.shape).copy()
        return cls(Tensor(b, requires_grad=learnable),
                   Tensor(a, requires_grad=learnable))


def _bshape(x_ndim: int, channels: int | None, channel_axis: int | None):
    # broadcast shape placing the channel extent on channel_axis
    shape = [1] * x_ndim
    if channels is not None:
        shape[channel_axis] = channels
    return tuple(shape)


def pl_activation(x, params: MorphoActivationParams,
                  channel_axis: int | None = None) -> Tensor:
    """Elementwise min over j of max over i of beta[j,i] * x + alpha[j,i].

    With 3-d parameters [c, m, n] each channel along ``channel_axis`` of x
    uses its own matrix.  Ties route to the lowest (j, i) in row-major
    order.  Fused: forward keeps only int8 argument indices for backward.
    """
    x = mo._lift(x)
    beta, alpha = params.beta, params.alpha
    per_channel = beta.data.ndim == 3
    if per_channel and channel_axis is None:
        raise ValueError("channel_axis required for per-channel parameters")
    m, n = beta.data.shape[-2], beta.data.shape[-1]
    channels = beta.data.shape[0] if per_channel else None
    if per_channel:
        channel_axis = channel_axis % x.data.ndim
        if x.data.shape[channel_axis] != channels:
            raise ValueError("channel extent mismatch")
    bsh = _bshape(x.data.ndim, channels, channel_axis)

    def pick(mat: Array, j: int, i: int) -> Array:
        col = mat[..., j, i]  # scalar or [c]
        return col.reshape(bsh)

    xd = x.data
    out = None
    best_j = None
    best_i = None
    for j in range(m):
        row_val = None
        row_i = None
        for i in range(n):
            cand = pick(beta.data, j, i) * xd + pick(alpha.data, j, i)
            if row_val is None:
                row_val, row_i = cand, np.zeros(cand.shape, dtype=np.int8)
            else:
                better = cand > row_val  # strict: ties keep the lower i
                row_val = np.where(better, cand, row_val)
                row_i = np.where(better, np.int8(i), row_i)
        if out is None:
            out, best_j, best_i = row_val, np.zeros(row_val.shape, np.int8), row_i
        else:
            lower = row_val < out  # strict: ties keep the lower j
            out = np.where(lower, row_val, out)
            best_j = np.where(lower, np.int8(j), best_j)
            best_i = np.where(lower, row_i, best_i)

    # flat (channel, j, i) cell index per element, for bincount scatters
    cell = best_j.astype(np.int64) * n + best_i
    if per_channel:
        c_index = np.arange(channels).reshape(bsh)
        cell = cell + c_index * (m * n)
    n_cells = (channels or 1) * m * n
    param_shape = beta.data.shape
    beta_flat = beta.data.reshape(-1)

    def back_x(g: Array) -> Array:
        return g * beta_flat[cell]

    def back_beta(g: Array) -> Array:
        return np.bincount(cell.ravel(), weights=(g * xd).ravel(),
                           minlength=n_cells).reshape(param_shape)

    def back_alpha(g: Array) -> Array:
        return np.bincount(cell.ravel(), weights=g.ravel(),
                           minlength=n_cells).reshape(param_shape)

    return ad.make_node(out, [(x, back_x), (beta, back_beta),
                              (alpha, back_alpha)])


def general_pool(f, structuring: list[StructuringFunction],
                 pool: PoolSpec) -> Tensor:
    """Min across a bank of weighted dilation-pools: the pooling form of the
    max-min activation, one dilation per min branch."""
    if not structuring:
        raise ValueError("need at least one structuring function")
    out = mo.dilate_pool(f, structuring[0], pool)
    for sf in structuring[1:]:
        out = ad.minimum(out, mo.dilate_pool(f, sf, pool))
    return out


def _row_params(params: MorphoActivationParams, j: int) -> MorphoActivationParams:
    axis = params.beta.data.ndim - 2
    return MorphoActivationParams(ad.narrow(params.beta, axis, j, 1),
                                  ad.narrow(params.alpha, axis, j, 1))


def _col_params_T(params: MorphoActivationParams, i: int) -> MorphoActivationParams:
    axis = params.beta.data.ndim - 1
    return MorphoActivationParams(
        ad.swap_last2(ad.narrow(params.beta, axis, i, 1)),
        ad.swap_last2(ad.narrow(params.alpha, axis, i, 1)))


def morpho_act1_forward(x, params: MorphoActivationParams,
                        structuring: list[StructuringFunction],
                        pool: PoolSpec,
                        channel_axis: int | None = None) -> Tensor:
    """Activation-then-pool layer:

        out = min_j dilate_pool( max_i (beta[j,i] x + alpha[j,i]), b_j )

    One structuring function per outer row j (len(structuring) == m).
    """
    if len(structuring) != params.m_terms:
        raise ValueError("need one structuring function per max row")
    out = None
    for j, sf in enumerate(structuring):
        inner = pl_activation(x, _row_params(params, j), channel_axis)
        pooled = mo.dilate_pool(inner, sf, pool)
        out = pooled if out is None else ad.minimum(out, pooled)
    return out


def morpho_act2_forward(x, params: MorphoActivationParams,
                        structuring: list[StructuringFunction],
                        pool: PoolSpec,
                        channel_axis: int | None = None) -> Tensor:
    """Pool-then-activation layer:

        out = min_i max_j (beta[j,i] * dilate_pool(x, b_i) + alpha[j,i])

    The outer min runs over the column index i, which also selects the
    structuring function (len(structuring) == n).
    """
    if len(structuring) != params.n_terms:
        raise ValueError("need one structuring function per outer column")
    out = None
    for i, sf in enumerate(structuring):
        pooled = mo.dilate_pool(x, sf, pool)
        branch = pl_activation(pooled, _col_params_T(params, i), channel_axis)
        out = branch if out is None else ad.minimum(out, branch)
    return out


@dataclass
class MorphoLayerParams:
    """Everything one morphological layer trains: the affine matrices plus
    the structuring-function bank."""

    activation: MorphoActivationParams
    structuring: list[StructuringFunction] = field(default_factory=list)

    def tensors(self) -> list[Tensor]:
        seen: list[Tensor] = [self.activation.beta, self.activation.alpha]
        for sf in self.structuring:
            if sf.weights.requires_grad and sf.weights not in seen:
                seen.append(sf.weights)
        return seen

    @classmethod
    def init(cls, variant: int, m_terms: int, n_terms: int, pool: PoolSpec,
             channels: int | None = None,
             learnable_structuring: bool = True) -> "MorphoLayerParams":
        """Clamp-initialized parameters with flat pool-window structuring.

        ``variant`` 1 gives m structuring functions (outer = rows), 2 gives
        n (outer = cols).
        """
        if variant == 1:
            outer, bank = "rows", m_terms
        elif variant == 2:
            outer, bank = "cols", n_terms
        else:
            raise ValueError("variant must be 1 or 2")
        act = MorphoActivationParams.clamp(m_terms, n_terms, outer, channels)
        sfs = [StructuringFunction.pool_window(pool.extent,
                                               learnable=learnable_structuring)
               for _ in range(bank)]
        return cls(act, sfs)


def activation_curve(params: MorphoActivationParams, x: Array) -> Array:
    """Sample the scalar activation on a grid; [len(x)] or [c, len(x)]."""
    with ad.no_grad():
        if params.beta.data.ndim == 3:
            out = pl_activation(Tensor(np.broadcast_to(
                x, (params.beta.data.shape[0], len(x))).copy()),
                params, channel_axis=0)
        else:
            out = pl_activation(Tensor(np.asarray(x, dtype=np.float64)), params)
    return out.data
