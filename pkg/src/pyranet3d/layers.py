"""Network layers: 3D correlation, 3D temporal max pooling, per-map
normalization and the fully connected head.

Weighting scheme
----------------
Correlation layers here are position-oriented, not sliding-kernel: each
layer owns one weight matrix *per set* with the same spatial size as its
input map, and output neuron ``(u, v)`` reads the weights at its own input
coordinates ``rows u*g .. u*g+r-1``.  Two neighbouring neurons therefore
share weights exactly where their receptive fields overlap.  The temporal
part combines ``depth`` consecutive input maps per output map.

Arithmetic
----------
Parameters and activations are stored in ``dtype`` (float32 by default).
Per-neuron weighted sums accumulate in float64 and are rounded once when
the pre-activation is formed.  Accumulation order is fixed (temporal depth
outermost, then window row, then window column) so the vectorized forward
is bit-identical to a naive ordered loop.  Backward passes run in float64.

Layers expose ``forward(x) -> (y, cache)`` and
``backward(d_y, cache) -> (d_x, grads)`` where ``d_y`` is the loss gradient
with respect to the layer's post-activation output and ``grads`` mirrors
the parameter arrays.  The error sensitivity ``delta`` (gradient w.r.t.
the pre-activation) is formed inside ``backward`` as ``d_y * f'(S)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .activations import apply as act_apply
from .activations import derivative as act_deriv
from .activations import softmax
from .geometry import GeometryError, LayerGeometry, output_shape, temporal_maps

__all__ = [
    "NORM_EPS",
    "ShapeChainError",
    "NonFiniteError",
    "init_params",
    "Corr3D",
    "Pool3D",
    "Norm",
    "Dense",
    "Network",
    "flatten_stack",
]

# Guard added to sigma before dividing; also keeps constant maps finite.
NORM_EPS = 1e-8


class ShapeChainError(ValueError):
    """Adjacent layers disagree about tensor shapes."""


class NonFiniteError(ValueError):
    """A tensor flowing through the network contains NaN or infinity."""


def init_params(kind, weight_shape, bias_shape, activation, rng, dtype=np.float32,
                fan=None):
    """Initial ``(weights, biases)`` for a layer.

    Weights are uniform in ``+-sqrt(6 / (fan_in + fan_out))``.  For
    correlation layers both fans equal ``r*r*depth`` (the terms feeding one
    neuron); for the fully connected head they are the input and output
    widths.  Pooling weights start at 1 (identity gain) since each weight
    scales a single selected value.  Biases are always zero.  The result is
    a pure function of ``(shapes, rng.seed)``.
    """
    if kind == "pool":
        weights = np.ones(weight_shape, dtype=dtype)
    else:
        if fan is None:
            raise ValueError("corr/fc init requires fan=(fan_in, fan_out)")
        fan_in, fan_out = fan
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        weights = rng.uniform(-bound, bound, weight_shape).astype(dtype)
    biases = np.zeros(bias_shape, dtype=dtype)
    return weights, biases


def _check_finite(x, name):
    if not np.isfinite(x).all():
        raise NonFiniteError(f"{name} contains non-finite values")


def _window_accumulate(x64, w64, geom, out_spatial, m_out):
    """Position-oriented correlation sums, float64, fixed order.

    ``x64``: (H, W, M, S) input; ``w64``: (H, W, D, S) weights.  Returns the
    (h_out, w_out, m_out, S) array of weighted sums.  Terms are added in
    (d, window-row, window-col) order for every output neuron, matching the
    naive reference loop exactly.
    """
    h_out, w_out = out_spatial
    r, g, depth, gt = geom.r, geom.stride, geom.depth, geom.t_stride
    sets = x64.shape[3]
    acc = np.zeros((h_out, w_out, m_out, sets), dtype=np.float64)
    row_span = (h_out - 1) * g + 1
    col_span = (w_out - 1) * g + 1
    map_span = (m_out - 1) * gt + 1
    for d in range(depth):
        for a in range(r):
            for b in range(r):
                ws = w64[a:a + row_span:g, b:b + col_span:g, d, :]
                xs = x64[a:a + row_span:g, b:b + col_span:g, d:d + map_span:gt, :]
                acc += ws[:, :, None, :] * xs
    return acc


def _window_scatter(delta64, geom, in_spatial):
    """Adjoint of the window gather: sum each neuron's delta into every
    input coordinate its receptive field covers.

    ``delta64``: (h_out, w_out, Z, S).  Returns (H, W, Z, S); trailing
    rows/cols never covered by a window stay zero (boundary clamping).
    """
    h_in, w_in = in_spatial
    h_out, w_out = delta64.shape[:2]
    r, g = geom.r, geom.stride
    out = np.zeros((h_in, w_in) + delta64.shape[2:], dtype=np.float64)
    row_span = (h_out - 1) * g + 1
    col_span = (w_out - 1) * g + 1
    for a in range(r):
        for b in range(r):
            out[a:a + row_span:g, b:b + col_span:g] += delta64
    return out


@dataclass
class ParamGrads:
    """Gradients shaped exactly like a layer's parameter arrays."""

    weights: np.ndarray | None = None
    biases: np.ndarray | None = None


@dataclass
class CorrCache:
    x: np.ndarray
    preact: np.ndarray


@dataclass
class PoolCache:
    in_shape: tuple
    maxval: np.ndarray
    arg_i: np.ndarray
    arg_j: np.ndarray
    arg_m: np.ndarray
    preact: np.ndarray


@dataclass
class NormCache:
    mu: np.ndarray
    sigma: np.ndarray


@dataclass
class DenseCache:
    x: np.ndarray
    preact: np.ndarray


class Corr3D:
    """Position-oriented 3D correlation layer.

    ``in_shape`` is (H, W, M, S_in).  ``S_in`` may be 1 with ``sets`` > 1,
    in which case every weight set reads the same input stream (input
    replication at the first layer); otherwise streams map one-to-one.
    Weights: (H, W, depth, sets).  Biases: one per output neuron,
    (h_out, w_out, m_out, sets).
    """

    kind = "corr"

    def __init__(self, name, in_shape, geom: LayerGeometry, sets, activation,
                 rng=None, dtype=np.float32):
        h, w, m, s_in = in_shape
        if s_in not in (1, sets):
            raise ShapeChainError(
                f"{name}: input has {s_in} streams, layer has {sets} weight sets"
            )
        self.name = name
        self.in_shape = tuple(in_shape)
        self.geom = geom
        self.sets = sets
        self.activation = activation
        self.dtype = np.dtype(dtype)
        h_out = output_shape(h, geom)
        w_out = output_shape(w, geom)
        m_out = temporal_maps(m, geom)
        self.out_shape = (h_out, w_out, m_out, sets)
        fan = geom.r * geom.r * geom.depth
        if rng is None:
            self.weights = np.zeros((h, w, geom.depth, sets), dtype=self.dtype)
            self.biases = np.zeros(self.out_shape, dtype=self.dtype)
        else:
            self.weights, self.biases = init_params(
                "corr", (h, w, geom.depth, sets), self.out_shape, activation,
                rng, self.dtype, fan=(fan, fan),
            )

    def _replicate(self, x):
        if x.shape[3] == self.sets:
            return x
        return np.broadcast_to(x, x.shape[:3] + (self.sets,))

    def forward(self, x):
        if tuple(x.shape) != self.in_shape:
            raise ShapeChainError(
                f"{self.name}: expected input {self.in_shape}, got {tuple(x.shape)}"
            )
        _check_finite(x, f"{self.name} input")
        x64 = np.ascontiguousarray(self._replicate(x), dtype=np.float64)
        acc = _window_accumulate(
            x64, self.weights.astype(np.float64), self.geom,
            self.out_shape[:2], self.out_shape[2],
        )
        preact = (acc + self.biases.astype(np.float64)).astype(self.dtype)
        return act_apply(self.activation, preact), CorrCache(x=x, preact=preact)

    def backward(self, d_y, cache: CorrCache, need_input_grad=True):
        geom = self.geom
        delta = np.asarray(d_y, np.float64) * act_deriv(
            self.activation, cache.preact
        ).astype(np.float64)
        x64 = np.ascontiguousarray(self._replicate(cache.x), dtype=np.float64)
        m_out = self.out_shape[2]
        map_span = (m_out - 1) * geom.t_stride + 1

        # summed deltas of every output whose RF covers each input coordinate
        covered = _window_scatter(delta, geom, self.in_shape[:2])

        d_w = np.empty_like(self.weights, dtype=np.float64)
        for d in range(geom.depth):
            xs = x64[:, :, d:d + map_span:geom.t_stride, :]
            d_w[:, :, d, :] = np.einsum("ijzs,ijzs->ijs", xs, covered)
        grads = ParamGrads(weights=d_w, biases=delta.copy())

        d_x = None
        if need_input_grad:
            w64 = self.weights.astype(np.float64)
            d_rep = np.zeros(x64.shape, dtype=np.float64)
            for d in range(geom.depth):
                d_rep[:, :, d:d + map_span:geom.t_stride, :] += (
                    w64[:, :, d, None, :] * covered
                )
            if cache.x.shape[3] != self.sets:  # replicated input: fan gradients back in
                d_x = d_rep.sum(axis=3, keepdims=True)
            else:
                d_x = d_rep
        return d_x, grads


class Pool3D:
    """Weighted 3D temporal max pooling.

    Each output neuron takes the maximum over its ``r x r x depth`` window,
    scales it by a per-position weight shared across maps and sets, and adds
    a per-(map, set) bias before the activation.  The argmax coordinates are
    recorded so the backward pass routes error only through the selected
    inputs.  Ties resolve to the first maximum in (row, col, depth) scan
    order.
    """

    kind = "pool"

    def __init__(self, name, in_shape, geom: LayerGeometry, activation,
                 rng=None, dtype=np.float32):
        h, w, m, sets = in_shape
        self.name = name
        self.in_shape = tuple(in_shape)
        self.geom = geom
        self.sets = sets
        self.activation = activation
        self.dtype = np.dtype(dtype)
        h_out = output_shape(h, geom)
        w_out = output_shape(w, geom)
        m_out = temporal_maps(m, geom)
        self.out_shape = (h_out, w_out, m_out, sets)
        self.weights, self.biases = init_params(
            "pool", (h_out, w_out), (m_out, sets), activation, rng, self.dtype
        )

    def forward(self, x, routing=None):
        """``routing`` (a previous :class:`PoolCache`) freezes the argmax
        selection: values are gathered at the recorded coordinates instead
        of re-maximized.  Used by the finite-difference oracle, whose loss
        must be the local linearization the backward pass differentiates."""
        if tuple(x.shape) != self.in_shape:
            raise ShapeChainError(
                f"{self.name}: expected input {self.in_shape}, got {tuple(x.shape)}"
            )
        geom = self.geom
        h_out, w_out, m_out, sets = self.out_shape
        r, depth = geom.r, geom.depth
        if routing is not None:
            arg_i, arg_j, arg_m = routing.arg_i, routing.arg_j, routing.arg_m
            s_grid = np.broadcast_to(np.arange(sets), arg_i.shape)
            maxval = x[arg_i, arg_j, arg_m, s_grid]
        else:
            win = sliding_window_view(x, (r, r, depth), axis=(0, 1, 2))
            win = win[::geom.stride, ::geom.stride, ::geom.t_stride]
            # window axes arrive as (row, col, depth); C-order argmax
            # therefore picks the first maximum in (i, j, d) scan order
            # on ties
            flat = win.reshape(h_out, w_out, m_out, sets, r * r * depth)
            arg = flat.argmax(axis=-1)
            maxval = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
            a, rem = np.divmod(arg, r * depth)
            b, d = np.divmod(rem, depth)
            grid_u, grid_v, grid_z = np.meshgrid(
                np.arange(h_out), np.arange(w_out), np.arange(m_out),
                indexing="ij"
            )
            arg_i = grid_u[..., None] * geom.stride + a
            arg_j = grid_v[..., None] * geom.stride + b
            arg_m = grid_z[..., None] * geom.t_stride + d
        w64 = self.weights.astype(np.float64)
        preact64 = w64[:, :, None, None] * maxval.astype(np.float64) \
            + self.biases.astype(np.float64)[None, None, :, :]
        preact = preact64.astype(self.dtype)
        cache = PoolCache(
            in_shape=tuple(x.shape), maxval=maxval,
            arg_i=arg_i, arg_j=arg_j, arg_m=arg_m, preact=preact,
        )
        return act_apply(self.activation, preact), cache

    def backward(self, d_y, cache: PoolCache, need_input_grad=True):
        delta = np.asarray(d_y, np.float64) * act_deriv(
            self.activation, cache.preact
        ).astype(np.float64)
        max64 = cache.maxval.astype(np.float64)
        d_w = np.einsum("uvzs,uvzs->uv", delta, max64)
        d_b = delta.sum(axis=(0, 1))
        grads = ParamGrads(weights=d_w, biases=d_b)

        d_x = None
        if need_input_grad:
            w64 = self.weights.astype(np.float64)
            routed = w64[:, :, None, None] * delta
            d_x = np.zeros(cache.in_shape, dtype=np.float64)
            sets = cache.in_shape[3]
            s_grid = np.broadcast_to(np.arange(sets), delta.shape)
            # temporal windows overlap, so several outputs may select the
            # same input coordinate: scatter must be unbuffered
            np.add.at(
                d_x,
                (cache.arg_i.ravel(), cache.arg_j.ravel(),
                 cache.arg_m.ravel(), s_grid.ravel()),
                routed.ravel(),
            )
        return d_x, grads


class Norm:
    """Zero-mean unit-variance normalization, per map, per set.

    Uses population variance with an additive ``NORM_EPS`` guard on sigma;
    a constant map normalizes to zeros.  The backward pass treats mu and
    sigma as constants (stop-gradient): ``d_x = d_y / (sigma + eps)``.
    """

    kind = "norm"

    def __init__(self, name, in_shape, dtype=np.float32):
        self.name = name
        self.in_shape = tuple(in_shape)
        self.out_shape = tuple(in_shape)
        self.dtype = np.dtype(dtype)

    def forward(self, x, stats=None):
        if tuple(x.shape) != self.in_shape:
            raise ShapeChainError(
                f"{self.name}: expected input {self.in_shape}, got {tuple(x.shape)}"
            )
        x64 = x.astype(np.float64)
        if stats is None:
            mu = x64.mean(axis=(0, 1))
            sigma = x64.std(axis=(0, 1))
        else:
            mu, sigma = stats
        y = ((x64 - mu[None, None]) / (sigma[None, None] + NORM_EPS)).astype(self.dtype)
        return y, NormCache(mu=mu, sigma=sigma)

    def backward(self, d_y, cache: NormCache, need_input_grad=True):
        d_x = np.asarray(d_y, np.float64) / (cache.sigma[None, None] + NORM_EPS)
        return d_x, ParamGrads()


class Dense:
    """Fully connected head mapping a flattened stack to class scores."""

    kind = "fc"

    def __init__(self, name, in_size, out_size, activation, rng=None,
                 dtype=np.float32):
        self.name = name
        self.in_size = in_size
        self.out_size = out_size
        self.activation = activation
        self.dtype = np.dtype(dtype)
        if rng is None:
            self.weights = np.zeros((in_size, out_size), dtype=self.dtype)
            self.biases = np.zeros(out_size, dtype=self.dtype)
        else:
            self.weights, self.biases = init_params(
                "fc", (in_size, out_size), (out_size,), activation, rng,
                self.dtype, fan=(in_size, out_size),
            )

    def forward(self, x):
        if x.shape != (self.in_size,):
            raise ShapeChainError(
                f"{self.name}: expected {self.in_size} inputs, got {x.shape}"
            )
        preact64 = x.astype(np.float64) @ self.weights.astype(np.float64) \
            + self.biases.astype(np.float64)
        preact = preact64.astype(self.dtype)
        return act_apply(self.activation, preact), DenseCache(x=x, preact=preact)

    def backward_from_delta(self, delta, cache: DenseCache, need_input_grad=True):
        """Backward step given the pre-activation sensitivity ``delta``."""
        delta = np.asarray(delta, np.float64)
        x64 = cache.x.astype(np.float64)
        grads = ParamGrads(weights=np.outer(x64, delta), biases=delta.copy())
        d_x = self.weights.astype(np.float64) @ delta if need_input_grad else None
        return d_x, grads

    def backward(self, d_y, cache: DenseCache, need_input_grad=True):
        delta = np.asarray(d_y, np.float64) * act_deriv(
            self.activation, cache.preact
        ).astype(np.float64)
        return self.backward_from_delta(delta, cache, need_input_grad)


def flatten_stack(stack: np.ndarray) -> np.ndarray:
    """Flatten an (H, W, M, S) stack set-major, then map, row, column.

    This single fixed order is used both for the fully connected head and
    for exported fusion features, and is part of the file-format contract.
    """
    return np.ascontiguousarray(stack.transpose(3, 2, 0, 1)).reshape(-1)


def unflatten_stack(vec: np.ndarray, shape) -> np.ndarray:
    """Inverse of :func:`flatten_stack` for an (H, W, M, S) target shape."""
    h, w, m, s = shape
    return vec.reshape(s, m, h, w).transpose(2, 3, 1, 0)


class Network:
    """An ordered chain of layers ending in a fully connected head.

    ``input_shape`` is (height, width, frames) of one clip.  The chain is
    validated at construction: every layer's declared input must equal the
    previous layer's output, and violations name the offending layer.
    """

    def __init__(self, topology: dict, rng=None, dtype=np.float32):
        self.topology = topology
        self.dtype = np.dtype(dtype)
        inp = topology["input"]
        self.input_shape = (inp["height"], inp["width"], inp["frames"])
        self.n_classes = topology["classes"]
        self.layers = []
        shape = (inp["height"], inp["width"], inp["frames"], 1)
        for idx, spec in enumerate(topology["layers"], start=1):
            kind = spec["kind"]
            name = f"{kind}{idx}"
            try:
                shape = self._add_layer(kind, name, spec, shape, topology, rng,
                                        dtype)
            except GeometryError as exc:
                raise ShapeChainError(f"{name}: {exc}") from exc
        if not self.layers or self.layers[-1].kind != "fc":
            raise ShapeChainError("network must end in a fully connected layer")

    def _add_layer(self, kind, name, spec, shape, topology, rng, dtype):
        if kind == "corr":
            geom = LayerGeometry(spec["r"], spec["overlap"], spec["depth"],
                                 spec.get("t_stride", 1))
            layer = Corr3D(name, shape, geom, spec["sets"],
                           spec.get("activation", topology["activation"]),
                           rng=rng, dtype=dtype)
        elif kind == "pool":
            geom = LayerGeometry(spec["r"], spec["overlap"], spec["depth"],
                                 spec.get("t_stride", 1))
            layer = Pool3D(name, shape, geom,
                           spec.get("activation", topology["activation"]),
                           rng=rng, dtype=dtype)
        elif kind == "norm":
            layer = Norm(name, shape, dtype=dtype)
        elif kind == "fc":
            layer = Dense(name, int(np.prod(shape)), topology["classes"],
                          spec.get("activation", "identity"),
                          rng=rng, dtype=dtype)
            self.layers.append(layer)
            return (topology["classes"],)
        else:
            raise ShapeChainError(f"{name}: unknown kind {kind!r}")
        self.layers.append(layer)
        return layer.out_shape

    # -- forward / backward -------------------------------------------------

    def forward(self, clip_stack, frozen=None):
        """Run one clip through the chain.

        ``clip_stack`` is (H, W, T) or (H, W, T, 1).  ``frozen`` (a dict
        from :meth:`freeze_from_caches`) pins each normalization layer's
        (mu, sigma) and each pooling layer's argmax routing — the
        finite-difference oracle differentiates exactly the local function
        whose gradient the backward pass computes.  Returns
        ``(scores, posteriors, caches)``.
        """
        x = clip_stack
        if x.ndim == 3:
            x = x[:, :, :, None]
        return self.forward_from(0, x, frozen=frozen)

    def forward_from(self, start, x, frozen=None):
        caches = [None] * len(self.layers)
        for idx, layer in enumerate(self.layers):
            if idx < start:
                continue
            if layer.kind == "norm":
                stats = None if frozen is None else frozen["norm"][idx]
                x, caches[idx] = layer.forward(x, stats=stats)
            elif layer.kind == "pool":
                routing = None if frozen is None else frozen["pool"][idx]
                x, caches[idx] = layer.forward(x, routing=routing)
            elif layer.kind == "fc":
                x = flatten_stack(x).astype(self.dtype)
                x, caches[idx] = layer.forward(x)
            else:
                x, caches[idx] = layer.forward(x)
        scores = x
        return scores, softmax(scores), caches

    def backward(self, delta_out, caches, need_input_grad=False):
        """Backpropagate from the head's pre-activation sensitivity.

        Returns ``(grads, d_input)`` where ``grads`` is a list aligned with
        ``self.layers`` (float64 arrays, shaped like each parameter).
        """
        grads = [None] * len(self.layers)
        fc = self.layers[-1]
        d_x, grads[-1] = fc.backward_from_delta(delta_out, caches[-1])
        if len(self.layers) == 1:
            return grads, d_x
        d_x = unflatten_stack(d_x, self.layers[-2].out_shape)
        for idx in range(len(self.layers) - 2, -1, -1):
            layer = self.layers[idx]
            need = need_input_grad or idx > 0
            d_x, grads[idx] = layer.backward(d_x, caches[idx], need_input_grad=need)
        return grads, d_x

    # -- bookkeeping ---------------------------------------------------------

    def param_layers(self):
        return [l for l in self.layers if l.kind != "norm"]

    def parameter_count(self) -> int:
        return sum(l.weights.size + l.biases.size for l in self.param_layers())

    def freeze_from_caches(self, caches):
        """Frozen normalization statistics and pooling routing, keyed by
        layer index, for :meth:`forward`'s ``frozen`` argument."""
        return {
            "norm": {
                i: (caches[i].mu, caches[i].sigma)
                for i, l in enumerate(self.layers) if l.kind == "norm"
            },
            "pool": {
                i: caches[i]
                for i, l in enumerate(self.layers) if l.kind == "pool"
            },
        }

    def shape_table(self):
        """Rows of (name, (w, h, maps, sets)) for corr/pool layers plus the
        fully connected fan-in and class count, printed width-first to match
        the conventional w x h x m x s form."""
        rows = []
        for layer in self.layers:
            if layer.kind in ("corr", "pool"):
                h, w, m, s = layer.out_shape
                rows.append((layer.name, (w, h, m, s)))
            elif layer.kind == "fc":
                rows.append((layer.name, (layer.in_size, layer.out_size)))
        return rows

    def set_params_from(self, arrays):
        """Install parameter arrays (list of (weights, biases) per param layer)."""
        for layer, (w, b) in zip(self.param_layers(), arrays, strict=True):
            if layer.weights.shape != w.shape or layer.biases.shape != b.shape:
                raise ShapeChainError(
                    f"{layer.name}: parameter shapes {w.shape}/{b.shape} do not "
                    f"match topology {layer.weights.shape}/{layer.biases.shape}"
                )
            layer.weights = w.astype(layer.dtype)
            layer.biases = b.astype(layer.dtype)
