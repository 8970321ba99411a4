"""Minimal variate-token forecaster with exact FLOP accounting.

Each variate's whole lookback window is one token. The model embeds the
retained tokens, mixes them with single-head scaled dot-product attention
across variates, and projects each mixed token to its forecast horizon.
Loss is MSE on the retained variates only: dropped variates have no tokens
in the batch and contribute nothing, gradients included.

All math is explicit numpy so gradients can be checked against finite
differences; there is no framework underneath. One attention block, no
layer norm, no feed-forward sublayer, plain gradient descent: enough to
exercise the claims under test (attention cost, reduction accounting,
gradient flow) without optimizer state complicating determinism.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .dataset import MultivariateWindow, WindowBatch
from .errors import NumericError, ParameterError
from .reduction import derive_seed, group_by_hash, stratified_sample
from .spectral import kdfh

__all__ = [
    "ModelParams",
    "Gradients",
    "AttentionFragment",
    "ForwardTrace",
    "FlopLedger",
    "TrainSettings",
    "BatchMetrics",
    "initialize_params",
    "embed",
    "attention",
    "forward",
    "backward",
    "sgd_step",
    "count_flops",
    "train_epoch",
    "predict_full",
    "validation_loss",
]


@dataclass(frozen=True)
class ModelParams:
    """All learnable arrays; shapes are set by initialize_params."""

    w_embed: np.ndarray
    b_embed: np.ndarray
    w_query: np.ndarray
    w_key: np.ndarray
    w_value: np.ndarray
    w_out: np.ndarray
    w_head: np.ndarray
    b_head: np.ndarray

    @property
    def lookback(self) -> int:
        return self.w_embed.shape[0]

    @property
    def embed_dim(self) -> int:
        return self.w_embed.shape[1]

    @property
    def attn_dim(self) -> int:
        return self.w_query.shape[1]

    @property
    def horizon(self) -> int:
        return self.w_head.shape[1]


@dataclass(frozen=True)
class Gradients:
    """Loss gradients, one array per parameter in ModelParams."""

    w_embed: np.ndarray
    b_embed: np.ndarray
    w_query: np.ndarray
    w_key: np.ndarray
    w_value: np.ndarray
    w_out: np.ndarray
    w_head: np.ndarray
    b_head: np.ndarray


@dataclass(frozen=True)
class AttentionFragment:
    """Attention intermediates for one window: Q/K/V, weights, context."""

    queries: np.ndarray
    keys: np.ndarray
    values: np.ndarray
    weights: np.ndarray
    context: np.ndarray


@dataclass(frozen=True)
class ForwardTrace:
    """One forward pass: embedded tokens through predictions, plus the loss."""

    tokens: np.ndarray
    queries: np.ndarray
    keys: np.ndarray
    values: np.ndarray
    weights: np.ndarray
    context: np.ndarray
    predictions: np.ndarray
    loss: float


def initialize_params(
    lookback: int, horizon: int, embed_dim: int, attn_dim: int, seed: int
) -> ModelParams:
    """Seeded uniform init in ``[-1/sqrt(fan_in), +1/sqrt(fan_in)]``, zero biases.

    Shapes: embed ``T x d`` plus bias ``d``; query/key/value ``d x d_k``;
    out ``d_k x d``; head ``d x H`` plus bias ``H``. The draw order is fixed,
    so a seed pins every weight.
    """
    for name, v in (
        ("lookback", lookback),
        ("horizon", horizon),
        ("embed_dim", embed_dim),
        ("attn_dim", attn_dim),
    ):
        if v < 1:
            raise ParameterError(f"{name} must be >= 1, got {v}")
    rng = np.random.default_rng(seed)

    def draw(rows: int, cols: int) -> np.ndarray:
        bound = 1.0 / math.sqrt(rows)
        return rng.uniform(-bound, bound, size=(rows, cols))

    return ModelParams(
        w_embed=draw(lookback, embed_dim),
        b_embed=np.zeros(embed_dim),
        w_query=draw(embed_dim, attn_dim),
        w_key=draw(embed_dim, attn_dim),
        w_value=draw(embed_dim, attn_dim),
        w_out=draw(attn_dim, embed_dim),
        w_head=draw(embed_dim, horizon),
        b_head=np.zeros(horizon),
    )


def _check_retained(retained: Sequence[int], n: int) -> tuple[int, ...]:
    idx = tuple(int(i) for i in retained)
    if not idx:
        raise ParameterError("retained index list must not be empty")
    if len(set(idx)) != len(idx):
        raise ParameterError("retained indices must be distinct")
    for i in idx:
        if not 0 <= i < n:
            raise ParameterError(f"retained index {i} out of range for {n} variates")
    return idx


def embed(
    window: MultivariateWindow, params: ModelParams, retained: Sequence[int]
) -> np.ndarray:
    """Embed the retained variates of a window into ``N' x d`` tokens.

    Only retained rows are computed; dropped variates never touch the
    embedding. Row i is ``window.data[retained[i]] @ w_embed + b_embed``.
    """
    idx = _check_retained(retained, window.n_variates)
    if window.lookback != params.lookback:
        raise ParameterError(
            f"window length {window.lookback} does not match embed input {params.lookback}"
        )
    rows = window.data[list(idx)]
    return rows @ params.w_embed + params.b_embed


def attention(tokens: np.ndarray, params: ModelParams) -> AttentionFragment:
    """Scaled dot-product attention over ``N' x d`` tokens.

    Q/K/V are linear maps of the tokens; scores are ``Q K^T / sqrt(d_k)``;
    each score row is softmaxed with its max subtracted first so large
    scores cannot overflow.
    """
    tokens = np.asarray(tokens, dtype=np.float64)
    if tokens.ndim != 2:
        raise ParameterError(f"expected N' x d tokens, got shape {tokens.shape}")
    if tokens.shape[1] != params.embed_dim:
        raise ParameterError(
            f"token width {tokens.shape[1]} does not match embed dim {params.embed_dim}"
        )
    # finiteness is checked explicitly below; inf/nan must not also warn
    with np.errstate(over="ignore", invalid="ignore"):
        queries = tokens @ params.w_query
        keys = tokens @ params.w_key
        values = tokens @ params.w_value
        scores = queries @ keys.T / math.sqrt(params.attn_dim)
    if not np.all(np.isfinite(scores)):
        raise NumericError("non-finite attention scores")
    shifted = scores - scores.max(axis=1, keepdims=True)
    expo = np.exp(shifted)
    weights = expo / expo.sum(axis=1, keepdims=True)
    context = weights @ values
    if not np.all(np.isfinite(context)):
        raise NumericError("non-finite attention context")
    return AttentionFragment(
        queries=queries, keys=keys, values=values, weights=weights, context=context
    )


def forward(
    window: MultivariateWindow, params: ModelParams, retained: Sequence[int]
) -> ForwardTrace:
    """Embed retained variates, attend, project to horizons, score the loss.

    Loss is the MSE between predictions and the horizon rows of the retained
    variates only.
    """
    if window.horizon_length < 1:
        raise ParameterError("forward needs a window with a horizon")
    if window.horizon_length != params.horizon:
        raise ParameterError(
            f"window horizon {window.horizon_length} does not match head output "
            f"{params.horizon}"
        )
    idx = _check_retained(retained, window.n_variates)
    tokens = embed(window, params, idx)
    frag = attention(tokens, params)
    with np.errstate(over="ignore", invalid="ignore"):
        predictions = (frag.context @ params.w_out) @ params.w_head + params.b_head
    if not np.all(np.isfinite(predictions)):
        raise NumericError("non-finite predictions")
    target = window.horizon[list(idx)]
    with np.errstate(over="ignore"):
        loss = float(np.mean((predictions - target) ** 2))
    return ForwardTrace(
        tokens=tokens,
        queries=frag.queries,
        keys=frag.keys,
        values=frag.values,
        weights=frag.weights,
        context=frag.context,
        predictions=predictions,
        loss=loss,
    )


def backward(
    trace: ForwardTrace,
    window: MultivariateWindow,
    params: ModelParams,
    retained: Sequence[int],
) -> Gradients:
    """Analytic gradients of the trace's MSE loss for every parameter.

    The softmax backward uses the row Jacobian
    ``dS = W * (dW - sum(dW * W, axis=-1))``, with the ``1/sqrt(d_k)`` score
    scale folded into the query/key gradients.
    """
    idx = _check_retained(retained, window.n_variates)
    target = window.horizon[list(idx)]
    preds = trace.predictions
    if preds.shape != target.shape:
        raise ParameterError(
            f"trace predictions {preds.shape} do not match retained horizons "
            f"{target.shape}"
        )
    d_pred = 2.0 * (preds - target) / preds.size

    # a diverging loss may overflow these products; the next forward's
    # finiteness check is the failure point, so do not warn here
    with np.errstate(over="ignore", invalid="ignore"):
        return _backward_arrays(trace, params, window, idx, d_pred)


def _backward_arrays(trace, params, window, idx, d_pred):
    mixed = trace.context @ params.w_out
    d_w_head = mixed.T @ d_pred
    d_b_head = d_pred.sum(axis=0)
    d_mixed = d_pred @ params.w_head.T

    d_w_out = trace.context.T @ d_mixed
    d_context = d_mixed @ params.w_out.T

    d_weights = d_context @ trace.values.T
    d_values = trace.weights.T @ d_context

    inner = np.sum(d_weights * trace.weights, axis=1, keepdims=True)
    d_scores = trace.weights * (d_weights - inner)

    scale = 1.0 / math.sqrt(params.attn_dim)
    d_queries = d_scores @ trace.keys * scale
    d_keys = d_scores.T @ trace.queries * scale

    d_w_query = trace.tokens.T @ d_queries
    d_w_key = trace.tokens.T @ d_keys
    d_w_value = trace.tokens.T @ d_values

    d_tokens = (
        d_queries @ params.w_query.T
        + d_keys @ params.w_key.T
        + d_values @ params.w_value.T
    )
    rows = window.data[list(idx)]
    d_w_embed = rows.T @ d_tokens
    d_b_embed = d_tokens.sum(axis=0)

    return Gradients(
        w_embed=d_w_embed,
        b_embed=d_b_embed,
        w_query=d_w_query,
        w_key=d_w_key,
        w_value=d_w_value,
        w_out=d_w_out,
        w_head=d_w_head,
        b_head=d_b_head,
    )


def sgd_step(params: ModelParams, grads: Gradients, lr: float) -> ModelParams:
    """Plain gradient descent; returns new params, inputs untouched."""
    if lr <= 0:
        raise ParameterError(f"learning rate must be > 0, got {lr}")
    return ModelParams(
        w_embed=params.w_embed - lr * grads.w_embed,
        b_embed=params.b_embed - lr * grads.b_embed,
        w_query=params.w_query - lr * grads.w_query,
        w_key=params.w_key - lr * grads.w_key,
        w_value=params.w_value - lr * grads.w_value,
        w_out=params.w_out - lr * grads.w_out,
        w_head=params.w_head - lr * grads.w_head,
        b_head=params.b_head - lr * grads.b_head,
    )


@dataclass(frozen=True)
class FlopLedger:
    """Exact forward FLOPs by stage for one window of ``N'`` tokens.

    Conventions, fixed so ratios are exact: a multiply-add counts 2 (an
    ``m x k @ k x n`` matmul is ``2mnk``), a bias add is 1 per element,
    softmax costs exactly 4 per score (subtract, exp, sum, divide), and the
    ``1/sqrt(d_k)`` score scale is not counted. The scores, softmax and
    context stages all scale with the square of the token count.
    """

    embed: int
    qkv: int
    scores: int
    softmax: int
    context: int
    head: int

    @property
    def attention(self) -> int:
        return self.scores + self.softmax + self.context

    @property
    def total(self) -> int:
        return self.embed + self.qkv + self.attention + self.head


def count_flops(
    n_tokens: int, lookback: int, embed_dim: int, attn_dim: int, horizon: int
) -> FlopLedger:
    """Closed-form forward FLOP ledger for one window of ``n_tokens`` tokens.

    The head stage covers both output projections: context back to the embed
    width, then embed width to the horizon, plus the horizon bias.
    """
    for name, v in (
        ("n_tokens", n_tokens),
        ("lookback", lookback),
        ("embed_dim", embed_dim),
        ("attn_dim", attn_dim),
        ("horizon", horizon),
    ):
        if v < 1:
            raise ParameterError(f"{name} must be >= 1, got {v}")
    n, t, d, dk, h = n_tokens, lookback, embed_dim, attn_dim, horizon
    return FlopLedger(
        embed=n * (2 * t * d + d),
        qkv=3 * n * 2 * d * dk,
        scores=2 * n * n * dk,
        softmax=4 * n * n,
        context=2 * n * n * dk,
        head=n * (2 * dk * d + 2 * d * h + h),
    )


@dataclass(frozen=True)
class TrainSettings:
    """Knobs for one training run; reduction applies only when enabled."""

    k: int = 3
    epsilon: int = 25
    gs: int = 10
    lr: float = 0.01
    seed: int = 0
    vardrop_on: bool = True
    normalize_windows: bool = False

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ParameterError(f"k must be >= 1, got {self.k}")
        if self.epsilon < self.k:
            raise ParameterError(
                f"epsilon must be >= k, got epsilon={self.epsilon}, k={self.k}"
            )
        if self.gs < 1:
            raise ParameterError(f"gs must be >= 1, got {self.gs}")
        if self.lr <= 0:
            raise ParameterError(f"learning rate must be > 0, got {self.lr}")


@dataclass(frozen=True)
class BatchMetrics:
    """Per-batch training record: loss on kept tokens plus reduction stats."""

    epoch: int
    batch_index: int
    loss: float
    tokens_used: int
    delta: float
    flops: int


def _mean_gradients(grads: list[Gradients]) -> Gradients:
    n = len(grads)
    return Gradients(
        **{
            field: sum(getattr(g, field) for g in grads) / n
            for field in Gradients.__dataclass_fields__
        }
    )


def train_epoch(
    batches: list[WindowBatch],
    params: ModelParams,
    config: TrainSettings,
    epoch: int = 0,
) -> tuple[ModelParams, list[BatchMetrics]]:
    """One pass over the batches with per-batch token reduction.

    Per batch: hash the variates over the batch's windows, group, keep at
    most ``gs`` per group (seed derived from ``seed:epoch:batch`` so every
    batch redraws its representatives), then average window gradients over
    the batch and take one descent step on the kept tokens. With reduction
    off every variate is kept and delta is 0, through the same code path.
    Reported FLOPs are the forward cost of the batch at the kept token count.
    """
    if not batches:
        raise ParameterError("training needs at least one batch")
    metrics = []
    for batch_index, batch in enumerate(batches):
        if batch.horizon_length < 1:
            raise ParameterError("training batches must carry horizons")
        n = batch.n_variates

        if config.vardrop_on:
            batch_seed = derive_seed(config.seed, f"{epoch}:{batch_index}")
            hashes = kdfh(
                batch, config.k, config.epsilon, normalize=config.normalize_windows
            )
            plan = stratified_sample(group_by_hash(hashes), config.gs, batch_seed)
            retained = plan.retained
            delta = plan.delta
        else:
            retained = tuple(range(n))
            delta = 0.0

        window_grads = []
        loss_sum = 0.0
        for window in batch.windows:
            trace = forward(window, params, retained)
            window_grads.append(backward(trace, window, params, retained))
            loss_sum += trace.loss
        params = sgd_step(params, _mean_gradients(window_grads), config.lr)

        ledger = count_flops(
            n_tokens=len(retained),
            lookback=batch.lookback,
            embed_dim=params.embed_dim,
            attn_dim=params.attn_dim,
            horizon=batch.horizon_length,
        )
        metrics.append(
            BatchMetrics(
                epoch=epoch,
                batch_index=batch_index,
                loss=loss_sum / batch.size,
                tokens_used=len(retained),
                delta=delta,
                flops=batch.size * ledger.total,
            )
        )
    return params, metrics


def predict_full(window: MultivariateWindow, params: ModelParams) -> np.ndarray:
    """Dense ``N x H`` forecast over all variates; no reduction, no horizon needed."""
    tokens = embed(window, params, range(window.n_variates))
    frag = attention(tokens, params)
    with np.errstate(over="ignore", invalid="ignore"):
        predictions = (frag.context @ params.w_out) @ params.w_head + params.b_head
    if not np.all(np.isfinite(predictions)):
        raise NumericError("non-finite predictions")
    return predictions


def validation_loss(params: ModelParams, batches: list[WindowBatch]) -> float:
    """Dense MSE over all variates of all windows (sum of squares / count)."""
    if not batches:
        raise ParameterError("validation needs at least one batch")
    sq_sum = 0.0
    count = 0
    for batch in batches:
        if batch.horizon_length < 1:
            raise ParameterError("validation batches must carry horizons")
        for window in batch.windows:
            preds = predict_full(window, params)
            sq_sum += float(np.sum((preds - window.horizon) ** 2))
            count += preds.size
    return sq_sum / count
